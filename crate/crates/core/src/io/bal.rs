//! Bundle Adjustment in the Large text files.
//!
//! BAL stores world-to-camera poses with the camera looking down `−z` and
//! projects with `p = −P/P_z`. Converting to this crate's convention flips the
//! camera `y` and `z` axes, which turns the BAL pose into
//! `R = R_w2cᵀ · diag(1, −1, −1)`, `t = −R_w2cᵀ t_w2c` and negates the `v`
//! pixel coordinate. Intrinsics `(f, k1, k2)` become `(f, f·k1, f·k2)`.

use crate::error::{Error, Result};
use crate::geometry::{CameraState, LossFunction, Observation, ProblemInstance, RotationMatrix};
use nalgebra::{Matrix3, Vector2, Vector3};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalObservation {
    pub camera: usize,
    pub point: usize,
    pub u: f64,
    pub v: f64,
}

/// Parsed contents of a BAL file. Cameras are
/// `[rx, ry, rz, tx, ty, tz, f, k1, k2]` with `r` a Rodrigues vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BalFile {
    pub observations: Vec<BalObservation>,
    pub cameras: Vec<[f64; 9]>,
    pub points: Vec<[f64; 3]>,
}

impl BalFile {
    pub fn num_cameras(&self) -> usize {
        self.cameras.len()
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }
}

struct Tokens<R> {
    reader: R,
    line: usize,
    buf: String,
    pending: Vec<String>,
}

impl<R: BufRead> Tokens<R> {
    fn new(reader: R) -> Self {
        Self {
            reader,
            line: 0,
            buf: String::new(),
            pending: Vec::new(),
        }
    }

    fn next(&mut self) -> Result<Option<String>> {
        while self.pending.is_empty() {
            self.buf.clear();
            let n = self.reader.read_line(&mut self.buf).map_err(|e| match e.kind() {
                std::io::ErrorKind::InvalidData => Error::Parse {
                    line: self.line + 1,
                    message: "input is not valid UTF-8".into(),
                },
                _ => Error::Io(e),
            })?;
            if n == 0 {
                return Ok(None);
            }
            self.line += 1;
            self.pending = self.buf.split_whitespace().rev().map(str::to_owned).collect();
        }
        Ok(self.pending.pop())
    }

    fn expect<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let line = self.line.max(1);
        let tok = self.next()?.ok_or_else(|| Error::Parse {
            line,
            message: format!("unexpected end of input, expected {what}"),
        })?;
        tok.parse().map_err(|_| Error::Parse {
            line: self.line,
            message: format!("expected {what}, found {tok:?}"),
        })
    }

    fn float(&mut self, what: &str) -> Result<f64> {
        let v: f64 = self.expect(what)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Parse {
                line: self.line,
                message: format!("{what} is not finite"),
            })
        }
    }
}

/// Parses a BAL stream. Indices must be in range and nothing may follow the
/// last point.
pub fn parse_bal(reader: impl BufRead) -> Result<BalFile> {
    let mut tok = Tokens::new(reader);
    let m: usize = tok.expect("camera count")?;
    let n: usize = tok.expect("point count")?;
    let k: usize = tok.expect("observation count")?;
    // Guard allocations against absurd headers; the data must follow anyway.
    let cap = |c: usize| c.min(1 << 20);
    let mut observations = Vec::with_capacity(cap(k));
    for idx in 0..k {
        let camera: usize = tok.expect("observation camera index")?;
        let point: usize = tok.expect("observation point index")?;
        if camera >= m || point >= n {
            return Err(Error::CountMismatch(format!(
                "observation {idx} on line {} references camera {camera} / point {point}, \
                 but the header declares {m} cameras and {n} points",
                tok.line
            )));
        }
        let u = tok.float("pixel u")?;
        let v = tok.float("pixel v")?;
        observations.push(BalObservation { camera, point, u, v });
    }
    let mut cameras = Vec::with_capacity(cap(m));
    for _ in 0..m {
        let mut c = [0.0; 9];
        for v in &mut c {
            *v = tok.float("camera parameter")?;
        }
        cameras.push(c);
    }
    let mut points = Vec::with_capacity(cap(n));
    for _ in 0..n {
        let mut p = [0.0; 3];
        for v in &mut p {
            *v = tok.float("point coordinate")?;
        }
        points.push(p);
    }
    if let Some(extra) = tok.next()? {
        return Err(Error::Parse {
            line: tok.line,
            message: format!("trailing data {extra:?} after the last point"),
        });
    }
    Ok(BalFile {
        observations,
        cameras,
        points,
    })
}

pub fn read_bal_file(path: impl AsRef<std::path::Path>) -> Result<BalFile> {
    let f = std::fs::File::open(path)?;
    parse_bal(std::io::BufReader::new(f))
}

/// Writes `bal` in BAL text form with shortest round-trip float formatting.
pub fn write_bal(bal: &BalFile, mut w: impl Write) -> Result<()> {
    writeln!(w, "{} {} {}", bal.num_cameras(), bal.num_points(), bal.num_observations())?;
    for o in &bal.observations {
        writeln!(w, "{} {} {:e} {:e}", o.camera, o.point, o.u, o.v)?;
    }
    for c in &bal.cameras {
        for v in c {
            writeln!(w, "{v:e}")?;
        }
    }
    for p in &bal.points {
        for v in p {
            writeln!(w, "{v:e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn axis_flip() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
}

/// Converts to a problem in this crate's camera convention.
pub fn to_problem(bal: &BalFile, loss: LossFunction) -> Result<ProblemInstance> {
    let cameras = bal
        .cameras
        .iter()
        .map(|c| {
            let r_w2c = RotationMatrix::exp(&Vector3::new(c[0], c[1], c[2]));
            let t_w2c = Vector3::new(c[3], c[4], c[5]);
            let rt = r_w2c.matrix().transpose();
            CameraState::new(
                RotationMatrix::from_matrix_unchecked(rt * axis_flip()),
                -(rt * t_w2c),
                Vector3::new(c[6], c[6] * c[7], c[6] * c[8]),
            )
        })
        .collect();
    let points = bal.points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
    let observations = bal
        .observations
        .iter()
        .map(|o| Observation {
            camera: o.camera,
            point: o.point,
            pixel: Vector2::new(o.u, -o.v),
        })
        .collect();
    ProblemInstance::new(cameras, points, observations, loss)
}

/// Inverse of [`to_problem`] for the problem's current state.
pub fn from_problem(problem: &ProblemInstance) -> Result<BalFile> {
    let cameras = problem
        .cameras
        .iter()
        .map(|c| {
            let f = c.intrinsics.x;
            if f == 0.0 {
                return Err(Error::Format("BAL cameras need a nonzero focal length".into()));
            }
            let r_w2c = axis_flip() * c.rotation.matrix().transpose();
            let w = RotationMatrix::from_matrix_unchecked(r_w2c).log();
            let t = -(r_w2c * c.center);
            Ok([w.x, w.y, w.z, t.x, t.y, t.z, f, c.intrinsics.y / f, c.intrinsics.z / f])
        })
        .collect::<Result<_>>()?;
    Ok(BalFile {
        observations: problem
            .observations
            .iter()
            .map(|o| BalObservation {
                camera: o.camera,
                point: o.point,
                u: o.pixel.x,
                v: -o.pixel.y,
            })
            .collect(),
        cameras,
        points: problem.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
    })
}

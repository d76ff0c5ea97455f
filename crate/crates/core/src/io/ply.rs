//! PLY export of a reconstruction: points in black, camera centres in red
//! and flagged with `is_camera`.

use crate::error::{Error, Result};
use crate::geometry::BaState;
use nalgebra::Vector3;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlyVertex {
    pub position: Vector3<f64>,
    pub is_camera: bool,
}

fn vertices(state: &BaState) -> impl Iterator<Item = PlyVertex> + '_ {
    let points = state.points.iter().map(|l| PlyVertex {
        position: *l,
        is_camera: false,
    });
    let cams = state.cameras.iter().map(|c| PlyVertex {
        position: c.center,
        is_camera: true,
    });
    points.chain(cams)
}

pub fn write_ply(state: &BaState, format: PlyFormat, mut w: impl Write) -> Result<()> {
    let n = state.points.len() + state.cameras.len();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        w,
        "ply\nformat {fmt} 1.0\nelement vertex {n}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property uchar is_camera\nend_header\n"
    )?;
    for v in vertices(state) {
        let red = if v.is_camera { 255u8 } else { 0 };
        match format {
            PlyFormat::Ascii => writeln!(
                w,
                "{:e} {:e} {:e} {red} 0 0 {}",
                v.position.x, v.position.y, v.position.z, v.is_camera as u8
            )?,
            PlyFormat::BinaryLittleEndian => {
                for c in v.position.iter() {
                    w.write_all(&c.to_le_bytes())?;
                }
                w.write_all(&[red, 0, 0, v.is_camera as u8])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_ply(state: &BaState, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_ply(state, format, std::io::BufWriter::new(f))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Reads back files in the layout produced by [`write_ply`].
pub fn read_ply(mut r: impl BufRead) -> Result<Vec<PlyVertex>> {
    let mut line = String::new();
    let mut header = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("PLY header is not terminated"));
        }
        let l = line.trim_end().to_string();
        if l == "end_header" {
            break;
        }
        header.push(l);
    }
    if header.first().map(String::as_str) != Some("ply") {
        return Err(bad("missing PLY magic"));
    }
    let format = match header.get(1).map(String::as_str) {
        Some("format ascii 1.0") => PlyFormat::Ascii,
        Some("format binary_little_endian 1.0") => PlyFormat::BinaryLittleEndian,
        other => return Err(bad(format!("unsupported PLY format line {other:?}"))),
    };
    let n: usize = header
        .iter()
        .find_map(|h| h.strip_prefix("element vertex "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing vertex count"))?;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    match format {
        PlyFormat::Ascii => {
            for _ in 0..n {
                line.clear();
                r.read_line(&mut line)?;
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 7 {
                    return Err(bad(format!("vertex line has {} fields", f.len())));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
                out.push(PlyVertex {
                    position: Vector3::new(num(f[0])?, num(f[1])?, num(f[2])?),
                    is_camera: f[6] == "1",
                });
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut rec = [0u8; 28];
            for _ in 0..n {
                r.read_exact(&mut rec)?;
                let c = |i: usize| f64::from_le_bytes(rec[8 * i..8 * i + 8].try_into().expect("8 bytes"));
                out.push(PlyVertex {
                    position: Vector3::new(c(0), c(1), c(2)),
                    is_camera: rec[27] == 1,
                });
            }
        }
    }
    Ok(out)
}

//! Versioned binary codec for neighbour exchanges.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! header   version u32 | sender u32 | receiver u32 | iteration u64 | entry_count u64
//! entry    kind u8 (0 camera, 1 point) | id u64 | payload f64s
//! ```
//!
//! A camera payload is `R` row-major, `t`, `d` for the current iterate
//! followed by the same fifteen values for the extrapolated one. A point
//! payload is `l` then `l̄`. Entries are sorted by `(kind, id)`.

use crate::error::{Error, Result};
use crate::geometry::{CameraState, PointState, RotationMatrix};
use nalgebra::Vector3;

pub const MESSAGE_VERSION: u32 = 1;
pub const CAMERA_FLOATS: usize = 30;
pub const POINT_FLOATS: usize = 6;
const HEADER_BYTES: usize = 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entry {
    Camera {
        id: usize,
        x: CameraState,
        x_bar: CameraState,
    },
    Point {
        id: usize,
        x: PointState,
        x_bar: PointState,
    },
}

impl Entry {
    fn key(&self) -> (u8, usize) {
        match self {
            Entry::Camera { id, .. } => (0, *id),
            Entry::Point { id, .. } => (1, *id),
        }
    }

    pub fn floats(&self) -> usize {
        match self {
            Entry::Camera { .. } => CAMERA_FLOATS,
            Entry::Point { .. } => POINT_FLOATS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub receiver: usize,
    pub iteration: u64,
    pub entries: Vec<Entry>,
}

impl Message {
    /// Payload scalars carried, excluding header and ids.
    pub fn payload_floats(&self) -> usize {
        self.entries.iter().map(Entry::floats).sum()
    }
}

fn camera_floats(c: &CameraState, out: &mut Vec<f64>) {
    out.extend_from_slice(&c.rotation.to_row_major());
    out.extend_from_slice(c.center.as_slice());
    out.extend_from_slice(c.intrinsics.as_slice());
}

fn violation(msg: impl Into<String>) -> Error {
    Error::ProtocolViolation(msg.into())
}

fn id_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| violation(format!("{what} {v} does not fit the header")))
}

pub fn encode(message: &Message) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(HEADER_BYTES + message.payload_floats() * 8 + message.entries.len() * 9);
    buf.extend_from_slice(&MESSAGE_VERSION.to_le_bytes());
    buf.extend_from_slice(&id_u32(message.sender, "sender")?.to_le_bytes());
    buf.extend_from_slice(&id_u32(message.receiver, "receiver")?.to_le_bytes());
    buf.extend_from_slice(&message.iteration.to_le_bytes());
    buf.extend_from_slice(&(message.entries.len() as u64).to_le_bytes());
    let mut floats = Vec::with_capacity(CAMERA_FLOATS);
    let mut last: Option<(u8, usize)> = None;
    for e in &message.entries {
        if last.is_some_and(|k| k >= e.key()) {
            return Err(violation("entries must be strictly sorted by (kind, id)"));
        }
        last = Some(e.key());
        floats.clear();
        match e {
            Entry::Camera { x, x_bar, .. } => {
                camera_floats(x, &mut floats);
                camera_floats(x_bar, &mut floats);
            }
            Entry::Point { x, x_bar, .. } => {
                floats.extend_from_slice(x.as_slice());
                floats.extend_from_slice(x_bar.as_slice());
            }
        }
        if !floats.iter().all(|v| v.is_finite()) {
            return Err(violation(format!("non-finite payload for entry {:?}", e.key())));
        }
        let (kind, id) = e.key();
        buf.push(kind);
        buf.extend_from_slice(&(id as u64).to_le_bytes());
        for v in &floats {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| violation(format!("message truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take()?);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(violation("non-finite payload value"))
        }
    }

    fn vec3(&mut self) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn camera(&mut self) -> Result<CameraState> {
        let mut r = [0.0; 9];
        for v in &mut r {
            *v = self.f64()?;
        }
        let rotation = RotationMatrix::from_row_major(&r)
            .map_err(|_| violation("camera payload rotation is not orthonormal"))?;
        Ok(CameraState {
            rotation,
            center: self.vec3()?,
            intrinsics: self.vec3()?,
        })
    }
}

/// Decodes a message. Trailing bytes, unknown kinds, unsorted entries and
/// non-finite values are protocol violations.
pub fn decode(bytes: &[u8]) -> Result<Message> {
    let mut rd = Reader { bytes, pos: 0 };
    let version = rd.u32()?;
    if version != MESSAGE_VERSION {
        return Err(violation(format!("unsupported message version {version}")));
    }
    let sender = rd.u32()? as usize;
    let receiver = rd.u32()? as usize;
    let iteration = rd.u64()?;
    let count = rd.u64()?;
    let max_entries = (bytes.len().saturating_sub(HEADER_BYTES) / (9 + POINT_FLOATS * 8)) as u64;
    if count > max_entries {
        return Err(violation(format!("entry count {count} exceeds message size")));
    }
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let [kind] = rd.take::<1>()?;
        let id = usize::try_from(rd.u64()?).map_err(|_| violation("variable id overflows"))?;
        let entry = match kind {
            0 => Entry::Camera {
                id,
                x: rd.camera()?,
                x_bar: rd.camera()?,
            },
            1 => Entry::Point {
                id,
                x: rd.vec3()?,
                x_bar: rd.vec3()?,
            },
            k => return Err(violation(format!("unknown entry kind {k}"))),
        };
        if entries.last().is_some_and(|p: &Entry| p.key() >= entry.key()) {
            return Err(violation("entries are not strictly sorted by (kind, id)"));
        }
        entries.push(entry);
    }
    if rd.pos != bytes.len() {
        return Err(violation(format!("{} trailing bytes", bytes.len() - rd.pos)));
    }
    Ok(Message {
        sender,
        receiver,
        iteration,
        entries,
    })
}

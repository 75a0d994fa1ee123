//! Binary snapshot files.
//!
//! Layout (little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `IVLB`                              |
//! | 4      | 4    | `u32` format version (1)                  |
//! | 8      | 1    | `u8` grid kind: 0 torus, 1 channel        |
//! | 9      | 4    | `u32` nx                                  |
//! | 13     | 4    | `u32` ny (wall-normal intervals for the channel) |
//! | 17     | 32   | `f64` lx, ly, nu, t                       |
//! | 49     | 4    | `u32` field count                         |
//! | 53     | ...  | per field: 16-byte NUL-padded name, then the row-major `f64` payload |
//! | end-8  | 8    | `u64` CRC-64/XZ of every preceding byte   |
//!
//! A torus field holds `nx * ny` values, a channel field `nx * (ny + 1)`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"IVLB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 53;
pub const NAME_LEN: usize = 16;
const CHECKSUM_LEN: usize = 8;
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a snapshot: bad magic {0:02x?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported snapshot version {0} (expected {VERSION})")]
    Version(u32),
    #[error("checksum failure: {0}")]
    Checksum(String),
    #[error("malformed snapshot: {0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Torus = 0,
    Channel = 1,
}

impl GridKind {
    fn from_byte(b: u8) -> Option<GridKind> {
        match b {
            0 => Some(GridKind::Torus),
            1 => Some(GridKind::Channel),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridKind::Torus => "torus",
            GridKind::Channel => "channel",
        }
    }
}

/// Fixed-size leading part of a snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub kind: GridKind,
    pub nx: u32,
    pub ny: u32,
    pub lx: f64,
    pub ly: f64,
    pub nu: f64,
    pub t: f64,
    pub field_count: u32,
}

impl SnapshotHeader {
    /// Values per field.
    pub fn field_len(&self) -> Option<usize> {
        let nx = self.nx as usize;
        let rows = match self.kind {
            GridKind::Torus => self.ny as usize,
            GridKind::Channel => (self.ny as usize).checked_add(1)?,
        };
        nx.checked_mul(rows)
    }

    /// Total file size implied by the header.
    pub fn file_len(&self) -> Option<usize> {
        let per = self.field_len()?.checked_mul(8)?.checked_add(NAME_LEN)?;
        per.checked_mul(self.field_count as usize)?
            .checked_add(HEADER_LEN + CHECKSUM_LEN)
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.nx.to_le_bytes());
        out.extend_from_slice(&self.ny.to_le_bytes());
        for v in [self.lx, self.ly, self.nu, self.t] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.field_count.to_le_bytes());
    }

    /// Parses the first [`HEADER_LEN`] bytes: magic, then version, then the
    /// remaining fields. Does not touch the payload or the checksum.
    pub fn decode(bytes: &[u8]) -> Result<SnapshotHeader, SnapshotError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(SnapshotError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
        }
        if bytes.len() < 8 {
            return Err(SnapshotError::Malformed(format!("header truncated at {} bytes", bytes.len())));
        }
        let version = u32_at(bytes, 4);
        if version != VERSION {
            return Err(SnapshotError::Version(version));
        }
        if bytes.len() < HEADER_LEN {
            return Err(SnapshotError::Malformed(format!("header truncated at {} bytes", bytes.len())));
        }
        let kind = GridKind::from_byte(bytes[8])
            .ok_or_else(|| SnapshotError::Malformed(format!("unknown grid kind {}", bytes[8])))?;
        Ok(SnapshotHeader {
            kind,
            nx: u32_at(bytes, 9),
            ny: u32_at(bytes, 13),
            lx: f64_at(bytes, 17),
            ly: f64_at(bytes, 25),
            nu: f64_at(bytes, 33),
            t: f64_at(bytes, 41),
            field_count: u32_at(bytes, 49),
        })
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

/// Named field payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub values: Vec<f64>,
}

/// A grid state at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: GridKind,
    pub nx: u32,
    pub ny: u32,
    pub lx: f64,
    pub ly: f64,
    pub nu: f64,
    pub t: f64,
    pub fields: Vec<Field>,
}

impl Snapshot {
    pub fn header(&self) -> SnapshotHeader {
        SnapshotHeader {
            kind: self.kind,
            nx: self.nx,
            ny: self.ny,
            lx: self.lx,
            ly: self.ly,
            nu: self.nu,
            t: self.t,
            field_count: self.fields.len() as u32,
        }
    }

    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|f| f.name == name).map(|f| f.values.as_slice())
    }

    /// Serialises to bytes; errors on names that do not fit or payloads of
    /// the wrong length.
    pub fn encode(&self) -> Result<Vec<u8>, SnapshotError> {
        let header = self.header();
        let len = header
            .field_len()
            .ok_or_else(|| SnapshotError::Malformed("grid size overflows".into()))?;
        let mut out = Vec::with_capacity(header.file_len().unwrap_or(0));
        header.encode(&mut out);
        for f in &self.fields {
            let name = f.name.as_bytes();
            if name.is_empty() || name.len() > NAME_LEN || name.contains(&0) {
                return Err(SnapshotError::Malformed(format!(
                    "field name `{}` must be 1 to {NAME_LEN} bytes without NUL",
                    f.name
                )));
            }
            if f.values.len() != len {
                return Err(SnapshotError::Malformed(format!(
                    "field `{}` has {} values, grid needs {len}",
                    f.name,
                    f.values.len()
                )));
            }
            let mut padded = [0u8; NAME_LEN];
            padded[..name.len()].copy_from_slice(name);
            out.extend_from_slice(&padded);
            for v in &f.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = CRC64.checksum(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Parses bytes, checking magic, then version, then the checksum, and
    /// only then the payload. Nothing is returned unless every check passes.
    pub fn decode(bytes: &[u8]) -> Result<Snapshot, SnapshotError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(SnapshotError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
        }
        if bytes.len() >= 8 {
            let version = u32_at(bytes, 4);
            if version != VERSION {
                return Err(SnapshotError::Version(version));
            }
        }
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(SnapshotError::Checksum(format!("file truncated at {} bytes", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let computed = CRC64.checksum(body);
        if stored != computed {
            return Err(SnapshotError::Checksum(format!(
                "stored {stored:016x}, computed {computed:016x} (corrupt or truncated file)"
            )));
        }
        let header = SnapshotHeader::decode(body)?;
        let len = header
            .field_len()
            .ok_or_else(|| SnapshotError::Malformed("grid size overflows".into()))?;
        let expected = header
            .file_len()
            .ok_or_else(|| SnapshotError::Malformed("file size overflows".into()))?;
        if expected != bytes.len() {
            return Err(SnapshotError::Malformed(format!(
                "header implies {expected} bytes, file has {}",
                bytes.len()
            )));
        }
        let mut fields = Vec::with_capacity(header.field_count as usize);
        let mut at = HEADER_LEN;
        for _ in 0..header.field_count {
            let raw = &body[at..at + NAME_LEN];
            let end = raw.iter().position(|&b| b == 0).unwrap_or(NAME_LEN);
            if end == 0 || raw[end..].iter().any(|&b| b != 0) {
                return Err(SnapshotError::Malformed("badly padded field name".into()));
            }
            let name = std::str::from_utf8(&raw[..end])
                .map_err(|_| SnapshotError::Malformed("field name is not UTF-8".into()))?
                .to_string();
            at += NAME_LEN;
            let values = body[at..at + 8 * len]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            at += 8 * len;
            fields.push(Field { name, values });
        }
        Ok(Snapshot {
            kind: header.kind,
            nx: header.nx,
            ny: header.ny,
            lx: header.lx,
            ly: header.ly,
            nu: header.nu,
            t: header.t,
            fields,
        })
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `snap` to `path` through a temporary file and a rename, so a crash
/// never leaves a half-written file under the final name. Returns the bytes
/// written.
pub fn persist_snapshot(snap: &Snapshot, path: &Path) -> Result<Vec<u8>, SnapshotError> {
    let bytes = snap.encode()?;
    let tmp = path.with_extension("ivlb.tmp");
    {
        let mut f = File::create(&tmp).map_err(io(&tmp))?;
        f.write_all(&bytes).map_err(io(&tmp))?;
        f.sync_all().map_err(io(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io(path))?;
    Ok(bytes)
}

/// Reads and fully verifies a snapshot file.
pub fn load_snapshot(path: &Path) -> Result<Snapshot, SnapshotError> {
    let bytes = std::fs::read(path).map_err(io(path))?;
    Snapshot::decode(&bytes)
}

/// Reads only the header bytes of a snapshot file.
pub fn inspect_header(path: &Path) -> Result<SnapshotHeader, SnapshotError> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    File::open(path)
        .map_err(io(path))?
        .take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(io(path))?;
    SnapshotHeader::decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        Snapshot {
            kind: GridKind::Channel,
            nx: 4,
            ny: 2,
            lx: std::f64::consts::TAU,
            ly: std::f64::consts::PI,
            nu: 1e-3,
            t: 0.25,
            fields: vec![Field {
                name: "omega".into(),
                values: (0..12).map(|i| (i as f64).sin() * 1e-300 + i as f64 * 0.1).collect(),
            }],
        }
    }

    #[test]
    fn header_offsets() {
        let bytes = sample().encode().unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + NAME_LEN + 12 * 8 + 8);
        assert_eq!(&bytes[..4], b"IVLB");
        assert_eq!(bytes[8], 1);
        assert_eq!(u32_at(&bytes, 49), 1);
        assert_eq!(f64_at(&bytes, 41), 0.25);
        assert_eq!(sample().header().file_len(), Some(bytes.len()));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let back = Snapshot::decode(&s.encode().unwrap()).unwrap();
        assert_eq!(back, s);
        let bits = |x: &Snapshot| x.fields[0].values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&s));
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = sample().encode().unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 9, HEADER_LEN + 3, 20] {
            assert!(matches!(Snapshot::decode(&bytes[..cut]), Err(SnapshotError::Checksum(_))), "cut {cut}");
        }
    }

    #[test]
    fn magic_and_version_are_checked_first() {
        let mut bytes = sample().encode().unwrap();
        bytes[4] = 2;
        assert!(matches!(Snapshot::decode(&bytes), Err(SnapshotError::Version(2))));
        bytes[0] = b'X';
        assert!(matches!(Snapshot::decode(&bytes), Err(SnapshotError::BadMagic(_))));
        assert!(matches!(Snapshot::decode(&[]), Err(SnapshotError::BadMagic(_))));
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = sample().encode().unwrap();
        bytes[HEADER_LEN + NAME_LEN + 3] ^= 0x10;
        assert!(matches!(Snapshot::decode(&bytes), Err(SnapshotError::Checksum(_))));
    }

    #[test]
    fn bad_fields_are_rejected_on_encode() {
        let mut s = sample();
        s.fields[0].values.pop();
        assert!(s.encode().is_err());
        let mut s = sample();
        s.fields[0].name = "a_name_longer_than_16".into();
        assert!(s.encode().is_err());
    }
}

//! The LRDM checkpoint container.
//!
//! A file holds one or more records back to back. Each record, little-endian:
//!
//! | type        | field                                  |
//! |-------------|----------------------------------------|
//! | [u8;4]      | magic `LRDM`                           |
//! | u32         | version (1)                            |
//! | u32         | network kind tag                       |
//! | u32 + u64xN | architecture hyperparameters           |
//! | u64 + f64xN | weights in declaration order           |
//! | u64 + bytes | UTF-8 note (profiles, trainer state)   |

use std::path::Path;

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LRDM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    Generator,
    Denoiser,
    FourierCritic,
    VanillaCritic,
    /// Optimizer moments stored alongside a network for resuming.
    AdamMoments,
}

impl NetworkKind {
    pub fn tag(self) -> u32 {
        match self {
            Self::Generator => 1,
            Self::Denoiser => 2,
            Self::FourierCritic => 3,
            Self::VanillaCritic => 4,
            Self::AdamMoments => 5,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            1 => Self::Generator,
            2 => Self::Denoiser,
            3 => Self::FourierCritic,
            4 => Self::VanillaCritic,
            5 => Self::AdamMoments,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub kind: NetworkKind,
    pub arch: Vec<u64>,
    pub weights: Vec<f64>,
    pub note: String,
}

impl Record {
    fn encode_into(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.kind.tag().to_le_bytes());
        buf.extend_from_slice(&(self.arch.len() as u32).to_le_bytes());
        for a in &self.arch {
            buf.extend_from_slice(&a.to_le_bytes());
        }
        buf.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for w in &self.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        buf.extend_from_slice(&(self.note.len() as u64).to_le_bytes());
        buf.extend_from_slice(self.note.as_bytes());
    }
}

pub fn encode(records: &[Record]) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in records {
        r.encode_into(&mut buf);
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::parse(self.at, format!("checkpoint truncated while reading {what}")));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn count(&mut self, width: usize, what: &str) -> Result<usize> {
        let at = self.at;
        let n = self.u64(what)? as usize;
        if n.checked_mul(width).is_none_or(|b| b > self.bytes.len() - self.at) {
            return Err(Error::parse(at, format!("{what} count {n} exceeds the file")));
        }
        Ok(n)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut r = Reader { bytes, at: 0 };
    let mut out = Vec::new();
    while r.at < bytes.len() {
        let start = r.at;
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::parse(start, "bad checkpoint magic (expected LRDM)"));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::parse(start + 4, format!("unsupported checkpoint version {version}")));
        }
        let tag = r.u32("kind")?;
        let kind = NetworkKind::from_tag(tag).ok_or_else(|| Error::parse(start + 8, format!("unknown network kind {tag}")))?;
        let n_arch = r.u32("architecture length")? as usize;
        let arch = (0..n_arch).map(|_| r.u64("architecture")).collect::<Result<_>>()?;
        let n = r.count(8, "weight")?;
        let weights = (0..n)
            .map(|_| r.u64("weights").map(f64::from_bits))
            .collect::<Result<_>>()?;
        let n_note = r.count(1, "note byte")?;
        let at = r.at;
        let note = String::from_utf8(r.take(n_note, "note")?.to_vec())
            .map_err(|_| Error::parse(at, "checkpoint note is not UTF-8"))?;
        out.push(Record { kind, arch, weights, note });
    }
    if out.is_empty() {
        return Err(Error::parse(0, "empty checkpoint"));
    }
    Ok(out)
}

pub fn save_records(records: &[Record], path: &Path) -> Result<()> {
    std::fs::write(path, encode(records)).map_err(|e| Error::io(path, e))
}

pub fn load_records(path: &Path) -> Result<Vec<Record>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Record> {
        vec![
            Record {
                kind: NetworkKind::Generator,
                arch: vec![3, 16],
                weights: vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300],
                note: "iso=100".into(),
            },
            Record {
                kind: NetworkKind::FourierCritic,
                arch: vec![],
                weights: vec![],
                note: String::new(),
            },
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let recs = sample();
        let back = decode(&encode(&recs)).unwrap();
        assert_eq!(back, recs);
        assert_eq!(back[0].weights[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(&sample());
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Parse { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Parse { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[8] = 99;
        assert!(matches!(decode(&bad), Err(Error::Parse { offset: 8, .. })));
        assert!(decode(&[]).is_err());
    }
}

//! The LRF raw container.
//!
//! Little-endian layout:
//!
//! | offset | type   | field            |
//! |--------|--------|------------------|
//! | 0      | [u8;4] | magic `LRF1`     |
//! | 4      | u16    | version (1)      |
//! | 6      | u16    | bayer pattern    |
//! | 8      | u32    | packed height H  |
//! | 12     | u32    | packed width W   |
//! | 16     | u16    | black level      |
//! | 18     | u16    | white level      |
//! | 20     | u32    | ISO              |
//! | 24     | f64    | gain K           |
//! | 32     | f64    | sigma_r          |
//! | 40     | u16 x 4HW | DN payload, channel-major |
//!
//! Payload planes follow the raster order of the 2x2 cell; the pattern code
//! says which colour each plane carries. Loading permutes to RGGB.

use std::io::{Read, Write};
use std::path::Path;

use super::{BayerPattern, PixelDomain, RawPatch, SensorProfile, CHANNELS};
use crate::error::{Error, Result};

pub const LRF_MAGIC: [u8; 4] = *b"LRF1";
pub const LRF_VERSION: u16 = 1;
pub const LRF_HEADER_LEN: usize = 40;

/// Writes `patch` (any domain; converted to raw DN and rounded) in RGGB order.
pub fn write_raw<W: Write>(patch: &RawPatch, profile: &SensorProfile, mut out: W) -> Result<()> {
    let raw = patch.to_raw();
    let mut buf = Vec::with_capacity(LRF_HEADER_LEN + 2 * raw.len());
    buf.extend_from_slice(&LRF_MAGIC);
    buf.extend_from_slice(&LRF_VERSION.to_le_bytes());
    buf.extend_from_slice(&BayerPattern::Rggb.code().to_le_bytes());
    buf.extend_from_slice(&(raw.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(raw.width() as u32).to_le_bytes());
    buf.extend_from_slice(&raw.black_level().to_le_bytes());
    buf.extend_from_slice(&raw.white_level().to_le_bytes());
    buf.extend_from_slice(&profile.iso.to_le_bytes());
    buf.extend_from_slice(&profile.gain_k.to_le_bytes());
    buf.extend_from_slice(&profile.sigma_r.to_le_bytes());
    for &v in raw.data() {
        let dn = v.round().clamp(0.0, f64::from(u16::MAX)) as u16;
        buf.extend_from_slice(&dn.to_le_bytes());
    }
    out.write_all(&buf)
        .map_err(|e| Error::io("<stream>", e))
}

/// Parses an LRF byte stream into a raw-DN patch and its profile.
pub fn read_raw<R: Read>(mut input: R) -> Result<(RawPatch, SensorProfile)> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<stream>", e))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<(RawPatch, SensorProfile)> {
    if bytes.len() < 4 || bytes[..4] != LRF_MAGIC {
        return Err(Error::parse(0, "bad magic, expected \"LRF1\""));
    }
    if bytes.len() < LRF_HEADER_LEN {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated header: {} of {LRF_HEADER_LEN} bytes", bytes.len()),
        ));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

    let version = u16_at(4);
    if version != LRF_VERSION {
        return Err(Error::parse(4, format!("unknown version {version}")));
    }
    let pattern = BayerPattern::from_code(u16_at(6))
        .ok_or_else(|| Error::parse(6, format!("unknown bayer pattern code {}", u16_at(6))))?;
    let height = u32_at(8) as usize;
    let width = u32_at(12) as usize;
    if height == 0 {
        return Err(Error::parse(8, "zero height"));
    }
    if width == 0 {
        return Err(Error::parse(12, "zero width"));
    }
    let black = u16_at(16);
    let white = u16_at(18);
    if black >= white {
        return Err(Error::parse(16, format!("black level {black} >= white level {white}")));
    }
    let iso = u32_at(20);
    let gain_k = f64_at(24);
    if !(gain_k > 0.0 && gain_k.is_finite()) {
        return Err(Error::parse(24, format!("gain K must be > 0, got {gain_k}")));
    }
    let sigma_r = f64_at(32);
    if !(sigma_r >= 0.0 && sigma_r.is_finite()) {
        return Err(Error::parse(32, format!("sigma_r must be >= 0, got {sigma_r}")));
    }

    let n = CHANNELS
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| Error::parse(8, "dimensions overflow"))?;
    let expected = LRF_HEADER_LEN + 2 * n;
    if bytes.len() < expected {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::parse(expected, "trailing bytes after payload"));
    }

    let plane = height * width;
    let mut data = vec![0.0; n];
    for (canonical, (dy, dx)) in pattern.sites().into_iter().enumerate() {
        let stored = dy * 2 + dx;
        for k in 0..plane {
            let off = LRF_HEADER_LEN + 2 * (stored * plane + k);
            let dn = u16_at(off);
            if dn > white {
                return Err(Error::parse(off, format!("DN {dn} above white level {white}")));
            }
            data[canonical * plane + k] = f64::from(dn);
        }
    }
    let patch = RawPatch::new(data, height, width, black, white, PixelDomain::Raw)?;
    let profile = SensorProfile {
        iso,
        gain_k,
        sigma_r,
        oracle: None,
    };
    Ok((patch, profile))
}

pub fn save_raw(patch: &RawPatch, profile: &SensorProfile, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_raw(patch, profile, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_raw(path: &Path) -> Result<(RawPatch, SensorProfile)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

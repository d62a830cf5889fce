use std::path::Path;

use super::RawPatch;
use crate::error::{Error, Result};

/// 8-bit grayscale preview of the green average, `gain`-amplified and
/// gamma-2.2 encoded. Returns `(height, width, pixels)`.
pub fn preview_gray8(patch: &RawPatch, gain: f64) -> (usize, usize, Vec<u8>) {
    let n = patch.to_normalized();
    let (g1, g2) = (n.channel(1), n.channel(2));
    let pixels = g1
        .iter()
        .zip(g2)
        .map(|(a, b)| {
            let v = (0.5 * (a + b) * gain).clamp(0.0, 1.0);
            (v.powf(1.0 / 2.2) * 255.0).round() as u8
        })
        .collect();
    (n.height(), n.width(), pixels)
}

/// Writes a binary PGM (P5) preview.
pub fn write_pgm_preview(patch: &RawPatch, gain: f64, path: &Path) -> Result<()> {
    let (h, w, pixels) = preview_gray8(patch, gain);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

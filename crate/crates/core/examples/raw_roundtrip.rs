//! Packs a synthetic Bayer mosaic, writes it as LRF plus a PGM preview, and
//! reads it back.

use lownoise::raw::{load_raw, pack_bayer, save_raw, unpack_bayer, write_pgm_preview, BayerPattern, Mosaic, SensorProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (rows, cols) = (16, 16);
    let data = (0..rows * cols).map(|i| 64.0 + ((i * 37) % 400) as f64).collect();
    let mosaic = Mosaic::new(rows, cols, data)?;
    let patch = pack_bayer(&mosaic, BayerPattern::Grbg, 64, 1023)?;
    println!("packed {}x{} per channel, normalized mean {:.4}",
        patch.height(), patch.width(),
        patch.normalize()?.data().iter().sum::<f64>() / patch.len() as f64);

    let dir = std::env::temp_dir().join("lownoise_raw_roundtrip");
    std::fs::create_dir_all(&dir)?;
    let profile = SensorProfile::new(1600, 2.0, 2.25)?;
    let path = dir.join("frame.lrf");
    save_raw(&patch, &profile, &path)?;
    write_pgm_preview(&patch, 1.0, &dir.join("frame.pgm"))?;

    let (back, prof) = load_raw(&path)?;
    assert_eq!(back, patch);
    assert_eq!(unpack_bayer(&back, BayerPattern::Grbg), mosaic);
    println!("round trip ok: ISO {} K {} sigma_r {} -> {}", prof.iso, prof.gain_k, prof.sigma_r, path.display());
    Ok(())
}

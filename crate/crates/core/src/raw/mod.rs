//! Packed Bayer patches, sensor metadata and their on-disk formats.
//!
//! All patches are held in a canonical RGGB channel order: channel 0 is red,
//! channel 1 the green sharing a row with red, channel 2 the other green and
//! channel 3 blue. Mosaics in other CFA layouts are permuted on packing.

mod lrf;
mod preview;
mod profile;

pub use lrf::{load_raw, read_raw, save_raw, write_raw, LRF_HEADER_LEN, LRF_MAGIC, LRF_VERSION};
pub use preview::{preview_gray8, write_pgm_preview};
pub use profile::{OracleNoiseParams, ProfileSet, SensorProfile};

use crate::error::{Error, Result};

/// Number of packed colour planes.
pub const CHANNELS: usize = 4;

/// 2x2 colour filter array layouts, named by raster order of the cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BayerPattern {
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl BayerPattern {
    pub const ALL: [BayerPattern; 4] = [Self::Rggb, Self::Bggr, Self::Grbg, Self::Gbrg];

    pub fn code(self) -> u16 {
        match self {
            Self::Rggb => 0,
            Self::Bggr => 1,
            Self::Grbg => 2,
            Self::Gbrg => 3,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.code() == code)
    }

    /// Cell offset `(dy, dx)` of each canonical channel (R, G1, G2, B).
    /// G1 is the green on the red row.
    pub fn sites(self) -> [(usize, usize); 4] {
        match self {
            Self::Rggb => [(0, 0), (0, 1), (1, 0), (1, 1)],
            Self::Bggr => [(1, 1), (1, 0), (0, 1), (0, 0)],
            Self::Grbg => [(0, 1), (0, 0), (1, 1), (1, 0)],
            Self::Gbrg => [(1, 0), (1, 1), (0, 0), (0, 1)],
        }
    }
}

impl std::str::FromStr for BayerPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(Self::Rggb),
            "BGGR" => Ok(Self::Bggr),
            "GRBG" => Ok(Self::Grbg),
            "GBRG" => Ok(Self::Gbrg),
            other => Err(Error::Parameter(format!("unknown bayer pattern {other:?}"))),
        }
    }
}

/// Full-resolution single-plane sensor mosaic in DN.
#[derive(Clone, Debug, PartialEq)]
pub struct Mosaic {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mosaic {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "mosaic {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Value encoding of a patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelDomain {
    /// Raw DN including the black pedestal, in `[0, white]`.
    Raw,
    /// Black-level-subtracted DN, in `[0, white - black]`.
    BlackSubtracted,
    /// Scaled to `[0, 1]`.
    Normalized,
}

/// Packed 4-channel Bayer image, `[4, height, width]`, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPatch {
    data: Vec<f64>,
    height: usize,
    width: usize,
    black_level: u16,
    white_level: u16,
    domain: PixelDomain,
}

impl RawPatch {
    /// Builds a patch and checks every invariant of its domain.
    pub fn new(
        data: Vec<f64>,
        height: usize,
        width: usize,
        black_level: u16,
        white_level: u16,
        domain: PixelDomain,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim(format!("empty patch {height}x{width}")));
        }
        if data.len() != CHANNELS * height * width {
            return Err(Error::dim(format!(
                "patch 4x{height}x{width} needs {} values, got {}",
                CHANNELS * height * width,
                data.len()
            )));
        }
        if black_level >= white_level {
            return Err(Error::Parameter(format!(
                "black level {black_level} must be below white level {white_level}"
            )));
        }
        let upper = match domain {
            PixelDomain::Raw => f64::from(white_level),
            PixelDomain::BlackSubtracted => f64::from(white_level - black_level),
            PixelDomain::Normalized => 1.0,
        };
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=upper).contains(*v))
        {
            return Err(Error::Domain(format!(
                "value {v} at index {i} outside [0, {upper}] for {domain:?} patch"
            )));
        }
        Ok(Self {
            data,
            height,
            width,
            black_level,
            white_level,
            domain,
        })
    }

    /// Like [`RawPatch::new`] but clamps values into the domain range first.
    pub fn clamped(
        mut data: Vec<f64>,
        height: usize,
        width: usize,
        black_level: u16,
        white_level: u16,
        domain: PixelDomain,
    ) -> Result<Self> {
        let upper = match domain {
            PixelDomain::Raw => f64::from(white_level),
            PixelDomain::BlackSubtracted => f64::from(white_level.saturating_sub(black_level)),
            PixelDomain::Normalized => 1.0,
        };
        for v in &mut data {
            *v = v.clamp(0.0, upper);
        }
        Self::new(data, height, width, black_level, white_level, domain)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn black_level(&self) -> u16 {
        self.black_level
    }

    pub fn white_level(&self) -> u16 {
        self.white_level
    }

    /// DN span between black and white level.
    pub fn range(&self) -> f64 {
        f64::from(self.white_level - self.black_level)
    }

    pub fn domain(&self) -> PixelDomain {
        self.domain
    }

    pub fn is_normalized(&self) -> bool {
        self.domain == PixelDomain::Normalized
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.height + i) * self.width + j]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Same geometry and levels with new values in `domain`; values are clamped.
    pub fn with_data(&self, data: Vec<f64>, domain: PixelDomain) -> Result<Self> {
        Self::clamped(
            data,
            self.height,
            self.width,
            self.black_level,
            self.white_level,
            domain,
        )
    }

    /// Maps values into `[0, 1]`: `clamp((v - black) / (white - black), 0, 1)`
    /// for raw input, `clamp(v / (white - black), 0, 1)` for subtracted input.
    pub fn normalize(&self) -> Result<Self> {
        let offset = match self.domain {
            PixelDomain::Normalized => {
                return Err(Error::State("patch is already normalized".into()))
            }
            PixelDomain::Raw => f64::from(self.black_level),
            PixelDomain::BlackSubtracted => 0.0,
        };
        let scale = self.range();
        let data = self
            .data
            .iter()
            .map(|&v| ((v - offset) / scale).clamp(0.0, 1.0))
            .collect();
        Ok(Self {
            data,
            domain: PixelDomain::Normalized,
            ..self.clone()
        })
    }

    /// Converts to black-level-subtracted DN, clamping negatives to zero.
    pub fn to_black_subtracted(&self) -> Self {
        let range = self.range();
        let data = match self.domain {
            PixelDomain::BlackSubtracted => self.data.clone(),
            PixelDomain::Raw => {
                let b = f64::from(self.black_level);
                self.data.iter().map(|&v| (v - b).clamp(0.0, range)).collect()
            }
            PixelDomain::Normalized => self.data.iter().map(|&v| v * range).collect(),
        };
        Self {
            data,
            domain: PixelDomain::BlackSubtracted,
            ..self.clone()
        }
    }

    /// Converts to raw DN (pedestal added back).
    pub fn to_raw(&self) -> Self {
        let b = f64::from(self.black_level);
        let data = match self.domain {
            PixelDomain::Raw => self.data.clone(),
            PixelDomain::BlackSubtracted => self.data.iter().map(|&v| v + b).collect(),
            PixelDomain::Normalized => self.data.iter().map(|&v| v * self.range() + b).collect(),
        };
        Self {
            data,
            domain: PixelDomain::Raw,
            ..self.clone()
        }
    }

    /// Converts to normalized units regardless of the current domain.
    pub fn to_normalized(&self) -> Self {
        if self.is_normalized() {
            self.clone()
        } else {
            self.normalize().expect("non-normalized input")
        }
    }

    /// Checks that `other` has the same geometry.
    pub fn check_same_shape(&self, other: &RawPatch, op: &str) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::dim(format!(
                "{op}: shape 4x{}x{} vs 4x{}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Packs a `[2H, 2W]` mosaic into a canonical RGGB `[4, H, W]` raw-DN patch.
pub fn pack_bayer(
    mosaic: &Mosaic,
    pattern: BayerPattern,
    black_level: u16,
    white_level: u16,
) -> Result<RawPatch> {
    if !mosaic.rows.is_multiple_of(2) || !mosaic.cols.is_multiple_of(2) || mosaic.rows == 0 || mosaic.cols == 0 {
        return Err(Error::dim(format!(
            "mosaic {}x{} must have even, non-zero dimensions",
            mosaic.rows, mosaic.cols
        )));
    }
    let (h, w) = (mosaic.rows / 2, mosaic.cols / 2);
    let mut data = Vec::with_capacity(CHANNELS * h * w);
    for (dy, dx) in pattern.sites() {
        for i in 0..h {
            for j in 0..w {
                data.push(mosaic.at(2 * i + dy, 2 * j + dx));
            }
        }
    }
    RawPatch::new(data, h, w, black_level, white_level, PixelDomain::Raw)
}

/// Inverse of [`pack_bayer`]: lays the four planes back out in `pattern`.
pub fn unpack_bayer(patch: &RawPatch, pattern: BayerPattern) -> Mosaic {
    let (h, w) = (patch.height(), patch.width());
    let cols = 2 * w;
    let mut data = vec![0.0; 4 * h * w];
    for (c, (dy, dx)) in pattern.sites().into_iter().enumerate() {
        for i in 0..h {
            for j in 0..w {
                data[(2 * i + dy) * cols + 2 * j + dx] = patch.at(c, i, j);
            }
        }
    }
    Mosaic {
        rows: 2 * h,
        cols,
        data,
    }
}

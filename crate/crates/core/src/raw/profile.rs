use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Parameters of the parametric stand-in for a real sensor's
/// signal-independent noise: Gaussian read noise, per-row banding and ADC
/// quantization. All in DN.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct OracleNoiseParams {
    pub sigma_read: f64,
    pub sigma_row: f64,
    pub quant_step: f64,
}

impl OracleNoiseParams {
    pub fn new(sigma_read: f64, sigma_row: f64, quant_step: f64) -> Result<Self> {
        let p = Self {
            sigma_read,
            sigma_row,
            quant_step,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_read", self.sigma_read),
            ("sigma_row", self.sigma_row),
            ("quant_step", self.quant_step),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_read == 0.0 && self.sigma_row == 0.0 && self.quant_step == 0.0
    }

    /// Variance of the oracle field: read + row + uniform quantization residual.
    pub fn total_variance(&self) -> f64 {
        self.sigma_read.powi(2) + self.sigma_row.powi(2) + self.quant_step.powi(2) / 12.0
    }
}

/// Per-ISO noise profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorProfile {
    pub iso: u32,
    /// System gain in DN per photo-electron.
    pub gain_k: f64,
    /// Signal-independent noise scale in DN.
    pub sigma_r: f64,
    pub oracle: Option<OracleNoiseParams>,
}

impl SensorProfile {
    pub fn new(iso: u32, gain_k: f64, sigma_r: f64) -> Result<Self> {
        let p = Self {
            iso,
            gain_k,
            sigma_r,
            oracle: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_oracle(mut self, oracle: OracleNoiseParams) -> Result<Self> {
        oracle.validate()?;
        self.oracle = Some(oracle);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain_k > 0.0 && self.gain_k.is_finite()) {
            return Err(Error::Parameter(format!("gain K must be > 0, got {}", self.gain_k)));
        }
        if !(self.sigma_r >= 0.0 && self.sigma_r.is_finite()) {
            return Err(Error::Parameter(format!("sigma_r must be >= 0, got {}", self.sigma_r)));
        }
        if let Some(o) = &self.oracle {
            o.validate()?;
        }
        Ok(())
    }
}

/// Profiles keyed by ISO, at most one per ISO.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileSet {
    profiles: BTreeMap<u32, SensorProfile>,
}

impl ProfileSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, profile: SensorProfile) -> Result<()> {
        profile.validate()?;
        if self.profiles.contains_key(&profile.iso) {
            return Err(Error::Parameter(format!("duplicate profile for ISO {}", profile.iso)));
        }
        self.profiles.insert(profile.iso, profile);
        Ok(())
    }

    pub fn get(&self, iso: u32) -> Result<&SensorProfile> {
        self.profiles.get(&iso).ok_or(Error::MissingProfile(iso))
    }

    pub fn iter(&self) -> impl Iterator<Item = &SensorProfile> {
        self.profiles.values()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Parses the sidecar text format: one ISO per line,
    /// `iso gain_K sigma_r [sigma_read sigma_row quant_step]`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut set = Self::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                path: origin.to_path_buf(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 && fields.len() != 6 {
                return Err(err(format!("expected 3 or 6 fields, found {}", fields.len())));
            }
            let iso: u32 = fields[0]
                .parse()
                .map_err(|_| err(format!("bad ISO {:?}", fields[0])))?;
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")))
            };
            let mut profile = SensorProfile {
                iso,
                gain_k: num(fields[1])?,
                sigma_r: num(fields[2])?,
                oracle: None,
            };
            if fields.len() == 6 {
                profile.oracle = Some(OracleNoiseParams {
                    sigma_read: num(fields[3])?,
                    sigma_row: num(fields[4])?,
                    quant_step: num(fields[5])?,
                });
            }
            set.insert(profile).map_err(|e| err(e.to_string()))?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# iso gain_K sigma_r [sigma_read sigma_row quant_step]\n");
        for p in self.iter() {
            let _ = write!(out, "{} {} {}", p.iso, p.gain_k, p.sigma_r);
            if let Some(o) = &p.oracle {
                let _ = write!(out, " {} {} {}", o.sigma_read, o.sigma_row, o.quant_step);
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

impl FromIterator<SensorProfile> for Result<ProfileSet> {
    fn from_iter<I: IntoIterator<Item = SensorProfile>>(iter: I) -> Self {
        let mut set = ProfileSet::new();
        for p in iter {
            set.insert(p)?;
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_roundtrip() {
        let text = "# header\n100 2 1.5\n\n3200 4.25 6 6 1 0.5 # oracle\n";
        let set = ProfileSet::parse(text, Path::new("p.txt")).unwrap();
        assert_eq!(set.len(), 2);
        let hi = set.get(3200).unwrap();
        assert_eq!(hi.gain_k, 4.25);
        assert_eq!(hi.oracle.unwrap().sigma_row, 1.0);
        assert!(set.get(100).unwrap().oracle.is_none());
        let again = ProfileSet::parse(&set.to_text(), Path::new("p.txt")).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn duplicate_iso_rejected_with_line() {
        let err = ProfileSet::parse("100 2 1\n100 3 1\n", Path::new("p.txt")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ProfileSet::parse("100 0 1\n", Path::new("p")).is_err());
        assert!(ProfileSet::parse("100 1 -1\n", Path::new("p")).is_err());
        assert!(ProfileSet::parse("100 1 1 1 -1 0\n", Path::new("p")).is_err());
        assert!(ProfileSet::parse("100 1 1 1\n", Path::new("p")).is_err());
        assert!(matches!(ProfileSet::new().get(5), Err(Error::MissingProfile(5))));
    }

    #[test]
    fn oracle_variance() {
        let o = OracleNoiseParams::new(2.0, 1.0, 1.0).unwrap();
        assert!((o.total_variance() - (5.0 + 1.0 / 12.0)).abs() < 1e-15);
        assert!(OracleNoiseParams::default().is_noiseless());
    }
}

use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{CriticConfig, CriticKind, UNetConfig};

/// Hyperparameters shared by both training loops. Text form is one
/// `key = value` per line; `#` starts a comment; unknown keys are errors.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub penalty_coef: f64,
    /// L2 distance between the two interpolates of a penalty pair.
    pub pair_distance: f64,
    pub lr_init: f64,
    pub lr_final: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patch_size: usize,
    pub critic_steps: usize,
    pub seed: u64,
    pub discriminator: CriticKind,
    pub gen_levels: usize,
    pub gen_width: usize,
    pub den_levels: usize,
    pub den_width: usize,
    pub critic_dim: usize,
    pub critic_heads: usize,
    pub critic_ff_ratio: usize,
    /// Smallest critic patch size; the other two scales are 2x and 4x.
    pub critic_patch: usize,
    /// Critic learning rate as a multiple of the scheduled rate.
    pub critic_lr_ratio: f64,
    /// Extra critic steps before the first generator step.
    pub critic_warmup: usize,
    /// Fraction of pairs held out for validation by the CLI.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.01,
            penalty_coef: 10.0,
            pair_distance: 1e-2,
            lr_init: 2e-4,
            lr_final: 1e-6,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            epochs: 60,
            batch_size: 16,
            patch_size: 32,
            critic_steps: 5,
            seed: 0,
            discriminator: CriticKind::Fourier,
            gen_levels: 3,
            gen_width: 16,
            den_levels: 3,
            den_width: 16,
            critic_dim: 64,
            critic_heads: 4,
            critic_ff_ratio: 2,
            critic_patch: 2,
            critic_lr_ratio: 1.0,
            critic_warmup: 0,
            val_fraction: 0.125,
        }
    }
}

const KEYS: &[&str] = &[
    "lambda1",
    "lambda2",
    "penalty_coef",
    "pair_distance",
    "lr_init",
    "lr_final",
    "adam_beta1",
    "adam_beta2",
    "epochs",
    "batch_size",
    "patch_size",
    "critic_steps",
    "seed",
    "discriminator",
    "gen_levels",
    "gen_width",
    "den_levels",
    "den_width",
    "critic_dim",
    "critic_heads",
    "critic_ff_ratio",
    "critic_patch",
    "critic_lr_ratio",
    "critic_warmup",
    "val_fraction",
];

impl TrainConfig {
    /// Batch 128, 64x64 patches, 100 epochs.
    pub fn paper_scale() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            patch_size: 64,
            ..Self::default()
        }
    }

    pub fn generator_arch(&self) -> UNetConfig {
        UNetConfig {
            levels: self.gen_levels,
            base_width: self.gen_width,
        }
    }

    pub fn denoiser_arch(&self) -> UNetConfig {
        UNetConfig {
            levels: self.den_levels,
            base_width: self.den_width,
        }
    }

    pub fn critic_arch(&self) -> CriticConfig {
        CriticConfig {
            kind: self.discriminator,
            image_size: self.patch_size,
            patch_sizes: [self.critic_patch, 2 * self.critic_patch, 4 * self.critic_patch],
            dim: self.critic_dim,
            heads: self.critic_heads,
            ff_ratio: self.critic_ff_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        for (name, v) in [
            ("lr_init", self.lr_init),
            ("lr_final", self.lr_final),
            ("pair_distance", self.pair_distance),
            ("critic_lr_ratio", self.critic_lr_ratio),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("penalty_coef", self.penalty_coef),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.critic_steps == 0 {
            return bad("epochs, batch_size and critic_steps must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        self.generator_arch().validate()?;
        self.denoiser_arch().validate()?;
        self.generator_arch().check_input(self.patch_size, self.patch_size)?;
        self.denoiser_arch().check_input(self.patch_size, self.patch_size)?;
        self.critic_arch().validate()?;
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        match key {
            "lambda1" => self.lambda1 = num(value)?,
            "lambda2" => self.lambda2 = num(value)?,
            "penalty_coef" => self.penalty_coef = num(value)?,
            "pair_distance" => self.pair_distance = num(value)?,
            "lr_init" => self.lr_init = num(value)?,
            "lr_final" => self.lr_final = num(value)?,
            "adam_beta1" => self.adam_beta1 = num(value)?,
            "adam_beta2" => self.adam_beta2 = num(value)?,
            "epochs" => self.epochs = num(value)?,
            "batch_size" => self.batch_size = num(value)?,
            "patch_size" => self.patch_size = num(value)?,
            "critic_steps" => self.critic_steps = num(value)?,
            "seed" => self.seed = num(value)?,
            "discriminator" => self.discriminator = value.parse().map_err(|e: Error| e.to_string())?,
            "gen_levels" => self.gen_levels = num(value)?,
            "gen_width" => self.gen_width = num(value)?,
            "den_levels" => self.den_levels = num(value)?,
            "den_width" => self.den_width = num(value)?,
            "critic_dim" => self.critic_dim = num(value)?,
            "critic_heads" => self.critic_heads = num(value)?,
            "critic_ff_ratio" => self.critic_ff_ratio = num(value)?,
            "critic_patch" => self.critic_patch = num(value)?,
            "critic_lr_ratio" => self.critic_lr_ratio = num(value)?,
            "critic_warmup" => self.critic_warmup = num(value)?,
            "val_fraction" => self.val_fraction = num(value)?,
            other => return Err(format!("unknown key {other:?} (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Starts from the defaults and applies every line of `text`.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            cfg.set(k.trim(), v.trim()).map_err(err)?;
        }
        cfg.validate().map_err(|e| Error::Config {
            path: origin.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let disc = match self.discriminator {
            CriticKind::Fourier => "ftd",
            CriticKind::Vanilla => "vanilla",
        };
        let values: Vec<String> = vec![
            self.lambda1.to_string(),
            self.lambda2.to_string(),
            self.penalty_coef.to_string(),
            self.pair_distance.to_string(),
            self.lr_init.to_string(),
            self.lr_final.to_string(),
            self.adam_beta1.to_string(),
            self.adam_beta2.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.patch_size.to_string(),
            self.critic_steps.to_string(),
            self.seed.to_string(),
            disc.to_string(),
            self.gen_levels.to_string(),
            self.gen_width.to_string(),
            self.den_levels.to_string(),
            self.den_width.to_string(),
            self.critic_dim.to_string(),
            self.critic_heads.to_string(),
            self.critic_ff_ratio.to_string(),
            self.critic_patch.to_string(),
            self.critic_lr_ratio.to_string(),
            self.critic_warmup.to_string(),
            self.val_fraction.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::paper_scale();
        cfg.discriminator = CriticKind::Vanilla;
        cfg.seed = 42;
        cfg.lr_init = 3.5e-4;
        let back = TrainConfig::parse(&cfg.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "epochs = 3\n# comment\nbogus = 1\n";
        match TrainConfig::parse(text, Path::new("c.cfg")) {
            Err(Error::Config { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            TrainConfig::parse("epochs = x", Path::new("c")),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(TrainConfig::parse("epochs = 0", Path::new("c")).is_err());
        assert!(TrainConfig::parse("lr_init = -1", Path::new("c")).is_err());
        assert!(TrainConfig::parse("patch_size = 20", Path::new("c")).is_err());
    }
}

//! The `lownoise` experiment commands.
//!
//! Datasets are directories of LRF files; a clean frame `X.lrf` pairs with
//! its noisy capture `X_noisy.lrf`. Every command validates its inputs
//! before writing, refuses to replace a checkpoint without `--force`, and
//! writes a manifest next to its outputs.
//!
//! CSV schemas:
//!
//! * denoiser log: `epoch,step,l1,lr,val_l1,val_psnr`
//! * noise-model log: `epoch,step,critic_loss,gen_loss,l1,perceptual,lr,val_kld`
//!   (`l1` and `perceptual` empty when both alignment weights are zero)
//! * evaluation: `model,image,akld`, summary `model,images,samples,akld`
//!
//! Exit status: 0 success, 2 usage, 3 data error, 4 numeric divergence.

mod io;
mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use io::{load_clean_dir, load_pairs, noisy_path, Frame, LRF_EXT, NOISY_SUFFIX};
pub use manifest::{content_hash, ExperimentManifest};

use crate::error::{Error, Result};
use crate::metrics::akld;
use crate::models::{load_records, save_records, Denoiser, Network, NetworkKind, NoiseModel};
use crate::raw::{save_raw, write_pgm_preview, ProfileSet, RawPatch, SensorProfile};
use crate::sim::{
    fit_awgn_sigma, fit_pg_sigma_r, procedural_scene, round_to_dn, synthesize_baseline, synthesize_physics, Baseline,
    BaselineKind, RngStream, SceneSpec,
};
use crate::train::{split_validation, DenoiserEpoch, DenoiserTrainer, NoiseEpoch, NoiseModelTrainer, TrainConfig, TrainPair};
use io::{check_writable, create_dir, sibling, write_text};

const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Parser, Debug)]
#[command(name = "lownoise", version, about = "Low-light raw noise synthesis experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render procedural clean scenes as LRF files.
    Scenes(ScenesArgs),
    /// Add physics or baseline noise to clean frames.
    Simulate(SimulateArgs),
    /// Train the denoiser on paired frames.
    TrainDenoiser(TrainDenoiserArgs),
    /// Train the noise generator against the critic.
    TrainNoiseModel(TrainNoiseModelArgs),
    /// Synthesize noisy frames with a trained noise model.
    Synthesize(SynthesizeArgs),
    /// AKLD of noise models against real captures (CSV: model,image,akld).
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ScenesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    /// Packed height and width.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Peak level range in DN above black, `lo,hi`.
    #[arg(long, default_value = "5,60")]
    pub peak: String,
    #[arg(long, default_value_t = 64)]
    pub black: u16,
    #[arg(long, default_value_t = 1023)]
    pub white: u16,
    /// ISO written to the headers.
    #[arg(long, default_value_t = 100)]
    pub iso: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Oracle,
    Awgn,
    Pg,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long)]
    pub clean: PathBuf,
    /// Profile table; each clean frame uses the entry for its header ISO.
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, value_enum)]
    pub mode: SimMode,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Preview amplification before the gamma curve.
    #[arg(long, default_value_t = 8.0)]
    pub preview_gain: f64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainDenoiserArgs {
    /// Directory holding `X.lrf` / `X_noisy.lrf` pairs.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from the checkpoint at `--out`.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainNoiseModelArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Trained denoiser checkpoint (kept frozen).
    #[arg(long)]
    pub denoiser: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub iso: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8.0)]
    pub preview_gain: f64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub clean: PathBuf,
    /// Directory of real captures `X_noisy.lrf`.
    #[arg(long)]
    pub real: PathBuf,
    /// Comma-separated: `real`, `oracle`, `awgn`, `pg` or checkpoint paths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Synthetic samples per image.
    #[arg(long, default_value_t = 4)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Profile table with oracle parameters, needed by `oracle`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Pair directory the baselines are moment-fitted on (default: the evaluated pairs).
    #[arg(long)]
    pub fit_pairs: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Scenes(a) => cmd_scenes(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::TrainDenoiser(a) => cmd_train_denoiser(a),
        Command::TrainNoiseModel(a) => cmd_train_noise_model(a),
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Usage(format!("expected `lo,hi`, got {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

pub fn cmd_scenes(a: &ScenesArgs) -> Result<()> {
    let (lo, hi) = parse_range(&a.peak)?;
    let manifest_path = a.out.join(MANIFEST_NAME);
    check_writable(&manifest_path, a.force)?;
    let profile = SensorProfile::new(a.iso, 1.0, 0.0)?;
    let root = RngStream::new(a.seed);
    let mut scenes = Vec::with_capacity(a.count);
    for i in 0..a.count as u64 {
        let r = root.split(i);
        let peak = lo + (hi - lo) * r.split(1).generator().uniform();
        let spec = SceneSpec {
            height: a.size,
            width: a.size,
            peak,
            black_level: a.black,
            white_level: a.white,
        };
        scenes.push(procedural_scene(&spec, &r.split(0))?);
    }
    create_dir(&a.out)?;
    let mut m = ExperimentManifest::new("scenes", None, Some(a.seed), Vec::new())?;
    for (i, s) in scenes.iter().enumerate() {
        let path = a.out.join(format!("scene_{i:05}.{LRF_EXT}"));
        save_raw(s, &profile, &path)?;
        m.outputs.push(path);
    }
    m.write(&manifest_path)
}

fn write_frame(out: &Path, stem: &str, patch: &RawPatch, profile: &SensorProfile, gain: f64) -> Result<PathBuf> {
    let path = noisy_path(out, stem);
    save_raw(patch, profile, &path)?;
    write_pgm_preview(patch, gain, &out.join(format!("{stem}{NOISY_SUFFIX}.pgm")))?;
    Ok(path)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let frames = load_clean_dir(&a.clean)?;
    let profiles = ProfileSet::load(&a.profile)?;
    let root = RngStream::new(a.seed);
    let mut outputs = Vec::with_capacity(frames.len());
    let mut missing = Vec::new();
    for f in &frames {
        match profiles.get(f.profile.iso) {
            Ok(p) => {
                if a.mode == SimMode::Oracle && p.oracle.is_none() {
                    return Err(Error::Parameter(format!("profile for ISO {} has no oracle parameters", p.iso)));
                }
            }
            Err(_) => missing.push(format!("{} (ISO {})", f.path.display(), f.profile.iso)),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Parameter(format!("no profile for: {}", missing.join(", "))));
    }
    for (i, f) in frames.iter().enumerate() {
        let p = profiles.get(f.profile.iso)?;
        let r = root.split(i as u64);
        let noisy = match a.mode {
            SimMode::Oracle => synthesize_physics(&f.patch, p, &r)?,
            SimMode::Awgn => synthesize_baseline(&f.patch, p, Baseline::from_profile(BaselineKind::Awgn, &f.patch, p), &r)?,
            SimMode::Pg => {
                synthesize_baseline(&f.patch, p, Baseline::from_profile(BaselineKind::PoissonGaussian, &f.patch, p), &r)?
            }
        };
        outputs.push((f.stem.clone(), round_to_dn(&noisy), *p));
    }
    create_dir(&a.out)?;
    let inputs = frames.iter().map(|f| f.path.clone()).chain([a.profile.clone()]).collect();
    let mut m = ExperimentManifest::new("simulate", None, Some(a.seed), inputs)?;
    for (stem, patch, p) in &outputs {
        m.outputs.push(write_frame(&a.out, stem, patch, p, a.preview_gain)?);
    }
    m.write(&a.out.join(MANIFEST_NAME))
}

fn log_path(ckpt: &Path) -> PathBuf {
    sibling(ckpt, ".log.csv")
}

fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, ".manifest")
}

/// Keeps the header and the first `epochs` rows of an existing log.
fn resumed_log(path: &Path, epochs: usize) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().skip(1).take(epochs).map(str::to_string).collect())
}

fn write_log(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    write_text(path, &s)
}

fn check_training_outputs(out: &Path, resume: bool, force: bool) -> Result<()> {
    if resume {
        if !out.exists() {
            return Err(Error::Usage(format!("--resume given but {} does not exist", out.display())));
        }
        return Ok(());
    }
    check_writable(out, force)
}

pub fn cmd_train_denoiser(a: &TrainDenoiserArgs) -> Result<()> {
    let config = TrainConfig::load(&a.config)?;
    let (_, pairs, files) = load_pairs(&a.pairs, &a.pairs)?;
    check_training_outputs(&a.out, a.resume, a.force)?;
    let (mut trainer, mut rows) = if a.resume {
        let t = DenoiserTrainer::resume(config.clone(), &load_records(&a.out)?)?;
        let rows = resumed_log(&log_path(&a.out), t.epochs_done())?;
        (t, rows)
    } else {
        (DenoiserTrainer::new(config.clone())?, Vec::new())
    };
    let (train, val) = split_validation(pairs, config.val_fraction);
    let mut m = ExperimentManifest::new("train-denoiser", Some(&a.config), Some(config.seed), files)?;
    m.outputs = vec![a.out.clone(), log_path(&a.out)];
    m.write(&manifest_path(&a.out))?;
    trainer.train(&train, &val, |t, e: &DenoiserEpoch| {
        rows.push(e.csv_row());
        save_records(&t.records(), &a.out)?;
        write_log(&log_path(&a.out), DenoiserEpoch::CSV_HEADER, &rows)
    })?;
    if !a.out.exists() {
        save_records(&trainer.records(), &a.out)?;
    }
    Ok(())
}

/// Loads the denoiser of a checkpoint and checks it against the config.
fn load_denoiser(path: &Path, config: &TrainConfig) -> Result<Denoiser> {
    let recs = load_records(path)?;
    let rec = recs
        .iter()
        .find(|r| r.kind == NetworkKind::Denoiser)
        .ok_or_else(|| Error::Architecture(format!("{} holds no denoiser", path.display())))?;
    let den = Denoiser::from_record(rec)?;
    if den.config() != config.denoiser_arch() {
        return Err(Error::Architecture(format!(
            "denoiser checkpoint is {:?}, config asks for {:?}",
            den.config(),
            config.denoiser_arch()
        )));
    }
    Ok(den)
}

pub fn cmd_train_noise_model(a: &TrainNoiseModelArgs) -> Result<()> {
    let config = TrainConfig::load(&a.config)?;
    let den = load_denoiser(&a.denoiser, &config)?;
    let (_, pairs, mut files) = load_pairs(&a.pairs, &a.pairs)?;
    check_training_outputs(&a.out, a.resume, a.force)?;
    let (mut trainer, mut rows) = if a.resume {
        let t = NoiseModelTrainer::resume(config.clone(), den, &load_records(&a.out)?)?;
        let rows = resumed_log(&log_path(&a.out), t.epochs_done())?;
        (t, rows)
    } else {
        (NoiseModelTrainer::for_pairs(config.clone(), den, &pairs)?, Vec::new())
    };
    let (train, val) = split_validation(pairs, config.val_fraction);
    files.push(a.denoiser.clone());
    let mut m = ExperimentManifest::new("train-noise-model", Some(&a.config), Some(config.seed), files)?;
    m.outputs = vec![a.out.clone(), log_path(&a.out)];
    m.write(&manifest_path(&a.out))?;
    trainer.train(&train, &val, |t, e: &NoiseEpoch| {
        rows.push(e.csv_row());
        save_records(&t.records(), &a.out)?;
        write_log(&log_path(&a.out), NoiseEpoch::CSV_HEADER, &rows)
    })?;
    if !a.out.exists() {
        save_records(&trainer.records(), &a.out)?;
    }
    Ok(())
}

pub fn cmd_synthesize(a: &SynthesizeArgs) -> Result<()> {
    let model = NoiseModel::load(&a.model)?;
    let profile = *model.profile(a.iso)?;
    let frames = load_clean_dir(&a.clean)?;
    let root = RngStream::new(a.seed);
    let outputs: Vec<RawPatch> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| model.synthesize(&f.patch, &profile, &root.split(i as u64)))
        .collect::<Result<_>>()?;
    create_dir(&a.out)?;
    let inputs = frames.iter().map(|f| f.path.clone()).chain([a.model.clone()]).collect();
    let mut m = ExperimentManifest::new("synthesize", None, Some(a.seed), inputs)?;
    for (f, patch) in frames.iter().zip(&outputs) {
        m.outputs.push(write_frame(&a.out, &f.stem, patch, &profile, a.preview_gain)?);
    }
    m.write(&a.out.join(MANIFEST_NAME))
}

/// A noise model under evaluation.
enum EvalModel {
    Real,
    Oracle(ProfileSet),
    Awgn(BTreeMap<u32, f64>),
    PoissonGaussian(BTreeMap<u32, f64>),
    Learned(Box<NoiseModel>),
}

/// Per-ISO moment fits of both baselines.
fn fit_baselines(pairs: &[TrainPair]) -> Result<(BTreeMap<u32, f64>, BTreeMap<u32, f64>)> {
    let mut groups: BTreeMap<u32, (f64, Vec<(RawPatch, RawPatch)>)> = BTreeMap::new();
    for p in pairs {
        let e = groups.entry(p.profile.iso).or_insert((p.profile.gain_k, Vec::new()));
        e.1.push((p.clean.to_black_subtracted(), p.noisy.to_black_subtracted()));
    }
    let (mut awgn, mut pg) = (BTreeMap::new(), BTreeMap::new());
    for (iso, (k, g)) in groups {
        awgn.insert(iso, fit_awgn_sigma(&g)?);
        pg.insert(iso, fit_pg_sigma_r(&g, k)?);
    }
    Ok((awgn, pg))
}

fn fitted(map: &BTreeMap<u32, f64>, iso: u32) -> Result<f64> {
    map.get(&iso).copied().ok_or(Error::MissingProfile(iso))
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    check_writable(&a.out, a.force)?;
    let (names, pairs, mut files) = load_pairs(&a.clean, &a.real)?;
    let fit_set = match &a.fit_pairs {
        Some(dir) => {
            let (_, p, f) = load_pairs(dir, dir)?;
            files.extend(f);
            p
        }
        None => pairs.clone(),
    };
    let (awgn, pg) = fit_baselines(&fit_set)?;
    let mut models = Vec::with_capacity(a.models.len());
    for name in &a.models {
        let m = match name.as_str() {
            "real" => EvalModel::Real,
            "oracle" => {
                let path = a
                    .profile
                    .as_ref()
                    .ok_or_else(|| Error::Usage("the oracle model needs --profile".into()))?;
                files.push(path.clone());
                EvalModel::Oracle(ProfileSet::load(path)?)
            }
            "awgn" => EvalModel::Awgn(awgn.clone()),
            "pg" => EvalModel::PoissonGaussian(pg.clone()),
            path => {
                files.push(PathBuf::from(path));
                EvalModel::Learned(Box::new(NoiseModel::load(Path::new(path))?))
            }
        };
        models.push((name.clone(), m));
    }
    let tuples: Vec<_> = pairs.iter().map(TrainPair::as_tuple).collect();
    let rng = RngStream::new(a.seed);
    let mut rows = String::from("model,image,akld\n");
    let mut summary = String::from("model,images,samples,akld\n");
    for (label, model) in &models {
        let report = akld(&tuples, a.samples, &rng, |clean, i, r| {
            let p = &pairs[i].profile;
            let out = match model {
                EvalModel::Real => return Ok(pairs[i].noisy.clone()),
                EvalModel::Oracle(set) => synthesize_physics(clean, set.get(p.iso)?, r)?,
                EvalModel::Awgn(m) => synthesize_baseline(clean, p, Baseline::Awgn { sigma: fitted(m, p.iso)? }, r)?,
                EvalModel::PoissonGaussian(m) => {
                    synthesize_baseline(clean, p, Baseline::PoissonGaussian { sigma_r: fitted(m, p.iso)? }, r)?
                }
                EvalModel::Learned(nm) => return nm.synthesize_iso(clean, p.iso, r),
            };
            Ok(round_to_dn(&out))
        })?;
        for (name, v) in names.iter().zip(&report.per_image) {
            let _ = writeln!(rows, "{label},{name},{v}");
        }
        let _ = writeln!(summary, "{label},{},{},{}", names.len(), a.samples, report.mean);
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let summary_path = summary_path(&a.out);
    write_text(&a.out, &rows)?;
    write_text(&summary_path, &summary)?;
    let mut m = ExperimentManifest::new("evaluate", None, Some(a.seed), files)?;
    m.outputs = vec![a.out.clone(), summary_path];
    m.write(&manifest_path(&a.out))
}

/// `results.csv` -> `results_summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_summary.csv"))
}

#[cfg(test)]
mod tests;

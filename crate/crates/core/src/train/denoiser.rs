use super::data::{assemble, centre_crops, TrainPair};
use super::losses::mean_abs_diff;
use super::optim::{cosine_lr, AdamState};
use super::{adam_record, restore_adam, TrainConfig};
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::metrics::psnr_values;
use crate::models::{patches_to_tensor, Denoiser, NetworkKind, Network, Record};
use crate::sim::RngStream;

/// One line of the denoiser training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenoiserEpoch {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Mean training L1 over the epoch.
    pub l1: f64,
    pub lr: f64,
    pub val_l1: f64,
    /// Mean PSNR (dB) of the clamped estimate on the validation crops.
    pub val_psnr: f64,
}

impl DenoiserEpoch {
    pub const CSV_HEADER: &'static str = "epoch,step,l1,lr,val_l1,val_psnr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.step, self.l1, self.lr, self.val_l1, self.val_psnr
        )
    }
}

/// Supervised L1 training of the denoiser on `(clean, noisy)` pairs.
///
/// Randomness: `seed.split(0)` initializes weights, `seed.split(1).split(e)`
/// orders epoch `e` and `seed.split(2).split(e).split(s)` crops its step `s`.
#[derive(Clone, Debug)]
pub struct DenoiserTrainer {
    config: TrainConfig,
    denoiser: Denoiser,
    adam: AdamState,
    epoch: usize,
}

impl DenoiserTrainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let denoiser = Denoiser::new(config.denoiser_arch(), &RngStream::new(config.seed).split(0))?;
        let adam = AdamState::new(&denoiser.params, config.adam_beta1, config.adam_beta2);
        Ok(Self { config, denoiser, adam, epoch: 0 })
    }

    /// Continues from records written by [`Self::records`].
    pub fn resume(config: TrainConfig, records: &[Record]) -> Result<Self> {
        let mut t = Self::new(config)?;
        let rec = records
            .iter()
            .find(|r| r.kind == NetworkKind::Denoiser)
            .ok_or_else(|| Error::Architecture("checkpoint holds no denoiser".into()))?;
        t.denoiser.load_record(rec)?;
        t.epoch = restore_adam(&mut t.adam, records, "denoiser")?;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn denoiser(&self) -> &Denoiser {
        &self.denoiser
    }

    pub fn into_denoiser(self) -> Denoiser {
        self.denoiser
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Weights plus optimizer state; enough to resume bit-exactly.
    pub fn records(&self) -> Vec<Record> {
        vec![
            self.denoiser.to_record(""),
            adam_record(&self.adam, self.epoch, "denoiser"),
        ]
    }

    fn steps_per_epoch(&self, n: usize) -> usize {
        (n / self.config.batch_size).max(1)
    }

    /// One pass over `train`, then validation on centre crops of `val`.
    pub fn run_epoch(&mut self, train: &[TrainPair], val: &[TrainPair]) -> Result<DenoiserEpoch> {
        if train.is_empty() {
            return Err(Error::InsufficientData("no training pairs".into()));
        }
        let c = &self.config;
        let root = RngStream::new(c.seed);
        let steps = self.steps_per_epoch(train.len());
        let total = steps * c.epochs;
        let order = root.split(1).split(self.epoch as u64).generator().permutation(train.len());
        let bsz = c.batch_size.min(train.len());
        let mut l1_sum = 0.0;
        let mut lr = c.lr_init;
        for s in 0..steps {
            let idx: Vec<usize> = (0..bsz).map(|j| order[(s * bsz + j) % order.len()]).collect();
            let batch = assemble(train, &idx, c.patch_size, &root.split(2).split(self.epoch as u64).split(s as u64))?;
            let mut g = Graph::new();
            let p = self.denoiser.params.bind(&mut g, true);
            let x = g.constant(batch.noisy);
            let y = g.constant(batch.clean);
            let out = self.denoiser.forward(&mut g, &p, x)?.output;
            let loss = mean_abs_diff(&mut g, out, y)?;
            let l = g.value(loss).item();
            if !l.is_finite() {
                return Err(Error::Divergence(format!("denoiser loss is {l} at epoch {}", self.epoch)));
            }
            let grads = self.denoiser.params.gradients(&p, &g.backward(loss)?);
            lr = cosine_lr(self.epoch * steps + s, total, c.lr_init, c.lr_final);
            self.adam.update(&mut self.denoiser.params, &grads, lr)?;
            l1_sum += l;
        }
        let (val_l1, val_psnr) = self.validate(val)?;
        self.epoch += 1;
        Ok(DenoiserEpoch {
            epoch: self.epoch,
            step: self.adam.step,
            l1: l1_sum / steps as f64,
            lr,
            val_l1,
            val_psnr,
        })
    }

    /// Mean L1 and PSNR on centre crops; NaN when `val` is empty.
    pub fn validate(&self, val: &[TrainPair]) -> Result<(f64, f64)> {
        if val.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        let crops = centre_crops(val, self.config.patch_size)?;
        let (mut l1, mut psnr) = (0.0, 0.0);
        for chunk in crops.chunks(self.config.batch_size) {
            let noisy: Vec<_> = chunk.iter().map(|p| p.noisy.to_normalized()).collect();
            let clean: Vec<_> = chunk.iter().map(|p| p.clean.to_normalized()).collect();
            let out = self.denoise_batch(&patches_to_tensor(&noisy)?)?;
            let per = out.numel() / chunk.len();
            for (i, c) in clean.iter().enumerate() {
                let o = &out.data()[i * per..(i + 1) * per];
                l1 += o.iter().zip(c.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / per as f64;
                let clamped: Vec<f64> = o.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                psnr += psnr_values(&clamped, c.data());
            }
        }
        let n = crops.len() as f64;
        Ok((l1 / n, psnr / n))
    }

    fn denoise_batch(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.denoiser.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let y = self.denoiser.forward(&mut g, &p, xv)?.output;
        Ok(g.value(y).clone())
    }

    /// Runs the remaining epochs, calling `on_epoch` after each.
    pub fn train<F>(&mut self, train: &[TrainPair], val: &[TrainPair], mut on_epoch: F) -> Result<Vec<DenoiserEpoch>>
    where
        F: FnMut(&Self, &DenoiserEpoch) -> Result<()>,
    {
        let mut log = Vec::new();
        while self.epoch < self.config.epochs {
            let e = self.run_epoch(train, val)?;
            on_epoch(self, &e)?;
            log.push(e);
        }
        Ok(log)
    }
}

/// Trains a denoiser from scratch for `config.epochs` epochs.
pub fn train_denoiser(train: &[TrainPair], val: &[TrainPair], config: &TrainConfig) -> Result<(Denoiser, Vec<DenoiserEpoch>)> {
    let mut t = DenoiserTrainer::new(config.clone())?;
    let log = t.train(train, val, |_, _| Ok(()))?;
    Ok((t.into_denoiser(), log))
}

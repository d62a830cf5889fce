use super::data::{assemble, centre_crops, collect_profiles, noise_inputs, Batch, TrainPair};
use super::losses::{adversarial_losses, alignment_losses, penalty_pairs};
use super::optim::{cosine_lr, AdamState};
use super::{adam_record, restore_adam, TrainConfig};
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::metrics::akld;
use crate::models::{Denoiser, Generator, Network, NoiseCritic, NoiseModel, Record};
use crate::raw::ProfileSet;
use crate::sim::RngStream;

/// One line of the noise-model training log. `l1` and `perceptual` are
/// absent when both alignment weights are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseEpoch {
    pub epoch: usize,
    /// Generator steps taken so far.
    pub step: u64,
    pub critic_loss: f64,
    /// Adversarial part of the generator objective.
    pub gen_loss: f64,
    pub l1: Option<f64>,
    pub perceptual: Option<f64>,
    pub lr: f64,
    /// Mean KLD of synthetic vs real residuals on the validation crops.
    pub val_kld: f64,
    /// Mean `E[D(real)] - E[D(fake)]` over the epoch's critic steps.
    pub gap: f64,
}

impl NoiseEpoch {
    pub const CSV_HEADER: &'static str = "epoch,step,critic_loss,gen_loss,l1,perceptual,lr,val_kld";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.step,
            self.critic_loss,
            self.gen_loss,
            opt(self.l1),
            opt(self.perceptual),
            self.lr,
            self.val_kld
        )
    }
}

/// Adversarial training of the generator against a critic, with alignment
/// losses through a frozen denoiser.
///
/// Randomness: `seed.split(10)` and `seed.split(11)` initialize generator and
/// critic, `seed.split(1).split(e)` orders epoch `e`,
/// `seed.split(2).split(e).split(s)` drives step `s` and `seed.split(3)`
/// the validation synthesis.
#[derive(Clone, Debug)]
pub struct NoiseModelTrainer {
    config: TrainConfig,
    generator: Generator,
    critic: NoiseCritic,
    denoiser: Denoiser,
    profiles: ProfileSet,
    gen_adam: AdamState,
    critic_adam: AdamState,
    epoch: usize,
}

/// Per-step accumulators.
#[derive(Default)]
struct StepStats {
    critic: f64,
    gap: f64,
    gen: f64,
    l1: f64,
    perceptual: f64,
}

impl NoiseModelTrainer {
    /// `profiles` must cover every ISO that will appear in the training pairs.
    pub fn new(config: TrainConfig, denoiser: Denoiser, profiles: ProfileSet) -> Result<Self> {
        config.validate()?;
        let root = RngStream::new(config.seed);
        let generator = Generator::new(config.generator_arch(), &root.split(10))?;
        let critic = NoiseCritic::new(config.critic_arch(), &root.split(11))?;
        let gen_adam = AdamState::new(&generator.params, config.adam_beta1, config.adam_beta2);
        let critic_adam = AdamState::new(&critic.params, config.adam_beta1, config.adam_beta2);
        Ok(Self {
            config,
            generator,
            critic,
            denoiser,
            profiles,
            gen_adam,
            critic_adam,
            epoch: 0,
        })
    }

    /// Trainer for a dataset, with the profile table taken from its pairs.
    pub fn for_pairs(config: TrainConfig, denoiser: Denoiser, pairs: &[TrainPair]) -> Result<Self> {
        Self::new(config, denoiser, collect_profiles(pairs)?)
    }

    /// Continues from records written by [`Self::records`].
    pub fn resume(config: TrainConfig, denoiser: Denoiser, records: &[Record]) -> Result<Self> {
        let model = NoiseModel::from_records(records)?;
        let mut t = Self::new(config, denoiser, model.profiles)?;
        t.generator.load_record(&model.generator.to_record(""))?;
        let want = t.critic.kind();
        let rec = records
            .iter()
            .find(|r| r.kind == want)
            .ok_or_else(|| Error::Architecture(format!("checkpoint holds no {want:?} network")))?;
        t.critic.load_record(rec)?;
        let e1 = restore_adam(&mut t.gen_adam, records, "generator")?;
        let e2 = restore_adam(&mut t.critic_adam, records, "critic")?;
        if e1 != e2 {
            return Err(Error::Architecture(format!("optimizer states disagree on the epoch: {e1} vs {e2}")));
        }
        t.epoch = e1;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn critic(&self) -> &NoiseCritic {
        &self.critic
    }

    pub fn denoiser(&self) -> &Denoiser {
        &self.denoiser
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// The inference artifact at the current weights.
    pub fn model(&self) -> NoiseModel {
        NoiseModel::new(self.generator.clone(), self.profiles.clone())
    }

    /// Generator (with the profile table), critic and both optimizer states.
    pub fn records(&self) -> Vec<Record> {
        vec![
            self.generator.to_record(self.profiles.to_text()),
            self.critic.to_record(""),
            adam_record(&self.gen_adam, self.epoch, "generator"),
            adam_record(&self.critic_adam, self.epoch, "critic"),
        ]
    }

    fn check_profiles(&self, pairs: &[TrainPair]) -> Result<()> {
        for p in pairs {
            self.profiles.get(p.profile.iso)?;
        }
        Ok(())
    }

    /// `clamp(shot + G(n_init), 0, 1)` without a graph.
    fn fake_batch(&self, batch: &Batch, rng: &RngStream) -> Result<Tensor> {
        let (shot, init) = noise_inputs(batch, rng)?;
        let n = self.generator.generate(&init)?;
        let data = shot.data().iter().zip(n.data()).map(|(a, b)| (a + b).clamp(0.0, 1.0)).collect();
        Tensor::new(shot.shape(), data)
    }

    /// One critic update on `batch`; returns (critic loss, gap).
    fn critic_step(&mut self, batch: &Batch, rng: &RngStream, lr: f64) -> Result<(f64, f64)> {
        let c = &self.config;
        let fake = self.fake_batch(batch, &rng.split(0))?;
        let (x1, x2) = penalty_pairs(&batch.noisy, &fake, c.pair_distance, &mut rng.split(1).generator())?;
        let b = fake.shape()[0];
        let mut g = Graph::new();
        let p = self.critic.params.bind(&mut g, true);
        let parts = [batch.noisy.clone(), fake, x1, x2].map(|t| g.constant(t));
        let all = g.concat(&parts, 0)?;
        let scores = self.critic.forward(&mut g, &p, all)?;
        let s = g.split(scores, 0, &[b, b, b, b])?;
        let adv = adversarial_losses(&mut g, s[0], s[1], (s[2], s[3]), c.pair_distance, c.penalty_coef)?;
        let loss = g.value(adv.critic).item();
        if !loss.is_finite() || !adv.gap.is_finite() {
            return Err(Error::Divergence(format!("critic loss {loss}, gap {} at epoch {}", adv.gap, self.epoch)));
        }
        let grads = self.critic.params.gradients(&p, &g.backward(adv.critic)?);
        self.critic_adam.update(&mut self.critic.params, &grads, lr)?;
        Ok((loss, adv.gap))
    }

    /// One generator update; returns (adversarial, l1, perceptual).
    fn generator_step(&mut self, batch: &Batch, rng: &RngStream, lr: f64) -> Result<(f64, f64, f64)> {
        let c = &self.config;
        let (shot, init) = noise_inputs(batch, rng)?;
        let mut g = Graph::new();
        let gp = self.generator.params.bind(&mut g, true);
        let cp = self.critic.params.bind(&mut g, false);
        let init = g.constant(init);
        let n = self.generator.forward(&mut g, &gp, init)?;
        let shot = g.constant(shot);
        let fake = g.add(shot, n)?;
        let fake = g.clamp(fake, 0.0, 1.0);
        let scores = self.critic.forward(&mut g, &cp, fake)?;
        let mean = g.reduce_mean(scores);
        let adv = g.neg(mean);
        let mut total = adv;
        let (mut l1, mut per) = (0.0, 0.0);
        if c.lambda1 > 0.0 || c.lambda2 > 0.0 {
            let dp = self.denoiser.params.bind(&mut g, false);
            let real = g.constant(batch.noisy.clone());
            let a = alignment_losses(&mut g, &self.denoiser, &dp, fake, real)?;
            l1 = g.value(a.l1).item();
            per = g.value(a.perceptual).item();
            let t1 = g.scale(a.l1, c.lambda1);
            let t2 = g.scale(a.perceptual, c.lambda2);
            total = g.add(total, t1)?;
            total = g.add(total, t2)?;
        }
        let adv_v = g.value(adv).item();
        if !g.value(total).item().is_finite() {
            return Err(Error::Divergence(format!("generator loss is not finite at epoch {}", self.epoch)));
        }
        let grads = self.generator.params.gradients(&gp, &g.backward(total)?);
        self.gen_adam.update(&mut self.generator.params, &grads, lr)?;
        Ok((adv_v, l1, per))
    }

    /// One pass over `train` (one generator step per batch, each preceded by
    /// `critic_steps` critic steps on freshly drawn batches), then validation.
    pub fn run_epoch(&mut self, train: &[TrainPair], val: &[TrainPair]) -> Result<NoiseEpoch> {
        if train.is_empty() {
            return Err(Error::InsufficientData("no training pairs".into()));
        }
        self.check_profiles(train)?;
        self.check_profiles(val)?;
        let c = self.config.clone();
        let root = RngStream::new(c.seed);
        let bsz = c.batch_size.min(train.len());
        let steps = (train.len() / bsz).max(1);
        let total = steps * c.epochs;
        let order = root.split(1).split(self.epoch as u64).generator().permutation(train.len());
        let mut st = StepStats::default();
        let mut lr = c.lr_init;
        for s in 0..steps {
            lr = cosine_lr(self.epoch * steps + s, total, c.lr_init, c.lr_final);
            let step_rng = root.split(2).split(self.epoch as u64).split(s as u64);
            let warmup = if self.epoch == 0 && s == 0 { c.critic_warmup } else { 0 };
            for k in 0..c.critic_steps + warmup {
                let krng = step_rng.split(1 + k as u64);
                let mut pick = krng.split(0).generator();
                let idx: Vec<usize> = (0..bsz).map(|_| pick.below(train.len())).collect();
                let batch = assemble(train, &idx, c.patch_size, &krng.split(1))?;
                let (loss, gap) = self.critic_step(&batch, &krng.split(2), lr * c.critic_lr_ratio)?;
                st.critic += loss;
                st.gap += gap;
            }
            let idx: Vec<usize> = (0..bsz).map(|j| order[(s * bsz + j) % order.len()]).collect();
            let grng = step_rng.split(0);
            let batch = assemble(train, &idx, c.patch_size, &grng.split(0))?;
            let (adv, l1, per) = self.generator_step(&batch, &grng.split(1), lr)?;
            st.gen += adv;
            st.l1 += l1;
            st.perceptual += per;
        }
        let val_kld = self.validate(val)?;
        self.epoch += 1;
        let cs = (steps * c.critic_steps + if self.epoch == 1 { c.critic_warmup } else { 0 }) as f64;
        let aligned = c.lambda1 > 0.0 || c.lambda2 > 0.0;
        Ok(NoiseEpoch {
            epoch: self.epoch,
            step: self.gen_adam.step,
            critic_loss: st.critic / cs,
            gen_loss: st.gen / steps as f64,
            l1: aligned.then_some(st.l1 / steps as f64),
            perceptual: aligned.then_some(st.perceptual / steps as f64),
            lr,
            val_kld,
            gap: st.gap / cs,
        })
    }

    /// Mean KLD of one synthetic sample per validation crop against its
    /// real residual, with fixed streams; NaN when `val` is empty.
    pub fn validate(&self, val: &[TrainPair]) -> Result<f64> {
        if val.is_empty() {
            return Ok(f64::NAN);
        }
        let crops = centre_crops(val, self.config.patch_size)?;
        let pairs: Vec<_> = crops.iter().map(TrainPair::as_tuple).collect();
        let model = self.model();
        let rng = RngStream::new(self.config.seed).split(3);
        let report = akld(&pairs, 1, &rng, |clean, i, r| model.synthesize(clean, &crops[i].profile, r))?;
        Ok(report.mean)
    }

    /// Runs the remaining epochs, calling `on_epoch` after each.
    pub fn train<F>(&mut self, train: &[TrainPair], val: &[TrainPair], mut on_epoch: F) -> Result<Vec<NoiseEpoch>>
    where
        F: FnMut(&Self, &NoiseEpoch) -> Result<()>,
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

/// Trains a noise model from scratch for `config.epochs` epochs.
pub fn train_noise_model(
    train: &[TrainPair],
    val: &[TrainPair],
    denoiser: &Denoiser,
    config: &TrainConfig,
) -> Result<(NoiseModel, NoiseCritic, Vec<NoiseEpoch>)> {
    let mut all = train.to_vec();
    all.extend_from_slice(val);
    let mut t = NoiseModelTrainer::for_pairs(config.clone(), denoiser.clone(), &all)?;
    let log = t.train(train, val, |_, _| Ok(()))?;
    Ok((t.model(), t.critic.clone(), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::patches_to_tensor;
    use crate::raw::SensorProfile;
    use crate::sim::shot_noise_values;
    use crate::train::tests::{oracle_pairs, tiny_config};

    #[test]
    fn first_gap_compares_shot_only_fakes_with_real() {
        // sigma_r = 0 and an identity generator: fakes are clamped shot noise.
        let mut pairs = oracle_pairs(4, 8);
        for p in &mut pairs {
            p.profile = SensorProfile::new(1600, 2.0, 0.0).unwrap();
        }
        let cfg = TrainConfig { lambda1: 0.0, lambda2: 0.0, ..tiny_config() };
        let den = Denoiser::new(cfg.denoiser_arch(), &RngStream::new(4)).unwrap();
        let mut t = NoiseModelTrainer::for_pairs(cfg, den, &pairs).unwrap();
        let critic = t.critic.clone();
        let rng = RngStream::new(8);
        let batch = assemble(&pairs, &[0, 1, 2, 3], 8, &rng).unwrap();
        let (_, gap) = t.critic_step(&batch, &rng, 1e-3).unwrap();

        let fakes: Vec<_> = batch
            .clean_dn
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let v = shot_noise_values(c.data(), 2.0, &rng.split(0).split(i as u64).split(0), 30.0).unwrap();
                c.with_data(v, crate::raw::PixelDomain::BlackSubtracted).unwrap().to_normalized()
            })
            .collect();
        let real = critic.score(&batch.noisy).unwrap();
        let fake = critic.score(&patches_to_tensor(&fakes).unwrap()).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((gap - (mean(&real) - mean(&fake))).abs() < 1e-12);
    }
}

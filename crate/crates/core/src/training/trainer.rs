//! The optimization loop. Every source of randomness is addressed by
//! `(seed, step)`, so a run resumed from a checkpoint replays the batches and
//! quantization noise it would have seen uninterrupted.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use s2c_tensor::{Tensor, Var};

use super::checkpoint::Checkpoint;
use super::dataset::PatchSource;
use super::loss::{rd_loss, Metric};
use super::optim::{clip_grad_norm, learning_rate, Adam, AdamConfig};
use crate::entropy::Quantizer;
use crate::error::{Result, S2cError};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub metric: Metric,
    pub batch_size: usize,
    pub patch_size: usize,
    pub steps: u64,
    pub lr: f64,
    pub seed: u64,
    pub dataset_path: PathBuf,
    /// 0 disables periodic checkpoints (a final one is always written).
    pub checkpoint_every: u64,
    pub clip_norm: f64,
    pub cosine: bool,
    pub flips: bool,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0130,
            metric: Metric::Mse,
            batch_size: 8,
            patch_size: 256,
            steps: 1000,
            lr: 1e-4,
            seed: 0,
            dataset_path: PathBuf::from("data/train"),
            checkpoint_every: 1000,
            clip_norm: 1.0,
            cosine: false,
            flips: true,
            out_dir: PathBuf::from("runs/train"),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(S2cError::Config(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.patch_size == 0 || self.patch_size % crate::config::SIZE_MULTIPLE != 0 {
            return bad(format!(
                "patch_size {} must be a positive multiple of {}",
                self.patch_size,
                crate::config::SIZE_MULTIPLE
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub bpp_y: f64,
    pub bpp_z: f64,
    pub distortion: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub last: Option<StepLog>,
    pub steps_run: u64,
    pub samples_per_sec: f64,
    pub checkpoint: PathBuf,
}

fn noise_seed(seed: u64, step: u64) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED
}

pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    /// Optimizer steps completed.
    pub step: u64,
    pub config: TrainConfig,
    source: PatchSource,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig, mut source: PatchSource) -> Result<Self> {
        config.validate()?;
        if source.patch != config.patch_size {
            return Err(S2cError::Config(format!(
                "patch source crops {} px, config asks for {}",
                source.patch, config.patch_size
            )));
        }
        source.flips = config.flips;
        let adam = Adam::new(AdamConfig::default(), model.params.tensors());
        Ok(Self {
            model,
            adam,
            step: 0,
            config,
            source,
        })
    }

    pub fn resume(ck: Checkpoint, config: TrainConfig, source: PatchSource) -> Result<Self> {
        let (model, step, adam) = ck.into_model()?;
        let mut t = Self::new(model, config, source)?;
        t.step = step;
        if let Some(adam) = adam {
            t.adam = adam;
        }
        Ok(t)
    }

    /// Loss terms of the batch for `step` under the current parameters,
    /// plus gradients when `with_grads` is set.
    fn evaluate(&self, step: u64, with_grads: bool) -> Result<(StepLog, Vec<Tensor>)> {
        let x = self.source.batch(step, self.config.batch_size);
        let (n, _, h, w) = x.dims4();
        let ctx = self.model.params.bind(with_grads);
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(self.config.seed, step));
        let q = Quantizer::Train {
            rng: &mut rng,
            mode: self.model.config.entropy.quantizer,
        };
        let out = self.model.forward(&ctx, &Var::constant(x.clone()), q)?;
        let terms = rd_loss(&out, &x, n * h * w, self.config.lambda, self.config.metric)?;
        let log = StepLog {
            step,
            loss: terms.loss.value().data()[0],
            bpp_y: terms.bpp_y,
            bpp_z: terms.bpp_z,
            distortion: terms.distortion,
            psnr: terms.psnr,
        };
        let grads = if with_grads && log.loss.is_finite() {
            let g = terms.loss.backward();
            ctx.vars()
                .iter()
                .map(|v| g.get(v).cloned().unwrap_or_else(|| Tensor::zeros(v.shape())))
                .collect()
        } else {
            Vec::new()
        };
        Ok((log, grads))
    }

    /// Loss at the current step without updating anything.
    pub fn probe(&self) -> Result<StepLog> {
        Ok(self.evaluate(self.step, false)?.0)
    }

    fn halt(&self, dir: Option<&Path>) -> S2cError {
        let snapshot = dir.and_then(|d| {
            let p = d.join(format!("nan_step{}.s2ck", self.step));
            let ck = Checkpoint::of_model(&self.model, self.step, Some(&self.adam));
            match ck.save(&p) {
                Ok(()) => Some(p),
                Err(e) => {
                    log::error!("could not write NaN snapshot: {e}");
                    None
                }
            }
        });
        S2cError::NanLoss {
            step: self.step,
            snapshot,
        }
    }

    /// One optimizer update. A non-finite loss or gradient leaves the
    /// parameters untouched and halts with a snapshot under `snapshot_dir`.
    pub fn train_step(&mut self, snapshot_dir: Option<&Path>) -> Result<StepLog> {
        let (log, mut grads) = self.evaluate(self.step, true)?;
        if !log.loss.is_finite() || !grads.iter().all(Tensor::all_finite) {
            return Err(self.halt(snapshot_dir));
        }
        clip_grad_norm(&mut grads, self.config.clip_norm);
        let lr = learning_rate(self.config.lr, self.step, self.config.steps, self.config.cosine);
        self.adam.step(self.model.params.tensors_mut(), &grads, lr);
        self.step += 1;
        Ok(log)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::of_model(&self.model, self.step, Some(&self.adam))
    }

    /// Train until `config.steps`, appending to `metrics.csv` and writing
    /// `step_<k>.s2ck` checkpoints plus `last.s2ck` under `out_dir`.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepLog)) -> Result<TrainSummary> {
        let dir = self.config.out_dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| S2cError::io(&dir, e))?;
        let csv_path = dir.join("metrics.csv");
        let fresh = !csv_path.exists();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&csv_path)
            .map_err(|e| S2cError::io(&csv_path, e))?;
        let mut csv = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        let csv_err = |e: csv::Error| S2cError::Data(format!("{}: {e}", csv_path.display()));

        let start = Instant::now();
        let first = self.step;
        let mut last = None;
        while self.step < self.config.steps {
            let log = self.train_step(Some(&dir))?;
            csv.serialize(log).map_err(csv_err)?;
            on_step(&log);
            last = Some(log);
            let every = self.config.checkpoint_every;
            if every > 0 && self.step % every == 0 && self.step < self.config.steps {
                csv.flush().map_err(|e| S2cError::io(&csv_path, e))?;
                self.checkpoint().save(&dir.join(format!("step_{}.s2ck", self.step)))?;
            }
        }
        csv.flush().map_err(|e| S2cError::io(&csv_path, e))?;
        let ck = dir.join("last.s2ck");
        self.checkpoint().save(&ck)?;
        let steps_run = self.step - first;
        let secs = start.elapsed().as_secs_f64();
        let samples_per_sec = if secs > 0.0 {
            (steps_run * self.config.batch_size as u64) as f64 / secs
        } else {
            0.0
        };
        Ok(TrainSummary {
            last,
            steps_run,
            samples_per_sec,
            checkpoint: ck,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::QuantizerMode;
    use crate::params::Ctx;
    use crate::testutil::{image, tiny_hybrid};
    use crate::training::dataset::tensor_to_rgb;
    use s2c_tensor::ops::gradcheck::finite_difference_report;

    fn source(seed: u64) -> PatchSource {
        let imgs = (0..3).map(|i| tensor_to_rgb(&image(1, 128, 128, i))).collect();
        PatchSource::from_images(imgs, 64, seed).unwrap()
    }

    fn config(dir: &Path, steps: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            patch_size: 64,
            steps,
            lr: 1e-3,
            seed: 5,
            checkpoint_every: 3,
            out_dir: dir.to_path_buf(),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn initial_loss_is_finite_and_positive() {
        let dir = tempfile::tempdir().unwrap();
        let t = Trainer::new(Model::new(tiny_hybrid(), 1).unwrap(), config(dir.path(), 1), source(0)).unwrap();
        let log = t.probe().unwrap();
        assert!(log.loss.is_finite() && log.loss > 0.0, "{log:?}");
        assert!(log.bpp_y > 0.0 && log.bpp_z > 0.0);
        // same seed, same step-0 loss
        let t2 = Trainer::new(Model::new(tiny_hybrid(), 1).unwrap(), config(dir.path(), 1), source(0)).unwrap();
        assert_eq!(t2.probe().unwrap().loss, log.loss);
    }

    #[test]
    fn resumed_run_replays_the_trajectory() {
        let a = tempfile::tempdir().unwrap();
        let mut full = Trainer::new(Model::new(tiny_hybrid(), 2).unwrap(), config(a.path(), 6), source(1)).unwrap();
        let mut straight = Vec::new();
        full.run(|l| straight.push(l.loss)).unwrap();
        assert_eq!(straight.len(), 6);

        let b = tempfile::tempdir().unwrap();
        let ck = Checkpoint::load(&a.path().join("step_3.s2ck")).unwrap();
        assert_eq!(ck.step, 3);
        let mut resumed = Trainer::resume(ck, config(b.path(), 6), source(1)).unwrap();
        let mut tail = Vec::new();
        resumed.run(|l| tail.push(l.loss)).unwrap();
        assert_eq!(tail, straight[3..]);
        assert_eq!(resumed.model.params.tensors(), full.model.params.tensors());

        let rows = std::fs::read_to_string(a.path().join("metrics.csv")).unwrap();
        assert!(rows.starts_with("step,loss,bpp_y,bpp_z,distortion,psnr\n"));
        assert_eq!(rows.lines().count(), 7);
    }

    #[test]
    fn loss_decreases_on_a_fixed_image() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = vec![tensor_to_rgb(&image(1, 64, 64, 3))];
        let mut src = PatchSource::from_images(imgs, 64, 0).unwrap();
        src.flips = false;
        let cfg = TrainConfig {
            flips: false,
            checkpoint_every: 0,
            ..config(dir.path(), 40)
        };
        let mut t = Trainer::new(Model::new(tiny_hybrid(), 4).unwrap(), cfg, src).unwrap();
        let first = t.probe().unwrap().loss;
        t.run(|_| {}).unwrap();
        let last = t.probe().unwrap().loss;
        assert!(last < 0.7 * first, "{first} -> {last}");
    }

    #[test]
    fn nan_halts_with_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(Model::new(tiny_hybrid(), 1).unwrap(), config(dir.path(), 2), source(0)).unwrap();
        t.model.params.tensors_mut()[0].data_mut()[0] = f64::NAN;
        match t.train_step(Some(dir.path())) {
            Err(S2cError::NanLoss { step: 0, snapshot: Some(p) }) => assert!(p.exists()),
            other => panic!("expected NaN halt, got {other:?}"),
        }
    }

    /// Whole-model backward pass against central differences on a sample of
    /// parameters, with pure-noise quantization so the loss is smooth. The
    /// step keeps cancellation noise well below the tolerance.
    #[test]
    fn end_to_end_gradient() {
        let mut cfg = tiny_hybrid();
        cfg.entropy.quantizer = QuantizerMode::Noise;
        let model = Model::new(cfg, 8).unwrap();
        let x = image(1, 64, 64, 2);
        let loss = |vars: &[Var]| {
            let ctx = Ctx::from_vars(vars.to_vec());
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let q = Quantizer::Train {
                rng: &mut rng,
                mode: QuantizerMode::Noise,
            };
            let out = model.forward(&ctx, &Var::constant(x.clone()), q).unwrap();
            rd_loss(&out, &x, 64 * 64, 0.013, Metric::Mse).unwrap().loss
        };
        let mut pick = ChaCha8Rng::seed_from_u64(3);
        let rep = finite_difference_report(model.params.tensors(), loss, 1e-4, |_, _| {
            rand::Rng::gen_bool(&mut pick, 0.01)
        });
        assert!(rep.checked > 50, "{rep:?}");
        assert!(rep.max_rel_err < 1e-2, "{rep:?}");
    }
}

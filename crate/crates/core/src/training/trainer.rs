use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_gradient, AdamState, GradientSet, TrainConfig};
use crate::dataset::{DatasetManifest, Sample, Split};
use crate::error::{Error, Result};
use crate::model::{build_network, FeatureMaps, NetworkWeights};
use crate::scale::Scale;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
    /// Whether this epoch produced a new best validation loss.
    pub best: bool,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub net: NetworkWeights,
    pub best: NetworkWeights,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub stale_epochs: usize,
    pub log: Vec<EpochRecord>,
}

impl TrainState {
    pub fn finished(&self) -> bool {
        self.epoch >= self.config.max_epochs || self.stale_epochs >= self.config.patience
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Best-validation weights, with run metadata.
    pub weights: NetworkWeights,
    pub log: Vec<EpochRecord>,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

pub struct Trainer<'a> {
    state: TrainState,
    train: &'a [Sample],
    val: &'a [Sample],
}

fn common_scale(samples: &[Sample], what: &str) -> Result<Scale> {
    let first = samples
        .first()
        .ok_or_else(|| Error::DataQuality(format!("{what} split is empty")))?;
    if let Some(s) = samples.iter().find(|s| s.scale != first.scale) {
        return Err(Error::Shape(format!(
            "{what} sample {} has scale {} but {} has {}",
            s.id, s.scale, first.id, first.scale
        )));
    }
    Ok(first.scale)
}

/// Pooled MSE of the clamped network output over `samples`.
fn validation_loss(net: &NetworkWeights, samples: &[Sample]) -> Result<f64> {
    let parts: Vec<(f64, usize)> = samples
        .par_iter()
        .map(|s| {
            let pred = net.forward(&s.lr_input)?;
            let sq = pred
                .values()
                .iter()
                .zip(s.hr_target.values())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>();
            Ok((sq, pred.len()))
        })
        .collect::<Result<_>>()?;
    let (sq, n) = parts
        .iter()
        .fold((0.0, 0usize), |(a, n), &(b, m)| (a + b, n + m));
    Ok(sq / n as f64)
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, train: &'a [Sample], val: &'a [Sample]) -> Result<Self> {
        let scale = common_scale(train, "train")?;
        if common_scale(val, "val")? != scale {
            return Err(Error::Shape(
                "train and val splits have different scales".into(),
            ));
        }
        config.validate(scale)?;
        let net = build_network(scale, config.channels, config.seed)?;
        let initial = validation_loss(&net, val)?;
        let state = TrainState {
            config,
            best: net.clone(),
            adam: AdamState::new(net.parameter_count()),
            net,
            epoch: 0,
            initial_val_loss: initial,
            best_val_loss: initial,
            best_epoch: 0,
            stale_epochs: 0,
            log: Vec::new(),
        };
        Ok(Self { state, train, val })
    }

    /// Continue from a checkpointed state.
    pub fn resume(state: TrainState, train: &'a [Sample], val: &'a [Sample]) -> Result<Self> {
        let scale = common_scale(train, "train")?;
        if common_scale(val, "val")? != scale || scale != state.net.scale {
            return Err(Error::Shape(format!(
                "checkpoint was trained at {} but the data is {scale}",
                state.net.scale
            )));
        }
        state.config.validate(scale)?;
        if state.adam.m.len() != state.net.parameter_count() {
            return Err(Error::Shape(
                "optimizer state does not match the network".into(),
            ));
        }
        Ok(Self { state, train, val })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn finished(&self) -> bool {
        self.state.finished()
    }

    fn crop_window(
        &self,
        s: &Sample,
        rng: &mut ChaCha8Rng,
    ) -> Option<(usize, usize, usize, usize)> {
        let crop = self.state.config.crop_size?;
        let f = s.scale.factor();
        let (lw, lh) = s.lr_input.dims();
        let cw = (crop / f).min(lw);
        let ch = (crop / f).min(lh);
        let x0 = rng.random_range(0..=lw - cw);
        let y0 = rng.random_range(0..=lh - ch);
        Some((x0, y0, cw, ch))
    }

    fn sample_job(
        &self,
        s: &Sample,
        window: Option<(usize, usize, usize, usize)>,
    ) -> Result<(f64, GradientSet)> {
        let net = &self.state.net;
        match window {
            None => sample_gradient(
                net,
                &FeatureMaps::from_stack(&s.lr_input),
                s.hr_target.values(),
                self.state.config.loss_on,
            ),
            Some((x0, y0, w, h)) => {
                let f = s.scale.factor();
                let input = s.lr_input.crop(x0, y0, w, h)?;
                let target = s.hr_target.crop(x0 * f, y0 * f, w * f, h * f)?;
                sample_gradient(
                    net,
                    &FeatureMaps::from_stack(&input),
                    target.values(),
                    self.state.config.loss_on,
                )
            }
        }
    }

    /// Run one epoch: shuffled minibatches, Adam steps, validation and
    /// model selection.
    pub fn step_epoch(&mut self) -> Result<&EpochRecord> {
        let start = Instant::now();
        let epoch = self.state.epoch + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.state.config.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(self.state.config.batch_size).enumerate() {
            let jobs: Vec<_> = chunk
                .iter()
                .map(|&i| (i, self.crop_window(&self.train[i], &mut rng)))
                .collect();
            let results: Vec<(f64, GradientSet)> = jobs
                .par_iter()
                .map(|&(i, w)| self.sample_job(&self.train[i], w))
                .collect::<Result<_>>()?;
            let mut grads = GradientSet::zeros_like(&self.state.net);
            let mut batch_loss = 0.0;
            for (l, g) in &results {
                batch_loss += l;
                grads.add_assign(g);
            }
            let n = results.len() as f64;
            grads.scale(1.0 / n);
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: batch_loss / n,
                });
            }
            loss_sum += batch_loss;
            let cfg = self.state.config;
            self.state.adam.step(&mut self.state.net, &grads, &cfg);
        }

        let train_loss = loss_sum / self.train.len() as f64;
        let val_loss = validation_loss(&self.state.net, self.val)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                loss: val_loss,
            });
        }
        let best = val_loss < self.state.best_val_loss;
        if best {
            self.state.best = self.state.net.clone();
            self.state.best_val_loss = val_loss;
            self.state.best_epoch = epoch;
            self.state.stale_epochs = 0;
        } else {
            self.state.stale_epochs += 1;
        }
        self.state.epoch = epoch;
        let seconds = if self.state.config.log_timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}{}",
            if best { " *" } else { "" }
        );
        self.state.log.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds,
            best,
        });
        Ok(self.state.log.last().unwrap())
    }

    /// Train until early stopping or `max_epochs`.
    pub fn run(&mut self) -> Result<()> {
        while !self.finished() {
            self.step_epoch()?;
        }
        Ok(())
    }

    /// Train until `epoch` epochs are complete (or the run finishes first).
    pub fn run_until(&mut self, epoch: usize) -> Result<()> {
        while !self.finished() && self.state.epoch < epoch {
            self.step_epoch()?;
        }
        Ok(())
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn outcome(&self) -> TrainOutcome {
        let s = &self.state;
        let mut weights = s.best.clone();
        let meta = [
            ("seed", s.config.seed.to_string()),
            ("best_epoch", s.best_epoch.to_string()),
            ("epochs_run", s.epoch.to_string()),
            ("best_val_loss", s.best_val_loss.to_string()),
            ("train_samples", self.train.len().to_string()),
            ("val_samples", self.val.len().to_string()),
        ];
        for (k, v) in meta {
            weights.metadata.insert(k.to_string(), v);
        }
        TrainOutcome {
            weights,
            log: s.log.clone(),
            initial_val_loss: s.initial_val_loss,
            best_val_loss: s.best_val_loss,
            best_epoch: s.best_epoch,
            epochs_run: s.epoch,
        }
    }
}

/// Train on in-memory samples to completion.
pub fn train_samples(
    train: &[Sample],
    val: &[Sample],
    config: TrainConfig,
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(config, train, val)?;
    t.run()?;
    Ok(t.outcome())
}

/// Train on the train/val splits of a dataset directory.
pub fn train(
    manifest: &DatasetManifest,
    scale: Scale,
    config: TrainConfig,
) -> Result<TrainOutcome> {
    if manifest.info.scale != scale {
        return Err(Error::Shape(format!(
            "dataset is built for {} but {scale} was requested",
            manifest.info.scale
        )));
    }
    let train = manifest.load_split(Split::Train)?;
    let val = manifest.load_split(Split::Val)?;
    train_samples(&train, &val, config)
}

/// CSV log with columns epoch, train_loss, val_loss, seconds, best_flag.
pub fn write_log_csv(log: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["epoch", "train_loss", "val_loss", "seconds", "best_flag"])
        .map_err(csv_err)?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_loss.to_string(),
            format!("{:.3}", r.seconds),
            (r.best as u8).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

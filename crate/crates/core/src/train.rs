//! SGD training loop: seeded shuffling, one random window per sample per
//! epoch, mini-batched gradient averaging and stepped learning-rate decay.
//!
//! Everything the loop consumes from the random generator — shuffle order,
//! window starts, dropout masks — is drawn from a single seeded stream in a
//! fixed order, so a (seed, config) pair fully determines the run.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::eval::argmax_lowest;
use crate::model::{Model, ModelConfig};
use crate::real::Real;
use crate::sample::{InteractionSample, Window};
use crate::tape::{Tape, NLL_EPSILON};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// Initial learning rate.
    pub lr0: f64,
    /// Epochs between learning-rate decays.
    pub decay_every: usize,
    /// Multiplier applied at each decay.
    pub decay_factor: f64,
    pub epochs: usize,
    /// Window length L drawn from each sample per epoch.
    pub window: usize,
    /// Dropout rate on head inputs during training.
    pub dropout_rate: f64,
    /// Classical momentum; zero gives plain SGD.
    pub momentum: f64,
    /// Windows per parameter update; gradients are averaged.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            decay_every: 10,
            decay_factor: 0.1,
            epochs: 30,
            window: 10,
            dropout_rate: 0.5,
            momentum: 0.0,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::Config(alloc::format!(
                "learning rate {} must be positive",
                self.lr0
            )));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay interval must be positive".into()));
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0) {
            return Err(Error::Config(alloc::format!(
                "decay factor {} must be positive",
                self.decay_factor
            )));
        }
        if self.window == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(alloc::format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(alloc::format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Learning rate used at `epoch`: the initial rate decayed once per
/// completed interval. Computed by repeated multiplication so the decade
/// steps land exactly on the decimal values they are documented as
/// (`0.001 * 0.1 * 0.1` is bit-equal to `1e-5`; `0.001 * 0.1.powi(2)`
/// is not).
pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    let decays = epoch / config.decay_every;
    let mut lr = config.lr0;
    for _ in 0..decays {
        lr *= config.decay_factor;
    }
    lr
}

/// Negative log-likelihood of `label` under `probs`, with the same small
/// floor the training graph applies: `-ln(probs[label] + 1e-12)`.
pub fn nll_loss<F: Real>(probs: &Tensor<F>, label: usize) -> Result<F> {
    if probs.rank() != 1 {
        return Err(Error::Data(alloc::format!(
            "class distribution must be a vector, got shape {:?}",
            probs.shape()
        )));
    }
    if label >= probs.numel() {
        return Err(Error::Data(alloc::format!(
            "label {label} out of range for {} classes",
            probs.numel()
        )));
    }
    Ok(-(probs.data()[label] + F::of(NLL_EPSILON)).ln())
}

/// Draws one training window: a uniformly random start when the sequence
/// is longer than the window, otherwise the whole sequence (padded by
/// repeating the last frame when it is shorter). The generator is consumed
/// only when there is an actual choice to make.
pub fn sample_window<F: Real>(
    sample: &InteractionSample<F>,
    window_len: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Window<F>> {
    if window_len == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    let frames = sample.len();
    if frames == 0 {
        return Err(Error::Data(alloc::format!(
            "sample {} has no frames",
            sample.id
        )));
    }
    let start = if frames > window_len {
        rng.random_range(0..=frames - window_len)
    } else {
        0
    };
    Ok(sample.window(start, window_len))
}

/// Loss, accuracy and learning rate of one epoch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean window loss over the epoch.
    pub loss: f64,
    /// Fraction of windows whose predicted class matched the label.
    pub accuracy: f64,
    pub lr: f64,
}

/// Record of one training run; bit-identical across runs with the same
/// seed, configuration and build.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainLog {
    pub seed: u64,
    /// Hash of the resolved training + model configuration, for pairing
    /// logs with the settings that produced them.
    pub config_hash: u64,
    pub epochs: Vec<EpochStats>,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Stable hash over every field of both configurations.
pub fn config_hash(train: &TrainConfig, model: &ModelConfig) -> u64 {
    let text = alloc::format!(
        "{:?}|{}|{:?}|{}|{}|{:?}|{:?}|{}|{}|{}|{}|{}|{}|{}|{:?}|{:?}|{:?}",
        train.lr0,
        train.decay_every,
        train.decay_factor,
        train.epochs,
        train.window,
        train.dropout_rate,
        train.momentum,
        train.batch_size,
        train.seed,
        model.arch.name(),
        model.hidden,
        model.num_classes,
        model.channels,
        model.side,
        model.dropout_rate,
        model.loss_mode,
        model.peephole,
    );
    fnv1a64(text.as_bytes())
}

/// Trains `model` in place and returns the per-epoch log.
///
/// Each epoch shuffles the dataset, draws one window per sample and steps
/// the trainable parameters after every `batch_size` windows with the
/// batch-averaged gradient. A non-finite loss aborts the run, reporting
/// the epoch, sample and learning rate where it happened.
pub fn train<F: Real>(
    model: &mut Model<F>,
    dataset: &[InteractionSample<F>],
    config: &TrainConfig,
) -> Result<TrainLog> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("training dataset is empty".into()));
    }
    let num_classes = model.config().num_classes;
    for sample in dataset {
        sample.validate()?;
        if sample.label >= num_classes {
            return Err(Error::Data(alloc::format!(
                "sample {} has label {} but the model has {} classes",
                sample.id,
                sample.label,
                num_classes
            )));
        }
    }

    let hash = config_hash(config, model.config());
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let ids: Vec<_> = model.params().ids().collect();
    let mut velocity: Vec<Tensor<F>> = ids
        .iter()
        .map(|id| Tensor::zeros(model.params().value(*id).shape().to_vec()))
        .collect();
    let mut log = TrainLog {
        seed: config.seed,
        config_hash: hash,
        epochs: Vec::with_capacity(config.epochs),
    };

    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch);
        let lr_f = F::of(lr);
        let momentum = F::of(config.momentum);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0_f64;
        let mut correct = 0_usize;
        for batch in order.chunks(config.batch_size) {
            model.params_mut().zero_grads();
            for &index in batch {
                let sample = &dataset[index];
                let window = sample_window(sample, config.window, &mut rng)?;
                let mut tape = Tape::new();
                let dropout = if config.dropout_rate > 0.0 {
                    Some((config.dropout_rate, &mut rng))
                } else {
                    None
                };
                let (loss, probs) = model.training_loss(&mut tape, &window, sample.label, dropout)?;
                let loss_value = tape.value(loss).scalar_value();
                if !loss_value.is_finite() {
                    return Err(Error::TrainDiverged {
                        epoch,
                        sample: sample.id.clone(),
                        lr,
                    });
                }
                loss_sum += loss_value.as_f64();
                if argmax_lowest(tape.value(probs).data()) == sample.label {
                    correct += 1;
                }
                tape.backward(loss, model.params_mut())?;
            }
            model
                .params_mut()
                .scale_grads(F::one() / F::of(batch.len() as f64));
            for (slot, id) in ids.iter().enumerate() {
                if model.params().trainable(*id) {
                    model
                        .params_mut()
                        .sgd_step(*id, lr_f, momentum, &mut velocity[slot]);
                }
            }
        }

        log.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / dataset.len() as f64,
            accuracy: correct as f64 / dataset.len() as f64,
            lr,
        });
    }

    Ok(log)
}

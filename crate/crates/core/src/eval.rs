//! The early-prediction protocol: truncate each test sequence to an
//! observation ratio, slide fixed-length windows over the prefix with a
//! stride, average the window class distributions, and score the argmax.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::real::Real;
use crate::sample::InteractionSample;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalConfig {
    /// Fractions of each sequence visible to the model, ascending, each
    /// in (0, 1].
    pub observation_ratios: Vec<f64>,
    /// Offset between consecutive window starts.
    pub stride: usize,
    /// Window length fed to the model.
    pub window: usize,
}

impl Default for EvalConfig {
    /// Ratios 0.1, 0.2, …, 1.0 with stride 5 and window length 10.
    fn default() -> Self {
        Self {
            observation_ratios: (1..=10).map(|i| i as f64 / 10.0).collect(),
            stride: 5,
            window: 10,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.observation_ratios.is_empty() {
            return Err(Error::Config("no observation ratios given".into()));
        }
        for &r in &self.observation_ratios {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Config(alloc::format!(
                    "observation ratio {r} outside (0, 1]"
                )));
            }
        }
        if !self
            .observation_ratios
            .windows(2)
            .all(|pair| pair[0] < pair[1])
        {
            return Err(Error::Config(
                "observation ratios must be strictly ascending".into(),
            ));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        Ok(())
    }
}

/// Number of frames visible at `ratio`: ⌈ratio·frames⌉, at least one
/// frame, never more than the sequence. The product is nudged down by
/// 1e-9 before the ceiling so that decimal ratios hitting an integer
/// exactly in real arithmetic (0.1 · 30 = 3) are not pushed up a frame by
/// floating-point round-off.
pub fn truncate_len(frames: usize, ratio: f64) -> usize {
    let raw = Float::ceil(ratio * frames as f64 - 1e-9) as usize;
    raw.clamp(1, frames.max(1))
}

/// Prefix of `sample` visible at observation ratio `ratio` ∈ (0, 1].
pub fn truncate<F: Real>(sample: &InteractionSample<F>, ratio: f64) -> Result<InteractionSample<F>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(alloc::format!(
            "observation ratio {ratio} outside (0, 1]"
        )));
    }
    Ok(sample.prefix(truncate_len(sample.len(), ratio)))
}

/// Window start offsets over a prefix of `frames` frames: 0, stride,
/// 2·stride, … as long as the full window fits. Empty when even the first
/// window does not fit.
pub fn window_starts(frames: usize, window_len: usize, stride: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 0;
    while s + window_len <= frames {
        starts.push(s);
        s += stride;
    }
    starts
}

/// Index of the largest value, ties broken toward the lowest index.
pub fn argmax_lowest<F: Real>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class distribution for one observed prefix: the arithmetic mean of the
/// model's distribution over every stride-spaced window. When no full
/// window fits the prefix, a single window padded by repeating the last
/// frame stands in.
pub fn predict_prefix<F: Real>(
    model: &Model<F>,
    prefix: &InteractionSample<F>,
    window_len: usize,
    stride: usize,
) -> Result<Tensor<F>> {
    if prefix.len() == 0 {
        return Err(Error::Data(alloc::format!(
            "sample {} has no frames",
            prefix.id
        )));
    }
    let mut starts = window_starts(prefix.len(), window_len, stride);
    if starts.is_empty() {
        starts.push(0);
    }
    let count = starts.len();
    let mut sum: Option<Tensor<F>> = None;
    for start in starts {
        let window = prefix.window(start, window_len);
        let probs = model.predict(&window)?.probs;
        sum = Some(match sum {
            None => probs,
            Some(mut acc) => {
                for (a, p) in acc.data_mut().iter_mut().zip(probs.data()) {
                    *a += *p;
                }
                acc
            }
        });
    }
    let mut mean = sum.expect("at least one window");
    let inv = F::one() / F::of(count as f64);
    for v in mean.data_mut() {
        *v *= inv;
    }
    Ok(mean)
}

/// One test sample's outcome at one observation ratio.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleOutcome {
    pub id: String,
    pub label: usize,
    pub predicted: usize,
    pub probs: Vec<f64>,
}

/// Aggregate results at one observation ratio.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatioReport {
    pub ratio: f64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[label][predicted]` counts; rows sum to class counts.
    pub confusion: Vec<Vec<usize>>,
    pub samples: Vec<SampleOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub ratios: Vec<RatioReport>,
}

impl EvalReport {
    /// Accuracy at each ratio, in the order evaluated.
    pub fn accuracy_curve(&self) -> Vec<(f64, f64)> {
        self.ratios.iter().map(|r| (r.ratio, r.accuracy)).collect()
    }
}

/// Scores `model` on `dataset` at every configured observation ratio.
pub fn evaluate<F: Real>(
    model: &Model<F>,
    dataset: &[InteractionSample<F>],
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("evaluation dataset is empty".into()));
    }
    let classes = model.config().num_classes;
    for sample in dataset {
        sample.validate()?;
        if sample.label >= classes {
            return Err(Error::Data(alloc::format!(
                "sample {} has label {} but the model has {} classes",
                sample.id,
                sample.label,
                classes
            )));
        }
    }

    let mut ratios = Vec::with_capacity(config.observation_ratios.len());
    for &ratio in &config.observation_ratios {
        let mut confusion = vec![vec![0_usize; classes]; classes];
        let mut samples = Vec::with_capacity(dataset.len());
        let mut correct = 0;
        for sample in dataset {
            let prefix = truncate(sample, ratio)?;
            let probs = predict_prefix(model, &prefix, config.window, config.stride)?;
            let predicted = argmax_lowest(probs.data());
            if predicted == sample.label {
                correct += 1;
            }
            confusion[sample.label][predicted] += 1;
            samples.push(SampleOutcome {
                id: sample.id.clone(),
                label: sample.label,
                predicted,
                probs: probs.data().iter().map(|p| p.as_f64()).collect(),
            });
        }
        ratios.push(RatioReport {
            ratio,
            accuracy: correct as f64 / dataset.len() as f64,
            correct,
            total: dataset.len(),
            confusion,
            samples,
        });
    }
    Ok(EvalReport { ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::PeepholeMode;
    use crate::model::{Arch, LossMode, ModelConfig};
    use crate::sample::FeatureMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn tiny_model(seed: u64) -> Model<f64> {
        let config = ModelConfig {
            arch: Arch::Coupled,
            hidden: 4,
            num_classes: 3,
            channels: 2,
            side: 2,
            dropout_rate: 0.0,
            loss_mode: LossMode::LastStep,
            peephole: PeepholeMode::Full,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Model::new(config, &mut rng).unwrap()
    }

    fn random_sample(rng: &mut ChaCha12Rng, id: &str, label: usize, frames: usize) -> InteractionSample<f64> {
        let mut stream = || -> Vec<FeatureMap<f64>> {
            (0..frames)
                .map(|_| {
                    let data = (0..4 * 2).map(|_| rng.random::<f64>()).collect();
                    FeatureMap::new(2, 2, Tensor::new(vec![4, 2], data).unwrap()).unwrap()
                })
                .collect()
        };
        InteractionSample {
            id: id.into(),
            label,
            single_actor: false,
            subject1: stream(),
            subject2: stream(),
            global: stream(),
        }
    }

    #[test]
    fn truncation_counts_match_the_ceiling_rule() {
        assert_eq!(truncate_len(30, 0.5), 15);
        assert_eq!(truncate_len(30, 1.0), 30);
        assert_eq!(truncate_len(7, 0.1), 1);
        // 0.1 · 30 lands a hair above 3.0 in floating point; the nudge
        // keeps the ceiling at the real-arithmetic value.
        assert_eq!(truncate_len(30, 0.1), 3);
        assert_eq!(truncate_len(10, 0.25), 3);
        for t in 1..=50 {
            assert_eq!(truncate_len(t, 1.0), t);
        }
    }

    #[test]
    fn out_of_range_ratios_are_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let sample = random_sample(&mut rng, "s", 0, 5);
        for r in [0.0, -0.5, 1.5] {
            assert!(truncate(&sample, r).is_err());
        }
        let full = truncate(&sample, 1.0).unwrap();
        assert_eq!(full.len(), sample.len());
        assert_eq!(full.subject1, sample.subject1);
    }

    #[test]
    fn window_starts_follow_the_stride_progression() {
        assert_eq!(window_starts(20, 10, 5), vec![0, 5, 10]);
        assert_eq!(window_starts(10, 10, 5), vec![0]);
        assert_eq!(window_starts(9, 10, 5), Vec::<usize>::new());
        assert_eq!(window_starts(26, 10, 5), vec![0, 5, 10, 15]);
        assert_eq!(window_starts(5, 2, 3), vec![0, 3]);
    }

    #[test]
    fn window_starts_agree_with_brute_force() {
        for frames in 0..40 {
            for window in 1..12 {
                for stride in 1..8 {
                    let brute: Vec<usize> = (0..frames)
                        .filter(|s| s % stride == 0 && s + window <= frames)
                        .collect();
                    assert_eq!(window_starts(frames, window, stride), brute);
                }
            }
        }
    }

    #[test]
    fn single_window_prefix_returns_its_exact_distribution() {
        let model = tiny_model(2);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let sample = random_sample(&mut rng, "one", 1, 10);
        let direct = model.predict(&sample.window(0, 10)).unwrap().probs;
        let averaged = predict_prefix(&model, &sample, 10, 5).unwrap();
        assert_eq!(direct.data(), averaged.data());
    }

    #[test]
    fn short_prefixes_fall_back_to_one_padded_window() {
        let model = tiny_model(4);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let sample = random_sample(&mut rng, "short", 0, 3);
        let padded = predict_prefix(&model, &sample, 10, 5).unwrap();
        let manual = model.predict(&sample.window(0, 10)).unwrap().probs;
        assert_eq!(padded.data(), manual.data());
    }

    #[test]
    fn full_ratio_matches_untruncated_scoring() {
        let model = tiny_model(6);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let dataset: Vec<_> = (0..6)
            .map(|i| random_sample(&mut rng, &alloc::format!("s{i}"), i % 3, 14 + i))
            .collect();
        let config = EvalConfig {
            observation_ratios: vec![1.0],
            ..EvalConfig::default()
        };
        let report = evaluate(&model, &dataset, &config).unwrap();
        for (sample, outcome) in dataset.iter().zip(&report.ratios[0].samples) {
            let direct = predict_prefix(&model, sample, 10, 5).unwrap();
            let direct: Vec<f64> = direct.data().to_vec();
            assert_eq!(direct, outcome.probs);
        }
    }

    #[test]
    fn confusion_trace_reproduces_accuracy() {
        let model = tiny_model(8);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let dataset: Vec<_> = (0..9)
            .map(|i| random_sample(&mut rng, &alloc::format!("s{i}"), i % 3, 12))
            .collect();
        let report = evaluate(&model, &dataset, &EvalConfig::default()).unwrap();
        assert_eq!(report.ratios.len(), 10);
        for ratio in &report.ratios {
            let trace: usize = (0..3).map(|i| ratio.confusion[i][i]).sum();
            assert_eq!(trace, ratio.correct);
            assert_eq!(ratio.accuracy, trace as f64 / 9.0);
            let row_sums: Vec<usize> = ratio.confusion.iter().map(|r| r.iter().sum()).collect();
            assert_eq!(row_sums, vec![3, 3, 3]);
        }
    }

    #[test]
    fn uniform_distributions_predict_class_zero() {
        let mut model = tiny_model(10);
        for id in model.params().ids().collect::<Vec<_>>() {
            for v in model.params_mut().value_mut(id).data_mut() {
                *v = 0.0;
            }
        }
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let dataset: Vec<_> = (0..6)
            .map(|i| random_sample(&mut rng, &alloc::format!("s{i}"), i % 3, 12))
            .collect();
        let config = EvalConfig {
            observation_ratios: vec![0.5, 1.0],
            ..EvalConfig::default()
        };
        let report = evaluate(&model, &dataset, &config).unwrap();
        for ratio in &report.ratios {
            assert!(ratio.samples.iter().all(|s| s.predicted == 0));
            // Exactly the class-0 samples are counted correct.
            assert_eq!(ratio.accuracy, 2.0 / 6.0);
        }
    }

    #[test]
    fn report_is_invariant_to_dataset_order() {
        let model = tiny_model(12);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let dataset: Vec<_> = (0..8)
            .map(|i| random_sample(&mut rng, &alloc::format!("s{i}"), i % 3, 11 + i % 4))
            .collect();
        let mut reversed = dataset.clone();
        reversed.reverse();
        let config = EvalConfig {
            observation_ratios: vec![0.3, 0.7],
            ..EvalConfig::default()
        };
        let a = evaluate(&model, &dataset, &config).unwrap();
        let b = evaluate(&model, &reversed, &config).unwrap();
        for (ra, rb) in a.ratios.iter().zip(&b.ratios) {
            assert_eq!(ra.accuracy, rb.accuracy);
            assert_eq!(ra.confusion, rb.confusion);
        }
    }

    #[test]
    fn ties_break_toward_the_lowest_index() {
        assert_eq!(argmax_lowest(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax_lowest(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax_lowest(&[0.1, 0.2, 0.7]), 2);
        assert_eq!(argmax_lowest(&[3.0]), 0);
    }

    #[test]
    fn misordered_ratio_lists_are_rejected() {
        let bad = EvalConfig {
            observation_ratios: vec![0.5, 0.3],
            ..EvalConfig::default()
        };
        assert!(bad.validate().is_err());
        let dup = EvalConfig {
            observation_ratios: vec![0.5, 0.5],
            ..EvalConfig::default()
        };
        assert!(dup.validate().is_err());
        assert!(EvalConfig::default().validate().is_ok());
    }
}

//! Synthetic two-subject interaction datasets.
//!
//! Each sample imitates pre-extracted video features: per subject, a
//! `[T, D^2, K]` stream of Gaussian noise with a class-dependent sinusoidal
//! signal injected at one designated grid location, held fixed for the whole
//! sample and recorded in the manifest as the ground-truth trajectory. The
//! global stream is the downweighted sum of the two subject streams plus
//! fresh noise, mimicking a whole-scene view.
//!
//! Two labelling modes:
//!
//! * plain: both subjects carry the pattern of the sample's class, so any
//!   single stream suffices to classify;
//! * relational: subject patterns `p1` cycle uniformly within each class
//!   and `p2 = (p1 + label) mod P`, so the label is the *difference* of the
//!   two patterns. Each subject's pattern histogram is then identical
//!   (uniform) for every label, which makes either stream alone carry zero
//!   information about the label; only the pair decides it.
//!
//! Generation is a pure function of the spec: one seeded generator, draws
//! in a fixed documented order.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tcra_core::sample::{FeatureMap, InteractionSample};
use tcra_core::Tensor;

use crate::manifest::{Dims, GroundTruth, Manifest, SampleEntry, StreamPaths};
use crate::tensor_file;
use crate::{Error, Result};

/// Baseline offset of the injected signal.
pub const SIGNAL_BASE: f64 = 2.0;
/// Amplitude of the sinusoidal part.
pub const SIGNAL_AMP: f64 = 3.0;
/// Frame count of one full period of the slowest pattern.
pub const SIGNAL_PERIOD: f64 = 16.0;
/// Weight of each subject stream inside the global stream.
pub const GLOBAL_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// Inclusive frame-count range; each sample draws T uniformly from it.
    pub t_min: usize,
    pub t_max: usize,
    /// Channels per grid location (K).
    pub channels: usize,
    /// Grid side length (D).
    pub side: usize,
    /// Standard deviation of the Gaussian background.
    pub noise_sigma: f64,
    /// Label the pattern pair's difference instead of the pattern itself.
    #[serde(default)]
    pub relational: bool,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::Core(tcra_core::Error::Config(msg));
        if self.num_classes < 2 {
            return Err(bad("need at least 2 classes".into()));
        }
        if self.samples_per_class == 0 {
            return Err(bad("need at least 1 sample per class".into()));
        }
        if self.t_min == 0 || self.t_min > self.t_max {
            return Err(bad(format!(
                "frame range [{}, {}] must be non-empty and start at 1 or more",
                self.t_min, self.t_max
            )));
        }
        if self.channels == 0 || self.side == 0 {
            return Err(bad("channels and side must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(bad(format!("noise sigma {} must be finite and >= 0", self.noise_sigma)));
        }
        if self.relational && self.samples_per_class % self.num_classes != 0 {
            return Err(bad(format!(
                "relational mode needs samples_per_class ({}) divisible by num_classes ({}) \
                 so per-class pattern histograms come out exactly uniform",
                self.samples_per_class, self.num_classes
            )));
        }
        Ok(())
    }
}

/// The injected signal of pattern `p` at frame `t`: a constant lift plus a
/// sinusoid whose frequency grows with the pattern id, so patterns differ
/// in their temporal profile rather than in any single frame.
pub fn signal(pattern: usize, t: usize) -> f64 {
    let phase = 2.0 * std::f64::consts::PI * (pattern as f64 + 1.0) * t as f64 / SIGNAL_PERIOD;
    SIGNAL_BASE + SIGNAL_AMP * phase.sin()
}

/// Subject pattern ids for sample `index_in_class` of class `label`.
fn patterns(spec: &SyntheticSpec, label: usize, index_in_class: usize) -> (usize, usize) {
    if spec.relational {
        let p1 = index_in_class % spec.num_classes;
        let p2 = (p1 + label) % spec.num_classes;
        (p1, p2)
    } else {
        (label, label)
    }
}

/// One stream as a flat `[T, D^2, K]` buffer.
struct StreamBuf {
    frames: usize,
    locations: usize,
    channels: usize,
    data: Vec<f64>,
}

impl StreamBuf {
    fn noise(rng: &mut ChaCha12Rng, dist: &Normal<f64>, frames: usize, locations: usize, channels: usize) -> Self {
        let data = (0..frames * locations * channels)
            .map(|_| dist.sample(rng))
            .collect();
        Self {
            frames,
            locations,
            channels,
            data,
        }
    }

    /// Adds the pattern signal to every channel of one location per frame.
    fn inject(&mut self, pattern: usize, location: usize) {
        for t in 0..self.frames {
            let s = signal(pattern, t);
            let base = (t * self.locations + location) * self.channels;
            for c in 0..self.channels {
                self.data[base + c] += s;
            }
        }
    }

    fn into_maps(self, side: usize) -> Vec<FeatureMap<f64>> {
        let per_frame = self.locations * self.channels;
        (0..self.frames)
            .map(|t| {
                let values = Tensor::new(
                    vec![self.locations, self.channels],
                    self.data[t * per_frame..(t + 1) * per_frame].to_vec(),
                )
                .expect("buffer length matches shape");
                FeatureMap::new(side, self.channels, values).expect("shape by construction")
            })
            .collect()
    }
}

/// Generates the dataset in memory.
///
/// Draw order per sample (samples visited class-major, then by index):
/// frame count, subject-1 location, subject-2 location, subject-1 noise,
/// subject-2 noise, global noise. Everything else is deterministic in the
/// spec, so two calls with equal specs agree bit for bit.
pub fn generate(spec: &SyntheticSpec) -> Result<(Manifest, Vec<InteractionSample<f64>>)> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::Core(tcra_core::Error::Config(format!("noise distribution: {e}"))))?;
    let locations = spec.side * spec.side;
    let dims = Dims {
        k: spec.channels,
        d: spec.side,
    };

    let mut entries = Vec::new();
    let mut samples = Vec::new();
    for label in 0..spec.num_classes {
        for j in 0..spec.samples_per_class {
            let id = format!("c{label}_s{j:03}");
            let frames = rng.random_range(spec.t_min..=spec.t_max);
            let loc1 = rng.random_range(0..locations);
            let loc2 = rng.random_range(0..locations);
            let (p1, p2) = patterns(spec, label, j);

            let mut s1 = StreamBuf::noise(&mut rng, &noise, frames, locations, spec.channels);
            s1.inject(p1, loc1);
            let mut s2 = StreamBuf::noise(&mut rng, &noise, frames, locations, spec.channels);
            s2.inject(p2, loc2);
            let mut g = StreamBuf::noise(&mut rng, &noise, frames, locations, spec.channels);
            for (out, (a, b)) in g.data.iter_mut().zip(s1.data.iter().zip(&s2.data)) {
                *out += GLOBAL_WEIGHT * (a + b);
            }

            entries.push(SampleEntry {
                id: id.clone(),
                label,
                frames,
                single_actor: false,
                paths: StreamPaths {
                    subject1: format!("features/{id}_subject1.tcra"),
                    subject2: format!("features/{id}_subject2.tcra"),
                    global: format!("features/{id}_global.tcra"),
                },
                ground_truth: Some(GroundTruth {
                    pattern_subject1: p1,
                    pattern_subject2: p2,
                    trajectory_subject1: vec![loc1; frames],
                    trajectory_subject2: vec![loc2; frames],
                }),
            });
            samples.push(InteractionSample {
                id,
                label,
                single_actor: false,
                subject1: s1.into_maps(spec.side),
                subject2: s2.into_maps(spec.side),
                global: g.into_maps(spec.side),
            });
        }
    }

    let manifest = Manifest {
        class_names: (0..spec.num_classes).map(|c| format!("class{c}")).collect(),
        dims,
        samples: entries,
        folds: None,
    };
    Ok((manifest, samples))
}

/// Concatenates one stream's frames back into a `[T, D^2, K]` tensor.
fn stream_tensor(maps: &[FeatureMap<f64>]) -> Tensor<f64> {
    let locations = maps[0].side() * maps[0].side();
    let channels = maps[0].channels();
    let mut data = Vec::with_capacity(maps.len() * locations * channels);
    for map in maps {
        data.extend_from_slice(map.values().data());
    }
    Tensor::new(vec![maps.len(), locations, channels], data).expect("aligned frames")
}

/// Generates and writes the dataset under `root` in the standard layout.
pub fn generate_to_dir(spec: &SyntheticSpec, root: &Path) -> Result<Manifest> {
    let (manifest, samples) = generate(spec)?;
    let features = root.join("features");
    fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
    for (entry, sample) in manifest.samples.iter().zip(&samples) {
        let streams = [
            (&entry.paths.subject1, &sample.subject1),
            (&entry.paths.subject2, &sample.subject2),
            (&entry.paths.global, &sample.global),
        ];
        for (rel, maps) in streams {
            tensor_file::write_f64(&root.join(rel), &stream_tensor(maps))?;
        }
    }
    crate::manifest::save_manifest(root, &manifest)?;
    Ok(manifest)
}

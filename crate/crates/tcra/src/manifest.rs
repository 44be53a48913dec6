//! Dataset manifest: a JSON index describing every sample of a dataset and
//! where its feature tensors live.
//!
//! Layout on disk:
//!
//! ```text
//! <root>/manifest.json
//! <root>/features/<id>_subject1.tcra   one [T, D^2, K] tensor per stream
//! <root>/features/<id>_subject2.tcra
//! <root>/features/<id>_global.tcra
//! ```
//!
//! Paths inside the manifest are relative to `<root>`. A sample flagged
//! `single_actor` may leave its `subject2` path empty; the loader then
//! fills the second stream with a copy of the first.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcra_core::model::duplicate_single_actor;
use tcra_core::sample::{FeatureMap, InteractionSample};
use tcra_core::Tensor;

use crate::tensor_file;
use crate::{Error, Result};

/// Grid geometry shared by all streams: K channels over a D x D grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Channels per location.
    pub k: usize,
    /// Grid side length.
    pub d: usize,
}

/// Locations of the three per-stream tensor files, relative to the dataset
/// root. An empty `subject2` is allowed only for single-actor samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPaths {
    pub subject1: String,
    pub subject2: String,
    pub global: String,
}

/// Where the class signal actually sits, for datasets that know it. The
/// trajectory lists one grid location index per frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pattern_subject1: usize,
    pub pattern_subject2: usize,
    pub trajectory_subject1: Vec<usize>,
    pub trajectory_subject2: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub label: usize,
    /// Frame count.
    #[serde(rename = "T")]
    pub frames: usize,
    #[serde(default)]
    pub single_actor: bool,
    pub paths: StreamPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub class_names: Vec<String>,
    pub dims: Dims,
    pub samples: Vec<SampleEntry>,
    /// Optional cross-validation split: each fold is a list of sample ids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<Vec<Vec<String>>>,
}

impl Manifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Structural checks that need no file reads: non-empty classes,
    /// positive dims, labels in range, unique ids, fold ids that exist.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::Core(tcra_core::Error::Data(msg));
        if self.class_names.is_empty() {
            return Err(bad("manifest has no classes".into()));
        }
        if self.dims.k == 0 || self.dims.d == 0 {
            return Err(bad(format!(
                "manifest dims must be positive, got k={} d={}",
                self.dims.k, self.dims.d
            )));
        }
        let mut seen = BTreeSet::new();
        for s in &self.samples {
            if s.label >= self.num_classes() {
                return Err(bad(format!(
                    "sample {} has label {} but there are only {} classes",
                    s.id,
                    s.label,
                    self.num_classes()
                )));
            }
            if s.frames == 0 {
                return Err(bad(format!("sample {} has zero frames", s.id)));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(bad(format!("duplicate sample id {}", s.id)));
            }
            if s.paths.subject2.is_empty() && !s.single_actor {
                return Err(bad(format!(
                    "sample {} omits subject2 but is not single-actor",
                    s.id
                )));
            }
        }
        if let Some(folds) = &self.folds {
            for (i, fold) in folds.iter().enumerate() {
                for id in fold {
                    if !seen.contains(id.as_str()) {
                        return Err(bad(format!("fold {i} names unknown sample {id}")));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.json")
}

pub fn load_manifest(root: &Path) -> Result<Manifest> {
    let path = manifest_path(root);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    let path = manifest_path(root);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads one stream tensor and splits it into per-frame feature maps,
/// checking the `[T, D^2, K]` shape against the manifest.
fn load_stream(
    root: &Path,
    dims: Dims,
    frames: usize,
    rel: &str,
) -> Result<Vec<FeatureMap<f64>>> {
    let path = root.join(rel);
    let tensor = tensor_file::read(&path)?.into_f64();
    let expected = [frames, dims.d * dims.d, dims.k];
    if tensor.shape() != expected {
        return Err(Error::format(
            &path,
            0,
            format!("stream tensor has shape {:?}, manifest says {:?}", tensor.shape(), expected),
        ));
    }
    let per_frame = dims.d * dims.d * dims.k;
    (0..frames)
        .map(|t| {
            let data = tensor.data()[t * per_frame..(t + 1) * per_frame].to_vec();
            let values = Tensor::new(vec![dims.d * dims.d, dims.k], data).map_err(Error::Core)?;
            FeatureMap::new(dims.d, dims.k, values).map_err(Error::Core)
        })
        .collect()
}

/// Loads one sample's streams into memory.
pub fn load_sample(root: &Path, dims: Dims, entry: &SampleEntry) -> Result<InteractionSample<f64>> {
    let subject1 = load_stream(root, dims, entry.frames, &entry.paths.subject1)?;
    let subject2 = if entry.paths.subject2.is_empty() {
        Vec::new()
    } else {
        load_stream(root, dims, entry.frames, &entry.paths.subject2)?
    };
    let global = load_stream(root, dims, entry.frames, &entry.paths.global)?;
    let mut sample = InteractionSample {
        id: entry.id.clone(),
        label: entry.label,
        single_actor: entry.single_actor,
        subject1,
        subject2,
        global,
    };
    if sample.subject2.is_empty() {
        duplicate_single_actor(&mut sample)?;
    }
    sample.validate()?;
    Ok(sample)
}

/// Loads the whole dataset under `root`.
pub fn load_dataset(root: &Path) -> Result<(Manifest, Vec<InteractionSample<f64>>)> {
    let manifest = load_manifest(root)?;
    let samples = manifest
        .samples
        .iter()
        .map(|entry| load_sample(root, manifest.dims, entry))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Splits loaded samples by fold membership: fold `i` becomes the held-out
/// test set, everything else trains.
pub fn fold_split<'a>(
    manifest: &Manifest,
    samples: &'a [InteractionSample<f64>],
    fold: usize,
) -> Result<(Vec<&'a InteractionSample<f64>>, Vec<&'a InteractionSample<f64>>)> {
    let folds = manifest.folds.as_ref().ok_or_else(|| {
        Error::Core(tcra_core::Error::Data("manifest declares no folds".into()))
    })?;
    if fold >= folds.len() {
        return Err(Error::Core(tcra_core::Error::Data(format!(
            "fold {fold} out of range, manifest has {}",
            folds.len()
        ))));
    }
    let held: BTreeSet<&str> = folds[fold].iter().map(String::as_str).collect();
    let (test, train): (Vec<_>, Vec<_>) = samples
        .iter()
        .partition(|s| held.contains(s.id.as_str()));
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_manifest() -> Manifest {
        Manifest {
            class_names: vec!["wave".into(), "push".into()],
            dims: Dims { k: 2, d: 2 },
            samples: vec![SampleEntry {
                id: "a0".into(),
                label: 1,
                frames: 3,
                single_actor: false,
                paths: StreamPaths {
                    subject1: "features/a0_subject1.tcra".into(),
                    subject2: "features/a0_subject2.tcra".into(),
                    global: "features/a0_global.tcra".into(),
                },
                ground_truth: None,
            }],
            folds: None,
        }
    }

    fn write_stream(root: &Path, rel: &str, frames: usize, dims: Dims, fill: f64) {
        let path = root.join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        let numel = frames * dims.d * dims.d * dims.k;
        let data: Vec<f64> = (0..numel).map(|i| fill + i as f64).collect();
        let t = Tensor::new(vec![frames, dims.d * dims.d, dims.k], data).unwrap();
        tensor_file::write_f64(&path, &t).unwrap();
    }

    #[test]
    fn json_round_trip_preserves_field_names() {
        let m = tiny_manifest();
        let text = serde_json::to_string(&m).unwrap();
        // Frame counts are stored under the capital-T key.
        assert!(text.contains("\"T\":3"), "{text}");
        assert!(text.contains("\"single_actor\":false"), "{text}");
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let mut m = tiny_manifest();
        m.samples[0].label = 2;
        assert!(m.validate().is_err());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut m = tiny_manifest();
        let again = m.samples[0].clone();
        m.samples.push(again);
        assert!(m.validate().is_err());
    }

    #[test]
    fn empty_subject2_requires_single_actor_flag() {
        let mut m = tiny_manifest();
        m.samples[0].paths.subject2.clear();
        assert!(m.validate().is_err());
        m.samples[0].single_actor = true;
        assert!(m.validate().is_ok());
    }

    #[test]
    fn fold_with_unknown_id_is_rejected() {
        let mut m = tiny_manifest();
        m.folds = Some(vec![vec!["a0".into()], vec!["ghost".into()]]);
        assert!(m.validate().is_err());
        m.folds = Some(vec![vec!["a0".into()]]);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn dataset_round_trip_loads_frames_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let m = tiny_manifest();
        write_stream(root, "features/a0_subject1.tcra", 3, m.dims, 0.0);
        write_stream(root, "features/a0_subject2.tcra", 3, m.dims, 100.0);
        write_stream(root, "features/a0_global.tcra", 3, m.dims, 200.0);
        save_manifest(root, &m).unwrap();

        let (back, samples) = load_dataset(root).unwrap();
        assert_eq!(back, m);
        assert_eq!(samples.len(), 1);
        let s = &samples[0];
        assert_eq!(s.len(), 3);
        assert_eq!(s.label, 1);
        // Frame 1 of subject1 starts where frame 0 left off: 8 values per
        // frame, row-major.
        assert_eq!(s.subject1[0].location(0), &[0.0, 1.0]);
        assert_eq!(s.subject1[1].location(0), &[8.0, 9.0]);
        assert_eq!(s.subject2[0].location(0), &[100.0, 101.0]);
    }

    #[test]
    fn single_actor_sample_duplicates_first_subject() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let mut m = tiny_manifest();
        m.samples[0].single_actor = true;
        m.samples[0].paths.subject2.clear();
        write_stream(root, "features/a0_subject1.tcra", 3, m.dims, 0.0);
        write_stream(root, "features/a0_global.tcra", 3, m.dims, 200.0);
        save_manifest(root, &m).unwrap();

        let (_, samples) = load_dataset(root).unwrap();
        assert_eq!(samples[0].subject2, samples[0].subject1);
    }

    #[test]
    fn wrong_stream_shape_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let m = tiny_manifest();
        // Two frames on disk, manifest says three.
        write_stream(root, "features/a0_subject1.tcra", 2, m.dims, 0.0);
        write_stream(root, "features/a0_subject2.tcra", 3, m.dims, 100.0);
        write_stream(root, "features/a0_global.tcra", 3, m.dims, 200.0);
        save_manifest(root, &m).unwrap();

        match load_dataset(root).unwrap_err() {
            Error::Format { message, .. } => assert!(message.contains("manifest says"), "{message}"),
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn fold_split_partitions_samples() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let mut m = tiny_manifest();
        let mut b = m.samples[0].clone();
        b.id = "b0".into();
        b.label = 0;
        b.paths = StreamPaths {
            subject1: "features/b0_subject1.tcra".into(),
            subject2: "features/b0_subject2.tcra".into(),
            global: "features/b0_global.tcra".into(),
        };
        m.samples.push(b);
        m.folds = Some(vec![vec!["a0".into()], vec!["b0".into()]]);
        for id in ["a0", "b0"] {
            for stream in ["subject1", "subject2", "global"] {
                write_stream(root, &format!("features/{id}_{stream}.tcra"), 3, m.dims, 0.0);
            }
        }
        save_manifest(root, &m).unwrap();

        let (manifest, samples) = load_dataset(root).unwrap();
        let (train, test) = fold_split(&manifest, &samples, 0).unwrap();
        assert_eq!(test.len(), 1);
        assert_eq!(test[0].id, "a0");
        assert_eq!(train.len(), 1);
        assert_eq!(train[0].id, "b0");
        assert!(fold_split(&manifest, &samples, 2).is_err());
    }

    #[test]
    fn malformed_json_is_a_json_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(manifest_path(dir.path()), "{not json").unwrap();
        match load_manifest(dir.path()).unwrap_err() {
            Error::Json { .. } => {}
            other => panic!("wrong error {other:?}"),
        }
    }
}

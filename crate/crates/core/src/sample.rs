//! Feature containers for one two-subject interaction video.
//!
//! A frame is represented by one [`FeatureMap`] per stream: a D x D grid of
//! K-channel vectors, stored as a `[D^2, K]` tensor whose row `i` is the
//! feature vector of grid location `i` (row-major over the grid).

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// One frame of one stream: K channels over a D x D location grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<F> {
    side: usize,
    channels: usize,
    values: Tensor<F>,
}

impl<F: Real> FeatureMap<F> {
    pub fn new(side: usize, channels: usize, values: Tensor<F>) -> Result<Self> {
        let expected = [side * side, channels];
        if values.shape() != expected {
            return Err(Error::Data(alloc::format!(
                "feature map for side {side}, channels {channels} needs shape {expected:?}, got {:?}",
                values.shape()
            )));
        }
        Ok(Self {
            side,
            channels,
            values,
        })
    }

    /// Grid side length D.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Channel count K.
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// The `[D^2, K]` location-by-channel tensor.
    pub fn values(&self) -> &Tensor<F> {
        &self.values
    }

    /// Feature vector of one grid location.
    pub fn location(&self, i: usize) -> &[F] {
        self.values.row(i)
    }

    /// Mean feature vector over all locations — the input used by streams
    /// that run without attention. Computed as a uniform weighted sum over
    /// rows, in the same accumulation order as the attention read-out, so a
    /// softmax over all-zero logits (exactly uniform weights) reproduces
    /// this vector bit for bit.
    pub fn location_mean(&self) -> Tensor<F> {
        let locations = self.side * self.side;
        let weight = F::one() / F::of(locations as f64);
        let mut out = alloc::vec![F::zero(); self.channels];
        for (j, slot) in out.iter_mut().enumerate() {
            let mut acc = F::zero();
            for i in 0..locations {
                acc += weight * self.values.data()[i * self.channels + j];
            }
            *slot = acc;
        }
        Tensor::vector(out)
    }
}

/// A fixed-length slice of all three streams, ready for one forward pass.
#[derive(Debug, Clone)]
pub struct Window<F> {
    pub subject1: Vec<FeatureMap<F>>,
    pub subject2: Vec<FeatureMap<F>>,
    pub global: Vec<FeatureMap<F>>,
}

impl<F: Real> Window<F> {
    pub fn len(&self) -> usize {
        self.subject1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subject1.is_empty()
    }
}

/// One video: three aligned feature streams of equal length plus its label.
#[derive(Debug, Clone)]
pub struct InteractionSample<F> {
    pub id: String,
    pub label: usize,
    pub single_actor: bool,
    pub subject1: Vec<FeatureMap<F>>,
    pub subject2: Vec<FeatureMap<F>>,
    pub global: Vec<FeatureMap<F>>,
}

impl<F: Real> InteractionSample<F> {
    /// Number of frames T.
    pub fn len(&self) -> usize {
        self.subject1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subject1.is_empty()
    }

    /// Checks stream alignment: equal non-zero length and identical grid
    /// dimensions across every frame of every stream.
    pub fn validate(&self) -> Result<()> {
        if self.subject1.is_empty() {
            return Err(Error::Data(alloc::format!("sample {} has no frames", self.id)));
        }
        if self.subject1.len() != self.subject2.len() || self.subject1.len() != self.global.len() {
            return Err(Error::Data(alloc::format!(
                "sample {} has misaligned streams: {} / {} / {} frames",
                self.id,
                self.subject1.len(),
                self.subject2.len(),
                self.global.len()
            )));
        }
        let (side, channels) = (self.subject1[0].side(), self.subject1[0].channels());
        let streams = [&self.subject1, &self.subject2, &self.global];
        for stream in streams {
            for map in stream.iter() {
                if map.side() != side || map.channels() != channels {
                    return Err(Error::Data(alloc::format!(
                        "sample {} mixes feature dimensions: {}x{} vs {}x{} channels",
                        self.id,
                        side,
                        channels,
                        map.side(),
                        map.channels()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Extracts `len` frames starting at `start` (0-based). Frames past the
    /// end of the sequence are filled by repeating the last real frame, so
    /// sequences shorter than the window length still yield a full window.
    pub fn window(&self, start: usize, len: usize) -> Window<F> {
        let take = |stream: &Vec<FeatureMap<F>>| -> Vec<FeatureMap<F>> {
            (start..start + len)
                .map(|t| stream[t.min(stream.len() - 1)].clone())
                .collect()
        };
        Window {
            subject1: take(&self.subject1),
            subject2: take(&self.subject2),
            global: take(&self.global),
        }
    }

    /// Keeps only the first `frames` frames of every stream.
    pub fn prefix(&self, frames: usize) -> InteractionSample<F> {
        let cut = frames.min(self.len());
        InteractionSample {
            id: self.id.clone(),
            label: self.label,
            single_actor: self.single_actor,
            subject1: self.subject1[..cut].to_vec(),
            subject2: self.subject2[..cut].to_vec(),
            global: self.global[..cut].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(side: usize, channels: usize, fill: f64) -> FeatureMap<f64> {
        FeatureMap::new(side, channels, Tensor::full(vec![side * side, channels], fill)).unwrap()
    }

    fn sample(frames: usize) -> InteractionSample<f64> {
        let stream: Vec<_> = (0..frames).map(|t| map(2, 3, t as f64)).collect();
        InteractionSample {
            id: "s".into(),
            label: 0,
            single_actor: false,
            subject1: stream.clone(),
            subject2: stream.clone(),
            global: stream,
        }
    }

    #[test]
    fn map_shape_is_checked() {
        assert!(FeatureMap::new(2, 3, Tensor::<f64>::zeros(vec![4, 3])).is_ok());
        assert!(FeatureMap::new(2, 3, Tensor::<f64>::zeros(vec![3, 4])).is_err());
    }

    #[test]
    fn location_mean_averages_rows() {
        let values = Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let m = FeatureMap::new(2, 1, values).unwrap();
        assert_eq!(m.location_mean().data(), &[3.0]);
    }

    #[test]
    fn window_pads_by_repeating_last_frame() {
        let s = sample(7);
        let w = s.window(0, 10);
        assert_eq!(w.len(), 10);
        assert_eq!(w.subject1[6].location(0)[0], 6.0);
        for t in 7..10 {
            assert_eq!(w.subject1[t], w.subject1[6]);
        }
    }

    #[test]
    fn window_inside_sequence_copies_frames() {
        let s = sample(20);
        let w = s.window(5, 10);
        for (offset, m) in w.global.iter().enumerate() {
            assert_eq!(m.location(0)[0], (5 + offset) as f64);
        }
    }

    #[test]
    fn misaligned_streams_fail_validation() {
        let mut s = sample(5);
        s.subject2.pop();
        assert!(s.validate().is_err());
    }
}

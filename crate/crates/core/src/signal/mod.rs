//! Signal and dataset domain types.
//!
//! A [`Series`] is a finite real-valued sequence, an [`IqFrame`] pairs the
//! in-phase and quadrature channels of one received radio frame, and a
//! [`Dataset`] holds labelled frames of a common length.

mod container;
mod generate;
mod split;

pub use container::{read_dataset, read_dataset_from, write_dataset, write_dataset_to};
pub use generate::{generate_synthetic, Modulation};
pub use split::{split_random, split_stratified};

use crate::error::{Error, Result};

/// A real-valued time series of length at least 2 with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Series(Vec<f64>);

impl Series {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::SeriesTooShort {
                len: values.len(),
                min: 2,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at index {pos}"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Series {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl AsRef<[f64]> for Series {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One radio frame: aligned I and Q channels.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    i: Series,
    q: Series,
}

impl IqFrame {
    pub fn new(i: Series, q: Series) -> Result<Self> {
        if i.len() != q.len() {
            return Err(Error::InvalidArgument(format!(
                "I/Q channel lengths differ ({} vs {})",
                i.len(),
                q.len()
            )));
        }
        Ok(Self { i, q })
    }

    pub fn from_vecs(i: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        Self::new(Series::new(i)?, Series::new(q)?)
    }

    pub fn i(&self) -> &Series {
        &self.i
    }

    pub fn q(&self) -> &Series {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub frame: IqFrame,
    pub label: usize,
    pub snr_db: i8,
}

/// Labelled frames sharing one frame length and class list.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    class_names: Vec<String>,
    frame_length: usize,
    frames: Vec<LabeledFrame>,
}

impl Dataset {
    pub fn new(
        class_names: Vec<String>,
        frame_length: usize,
        frames: Vec<LabeledFrame>,
    ) -> Result<Self> {
        if class_names.is_empty() || class_names.len() > 256 {
            return Err(Error::InvalidArgument(format!(
                "class count must be in 1..=256, got {}",
                class_names.len()
            )));
        }
        for (idx, f) in frames.iter().enumerate() {
            if f.frame.len() != frame_length {
                return Err(Error::InvalidArgument(format!(
                    "frame {idx} has length {}, dataset frame length is {frame_length}",
                    f.frame.len()
                )));
            }
            if f.label >= class_names.len() {
                return Err(Error::LabelOutOfRange {
                    label: f.label,
                    classes: class_names.len(),
                });
            }
        }
        Ok(Self {
            class_names,
            frame_length,
            frames,
        })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn frames(&self) -> &[LabeledFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Builds a dataset with the same classes and length from a subset of frames.
    pub(crate) fn with_frames(&self, frames: Vec<LabeledFrame>) -> Self {
        Self {
            class_names: self.class_names.clone(),
            frame_length: self.frame_length,
            frames,
        }
    }

    /// Synthesises `per_cell` frames for every (class, snr) combination.
    ///
    /// Frame seeds are derived from `seed` and the frame's position, so the
    /// result depends only on the arguments.
    pub fn synthesize(
        classes: &[Modulation],
        snrs: &[i8],
        per_cell: usize,
        length: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut frames = Vec::with_capacity(classes.len() * snrs.len() * per_cell);
        let mut counter = 0u64;
        for (label, &class) in classes.iter().enumerate() {
            for &snr in snrs {
                for _ in 0..per_cell {
                    let frame_seed = seed
                        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                        .wrapping_add(counter);
                    counter += 1;
                    let frame = generate_synthetic(class, f64::from(snr), length, frame_seed)?;
                    frames.push(LabeledFrame {
                        frame,
                        label,
                        snr_db: snr,
                    });
                }
            }
        }
        let names = classes.iter().map(|c| c.name().to_string()).collect();
        Self::new(names, length, frames)
    }
}

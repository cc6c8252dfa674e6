//! Speaker verification toolkit.
//!
//! The pipeline runs from raw 16 kHz audio to detection metrics:
//!
//! * [`dsp`]: log mel-filterbank features with instance normalization.
//! * [`augment`]: additive noise at a target SNR, reverberation, spectral masks
//!   and offline augmentation manifests.
//! * [`nnet`]: forward pass of a half-channel ResNet-34 embedding extractor
//!   with statistics or attentive statistics pooling.
//! * [`loss`]: softmax, additive angular margin and angular prototypical
//!   objectives with analytic gradients.
//! * [`scoring`]: segment-averaged cosine scoring and adaptive symmetric
//!   score normalization with a cohort grid search.
//! * [`fusion`]: min-max scaled convex score fusion and weight search.
//! * [`metrics`]: EER and minimum detection cost.
//!
//! [`formats`], [`config`] and [`synth`] hold the on-disk formats, the
//! experiment configuration and a synthetic embedding generator used to
//! exercise everything without real recordings.

pub mod augment;
pub mod config;
pub mod dsp;
pub mod error;
pub mod formats;
pub mod fusion;
pub mod loss;
pub mod metrics;
pub mod nnet;
pub mod par;
pub mod scoring;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};

//! Co-design toolkit for computational imaging systems.
//!
//! A computational imaging system pairs a physical encoder (an undersampling
//! mask, a set of coded apertures, ...) with a computational decoder that
//! reconstructs the scene from the coded measurements. This crate implements
//! the pieces needed to design such systems by teacher-student training:
//!
//! * [`sensing`] — differentiable forward models, adjoints and binarization
//!   with straight-through gradients for three modalities (MRI k-space
//!   undersampling, single-pixel camera, snapshot spectral imaging).
//! * [`decoder`] — a small U-Net reconstruction network with hand-rolled
//!   backprop and a bottleneck feature tap.
//! * [`distill`] — encoder relaxation, the knowledge-transfer losses and the
//!   three-stage training pipeline, plus the end-to-end baseline.
//! * [`analysis`] — encoder-quality diagnostics (coherence, spectrum, Gram
//!   sections, spectral band correlation) and image-quality metrics.
//! * [`data`] — deterministic desk-scale dataset synthesis and ingestion.
//! * [`patterns`] — classic fixed encoder patterns (radial, spiral, Hadamard,
//!   blue noise) used as non-learned comparisons.
//!
//! All numerics are `f64` and every routine is deterministic given its seeds;
//! batch-level loops go through [`par`], which uses rayon when the `parallel`
//! feature (default) is enabled and plain iterators otherwise.

pub mod analysis;
pub mod data;
pub mod decoder;
pub mod distill;
pub mod error;
pub mod fourier;
pub mod io;
pub mod optim;
pub mod par;
pub mod patterns;
pub mod sensing;

pub use error::{CoreError, Result};

//! Batch tooling for bird-song detection pipelines: spectrogram rendering,
//! annotation conversion, dataset splitting, augmentation, detection
//! post-processing, evaluation and confidence calibration.

pub mod annotations;
pub mod audio;
pub mod augment;
pub mod calibrate;
pub mod detect;
pub mod evaluate;
pub mod spectrogram;
pub mod split;

//! Invariant neural operators for learning physical responses with
//! built-in conservation of linear and angular momentum.
//!
//! Modules, bottom-up:
//! - [`diffcore`]: tensors, reverse-mode tape, MLPs, Adam, gradient checks.
//! - [`geometry`]: point clouds, frame transforms, invariant edge features.
//! - [`operators`]: GNO / INO-scalar / INO-vector / norm-INO architectures.
//! - [`datagen`]: Darcy, random-field and peridynamic data generators, datasets.
//! - [`training`]: loss, fitting protocol, shallow-to-deep, augmentation.
//! - [`evaluation`]: metrics, frame sweeps, invariance checks, reports.

pub mod diffcore;
pub mod geometry;
pub mod operators;
pub mod datagen;
pub mod training;
pub mod evaluation;

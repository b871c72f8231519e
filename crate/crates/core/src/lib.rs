//! Abstracted Gaussian prototypes for one-shot concept learning on binary
//! character images.
//!
//! A single character image is turned into a point cloud, segmented with a
//! full-covariance Gaussian mixture, and resampled into a fixed-size
//! prototype. Prototypes are compared with a radius-based set similarity for
//! one-shot classification, and rasterized prototypes train a small
//! convolutional VAE whose decoded, skeletonized samples form new character
//! variants.
//!
//! Module map:
//! - [`dataset`]: image ingestion, point clouds, normalization, rasterization
//! - [`gmm`]: EM fitting and sampling of 2D mixtures
//! - [`agp`]: prototype construction
//! - [`similarity`]: pair-counting similarity, alignment probes, classification
//! - [`episodes`]: N-way episode sampling and benchmarks
//! - [`vae`]: convolutional VAE with hand-written backpropagation
//! - [`skeleton`]: binarization and topology-preserving thinning
//! - [`genpipe`]: the end-to-end generative pipeline
//! - [`config`]: the JSON configuration shared by the CLI
//! - [`synthetic`]: a procedural handwriting-like corpus for offline testing

pub mod agp;
pub mod config;
pub mod dataset;
pub mod episodes;
pub mod error;
pub mod genpipe;
pub mod gmm;
pub mod seed;
pub mod similarity;
pub mod skeleton;
pub mod synthetic;
pub mod vae;

pub use error::{Error, Result};

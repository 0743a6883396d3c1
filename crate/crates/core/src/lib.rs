//! Diffusion- and flow-based copula models.
//!
//! Two generative copula models live here. The classification-diffusion
//! copula trains a time classifier on Ornstein–Uhlenbeck-diffused data; its
//! class-probability ratio is the copula density and its input gradients give
//! the copula score used by a DDPM-style sampler. The reflection copula learns
//! the conditional velocity of a reflected free motion on the unit cube and
//! samples by integrating it backwards with reflected Euler steps.

pub mod cdc;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod neural;
pub mod normal;
pub mod oracles;
pub mod processes;
pub mod reflection;
pub mod rng;

pub use cdc::CdcModel;
pub use config::{SigmaMode, TrainConfig};
pub use data::{CopulaMatrix, Scale};
pub use error::{Error, Result};
pub use grid::{make_time_grid, GridScheme, TimeGrid};
pub use reflection::ReflectionModel;
pub use rng::RngStream;

//! Ensemble forecasting on a limited-area grid with a boundary-conditioned
//! diffusion model.
//!
//! The interior of a rectangular grid is forecast one step at a time by
//! sampling a denoising diffusion model conditioned on the two previous
//! states, the prescribed boundary frame at the target time, forcings and
//! static fields. Repeating the step with independent noise streams gives an
//! ensemble.
//!
//! Modules, roughly in pipeline order:
//!
//! - [`grid`]: grid layout, region masks, weather and boundary states,
//!   normalization statistics.
//! - [`synthetic`] and [`dataset`]: an analytic rotating-advection toy world
//!   and its serialized trajectory datasets.
//! - [`edm`] and [`denoiser`]: noise ladders, preconditioning, the Heun
//!   sampler and a closed-form Gaussian denoiser used as an oracle.
//! - [`net`]: the conditional U-Net denoiser.
//! - [`training`]: the weighted denoising loss, AdamW and checkpoints.
//! - [`rollout`]: boundary providers and autoregressive ensemble rollouts.
//! - [`metrics`] and [`report`]: RMSE, spread, spread-skill ratio, fair CRPS,
//!   CSV reports and SVG plots.
//! - [`pipeline`], [`config`] and [`cli`]: the stages glued together behind
//!   the `lamdiff` command.
//!
//! Every random draw comes from a ChaCha8 stream keyed by a master seed and a
//! purpose tag (see [`rng`]), so runs are reproducible bit for bit regardless
//! of threading.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod denoiser;
pub mod edm;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod rollout;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

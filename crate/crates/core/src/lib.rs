//! Joint diffusion of a platform and its complements.
//!
//! Platform adoption follows a Bass-type recursion with a market potential
//! that grows with the complement base; each complement diffuses within a
//! share of the platform's adopters and may churn. Both are observed with
//! noise and estimated by extended Kalman filtering inside an MCMC sampler
//! with a hierarchical layer over complements.
//!
//! Modules by stage:
//!
//! - [`preprocess`] reads raw CSVs and builds an [`panel::ObservationPanel`].
//! - [`simulate`] generates synthetic panels with known truth.
//! - [`model`] holds the drift, force and Jacobian functions.
//! - [`filter`] runs the EKF, RTS smoother and forward-filter backward-sampler.
//! - [`sampler`] and [`hierarchy`] implement the posterior sampler.
//! - [`diagnostics`] computes DIC, one-step forecasts and convergence checks.
//! - [`allocator`] searches editorial-effort schedules with a genetic algorithm.
//! - [`endogeneity`] runs the latent-instrument endogeneity test.
//! - [`cli`], [`config`], [`manifest`] and [`report`] back the `jointdiff` binary.
//!
//! Runnable examples, one per capability:
//!
//! | example | shows |
//! |---|---|
//! | `simulate_panel` | synthetic panel at the default truth |
//! | `filter_smooth` | filtering, smoothing and path sampling at known parameters |
//! | `ingest_csv` | raw CSV ingestion on the bundled fixture |
//! | `fit_synthetic` | posterior fit and interval coverage |
//! | `compare_variants` | DIC ranking of model variants |
//! | `forecast` | one-step forecasts against a random walk |
//! | `reallocate_effort` | effort reallocation with the genetic algorithm |
//! | `endogeneity_test` | endogeneity check on simulated data |
//! | `export_raw` | writing a simulation in the raw ingest layout |
//!
//! ```no_run
//! use jointdiff::sampler::{run_chain, McmcConfig, PriorConfig};
//! use jointdiff::simulate::{default_truth, simulate_panel};
//!
//! let sim = simulate_panel(&default_truth())?;
//! let mcmc = McmcConfig { iterations: 2000, ..McmcConfig::default() };
//! let archive = run_chain(&sim.panel, &PriorConfig::default(), &mcmc, &Default::default())?;
//! println!("{} draws", archive.draws.len());
//! # Ok::<(), jointdiff::Error>(())
//! ```

// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// day loops index several aligned series at once
#![allow(clippy::needless_range_loop)]

pub mod allocator;
pub mod archive;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod endogeneity;
pub mod error;
pub mod filter;
pub mod hierarchy;
pub mod manifest;
pub mod model;
pub mod panel;
pub mod preprocess;
pub mod report;
pub mod sampler;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};

//! Bayesian difference-in-differences with structured deviations from
//! parallel trends.
//!
//! The crate is organised bottom-up:
//!
//! * [`panel`] ingests a two-group panel and computes group-mean series.
//! * [`design`] builds the two-way fixed-effects regression and its
//!   conjugate oracle; [`model`] turns it into a differentiable posterior.
//! * [`ar1`] is the mean-shifted AR(1) deviation process.
//! * [`calibration`] holds the prior regimes and the empirical-Bayes
//!   least-squares fit of the AR(1) hyperparameters.
//! * [`sampler`] is a NUTS-style Hamiltonian Monte Carlo engine with
//!   split-R̂ and effective-sample-size diagnostics.
//! * [`effects`] composes posterior draws with deviation trajectories to
//!   produce ATT posteriors; [`tipping`] sweeps the long-run mean.
//! * [`synth`] generates panels with known ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod ar1;
pub mod calibration;
pub mod design;
pub mod effects;
mod error;
pub mod model;
pub mod panel;
pub mod sampler;
pub mod stats;
pub mod synth;
pub mod tipping;

pub use ar1::{Ar1Params, DeviationTrajectory};
pub use calibration::{EbEstimate, HyperSpec, ParamLaw, PriorRegime, RegimeKind};
pub use design::{LinearModelSpec, TwfeCoefficients, TwfeDesign};
pub use effects::{AttPosterior, TrendSet};
pub use error::{Error, Result, SamplingFailure};
pub use model::NoiseModel;
pub use panel::{ColumnMapping, Group, GroupMeanSeries, PanelDataset, PanelObservation};
pub use sampler::{Diagnostic, PosteriorDraws, SamplerConfig, Transform};
pub use stats::Summary;
pub use synth::{GroundTruth, SynthSpec};
pub use tipping::{CrossingBound, TippingResult};

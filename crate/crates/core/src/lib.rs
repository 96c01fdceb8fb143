//! Stochastic-volatility return distributions under the stationary-volatility
//! ("Born-Oppenheimer") approximation.
//!
//! The crate covers three layers:
//!
//! * model definitions and the stationary volatility laws of the Heston and
//!   Hull-White models ([`models`], [`stationary`]);
//! * the averaged return density `P_t(x)`, by quadrature and in closed form,
//!   together with a Monte Carlo engine for the coupled Langevin equations
//!   ([`bo_pdf`], [`montecarlo`]);
//! * the empirical pipeline that turns a price series into detrended,
//!   normalized, binned returns and fits the Tsallis log-form to them
//!   ([`detrend`], [`histogram`], [`fit`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bo_pdf;
pub mod detrend;
pub mod error;
pub mod fit;
pub mod histogram;
pub mod ingest;
pub mod models;
pub mod montecarlo;
pub mod quad;
pub mod rng;
pub mod special_fn;
pub mod stationary;
pub mod stats;

pub use bo_pdf::{BoPdf, HestonPdf, TailExponents, TailLaw, TsallisParams};
pub use detrend::{DetrendedReturns, LagReturns, LinearTrend, PriceSeries, TrendRow, TrendSummary};
pub use error::{Error, Result};
pub use fit::{BinModel, FitPoint, FitReport, GaussianFit, LogLogFit};
pub use histogram::{Binning, EmpiricalHist, WidthScaling};
pub use models::{DriftScheme, ModelKind, ModelParams, ModelSpec};
pub use montecarlo::{InitialVariance, LagDiscrepancy, PathSet, SimConfig, Trajectory};
pub use stationary::StationaryDist;

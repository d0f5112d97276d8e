//! Root-cause localization for alarmed time-series KPIs.
//!
//! A sparse Bayesian linear model maps candidate root-cause series to a
//! target KPI; its coefficients are turned into attribution scores against
//! the alarm window and the top-ranked causes of several KPIs are merged.

pub mod attribution;
pub mod baselines;
pub mod bmfs;
pub mod case;
pub mod error;
pub mod merge;
pub mod pipeline;
pub mod specfun;
pub mod synth;

pub use error::{BalanceError, Result};

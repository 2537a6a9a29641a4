//! Vintage-aware reconstruction of partner-reported import series and
//! break estimation around a policy cutoff.
//!
//! * [`ingest`]: trade records, as-of vintages, category aggregation.
//! * [`trend_break`]: interrupted-trend OLS, counterfactual projection,
//!   feasibility of the implied path.
//! * [`rdd`]: local-polynomial discontinuity estimates with MSE-optimal
//!   bandwidths and robust bias-corrected intervals.
//! * [`audit`]: series agreement, vintage search, paired coefficients.
//! * [`pipeline`]: configuration-driven runs, tables and figure data.
//!
//! The estimators are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the pipeline uses.

pub mod audit;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod montecarlo;
pub mod month;
pub mod ols;
pub mod pipeline;
pub mod rdd;
pub mod scalar;
pub mod series;
pub mod stars;
pub mod trend_break;

pub use error::{Error, ErrorKind, Result};
pub use month::{Month, MonthRange};
pub use scalar::Scalar;
pub use series::{MonthlySeries, Transform};

pub type Series = series::MonthlySeries<f64>;
pub type Series32 = series::MonthlySeries<f32>;
pub type TrendFit = trend_break::TrendBreakFit<f64>;
pub type TrendFit32 = trend_break::TrendBreakFit<f32>;
pub type Counterfactual = trend_break::CounterfactualPath<f64>;
pub type RdFit = rdd::RddFit<f64>;
pub type RdFit32 = rdd::RddFit<f32>;
pub type RdSpec = rdd::RddSpec<f64>;
pub type Comparison = audit::SeriesComparison<f64>;

//! Clearsky-free solar irradiance forecasting: data handling, benchmark
//! predictors, an extreme learning machine, probabilistic intervals and
//! evaluation metrics.

pub mod benchmarks;
pub mod clearsky;
pub mod elm;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod probabilistic;
pub mod registry;
pub mod timeseries;

pub use benchmarks::{ArModel, ArVariant, PointForecastSet};
pub use elm::{ElmConfig, ElmModel};
pub use error::{Error, Result};
pub use metrics::{MetricsReport, UTestResult};
pub use probabilistic::{LookupTable, QuantileForecast, QuantileModel};
pub use registry::ModelKind;
pub use timeseries::{IrradianceSeries, SiteMeta, SupervisedSet};

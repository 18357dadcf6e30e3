//! Exact zero-forcing MIMO performance under transmit-correlated rank-1
//! Rician fading, by three cross-checking engines: truncated series,
//! holonomic gradient integration and Monte Carlo.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod deq;
pub mod error;
pub mod hgm;
pub mod kernel;
pub mod mc;
pub mod num;
pub mod ode;
pub mod quad;
pub mod series;
pub mod special;

pub use channel::{ChannelSpec, CorrelationMatrix, LosComponent, PhaseConvention, SnrParams};
pub use config::{Scenario, WinnerConfig};
pub use error::{Error, Result};
pub use kernel::MeasureKind;
pub use series::{Precision, SeriesResult, TruncationPolicy};

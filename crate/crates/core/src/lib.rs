//! Daily stock-price forecasting with an LSTM followed by sequential
//! self-attention.
//!
//! The pipeline, module by module:
//!
//! - [`market_data`]: parse Yahoo-style OHLCV CSV, pick a column, split 90/10 in time order
//! - [`preprocess`]: min-max scaling and sliding windows (default `T = 10`)
//! - [`model`]: LSTM (return sequences) -> scaled dot-product attention -> ReLU -> flatten -> dense
//! - [`training`]: MSE, backpropagation through time, Adam, and a finite-difference oracle
//! - [`evaluation`]: RMSE, R², per-day forecast error and error percentage
//! - [`baselines`]: random walk (ARIMA(0,1,0)) and SMA forecasters
//! - [`indicators`]: SMA series and the Pearson correlation matrix
//! - [`model_store`]: the `.ssam` text format
//! - [`workflow`]: the end-to-end runs behind the `stockcast` binary
//!
//! Everything is `f64` and deterministic given the seeds.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod indicators;
pub mod market_data;
pub mod model;
pub mod model_store;
pub mod preprocess;
pub mod tensor;
pub mod training;
pub mod workflow;

pub use error::{Error, Result};
pub use market_data::{Feature, OhlcvRecord, PriceSeries};
pub use model::{ModelConfig, ModelParams};
pub use preprocess::{ScalerParams, WindowedDataset};
pub use tensor::{Activation, Matrix};
pub use training::TrainConfig;

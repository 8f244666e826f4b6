pub mod backtest;
pub mod data;
pub mod error;
pub mod features;
pub mod gbm;
pub mod pipeline;
pub mod wls;
pub use error::{Error, Result};

//! Deterministic reference forecasters evaluated one step ahead.

use crate::error::{Error, Result};
use crate::market_data::PriceSeries;

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineForecast {
    pub name: String,
    /// Aligned with the test dates.
    pub predicted: Vec<f64>,
}

/// ARIMA(0,1,0) without drift: each prediction is the previous actual value.
pub fn random_walk_forecast(history: &PriceSeries, test: &PriceSeries) -> Result<BaselineForecast> {
    if history.is_empty() {
        return Err(Error::Empty("random_walk_forecast history"));
    }
    let predicted = std::iter::once(history.last())
        .chain(test.values().iter().copied())
        .take(test.len())
        .collect();
    Ok(BaselineForecast {
        name: "ARIMA(0,1,0)".to_string(),
        predicted,
    })
}

/// Each prediction is the mean of the `n` actual values preceding it.
pub fn sma_forecast(history: &PriceSeries, test: &PriceSeries, n: usize) -> Result<BaselineForecast> {
    if n == 0 {
        return Err(Error::InvalidPeriod {
            period: 0,
            len: history.len(),
        });
    }
    if history.len() < n {
        return Err(Error::InsufficientData {
            needed: n - 1,
            got: history.len(),
        });
    }
    let mut known: Vec<f64> = history.values()[history.len() - n..].to_vec();
    known.extend_from_slice(test.values());
    let predicted = known.windows(n).take(test.len()).map(window_mean).collect();
    Ok(BaselineForecast {
        name: format!("SMA({n})"),
        predicted,
    })
}

// Offsets from the first element keep constant windows (and n = 1) exact.
fn window_mean(w: &[f64]) -> f64 {
    let reference = w[0];
    reference + w.iter().map(|x| x - reference).sum::<f64>() / w.len() as f64
}

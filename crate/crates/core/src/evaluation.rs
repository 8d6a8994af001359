//! Test-set prediction and the reported metrics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::preprocess::{ScalerParams, WindowedDataset};

fn check_pair(predicted: &[f64], actual: &[f64], min_len: usize, op: &'static str) -> Result<()> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::Empty(op));
    }
    if predicted.len() < min_len {
        return Err(Error::InsufficientData {
            needed: min_len - 1,
            got: predicted.len(),
        });
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual, 1, "rmse")?;
    let sse: f64 = predicted.iter().zip(actual).map(|(f, o)| (f - o) * (f - o)).sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Coefficient of determination, `1 - SS_res / SS_tot`. Negative when the
/// predictions are worse than the mean of `actual`.
pub fn r2(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual, 2, "r2")?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|o| (o - mean) * (o - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance("actual".into()));
    }
    let ss_res: f64 = predicted.iter().zip(actual).map(|(f, o)| (o - f) * (o - f)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastRow {
    pub date: String,
    pub actual: f64,
    pub predicted: f64,
    /// `actual - predicted`
    pub forecast_error: f64,
    /// `|forecast_error / actual| * 100`
    pub error_percent: f64,
}

impl ForecastRow {
    pub fn new(date: impl Into<String>, actual: f64, predicted: f64) -> Result<Self> {
        let date = date.into();
        if actual == 0.0 {
            return Err(Error::ZeroActual(date));
        }
        let forecast_error = actual - predicted;
        Ok(Self {
            date,
            actual,
            predicted,
            forecast_error,
            error_percent: (forecast_error / actual).abs() * 100.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<ForecastRow>,
    pub rmse: f64,
    pub r2: f64,
}

pub const REPORT_HEADER: &str = "date,actual,predicted,forecast_error,error_percent";

impl EvaluationReport {
    /// Rows rounded to three decimals for display.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.3},{:.3},{:.3},{:.3}",
                r.date, r.actual, r.predicted, r.forecast_error, r.error_percent
            );
        }
        out
    }

    /// `date,actual,predicted` at full precision, for plotting.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("date,actual,predicted\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.date, r.actual, r.predicted);
        }
        out
    }

    pub fn summary_line(&self) -> String {
        format!("rmse={:.6} r2={:.6}", self.rmse, self.r2)
    }

    pub fn predicted(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.predicted).collect()
    }

    pub fn actual(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.actual).collect()
    }
}

pub fn forecast_report<D: ToString>(dates: &[D], actual: &[f64], predicted: &[f64]) -> Result<EvaluationReport> {
    if dates.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: dates.len(),
            right: actual.len(),
        });
    }
    check_pair(predicted, actual, 1, "forecast_report")?;
    let rows = dates
        .iter()
        .zip(actual.iter().zip(predicted))
        .map(|(d, (&a, &p))| ForecastRow::new(d.to_string(), a, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        rows,
        rmse: rmse(predicted, actual)?,
        r2: r2(predicted, actual)?,
    })
}

/// One-step-ahead predictions over `test_windows`, reported in price units.
pub fn evaluate<D: ToString>(
    params: &ModelParams,
    scaler: &ScalerParams,
    test_windows: &WindowedDataset,
    dates: &[D],
) -> Result<EvaluationReport> {
    if dates.len() != test_windows.len() {
        return Err(Error::LengthMismatch {
            left: dates.len(),
            right: test_windows.len(),
        });
    }
    let predicted = (0..test_windows.len())
        .map(|i| params.predict(&test_windows.window(i)).map(|y| scaler.inverse_scale(y)))
        .collect::<Result<Vec<f64>>>()?;
    let actual: Vec<f64> = test_windows.targets.iter().map(|&t| scaler.inverse_scale(t)).collect();
    forecast_report(dates, &actual, &predicted)
}

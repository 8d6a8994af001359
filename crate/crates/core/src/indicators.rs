//! Simple moving averages and Pearson correlation matrices.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::evaluation::rmse;
use crate::market_data::PriceSeries;

/// Trailing SMA over fully covered positions only.
#[derive(Clone, Debug, PartialEq)]
pub struct SmaSeries {
    pub window_n: usize,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl SmaSeries {
    /// Each value is dated by the last observation in its window.
    pub fn from_series(series: &PriceSeries, n: usize) -> Result<Self> {
        let values = sma(series.values(), n)?;
        Ok(Self {
            window_n: n,
            dates: series.dates()[n - 1..].to_vec(),
            values,
        })
    }
}

/// Position `i` holds the mean of `prices[i..i+n]`.
pub fn sma(prices: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 1 || n > prices.len() {
        return Err(Error::InvalidPeriod {
            period: n,
            len: prices.len(),
        });
    }
    if n == 1 {
        return Ok(prices.to_vec());
    }
    // Offsets from a common reference keep constant series exact and the
    // output of a non-decreasing input non-decreasing.
    let reference = prices[0];
    let offsets: Vec<f64> = prices.iter().map(|&p| p - reference).collect();
    Ok(offsets
        .windows(n)
        .map(|w| reference + w.iter().sum::<f64>() / n as f64)
        .collect())
}

/// RMSE of an `n`-period SMA against the prices it averages, aligned at
/// each window's last observation.
pub fn sma_fit_rmse(prices: &[f64], n: usize) -> Result<f64> {
    let averaged = sma(prices, n)?;
    rmse(&averaged, &prices[n - 1..])
}

/// Picks the candidate period whose SMA tracks the prices most closely.
/// Ties go to the smaller period.
pub fn best_sma_window(prices: &[f64], candidates: &[usize]) -> Result<(usize, f64)> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, f64)> = None;
    for n in sorted {
        let err = sma_fit_rmse(prices, n)?;
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((n, err));
        }
    }
    best.ok_or(Error::Empty("best_sma_window"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub entries: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.entries[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.entries) {
            out.push_str(l);
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Sample Pearson coefficients between every pair of named columns.
pub fn pearson_correlation(columns: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix> {
    let Some((_, first)) = columns.first() else {
        return Err(Error::Empty("pearson_correlation"));
    };
    let len = first.len();
    if len < 2 {
        return Err(Error::InsufficientData { needed: 1, got: len });
    }
    if let Some((_, bad)) = columns.iter().find(|(_, c)| c.len() != len) {
        return Err(Error::LengthMismatch {
            left: len,
            right: bad.len(),
        });
    }

    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|(_, c)| {
            let mean = c.iter().sum::<f64>() / len as f64;
            c.iter().map(|x| x - mean).collect()
        })
        .collect();
    let sums_sq: Vec<f64> = centered.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>()).collect();
    if let Some(i) = sums_sq.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroVariance(columns[i].0.clone()));
    }

    let k = columns.len();
    let mut entries = vec![vec![0.0; k]; k];
    for i in 0..k {
        entries[i][i] = 1.0;
        for j in i + 1..k {
            let cov: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = (cov / (sums_sq[i] * sums_sq[j]).sqrt()).clamp(-1.0, 1.0);
            entries[i][j] = r;
            entries[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels: columns.iter().map(|(l, _)| l.clone()).collect(),
        entries,
    })
}

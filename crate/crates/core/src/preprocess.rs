//! Min-max scaling and sliding-window dataset construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_TIME_STEP: usize = 10;

/// Which span of the series the scaler is fitted on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerFit {
    /// Training partition only; test values may fall outside [0, 1].
    #[default]
    Train,
    /// Whole series, train and test.
    All,
}

impl std::fmt::Display for ScalerFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScalerFit::Train => "train",
            ScalerFit::All => "all",
        })
    }
}

impl std::str::FromStr for ScalerFit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(ScalerFit::Train),
            "all" => Ok(ScalerFit::All),
            other => Err(Error::InvalidConfig(format!(
                "scaler fit must be `train` or `all`, got `{other}`"
            ))),
        }
    }
}

/// The affine map `x -> (x - min) / (max - min)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    min: f64,
    max: f64,
}

impl ScalerParams {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "scaler bounds must be finite: {min}, {max}"
            )));
        }
        if max <= min {
            return Err(Error::DegenerateScaler(min));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn inverse_scale(&self, x_star: f64) -> f64 {
        x_star * (self.max - self.min) + self.min
    }

    pub fn scale_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.scale(x)).collect()
    }
}

/// Fits the scaler to the extrema of `values`.
pub fn fit_scaler(values: &[f64]) -> Result<ScalerParams> {
    if values.is_empty() {
        return Err(Error::Empty("fit_scaler"));
    }
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    ScalerParams::new(min, max)
}

/// Supervised pairs: window `i` is `source[i..i+T]`, target `i` is `source[i+T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub time_step: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Window `i` as a `T x 1` matrix.
    pub fn window(&self, i: usize) -> Matrix {
        Matrix::from_vec_unchecked(self.time_step, 1, self.inputs[i].clone())
    }

    pub fn windows(&self) -> Vec<Matrix> {
        (0..self.len()).map(|i| self.window(i)).collect()
    }
}

pub fn make_windows(series: &[f64], time_step: usize) -> Result<WindowedDataset> {
    if time_step == 0 {
        return Err(Error::InvalidConfig("time_step must be at least 1".into()));
    }
    if series.len() <= time_step {
        return Err(Error::InsufficientData {
            needed: time_step,
            got: series.len(),
        });
    }
    let count = series.len() - time_step;
    Ok(WindowedDataset {
        inputs: (0..count).map(|i| series[i..i + time_step].to_vec()).collect(),
        targets: series[time_step..].to_vec(),
        time_step,
    })
}

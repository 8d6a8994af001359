//! End-to-end runs: ingest, split, scale, window, train, save, evaluate.
//!
//! These functions back the `stockcast` binary but are plain library calls,
//! so examples and tests drive them directly.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{random_walk_forecast, sma_forecast, BaselineForecast};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, r2, rmse, EvaluationReport};
use crate::indicators::{best_sma_window, pearson_correlation, CorrelationMatrix, SmaSeries};
use crate::market_data::{
    chronological_split, parse_csv, select_feature, Feature, OhlcvRecord, PriceSeries, SplitSeries,
};
use crate::model::{ModelConfig, ModelParams};
use crate::model_store::{self, ModelBundle, TrainSummary};
use crate::preprocess::{fit_scaler, make_windows, ScalerFit, ScalerParams, WindowedDataset};
use crate::tensor::Matrix;
use crate::training::{train_with_observer, EpochReport, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataOptions {
    pub feature: Feature,
    pub ratio: f64,
    pub fit_scaler_on: ScalerFit,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            feature: Feature::AdjClose,
            ratio: 0.9,
            fit_scaler_on: ScalerFit::Train,
        }
    }
}

/// Every knob of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub data: DataOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl TrainOptions {
    /// Uses `seed` for both initialisation and shuffling.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.train.shuffle_seed = seed;
        self
    }
}

/// A series split, scaled and windowed for one model.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub series: PriceSeries,
    pub split: SplitSeries,
    pub scaler: ScalerParams,
    pub train_windows: WindowedDataset,
    /// One window per test date; the first ones reach back into the training span.
    pub test_windows: WindowedDataset,
}

impl PreparedData {
    pub fn test_dates(&self) -> &[NaiveDate] {
        self.split.test.dates()
    }
}

/// Splits and windows `records`. The scaler is fitted per `data.fit_scaler_on`
/// unless one is supplied (as when evaluating a saved model).
pub fn prepare(
    records: &[OhlcvRecord],
    data: &DataOptions,
    time_step: usize,
    scaler: Option<ScalerParams>,
) -> Result<PreparedData> {
    let series = select_feature(records, data.feature)?;
    let split = chronological_split(&series, data.ratio)?;
    let scaler = match scaler {
        Some(s) => s,
        None => fit_scaler(match data.fit_scaler_on {
            ScalerFit::Train => split.train.values(),
            ScalerFit::All => series.values(),
        })?,
    };
    let scaled = scaler.scale_all(series.values());
    let n_train = split.train.len();
    let train_windows = make_windows(&scaled[..n_train], time_step)?;
    let test_windows = make_windows(&scaled[n_train - time_step..], time_step)?;
    Ok(PreparedData {
        series,
        split,
        scaler,
        train_windows,
        test_windows,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<OhlcvRecord>> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Provenance of one run, written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub input: PathBuf,
    pub output: PathBuf,
    pub options: TrainOptions,
    pub started_at: String,
    pub elapsed_secs: f64,
    pub loss_history: Vec<f64>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// `model.ssam` -> `model.ssam.manifest.json`
pub fn manifest_path(model_path: &Path) -> PathBuf {
    let mut name = model_path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// A trained model together with everything needed to save and evaluate it.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub data: PreparedData,
    pub loss_history: Vec<f64>,
    pub train_secs: f64,
}

impl TrainedModel {
    pub fn bundle(&self, options: &TrainOptions) -> ModelBundle {
        ModelBundle::from_params(
            &self.params,
            self.data.scaler,
            TrainSummary {
                feature: options.data.feature,
                split_ratio: options.data.ratio,
                scaler_fit: options.data.fit_scaler_on,
                train: options.train.clone(),
                train_rows: self.data.split.train.len(),
                last_train_date: self.data.split.train.dates().last().copied(),
            },
        )
    }

    pub fn evaluate(&self) -> Result<EvaluationReport> {
        evaluate(
            &self.params,
            &self.data.scaler,
            &self.data.test_windows,
            self.data.test_dates(),
        )
    }
}

/// Prepares the data and trains, without touching the filesystem.
pub fn train_on_records(
    records: &[OhlcvRecord],
    options: &TrainOptions,
    observer: impl FnMut(&EpochReport),
) -> Result<TrainedModel> {
    options.model.validate()?;
    let data = prepare(records, &options.data, options.model.time_step, None)?;
    let start = Instant::now();
    let outcome = train_with_observer(&options.model, &options.train, &data.train_windows, observer)?;
    Ok(TrainedModel {
        params: outcome.params,
        data,
        loss_history: outcome.loss_history,
        train_secs: start.elapsed().as_secs_f64(),
    })
}

/// Ingest, train and save to `out_model`; the manifest lands beside it.
pub fn run_train(
    csv_path: &Path,
    out_model: &Path,
    options: &TrainOptions,
    observer: impl FnMut(&EpochReport),
) -> Result<RunManifest> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let records = read_records(csv_path)?;
    let trained = train_on_records(&records, options, observer)?;
    let bundle = trained.bundle(options);
    let text = model_store::save_to_string(&bundle)?;
    fs::write(out_model, text)?;
    let manifest = RunManifest {
        command: "train".to_string(),
        input: csv_path.to_path_buf(),
        output: out_model.to_path_buf(),
        options: options.clone(),
        started_at,
        elapsed_secs: trained.train_secs,
        loss_history: trained.loss_history,
    };
    manifest.write(&manifest_path(out_model))?;
    Ok(manifest)
}

/// Re-runs a recorded training run, optionally writing the model elsewhere.
pub fn replay(manifest: &RunManifest, out_model: Option<&Path>) -> Result<RunManifest> {
    if manifest.command != "train" {
        return Err(Error::InvalidConfig(format!(
            "cannot replay a `{}` run",
            manifest.command
        )));
    }
    let out = out_model.unwrap_or(&manifest.output);
    run_train(&manifest.input, out, &manifest.options, |_| {})
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    model_store::load(fs::File::open(path)?)
}

#[derive(Clone, Debug)]
pub struct EvaluationRun {
    pub report: EvaluationReport,
    pub warnings: Vec<String>,
}

/// Rebuilds the model's split on `csv_path` and scores its test partition.
/// Files are only written once every prediction has succeeded.
pub fn run_evaluate(
    model_path: &Path,
    csv_path: &Path,
    report_path: Option<&Path>,
    predictions_path: Option<&Path>,
) -> Result<EvaluationRun> {
    let bundle = load_model(model_path)?;
    let params = bundle.to_params()?;
    let records = read_records(csv_path)?;
    let summary = &bundle.train_summary;
    let data_opts = DataOptions {
        feature: summary.feature,
        ratio: summary.split_ratio,
        fit_scaler_on: summary.scaler_fit,
    };
    let data = prepare(&records, &data_opts, bundle.model_config.time_step, Some(bundle.scaler))?;

    let mut warnings = Vec::new();
    let last_train = data.split.train.dates().last().copied();
    if data.split.train.len() != summary.train_rows || last_train != summary.last_train_date {
        warnings.push(format!(
            "split mismatch: model was trained on {} rows ending {}, this file gives {} rows ending {}",
            summary.train_rows,
            summary.last_train_date.map_or_else(|| "?".into(), |d| d.to_string()),
            data.split.train.len(),
            last_train.map_or_else(|| "?".into(), |d| d.to_string()),
        ));
    }

    let report = evaluate(&params, &bundle.scaler, &data.test_windows, data.test_dates())?;
    if let Some(path) = report_path {
        fs::write(path, report.to_csv())?;
    }
    if let Some(path) = predictions_path {
        fs::write(path, report.predictions_csv())?;
    }
    Ok(EvaluationRun { report, warnings })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NextDayForecast {
    /// Last date in the input; the forecast is for the trading day after it.
    pub after: NaiveDate,
    pub price: f64,
}

/// Forecasts the step after the final row using the last `T` observations.
pub fn run_predict(model_path: &Path, csv_path: &Path) -> Result<NextDayForecast> {
    let bundle = load_model(model_path)?;
    let params = bundle.to_params()?;
    let records = read_records(csv_path)?;
    let series = select_feature(&records, bundle.train_summary.feature)?;
    let t = bundle.model_config.time_step;
    if series.len() < t {
        return Err(Error::InsufficientData {
            needed: t - 1,
            got: series.len(),
        });
    }
    let recent = bundle.scaler.scale_all(&series.values()[series.len() - t..]);
    let y = params.predict(&Matrix::column(&recent)?)?;
    Ok(NextDayForecast {
        after: *series.dates().last().expect("nonempty"),
        price: bundle.scaler.inverse_scale(y),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum CompareOutcome {
    Scored {
        rmse: f64,
        secs: f64,
        r2: f64,
    },
    NotImplemented,
    /// The error message and the exit code it maps to.
    Failed(String, i32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub algorithm: String,
    pub outcome: CompareOutcome,
}

pub const PROPOSED_MODEL: &str = "Proposed Model";

enum Entry {
    Neural(ModelConfig),
    RandomWalk,
    Sma(usize),
    Missing,
}

/// Scores every comparison model on the same split. Neural models train in
/// parallel; a failure is reported in its row without stopping the others.
pub fn compare_on_records(records: &[OhlcvRecord], options: &TrainOptions, sma_period: usize) -> Vec<CompareRow> {
    let m = &options.model;
    let plain = |hidden| ModelConfig {
        seed: m.seed,
        time_step: m.time_step,
        input_dim: m.input_dim,
        ..ModelConfig::lstm(hidden)
    };
    let entries = vec![
        ("LSTM (Unit 1)".to_string(), Entry::Neural(plain(1))),
        (
            format!("LSTM (Unit {})", m.hidden_units),
            Entry::Neural(plain(m.hidden_units)),
        ),
        ("CNN+BiLSTM".to_string(), Entry::Missing),
        ("LSTM+CNN".to_string(), Entry::Missing),
        ("FB_Prophet".to_string(), Entry::Missing),
        ("ARIMA(0,1,0)".to_string(), Entry::RandomWalk),
        (format!("SMA({sma_period})"), Entry::Sma(sma_period)),
        (PROPOSED_MODEL.to_string(), Entry::Neural(m.clone())),
    ];

    entries
        .into_par_iter()
        .map(|(algorithm, entry)| {
            let outcome = match entry {
                Entry::Missing => CompareOutcome::NotImplemented,
                Entry::Neural(config) => {
                    let opts = TrainOptions {
                        model: config,
                        ..options.clone()
                    };
                    score_neural(records, &opts)
                }
                Entry::RandomWalk => score_baseline(records, options, random_walk_forecast),
                Entry::Sma(n) => score_baseline(records, options, |h, t| sma_forecast(h, t, n)),
            };
            CompareRow { algorithm, outcome }
        })
        .collect()
}

fn score_neural(records: &[OhlcvRecord], options: &TrainOptions) -> CompareOutcome {
    let run = || -> Result<(f64, f64, f64)> {
        let start = Instant::now();
        let trained = train_on_records(records, options, |_| {})?;
        let report = trained.evaluate()?;
        Ok((report.rmse, start.elapsed().as_secs_f64(), report.r2))
    };
    match run() {
        Ok((rmse, secs, r2)) => CompareOutcome::Scored { rmse, secs, r2 },
        Err(e) => CompareOutcome::Failed(e.to_string(), e.exit_code()),
    }
}

fn score_baseline(
    records: &[OhlcvRecord],
    options: &TrainOptions,
    forecast: impl Fn(&PriceSeries, &PriceSeries) -> Result<BaselineForecast>,
) -> CompareOutcome {
    let run = || -> Result<(f64, f64, f64)> {
        let series = select_feature(records, options.data.feature)?;
        let split = chronological_split(&series, options.data.ratio)?;
        let start = Instant::now();
        let f = forecast(&split.train, &split.test)?;
        let secs = start.elapsed().as_secs_f64();
        Ok((
            rmse(&f.predicted, split.test.values())?,
            secs,
            r2(&f.predicted, split.test.values())?,
        ))
    };
    match run() {
        Ok((rmse, secs, r2)) => CompareOutcome::Scored { rmse, secs, r2 },
        Err(e) => CompareOutcome::Failed(e.to_string(), e.exit_code()),
    }
}

pub fn run_compare(csv_path: &Path, options: &TrainOptions, sma_period: usize) -> Result<Vec<CompareRow>> {
    let records = read_records(csv_path)?;
    Ok(compare_on_records(&records, options, sma_period))
}

/// `algorithm,rmse,time_sec,r2`
pub fn compare_table_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("algorithm,rmse,time_sec,r2\n");
    for row in rows {
        let cells = match &row.outcome {
            CompareOutcome::Scored { rmse, secs, r2 } => format!("{rmse:.4},{secs:.3},{r2:.4}"),
            CompareOutcome::NotImplemented => "not-implemented,not-implemented,not-implemented".to_string(),
            CompareOutcome::Failed(msg, _) => format!("error: {},,", msg.replace(',', ";")),
        };
        out.push_str(&format!("{},{}\n", row.algorithm, cells));
    }
    out
}

#[derive(Clone, Debug)]
pub struct IndicatorOutput {
    pub smas: Vec<SmaSeries>,
    pub correlation: CorrelationMatrix,
    /// Period whose SMA tracks the price best, with its RMSE.
    pub best_window: (usize, f64),
    series: PriceSeries,
}

impl IndicatorOutput {
    /// `date,price,sma_<n>...`; cells before a window is fully covered are empty.
    pub fn sma_csv(&self) -> String {
        let mut out = String::from("date,price");
        for s in &self.smas {
            out.push_str(&format!(",sma_{}", s.window_n));
        }
        out.push('\n');
        for (i, (d, p)) in self.series.dates().iter().zip(self.series.values()).enumerate() {
            out.push_str(&format!("{d},{p}"));
            for s in &self.smas {
                match i.checked_sub(s.window_n - 1) {
                    Some(k) => out.push_str(&format!(",{}", s.values[k])),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn indicators_on_records(records: &[OhlcvRecord], feature: Feature, windows: &[usize]) -> Result<IndicatorOutput> {
    let series = select_feature(records, feature)?;
    let smas = windows
        .iter()
        .map(|&n| SmaSeries::from_series(&series, n))
        .collect::<Result<Vec<_>>>()?;
    let columns: Vec<(String, Vec<f64>)> = Feature::ALL
        .iter()
        .map(|&f| (f.label().to_string(), records.iter().map(|r| r.value(f)).collect()))
        .collect();
    Ok(IndicatorOutput {
        best_window: best_sma_window(series.values(), windows)?,
        correlation: pearson_correlation(&columns)?,
        smas,
        series,
    })
}

pub fn run_indicators(csv_path: &Path, feature: Feature, windows: &[usize]) -> Result<IndicatorOutput> {
    indicators_on_records(&read_records(csv_path)?, feature, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::write_csv;

    pub(crate) fn synthetic_records(n: usize) -> Vec<OhlcvRecord> {
        let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        (0..n)
            .map(|i| {
                let p = 100.0 + 20.0 * (i as f64 * 0.2).sin() + i as f64 * 0.1;
                OhlcvRecord {
                    date: start + chrono::Days::new(i as u64),
                    open: p - 0.5,
                    high: p + 1.0,
                    low: p - 1.0,
                    close: p,
                    adj_close: p * 0.9,
                    volume: 1000 + (i as u64 * 37) % 500,
                }
            })
            .collect()
    }

    #[test]
    fn prepare_aligns_test_windows_with_test_dates() {
        let records = synthetic_records(50);
        let data = prepare(&records, &DataOptions::default(), 10, None).unwrap();
        assert_eq!(data.split.train.len(), 45);
        assert_eq!(data.train_windows.len(), 35);
        assert_eq!(data.test_windows.len(), 5);
        assert_eq!(data.test_dates().len(), 5);
        let first_test = data.scaler.scale(data.split.test.values()[0]);
        assert_eq!(data.test_windows.targets[0], first_test);
        let last_train = data.scaler.scale(*data.split.train.values().last().unwrap());
        assert_eq!(data.test_windows.inputs[0][9], last_train);
        // fitted on the train span only
        assert!(data
            .train_windows
            .inputs
            .iter()
            .flatten()
            .all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn scaler_fit_all_covers_whole_series() {
        let records = synthetic_records(50);
        let opts = DataOptions {
            fit_scaler_on: ScalerFit::All,
            ..DataOptions::default()
        };
        let data = prepare(&records, &opts, 10, None).unwrap();
        let full = fit_scaler(data.series.values()).unwrap();
        assert_eq!(data.scaler, full);
    }

    #[test]
    fn too_short_for_time_step() {
        let records = synthetic_records(12);
        assert!(matches!(
            prepare(&records, &DataOptions::default(), 10, None),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(
            manifest_path(Path::new("/tmp/m.ssam")),
            PathBuf::from("/tmp/m.ssam.manifest.json")
        );
    }

    #[test]
    fn compare_rows_follow_table_order() {
        let records = synthetic_records(60);
        let options = TrainOptions {
            model: ModelConfig {
                hidden_units: 3,
                attention_dim: 3,
                time_step: 5,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            ..TrainOptions::default()
        };
        let rows = compare_on_records(&records, &options, 5);
        let names: Vec<&str> = rows.iter().map(|r| r.algorithm.as_str()).collect();
        assert_eq!(
            names,
            [
                "LSTM (Unit 1)",
                "LSTM (Unit 3)",
                "CNN+BiLSTM",
                "LSTM+CNN",
                "FB_Prophet",
                "ARIMA(0,1,0)",
                "SMA(5)",
                PROPOSED_MODEL
            ]
        );
        assert_eq!(rows[2].outcome, CompareOutcome::NotImplemented);
        assert!(
            rows.iter().all(|r| !matches!(r.outcome, CompareOutcome::Failed(..))),
            "{rows:?}"
        );
        let table = compare_table_csv(&rows);
        assert!(table.starts_with("algorithm,rmse,time_sec,r2\n"));
        assert!(table.contains("CNN+BiLSTM,not-implemented,not-implemented,not-implemented"));
    }

    #[test]
    fn failed_model_does_not_abort_compare() {
        let records = synthetic_records(60);
        let options = TrainOptions {
            model: ModelConfig {
                hidden_units: 3,
                attention_dim: 3,
                time_step: 5,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                epochs: 1,
                batch_size: 0,
                ..TrainConfig::default()
            },
            ..TrainOptions::default()
        };
        let rows = compare_on_records(&records, &options, 5);
        let proposed = rows.iter().find(|r| r.algorithm == PROPOSED_MODEL).unwrap();
        assert!(matches!(proposed.outcome, CompareOutcome::Failed(..)));
        let arima = rows.iter().find(|r| r.algorithm == "ARIMA(0,1,0)").unwrap();
        assert!(matches!(arima.outcome, CompareOutcome::Scored { .. }));
    }

    #[test]
    fn indicator_csv_layout() {
        let records = synthetic_records(30);
        let out = indicators_on_records(&records, Feature::AdjClose, &[3, 10]).unwrap();
        let csv = out.sma_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "date,price,sma_3,sma_10");
        assert_eq!(lines.len(), 31);
        assert!(lines[1].ends_with(",,"));
        assert!(!lines[10].ends_with(','));
        assert_eq!(out.correlation.labels.len(), 6);
        assert!(write_csv(&records).starts_with("Date,"));
    }
}

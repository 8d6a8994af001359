//! Daily OHLCV histories in the Yahoo Finance CSV layout.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume";
const HEADER_FIELDS: [&str; 7] = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"];
const DATE_FORMAT: &str = "%Y-%m-%d";

/// One trading day.
#[derive(Clone, Debug, PartialEq)]
pub struct OhlcvRecord {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: u64,
}

impl OhlcvRecord {
    /// Checks positivity of prices and the low/high envelope.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let prices = [
            ("Open", self.open),
            ("High", self.high),
            ("Low", self.low),
            ("Close", self.close),
            ("Adj Close", self.adj_close),
        ];
        for (name, p) in prices {
            if !p.is_finite() || p <= 0.0 {
                return Err(format!("{name} must be a finite positive price, got {p}"));
            }
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "Low {} exceeds min(Open, Close) = {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "High {} is below max(Open, Close) = {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        Ok(())
    }

    pub fn value(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Open => self.open,
            Feature::High => self.high,
            Feature::Low => self.low,
            Feature::Close => self.close,
            Feature::AdjClose => self.adj_close,
            Feature::Volume => self.volume as f64,
        }
    }
}

/// The six numeric CSV columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    Open,
    High,
    Low,
    Close,
    #[serde(rename = "Adj Close")]
    AdjClose,
    Volume,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Open,
        Feature::High,
        Feature::Low,
        Feature::Close,
        Feature::AdjClose,
        Feature::Volume,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Feature::Open => "Open",
            Feature::High => "High",
            Feature::Low => "Low",
            Feature::Close => "Close",
            Feature::AdjClose => "Adj Close",
            Feature::Volume => "Volume",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.label() == s)
            .ok_or_else(|| Error::UnknownFeature(s.to_string()))
    }
}

/// A single column of prices indexed by strictly increasing dates.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    feature_name: String,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>, feature_name: impl Into<String>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: values.len(),
            });
        }
        if dates.is_empty() {
            return Err(Error::EmptyInput);
        }
        check_increasing(&dates)?;
        Ok(Self {
            dates,
            values,
            feature_name: feature_name.into(),
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn feature_name(&self) -> &str {
        &self.feature_name
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("series is nonempty")
    }
}

/// Train/test partition of one series, in time order.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSeries {
    pub train: PriceSeries,
    pub test: PriceSeries,
    pub ratio: f64,
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    for (i, pair) in dates.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            return Err(Error::UnorderedDates {
                index: i + 1,
                previous: pair[0],
                date: pair[1],
            });
        }
    }
    Ok(())
}

/// Parses a Yahoo-layout CSV. Every row is validated; the first bad row aborts.
pub fn parse_csv(text: &str) -> Result<Vec<OhlcvRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());

    let header = reader.headers().map_err(|e| Error::Header {
        expected: CSV_HEADER.to_string(),
        found: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    if found != HEADER_FIELDS {
        return Err(Error::Header {
            expected: CSV_HEADER.to_string(),
            found: found.join(","),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Row {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let record = parse_row(&row).map_err(|message| Error::Row { line, message })?;
        record.validate().map_err(|message| Error::Row { line, message })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(records)
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<OhlcvRecord, String> {
    let date = NaiveDate::parse_from_str(&row[0], DATE_FORMAT).map_err(|e| format!("bad date `{}`: {e}", &row[0]))?;
    let price = |i: usize| -> std::result::Result<f64, String> {
        row[i]
            .parse::<f64>()
            .map_err(|_| format!("bad {} value `{}`", HEADER_FIELDS[i], &row[i]))
    };
    let volume = row[6]
        .parse::<i64>()
        .map_err(|_| format!("bad Volume value `{}`", &row[6]))?;
    if volume < 0 {
        return Err(format!("negative volume {volume}"));
    }
    Ok(OhlcvRecord {
        date,
        open: price(1)?,
        high: price(2)?,
        low: price(3)?,
        close: price(4)?,
        adj_close: price(5)?,
        volume: volume as u64,
    })
}

/// Writes records back out in the same layout; `parse_csv` reads it back exactly.
pub fn write_csv(records: &[OhlcvRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.date.format(DATE_FORMAT),
            r.open,
            r.high,
            r.low,
            r.close,
            r.adj_close,
            r.volume
        ));
    }
    out
}

pub fn select_feature(records: &[OhlcvRecord], feature: Feature) -> Result<PriceSeries> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dates = records.iter().map(|r| r.date).collect();
    let values = records.iter().map(|r| r.value(feature)).collect();
    PriceSeries::new(dates, values, feature.label())
}

/// Splits into the first `floor(ratio * len)` points and the remainder.
pub fn chronological_split(series: &PriceSeries, ratio: f64) -> Result<SplitSeries> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidRatio(ratio));
    }
    let len = series.len();
    let cut = (ratio * len as f64).floor() as usize;
    if cut == 0 || cut >= len {
        return Err(Error::EmptyPartition { len, ratio });
    }
    let part = |range: std::ops::Range<usize>| PriceSeries {
        dates: series.dates[range.clone()].to_vec(),
        values: series.values[range].to_vec(),
        feature_name: series.feature_name.clone(),
    };
    Ok(SplitSeries {
        train: part(0..cut),
        test: part(cut..len),
        ratio,
    })
}

/// Daily bars on consecutive calendar days whose close and adjusted close
/// follow `prices`. The other columns are derived so every row validates.
pub fn records_from_prices(start: NaiveDate, prices: &[f64]) -> Result<Vec<OhlcvRecord>> {
    let mut out = Vec::with_capacity(prices.len());
    for (i, &p) in prices.iter().enumerate() {
        let open = if i == 0 { p } else { prices[i - 1] };
        let record = OhlcvRecord {
            date: start + chrono::Days::new(i as u64),
            open,
            high: open.max(p) * 1.005,
            low: open.min(p) * 0.995,
            close: p,
            adj_close: p,
            volume: 100_000 + (i as u64 * 7919) % 50_000,
        };
        record.validate().map_err(|message| Error::Row {
            line: i as u64 + 2,
            message,
        })?;
        out.push(record);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

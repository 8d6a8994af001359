//! Parse Yahoo-style OHLCV text, pick a column, split in time order, then
//! scale and window it the way training does.

use stockcast::market_data::{chronological_split, parse_csv, select_feature};
use stockcast::preprocess::{fit_scaler, make_windows};
use stockcast::Feature;

const CSV: &str = "\
Date,Open,High,Low,Close,Adj Close,Volume
2012-05-02,226.000,227.399,223.589,225.490,201.734,14151468
2012-05-03,224.490,225.199,217.589,218.529,195.507,22217498
2012-05-04,216.710,217.800,211.800,213.080,190.631,23393598
2012-05-07,210.000,214.589,207.520,212.979,190.541,22101262
2012-05-08,212.500,213.429,207.789,208.440,186.480,13876408
2012-05-09,206.500,207.800,203.250,204.820,183.241,18911248
2012-05-10,204.000,206.350,202.289,205.380,183.742,21339212
2012-05-11,205.000,205.389,200.600,201.660,180.414,15604722
";

fn main() -> stockcast::Result<()> {
    let records = parse_csv(CSV)?;
    println!("{} rows, first {}", records.len(), records[0].date);

    let series = select_feature(&records, Feature::AdjClose)?;
    let split = chronological_split(&series, 0.75)?;
    println!("train {} rows, test {} rows", split.train.len(), split.test.len());

    // The scaler only sees the training side.
    let scaler = fit_scaler(split.train.values())?;
    println!("scaler min {:.3} max {:.3}", scaler.min(), scaler.max());

    let scaled = scaler.scale_all(series.values());
    let windows = make_windows(&scaled, 3)?;
    for (x, y) in windows.inputs.iter().zip(&windows.targets) {
        let x: Vec<String> = x.iter().map(|v| format!("{v:+.3}")).collect();
        println!("[{}] -> {y:+.3}", x.join(" "));
    }
    Ok(())
}

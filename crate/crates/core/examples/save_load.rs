//! Round-trip a trained model through the `.ssam` text format.

use chrono::NaiveDate;

use stockcast::market_data::records_from_prices;
use stockcast::model_store::{load, save_to_string};
use stockcast::training::TrainConfig;
use stockcast::workflow::{train_on_records, TrainOptions};

fn main() -> stockcast::Result<()> {
    let prices: Vec<f64> = (0..120).map(|i| 20.0 + (i as f64 * 0.2).cos()).collect();
    let records = records_from_prices(NaiveDate::from_ymd_opt(2022, 3, 1).unwrap(), &prices)?;
    let options = TrainOptions {
        train: TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
        ..TrainOptions::default()
    };
    let trained = train_on_records(&records, &options, |_| {})?;

    let text = save_to_string(&trained.bundle(&options))?;
    println!("{} bytes; header:", text.len());
    for line in text.lines().take(12) {
        println!("  {line}");
    }

    let restored = load(text.as_bytes())?.to_params()?;
    let window = trained.data.test_windows.window(0);
    let (a, b) = (trained.params.predict(&window)?, restored.predict(&window)?);
    println!(
        "prediction before {a:e}, after {b:e}, bit-identical: {}",
        a.to_bits() == b.to_bits()
    );
    Ok(())
}

//! Which of the last ten days does a trained model attend to?

use chrono::NaiveDate;

use stockcast::market_data::records_from_prices;
use stockcast::model::model_forward;
use stockcast::training::TrainConfig;
use stockcast::workflow::{train_on_records, TrainOptions};

fn main() -> stockcast::Result<()> {
    let prices: Vec<f64> = (0..300)
        .map(|i| 50.0 + 0.05 * i as f64 + 3.0 * (i as f64 * 0.3).sin())
        .collect();
    let records = records_from_prices(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), &prices)?;
    let options = TrainOptions {
        train: TrainConfig {
            epochs: 15,
            ..TrainConfig::default()
        },
        ..TrainOptions::default()
    };
    let trained = train_on_records(&records, &options, |_| {})?;

    let window = trained.data.test_windows.window(0);
    let (y, cache) = model_forward(&trained.params, &window)?;
    let scores = cache.attention.expect("attention model").scores();
    println!("prediction (scaled) {y:.4}\n");
    println!("query  weights over key steps 0..{}", scores.cols() - 1);
    for i in 0..scores.rows() {
        let row: Vec<String> = scores.row(i).iter().map(|p| format!("{p:.3}")).collect();
        println!("{i:>5}  {}", row.join(" "));
    }
    Ok(())
}

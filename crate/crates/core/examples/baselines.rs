//! The comparison table: plain LSTMs, the attention model, a random walk
//! and a moving average, all on one split.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stockcast::market_data::records_from_prices;
use stockcast::training::TrainConfig;
use stockcast::workflow::{compare_on_records, compare_table_csv, TrainOptions};

fn main() -> stockcast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p = 300.0;
    let prices: Vec<f64> = (0..600)
        .map(|i| {
            p += 0.4 * (i as f64 * 0.05).sin() + rng.gen_range(-1.5..1.5);
            p
        })
        .collect();
    let records = records_from_prices(NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(), &prices)?;
    let options = TrainOptions {
        train: TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
        ..TrainOptions::default()
    };
    print!("{}", compare_table_csv(&compare_on_records(&records, &options, 10)));
    Ok(())
}

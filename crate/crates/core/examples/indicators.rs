//! Moving averages, the best-tracking window, and the feature correlation
//! matrix for a synthetic price path.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stockcast::market_data::records_from_prices;
use stockcast::workflow::indicators_on_records;
use stockcast::Feature;

fn main() -> stockcast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut p = 200.0;
    let prices: Vec<f64> = (0..400)
        .map(|_| {
            p *= 1.0 + rng.gen_range(-0.02..0.021);
            p
        })
        .collect();
    let records = records_from_prices(NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), &prices)?;

    let out = indicators_on_records(&records, Feature::AdjClose, &[10, 20, 50])?;
    for s in &out.smas {
        println!(
            "SMA({:>2}): {} values, last {:.2}",
            s.window_n,
            s.values.len(),
            s.values.last().unwrap()
        );
    }
    println!(
        "closest fit: SMA({}) with rmse {:.3}\n",
        out.best_window.0, out.best_window.1
    );
    print!("{}", out.correlation.to_csv());
    Ok(())
}

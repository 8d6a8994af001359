//! Train the default LSTM + attention model on a noiseless sine wave and
//! score the held-out tail.

use chrono::NaiveDate;

use stockcast::market_data::records_from_prices;
use stockcast::workflow::{train_on_records, TrainOptions};

fn main() -> stockcast::Result<()> {
    let prices: Vec<f64> = (0..500).map(|i| 100.0 + 10.0 * (i as f64 * 0.1).sin()).collect();
    let records = records_from_prices(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), &prices)?;

    let options = TrainOptions::default();
    let trained = train_on_records(&records, &options, |r| {
        if r.epoch % 10 == 0 {
            println!("epoch {:>3}  loss {:.3e}", r.epoch, r.mean_loss);
        }
    })?;
    println!("trained in {:.1}s", trained.train_secs);

    let report = trained.evaluate()?;
    println!("{}", report.summary_line());
    for row in report.rows.iter().take(5) {
        println!(
            "{}  actual {:.3}  predicted {:.3}  err {:+.3} ({:.2}%)",
            row.date, row.actual, row.predicted, row.forecast_error, row.error_percent
        );
    }
    Ok(())
}

//! Per-day forecast error and error percentage from (actual, predicted)
//! pairs, plus the summary metrics.

use stockcast::evaluation::forecast_report;

fn main() -> stockcast::Result<()> {
    let dates = [
        "2021-06-01",
        "2021-06-02",
        "2021-06-03",
        "2021-06-04",
        "2022-05-26",
        "2022-05-30",
    ];
    let actual = [422.060, 426.548, 432.899, 426.942, 469.000, 474.450];
    let predicted = [414.115, 421.643, 425.945, 432.451, 453.817, 467.755];

    let report = forecast_report(&dates, &actual, &predicted)?;
    print!("{}", report.to_csv());
    println!("{}", report.summary_line());
    Ok(())
}

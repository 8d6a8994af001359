//! Backpropagation against central finite differences on a small model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stockcast::model::init_params;
use stockcast::training::{backward, finite_diff_grad, max_relative_error, DEFAULT_FD_EPS};
use stockcast::{Matrix, ModelConfig};

fn main() -> stockcast::Result<()> {
    for seed in 0..5 {
        let config = ModelConfig {
            hidden_units: 5,
            attention_dim: 5,
            time_step: 4,
            seed,
            ..ModelConfig::default()
        };
        let params = init_params(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let windows: Vec<Matrix> = (0..3)
            .map(|_| Matrix::column(&(0..4).map(|_| rng.gen::<f64>()).collect::<Vec<_>>()))
            .collect::<stockcast::Result<_>>()?;
        let targets: Vec<f64> = (0..3).map(|_| rng.gen()).collect();

        let (loss, analytic) = backward(&params, &windows, &targets)?;
        let numeric = finite_diff_grad(&params, &windows, &targets, DEFAULT_FD_EPS)?;
        let (err, tensor) = max_relative_error(&analytic, &numeric);
        println!(
            "seed {seed}: loss {loss:.5}, {} parameters, worst relative error {err:.2e} ({tensor})",
            params.scalar_count()
        );
    }
    Ok(())
}

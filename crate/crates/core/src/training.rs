//! Loss, exact gradients, a finite-difference oracle, Adam, and the training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{accumulate_gradients, init_params, model_forward, Gradients, ModelConfig, ModelParams};
use crate::preprocess::WindowedDataset;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle: bool,
    pub shuffle_seed: u64,
    pub hyper: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            epochs: 50,
            shuffle: true,
            shuffle_seed: 42,
            hyper: AdamHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        self.hyper.validate()
    }
}

pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("mse_loss"));
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / predictions.len() as f64)
}

fn batch_predictions(params: &ModelParams, windows: &[&Matrix]) -> Result<Vec<f64>> {
    windows
        .iter()
        .map(|w| model_forward(params, w).map(|(y, _)| y))
        .collect()
}

fn check_batch(windows: &[&Matrix], targets: &[f64]) -> Result<()> {
    if windows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: windows.len(),
            right: targets.len(),
        });
    }
    if windows.is_empty() {
        return Err(Error::Empty("batch"));
    }
    Ok(())
}

/// Batch MSE and its exact gradient with respect to every parameter.
pub fn backward(params: &ModelParams, windows: &[Matrix], targets: &[f64]) -> Result<(f64, Gradients)> {
    let refs: Vec<&Matrix> = windows.iter().collect();
    backward_refs(params, &refs, targets)
}

pub(crate) fn backward_refs(params: &ModelParams, windows: &[&Matrix], targets: &[f64]) -> Result<(f64, Gradients)> {
    check_batch(windows, targets)?;
    // Per-sample work runs in parallel; the reduction below is sequential so
    // the result does not depend on scheduling.
    let per_sample = windows
        .par_iter()
        .zip(targets.par_iter())
        .map(|(w, &target)| -> Result<(f64, Gradients)> {
            let (y, cache) = model_forward(params, w)?;
            let mut g = params.zeros_like();
            accumulate_gradients(params, &cache, 2.0 * (y - target), &mut g);
            Ok(((y - target) * (y - target), g))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = windows.len() as f64;
    let mut iter = per_sample.into_iter();
    let (mut loss, mut grads) = iter.next().expect("batch is nonempty");
    for (l, g) in iter {
        loss += l;
        for ((_, acc), (_, add)) in grads.tensors_mut().into_iter().zip(g.tensors()) {
            for (a, b) in acc.values_mut().iter_mut().zip(add.values()) {
                *a += b;
            }
        }
    }
    for (_, m) in grads.tensors_mut() {
        m.values_mut().iter_mut().for_each(|v| *v /= n);
    }
    Ok((loss / n, grads))
}

/// `(f(x + eps) - f(x - eps)) / (2 eps)`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Numerical gradient of the batch MSE by central differences, one scalar at a time.
pub fn finite_diff_grad(params: &ModelParams, windows: &[Matrix], targets: &[f64], eps: f64) -> Result<Gradients> {
    let refs: Vec<&Matrix> = windows.iter().collect();
    check_batch(&refs, targets)?;
    let shapes: Vec<usize> = params.tensors().iter().map(|(_, m)| m.len()).collect();
    let coords: Vec<(usize, usize)> = shapes
        .iter()
        .enumerate()
        .flat_map(|(t, &len)| (0..len).map(move |i| (t, i)))
        .collect();

    let derivs = coords
        .par_iter()
        .map(|&(t, i)| -> Result<f64> {
            let mut probe = params.clone();
            let base = probe.tensors()[t].1.values()[i];
            let (hi, lo) = (base + eps, base - eps);
            let mut eval = |x: f64| -> Result<Vec<f64>> {
                probe.tensors_mut()[t].1.values_mut()[i] = x;
                batch_predictions(&probe, &refs)
            };
            let plus = eval(hi)?;
            let minus = eval(lo)?;
            // (p+ - y)^2 - (p- - y)^2 factored, so the loss difference is not
            // the cancellation of two rounded sums. The divisor is the step
            // actually representable around `base`.
            let diff: f64 = plus
                .iter()
                .zip(&minus)
                .zip(targets)
                .map(|((a, b), y)| (a - b) * (a + b - 2.0 * y))
                .sum();
            Ok(diff / targets.len() as f64 / (hi - lo))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut grads = params.zeros_like();
    let mut it = derivs.into_iter();
    for (_, m) in grads.tensors_mut() {
        for v in m.values_mut() {
            *v = it.next().expect("one derivative per scalar");
        }
    }
    Ok(grads)
}

/// Largest `|a - b| / max(1e-8, |a| + |b|)` over all parameters, with the tensor it occurs in.
pub fn max_relative_error(a: &Gradients, b: &Gradients) -> (f64, &'static str) {
    let mut worst = (0.0, "");
    for ((name, x), (_, y)) in a.tensors().into_iter().zip(b.tensors()) {
        for (p, q) in x.values().iter().zip(y.values()) {
            let rel = (p - q).abs() / (p.abs() + q.abs()).max(1e-8);
            if rel > worst.0 {
                worst = (rel, name);
            }
        }
    }
    worst
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &Gradients, hyper: &AdamHyper) -> Result<()> {
    let shapes = |p: &ModelParams| p.tensors().iter().map(|(_, m)| m.shape()).collect::<Vec<_>>();
    let param_shapes = shapes(params);
    if param_shapes != shapes(grads) || param_shapes != shapes(&state.m) {
        return Err(Error::InvalidConfig("gradient layout does not match parameters".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);

    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().into_iter().zip(state.v.tensors_mut()));
    for (((_, p), (_, g)), ((_, m), (_, v))) in tensors {
        let (p, m, v) = (p.values_mut(), m.values_mut(), v.values_mut());
        for (k, &gk) in g.values().iter().enumerate() {
            m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * gk;
            v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * gk * gk;
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            p[k] -= hyper.alpha * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}

/// Per-epoch progress passed to a training observer.
#[derive(Clone, Copy, Debug)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_history: Vec<f64>,
    pub steps: u64,
}

pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    dataset: &WindowedDataset,
) -> Result<TrainOutcome> {
    train_with_observer(model_config, train_config, dataset, |_| {})
}

/// Trains from freshly initialised parameters, calling `observer` after each epoch.
pub fn train_with_observer(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    dataset: &WindowedDataset,
    mut observer: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    train_config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    if dataset.time_step != model_config.time_step {
        return Err(Error::InvalidConfig(format!(
            "dataset time step {} does not match model time step {}",
            dataset.time_step, model_config.time_step
        )));
    }
    let mut params = init_params(model_config)?;
    let mut state = AdamState::new(&params);
    let windows = dataset.windows();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_history = Vec::with_capacity(train_config.epochs);
    let start = Instant::now();

    for epoch in 0..train_config.epochs {
        if train_config.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(train_config.shuffle_seed.wrapping_add(epoch as u64));
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for batch in order.chunks(train_config.batch_size) {
            let ws: Vec<&Matrix> = batch.iter().map(|&i| &windows[i]).collect();
            let ts: Vec<f64> = batch.iter().map(|&i| dataset.targets[i]).collect();
            let (loss, grads) = backward_refs(&params, &ws, &ts)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss became {loss} in epoch {}", epoch + 1)));
            }
            total += loss * batch.len() as f64;
            adam_step(&mut state, &mut params, &grads, &train_config.hyper)?;
        }
        let mean_loss = total / dataset.len() as f64;
        loss_history.push(mean_loss);
        observer(&EpochReport {
            epoch: epoch + 1,
            mean_loss,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
    }
    if let Some((name, _)) = params
        .tensors()
        .into_iter()
        .find(|(_, m)| m.values().iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Numeric(format!("parameter tensor {name} became non-finite")));
    }
    Ok(TrainOutcome {
        params,
        loss_history,
        steps: state.t,
    })
}

/// Mean squared error of `params` over a whole dataset.
pub fn dataset_mse(params: &ModelParams, dataset: &WindowedDataset) -> Result<f64> {
    let windows = dataset.windows();
    let refs: Vec<&Matrix> = windows.iter().collect();
    mse_loss(&batch_predictions(params, &refs)?, &dataset.targets)
}

//! Finite-difference check of the batch MSE gradient.

use crate::scalar::Scalar;

use super::params::ProbeParams;

pub const FD_STEP: f64 = 1e-5;

/// Mean squared error of the head on standardized inputs, with its
/// analytic gradient over the flat trainable parameters.
pub fn batch_loss_and_grad<T: Scalar>(probe: &ProbeParams<T>, xs: &[Vec<T>], ys: &[T]) -> (T, Vec<T>) {
    let mut grad = vec![T::zero(); probe.n_trainable()];
    let scale = T::one() / T::of_usize(xs.len());
    let sse: T = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| probe.accumulate_grad(x, y, scale, &mut grad))
        .sum();
    (sse * scale, grad)
}

pub fn batch_loss<T: Scalar>(probe: &ProbeParams<T>, xs: &[Vec<T>], ys: &[T]) -> T {
    let sse: T = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let e = probe.forward_std(x) - y;
            e * e
        })
        .sum();
    sse / T::of_usize(xs.len())
}

/// Largest relative deviation between the analytic gradient and central
/// differences with step 1e-5 over every trainable parameter. Inputs are
/// standardized with the probe's own statistics first.
///
/// The relative error of one coordinate is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(probe: &ProbeParams<f64>, features: &[Vec<f64>], targets: &[f64]) -> f64 {
    assert!(!features.is_empty(), "gradient check needs a non-empty batch");
    let xs: Vec<Vec<f64>> = features
        .iter()
        .map(|h| probe.standardize(h).expect("feature dimension matches probe"))
        .collect();
    let (_, analytic) = batch_loss_and_grad(probe, &xs, targets);
    let base = probe.to_flat();
    let mut work = probe.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut flat = base.clone();
        flat[i] = base[i] + FD_STEP;
        work.set_flat(&flat);
        let up = batch_loss(&work, &xs, targets);
        flat[i] = base[i] - FD_STEP;
        work.set_flat(&flat);
        let down = batch_loss(&work, &xs, targets);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

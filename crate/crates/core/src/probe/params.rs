use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{unit_clamp, Scalar};

pub const SCALE_FLOOR: f64 = 1e-6;
pub const DEFAULT_MLP_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadKind {
    #[default]
    Linear,
    /// One rectified-linear hidden layer.
    Mlp { width: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MlpHidden<T> {
    pub width: usize,
    pub hidden_bias: Vec<T>,
    pub output_weights: Vec<T>,
}

/// Per-dimension feature standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureStats<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> FeatureStats<T> {
    /// Mean and population standard deviation, scale floored at 1e-6.
    pub fn fit(features: &[Vec<T>]) -> Result<Self> {
        let first = features
            .first()
            .ok_or_else(|| Error::Precondition("cannot standardize an empty feature set".into()))?;
        let d = first.len();
        let n = T::of_usize(features.len());
        let mut mean = vec![T::zero(); d];
        for x in features {
            if x.len() != d {
                return Err(Error::Dimension { expected: d, actual: x.len() });
            }
            for (m, &v) in mean.iter_mut().zip(x) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![T::zero(); d];
        for x in features {
            for ((s, &v), &m) in var.iter_mut().zip(x).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        let floor = T::of(SCALE_FLOOR);
        let scale = var.into_iter().map(|s| (s / n).sqrt().max(floor)).collect();
        Ok(Self { mean, scale })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![T::zero(); d],
            scale: vec![T::one(); d],
        }
    }

    pub fn apply(&self, h: &[T], out: &mut [T]) {
        for (((o, &x), &m), &s) in out.iter_mut().zip(h).zip(&self.mean).zip(&self.scale) {
            *o = (x - m) / s;
        }
    }
}

/// Confidence head parameters.
///
/// For the linear head `w` has length `d`. For the MLP head `w` is the
/// first-layer matrix, row-major `width x d`, and `b` is the output bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProbeParams<T> {
    pub w: Vec<T>,
    pub b: T,
    pub mlp_hidden: Option<MlpHidden<T>>,
    pub feat_mean: Vec<T>,
    pub feat_scale: Vec<T>,
}

impl<T: Scalar> ProbeParams<T> {
    /// Seeded initialization: weights uniform in `±1/sqrt(fan_in)`, output
    /// bias 0.
    pub fn fresh(head: HeadKind, stats: FeatureStats<T>, seed: u64) -> Self {
        let d = stats.mean.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |fan_in: usize, count: usize| -> Vec<T> {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..count).map(|_| T::of(rng.random_range(-bound..bound))).collect()
        };
        let (w, mlp_hidden) = match head {
            HeadKind::Linear => (uniform(d, d), None),
            HeadKind::Mlp { width } => {
                let w = uniform(d, width * d);
                let hidden_bias = uniform(d, width);
                let output_weights = uniform(width, width);
                (
                    w,
                    Some(MlpHidden {
                        width,
                        hidden_bias,
                        output_weights,
                    }),
                )
            }
        };
        Self {
            w,
            b: T::zero(),
            mlp_hidden,
            feat_mean: stats.mean,
            feat_scale: stats.scale,
        }
    }

    pub fn constant(d: usize, bias: T) -> Self {
        let stats = FeatureStats::identity(d);
        Self {
            w: vec![T::zero(); d],
            b: bias,
            mlp_hidden: None,
            feat_mean: stats.mean,
            feat_scale: stats.scale,
        }
    }

    pub fn d(&self) -> usize {
        self.feat_mean.len()
    }

    pub fn head(&self) -> HeadKind {
        match &self.mlp_hidden {
            None => HeadKind::Linear,
            Some(m) => HeadKind::Mlp { width: m.width },
        }
    }

    pub fn stats(&self) -> FeatureStats<T> {
        FeatureStats {
            mean: self.feat_mean.clone(),
            scale: self.feat_scale.clone(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let d = self.d();
        if self.feat_scale.len() != d {
            return Err(Error::Dimension { expected: d, actual: self.feat_scale.len() });
        }
        if self.feat_scale.iter().any(|s| !(*s > T::zero())) {
            return Err(Error::Precondition("feat_scale entries must be positive".into()));
        }
        let expected_w = match &self.mlp_hidden {
            None => d,
            Some(m) => {
                if m.hidden_bias.len() != m.width || m.output_weights.len() != m.width {
                    return Err(Error::Dimension {
                        expected: m.width,
                        actual: m.hidden_bias.len().min(m.output_weights.len()),
                    });
                }
                m.width * d
            }
        };
        if self.w.len() != expected_w {
            return Err(Error::Dimension { expected: expected_w, actual: self.w.len() });
        }
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn n_trainable(&self) -> usize {
        self.w.len() + 1 + self.mlp_hidden.as_ref().map_or(0, |m| 2 * m.width)
    }

    /// Trainable parameters in the order `w, [hidden_bias, output_weights], b`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = self.w.clone();
        if let Some(m) = &self.mlp_hidden {
            out.extend_from_slice(&m.hidden_bias);
            out.extend_from_slice(&m.output_weights);
        }
        out.push(self.b);
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        let nw = self.w.len();
        self.w.copy_from_slice(&flat[..nw]);
        let mut at = nw;
        if let Some(m) = self.mlp_hidden.as_mut() {
            m.hidden_bias.copy_from_slice(&flat[at..at + m.width]);
            at += m.width;
            m.output_weights.copy_from_slice(&flat[at..at + m.width]);
            at += m.width;
        }
        self.b = flat[at];
    }

    /// Which flat entries receive weight decay (weights yes, biases no).
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.w.len()];
        if let Some(m) = &self.mlp_hidden {
            mask.extend(std::iter::repeat_n(false, m.width));
            mask.extend(std::iter::repeat_n(true, m.width));
        }
        mask.push(false);
        mask
    }

    /// Head output on an already standardized input.
    pub fn forward_std(&self, x: &[T]) -> T {
        match &self.mlp_hidden {
            None => dot(&self.w, x) + self.b,
            Some(m) => {
                let d = x.len();
                let mut out = self.b;
                for j in 0..m.width {
                    let z = dot(&self.w[j * d..(j + 1) * d], x) + m.hidden_bias[j];
                    if z > T::zero() {
                        out = out + m.output_weights[j] * z;
                    }
                }
                out
            }
        }
    }

    pub fn standardize(&self, h: &[T]) -> Result<Vec<T>> {
        if h.len() != self.d() {
            return Err(Error::Dimension { expected: self.d(), actual: h.len() });
        }
        let mut x = vec![T::zero(); h.len()];
        self.stats().apply(h, &mut x);
        Ok(x)
    }

    /// Adds the gradient of `scale * (f(x) - y)^2` w.r.t. the flat
    /// parameters into `grad`; returns the squared error.
    pub fn accumulate_grad(&self, x: &[T], y: T, scale: T, grad: &mut [T]) -> T {
        let d = x.len();
        match &self.mlp_hidden {
            None => {
                let err = dot(&self.w, x) + self.b - y;
                let g = T::of(2.0) * err * scale;
                for (gi, &xi) in grad[..d].iter_mut().zip(x) {
                    *gi = *gi + g * xi;
                }
                let last = grad.len() - 1;
                grad[last] = grad[last] + g;
                err * err
            }
            Some(m) => {
                let width = m.width;
                let mut z = vec![T::zero(); width];
                let mut out = self.b;
                for j in 0..width {
                    z[j] = dot(&self.w[j * d..(j + 1) * d], x) + m.hidden_bias[j];
                    if z[j] > T::zero() {
                        out = out + m.output_weights[j] * z[j];
                    }
                }
                let err = out - y;
                let g = T::of(2.0) * err * scale;
                let (w_grad, rest) = grad.split_at_mut(width * d);
                let (hb_grad, rest) = rest.split_at_mut(width);
                let (ow_grad, b_grad) = rest.split_at_mut(width);
                for j in 0..width {
                    if z[j] > T::zero() {
                        ow_grad[j] = ow_grad[j] + g * z[j];
                        let dz = g * m.output_weights[j];
                        hb_grad[j] = hb_grad[j] + dz;
                        for (gi, &xi) in w_grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *gi = *gi + dz * xi;
                        }
                    }
                }
                b_grad[0] = b_grad[0] + g;
                err * err
            }
        }
    }

    /// Short content hash of the serialized parameters.
    pub fn checkpoint_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("params serialize");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Raw head output and its clamp into [0, 1].
pub fn predict<T: Scalar>(probe: &ProbeParams<T>, h: &[T]) -> Result<(T, T)> {
    let x = probe.standardize(h)?;
    let raw = probe.forward_std(&x);
    Ok((raw, unit_clamp(raw)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_heads_clamp() {
        let p = ProbeParams::<f64>::constant(3, 0.3);
        assert_eq!(predict(&p, &[5.0, -1.0, 2.0]).unwrap(), (0.3, 0.3));
        let p = ProbeParams::<f64>::constant(3, 1.7);
        assert_eq!(predict(&p, &[0.0; 3]).unwrap(), (1.7, 1.0));
    }

    #[test]
    fn clamps_at_zero() {
        let mut p = ProbeParams::<f64>::constant(2, 0.0);
        p.w = vec![1.0, -1.0];
        let (raw, conf) = predict(&p, &[0.2, 0.5]).unwrap();
        assert!((raw + 0.3).abs() < 1e-15);
        assert_eq!(conf, 0.0);
    }

    #[test]
    fn dimension_mismatch_names_lengths() {
        let p = ProbeParams::<f64>::constant(4, 0.0);
        let err = predict(&p, &[1.0, 2.0]).unwrap_err();
        assert_eq!(err.to_string(), "dimension mismatch: expected 4, got 2");
    }

    #[test]
    fn flat_round_trip() {
        let stats = FeatureStats::<f64>::identity(3);
        let mut p = ProbeParams::fresh(HeadKind::Mlp { width: 4 }, stats, 1);
        p.check().unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.n_trainable());
        assert_eq!(p.decay_mask().len(), flat.len());
        let shifted: Vec<f64> = flat.iter().map(|v| v + 1.0).collect();
        p.set_flat(&shifted);
        assert_eq!(p.to_flat(), shifted);
    }

    #[test]
    fn scale_is_floored() {
        let stats = FeatureStats::fit(&[vec![1.0f64, 2.0], vec![1.0, 4.0]]).unwrap();
        assert_eq!(stats.mean, vec![1.0, 3.0]);
        assert_eq!(stats.scale, vec![SCALE_FLOOR, 1.0]);
    }
}

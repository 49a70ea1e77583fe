//! Confidence head on frozen hidden states and its two training stages.
//!
//! Stage 1 (elicitation) fits the head to self-consistency targets over the
//! whole pool. Stage 2 (calibration) fits accuracy targets on a budgeted
//! labeled subset, either warm-started from Stage 1 or from scratch.

pub mod adam;
pub mod gradcheck;
pub mod params;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::subsample_ids;
use crate::scalar::Scalar;
use crate::seed::{self, streams};

pub use adam::{AdamParams, AdamW};
pub use gradcheck::gradient_check;
pub use params::{predict, FeatureStats, HeadKind, MlpHidden, ProbeParams, DEFAULT_MLP_WIDTH, SCALE_FLOOR};

use gradcheck::batch_loss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2From {
    #[default]
    Stage1Params,
    FreshInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub optimizer: AdamParams,
    pub patience: usize,
    pub stage2_from: Stage2From,
    pub head: HeadKind,
    /// Share of each stage's training rows held out for checkpoint selection.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 50,
            seed: 0,
            weight_decay: 1e-2,
            optimizer: AdamParams::default(),
            patience: 5,
            stage2_from: Stage2From::default(),
            head: HeadKind::default(),
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("train config: {msg}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if self.patience < 1 {
            return bad("patience must be >= 1");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        let o = &self.optimizer;
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.epsilon > 0.0) {
            return bad("optimizer needs beta1, beta2 in [0, 1) and epsilon > 0");
        }
        if let HeadKind::Mlp { width } = self.head {
            if width == 0 {
                return bad("mlp width must be >= 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Result of one training stage: the selected parameters and the per-epoch
/// history, epoch 0 being the initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFit<T> {
    pub params: ProbeParams<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    EliOnly,
    CalOnly,
    Elical,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::EliOnly, Mode::CalOnly, Mode::Elical];

    pub fn name(self) -> &'static str {
        match self {
            Mode::EliOnly => "eli_only",
            Mode::CalOnly => "cal_only",
            Mode::Elical => "elical",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn uses_stage1(self) -> bool {
        !matches!(self, Mode::CalOnly)
    }

    pub fn uses_labels(self) -> bool {
        !matches!(self, Mode::EliOnly)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLineage {
    pub stage1: Option<String>,
    pub stage2: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe<T> {
    pub params: ProbeParams<T>,
    pub history: Vec<EpochRecord>,
    pub mode: Mode,
    pub stage_lineage: StageLineage,
}

fn check_inputs<T: Scalar>(features: &[Vec<T>], targets: &[T]) -> Result<()> {
    if features.len() != targets.len() {
        return Err(Error::Precondition(format!(
            "{} feature rows but {} targets",
            features.len(),
            targets.len()
        )));
    }
    if features.len() < 2 {
        return Err(Error::Precondition(format!(
            "training needs at least 2 samples, got {}",
            features.len()
        )));
    }
    if let Some(i) = targets.iter().position(|t| !(*t >= T::zero() && *t <= T::one())) {
        return Err(Error::Precondition(format!(
            "target {i} is {} (outside [0, 1])",
            targets[i]
        )));
    }
    Ok(())
}

fn holdout_size(n: usize, fraction: f64) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Fits the head by mini-batch AdamW on raw (unclamped) outputs and returns
/// the checkpoint with the lowest validation MSE. The feature
/// standardization of `init` is kept fixed.
///
/// With `val_fraction = 0` selection falls back to training MSE.
pub fn train_stage<T: Scalar>(
    init: &ProbeParams<T>,
    features: &[Vec<T>],
    targets: &[T],
    config: &TrainConfig,
) -> Result<StageFit<T>> {
    config.validate()?;
    init.check()?;
    check_inputs(features, targets)?;
    let xs: Vec<Vec<T>> = features.iter().map(|h| init.standardize(h)).collect::<Result<_>>()?;

    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(config.seed, streams::VAL_SPLIT));
    let n_val = holdout_size(n, config.val_fraction);
    let (val_idx, train_idx) = order.split_at(n_val);
    let gather = |idx: &[usize]| -> (Vec<Vec<T>>, Vec<T>) {
        (idx.iter().map(|&i| xs[i].clone()).collect(), idx.iter().map(|&i| targets[i]).collect())
    };
    let (train_x, train_y) = gather(train_idx);
    let (val_x, val_y) = if n_val == 0 { (train_x.clone(), train_y.clone()) } else { gather(val_idx) };

    let mut probe = init.clone();
    let evaluate = |p: &ProbeParams<T>, epoch: usize| -> Result<EpochRecord> {
        let train_mse = batch_loss(p, &train_x, &train_y).as_f64();
        let val_mse = batch_loss(p, &val_x, &val_y).as_f64();
        if !(train_mse.is_finite() && val_mse.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite loss at epoch {epoch}: train_mse={train_mse}, val_mse={val_mse}, lr={}",
                config.learning_rate
            )));
        }
        Ok(EpochRecord { epoch, train_mse, val_mse })
    };

    let mut history = vec![evaluate(&probe, 0)?];
    let mut best = (history[0].val_mse, 0usize, probe.clone());

    let mut opt = AdamW::<T>::new(
        probe.n_trainable(),
        config.learning_rate,
        config.weight_decay,
        config.optimizer,
        probe.decay_mask(),
    );
    let mut shuffle_rng = seed::rng(config.seed, streams::SHUFFLE);
    let mut batch_order: Vec<usize> = (0..train_x.len()).collect();
    let mut flat = probe.to_flat();
    let mut grad = vec![T::zero(); flat.len()];

    for epoch in 1..=config.epochs {
        batch_order.shuffle(&mut shuffle_rng);
        for (b, batch) in batch_order.chunks(config.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::of_usize(batch.len());
            let mut sse = T::zero();
            for &i in batch {
                sse = sse + probe.accumulate_grad(&train_x[i], train_y[i], scale, &mut grad);
            }
            if !sse.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {b}: batch_sse={sse}, lr={}",
                    config.learning_rate
                )));
            }
            opt.step(&mut flat, &grad);
            probe.set_flat(&flat);
        }
        let record = evaluate(&probe, epoch)?;
        history.push(record);
        if record.val_mse < best.0 {
            best = (record.val_mse, epoch, probe.clone());
        } else if epoch - best.1 >= config.patience {
            log::debug!("early stop at epoch {epoch}, best epoch {}", best.1);
            break;
        }
    }
    Ok(StageFit {
        params: best.2,
        history,
        best_epoch: best.1,
    })
}

/// Training rows: raw features with both targets; `accuracy` is `None` for
/// unlabeled rows.
#[derive(Debug, Clone)]
pub struct TrainingPool<T> {
    pub ids: Vec<String>,
    pub features: Vec<Vec<T>>,
    pub self_consistency: Vec<T>,
    pub accuracy: Vec<Option<T>>,
}

impl<T: Scalar> TrainingPool<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.accuracy.iter().filter(|a| a.is_some()).count()
    }

    fn check(&self) -> Result<()> {
        let n = self.ids.len();
        if self.features.len() != n || self.self_consistency.len() != n || self.accuracy.len() != n {
            return Err(Error::Precondition("training pool columns differ in length".into()));
        }
        if n == 0 {
            return Err(Error::Precondition("training pool is empty".into()));
        }
        Ok(())
    }
}

pub fn stage1_seed(seed: u64) -> u64 {
    seed::indexed_seed(seed, "stage", 1)
}

pub fn stage2_seed(seed: u64) -> u64 {
    seed::indexed_seed(seed, "stage", 2)
}

/// Stage 1 on the whole pool. Depends only on the pool and config, so
/// callers running several budgets may compute it once.
pub fn fit_stage1<T: Scalar>(pool: &TrainingPool<T>, config: &TrainConfig) -> Result<StageFit<T>> {
    pool.check()?;
    let stats = FeatureStats::fit(&pool.features)?;
    let cfg = TrainConfig {
        seed: stage1_seed(config.seed),
        ..config.clone()
    };
    let init = ProbeParams::fresh(config.head, stats, seed::sub_seed(cfg.seed, streams::INIT));
    train_stage(&init, &pool.features, &pool.self_consistency, &cfg)
}

/// Trains one probe in the requested mode. `stage1` may carry a
/// precomputed [`fit_stage1`] result for the same pool and config.
pub fn run_mode<T: Scalar>(
    mode: Mode,
    pool: &TrainingPool<T>,
    budget: usize,
    config: &TrainConfig,
    stage1: Option<&StageFit<T>>,
) -> Result<TrainedProbe<T>> {
    config.validate()?;
    pool.check()?;
    let labeled: Vec<&str> = pool
        .ids
        .iter()
        .zip(&pool.accuracy)
        .filter(|(_, a)| a.is_some())
        .map(|(id, _)| id.as_str())
        .collect();
    if mode.uses_labels() {
        if labeled.is_empty() {
            return Err(Error::Precondition(format!(
                "mode {} needs accuracy targets but the pool has none",
                mode.name()
            )));
        }
        if budget > labeled.len() {
            return Err(Error::Budget {
                budget,
                available: labeled.len(),
            });
        }
    }

    let stage1_fit = if mode.uses_stage1() {
        Some(match stage1 {
            Some(fit) => fit.clone(),
            None => fit_stage1(pool, config)?,
        })
    } else {
        None
    };
    let stage1_id = stage1_fit.as_ref().map(|f| f.params.checkpoint_id());

    if mode == Mode::EliOnly {
        let fit = stage1_fit.expect("stage 1 ran");
        return Ok(TrainedProbe {
            params: fit.params,
            history: fit.history,
            mode,
            stage_lineage: StageLineage {
                stage1: stage1_id,
                stage2: None,
            },
        });
    }

    let picked = subsample_ids(&labeled, budget, config.seed)?;
    let row_of: std::collections::HashMap<&str, usize> =
        pool.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let rows: Vec<usize> = picked.iter().map(|id| row_of[id.as_str()]).collect();
    let features: Vec<Vec<T>> = rows.iter().map(|&i| pool.features[i].clone()).collect();
    let targets: Vec<T> = rows.iter().map(|&i| pool.accuracy[i].expect("labeled row")).collect();

    let cfg = TrainConfig {
        seed: stage2_seed(config.seed),
        ..config.clone()
    };
    let init = match (&stage1_fit, config.stage2_from) {
        (Some(fit), Stage2From::Stage1Params) => fit.params.clone(),
        _ => {
            let stats = FeatureStats::fit(&pool.features)?;
            ProbeParams::fresh(config.head, stats, seed::sub_seed(cfg.seed, streams::INIT))
        }
    };
    let fit = train_stage(&init, &features, &targets, &cfg)?;
    let stage2_id = Some(fit.params.checkpoint_id());
    Ok(TrainedProbe {
        params: fit.params,
        history: fit.history,
        mode,
        stage_lineage: StageLineage {
            stage1: stage1_id,
            stage2: stage2_id,
        },
    })
}

/// On-disk probe checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeCheckpoint {
    pub mode: Mode,
    pub d: usize,
    pub w: Vec<f64>,
    pub b: f64,
    pub mlp_hidden: Option<MlpHidden<f64>>,
    pub feat_mean: Vec<f64>,
    pub feat_scale: Vec<f64>,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub stage_lineage: StageLineage,
}

impl ProbeCheckpoint {
    pub fn new(probe: &TrainedProbe<f64>, config: &TrainConfig) -> Self {
        let p = &probe.params;
        Self {
            mode: probe.mode,
            d: p.d(),
            w: p.w.clone(),
            b: p.b,
            mlp_hidden: p.mlp_hidden.clone(),
            feat_mean: p.feat_mean.clone(),
            feat_scale: p.feat_scale.clone(),
            config: config.clone(),
            history: probe.history.clone(),
            stage_lineage: probe.stage_lineage.clone(),
        }
    }

    pub fn params(&self) -> Result<ProbeParams<f64>> {
        let p = ProbeParams {
            w: self.w.clone(),
            b: self.b,
            mlp_hidden: self.mlp_hidden.clone(),
            feat_mean: self.feat_mean.clone(),
            feat_scale: self.feat_scale.clone(),
        };
        if p.d() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                actual: p.d(),
            });
        }
        p.check()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        use rand::Rng;
        let mut rng = seed::rng(11, "toy");
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys = xs.iter().map(|x| (0.5 + 0.2 * x[0]).clamp(0.0, 1.0)).collect();
        (xs, ys)
    }

    #[test]
    fn constant_targets_fit_bias() {
        let (xs, _) = toy(200, 4);
        let ys = vec![0.6; 200];
        let stats = FeatureStats::fit(&xs).unwrap();
        let init = ProbeParams::fresh(HeadKind::Linear, stats, 1);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 200,
            patience: 200,
            ..TrainConfig::default()
        };
        let fit = train_stage(&init, &xs, &ys, &cfg).unwrap();
        let norm = fit.params.w.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!((fit.params.b - 0.6).abs() <= 1e-2, "b = {}", fit.params.b);
        assert!(norm <= 1e-2, "|w| = {norm}");
    }

    #[test]
    fn duplicated_pair_interpolates() {
        let xs = vec![vec![0.3, -1.2, 2.0]; 16];
        let ys = vec![0.8; 16];
        let stats = FeatureStats::fit(&xs).unwrap();
        let init = ProbeParams::fresh(HeadKind::Linear, stats, 2);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 500,
            patience: 500,
            ..TrainConfig::default()
        };
        let fit = train_stage(&init, &xs, &ys, &cfg).unwrap();
        assert!(fit.history.last().unwrap().train_mse <= 1e-6);
    }

    #[test]
    fn history_and_selection() {
        let (xs, ys) = toy(120, 5);
        let stats = FeatureStats::fit(&xs).unwrap();
        let init = ProbeParams::fresh(HeadKind::Linear, stats, 3);
        let cfg = TrainConfig::default();
        let a = train_stage(&init, &xs, &ys, &cfg).unwrap();
        let b = train_stage(&init, &xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history[0].epoch, 0);
        assert!(a.history.windows(2).all(|w| w[0].epoch < w[1].epoch));
        let min = a.history.iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(a.history[a.best_epoch].val_mse, min);
    }

    #[test]
    fn rejections() {
        let init = ProbeParams::<f64>::constant(2, 0.0);
        let cfg = TrainConfig::default();
        assert!(train_stage(&init, &[vec![0.0, 1.0]], &[0.5], &cfg).is_err());
        assert!(train_stage(&init, &vec![vec![0.0, 1.0]; 2], &[0.5, 1.5], &cfg).is_err());
        let bad = TrainConfig { batch_size: 0, ..cfg.clone() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let huge = TrainConfig { learning_rate: 1e300, weight_decay: 0.0, ..cfg };
        let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 1.0e300 * (i % 2) as f64]).collect();
        let init = ProbeParams::fresh(HeadKind::Linear, FeatureStats::identity(2), 1);
        let err = train_stage(&init, &xs, &[0.5; 8], &huge).unwrap_err();
        assert!(matches!(err, Error::Training(_)), "{err}");
    }

    fn pool(n: usize, labeled: usize) -> TrainingPool<f64> {
        let (xs, ys) = toy(n, 4);
        TrainingPool {
            ids: (0..n).map(|i| format!("q{i:04}")).collect(),
            features: xs,
            self_consistency: ys.clone(),
            accuracy: ys.iter().enumerate().map(|(i, &y)| (i < labeled).then_some(y)).collect(),
        }
    }

    #[test]
    fn modes_and_lineage() {
        let p = pool(100, 40);
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
        let eli = run_mode(Mode::EliOnly, &p, 0, &cfg, None).unwrap();
        assert!(eli.stage_lineage.stage2.is_none());
        let s1 = fit_stage1(&p, &cfg).unwrap();
        assert_eq!(eli.params, s1.params);
        let elical = run_mode(Mode::Elical, &p, 20, &cfg, Some(&s1)).unwrap();
        assert_eq!(elical.stage_lineage.stage1, Some(s1.params.checkpoint_id()));
        assert_eq!(elical.stage_lineage.stage2, Some(elical.params.checkpoint_id()));
        let cal = run_mode(Mode::CalOnly, &p, 40, &cfg, None).unwrap();
        assert!(cal.stage_lineage.stage1.is_none());
        let err = run_mode(Mode::CalOnly, &p, 41, &cfg, None).unwrap_err();
        assert_eq!(err.to_string(), "budget exceeds labeled pool: 41 > 40");
        let none = pool(10, 0);
        assert!(matches!(run_mode(Mode::Elical, &none, 1, &cfg, None), Err(Error::Precondition(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = pool(50, 50);
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let t = run_mode(Mode::Elical, &p, 30, &cfg, None).unwrap();
        let ck = ProbeCheckpoint::new(&t, &cfg);
        let text = serde_json::to_string(&ck).unwrap();
        let back: ProbeCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.params().unwrap(), t.params);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["mode", "d", "w", "b", "mlp_hidden", "feat_mean", "feat_scale", "config", "history", "stage_lineage"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}

//! Minibatch SGD with momentum on the cross-entropy or hybrid objective.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, ModelParams};
use crate::canonical_ranks::CanonicalTable;
use crate::error::{Error, Result};
use crate::pl_objective::{cross_entropy_grad, hybrid_loss_grad, select_rank_subset, LossValue, RankTarget, SubsetMode};
use crate::tensor_io::LogitMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub schedule: Schedule,
    pub alpha: f64,
    pub subset_mode: SubsetMode,
    pub subset_n: usize,
    pub hidden: Vec<usize>,
    /// Start the ranking stage from the cross-entropy weights instead of a
    /// fresh initialization.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 64,
            learning_rate: 0.1,
            momentum: 0.9,
            schedule: Schedule::Cosine,
            alpha: 1.0,
            subset_mode: SubsetMode::Full,
            subset_n: 0,
            hidden: vec![64],
            warm_start: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Validation("momentum must lie in [0, 1)".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Validation("alpha must be >= 0".into()));
        }
        Ok(())
    }

    /// Learning rate during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine => {
                let t = epoch as f64 / self.epochs as f64;
                self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    CrossEntropy,
    Hybrid { targets: BTreeMap<usize, RankTarget>, alpha: f64 },
}

impl Objective {
    /// Hybrid objective against the per-class subsets of `canon`.
    pub fn hybrid(canon: &CanonicalTable, mode: SubsetMode, n: usize, alpha: f64) -> Result<Self> {
        let missing = canon.missing();
        if !missing.is_empty() {
            return Err(Error::MissingClasses(missing));
        }
        let targets = canon
            .classes
            .keys()
            .map(|&c| Ok((c, select_rank_subset(&canon.get(c)?, mode, n)?)))
            .collect::<Result<_>>()?;
        Ok(Objective::Hybrid { targets, alpha })
    }

    fn loss_grad(&self, logits: &[f64], label: usize) -> Result<(LossValue, Vec<f64>)> {
        match self {
            Objective::CrossEntropy => {
                let (ce, g) = cross_entropy_grad(logits, label)?;
                Ok((LossValue { total: ce, ce_part: ce, listmle_part: 0.0, alpha: 0.0 }, g))
            }
            Objective::Hybrid { targets, alpha } => {
                let target = targets.get(&label).ok_or(Error::UnknownClass(label))?;
                hybrid_loss_grad(logits, label, target, *alpha)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub learning_rate: f64,
    pub total: f64,
    pub ce: f64,
    pub listmle: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
}

/// Momentum buffer in the heavy-ball form `v <- mu v + g; theta <- theta - lr v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    velocity: Gradients,
}

impl Sgd {
    pub fn new(model: &ModelParams, momentum: f64) -> Self {
        Sgd { momentum, velocity: Gradients::zeros_like(model) }
    }

    pub fn step(&mut self, model: &mut ModelParams, grads: &Gradients, lr: f64) {
        let mu = self.momentum;
        for (li, layer) in model.layers.iter_mut().enumerate() {
            let pairs = [
                (&mut layer.weight, &mut self.velocity.weight[li], &grads.weight[li]),
                (&mut layer.bias, &mut self.velocity.bias[li], &grads.bias[li]),
            ];
            for (param, vel, g) in pairs {
                for ((p, v), &gi) in param.iter_mut().zip(vel.iter_mut()).zip(g.iter()) {
                    *v = mu * *v + gi;
                    *p -= lr * *v;
                }
            }
        }
    }
}

/// Stepwise trainer. Each epoch visits the data in a fresh seeded shuffle.
pub struct Trainer<'a> {
    model: ModelParams,
    sgd: Sgd,
    data: &'a LogitMatrix,
    labels: &'a [u32],
    objective: Objective,
    config: TrainConfig,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    sums: [f64; 3],
}

impl<'a> Trainer<'a> {
    pub fn new(model: ModelParams, data: &'a LogitMatrix, objective: Objective, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let labels = data.require_labels()?;
        if data.cols() != model.arch.input_dim {
            return Err(Error::Validation("feature width does not match the model input".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= model.n_classes()) {
            return Err(Error::Validation(format!("label {l} outside the model's {} classes", model.n_classes())));
        }
        let sgd = Sgd::new(&model, config.momentum);
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f7a_1e00);
        Ok(Trainer {
            model,
            sgd,
            data,
            labels,
            objective,
            config,
            rng,
            order: (0..data.rows()).collect(),
            cursor: 0,
            epoch: 0,
            sums: [0.0; 3],
        })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn into_model(self) -> ModelParams {
        self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One minibatch update. Returns the batch-mean loss.
    pub fn step(&mut self) -> Result<LossValue> {
        if self.cursor == 0 {
            self.order.shuffle(&mut self.rng);
            self.sums = [0.0; 3];
        }
        let end = (self.cursor + self.config.batch_size).min(self.order.len());
        let batch = &self.order[self.cursor..end];
        let mut grads = Gradients::zeros_like(&self.model);
        let mut acc = LossValue { total: 0.0, ce_part: 0.0, listmle_part: 0.0, alpha: 0.0 };
        for &i in batch {
            let x = self.data.row_f64(i);
            let label = self.labels[i] as usize;
            let objective = &self.objective;
            let epoch = self.epoch + 1;
            self.model.backward(&x, &mut grads, |logits| {
                if logits.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { epoch });
                }
                let (v, g) = objective.loss_grad(logits, label)?;
                acc.total += v.total;
                acc.ce_part += v.ce_part;
                acc.listmle_part += v.listmle_part;
                acc.alpha = v.alpha;
                Ok(g)
            })?;
        }
        let n = batch.len() as f64;
        if !acc.total.is_finite() {
            return Err(Error::Divergence { epoch: self.epoch + 1 });
        }
        grads.scale(1.0 / n);
        let lr = self.config.lr_at(self.epoch);
        self.sgd.step(&mut self.model, &grads, lr);
        if !self.model.is_finite() {
            return Err(Error::Divergence { epoch: self.epoch + 1 });
        }
        self.sums[0] += acc.total;
        self.sums[1] += acc.ce_part;
        self.sums[2] += acc.listmle_part;
        self.cursor = end;
        if self.cursor >= self.order.len() {
            self.cursor = 0;
            self.epoch += 1;
        }
        Ok(LossValue { total: acc.total / n, ce_part: acc.ce_part / n, listmle_part: acc.listmle_part / n, alpha: acc.alpha })
    }

    /// Runs one full epoch and returns its per-sample mean losses.
    pub fn run_epoch(&mut self) -> Result<EpochLoss> {
        let epoch = self.epoch;
        let lr = self.config.lr_at(epoch);
        loop {
            self.step()?;
            if self.epoch != epoch {
                break;
            }
        }
        let n = self.data.rows() as f64;
        Ok(EpochLoss { epoch: epoch + 1, learning_rate: lr, total: self.sums[0] / n, ce: self.sums[1] / n, listmle: self.sums[2] / n })
    }

    pub fn run(mut self) -> Result<(ModelParams, LossHistory)> {
        let mut history = LossHistory::default();
        for _ in 0..self.config.epochs {
            history.epochs.push(self.run_epoch()?);
        }
        Ok((self.model, history))
    }
}

/// Hybrid-loss training against frozen canonical rankings.
pub fn train(
    model: ModelParams,
    data: &LogitMatrix,
    targets: &CanonicalTable,
    config: &TrainConfig,
) -> Result<(ModelParams, LossHistory)> {
    let objective = Objective::hybrid(targets, config.subset_mode, config.subset_n, config.alpha)?;
    Trainer::new(model, data, objective, config.clone())?.run()
}

/// Cross-entropy-only training.
pub fn train_ce(model: ModelParams, data: &LogitMatrix, config: &TrainConfig) -> Result<(ModelParams, LossHistory)> {
    Trainer::new(model, data, Objective::CrossEntropy, config.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy_trainer::mlp::{Architecture, Layer};
    use crate::tensor_io::SplitTag;

    #[test]
    fn first_momentum_step_is_plain_sgd() {
        // One parameter, loss 0.5 * (theta - 3)^2 encoded as a 1x1 "layer".
        let mut model = ModelParams {
            arch: Architecture::new(1, vec![], 2),
            layers: vec![Layer { inputs: 1, outputs: 1, weight: vec![1.0], bias: vec![0.0] }],
        };
        let grad = model.layers[0].weight[0] - 3.0;
        let mut g = Gradients::zeros_like(&model);
        g.weight[0][0] = grad;
        let mut sgd = Sgd::new(&model, 0.9);
        sgd.step(&mut model, &g, 0.1);
        assert_eq!(model.layers[0].weight[0], 1.0 - 0.1 * grad);
        // Second step carries velocity 0.9 * grad + grad'.
        let before = model.layers[0].weight[0];
        let grad2 = before - 3.0;
        g.weight[0][0] = grad2;
        sgd.step(&mut model, &g, 0.1);
        assert!((model.layers[0].weight[0] - (before - 0.1 * (0.9 * grad + grad2))).abs() < 1e-15);
    }

    #[test]
    fn cosine_schedule() {
        let cfg = TrainConfig { epochs: 10, ..Default::default() };
        assert_eq!(cfg.lr_at(0), 0.1);
        assert!((cfg.lr_at(5) - 0.05).abs() < 1e-15);
        assert!(cfg.lr_at(9) < cfg.lr_at(8));
        let constant = TrainConfig { schedule: Schedule::Constant, ..cfg };
        assert_eq!(constant.lr_at(7), 0.1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn divergence_names_epoch() {
        let data = LogitMatrix::from_rows(
            &[vec![1e30, -1e30], vec![-1e30, 1e30]],
            Some(vec![1, 0]),
            SplitTag::Train,
        )
        .unwrap();
        let model = ModelParams::init(Architecture::new(2, vec![4], 2), 0).unwrap();
        let cfg = TrainConfig { epochs: 20, learning_rate: 1e6, batch_size: 2, ..Default::default() };
        match train_ce(model, &data, &cfg) {
            Err(Error::Divergence { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    fn separable() -> LogitMatrix {
        use crate::toy_trainer::synth::{generate_synthetic, SyntheticSpec};
        let spec = SyntheticSpec {
            n_classes: 3,
            feature_dim: 6,
            samples_per_class: 100,
            class_similarity: 0.0,
            seed: 3,
            ..Default::default()
        };
        generate_synthetic(&spec).unwrap().train
    }

    fn full_targets(c: usize) -> BTreeMap<usize, RankTarget> {
        (0..c)
            .map(|k| {
                let mut order = vec![k];
                order.extend((0..c).filter(|&j| j != k));
                (k, RankTarget::full(order).unwrap())
            })
            .collect()
    }

    #[test]
    fn zero_alpha_tracks_cross_entropy() {
        let data = separable();
        let cfg = TrainConfig { batch_size: 16, epochs: 5, ..Default::default() };
        let init = ModelParams::init(Architecture::new(6, vec![8], 3), 5).unwrap();
        let mut ce = Trainer::new(init.clone(), &data, Objective::CrossEntropy, cfg.clone()).unwrap();
        let hybrid = Objective::Hybrid { targets: full_targets(3), alpha: 0.0 };
        let mut hy = Trainer::new(init, &data, hybrid, cfg).unwrap();
        for _ in 0..50 {
            let a = ce.step().unwrap();
            let b = hy.step().unwrap();
            assert_eq!(a.total, b.total);
        }
        assert_eq!(ce.model(), hy.model());
    }

    #[test]
    fn cross_entropy_fits_separable_data() {
        let data = separable();
        let cfg = TrainConfig { epochs: 10, hidden: vec![16], ..Default::default() };
        let init = ModelParams::init(Architecture::new(6, vec![16], 3), 0).unwrap();
        let (model, history) = train_ce(init, &data, &cfg).unwrap();
        let acc = crate::metrics_eval::accuracy(&model.logits(&data).unwrap()).unwrap();
        assert!(acc >= 0.99, "{acc}");
        assert!(history.epochs.last().unwrap().ce < history.epochs[0].ce);
    }

    #[test]
    fn hybrid_lowers_listmle() {
        let data = separable();
        let cfg = TrainConfig { epochs: 10, ..Default::default() };
        let init = ModelParams::init(Architecture::new(6, vec![16], 3), 0).unwrap();
        let objective = Objective::Hybrid { targets: full_targets(3), alpha: 1.0 };
        let (_, history) = Trainer::new(init, &data, objective, cfg).unwrap().run().unwrap();
        let first = history.epochs[0].listmle;
        let last = history.epochs.last().unwrap().listmle;
        assert!(last < first, "{first} -> {last}");
    }
}

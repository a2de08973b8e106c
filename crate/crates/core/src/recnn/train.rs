use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{loss, Example, Params, RecnnModel};
use crate::error::{Error, Result};

/// Leaf-vector noise std for transfer fine-tuning unless configured otherwise.
pub const DEFAULT_TRANSFER_NOISE: f64 = 0.01;

/// Which parameter blocks receive updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    #[default]
    All,
    /// Only `V` and `b_p`; used for transfer fine-tuning.
    OutputOnly,
}

impl Trainable {
    fn mask(self) -> [bool; 8] {
        match self {
            Trainable::All => [true; 8],
            Trainable::OutputOnly => [false, false, false, false, false, false, true, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Candidate constant learning rates; the best on the dev set after a
    /// short run is used for full training.
    pub learning_rates: Vec<f64>,
    /// Epochs per candidate during the learning-rate search.
    pub line_search_epochs: usize,
    pub batch_size: usize,
    /// Weight `w >= 1` on the sensitive-class loss term.
    pub sensitive_weight: f64,
    /// Dropout rate on node representations during training.
    pub dropout: f64,
    /// Dev evaluations without improvement before stopping. Evaluations
    /// are probes when `probe_interval > 0`, epoch ends otherwise.
    pub patience: usize,
    pub max_epochs: usize,
    /// Stop once the best dev loss has improved by less than this over the
    /// last `epsilon_window` probes.
    pub epsilon: Option<f64>,
    pub epsilon_window: usize,
    /// Minibatches between dev probes (`0`: evaluate at epoch ends only).
    pub probe_interval: usize,
    pub seed: u64,
    pub trainable: Trainable,
    /// Std of zero-mean Gaussian noise added to leaf vectors during training.
    pub embedding_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rates: vec![0.3, 0.1, 0.03, 0.01],
            line_search_epochs: 1,
            batch_size: 25,
            sensitive_weight: 1.0,
            dropout: 0.1,
            patience: 3,
            max_epochs: 50,
            epsilon: None,
            epsilon_window: 5,
            probe_interval: 0,
            seed: 0,
            trainable: Trainable::All,
            embedding_noise: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() {
            return Err(Error::invalid("at least one learning rate is required"));
        }
        if self
            .learning_rates
            .iter()
            .any(|lr| !(*lr >= 0.0) || !lr.is_finite())
        {
            return Err(Error::invalid("learning rates must be finite and >= 0"));
        }
        if !(self.sensitive_weight >= 1.0) {
            return Err(Error::invalid(format!(
                "sensitive weight must be >= 1, got {}",
                self.sensitive_weight
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        if self.epsilon.is_some_and(|e| !(e >= 0.0)) || self.epsilon_window == 0 {
            return Err(Error::invalid(
                "epsilon must be >= 0 with a window of >= 1 probes",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.embedding_noise >= 0.0) {
            return Err(Error::invalid("embedding noise std must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevScore {
    pub accuracy: f64,
    /// Mean per-sentence loss.
    pub loss: f64,
}

impl DevScore {
    /// Higher accuracy wins; equal accuracy falls back to lower loss.
    pub fn better_than(&self, other: &DevScore) -> bool {
        if self.accuracy.is_nan() || self.loss.is_nan() {
            return false;
        }
        self.accuracy > other.accuracy
            || (self.accuracy == other.accuracy && self.loss < other.loss)
            || other.loss.is_nan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Minibatches processed so far by this trainer.
    pub minibatches: usize,
    pub dev_accuracy: f64,
    pub dev_loss: f64,
}

/// Root-label accuracy and mean loss of `model` on `examples`.
pub fn evaluate(model: &RecnnModel, examples: &[Example], weight: f64) -> Result<DevScore> {
    if examples.is_empty() {
        return Err(Error::insufficient("evaluation set is empty"));
    }
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    for ex in examples {
        let states = model.forward(ex)?;
        let o = states.root_output();
        if u8::from(o[1] > o[0]) == ex.label {
            correct += 1;
        }
        total_loss += loss(&states, ex.label, weight);
    }
    let n = examples.len() as f64;
    Ok(DevScore {
        accuracy: correct as f64 / n,
        loss: total_loss / n,
    })
}

/// When a [`Trainer::run`] call ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Patience on dev score, `max_epochs`, and the optional epsilon rule.
    Converge,
    /// Exactly this many minibatches (bounded by `max_epochs`).
    Budget(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    Epsilon,
    MaxEpochs,
    Budget,
    Hook,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    /// Best-scoring snapshot seen during the run (including the start).
    pub best: RecnnModel,
    pub best_score: DevScore,
    pub final_score: DevScore,
    pub minibatches: usize,
    pub epochs: usize,
    pub stopped_by: StopReason,
}

/// Minibatch SGD at a constant learning rate. Keeps a running minibatch
/// count and dev curve across several [`Trainer::run`] phases.
pub struct Trainer<'c> {
    pub model: RecnnModel,
    config: &'c TrainConfig,
    lr: f64,
    rng: ChaCha8Rng,
    pub minibatches: usize,
    pub curve: Vec<CurvePoint>,
}

impl<'c> Trainer<'c> {
    pub fn new(model: RecnnModel, config: &'c TrainConfig, lr: f64) -> Self {
        Trainer {
            model,
            config,
            lr,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            minibatches: 0,
            curve: Vec::new(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// One SGD step on the mean gradient of `batch`; returns the mean loss.
    pub fn step(&mut self, batch: &[&Example]) -> Result<f64> {
        let cfg = self.config;
        let mut grad = self.model.params.zeros_like();
        let mut total = 0.0;
        let noise = if cfg.embedding_noise > 0.0 {
            Some(Normal::new(0.0, cfg.embedding_noise).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        for &ex in batch {
            let noisy;
            let ex = match &noise {
                Some(dist) => {
                    let mut leaves: Array2<f64> = ex.leaves.clone();
                    leaves.mapv_inplace(|x| x + dist.sample(&mut self.rng));
                    noisy = Example {
                        leaves,
                        ..ex.clone()
                    };
                    &noisy
                }
                None => ex,
            };
            let dropout = (cfg.dropout > 0.0)
                .then_some((cfg.dropout, &mut self.rng as &mut dyn rand::RngCore));
            let (l, g) = self
                .model
                .loss_and_grad(ex, cfg.sensitive_weight, dropout)?;
            if !l.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at minibatch {} (learning rate {})",
                    self.minibatches + 1,
                    self.lr
                )));
            }
            total += l;
            grad.add_scaled(&g, 1.0, [true; 8]);
        }
        let n = batch.len() as f64;
        self.model
            .params
            .add_scaled(&grad, -self.lr / n, cfg.trainable.mask());
        if !self.model.params.is_finite() {
            return Err(Error::Diverged(format!(
                "parameters became non-finite at minibatch {} (learning rate {})",
                self.minibatches + 1,
                self.lr
            )));
        }
        self.minibatches += 1;
        Ok(total / n)
    }

    /// Train on `train` until `rule` (or `hook`, called after every probe
    /// with the curve so far) says to stop.
    pub fn run<E, H>(
        &mut self,
        train: &[Example],
        mut eval: E,
        rule: StopRule,
        mut hook: H,
    ) -> Result<RunReport>
    where
        E: FnMut(&RecnnModel) -> Result<DevScore>,
        H: FnMut(&[CurvePoint]) -> bool,
    {
        if train.is_empty() {
            return Err(Error::insufficient("training set is empty"));
        }
        let cfg = self.config;
        let start = self.minibatches;
        let mut best_score = eval(&self.model)?;
        let mut best = self.model.clone();
        let mut last_score = best_score;
        let mut since_improved = 0usize;
        let mut eps_best = best_score.loss;
        let mut since_eps = 0usize;
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut epochs = 0;
        let mut stopped_by = StopReason::MaxEpochs;
        let converge = rule == StopRule::Converge;

        'outer: for _ in 0..cfg.max_epochs {
            epochs += 1;
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
                self.step(&batch)?;
                let done = self.minibatches - start;

                if cfg.probe_interval > 0 && done.is_multiple_of(cfg.probe_interval) {
                    let score = eval(&self.model)?;
                    last_score = score;
                    self.curve.push(CurvePoint {
                        minibatches: self.minibatches,
                        dev_accuracy: score.accuracy,
                        dev_loss: score.loss,
                    });
                    if score.better_than(&best_score) {
                        best_score = score;
                        best = self.model.clone();
                        since_improved = 0;
                    } else {
                        since_improved += 1;
                    }
                    if hook(&self.curve) {
                        stopped_by = StopReason::Hook;
                        break 'outer;
                    }
                    if converge && since_improved >= cfg.patience {
                        stopped_by = StopReason::Patience;
                        break 'outer;
                    }
                    if let Some(eps) = cfg.epsilon.filter(|_| converge) {
                        if score.loss < eps_best - eps {
                            eps_best = score.loss;
                            since_eps = 0;
                        } else {
                            eps_best = eps_best.min(score.loss);
                            since_eps += 1;
                        }
                        if since_eps >= cfg.epsilon_window {
                            stopped_by = StopReason::Epsilon;
                            break 'outer;
                        }
                    }
                }
                if let StopRule::Budget(n) = rule {
                    if done >= n {
                        last_score = eval(&self.model)?;
                        if last_score.better_than(&best_score) {
                            best_score = last_score;
                            best = self.model.clone();
                        }
                        stopped_by = StopReason::Budget;
                        break 'outer;
                    }
                }
            }

            if cfg.probe_interval == 0 {
                let score = eval(&self.model)?;
                last_score = score;
                if score.better_than(&best_score) {
                    best_score = score;
                    best = self.model.clone();
                    since_improved = 0;
                } else {
                    since_improved += 1;
                }
                if converge && since_improved >= cfg.patience {
                    stopped_by = StopReason::Patience;
                    break;
                }
            }
        }

        Ok(RunReport {
            best,
            best_score,
            final_score: last_score,
            minibatches: self.minibatches - start,
            epochs,
            stopped_by,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: RecnnModel,
    pub learning_rate: f64,
    pub best_dev: DevScore,
    pub curve: Vec<CurvePoint>,
    /// Minibatches of the full training run.
    pub minibatches: usize,
    /// Minibatches spent probing learning rates.
    pub line_search_minibatches: usize,
    pub epochs: usize,
    pub stopped_by: StopReason,
}

/// Pick the learning rate with the best dev score after a short run.
pub fn line_search(
    model: &RecnnModel,
    train: &[Example],
    dev: &[Example],
    config: &TrainConfig,
) -> Result<(f64, usize)> {
    if config.learning_rates.len() == 1 {
        return Ok((config.learning_rates[0], 0));
    }
    let budget = config.line_search_epochs.max(1) * train.len().div_ceil(config.batch_size);
    let mut spent = 0;
    let mut best: Option<(f64, DevScore)> = None;
    for &lr in &config.learning_rates {
        let mut t = Trainer::new(model.clone(), config, lr);
        let score = match t.run(
            train,
            |m| evaluate(m, dev, config.sensitive_weight),
            StopRule::Budget(budget),
            |_| false,
        ) {
            Ok(r) => r.final_score,
            // a diverging rate simply loses the search
            Err(Error::Diverged(_)) => DevScore {
                accuracy: f64::NEG_INFINITY,
                loss: f64::INFINITY,
            },
            Err(e) => return Err(e),
        };
        spent += t.minibatches;
        if best.is_none_or(|(_, b)| score.better_than(&b)) {
            best = Some((lr, score));
        }
    }
    Ok((best.expect("non-empty rate list").0, spent))
}

/// Line-search the learning rate, then train with early stopping and return
/// the best dev snapshot.
pub fn train(
    model: &RecnnModel,
    train: &[Example],
    dev: &[Example],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::insufficient(
            "train and dev splits must be non-empty",
        ));
    }
    let (lr, line_search_minibatches) = line_search(model, train, dev, config)?;
    let mut t = Trainer::new(model.clone(), config, lr);
    let report = t.run(
        train,
        |m| evaluate(m, dev, config.sensitive_weight),
        StopRule::Converge,
        |_| false,
    )?;
    Ok(TrainOutcome {
        model: report.best,
        learning_rate: lr,
        best_dev: report.best_score,
        curve: t.curve,
        minibatches: report.minibatches,
        line_search_minibatches,
        epochs: report.epochs,
        stopped_by: report.stopped_by,
    })
}

/// Retrain only the output layer of a trained model on new data, with
/// Gaussian noise on the leaf vectors (`config.embedding_noise`).
pub fn transfer_finetune(
    model: &RecnnModel,
    train_set: &[Example],
    dev: &[Example],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let config = TrainConfig {
        trainable: Trainable::OutputOnly,
        ..config.clone()
    };
    train(model, train_set, dev, &config)
}

impl Params {
    /// Whether every block except `V` and `b_p` is identical.
    pub fn frozen_blocks_equal(&self, other: &Params) -> bool {
        self.blocks()[..6] == other.blocks()[..6]
    }
}

//! The three learning procedures: distant supervision over proxy gold
//! sentences, REINFORCE over sampled sentences with a curriculum that
//! decays per epoch, and fully differentiable soft attention; plus the
//! batched training loop.
//!
//! Randomness discipline: three named streams (curriculum coin, sentence
//! sampling, epoch shuffling) all derive from the run seed, so training
//! runs are reproducible to the bit on one thread.

use crate::error::{Error, Result};
use crate::eval;
use crate::model::{bind, BoundModel, QaModel, ReaderKind};
use crate::optim::Adam;
use crate::rng::Rng;
use crate::select::score;
use crate::seq2seq::{decode_loglik, encode, encode_flat, SummaryInput};
use crate::summary::{forced_summary, hard_select, SelectMode};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::text::{PreparedExample, Vocabulary};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Pipeline,
    Reinforce,
    Soft,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pipeline" => Ok(Method::Pipeline),
            "reinforce" => Ok(Method::Reinforce),
            "soft" => Ok(Method::Soft),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Optional variance reduction for the REINFORCE coefficient. `None`
/// is the plain estimator; `Mean` subtracts a running mean reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardBaseline {
    None,
    Mean,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub method: Method,
    /// Sentences per hard summary.
    pub k: usize,
    /// Curriculum decay rate r: distant supervision fires with
    /// probability r^e at epoch e (1-based).
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub baseline: RewardBaseline,
    /// Stop once train answer accuracy reaches this value.
    pub early_stop_train_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Pipeline,
            k: 1,
            decay: 0.5,
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            seed: 0,
            baseline: RewardBaseline::None,
            early_stop_train_acc: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.3..=1.0).contains(&self.decay) {
            return Err(Error::Config(format!(
                "train.decay must lie in [0.3, 1], got {}",
                self.decay
            )));
        }
        if self.k == 0 || self.batch_size == 0 {
            return Err(Error::Config("train.k and train.batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || self.clip_norm <= 0.0 {
            return Err(Error::Config(
                "train.lr and train.clip_norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMethod {
    Distant,
    Reinforce,
    Soft,
}

/// What one training step did.
#[derive(Clone, Debug)]
pub struct StepReport {
    /// Value of the maximized objective for this example (a log
    /// probability or expected-reward estimate; always <= 0).
    pub objective: f64,
    /// Which objective actually ran (the curriculum may substitute
    /// distant supervision for a REINFORCE step).
    pub used: StepMethod,
    /// Gold or sampled sentence indices behind the summary.
    pub indices: Vec<usize>,
    /// Answer log-likelihood given the summary (the reward).
    pub reward: f64,
    /// Global gradient norm before clipping, for the optimizer step this
    /// example contributed to.
    pub grad_norm: f64,
    pub skipped: bool,
}

/// Named random streams for training.
pub struct TrainRngs {
    pub curriculum: Rng,
    pub sample: Rng,
    pub shuffle: Rng,
}

impl TrainRngs {
    pub fn new(seed: u64) -> Self {
        TrainRngs {
            curriculum: Rng::named_stream(seed, "curriculum"),
            sample: Rng::named_stream(seed, "sample"),
            shuffle: Rng::named_stream(seed, "shuffle"),
        }
    }
}

/// Pieces of a distant-supervision loss.
pub struct PipelineParts {
    pub objective: Var,
    pub selection_term: Var,
    pub answer_term: Var,
    pub gold: usize,
}

/// Distant supervision: maximize log p(gold sentence) + log p(answer |
/// gold sentence). Returns the negated objective as the loss. The Base
/// reader has no selection stage, so its loss is the answer term alone.
pub fn pipeline_loss(tape: &mut Tape, m: &BoundModel, ex: &PreparedExample) -> Result<(Var, PipelineParts)> {
    if m.cfg.reader == ReaderKind::Base {
        let budget = m.cfg.base_tokens.min(ex.doc_prefix_ids.len());
        let state = encode_flat(tape, m, &ex.query_ids, &ex.doc_prefix_ids[..budget])?;
        let answer_term = decode_loglik(tape, m, state, &ex.answer_ids)?;
        let loss = tape.neg(answer_term)?;
        return Ok((
            loss,
            PipelineParts {
                objective: answer_term,
                selection_term: answer_term,
                answer_term,
                gold: 0,
            },
        ));
    }
    let gold = ex
        .gold_sentence
        .ok_or_else(|| Error::invalid("pipeline_step", "example has no gold sentence label"))?;
    let dist = score(tape, m, ex)?;
    let p_gold = tape.pick(dist.probs, gold)?;
    let selection_term = tape.log(p_gold)?;
    let summary = forced_summary(ex, &[gold], 1)?;
    let state = encode(
        tape,
        m,
        &ex.query_ids,
        SummaryInput::Hard(&summary.token_ids),
        m.cfg.process_pads,
    )?;
    let answer_term = decode_loglik(tape, m, state, &ex.answer_ids)?;
    let objective = tape.add(selection_term, answer_term)?;
    let loss = tape.neg(objective)?;
    Ok((
        loss,
        PipelineParts {
            objective,
            selection_term,
            answer_term,
            gold,
        },
    ))
}

/// Pieces of a REINFORCE surrogate loss.
pub struct ReinforceParts {
    /// Sampled sentence indices, in draw order.
    pub indices: Vec<usize>,
    /// Reward value: answer log-likelihood under the sampled summary.
    pub reward: f64,
    /// Log-probability of the ordered without-replacement sample.
    pub selection_logprob: Var,
    pub answer_term: Var,
}

/// Builds the surrogate whose gradient is the sampled REINFORCE
/// estimator for an already-chosen sample:
///
///   grad = grad log p(y | s) + (R - baseline) * grad log p(s | x, d)
///
/// with R = log p(y | s) held constant in the coefficient. Returns the
/// negated surrogate as the loss.
pub fn reinforce_surrogate_forced(
    tape: &mut Tape,
    m: &BoundModel,
    ex: &PreparedExample,
    indices: &[usize],
    baseline: f64,
) -> Result<(Var, ReinforceParts)> {
    let dist = score(tape, m, ex)?;
    reinforce_surrogate_with_dist(tape, m, ex, &dist, indices, baseline)
}

/// Same as [`reinforce_surrogate_forced`], reusing an already-scored
/// selection distribution.
pub fn reinforce_surrogate_with_dist(
    tape: &mut Tape,
    m: &BoundModel,
    ex: &PreparedExample,
    dist: &crate::select::SelectionDistribution,
    indices: &[usize],
    baseline: f64,
) -> Result<(Var, ReinforceParts)> {
    // log-probability of the ordered sample under sequential draws
    // without replacement: each factor renormalizes by the unremoved mass.
    let mut selection_logprob: Option<Var> = None;
    let mut removed: Option<Var> = None;
    for &i in indices {
        let p_i = tape.pick(dist.probs, i)?;
        let mut term = tape.log(p_i)?;
        if let Some(r) = removed {
            let denom = tape.one_minus(r)?;
            let log_denom = tape.log(denom)?;
            term = tape.sub(term, log_denom)?;
        }
        selection_logprob = Some(match selection_logprob {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
        removed = Some(match removed {
            None => p_i,
            Some(r) => tape.add(r, p_i)?,
        });
    }
    let selection_logprob =
        selection_logprob.ok_or_else(|| Error::invalid("reinforce_step", "no sampled indices"))?;

    let summary = forced_summary(ex, indices, m.cfg.k.max(indices.len()))?;
    let state = encode(
        tape,
        m,
        &ex.query_ids,
        SummaryInput::Hard(&summary.token_ids),
        m.cfg.process_pads,
    )?;
    let answer_term = decode_loglik(tape, m, state, &ex.answer_ids)?;
    let reward = tape.scalar_value(answer_term);

    let weighted = tape.scale(selection_logprob, reward - baseline)?;
    let surrogate = tape.add(answer_term, weighted)?;
    let loss = tape.neg(surrogate)?;
    Ok((
        loss,
        ReinforceParts {
            indices: indices.to_vec(),
            reward,
            selection_logprob,
            answer_term,
        },
    ))
}

/// Samples K sentences without replacement and builds the surrogate.
pub fn reinforce_surrogate(
    tape: &mut Tape,
    m: &BoundModel,
    ex: &PreparedExample,
    k: usize,
    rng: &mut Rng,
    baseline: f64,
) -> Result<(Var, ReinforceParts)> {
    // The sample is drawn from the numeric distribution up front so the
    // surrogate sees fixed indices.
    let dist = score(tape, m, ex)?;
    let probs = dist.probs_vec(tape);
    let hard = hard_select(&probs, ex, k, SelectMode::Sample, Some(rng))?;
    reinforce_surrogate_with_dist(tape, m, ex, &dist, &hard.indices, baseline)
}

/// Soft attention: maximize log p(answer | blended summary), fully
/// differentiable through the selection distribution.
pub fn soft_loss(tape: &mut Tape, m: &BoundModel, ex: &PreparedExample) -> Result<(Var, Var)> {
    let dist = score(tape, m, ex)?;
    let soft = crate::summary::soft_blend(tape, dist.probs, ex, m.embed)?;
    let state = encode(
        tape,
        m,
        &ex.query_ids,
        SummaryInput::Soft(soft.blended),
        m.cfg.process_pads,
    )?;
    let answer_term = decode_loglik(tape, m, state, &ex.answer_ids)?;
    let loss = tape.neg(answer_term)?;
    Ok((loss, answer_term))
}

/// Gradients plus report for one example, without applying them.
fn example_grads(
    model: &QaModel,
    ex: &PreparedExample,
    cfg: &TrainConfig,
    epoch: usize,
    rngs: &mut TrainRngs,
    reward_baseline: f64,
) -> Result<(BTreeMap<String, Tensor>, StepReport)> {
    let mut tape = Tape::new();
    let m = bind(&mut tape, model)?;
    let (loss, report) = match cfg.method {
        Method::Pipeline => {
            let (loss, parts) = pipeline_loss(&mut tape, &m, ex)?;
            let objective = tape.scalar_value(parts.objective);
            let reward = tape.scalar_value(parts.answer_term);
            (
                loss,
                StepReport {
                    objective,
                    used: StepMethod::Distant,
                    indices: vec![parts.gold],
                    reward,
                    grad_norm: 0.0,
                    skipped: false,
                },
            )
        }
        Method::Soft => {
            let (loss, answer_term) = soft_loss(&mut tape, &m, ex)?;
            let objective = tape.scalar_value(answer_term);
            (
                loss,
                StepReport {
                    objective,
                    used: StepMethod::Soft,
                    indices: vec![],
                    reward: objective,
                    grad_norm: 0.0,
                    skipped: false,
                },
            )
        }
        Method::Reinforce => {
            // Fresh coin per example: probability r^e of substituting the
            // distant-supervision objective at epoch e.
            let p_distant = cfg.decay.powi(epoch as i32);
            if rngs.curriculum.coin(p_distant) {
                let (loss, parts) = pipeline_loss(&mut tape, &m, ex)?;
                let objective = tape.scalar_value(parts.objective);
                let reward = tape.scalar_value(parts.answer_term);
                (
                    loss,
                    StepReport {
                        objective,
                        used: StepMethod::Distant,
                        indices: vec![parts.gold],
                        reward,
                        grad_norm: 0.0,
                        skipped: false,
                    },
                )
            } else {
                let (loss, parts) =
                    reinforce_surrogate(&mut tape, &m, ex, cfg.k, &mut rngs.sample, reward_baseline)?;
                (
                    loss,
                    StepReport {
                        objective: parts.reward,
                        used: StepMethod::Reinforce,
                        indices: parts.indices,
                        reward: parts.reward,
                        grad_norm: 0.0,
                        skipped: false,
                    },
                )
            }
        }
    };
    let grads = tape.backward(loss)?;
    Ok((grads.into_named(), report))
}

fn apply_grads(
    model: &mut QaModel,
    opt: &mut Adam,
    grads: BTreeMap<String, Tensor>,
    report: &mut StepReport,
) -> Result<()> {
    let stats = opt.step(&mut model.params, &grads)?;
    report.grad_norm = stats.pre_clip_norm;
    report.skipped = stats.skipped;
    Ok(())
}

/// One distant-supervision step on one example (batch of one).
pub fn pipeline_step(model: &mut QaModel, opt: &mut Adam, ex: &PreparedExample) -> Result<StepReport> {
    let cfg = TrainConfig {
        method: Method::Pipeline,
        ..TrainConfig::default()
    };
    let mut rngs = TrainRngs::new(0);
    let (grads, mut report) = example_grads(model, ex, &cfg, 1, &mut rngs, 0.0)?;
    apply_grads(model, opt, grads, &mut report)?;
    Ok(report)
}

/// One REINFORCE step on one example: flips the curriculum coin, then
/// either runs distant supervision or samples K sentences and applies
/// the two-term estimator.
pub fn reinforce_step(
    model: &mut QaModel,
    opt: &mut Adam,
    ex: &PreparedExample,
    cfg: &TrainConfig,
    rngs: &mut TrainRngs,
    epoch: usize,
) -> Result<StepReport> {
    let cfg = TrainConfig {
        method: Method::Reinforce,
        ..cfg.clone()
    };
    let (grads, mut report) = example_grads(model, ex, &cfg, epoch, rngs, 0.0)?;
    apply_grads(model, opt, grads, &mut report)?;
    Ok(report)
}

/// One end-to-end soft-attention step on one example.
pub fn soft_step(model: &mut QaModel, opt: &mut Adam, ex: &PreparedExample) -> Result<StepReport> {
    let cfg = TrainConfig {
        method: Method::Soft,
        ..TrainConfig::default()
    };
    let mut rngs = TrainRngs::new(0);
    let (grads, mut report) = example_grads(model, ex, &cfg, 1, &mut rngs, 0.0)?;
    apply_grads(model, opt, grads, &mut report)?;
    Ok(report)
}

/// One row of the per-epoch metrics log.
#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: String,
    pub answer_acc: f64,
    pub sent_acc: Option<f64>,
    /// Mean step objective for train rows (epochs >= 1); mean answer
    /// log-likelihood under the test-time summary otherwise.
    pub objective: f64,
}

pub const METRICS_CSV_HEADER: &str = "epoch,split,answer_acc,sent_acc,objective";

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let sent = r
            .sent_acc
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "undefined".to_string());
        out.push_str(&format!(
            "{},{},{:.6},{},{:.6}\n",
            r.epoch, r.split, r.answer_acc, sent, r.objective
        ));
    }
    out
}

/// Receives per-epoch artifacts (checkpoints, metrics) as training runs.
pub trait RunSink {
    fn on_epoch(&mut self, epoch: usize, model: &QaModel, rows: &[MetricsRow]) -> Result<()>;
}

/// Aggregates returned by [`run_training`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    /// Fraction of steps that used the distant-supervision objective,
    /// per epoch (meaningful for the REINFORCE curriculum).
    pub distant_fraction: Vec<f64>,
    /// Epochs actually run (early stopping may cut the schedule short).
    pub epochs_run: usize,
}

/// Runs the configured method over the training split, evaluating both
/// splits every epoch. Shuffles per epoch from the shuffle stream, averages
/// gradients over each batch, and reports metrics for epoch 0 (the
/// untrained model) through the last epoch.
pub fn run_training(
    model: &mut QaModel,
    vocab: &Vocabulary,
    train: &[PreparedExample],
    dev: &[PreparedExample],
    cfg: &TrainConfig,
    mut sink: Option<&mut dyn RunSink>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::invalid("run_training", "empty train or dev split"));
    }
    let mut opt = Adam::new(cfg.learning_rate, cfg.clip_norm);
    let mut rngs = TrainRngs::new(cfg.seed);
    let mut rows = Vec::new();
    let mut distant_fraction = Vec::new();

    let eval_rows = |model: &QaModel, epoch: usize, train_obj: Option<f64>| -> Result<[MetricsRow; 2]> {
        let train_report = eval::evaluate(model, vocab, train, "train")?;
        let dev_report = eval::evaluate(model, vocab, dev, "dev")?;
        let train_objective = match train_obj {
            Some(o) => o,
            None => eval::mean_answer_loglik(model, train)?,
        };
        let dev_objective = eval::mean_answer_loglik(model, dev)?;
        Ok([
            MetricsRow {
                epoch,
                split: "train".into(),
                answer_acc: train_report.answer_accuracy,
                sent_acc: train_report.sentence_accuracy,
                objective: train_objective,
            },
            MetricsRow {
                epoch,
                split: "dev".into(),
                answer_acc: dev_report.answer_accuracy,
                sent_acc: dev_report.sentence_accuracy,
                objective: dev_objective,
            },
        ])
    };

    let initial = eval_rows(model, 0, None)?;
    rows.extend(initial.iter().cloned());
    if let Some(s) = sink.as_deref_mut() {
        s.on_epoch(0, model, &initial)?;
    }

    let mut running_reward_mean = 0.0;
    let mut reward_count = 0u64;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        rngs.shuffle.shuffle(&mut order);

        let mut objective_sum = 0.0;
        let mut distant_steps = 0usize;
        let mut steps = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
            let mut batch_reports = Vec::with_capacity(batch.len());
            for &idx in batch {
                let baseline = match cfg.baseline {
                    RewardBaseline::None => 0.0,
                    RewardBaseline::Mean => running_reward_mean,
                };
                let (grads, report) =
                    example_grads(model, &train[idx], cfg, epoch, &mut rngs, baseline)?;
                for (name, g) in grads {
                    match acc.get_mut(&name) {
                        Some(t) => {
                            let sum: Vec<f64> = t
                                .data()
                                .iter()
                                .zip(g.data())
                                .map(|(a, b)| a + b)
                                .collect();
                            *t = Tensor::new(t.shape().to_vec(), sum);
                        }
                        None => {
                            acc.insert(name, g);
                        }
                    }
                }
                if report.used == StepMethod::Reinforce {
                    reward_count += 1;
                    running_reward_mean +=
                        (report.reward - running_reward_mean) / reward_count as f64;
                }
                batch_reports.push(report);
            }
            let scale = 1.0 / batch.len() as f64;
            for t in acc.values_mut() {
                let avg: Vec<f64> = t.data().iter().map(|v| v * scale).collect();
                *t = Tensor::new(t.shape().to_vec(), avg);
            }
            let stats = opt.step(&mut model.params, &acc)?;
            for mut report in batch_reports {
                report.grad_norm = stats.pre_clip_norm;
                report.skipped = stats.skipped;
                objective_sum += report.objective;
                if report.used == StepMethod::Distant {
                    distant_steps += 1;
                }
                steps += 1;
            }
        }
        distant_fraction.push(distant_steps as f64 / steps.max(1) as f64);

        let epoch_rows = eval_rows(model, epoch, Some(objective_sum / steps.max(1) as f64))?;
        rows.extend(epoch_rows.iter().cloned());
        if let Some(s) = sink.as_deref_mut() {
            s.on_epoch(epoch, model, &epoch_rows)?;
        }
        if let Some(target) = cfg.early_stop_train_acc {
            if epoch_rows[0].answer_acc >= target {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        rows,
        distant_fraction,
        epochs_run,
    })
}

//! Evaluation: answer accuracy, approximate sentence-selection accuracy,
//! the First/Oracle/Base baselines, and dataset statistics.
//!
//! Answer accuracy is normalized exact match: the decoded surface (after
//! placeholder restoration) against the gold answer, both lowercased and
//! single-spaced by the shared tokenizer. Sentence accuracy is measured
//! only over examples where some sentence actually contains the answer,
//! counting a hit when the predicted sentence is any answer-bearing one
//! (a stricter first-match-only variant is reported alongside).

use crate::error::{Error, Result};
use crate::model::{bind, QaModel, ReaderKind, SummaryMode};
use crate::select::score;
use crate::seq2seq::{decode_greedy, encode, encode_flat, AnswerPrediction, SummaryInput};
use crate::summary::{forced_summary, hard_select, SelectMode};
use crate::tape::Tape;
use crate::text::{has_answer_match, matching_sentences, PreparedExample, Vocabulary};
use serde::Serialize;

/// What the model chose for one example at test time.
#[derive(Clone, Debug)]
pub struct SelectionOutcome {
    /// Summary sentences in selection order.
    pub indices: Vec<usize>,
    /// The model's single predicted sentence (highest probability).
    pub predicted: usize,
    /// Probability of the predicted sentence.
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    /// None for the flat Base reader, which has no selection stage.
    pub selection: Option<SelectionOutcome>,
    pub answer: AnswerPrediction,
}

/// Runs the model at test time: argmax selection for hard summaries,
/// blended summaries for soft, greedy decoding either way.
pub fn predict(model: &QaModel, vocab: &Vocabulary, ex: &PreparedExample) -> Result<Prediction> {
    let mut tape = Tape::new();
    let m = bind(&mut tape, model)?;
    match model.cfg.reader {
        ReaderKind::Base => {
            let budget = model.cfg.base_tokens.min(ex.doc_prefix_ids.len());
            let state = encode_flat(&mut tape, &m, &ex.query_ids, &ex.doc_prefix_ids[..budget])?;
            let answer = decode_greedy(
                &mut tape,
                &m,
                state,
                model.cfg.max_answer_len,
                &ex.placeholder_map,
                vocab,
            )?;
            Ok(Prediction {
                selection: None,
                answer,
            })
        }
        ReaderKind::Hierarchical => {
            let dist = score(&mut tape, &m, ex)?;
            let probs = dist.probs_vec(&tape);
            let predicted = dist.argmax(&tape);
            let (state, indices) = match model.cfg.summary {
                SummaryMode::Hard => {
                    let hard = hard_select(&probs, ex, model.cfg.k, SelectMode::Argmax, None)?;
                    let s = encode(
                        &mut tape,
                        &m,
                        &ex.query_ids,
                        SummaryInput::Hard(&hard.token_ids),
                        model.cfg.process_pads,
                    )?;
                    (s, hard.indices)
                }
                SummaryMode::Soft => {
                    let soft = crate::summary::soft_blend(&mut tape, dist.probs, ex, m.embed)?;
                    let s = encode(
                        &mut tape,
                        &m,
                        &ex.query_ids,
                        SummaryInput::Soft(soft.blended),
                        model.cfg.process_pads,
                    )?;
                    (s, vec![predicted])
                }
            };
            let answer = decode_greedy(
                &mut tape,
                &m,
                state,
                model.cfg.max_answer_len,
                &ex.placeholder_map,
                vocab,
            )?;
            Ok(Prediction {
                selection: Some(SelectionOutcome {
                    indices,
                    predicted,
                    probability: probs[predicted],
                }),
                answer,
            })
        }
    }
}

/// Decodes from one forced sentence (as the First and Oracle baselines
/// do), reusing the model's generator with a K=1 summary.
pub fn predict_forced(
    model: &QaModel,
    vocab: &Vocabulary,
    ex: &PreparedExample,
    index: usize,
) -> Result<Prediction> {
    let mut tape = Tape::new();
    let m = bind(&mut tape, model)?;
    let hard = forced_summary(ex, &[index], 1)?;
    let state = encode(
        &mut tape,
        &m,
        &ex.query_ids,
        SummaryInput::Hard(&hard.token_ids),
        model.cfg.process_pads,
    )?;
    let answer = decode_greedy(
        &mut tape,
        &m,
        state,
        model.cfg.max_answer_len,
        &ex.placeholder_map,
        vocab,
    )?;
    Ok(Prediction {
        selection: Some(SelectionOutcome {
            indices: vec![index],
            predicted: index,
            probability: 1.0,
        }),
        answer,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub answer_accuracy: f64,
    pub examples: usize,
    /// None when no example has an answer-bearing sentence.
    pub sentence_accuracy: Option<f64>,
    /// Size of the restricted set sentence accuracy is measured on.
    pub sentence_examples: usize,
    /// Variant counting only the first answer-bearing sentence as a hit.
    pub sentence_accuracy_first_only: Option<f64>,
    /// True when the report used gold labels at test time.
    pub oracle: bool,
}

fn score_predictions(
    method: &str,
    oracle: bool,
    data: &[PreparedExample],
    mut predict_one: impl FnMut(&PreparedExample) -> Result<Prediction>,
) -> Result<EvalReport> {
    let mut answer_hits = 0usize;
    let mut sent_hits = 0usize;
    let mut sent_first_hits = 0usize;
    let mut sent_total = 0usize;
    for ex in data {
        let pred = predict_one(ex)?;
        if pred.answer.surface == ex.answer_norm {
            answer_hits += 1;
        }
        if let Some(sel) = &pred.selection {
            if has_answer_match(ex) {
                sent_total += 1;
                let matches = matching_sentences(ex);
                if matches.contains(&sel.predicted) {
                    sent_hits += 1;
                }
                if matches.first() == Some(&sel.predicted) {
                    sent_first_hits += 1;
                }
            }
        }
    }
    let frac = |hits: usize, total: usize| (total > 0).then(|| hits as f64 / total as f64);
    Ok(EvalReport {
        method: method.to_string(),
        answer_accuracy: answer_hits as f64 / data.len().max(1) as f64,
        examples: data.len(),
        sentence_accuracy: frac(sent_hits, sent_total),
        sentence_examples: sent_total,
        sentence_accuracy_first_only: frac(sent_first_hits, sent_total),
        oracle,
    })
}

/// Fraction of examples whose decoded answer matches the gold answer.
pub fn answer_accuracy(model: &QaModel, vocab: &Vocabulary, data: &[PreparedExample]) -> Result<f64> {
    Ok(evaluate(model, vocab, data, "model")?.answer_accuracy)
}

/// Sentence-selection accuracy over the answer-bearing subset. None when
/// that subset is empty (undefined, not zero).
pub fn sentence_accuracy(
    model: &QaModel,
    vocab: &Vocabulary,
    data: &[PreparedExample],
) -> Result<Option<f64>> {
    Ok(evaluate(model, vocab, data, "model")?.sentence_accuracy)
}

/// Full evaluation of a trained model under its configured reader.
pub fn evaluate(
    model: &QaModel,
    vocab: &Vocabulary,
    data: &[PreparedExample],
    method: &str,
) -> Result<EvalReport> {
    score_predictions(method, false, data, |ex| predict(model, vocab, ex))
}

/// Mean teacher-forced answer log-likelihood under the test-time summary
/// (argmax sentences or soft blend). Used as the evaluation objective.
pub fn mean_answer_loglik(model: &QaModel, data: &[PreparedExample]) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        let mut tape = Tape::new();
        let m = bind(&mut tape, model)?;
        let state = match model.cfg.reader {
            ReaderKind::Base => {
                let budget = model.cfg.base_tokens.min(ex.doc_prefix_ids.len());
                encode_flat(&mut tape, &m, &ex.query_ids, &ex.doc_prefix_ids[..budget])?
            }
            ReaderKind::Hierarchical => {
                let dist = score(&mut tape, &m, ex)?;
                match model.cfg.summary {
                    SummaryMode::Hard => {
                        let probs = dist.probs_vec(&tape);
                        let hard = hard_select(&probs, ex, model.cfg.k, SelectMode::Argmax, None)?;
                        encode(
                            &mut tape,
                            &m,
                            &ex.query_ids,
                            SummaryInput::Hard(&hard.token_ids),
                            model.cfg.process_pads,
                        )?
                    }
                    SummaryMode::Soft => {
                        let soft = crate::summary::soft_blend(&mut tape, dist.probs, ex, m.embed)?;
                        encode(
                            &mut tape,
                            &m,
                            &ex.query_ids,
                            SummaryInput::Soft(soft.blended),
                            model.cfg.process_pads,
                        )?
                    }
                }
            }
        };
        let ll = crate::seq2seq::decode_loglik(&mut tape, &m, state, &ex.answer_ids)?;
        total += tape.scalar_value(ll);
    }
    Ok(total / data.len().max(1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    First,
    Oracle,
    Base,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(BaselineKind::First),
            "oracle" => Ok(BaselineKind::Oracle),
            "base" => Ok(BaselineKind::Base),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

/// Evaluates a baseline. First and Oracle force the summary sentence and
/// reuse the model's generator; Base requires a model configured with the
/// flat reader.
pub fn run_baseline(
    kind: BaselineKind,
    model: &QaModel,
    vocab: &Vocabulary,
    data: &[PreparedExample],
) -> Result<EvalReport> {
    match kind {
        BaselineKind::First => {
            score_predictions("first", false, data, |ex| predict_forced(model, vocab, ex, 0))
        }
        BaselineKind::Oracle => score_predictions("oracle", true, data, |ex| {
            let index = matching_sentences(ex).first().copied().unwrap_or(0);
            predict_forced(model, vocab, ex, index)
        }),
        BaselineKind::Base => {
            if model.cfg.reader != ReaderKind::Base {
                return Err(Error::Config(
                    "base baseline needs a model trained with model.kind=base".into(),
                ));
            }
            score_predictions("base", false, data, |ex| predict(model, vocab, ex))
        }
    }
}

/// Dataset statistics over prepared examples, matching the usual
/// answer-match table schema.
#[derive(Clone, Debug, Serialize)]
pub struct StatsReport {
    pub examples: usize,
    /// Percentage of examples whose answer appears in some sentence.
    pub pct_answer_present: f64,
    /// Average number of answer-bearing sentences among matched examples.
    pub avg_answer_matches: f64,
    /// Percentage of matched examples whose first match is sentence 0.
    pub pct_first_sentence: f64,
    pub avg_query_tokens: f64,
    /// Average raw document length in tokens (before cropping).
    pub avg_doc_tokens: f64,
}

pub fn dataset_stats(data: &[PreparedExample]) -> StatsReport {
    let n = data.len();
    let mut matched = 0usize;
    let mut match_count_total = 0usize;
    let mut first_sentence = 0usize;
    let mut query_tokens = 0usize;
    let mut doc_tokens = 0usize;
    for ex in data {
        let matches = matching_sentences(ex);
        if !matches.is_empty() {
            matched += 1;
            match_count_total += matches.len();
            if matches[0] == 0 {
                first_sentence += 1;
            }
        }
        query_tokens += ex.query_ids.len();
        doc_tokens += ex.doc_token_total;
    }
    StatsReport {
        examples: n,
        pct_answer_present: 100.0 * matched as f64 / n.max(1) as f64,
        avg_answer_matches: if matched > 0 {
            match_count_total as f64 / matched as f64
        } else {
            0.0
        },
        pct_first_sentence: 100.0 * first_sentence as f64 / matched.max(1) as f64,
        avg_query_tokens: query_tokens as f64 / n.max(1) as f64,
        avg_doc_tokens: doc_tokens as f64 / n.max(1) as f64,
    }
}

impl StatsReport {
    pub const CSV_HEADER: &'static str =
        "examples,pct_answer_present,avg_answer_matches,pct_first_sentence,avg_query_tokens,avg_doc_tokens";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.examples,
            self.pct_answer_present,
            self.avg_answer_matches,
            self.pct_first_sentence,
            self.avg_query_tokens,
            self.avg_doc_tokens
        )
    }
}

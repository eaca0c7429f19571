//! GRU encoder-decoder over (query, document summary) with shared
//! embeddings and placeholder-aware decoding.
//!
//! The encoder consumes the query tokens, a separator, then the summary:
//! embedded token ids for hard summaries, blended embedding rows for soft
//! summaries. The decoder is another GRU whose output logits are tied to
//! the embedding table through a small projection, so the same table
//! drives encoder input, decoder input, and decoder output.

use crate::error::{Error, Result};
use crate::model::BoundModel;
use crate::tape::{gru_cell, Tape, Var};
use crate::tensor::Tensor;
use crate::text::{Vocabulary, BOS, EOS, PAD, SEP};
use std::collections::BTreeMap;

/// Embeds a single token id as a vector node.
fn embed_token(tape: &mut Tape, embed: Var, id: u32) -> Result<Var> {
    let e = tape.value(embed).cols();
    let row = tape.lookup(embed, &[id])?;
    tape.reshape(row, vec![e])
}

/// Summary input to the encoder.
pub enum SummaryInput<'a> {
    /// Token ids of a hard summary.
    Hard(&'a [u32]),
    /// Blended (M x e) matrix of a soft summary.
    Soft(Var),
}

/// Encodes query then separator then summary, returning the final hidden
/// state. Hard-summary pads are skipped unless `process_pads` is set (the
/// default), which keeps hard and soft encoders step-for-step identical.
pub fn encode(
    tape: &mut Tape,
    m: &BoundModel,
    query_ids: &[u32],
    summary: SummaryInput,
    process_pads: bool,
) -> Result<Var> {
    if query_ids.is_empty() {
        return Err(Error::invalid("encode", "empty query"));
    }
    let mut h = tape.leaf(Tensor::zeros(vec![m.cfg.gru_hidden]));
    for &id in query_ids.iter().chain(std::iter::once(&SEP)) {
        let x = embed_token(tape, m.embed, id)?;
        h = gru_cell(tape, h, x, &m.enc)?;
    }
    match summary {
        SummaryInput::Hard(ids) => {
            for &id in ids {
                if !process_pads && id == PAD {
                    continue;
                }
                let x = embed_token(tape, m.embed, id)?;
                h = gru_cell(tape, h, x, &m.enc)?;
            }
        }
        SummaryInput::Soft(blended) => {
            let rows = tape.value(blended).rows();
            for r in 0..rows {
                let x = tape.row(blended, r)?;
                h = gru_cell(tape, h, x, &m.enc)?;
            }
        }
    }
    Ok(h)
}

/// Flat encoding for the Base reader: query then the document prefix,
/// with no separator (the flat reader predates the summary format).
pub fn encode_flat(tape: &mut Tape, m: &BoundModel, query_ids: &[u32], doc_ids: &[u32]) -> Result<Var> {
    if query_ids.is_empty() {
        return Err(Error::invalid("encode", "empty query"));
    }
    let mut h = tape.leaf(Tensor::zeros(vec![m.cfg.gru_hidden]));
    for &id in query_ids.iter().chain(doc_ids.iter()) {
        let x = embed_token(tape, m.embed, id)?;
        h = gru_cell(tape, h, x, &m.enc)?;
    }
    Ok(h)
}

/// Output logits for one decoder state: embed_table . (proj . h).
fn output_logits(tape: &mut Tape, m: &BoundModel, h: Var) -> Result<Var> {
    let projected = tape.matvec(m.out_proj, h)?;
    tape.matvec(m.embed, projected)
}

/// Teacher-forced log-likelihood of `target` (conventionally ending with
/// EOS) given an encoder state. This value is also the reward used by
/// policy-gradient training: the log-probability of the correct answer
/// given the selected sentences.
pub fn decode_loglik(tape: &mut Tape, m: &BoundModel, state: Var, target: &[u32]) -> Result<Var> {
    if target.is_empty() {
        return Err(Error::invalid("decode_loglik", "empty target"));
    }
    let mut h = state;
    let mut prev = BOS;
    let mut total: Option<Var> = None;
    for &y in target {
        let x = embed_token(tape, m.embed, prev)?;
        h = gru_cell(tape, h, x, &m.dec)?;
        let logits = output_logits(tape, m, h)?;
        let logp = tape.log_softmax(logits)?;
        let term = tape.pick(logp, y as usize)?;
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
        prev = y;
    }
    Ok(total.expect("target checked non-empty"))
}

/// A decoded answer.
#[derive(Clone, Debug)]
pub struct AnswerPrediction {
    /// Emitted ids, including the terminating EOS when one was produced.
    pub token_ids: Vec<u32>,
    /// Surface string after placeholder back-substitution.
    pub surface: String,
    /// Total log-probability of the emitted sequence.
    pub log_prob: f64,
}

/// Greedy decoding: argmax token per step (ties to the lower id),
/// stopping at EOS or `max_len` tokens.
pub fn decode_greedy(
    tape: &mut Tape,
    m: &BoundModel,
    state: Var,
    max_len: usize,
    placeholder_map: &BTreeMap<u32, String>,
    vocab: &Vocabulary,
) -> Result<AnswerPrediction> {
    if max_len == 0 {
        return Err(Error::invalid("decode_greedy", "max_len must be >= 1"));
    }
    let mut h = state;
    let mut prev = BOS;
    let mut token_ids = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let x = embed_token(tape, m.embed, prev)?;
        h = gru_cell(tape, h, x, &m.dec)?;
        let logits = output_logits(tape, m, h)?;
        let logp = tape.log_softmax(logits)?;
        let scores = tape.value(logp).data();
        let mut best = 0usize;
        for (i, &v) in scores.iter().enumerate() {
            if v > scores[best] {
                best = i;
            }
        }
        log_prob += scores[best];
        token_ids.push(best as u32);
        if best as u32 == EOS {
            break;
        }
        prev = best as u32;
    }
    let surface = render_surface(&token_ids, placeholder_map, vocab);
    Ok(AnswerPrediction {
        token_ids,
        surface,
        log_prob,
    })
}

/// Renders emitted ids as text: placeholders are restored from the
/// per-example map (or shown as a literal PH_i marker when unknown),
/// EOS is dropped, and tokens are joined with single spaces.
pub fn render_surface(
    ids: &[u32],
    placeholder_map: &BTreeMap<u32, String>,
    vocab: &Vocabulary,
) -> String {
    let words: Vec<String> = ids
        .iter()
        .filter(|&&id| id != EOS)
        .map(|&id| {
            if let Some(i) = vocab.placeholder_index(id) {
                placeholder_map
                    .get(&id)
                    .cloned()
                    .unwrap_or_else(|| format!("PH_{i}"))
            } else {
                vocab.token(id).to_string()
            }
        })
        .collect();
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bind, ModelConfig, QaModel, SelectorKind};
    use crate::optim::ParamSet;
    use crate::summary::{soft_blend, SoftSummary};
    use crate::tensor::Tensor;
    use crate::text::{onehot, PreparedExample, RawExample};

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            embed_dim: 3,
            sel_hidden: 3,
            gru_hidden: 4,
            selector: SelectorKind::Bow,
            max_sentences: 5,
            max_tokens: 4,
            max_answer_len: 6,
            ..ModelConfig::default()
        }
    }

    fn tiny_vocab() -> Vocabulary {
        let corpus = [RawExample::new(
            "alpha beta gamma delta",
            vec!["epsilon zeta eta theta".into()],
            "iota",
        )];
        Vocabulary::build(&corpus, 40, 2).unwrap()
    }

    fn example(rows: Vec<Vec<u32>>) -> PreparedExample {
        let max_tokens = rows.iter().map(Vec::len).max().unwrap();
        let rows: Vec<Vec<u32>> = rows
            .into_iter()
            .map(|mut r| {
                r.resize(max_tokens, PAD);
                r
            })
            .collect();
        let sentence_lengths = rows
            .iter()
            .map(|r| r.iter().filter(|&&id| id != PAD).count())
            .collect();
        let index_onehots = (0..rows.len()).map(|l| onehot(l, 5)).collect();
        PreparedExample {
            query_ids: vec![6, 7],
            rows,
            sentence_lengths,
            index_onehots,
            answer_ids: vec![8, EOS],
            answer_norm: String::new(),
            placeholder_map: Default::default(),
            gold_sentence: None,
            doc_prefix_ids: vec![],
            doc_token_total: 0,
        }
    }

    #[test]
    fn zero_weights_keep_zero_state() {
        let vocab = tiny_vocab();
        let mut model = QaModel::new(tiny_cfg(), vocab.size(), 1);
        let names: Vec<String> = model.params.names().cloned().collect();
        for n in names {
            let shape = model.params.get(&n).shape().to_vec();
            model.params.set(&n, Tensor::zeros(shape));
        }
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let state = encode(&mut tape, &m, &[6, 7], SummaryInput::Hard(&[8, 9]), true).unwrap();
        assert!(tape.value(state).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_rejects_empty_query() {
        let vocab = tiny_vocab();
        let model = QaModel::new(tiny_cfg(), vocab.size(), 1);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        assert!(encode(&mut tape, &m, &[], SummaryInput::Hard(&[8]), true).is_err());
    }

    #[test]
    fn encoding_is_deterministic() {
        let vocab = tiny_vocab();
        let model = QaModel::new(tiny_cfg(), vocab.size(), 2);
        let run = || {
            let mut tape = Tape::new();
            let m = bind(&mut tape, &model).unwrap();
            let s = encode(&mut tape, &m, &[6, 7], SummaryInput::Hard(&[8, 9, PAD]), true).unwrap();
            tape.value(s).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn hard_and_one_hot_soft_encode_identically() {
        let vocab = tiny_vocab();
        let model = QaModel::new(tiny_cfg(), vocab.size(), 3);
        let ex = example(vec![vec![8, 9, PAD, PAD], vec![10, 11, 5, PAD]]);
        let target_row = 1usize;

        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        // Hard: row 1's non-pad tokens re-padded to 1 x M.
        let hard_ids = vec![10, 11, 5, PAD];
        let hard = encode(&mut tape, &m, &ex.query_ids, SummaryInput::Hard(&hard_ids), true).unwrap();
        // Soft: one-hot distribution on row 1.
        let probs = tape.leaf(Tensor::vector(vec![0.0, 1.0]));
        let SoftSummary { blended } = soft_blend(&mut tape, probs, &ex, m.embed).unwrap();
        let soft = encode(&mut tape, &m, &ex.query_ids, SummaryInput::Soft(blended), true).unwrap();
        let diff: f64 = tape
            .value(hard)
            .data()
            .iter()
            .zip(tape.value(soft).data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9, "row {target_row} diff {diff}");
    }

    #[test]
    fn uniform_decoder_scores_every_token_equally() {
        let vocab = tiny_vocab();
        let mut model = QaModel::new(tiny_cfg(), vocab.size(), 4);
        // Zero embeddings force all output logits to zero: a uniform
        // per-step distribution over the whole vocabulary.
        let shape = model.params.get("embed").shape().to_vec();
        model.params.set("embed", Tensor::zeros(shape));
        let v = vocab.size() as f64;
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let state = tape.leaf(Tensor::zeros(vec![model.cfg.gru_hidden]));
        let target = vec![8, 9, EOS];
        let ll = decode_loglik(&mut tape, &m, state, &target).unwrap();
        let want = 3.0 * (1.0 / v).ln();
        assert!((tape.scalar_value(ll) - want).abs() < 1e-9);
    }

    #[test]
    fn loglik_is_never_positive() {
        let vocab = tiny_vocab();
        let model = QaModel::new(tiny_cfg(), vocab.size(), 5);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let state = encode(&mut tape, &m, &[6], SummaryInput::Hard(&[9, 10]), true).unwrap();
        let ll = decode_loglik(&mut tape, &m, state, &[8, EOS]).unwrap();
        assert!(tape.scalar_value(ll) <= 0.0);
    }

    #[test]
    fn decode_loglik_rejects_empty_target() {
        let vocab = tiny_vocab();
        let model = QaModel::new(tiny_cfg(), vocab.size(), 5);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let state = tape.leaf(Tensor::zeros(vec![model.cfg.gru_hidden]));
        assert!(decode_loglik(&mut tape, &m, state, &[]).is_err());
    }

    #[test]
    fn step_distributions_sum_to_one_and_mass_is_bounded() {
        let vocab = tiny_vocab();
        let model = QaModel::new(tiny_cfg(), vocab.size(), 6);
        let v = vocab.size() as u32;
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let state = encode(&mut tape, &m, &[6, 9], SummaryInput::Hard(&[10, 11]), true).unwrap();
        // One-step sequences exhaust the vocabulary exactly.
        let mut one_step = 0.0;
        for y in 0..v {
            let ll = decode_loglik(&mut tape, &m, state, &[y]).unwrap();
            one_step += tape.scalar_value(ll).exp();
        }
        assert!((one_step - 1.0).abs() < 1e-9, "one-step mass {one_step}");
        // Sequences ending at EOS within two steps leave mass for longer ones.
        let eos_only = {
            let ll = decode_loglik(&mut tape, &m, state, &[EOS]).unwrap();
            tape.scalar_value(ll).exp()
        };
        let mut two_step_eos = eos_only;
        for y in 0..v {
            if y == EOS {
                continue;
            }
            let ll = decode_loglik(&mut tape, &m, state, &[y, EOS]).unwrap();
            two_step_eos += tape.scalar_value(ll).exp();
        }
        assert!(two_step_eos <= 1.0 + 1e-9, "mass {two_step_eos}");
    }

    #[test]
    fn greedy_matches_teacher_forced_loglik_of_its_own_output() {
        let vocab = tiny_vocab();
        let model = QaModel::new(tiny_cfg(), vocab.size(), 7);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let state = encode(&mut tape, &m, &[6, 7], SummaryInput::Hard(&[8, 9, 10]), true).unwrap();
        let map = BTreeMap::new();
        let pred = decode_greedy(&mut tape, &m, state, 20, &map, &vocab).unwrap();
        let ll = decode_loglik(&mut tape, &m, state, &pred.token_ids).unwrap();
        assert!((tape.scalar_value(ll) - pred.log_prob).abs() < 1e-9);
    }

    #[test]
    fn eos_biased_decoder_returns_empty_surface() {
        let vocab = tiny_vocab();
        let mut model = QaModel::new(tiny_cfg(), vocab.size(), 8);
        // Rig the output path so EOS dominates the first step: the only
        // nonzero embedding row is EOS (all ones), the output projection
        // is all ones, and the decoder biases push the state positive.
        let e = model.cfg.embed_dim;
        let h = model.cfg.gru_hidden;
        let mut data = vec![0.0; vocab.size() * e];
        for j in 0..e {
            data[EOS as usize * e + j] = 1.0;
        }
        model
            .params
            .set("embed", Tensor::matrix(vocab.size(), e, data));
        model
            .params
            .set("out.proj", Tensor::matrix(e, h, vec![1.0; e * h]));
        model.params.set("dec.bz", Tensor::vector(vec![2.0; h]));
        model.params.set("dec.bh", Tensor::vector(vec![0.5; h]));
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let state = tape.leaf(Tensor::zeros(vec![model.cfg.gru_hidden]));
        let map = BTreeMap::new();
        let pred = decode_greedy(&mut tape, &m, state, 5, &map, &vocab).unwrap();
        assert_eq!(pred.token_ids, vec![EOS]);
        assert_eq!(pred.surface, "");
    }

    #[test]
    fn placeholders_render_through_the_map() {
        let vocab = tiny_vocab();
        let ph = vocab.placeholder_id(1);
        let mut map = BTreeMap::new();
        map.insert(ph, "gorakhpur".to_string());
        assert_eq!(render_surface(&[ph, EOS], &map, &vocab), "gorakhpur");
        // Unknown placeholder renders as a literal marker.
        let ph0 = vocab.placeholder_id(0);
        assert_eq!(render_surface(&[ph0], &map, &vocab), "PH_0");
    }

    #[test]
    fn embedding_table_is_single_source_of_truth() {
        let vocab = tiny_vocab();
        let mut model = QaModel::new(tiny_cfg(), vocab.size(), 9);
        let run = |model: &QaModel| {
            let mut tape = Tape::new();
            let m = bind(&mut tape, model).unwrap();
            let state = encode(&mut tape, &m, &[6], SummaryInput::Hard(&[9]), true).unwrap();
            let ll = decode_loglik(&mut tape, &m, state, &[8, EOS]).unwrap();
            tape.scalar_value(ll)
        };
        let base = run(&model);
        // Perturb one embedding cell; encoder input, decoder input and
        // output logits all read the same table, so the loglik must move.
        let e = model.cfg.embed_dim;
        let embed = model.params.get("embed").clone();
        let mut data = embed.data().to_vec();
        data[8 * e] += 0.25;
        model
            .params
            .set("embed", Tensor::matrix(embed.rows(), e, data));
        let moved = run(&model);
        assert!((base - moved).abs() > 1e-9);
    }

    #[test]
    fn full_seq2seq_gradient_matches_finite_differences() {
        let vocab = tiny_vocab();
        let model = QaModel::new(tiny_cfg(), vocab.size(), 10);
        let query = vec![6u32, 7];
        let summary = vec![8u32, 9, PAD];
        let target = vec![10u32, EOS];
        let loss_of = |params: &ParamSet| -> crate::error::Result<f64> {
            let probe = QaModel {
                cfg: model.cfg.clone(),
                params: params.clone(),
            };
            let mut tape = Tape::new();
            let m = bind(&mut tape, &probe)?;
            let state = encode(&mut tape, &m, &query, SummaryInput::Hard(&summary), true)?;
            let ll = decode_loglik(&mut tape, &m, state, &target)?;
            let loss = tape.neg(ll)?;
            Ok(tape.scalar_value(loss))
        };
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let state = encode(&mut tape, &m, &query, SummaryInput::Hard(&summary), true).unwrap();
        let ll = decode_loglik(&mut tape, &m, state, &target).unwrap();
        let loss = tape.neg(ll).unwrap();
        let grads = tape.backward(loss).unwrap();
        let report =
            crate::check::finite_diff_check(&model.params, grads.named(), 1e-5, loss_of).unwrap();
        assert!(
            report.worst_rel_error < 1e-4,
            "rel {} at {}",
            report.worst_rel_error,
            report.worst_param
        );
    }
}

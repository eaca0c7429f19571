//! Coarse sentence scorers: bag-of-words, chunked bag-of-words, and CNN.
//!
//! Each scorer maps (query, document) to a distribution over the kept
//! sentences. The score of sentence l is v . relu(W h_l) where h_l
//! concatenates the query representation, the sentence representation,
//! and the sentence-index one-hot; the chunked variant scores sub-
//! sentence chunks and marginalizes them back to sentences.

use crate::error::{Error, Result};
use crate::model::{BoundModel, SelectorKind};
use crate::tape::{Tape, Var};
use crate::text::{PreparedExample, PAD};

/// Distribution over the kept sentences of one example. `probs` is a
/// length-L vector node; the chunked scorer also keeps the underlying
/// chunk distribution and each chunk's parent sentence.
pub struct SelectionDistribution {
    pub probs: Var,
    pub chunk_probs: Option<ChunkProbs>,
}

pub struct ChunkProbs {
    pub probs: Var,
    pub sentence_of_chunk: Vec<usize>,
}

impl SelectionDistribution {
    pub fn probs_vec(&self, tape: &Tape) -> Vec<f64> {
        tape.value(self.probs).data().to_vec()
    }

    pub fn argmax(&self, tape: &Tape) -> usize {
        let p = tape.value(self.probs).data();
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        best
    }
}

/// Mean of the embeddings of the non-pad tokens.
pub fn bow_repr(tape: &mut Tape, embed: Var, ids: &[u32]) -> Result<Var> {
    let content: Vec<u32> = ids.iter().copied().filter(|&id| id != PAD).collect();
    if content.is_empty() {
        return Err(Error::invalid("bow_repr", "all tokens are padding"));
    }
    let rows = tape.lookup(embed, &content)?;
    tape.mean_rows(rows)
}

/// v . relu(W h) for one candidate representation.
fn feed_forward_logit(tape: &mut Tape, w: Var, v: Var, h: Var) -> Result<Var> {
    let hidden = tape.matvec(w, h)?;
    let act = tape.relu(hidden)?;
    let prod = tape.mul(v, act)?;
    tape.sum_all(prod)
}

fn onehot_leaf(tape: &mut Tape, ex: &PreparedExample, l: usize) -> Var {
    tape.leaf(ex.index_onehots[l].clone())
}

/// Bag-of-words scorer.
pub fn score_bow(tape: &mut Tape, m: &BoundModel, ex: &PreparedExample) -> Result<SelectionDistribution> {
    let scorer = m.scorer()?;
    if ex.rows.is_empty() {
        return Err(Error::invalid("score_bow", "no sentences"));
    }
    let query = bow_repr(tape, m.embed, &ex.query_ids)?;
    let mut logits = Vec::with_capacity(ex.rows.len());
    for (l, row) in ex.rows.iter().enumerate() {
        let sent = bow_repr(tape, m.embed, row)?;
        let hot = onehot_leaf(tape, ex, l);
        let h = tape.concat_vec(&[query, sent, hot])?;
        logits.push(feed_forward_logit(tape, scorer.w, scorer.v, h)?);
    }
    let stacked = tape.stack_scalars(&logits)?;
    let probs = tape.softmax(stacked)?;
    Ok(SelectionDistribution {
        probs,
        chunk_probs: None,
    })
}

/// Chunked bag-of-words scorer: consecutive chunks of `chunk_size`
/// non-pad tokens are scored like sentences (sharing W, v and the parent
/// sentence's one-hot), softmaxed jointly, then marginalized per
/// sentence.
pub fn score_chunked(
    tape: &mut Tape,
    m: &BoundModel,
    ex: &PreparedExample,
    chunk_size: usize,
) -> Result<SelectionDistribution> {
    let scorer = m.scorer()?;
    if chunk_size == 0 {
        return Err(Error::invalid("score_chunked", "chunk size must be >= 1"));
    }
    if ex.rows.is_empty() {
        return Err(Error::invalid("score_chunked", "no sentences"));
    }
    let query = bow_repr(tape, m.embed, &ex.query_ids)?;
    let mut logits = Vec::new();
    let mut sentence_of_chunk = Vec::new();
    for (l, row) in ex.rows.iter().enumerate() {
        let content: Vec<u32> = row.iter().copied().filter(|&id| id != PAD).collect();
        if content.is_empty() {
            return Err(Error::invalid("score_chunked", "all tokens are padding"));
        }
        for chunk in content.chunks(chunk_size) {
            let emb = tape.lookup(m.embed, chunk)?;
            let rep = tape.mean_rows(emb)?;
            let hot = onehot_leaf(tape, ex, l);
            let h = tape.concat_vec(&[query, rep, hot])?;
            logits.push(feed_forward_logit(tape, scorer.w, scorer.v, h)?);
            sentence_of_chunk.push(l);
        }
    }
    let stacked = tape.stack_scalars(&logits)?;
    let chunk_probs = tape.softmax(stacked)?;

    // Marginalize chunks back onto their sentences.
    let mut per_sentence: Vec<Var> = Vec::with_capacity(ex.rows.len());
    let mut j = 0;
    for l in 0..ex.rows.len() {
        let mut total: Option<Var> = None;
        while j < sentence_of_chunk.len() && sentence_of_chunk[j] == l {
            let p = tape.pick(chunk_probs, j)?;
            total = Some(match total {
                None => p,
                Some(t) => tape.add(t, p)?,
            });
            j += 1;
        }
        per_sentence.push(total.expect("every sentence has at least one chunk"));
    }
    let probs = tape.stack_scalars(&per_sentence)?;
    Ok(SelectionDistribution {
        probs,
        chunk_probs: Some(ChunkProbs {
            probs: chunk_probs,
            sentence_of_chunk,
        }),
    })
}

/// CNN scorer: convolve the concatenated query + sentence embeddings,
/// max-pool over time, then feed-forward scoring as in the BoW model.
pub fn score_cnn(tape: &mut Tape, m: &BoundModel, ex: &PreparedExample) -> Result<SelectionDistribution> {
    let cnn = m.cnn()?;
    if ex.rows.is_empty() {
        return Err(Error::invalid("score_cnn", "no sentences"));
    }
    let width = m.cfg.cnn_width;
    if m.cfg.cnn_filters == 0 || width == 0 {
        return Err(Error::invalid("score_cnn", "filters and width must be >= 1"));
    }
    let mut logits = Vec::with_capacity(ex.rows.len());
    for (l, row) in ex.rows.iter().enumerate() {
        let mut ids: Vec<u32> = ex.query_ids.iter().chain(row.iter()).copied().collect();
        // Right-pad very short sequences up to the filter width.
        while ids.len() < width {
            ids.push(PAD);
        }
        let emb = tape.lookup(m.embed, &ids)?;
        let conv = tape.conv1d(emb, cnn.filters, cnn.bias, width)?;
        let pooled = tape.max_over_time(conv)?;
        let hot = onehot_leaf(tape, ex, l);
        let h = tape.concat_vec(&[pooled, hot])?;
        logits.push(feed_forward_logit(tape, cnn.w, cnn.v, h)?);
    }
    let stacked = tape.stack_scalars(&logits)?;
    let probs = tape.softmax(stacked)?;
    Ok(SelectionDistribution {
        probs,
        chunk_probs: None,
    })
}

/// Dispatches on the configured selector kind.
pub fn score(tape: &mut Tape, m: &BoundModel, ex: &PreparedExample) -> Result<SelectionDistribution> {
    match m.cfg.selector {
        SelectorKind::Bow => score_bow(tape, m, ex),
        SelectorKind::Chunk => score_chunked(tape, m, ex, m.cfg.chunk_size),
        SelectorKind::Cnn => score_cnn(tape, m, ex),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::finite_diff_check;
    use crate::model::{bind, ModelConfig, QaModel, SelectorKind};
    use crate::rng::Rng;
    use crate::tensor::Tensor;
    use crate::text::onehot;

    /// Builds a synthetic prepared example directly from id rows.
    fn example(query: Vec<u32>, rows: Vec<Vec<u32>>, max_sentences: usize) -> PreparedExample {
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
        let index_onehots = (0..rows.len()).map(|l| onehot(l, max_sentences)).collect();
        PreparedExample {
            query_ids: query,
            rows,
            sentence_lengths,
            index_onehots,
            answer_ids: vec![crate::text::EOS],
            answer_norm: String::new(),
            placeholder_map: Default::default(),
            gold_sentence: None,
            doc_prefix_ids: vec![],
            doc_token_total: 0,
        }
    }

    fn tiny_model(selector: SelectorKind, seed: u64) -> QaModel {
        let cfg = ModelConfig {
            embed_dim: 2,
            sel_hidden: 3,
            gru_hidden: 3,
            cnn_filters: 2,
            cnn_width: 2,
            chunk_size: 2,
            selector,
            max_sentences: 5,
            max_tokens: 4,
            ..ModelConfig::default()
        };
        QaModel::new(cfg, 12, seed)
    }

    #[test]
    fn bow_repr_excludes_pads() {
        let model = tiny_model(SelectorKind::Bow, 1);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let single = bow_repr(&mut tape, m.embed, &[7]).unwrap();
        let repeated = bow_repr(&mut tape, m.embed, &[7, 7]).unwrap();
        let padded = bow_repr(&mut tape, m.embed, &[6, 8, PAD, PAD]).unwrap();
        let e7 = &model.params.get("embed").data()[14..16];
        assert_eq!(tape.value(single).data(), e7);
        assert_eq!(tape.value(repeated).data(), e7);
        let e = model.params.get("embed");
        let mean: Vec<f64> = (0..2)
            .map(|j| (e.data()[12 + j] + e.data()[16 + j]) / 2.0)
            .collect();
        for (a, b) in tape.value(padded).data().iter().zip(&mean) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(bow_repr(&mut tape, m.embed, &[PAD, PAD]).is_err());
    }

    #[test]
    fn single_sentence_gets_probability_one() {
        let model = tiny_model(SelectorKind::Bow, 2);
        let ex = example(vec![5, 6], vec![vec![7, 8]], 5);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let dist = score_bow(&mut tape, &m, &ex).unwrap();
        assert_eq!(dist.probs_vec(&tape), vec![1.0]);
    }

    #[test]
    fn identical_sentences_split_evenly_when_onehot_ignored() {
        let mut model = tiny_model(SelectorKind::Bow, 3);
        // Zero the one-hot columns of W so only token content matters.
        let w = model.params.get("sel.w").clone();
        let (h, cols) = (w.rows(), w.cols());
        let e2 = 2 * model.cfg.embed_dim;
        let mut data = w.data().to_vec();
        for r in 0..h {
            for c in e2..cols {
                data[r * cols + c] = 0.0;
            }
        }
        model.params.set("sel.w", Tensor::matrix(h, cols, data));
        let ex = example(vec![5], vec![vec![7, 8], vec![7, 8]], 5);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let dist = score_bow(&mut tape, &m, &ex).unwrap();
        let p = dist.probs_vec(&tape);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    /// Straight-line reimplementation of the BoW scorer used as an
    /// independent forward oracle.
    fn bow_oracle(model: &QaModel, ex: &PreparedExample) -> Vec<f64> {
        let e = model.cfg.embed_dim;
        let embed = model.params.get("embed");
        let w = model.params.get("sel.w");
        let v = model.params.get("sel.v");
        let mean = |ids: &[u32]| -> Vec<f64> {
            let content: Vec<u32> = ids.iter().copied().filter(|&i| i != PAD).collect();
            let mut out = vec![0.0; e];
            for &id in &content {
                for j in 0..e {
                    out[j] += embed.data()[id as usize * e + j];
                }
            }
            out.iter().map(|x| x / content.len() as f64).collect()
        };
        let q = mean(&ex.query_ids);
        let mut logits = Vec::new();
        for (l, row) in ex.rows.iter().enumerate() {
            let s = mean(row);
            let mut h: Vec<f64> = q.iter().chain(s.iter()).copied().collect();
            h.extend(ex.index_onehots[l].data());
            let mut logit = 0.0;
            for r in 0..w.rows() {
                let mut acc = 0.0;
                for c in 0..w.cols() {
                    acc += w.data()[r * w.cols() + c] * h[c];
                }
                logit += v.data()[r] * acc.max(0.0);
            }
            logits.push(logit);
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|x| x / z).collect()
    }

    #[test]
    fn bow_matches_independent_reimplementation() {
        let model = tiny_model(SelectorKind::Bow, 4);
        let ex = example(
            vec![5, 9],
            vec![vec![6, 7, 8, 11], vec![10, 7], vec![9, 9, 6]],
            5,
        );
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let dist = score_bow(&mut tape, &m, &ex).unwrap();
        let got = dist.probs_vec(&tape);
        let want = bow_oracle(&model, &ex);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn chunked_collapses_to_bow_for_short_sentences() {
        let model = tiny_model(SelectorKind::Chunk, 5);
        let ex = example(vec![5], vec![vec![6, 7], vec![8]], 5);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let chunked = score_chunked(&mut tape, &m, &ex, 7).unwrap();
        let bow = score_bow(&mut tape, &m, &ex).unwrap();
        let a = chunked.probs_vec(&tape);
        let b = bow.probs_vec(&tape);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn chunk_probs_marginalize_to_sentence_probs() {
        let model = tiny_model(SelectorKind::Chunk, 6);
        let ex = example(
            vec![5],
            vec![vec![6, 7, 8, 9, 10, 11], vec![7, 9, 11, 5, 6]],
            5,
        );
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let dist = score_chunked(&mut tape, &m, &ex, 2).unwrap();
        let chunks = dist.chunk_probs.as_ref().unwrap();
        let cp = tape.value(chunks.probs).data().to_vec();
        let sp = dist.probs_vec(&tape);
        for l in 0..ex.rows.len() {
            let sum: f64 = cp
                .iter()
                .zip(&chunks.sentence_of_chunk)
                .filter(|(_, &s)| s == l)
                .map(|(p, _)| p)
                .sum();
            assert!((sum - sp[l]).abs() < 1e-9);
        }
    }

    /// Enumerates the four chunk logits of a two-sentence example by
    /// hand and checks the marginalized distribution.
    #[test]
    fn chunked_matches_bruteforce_enumeration() {
        let model = tiny_model(SelectorKind::Chunk, 7);
        let rows = vec![vec![6, 7, 8, 9], vec![10, 11, 5, 6]];
        let ex = example(vec![5, 9], rows.clone(), 5);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let dist = score_chunked(&mut tape, &m, &ex, 2).unwrap();
        let got = dist.probs_vec(&tape);

        // Oracle: score each 2-token chunk as its own "sentence" through
        // the BoW oracle machinery, then softmax over all four chunks.
        let e = model.cfg.embed_dim;
        let embed = model.params.get("embed");
        let w = model.params.get("sel.w");
        let v = model.params.get("sel.v");
        let mean = |ids: &[u32]| -> Vec<f64> {
            let mut out = vec![0.0; e];
            for &id in ids {
                for j in 0..e {
                    out[j] += embed.data()[id as usize * e + j];
                }
            }
            out.iter().map(|x| x / ids.len() as f64).collect()
        };
        let q = mean(&ex.query_ids);
        let mut logits = Vec::new();
        let mut owners = Vec::new();
        for (l, row) in rows.iter().enumerate() {
            for chunk in row.chunks(2) {
                let c = mean(chunk);
                let mut h: Vec<f64> = q.iter().chain(c.iter()).copied().collect();
                h.extend(ex.index_onehots[l].data());
                let mut logit = 0.0;
                for r in 0..w.rows() {
                    let mut acc = 0.0;
                    for cc in 0..w.cols() {
                        acc += w.data()[r * w.cols() + cc] * h[cc];
                    }
                    logit += v.data()[r] * acc.max(0.0);
                }
                logits.push(logit);
                owners.push(l);
            }
        }
        assert_eq!(logits.len(), 4);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let mut want = vec![0.0; 2];
        for (p, &l) in exps.iter().zip(&owners) {
            want[l] += p / z;
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn cnn_with_zero_filters_and_onehot_is_uniform() {
        let mut model = tiny_model(SelectorKind::Cnn, 8);
        let f = model.params.get("cnn.filters").clone();
        model
            .params
            .set("cnn.filters", Tensor::zeros(f.shape().to_vec()));
        model.params.set("cnn.bias", Tensor::vector(vec![0.3, -0.2]));
        // Zero the one-hot columns so position cannot break the tie.
        let w = model.params.get("cnn.w").clone();
        let (h, cols) = (w.rows(), w.cols());
        let f_dim = model.cfg.cnn_filters;
        let mut data = w.data().to_vec();
        for r in 0..h {
            for c in f_dim..cols {
                data[r * cols + c] = 0.0;
            }
        }
        model.params.set("cnn.w", Tensor::matrix(h, cols, data));
        let ex = example(vec![5], vec![vec![6, 7], vec![8, 9], vec![10, 11]], 5);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let dist = score_cnn(&mut tape, &m, &ex).unwrap();
        for p in dist.probs_vec(&tape) {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cnn_identical_sentences_split_evenly_when_onehot_ignored() {
        let mut model = tiny_model(SelectorKind::Cnn, 14);
        let w = model.params.get("cnn.w").clone();
        let (h, cols) = (w.rows(), w.cols());
        let f_dim = model.cfg.cnn_filters;
        let mut data = w.data().to_vec();
        for r in 0..h {
            for c in f_dim..cols {
                data[r * cols + c] = 0.0;
            }
        }
        model.params.set("cnn.w", Tensor::matrix(h, cols, data));
        let ex = example(vec![5, 9], vec![vec![6, 7, 8], vec![6, 7, 8]], 5);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let dist = score_cnn(&mut tape, &m, &ex).unwrap();
        let p = dist.probs_vec(&tape);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    /// Straight-line CNN forward oracle.
    fn cnn_oracle(model: &QaModel, ex: &PreparedExample) -> Vec<f64> {
        let e = model.cfg.embed_dim;
        let width = model.cfg.cnn_width;
        let f_count = model.cfg.cnn_filters;
        let embed = model.params.get("embed");
        let filters = model.params.get("cnn.filters");
        let bias = model.params.get("cnn.bias");
        let w = model.params.get("cnn.w");
        let v = model.params.get("cnn.v");
        let mut logits = Vec::new();
        for (l, row) in ex.rows.iter().enumerate() {
            let ids: Vec<u32> = ex.query_ids.iter().chain(row.iter()).copied().collect();
            let t_len = ids.len();
            let seq: Vec<f64> = ids
                .iter()
                .flat_map(|&id| embed.data()[id as usize * e..(id as usize + 1) * e].to_vec())
                .collect();
            let mut pooled = vec![f64::NEG_INFINITY; f_count];
            for t in 0..=(t_len - width) {
                for f in 0..f_count {
                    let mut s = bias.data()[f];
                    for off in 0..width * e {
                        s += seq[t * e + off] * filters.data()[f * width * e + off];
                    }
                    if s > pooled[f] {
                        pooled[f] = s;
                    }
                }
            }
            let mut h: Vec<f64> = pooled.clone();
            h.extend(ex.index_onehots[l].data());
            let mut logit = 0.0;
            for r in 0..w.rows() {
                let mut acc = 0.0;
                for c in 0..w.cols() {
                    acc += w.data()[r * w.cols() + c] * h[c];
                }
                logit += v.data()[r] * acc.max(0.0);
            }
            logits.push(logit);
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|x| x / z).collect()
    }

    #[test]
    fn cnn_matches_independent_reimplementation() {
        let model = tiny_model(SelectorKind::Cnn, 9);
        let ex = example(vec![5, 9], vec![vec![6, 7, 8], vec![10, 11, 5]], 5);
        let mut tape = Tape::new();
        let m = bind(&mut tape, &model).unwrap();
        let dist = score_cnn(&mut tape, &m, &ex).unwrap();
        let got = dist.probs_vec(&tape);
        let want = cnn_oracle(&model, &ex);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn all_scorers_output_valid_distributions() {
        for seed in 0..100u64 {
            let mut rng = Rng::seed_from_u64(seed);
            let kind = match seed % 3 {
                0 => SelectorKind::Bow,
                1 => SelectorKind::Chunk,
                _ => SelectorKind::Cnn,
            };
            let model = tiny_model(kind, seed);
            let n_sent = rng.range_inclusive(1, 5);
            let rows: Vec<Vec<u32>> = (0..n_sent)
                .map(|_| {
                    let len = rng.range_inclusive(1, 4);
                    (0..len).map(|_| 5 + rng.below(7) as u32).collect()
                })
                .collect();
            let q_len = rng.range_inclusive(1, 3);
            let query: Vec<u32> = (0..q_len).map(|_| 5 + rng.below(7) as u32).collect();
            let ex = example(query, rows, 5);
            let mut tape = Tape::new();
            let m = bind(&mut tape, &model).unwrap();
            let dist = score(&mut tape, &m, &ex).unwrap();
            let p = dist.probs_vec(&tape);
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "sum {sum} seed {seed}");
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn permuting_sentences_permutes_probs() {
        for kind in [SelectorKind::Bow, SelectorKind::Chunk, SelectorKind::Cnn] {
            let model = tiny_model(kind, 11);
            let rows = vec![vec![6, 7, 8], vec![9, 10, 11], vec![5, 6, 9]];
            let ex = example(vec![5, 7], rows.clone(), 5);
            // Permutation (2, 0, 1), moving one-hots along with rows.
            let perm = [2usize, 0, 1];
            let mut permuted = example(
                vec![5, 7],
                perm.iter().map(|&i| rows[i].clone()).collect(),
                5,
            );
            permuted.index_onehots = perm.iter().map(|&i| onehot(i, 5)).collect();

            let mut tape = Tape::new();
            let m = bind(&mut tape, &model).unwrap();
            let base = score(&mut tape, &m, &ex).unwrap().probs_vec(&tape);
            let moved = score(&mut tape, &m, &permuted).unwrap().probs_vec(&tape);
            for (j, &i) in perm.iter().enumerate() {
                assert!(
                    (moved[j] - base[i]).abs() < 1e-12,
                    "{kind:?}: {moved:?} vs {base:?}"
                );
            }
        }
    }

    #[test]
    fn log_prob_gradients_match_finite_differences() {
        for (seed, kind) in [
            (21u64, SelectorKind::Bow),
            (22, SelectorKind::Chunk),
            (23, SelectorKind::Cnn),
        ] {
            let model = tiny_model(kind, seed);
            let ex = example(vec![5, 9], vec![vec![6, 7, 8], vec![10, 11, 5]], 5);
            let target = 1usize;
            let mut tape = Tape::new();
            let m = bind(&mut tape, &model).unwrap();
            let dist = score(&mut tape, &m, &ex).unwrap();
            let p = tape.pick(dist.probs, target).unwrap();
            let loss = tape.log(p).unwrap();
            let grads = tape.backward(loss).unwrap();
            let report = finite_diff_check(&model.params, grads.named(), 1e-5, |params| {
                let probe = QaModel {
                    cfg: model.cfg.clone(),
                    params: params.clone(),
                };
                let mut t = Tape::new();
                let m = bind(&mut t, &probe)?;
                let dist = score(&mut t, &m, &ex)?;
                let p = t.pick(dist.probs, target)?;
                let l = t.log(p)?;
                Ok(t.scalar_value(l))
            })
            .unwrap();
            assert!(
                report.worst_rel_error < 1e-4,
                "{kind:?} rel {} at {}",
                report.worst_rel_error,
                report.worst_param
            );
        }
    }
}

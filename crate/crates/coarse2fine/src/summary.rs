//! Document summaries: hard (sampled or top-K sentences, concatenated)
//! and soft (per-position convex blend of token embeddings).

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::text::{PreparedExample, PAD};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectMode {
    Sample,
    Argmax,
}

/// K selected sentences and their concatenated tokens.
#[derive(Clone, Debug)]
pub struct HardSummary {
    /// Selected sentence indices in selection order: draw order when
    /// sampled, ascending index order under argmax.
    pub indices: Vec<usize>,
    /// Non-pad tokens of the selected rows, concatenated and re-padded
    /// to k * max_tokens.
    pub token_ids: Vec<u32>,
    /// Set when fewer than K sentences were available.
    pub clipped: bool,
}

/// Selects K sentences from a distribution. Sampling draws without
/// replacement (draw, remove, renormalize); argmax takes the top K by
/// probability with ties resolved to the lower index.
pub fn hard_select(
    probs: &[f64],
    ex: &PreparedExample,
    k: usize,
    mode: SelectMode,
    rng: Option<&mut Rng>,
) -> Result<HardSummary> {
    if k == 0 {
        return Err(Error::invalid("hard_select", "k must be >= 1"));
    }
    if probs.len() != ex.rows.len() {
        return Err(Error::shape(
            "hard_select",
            format!("{} probs for {} sentences", probs.len(), ex.rows.len()),
        ));
    }
    let len = probs.len();
    let take = k.min(len);
    let clipped = take < k;
    let indices = match mode {
        SelectMode::Sample => {
            let rng = rng.ok_or_else(|| {
                Error::invalid("hard_select", "sample mode requires a seeded rng")
            })?;
            let mut remaining = probs.to_vec();
            let mut out = Vec::with_capacity(take);
            for _ in 0..take {
                let i = rng.categorical(&remaining);
                out.push(i);
                remaining[i] = 0.0;
            }
            out
        }
        SelectMode::Argmax => {
            let mut order: Vec<usize> = (0..len).collect();
            // Stable ranking: higher probability first, lower index wins ties.
            order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
            let mut top: Vec<usize> = order.into_iter().take(take).collect();
            top.sort_unstable();
            top
        }
    };
    let max_tokens = ex.rows.first().map(Vec::len).unwrap_or(0);
    let mut token_ids = Vec::with_capacity(k * max_tokens);
    for &i in &indices {
        token_ids.extend(ex.rows[i].iter().copied().filter(|&id| id != PAD));
    }
    token_ids.resize(k * max_tokens, PAD);
    Ok(HardSummary {
        indices,
        token_ids,
        clipped,
    })
}

/// Builds a hard summary from explicitly chosen sentences, as the
/// distant-supervision objective and the First/Oracle baselines do.
pub fn forced_summary(ex: &PreparedExample, indices: &[usize], k: usize) -> Result<HardSummary> {
    if indices.is_empty() || indices.len() > k {
        return Err(Error::invalid(
            "forced_summary",
            format!("{} indices for k={}", indices.len(), k),
        ));
    }
    for &i in indices {
        if i >= ex.rows.len() {
            return Err(Error::invalid(
                "forced_summary",
                format!("sentence {} of {}", i, ex.rows.len()),
            ));
        }
    }
    let max_tokens = ex.rows.first().map(Vec::len).unwrap_or(0);
    let mut token_ids = Vec::with_capacity(k * max_tokens);
    for &i in indices {
        token_ids.extend(ex.rows[i].iter().copied().filter(|&id| id != PAD));
    }
    token_ids.resize(k * max_tokens, PAD);
    Ok(HardSummary {
        indices: indices.to_vec(),
        token_ids,
        clipped: false,
    })
}

/// Blended summary: one M x e matrix node whose m-th row is
/// sum_l p_l * embed(row_l[m]). Pads participate through the (trainable)
/// pad embedding, mirroring how hard summaries encode pad positions.
pub struct SoftSummary {
    pub blended: Var,
}

pub fn soft_blend(
    tape: &mut Tape,
    probs: Var,
    ex: &PreparedExample,
    embed: Var,
) -> Result<SoftSummary> {
    let l_count = ex.rows.len();
    if tape.value(probs).numel() != l_count {
        return Err(Error::shape(
            "soft_blend",
            format!(
                "{} probs for {} sentences",
                tape.value(probs).numel(),
                l_count
            ),
        ));
    }
    let m_count = ex.rows.first().map(Vec::len).unwrap_or(0);
    if ex.rows.iter().any(|r| r.len() != m_count) {
        return Err(Error::shape("soft_blend", "rows must share one padded length"));
    }
    let e = tape.value(embed).cols();
    let mut position_rows = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let column: Vec<u32> = ex.rows.iter().map(|row| row[m]).collect();
        let stacked = tape.lookup(embed, &column)?; // L x e
        let blended_m = tape.vecmat(probs, stacked)?; // e
        position_rows.push(tape.reshape(blended_m, vec![1, e])?);
    }
    let blended = tape.concat_rows(&position_rows)?;
    Ok(SoftSummary { blended })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::text::onehot;

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
        let index_onehots = (0..rows.len()).map(|l| onehot(l, 35)).collect();
        PreparedExample {
            query_ids: vec![5],
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

    #[test]
    fn degenerate_distribution_selects_the_only_sentence() {
        let ex = example(vec![vec![6, 7]]);
        for mode in [SelectMode::Argmax, SelectMode::Sample] {
            let mut rng = Rng::seed_from_u64(1);
            let s = hard_select(&[1.0], &ex, 1, mode, Some(&mut rng)).unwrap();
            assert_eq!(s.indices, vec![0]);
            assert!(!s.clipped);
        }
    }

    #[test]
    fn argmax_takes_top_k_in_index_order() {
        let ex = example(vec![vec![6], vec![7], vec![8]]);
        let s = hard_select(&[0.2, 0.5, 0.3], &ex, 2, SelectMode::Argmax, None).unwrap();
        assert_eq!(s.indices, vec![1, 2]);
    }

    #[test]
    fn argmax_breaks_ties_toward_lower_index() {
        let ex = example(vec![vec![6], vec![7], vec![8]]);
        let s = hard_select(&[0.4, 0.2, 0.4], &ex, 1, SelectMode::Argmax, None).unwrap();
        assert_eq!(s.indices, vec![0]);
    }

    #[test]
    fn argmax_is_invariant_to_monotone_rescaling() {
        let ex = example(vec![vec![6], vec![7], vec![8], vec![9]]);
        let probs = [0.1, 0.45, 0.05, 0.4];
        let rescaled: Vec<f64> = probs.iter().map(|p| p * p * p * 7.0).collect();
        let a = hard_select(&probs, &ex, 2, SelectMode::Argmax, None).unwrap();
        let b = hard_select(&rescaled, &ex, 2, SelectMode::Argmax, None).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn requesting_more_sentences_than_available_clips() {
        let ex = example(vec![vec![6], vec![7]]);
        let s = hard_select(&[0.6, 0.4], &ex, 3, SelectMode::Argmax, None).unwrap();
        assert_eq!(s.indices, vec![0, 1]);
        assert!(s.clipped);
        // Token budget still reflects the requested K.
        assert_eq!(s.token_ids.len(), 3 * ex.rows[0].len());
    }

    #[test]
    fn hard_summary_strips_pads_then_repads() {
        let ex = example(vec![vec![6, 7, PAD, PAD], vec![8, PAD, PAD, PAD]]);
        let s = hard_select(&[0.5, 0.5], &ex, 2, SelectMode::Argmax, None).unwrap();
        assert_eq!(s.token_ids, vec![6, 7, 8, PAD, PAD, PAD, PAD, PAD]);
    }

    #[test]
    fn sample_mode_requires_rng() {
        let ex = example(vec![vec![6]]);
        assert!(hard_select(&[1.0], &ex, 1, SelectMode::Sample, None).is_err());
    }

    #[test]
    fn sampled_first_draw_frequencies_match_distribution() {
        let ex = example(vec![vec![6], vec![7], vec![8]]);
        let probs = [0.2, 0.5, 0.3];
        let mut rng = Rng::seed_from_u64(99);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let s = hard_select(&probs, &ex, 1, SelectMode::Sample, Some(&mut rng)).unwrap();
            counts[s.indices[0]] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let freq = *c as f64 / n as f64;
            assert!((freq - p).abs() < 0.01, "freq {freq} target {p}");
        }
    }

    #[test]
    fn sampling_without_replacement_keeps_indices_distinct() {
        let ex = example(vec![vec![6], vec![7], vec![8], vec![9]]);
        let probs = [0.4, 0.3, 0.2, 0.1];
        let mut rng = Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let s = hard_select(&probs, &ex, 3, SelectMode::Sample, Some(&mut rng)).unwrap();
            let mut sorted = s.indices.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 3);
        }
    }

    fn toy_embed(tape: &mut Tape, v: usize, e: usize) -> Var {
        let data: Vec<f64> = (0..v * e).map(|i| (i as f64) * 0.1 - 1.0).collect();
        tape.leaf(Tensor::matrix(v, e, data))
    }

    #[test]
    fn one_hot_blend_equals_selected_row_embeddings() {
        let ex = example(vec![vec![6, 7], vec![8, 9]]);
        let mut tape = Tape::new();
        let embed = toy_embed(&mut tape, 12, 3);
        let probs = tape.leaf(Tensor::vector(vec![0.0, 1.0]));
        let soft = soft_blend(&mut tape, probs, &ex, embed).unwrap();
        let want = tape.lookup(embed, &ex.rows[1]).unwrap();
        assert_eq!(tape.value(soft.blended).data(), tape.value(want).data());
    }

    #[test]
    fn identical_rows_blend_to_that_row_for_any_distribution() {
        let ex = example(vec![vec![6, 7], vec![6, 7]]);
        let mut tape = Tape::new();
        let embed = toy_embed(&mut tape, 12, 3);
        let probs = tape.leaf(Tensor::vector(vec![0.37, 0.63]));
        let soft = soft_blend(&mut tape, probs, &ex, embed).unwrap();
        let want = tape.lookup(embed, &ex.rows[0]).unwrap();
        let diff: f64 = tape
            .value(soft.blended)
            .data()
            .iter()
            .zip(tape.value(want).data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn blend_matches_hand_computed_weighted_average() {
        // L=2, M=2, e=1, probs [0.25, 0.75].
        let ex = example(vec![vec![5, 6], vec![7, 8]]);
        let mut tape = Tape::new();
        let embed = tape.leaf(Tensor::matrix(
            9,
            1,
            vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        ));
        let probs = tape.leaf(Tensor::vector(vec![0.25, 0.75]));
        let soft = soft_blend(&mut tape, probs, &ex, embed).unwrap();
        let got = tape.value(soft.blended).data().to_vec();
        let want = [0.25 * 0.5 + 0.75 * 0.7, 0.25 * 0.6 + 0.75 * 0.8];
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn blend_rows_stay_in_convex_hull() {
        let ex = example(vec![vec![5, 6], vec![7, 8], vec![6, 5]]);
        let mut tape = Tape::new();
        let embed = toy_embed(&mut tape, 12, 2);
        let probs = tape.leaf(Tensor::vector(vec![0.2, 0.3, 0.5]));
        let soft = soft_blend(&mut tape, probs, &ex, embed).unwrap();
        let blended = tape.value(soft.blended).clone();
        for m in 0..2 {
            for j in 0..2 {
                let coords: Vec<f64> = ex
                    .rows
                    .iter()
                    .map(|row| tape.value(embed).data()[row[m] as usize * 2 + j])
                    .collect();
                let lo = coords.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = coords.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = blended.data()[m * 2 + j];
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}

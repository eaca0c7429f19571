//! Hard versus soft document summaries over the same distribution.
//!
//! Hard summaries sample (or argmax) K discrete sentences without
//! replacement; soft summaries blend token embeddings across sentences
//! under the distribution. At a one-hot distribution the two coincide,
//! which this example demonstrates numerically.
//!
//! Run: cargo run --example summary_modes

use coarse2fine::model::{bind, ModelConfig, QaModel, SelectorKind};
use coarse2fine::rng::Rng;
use coarse2fine::seq2seq::{encode, SummaryInput};
use coarse2fine::summary::{forced_summary, hard_select, soft_blend, SelectMode};
use coarse2fine::tape::Tape;
use coarse2fine::tensor::Tensor;
use coarse2fine::text::{prepare_example, PrepareConfig, RawExample, Vocabulary};

fn main() -> coarse2fine::Result<()> {
    let raw = RawExample::new(
        "color of brimshaw",
        vec![
            "the mill stayed quiet".into(),
            "brimshaw has color amber".into(),
            "the orchard stayed calm".into(),
        ],
        "amber",
    );
    let vocab = Vocabulary::build(&[raw.clone()], 200, 5)?;
    let prep = PrepareConfig {
        max_sentences: 3,
        max_tokens: 6,
        ..PrepareConfig::default()
    };
    let ex = prepare_example(&raw, &vocab, &prep)?;
    let model = QaModel::new(
        ModelConfig {
            embed_dim: 6,
            sel_hidden: 6,
            gru_hidden: 8,
            selector: SelectorKind::Bow,
            max_sentences: 3,
            max_tokens: 6,
            ..ModelConfig::default()
        },
        vocab.size(),
        5,
    );

    let probs = [0.15, 0.7, 0.15];
    let mut rng = Rng::seed_from_u64(2);
    let sampled = hard_select(&probs, &ex, 2, SelectMode::Sample, Some(&mut rng))?;
    let argmax = hard_select(&probs, &ex, 2, SelectMode::Argmax, None)?;
    println!("distribution over sentences: {probs:?}");
    println!("sampled K=2 summary (draw order): {:?}", sampled.indices);
    println!("argmax  K=2 summary (index order): {:?}", argmax.indices);

    // One-hot blending reproduces the hard summary exactly.
    let mut tape = Tape::new();
    let m = bind(&mut tape, &model)?;
    let hard = forced_summary(&ex, &[1], 1)?;
    let hard_state = encode(&mut tape, &m, &ex.query_ids, SummaryInput::Hard(&hard.token_ids), true)?;
    let onehot = tape.leaf(Tensor::vector(vec![0.0, 1.0, 0.0]));
    let soft = soft_blend(&mut tape, onehot, &ex, m.embed)?;
    let soft_state = encode(&mut tape, &m, &ex.query_ids, SummaryInput::Soft(soft.blended), true)?;
    let diff: f64 = tape
        .value(hard_state)
        .data()
        .iter()
        .zip(tape.value(soft_state).data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max |hard state - one-hot soft state| = {diff:.2e}");
    Ok(())
}

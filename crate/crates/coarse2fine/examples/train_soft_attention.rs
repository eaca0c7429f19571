//! Train the fully differentiable soft-attention model: every summary
//! position is a convex blend of the sentences' token embeddings under
//! the selection distribution, so the answer loss backpropagates through
//! selection and generation end to end.
//!
//! Run: cargo run --example train_soft_attention

use coarse2fine::gen::{gen_synthetic, GeneratorConfig, PositionDist};
use coarse2fine::model::{ModelConfig, QaModel, SelectorKind, SummaryMode};
use coarse2fine::text::{prepare_dataset, PrepareConfig, Vocabulary};
use coarse2fine::train::{run_training, Method, TrainConfig};

fn main() -> coarse2fine::Result<()> {
    let data = gen_synthetic(&GeneratorConfig {
        num_examples: 430,
        min_sentences: 4,
        max_sentences: 7,
        position: PositionDist::Uniform,
        seed: 3,
        ..GeneratorConfig::default()
    })?;
    let vocab = Vocabulary::build(&data.train, 4000, 20)?;
    let prep = PrepareConfig {
        max_sentences: 7,
        max_tokens: 12,
        ..PrepareConfig::default()
    };
    let train = prepare_dataset(&data.train, &vocab, &prep)?;
    let dev = prepare_dataset(&data.dev, &vocab, &prep)?;

    let cfg = ModelConfig {
        embed_dim: 24,
        sel_hidden: 32,
        gru_hidden: 48,
        selector: SelectorKind::Bow,
        summary: SummaryMode::Soft,
        max_sentences: 7,
        max_tokens: 12,
        max_answer_len: 4,
        ..ModelConfig::default()
    };
    let mut model = QaModel::new(cfg, vocab.size(), 1);
    let train_cfg = TrainConfig {
        method: Method::Soft,
        epochs: 25,
        batch_size: 4,
        learning_rate: 1e-2,
        seed: 1,
        early_stop_train_acc: Some(0.995),
        ..TrainConfig::default()
    };
    let out = run_training(&mut model, &vocab, &train, &dev, &train_cfg, None)?;
    for row in out.rows.iter().filter(|r| r.split == "dev") {
        println!(
            "epoch {:2}  dev answer acc {:.3}  sentence acc {}",
            row.epoch,
            row.answer_acc,
            row.sent_acc.map(|v| format!("{v:.3}")).unwrap_or_default(),
        );
    }
    Ok(())
}

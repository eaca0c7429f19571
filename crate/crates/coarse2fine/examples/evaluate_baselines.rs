//! Compare a trained model against the First and Oracle baselines.
//!
//! First always feeds sentence 0 to the generator; Oracle feeds the
//! first answer-bearing sentence (gold labels at test time). A learned
//! selector should land between them, and Oracle's sentence accuracy is
//! 1.0 on examples where any sentence contains the answer.
//!
//! Run: cargo run --example evaluate_baselines

use coarse2fine::eval::{evaluate, run_baseline, BaselineKind};
use coarse2fine::gen::{gen_synthetic, GeneratorConfig, PositionDist};
use coarse2fine::model::{ModelConfig, QaModel, SelectorKind};
use coarse2fine::text::{prepare_dataset, PrepareConfig, Vocabulary};
use coarse2fine::train::{run_training, Method, TrainConfig};

fn main() -> coarse2fine::Result<()> {
    let data = gen_synthetic(&GeneratorConfig {
        num_examples: 430,
        min_sentences: 5,
        max_sentences: 8,
        position: PositionDist::Uniform,
        seed: 21,
        ..GeneratorConfig::default()
    })?;
    let vocab = Vocabulary::build(&data.train, 4000, 20)?;
    let prep = PrepareConfig {
        max_sentences: 8,
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
        max_sentences: 8,
        max_tokens: 12,
        max_answer_len: 4,
        ..ModelConfig::default()
    };
    let mut model = QaModel::new(cfg, vocab.size(), 1);
    let train_cfg = TrainConfig {
        method: Method::Pipeline,
        epochs: 25,
        batch_size: 4,
        learning_rate: 1e-2,
        seed: 5,
        early_stop_train_acc: Some(1.0),
        ..TrainConfig::default()
    };
    run_training(&mut model, &vocab, &train, &dev, &train_cfg, None)?;

    let first = run_baseline(BaselineKind::First, &model, &vocab, &dev)?;
    let oracle = run_baseline(BaselineKind::Oracle, &model, &vocab, &dev)?;
    let learned = evaluate(&model, &vocab, &dev, "pipeline")?;
    println!("method    answer_acc  sentence_acc  (dev, {} examples)", dev.len());
    for r in [&first, &learned, &oracle] {
        println!(
            "{:9} {:10.3}  {}{}",
            r.method,
            r.answer_accuracy,
            r.sentence_accuracy
                .map(|v| format!("{v:12.3}"))
                .unwrap_or_else(|| "   undefined".into()),
            if r.oracle { "  [gold labels at test time]" } else { "" },
        );
    }
    Ok(())
}

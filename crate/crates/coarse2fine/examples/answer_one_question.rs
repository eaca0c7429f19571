//! Walk one example through the whole stack: prepare it, score the
//! sentences, pick a summary, and decode an answer.
//!
//! Run: cargo run --example answer_one_question

use coarse2fine::eval::predict;
use coarse2fine::gen::{gen_synthetic, GeneratorConfig, PositionDist};
use coarse2fine::model::{ModelConfig, QaModel, SelectorKind};
use coarse2fine::text::{prepare_dataset, prepare_example, PrepareConfig, RawExample, Vocabulary};
use coarse2fine::train::{run_training, Method, TrainConfig};

fn main() -> coarse2fine::Result<()> {
    let data = gen_synthetic(&GeneratorConfig {
        num_examples: 430,
        min_sentences: 4,
        max_sentences: 6,
        position: PositionDist::Uniform,
        seed: 13,
        ..GeneratorConfig::default()
    })?;
    let vocab = Vocabulary::build(&data.train, 4000, 20)?;
    let prep = PrepareConfig {
        max_sentences: 6,
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
        max_sentences: 6,
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
        seed: 2,
        early_stop_train_acc: Some(1.0),
        ..TrainConfig::default()
    };
    run_training(&mut model, &vocab, &train, &dev, &train_cfg, None)?;

    // A fresh question the model has never seen. "zanzan" is out of
    // vocabulary, so it travels through a placeholder id and back.
    let raw = RawExample::new(
        "currency of zanzan",
        vec![
            "travelers call the old harbor of belbel a landmark .".into(),
            "records describe a calm garden beside doldor .".into(),
            "zanzan has currency topaz .".into(),
            "the quarry near marmar stayed dusty all season .".into(),
        ],
        "topaz",
    );
    let ex = prepare_example(&raw, &vocab, &prep)?;
    let pred = predict(&model, &vocab, &ex)?;
    let sel = pred.selection.expect("hierarchical reader selects");
    println!("query:    {}", raw.query);
    for (i, s) in raw.document.iter().enumerate() {
        let marker = if i == sel.predicted { "->" } else { "  " };
        println!("  {marker} s{i}: {s}");
    }
    println!(
        "selected sentence {} with probability {:.3}",
        sel.predicted, sel.probability
    );
    println!("decoded answer: {:?} (gold {:?})", pred.answer.surface, raw.answer);
    Ok(())
}

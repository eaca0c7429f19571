//! Train with REINFORCE: sentence selection is a latent action, the
//! reward is the answer log-likelihood given the sampled sentences, and
//! a curriculum substitutes distant supervision with probability r^e at
//! epoch e so early training stays stable.
//!
//! Run: cargo run --example train_reinforce

use coarse2fine::gen::{gen_synthetic, GeneratorConfig, PositionDist};
use coarse2fine::model::{ModelConfig, QaModel, SelectorKind};
use coarse2fine::text::{prepare_dataset, PrepareConfig, Vocabulary};
use coarse2fine::train::{run_training, Method, TrainConfig};

fn main() -> coarse2fine::Result<()> {
    // Distractors repeat the answer string in irrelevant sentences and
    // some evidence paraphrases the answer away, so the distant labels
    // REINFORCE starts from are noisy.
    let data = gen_synthetic(&GeneratorConfig {
        num_examples: 900,
        min_sentences: 6,
        max_sentences: 9,
        position: PositionDist::Uniform,
        distractor_rate: 0.3,
        missing_evidence_rate: 0.2,
        seed: 8,
        ..GeneratorConfig::default()
    })?;
    let vocab = Vocabulary::build(&data.train, 4000, 20)?;
    let prep = PrepareConfig {
        max_sentences: 9,
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
        k: 1,
        max_sentences: 9,
        max_tokens: 12,
        max_answer_len: 4,
        ..ModelConfig::default()
    };
    let mut model = QaModel::new(cfg, vocab.size(), 1);
    let train_cfg = TrainConfig {
        method: Method::Reinforce,
        k: 1,
        decay: 0.9,
        epochs: 40,
        batch_size: 8,
        learning_rate: 5e-3,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = run_training(&mut model, &vocab, &train, &dev, &train_cfg, None)?;
    for (row, frac) in out
        .rows
        .iter()
        .filter(|r| r.split == "dev" && r.epoch > 0)
        .zip(&out.distant_fraction)
    {
        if row.epoch % 4 == 0 {
            println!(
                "epoch {:2}  dev answer acc {:.3}  distant-supervision steps {:.0}%",
                row.epoch,
                row.answer_acc,
                frac * 100.0
            );
        }
    }
    Ok(())
}

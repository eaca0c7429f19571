//! Check analytic gradients against central finite differences.
//!
//! Builds a tiny end-to-end model (selector, soft summary, encoder,
//! decoder), backpropagates the training loss, then re-evaluates the
//! loss at perturbed parameters to verify every coordinate.
//!
//! Run: cargo run --example gradient_check

use coarse2fine::check::finite_diff_check;
use coarse2fine::gen::{gen_synthetic, GeneratorConfig};
use coarse2fine::model::{bind, ModelConfig, QaModel, SelectorKind, SummaryMode};
use coarse2fine::tape::Tape;
use coarse2fine::text::{prepare_dataset, PrepareConfig, Vocabulary};
use coarse2fine::train::soft_loss;

fn main() -> coarse2fine::Result<()> {
    let data = gen_synthetic(&GeneratorConfig {
        num_examples: 20,
        min_sentences: 3,
        max_sentences: 4,
        seed: 1,
        ..GeneratorConfig::default()
    })?;
    let vocab = Vocabulary::build(&data.train, 500, 5)?;
    let prep = PrepareConfig {
        max_sentences: 4,
        max_tokens: 8,
        ..PrepareConfig::default()
    };
    let examples = prepare_dataset(&data.train, &vocab, &prep)?;

    let cfg = ModelConfig {
        embed_dim: 4,
        sel_hidden: 4,
        gru_hidden: 5,
        selector: SelectorKind::Bow,
        summary: SummaryMode::Soft,
        max_sentences: 4,
        max_tokens: 8,
        ..ModelConfig::default()
    };
    let model = QaModel::new(cfg, vocab.size(), 7);
    let ex = examples[0].clone();

    let mut tape = Tape::new();
    let m = bind(&mut tape, &model)?;
    let (loss, _) = soft_loss(&mut tape, &m, &ex)?;
    println!("loss at theta: {:.6}", tape.scalar_value(loss));
    let grads = tape.backward(loss)?;

    let report = finite_diff_check(&model.params, grads.named(), 1e-5, |params| {
        let probe = QaModel {
            cfg: model.cfg.clone(),
            params: params.clone(),
        };
        let mut t = Tape::new();
        let m = bind(&mut t, &probe)?;
        let (l, _) = soft_loss(&mut t, &m, &ex)?;
        Ok(t.scalar_value(l))
    })?;
    println!(
        "checked {} coordinates; worst relative error {:.3e} at {}[{}]",
        report.checked, report.worst_rel_error, report.worst_param, report.worst_index
    );
    assert!(report.worst_rel_error < 1e-4);
    println!("analytic gradients match finite differences");
    Ok(())
}

//! Measure document-encoding throughput: hierarchical readers against
//! the flat Base reader that consumes the first 300 document tokens.
//!
//! Only encoding is timed (selection + summary + GRU for hierarchical;
//! the 300-token GRU for Base); decoding is shared and excluded. GRU
//! cell invocations are counted alongside, so the step ratio is exact:
//! Base runs 300+|query| cells, hierarchical K runs 35K+|query|+1.
//!
//! Run: cargo run --example benchmark_encoding

use coarse2fine::bench::{benchmark_encoding, BenchConfig};
use coarse2fine::gen::{gen_synthetic, GeneratorConfig};
use coarse2fine::model::{ModelConfig, QaModel};
use coarse2fine::text::{prepare_dataset, PrepareConfig, Vocabulary};

fn main() -> coarse2fine::Result<()> {
    let data = gen_synthetic(&GeneratorConfig {
        num_examples: 60,
        min_sentences: 34,
        max_sentences: 35,
        seed: 9,
        ..GeneratorConfig::default()
    })?;
    let vocab = Vocabulary::build(&data.train, 6000, 50)?;
    let docs = prepare_dataset(&data.train, &vocab, &PrepareConfig::default())?;
    println!(
        "{} documents, avg {:.0} tokens each; model at default dimensions",
        docs.len(),
        docs.iter().map(|d| d.doc_token_total as f64).sum::<f64>() / docs.len() as f64
    );

    let model = QaModel::new(ModelConfig::default(), vocab.size(), 3);
    let report = benchmark_encoding(
        &model,
        &docs,
        &[1, 16],
        &[
            BenchConfig::Base,
            BenchConfig::Hierarchical { k: 1 },
            BenchConfig::Hierarchical { k: 2 },
        ],
        9,
    )?;
    println!(
        "\n{:8} {:>6} {:>12} {:>9} {:>10} {:>12}",
        "config", "batch", "docs/sec", "speedup", "GRU steps", "tokens/doc"
    );
    for r in &report.rows {
        println!(
            "{:8} {:>6} {:>12.1} {:>8.2}x {:>10.1} {:>12}",
            r.config, r.batch_size, r.docs_per_sec, r.speedup_vs_base,
            r.gru_steps_per_doc, r.token_budget
        );
    }
    Ok(())
}

//! Encoding-throughput benchmark: hierarchical readers (selection +
//! summary + GRU encoding over at most K x M tokens) against the flat
//! Base reader (GRU encoding over the first 300 document tokens).
//!
//! Only the encoding stage is timed; decoding is shared by both readers
//! and excluded. GRU cell invocations are counted alongside wall-clock
//! time, so step-count ratios can be checked exactly.

use crate::error::{Error, Result};
use crate::model::{bind, QaModel, ReaderKind, SummaryMode};
use crate::select::score;
use crate::seq2seq::{encode, encode_flat, SummaryInput};
use crate::summary::{hard_select, SelectMode};
use crate::tape::Tape;
use crate::text::PreparedExample;
use serde::Serialize;
use std::time::Instant;

/// One benchmarked reader configuration.
#[derive(Clone, Debug)]
pub enum BenchConfig {
    Hierarchical { k: usize },
    Base,
}

impl BenchConfig {
    pub fn name(&self) -> String {
        match self {
            BenchConfig::Hierarchical { k } => format!("hier-k{k}"),
            BenchConfig::Base => "base".to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub config: String,
    pub batch_size: usize,
    pub docs_per_sec: f64,
    /// Throughput relative to the Base reader at the same batch size.
    pub speedup_vs_base: f64,
    /// Mean GRU cell invocations per document (encoding only).
    pub gru_steps_per_doc: f64,
    /// Mean seconds spent in sentence selection per document (zero for
    /// the Base reader), reported separately from total encoding time.
    pub selection_sec_per_doc: f64,
    /// Summary token budget per document for this configuration.
    pub token_budget: usize,
    pub median_batch_sec: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub repetitions: usize,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str = "config,batch_size,docs_per_sec,speedup_vs_base,gru_steps_per_doc,selection_sec_per_doc,token_budget,median_batch_sec";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.3},{:.3},{:.2},{:.9},{},{:.9}\n",
                r.config,
                r.batch_size,
                r.docs_per_sec,
                r.speedup_vs_base,
                r.gru_steps_per_doc,
                r.selection_sec_per_doc,
                r.token_budget,
                r.median_batch_sec
            ));
        }
        out
    }
}

/// Encodes one document the way the configured reader would at test
/// time, returning (gru_steps, selection_seconds).
fn encode_once(model: &QaModel, cfg: &BenchConfig, ex: &PreparedExample) -> Result<(u64, f64)> {
    let mut tape = Tape::inference();
    let m = bind(&mut tape, model)?;
    match cfg {
        BenchConfig::Base => {
            let budget = model.cfg.base_tokens.min(ex.doc_prefix_ids.len());
            encode_flat(&mut tape, &m, &ex.query_ids, &ex.doc_prefix_ids[..budget])?;
            Ok((tape.gru_steps(), 0.0))
        }
        BenchConfig::Hierarchical { k } => {
            let sel_start = Instant::now();
            let dist = score(&mut tape, &m, ex)?;
            let probs = dist.probs_vec(&tape);
            let sel_elapsed = sel_start.elapsed().as_secs_f64();
            match model.cfg.summary {
                SummaryMode::Hard => {
                    let hard = hard_select(&probs, ex, *k, SelectMode::Argmax, None)?;
                    encode(
                        &mut tape,
                        &m,
                        &ex.query_ids,
                        SummaryInput::Hard(&hard.token_ids),
                        model.cfg.process_pads,
                    )?;
                }
                SummaryMode::Soft => {
                    let soft = crate::summary::soft_blend(&mut tape, dist.probs, ex, m.embed)?;
                    encode(
                        &mut tape,
                        &m,
                        &ex.query_ids,
                        SummaryInput::Soft(soft.blended),
                        model.cfg.process_pads,
                    )?;
                }
            }
            Ok((tape.gru_steps(), sel_elapsed))
        }
    }
}

/// Times document encoding for each configuration at each batch size.
/// The model's parameters are used as-is (throughput does not depend on
/// training); `hier_model` must carry selector parameters and is reused
/// with `reader = Base` for the Base rows.
pub fn benchmark_encoding(
    hier_model: &QaModel,
    data: &[PreparedExample],
    batch_sizes: &[usize],
    configs: &[BenchConfig],
    repetitions: usize,
) -> Result<BenchReport> {
    if data.is_empty() {
        return Err(Error::Bench("no documents to benchmark".into()));
    }
    if repetitions < 5 {
        return Err(Error::Bench("need at least 5 repetitions for a stable median".into()));
    }
    if !configs.iter().any(|c| matches!(c, BenchConfig::Base)) {
        return Err(Error::Bench("configs must include the base reader".into()));
    }
    let mut base_model = hier_model.clone();
    base_model.cfg.reader = ReaderKind::Base;
    let mut hier = hier_model.clone();
    hier.cfg.reader = ReaderKind::Hierarchical;

    let mut rows = Vec::new();
    for &batch in batch_sizes {
        if batch == 0 {
            return Err(Error::Bench("batch size 0".into()));
        }
        // Repetitions are interleaved across configurations so that load
        // shifts on the host hit every configuration alike.
        let mut times: Vec<Vec<f64>> = vec![Vec::with_capacity(repetitions); configs.len()];
        let mut steps_total = vec![0u64; configs.len()];
        let mut sel_total = vec![0.0f64; configs.len()];
        for cfg in configs {
            let model = match cfg {
                BenchConfig::Base => &base_model,
                BenchConfig::Hierarchical { k } => {
                    hier.cfg.k = *k;
                    &hier
                }
            };
            // Warm-up pass, untimed.
            encode_once(model, cfg, &data[0])?;
        }
        for rep in 0..repetitions {
            for (ci, cfg) in configs.iter().enumerate() {
                let model = match cfg {
                    BenchConfig::Base => &base_model,
                    BenchConfig::Hierarchical { k } => {
                        hier.cfg.k = *k;
                        &hier
                    }
                };
                let start = Instant::now();
                let mut sel_in_batch = 0.0;
                for i in 0..batch {
                    let ex = &data[(rep * batch + i) % data.len()];
                    let (steps, sel) = encode_once(model, cfg, ex)?;
                    steps_total[ci] += steps;
                    sel_in_batch += sel;
                }
                times[ci].push(start.elapsed().as_secs_f64());
                sel_total[ci] += sel_in_batch;
            }
        }

        let median_of = |mut v: Vec<f64>| -> f64 {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let base_index = configs
            .iter()
            .position(|c| matches!(c, BenchConfig::Base))
            .expect("checked above");
        for (ci, cfg) in configs.iter().enumerate() {
            let median = median_of(times[ci].clone());
            if median < 1e-5 {
                return Err(Error::Bench(
                    "timer resolution too coarse for this workload; increase batch size or repetitions"
                        .into(),
                ));
            }
            let docs_per_sec = batch as f64 / median;
            let docs_total = (repetitions * batch) as f64;
            let token_budget = match cfg {
                BenchConfig::Base => hier_model.cfg.base_tokens,
                BenchConfig::Hierarchical { k } => k * hier_model.cfg.max_tokens,
            };
            // Speedups pair each repetition against the base measurement
            // taken under the same instantaneous load.
            let ratios: Vec<f64> = times[base_index]
                .iter()
                .zip(&times[ci])
                .map(|(b, c)| b / c)
                .collect();
            rows.push(BenchRow {
                config: cfg.name(),
                batch_size: batch,
                docs_per_sec,
                speedup_vs_base: median_of(ratios),
                gru_steps_per_doc: steps_total[ci] as f64 / docs_total,
                selection_sec_per_doc: sel_total[ci] / docs_total,
                token_budget,
                median_batch_sec: median,
            });
        }
    }
    Ok(BenchReport {
        rows,
        repetitions,
    })
}

/// Exact encoder GRU step counts for one example under each reader:
/// hierarchical runs query + separator + k*M summary positions (with
/// pad processing on), Base runs query + min(300, document) tokens.
pub fn expected_steps(model: &QaModel, ex: &PreparedExample, cfg: &BenchConfig) -> u64 {
    match cfg {
        BenchConfig::Base => {
            (ex.query_ids.len() + model.cfg.base_tokens.min(ex.doc_prefix_ids.len())) as u64
        }
        BenchConfig::Hierarchical { k } => {
            (ex.query_ids.len() + 1 + k * model.cfg.max_tokens) as u64
        }
    }
}

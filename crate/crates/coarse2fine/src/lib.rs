//! Coarse-to-fine question answering over long documents.
//!
//! A fast sentence-selection model skims the document and proposes the
//! sentences relevant to a query; a GRU encoder-decoder then reads only
//! that short summary (plus the query) and generates the answer. Because
//! the expensive recurrent encoder runs over a fixed small number of
//! tokens instead of the whole document, encoding is several times faster
//! than a flat reader at the same or better accuracy.
//!
//! The crate is organized around that split:
//!
//! - [`tensor`], [`tape`], [`optim`]: a small dense-tensor library with
//!   reverse-mode automatic differentiation and Adam.
//! - [`text`]: tokenization, vocabulary with placeholder ids for rare
//!   words, document cropping/padding, distant-supervision labels, JSONL
//!   dataset I/O.
//! - [`select`]: the coarse scorers over sentences (bag-of-words, chunked
//!   bag-of-words, CNN), each producing a distribution over sentences.
//! - [`summary`]: hard (sampled or argmax sentences) and soft (blended
//!   token embeddings) document summaries.
//! - [`seq2seq`]: the GRU encoder-decoder with shared embeddings and
//!   placeholder-aware decoding.
//! - [`train`]: distant supervision, REINFORCE with a curriculum that
//!   decays per epoch, and fully differentiable soft attention.
//! - [`eval`] / [`bench`]: accuracy metrics, First/Oracle/Base baselines,
//!   dataset statistics, and the encoding-throughput benchmark.
//! - [`gen`]: a seeded synthetic dataset generator for desk-scale runs.
//! - [`cli`]: the `c2f` command-line entry points.
//!
//! Start with the runnable examples (`cargo run --example`), one per
//! capability; `README.md` lists them.

pub mod bench;
pub mod check;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod gen;
pub mod model;
pub mod optim;
pub mod rng;
pub mod select;
pub mod seq2seq;
pub mod summary;
pub mod tape;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

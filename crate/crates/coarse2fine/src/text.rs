//! Text preparation: tokenization, vocabulary with placeholder ids,
//! document cropping and padding, distant-supervision sentence labels,
//! and JSONL dataset I/O.
//!
//! Rare words are handled with placeholders: each example assigns the
//! out-of-vocabulary words of its (cropped) document to a fixed pool of
//! placeholder ids in order of first occurrence, applies the same
//! substitution to query and answer, and remembers the original surface
//! so decoded placeholders can be restored to real words.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
/// Separator between query and summary in encoder input. Reuses the EOS
/// id (it marks the end of the query segment), so the four specials plus
/// the placeholder pool stay the only reserved ids.
pub const SEP: u32 = EOS;
const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Lowercases, splits on whitespace, and peels leading/trailing ASCII
/// punctuation into separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let lower = piece.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        let mut leading = Vec::new();
        let mut trailing = Vec::new();
        while start < end && chars[start].is_ascii_punctuation() {
            leading.push(chars[start].to_string());
            start += 1;
        }
        while end > start && chars[end - 1].is_ascii_punctuation() {
            trailing.push(chars[end - 1].to_string());
            end -= 1;
        }
        out.extend(leading);
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

/// Splits a single-string document into sentences after '.', '!' or '?'
/// followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                sentences.push(s.to_string());
            }
            current.clear();
        }
    }
    let tail = current.trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

/// One question-document-answer triple as read from disk.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RawExample {
    pub query: String,
    pub document: Vec<String>,
    pub answer: String,
}

impl RawExample {
    pub fn new(query: &str, document: Vec<String>, answer: &str) -> Self {
        RawExample {
            query: query.to_string(),
            document,
            answer: answer.to_string(),
        }
    }
}

/// Token vocabulary. Ids 0..4 are PAD/UNK/BOS/EOS, the next
/// `placeholder_count` ids are the placeholder pool, and content tokens
/// follow in frequency order.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    placeholder_count: usize,
}

impl Vocabulary {
    /// Keeps the most frequent corpus tokens (ties broken
    /// lexicographically) up to `max_vocab` total ids.
    pub fn build<'a>(
        corpus: impl IntoIterator<Item = &'a RawExample>,
        max_vocab: usize,
        placeholder_count: usize,
    ) -> Result<Vocabulary> {
        if max_vocab <= SPECIALS.len() + placeholder_count {
            return Err(Error::Config(format!(
                "vocab.size {} leaves no room beyond {} specials and {} placeholders",
                max_vocab,
                SPECIALS.len(),
                placeholder_count
            )));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut saw_any = false;
        for ex in corpus {
            saw_any = true;
            for text in std::iter::once(ex.query.as_str())
                .chain(ex.document.iter().map(String::as_str))
                .chain(std::iter::once(ex.answer.as_str()))
            {
                for tok in tokenize(text) {
                    *counts.entry(tok).or_insert(0) += 1;
                }
            }
        }
        if !saw_any {
            return Err(Error::invalid("build_vocab", "empty corpus"));
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for i in 0..placeholder_count {
            tokens.push(format!("<ph_{i}>"));
        }
        let capacity = max_vocab - tokens.len();
        for (tok, _) in ranked.into_iter().take(capacity) {
            tokens.push(tok);
        }
        let index = tokens
            .iter()
            .enumerate()
            .skip(SPECIALS.len() + placeholder_count)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            tokens,
            index,
            placeholder_count,
        })
    }

    /// Rebuilds a vocabulary from its id-ordered token list (as stored on
    /// disk next to checkpoints).
    pub fn from_tokens(tokens: Vec<String>, placeholder_count: usize) -> Result<Vocabulary> {
        if tokens.len() < SPECIALS.len() + placeholder_count {
            return Err(Error::Config("token list shorter than reserved ids".into()));
        }
        let index = tokens
            .iter()
            .enumerate()
            .skip(SPECIALS.len() + placeholder_count)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            tokens,
            index,
            placeholder_count,
        })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn placeholder_count(&self) -> usize {
        self.placeholder_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of a known content token.
    pub fn content_id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn placeholder_id(&self, i: usize) -> u32 {
        debug_assert!(i < self.placeholder_count);
        (SPECIALS.len() + i) as u32
    }

    pub fn placeholder_index(&self, id: u32) -> Option<usize> {
        let id = id as usize;
        (id >= SPECIALS.len() && id < SPECIALS.len() + self.placeholder_count)
            .then(|| id - SPECIALS.len())
    }

    /// FNV-1a hash over the id-ordered token list, hex encoded.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for t in &self.tokens {
            for b in t.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// Cropping and padding limits for example preparation.
#[derive(Clone, Debug)]
pub struct PrepareConfig {
    /// Keep at most this many sentences.
    pub max_sentences: usize,
    /// Pad or truncate every sentence to this many tokens.
    pub max_tokens: usize,
    /// Append the document's first five tokens to every sentence.
    pub title_append: bool,
    /// Length of the flat document prefix kept for the Base reader.
    pub base_tokens: usize,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            max_sentences: 35,
            max_tokens: 35,
            title_append: false,
            base_tokens: 300,
        }
    }
}

const TITLE_TOKENS: usize = 5;

/// A tokenized, cropped, padded, placeholder-substituted example.
#[derive(Clone, Debug)]
pub struct PreparedExample {
    pub query_ids: Vec<u32>,
    /// Kept sentences as an L x M grid of ids, pads only at row tails.
    pub rows: Vec<Vec<u32>>,
    /// Non-pad token count per row.
    pub sentence_lengths: Vec<usize>,
    /// One-hot sentence-index vectors (fixed dim = max_sentences).
    pub index_onehots: Vec<Tensor>,
    /// Answer ids terminated by EOS.
    pub answer_ids: Vec<u32>,
    /// Gold answer in normalized surface form (tokenized, lowercased,
    /// single-spaced), the form decoded answers are compared against.
    pub answer_norm: String,
    /// Placeholder id -> original surface form for this example.
    pub placeholder_map: BTreeMap<u32, String>,
    /// Distant-supervision label, set by [`label_gold_sentence`].
    pub gold_sentence: Option<usize>,
    /// First `base_tokens` document tokens for the flat Base reader.
    pub doc_prefix_ids: Vec<u32>,
    /// Total tokens of the raw (uncropped) document.
    pub doc_token_total: usize,
}

impl PreparedExample {
    pub fn sentence_count(&self) -> usize {
        self.rows.len()
    }

    /// Answer ids without the trailing EOS.
    pub fn answer_content(&self) -> &[u32] {
        &self.answer_ids[..self.answer_ids.len() - 1]
    }
}

pub fn onehot(index: usize, dim: usize) -> Tensor {
    let mut v = vec![0.0; dim];
    v[index] = 1.0;
    Tensor::vector(v)
}

/// Tokenizes, crops to the first `max_sentences` non-empty sentences,
/// truncates/pads rows to `max_tokens`, assigns placeholder ids to the
/// document's out-of-vocabulary tokens in order of first occurrence
/// (wrapping when the pool is exhausted), and applies the same
/// substitution to query and answer.
pub fn prepare_example(
    raw: &RawExample,
    vocab: &Vocabulary,
    cfg: &PrepareConfig,
) -> Result<PreparedExample> {
    let sentence_tokens: Vec<Vec<String>> = raw
        .document
        .iter()
        .map(|s| tokenize(s))
        .filter(|t| !t.is_empty())
        .collect();
    if sentence_tokens.is_empty() {
        return Err(Error::invalid(
            "prepare_example",
            "document has no non-empty sentences",
        ));
    }
    let flat: Vec<String> = sentence_tokens.iter().flatten().cloned().collect();
    let title: Vec<String> = flat.iter().take(TITLE_TOKENS).cloned().collect();

    let kept = &sentence_tokens[..sentence_tokens.len().min(cfg.max_sentences)];
    let mut row_tokens: Vec<Vec<String>> = Vec::with_capacity(kept.len());
    for sent in kept {
        let mut toks = sent.clone();
        if cfg.title_append {
            toks.extend(title.iter().cloned());
        }
        toks.truncate(cfg.max_tokens);
        row_tokens.push(toks);
    }

    // Placeholder assignment scans the kept rows front to back.
    let pool = vocab.placeholder_count();
    let mut surface_to_ph: HashMap<String, u32> = HashMap::new();
    let mut placeholder_map: BTreeMap<u32, String> = BTreeMap::new();
    let mut assigned = 0usize;
    if pool > 0 {
        for tok in row_tokens.iter().flatten() {
            if vocab.content_id(tok).is_none() && !surface_to_ph.contains_key(tok.as_str()) {
                let id = vocab.placeholder_id(assigned % pool);
                surface_to_ph.insert(tok.clone(), id);
                placeholder_map.entry(id).or_insert_with(|| tok.clone());
                assigned += 1;
            }
        }
    }
    let map_token = |tok: &str| -> u32 {
        vocab
            .content_id(tok)
            .or_else(|| surface_to_ph.get(tok).copied())
            .unwrap_or(UNK)
    };

    let mut rows = Vec::with_capacity(row_tokens.len());
    let mut sentence_lengths = Vec::with_capacity(row_tokens.len());
    for toks in &row_tokens {
        let mut ids: Vec<u32> = toks.iter().map(|t| map_token(t)).collect();
        sentence_lengths.push(ids.len());
        ids.resize(cfg.max_tokens, PAD);
        rows.push(ids);
    }
    let index_onehots = (0..rows.len())
        .map(|l| onehot(l, cfg.max_sentences))
        .collect();

    let query_ids: Vec<u32> = tokenize(&raw.query).iter().map(|t| map_token(t)).collect();
    let answer_tokens = tokenize(&raw.answer);
    let answer_norm = answer_tokens.join(" ");
    let mut answer_ids: Vec<u32> = answer_tokens.iter().map(|t| map_token(t)).collect();
    answer_ids.push(EOS);

    let doc_prefix_ids: Vec<u32> = flat
        .iter()
        .take(cfg.base_tokens)
        .map(|t| map_token(t))
        .collect();

    Ok(PreparedExample {
        query_ids,
        rows,
        sentence_lengths,
        index_onehots,
        answer_ids,
        answer_norm,
        placeholder_map,
        gold_sentence: None,
        doc_prefix_ids,
        doc_token_total: flat.len(),
    })
}

fn contains_subsequence(haystack: &[u32], needle: &[u32]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Indices of all rows whose non-pad ids contain the answer ids as a
/// contiguous subsequence.
pub fn matching_sentences(ex: &PreparedExample) -> Vec<usize> {
    let answer = ex.answer_content();
    ex.rows
        .iter()
        .zip(ex.sentence_lengths.iter())
        .enumerate()
        .filter(|(_, (row, len))| contains_subsequence(&row[..**len], answer))
        .map(|(l, _)| l)
        .collect()
}

/// Distant-supervision label: the first sentence containing the answer
/// ids, or sentence 0 when no sentence matches.
pub fn label_gold_sentence(ex: &PreparedExample) -> usize {
    let answer = ex.answer_content();
    ex.rows
        .iter()
        .zip(ex.sentence_lengths.iter())
        .position(|(row, len)| contains_subsequence(&row[..*len], answer))
        .unwrap_or(0)
}

/// True when at least one sentence contains the answer (so the distant
/// label is a real match rather than the sentence-0 fallback).
pub fn has_answer_match(ex: &PreparedExample) -> bool {
    let answer = ex.answer_content();
    ex.rows
        .iter()
        .zip(ex.sentence_lengths.iter())
        .any(|(row, len)| contains_subsequence(&row[..*len], answer))
}

/// Prepares a whole dataset and fills in gold labels.
pub fn prepare_dataset(
    raws: &[RawExample],
    vocab: &Vocabulary,
    cfg: &PrepareConfig,
) -> Result<Vec<PreparedExample>> {
    raws.iter()
        .map(|raw| {
            let mut ex = prepare_example(raw, vocab, cfg)?;
            ex.gold_sentence = Some(label_gold_sentence(&ex));
            Ok(ex)
        })
        .collect()
}

/// Reads line-delimited JSON examples. `document` may be an array of
/// sentence strings or a single string, which is split on sentence-final
/// punctuation.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawExample>> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_jsonl_line(&line, i + 1)?);
    }
    Ok(out)
}

/// Parses one JSONL example line (used by `read_jsonl` and by callers
/// taking examples from stdin).
pub fn parse_jsonl_line(line: &str, line_no: usize) -> Result<RawExample> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Jsonl {
        line: line_no,
        detail: format!("malformed JSON: {e}"),
    })?;
    let field = |name: &str| -> Result<&serde_json::Value> {
        value.get(name).ok_or_else(|| Error::Jsonl {
            line: line_no,
            detail: format!("missing field {name:?}"),
        })
    };
    let as_str = |name: &str, v: &serde_json::Value| -> Result<String> {
        v.as_str().map(str::to_string).ok_or_else(|| Error::Jsonl {
            line: line_no,
            detail: format!("field {name:?} must be a string"),
        })
    };
    let query = as_str("query", field("query")?)?;
    let answer = as_str("answer", field("answer")?)?;
    let document = match field("document")? {
        serde_json::Value::String(s) => split_sentences(s),
        serde_json::Value::Array(items) => {
            let mut sentences = Vec::with_capacity(items.len());
            for item in items {
                sentences.push(as_str("document", item)?);
            }
            sentences
        }
        _ => {
            return Err(Error::Jsonl {
                line: line_no,
                detail: "field \"document\" must be a string or array of strings".into(),
            })
        }
    };
    if query.is_empty() || answer.is_empty() || document.is_empty() {
        return Err(Error::Jsonl {
            line: line_no,
            detail: "query, document and answer must be non-empty".into(),
        });
    }
    Ok(RawExample {
        query,
        document,
        answer,
    })
}

pub fn write_jsonl(examples: &[RawExample], path: impl AsRef<Path>) -> Result<()> {
    if let Some(dir) = path.as_ref().parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    for ex in examples {
        serde_json::to_writer(&mut writer, ex)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

//! Seeded synthetic QA corpus generator.
//!
//! Each example asks for the value of an entity property. One evidence
//! sentence carries the value; the rest is templated filler. Three knobs
//! reproduce the failure modes long-document QA runs into:
//!
//! - `position`: where the evidence sentence lands (first-heavy, uniform,
//!   or tail-heavy), controlling how useful a first-sentence heuristic is.
//! - `distractor_rate`: probability that the answer string also appears
//!   in an irrelevant sentence (same property and value, wrong entity),
//!   which poisons first-match supervision.
//! - `missing_evidence_rate`: probability the evidence sentence uses a
//!   paired synonym instead of the literal value, so the answer appears
//!   nowhere verbatim yet is still decidable from the evidence.
//!
//! Generation is deterministic: example i draws from a stream derived
//! from (seed, i), so any prefix of the corpus is stable.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::text::RawExample;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositionDist {
    FirstHeavy,
    Uniform,
    TailHeavy,
}

impl std::str::FromStr for PositionDist {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-heavy" | "first_heavy" => Ok(PositionDist::FirstHeavy),
            "uniform" => Ok(PositionDist::Uniform),
            "tail-heavy" | "tail_heavy" => Ok(PositionDist::TailHeavy),
            other => Err(Error::Config(format!("unknown position distribution {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratorConfig {
    pub num_examples: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Entity pool size (capped by the name inventory).
    pub entities: usize,
    /// Property pool size (capped by the property inventory).
    pub properties: usize,
    /// Value pool size (capped by the value inventory).
    pub values: usize,
    #[serde(skip)]
    pub position: PositionDist,
    pub distractor_rate: f64,
    pub missing_evidence_rate: f64,
    /// Probability an example uses a fresh entity name never seen in any
    /// pool, exercising the placeholder machinery.
    pub novel_entity_rate: f64,
    /// Probability of inserting a teaser sentence that mentions the
    /// query's entity and property without carrying the answer, making
    /// sentence selection ambiguous. When the evidence itself is a
    /// synonym paraphrase, the teaser is a scrambled false paraphrase:
    /// the same token bag shape with a wrong synonym, so bag-of-words
    /// selectors cannot tell it from the evidence and only an
    /// order-aware reader of both sentences can recover.
    pub teaser_rate: f64,
    /// Question-style queries ("what is the P of E") with title-append
    /// conventions instead of bare property queries.
    pub natural: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_examples: 1000,
            min_sentences: 10,
            max_sentences: 35,
            entities: 60,
            properties: 12,
            values: 40,
            position: PositionDist::Uniform,
            distractor_rate: 0.0,
            missing_evidence_rate: 0.0,
            novel_entity_rate: 0.1,
            teaser_rate: 0.0,
            natural: false,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_examples == 0 {
            return Err(Error::Config("gen.n must be >= 1".into()));
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return Err(Error::Config(format!(
                "sentence range {}..{} is empty",
                self.min_sentences, self.max_sentences
            )));
        }
        if self.entities == 0 || self.properties == 0 || self.values == 0 {
            return Err(Error::Config("entity/property/value pools must be non-empty".into()));
        }
        for (name, rate) in [
            ("gen.distractor_rate", self.distractor_rate),
            ("gen.missing_rate", self.missing_evidence_rate),
            ("gen.novel_entity_rate", self.novel_entity_rate),
            ("gen.teaser_rate", self.teaser_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {rate}")));
            }
        }
        Ok(())
    }
}

const SYLLABLES: [&str; 20] = [
    "bel", "dor", "fen", "gar", "hol", "jin", "kor", "lum", "mar", "nev", "oss", "pim", "quil",
    "ros", "tev", "urn", "vex", "wim", "yor", "zan",
];

const PROPERTIES: [&str; 12] = [
    "population", "capital", "founder", "currency", "language", "climate", "elevation", "mascot",
    "anthem", "motto", "patron", "harvest",
];

const VALUE_WORDS: [&str; 48] = [
    "amber", "basalt", "cedar", "delta", "ember", "flint", "garnet", "hazel", "iris", "jade",
    "umber", "lotus", "maple", "nectar", "onyx", "pearl", "quartz", "raven", "sable", "topaz",
    "violet", "willow", "zephyr", "cobalt", "dune", "fern", "gale", "heath", "ivory", "juniper",
    "krill", "larch", "moss", "nickel", "ochre", "pine", "reed", "slate", "thorn", "ursa",
    "vale", "wren", "yarrow", "zinc", "bronze", "coral", "drift", "ebony",
];

const FILLER_NOUNS: [&str; 8] = [
    "bridge", "orchard", "harbor", "mill", "tower", "garden", "market", "quarry",
];

const FILLER_ADJECTIVES: [&str; 8] = [
    "quiet", "busy", "green", "old", "bright", "cold", "dusty", "calm",
];

fn entity_name(index: usize) -> String {
    let a = SYLLABLES[index % SYLLABLES.len()];
    let b = SYLLABLES[(index / SYLLABLES.len() + index) % SYLLABLES.len()];
    format!("{a}{b}")
}

/// The paired form used when evidence must avoid the literal answer: a
/// one-to-one renaming the model can learn to invert.
fn value_synonym(value: &str) -> String {
    format!("{value}ine")
}

fn sample_position(rng: &mut Rng, dist: PositionDist, n: usize) -> usize {
    match dist {
        PositionDist::Uniform => rng.below(n),
        PositionDist::FirstHeavy => {
            if rng.coin(0.6) {
                0
            } else {
                rng.below(n)
            }
        }
        PositionDist::TailHeavy => {
            if rng.coin(0.6) {
                n - 1
            } else {
                rng.below(n)
            }
        }
    }
}

fn filler_sentence(rng: &mut Rng, cfg: &GeneratorConfig) -> String {
    let noun = rng.choose(&FILLER_NOUNS);
    let adj = rng.choose(&FILLER_ADJECTIVES);
    let entity = entity_name(rng.below(cfg.entities));
    match rng.below(3) {
        0 => format!("the {noun} near {entity} stayed {adj} all season ."),
        1 => format!("travelers call the {adj} {noun} of {entity} a landmark ."),
        _ => format!("records describe a {adj} {noun} beside {entity} ."),
    }
}

/// One generated example and the knob outcomes behind it.
#[derive(Clone, Debug)]
pub struct GeneratedExample {
    pub raw: RawExample,
    pub evidence_position: usize,
    pub has_distractor: bool,
    pub missing_evidence: bool,
}

pub fn generate_example(cfg: &GeneratorConfig, index: u64) -> GeneratedExample {
    let mut rng = Rng::indexed_stream(cfg.seed, "gen", index);
    let entity = if rng.coin(cfg.novel_entity_rate) {
        format!("zu{}q{}", entity_name(index as usize % 97), index)
    } else {
        entity_name(rng.below(cfg.entities))
    };
    let property = PROPERTIES[rng.below(cfg.properties.min(PROPERTIES.len()))];
    let value = VALUE_WORDS[rng.below(cfg.values.min(VALUE_WORDS.len()))];
    let n = rng.range_inclusive(cfg.min_sentences, cfg.max_sentences);
    let evidence_position = sample_position(&mut rng, cfg.position, n);
    let missing_evidence = rng.coin(cfg.missing_evidence_rate);
    // A distractor repeats the literal answer, so it only exists when the
    // evidence is literal too.
    let wants_distractor = !missing_evidence && n >= 2 && rng.coin(cfg.distractor_rate);

    let evidence_token = if missing_evidence {
        value_synonym(value)
    } else {
        value.to_string()
    };
    let evidence = if cfg.natural {
        format!("the {property} of {entity} is {evidence_token} .")
    } else {
        format!("{entity} has {property} {evidence_token} .")
    };

    let mut sentences: Vec<String> = (0..n).map(|_| filler_sentence(&mut rng, cfg)).collect();
    sentences[evidence_position] = evidence;
    let mut taken = vec![evidence_position];
    let free_slot = |rng: &mut Rng, taken: &mut Vec<usize>| -> Option<usize> {
        if taken.len() >= n {
            return None;
        }
        loop {
            let pos = rng.below(n);
            if !taken.contains(&pos) {
                taken.push(pos);
                return Some(pos);
            }
        }
    };
    let has_teaser = rng.coin(cfg.teaser_rate);
    if has_teaser {
        if let Some(pos) = free_slot(&mut rng, &mut taken) {
            sentences[pos] = if missing_evidence {
                // Scrambled false paraphrase: same words as the evidence
                // template but wrong synonym and shuffled order.
                let mut wrong = VALUE_WORDS[rng.below(cfg.values.min(VALUE_WORDS.len()))];
                while wrong == value {
                    wrong = VALUE_WORDS[rng.below(cfg.values.min(VALUE_WORDS.len()))];
                }
                let wrong_syn = value_synonym(wrong);
                let mut words: Vec<&str> = if cfg.natural {
                    vec!["the", property, "of", &entity, "is", &wrong_syn]
                } else {
                    vec![&entity, "has", property, &wrong_syn]
                };
                let ordered = words.clone();
                while words == ordered {
                    rng.shuffle(&mut words);
                }
                format!("{} .", words.join(" "))
            } else if cfg.natural {
                format!("records often mention the {property} of {entity} .")
            } else {
                format!("{entity} has {property} records elsewhere .")
            };
        }
    }
    let mut has_distractor = false;
    if wants_distractor {
        if let Some(pos) = free_slot(&mut rng, &mut taken) {
            let mut other = entity_name(rng.below(cfg.entities));
            while other == entity {
                other = entity_name(rng.below(cfg.entities));
            }
            sentences[pos] = if cfg.natural {
                format!("the {property} of {other} is {value} .")
            } else {
                format!("{other} has {property} {value} .")
            };
            has_distractor = true;
        }
    }

    let query = if cfg.natural {
        format!("what is the {property} of {entity}")
    } else {
        format!("{property} of {entity}")
    };
    GeneratedExample {
        raw: RawExample::new(&query, sentences, value),
        evidence_position,
        has_distractor,
        missing_evidence,
    }
}

/// A generated corpus split 70/10/20 into train/dev/test.
pub struct SyntheticDataset {
    pub train: Vec<RawExample>,
    pub dev: Vec<RawExample>,
    pub test: Vec<RawExample>,
}

pub fn gen_synthetic(cfg: &GeneratorConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let all: Vec<RawExample> = (0..cfg.num_examples as u64)
        .map(|i| generate_example(cfg, i).raw)
        .collect();
    let n = all.len();
    let train_end = n * 70 / 100;
    let dev_end = train_end + n * 10 / 100;
    let mut iter = all.into_iter();
    let train: Vec<RawExample> = iter.by_ref().take(train_end).collect();
    let dev: Vec<RawExample> = iter.by_ref().take(dev_end - train_end).collect();
    let test: Vec<RawExample> = iter.collect();
    Ok(SyntheticDataset { train, dev, test })
}

/// Generates and writes train.jsonl, dev.jsonl and test.jsonl.
pub fn write_synthetic(cfg: &GeneratorConfig, dir: impl AsRef<std::path::Path>) -> Result<()> {
    let data = gen_synthetic(cfg)?;
    let dir = dir.as_ref();
    crate::text::write_jsonl(&data.train, dir.join("train.jsonl"))?;
    crate::text::write_jsonl(&data.dev, dir.join("dev.jsonl"))?;
    crate::text::write_jsonl(&data.test, dir.join("test.jsonl"))?;
    Ok(())
}

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocab, BLANK_ID};
use crate::config::ModelConfig;
use crate::error::{Error, Result};

/// Names recognized as the none-relation.
pub const NONE_RELATIONS: [&str; 2] = ["NA", "Other"];

/// One sentence as it appears in the JSONL input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSentence {
    pub tokens: Vec<String>,
    pub head_index: usize,
    pub tail_index: usize,
}

/// One bag line of the JSONL input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawBag {
    pub bag_id: String,
    pub head: String,
    pub tail: String,
    pub relation: String,
    pub sentences: Vec<RawSentence>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    /// Exactly `T` ids; positions at or beyond `true_length` are BLANK.
    pub token_ids: Vec<usize>,
    pub head_pos: usize,
    pub tail_pos: usize,
    pub true_length: usize,
    /// Head and tail resolve to the same token index.
    pub degenerate: bool,
}

impl Instance {
    /// Encodes, pads and truncates one sentence to `time_steps` tokens.
    pub fn encode(sentence: &RawSentence, vocab: &Vocab, time_steps: usize) -> Self {
        let true_length = sentence.tokens.len().min(time_steps);
        let mut token_ids = vec![BLANK_ID; time_steps];
        for (slot, tok) in token_ids.iter_mut().zip(&sentence.tokens) {
            *slot = vocab.id(tok);
        }
        let clip = |p: usize| p.min(time_steps.saturating_sub(1));
        let head_pos = clip(sentence.head_index);
        let tail_pos = clip(sentence.tail_index);
        Self {
            token_ids,
            head_pos,
            tail_pos,
            true_length,
            degenerate: head_pos == tail_pos,
        }
    }

    pub fn time_steps(&self) -> usize {
        self.token_ids.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub bag_id: String,
    pub head: String,
    pub tail: String,
    pub relation_id: usize,
    pub instances: Vec<Instance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub bags: Vec<Bag>,
    /// Relation names indexed by class id, sorted lexicographically.
    pub relations: Vec<String>,
    pub none_id: usize,
    pub vocab: Vocab,
}

/// Which vocabularies to reuse when encoding a dataset.
#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Word vocabulary to encode against; built fresh from the data if absent.
    pub vocab: Option<Vocab>,
    /// Fixed relation vocabulary; unknown relation names become errors.
    pub relations: Option<Vec<String>>,
}

impl Dataset {
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r == name)
    }

    pub fn num_instances(&self) -> usize {
        self.bags.iter().map(|b| b.instances.len()).sum()
    }

    /// Encodes raw bags. Lines sharing (head, tail, relation) are merged into one bag.
    pub fn from_raw(raw: &[RawBag], options: LoadOptions, config: &ModelConfig) -> Result<Self> {
        let vocab = match options.vocab {
            Some(v) => v,
            None => Vocab::from_tokens(
                raw.iter()
                    .flat_map(|b| b.sentences.iter())
                    .flat_map(|s| s.tokens.iter()),
            ),
        };
        let relations = match options.relations {
            Some(r) => r,
            None => build_relation_vocab(raw.iter().map(|b| b.relation.as_str())),
        };
        let none_id = relations
            .iter()
            .position(|r| NONE_RELATIONS.contains(&r.as_str()))
            .ok_or_else(|| Error::Dataset("relation vocabulary has no none-relation (NA or Other)".into()))?;

        let mut bags: Vec<Bag> = Vec::new();
        let mut index: HashMap<(String, String, usize), usize> = HashMap::new();
        for rb in raw {
            let relation_id = relations.iter().position(|r| *r == rb.relation).ok_or_else(|| {
                Error::VocabularyMismatch(format!(
                    "bag `{}` has relation `{}` outside the relation vocabulary",
                    rb.bag_id, rb.relation
                ))
            })?;
            let instances: Vec<Instance> = rb
                .sentences
                .iter()
                .map(|s| {
                    check_mentions(rb, s);
                    Instance::encode(s, &vocab, config.time_steps)
                })
                .collect();
            let key = (rb.head.clone(), rb.tail.clone(), relation_id);
            match index.get(&key) {
                Some(&i) => bags[i].instances.extend(instances),
                None => {
                    index.insert(key, bags.len());
                    bags.push(Bag {
                        bag_id: rb.bag_id.clone(),
                        head: rb.head.clone(),
                        tail: rb.tail.clone(),
                        relation_id,
                        instances,
                    });
                }
            }
        }
        if let Some(b) = bags.iter().find(|b| b.instances.is_empty()) {
            return Err(Error::Dataset(format!("bag `{}` has no sentences", b.bag_id)));
        }
        Ok(Self {
            bags,
            relations,
            none_id,
            vocab,
        })
    }
}

fn check_mentions(bag: &RawBag, s: &RawSentence) {
    if s.tokens.get(s.head_index) != Some(&bag.head) || s.tokens.get(s.tail_index) != Some(&bag.tail) {
        warn!(
            "bag `{}`: sentence does not mention `{}`/`{}` at the given indices",
            bag.bag_id, bag.head, bag.tail
        );
    }
    if s.head_index == s.tail_index {
        warn!(
            "bag `{}`: head and tail share token index {}",
            bag.bag_id, s.head_index
        );
    }
}

/// Sorted relation names with a none-relation guaranteed present.
pub fn build_relation_vocab<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut rels: Vec<String> = names.into_iter().map(str::to_string).collect();
    if !rels.iter().any(|r| NONE_RELATIONS.contains(&r.as_str())) {
        rels.push(NONE_RELATIONS[0].to_string());
    }
    rels.sort();
    rels.dedup();
    rels
}

/// Parses a JSONL bag file. Each line is validated independently.
pub fn read_raw_bags(path: &Path) -> Result<Vec<RawBag>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let data_err = |msg: String| Error::Data {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let bag: RawBag = serde_json::from_str(&line).map_err(|e| data_err(e.to_string()))?;
        for (j, s) in bag.sentences.iter().enumerate() {
            for (what, idx) in [("head_index", s.head_index), ("tail_index", s.tail_index)] {
                if idx >= s.tokens.len() {
                    return Err(data_err(format!(
                        "sentence {j}: {what} {idx} outside {} tokens",
                        s.tokens.len()
                    )));
                }
            }
        }
        out.push(bag);
    }
    Ok(out)
}

pub fn write_raw_bags(path: &Path, bags: &[RawBag]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for b in bags {
        serde_json::to_writer(&mut w, b).map_err(|e| Error::Dataset(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a JSONL dataset and encodes it under `config`.
pub fn load_dataset(path: &Path, options: LoadOptions, config: &ModelConfig) -> Result<Dataset> {
    let raw = read_raw_bags(path)?;
    if raw.is_empty() {
        return Err(Error::Dataset(format!("{} contains no bags", path.display())));
    }
    Dataset::from_raw(&raw, options, config)
}

/// Head- and tail-relative position bucket ids for each of the `T` tokens.
///
/// Distances are clipped to `[-P, P]` and shifted into `[0, 2P]`; tokens
/// beyond `true_length` get the padding bucket `2P + 1`.
pub fn relative_positions(instance: &Instance, config: &ModelConfig) -> (Vec<usize>, Vec<usize>) {
    let p = config.max_distance as i64;
    let pad = 2 * config.max_distance + 1;
    let bucket = |i: usize, anchor: usize| -> usize {
        if i >= instance.true_length {
            pad
        } else {
            ((i as i64 - anchor as i64).clamp(-p, p) + p) as usize
        }
    };
    let n = instance.time_steps();
    (
        (0..n).map(|i| bucket(i, instance.head_pos)).collect(),
        (0..n).map(|i| bucket(i, instance.tail_pos)).collect(),
    )
}

/// Shuffles bag indices with `seed` and cuts them into batches of `batch_size`.
pub fn make_batches(num_bags: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if num_bags == 0 {
        return Err(Error::Dataset("cannot batch an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..num_bags).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

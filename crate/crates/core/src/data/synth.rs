//! Synthetic distant-supervision corpus with known informative instances.
//!
//! Every relation owns a signature trigram. A pattern-bearing sentence reads
//! `[filler] head [filler] p0 p1 p2 [filler] tail [filler]`; a noise sentence
//! mentions the same entities among filler words only. Fillers, entities and
//! pattern tokens come from disjoint pools, so pattern detection is exact.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Dataset, Instance, LoadOptions, RawBag, RawSentence, NONE_RELATIONS};
use super::vocab::Vocab;
use crate::config::ModelConfig;
use crate::error::{Error, Result};

const PATTERN_LEN: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    /// Relation classes including the none-relation `NA`.
    pub num_relations: usize,
    /// Total vocabulary size, reserved ids included.
    pub vocab_size: usize,
    pub bags_per_relation: usize,
    pub max_bag_size: usize,
    /// Expected fraction of noise sentences in multi-instance bags.
    pub noise_ratio: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_relations: 5,
            vocab_size: 200,
            bags_per_relation: 400,
            max_bag_size: 5,
            noise_ratio: 0.5,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_relations < 2 {
            return Err(Error::Config("synthetic data needs at least 2 relations".into()));
        }
        if !(0.0..1.0).contains(&self.noise_ratio) {
            return Err(Error::Config("noise_ratio must lie in [0, 1)".into()));
        }
        if self.max_bag_size == 0 || self.bags_per_relation == 0 {
            return Err(Error::Config("bag counts and sizes must be at least 1".into()));
        }
        let (entities, fillers) = self.pool_sizes();
        if entities < 4 || fillers < 4 {
            return Err(Error::Config(format!(
                "vocab_size {} is too small for {} relations",
                self.vocab_size, self.num_relations
            )));
        }
        let pairs = entities * (entities - 1);
        if self.bags_per_relation > pairs {
            return Err(Error::Config(format!(
                "{} bags per relation exceed {pairs} distinct entity pairs",
                self.bags_per_relation
            )));
        }
        Ok(())
    }

    /// (entity pool size, filler pool size).
    fn pool_sizes(&self) -> (usize, usize) {
        let free = self
            .vocab_size
            .saturating_sub(2 + PATTERN_LEN * self.num_relations);
        let entities = free * 3 / 10;
        (entities, free - entities)
    }

    /// Relation names; `NA` sorts first.
    pub fn relation_names(&self) -> Vec<String> {
        let mut names = vec![NONE_RELATIONS[0].to_string()];
        let width = (self.num_relations - 1).to_string().len();
        names.extend((1..self.num_relations).map(|k| format!("rel_{k:0width$}")));
        names.sort();
        names
    }

    /// Signature trigram of relation `k`.
    pub fn pattern(&self, relation: usize) -> [String; PATTERN_LEN] {
        std::array::from_fn(|i| format!("p{relation}_{i}"))
    }

    fn entity(&self, i: usize) -> String {
        format!("e{i}")
    }

    fn filler(&self, i: usize) -> String {
        format!("w{i}")
    }

    /// The fixed vocabulary every dataset from this spec is encoded with.
    pub fn vocab(&self) -> Vocab {
        let (entities, fillers) = self.pool_sizes();
        let mut v = Vocab::new();
        for k in 0..self.num_relations {
            for t in self.pattern(k) {
                v.insert(&t);
            }
        }
        for i in 0..entities {
            v.insert(&self.entity(i));
        }
        for i in 0..fillers {
            v.insert(&self.filler(i));
        }
        v
    }
}

/// Raw bags for `spec`, byte-for-byte reproducible from its seed.
pub fn generate_raw(spec: &SynthSpec) -> Result<Vec<RawBag>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n_entities, n_fillers) = spec.pool_sizes();
    let names = spec.relation_names();
    let mut bags = Vec::with_capacity(spec.num_relations * spec.bags_per_relation);
    let mut used: HashSet<(usize, usize, usize)> = HashSet::new();

    for (rel, name) in names.iter().enumerate() {
        for b in 0..spec.bags_per_relation {
            let (h, t) = loop {
                let h = rng.random_range(0..n_entities);
                let t = rng.random_range(0..n_entities);
                if h != t && used.insert((h, t, rel)) {
                    break (h, t);
                }
            };
            let head = spec.entity(h);
            let tail = spec.entity(t);
            let size = rng.random_range(1..=spec.max_bag_size);
            let noisy = noise_slots(&mut rng, size, spec.noise_ratio);
            let sentences = (0..size)
                .map(|j| {
                    if noisy.contains(&j) {
                        noise_sentence(&mut rng, spec, n_fillers, &head, &tail)
                    } else {
                        pattern_sentence(&mut rng, spec, n_fillers, rel, &head, &tail)
                    }
                })
                .collect();
            bags.push(RawBag {
                bag_id: format!("s{}-{name}-{b:05}", spec.seed),
                head,
                tail,
                relation: name.clone(),
                sentences,
            });
        }
    }
    Ok(bags)
}

/// Indices of noise sentences in a bag of `size`: `size·ratio` in
/// expectation (stochastic rounding), never all of them.
fn noise_slots(rng: &mut ChaCha8Rng, size: usize, ratio: f64) -> Vec<usize> {
    let expected = ratio * size as f64;
    let mut count = expected.floor() as usize;
    if rng.random::<f64>() < expected.fract() {
        count += 1;
    }
    let count = count.min(size - 1);
    let mut slots = sample(rng, size, count).into_vec();
    slots.sort_unstable();
    slots
}

fn fillers(rng: &mut ChaCha8Rng, spec: &SynthSpec, pool: usize, n: usize) -> Vec<String> {
    (0..n).map(|_| spec.filler(rng.random_range(0..pool))).collect()
}

/// Between 0 and `max` fillers.
fn some_fillers(rng: &mut ChaCha8Rng, spec: &SynthSpec, pool: usize, max: usize) -> Vec<String> {
    let n = rng.random_range(0..=max);
    fillers(rng, spec, pool, n)
}

fn pattern_sentence(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    pool: usize,
    relation: usize,
    head: &str,
    tail: &str,
) -> RawSentence {
    let mut tokens = some_fillers(rng, spec, pool, 3);
    let head_index = tokens.len();
    tokens.push(head.to_string());
    tokens.extend(some_fillers(rng, spec, pool, 2));
    tokens.extend(spec.pattern(relation));
    tokens.extend(some_fillers(rng, spec, pool, 2));
    let tail_index = tokens.len();
    tokens.push(tail.to_string());
    tokens.extend(some_fillers(rng, spec, pool, 3));
    RawSentence {
        tokens,
        head_index,
        tail_index,
    }
}

fn noise_sentence(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    pool: usize,
    head: &str,
    tail: &str,
) -> RawSentence {
    let len = rng.random_range(5..=15);
    let mut tokens = fillers(rng, spec, pool, len);
    let head_index = rng.random_range(0..len - 1);
    let tail_index = rng.random_range(head_index + 1..len);
    tokens[head_index] = head.to_string();
    tokens[tail_index] = tail.to_string();
    RawSentence {
        tokens,
        head_index,
        tail_index,
    }
}

/// Generates and encodes a synthetic dataset with `config.time_steps` tokens per instance.
pub fn generate_synthetic(spec: &SynthSpec, config: &ModelConfig) -> Result<Dataset> {
    let raw = generate_raw(spec)?;
    let options = LoadOptions {
        vocab: Some(spec.vocab()),
        relations: Some(spec.relation_names()),
    };
    Dataset::from_raw(&raw, options, config)
}

/// Whether an encoded instance carries the signature trigram of `relation`.
pub fn contains_pattern(spec: &SynthSpec, vocab: &Vocab, instance: &Instance, relation: usize) -> bool {
    let ids: Vec<usize> = spec.pattern(relation).iter().map(|t| vocab.id(t)).collect();
    instance.token_ids[..instance.true_length]
        .windows(PATTERN_LEN)
        .any(|w| w == ids.as_slice())
}

//! Test-set scoring under the full, One, Two and All instance settings.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::Real;

use super::metrics::PredictionRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PnMode {
    One,
    Two,
    All,
}

impl PnMode {
    pub const ALL_MODES: [PnMode; 3] = [PnMode::One, PnMode::Two, PnMode::All];

    /// Instances kept from a bag of size `j`.
    pub fn keep(self, j: usize) -> usize {
        match self {
            PnMode::One => 1,
            PnMode::Two => 2.min(j),
            PnMode::All => j,
        }
    }
}

impl fmt::Display for PnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PnMode::One => "one",
            PnMode::Two => "two",
            PnMode::All => "all",
        })
    }
}

impl FromStr for PnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "one" => Ok(PnMode::One),
            "two" => Ok(PnMode::Two),
            "all" => Ok(PnMode::All),
            _ => Err(Error::Config(format!("unknown P@N mode `{s}` (one, two, all)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PnSetting {
    pub mode: PnMode,
    pub seed: u64,
}

/// Which instances of each test bag are scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Every bag with all of its instances.
    Full,
    /// Only bags with more than one instance, subsampled per the setting.
    Pn(PnSetting),
}

/// Model output for one scored bag.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredBag {
    /// Index into `Dataset::bags`.
    pub bag_index: usize,
    /// Instance indices fed to the model, ascending.
    pub instances: Vec<usize>,
    pub probs: Vec<f64>,
}

impl ScoredBag {
    /// Argmax class, lowest id on ties.
    pub fn predicted(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = c;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSet {
    pub bags: Vec<ScoredBag>,
    /// One record per (scored bag, non-none relation).
    pub records: Vec<PredictionRecord>,
}

impl ScoredSet {
    /// `(gold, predicted)` class per scored bag.
    pub fn hard_predictions(&self, dataset: &Dataset) -> Vec<(usize, usize)> {
        self.bags
            .iter()
            .map(|b| (dataset.bags[b.bag_index].relation_id, b.predicted()))
            .collect()
    }
}

/// Instance indices chosen for every bag, `None` for excluded bags.
/// Draws happen sequentially over bags in dataset order.
pub fn select_instances(dataset: &Dataset, selection: Selection) -> Vec<Option<Vec<usize>>> {
    match selection {
        Selection::Full => dataset
            .bags
            .iter()
            .map(|b| Some((0..b.instances.len()).collect()))
            .collect(),
        Selection::Pn(setting) => {
            let mut rng = ChaCha8Rng::seed_from_u64(setting.seed);
            dataset
                .bags
                .iter()
                .map(|b| {
                    let j = b.instances.len();
                    if j <= 1 {
                        return None;
                    }
                    let mut idx = sample(&mut rng, j, setting.mode.keep(j)).into_vec();
                    idx.sort_unstable();
                    Some(idx)
                })
                .collect()
        }
    }
}

/// Runs the model over the selected instances of every test bag.
pub fn score_test_set<T: Real>(
    dataset: &Dataset,
    model: &Model<T>,
    selection: Selection,
) -> Result<ScoredSet> {
    if model.num_classes() != dataset.num_relations() {
        return Err(Error::VocabularyMismatch(format!(
            "model has {} classes, test set has {} relations",
            model.num_classes(),
            dataset.num_relations()
        )));
    }
    let chosen = select_instances(dataset, selection);
    let bags: Vec<ScoredBag> = chosen
        .into_par_iter()
        .enumerate()
        .filter_map(|(bag_index, idx)| idx.map(|i| (bag_index, i)))
        .map(|(bag_index, instances)| -> Result<ScoredBag> {
            let bag = &dataset.bags[bag_index];
            let inputs: Vec<&Instance> = instances.iter().map(|&i| &bag.instances[i]).collect();
            let probs = model.predict(&inputs)?.into_iter().map(Real::f64).collect();
            Ok(ScoredBag {
                bag_index,
                instances,
                probs,
            })
        })
        .collect::<Result<_>>()?;

    let records = bags
        .iter()
        .flat_map(|b| {
            let id = &dataset.bags[b.bag_index].bag_id;
            b.probs
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != dataset.none_id)
                .map(move |(c, &p)| PredictionRecord {
                    bag_id: id.clone(),
                    relation_id: c,
                    confidence: p,
                })
        })
        .collect();
    Ok(ScoredSet { bags, records })
}

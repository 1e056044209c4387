//! Held-out ranking metrics and macro F1.

use std::collections::{HashMap, HashSet};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub bag_id: String,
    /// Never the none-relation.
    pub relation_id: usize,
    pub confidence: f64,
}

type Fact = (String, String, usize);

/// Gold (head, tail, relation) facts of a test set, with the entity pair of every bag.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GoldFacts {
    pair_of: HashMap<String, (String, String)>,
    facts: HashSet<Fact>,
}

impl GoldFacts {
    /// Non-none bag labels of `dataset`.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let mut g = Self::default();
        for bag in &dataset.bags {
            g.pair_of
                .insert(bag.bag_id.clone(), (bag.head.clone(), bag.tail.clone()));
            if bag.relation_id != dataset.none_id {
                g.facts
                    .insert((bag.head.clone(), bag.tail.clone(), bag.relation_id));
            }
        }
        g
    }

    /// Registers a bag with its entity pair.
    pub fn add_bag(&mut self, bag_id: &str, head: &str, tail: &str) {
        self.pair_of
            .insert(bag_id.to_string(), (head.to_string(), tail.to_string()));
    }

    pub fn add_fact(&mut self, head: &str, tail: &str, relation_id: usize) {
        self.facts
            .insert((head.to_string(), tail.to_string(), relation_id));
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    fn fact_of(&self, r: &PredictionRecord) -> Option<Fact> {
        let (h, t) = self.pair_of.get(&r.bag_id)?;
        let f = (h.clone(), t.clone(), r.relation_id);
        self.facts.contains(&f).then_some(f)
    }

    /// Hit flags along a ranking; each gold fact counts once, at its first hit.
    fn hits<'a>(&self, ranked: impl Iterator<Item = &'a PredictionRecord>) -> Vec<bool> {
        let mut seen = HashSet::new();
        ranked
            .map(|r| self.fact_of(r).is_some_and(|f| seen.insert(f)))
            .collect()
    }
}

/// Records by confidence descending; ties by `bag_id`, then `relation_id`.
pub fn rank(records: &[PredictionRecord]) -> Vec<&PredictionRecord> {
    let mut v: Vec<&PredictionRecord> = records.iter().collect();
    v.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.bag_id.cmp(&b.bag_id))
            .then_with(|| a.relation_id.cmp(&b.relation_id))
    });
    v
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// One point per ranked prefix `k = 1..=n`.
    pub points: Vec<PrPoint>,
    /// Trapezoidal area over recall, starting from `(recall 0, precision p_1)`.
    pub auc: f64,
}

pub fn pr_curve(records: &[PredictionRecord], gold: &GoldFacts) -> Result<PrCurve> {
    if gold.is_empty() {
        return Err(Error::Contract("PR curve needs at least one gold fact".into()));
    }
    let total = gold.len() as f64;
    let hits = gold.hits(rank(records).into_iter());
    let mut points = Vec::with_capacity(hits.len());
    let mut correct = 0usize;
    for (k, hit) in hits.iter().enumerate() {
        correct += usize::from(*hit);
        points.push(PrPoint {
            precision: correct as f64 / (k + 1) as f64,
            recall: correct as f64 / total,
        });
    }
    let mut auc = 0.0;
    let mut prev = points.first().map(|p| PrPoint {
        precision: p.precision,
        recall: 0.0,
    });
    for p in &points {
        if let Some(q) = prev {
            auc += (p.recall - q.recall) * (p.precision + q.precision) / 2.0;
        }
        prev = Some(*p);
    }
    Ok(PrCurve { points, auc })
}

/// Precision among the `n` highest-ranked records.
pub fn p_at_n(records: &[PredictionRecord], gold: &GoldFacts, n: usize) -> Result<f64> {
    if n == 0 || n > records.len() {
        return Err(Error::Contract(format!(
            "P@{n} requested over {} records",
            records.len()
        )));
    }
    let hits = gold.hits(rank(records).into_iter().take(n));
    Ok(hits.iter().filter(|&&h| h).count() as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScore {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct F1Report {
    pub per_class: Vec<ClassScore>,
    /// Unweighted mean of per-class F1; 0 when no class is scored.
    pub macro_f1: f64,
}

/// Macro F1 over non-none classes from `(gold, predicted)` pairs. Classes
/// absent from both gold and predictions are left out.
pub fn macro_f1(pairs: &[(usize, usize)], none_id: usize) -> F1Report {
    let mut tp: HashMap<usize, usize> = HashMap::new();
    let mut fp: HashMap<usize, usize> = HashMap::new();
    let mut fn_: HashMap<usize, usize> = HashMap::new();
    for &(gold, pred) in pairs {
        if gold == pred {
            *tp.entry(gold).or_default() += 1;
        } else {
            *fp.entry(pred).or_default() += 1;
            *fn_.entry(gold).or_default() += 1;
        }
    }
    let mut classes: Vec<usize> = tp
        .keys()
        .chain(fp.keys())
        .chain(fn_.keys())
        .copied()
        .filter(|&c| c != none_id)
        .collect();
    classes.sort_unstable();
    classes.dedup();

    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassScore> = classes
        .into_iter()
        .map(|c| {
            let t = tp.get(&c).copied().unwrap_or(0);
            let p = ratio(t, t + fp.get(&c).copied().unwrap_or(0));
            let r = ratio(t, t + fn_.get(&c).copied().unwrap_or(0));
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            ClassScore {
                class: c,
                precision: p,
                recall: r,
                f1,
            }
        })
        .collect();
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64
    };
    F1Report { per_class, macro_f1 }
}

//! Brute-force reference metrics, written without the library's ranking code.

use std::collections::{HashMap, HashSet};

use mlssa::evaluation::PredictionRecord;

pub struct Gold {
    pub pair_of: HashMap<String, (String, String)>,
    pub facts: HashSet<(String, String, usize)>,
}

/// Index of the best remaining record: highest confidence, then smallest bag id, then relation.
fn better(a: &PredictionRecord, b: &PredictionRecord) -> bool {
    if a.confidence != b.confidence {
        return a.confidence > b.confidence;
    }
    if a.bag_id != b.bag_id {
        return a.bag_id < b.bag_id;
    }
    a.relation_id < b.relation_id
}

pub fn order(records: &[PredictionRecord]) -> Vec<usize> {
    let mut used = vec![false; records.len()];
    let mut out = Vec::new();
    for _ in 0..records.len() {
        let mut best: Option<usize> = None;
        for i in 0..records.len() {
            if !used[i] && best.is_none_or(|b| better(&records[i], &records[b])) {
                best = Some(i);
            }
        }
        used[best.unwrap()] = true;
        out.push(best.unwrap());
    }
    out
}

/// Distinct gold facts hit by the first `k` ranked records.
fn correct_in_prefix(records: &[PredictionRecord], ranked: &[usize], gold: &Gold, k: usize) -> usize {
    let mut hit = HashSet::new();
    for &i in &ranked[..k] {
        let r = &records[i];
        if let Some((h, t)) = gold.pair_of.get(&r.bag_id) {
            let f = (h.clone(), t.clone(), r.relation_id);
            if gold.facts.contains(&f) {
                hit.insert(f);
            }
        }
    }
    hit.len()
}

pub fn pr_points(records: &[PredictionRecord], gold: &Gold) -> Vec<(f64, f64)> {
    let ranked = order(records);
    (1..=records.len())
        .map(|k| {
            let c = correct_in_prefix(records, &ranked, gold, k) as f64;
            (c / k as f64, c / gold.facts.len() as f64)
        })
        .collect()
}

pub fn auc(points: &[(f64, f64)]) -> f64 {
    let mut area = 0.0;
    let mut prev = match points.first() {
        Some(&(p, _)) => (p, 0.0),
        None => return 0.0,
    };
    for &(p, r) in points {
        area += (r - prev.1) * (p + prev.0) / 2.0;
        prev = (p, r);
    }
    area
}

pub fn p_at(records: &[PredictionRecord], gold: &Gold, n: usize) -> f64 {
    let ranked = order(records);
    correct_in_prefix(records, &ranked, gold, n) as f64 / n as f64
}

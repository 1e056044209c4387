#![allow(dead_code)]

use mlssa::data::{Bag, Instance};
use mlssa::numcore::Matrix;
use mlssa::{Model, ModelConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// A random instance with `2 ≤ true_length ≤ T` and ids in `2..vocab`.
pub fn random_instance(cfg: &ModelConfig, vocab: usize, rng: &mut ChaCha8Rng) -> Instance {
    let t = cfg.time_steps;
    let len = rng.random_range(2..=t);
    let mut token_ids: Vec<usize> = (0..len).map(|_| rng.random_range(2..vocab)).collect();
    token_ids.resize(t, 0);
    let head_pos = rng.random_range(0..len);
    let tail_pos = rng.random_range(0..len);
    Instance {
        token_ids,
        head_pos,
        tail_pos,
        true_length: len,
        degenerate: head_pos == tail_pos,
    }
}

pub fn random_bag(cfg: &ModelConfig, vocab: usize, j: usize, id: &str, rng: &mut ChaCha8Rng) -> Bag {
    Bag {
        bag_id: id.into(),
        head: format!("{id}_h"),
        tail: format!("{id}_t"),
        relation_id: rng.random_range(0..cfg.num_classes),
        instances: (0..j).map(|_| random_instance(cfg, vocab, rng)).collect(),
    }
}

/// A model whose parameters are all redrawn uniformly from [-1, 1].
pub fn random_model(cfg: &ModelConfig, vocab: usize, rng: &mut ChaCha8Rng) -> Model<f64> {
    let mut m = Model::<f64>::new(cfg, vocab, rng).unwrap();
    for p in m.store.iter_mut() {
        let (r, c) = p.value.shape();
        p.value = uniform(r, c, rng);
    }
    m
}
pub mod oracle;

/// Single-vector sentence attention computed with plain loops from the stacked
/// representations `o` (`[v x J]`): returns (instance weights, class probabilities).
pub fn single_vector_reference(model: &Model<f64>, o: &Matrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let p = &model.params.sent;
    let (w1, w2) = (model.store.value(p.ws1), model.store.value(p.ws2));
    let (wo, bo) = (model.store.value(p.wo), model.store.value(p.bo));
    assert_eq!(w2.rows(), 1);
    let scores: Vec<f64> = (0..o.cols())
        .map(|j| {
            (0..w1.rows())
                .map(|a| {
                    let z: f64 = (0..o.rows()).map(|k| w1.get(a, k) * o.get(k, j)).sum();
                    w2.get(0, a) * z.tanh()
                })
                .sum()
        })
        .collect();
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    let alpha: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let m: Vec<f64> = (0..o.rows())
        .map(|k| (0..o.cols()).map(|j| alpha[j] * o.get(k, j)).sum())
        .collect();
    let logits: Vec<f64> = (0..wo.rows())
        .map(|c| (0..m.len()).map(|k| wo.get(c, k) * m[k].tanh()).sum::<f64>() + bo.get(c, 0))
        .collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    (alpha, exps.iter().map(|e| e / total).collect())
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Bag;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::{Gradients, ParamKind, Real, Tape};

/// Components of the batch objective. `total = ce + penalty + l2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean cross-entropy over bags.
    pub ce: f64,
    /// Coefficient × summed attention penalties / bag count.
    pub penalty: f64,
    /// Coefficient × Σ‖W‖² over weight matrices.
    pub l2: f64,
}

struct BagTerm<T> {
    ce: f64,
    penalty: f64,
    grads: Option<Gradients<T>>,
}

/// Batch objective and, with `with_grads`, its gradients.
///
/// Bags are evaluated independently (in parallel) and reduced in
/// ascending `bag_id` order, so the result does not depend on the order
/// of `bags` or on thread scheduling. `dropout_seed` enables dropout with
/// a per-bag stream derived from the seed and the bag's sorted position.
pub fn batch_objective<T: Real>(
    model: &Model<T>,
    bags: &[&Bag],
    with_grads: bool,
    dropout_seed: Option<u64>,
) -> Result<(LossBreakdown, Gradients<T>)> {
    if bags.is_empty() {
        return Err(Error::Contract("loss over an empty batch".into()));
    }
    let mut sorted: Vec<&Bag> = bags.to_vec();
    sorted.sort_by(|a, b| a.bag_id.cmp(&b.bag_id));
    let cfg = &model.config;
    let inv_bags = 1.0 / sorted.len() as f64;
    let penalize_l2 = cfg.penalize_l2_attention;

    let terms: Vec<BagTerm<T>> = sorted
        .par_iter()
        .enumerate()
        .map(|(i, bag)| -> Result<BagTerm<T>> {
            if bag.relation_id >= model.num_classes() {
                return Err(Error::Index {
                    what: "relation label",
                    index: bag.relation_id,
                    len: model.num_classes(),
                });
            }
            let mut tape = Tape::new(&model.store);
            let instances: Vec<_> = bag.instances.iter().collect();
            let mut rng = dropout_seed
                .map(|s| ChaCha8Rng::seed_from_u64(s ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let trace = model.forward_bag(&mut tape, &instances, rng.as_mut())?;
            let ce = tape.cross_entropy(trace.probs, bag.relation_id)?;
            let mut pens: Vec<_> = trace.instances.iter().map(|t| t.penalty).collect();
            if penalize_l2 {
                pens.push(tape.frobenius_penalty(trace.a_l2));
            }
            let pen = tape.add_scalars(&pens)?;
            let ce_val = tape.value(ce).item().f64();
            let pen_val = tape.value(pen).item().f64();
            let grads = if with_grads {
                let ce_scaled = tape.scale(ce, T::of(inv_bags));
                let pen_scaled = tape.scale(pen, T::of(cfg.penalty_coef * inv_bags));
                let loss = tape.add(ce_scaled, pen_scaled)?;
                Some(tape.backward(loss)?)
            } else {
                None
            };
            Ok(BagTerm {
                ce: ce_val,
                penalty: pen_val,
                grads,
            })
        })
        .collect::<Result<_>>()?;

    let mut grads = Gradients::new();
    let mut ce_sum = 0.0;
    let mut pen_sum = 0.0;
    for term in &terms {
        ce_sum += term.ce;
        pen_sum += term.penalty;
        if let Some(g) = &term.grads {
            grads.merge(g);
        }
    }

    let l2 = l2_term(model, with_grads.then_some(&mut grads))?;
    let ce = ce_sum * inv_bags;
    let penalty = cfg.penalty_coef * pen_sum * inv_bags;
    Ok((
        LossBreakdown {
            total: ce + penalty + l2,
            ce,
            penalty,
            l2,
        },
        grads,
    ))
}

/// `coef × Σ‖W‖²` over weight matrices; biases and embeddings are excluded.
fn l2_term<T: Real>(model: &Model<T>, grads: Option<&mut Gradients<T>>) -> Result<f64> {
    let coef = model.config.l2_coef;
    if coef == 0.0 {
        return Ok(0.0);
    }
    let mut tape = Tape::new(&model.store);
    let mut terms = Vec::new();
    for id in model.store.ids() {
        if model.store.get(id).kind == ParamKind::Weight {
            let w = tape.param(id);
            terms.push(tape.sum_squares(w));
        }
    }
    let sum = tape.add_scalars(&terms)?;
    let loss = tape.scale(sum, T::of(coef));
    if let Some(g) = grads {
        g.merge(&tape.backward(loss)?);
    }
    Ok(tape.value(loss).item().f64())
}

/// Value of the training objective for `bags`, without dropout.
pub fn total_loss<T: Real>(model: &Model<T>, bags: &[&Bag]) -> Result<LossBreakdown> {
    Ok(batch_objective(model, bags, false, None)?.0)
}

/// Objective and gradients for `bags`, without dropout.
pub fn loss_and_gradients<T: Real>(model: &Model<T>, bags: &[&Bag]) -> Result<(LossBreakdown, Gradients<T>)> {
    batch_objective(model, bags, true, None)
}

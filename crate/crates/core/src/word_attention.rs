//! Structured word-level self-attention.
//!
//! `A = softmax(W_s2 · tanh(W_s1 · H))` gives `r_l1` distributions over the
//! tokens, `M = A · Hᵀ` the weighted sentence matrix, and the row-major
//! flattening of `M` feeds a ReLU layer producing the instance
//! representation of size `v`. `‖A·Aᵀ − I‖²_F` pushes the rows apart.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::config::ModelConfig;
use crate::error::Result;
use crate::numcore::{Matrix, ParamId, ParamKind, ParamStore, Real, Tape, Var};

/// Logit written into padded columns before the softmax.
pub const MASK_LOGIT: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordAttentionParams {
    /// `[d_a x 2u]`
    pub ws1: ParamId,
    /// `[r x d_a]`
    pub ws2: ParamId,
    /// `[v x r·2u]`
    pub wo: ParamId,
    /// `[v x 1]`
    pub bo: ParamId,
}

impl WordAttentionParams {
    pub fn register<T: Real, R: Rng>(store: &mut ParamStore<T>, config: &ModelConfig, rng: &mut R) -> Self {
        let two_u = 2 * config.hidden;
        let flat = config.attn_rows_l1 * two_u;
        Self {
            ws1: store.add(
                "word_attn_ws1",
                ParamKind::Weight,
                glorot(config.attn_dim_l1, two_u, rng),
            ),
            ws2: store.add(
                "word_attn_ws2",
                ParamKind::Weight,
                glorot(config.attn_rows_l1, config.attn_dim_l1, rng),
            ),
            wo: store.add(
                "word_mlp_weights",
                ParamKind::Weight,
                glorot(config.mlp_size, flat, rng),
            ),
            bo: store.add(
                "word_mlp_bias",
                ParamKind::Bias,
                Matrix::zeros(config.mlp_size, 1),
            ),
        }
    }
}

/// Glorot-uniform initialization.
pub(crate) fn glorot<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
    Matrix::from_fn(rows, cols, |_, _| T::of(dist.sample(rng)))
}

/// `[r x T]` annotation matrix. With `valid_len = Some(n)`, columns `n..`
/// get [`MASK_LOGIT`] before the softmax.
pub fn word_attention_matrix<T: Real>(
    tape: &mut Tape<'_, T>,
    h: Var,
    params: &WordAttentionParams,
    valid_len: Option<usize>,
) -> Result<Var> {
    let ws1 = tape.param(params.ws1);
    let ws2 = tape.param(params.ws2);
    let hidden = tape.matmul(ws1, h)?;
    let hidden = tape.tanh(hidden);
    let mut logits = tape.matmul(ws2, hidden)?;
    if let Some(n) = valid_len {
        if n < tape.shape(logits).1 {
            logits = tape.fill_columns(logits, n, T::of(MASK_LOGIT));
        }
    }
    Ok(tape.row_softmax(logits))
}

/// `M = A · Hᵀ`, shape `[r x 2u]`.
pub fn weighted_sentence_matrix<T: Real>(tape: &mut Tape<'_, T>, a: Var, h: Var) -> Result<Var> {
    let ht = tape.transpose(h);
    tape.matmul(a, ht)
}

/// `ReLU(W_o · flatten(M) + b_o)`; rows of `M` are concatenated in order.
pub fn flatten_project<T: Real>(tape: &mut Tape<'_, T>, m: Var, params: &WordAttentionParams) -> Result<Var> {
    let (r, c) = tape.shape(m);
    let flat = tape.reshape(m, r * c, 1)?;
    let wo = tape.param(params.wo);
    let bo = tape.param(params.bo);
    let pre = tape.matmul(wo, flat)?;
    let pre = tape.add(pre, bo)?;
    Ok(tape.relu(pre))
}

/// `‖A·Aᵀ − I‖²_F`.
pub fn attention_penalty<T: Real>(tape: &mut Tape<'_, T>, a: Var) -> Var {
    tape.frobenius_penalty(a)
}

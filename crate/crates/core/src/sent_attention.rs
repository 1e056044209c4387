//! Structured sentence-level attention over a bag and the relation classifier.

use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamId, ParamKind, ParamStore, Real, Tape, Var};
use crate::word_attention::glorot;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SentAttentionParams {
    /// `[d_a x v]`
    pub ws1: ParamId,
    /// `[r x d_a]`
    pub ws2: ParamId,
    /// `[C x v]`
    pub wo: ParamId,
    /// `[C x 1]`
    pub bo: ParamId,
}

impl SentAttentionParams {
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        config: &ModelConfig,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            ws1: store.add(
                "sent_attn_ws1",
                ParamKind::Weight,
                glorot(config.attn_dim_l2, config.mlp_size, rng),
            ),
            ws2: store.add(
                "sent_attn_ws2",
                ParamKind::Weight,
                glorot(config.attn_rows_l2, config.attn_dim_l2, rng),
            ),
            wo: store.add(
                "output_weights",
                ParamKind::Weight,
                glorot(classes, config.mlp_size, rng),
            ),
            bo: store.add("output_bias", ParamKind::Bias, Matrix::zeros(classes, 1)),
        }
    }
}

/// Stacks instance representations `[v x 1]` into `O` of shape `[v x J]`.
pub fn stack_bag<T: Real>(tape: &mut Tape<'_, T>, representations: &[Var]) -> Result<Var> {
    if representations.is_empty() {
        return Err(Error::Contract("a bag needs at least one instance".into()));
    }
    tape.concat_cols(representations)
}

/// `softmax(W_s2 · tanh(W_s1 · O))`, shape `[r x J]`; each row weighs the instances.
pub fn sentence_attention_matrix<T: Real>(
    tape: &mut Tape<'_, T>,
    o: Var,
    params: &SentAttentionParams,
) -> Result<Var> {
    let ws1 = tape.param(params.ws1);
    let ws2 = tape.param(params.ws2);
    let hidden = tape.matmul(ws1, o)?;
    let hidden = tape.tanh(hidden);
    let logits = tape.matmul(ws2, hidden)?;
    Ok(tape.row_softmax(logits))
}

/// Mean of the attention rows, `[1 x J]`.
pub fn average_attention<T: Real>(tape: &mut Tape<'_, T>, a: Var) -> Var {
    tape.mean_rows(a)
}

/// Attention-weighted sum of instance representations, `[v x 1]`.
pub fn selection_representation<T: Real>(tape: &mut Tape<'_, T>, a_bar: Var, o: Var) -> Result<Var> {
    let weights = tape.transpose(a_bar);
    tape.matmul(o, weights)
}

/// `softmax(W_o · tanh(M) + b_o)` as a `[1 x C]` row.
pub fn classify<T: Real>(tape: &mut Tape<'_, T>, m: Var, params: &SentAttentionParams) -> Result<Var> {
    let wo = tape.param(params.wo);
    let bo = tape.param(params.bo);
    let squashed = tape.tanh(m);
    let logits = tape.matmul(wo, squashed)?;
    let logits = tape.add(logits, bo)?;
    let row = tape.transpose(logits);
    Ok(tape.row_softmax(row))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(
        ws1: Matrix<f64>,
        ws2: Matrix<f64>,
        wo: Matrix<f64>,
        bo: Matrix<f64>,
    ) -> (ParamStore<f64>, SentAttentionParams) {
        let mut s = ParamStore::new();
        let p = SentAttentionParams {
            ws1: s.add("ws1", ParamKind::Weight, ws1),
            ws2: s.add("ws2", ParamKind::Weight, ws2),
            wo: s.add("wo", ParamKind::Weight, wo),
            bo: s.add("bo", ParamKind::Bias, bo),
        };
        (s, p)
    }

    #[test]
    fn stack_bag_columns_round_trip() {
        let s = ParamStore::<f64>::new();
        let mut tape = Tape::new(&s);
        let cols = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let vars: Vec<Var> = cols
            .iter()
            .map(|c| tape.constant(Matrix::column_vector(c)))
            .collect();
        let o = stack_bag(&mut tape, &vars).unwrap();
        assert_eq!(tape.shape(o), (2, 3));
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(tape.value(o).column(j), c.to_vec());
        }
        let single = stack_bag(&mut tape, &vars[..1]).unwrap();
        assert_eq!(tape.shape(single), (2, 1));
        assert!(stack_bag(&mut tape, &[]).is_err());
    }

    #[test]
    fn singleton_bag_attention_is_exactly_one() {
        let (s, p) = params(
            Matrix::from_fn(3, 2, |r, c| 0.3 * r as f64 - 0.2 * c as f64),
            Matrix::from_fn(4, 3, |r, c| (r + c) as f64 * 0.7),
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 1),
        );
        let mut tape = Tape::new(&s);
        let o = tape.constant(Matrix::column_vector(&[0.4, -1.3]));
        let a = sentence_attention_matrix(&mut tape, o, &p).unwrap();
        assert!(tape.value(a).data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_ws2_gives_uniform_rows() {
        let (s, p) = params(
            Matrix::filled(3, 2, 0.1),
            Matrix::zeros(2, 3),
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 1),
        );
        let mut tape = Tape::new(&s);
        let o = tape.constant(Matrix::from_fn(2, 4, |r, c| (r * c) as f64));
        let a = sentence_attention_matrix(&mut tape, o, &p).unwrap();
        assert!(tape.value(a).data().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn sentence_attention_hand_oracle() {
        // r = 3, J = 5, d_a = 1, v = 1
        let ws1 = Matrix::from_rows(&[[0.5]]);
        let ws2 = Matrix::column_vector(&[1.0, -2.0, 0.0]);
        let (s, p) = params(ws1, ws2, Matrix::zeros(1, 1), Matrix::zeros(1, 1));
        let inputs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let mut tape = Tape::new(&s);
        let o = tape.constant(Matrix::from_rows(&[inputs]));
        let a = sentence_attention_matrix(&mut tape, o, &p).unwrap();
        let got = tape.value(a);
        for (row, scale) in [1.0, -2.0, 0.0].iter().enumerate() {
            let logits: Vec<f64> = inputs.iter().map(|x| scale * (0.5 * x).tanh()).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for (j, l) in logits.iter().enumerate() {
                assert!((got.get(row, j) - l.exp() / z).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn averaging_examples() {
        let s = ParamStore::<f64>::new();
        let mut tape = Tape::new(&s);
        let single = tape.constant(Matrix::from_rows(&[[0.2, 0.8]]));
        let avg = average_attention(&mut tape, single);
        assert_eq!(tape.value(avg), &Matrix::from_rows(&[[0.2, 0.8]]));
        let opposite = tape.constant(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]));
        let avg = average_attention(&mut tape, opposite);
        assert_eq!(tape.value(avg), &Matrix::from_rows(&[[0.5, 0.5]]));
        let twin = tape.constant(Matrix::from_rows(&[[0.25, 0.75], [0.25, 0.75]]));
        let avg = average_attention(&mut tape, twin);
        assert_eq!(tape.value(avg), &Matrix::from_rows(&[[0.25, 0.75]]));
    }

    #[test]
    fn selection_picks_weighted_columns() {
        let s = ParamStore::<f64>::new();
        let mut tape = Tape::new(&s);
        let o_val = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let o = tape.constant(o_val.clone());
        let onehot = tape.constant(Matrix::from_rows(&[[0.0, 0.0, 1.0]]));
        let m = selection_representation(&mut tape, onehot, o).unwrap();
        assert_eq!(tape.value(m).data(), o_val.column(2).as_slice());
        let w = [0.2, 0.3, 0.5];
        let mixed = tape.constant(Matrix::from_rows(&[w]));
        let m = selection_representation(&mut tape, mixed, o).unwrap();
        let oracle = o_val.matmul(&Matrix::column_vector(&w)).unwrap();
        assert_eq!(tape.value(m), &oracle);
    }

    #[test]
    fn classify_examples() {
        let (s, p) = params(
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 1),
            Matrix::zeros(4, 2),
            Matrix::zeros(4, 1),
        );
        let mut tape = Tape::new(&s);
        let m = tape.constant(Matrix::column_vector(&[3.0, -1.0]));
        let probs = classify(&mut tape, m, &p).unwrap();
        assert!(tape.value(probs).data().iter().all(|&x| x == 0.25));

        let (s, p) = params(
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 1),
            Matrix::zeros(3, 2),
            Matrix::column_vector(&[0.0, 50.0, 0.0]),
        );
        let mut tape = Tape::new(&s);
        let m = tape.constant(Matrix::column_vector(&[3.0, -1.0]));
        let probs = classify(&mut tape, m, &p).unwrap();
        let row = tape.value(probs).row(0).to_vec();
        assert!(row[1] > row[0] && row[1] > row[2]);

        // Two classes: logits = W_o tanh(m) + b
        let wo = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]);
        let (s, p) = params(
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 1),
            wo,
            Matrix::column_vector(&[0.1, -0.1]),
        );
        let mut tape = Tape::new(&s);
        let m = tape.constant(Matrix::column_vector(&[0.5, 0.25]));
        let probs = classify(&mut tape, m, &p).unwrap();
        let l0 = 0.5f64.tanh() + 0.1;
        let l1 = 2.0 * 0.25f64.tanh() - 0.1;
        let p0 = l0.exp() / (l0.exp() + l1.exp());
        assert!((tape.value(probs).get(0, 0) - p0).abs() < 1e-15);
    }
}

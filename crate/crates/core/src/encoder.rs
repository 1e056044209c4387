//! Word + position embeddings and the BiLSTM that turns an instance into
//! its hidden-state matrix `H` of shape `[2u x T]`.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::config::ModelConfig;
use crate::data::{relative_positions, Instance, PretrainedEmbeddings, Vocab};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamId, ParamKind, ParamStore, Real, Tape, Var};

/// Standard deviation for randomly initialized embedding rows.
pub const EMBEDDING_INIT_STD: f64 = 0.05;
/// Half-width of the uniform LSTM weight initialization.
pub const LSTM_INIT_RANGE: f64 = 0.1;
pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingTables {
    /// `[V x d]`
    pub words: ParamId,
    /// `[(2·P_max + 2) x d_p/2]`
    pub head_pos: ParamId,
    /// `[(2·P_max + 2) x d_p/2]`
    pub tail_pos: ParamId,
}

impl EmbeddingTables {
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        config: &ModelConfig,
        vocab_size: usize,
        rng: &mut R,
    ) -> Self {
        let buckets = config.position_buckets();
        let half = config.pos_dim / 2;
        Self {
            words: store.add(
                "word_embeddings",
                ParamKind::Embedding,
                normal(vocab_size, config.word_dim, rng),
            ),
            head_pos: store.add(
                "head_position_embeddings",
                ParamKind::Embedding,
                normal(buckets, half, rng),
            ),
            tail_pos: store.add(
                "tail_position_embeddings",
                ParamKind::Embedding,
                normal(buckets, half, rng),
            ),
        }
    }

    /// Overwrites word rows with pretrained vectors where the token is known;
    /// other rows keep their random initialization. Returns the number copied.
    pub fn load_pretrained<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        vocab: &Vocab,
        pretrained: &PretrainedEmbeddings,
    ) -> Result<usize> {
        let table = &mut store.get_mut(self.words).value;
        if pretrained.dim != table.cols() {
            return Err(Error::Config(format!(
                "embedding file has dimension {}, model word dimension is {}",
                pretrained.dim,
                table.cols()
            )));
        }
        let mut copied = 0;
        for (id, token) in vocab.tokens().iter().enumerate().skip(2) {
            if let Some(v) = pretrained.vectors.get(token) {
                for (dst, &src) in table.row_mut(id).iter_mut().zip(v) {
                    *dst = T::of(src);
                }
                copied += 1;
            }
        }
        Ok(copied)
    }
}

fn normal<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let dist = Normal::new(0.0, EMBEDDING_INIT_STD).expect("valid normal");
    Matrix::from_fn(rows, cols, |_, _| T::of(dist.sample(rng)))
}

fn uniform<T: Real, R: Rng>(rows: usize, cols: usize, range: f64, rng: &mut R) -> Matrix<T> {
    let dist = Uniform::new_inclusive(-range, range).expect("valid range");
    Matrix::from_fn(rows, cols, |_, _| T::of(dist.sample(rng)))
}

/// One LSTM direction. Gate rows are stacked as `[input; forget; candidate; output]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    /// `[4u x (d + d_p)]`
    pub input: ParamId,
    /// `[4u x u]`
    pub recurrent: ParamId,
    /// `[4u x 1]`
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let input = store.add(
            format!("{prefix}_input_weights"),
            ParamKind::Weight,
            uniform(4 * hidden, input_dim, LSTM_INIT_RANGE, rng),
        );
        let recurrent = store.add(
            format!("{prefix}_recurrent_weights"),
            ParamKind::Weight,
            uniform(4 * hidden, hidden, LSTM_INIT_RANGE, rng),
        );
        let bias = Matrix::from_fn(4 * hidden, 1, |r, _| {
            if (hidden..2 * hidden).contains(&r) {
                T::of(FORGET_BIAS_INIT)
            } else {
                T::zero()
            }
        });
        let bias = store.add(format!("{prefix}_bias"), ParamKind::Bias, bias);
        Self {
            input,
            recurrent,
            bias,
            hidden,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn register<T: Real, R: Rng>(store: &mut ParamStore<T>, config: &ModelConfig, rng: &mut R) -> Self {
        Self {
            forward: LstmParams::register(store, "lstm_fwd", config.input_dim(), config.hidden, rng),
            backward: LstmParams::register(store, "lstm_bwd", config.input_dim(), config.hidden, rng),
        }
    }
}

/// `[(d + d_p) x T]`: column `t` is word ⊕ head-position ⊕ tail-position embedding.
pub fn embed_sequence<T: Real>(
    tape: &mut Tape<'_, T>,
    instance: &Instance,
    tables: &EmbeddingTables,
    config: &ModelConfig,
) -> Result<Var> {
    let (head, tail) = relative_positions(instance, config);
    let words = tape.gather(tables.words, &instance.token_ids)?;
    let head = tape.gather(tables.head_pos, &head)?;
    let tail = tape.gather(tables.tail_pos, &tail)?;
    tape.concat_rows(&[words, head, tail])
}

/// One LSTM step on an input column `x`.
pub fn lstm_step<T: Real>(
    tape: &mut Tape<'_, T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    params: &LstmParams,
) -> Result<(Var, Var)> {
    let w = tape.param(params.input);
    let b = tape.param(params.bias);
    let wx = tape.matmul(w, x)?;
    let projected = tape.add(wx, b)?;
    lstm_cell(tape, projected, Some((h_prev, c_prev)), params)
}

/// The cell given a pre-projected input `W_in·x + b`. A missing state is a zero state.
fn lstm_cell<T: Real>(
    tape: &mut Tape<'_, T>,
    projected: Var,
    state: Option<(Var, Var)>,
    params: &LstmParams,
) -> Result<(Var, Var)> {
    let u = params.hidden;
    let z = match state {
        Some((h_prev, _)) => {
            let w = tape.param(params.recurrent);
            let wh = tape.matmul(w, h_prev)?;
            tape.add(projected, wh)?
        }
        None => projected,
    };
    let i = tape.row_slice(z, 0, u)?;
    let f = tape.row_slice(z, u, u)?;
    let g = tape.row_slice(z, 2 * u, u)?;
    let o = tape.row_slice(z, 3 * u, u)?;
    let i = tape.sigmoid(i);
    let o = tape.sigmoid(o);
    let g = tape.tanh(g);
    let ig = tape.mul(i, g)?;
    let c = match state {
        Some((_, c_prev)) => {
            let f = tape.sigmoid(f);
            let fc = tape.mul(f, c_prev)?;
            tape.add(fc, ig)?
        }
        None => ig,
    };
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Runs both directions over `embedded` and returns `H` as `[2u x T]`.
///
/// With `mask_padding`, only the first `true_length` columns are encoded:
/// the backward direction starts at the last real token and padded
/// columns of `H` are zero. Without it every column is encoded.
pub fn bilstm_encode<T: Real>(
    tape: &mut Tape<'_, T>,
    embedded: Var,
    true_length: usize,
    params: &BiLstmParams,
    mask_padding: bool,
) -> Result<Var> {
    let total = tape.shape(embedded).1;
    if true_length > total {
        return Err(Error::Contract(format!(
            "true_length {true_length} exceeds {total} time steps"
        )));
    }
    let steps = if mask_padding { true_length } else { total };
    let u = params.forward.hidden;

    let run = |tape: &mut Tape<'_, T>,
               p: &LstmParams,
               order: &mut dyn Iterator<Item = usize>|
     -> Result<Vec<Option<Var>>> {
        let w = tape.param(p.input);
        let b = tape.param(p.bias);
        let wx = tape.matmul(w, embedded)?;
        let projected = tape.add_column(wx, b)?;
        let mut outputs = vec![None; total];
        let mut state = None;
        for t in order {
            let x = tape.column(projected, t)?;
            let (h, c) = lstm_cell(tape, x, state, p)?;
            outputs[t] = Some(h);
            state = Some((h, c));
        }
        Ok(outputs)
    };
    let fwd = run(tape, &params.forward, &mut (0..steps))?;
    let bwd = run(tape, &params.backward, &mut (0..steps).rev())?;

    let mut columns = Vec::with_capacity(total);
    let mut zero = None;
    for t in 0..total {
        let col = match (fwd[t], bwd[t]) {
            (Some(f), Some(b)) => tape.concat_rows(&[f, b])?,
            _ => *zero.get_or_insert_with(|| tape.constant(Matrix::zeros(2 * u, 1))),
        };
        columns.push(col);
    }
    tape.concat_cols(&columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_setup() -> (ModelConfig, ParamStore<f64>, EmbeddingTables, BiLstmParams) {
        let cfg = ModelConfig {
            word_dim: 4,
            pos_dim: 2,
            hidden: 3,
            max_distance: 3,
            ..ModelConfig::tiny()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let tables = EmbeddingTables::register(&mut store, &cfg, 10, &mut rng);
        let lstm = BiLstmParams::register(&mut store, &cfg, &mut rng);
        (cfg, store, tables, lstm)
    }

    fn instance(ids: &[usize], t: usize, head: usize, tail: usize) -> Instance {
        let mut token_ids = ids.to_vec();
        token_ids.resize(t, 0);
        Instance {
            token_ids,
            head_pos: head,
            tail_pos: tail,
            true_length: ids.len(),
            degenerate: head == tail,
        }
    }

    #[test]
    fn embed_shape_and_blank_columns() {
        let (cfg, store, tables, _) = tiny_setup();
        let mut tape = Tape::new(&store);
        let inst = instance(&[], 3, 0, 0);
        let e = embed_sequence(&mut tape, &inst, &tables, &cfg).unwrap();
        let m = tape.value(e);
        assert_eq!(m.shape(), (6, 3));
        let pad = cfg.position_buckets() - 1;
        let mut expected: Vec<f64> = store.value(tables.words).row(0).to_vec();
        expected.extend_from_slice(store.value(tables.head_pos).row(pad));
        expected.extend_from_slice(store.value(tables.tail_pos).row(pad));
        for t in 0..3 {
            assert_eq!(m.column(t), expected);
        }
    }

    #[test]
    fn head_position_only_changes_head_rows() {
        let (cfg, store, tables, _) = tiny_setup();
        let mut tape = Tape::new(&store);
        let a = embed_sequence(&mut tape, &instance(&[2, 3, 4], 3, 0, 2), &tables, &cfg).unwrap();
        let b = embed_sequence(&mut tape, &instance(&[2, 3, 4], 3, 1, 2), &tables, &cfg).unwrap();
        let (a, b) = (tape.value(a), tape.value(b));
        for r in 0..4 {
            assert_eq!(a.row(r), b.row(r));
        }
        assert_ne!(a.row(4), b.row(4));
        assert_eq!(a.row(5), b.row(5));
    }

    #[test]
    fn zero_weights_give_zero_hidden_state() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams {
            input: store.add("wi", ParamKind::Weight, Matrix::zeros(8, 3)),
            recurrent: store.add("wr", ParamKind::Weight, Matrix::zeros(8, 2)),
            bias: store.add("b", ParamKind::Bias, Matrix::zeros(8, 1)),
            hidden: 2,
        };
        let mut tape = Tape::new(&store);
        let x = tape.constant(Matrix::column_vector(&[0.7, -3.0, 2.0]));
        let h0 = tape.constant(Matrix::column_vector(&[0.4, -0.2]));
        let c0 = tape.constant(Matrix::column_vector(&[0.0, 0.0]));
        let (h, _) = lstm_step(&mut tape, x, h0, c0, &p).unwrap();
        assert_eq!(tape.value(h).max_abs(), 0.0);
    }

    #[test]
    fn large_forget_bias_retains_memory() {
        // bias on forget = 10, input gate = -10 (i ≈ 0): c ≈ c_prev
        let mut store = ParamStore::<f64>::new();
        let bias = Matrix::column_vector(&[-10.0, -10.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0]);
        let p = LstmParams {
            input: store.add("wi", ParamKind::Weight, Matrix::zeros(8, 3)),
            recurrent: store.add("wr", ParamKind::Weight, Matrix::zeros(8, 2)),
            bias: store.add("b", ParamKind::Bias, bias),
            hidden: 2,
        };
        let mut tape = Tape::new(&store);
        let x = tape.constant(Matrix::column_vector(&[1.0, 1.0, 1.0]));
        let h0 = tape.constant(Matrix::column_vector(&[0.0, 0.0]));
        let c_prev = Matrix::column_vector(&[0.8, -0.6]);
        let c0 = tape.constant(c_prev.clone());
        let (_, c) = lstm_step(&mut tape, x, h0, c0, &p).unwrap();
        for (a, b) in tape.value(c).data().iter().zip(c_prev.data()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn masked_encoding_zeroes_padding_columns() {
        let (cfg, store, tables, lstm) = tiny_setup();
        let mut tape = Tape::new(&store);
        let inst = instance(&[5], 4, 0, 0);
        let e = embed_sequence(&mut tape, &inst, &tables, &cfg).unwrap();
        let h = bilstm_encode(&mut tape, e, 1, &lstm, true).unwrap();
        let m = tape.value(h);
        assert_eq!(m.shape(), (6, 4));
        assert!(m.column(0).iter().any(|&x| x != 0.0));
        for t in 1..4 {
            assert!(m.column(t).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn unmasked_encoding_uses_every_column() {
        let (cfg, store, tables, lstm) = tiny_setup();
        let mut tape = Tape::new(&store);
        let inst = instance(&[5, 6], 4, 0, 1);
        let e = embed_sequence(&mut tape, &inst, &tables, &cfg).unwrap();
        let h = bilstm_encode(&mut tape, e, 2, &lstm, false).unwrap();
        let m = tape.value(h);
        for t in 0..4 {
            assert!(m.column(t).iter().any(|&x| x != 0.0));
        }
    }

    #[test]
    fn padding_amount_does_not_change_real_columns() {
        let (cfg, store, tables, lstm) = tiny_setup();
        let encode = |t: usize| {
            let mut tape = Tape::new(&store);
            let inst = instance(&[3, 4, 5], t, 0, 2);
            let e = embed_sequence(&mut tape, &inst, &tables, &cfg).unwrap();
            let h = bilstm_encode(&mut tape, e, 3, &lstm, true).unwrap();
            tape.value(h).clone()
        };
        let short = encode(4);
        let long = encode(9);
        for t in 0..3 {
            for (a, b) in short.column(t).iter().zip(long.column(t)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let (_, store, _, lstm) = tiny_setup();
        let b = store.value(lstm.forward.bias);
        let u = lstm.forward.hidden;
        for r in 0..4 * u {
            let expected = if (u..2 * u).contains(&r) { 1.0 } else { 0.0 };
            assert_eq!(b.get(r, 0), expected);
        }
    }
}

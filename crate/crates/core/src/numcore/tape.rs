//! Matrix-level reverse-mode differentiation.
//!
//! A [`Tape`] records every differentiable operation in execution order.
//! Parameter leaves refer into a borrowed [`ParamStore`], so several tapes
//! can run over the same parameters at once (one per bag, for instance).
//! [`Tape::backward`] replays the record in reverse and returns the
//! parameter gradients as a [`Gradients`] buffer; nothing on the store is
//! written.

use super::matrix::{softmax_in_place, Matrix, Real};
use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking a logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    /// Column `t` of the output is row `ids[t]` of the table.
    Gather {
        table: ParamId,
        ids: Vec<usize>,
    },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    /// `[m x n] + [m x 1]` broadcast over columns.
    AddColumn(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    RowSoftmax(Var),
    /// Columns `from..` replaced by a constant.
    FillColumns {
        input: Var,
        from: usize,
    },
    Column(Var, usize),
    RowSlice {
        input: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    MeanRows(Var),
    Sum(Var),
    SumSquares(Var),
    Frobenius(Var),
    CrossEntropy {
        probs: Var,
        label: usize,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Matrix<T>>,
}

pub struct Tape<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("only parameter leaves omit their value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, op: Op<T>, value: Matrix<T>) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Embedding lookup: returns `[dim x ids.len()]` whose column `t` is
    /// row `ids[t]` of the table parameter.
    pub fn gather(&mut self, table: ParamId, ids: &[usize]) -> Result<Var> {
        let tab = self.params.value(table);
        let (n_rows, dim) = tab.shape();
        let mut out = Matrix::zeros(dim, ids.len());
        for (t, &id) in ids.iter().enumerate() {
            if id >= n_rows {
                return Err(Error::Index {
                    what: "embedding table",
                    index: id,
                    len: n_rows,
                });
            }
            for (k, &x) in tab.row(id).iter().enumerate() {
                out.set(k, t, x);
            }
        }
        Ok(self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            out,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(Op::Transpose(a), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn add_column(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(col) != (m, 1) {
            return Err(Error::shape("add_column", (m, n), self.shape(col)));
        }
        let b = self.value(col);
        let mut out = self.value(a).clone();
        for r in 0..m {
            let bias = b.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|x| *x += bias);
        }
        Ok(self.push(Op::AddColumn(a, col), out))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).scale(s);
        self.push(Op::Scale(a, s), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::tanh);
        self.push(Op::Tanh(a), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(Op::Relu(a), out)
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let out = self.value(a).row_softmax();
        self.push(Op::RowSoftmax(a), out)
    }

    /// Replaces columns `from..` with `fill`; no gradient flows to them.
    pub fn fill_columns(&mut self, a: Var, from: usize, fill: T) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            for x in out.row_mut(r).iter_mut().skip(from) {
                *x = fill;
            }
        }
        self.push(Op::FillColumns { input: a, from }, out)
    }

    pub fn column(&mut self, a: Var, c: usize) -> Result<Var> {
        let src = self.value(a);
        if c >= src.cols() {
            return Err(Error::Index {
                what: "column",
                index: c,
                len: src.cols(),
            });
        }
        let out = Matrix::column_vector(&src.column(c));
        Ok(self.push(Op::Column(a, c), out))
    }

    pub fn row_slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(a);
        if start + len > src.rows() {
            return Err(Error::Index {
                what: "row slice end",
                index: start + len,
                len: src.rows(),
            });
        }
        let cols = src.cols();
        let data = src.data()[start * cols..(start + len) * cols].to_vec();
        let out = Matrix::from_vec(len, cols, data)?;
        Ok(self.push(Op::RowSlice { input: a, start }, out))
    }

    /// Stacks inputs vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(Error::shape("concat_rows", (rows, cols), m.shape()));
            }
            rows += m.rows();
            data.extend_from_slice(m.data());
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), out))
    }

    /// Places inputs side by side; all must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_cols needs at least one input".into()));
        }
        let rows = self.shape(parts[0]).0;
        let mut total_cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(Error::shape("concat_cols", (rows, total_cols), s));
            }
            total_cols += s.1;
        }
        let mut out = Matrix::zeros(rows, total_cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + m.cols()].copy_from_slice(m.row(r));
            }
            offset += m.cols();
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out))
    }

    /// Row-major reinterpretation of the same data.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshape(rows, cols)?;
        Ok(self.push(Op::Reshape(a), out))
    }

    /// `[r x n] -> [1 x n]`, the mean of the rows.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (r, n) = src.shape();
        let inv = T::one() / T::of(r as f64);
        let out = Matrix::from_fn(1, n, |_, c| (0..r).map(|i| src.get(i, c)).sum::<T>() * inv);
        self.push(Op::MeanRows(a), out)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        self.push(Op::Sum(a), out)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum_squares());
        self.push(Op::SumSquares(a), out)
    }

    /// `‖a·aᵀ − I‖²_F` as a `1 x 1` node.
    pub fn frobenius_penalty(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).frobenius_penalty());
        self.push(Op::Frobenius(a), out)
    }

    /// `−ln max(p[label], 1e-12)` for a probability vector stored as a row or column.
    pub fn cross_entropy(&mut self, probs: Var, label: usize) -> Result<Var> {
        let p = self.value(probs);
        if p.rows() != 1 && p.cols() != 1 {
            return Err(Error::Contract(format!(
                "cross_entropy expects a vector, got {:?}",
                p.shape()
            )));
        }
        if label >= p.len() {
            return Err(Error::Index {
                what: "class label",
                index: label,
                len: p.len(),
            });
        }
        let out = Matrix::scalar(-(p.data()[label].max(T::of(LOG_CLAMP))).ln());
        Ok(self.push(Op::CrossEntropy { probs, label }, out))
    }

    /// Sum of `1 x 1` nodes.
    pub fn add_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Backpropagates from a `1 x 1` node; returns the parameter gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(T::one()));
        let mut out = Gradients::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = || node.value.as_ref().expect("non-leaf value");
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.add_dense(*id, &g),
                Op::Gather { table, ids } => {
                    let shape = self.params.value(*table).shape();
                    for (t, &id) in ids.iter().enumerate() {
                        out.add_row(*table, shape, id, &g.column(t));
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(self.value(*b))?;
                    let gb = self.value(*a).matmul_tn(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddColumn(a, col) => {
                    let gb = Matrix::from_fn(g.rows(), 1, |r, _| g.row(r).iter().copied().sum());
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *col, gb);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), |x, y| x * y)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s)),
                Op::Tanh(a) => {
                    let ga = g.zip_map(y(), |gi, yi| gi * (T::one() - yi * yi))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(y(), |gi, yi| gi * yi * (T::one() - yi))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    // Subgradient 0 at exactly x = 0.
                    let ga = g.zip_map(
                        self.value(*a),
                        |gi, xi| {
                            if xi > T::zero() {
                                gi
                            } else {
                                T::zero()
                            }
                        },
                    )?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSoftmax(a) => {
                    let y = y();
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for (o, (&p, &q)) in ga.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = p * (q - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::FillColumns { input, from } => {
                    let mut ga = g;
                    for r in 0..ga.rows() {
                        for x in ga.row_mut(r).iter_mut().skip(*from) {
                            *x = T::zero();
                        }
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::Column(a, c) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        ga.set(r, *c, g.get(r, 0));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSlice { input, start } => {
                    let (rows, cols) = self.shape(*input);
                    let mut ga = Matrix::zeros(rows, cols);
                    ga.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *input, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let slice = g.data()[offset..offset + r * c].to_vec();
                        offset += r * c;
                        accumulate(&mut grads, p, Matrix::from_vec(r, c, slice)?);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let gp = Matrix::from_fn(r, c, |i, j| g.get(i, offset + j));
                        offset += c;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, g.reshape(r, c)?);
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.shape(*a);
                    let inv = T::one() / T::of(r as f64);
                    accumulate(&mut grads, *a, Matrix::from_fn(r, c, |_, j| g.get(0, j) * inv));
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.item()));
                }
                Op::SumSquares(a) => {
                    let two_g = T::of(2.0) * g.item();
                    accumulate(&mut grads, *a, self.value(*a).scale(two_g));
                }
                Op::Frobenius(a) => {
                    // d‖AAᵀ − I‖² / dA = 4 (AAᵀ − I) A
                    let av = self.value(*a);
                    let mut d = av.matmul_nt(av)?;
                    for i in 0..d.rows() {
                        let v = d.get(i, i) - T::one();
                        d.set(i, i, v);
                    }
                    let ga = d.matmul(av)?.scale(T::of(4.0) * g.item());
                    accumulate(&mut grads, *a, ga);
                }
                Op::CrossEntropy { probs, label } => {
                    let p = self.value(*probs);
                    let mut ga = Matrix::zeros(p.rows(), p.cols());
                    let pl = p.data()[*label];
                    if pl > T::of(LOG_CLAMP) {
                        ga.data_mut()[*label] = -g.item() / pl;
                    }
                    accumulate(&mut grads, *probs, ga);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax of a single slice; exposed for inference paths that skip the tape.
pub fn softmax<T: Real>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    softmax_in_place(&mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::params::ParamKind;

    #[test]
    fn sum_gives_all_ones_gradient() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add(
            "w",
            ParamKind::Weight,
            Matrix::from_fn(2, 3, |r, c| (r + c) as f64),
        );
        let mut tape = Tape::new(&store);
        let v = tape.param(w);
        let loss = tape.sum(v);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.dense(w, (2, 3)), Matrix::filled(2, 3, 1.0));
    }

    #[test]
    fn frobenius_gradient_vanishes_at_identity() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", ParamKind::Weight, Matrix::identity(3));
        let mut tape = Tape::new(&store);
        let v = tape.param(w);
        let loss = tape.frobenius_penalty(v);
        assert_eq!(tape.value(loss).item(), 0.0);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.dense(w, (3, 3)).max_abs(), 0.0);
    }

    #[test]
    fn backward_on_non_scalar_is_contract_error() {
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let c = tape.constant(Matrix::zeros(2, 2));
        assert!(matches!(tape.backward(c), Err(Error::Contract(_))));
    }

    #[test]
    fn running_backward_twice_doubles_accumulated_gradients() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add(
            "w",
            ParamKind::Weight,
            Matrix::from_rows(&[[0.3, -0.7], [1.1, 0.2]]),
        );
        let grads = {
            let mut tape = Tape::new(&store);
            let v = tape.param(w);
            let t = tape.tanh(v);
            let p = tape.frobenius_penalty(t);
            let q = tape.sum_squares(v);
            let loss = tape.add(p, q).unwrap();
            let g1 = tape.backward(loss).unwrap();
            let g2 = tape.backward(loss).unwrap();
            (g1, g2)
        };
        store.accumulate(&grads.0);
        let once = store.get(w).gradient.clone();
        store.accumulate(&grads.1);
        assert_eq!(store.get(w).gradient, once.scale(2.0));
    }

    #[test]
    fn cross_entropy_examples() {
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let p = tape.constant(Matrix::from_rows(&[[1.0, 0.0]]));
        let l = tape.cross_entropy(p, 0).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);

        let p = tape.constant(Matrix::from_rows(&[[0.5, 0.5]]));
        let l = tape.cross_entropy(p, 1).unwrap();
        assert!((tape.value(l).item() - 2f64.ln()).abs() < 1e-15);

        let p = tape.constant(Matrix::from_rows(&[[0.0, 1.0]]));
        let l = tape.cross_entropy(p, 0).unwrap();
        assert_eq!(tape.value(l).item(), -(1e-12f64).ln());

        assert!(matches!(tape.cross_entropy(p, 2), Err(Error::Index { .. })));
    }

    #[test]
    fn activation_examples() {
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new(&store);
        let z = tape.constant(Matrix::from_rows(&[[0.0]]));
        let t = tape.tanh(z);
        assert_eq!(tape.value(t).item(), 0.0);
        let one = tape.constant(Matrix::from_rows(&[[1.0]]));
        let t = tape.tanh(one);
        assert!((tape.value(t).item() - 0.761_594_155_955_764_9).abs() < 1e-15);
        let x = tape.constant(Matrix::from_rows(&[[-1.0, 2.0]]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r), &Matrix::from_rows(&[[0.0, 2.0]]));
    }

    #[test]
    fn relu_gradient_is_zero_at_zero() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", ParamKind::Weight, Matrix::from_rows(&[[0.0, 1.0, -1.0]]));
        let mut tape = Tape::new(&store);
        let v = tape.param(w);
        let r = tape.relu(v);
        let loss = tape.sum(r);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.dense(w, (1, 3)), Matrix::from_rows(&[[0.0, 1.0, 0.0]]));
    }

    #[test]
    fn gather_rejects_out_of_range_ids() {
        let mut store = ParamStore::<f64>::new();
        let e = store.add("e", ParamKind::Embedding, Matrix::zeros(3, 2));
        let mut tape = Tape::new(&store);
        assert!(matches!(tape.gather(e, &[0, 3]), Err(Error::Index { .. })));
    }
}

//! Trainable parameters and the gradient buffers a backward pass produces.

use std::collections::BTreeMap;

use super::matrix::{Matrix, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Role of a parameter. Only `Weight` tensors are L2-regularized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Embedding,
}

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Matrix<T>,
    pub gradient: Matrix<T>,
    /// First-moment estimate.
    pub moment1: Matrix<T>,
    /// Second-moment estimate.
    pub moment2: Matrix<T>,
    pub step: u64,
}

impl<T: Real> Parameter<T> {
    fn new(name: String, kind: ParamKind, value: Matrix<T>) -> Self {
        let (r, c) = value.shape();
        Self {
            name,
            kind,
            value,
            gradient: Matrix::zeros(r, c),
            moment1: Matrix::zeros(r, c),
            moment2: Matrix::zeros(r, c),
            step: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Matrix<T>) -> ParamId {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name `{name}`"
        );
        self.params.push(Parameter::new(name, kind, value));
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix<T> {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.gradient.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Adds a gradient buffer into the parameters' gradients.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (id, g) in grads.iter() {
            g.add_into(&mut self.params[id.0].gradient);
        }
    }

    /// Total number of scalar coordinates.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Gradient for one parameter: dense, or a set of touched rows (embedding lookups).
#[derive(Clone, Debug)]
pub enum Grad<T> {
    Dense(Matrix<T>),
    Rows {
        shape: (usize, usize),
        rows: BTreeMap<usize, Vec<T>>,
    },
}

impl<T: Real> Grad<T> {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Grad::Dense(m) => m.shape(),
            Grad::Rows { shape, .. } => *shape,
        }
    }

    pub fn add_into(&self, target: &mut Matrix<T>) {
        match self {
            Grad::Dense(m) => target.add_assign(m),
            Grad::Rows { rows, .. } => {
                for (&r, values) in rows {
                    for (t, &v) in target.row_mut(r).iter_mut().zip(values) {
                        *t += v;
                    }
                }
            }
        }
    }

    pub fn to_dense(&self) -> Matrix<T> {
        match self {
            Grad::Dense(m) => m.clone(),
            Grad::Rows { shape, .. } => {
                let mut m = Matrix::zeros(shape.0, shape.1);
                self.add_into(&mut m);
                m
            }
        }
    }

    fn merge(&mut self, other: &Grad<T>) {
        match (&mut *self, other) {
            (Grad::Dense(m), g) => g.add_into(m),
            (Grad::Rows { rows, .. }, Grad::Rows { rows: other, .. }) => {
                for (&r, values) in other {
                    let slot = rows.entry(r).or_insert_with(|| vec![T::zero(); values.len()]);
                    for (s, &v) in slot.iter_mut().zip(values) {
                        *s += v;
                    }
                }
            }
            (this @ Grad::Rows { .. }, Grad::Dense(m)) => {
                let mut dense = m.clone();
                this.add_into(&mut dense);
                *this = Grad::Dense(dense);
            }
        }
    }
}

/// Sparse map from parameter to gradient, produced by one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients<T> {
    grads: BTreeMap<ParamId, Grad<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn new() -> Self {
        Self {
            grads: BTreeMap::new(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Grad<T>> {
        self.grads.get(&id)
    }

    /// Dense gradient for `id`, zeros of `shape` if the parameter was not reached.
    pub fn dense(&self, id: ParamId, shape: (usize, usize)) -> Matrix<T> {
        self.grads
            .get(&id)
            .map_or_else(|| Matrix::zeros(shape.0, shape.1), Grad::to_dense)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Grad<T>)> {
        self.grads.iter().map(|(&k, v)| (k, v))
    }

    pub fn add_dense(&mut self, id: ParamId, g: &Matrix<T>) {
        match self.grads.get_mut(&id) {
            Some(existing) => existing.merge(&Grad::Dense(g.clone())),
            None => {
                self.grads.insert(id, Grad::Dense(g.clone()));
            }
        }
    }

    pub fn add_row(&mut self, id: ParamId, shape: (usize, usize), row: usize, values: &[T]) {
        let entry = self.grads.entry(id).or_insert_with(|| Grad::Rows {
            shape,
            rows: BTreeMap::new(),
        });
        match entry {
            Grad::Dense(m) => {
                for (t, &v) in m.row_mut(row).iter_mut().zip(values) {
                    *t += v;
                }
            }
            Grad::Rows { rows, .. } => {
                let slot = rows.entry(row).or_insert_with(|| vec![T::zero(); values.len()]);
                for (s, &v) in slot.iter_mut().zip(values) {
                    *s += v;
                }
            }
        }
    }

    /// Adds every gradient of `other` into `self`.
    pub fn merge(&mut self, other: &Gradients<T>) {
        for (id, g) in other.iter() {
            match self.grads.get_mut(&id) {
                Some(existing) => existing.merge(g),
                None => {
                    self.grads.insert(id, g.clone());
                }
            }
        }
    }
}

//! Central finite-difference gradient checking.

use super::matrix::Matrix;
use super::params::{Gradients, ParamId, ParamStore};
use crate::error::Result;

/// Largest disagreement found by [`finite_diff_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat coordinate where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares analytic gradients with `(f(θ+h) − f(θ−h)) / 2h` for every
/// coordinate of every parameter in `store`.
///
/// `f` returns the loss value and its analytic gradients. The store is
/// restored to its original values before returning.
pub fn finite_diff_check<F>(store: &mut ParamStore<f64>, h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore<f64>) -> Result<(f64, Gradients<f64>)>,
{
    let ids: Vec<ParamId> = store.ids().collect();
    finite_diff_check_subset(store, &ids, h, f)
}

/// As [`finite_diff_check`], restricted to `ids`.
pub fn finite_diff_check_subset<F>(
    store: &mut ParamStore<f64>,
    ids: &[ParamId],
    h: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore<f64>) -> Result<(f64, Gradients<f64>)>,
{
    let (_, grads) = f(store)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for &id in ids {
        let shape = store.value(id).shape();
        let analytic: Matrix<f64> = grads.dense(id, shape);
        for k in 0..analytic.len() {
            let original = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = original + h;
            let plus = f(store)?.0;
            store.get_mut(id).value.data_mut()[k] = original - h;
            let minus = f(store)?.0;
            store.get_mut(id).value.data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic.data()[k], numeric);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), k));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::params::ParamKind;
    use crate::numcore::tape::Tape;

    fn quadratic_form(store: &ParamStore<f64>, q: &Matrix<f64>) -> Result<(f64, Gradients<f64>)> {
        // f(x) = xᵀ Q x for a column vector x
        let x = store.find("x").unwrap();
        let mut tape = Tape::new(store);
        let xv = tape.param(x);
        let qv = tape.constant(q.clone());
        let qx = tape.matmul(qv, xv)?;
        let xt = tape.transpose(xv);
        let loss = tape.matmul(xt, qx)?;
        let value = tape.value(loss).item();
        Ok((value, tape.backward(loss)?))
    }

    #[test]
    fn quadratic_form_matches_analytic_gradient() {
        let mut store = ParamStore::new();
        store.add("x", ParamKind::Weight, Matrix::column_vector(&[0.3, -0.8, 0.55]));
        let q = Matrix::from_rows(&[[2.0, 0.5, -0.1], [0.3, 1.0, 0.0], [-0.4, 0.2, 3.0]]);
        let report = finite_diff_check(&mut store, 1e-6, |s| quadratic_form(s, &q)).unwrap();
        assert!(report.max_rel_error < 1e-7, "{report:?}");
        assert_eq!(report.coordinates, 3);
        // Closed form: (Q + Qᵀ) x
        let x = store.value(store.find("x").unwrap()).clone();
        let expected = q
            .zip_map(&q.transpose(), |a, b| a + b)
            .unwrap()
            .matmul(&x)
            .unwrap();
        let (_, g) = quadratic_form(&store, &q).unwrap();
        let got = g.dense(store.find("x").unwrap(), (3, 1));
        for (a, b) in got.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut store = ParamStore::new();
        store.add("x", ParamKind::Weight, Matrix::filled(2, 2, 0.5));
        let report = finite_diff_check(&mut store, 1e-6, |s| {
            let mut tape = Tape::new(s);
            let c = tape.constant(Matrix::scalar(4.2));
            Ok((4.2, tape.backward(c)?))
        })
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn sign_flipped_gradient_is_detected() {
        let mut store = ParamStore::new();
        store.add("x", ParamKind::Weight, Matrix::column_vector(&[0.3, -0.8, 0.55]));
        let q = Matrix::identity(3);
        let report = finite_diff_check(&mut store, 1e-6, |s| {
            let (v, g) = quadratic_form(s, &q)?;
            let mut flipped = Gradients::new();
            for (id, grad) in g.iter() {
                flipped.add_dense(id, &grad.to_dense().scale(-1.0));
            }
            Ok((v, flipped))
        })
        .unwrap();
        assert!(!report.passes(1e-5));
        assert!((report.max_rel_error - 1.0).abs() < 1e-6);
    }

    #[test]
    fn store_is_restored_after_check() {
        let mut store = ParamStore::new();
        store.add("x", ParamKind::Weight, Matrix::column_vector(&[0.1, 0.2]));
        let before = store.value(ParamId(0)).clone();
        finite_diff_check(&mut store, 1e-3, |s| quadratic_form(s, &Matrix::identity(2))).unwrap();
        assert_eq!(store.value(ParamId(0)), &before);
    }
}

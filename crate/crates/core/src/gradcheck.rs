//! Finite-difference verification of every backward rule and of the full objective.
//!
//! Each case builds a small graph over random parameters in `[-1, 1]`,
//! reduces its output to a scalar with fixed random weights and compares
//! the tape gradient with 64-bit central differences.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::data::{Bag, Instance};
use crate::encoder::{bilstm_encode, lstm_step, BiLstmParams, LstmParams};
use crate::error::Result;
use crate::model::Model;
use crate::numcore::{finite_diff_check, GradCheckReport, Matrix, ParamId, ParamKind, ParamStore, Tape, Var};
use crate::sent_attention::{
    average_attention, classify, selection_representation, sentence_attention_matrix, SentAttentionParams,
};
use crate::training::batch_objective;
use crate::word_attention::{
    attention_penalty, flatten_project, weighted_sentence_matrix, word_attention_matrix, WordAttentionParams,
};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub name: &'static str,
    pub report: GradCheckReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub cases: Vec<CaseResult>,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.report.passes(self.tolerance))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.cases
            .iter()
            .map(|c| c.report.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn case(&self, name: &str) -> Option<&CaseResult> {
        self.cases.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>8} {:>12}  status", "case", "coords", "max_rel_err")?;
        for c in &self.cases {
            let ok = if c.report.passes(self.tolerance) {
                "ok"
            } else {
                "FAIL"
            };
            write!(
                f,
                "{:<24} {:>8} {:>12.3e}  {ok}",
                c.name, c.report.coordinates, c.report.max_rel_error
            )?;
            if let (false, Some((p, k))) = (c.report.passes(self.tolerance), &c.report.worst) {
                write!(f, " (worst at {p}[{k}])")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "overall max relative error {:.3e} (tolerance {:e}): {}",
            self.max_rel_error(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// Fixed reduction weights for an output of the given shape.
fn readout(shape: (usize, usize)) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ (shape.0 * 131 + shape.1) as u64);
    uniform(shape.0, shape.1, &mut rng)
}

/// `Σ out ⊙ R` for the fixed readout `R`.
fn reduce(tape: &mut Tape<'_, f64>, out: Var) -> Result<Var> {
    let w = tape.constant(readout(tape.shape(out)));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

fn run_case<F>(name: &'static str, store: &mut ParamStore<f64>, build: F) -> Result<CaseResult>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let report = finite_diff_check(store, STEP, |s| {
        let mut tape = Tape::new(s);
        let out = build(&mut tape)?;
        let loss = if tape.shape(out) == (1, 1) {
            out
        } else {
            reduce(&mut tape, out)?
        };
        Ok((tape.value(loss).item(), tape.backward(loss)?))
    })?;
    Ok(CaseResult { name, report })
}

struct Fixture {
    store: ParamStore<f64>,
    rng: ChaCha8Rng,
}

impl Fixture {
    fn new(seed: u64) -> Self {
        Self {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn param(&mut self, rows: usize, cols: usize) -> ParamId {
        let name = format!("p{}", self.store.len());
        let value = uniform(rows, cols, &mut self.rng);
        self.store.add(name, ParamKind::Weight, value)
    }

    /// Overwrites every parameter with uniform `[-1, 1]` entries.
    fn randomize(&mut self) {
        let rng = &mut self.rng;
        for p in self.store.iter_mut() {
            let (r, c) = p.value.shape();
            p.value = uniform(r, c, rng);
        }
    }
}

type Unary = fn(&mut Tape<'_, f64>, Var) -> Result<Var>;

fn unary_cases() -> Vec<(&'static str, (usize, usize), Unary)> {
    vec![
        ("transpose", (3, 5), |t, a| Ok(t.transpose(a))),
        ("scale", (4, 3), |t, a| Ok(t.scale(a, -1.7))),
        ("tanh", (4, 4), |t, a| Ok(t.tanh(a))),
        ("sigmoid", (4, 4), |t, a| Ok(t.sigmoid(a))),
        ("relu", (5, 4), |t, a| Ok(t.relu(a))),
        ("row_softmax", (3, 6), |t, a| Ok(t.row_softmax(a))),
        ("masked_softmax", (3, 6), |t, a| {
            let filled = t.fill_columns(a, 4, -1e9);
            Ok(t.row_softmax(filled))
        }),
        ("column", (4, 5), |t, a| t.column(a, 3)),
        ("row_slice", (6, 3), |t, a| t.row_slice(a, 2, 3)),
        ("reshape", (4, 3), |t, a| t.reshape(a, 2, 6)),
        ("mean_rows", (5, 4), |t, a| Ok(t.mean_rows(a))),
        ("sum", (3, 4), |t, a| Ok(t.sum(a))),
        ("sum_squares", (3, 4), |t, a| Ok(t.sum_squares(a))),
        ("frobenius_penalty", (2, 5), |t, a| Ok(t.frobenius_penalty(a))),
        ("cross_entropy", (1, 4), |t, a| {
            let p = t.row_softmax(a);
            t.cross_entropy(p, 2)
        }),
    ]
}

fn op_cases(seed: u64, out: &mut Vec<CaseResult>) -> Result<()> {
    for (i, (name, (r, c), op)) in unary_cases().into_iter().enumerate() {
        let mut fx = Fixture::new(seed + i as u64);
        let a = fx.param(r, c);
        out.push(run_case(name, &mut fx.store, |t| {
            let a = t.param(a);
            op(t, a)
        })?);
    }

    let mut fx = Fixture::new(seed + 100);
    let (a, b) = (fx.param(3, 4), fx.param(4, 2));
    out.push(run_case("matmul", &mut fx.store, |t| {
        let (a, b) = (t.param(a), t.param(b));
        t.matmul(a, b)
    })?);

    let mut fx = Fixture::new(seed + 101);
    let (a, b) = (fx.param(3, 4), fx.param(3, 4));
    out.push(run_case("add", &mut fx.store, |t| {
        let (a, b) = (t.param(a), t.param(b));
        t.add(a, b)
    })?);
    out.push(run_case("mul", &mut fx.store, |t| {
        let (a, b) = (t.param(a), t.param(b));
        t.mul(a, b)
    })?);

    let mut fx = Fixture::new(seed + 102);
    let (a, b) = (fx.param(4, 3), fx.param(4, 1));
    out.push(run_case("add_column", &mut fx.store, |t| {
        let (a, b) = (t.param(a), t.param(b));
        t.add_column(a, b)
    })?);

    let mut fx = Fixture::new(seed + 103);
    let (a, b) = (fx.param(2, 3), fx.param(4, 3));
    out.push(run_case("concat_rows", &mut fx.store, |t| {
        let (a, b) = (t.param(a), t.param(b));
        t.concat_rows(&[a, b, a])
    })?);
    let (c, d) = (fx.param(3, 2), fx.param(3, 1));
    out.push(run_case("concat_cols", &mut fx.store, |t| {
        let (c, d) = (t.param(c), t.param(d));
        t.concat_cols(&[c, d, c])
    })?);

    let mut fx = Fixture::new(seed + 104);
    let table = fx.param(6, 3);
    out.push(run_case("gather", &mut fx.store, |t| {
        t.gather(table, &[0, 2, 2, 5, 1])
    })?);
    Ok(())
}

fn layer_cases(seed: u64, out: &mut Vec<CaseResult>) -> Result<()> {
    let cfg = ModelConfig::tiny();
    let t_steps = cfg.time_steps;

    // three chained steps of one LSTM direction
    let mut fx = Fixture::new(seed + 200);
    let lstm = LstmParams::register(&mut fx.store, "lstm", 3, 2, &mut ChaCha8Rng::seed_from_u64(seed));
    let xs = [fx.param(3, 1), fx.param(3, 1), fx.param(3, 1)];
    let (h0, c0) = (fx.param(2, 1), fx.param(2, 1));
    fx.randomize();
    out.push(run_case("lstm_step_x3", &mut fx.store, |t| {
        let mut h = t.param(h0);
        let mut c = t.param(c0);
        for &x in &xs {
            let x = t.param(x);
            (h, c) = lstm_step(t, x, h, c, &lstm)?;
        }
        t.concat_rows(&[h, c])
    })?);

    for (name, mask) in [("bilstm_masked", true), ("bilstm_unmasked", false)] {
        let mut fx = Fixture::new(seed + 201);
        let lstm = BiLstmParams::register(&mut fx.store, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let emb = fx.param(cfg.input_dim(), t_steps);
        fx.randomize();
        out.push(run_case(name, &mut fx.store, |t| {
            let e = t.param(emb);
            bilstm_encode(t, e, 3, &lstm, mask)
        })?);
    }

    let mut fx = Fixture::new(seed + 202);
    let word = WordAttentionParams::register(&mut fx.store, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
    let h = fx.param(2 * cfg.hidden, t_steps);
    fx.randomize();
    out.push(run_case("word_attention", &mut fx.store, |t| {
        let h = t.param(h);
        let a = word_attention_matrix(t, h, &word, Some(4))?;
        let m = weighted_sentence_matrix(t, a, h)?;
        let rep = flatten_project(t, m, &word)?;
        let pen = attention_penalty(t, a);
        let rep = reduce(t, rep)?;
        t.add(rep, pen)
    })?);

    let mut fx = Fixture::new(seed + 203);
    let sent = SentAttentionParams::register(
        &mut fx.store,
        &cfg,
        cfg.num_classes,
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    let o = fx.param(cfg.mlp_size, 3);
    fx.randomize();
    out.push(run_case("sentence_attention", &mut fx.store, |t| {
        let o = t.param(o);
        let a = sentence_attention_matrix(t, o, &sent)?;
        let a_bar = average_attention(t, a);
        let m = selection_representation(t, a_bar, o)?;
        let p = classify(t, m, &sent)?;
        let ce = t.cross_entropy(p, 1)?;
        let pen = t.frobenius_penalty(a);
        t.add(ce, pen)
    })?);
    Ok(())
}

/// A bag of three instances over an 8-token vocabulary, one of them padded.
pub fn tiny_bag(config: &ModelConfig, relation_id: usize) -> Bag {
    let t = config.time_steps;
    let inst = |ids: &[usize], head: usize, tail: usize| {
        let mut token_ids = ids.to_vec();
        token_ids.resize(t, 0);
        Instance {
            token_ids,
            head_pos: head,
            tail_pos: tail,
            true_length: ids.len().min(t),
            degenerate: head == tail,
        }
    };
    Bag {
        bag_id: "tiny".into(),
        head: "e1".into(),
        tail: "e2".into(),
        relation_id,
        instances: vec![
            inst(&[2, 3, 4, 5, 6], 0, 3),
            inst(&[7, 2, 5], 1, 2),
            inst(&[3, 6, 4, 7], 3, 0),
        ],
    }
}

fn model_case(name: &'static str, config: ModelConfig, seed: u64) -> Result<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut template = Model::<f64>::new(&config, 8, &mut rng)?;
    for p in template.store.iter_mut() {
        let (r, c) = p.value.shape();
        p.value = uniform(r, c, &mut rng);
    }
    let bag = tiny_bag(&config, 2);
    let mut store = template.store.clone();
    let report = finite_diff_check(&mut store, STEP, |s| {
        let model = Model {
            store: s.clone(),
            ..template.clone()
        };
        let (loss, grads) = batch_objective(&model, &[&bag], true, None)?;
        Ok((loss.total, grads))
    })?;
    Ok(CaseResult { name, report })
}

/// Runs every case on the tiny configuration.
pub fn run_suite(seed: u64) -> Result<SuiteReport> {
    let mut cases = Vec::new();
    op_cases(seed, &mut cases)?;
    layer_cases(seed, &mut cases)?;
    let cfg = ModelConfig {
        l2_coef: 1e-2,
        ..ModelConfig::tiny()
    };
    cases.push(model_case("mlssa2_total_loss", cfg.clone(), seed + 300)?);
    cases.push(model_case(
        "mlssa1_total_loss",
        ModelConfig {
            attn_rows_l2: 1,
            ..cfg.clone()
        },
        seed + 300,
    )?);
    cases.push(model_case(
        "mlssa2_l2_attn_penalty",
        ModelConfig {
            penalize_l2_attention: true,
            ..cfg
        },
        seed + 300,
    )?);
    Ok(SuiteReport {
        cases,
        tolerance: TOLERANCE,
    })
}

//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

mod common;

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use mlssa::data::{contains_pattern, generate_synthetic, SynthSpec};
use mlssa::evaluation::{macro_f1, p_at_n, pr_curve, score_test_set, GoldFacts, PredictionRecord, Selection};
use mlssa::gradcheck::{run_suite, TOLERANCE};
use mlssa::numcore::{Matrix, ParamStore, Tape};
use mlssa::training::{epoch_means, Trainer};
use mlssa::word_attention::{attention_penalty, word_attention_matrix, WordAttentionParams};
use mlssa::{Model, ModelConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracle;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let report = run_suite(0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst = report
        .cases
        .iter()
        .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
        .unwrap();
    let mlssa2 = report
        .case("mlssa2_total_loss")
        .ok_or("no mlssa2_total_loss case")?;
    let detail = format!(
        "{} cases, max rel err {:.2e} ({}), MLSSA-2 loss {:.2e}, {:.2}s",
        report.cases.len(),
        worst.report.max_rel_error,
        worst.name,
        mlssa2.report.max_rel_error,
        secs
    );
    ensure(
        report.passed() && mlssa2.report.max_rel_error < TOLERANCE && secs < 60.0,
        detail,
    )
}

fn gradcheck_seed_statistic() -> String {
    let seeds = 20;
    let passed = (0..seeds)
        .filter(|&s| run_suite(s).map(|r| r.passed()).unwrap_or(false))
        .count();
    format!("{passed}/{seeds} suite seeds pass every case at {TOLERANCE:.0e}")
}

fn attention_invariants() -> Outcome {
    let cfg = ModelConfig {
        time_steps: 8,
        ..ModelConfig::tiny()
    };
    let (mut worst_row, mut worst_mass) = (0.0f64, 0.0f64);
    for draw in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        // alternate between the model's own init and wide uniform draws
        let model = if draw % 2 == 0 {
            Model::<f64>::new(&cfg, 10, &mut rng).map_err(|e| e.to_string())?
        } else {
            common::random_model(&cfg, 10, &mut rng)
        };
        let j = rng.random_range(1..=5);
        let bag = common::random_bag(&cfg, 10, j, "b", &mut rng);
        let out = model
            .run_bag(&bag.instances.iter().collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        for (inst, a) in bag.instances.iter().zip(&out.word_attention) {
            for r in 0..a.rows() {
                let row = a.row(r);
                worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
                worst_mass = worst_mass.max(row[inst.true_length..].iter().sum());
            }
        }
        for r in 0..out.a_l2.rows() {
            worst_row = worst_row.max((out.a_l2.row(r).iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure(
        worst_row < 1e-6 && worst_mass < 1e-6,
        format!(
            "1000 draws, worst |row sum - 1| {worst_row:.1e}, worst padded mass {:.1e}",
            worst_mass.abs()
        ),
    )
}

fn penalty_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_ortho = 0.0f64;
    for _ in 0..100 {
        let r = rng.random_range(1..=6);
        let n = rng.random_range(r..=8);
        // orthonormal rows from a Gram-Schmidt pass
        let mut rows: Vec<Vec<f64>> = Vec::new();
        while rows.len() < r {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for u in &rows {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-3 {
                rows.push(v.iter().map(|x| x / norm).collect());
            }
        }
        worst_ortho = worst_ortho.max(Matrix::from_rows(&rows).frobenius_penalty());
    }

    // gradient descent on the penalty alone through the word attention (r = 2, n = 6)
    let cfg = ModelConfig {
        time_steps: 6,
        ..ModelConfig::tiny()
    };
    let (inits, lr, budget) = (20, 2.0, 500);
    let mut worst_steps = 0;
    let mut worst_final = 0.0f64;
    for seed in 0..inits {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let params = WordAttentionParams::register(&mut store, &cfg, &mut rng);
        let h = common::uniform(2 * cfg.hidden, cfg.time_steps, &mut rng);
        let mut reached = None;
        let mut last = f64::INFINITY;
        for step in 0..=budget {
            let (p, grads) = {
                let mut t = Tape::new(&store);
                let hv = t.constant(h.clone());
                let a = word_attention_matrix(&mut t, hv, &params, None).map_err(|e| e.to_string())?;
                let pen = attention_penalty(&mut t, a);
                (t.value(pen).item(), t.backward(pen).map_err(|e| e.to_string())?)
            };
            last = p;
            if p < 1e-3 {
                reached = Some(step);
                break;
            }
            for id in [params.ws1, params.ws2] {
                let shape = store.value(id).shape();
                let g = grads.dense(id, shape);
                let w = &mut store.get_mut(id).value;
                *w = w.zip_map(&g, |x, d| x - lr * d).unwrap();
            }
        }
        worst_final = worst_final.max(last);
        worst_steps = worst_steps.max(reached.unwrap_or(usize::MAX));
    }
    let steps = if worst_steps == usize::MAX {
        "not reached".into()
    } else {
        worst_steps.to_string()
    };
    ensure(
        worst_ortho <= 1e-12 && worst_steps <= budget,
        format!(
            "orthonormal rows max penalty {worst_ortho:.1e}; descent from {inits} inits below 1e-3 by step {steps} (worst final {worst_final:.1e})"
        ),
    )
}

fn degenerate_bag_law() -> Outcome {
    let cfg = ModelConfig::tiny();
    let mut worst_m = 0.0f64;
    let mut exact = true;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_model(&cfg, 10, &mut rng);
        let bag = common::random_bag(&cfg, 10, 1, "b", &mut rng);
        let out = model.run_bag(&[&bag.instances[0]]).map_err(|e| e.to_string())?;
        exact &= out.a_bar == vec![1.0];
        for (m, o) in out.selection.iter().zip(out.representations.data()) {
            worst_m = worst_m.max((m - o).abs());
        }
    }
    let one_row = ModelConfig {
        attn_rows_l2: 1,
        ..ModelConfig::tiny()
    };
    let mut worst_v = 0.0f64;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let model = common::random_model(&one_row, 10, &mut rng);
        let j = rng.random_range(1..=5);
        let bag = common::random_bag(&one_row, 10, j, "b", &mut rng);
        let out = model
            .run_bag(&bag.instances.iter().collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        let (alpha, probs) = common::single_vector_reference(&model, &out.representations);
        for (x, y) in out.a_bar.iter().zip(&alpha).chain(out.probs.iter().zip(&probs)) {
            worst_v = worst_v.max((x - y).abs());
        }
    }
    ensure(
        exact && worst_m < 1e-6 && worst_v < 1e-12,
        format!("J=1: Ā exactly [1.0] = {exact}, max |M - o| {worst_m:.1e}; one-row variant vs single-vector reference {worst_v:.1e}"),
    )
}

fn permutation_law() -> Outcome {
    let cfg = ModelConfig::tiny();
    let (mut worst_p, mut worst_a) = (0.0f64, 0.0f64);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = common::random_model(&cfg, 10, &mut rng);
        let j = rng.random_range(2..=6);
        let bag = common::random_bag(&cfg, 10, j, "b", &mut rng);
        let mut order: Vec<usize> = (0..j).collect();
        order.shuffle(&mut rng);
        let a = model
            .run_bag(&bag.instances.iter().collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        let b = model
            .run_bag(&order.iter().map(|&k| &bag.instances[k]).collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        for (x, y) in a.probs.iter().zip(&b.probs) {
            worst_p = worst_p.max((x - y).abs());
        }
        for (pos, &k) in order.iter().enumerate() {
            worst_a = worst_a.max((b.a_bar[pos] - a.a_bar[k]).abs());
        }
    }
    ensure(
        worst_p < 1e-6 && worst_a < 1e-6,
        format!("100 trials, max prob change {worst_p:.1e}, max Ā mismatch {worst_a:.1e}"),
    )
}

fn synthetic_learnability() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::synthetic();
    let train_spec = SynthSpec::default();
    let test_spec = SynthSpec {
        bags_per_relation: 80,
        seed: 8,
        ..SynthSpec::default()
    };
    let train = generate_synthetic(&train_spec, &cfg).map_err(|e| e.to_string())?;
    let test = generate_synthetic(&test_spec, &cfg).map_err(|e| e.to_string())?;
    let mut trainer = Trainer::<f32>::new(&train, &cfg).map_err(|e| e.to_string())?;
    let mut accuracy = 0.0;
    while trainer.epochs_done() < cfg.epochs {
        trainer.run_epoch().map_err(|e| e.to_string())?;
        let scored = score_test_set(&test, trainer.model(), Selection::Full).map_err(|e| e.to_string())?;
        let hits = scored
            .hard_predictions(&test)
            .iter()
            .filter(|(g, p)| g == p)
            .count();
        accuracy = hits as f64 / test.bags.len() as f64;
        if accuracy >= 0.9 {
            break;
        }
    }
    let epochs = trainer.epochs_done();
    let loss = epoch_means(trainer.log()).last().copied().unwrap_or(f64::NAN);

    // selection weights on bags mixing pattern and noise instances
    let (mut mixed, mut favoured) = (0, 0);
    for bag in test.bags.iter().filter(|b| b.instances.len() > 1) {
        let flags: Vec<bool> = bag
            .instances
            .iter()
            .map(|i| contains_pattern(&test_spec, &test.vocab, i, bag.relation_id))
            .collect();
        if flags.iter().all(|&f| f) || flags.iter().all(|&f| !f) {
            continue;
        }
        let out = trainer
            .model()
            .run_bag(&bag.instances.iter().collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        let mean = |want: bool| {
            let w: Vec<f64> = out
                .a_bar
                .iter()
                .zip(&flags)
                .filter(|(_, &f)| f == want)
                .map(|(&a, _)| a as f64)
                .collect();
            w.iter().sum::<f64>() / w.len() as f64
        };
        mixed += 1;
        if mean(true) > mean(false) {
            favoured += 1;
        }
    }
    let share = favoured as f64 / mixed.max(1) as f64;
    let secs = start.elapsed().as_secs_f64();
    ensure(
        accuracy >= 0.9 && epochs <= 30 && secs < 600.0 && share >= 0.75,
        format!(
            "test accuracy {:.1}% after {epochs} epochs (loss {loss:.3}), {:.0}s; pattern instances favoured in {favoured}/{mixed} mixed bags ({:.1}%)",
            100.0 * accuracy,
            secs,
            100.0 * share
        ),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bags = 300;
    let mut gold = GoldFacts::default();
    let mut og = oracle::Gold {
        pair_of: HashMap::new(),
        facts: HashSet::new(),
    };
    for b in 0..bags {
        let pair = (format!("h{}", b % 250), format!("t{}", b % 250));
        let id = format!("bag{b:04}");
        gold.add_bag(&id, &pair.0, &pair.1);
        og.pair_of.insert(id, pair.clone());
        if rng.random_bool(0.5) {
            let rel = rng.random_range(1..8);
            gold.add_fact(&pair.0, &pair.1, rel);
            og.facts.insert((pair.0, pair.1, rel));
        }
    }
    let records: Vec<PredictionRecord> = (0..1000)
        .map(|_| PredictionRecord {
            bag_id: format!("bag{:04}", rng.random_range(0..bags)),
            relation_id: rng.random_range(1..8),
            confidence: rng.random_range(0..200) as f64 / 200.0,
        })
        .collect();
    let curve = pr_curve(&records, &gold).map_err(|e| e.to_string())?;
    let want = oracle::pr_points(&records, &og);
    let pr_ok = curve.points.len() == want.len()
        && curve
            .points
            .iter()
            .zip(&want)
            .all(|(p, w)| (p.precision, p.recall) == *w)
        && curve.auc == oracle::auc(&want);
    let mut pn_ok = true;
    for n in [1, 10, 100, 200, 300, 999, 1000] {
        pn_ok &= p_at_n(&records, &gold, n).map_err(|e| e.to_string())? == oracle::p_at(&records, &og, n);
    }

    // class 0 is the none-relation; hand-computed per-class scores:
    // class 1: predicted 4 times, tp 2, fn 1 -> p 1/2, r 2/3, f1 4/7
    // class 2: predicted 3 times, tp 1, fn 1 -> p 1/3, r 1/2, f1 2/5
    // class 3: predicted once, tp 1, fn 1 -> p 1, r 1/2, f1 2/3
    let pairs = [
        (1, 1),
        (1, 1),
        (1, 2),
        (2, 2),
        (2, 0),
        (3, 3),
        (3, 1),
        (0, 1),
        (0, 0),
        (0, 2),
    ];
    let f1 = macro_f1(&pairs, 0);
    let per_class = [
        (1, 1.0 / 2.0, 2.0 / 3.0, 4.0 / 7.0),
        (2, 1.0 / 3.0, 1.0 / 2.0, 2.0 / 5.0),
        (3, 1.0, 1.0 / 2.0, 2.0 / 3.0),
    ];
    let want_f1 = (4.0 / 7.0 + 2.0 / 5.0 + 2.0 / 3.0) / 3.0;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
    let f1_ok = f1.per_class.len() == 3
        && f1.per_class.iter().zip(&per_class).all(|(c, &(k, p, r, f))| {
            c.class == k && close(c.precision, p) && close(c.recall, r) && close(c.f1, f)
        })
        && close(f1.macro_f1, want_f1);
    ensure(
        pr_ok && pn_ok && f1_ok,
        format!(
            "1000 records vs brute force: PR {pr_ok}, P@N {pn_ok}; 3-class F1 {:.6} vs {want_f1:.6}",
            f1.macro_f1
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let data = d.join("train.jsonl");
    let run = |args: &[&str]| mlssa::cli::run(std::iter::once("mlssa").chain(args.iter().copied()));
    let path = |p: &std::path::Path| p.to_str().unwrap().to_string();
    if run(&["gen-synth", "--out", &path(&data)]) != 0 {
        return Err("gen-synth failed".into());
    }
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = d.join(format!("run{k}"));
        if run(&[
            "train",
            "--profile",
            "synth",
            "--set",
            "epochs=2",
            "--data",
            &path(&data),
            "--out",
            &path(&out),
        ]) != 0
        {
            return Err("train failed".into());
        }
        let ckpt = std::fs::read(out.join("model.ckpt")).map_err(|e| e.to_string())?;
        let log = std::fs::read(out.join("loss_log.csv")).map_err(|e| e.to_string())?;
        outputs.push((ckpt, log));
    }
    ensure(
        outputs[0] == outputs[1],
        format!(
            "two CLI train runs: checkpoint {} bytes identical {}, loss log identical {}",
            outputs[0].0.len(),
            outputs[0].0 == outputs[1].0,
            outputs[0].1 == outputs[1].1
        ),
    )
}

const REFERENCE_STATEMENT: &str = "Published NYT and DBpedia-PT scores (MLSSA-2 All P@100 = 90.0; \
PT-MANUAL 69.6 / PT-SPLIT 78.1 macro F1) and their PR curves need the licensed NYT corpus, the \
DBpedia-PT data, pretrained embeddings and large compute. They are reference values, not CI targets.";

fn non_reproducibility_statement() -> Outcome {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md"))
        .map_err(|e| e.to_string())?;
    let needed = [
        "90.0",
        "69.6",
        "78.1",
        "not CI targets",
        "--profile nyt",
        "--profile pt",
    ];
    let missing: Vec<_> = needed.iter().filter(|k| !readme.contains(*k)).collect();
    println!("      {REFERENCE_STATEMENT}");
    ensure(
        missing.is_empty(),
        format!("README documents reference values and full-scale profiles (missing: {missing:?})"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("attention invariants", attention_invariants),
        ("penalty law", penalty_law),
        ("degenerate-bag law", degenerate_bag_law),
        ("permutation law", permutation_law),
        ("synthetic learnability", synthetic_learnability),
        ("metric oracle equivalence", metric_oracles),
        ("determinism", determinism),
        ("non-reproducibility statement", non_reproducibility_statement),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{status} {}. {name}: {detail}", k + 1);
        if k == 0 {
            println!("      info: {}", gradcheck_seed_statistic());
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

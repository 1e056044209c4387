//! Held-out PR curve, P@N under the one/two/all instance settings and macro F1
//! for a briefly trained synthetic model.

use mlssa::data::{generate_synthetic, SynthSpec};
use mlssa::evaluation::{
    macro_f1, mean_precision, p_at_n, pr_curve, score_test_set, GoldFacts, PnMode, PnSetting, Selection,
};
use mlssa::training::train;
use mlssa::ModelConfig;

fn main() -> mlssa::Result<()> {
    let cfg = ModelConfig {
        epochs: 1,
        ..ModelConfig::synthetic()
    };
    let spec = SynthSpec {
        bags_per_relation: 100,
        ..SynthSpec::default()
    };
    let train_set = generate_synthetic(&spec, &cfg)?;
    let test = generate_synthetic(&SynthSpec { seed: 8, ..spec }, &cfg)?;
    let model = train::<f32>(&train_set, &cfg)?.model;
    let gold = GoldFacts::from_dataset(&test);

    let full = score_test_set(&test, &model, Selection::Full)?;
    let curve = pr_curve(&full.records, &gold)?;
    println!("PR: {} points, AUC {:.4}", curve.points.len(), curve.auc);

    for mode in PnMode::ALL_MODES {
        let scored = score_test_set(&test, &model, Selection::Pn(PnSetting { mode, seed: 0 }))?;
        let values: Vec<f64> = [50, 100, 150]
            .iter()
            .map(|&n| p_at_n(&scored.records, &gold, n))
            .collect::<mlssa::Result<_>>()?;
        println!(
            "{mode:<4} P@50/100/150 {values:.3?}  mean {:.3}",
            mean_precision(&values)
        );
    }

    let report = macro_f1(&full.hard_predictions(&test), test.none_id);
    for c in &report.per_class {
        println!(
            "{:<6} p {:.3} r {:.3} f1 {:.3}",
            test.relations[c.class], c.precision, c.recall, c.f1
        );
    }
    println!("macro F1 {:.3}", report.macro_f1);
    Ok(())
}

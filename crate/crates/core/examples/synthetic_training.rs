//! Trains MLSSA-2 on the synthetic corpus and reports held-out bag accuracy per epoch.
//!
//! cargo run --release --example synthetic_training -- [epochs]

use mlssa::data::{generate_synthetic, SynthSpec};
use mlssa::evaluation::{score_test_set, Selection};
use mlssa::training::{epoch_means, Trainer};
use mlssa::ModelConfig;

fn main() -> mlssa::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("epochs"))
        .unwrap_or(5);
    let cfg = ModelConfig {
        epochs,
        ..ModelConfig::synthetic()
    };
    let train = generate_synthetic(&SynthSpec::default(), &cfg)?;
    let test = generate_synthetic(
        &SynthSpec {
            bags_per_relation: 80,
            seed: 8,
            ..SynthSpec::default()
        },
        &cfg,
    )?;
    println!(
        "{} train bags, {} test bags, {}",
        train.bags.len(),
        test.bags.len(),
        cfg.variant()
    );

    let mut trainer = Trainer::<f32>::new(&train, &cfg)?;
    for _ in 0..epochs {
        trainer.run_epoch()?;
        let scored = score_test_set(&test, trainer.model(), Selection::Full)?;
        let pairs = scored.hard_predictions(&test);
        let acc = pairs.iter().filter(|(g, p)| g == p).count() as f64 / pairs.len() as f64;
        let loss = epoch_means(trainer.log()).last().copied().unwrap_or(f64::NAN);
        println!(
            "epoch {:>2}  loss {loss:.4}  test accuracy {:.1}%",
            trainer.epochs_done(),
            100.0 * acc
        );
    }
    Ok(())
}

//! Saves a trained model, reloads it and checks the predictions are unchanged.

use mlssa::data::{generate_synthetic, SynthSpec};
use mlssa::training::{train, Checkpoint};
use mlssa::ModelConfig;

fn main() -> mlssa::Result<()> {
    let cfg = ModelConfig {
        epochs: 1,
        ..ModelConfig::synthetic()
    };
    let data = generate_synthetic(
        &SynthSpec {
            bags_per_relation: 50,
            ..SynthSpec::default()
        },
        &cfg,
    )?;
    let out = train::<f32>(&data, &cfg)?;

    let path = std::env::temp_dir().join("mlssa_example.ckpt");
    out.checkpoint.save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    let model = loaded.to_model::<f32>()?;
    println!(
        "{}: {} bytes, {} tensors, {} relations, vocabulary {}",
        path.display(),
        std::fs::metadata(&path)?.len(),
        loaded.tensors.len(),
        loaded.relations.len(),
        loaded.vocab.len()
    );

    let same = data.bags.iter().all(|b| {
        let inst: Vec<_> = b.instances.iter().collect();
        model.predict(&inst).ok() == out.model.predict(&inst).ok()
    });
    println!("predictions identical after reload: {same}");
    Ok(())
}

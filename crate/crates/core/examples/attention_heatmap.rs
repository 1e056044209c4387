//! Writes word- and sentence-level attention CSVs for one synthetic bag and
//! prints a text heatmap of the first instance.

use mlssa::data::{contains_pattern, generate_synthetic, SynthSpec};
use mlssa::evaluation::export_attention;
use mlssa::training::train;
use mlssa::ModelConfig;

fn main() -> mlssa::Result<()> {
    let cfg = ModelConfig {
        epochs: 2,
        ..ModelConfig::synthetic()
    };
    let spec = SynthSpec::default();
    let data = generate_synthetic(&spec, &cfg)?;
    let model = train::<f32>(&data, &cfg)?.model;

    let bag = data
        .bags
        .iter()
        .find(|b| b.instances.len() >= 3)
        .expect("a multi-instance bag");
    let out = model.run_bag(&bag.instances.iter().collect::<Vec<_>>())?;
    println!("bag {} ({})", bag.bag_id, data.relations[bag.relation_id]);
    for (k, (inst, w)) in bag.instances.iter().zip(&out.a_bar).enumerate() {
        let tag = if contains_pattern(&spec, &data.vocab, inst, bag.relation_id) {
            "pattern"
        } else {
            "noise"
        };
        println!("  instance {} {tag:<7} weight {w:.3}", k + 1);
    }

    let first = &bag.instances[0];
    let a = &out.word_attention[0];
    for t in 0..first.true_length {
        let mass: f32 = (0..a.rows()).map(|r| a.get(r, t)).sum::<f32>() / a.rows() as f32;
        let token = data.vocab.token(first.token_ids[t]).unwrap_or("?");
        println!("  {token:>8} {}", "#".repeat((mass * 60.0).round() as usize));
    }

    let dir = std::env::temp_dir().join("mlssa_attention");
    let files = export_attention(&model, &data.vocab, bag, &dir)?;
    println!(
        "wrote {} word-level files and {}",
        files.word_files.len(),
        files.sentence_file.display()
    );
    Ok(())
}

//! Reads a JSONL bag file, or writes a small one first when no path is given,
//! and prints the encoded view of its first bag.
//!
//! cargo run --example load_jsonl -- [path.jsonl]

use std::path::PathBuf;

use mlssa::data::{generate_raw, load_dataset, relative_positions, write_raw_bags, LoadOptions, SynthSpec};
use mlssa::ModelConfig;

fn main() -> mlssa::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("mlssa_sample.jsonl");
            write_raw_bags(
                &p,
                &generate_raw(&SynthSpec {
                    bags_per_relation: 3,
                    ..SynthSpec::default()
                })?,
            )?;
            p
        }
    };
    let cfg = ModelConfig {
        time_steps: 16,
        max_distance: 5,
        ..ModelConfig::synthetic()
    };
    let data = load_dataset(&path, LoadOptions::default(), &cfg)?;
    println!(
        "{}: {} bags, {} instances, relations {:?}, vocabulary {}",
        path.display(),
        data.bags.len(),
        data.num_instances(),
        data.relations,
        data.vocab.len()
    );
    let bag = &data.bags[0];
    println!(
        "bag {} = ({}, {}, {})",
        bag.bag_id, bag.head, bag.tail, data.relations[bag.relation_id]
    );
    for inst in &bag.instances {
        let (h, t) = relative_positions(inst, &cfg);
        println!("  tokens    {:?}", data.vocab.decode(&inst.token_ids));
        println!("  head pos  {h:?}");
        println!("  tail pos  {t:?}");
    }
    Ok(())
}

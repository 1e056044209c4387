//! Prints the built-in hyper-parameter profiles and applies a few overrides.

use mlssa::ModelConfig;

fn main() -> mlssa::Result<()> {
    for name in ["nyt", "pt", "synth", "tiny"] {
        let cfg = ModelConfig::profile(name)?;
        let pairs: Vec<String> = cfg
            .to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!("[{name}] {}\n  {}", cfg.variant(), pairs.join(" "));
    }

    let mut cfg = ModelConfig::nyt();
    cfg.set("r_l2", "1")?;
    cfg.set("epochs", "10")?;
    cfg.validate()?;
    println!("nyt with r_l2=1 epochs=10 -> {}", cfg.variant());

    if let Err(e) = cfg.set("no_such_key", "1") {
        println!("rejected: {e}");
    }
    println!("\n{}", ModelConfig::key_help());
    Ok(())
}

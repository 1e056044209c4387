//! Finite-difference check of every backward rule and the full objective.
//!
//! cargo run --example gradient_check -- [seed]

fn main() -> mlssa::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed"))
        .unwrap_or(0);
    let report = mlssa::gradcheck::run_suite(seed)?;
    println!("{report}");
    if !report.passed() {
        std::process::exit(2);
    }
    Ok(())
}

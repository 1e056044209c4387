//! Drives the word attention matrix towards orthonormal rows by descending on ‖AAᵀ − I‖²_F alone.

use mlssa::numcore::{Matrix, ParamStore, Tape};
use mlssa::word_attention::{attention_penalty, word_attention_matrix, WordAttentionParams};
use mlssa::ModelConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mlssa::Result<()> {
    let cfg = ModelConfig {
        time_steps: 6,
        ..ModelConfig::tiny()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f64>::new();
    let params = WordAttentionParams::register(&mut store, &cfg, &mut rng);
    let h = Matrix::from_fn(2 * cfg.hidden, cfg.time_steps, |_, _| {
        rng.random_range(-1.0..=1.0)
    });

    for step in 0..=300 {
        let mut tape = Tape::new(&store);
        let hv = tape.constant(h.clone());
        let a = word_attention_matrix(&mut tape, hv, &params, None)?;
        let pen = attention_penalty(&mut tape, a);
        let value = tape.value(pen).item();
        if step % 50 == 0 || value < 1e-3 {
            println!("step {step:>3}  penalty {value:.2e}");
            println!("{:.3?}", tape.value(a));
        }
        if value < 1e-3 {
            break;
        }
        let grads = tape.backward(pen)?;
        for id in [params.ws1, params.ws2] {
            let g = grads.dense(id, store.value(id).shape());
            let w = &mut store.get_mut(id).value;
            *w = w.zip_map(&g, |x, d| x - 2.0 * d)?;
        }
    }
    Ok(())
}

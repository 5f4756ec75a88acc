//! Structured SVM on synthetic handwriting with block-coordinate Frank-Wolfe.
//!
//! ```bash
//! cargo run --release --example bcfw_ssvm
//! ```

use structckn::inference::max_product_chain;
use structckn::ocr::{linear_examples, synthetic_ocr};
use structckn::optim::{hamming, BcfwConfig, BcfwState};

fn main() -> structckn::Result<()> {
    let (train, test) = synthetic_ocr(300, 2).split(0);
    let (train, test) = (linear_examples(&train), linear_examples(&test));
    let mut state = BcfwState::init(&train, &BcfwConfig { averaging: true, ..BcfwConfig::default() })?;
    for epoch in 1..=20 {
        state.epoch(&train)?;
        if epoch % 5 == 0 {
            let primal = state.primal_objective(&train)?;
            println!("epoch {epoch:>2}  primal {primal:.5}  dual {:.5}", state.dual_objective());
        }
    }
    let (mut wrong, mut total) = (0, 0);
    for ex in &test {
        let (_, y) = max_product_chain(&ex.model.potentials(state.weights()))?;
        wrong += hamming(&y, &ex.label);
        total += y.len();
    }
    println!("test error {:.2}%", 100.0 * wrong as f64 / total as f64);
    Ok(())
}

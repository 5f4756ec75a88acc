//! Linear chain CRF on synthetic handwriting trained with SDCA; pass a path
//! to the OCR character file to use real data instead.
//!
//! ```bash
//! cargo run --release --example sdca_ocr [-- letter.data]
//! ```

use structckn::ocr::{load_ocr, synthetic_ocr, train_linear, LinearConfig};

fn main() -> structckn::Result<()> {
    let data = match std::env::args().nth(1) {
        Some(path) => load_ocr(path)?,
        None => synthetic_ocr(400, 1),
    };
    let (train, test) = data.split(0);
    println!("{} train words, {} test words", train.len(), test.len());
    let cfg = LinearConfig { epochs: 30, gap_tol: 1e-4, ..LinearConfig::default() };
    let (model, rows) = train_linear(&train, &test, &cfg, None)?;
    for r in &rows {
        println!(
            "epoch {:>3}  primal {:.5}  dual {:.5}  gap {:.2e}  test error {:.2}%",
            r.epoch,
            r.primal,
            r.dual,
            r.gap,
            100.0 * r.test_error
        );
    }
    println!("lambda {:.2e}, final test error {:.2}%", model.lambda, 100.0 * model.error_rate(&test)?);
    Ok(())
}

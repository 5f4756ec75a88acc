//! Struct-CKN: CKN features learned jointly with a chain CRF on synthetic
//! handwriting.
//!
//! ```bash
//! cargo run --release --example struct_ckn_ocr
//! ```

use structckn::ocr::{ckn_config, struct_examples, synthetic_ocr};
use structckn::trainer::{node_error_rate, train_struct_ckn};

fn main() -> structckn::Result<()> {
    let (train, test) = synthetic_ocr(300, 4).split(0);
    let (train, test) = (struct_examples(&train), struct_examples(&test));
    let cfg = ckn_config(32, 5, 0);
    let (model, rows) = train_struct_ckn(&train, &test, &cfg, None)?;
    for r in &rows {
        println!("outer {}  primal {:.5}  gap {:.2e}  test error {:.2}%  {:.1} s", r.epoch, r.primal, r.gap, 100.0 * r.test_error, r.wall_seconds);
    }
    let err = node_error_rate(&model, &test, &cfg.ad3(), cfg.optimizer.epsilon)?;
    println!("{} features per character, test error {:.2}%", model.feature_dim, 100.0 * err);
    Ok(())
}

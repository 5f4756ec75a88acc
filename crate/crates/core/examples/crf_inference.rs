//! Exact chain inference and AD3 on a small graph with a logic constraint.
//!
//! ```bash
//! cargo run --example crf_inference
//! ```

use structckn::graph::{LogicFactor, LogicKind, Potentials};
use structckn::inference::{ad3_map, entropy_marginals, max_product_chain, sum_product_chain, Ad3Config};

fn main() -> structckn::Result<()> {
    let chain = Potentials {
        unary: vec![vec![1.0, 0.2, -0.5], vec![0.0, 0.8, 0.1], vec![0.3, 0.3, 1.2]],
        edges: vec![(0, 1), (1, 2)],
        pairwise: vec![vec![0.5, -0.2, 0.0, 0.1, 0.4, -0.3, 0.0, 0.2, 0.6]; 2],
    };
    let (log_z, mu) = sum_product_chain(&chain)?;
    println!("log Z = {log_z:.6}");
    for (t, m) in mu.nodes.iter().enumerate() {
        println!("node {t} marginals {m:.4?}");
    }
    println!("entropy = {:.6}", entropy_marginals(&mu)?);
    let (score, y) = max_product_chain(&chain)?;
    println!("Viterbi {y:?} score {score:.4}");

    // both nodes 1 and 2 prefer label 2; allow at most one of them
    let logic = vec![LogicFactor { kind: LogicKind::AtMostOne, members: vec![(1, 2), (2, 2)] }];
    let mut pot = chain.clone();
    pot.unary[1][2] = 2.0;
    let r = ad3_map(&pot, &logic, &Ad3Config::default())?;
    println!(
        "AD3 labeling {:?} score {:.4} bound {:?} converged {} constraint satisfied {}",
        r.map_labeling,
        r.score,
        r.bound,
        r.converged,
        logic[0].satisfied(&r.map_labeling)
    );
    Ok(())
}

#![allow(dead_code)]

pub mod cpp;
pub mod gradcheck;

use rand::Rng;
use structckn::graph::{LogicFactor, LogicKind, Potentials};

pub fn all_labelings(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &m in sizes {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..m).map(move |l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn random_chain(rng: &mut impl Rng, n: usize, m: &[usize]) -> Potentials {
    Potentials {
        unary: (0..n).map(|t| (0..m[t]).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
        edges: (1..n).map(|t| (t - 1, t)).collect(),
        pairwise: (1..n).map(|t| (0..m[t - 1] * m[t]).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
    }
}

/// Random tree: node t > 0 attaches to a uniformly chosen earlier node.
pub fn random_tree(rng: &mut impl Rng, n: usize, max_labels: usize) -> Potentials {
    let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=max_labels)).collect();
    let edges: Vec<(usize, usize)> = (1..n).map(|t| (rng.gen_range(0..t), t)).collect();
    Potentials {
        unary: sizes.iter().map(|&m| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
        pairwise: edges.iter().map(|&(u, v)| (0..sizes[u] * sizes[v]).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
        edges,
    }
}

/// Tree potentials plus a few random AT-MOST-ONE factors.
pub fn random_logic_instance(rng: &mut impl Rng, n: usize) -> (Potentials, Vec<LogicFactor>) {
    let pot = random_tree(rng, n, 3);
    let sizes = pot.sizes();
    let n_factors = rng.gen_range(1..=3);
    let mut logic = Vec::new();
    for _ in 0..n_factors {
        let k = rng.gen_range(2..=n.min(4));
        let mut members = Vec::new();
        while members.len() < k {
            let v = rng.gen_range(0..n);
            if members.iter().any(|&(u, _)| u == v) {
                continue;
            }
            members.push((v, rng.gen_range(0..sizes[v])));
        }
        logic.push(LogicFactor { kind: LogicKind::AtMostOne, members });
    }
    (pot, logic)
}

pub fn enumerate_best(pot: &Potentials, logic: &[LogicFactor]) -> f64 {
    all_labelings(&pot.sizes())
        .into_iter()
        .filter(|y| logic.iter().all(|f| f.satisfied(y)))
        .map(|y| pot.score(&y))
        .fold(f64::NEG_INFINITY, f64::max)
}

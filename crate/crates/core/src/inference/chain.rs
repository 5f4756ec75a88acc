use super::marginals::{CliqueMarginals, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::graph::{absorb, is_neg_inf, Potentials, NEG_INF};

fn require_chain(pot: &Potentials) -> Result<()> {
    if !pot.is_chain() {
        return Err(Error::Topology("chain inference needs edges (t-1, t) for every t".into()));
    }
    if pot.unary.iter().any(Vec::is_empty) {
        return Err(Error::Contract("node with empty label space".into()));
    }
    Ok(())
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if is_neg_inf(m) || m == f64::NEG_INFINITY {
        return NEG_INF;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Forward-backward in log space. Returns `log Z` and the node and edge
/// marginals.
pub fn sum_product_chain(pot: &Potentials) -> Result<(f64, CliqueMarginals)> {
    require_chain(pot)?;
    let n = pot.n_nodes();
    let sizes = pot.sizes();
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(n);
    alpha.push(pot.unary[0].clone());
    for t in 1..n {
        let (mp, mc) = (sizes[t - 1], sizes[t]);
        let pair = &pot.pairwise[t - 1];
        let prev = &alpha[t - 1];
        let cur = (0..mc)
            .map(|b| absorb(pot.unary[t][b] + log_sum_exp((0..mp).map(|a| prev[a] + pair[a * mc + b]))))
            .collect();
        alpha.push(cur);
    }
    let mut beta: Vec<Vec<f64>> = vec![Vec::new(); n];
    beta[n - 1] = vec![0.0; sizes[n - 1]];
    for t in (0..n - 1).rev() {
        let (mc, mn) = (sizes[t], sizes[t + 1]);
        let pair = &pot.pairwise[t];
        let next = &beta[t + 1];
        let un = &pot.unary[t + 1];
        beta[t] = (0..mc)
            .map(|a| absorb(log_sum_exp((0..mn).map(|b| pair[a * mn + b] + un[b] + next[b]))))
            .collect();
    }
    let log_z = log_sum_exp(alpha[n - 1].iter().copied());
    if is_neg_inf(log_z) || !log_z.is_finite() {
        return Err(Error::NoFeasibleLabeling);
    }
    // underflow floor for labels that are allowed but vanishingly unlikely
    let prob = |lp: f64, allowed: bool| if allowed { lp.max(LOG_FLOOR).exp() } else { 0.0 };
    let normalize = |mut v: Vec<f64>| {
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
        }
        v
    };
    let nodes = (0..n)
        .map(|t| normalize(alpha[t].iter().zip(&beta[t]).map(|(&a, &b)| prob(a + b - log_z, !is_neg_inf(a) && !is_neg_inf(b))).collect()))
        .collect();
    let edges = (0..n.saturating_sub(1))
        .map(|t| {
            let (mc, mn) = (sizes[t], sizes[t + 1]);
            let pair = &pot.pairwise[t];
            let mut tab = Vec::with_capacity(mc * mn);
            for a in 0..mc {
                for b in 0..mn {
                    let terms = [alpha[t][a], pair[a * mn + b], pot.unary[t + 1][b], beta[t + 1][b]];
                    tab.push(prob(terms.iter().sum::<f64>() - log_z, !terms.iter().any(|&x| is_neg_inf(x))));
                }
            }
            normalize(tab)
        })
        .collect();
    Ok((log_z, CliqueMarginals { nodes, pairs: pot.edges.clone(), edges }))
}

/// Viterbi decoding; ties go to the lowest label index.
pub fn max_product_chain(pot: &Potentials) -> Result<(f64, Vec<usize>)> {
    require_chain(pot)?;
    let n = pot.n_nodes();
    let sizes = pot.sizes();
    let mut delta = pot.unary[0].clone();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    back.push(Vec::new());
    for t in 1..n {
        let (mp, mc) = (sizes[t - 1], sizes[t]);
        let pair = &pot.pairwise[t - 1];
        let mut cur = vec![0.0; mc];
        let mut bp = vec![0usize; mc];
        for b in 0..mc {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for a in 0..mp {
                let s = delta[a] + pair[a * mc + b];
                if s > best {
                    best = s;
                    arg = a;
                }
            }
            cur[b] = absorb(best + pot.unary[t][b]);
            bp[b] = arg;
        }
        delta = cur;
        back.push(bp);
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (b, &s) in delta.iter().enumerate() {
        if s > best {
            best = s;
            last = b;
        }
    }
    if is_neg_inf(best) {
        return Err(Error::NoFeasibleLabeling);
    }
    let mut y = vec![0; n];
    y[n - 1] = last;
    for t in (1..n).rev() {
        y[t - 1] = back[t][y[t]];
    }
    Ok((best, y))
}

/// MAP under the Hamming-augmented score `score(y) + weight * #{t: y_t != y_true_t}`.
pub fn loss_augmented_map(pot: &Potentials, y_true: &[usize], weight: f64) -> Result<(f64, Vec<usize>)> {
    if y_true.len() != pot.n_nodes() {
        return Err(Error::Contract("true labeling length mismatch".into()));
    }
    let mut aug = pot.clone();
    for (t, u) in aug.unary.iter_mut().enumerate() {
        for (l, v) in u.iter_mut().enumerate() {
            if l != y_true[t] {
                *v = absorb(*v + weight);
            }
        }
    }
    max_product_chain(&aug)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_chain(rng: &mut impl Rng, n: usize, m: usize) -> Potentials {
        Potentials {
            unary: (0..n).map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
            edges: (1..n).map(|t| (t - 1, t)).collect(),
            pairwise: (1..n).map(|_| (0..m * m).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
        }
    }

    fn all_labelings(sizes: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &m in sizes {
            out = out
                .into_iter()
                .flat_map(|p| (0..m).map(move |l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                }))
                .collect();
        }
        out
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pot = random_chain(&mut rng, 4, 3);
            let ys = all_labelings(&pot.sizes());
            let scores: Vec<f64> = ys.iter().map(|y| pot.score(y)).collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
            let (lz, mu) = sum_product_chain(&pot).unwrap();
            assert!((lz - log_z).abs() < 1e-10);
            mu.validate(1e-12, 1e-10).unwrap();
            let mut node1 = [0.0; 3];
            for (y, s) in ys.iter().zip(&scores) {
                node1[y[1]] += (s - log_z).exp();
            }
            for l in 0..3 {
                assert!((node1[l] - mu.nodes[1][l]).abs() < 1e-10);
            }
            let (best, y) = max_product_chain(&pot).unwrap();
            assert!((best - m).abs() < 1e-12);
            assert!((pot.score(&y) - m).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_pick_lowest_index() {
        let pot = Potentials {
            unary: vec![vec![0.0; 3]; 3],
            edges: vec![(0, 1), (1, 2)],
            pairwise: vec![vec![0.0; 9]; 2],
        };
        assert_eq!(max_product_chain(&pot).unwrap().1, vec![0, 0, 0]);
    }

    #[test]
    fn single_node_chain() {
        let pot = Potentials { unary: vec![vec![1.0, 3.0]], edges: vec![], pairwise: vec![] };
        let (lz, mu) = sum_product_chain(&pot).unwrap();
        assert!((lz - (1f64.exp() + 3f64.exp()).ln()).abs() < 1e-12);
        assert!(mu.edges.is_empty());
        assert_eq!(max_product_chain(&pot).unwrap().1, vec![1]);
    }

    #[test]
    fn sentinel_entries_get_zero_mass() {
        let pot = Potentials {
            unary: vec![vec![0.0, NEG_INF], vec![0.0, 0.0]],
            edges: vec![(0, 1)],
            pairwise: vec![vec![0.0, NEG_INF, 0.0, 0.0]],
        };
        let (lz, mu) = sum_product_chain(&pot).unwrap();
        assert!((lz - 0.0).abs() < 1e-12);
        assert_eq!(mu.nodes[0], vec![1.0, 0.0]);
        assert_eq!(mu.nodes[1], vec![1.0, 0.0]);
        assert_eq!(max_product_chain(&pot).unwrap().1, vec![0, 0]);
    }

    #[test]
    fn extreme_scores_keep_positive_mass() {
        let pot = Potentials {
            unary: vec![vec![0.0, -2000.0], vec![0.0, 0.0]],
            edges: vec![(0, 1)],
            pairwise: vec![vec![0.0; 4]],
        };
        let (_, mu) = sum_product_chain(&pot).unwrap();
        assert!(mu.nodes[0][1] > 0.0 && mu.nodes[0][1] < 1e-290);
        assert!(mu.edges[0].iter().all(|&p| p > 0.0));
    }

    #[test]
    fn all_infeasible_is_error() {
        let pot = Potentials { unary: vec![vec![NEG_INF, NEG_INF]], edges: vec![], pairwise: vec![] };
        assert!(matches!(sum_product_chain(&pot), Err(Error::NoFeasibleLabeling)));
        assert!(matches!(max_product_chain(&pot), Err(Error::NoFeasibleLabeling)));
    }

    #[test]
    fn non_chain_rejected() {
        let pot = Potentials { unary: vec![vec![0.0]; 3], edges: vec![(0, 2), (1, 2)], pairwise: vec![vec![0.0]; 2] };
        assert!(matches!(sum_product_chain(&pot), Err(Error::Topology(_))));
    }

    #[test]
    fn loss_augmented_matches_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pot = random_chain(&mut rng, 5, 3);
        let y_true = vec![0, 1, 2, 1, 0];
        let best = all_labelings(&pot.sizes())
            .into_iter()
            .map(|y| pot.score(&y) + y.iter().zip(&y_true).filter(|(a, b)| a != b).count() as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        let (s, _) = loss_augmented_map(&pot, &y_true, 1.0).unwrap();
        assert!((s - best).abs() < 1e-12);
    }
}

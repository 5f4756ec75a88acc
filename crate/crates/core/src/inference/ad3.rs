use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::InferenceResult;
use crate::error::{Error, Result};
use crate::graph::{is_neg_inf, LogicFactor, LogicKind, Potentials};

#[derive(Clone, Debug, PartialEq)]
pub struct Ad3Config {
    pub max_iters: usize,
    pub eta: f64,
    pub residual_tol: f64,
    pub adaptive_eta: bool,
    /// When set, the residual trajectory is written here as CSV.
    pub trace_csv: Option<PathBuf>,
}

impl Default for Ad3Config {
    fn default() -> Self {
        Self { max_iters: 1000, eta: 0.1, residual_tol: 1e-6, adaptive_eta: true, trace_csv: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ad3TraceRow {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub eta: f64,
    pub bound: f64,
}

/// Simplex projection of `a` (in place): `argmin |q - a|` over `q >= 0, sum q = 1`.
pub fn project_simplex(a: &mut [f64]) {
    if a.is_empty() {
        return;
    }
    let mut s: Vec<f64> = a.to_vec();
    s.sort_by(|x, y| y.total_cmp(x));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &v) in s.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    a.iter_mut().for_each(|x| *x = (*x - tau).max(0.0));
}

/// Projection onto `{q >= 0, sum q <= 1}`.
pub fn project_at_most_one(a: &mut [f64]) {
    let pos: f64 = a.iter().map(|x| x.max(0.0)).sum();
    if pos <= 1.0 {
        a.iter_mut().for_each(|x| *x = x.max(0.0));
    } else {
        project_simplex(a);
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Simplex,
    AtMostOne,
    Dense { mu: usize, mv: usize, scores: Vec<f64>, active: Vec<usize>, joint: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Factor {
    kind: Kind,
    comps: Vec<usize>,
    lambda: Vec<f64>,
    q: Vec<f64>,
}

/// Active-set solve of `min_z 1/2 |P z - a|^2 - c.z` over the simplex on joint
/// configurations of a pairwise factor; `P z` stacks the two marginals.
fn solve_dense_qp(mu: usize, mv: usize, c: &[f64], a: &[f64], active: &mut Vec<usize>, joint: &mut [f64]) {
    let (au, av) = a.split_at(mu);
    let value = |s: usize, mu_m: &[f64], mv_m: &[f64]| {
        let (i, j) = (s / mv, s % mv);
        c[s] + au[i] - mu_m[i] + av[j] - mv_m[j]
    };
    if active.is_empty() {
        let zeros_u = vec![0.0; mu];
        let zeros_v = vec![0.0; mv];
        let mut best = 0;
        for s in 1..mu * mv {
            if value(s, &zeros_u, &zeros_v) > value(best, &zeros_u, &zeros_v) {
                best = s;
            }
        }
        joint.iter_mut().for_each(|x| *x = 0.0);
        joint[best] = 1.0;
        active.push(best);
    }
    for _ in 0..200 {
        let k = active.len();
        let q = DMatrix::from_fn(k, k, |r, t| {
            let (s1, s2) = (active[r], active[t]);
            ((s1 / mv == s2 / mv) as u8 + (s1 % mv == s2 % mv) as u8) as f64
        });
        let with_ones = q.map(|x| x + 1.0);
        let eig = SymmetricEigen::new(with_ones);
        let (imin, &lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("active set is non-empty");
        if lmin < 1e-9 {
            let mut d: Vec<f64> = eig.eigenvectors.column(imin).iter().copied().collect();
            let cd: f64 = active.iter().zip(&d).map(|(&s, di)| c[s] * di).sum();
            if cd < 0.0 {
                d.iter_mut().for_each(|x| *x = -*x);
            }
            let mut step = f64::INFINITY;
            let mut block = 0;
            for (r, &s) in active.iter().enumerate() {
                if d[r] < -1e-12 {
                    let t = joint[s] / -d[r];
                    if t < step {
                        step = t;
                        block = r;
                    }
                }
            }
            if !step.is_finite() {
                break;
            }
            for (r, &s) in active.iter().enumerate() {
                joint[s] = (joint[s] + step * d[r]).max(0.0);
            }
            joint[active[block]] = 0.0;
            active.remove(block);
            continue;
        }
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        kkt.view_mut((0, 0), (k, k)).copy_from(&q);
        for r in 0..k {
            kkt[(r, k)] = 1.0;
            kkt[(k, r)] = 1.0;
        }
        let mut rhs = DVector::zeros(k + 1);
        for (r, &s) in active.iter().enumerate() {
            rhs[r] = c[s] + au[s / mv] + av[s % mv];
        }
        rhs[k] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else { break };
        let tau = sol[k];
        if (0..k).all(|r| sol[r] >= -1e-12) {
            for (r, &s) in active.iter().enumerate() {
                joint[s] = sol[r].max(0.0);
            }
            let (mu_m, mv_m) = marginals_of(joint, mu, mv);
            let mut best = None;
            let mut best_v = tau + 1e-12;
            for s in 0..mu * mv {
                let v = value(s, &mu_m, &mv_m);
                if v > best_v && !active.contains(&s) {
                    best_v = v;
                    best = Some(s);
                }
            }
            match best {
                Some(s) => active.push(s),
                None => break,
            }
        } else {
            let mut alpha = 1.0;
            let mut block = 0;
            for (r, &s) in active.iter().enumerate() {
                if sol[r] < 0.0 {
                    let t = joint[s] / (joint[s] - sol[r]);
                    if t < alpha {
                        alpha = t;
                        block = r;
                    }
                }
            }
            for (r, &s) in active.iter().enumerate() {
                joint[s] = (joint[s] + alpha * (sol[r] - joint[s])).max(0.0);
            }
            joint[active[block]] = 0.0;
            active.remove(block);
        }
    }
    let total: f64 = joint.iter().sum();
    if total > 0.0 {
        joint.iter_mut().for_each(|x| *x /= total);
    }
}

fn marginals_of(joint: &[f64], mu: usize, mv: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![0.0; mu];
    let mut v = vec![0.0; mv];
    for i in 0..mu {
        for j in 0..mv {
            u[i] += joint[i * mv + j];
            v[j] += joint[i * mv + j];
        }
    }
    (u, v)
}

struct Problem {
    node_comps: Vec<Vec<Option<usize>>>,
    theta: Vec<f64>,
    factors: Vec<Factor>,
    deg: Vec<f64>,
}

fn build(pot: &Potentials, logic: &[LogicFactor]) -> Result<Problem> {
    let mut node_comps = Vec::with_capacity(pot.n_nodes());
    let mut theta = Vec::new();
    for (v, u) in pot.unary.iter().enumerate() {
        let mut comps = Vec::with_capacity(u.len());
        for &s in u {
            if is_neg_inf(s) {
                comps.push(None);
            } else {
                comps.push(Some(theta.len()));
                theta.push(s);
            }
        }
        if comps.iter().all(Option::is_none) {
            return Err(Error::NoFeasibleLabeling);
        }
        let _ = v;
        node_comps.push(comps);
    }
    let mut factors = Vec::new();
    for comps in &node_comps {
        let c: Vec<usize> = comps.iter().flatten().copied().collect();
        factors.push(Factor { kind: Kind::Simplex, lambda: vec![0.0; c.len()], q: vec![0.0; c.len()], comps: c });
    }
    for (e, &(u, v)) in pot.edges.iter().enumerate() {
        let table = &pot.pairwise[e];
        if table.iter().all(|&x| x == 0.0) {
            continue;
        }
        let mv_full = pot.unary[v].len();
        let lu: Vec<usize> = (0..pot.unary[u].len()).filter(|&a| node_comps[u][a].is_some()).collect();
        let lv: Vec<usize> = (0..mv_full).filter(|&b| node_comps[v][b].is_some()).collect();
        let (mu, mv) = (lu.len(), lv.len());
        let mut scores = Vec::with_capacity(mu * mv);
        for &a in &lu {
            for &b in &lv {
                scores.push(table[a * mv_full + b]);
            }
        }
        let comps: Vec<usize> = lu
            .iter()
            .map(|&a| node_comps[u][a].unwrap())
            .chain(lv.iter().map(|&b| node_comps[v][b].unwrap()))
            .collect();
        factors.push(Factor {
            kind: Kind::Dense { mu, mv, scores, active: Vec::new(), joint: vec![0.0; mu * mv] },
            lambda: vec![0.0; comps.len()],
            q: vec![0.0; comps.len()],
            comps,
        });
    }
    for f in logic {
        let mut comps: Vec<usize> = Vec::new();
        for &(n, l) in &f.members {
            if n >= node_comps.len() || l >= node_comps[n].len() {
                return Err(Error::Contract(format!("logic member ({n}, {l}) out of range")));
            }
            if let Some(c) = node_comps[n][l] {
                if !comps.contains(&c) {
                    comps.push(c);
                }
            }
        }
        let kind = match f.kind {
            LogicKind::AtMostOne => Kind::AtMostOne,
            LogicKind::ExactlyOne => {
                if comps.is_empty() {
                    return Err(Error::NoFeasibleLabeling);
                }
                Kind::Simplex
            }
        };
        if comps.is_empty() {
            continue;
        }
        factors.push(Factor { kind, lambda: vec![0.0; comps.len()], q: vec![0.0; comps.len()], comps });
    }
    let mut deg = vec![0.0; theta.len()];
    for f in &factors {
        for &c in &f.comps {
            deg[c] += 1.0;
        }
    }
    Ok(Problem { node_comps, theta, factors, deg })
}

/// Lagrangian dual value: sum over factors of the best vertex score.
fn dual_value(pb: &Problem) -> f64 {
    let mut total = 0.0;
    for f in &pb.factors {
        let w: Vec<f64> = f.comps.iter().zip(&f.lambda).map(|(&c, l)| pb.theta[c] / pb.deg[c] + l).collect();
        total += match &f.kind {
            Kind::Simplex => w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            Kind::AtMostOne => w.iter().cloned().fold(0.0, f64::max),
            Kind::Dense { mu, mv, scores, .. } => {
                let mut best = f64::NEG_INFINITY;
                for i in 0..*mu {
                    for j in 0..*mv {
                        best = best.max(scores[i * mv + j] + w[i] + w[mu + j]);
                    }
                }
                best
            }
        };
    }
    total
}

fn violation(y: &[usize], logic: &[LogicFactor]) -> usize {
    logic
        .iter()
        .map(|f| {
            let k = f.active_count(y);
            match f.kind {
                LogicKind::AtMostOne => k.saturating_sub(1),
                LogicKind::ExactlyOne => k.abs_diff(1),
            }
        })
        .sum()
}

/// Greedy moves that strictly reduce the total logic violation, preferring
/// labels with high consensus mass.
fn repair(y: &mut [usize], probs: &[Vec<f64>], allowed: &[Vec<Option<usize>>], logic: &[LogicFactor]) {
    let mut current = violation(y, logic);
    while current > 0 {
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for f in logic {
            if f.satisfied(y) {
                continue;
            }
            for &(n, _) in &f.members {
                let old = y[n];
                for l in 0..probs[n].len() {
                    if l == old || allowed[n][l].is_none() {
                        continue;
                    }
                    y[n] = l;
                    let v = violation(y, logic);
                    y[n] = old;
                    let gain = probs[n][l] - probs[n][old];
                    let better = match best {
                        None => v < current,
                        Some((_, _, bv, bg)) => v < bv || (v == bv && gain > bg),
                    };
                    if better {
                        best = Some((n, l, v, gain));
                    }
                }
            }
        }
        match best {
            Some((n, l, v, _)) => {
                y[n] = l;
                current = v;
            }
            None => break,
        }
    }
}

/// AD3 on the LP relaxation of `max score(y)` subject to the logic factors.
pub fn ad3_map(pot: &Potentials, logic: &[LogicFactor], cfg: &Ad3Config) -> Result<InferenceResult> {
    if !(cfg.eta > 0.0) || !(cfg.residual_tol > 0.0) {
        return Err(Error::Config("AD3 needs positive eta and residual_tol".into()));
    }
    let mut pb = build(pot, logic)?;
    let nc = pb.theta.len();
    let total_deg: f64 = pb.deg.iter().sum();
    let mut p: Vec<f64> = vec![0.0; nc];
    for comps in &pb.node_comps {
        let k = comps.iter().flatten().count() as f64;
        for &c in comps.iter().flatten() {
            p[c] = 1.0 / k;
        }
    }
    let mut eta = cfg.eta;
    let mut best_bound = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut acc = vec![0.0; nc];
    for it in 1..=cfg.max_iters {
        iterations = it;
        for f in pb.factors.iter_mut() {
            let mut a: Vec<f64> = f
                .comps
                .iter()
                .zip(&f.lambda)
                .map(|(&c, l)| p[c] + (pb.theta[c] / pb.deg[c] + l) / eta)
                .collect();
            match &mut f.kind {
                Kind::Simplex => project_simplex(&mut a),
                Kind::AtMostOne => project_at_most_one(&mut a),
                Kind::Dense { mu, mv, scores, active, joint } => {
                    let c: Vec<f64> = scores.iter().map(|s| s / eta).collect();
                    solve_dense_qp(*mu, *mv, &c, &a, active, joint);
                    let (u, v) = marginals_of(joint, *mu, *mv);
                    a = u.into_iter().chain(v).collect();
                }
            }
            f.q = a;
        }
        acc.iter_mut().for_each(|x| *x = 0.0);
        for f in &pb.factors {
            for (&c, &q) in f.comps.iter().zip(&f.q) {
                acc[c] += q;
            }
        }
        let mut dual_sq = 0.0;
        for c in 0..nc {
            let new = acc[c] / pb.deg[c];
            dual_sq += pb.deg[c] * (new - p[c]).powi(2);
            p[c] = new;
        }
        let mut primal_sq = 0.0;
        for f in pb.factors.iter_mut() {
            for ((&c, &q), l) in f.comps.iter().zip(&f.q).zip(f.lambda.iter_mut()) {
                let r = q - p[c];
                primal_sq += r * r;
                *l -= eta * r;
            }
        }
        let rp = (primal_sq / total_deg).sqrt();
        let rd = eta * (dual_sq / total_deg).sqrt();
        let bound = dual_value(&pb);
        best_bound = best_bound.min(bound);
        if cfg.trace_csv.is_some() {
            trace.push(Ad3TraceRow { iteration: it, primal_residual: rp, dual_residual: rd, eta, bound });
        }
        if rp < cfg.residual_tol && rd < cfg.residual_tol {
            converged = true;
            break;
        }
        if cfg.adaptive_eta {
            if rp > 10.0 * rd {
                eta = (eta * 2.0).min(1e6);
            } else if rd > 10.0 * rp {
                eta = (eta / 2.0).max(1e-6);
            }
        }
    }
    let probs: Vec<Vec<f64>> = pb
        .node_comps
        .iter()
        .map(|comps| comps.iter().map(|c| c.map_or(-1.0, |c| p[c])).collect())
        .collect();
    let mut y: Vec<usize> = probs
        .iter()
        .map(|pr| {
            let mut best = 0;
            for (l, &v) in pr.iter().enumerate() {
                if v > pr[best] {
                    best = l;
                }
            }
            best
        })
        .collect();
    repair(&mut y, &probs, &pb.node_comps, logic);
    if let Some(path) = &cfg.trace_csv {
        let mut w = csv::Writer::from_path(path)?;
        for row in &trace {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    let score = pot.score(&y);
    Ok(InferenceResult {
        map_labeling: y,
        score,
        log_partition: None,
        marginals: None,
        bound: Some(best_bound),
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NEG_INF;

    #[test]
    fn simplex_projection_basics() {
        let mut a = vec![0.2, 0.3, 0.5];
        project_simplex(&mut a);
        assert_eq!(a, vec![0.2, 0.3, 0.5]);
        let mut b = vec![2.0, 0.0];
        project_simplex(&mut b);
        assert_eq!(b, vec![1.0, 0.0]);
        let mut c = vec![0.3, 0.1];
        project_at_most_one(&mut c);
        assert_eq!(c, vec![0.3, 0.1]);
    }

    #[test]
    fn exactly_one_over_three_indicators() {
        let pot = Potentials {
            unary: vec![vec![0.0, 0.1], vec![0.0, 0.7], vec![0.0, 0.3]],
            edges: vec![],
            pairwise: vec![],
        };
        let f = LogicFactor { kind: LogicKind::ExactlyOne, members: vec![(0, 1), (1, 1), (2, 1)] };
        let r = ad3_map(&pot, &[f], &Ad3Config::default()).unwrap();
        assert_eq!(r.map_labeling, vec![0, 1, 0]);
        assert!(r.converged);
        assert!((r.bound.unwrap() - 0.7).abs() < 1e-4);
    }

    #[test]
    fn single_node_argmax() {
        let pot = Potentials { unary: vec![vec![1.0, 3.0, 3.0]], edges: vec![], pairwise: vec![] };
        let r = ad3_map(&pot, &[], &Ad3Config::default()).unwrap();
        assert_eq!(r.map_labeling, vec![1]);
    }

    #[test]
    fn masked_labels_never_chosen() {
        let pot = Potentials { unary: vec![vec![NEG_INF, -5.0]], edges: vec![], pairwise: vec![] };
        let r = ad3_map(&pot, &[], &Ad3Config::default()).unwrap();
        assert_eq!(r.map_labeling, vec![1]);
        let bad = Potentials { unary: vec![vec![NEG_INF]], edges: vec![], pairwise: vec![] };
        assert!(matches!(ad3_map(&bad, &[], &Ad3Config::default()), Err(Error::NoFeasibleLabeling)));
    }

    #[test]
    fn dense_qp_reaches_kkt() {
        let (mu, mv) = (3, 2);
        let c = vec![0.5, -0.2, 0.1, 0.9, -1.0, 0.3];
        let a = vec![0.1, 0.4, -0.3, 0.2, 0.6];
        let mut active = Vec::new();
        let mut joint = vec![0.0; 6];
        solve_dense_qp(mu, mv, &c, &a, &mut active, &mut joint);
        let obj = |z: &[f64]| {
            let (u, v) = marginals_of(z, mu, mv);
            let r: f64 = u.iter().chain(&v).zip(&a).map(|(x, y)| (x - y).powi(2)).sum();
            0.5 * r - z.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>()
        };
        let base = obj(&joint);
        assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // no feasible perturbation toward any vertex improves the objective
        for s in 0..6 {
            let mut z = joint.clone();
            for x in z.iter_mut() {
                *x *= 1.0 - 1e-4;
            }
            z[s] += 1e-4;
            assert!(obj(&z) >= base - 1e-12);
        }
    }
}

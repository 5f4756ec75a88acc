use crate::error::{Error, Result};

/// Node and edge marginals of one structured example. `pairs[e]` names the
/// endpoints of edge table `edges[e]` (row-major `labels(u) x labels(v)`).
#[derive(Clone, Debug, PartialEq)]
pub struct CliqueMarginals {
    pub nodes: Vec<Vec<f64>>,
    pub pairs: Vec<(usize, usize)>,
    pub edges: Vec<Vec<f64>>,
}

/// Natural-log floor used wherever a log of a marginal is taken.
pub const LOG_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

#[inline]
pub fn safe_ln(p: f64) -> f64 {
    if p > 1e-300 {
        p.ln()
    } else {
        LOG_FLOOR
    }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::InfiniteDivergence);
            }
            s += a * (a / b).ln();
        }
    }
    Ok(s)
}

impl CliqueMarginals {
    pub fn uniform(sizes: &[usize], pairs: &[(usize, usize)]) -> Self {
        let nodes = sizes.iter().map(|&m| vec![1.0 / m as f64; m]).collect();
        let edges = pairs
            .iter()
            .map(|&(u, v)| {
                let k = sizes[u] * sizes[v];
                vec![1.0 / k as f64; k]
            })
            .collect();
        Self { nodes, pairs: pairs.to_vec(), edges }
    }

    /// Indicator marginals of a single labeling.
    pub fn indicator(sizes: &[usize], pairs: &[(usize, usize)], y: &[usize]) -> Self {
        let nodes = sizes
            .iter()
            .zip(y)
            .map(|(&m, &l)| {
                let mut v = vec![0.0; m];
                v[l] = 1.0;
                v
            })
            .collect();
        let edges = pairs
            .iter()
            .map(|&(u, v)| {
                let mut t = vec![0.0; sizes[u] * sizes[v]];
                t[y[u] * sizes[v] + y[v]] = 1.0;
                t
            })
            .collect();
        Self { nodes, pairs: pairs.to_vec(), edges }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.nodes.iter().map(Vec::len).collect()
    }

    /// Number of edges incident to each node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(u, v) in &self.pairs {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Check normalization, non-negativity, and edge/node consistency.
    pub fn validate(&self, sum_tol: f64, consistency_tol: f64) -> Result<()> {
        let check = |p: &[f64], what: &str| -> Result<()> {
            if p.iter().any(|&v| v < -1e-12 || !v.is_finite()) {
                return Err(Error::Contract(format!("{what} has negative or non-finite mass")));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > sum_tol {
                return Err(Error::Contract(format!("{what} sums to {s}")));
            }
            Ok(())
        };
        for (i, p) in self.nodes.iter().enumerate() {
            check(p, &format!("node {i} marginal"))?;
        }
        for (e, (t, &(u, v))) in self.edges.iter().zip(&self.pairs).enumerate() {
            check(t, &format!("edge {e} marginal"))?;
            let (mu, mv) = (self.nodes[u].len(), self.nodes[v].len());
            for a in 0..mu {
                let s: f64 = t[a * mv..(a + 1) * mv].iter().sum();
                if (s - self.nodes[u][a]).abs() > consistency_tol {
                    return Err(Error::Contract(format!("edge {e} inconsistent with node {u}")));
                }
            }
            for b in 0..mv {
                let s: f64 = (0..mu).map(|a| t[a * mv + b]).sum();
                if (s - self.nodes[v][b]).abs() > consistency_tol {
                    return Err(Error::Contract(format!("edge {e} inconsistent with node {v}")));
                }
            }
        }
        Ok(())
    }

    /// `self + gamma * (other - self)`
    pub fn interpolate(&self, other: &CliqueMarginals, gamma: f64) -> CliqueMarginals {
        let mix = |a: &Vec<f64>, b: &Vec<f64>| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + gamma * (y - x)).collect()
        };
        CliqueMarginals {
            nodes: self.nodes.iter().zip(&other.nodes).map(|(a, b)| mix(a, b)).collect(),
            pairs: self.pairs.clone(),
            edges: self.edges.iter().zip(&other.edges).map(|(a, b)| mix(a, b)).collect(),
        }
    }

    /// Probability of a full labeling under the junction-tree factorization
    /// `prod_edges mu_e / prod_nodes mu_v^(deg-1)`.
    pub fn joint_probability(&self, y: &[usize]) -> f64 {
        let deg = self.degrees();
        let mut p = 1.0;
        for (t, &(u, v)) in self.edges.iter().zip(&self.pairs) {
            p *= t[y[u] * self.nodes[v].len() + y[v]];
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let d = deg[i] as i32;
            let q = node[y[i]];
            if d == 0 {
                p *= q;
            } else if d > 1 {
                if q == 0.0 {
                    return 0.0;
                }
                p /= q.powi(d - 1);
            }
        }
        p
    }
}

/// Smoothed indicator marginals at a labeling: `1 - epsilon` on the chosen
/// label, the rest spread evenly; edge tables are products of node tables.
pub fn peaked_marginals(
    y: &[usize],
    sizes: &[usize],
    pairs: &[(usize, usize)],
    epsilon: f64,
) -> Result<CliqueMarginals> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("peaked marginals need 0 < epsilon < 1, got {epsilon}")));
    }
    if y.len() != sizes.len() || y.iter().zip(sizes).any(|(&l, &m)| l >= m) {
        return Err(Error::Contract("labeling does not match label spaces".into()));
    }
    let nodes: Vec<Vec<f64>> = sizes
        .iter()
        .zip(y)
        .map(|(&m, &l)| {
            if m == 1 {
                return vec![1.0];
            }
            let rest = epsilon / (m - 1) as f64;
            let mut v = vec![rest; m];
            v[l] = 1.0 - epsilon;
            v
        })
        .collect();
    let edges = pairs
        .iter()
        .map(|&(u, v)| {
            let mut t = Vec::with_capacity(sizes[u] * sizes[v]);
            for a in &nodes[u] {
                for b in &nodes[v] {
                    t.push(a * b);
                }
            }
            t
        })
        .collect();
    Ok(CliqueMarginals { nodes, pairs: pairs.to_vec(), edges })
}

fn check_mass(mu: &CliqueMarginals) -> Result<()> {
    if mu.nodes.iter().chain(&mu.edges).flatten().any(|&v| v < -1e-12) {
        return Err(Error::Contract("negative probability in marginals".into()));
    }
    Ok(())
}

/// `sum_edges H(mu_e) - sum_nodes (deg - 1) H(mu_v)`; exact for trees.
pub fn entropy_marginals(mu: &CliqueMarginals) -> Result<f64> {
    check_mass(mu)?;
    let deg = mu.degrees();
    let mut h: f64 = mu.edges.iter().map(|t| entropy(t)).sum();
    for (node, &d) in mu.nodes.iter().zip(&deg) {
        h -= (d as f64 - 1.0) * entropy(node);
    }
    Ok(h)
}

/// `sum_edges KL(mu_e || nu_e) - sum_nodes (deg - 1) KL(mu_v || nu_v)`.
pub fn kl_marginals(mu: &CliqueMarginals, nu: &CliqueMarginals) -> Result<f64> {
    check_mass(mu)?;
    check_mass(nu)?;
    let deg = mu.degrees();
    let mut d = 0.0;
    for (a, b) in mu.edges.iter().zip(&nu.edges) {
        d += kl(a, b)?;
    }
    for ((a, b), &k) in mu.nodes.iter().zip(&nu.nodes).zip(&deg) {
        d -= (k as f64 - 1.0) * kl(a, b)?;
    }
    Ok(d)
}

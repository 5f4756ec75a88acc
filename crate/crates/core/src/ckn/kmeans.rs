use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Result of [`spherical_kmeans`].
#[derive(Clone, Debug)]
pub struct KMeans {
    /// One unit-norm centroid per column.
    pub centroids: DMatrix<f64>,
    pub assignments: Vec<usize>,
    /// Sum of cosines to the assigned centroid, one entry per assignment pass.
    pub objective: Vec<f64>,
}

fn column_key(m: &DMatrix<f64>, j: usize) -> Vec<u64> {
    m.column(j).iter().map(|v| v.to_bits()).collect()
}

/// Indices of the first occurrence of each distinct column.
pub fn distinct_columns(m: &DMatrix<f64>) -> Vec<usize> {
    let mut seen = HashSet::new();
    (0..m.ncols()).filter(|&j| seen.insert(column_key(m, j))).collect()
}

fn assign(patches: &DMatrix<f64>, centroids: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    let sims = centroids.transpose() * patches;
    let mut assignments = Vec::with_capacity(patches.ncols());
    let mut best = Vec::with_capacity(patches.ncols());
    for j in 0..patches.ncols() {
        let col = sims.column(j);
        let mut arg = 0;
        for k in 1..col.len() {
            if col[k] > col[arg] {
                arg = k;
            }
        }
        assignments.push(arg);
        best.push(col[arg]);
    }
    (assignments, best)
}

/// Spherical K-means on unit-norm columns. Empty clusters are re-seeded with
/// the patch farthest (in cosine) from its current centroid.
pub fn spherical_kmeans(patches: &DMatrix<f64>, k: usize, iters: usize, seed: u64) -> Result<KMeans> {
    let n = patches.ncols();
    if k == 0 {
        return Err(Error::Config("k-means needs at least one cluster".into()));
    }
    for j in 0..n {
        let norm = patches.column(j).norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "k-means input column {j} has norm {norm}, expected unit norm"
            )));
        }
    }
    let mut distinct = distinct_columns(patches);
    if k > distinct.len() {
        return Err(Error::Config(format!(
            "requested {k} centroids but only {} distinct patches",
            distinct.len()
        )));
    }
    let mut rng = rng_from(seed);
    distinct.shuffle(&mut rng);
    let mut centroids = DMatrix::zeros(patches.nrows(), k);
    for (c, &j) in distinct.iter().take(k).enumerate() {
        centroids.set_column(c, &patches.column(j));
    }

    let mut objective = Vec::new();
    let (mut assignments, mut best) = assign(patches, &centroids);
    objective.push(best.iter().sum());
    for _ in 0..iters {
        let mut sums = DMatrix::zeros(patches.nrows(), k);
        let mut counts = vec![0usize; k];
        for (j, &a) in assignments.iter().enumerate() {
            let mut col = sums.column_mut(a);
            col += patches.column(j);
            counts[a] += 1;
        }
        // farthest-first list for re-seeding; ties broken by index
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)));
        let mut reseed = order.into_iter();
        let mut used = HashSet::new();
        for c in 0..k {
            let norm = sums.column(c).norm();
            if counts[c] > 0 && norm > 1e-12 {
                centroids.set_column(c, &(sums.column(c) / norm));
            } else {
                // next farthest patch not already used as a seed this round
                let j = loop {
                    match reseed.next() {
                        Some(j) if used.insert(column_key(patches, j)) => break Some(j),
                        Some(_) => continue,
                        None => break None,
                    }
                };
                if let Some(j) = j {
                    centroids.set_column(c, &patches.column(j));
                }
            }
        }
        let (next, next_best) = assign(patches, &centroids);
        objective.push(next_best.iter().sum());
        let changed = next != assignments;
        assignments = next;
        best = next_best;
        if !changed {
            break;
        }
    }
    Ok(KMeans { centroids, assignments, objective })
}

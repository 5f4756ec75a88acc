use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ckn::FeatureMap;
use crate::error::{Error, Result};
use crate::rng::child_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingField {
    pub name: String,
    pub vocab: usize,
    pub dim: usize,
}

/// Per-column categorical inputs; `None` columns encode to zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalMap {
    pub columns: Vec<Option<Vec<usize>>>,
}

/// Lookup tables, one per categorical field. A column's embedding is the
/// concatenation of its fields' rows, so the map height is the sum of the
/// field dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub fields: Vec<EmbeddingField>,
    /// `tables[f]` is row-major `vocab x dim`.
    pub tables: Vec<Vec<f64>>,
    pub trainable: bool,
}

impl Embedding {
    pub fn new(fields: Vec<EmbeddingField>, seed: u64) -> Result<Self> {
        if fields.is_empty() || fields.iter().any(|f| f.vocab == 0 || f.dim == 0) {
            return Err(Error::Config("embedding fields need positive vocab and dim".into()));
        }
        let mut rng = child_rng(seed, "embedding");
        let tables = fields
            .iter()
            .map(|f| {
                let s = 1.0 / (f.dim as f64).sqrt();
                (0..f.vocab * f.dim).map(|_| rng.gen_range(-s..s)).collect()
            })
            .collect();
        Ok(Self { fields, tables, trainable: true })
    }

    pub fn n_d(&self) -> usize {
        self.fields.iter().map(|f| f.dim).sum()
    }

    fn check(&self, input: &CategoricalMap) -> Result<()> {
        for (j, col) in input.columns.iter().enumerate() {
            if let Some(ix) = col {
                if ix.len() != self.fields.len() {
                    return Err(Error::Contract(format!("column {j} has {} fields", ix.len())));
                }
                for (f, (&v, field)) in ix.iter().zip(&self.fields).enumerate() {
                    if v >= field.vocab {
                        return Err(Error::Contract(format!(
                            "column {j}: index {v} out of range for field {f} ({})",
                            field.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `n_d x width` single-channel map.
    pub fn forward(&self, input: &CategoricalMap) -> Result<FeatureMap> {
        self.check(input)?;
        let width = input.columns.len();
        let mut map = FeatureMap::zeros(self.n_d(), width, 1);
        for (j, col) in input.columns.iter().enumerate() {
            let Some(ix) = col else { continue };
            let mut r = 0;
            for ((&v, field), table) in ix.iter().zip(&self.fields).zip(&self.tables) {
                for k in 0..field.dim {
                    map.at_mut(r + k, j)[0] = table[v * field.dim + k];
                }
                r += field.dim;
            }
        }
        Ok(map)
    }

    pub fn zero_grad(&self) -> Vec<Vec<f64>> {
        self.tables.iter().map(|t| vec![0.0; t.len()]).collect()
    }

    /// Accumulate the gradient of a map-level upstream gradient into the
    /// looked-up rows.
    pub fn backward(&self, input: &CategoricalMap, grad: &FeatureMap, out: &mut [Vec<f64>]) -> Result<()> {
        self.check(input)?;
        if grad.height != self.n_d() || grad.width != input.columns.len() || grad.channels != 1 {
            return Err(Error::Dimension("embedding gradient shape mismatch".into()));
        }
        for (j, col) in input.columns.iter().enumerate() {
            let Some(ix) = col else { continue };
            let mut r = 0;
            for ((&v, field), g) in ix.iter().zip(&self.fields).zip(out.iter_mut()) {
                for k in 0..field.dim {
                    g[v * field.dim + k] += grad.at(r + k, j)[0];
                }
                r += field.dim;
            }
        }
        Ok(())
    }

    pub fn step(&mut self, grads: &[Vec<f64>], lr: f64) {
        if !self.trainable {
            return;
        }
        for (t, g) in self.tables.iter_mut().zip(grads) {
            for (a, b) in t.iter_mut().zip(g) {
                *a -= lr * b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb() -> Embedding {
        Embedding::new(
            vec![
                EmbeddingField { name: "a".into(), vocab: 3, dim: 2 },
                EmbeddingField { name: "b".into(), vocab: 2, dim: 1 },
            ],
            1,
        )
        .unwrap()
    }

    #[test]
    fn forward_shape_and_zero_columns() {
        let e = emb();
        let m = e.forward(&CategoricalMap { columns: vec![Some(vec![2, 1]), None] }).unwrap();
        assert_eq!((m.height, m.width, m.channels), (3, 2, 1));
        assert_eq!(m.at(0, 0)[0], e.tables[0][4]);
        assert_eq!(m.at(2, 0)[0], e.tables[1][1]);
        assert!((0..3).all(|r| m.at(r, 1)[0] == 0.0));
    }

    #[test]
    fn out_of_range_rejected() {
        let e = emb();
        assert!(matches!(e.forward(&CategoricalMap { columns: vec![Some(vec![3, 0])] }), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_rows_accumulate() {
        let e = emb();
        let input = CategoricalMap { columns: vec![Some(vec![1, 0]), Some(vec![1, 1])] };
        let mut g = FeatureMap::zeros(3, 2, 1);
        g.at_mut(0, 0)[0] = 1.0;
        g.at_mut(0, 1)[0] = 2.5;
        let mut out = e.zero_grad();
        e.backward(&input, &g, &mut out).unwrap();
        assert_eq!(out[0][2], 3.5);
        let mut zero = e.zero_grad();
        e.backward(&input, &FeatureMap::zeros(3, 2, 1), &mut zero).unwrap();
        assert!(zero.iter().flatten().all(|&v| v == 0.0));
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SPREAD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    MinMax,
    PerSampleUnitNorm,
    Standardize,
    Robust,
    #[default]
    AverageUnitNorm,
}

/// A fitted feature scaler. Statistics are frozen after [`Scaler::fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scaler {
    MinMax { min: Vec<f64>, range: Vec<f64> },
    PerSampleUnitNorm,
    Standardize { mean: Vec<f64>, std: Vec<f64> },
    Robust { median: Vec<f64>, iqr: Vec<f64> },
    AverageUnitNorm { mean_norm: f64 },
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Scaler {
    pub fn fit(kind: ScalerKind, data: &[Vec<f64>]) -> Result<Self> {
        let first = data.first().ok_or_else(|| Error::Config("cannot fit a scaler on no samples".into()))?;
        let d = first.len();
        if data.iter().any(|x| x.len() != d) {
            return Err(Error::Dimension("samples of unequal length".into()));
        }
        let n = data.len() as f64;
        let column = |j: usize| -> Vec<f64> {
            let mut c: Vec<f64> = data.iter().map(|x| x[j]).collect();
            c.sort_by(f64::total_cmp);
            c
        };
        Ok(match kind {
            ScalerKind::MinMax => {
                let mut min = vec![f64::INFINITY; d];
                let mut max = vec![f64::NEG_INFINITY; d];
                for x in data {
                    for j in 0..d {
                        min[j] = min[j].min(x[j]);
                        max[j] = max[j].max(x[j]);
                    }
                }
                let range = min.iter().zip(&max).map(|(a, b)| (b - a).max(SPREAD_FLOOR)).collect();
                Scaler::MinMax { min, range }
            }
            ScalerKind::PerSampleUnitNorm => Scaler::PerSampleUnitNorm,
            ScalerKind::Standardize => {
                let mut mean = vec![0.0; d];
                for x in data {
                    for j in 0..d {
                        mean[j] += x[j] / n;
                    }
                }
                let mut var = vec![0.0; d];
                for x in data {
                    for j in 0..d {
                        var[j] += (x[j] - mean[j]).powi(2) / n;
                    }
                }
                let std = var.iter().map(|v| v.sqrt().max(SPREAD_FLOOR)).collect();
                Scaler::Standardize { mean, std }
            }
            ScalerKind::Robust => {
                let mut median = Vec::with_capacity(d);
                let mut iqr = Vec::with_capacity(d);
                for j in 0..d {
                    let c = column(j);
                    median.push(quantile(&c, 0.5));
                    iqr.push((quantile(&c, 0.75) - quantile(&c, 0.25)).max(SPREAD_FLOOR));
                }
                Scaler::Robust { median, iqr }
            }
            ScalerKind::AverageUnitNorm => {
                let m = data.iter().map(|x| norm(x)).sum::<f64>() / n;
                Scaler::AverageUnitNorm { mean_norm: if m > 0.0 { m } else { 1.0 } }
            }
        })
    }

    pub fn kind(&self) -> ScalerKind {
        match self {
            Scaler::MinMax { .. } => ScalerKind::MinMax,
            Scaler::PerSampleUnitNorm => ScalerKind::PerSampleUnitNorm,
            Scaler::Standardize { .. } => ScalerKind::Standardize,
            Scaler::Robust { .. } => ScalerKind::Robust,
            Scaler::AverageUnitNorm { .. } => ScalerKind::AverageUnitNorm,
        }
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        let expect = match self {
            Scaler::MinMax { min, .. } => Some(min.len()),
            Scaler::Standardize { mean, .. } => Some(mean.len()),
            Scaler::Robust { median, .. } => Some(median.len()),
            _ => None,
        };
        match expect {
            Some(d) if d != x.len() => Err(Error::Dimension(format!("scaler fitted on {d} features, got {}", x.len()))),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(match self {
            Scaler::MinMax { min, range } => x.iter().zip(min).zip(range).map(|((v, a), r)| (v - a) / r).collect(),
            Scaler::PerSampleUnitNorm => {
                let n = norm(x);
                if n > 0.0 {
                    x.iter().map(|v| v / n).collect()
                } else {
                    x.to_vec()
                }
            }
            Scaler::Standardize { mean, std } => x.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s).collect(),
            Scaler::Robust { median, iqr } => x.iter().zip(median).zip(iqr).map(|((v, m), s)| (v - m) / s).collect(),
            Scaler::AverageUnitNorm { mean_norm } => x.iter().map(|v| v / mean_norm).collect(),
        })
    }

    /// Pull a gradient on the scaled features back to the raw features `x`.
    pub fn backward(&self, x: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(match self {
            Scaler::MinMax { range: s, .. } | Scaler::Standardize { std: s, .. } | Scaler::Robust { iqr: s, .. } => {
                grad.iter().zip(s).map(|(g, s)| g / s).collect()
            }
            Scaler::PerSampleUnitNorm => {
                let n = norm(x);
                if n == 0.0 {
                    return Ok(grad.to_vec());
                }
                let radial: f64 = x.iter().zip(grad).map(|(a, b)| a * b).sum::<f64>() / n;
                x.iter().zip(grad).map(|(xv, g)| (g - xv / n * radial) / n).collect()
            }
            Scaler::AverageUnitNorm { mean_norm } => grad.iter().map(|g| g / mean_norm).collect(),
        })
    }
}

//! Loader for pre-embedded flight-connection data: one JSON object per line,
//!
//! ```text
//! {"instance": "m01", "flight": 17, "matrix": [[..20 values..], ...], "label": 3,
//!  "candidates": [18, 22, 40], "begin": false, "layover": true}
//! ```
//!
//! `matrix` is `n_d` rows by `width` columns; `label` is a candidate rank or
//! `width` for end-of-pairing. `candidates` (flight ids in the same instance)
//! enables the predecessor constraints; without it every rank is allowed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::ckn::FeatureMap;
use crate::error::{Error, Result};
use crate::graph::{LogicFactor, LogicKind};
use crate::trainer::{AuxTargets, NodeInput, StructExample, Template};

#[derive(Clone, Debug, Deserialize)]
pub struct ConnectionRecord {
    pub instance: String,
    pub flight: usize,
    pub matrix: Vec<Vec<f64>>,
    pub label: usize,
    #[serde(default)]
    pub candidates: Option<Vec<usize>>,
    #[serde(default)]
    pub begin: Option<bool>,
    #[serde(default)]
    pub layover: Option<bool>,
}

pub fn parse_connections(text: &str) -> Result<Vec<ConnectionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| serde_json::from_str(l).map_err(|e| Error::Parse { line: k + 1, msg: e.to_string() }))
        .collect()
}

fn to_map(rec: &ConnectionRecord, width: usize) -> Result<FeatureMap> {
    let h = rec.matrix.len();
    if h == 0 || rec.matrix.iter().any(|r| r.len() != width) {
        return Err(Error::Dimension(format!("flight {}: matrix rows must all have {width} columns", rec.flight)));
    }
    let mut m = FeatureMap::zeros(h, width, 1);
    for (r, row) in rec.matrix.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            m.at_mut(r, c)[0] = v;
        }
    }
    Ok(m)
}

/// Group records by instance (sorted by flight id) into structured examples.
pub fn connection_examples(records: &[ConnectionRecord]) -> Result<Vec<StructExample>> {
    let width = records.first().map_or(0, |r| r.matrix.first().map_or(0, Vec::len));
    let mut by_inst: BTreeMap<&str, Vec<&ConnectionRecord>> = BTreeMap::new();
    for r in records {
        by_inst.entry(&r.instance).or_default().push(r);
    }
    let mut out = Vec::with_capacity(by_inst.len());
    for (name, mut recs) in by_inst {
        recs.sort_by_key(|r| r.flight);
        let pos: BTreeMap<usize, usize> = recs.iter().enumerate().map(|(i, r)| (r.flight, i)).collect();
        if pos.len() != recs.len() {
            return Err(Error::Integrity(format!("instance {name}: duplicate flight ids")));
        }
        let mut sizes = Vec::with_capacity(recs.len());
        let mut classes = Vec::with_capacity(recs.len());
        let mut labels = Vec::with_capacity(recs.len());
        let mut preds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); recs.len()];
        for (i, r) in recs.iter().enumerate() {
            let k = r.candidates.as_ref().map_or(width, |c| c.len().min(width));
            sizes.push(k + 1);
            classes.push((0..k).chain(std::iter::once(width)).collect::<Vec<_>>());
            labels.push(match r.label {
                l if l == width => k,
                l if l < k => l,
                l => return Err(Error::Integrity(format!("instance {name}, flight {}: label {l} out of range", r.flight))),
            });
            for (rank, c) in r.candidates.iter().flatten().take(k).enumerate() {
                let j = *pos.get(c).ok_or_else(|| {
                    Error::Integrity(format!("instance {name}: candidate {c} of flight {} is unknown", r.flight))
                })?;
                preds[j].push((i, rank));
            }
        }
        let aux = recs.iter().all(|r| r.begin.is_some()).then(|| AuxTargets {
            own: vec![Vec::new(); recs.len()],
            begin: recs.iter().map(|r| r.begin.unwrap_or(false)).collect(),
            layover: recs.iter().map(|r| r.layover).collect(),
        });
        out.push(StructExample {
            inputs: recs.iter().map(|r| to_map(r, width).map(NodeInput::Map)).collect::<Result<_>>()?,
            template: Template {
                sizes,
                n_classes: width + 1,
                classes: Some(classes),
                transitions: false,
                logic: preds
                    .into_iter()
                    .filter(|m| !m.is_empty())
                    .map(|members| LogicFactor { kind: LogicKind::AtMostOne, members })
                    .collect(),
            },
            label: labels,
            aux,
        });
    }
    Ok(out)
}

pub fn load_connections(path: impl AsRef<Path>) -> Result<Vec<StructExample>> {
    connection_examples(&parse_connections(&std::fs::read_to_string(path)?)?)
}

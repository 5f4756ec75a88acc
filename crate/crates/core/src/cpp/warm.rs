use serde::{Deserialize, Serialize};

use super::master::MasterProblem;
use super::pool::{Column, CostConfig, Provenance};
use crate::crew::{check_pairing_feasibility, Instance, PairingPlan};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmMode {
    Clusters,
    Solution,
    Both,
}

impl std::str::FromStr for WarmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clusters" => Ok(Self::Clusters),
            "solution" => Ok(Self::Solution),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("unknown warm-start mode '{s}'"))),
        }
    }
}

/// Seed `master` with a predicted plan. The plan's pairings always join the
/// pool; `Solution` also makes them the starting incumbent and `Clusters`
/// makes them the rows of an aggregated pre-solve.
pub fn warm_start(
    mut master: MasterProblem,
    plan: &PairingPlan,
    inst: &Instance,
    cost: &CostConfig,
    mode: WarmMode,
) -> Result<MasterProblem> {
    let mut in_master = vec![false; master.n_flights];
    for &f in master.rows.iter().flatten() {
        in_master[f] = true;
    }
    let mut seen = vec![false; master.n_flights];
    let mut chosen = Vec::new();
    for p in &plan.pairings {
        for &f in &p.flights {
            if f >= master.n_flights {
                return Err(Error::Contract(format!("plan references unknown flight {f}")));
            }
            if !in_master[f] {
                return Err(Error::Contract(format!("plan covers flight {f} outside the master")));
            }
            if seen[f] {
                return Err(Error::Contract(format!("plan covers flight {f} twice")));
            }
            seen[f] = true;
        }
        let verdict = check_pairing_feasibility(p, inst)?;
        if !verdict.feasible {
            return Err(Error::Contract(format!("plan pairing starting with flight {} is infeasible", p.flights[0])));
        }
        let idx = master.pool.insert(Column::new(p.clone(), inst, cost, Provenance::InitialSolution)?);
        if !master.active.contains(&idx) {
            master.active.push(idx);
        }
        chosen.push(idx);
    }
    if matches!(mode, WarmMode::Solution | WarmMode::Both) {
        chosen.sort_unstable();
        master.incumbent = Some(chosen);
    }
    if matches!(mode, WarmMode::Clusters | WarmMode::Both) {
        let mut clusters: Vec<Vec<usize>> = plan
            .pairings
            .iter()
            .map(|p| {
                let mut c = p.flights.clone();
                c.sort_unstable();
                c
            })
            .collect();
        let mut singles: Vec<usize> = master.rows.iter().flatten().copied().filter(|&f| !seen[f]).collect();
        singles.sort_unstable();
        clusters.extend(singles.into_iter().map(|f| vec![f]));
        master.clusters = Some(clusters);
    }
    Ok(master)
}

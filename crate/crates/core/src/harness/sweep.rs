//! Parameter sweeps: every (value, seed) cell is an independent run.

use rayon::prelude::*;

use crate::error::Result;

use super::config::ScenarioConfig;
use super::run::{run_scenario_timed, ExperimentReport, Timings};

/// Outcome of one sweep cell. Failed cells keep their error so that the
/// summary always has one row per cell.
#[derive(Debug)]
pub struct SweepCell {
    pub value: String,
    pub seed: u64,
    pub outcome: std::result::Result<(ExperimentReport, Timings), String>,
}

impl SweepCell {
    pub fn report(&self) -> Option<&ExperimentReport> {
        self.outcome.as_ref().ok().map(|r| &r.0)
    }
}

/// Run the cross product of `values` and `seeds` with `param` set to each
/// value. Cells run in parallel and come back in value-major order.
pub fn sweep(config: &ScenarioConfig, param: &str, values: &[String], seeds: &[u64]) -> Result<Vec<SweepCell>> {
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let mut c = config.clone();
        c.set_param(param, v)?;
        c.sweep = None;
        c.validate()?;
        configs.push((v.clone(), c));
    }
    let cells: Vec<(&String, &ScenarioConfig, u64)> = configs.iter().flat_map(|(v, c)| seeds.iter().map(move |&s| (v, c, s))).collect();
    Ok(cells
        .into_par_iter()
        .map(|(v, c, seed)| SweepCell { value: v.clone(), seed, outcome: run_scenario_timed(c, seed).map_err(|e| e.to_string()) })
        .collect())
}

pub const SUMMARY_HEADER: &str =
    "param,value,seed,n_star,n_star_verbatim,n_star_centered,n_clusters,purities,max_object_purity,ari,null_self_transition,error";

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV row per cell, scored on the primary analysis. Purities are
/// listed per cluster, separated by `;`.
pub fn summary_csv(param: &str, cells: &[SweepCell]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for cell in cells {
        let head = format!("{},{},{}", quote(param), quote(&cell.value), cell.seed);
        match &cell.outcome {
            Ok((r, _)) => {
                let a = r.primary();
                let purities: Vec<String> = a.clusters.iter().map(|c| format!("{:.4}", c.purity)).collect();
                let max_obj = a.clusters.iter().map(|c| c.object_purity).fold(0.0, f64::max);
                out.push_str(&format!(
                    "{head},{},{},{},{},{},{max_obj:.4},{:.4},{:.4},\n",
                    a.n_star.selected,
                    a.n_star.verbatim,
                    a.n_star.centered,
                    a.clustering.n_clusters,
                    purities.join(";"),
                    a.ari,
                    r.null_self_transition
                ));
            }
            Err(e) => out.push_str(&format!("{head},,,,,,,,,{}\n", quote(e))),
        }
    }
    out
}

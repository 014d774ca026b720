//! Sample-rate curves and projected coverage.
//!
//! Coverage projects each sample onto one variable, bins that variable's box
//! uniformly, and counts distinct occupied cells.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::graph::ConstraintGraph;
use crate::runtime::{RunReport, SampleRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    pub bins_per_dim: usize,
    /// Strategy label used as the normalization reference.
    pub normalize_against: String,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig { bins_per_dim: 10, normalize_against: "tree".into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// Occupied cells per variable, in declaration order.
    pub occupied: Vec<usize>,
    /// Sample coordinates that fell outside the declared bounds and were
    /// clamped into the boundary cell.
    pub out_of_bounds: usize,
}

/// Grid cell of one variable slice.
pub fn cell_of(value: &[f64], lower: &[f64], upper: &[f64], bins: usize) -> (Vec<usize>, bool) {
    let mut clamped = false;
    let cell = value
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&lo, &hi))| {
            let u = (v - lo) / (hi - lo);
            if !(0.0..=1.0).contains(&u) {
                clamped = true;
            }
            ((u * bins as f64).floor().max(0.0) as usize).min(bins - 1)
        })
        .collect();
    (cell, clamped)
}

pub fn projected_coverage(samples: &[SampleRecord], g: &ConstraintGraph, cfg: &CoverageConfig) -> CoverageReport {
    let bins = cfg.bins_per_dim.max(1);
    let mut cells: Vec<HashSet<Vec<usize>>> = vec![HashSet::new(); g.n_vars()];
    let mut out_of_bounds = 0;
    for s in samples {
        for (v, spec) in g.variables().iter().enumerate() {
            let (cell, clamped) = cell_of(&s.values[v], &spec.lower, &spec.upper, bins);
            out_of_bounds += clamped as usize;
            cells[v].insert(cell);
        }
    }
    CoverageReport { occupied: cells.iter().map(HashSet::len).collect(), out_of_bounds }
}

/// `occupied / reference`; a zero reference maps to 1 when both are zero.
pub fn normalized(occupied: usize, reference: usize) -> f64 {
    match (occupied, reference) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        (o, r) => o as f64 / r as f64,
    }
}

/// Per-variable ratios of every strategy against `cfg.normalize_against`.
/// Strategies map to their (seed-averaged or single-run) occupied counts.
pub fn normalize_reports(
    per_strategy: &BTreeMap<String, Vec<f64>>,
    cfg: &CoverageConfig,
) -> Option<BTreeMap<String, Vec<f64>>> {
    let reference = per_strategy.get(&cfg.normalize_against)?;
    Some(
        per_strategy
            .iter()
            .map(|(k, counts)| {
                let ratios = counts
                    .iter()
                    .zip(reference)
                    .map(|(&c, &r)| if r == 0.0 { if c == 0.0 { 1.0 } else { f64::INFINITY } } else { c / r })
                    .collect();
                (k.clone(), ratios)
            })
            .collect(),
    )
}

/// Cumulative samples over elapsed time at every window boundary up to the
/// end of the run.
pub fn rate_curve(report: &RunReport, window: f64) -> Vec<(f64, f64)> {
    assert!(window > 0.0, "window must be positive");
    let mut emits: Vec<f64> = report.samples.iter().map(|s| s.t_emit).collect();
    emits.sort_by(f64::total_cmp);
    let steps = (report.wall_time / window).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut k = 0;
    for i in 1..=steps {
        let t = i as f64 * window;
        while k < emits.len() && emits[k] <= t {
            k += 1;
        }
        out.push((t, k as f64 / t));
    }
    if report.wall_time > steps as f64 * window || steps == 0 {
        let t = report.wall_time;
        if t > 0.0 {
            out.push((t, emits.len() as f64 / t));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_graph;
    use crate::varset::VarSet;

    fn record(values: Vec<Vec<f64>>, t_emit: f64) -> SampleRecord {
        SampleRecord {
            values,
            sequence: vec![VarSet::full(1)],
            max_eq: 0.0,
            max_ineq: 0.0,
            timings: vec![],
            t_emit,
            seed: 0,
        }
    }

    fn report(samples: Vec<SampleRecord>, wall_time: f64) -> RunReport {
        RunReport {
            strategy: "x".into(),
            seed: 0,
            samples_per_second: samples.len() as f64 / wall_time,
            samples,
            attempts: 0,
            wall_time,
            lambda: 0.5,
            calibration_costs: vec![],
            tallies: BTreeMap::new(),
            tree: None,
        }
    }

    #[test]
    fn coverage_examples() {
        let g = parse_graph("var x dim=2 lo=0,0 hi=1,1\n").unwrap();
        let cfg = CoverageConfig::default();
        assert_eq!(projected_coverage(&[], &g, &cfg).occupied, vec![0]);
        let same: Vec<_> = (0..5).map(|_| record(vec![vec![0.3, 0.3]], 0.0)).collect();
        assert_eq!(projected_coverage(&same, &g, &cfg).occupied, vec![1]);
        let edge = [record(vec![vec![1.0, 1.5]], 0.0), record(vec![vec![0.95, 0.99]], 0.0)];
        let rep = projected_coverage(&edge, &g, &cfg);
        assert_eq!((rep.occupied[0], rep.out_of_bounds), (1, 1));
    }

    #[test]
    fn rate_examples() {
        let samples: Vec<_> = (1..=10).map(|i| record(vec![vec![0.0]], i as f64 * 0.1)).collect();
        let curve = rate_curve(&report(samples, 1.0), 0.1);
        let last = curve.last().unwrap();
        assert!((last.0 - 1.0).abs() < 1e-12 && (last.1 - 10.0).abs() < 1e-9);
        let empty = rate_curve(&report(vec![], 1.0), 0.25);
        assert_eq!(empty.len(), 4);
        assert!(empty.iter().all(|&(_, r)| r == 0.0));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalized(0, 0), 1.0);
        assert_eq!(normalized(3, 6), 0.5);
        let mut m = BTreeMap::new();
        m.insert("tree".to_string(), vec![4.0, 2.0]);
        m.insert("random".to_string(), vec![2.0, 2.0]);
        let n = normalize_reports(&m, &CoverageConfig::default()).unwrap();
        assert_eq!(n["tree"], vec![1.0, 1.0]);
        assert_eq!(n["random"], vec![0.5, 1.0]);
    }
}

//! The benchmark matrix: every instance × strategy × seed, run in parallel,
//! summarized into CSV files with a fixed row order.

use std::collections::BTreeMap;
use std::path::Path;

use cgraph_core::mcts::WarmstartStore;
use cgraph_core::runtime::{generate, RunReport, SampleRecord, Strategy};
use rayon::prelude::*;

use crate::commands::{averaged_coverage, create_out_dir, load_store, write_coverage_rows};
use crate::config::{build_strategy, load_all, runtime_error, ExperimentConfig, Instance, Overrides};
use crate::CliError;

struct Cell {
    instance: usize,
    strategy: usize,
    seed: u64,
    outcome: Result<RunReport, CliError>,
}

fn status(outcome: &Result<RunReport, CliError>) -> &'static str {
    match outcome {
        Ok(_) => "ok",
        Err(CliError::NoPath(_)) => "no_path",
        Err(CliError::Validation(_)) => "invalid",
        Err(_) => "error",
    }
}

/// Per-instance warm stores. An explicit store is shared by everyone;
/// otherwise each instance gets the seed-0 tree statistics of the other
/// instances in its family, so it never learns from itself.
fn warm_stores(
    cfg: &ExperimentConfig,
    instances: &[Instance],
) -> Result<Vec<Option<WarmstartStore>>, CliError> {
    if let Some(store) = load_store(cfg)? {
        return Ok(vec![Some(store); instances.len()]);
    }
    if !cfg.strategies.iter().any(|s| s.starts_with("tree_warm") || s.starts_with("tree-warm")) {
        return Ok(vec![None; instances.len()]);
    }
    let trees: Vec<Option<_>> = instances
        .par_iter()
        .map(|inst| {
            generate(&inst.graph, &inst.table, &Strategy::tree(), cfg.budget, &cfg.run, 0)
                .ok()
                .and_then(|r| r.tree)
        })
        .collect();
    Ok(instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut store = WarmstartStore::new(cfg.run.n_equiv);
            for (j, other) in instances.iter().enumerate() {
                if j != i && other.family == inst.family {
                    if let Some(tree) = &trees[j] {
                        store.record_tree(tree);
                    }
                }
            }
            Some(store)
        })
        .collect())
}

pub fn bench(o: &Overrides, jobs: Option<usize>, fixtures: Option<&Path>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::resolve(o)?;
    let mut instances = Vec::new();
    for sel in &cfg.scenarios {
        instances.extend(load_all(sel, fixtures)?);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    create_out_dir(&cfg)?;

    let cells: Vec<Cell> = pool.install(|| -> Result<_, CliError> {
        let stores = warm_stores(&cfg, &instances)?;
        let mut plan = Vec::new();
        for (i, inst) in instances.iter().enumerate() {
            for (s, spec) in cfg.strategies.iter().enumerate() {
                let strategy = build_strategy(spec, inst, stores[i].as_ref()).map_err(|e| e.to_string());
                for &seed in &cfg.seeds {
                    plan.push((i, s, seed, strategy.clone()));
                }
            }
        }
        Ok(plan
            .into_par_iter()
            .map(|(i, s, seed, strategy)| {
                let inst = &instances[i];
                let outcome = strategy.map_err(CliError::Validation).and_then(|st| {
                    generate(&inst.graph, &inst.table, &st, cfg.budget, &cfg.run, seed).map_err(runtime_error)
                });
                Cell { instance: i, strategy: s, seed, outcome }
            })
            .collect())
    })?;

    write_runs(&cfg, &instances, &cells)?;
    write_summary(&cfg, &cells)?;
    write_coverage(&cfg, &instances, &cells)?;
    write_rates(&cfg, &cells)?;

    let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
    println!("{} runs ({failed} failed), results in {}", cells.len(), cfg.out.display());
    for c in cells.iter().filter(|c| c.outcome.is_err()) {
        if let Err(e) = &c.outcome {
            eprintln!("  {} {} seed {}: {e}", instances[c.instance].label, cfg.strategies[c.strategy], c.seed);
        }
    }
    Ok(())
}

fn label(cfg: &ExperimentConfig, cell: &Cell) -> String {
    match &cell.outcome {
        Ok(r) => r.strategy.clone(),
        Err(_) => {
            let spec = &cfg.strategies[cell.strategy];
            spec.split_once(':').map_or(spec.as_str(), |(_, a)| a).to_string()
        }
    }
}

fn write_runs(cfg: &ExperimentConfig, instances: &[Instance], cells: &[Cell]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(cfg.out.join("runs.csv"))?;
    w.write_record([
        "instance",
        "strategy",
        "seed",
        "status",
        "samples",
        "attempts",
        "wall_time",
        "samples_per_second",
        "lambda",
    ])?;
    for c in cells {
        let mut row = vec![instances[c.instance].label.clone(), label(cfg, c), c.seed.to_string(), status(&c.outcome).into()];
        match &c.outcome {
            Ok(r) => row.extend([
                r.samples.len().to_string(),
                r.attempts.to_string(),
                r.wall_time.to_string(),
                r.samples_per_second.to_string(),
                r.lambda.to_string(),
            ]),
            Err(_) => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn write_summary(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(cfg.out.join("summary.csv"))?;
    w.write_record(["strategy", "runs", "failed", "mean_samples", "std_samples", "mean_samples_per_second"])?;
    for (s, _) in cfg.strategies.iter().enumerate() {
        let mine: Vec<&Cell> = cells.iter().filter(|c| c.strategy == s).collect();
        let ok: Vec<&RunReport> = mine.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
        let samples: Vec<f64> = ok.iter().map(|r| r.samples.len() as f64).collect();
        let rates: Vec<f64> = ok.iter().map(|r| r.samples_per_second).collect();
        let (m, sd) = mean_std(&samples);
        w.write_record([
            label(cfg, mine[0]),
            mine.len().to_string(),
            (mine.len() - ok.len()).to_string(),
            m.to_string(),
            sd.to_string(),
            mean_std(&rates).0.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_coverage(cfg: &ExperimentConfig, instances: &[Instance], cells: &[Cell]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(cfg.out.join("coverage.csv"))?;
    w.write_record(["strategy", "instance", "variable", "occupied_cells", "normalized_ratio"])?;
    for (i, inst) in instances.iter().enumerate() {
        let mut by_strategy: BTreeMap<String, BTreeMap<u64, Vec<SampleRecord>>> = BTreeMap::new();
        for c in cells.iter().filter(|c| c.instance == i) {
            if let Ok(r) = &c.outcome {
                by_strategy.entry(r.strategy.clone()).or_default().insert(c.seed, r.samples.clone());
            }
        }
        let counts = averaged_coverage(&inst.graph, &by_strategy, &cfg.coverage);
        write_coverage_rows(&mut w, &inst.label, &inst.graph, &counts, &cfg.coverage)?;
    }
    w.flush()?;
    Ok(())
}

/// Cumulative sample rate at each window boundary, averaged over every
/// successful run of a strategy.
fn write_rates(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(cfg.out.join("rates.csv"))?;
    w.write_record(["strategy", "t", "rate"])?;
    let steps = (cfg.budget / cfg.rate_window + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (1..=steps).map(|k| k as f64 * cfg.rate_window).collect();
    if times.is_empty() {
        times.push(cfg.budget);
    }
    for (s, _) in cfg.strategies.iter().enumerate() {
        let ok: Vec<&RunReport> = cells.iter().filter(|c| c.strategy == s).filter_map(|c| c.outcome.as_ref().ok()).collect();
        let Some(first) = ok.first() else { continue };
        for &t in &times {
            let rates: Vec<f64> = ok.iter().map(|r| r.samples_before(t) as f64 / t).collect();
            w.write_record([first.strategy.clone(), t.to_string(), mean_std(&rates).0.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

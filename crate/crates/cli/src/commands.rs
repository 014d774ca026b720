use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use cgraph_core::mcts::WarmstartStore;
use cgraph_core::metrics::{normalize_reports, projected_coverage, CoverageConfig};
use cgraph_core::runtime::{generate, RunReport, SampleRecord};
use cgraph_core::scenarios::{
    adjacency, build_scenario, fixture_file_name, format_adjacency, generate_fixture, instance_count, FAMILIES,
};
use cgraph_core::ConstraintGraph;
use serde_json::Value;

use crate::config::{build_strategy, load_one, runtime_error, ExperimentConfig, Instance, Overrides};
use crate::CliError;

pub fn enumerate(sel: &str, dot: Option<&Path>, fixtures: Option<&Path>) -> Result<(), CliError> {
    let inst = load_one(sel, fixtures)?;
    let c = inst.table.counts();
    println!(
        "graph {}: {} variables, {} constraints",
        inst.label,
        inst.graph.n_vars(),
        inst.graph.constraints().len()
    );
    println!("{c}");
    println!("{} total, {} surviving, {:.2}% pruned", c.total, c.surviving, c.ratio());
    if let Some(path) = dot {
        fs::write(path, inst.table.to_dot(&inst.graph)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn load_store(cfg: &ExperimentConfig) -> Result<Option<WarmstartStore>, CliError> {
    match &cfg.warmstart {
        Some(p) if p.is_file() => WarmstartStore::load(p, cfg.run.n_equiv)
            .map(Some)
            .map_err(|e| CliError::Parse(format!("{}: {e}", p.display()))),
        _ => Ok(None),
    }
}

pub fn create_out_dir(cfg: &ExperimentConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(format!("{}: {e}", cfg.out.display())))?;
    fs::write(cfg.out.join("config.toml"), cfg.snapshot())?;
    Ok(())
}

/// One JSON line per sample, tagged with its instance and strategy.
pub fn sample_line(inst: &Instance, report: &RunReport, s: &SampleRecord) -> String {
    let mut v = s.to_json(&inst.graph);
    v["instance"] = Value::from(inst.label.clone());
    v["strategy"] = Value::from(report.strategy.clone());
    v.to_string()
}

pub fn sample(o: &Overrides, save_warmstart: Option<&Path>, fixtures: Option<&Path>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::resolve(o)?;
    let store = load_store(&cfg)?;
    let instances: Vec<Instance> = cfg.scenarios.iter().map(|s| load_one(s, fixtures)).collect::<Result<_, _>>()?;
    create_out_dir(&cfg)?;

    let mut saved = match save_warmstart {
        Some(p) if p.is_file() => {
            WarmstartStore::load(p, cfg.run.n_equiv).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?
        }
        _ => WarmstartStore::new(cfg.run.n_equiv),
    };
    let mut samples = fs::File::create(cfg.out.join("samples.jsonl"))?;
    let mut runs = csv::Writer::from_path(cfg.out.join("runs.csv"))?;
    runs.write_record(["instance", "strategy", "seed", "samples", "attempts", "wall_time", "samples_per_second", "lambda"])?;
    for inst in &instances {
        for spec in &cfg.strategies {
            let strategy = build_strategy(spec, inst, store.as_ref())?;
            for &seed in &cfg.seeds {
                let report =
                    generate(&inst.graph, &inst.table, &strategy, cfg.budget, &cfg.run, seed).map_err(runtime_error)?;
                for s in &report.samples {
                    writeln!(samples, "{}", sample_line(inst, &report, s))?;
                }
                runs.write_record([
                    inst.label.clone(),
                    report.strategy.clone(),
                    seed.to_string(),
                    report.samples.len().to_string(),
                    report.attempts.to_string(),
                    report.wall_time.to_string(),
                    report.samples_per_second.to_string(),
                    report.lambda.to_string(),
                ])?;
                println!(
                    "{} {} seed {seed}: {} samples from {} attempts in {:.3}s",
                    inst.label,
                    report.strategy,
                    report.samples.len(),
                    report.attempts,
                    report.wall_time
                );
                if let Some(tree) = &report.tree {
                    saved.record_tree(tree);
                }
            }
        }
    }
    runs.flush()?;
    if let Some(p) = save_warmstart {
        saved.save(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn record_from_json(g: &ConstraintGraph, v: &Value, origin: &str) -> Result<SampleRecord, CliError> {
    let bad = |m: &str| CliError::Parse(format!("{origin}: {m}"));
    let values = g
        .variables()
        .iter()
        .map(|var| {
            let arr = v["values"][&var.id].as_array().ok_or_else(|| bad(&format!("missing values for `{}`", var.id)))?;
            let xs: Option<Vec<f64>> = arr.iter().map(Value::as_f64).collect();
            let xs = xs.ok_or_else(|| bad(&format!("non-numeric value for `{}`", var.id)))?;
            if xs.len() != var.dim {
                return Err(bad(&format!("`{}` has {} values, expected {}", var.id, xs.len(), var.dim)));
            }
            Ok(xs)
        })
        .collect::<Result<_, _>>()?;
    Ok(SampleRecord {
        values,
        sequence: vec![],
        max_eq: v["max_eq"].as_f64().unwrap_or(0.0),
        max_ineq: v["max_ineq"].as_f64().unwrap_or(0.0),
        timings: vec![],
        t_emit: v["t_emit"].as_f64().unwrap_or(0.0),
        seed: v["seed"].as_u64().unwrap_or(0),
    })
}

/// Seed-averaged occupied cells per variable for each strategy.
pub fn averaged_coverage(
    g: &ConstraintGraph,
    by_strategy: &BTreeMap<String, BTreeMap<u64, Vec<SampleRecord>>>,
    cfg: &CoverageConfig,
) -> BTreeMap<String, Vec<f64>> {
    by_strategy
        .iter()
        .map(|(label, seeds)| {
            let mut avg = vec![0.0; g.n_vars()];
            for samples in seeds.values() {
                for (a, o) in avg.iter_mut().zip(projected_coverage(samples, g, cfg).occupied) {
                    *a += o as f64 / seeds.len() as f64;
                }
            }
            (label.clone(), avg)
        })
        .collect()
}

pub fn write_coverage_rows<W: Write>(
    out: &mut csv::Writer<W>,
    instance: &str,
    g: &ConstraintGraph,
    counts: &BTreeMap<String, Vec<f64>>,
    cfg: &CoverageConfig,
) -> Result<bool, CliError> {
    let ratios = normalize_reports(counts, cfg);
    for (label, occ) in counts {
        for (v, var) in g.variables().iter().enumerate() {
            let ratio = ratios.as_ref().map(|r| r[label][v].to_string()).unwrap_or_default();
            out.write_record([label.as_str(), instance, var.id.as_str(), &occ[v].to_string(), &ratio])?;
        }
    }
    Ok(ratios.is_some())
}

pub fn coverage(
    sel: &str,
    files: &[PathBuf],
    bins: usize,
    normalize_against: &str,
    fixtures: Option<&Path>,
) -> Result<(), CliError> {
    if bins == 0 {
        return Err(CliError::Validation("--bins must be at least 1".into()));
    }
    let inst = load_one(sel, fixtures)?;
    let cfg = CoverageConfig { bins_per_dim: bins, normalize_against: normalize_against.to_string() };
    let mut by_strategy: BTreeMap<String, BTreeMap<u64, Vec<SampleRecord>>> = BTreeMap::new();
    for path in files {
        let file = fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let origin = format!("{}:{}", path.display(), i + 1);
            let v: Value = serde_json::from_str(&line).map_err(|e| CliError::Parse(format!("{origin}: {e}")))?;
            let label = v["strategy"].as_str().unwrap_or("samples").to_string();
            let rec = record_from_json(&inst.graph, &v, &origin)?;
            by_strategy.entry(label).or_default().entry(rec.seed).or_default().push(rec);
        }
    }
    let counts = averaged_coverage(&inst.graph, &by_strategy, &cfg);
    let mut out = csv::Writer::from_writer(std::io::stdout());
    out.write_record(["strategy", "instance", "variable", "occupied_cells", "normalized_ratio"])?;
    let normalized = write_coverage_rows(&mut out, &inst.label, &inst.graph, &counts, &cfg)?;
    out.flush()?;
    if !normalized {
        eprintln!("cgraph: no samples from `{normalize_against}`; normalized_ratio left empty");
    }
    Ok(())
}

pub fn export_scenarios(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut written = 0;
    for family in FAMILIES {
        let n = instance_count(family).map_err(|e| CliError::Validation(e.to_string()))?;
        for i in 0..n {
            let text = generate_fixture(family, i).map_err(|e| CliError::Validation(e.to_string()))?;
            fs::write(out.join(fixture_file_name(family, i)), text)?;
            written += 1;
        }
        if family != "ik2" {
            let g = build_scenario(family, 0).map_err(|e| CliError::Parse(e.to_string()))?;
            fs::write(out.join(format!("{family}.adjacency")), format_adjacency(&adjacency(&g)))?;
        }
    }
    println!("wrote {written} problem files to {}", out.display());
    Ok(())
}

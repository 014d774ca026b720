//! Experiment configuration: TOML file, command-line overrides, and the
//! resolved snapshot written next to results.

use std::fs;
use std::path::{Path, PathBuf};

use cgraph_core::graph::parse_graph;
use cgraph_core::mcts::{CostSource, WarmstartStore};
use cgraph_core::metrics::CoverageConfig;
use cgraph_core::runtime::{load_expert, LambdaSpec, RunConfig, RuntimeError, Strategy, StrategyKind};
use cgraph_core::scenarios::{build_scenario, check_witness, fixture_file_name, instance_count, ScenarioRef, FAMILIES};
use cgraph_core::states::{pruned_table, Structure, TransitionTable};
use cgraph_core::ConstraintGraph;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Problem files or scenario selectors. A bare family name stands for
    /// every instance of that family in `bench`, and for instance 0 in
    /// `sample`.
    pub scenarios: Vec<String>,
    /// `tree`, `tree_warm`, `random`, or `expert:<name | file | sequence>`.
    pub strategies: Vec<String>,
    /// Seconds per run (virtual seconds under the cost_proxy clock).
    pub budget: f64,
    pub seeds: Vec<u64>,
    pub rate_window: f64,
    pub out: PathBuf,
    pub warmstart: Option<PathBuf>,
    pub run: RunConfig,
    pub coverage: CoverageConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenarios: vec!["pick_place".into()],
            strategies: vec!["tree".into(), "random".into()],
            budget: 1.0,
            seeds: vec![0],
            rate_window: 0.1,
            out: PathBuf::from("results"),
            warmstart: None,
            run: RunConfig::default(),
            coverage: CoverageConfig::default(),
        }
    }
}

/// Command-line values that replace their config-file counterparts.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario selector (`family[:index]`) or problem file; repeatable.
    #[arg(long = "scenario")]
    pub scenarios: Vec<String>,
    /// Strategy: tree, tree_warm, random, expert:<name|file|sequence>; repeatable.
    #[arg(long = "strategy")]
    pub strategies: Vec<String>,
    /// Budget per run in seconds.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Seeds as `0,1,2` or a half-open range `0..5`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Warmstart store used by tree_warm.
    #[arg(long)]
    pub warmstart: Option<PathBuf>,
    /// wall_clock or cost_proxy.
    #[arg(long)]
    pub cost_source: Option<String>,
    /// A fixed value in (0, 1), or `auto:K` for K calibration rollouts.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub exploration: Option<f64>,
    /// Raw cost units per reward unit.
    #[arg(long)]
    pub time_unit: Option<f64>,
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Validation(format!("bad seed list `{text}`; use `0,1,2` or `0..5`"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn parse_lambda(text: &str) -> Result<LambdaSpec, CliError> {
    let bad = || CliError::Validation(format!("bad lambda `{text}`; use a number in (0, 1) or auto:K"));
    match text.strip_prefix("auto") {
        Some("") => Ok(LambdaSpec::Auto(20)),
        Some(rest) => Ok(LambdaSpec::Auto(rest.trim_start_matches(':').parse().map_err(|_| bad())?)),
        None => Ok(LambdaSpec::Fixed(text.parse().map_err(|_| bad())?)),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    /// Config file (or defaults) with the overrides applied, then validated.
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if !o.scenarios.is_empty() {
            cfg.scenarios = o.scenarios.clone();
        }
        if !o.strategies.is_empty() {
            cfg.strategies = o.strategies.clone();
        }
        if let Some(b) = o.budget {
            cfg.budget = b;
        }
        if let Some(s) = &o.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(p) = &o.out {
            cfg.out = p.clone();
        }
        if let Some(p) = &o.warmstart {
            cfg.warmstart = Some(p.clone());
        }
        if let Some(c) = &o.cost_source {
            cfg.run.cost_source = match c.as_str() {
                "wall_clock" => CostSource::WallClock,
                "cost_proxy" => CostSource::CostProxy,
                other => return Err(CliError::Validation(format!("unknown cost source `{other}`"))),
            };
        }
        if let Some(l) = &o.lambda {
            cfg.run.lambda = parse_lambda(l)?;
        }
        if let Some(c) = o.exploration {
            cfg.run.exploration = c;
        }
        if let Some(t) = o.time_unit {
            cfg.run.time_unit = Some(t);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: &str| Err(CliError::Validation(m.to_string()));
        if self.scenarios.is_empty() {
            return fail("at least one scenario is required");
        }
        if self.strategies.is_empty() {
            return fail("at least one strategy is required");
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required");
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return fail("budget must be positive");
        }
        if !(self.rate_window > 0.0) {
            return fail("rate_window must be positive");
        }
        if self.coverage.bins_per_dim == 0 {
            return fail("coverage.bins_per_dim must be at least 1");
        }
        for s in &self.strategies {
            let kind = s.split_once(':').map_or(s.as_str(), |(k, _)| k);
            kind.parse::<StrategyKind>().map_err(runtime_error)?;
            if kind == "expert" && !s.contains(':') {
                return fail("expert strategies are written expert:<name|file|sequence>");
            }
        }
        self.run.validate().map_err(runtime_error)
    }

    /// TOML text that reproduces this configuration.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("experiment configs serialize")
    }
}

pub fn runtime_error(e: RuntimeError) -> CliError {
    match e {
        RuntimeError::NoPath => CliError::NoPath(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

/// A resolved problem: graph, pruned table, and the family used to pick
/// builtin experts and to group warmstart stores.
pub struct Instance {
    pub label: String,
    pub family: String,
    pub graph: ConstraintGraph,
    pub table: TransitionTable,
}

impl Instance {
    fn new(label: String, family: String, graph: ConstraintGraph) -> Result<Self, CliError> {
        let table = pruned_table(&Structure::from(&graph)).map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(Instance { label, family, graph, table })
    }
}

fn load_file(path: &Path) -> Result<ConstraintGraph, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let g = parse_graph(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    if g.witness.is_some() {
        check_witness(&g, &path.display().to_string()).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    Ok(g)
}

fn load_scenario(r: &ScenarioRef, fixtures: Option<&Path>) -> Result<Instance, CliError> {
    let g = match fixtures {
        Some(dir) => load_file(&dir.join(fixture_file_name(&r.family, r.index)))?,
        None => build_scenario(&r.family, r.index).map_err(|e| CliError::Parse(e.to_string()))?,
    };
    Instance::new(format!("{}_{}", r.family, r.index), r.family.clone(), g)
}

/// One selector to one instance: a file, or `family[:index]`.
pub fn load_one(sel: &str, fixtures: Option<&Path>) -> Result<Instance, CliError> {
    let path = Path::new(sel);
    if path.is_file() {
        let g = load_file(path)?;
        let label = if g.name.is_empty() {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        } else {
            g.name.clone()
        };
        return Instance::new(label.clone(), label, g);
    }
    let r = ScenarioRef::parse(sel).map_err(|e| CliError::Validation(e.to_string()))?;
    load_scenario(&r, fixtures)
}

/// Like [`load_one`], but a bare family name expands to all its instances.
pub fn load_all(sel: &str, fixtures: Option<&Path>) -> Result<Vec<Instance>, CliError> {
    if FAMILIES.contains(&sel) && !Path::new(sel).is_file() {
        let n = instance_count(sel).map_err(|e| CliError::Validation(e.to_string()))?;
        return (0..n)
            .map(|index| load_scenario(&ScenarioRef { family: sel.to_string(), index }, fixtures))
            .collect();
    }
    Ok(vec![load_one(sel, fixtures)?])
}

/// Builds the runtime strategy named by `text` on `inst`. Expert names may
/// drop the family suffix (`expert2` means `expert2-<family>`). The label is
/// `text` without its `expert:` prefix, so cells aggregate across families.
pub fn build_strategy(text: &str, inst: &Instance, store: Option<&WarmstartStore>) -> Result<Strategy, CliError> {
    let (kind, arg) = match text.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (text, None),
    };
    let mut strategy = match kind.parse::<StrategyKind>().map_err(runtime_error)? {
        StrategyKind::Tree => Strategy::tree(),
        StrategyKind::Random => Strategy::random(),
        StrategyKind::TreeWarm => {
            let store = store.ok_or_else(|| CliError::Validation("tree_warm needs a warmstart store".into()))?;
            Strategy::tree_warm(store.clone())
        }
        StrategyKind::Expert => {
            let arg = arg.ok_or_else(|| CliError::Validation("expert strategies are written expert:<name>".into()))?;
            let qualified = format!("{arg}-{}", inst.family);
            let name = if cgraph_core::runtime::BUILTIN_EXPERTS.iter().any(|(n, _)| *n == qualified) {
                qualified
            } else {
                arg.to_string()
            };
            load_expert(&inst.graph, &inst.table, &name).map_err(runtime_error)?
        }
    };
    strategy.label = arg.unwrap_or(kind).to_string();
    Ok(strategy)
}

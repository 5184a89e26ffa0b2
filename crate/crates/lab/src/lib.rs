//! Experiment harness: TOML configuration, artifact emission, manifests,
//! and bit-exact replay.

use anyhow::{bail, Context, Result};
use lcam::attacks::{
    budget_of, classifier_experiment, referee_exact_distinguisher, world_distinguisher, Strategy,
};
use lcam::construction::{build_params, ConstructionParams, Variant, World};
use lcam::exact::matching_gap_experiment;
use lcam::oracle::collision_experiment;
use lcam::realizer::{assemble_instance, audit_instance, trial_seed};
use lcam::report::{fmt_sig, write_json, Csv};
use lcam::treegame::{bad_event_experiment, mixer_hit_experiment, ExpandPolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsSpec {
    pub n_scale: u64,
    pub k: u32,
    pub d: u32,
    pub s: u32,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_world")]
    pub world: World,
}

fn default_variant() -> Variant {
    Variant::FullHierarchy
}

fn default_world() -> World {
    World::Yes
}

impl ParamsSpec {
    pub fn build(&self, seed: u64) -> Result<ConstructionParams> {
        build_params(
            self.n_scale,
            self.k,
            self.d,
            self.s,
            self.variant,
            self.world,
            seed,
        )
        .map_err(|e| anyhow::anyhow!("invalid params: {e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Gap,
    Collision,
    Classifier,
    Distinguisher,
    TreegameMixer,
    TreegameBadevent,
    Audit,
}

/// Budgets as multiples of d^power with an ln-factor knob, mirroring the
/// soft-O budget notation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetSpec {
    #[serde(default = "two")]
    pub d_power: u32,
    #[serde(default = "two")]
    pub ln_power: u32,
    #[serde(default = "one_f64")]
    pub factor: f64,
}

fn two() -> u32 {
    2
}

fn one_f64() -> f64 {
    1.0
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec {
            d_power: 2,
            ln_power: 2,
            factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub budget: Option<BudgetSpec>,
    /// Distinguisher strategy: coin_flip, random_walk, layer_then_walk,
    /// greedy_estimate, or referee_exact.
    #[serde(default)]
    pub strategy: Option<String>,
    /// Classifier: restrict sampled vertices to these levels.
    #[serde(default)]
    pub level_filter: Option<Vec<u32>>,
    #[serde(default = "default_tree_lo")]
    pub tree_size_lo: u32,
    #[serde(default = "default_tree_hi")]
    pub tree_size_hi: u32,
    #[serde(default = "default_flat")]
    pub flat_threshold: f64,
    #[serde(default = "default_qs")]
    pub collision_qs: Vec<u64>,
    #[serde(default = "default_col_instances")]
    pub collision_instances: u64,
}

fn default_trials() -> u64 {
    50
}

fn default_tree_lo() -> u32 {
    50
}

fn default_tree_hi() -> u32 {
    200
}

fn default_flat() -> f64 {
    1.05
}

fn default_qs() -> Vec<u64> {
    vec![8, 16, 32]
}

fn default_col_instances() -> u64 {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabConfig {
    pub master_seed: u64,
    pub experiment: ExperimentSpec,
    pub params: Vec<ParamsSpec>,
}

impl LabConfig {
    pub fn from_path(path: &Path) -> Result<LabConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: LabConfig = toml::from_str(&text).context("parsing config")?;
        if config.params.is_empty() {
            bail!("config needs at least one [[params]] entry");
        }
        if config.experiment.trials == 0 {
            bail!("trials must be at least 1");
        }
        Ok(config)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }

    pub fn sha256_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub master_seed: u64,
    pub config_sha256: String,
    pub config: LabConfig,
}

/// Runs every grid point of the configured experiment, writing artifacts
/// and a manifest sufficient for bit-exact replay.
pub fn run(config: &LabConfig, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (i, spec) in config.params.iter().enumerate() {
        let grid_seed = trial_seed(config.master_seed, "grid", i as u64);
        let params = spec.build(grid_seed)?;
        let mut files = run_one(config, &params, i, out)?;
        written.append(&mut files);
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed,
        config_sha256: config.sha256_hex(),
        config: config.clone(),
    };
    let manifest_path = out.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    written.push(manifest_path);
    Ok(written)
}

fn run_one(
    config: &LabConfig,
    params: &ConstructionParams,
    idx: usize,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let spec = &config.experiment;
    let seed = trial_seed(config.master_seed, "experiment", idx as u64);
    let budget = spec
        .budget
        .clone()
        .unwrap_or_default();
    let budget_queries = budget_of(params, budget.d_power, budget.ln_power, budget.factor);
    let mut written = Vec::new();
    let emit_json = |name: String, value: &dyn erased::Json| -> Result<PathBuf> {
        let path = out.join(name);
        value.write(&path)?;
        Ok(path)
    };

    match spec.kind {
        ExperimentKind::Gap => {
            let report = matching_gap_experiment(params, spec.trials, seed)?;
            let csv_path = out.join(format!("gap_report_{idx}.csv"));
            report.to_csv().write_to(&csv_path)?;
            written.push(csv_path);
            written.push(emit_json(format!("gap_report_{idx}.json"), &report)?);
        }
        ExperimentKind::Collision => {
            let report = collision_experiment(
                params,
                &spec.collision_qs,
                spec.trials,
                spec.collision_instances,
                seed,
            )?;
            let mut csv = Csv::new(&["q", "trials", "nonforest_freq"]);
            for (q, f) in report.qs.iter().zip(&report.nonforest_freqs) {
                csv.row(vec![q.to_string(), spec.trials.to_string(), fmt_sig(*f)]);
            }
            let csv_path = out.join(format!("collision_{idx}.csv"));
            csv.write_to(&csv_path)?;
            written.push(csv_path);
            written.push(emit_json(format!("collision_{idx}.json"), &report)?);
        }
        ExperimentKind::Classifier => {
            let report = classifier_experiment(
                params,
                spec.trials,
                budget_queries,
                spec.level_filter.as_deref(),
                seed,
            )?;
            let mut csv = Csv::new(lcam::attacks::ClassifierReport::csv_header());
            csv.row(report.csv_row());
            let csv_path = out.join(format!("classifier_{idx}.csv"));
            csv.write_to(&csv_path)?;
            written.push(csv_path);
            written.push(emit_json(format!("classifier_{idx}.json"), &report)?);
        }
        ExperimentKind::Distinguisher => {
            let name = spec.strategy.as_deref().unwrap_or("coin_flip");
            let report = if name == "referee_exact" {
                referee_exact_distinguisher(params, spec.trials, seed)?
            } else {
                let strategy = Strategy::parse(name)
                    .ok_or_else(|| anyhow::anyhow!("unknown strategy {name}"))?;
                world_distinguisher(params, &strategy, budget_queries, spec.trials, seed)?
            };
            let csv_path = out.join(format!("distinguisher_{idx}.csv"));
            report.to_csv().write_to(&csv_path)?;
            written.push(csv_path);
            written.push(emit_json(format!("distinguisher_{idx}.json"), &report)?);
        }
        ExperimentKind::TreegameMixer => {
            let report = mixer_hit_experiment(
                params,
                ExpandPolicy::RandomNode,
                spec.trials,
                spec.tree_size_lo..=spec.tree_size_hi,
                spec.flat_threshold,
                seed,
            )?;
            written.push(emit_json(format!("mixer_{idx}.json"), &report)?);
        }
        ExperimentKind::TreegameBadevent => {
            let report = bad_event_experiment(
                params,
                ExpandPolicy::RandomNode,
                spec.trials,
                spec.tree_size_hi,
                seed,
            )?;
            written.push(emit_json(format!("badevent_{idx}.json"), &report)?);
        }
        ExperimentKind::Audit => {
            let inst = assemble_instance(&params.with_seed(trial_seed(seed, "audit-inst", 0)))?;
            let inst_path = out.join(format!("instance_{idx}.lcam"));
            inst.write_file(&inst_path)?;
            written.push(inst_path);
            let report = audit_instance(&inst);
            written.push(emit_json(format!("audit_{idx}.json"), &report)?);
        }
    }
    Ok(written)
}

/// Tiny object-safe serialization shim so `run_one` can emit any report.
mod erased {
    use std::path::Path;

    pub trait Json {
        fn write(&self, path: &Path) -> std::io::Result<()>;
    }

    impl<T: serde::Serialize> Json for T {
        fn write(&self, path: &Path) -> std::io::Result<()> {
            lcam::report::write_json(path, self)
        }
    }
}

/// Re-runs the manifest's configuration and byte-compares every artifact
/// against the original run directory. Returns the mismatched file names.
pub fn replay(manifest_path: &Path, replay_out: &Path) -> Result<Vec<String>> {
    let manifest: Manifest = serde_json::from_str(
        &fs::read_to_string(manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))?,
    )?;
    if manifest.config_sha256 != manifest.config.sha256_hex() {
        bail!("manifest config hash does not match its embedded config");
    }
    let original_dir = manifest_path
        .parent()
        .context("manifest has no parent directory")?;
    let written = run(&manifest.config, replay_out)?;
    let mut mismatches = Vec::new();
    for path in &written {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .context("artifact name")?;
        let original = original_dir.join(name);
        let old = fs::read(&original)
            .with_context(|| format!("original artifact {} missing", original.display()))?;
        let new = fs::read(path)?;
        if old != new {
            mismatches.push(name.to_string());
        }
    }
    Ok(mismatches)
}

/// Re-emits the CSV view of a stored JSON report.
pub fn reemit_csv(results_json: &Path, out_csv: &Path) -> Result<()> {
    let text = fs::read_to_string(results_json)?;
    if let Ok(report) = serde_json::from_str::<lcam::exact::GapReport>(&text) {
        report.to_csv().write_to(out_csv)?;
        return Ok(());
    }
    if let Ok(report) = serde_json::from_str::<lcam::attacks::DistinguisherReport>(&text) {
        report.to_csv().write_to(out_csv)?;
        return Ok(());
    }
    if let Ok(report) = serde_json::from_str::<lcam::attacks::ClassifierReport>(&text) {
        let mut csv = Csv::new(lcam::attacks::ClassifierReport::csv_header());
        csv.row(report.csv_row());
        csv.write_to(out_csv)?;
        return Ok(());
    }
    if let Ok(report) = serde_json::from_str::<lcam::oracle::CollisionReport>(&text) {
        let mut csv = Csv::new(&["q", "trials", "nonforest_freq"]);
        for (q, f) in report.qs.iter().zip(&report.nonforest_freqs) {
            csv.row(vec![
                q.to_string(),
                report.trials_per_q.to_string(),
                fmt_sig(*f),
            ]);
        }
        csv.write_to(out_csv)?;
        return Ok(());
    }
    bail!("unrecognized results file {}", results_json.display())
}

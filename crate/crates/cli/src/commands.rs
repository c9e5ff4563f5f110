//! The `train`, `evaluate`, `simulate` and `report` verbs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, anyhow};
use psps_core::adp::{self, AdpError, Training};
use psps_core::simulate::{self, Evaluation, Policy, PolicyKind, ScenarioRecord};
use psps_core::{SolverBackend, par};

use crate::config::{self, Resolved, RunConfig};
use crate::output::{self, Checkpoint};
use crate::{CliError, Exit};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Training seed for `train`, master evaluation seed otherwise.
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub eval_model: Option<String>,
    pub n_scenarios: Option<usize>,
}

enum Verb {
    Train,
    Other,
}

fn load(config_path: &Path, ov: &Overrides, verb: Verb) -> Result<Resolved, CliError> {
    let mut cfg = RunConfig::load(config_path).map_err(CliError::usage)?;
    if let Some(seed) = ov.seed {
        match verb {
            Verb::Train => cfg.adp.seed = seed,
            Verb::Other => cfg.evaluation.master_seed = seed,
        }
    }
    if let Some(b) = &ov.backend {
        cfg.solver.backend = Some(b.clone());
    }
    if let Some(w) = ov.workers {
        cfg.workers = w;
    }
    if let Some(dir) = &ov.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(m) = &ov.eval_model {
        cfg.evaluation.eval_model = m.clone();
    }
    if let Some(n) = ov.n_scenarios {
        cfg.evaluation.n_scenarios = n;
    }
    cfg.resolve().map_err(CliError::usage)
}

fn backend(cfg: &RunConfig) -> Result<Box<dyn SolverBackend>, CliError> {
    let kind = cfg.solver.kind().map_err(CliError::usage)?;
    Ok(kind.instantiate(cfg.solver.options()))
}

fn prepare_output(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))
        .map_err(CliError::usage)?;
    std::fs::write(cfg.output_dir.join("resolved_config.toml"), cfg.to_toml())
        .context("writing resolved_config.toml")
        .map_err(CliError::usage)
}

fn adp_error(e: AdpError) -> CliError {
    match e {
        AdpError::Stage(_) => CliError::solver(e),
        other => CliError::usage(other),
    }
}

/// Trains the decision-dependent policy and the flow-blind baseline and
/// writes one checkpoint for each. Returns `NotConverged` when either run
/// stopped on the iteration cap.
pub fn train(config_path: &Path, ov: &Overrides, log: &mut dyn std::io::Write) -> Result<Exit, CliError> {
    let r = load(config_path, ov, Verb::Train)?;
    let cfg = &r.config;
    prepare_output(cfg)?;
    let backend = backend(cfg)?;
    let network_hash = r.net.content_hash();
    let config_hash = cfg.training_hash();
    let mut all_converged = true;
    for (kind, ambiguity) in [
        (PolicyKind::Ddu, r.ambiguity.clone()),
        (PolicyKind::NonDdu, r.ambiguity.without_flow_dependence()),
    ] {
        let Training { values, report } = par::with_workers(cfg.workers, || {
            adp::train(&r.net, &ambiguity, &r.schedule, &cfg.adp, backend.as_ref())
        })
        .map_err(adp_error)?;
        let last = report.deltas.last().copied().unwrap_or(0.0);
        let _ = writeln!(
            log,
            "{kind}: {} iterations, last weight change {last:.3e}, {}",
            report.iterations,
            if report.converged { "converged" } else { "stopped at the iteration cap" }
        );
        all_converged &= report.converged;
        Checkpoint {
            policy: kind,
            network_hash: network_hash.clone(),
            config_hash: config_hash.clone(),
            values,
            report,
        }
        .write(&cfg.output_dir)
        .map_err(CliError::usage)?;
    }
    Ok(if all_converged { Exit::Success } else { Exit::NotConverged })
}

fn checked_checkpoint(r: &Resolved, kind: PolicyKind) -> Result<Checkpoint, CliError> {
    let cp = Checkpoint::read(&r.config.output_dir, kind)
        .context("run `psps train` with this config first")
        .map_err(CliError::usage)?;
    if cp.network_hash != r.net.content_hash() {
        return Err(CliError::usage(anyhow!(
            "checkpoint {} was trained on a different network; refusing to evaluate",
            Checkpoint::file_name(kind)
        )));
    }
    if cp.config_hash != r.config.training_hash() {
        return Err(CliError::usage(anyhow!(
            "checkpoint {} was trained with a different configuration; refusing to evaluate",
            Checkpoint::file_name(kind)
        )));
    }
    Ok(cp)
}

fn policy(r: &Resolved, kind: PolicyKind) -> Result<Policy, CliError> {
    let lambda = r.config.adp.lambda;
    let mode = r.config.adp.continuation;
    Ok(match kind {
        PolicyKind::Greedy => Policy::greedy(r.ambiguity.clone()),
        PolicyKind::Ddu => Policy::ddu(checked_checkpoint(r, kind)?.values, r.ambiguity.clone(), lambda),
        PolicyKind::NonDdu => Policy::non_ddu(checked_checkpoint(r, kind)?.values, &r.ambiguity, lambda),
    }
    .with_continuation(mode))
}

/// Rolls out all three policies on paired scenarios and writes the metrics
/// table, shedding histograms, per-scenario summary, line availability and
/// the full scenario archive.
pub fn evaluate(config_path: &Path, ov: &Overrides, log: &mut dyn std::io::Write) -> Result<Exit, CliError> {
    let r = load(config_path, ov, Verb::Other)?;
    let cfg = &r.config;
    let policies: Vec<Policy> = PolicyKind::ALL.iter().map(|&k| policy(&r, k)).collect::<Result<_, _>>()?;
    prepare_output(cfg)?;
    let backend = backend(cfg)?;
    let model = config::eval_model(&cfg.evaluation.eval_model, &r.net, &r.ambiguity).map_err(CliError::usage)?;
    let refs: Vec<&Policy> = policies.iter().collect();
    let evals = par::with_workers(cfg.workers, || {
        simulate::evaluate(
            &refs,
            &r.net,
            &r.schedule,
            cfg.evaluation.n_scenarios,
            cfg.evaluation.master_seed,
            &model,
            backend.as_ref(),
        )
    })
    .map_err(CliError::usage)?;
    write_evaluation(&r, &evals).map_err(CliError::usage)?;
    let _ = write!(log, "{}", render_table(&evals));
    for e in &evals {
        if e.report.n_invalid > 0 {
            let first = e.records.iter().find_map(|r| r.error.as_deref()).unwrap_or("");
            let _ = writeln!(
                log,
                "warning: {} of {} {} scenarios aborted and were excluded (first: {first})",
                e.report.n_invalid,
                e.records.len(),
                e.policy
            );
        }
    }
    if evals.iter().any(|e| e.report.n_scenarios == 0) {
        return Err(CliError::solver(anyhow!("every scenario of at least one policy aborted")));
    }
    Ok(Exit::Success)
}

fn write_evaluation(r: &Resolved, evals: &[Evaluation]) -> anyhow::Result<()> {
    let dir = &r.config.output_dir;
    output::write_metrics(&dir.join("metrics.csv"), evals, &r.config.evaluation.eval_model)?;
    let valid: Vec<&ScenarioRecord> = evals.iter().flat_map(|e| e.records.iter().filter(|r| r.is_valid())).collect();
    let edges = simulate::histogram_edges(&valid, r.config.evaluation.histogram_bins);
    let hists: Vec<_> = evals
        .iter()
        .map(|e| {
            let recs: Vec<&ScenarioRecord> = e.records.iter().filter(|r| r.is_valid()).collect();
            (e.policy, simulate::shedding_histogram(&recs, &edges))
        })
        .collect();
    output::write_histograms(&dir.join("histogram.csv"), &hists)?;
    output::write_scenarios(&dir.join("scenarios.csv"), evals)?;
    output::write_availability(&dir.join("availability.csv"), &r.net, evals)?;
    output::write_archive(&dir.join("scenarios.jsonl"), evals)?;
    Ok(())
}

/// Fixed-width rendering of the metrics table.
pub fn render_table(evals: &[Evaluation]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<32}", "metric");
    for e in evals {
        let _ = write!(s, "{:>14}{:>14}", format!("{} mean", e.policy), format!("{} worst5", e.policy));
    }
    s.push('\n');
    for (i, name) in simulate::MetricSet::NAMES.iter().enumerate() {
        let _ = write!(s, "{name:<32}");
        for e in evals {
            let _ = write!(s, "{:>14.2}{:>14.2}", e.report.mean.values()[i], e.report.worst5.values()[i]);
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<32}", "zero_shed_hour_fraction");
    for e in evals {
        let _ = write!(s, "{:>14.3}{:>14}", e.report.zero_shed_fraction, "");
    }
    s.push('\n');
    s
}

/// Re-runs one scenario, prints its hour-by-hour log and writes the record
/// and per-hour topology snapshots.
pub fn simulate(
    config_path: &Path,
    ov: &Overrides,
    kind: PolicyKind,
    scenario_id: u64,
    log: &mut dyn std::io::Write,
) -> Result<Exit, CliError> {
    let r = load(config_path, ov, Verb::Other)?;
    let cfg = &r.config;
    let policy = policy(&r, kind)?;
    prepare_output(cfg)?;
    let backend = backend(cfg)?;
    let model = config::eval_model(&cfg.evaluation.eval_model, &r.net, &r.ambiguity).map_err(CliError::usage)?;
    let record = simulate::rollout(
        &policy,
        &r.net,
        &r.schedule,
        cfg.evaluation.master_seed,
        scenario_id,
        &model,
        backend.as_ref(),
    );
    let _ = write!(log, "{}", output::scenario_log(&record));
    let stem = format!("scenario_{kind}_{scenario_id}");
    let json = serde_json::to_string_pretty(&record).map_err(CliError::usage)? + "\n";
    std::fs::write(cfg.output_dir.join(format!("{stem}.json")), json)
        .context("writing scenario record")
        .map_err(CliError::usage)?;
    output::write_topology(&cfg.output_dir.join(format!("topology_{kind}_{scenario_id}.csv")), &record)
        .map_err(CliError::usage)?;
    match record.error {
        Some(e) => Err(CliError::solver(anyhow!("scenario aborted: {e}"))),
        None => Ok(Exit::Success),
    }
}

/// Prints the metrics table and training summaries found in the output
/// directory.
pub fn report(config_path: &Path, ov: &Overrides, log: &mut dyn std::io::Write) -> Result<Exit, CliError> {
    let mut cfg = RunConfig::load(config_path).map_err(CliError::usage)?;
    if let Some(dir) = &ov.output_dir {
        cfg.output_dir = dir.clone();
    }
    let dir = &cfg.output_dir;
    for kind in [PolicyKind::Ddu, PolicyKind::NonDdu] {
        if let Ok(cp) = Checkpoint::read(dir, kind) {
            let r = &cp.report;
            let _ = writeln!(
                log,
                "{kind}: {} iterations, converged: {}, weight changes {:?}",
                r.iterations,
                r.converged,
                r.deltas.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>()
            );
        }
    }
    let path = dir.join("metrics.csv");
    let mut rd = csv::Reader::from_path(&path)
        .with_context(|| format!("reading {}; run `psps evaluate` first", path.display()))
        .map_err(CliError::usage)?;
    let header = rd.headers().map_err(CliError::usage)?.clone();
    let rows: Vec<csv::StringRecord> = rd.records().collect::<Result<_, _>>().map_err(CliError::usage)?;
    let _ = writeln!(
        log,
        "{:<28}{}",
        "policy",
        rows.iter().map(|r| format!("{:>16}", r.get(0).unwrap_or(""))).collect::<String>()
    );
    for (i, name) in header.iter().enumerate().skip(1) {
        let _ = write!(log, "{name:<28}");
        for row in &rows {
            let cell = row.get(i).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if name != "n_scenarios" && name != "n_invalid" => {
                    let _ = write!(log, "{v:>16.4}");
                }
                _ => {
                    let _ = write!(log, "{cell:>16}");
                }
            }
        }
        let _ = writeln!(log);
    }
    Ok(Exit::Success)
}

//! CSV and JSON artifacts. Every writer renders floats with Rust's shortest
//! round-trip formatting, so identical results give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use psps_core::Network;
use psps_core::adp::{TrainReport, ValueFunction};
use psps_core::simulate::{Evaluation, Histogram, MetricSet, PolicyKind, ScenarioRecord};
use serde::{Deserialize, Serialize};

/// Trained weights with the hashes that tie them to a network and config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub policy: PolicyKind,
    pub network_hash: String,
    pub config_hash: String,
    pub values: Vec<ValueFunction>,
    pub report: TrainReport,
}

impl Checkpoint {
    pub fn file_name(policy: PolicyKind) -> String {
        format!("checkpoint_{policy}.json")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(Self::file_name(self.policy));
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path, policy: PolicyKind) -> Result<Self> {
        let path = dir.join(Self::file_name(policy));
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn metrics_header() -> Vec<String> {
    let mut h = vec!["policy".to_string()];
    for stat in ["mean", "worst5"] {
        for name in MetricSet::NAMES {
            h.push(format!("{name}_{stat}"));
        }
    }
    h.extend(["zero_shed_fraction", "n_scenarios", "n_invalid", "eval_model"].map(String::from));
    h
}

/// One row per policy: the seven table metrics as mean and worst-5% values.
pub fn write_metrics(path: &Path, evals: &[Evaluation], eval_model: &str) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(metrics_header())?;
    for e in evals {
        let r = &e.report;
        let mut row = vec![r.policy.to_string()];
        row.extend(r.mean.values().iter().map(f64::to_string));
        row.extend(r.worst5.values().iter().map(f64::to_string));
        row.push(r.zero_shed_fraction.to_string());
        row.push(r.n_scenarios.to_string());
        row.push(r.n_invalid.to_string());
        row.push(eval_model.to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histograms(path: &Path, hists: &[(PolicyKind, Histogram)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["policy", "bin_lo_mw", "bin_hi_mw", "hours", "fraction"])?;
    for (p, h) in hists {
        for (i, c) in h.counts.iter().enumerate() {
            let frac = if h.hours == 0 { 0.0 } else { *c as f64 / h.hours as f64 };
            w.write_record([
                p.to_string(),
                h.edges[i].to_string(),
                h.edges[i + 1].to_string(),
                c.to_string(),
                frac.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const SCENARIO_HEADER: [&str; 12] = [
    "policy",
    "scenario_id",
    "seed",
    "valid",
    "total_cost",
    "purchase_cost",
    "switching_cost",
    "load_loss_cost",
    "load_shedding_mw",
    "failed_lines",
    "max_hourly_shed_pct",
    "switch_operations",
];

pub fn write_scenarios(path: &Path, evals: &[Evaluation]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SCENARIO_HEADER)?;
    for e in evals {
        for r in &e.records {
            let ops: usize = r.hours.iter().map(|h| h.switched_on.len() + h.switched_off.len()).sum();
            w.write_record([
                r.policy.to_string(),
                r.scenario_id.to_string(),
                r.seed.to_string(),
                r.is_valid().to_string(),
                r.total_cost().to_string(),
                r.totals.purchase.to_string(),
                r.totals.switching.to_string(),
                r.totals.load_loss.to_string(),
                r.totals.shed_mw.to_string(),
                r.failed_lines.to_string(),
                r.max_shed_pct.to_string(),
                ops.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Share of valid scenarios in which each fire-zone line is still available
/// in the final hour.
pub fn write_availability(path: &Path, net: &Network, evals: &[Evaluation]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["policy", "line", "availability"])?;
    for e in evals {
        let valid: Vec<&ScenarioRecord> = e.records.iter().filter(|r| r.is_valid()).collect();
        for &l in net.fire_lines() {
            let alive = valid.iter().filter(|r| r.hours.last().is_some_and(|h| h.avail[l])).count();
            let share = if valid.is_empty() { 0.0 } else { alive as f64 / valid.len() as f64 };
            w.write_record([e.policy.to_string(), net.lines[l].id.clone(), share.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Every record as one JSON document per line.
pub fn write_archive(path: &Path, evals: &[Evaluation]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for e in evals {
        for r in &e.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<Vec<ScenarioRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}

/// Hour-by-hour narrative: `Hour k: L3 on, L5 off [L7 fail]`.
pub fn scenario_log(record: &ScenarioRecord) -> String {
    let mut s = format!(
        "policy {} scenario {} (seed {})\n",
        record.policy, record.scenario_id, record.seed
    );
    for h in &record.hours {
        let mut parts: Vec<String> = h.switched_on.iter().map(|l| format!("{l} on")).collect();
        parts.extend(h.switched_off.iter().map(|l| format!("{l} off")));
        let mut line = format!("Hour {}:", h.t);
        if !parts.is_empty() {
            line.push(' ');
            line.push_str(&parts.join(", "));
        }
        if !h.failed.is_empty() {
            line.push_str(&format!(" [{} fail]", h.failed.join(", ")));
        }
        line.push_str(&format!(
            "  cost {:.2} (purchase {:.2}, switching {:.2}, load loss {:.2}), shed {:.4} MW",
            h.costs.total(),
            h.costs.purchase,
            h.costs.switching,
            h.costs.load_loss,
            h.costs.shed_mw
        ));
        if !h.fire.is_empty() {
            line.push_str(&format!(", burning {}", h.fire.join(" ")));
        }
        s.push_str(&line);
        s.push('\n');
    }
    match &record.error {
        Some(e) => s.push_str(&format!("aborted: {e}\n")),
        None => s.push_str(&format!(
            "total {:.2}, failed lines {}, max hourly shedding {:.2}% of demand\n",
            record.total_cost(),
            record.failed_lines,
            record.max_shed_pct
        )),
    }
    s
}

/// Per-hour topology snapshot: energized lines and isolated buses.
pub fn write_topology(path: &Path, record: &ScenarioRecord) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["hour", "energized_lines", "isolated_buses", "failed_after_hour"])?;
    for h in &record.hours {
        w.write_record([
            h.t.to_string(),
            h.energized.join(" "),
            h.isolated_buses.join(" "),
            h.failed.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

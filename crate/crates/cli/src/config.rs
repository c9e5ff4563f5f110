//! Run configuration: a TOML document with every field defaulted to the
//! experiment constants, resolved against the directory it was read from.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result, bail};
use psps_core::adp::AdpConfig;
use psps_core::grid::CostConfig;
use psps_core::milp::HighsOptions;
use psps_core::stage::BackendKind;
use psps_core::{AmbiguitySet, CandidateModel, FireSchedule, Network, build_candidates, load_network};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the default solver backend.
pub const SOLVER_ENV: &str = "PSPS_SOLVER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fire_schedule: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Hours to plan and simulate; defaults to the network's horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub ambiguity: AmbiguityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<CostConfig>,
    #[serde(default)]
    pub adp: AdpConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub workers: usize,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmbiguityConfig {
    pub n: usize,
    pub delta: f64,
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        Self { n: 3, delta: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub n_scenarios: usize,
    pub master_seed: u64,
    /// `worst_case`, `nominal`, or a 1-based candidate index.
    pub eval_model: String,
    pub histogram_bins: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 1000,
            master_seed: 7,
            eval_model: "worst_case".into(),
            histogram_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// `highs` or `enumeration`; falls back to `$PSPS_SOLVER`, then `highs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    pub mip_abs_gap: f64,
    pub mip_rel_gap: f64,
    pub time_limit_s: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let h = HighsOptions::default();
        Self {
            backend: None,
            mip_abs_gap: h.mip_abs_gap,
            mip_rel_gap: h.mip_rel_gap,
            time_limit_s: h.time_limit.as_secs_f64(),
        }
    }
}

impl SolverConfig {
    pub fn kind(&self) -> Result<BackendKind> {
        let name = match &self.backend {
            Some(b) => b.clone(),
            None => std::env::var(SOLVER_ENV).unwrap_or_else(|_| "highs".into()),
        };
        name.parse().map_err(anyhow::Error::msg).context("solver.backend")
    }

    pub fn options(&self) -> HighsOptions {
        HighsOptions {
            mip_abs_gap: self.mip_abs_gap,
            mip_rel_gap: self.mip_rel_gap,
            time_limit: Duration::from_secs_f64(self.time_limit_s),
        }
    }
}

/// Everything a command needs, loaded and validated.
pub struct Resolved {
    pub config: RunConfig,
    pub net: Network,
    pub schedule: FireSchedule,
    pub ambiguity: AmbiguitySet,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.network = base.join(&cfg.network);
        cfg.fire_schedule = cfg.fire_schedule.map(|p| base.join(p));
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    /// Field-level checks that do not need the network.
    pub fn validate(&self) -> Result<()> {
        self.adp.validate().context("adp")?;
        if self.ambiguity.n == 0 {
            bail!("ambiguity.n must be at least 1");
        }
        if self.ambiguity.delta.is_nan() || self.ambiguity.delta < 0.0 {
            bail!("ambiguity.delta must be non-negative");
        }
        if let Some(c) = &self.costs {
            c.validate().context("costs")?;
        }
        if self.evaluation.histogram_bins == 0 {
            bail!("evaluation.histogram_bins must be at least 1");
        }
        let s = &self.solver;
        if !(s.mip_abs_gap >= 0.0 && s.mip_rel_gap >= 0.0 && s.time_limit_s > 0.0) {
            bail!("solver gaps must be non-negative and time_limit_s positive");
        }
        s.kind()?;
        Ok(())
    }

    pub fn resolve(self) -> Result<Resolved> {
        self.validate()?;
        let mut net = load_network(&self.network)?;
        if let Some(h) = self.horizon {
            if h == 0 || h > net.horizon {
                bail!("horizon {h} must lie in 1..={}", net.horizon);
            }
            net = net.truncated(h)?;
        }
        if let Some(c) = self.costs {
            net = net.with_costs(c)?;
        }
        let schedule = match &self.fire_schedule {
            Some(p) => FireSchedule::load(p)?,
            None => FireSchedule::empty(),
        };
        schedule.validate(&net, net.horizon)?;
        let ambiguity = build_candidates(&net, self.ambiguity.n, self.ambiguity.delta)?;
        eval_model(&self.evaluation.eval_model, &net, &ambiguity).context("evaluation.eval_model")?;
        Ok(Resolved {
            config: self,
            net,
            schedule,
            ambiguity,
        })
    }

    /// Hash of everything that shapes training.
    pub fn training_hash(&self) -> String {
        let key = serde_json::json!({
            "horizon": self.horizon,
            "ambiguity": self.ambiguity,
            "costs": self.costs,
            "adp": self.adp,
            "fire_schedule": self.fire_schedule.as_ref().map(|p| std::fs::read_to_string(p).unwrap_or_default()),
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Candidate law that drives simulated failures.
pub fn eval_model(selector: &str, net: &Network, ambiguity: &AmbiguitySet) -> Result<CandidateModel> {
    match selector {
        "worst_case" => Ok(ambiguity.worst_case(net).clone()),
        "nominal" => Ok(CandidateModel::nominal(net)),
        other => {
            let i: usize = other
                .parse()
                .map_err(|_| anyhow::anyhow!("expected worst_case, nominal or a candidate index, got {other:?}"))?;
            ambiguity
                .candidates
                .get(i.wrapping_sub(1))
                .cloned()
                .ok_or_else(|| anyhow::anyhow!("candidate {i} outside 1..={}", ambiguity.len()))
        }
    }
}

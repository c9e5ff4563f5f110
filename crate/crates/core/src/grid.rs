//! Radial distribution network model: buses, lines, costs, fire schedules
//! and the pre-decision system state.
//!
//! Networks are read from a JSON document and validated on load. Line
//! survival parameters may be given per line or inherited from zone-level
//! defaults (one `beta` for fire-zone lines, one for the rest).

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid network: {0}")]
    Validation(String),
    #[error("invalid fire schedule: {0}")]
    Schedule(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, GridError> {
    Err(GridError::Validation(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub is_substation: bool,
    pub v_min: f64,
    pub v_max: f64,
    pub v_ref: Option<f64>,
    /// Active demand per hour, per unit.
    pub demand_p: Vec<f64>,
    /// Reactive demand per hour, per unit.
    pub demand_q: Vec<f64>,
}

impl Bus {
    pub fn v_min_sq(&self) -> f64 {
        self.v_min * self.v_min
    }

    pub fn v_max_sq(&self) -> f64 {
        self.v_max * self.v_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub f_max: f64,
    pub switchable: bool,
    pub fire_zone: bool,
    /// Baseline one-period survival probability.
    pub gamma: f64,
    /// Survival sensitivity to absolute active flow, per unit of flow.
    pub beta: f64,
    /// Pre-event status of a switchable line (tie switches are usually open).
    pub normally_open: bool,
}

/// Operating costs. Energy and load loss are priced per MWh, so per-unit
/// quantities are scaled by the network's `base_mva` before pricing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub c_energy: f64,
    pub c_switch: f64,
    pub c_load_loss: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        // $0.01/kWh energy, $100 per switching operation.
        Self {
            c_energy: 10.0,
            c_switch: 100.0,
            c_load_loss: 1000.0,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<(), GridError> {
        let all = [self.c_energy, self.c_switch, self.c_load_loss];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return invalid("costs must be finite and non-negative");
        }
        if self.c_load_loss <= self.c_energy {
            return invalid("c_load_loss must exceed c_energy");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneDefaults {
    pub gamma: f64,
    pub beta_fire_zone: f64,
    pub beta_outside: f64,
}

impl Default for ZoneDefaults {
    fn default() -> Self {
        Self {
            gamma: 0.9989,
            beta_fire_zone: 3.0,
            beta_outside: 0.0001,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub horizon: usize,
    pub costs: CostConfig,
    pub defaults: ZoneDefaults,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    switch_index: Vec<Option<usize>>,
    switchable: Vec<usize>,
    fire_lines: Vec<usize>,
    fire_index: Vec<Option<usize>>,
    incident: Vec<Vec<usize>>,
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: String,
    pub is_substation: bool,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_ref: Option<f64>,
    pub demand_p: Vec<f64>,
    pub demand_q: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub id: String,
    pub from: String,
    pub to: String,
    pub r: f64,
    pub x: f64,
    pub f_max: f64,
    pub switchable: bool,
    pub fire_zone: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub normally_open: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn default_base_mva() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    pub horizon: usize,
    pub costs: CostConfig,
    #[serde(default)]
    pub defaults: ZoneDefaults,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
}

/// Reads and validates a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network, GridError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network(&text, &path.display().to_string())
}

pub fn parse_network(text: &str, origin: &str) -> Result<Network, GridError> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| GridError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Network::from_file(file)
}

impl Network {
    pub fn from_file(file: NetworkFile) -> Result<Self, GridError> {
        if file.horizon == 0 {
            return invalid("horizon must be at least 1");
        }
        if !(file.base_mva.is_finite() && file.base_mva > 0.0) {
            return invalid("base_mva must be positive");
        }
        file.costs.validate()?;
        let d = file.defaults;
        if !(0.0..=1.0).contains(&d.gamma) {
            return invalid("default gamma out of [0,1]");
        }
        if d.beta_fire_zone < 0.0 || d.beta_outside < 0.0 {
            return invalid("default beta must be non-negative");
        }

        let mut bus_pos = HashMap::new();
        let mut buses = Vec::with_capacity(file.buses.len());
        for (i, b) in file.buses.into_iter().enumerate() {
            if bus_pos.insert(b.id.clone(), i).is_some() {
                return invalid(format!("duplicate bus id {}", b.id));
            }
            if !(b.v_min > 0.0 && b.v_min < b.v_max && b.v_max.is_finite()) {
                return invalid(format!("bus {}: voltage bounds need 0 < v_min < v_max", b.id));
            }
            match (b.is_substation, b.v_ref) {
                (true, None) => return invalid(format!("substation {} has no v_ref", b.id)),
                (false, Some(_)) => {
                    return invalid(format!("bus {}: v_ref is only allowed on substations", b.id))
                }
                _ => {}
            }
            if b.demand_p.len() != file.horizon || b.demand_q.len() != file.horizon {
                return invalid(format!(
                    "bus {}: demand profiles must have length {}",
                    b.id, file.horizon
                ));
            }
            if b.demand_p.iter().chain(&b.demand_q).any(|x| !x.is_finite() || *x < 0.0) {
                return invalid(format!("bus {}: demands must be non-negative", b.id));
            }
            buses.push(Bus {
                id: b.id,
                is_substation: b.is_substation,
                v_min: b.v_min,
                v_max: b.v_max,
                v_ref: b.v_ref,
                demand_p: b.demand_p,
                demand_q: b.demand_q,
            });
        }
        if !buses.iter().any(|b| b.is_substation) {
            return invalid("network has no substation");
        }
        for sub in buses.iter().filter(|b| b.is_substation) {
            let vref = sub.v_ref.unwrap_or(1.0);
            if let Some(b) = buses.iter().find(|b| vref < b.v_min || vref > b.v_max) {
                return invalid(format!(
                    "substation {} reference voltage outside the bounds of bus {}",
                    sub.id, b.id
                ));
            }
        }

        let mut line_ids = HashSet::new();
        let mut lines = Vec::with_capacity(file.lines.len());
        for l in file.lines {
            if !line_ids.insert(l.id.clone()) {
                return invalid(format!("duplicate line id {}", l.id));
            }
            let endpoint = |id: &str| {
                bus_pos
                    .get(id)
                    .copied()
                    .ok_or_else(|| GridError::Validation(format!("line {}: unknown bus {id}", l.id)))
            };
            let from = endpoint(&l.from)?;
            let to = endpoint(&l.to)?;
            if from == to {
                return invalid(format!("line {}: from_bus equals to_bus", l.id));
            }
            if l.r < 0.0 || l.x < 0.0 {
                return invalid(format!("line {}: negative impedance", l.id));
            }
            if !(l.f_max > 0.0 && l.f_max.is_finite()) {
                return invalid(format!("line {}: f_max must be positive", l.id));
            }
            let gamma = l.gamma.unwrap_or(d.gamma);
            if !(0.0..=1.0).contains(&gamma) {
                return invalid(format!("line {}: gamma out of [0,1]", l.id));
            }
            let beta = l.beta.unwrap_or(if l.fire_zone {
                d.beta_fire_zone
            } else {
                d.beta_outside
            });
            if !(beta >= 0.0 && beta.is_finite()) {
                return invalid(format!("line {}: beta must be non-negative", l.id));
            }
            if l.normally_open && !l.switchable {
                return invalid(format!("line {}: only switchable lines can be normally open", l.id));
            }
            lines.push(Line {
                id: l.id,
                from,
                to,
                r: l.r,
                x: l.x,
                f_max: l.f_max,
                switchable: l.switchable,
                fire_zone: l.fire_zone,
                gamma,
                beta,
                normally_open: l.normally_open,
            });
        }

        let net = Self::assemble(file.name, file.base_mva, file.horizon, file.costs, d, buses, lines);
        if !net.is_connected_all_closed() {
            return invalid("network disconnected");
        }
        net.check_fixed_forest()?;
        Ok(net)
    }

    fn assemble(
        name: String,
        base_mva: f64,
        horizon: usize,
        costs: CostConfig,
        defaults: ZoneDefaults,
        buses: Vec<Bus>,
        lines: Vec<Line>,
    ) -> Self {
        let mut switch_index = vec![None; lines.len()];
        let mut switchable = Vec::new();
        let mut fire_index = vec![None; lines.len()];
        let mut fire_lines = Vec::new();
        let mut incident = vec![Vec::new(); buses.len()];
        for (i, l) in lines.iter().enumerate() {
            if l.switchable {
                switch_index[i] = Some(switchable.len());
                switchable.push(i);
            }
            if l.fire_zone {
                fire_index[i] = Some(fire_lines.len());
                fire_lines.push(i);
            }
            incident[l.from].push(i);
            incident[l.to].push(i);
        }
        Self {
            name,
            base_mva,
            horizon,
            costs,
            defaults,
            buses,
            lines,
            switch_index,
            switchable,
            fire_lines,
            fire_index,
            incident,
        }
    }

    /// BFS reachability over all lines from the first bus.
    fn is_connected_all_closed(&self) -> bool {
        let n = self.buses.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(b) = queue.pop_front() {
            for &l in &self.incident[b] {
                let o = self.lines[l].other(b);
                if !seen[o] {
                    seen[o] = true;
                    queue.push_back(o);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Non-switchable lines cannot be opened, so they must never force a
    /// cycle or join two substations.
    fn check_fixed_forest(&self) -> Result<(), GridError> {
        let mut uf = UnionFind::new(self.buses.len());
        for l in self.lines.iter().filter(|l| !l.switchable) {
            if !uf.union(l.from, l.to) {
                return invalid(format!("non-switchable line {} closes a cycle", l.id));
            }
        }
        let mut roots = HashSet::new();
        for (i, b) in self.buses.iter().enumerate() {
            if b.is_substation && !roots.insert(uf.find(i)) {
                return invalid(format!(
                    "substation {} is tied to another substation by non-switchable lines",
                    b.id
                ));
            }
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    /// Line indices of switchable lines, in file order.
    pub fn switchable(&self) -> &[usize] {
        &self.switchable
    }

    /// Position of a line among the switchable lines.
    pub fn switch_index(&self, line: usize) -> Option<usize> {
        self.switch_index[line]
    }

    /// Line indices of fire-zone lines, in file order.
    pub fn fire_lines(&self) -> &[usize] {
        &self.fire_lines
    }

    pub fn fire_index(&self, line: usize) -> Option<usize> {
        self.fire_index[line]
    }

    pub fn incident(&self, bus: usize) -> &[usize] {
        &self.incident[bus]
    }

    pub fn substations(&self) -> impl Iterator<Item = usize> + '_ {
        self.buses.iter().enumerate().filter(|(_, b)| b.is_substation).map(|(i, _)| i)
    }

    pub fn line_by_id(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn bus_by_id(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Total active demand at hour `t` (1-based), per unit.
    pub fn total_demand_p(&self, t: usize) -> f64 {
        self.buses.iter().map(|b| b.demand_p[t - 1]).sum()
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            name: self.name.clone(),
            base_mva: self.base_mva,
            horizon: self.horizon,
            costs: self.costs,
            defaults: self.defaults,
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id.clone(),
                    is_substation: b.is_substation,
                    v_min: b.v_min,
                    v_max: b.v_max,
                    v_ref: b.v_ref,
                    demand_p: b.demand_p.clone(),
                    demand_q: b.demand_q.clone(),
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineRecord {
                    id: l.id.clone(),
                    from: self.buses[l.from].id.clone(),
                    to: self.buses[l.to].id.clone(),
                    r: l.r,
                    x: l.x,
                    f_max: l.f_max,
                    switchable: l.switchable,
                    fire_zone: l.fire_zone,
                    gamma: Some(l.gamma),
                    beta: Some(l.beta),
                    normally_open: l.normally_open,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(&self.to_file()).expect("network serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Same network priced with `costs`.
    pub fn with_costs(&self, costs: CostConfig) -> Result<Self, GridError> {
        costs.validate()?;
        let mut out = self.clone();
        out.costs = costs;
        Ok(out)
    }

    /// Same network truncated to its first `horizon` hours.
    pub fn truncated(&self, horizon: usize) -> Result<Self, GridError> {
        if horizon == 0 || horizon > self.horizon {
            return invalid(format!("horizon {horizon} not within 1..={}", self.horizon));
        }
        let mut out = self.clone();
        out.horizon = horizon;
        for b in &mut out.buses {
            b.demand_p.truncate(horizon);
            b.demand_q.truncate(horizon);
        }
        Ok(out)
    }
}

impl Line {
    pub fn other(&self, bus: usize) -> usize {
        if bus == self.from { self.to } else { self.from }
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

// ---------------------------------------------------------------------------
// Fire schedule

/// Ignition hour per fire-zone line. A line is burning at every hour at or
/// after its ignition hour.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FireSchedule {
    /// Last hour the schedule speaks for; absent means open-ended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub ignitions: BTreeMap<String, usize>,
}

impl FireSchedule {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| GridError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self, net: &Network, horizon: usize) -> Result<(), GridError> {
        if let Some(h) = self.horizon
            && h < horizon
        {
            return Err(GridError::Schedule(format!(
                "schedule covers {h} hours but the run needs {horizon}"
            )));
        }
        for (id, &hour) in &self.ignitions {
            let l = net
                .line_by_id(id)
                .ok_or_else(|| GridError::Schedule(format!("unknown line {id}")))?;
            if !net.lines[l].fire_zone {
                return Err(GridError::Schedule(format!("line {id} is outside the fire zone")));
            }
            if hour == 0 {
                return Err(GridError::Schedule(format!("line {id}: hours start at 1")));
            }
        }
        Ok(())
    }

    /// Fire mask over all lines at hour `t` (1-based).
    pub fn mask(&self, net: &Network, t: usize) -> Vec<bool> {
        let mut mask = vec![false; net.n_lines()];
        for (id, &hour) in &self.ignitions {
            if let Some(l) = net.line_by_id(id) {
                mask[l] = net.lines[l].fire_zone && t >= hour;
            }
        }
        mask
    }
}

// ---------------------------------------------------------------------------
// System state

/// Pre-decision snapshot at stage `t` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemState {
    pub t: usize,
    pub avail: Vec<bool>,
    pub fire: Vec<bool>,
    /// Status of each switchable line, aligned with `Network::switchable`.
    pub switch_status: Vec<bool>,
    #[serde(skip)]
    demand: DemandSlice,
}

/// Stage-t demand slice. Stored as raw bits so states can be hashed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct DemandSlice {
    p: Vec<u64>,
    q: Vec<u64>,
}

impl SystemState {
    pub fn new(
        net: &Network,
        t: usize,
        avail: Vec<bool>,
        fire: Vec<bool>,
        switch_status: Vec<bool>,
    ) -> Result<Self, GridError> {
        if t == 0 || t > net.horizon {
            return invalid(format!("stage {t} outside 1..={}", net.horizon));
        }
        if avail.len() != net.n_lines() || fire.len() != net.n_lines() {
            return invalid("state vectors must cover every line");
        }
        if switch_status.len() != net.switchable().len() {
            return invalid("switch status must cover exactly the switchable lines");
        }
        for (l, line) in net.lines.iter().enumerate() {
            if fire[l] && !line.fire_zone {
                return invalid(format!("fire flag on line {} outside the fire zone", line.id));
            }
        }
        for (k, &l) in net.switchable().iter().enumerate() {
            if switch_status[k] && !avail[l] {
                return invalid(format!("closed switch on failed line {}", net.lines[l].id));
            }
        }
        let demand = DemandSlice {
            p: net.buses.iter().map(|b| b.demand_p[t - 1].to_bits()).collect(),
            q: net.buses.iter().map(|b| b.demand_q[t - 1].to_bits()).collect(),
        };
        Ok(Self {
            t,
            avail,
            fire,
            switch_status,
            demand,
        })
    }

    pub fn demand_p(&self, bus: usize) -> f64 {
        f64::from_bits(self.demand.p[bus])
    }

    pub fn demand_q(&self, bus: usize) -> f64 {
        f64::from_bits(self.demand.q[bus])
    }

    pub fn total_demand_p(&self) -> f64 {
        self.demand.p.iter().map(|b| f64::from_bits(*b)).sum()
    }

    /// Whether line `l` is energizable before switching: available, and
    /// closed if it is switchable.
    pub fn pre_status(&self, net: &Network, l: usize) -> bool {
        self.avail[l] && net.switch_index(l).is_none_or(|k| self.switch_status[k])
    }

    /// Available fire-zone lines, the lines whose next-hour status is random.
    pub fn uncertain_lines(&self, net: &Network) -> Vec<usize> {
        net.fire_lines().iter().copied().filter(|&l| self.avail[l]).collect()
    }

    /// Re-checks the state invariants against a network.
    pub fn check(&self, net: &Network) -> Result<(), GridError> {
        Self::new(
            net,
            self.t,
            self.avail.clone(),
            self.fire.clone(),
            self.switch_status.clone(),
        )
        .map(|_| ())
    }
}

/// All lines available, switches at their normal status, fire and demand at hour 1.
pub fn initial_state(net: &Network, schedule: &FireSchedule) -> Result<SystemState, GridError> {
    schedule.validate(net, net.horizon)?;
    let switch_status = net
        .switchable()
        .iter()
        .map(|&l| !net.lines[l].normally_open)
        .collect();
    SystemState::new(
        net,
        1,
        vec![true; net.n_lines()],
        schedule.mask(net, 1),
        switch_status,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy4_text() -> String {
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/toy4.json")).unwrap()
    }

    fn mutate(f: impl FnOnce(&mut serde_json::Value)) -> Result<Network, GridError> {
        let mut v: serde_json::Value = serde_json::from_str(&toy4_text()).unwrap();
        f(&mut v);
        parse_network(&v.to_string(), "mutated")
    }

    #[test]
    fn toy4_loads() {
        let net = parse_network(&toy4_text(), "toy4").unwrap();
        assert_eq!(net.n_buses(), 4);
        assert_eq!(net.n_lines(), 4);
        assert_eq!(net.switchable().len(), 2);
        assert_eq!(net.fire_lines().len(), 2);
    }

    #[test]
    fn gamma_out_of_range_is_rejected() {
        let err = mutate(|v| v["lines"][0]["gamma"] = 1.2.into()).unwrap_err();
        assert!(err.to_string().contains("gamma out of [0,1]"), "{err}");
    }

    #[test]
    fn disconnected_network_is_rejected() {
        // Drop every line touching the last bus.
        let err = mutate(|v| {
            let last = v["buses"][3]["id"].clone();
            let lines = v["lines"].as_array_mut().unwrap();
            lines.retain(|l| l["from"] != last && l["to"] != last);
        })
        .unwrap_err();
        assert!(err.to_string().contains("network disconnected"), "{err}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = mutate(|v| v["lines"][1]["id"] = v["lines"][0]["id"].clone()).unwrap_err();
        assert!(err.to_string().contains("duplicate line id"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_network("{\n  \"horizon\": 3,\n  \"costs\": oops\n}", "bad").unwrap_err();
        match err {
            GridError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn initial_state_follows_schedule() {
        let net = parse_network(&toy4_text(), "toy4").unwrap();
        let s = initial_state(&net, &FireSchedule::empty()).unwrap();
        assert!(s.fire.iter().all(|f| !f));
        assert!(s.avail.iter().all(|a| *a));
        assert!(s.switch_status.iter().all(|z| *z));

        let fire_line = net.lines[net.fire_lines()[1]].id.clone();
        let sched = FireSchedule {
            horizon: None,
            ignitions: [(fire_line.clone(), 1)].into(),
        };
        let s = initial_state(&net, &sched).unwrap();
        let l = net.line_by_id(&fire_line).unwrap();
        for (i, f) in s.fire.iter().enumerate() {
            assert_eq!(*f, i == l);
        }
    }

    #[test]
    fn short_schedule_is_rejected() {
        let net = parse_network(&toy4_text(), "toy4").unwrap();
        let sched = FireSchedule {
            horizon: Some(net.horizon - 1),
            ignitions: BTreeMap::new(),
        };
        assert!(matches!(initial_state(&net, &sched), Err(GridError::Schedule(_))));
    }

    #[test]
    fn closed_switch_on_failed_line_is_rejected() {
        let net = parse_network(&toy4_text(), "toy4").unwrap();
        let l = net.switchable()[0];
        let mut avail = vec![true; 4];
        avail[l] = false;
        let err = SystemState::new(&net, 1, avail, vec![false; 4], vec![true, true]).unwrap_err();
        assert!(err.to_string().contains("closed switch on failed line"));
    }
}

//! Small networks shared by unit tests.

use crate::grid::{
    BusRecord, CostConfig, LineRecord, Network, NetworkFile, ZoneDefaults, parse_network,
};

pub fn toy4() -> Network {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/toy4.json")).unwrap();
    parse_network(&text, "toy4").unwrap()
}

fn bus(id: &str, sub: bool, p: f64, horizon: usize) -> BusRecord {
    BusRecord {
        id: id.into(),
        is_substation: sub,
        v_min: 0.95,
        v_max: 1.05,
        v_ref: sub.then_some(1.0),
        demand_p: vec![p; horizon],
        demand_q: vec![p / 4.0; horizon],
    }
}

fn line(id: &str, from: &str, to: &str, fire: bool) -> LineRecord {
    LineRecord {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        r: 0.01,
        x: 0.02,
        f_max: 0.5,
        switchable: false,
        fire_zone: fire,
        gamma: None,
        beta: None,
        normally_open: false,
    }
}

/// Substation feeding one load bus over a plain line.
pub fn two_bus(demand: f64) -> Network {
    Network::from_file(NetworkFile {
        name: "two_bus".into(),
        base_mva: 1.0,
        horizon: 2,
        costs: CostConfig::default(),
        defaults: ZoneDefaults::default(),
        buses: vec![bus("S", true, 0.0, 2), bus("B", false, demand, 2)],
        lines: vec![line("L", "S", "B", false)],
    })
    .unwrap()
}

/// Radial chain `S - B0 - B1 - ... - Bk`: the first segment is outside the
/// fire zone, the remaining `k` segments are inside with the given beta.
pub fn chain_network(k: usize, beta_fire: f64) -> Network {
    let horizon = 3;
    let mut buses = vec![bus("S", true, 0.0, horizon)];
    let mut lines = Vec::new();
    for i in 0..=k {
        buses.push(bus(&format!("B{i}"), false, 0.02, horizon));
        let from = if i == 0 { "S".to_string() } else { format!("B{}", i - 1) };
        lines.push(line(&format!("L{i}"), &from, &format!("B{i}"), i > 0));
    }
    Network::from_file(NetworkFile {
        name: format!("chain{k}"),
        base_mva: 1.0,
        horizon,
        costs: CostConfig::default(),
        defaults: ZoneDefaults {
            beta_fire_zone: beta_fire,
            ..ZoneDefaults::default()
        },
        buses,
        lines,
    })
    .unwrap()
}

//! Unit-cost area/delay/power model over [`GateNetlist`]s.

use serde::{Deserialize, Serialize};

use super::netlist::{GateKind, GateNetlist, Sig};

/// Critical-path delay (ns), cell area (µm²) and power (W) of one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpaMetrics {
    pub delay_ns: f64,
    pub area_um2: f64,
    pub power_w: f64,
}

impl PpaMetrics {
    pub const fn new(delay_ns: f64, area_um2: f64, power_w: f64) -> Self {
        Self { delay_ns, area_um2, power_w }
    }

    /// All three metrics finite and strictly positive.
    pub fn is_positive(&self) -> bool {
        [self.delay_ns, self.area_um2, self.power_w].iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub not_area: f64,
    pub and2_area: f64,
    pub or2_area: f64,
    pub xor2_area: f64,
    pub not_levels: u32,
    pub and2_levels: u32,
    pub or2_levels: u32,
    pub xor2_levels: u32,
    pub ns_per_level: f64,
    pub watts_per_area: f64,
    pub floor_area: f64,
    pub floor_delay: f64,
    pub floor_power: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            not_area: 0.5,
            and2_area: 1.0,
            or2_area: 1.0,
            xor2_area: 2.0,
            not_levels: 1,
            and2_levels: 1,
            or2_levels: 1,
            xor2_levels: 2,
            ns_per_level: 0.01,
            watts_per_area: 0.01,
            floor_area: 0.1,
            floor_delay: 0.01,
            floor_power: 0.001,
        }
    }
}

impl CostModel {
    pub fn area(&self, kind: GateKind) -> f64 {
        match kind {
            GateKind::Not => self.not_area,
            GateKind::And2 => self.and2_area,
            GateKind::Or2 => self.or2_area,
            GateKind::Xor2 => self.xor2_area,
        }
    }

    pub fn levels(&self, kind: GateKind) -> u32 {
        match kind {
            GateKind::Not => self.not_levels,
            GateKind::And2 => self.and2_levels,
            GateKind::Or2 => self.or2_levels,
            GateKind::Xor2 => self.xor2_levels,
        }
    }

    /// Longest level-weighted path from any input to any output.
    pub fn critical_levels(&self, n: &GateNetlist) -> u32 {
        let mut arrival = vec![0u32; n.gates.len()];
        let at = |s: Sig, arrival: &[u32]| match s {
            Sig::Gate(g) => arrival[g as usize],
            _ => 0,
        };
        for (i, g) in n.gates.iter().enumerate() {
            let latest = g.inputs().iter().map(|s| at(*s, &arrival)).max().unwrap_or(0);
            arrival[i] = latest + self.levels(g.kind);
        }
        n.outputs.iter().map(|(_, s)| at(*s, &arrival)).max().unwrap_or(0)
    }

    pub fn estimate(&self, n: &GateNetlist) -> PpaMetrics {
        let area: f64 = n.gates.iter().map(|g| self.area(g.kind)).sum();
        let delay = f64::from(self.critical_levels(n)) * self.ns_per_level;
        PpaMetrics {
            delay_ns: delay.max(self.floor_delay),
            area_um2: area.max(self.floor_area),
            power_w: (area * self.watts_per_area).max(self.floor_power),
        }
    }
}

/// [`CostModel::estimate`] with the default unit costs.
pub fn estimate_ppa(n: &GateNetlist) -> PpaMetrics {
    CostModel::default().estimate(n)
}

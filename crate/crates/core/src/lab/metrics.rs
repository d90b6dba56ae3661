//! Effectiveness metrics.
//!
//! An agent's effectiveness is the number of tasks it contributed to divided
//! by the distance it was charged for them. The mission's total
//! effectiveness is the number of completed tasks over the weighted
//! collective cost `rho_h * hunting + rho_g * gathering`.

use serde::{Deserialize, Serialize};

use crate::engine::{Actor, EventKind, MissionLog};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    /// Agreements for a hunter, completions for a gatherer.
    pub count: u32,
    pub cost: f64,
    pub effectiveness: f64,
    /// Set when the cost is zero and the effectiveness was reported as 0.
    pub degenerate: bool,
}

impl AgentMetrics {
    pub fn new(count: u32, cost: f64) -> Self {
        let (effectiveness, degenerate) = ratio(f64::from(count), cost);
        Self {
            count,
            cost,
            effectiveness,
            degenerate,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hunters: Vec<AgentMetrics>,
    pub gatherers: Vec<AgentMetrics>,
    pub hunting_cost: f64,
    pub gathering_cost: f64,
    /// `rho_h * hunting_cost + rho_g * gathering_cost`.
    pub collective_cost: f64,
    pub total_completed: u32,
    pub total_effectiveness: f64,
    pub degenerate: bool,
    /// Running total effectiveness at the end of every iteration.
    pub series: Vec<f64>,
}

/// `num / den`, or `(0, true)` when `den` is zero.
pub fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

/// Recomputes every metric from the event log alone.
pub fn compute_metrics(log: &MissionLog, rho_h: f64, rho_g: f64) -> MetricsReport {
    let n_h = log.config.hunters;
    let n_g = log.config.gatherers;
    let mut h_count = vec![0u32; n_h];
    let mut h_cost = vec![0.0; n_h];
    let mut g_count = vec![0u32; n_g];
    let mut g_cost = vec![0.0; n_g];
    let mut series = Vec::with_capacity(log.iterations as usize);
    let (mut hunting, mut gathering, mut completed) = (0.0, 0.0, 0u32);
    let mut current = 0;
    let running = |c: u32, h: f64, g: f64| ratio(f64::from(c), rho_h * h + rho_g * g).0;

    for e in &log.events {
        while current < e.iteration {
            if current > 0 {
                series.push(running(completed, hunting, gathering));
            }
            current += 1;
        }
        match (&e.kind, e.actor) {
            (
                EventKind::Detected { cost, .. } | EventKind::Abandoned { cost, .. },
                Actor::Hunter(h),
            ) => {
                h_cost[h.0] += cost;
                hunting += cost;
            }
            (EventKind::Agreement { .. }, Actor::Hunter(h)) => h_count[h.0] += 1,
            (EventKind::Completed { cost, .. }, Actor::Gatherer(g)) => {
                g_count[g.0] += 1;
                g_cost[g.0] += cost;
                gathering += cost;
                completed += 1;
            }
            _ => {}
        }
    }
    while current <= log.iterations {
        if current > 0 {
            series.push(running(completed, hunting, gathering));
        }
        current += 1;
    }

    let collective_cost = rho_h * hunting + rho_g * gathering;
    let (total_effectiveness, degenerate) = ratio(f64::from(completed), collective_cost);
    MetricsReport {
        hunters: h_count
            .into_iter()
            .zip(h_cost)
            .map(|(n, c)| AgentMetrics::new(n, c))
            .collect(),
        gatherers: g_count
            .into_iter()
            .zip(g_cost)
            .map(|(n, c)| AgentMetrics::new(n, c))
            .collect(),
        hunting_cost: hunting,
        gathering_cost: gathering,
        collective_cost,
        total_completed: completed,
        total_effectiveness,
        degenerate,
        series,
    }
}

impl MetricsReport {
    pub fn mean_hunter_effectiveness(&self) -> f64 {
        mean(self.hunters.iter().map(|a| a.effectiveness))
    }

    pub fn mean_gatherer_effectiveness(&self) -> f64 {
        mean(self.gatherers.iter().map(|a| a.effectiveness))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_mission, MissionConfig};

    #[test]
    fn ratio_guards_zero() {
        assert_eq!(ratio(3.0, 0.0), (0.0, true));
        assert_eq!(ratio(3.0, 1.5), (2.0, false));
    }

    #[test]
    fn weighted_total() {
        // 5 completions, hunting 50, gathering 100, weights 0.2 and 1.
        let c = 0.2 * 50.0 + 1.0 * 100.0;
        assert_eq!(c, 110.0);
        assert!((ratio(5.0, c).0 - 0.04545).abs() < 1e-5);
    }

    #[test]
    fn metrics_match_agent_state() {
        let config = MissionConfig {
            width: 30,
            height: 30,
            live_tasks: 15,
            max_iterations: 300,
            seed: 11,
            ..MissionConfig::default()
        };
        let (log, m) = run_mission(&config).unwrap();
        assert_eq!(m.series.len(), 300);
        for (h, a) in log.hunters.iter().zip(&m.hunters) {
            assert_eq!(h.tasks_hunted, a.count);
            let cost: f64 = h.cost_ledger.iter().map(|(_, c)| c).sum();
            assert_eq!(cost, a.cost);
        }
        let gathered: u32 = log.gatherers.iter().map(|g| g.tasks_gathered).sum();
        assert_eq!(gathered, m.total_completed);
        let last = *m.series.last().unwrap();
        assert!((last - m.total_effectiveness).abs() < 1e-12);
    }
}

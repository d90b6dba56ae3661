//! Parameter sweeps: a base config, a grid over one or more parameters and a
//! number of replications per grid point, executed on a worker pool.
//!
//! Each mission's seed is a pure function of the base seed, the grid point
//! and the replication index, so any subset of a sweep can be rerun on its
//! own and rows come out in (point, replication) order whatever the worker
//! count.

use std::fmt;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_mission, EngineError, MissionConfig};
use crate::lab::baseline::run_baseline;
use crate::lab::metrics::MetricsReport;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("axis {0} has no values")]
    EmptyAxis(Param),
    #[error("replications must be at least 1")]
    NoReplications,
    #[error("unknown sweep parameter {0:?}")]
    UnknownParam(String),
    #[error("unknown preset {0:?} (expected fig6, fig7, fig8, fig9, fig11 or fig12)")]
    UnknownPreset(String),
    #[error("{param} cannot take the value {value}")]
    BadValue { param: Param, value: f64 },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("parsing sweep spec: {0}")]
    Parse(#[from] toml::de::Error),
}

/// A config field that a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Param {
    AlphaG,
    BetaG,
    AlphaH,
    BetaH,
    PlanCapacity,
    /// `rho_h / rho_g`, applied by scaling `rho_h` against the base `rho_g`.
    RhoRatio,
    RhoH,
    RhoG,
    LiveTasks,
    MaxIterations,
    SensorRadius,
    ForgetAfter,
}

const PARAMS: [(Param, &str); 12] = [
    (Param::AlphaG, "alpha_g"),
    (Param::BetaG, "beta_g"),
    (Param::AlphaH, "alpha_h"),
    (Param::BetaH, "beta_h"),
    (Param::PlanCapacity, "q_max"),
    (Param::RhoRatio, "rho_ratio"),
    (Param::RhoH, "rho_h"),
    (Param::RhoG, "rho_g"),
    (Param::LiveTasks, "m_p"),
    (Param::MaxIterations, "tau_max"),
    (Param::SensorRadius, "sensor_radius"),
    (Param::ForgetAfter, "t_forget"),
];

impl Param {
    pub fn name(self) -> &'static str {
        PARAMS.iter().find(|(p, _)| *p == self).expect("listed").1
    }

    pub fn apply(self, config: &mut MissionConfig, value: f64) -> Result<(), SweepError> {
        let bad = || SweepError::BadValue { param: self, value };
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as u32)
            } else {
                Err(bad())
            }
        };
        match self {
            Param::AlphaG => config.alpha_g = value,
            Param::BetaG => config.beta_g = value,
            Param::AlphaH => config.alpha_h = value,
            Param::BetaH => config.beta_h = value,
            Param::PlanCapacity => config.plan_capacity = count()? as usize,
            Param::RhoRatio => config.rho_h = value * config.rho_g,
            Param::RhoH => config.rho_h = value,
            Param::RhoG => config.rho_g = value,
            Param::LiveTasks => config.live_tasks = count()? as usize,
            Param::MaxIterations => config.max_iterations = count()?,
            Param::SensorRadius => config.sensor_radius = count()? as usize,
            Param::ForgetAfter => config.forget_after = count()?,
        }
        Ok(())
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PARAMS
            .iter()
            .find(|(_, n)| *n == s)
            .map(|(p, _)| *p)
            .ok_or_else(|| SweepError::UnknownParam(s.to_string()))
    }
}

impl TryFrom<String> for Param {
    type Error = SweepError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Param> for String {
    fn from(p: Param) -> String {
        p.name().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: Param,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(param: Param, values: Vec<f64>) -> Self {
        Self { param, values }
    }
}

/// `lo, lo + step, ..., hi` without accumulated rounding error.
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Replication `r` uses the same seed at every grid point, so grid
    /// points are compared on identical random worlds.
    #[default]
    Common,
    /// Every (point, replication) pair gets its own seed.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Hgmp,
    Baseline,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Hgmp => "hgmp",
            Model::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub name: String,
    #[serde(default)]
    pub base: MissionConfig,
    #[serde(default)]
    pub axes: Vec<Axis>,
    pub replications: u32,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
    /// Also run the single-type model at every (point, replication).
    #[serde(default)]
    pub baseline: bool,
    /// Keep each mission's per-iteration total-effectiveness series.
    #[serde(default)]
    pub series: bool,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// One mission of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub point: usize,
    pub replication: u32,
    pub model: Model,
    pub values: Vec<f64>,
    pub config: MissionConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub model: Model,
    pub point: usize,
    pub replication: u32,
    pub seed: u64,
    pub config_hash: u64,
    pub values: Vec<f64>,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub axes: Vec<Param>,
    pub hunters: usize,
    pub gatherers: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SweepError> {
        let spec: SweepSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.replications == 0 {
            return Err(SweepError::NoReplications);
        }
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(SweepError::EmptyAxis(axis.param));
            }
        }
        self.base.validate()?;
        Ok(())
    }

    /// Grid points in row-major order (first axis outermost).
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.axes.iter().fold(vec![Vec::new()], |acc, axis| {
            acc.iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect()
        })
    }

    /// Derived seeds keep the top bit clear so that configs stay
    /// representable as TOML integers.
    pub fn seed_for(&self, point: usize, replication: u32) -> u64 {
        let seed = match self.seed_policy {
            SeedPolicy::Common => splitmix(self.base.seed ^ splitmix(u64::from(replication))),
            SeedPolicy::Independent => {
                splitmix(splitmix(self.base.seed ^ splitmix(point as u64)) ^ u64::from(replication))
            }
        };
        seed >> 1
    }

    /// Every mission of the sweep, in output order.
    pub fn jobs(&self) -> Result<Vec<Job>, SweepError> {
        self.validate()?;
        let models: &[Model] = if self.baseline {
            &[Model::Hgmp, Model::Baseline]
        } else {
            &[Model::Hgmp]
        };
        let mut jobs = Vec::new();
        for (point, values) in self.points().into_iter().enumerate() {
            let mut config = self.base.clone();
            for (axis, &v) in self.axes.iter().zip(&values) {
                axis.param.apply(&mut config, v)?;
            }
            config.validate()?;
            for replication in 0..self.replications {
                for &model in models {
                    jobs.push(Job {
                        point,
                        replication,
                        model,
                        values: values.clone(),
                        config: MissionConfig {
                            seed: self.seed_for(point, replication),
                            ..config.clone()
                        },
                    });
                }
            }
        }
        Ok(jobs)
    }

    pub fn row_count(&self) -> usize {
        let models = if self.baseline { 2 } else { 1 };
        self.points().len() * self.replications as usize * models
    }
}

pub fn run_job(job: &Job, keep_series: bool) -> Result<SweepRow, SweepError> {
    let mut metrics = match job.model {
        Model::Hgmp => run_mission(&job.config)?.1,
        Model::Baseline => run_baseline(&job.config)?,
    };
    if !keep_series {
        metrics.series = Vec::new();
    }
    Ok(SweepRow {
        model: job.model,
        point: job.point,
        replication: job.replication,
        seed: job.config.seed,
        config_hash: job.config.config_hash(),
        values: job.values.clone(),
        metrics,
    })
}

/// Runs `jobs` on `workers` threads, preserving their order.
pub fn run_jobs(
    jobs: &[Job],
    keep_series: bool,
    workers: usize,
) -> Result<Vec<SweepRow>, SweepError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(|j| run_job(j, keep_series)).collect())
}

pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<SweepTable, SweepError> {
    let jobs = spec.jobs()?;
    Ok(SweepTable {
        axes: spec.axes.iter().map(|a| a.param).collect(),
        hunters: spec.base.hunters,
        gatherers: spec.base.gatherers,
        rows: run_jobs(&jobs, spec.series, workers)?,
    })
}

/// Built-in sweeps at desk scale (50 replications, except `fig9`).
pub fn preset(name: &str) -> Result<SweepSpec, SweepError> {
    let base = MissionConfig::default();
    let spec = |axes: Vec<Axis>, replications| SweepSpec {
        name: name.to_string(),
        base: base.clone(),
        axes,
        replications,
        seed_policy: SeedPolicy::Common,
        baseline: false,
        series: false,
    };
    Ok(match name {
        "fig6" => spec(Vec::new(), 50),
        "fig7" => spec(
            vec![
                Axis::new(Param::AlphaG, grid(0.0, 0.5, 0.025)),
                Axis::new(Param::BetaG, grid(0.0, 0.5, 0.025)),
            ],
            50,
        ),
        "fig8" => spec(
            vec![
                Axis::new(Param::AlphaH, grid(0.0, 1.0, 0.05)),
                Axis::new(Param::BetaH, grid(0.0, 1.0, 0.05)),
            ],
            50,
        ),
        "fig9" => spec(
            vec![Axis::new(Param::PlanCapacity, grid(1.0, 10.0, 1.0))],
            200,
        ),
        "fig11" => SweepSpec {
            series: true,
            ..spec(
                vec![Axis::new(Param::PlanCapacity, vec![1.0, 4.0, 10.0])],
                50,
            )
        },
        "fig12" => {
            let mut ratios = vec![0.05];
            ratios.extend(grid(0.1, 1.0, 0.1));
            SweepSpec {
                baseline: true,
                ..spec(vec![Axis::new(Param::RhoRatio, ratios)], 50)
            }
        }
        other => return Err(SweepError::UnknownPreset(other.to_string())),
    })
}

impl SweepTable {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["model", "point", "replication", "seed", "config_hash"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(self.axes.iter().map(|p| p.name().to_string()));
        h.extend(
            ["gamma_t", "c_t", "eta_t", "degenerate"]
                .iter()
                .map(|s| s.to_string()),
        );
        h.extend((1..=self.hunters).map(|i| format!("eta_h{i}")));
        h.extend((1..=self.gatherers).map(|j| format!("eta_g{j}")));
        h
    }

    /// One row per mission. Per-agent columns are left empty for the
    /// single-type model.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), SweepError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for row in &self.rows {
            let m = &row.metrics;
            let mut rec = vec![
                row.model.as_str().to_string(),
                row.point.to_string(),
                row.replication.to_string(),
                row.seed.to_string(),
                format!("{:016x}", row.config_hash),
            ];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            rec.push(m.total_completed.to_string());
            rec.push(m.collective_cost.to_string());
            rec.push(m.total_effectiveness.to_string());
            rec.push(u8::from(m.degenerate).to_string());
            let per_agent = row.model == Model::Hgmp;
            for i in 0..self.hunters {
                rec.push(match m.hunters.get(i) {
                    Some(a) if per_agent => a.effectiveness.to_string(),
                    _ => String::new(),
                });
            }
            for j in 0..self.gatherers {
                rec.push(match m.gatherers.get(j) {
                    Some(a) if per_agent => a.effectiveness.to_string(),
                    _ => String::new(),
                });
            }
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format effectiveness series: one row per (mission, iteration).
    pub fn write_series_csv<W: io::Write>(&self, out: W) -> Result<(), SweepError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["model".to_string(), "point".into(), "replication".into()];
        header.extend(self.axes.iter().map(|p| p.name().to_string()));
        header.push("iteration".into());
        header.push("eta_t".into());
        w.write_record(&header)?;
        for row in &self.rows {
            for (i, v) in row.metrics.series.iter().enumerate() {
                let mut rec = vec![
                    row.model.as_str().to_string(),
                    row.point.to_string(),
                    row.replication.to_string(),
                ];
                rec.extend(row.values.iter().map(|v| v.to_string()));
                rec.push((i + 1).to_string());
                rec.push(v.to_string());
                w.write_record(rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// `eta_t` of every row of `model` at grid point `point`.
    pub fn effectiveness_at(&self, model: Model, point: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.model == model && r.point == point)
            .map(|r| r.metrics.total_effectiveness)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MissionConfig {
        MissionConfig {
            width: 20,
            height: 20,
            live_tasks: 8,
            max_iterations: 60,
            ..MissionConfig::default()
        }
    }

    #[test]
    fn grid_is_exact() {
        let g = grid(0.0, 0.5, 0.025);
        assert_eq!(g.len(), 21);
        assert_eq!(g[3], 0.075);
        assert_eq!(g[20], 0.5);
        assert_eq!(grid(1.0, 10.0, 1.0).len(), 10);
    }

    #[test]
    fn param_names_round_trip() {
        for (p, n) in PARAMS {
            assert_eq!(n.parse::<Param>().unwrap(), p);
            assert_eq!(p.to_string(), n);
        }
        assert!("gamma".parse::<Param>().is_err());
    }

    #[test]
    fn apply_rejects_fractional_counts() {
        let mut c = MissionConfig::default();
        assert!(Param::PlanCapacity.apply(&mut c, 2.5).is_err());
        Param::PlanCapacity.apply(&mut c, 7.0).unwrap();
        assert_eq!(c.plan_capacity, 7);
        Param::RhoRatio.apply(&mut c, 0.4).unwrap();
        assert_eq!(c.rho_h, 0.4);
    }

    #[test]
    fn preset_sizes() {
        let fig7 = preset("fig7").unwrap();
        assert_eq!(fig7.row_count(), 21 * 21 * 50);
        assert_eq!(fig7.base.alpha_h, 0.35);
        assert_eq!(preset("fig8").unwrap().points().len(), 21 * 21);
        let fig9 = preset("fig9").unwrap();
        assert_eq!(fig9.replications, 200);
        assert_eq!(fig9.points().len(), 10);
        assert!(preset("fig11").unwrap().series);
        assert_eq!(preset("fig12").unwrap().row_count(), 11 * 50 * 2);
        assert!(matches!(preset("fig99"), Err(SweepError::UnknownPreset(_))));
    }

    #[test]
    fn single_point_single_replication_gives_one_row() {
        let spec = SweepSpec {
            name: "one".into(),
            base: tiny(),
            axes: vec![Axis::new(Param::AlphaG, vec![0.2])],
            replications: 1,
            seed_policy: SeedPolicy::Common,
            baseline: false,
            series: false,
        };
        let table = run_sweep(&spec, 1).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.to_csv_string().lines().count(), 2);
    }

    #[test]
    fn validation() {
        let mut spec = SweepSpec {
            name: "bad".into(),
            base: tiny(),
            axes: vec![Axis::new(Param::AlphaG, vec![])],
            replications: 1,
            seed_policy: SeedPolicy::Common,
            baseline: false,
            series: false,
        };
        assert!(matches!(spec.validate(), Err(SweepError::EmptyAxis(_))));
        spec.axes.clear();
        spec.replications = 0;
        assert!(matches!(spec.validate(), Err(SweepError::NoReplications)));
    }

    #[test]
    fn seeds() {
        let mut spec = SweepSpec {
            name: "s".into(),
            base: tiny(),
            axes: vec![Axis::new(Param::PlanCapacity, vec![1.0, 2.0])],
            replications: 3,
            seed_policy: SeedPolicy::Common,
            baseline: true,
            series: false,
        };
        let jobs = spec.jobs().unwrap();
        assert_eq!(jobs.len(), 12);
        assert_eq!(jobs[0].config.seed, jobs[6].config.seed);
        assert_eq!(jobs[0].config.seed, jobs[1].config.seed);
        assert_ne!(jobs[0].config.seed, jobs[2].config.seed);
        spec.seed_policy = SeedPolicy::Independent;
        let jobs = spec.jobs().unwrap();
        assert_ne!(jobs[0].config.seed, jobs[6].config.seed);
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let spec = SweepSpec {
            name: "w".into(),
            base: tiny(),
            axes: vec![Axis::new(Param::PlanCapacity, vec![1.0, 3.0])],
            replications: 3,
            seed_policy: SeedPolicy::Common,
            baseline: true,
            series: true,
        };
        let a = run_sweep(&spec, 1).unwrap();
        let b = run_sweep(&spec, 3).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let mut sa = Vec::new();
        let mut sb = Vec::new();
        a.write_series_csv(&mut sa).unwrap();
        b.write_series_csv(&mut sb).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn spec_from_toml() {
        let spec = SweepSpec::from_toml_str(
            r#"
            name = "custom"
            replications = 2
            seed_policy = "independent"
            [base]
            width = 30
            height = 30
            [[axes]]
            param = "q_max"
            values = [1, 2]
            "#,
        )
        .unwrap();
        assert_eq!(spec.axes[0].param, Param::PlanCapacity);
        assert_eq!(spec.base.width, 30);
        assert_eq!(spec.row_count(), 4);
        assert!(SweepSpec::from_toml_str(
            "name='x'\nreplications=1\n[[axes]]\nparam='zeta'\nvalues=[1]"
        )
        .is_err());
    }
}

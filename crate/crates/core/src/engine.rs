//! Discrete-time mission scheduler.
//!
//! Every iteration runs the same phases in the same order, agents in
//! ascending id order, so a mission is a pure function of its config:
//!
//! 1. knowledge decay, hunter exploration and sensing
//! 2. holding hunters post their detections on the board
//! 3. gatherers with spare capacity pick a partner and send readiness
//! 4. each hunter resolves its readiness batch (one: bargain, more: auction)
//! 5. gatherers move along their routes and complete tasks
//! 6. the task population is topped up (perpetual mode)

use std::collections::VecDeque;
use std::fs;
use std::io;
use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lab::metrics::{compute_metrics, MetricsReport};
use crate::margins::{MarginError, MarginParams, MarginState, ProfitInterval};
use crate::negotiation::{
    bargain, place_bid, run_auction, Announcement, Board, Mechanism, NegotiationError,
    NegotiationResult, Response, TranscriptEntry,
};
use crate::planning::{
    choose_partner, next_frontier_target, unknown_neighbor, ActionPlan, Candidate, PlanningError,
    MAX_PLAN_CAPACITY,
};
use crate::world::{Cell, GathererId, GridWorld, HunterId, Task, TaskId, WorldError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Margin(#[from] MarginError),
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error(transparent)]
    Negotiation(#[from] NegotiationError),
    #[error("reading {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("writing log: {0}")]
    Csv(#[from] csv::Error),
}

/// Everything that defines a mission. Defaults follow the reference
/// experiment setup (100x100 grid, 4 hunters, 2 gatherers, 50 live tasks,
/// 1000 iterations, incentives of 140).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub width: usize,
    pub height: usize,
    pub hunters: usize,
    pub gatherers: usize,
    /// Live-task count `m_p`.
    pub live_tasks: usize,
    pub max_iterations: u32,
    pub hunter_incentive: f64,
    pub gatherer_incentive: f64,
    pub extra_incentive: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub alpha_g: f64,
    pub beta_g: f64,
    pub rho_h: f64,
    pub rho_g: f64,
    /// Gatherer plan capacity `q_max`.
    pub plan_capacity: usize,
    /// Chebyshev radius of the hunters' sensor.
    pub sensor_radius: usize,
    /// Iterations after which an unseen explored cell becomes unknown again.
    pub forget_after: u32,
    pub seed: u64,
    /// Keep `live_tasks` tasks alive and let knowledge decay.
    pub perpetual: bool,
    /// A gatherer left with an empty plan steps toward the hunter it last
    /// sent readiness to, or toward the oldest announcement.
    pub gatherer_drift: bool,
    /// Inline map (`.` free, `#` obstacle); overrides `width`/`height`.
    pub map: Option<String>,
    /// Map file, resolved relative to the config file when loaded from disk.
    pub map_file: Option<String>,
    /// Explicit initial task cells; random placement when empty.
    pub tasks: Vec<Cell>,
    pub hunter_starts: Vec<Cell>,
    pub gatherer_starts: Vec<Cell>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            width: 100,
            height: 100,
            hunters: 4,
            gatherers: 2,
            live_tasks: 50,
            max_iterations: 1000,
            hunter_incentive: 140.0,
            gatherer_incentive: 140.0,
            extra_incentive: 140.0,
            alpha_h: 0.35,
            beta_h: 0.35,
            alpha_g: 0.15,
            beta_g: 0.15,
            rho_h: 0.2,
            rho_g: 1.0,
            plan_capacity: 5,
            sensor_radius: 2,
            forget_after: 100,
            seed: 0,
            perpetual: true,
            gatherer_drift: true,
            map: None,
            map_file: None,
            tasks: Vec::new(),
            hunter_starts: Vec::new(),
            gatherer_starts: Vec::new(),
        }
    }
}

impl MissionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, EngineError> {
        let config: MissionConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file and inlines its map file, if any.
    pub fn from_toml_file(path: &FsPath) -> Result<Self, EngineError> {
        let text = fs::read_to_string(path).map_err(|source| EngineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: MissionConfig = toml::from_str(&text)?;
        if let Some(map_file) = &config.map_file {
            let map_path = path.parent().unwrap_or(FsPath::new(".")).join(map_file);
            let map = fs::read_to_string(&map_path).map_err(|source| EngineError::Io {
                path: map_path.display().to_string(),
                source,
            })?;
            config.map = Some(map);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if self.map.is_none() && (self.width == 0 || self.height == 0) {
            return bad("grid dimensions must be positive".into());
        }
        if self.hunters == 0 || self.gatherers == 0 {
            return bad("agent counts must be positive".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if self.plan_capacity == 0 || self.plan_capacity > MAX_PLAN_CAPACITY {
            return bad(format!(
                "plan_capacity must be in 1..={MAX_PLAN_CAPACITY}, got {}",
                self.plan_capacity
            ));
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must not exceed {}", i64::MAX));
        }
        if self.forget_after == 0 {
            return bad("forget_after must be positive".into());
        }
        for (name, v) in [("rho_h", self.rho_h), ("rho_g", self.rho_g)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        self.hunter_params()?;
        self.gatherer_params()?;
        if !self.hunter_starts.is_empty() && self.hunter_starts.len() != self.hunters {
            return bad("hunter_starts must list one cell per hunter".into());
        }
        if !self.gatherer_starts.is_empty() && self.gatherer_starts.len() != self.gatherers {
            return bad("gatherer_starts must list one cell per gatherer".into());
        }
        Ok(())
    }

    pub fn hunter_params(&self) -> Result<MarginParams, MarginError> {
        MarginParams::hunter(
            self.alpha_h,
            self.beta_h,
            self.hunter_incentive,
            self.extra_incentive,
        )
    }

    pub fn gatherer_params(&self) -> Result<MarginParams, MarginError> {
        MarginParams::gatherer(
            self.alpha_g,
            self.beta_g,
            self.gatherer_incentive,
            self.extra_incentive,
        )
    }

    /// Stable 64-bit FNV-1a digest of the serialised config.
    pub fn config_hash(&self) -> u64 {
        self.to_toml_string()
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
                (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
            })
    }

    pub fn build_world(&self) -> Result<GridWorld, WorldError> {
        match &self.map {
            Some(text) => GridWorld::from_map_str(text),
            None => Ok(GridWorld::empty(self.width, self.height)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HunterState {
    pub id: HunterId,
    pub position: Cell,
    pub detected_task: Option<TaskId>,
    pub odometer: u64,
    pub tasks_hunted: u32,
    /// Hunting cost of every detection, in detection order.
    pub cost_ledger: Vec<(TaskId, f64)>,
    odometer_at_detection: u64,
    target: Option<Cell>,
    route: VecDeque<Cell>,
}

impl HunterState {
    fn new(id: HunterId, position: Cell) -> Self {
        Self {
            id,
            position,
            detected_task: None,
            odometer: 0,
            tasks_hunted: 0,
            cost_ledger: Vec::new(),
            odometer_at_detection: 0,
            target: None,
            route: VecDeque::new(),
        }
    }

    pub fn hold(&self) -> bool {
        self.detected_task.is_some()
    }

    /// Hunting cost of the detection currently held.
    pub fn held_cost(&self) -> Option<f64> {
        let task = self.detected_task?;
        self.cost_ledger
            .iter()
            .rev()
            .find(|(t, _)| *t == task)
            .map(|&(_, c)| c)
    }

    /// Distance travelled since the last detection.
    pub fn unattributed(&self) -> u64 {
        self.odometer - self.odometer_at_detection
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GathererState {
    pub id: GathererId,
    pub plan: ActionPlan,
    pub odometer: u64,
    pub tasks_gathered: u32,
    /// Gathering cost of every completion, in completion order.
    pub cost_ledger: Vec<(TaskId, f64)>,
    odometer_at_completion: u64,
}

impl GathererState {
    pub fn position(&self) -> Cell {
        self.plan.position()
    }

    pub fn unattributed(&self) -> u64 {
        self.odometer - self.odometer_at_completion
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Actor {
    World,
    Hunter(HunterId),
    Gatherer(GathererId),
}

impl std::fmt::Display for Actor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Actor::World => f.write_str("world"),
            Actor::Hunter(h) => write!(f, "{h}"),
            Actor::Gatherer(g) => write!(f, "{g}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    TaskSpawned {
        task: TaskId,
        cell: Cell,
        fallback: bool,
    },
    Forgotten {
        cells: usize,
    },
    Moved {
        to: Cell,
    },
    Sensed {
        explored: usize,
    },
    Detected {
        task: TaskId,
        cell: Cell,
        cost: f64,
    },
    /// Detection dropped because its cost leaves the hunter no profit.
    Abandoned {
        task: TaskId,
        cell: Cell,
        cost: f64,
    },
    Announced {
        task: TaskId,
        cell: Cell,
    },
    Readiness {
        hunter: HunterId,
        task: TaskId,
        cost: f64,
    },
    Offered {
        gatherer: GathererId,
        task: TaskId,
        gatherer_share: f64,
        accepted: bool,
    },
    BidPlaced {
        hunter: HunterId,
        task: TaskId,
        hunter_share: f64,
    },
    Agreement {
        gatherer: GathererId,
        task: TaskId,
        mechanism: Mechanism,
        hunter_share: f64,
        gatherer_share: f64,
        hunter_cost: f64,
        gatherer_cost: f64,
    },
    NegotiationFailed {
        task: TaskId,
        mechanism: Mechanism,
    },
    Completed {
        task: TaskId,
        cell: Cell,
        cost: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub iteration: u32,
    pub actor: Actor,
    pub kind: EventKind,
}

/// A negotiation with the private costs needed to audit it.
#[derive(Clone, Debug, PartialEq)]
pub struct NegotiationRecord {
    pub iteration: u32,
    pub hunter: HunterId,
    pub task: TaskId,
    pub hunter_cost: f64,
    /// Every participating gatherer with its tentative cost.
    pub gatherers: Vec<(GathererId, f64)>,
    pub result: NegotiationResult,
}

/// Complete trace of a mission and the final state of every participant.
#[derive(Clone, Debug)]
pub struct MissionLog {
    pub config: MissionConfig,
    pub events: Vec<Event>,
    pub negotiations: Vec<NegotiationRecord>,
    pub hunters: Vec<HunterState>,
    pub gatherers: Vec<GathererState>,
    pub tasks: Vec<Task>,
    /// Iterations actually simulated.
    pub iterations: u32,
}

#[derive(Serialize)]
struct CsvRow {
    iteration: u32,
    actor: String,
    event: &'static str,
    task: Option<u32>,
    counterpart: Option<String>,
    row: Option<usize>,
    col: Option<usize>,
    value: Option<f64>,
    value2: Option<f64>,
    share_hunter: Option<f64>,
    share_gatherer: Option<f64>,
    detail: Option<String>,
}

impl CsvRow {
    fn new(e: &Event, event: &'static str) -> Self {
        Self {
            iteration: e.iteration,
            actor: e.actor.to_string(),
            event,
            task: None,
            counterpart: None,
            row: None,
            col: None,
            value: None,
            value2: None,
            share_hunter: None,
            share_gatherer: None,
            detail: None,
        }
    }

    fn at(mut self, task: TaskId, cell: Cell) -> Self {
        self.task = Some(task.0);
        self.row = Some(cell.row);
        self.col = Some(cell.col);
        self
    }
}

impl From<&Event> for CsvRow {
    fn from(e: &Event) -> Self {
        match &e.kind {
            EventKind::TaskSpawned {
                task,
                cell,
                fallback,
            } => CsvRow {
                detail: fallback.then(|| "fallback".to_string()),
                ..CsvRow::new(e, "spawn").at(*task, *cell)
            },
            EventKind::Forgotten { cells } => CsvRow {
                value: Some(*cells as f64),
                ..CsvRow::new(e, "forget")
            },
            EventKind::Moved { to } => CsvRow {
                row: Some(to.row),
                col: Some(to.col),
                ..CsvRow::new(e, "move")
            },
            EventKind::Sensed { explored } => CsvRow {
                value: Some(*explored as f64),
                ..CsvRow::new(e, "sense")
            },
            EventKind::Detected { task, cell, cost } => CsvRow {
                value: Some(*cost),
                ..CsvRow::new(e, "detect").at(*task, *cell)
            },
            EventKind::Abandoned { task, cell, cost } => CsvRow {
                value: Some(*cost),
                ..CsvRow::new(e, "abandon").at(*task, *cell)
            },
            EventKind::Announced { task, cell } => CsvRow::new(e, "announce").at(*task, *cell),
            EventKind::Readiness { hunter, task, cost } => CsvRow {
                task: Some(task.0),
                counterpart: Some(hunter.to_string()),
                value: Some(*cost),
                ..CsvRow::new(e, "readiness")
            },
            EventKind::Offered {
                gatherer,
                task,
                gatherer_share,
                accepted,
            } => CsvRow {
                task: Some(task.0),
                counterpart: Some(gatherer.to_string()),
                share_gatherer: Some(*gatherer_share),
                detail: Some(if *accepted { "accept" } else { "reject" }.to_string()),
                ..CsvRow::new(e, "offer")
            },
            EventKind::BidPlaced {
                hunter,
                task,
                hunter_share,
            } => CsvRow {
                task: Some(task.0),
                counterpart: Some(hunter.to_string()),
                share_hunter: Some(*hunter_share),
                ..CsvRow::new(e, "bid")
            },
            EventKind::Agreement {
                gatherer,
                task,
                mechanism,
                hunter_share,
                gatherer_share,
                hunter_cost,
                gatherer_cost,
            } => CsvRow {
                task: Some(task.0),
                counterpart: Some(gatherer.to_string()),
                value: Some(*hunter_cost),
                value2: Some(*gatherer_cost),
                share_hunter: Some(*hunter_share),
                share_gatherer: Some(*gatherer_share),
                detail: Some(mechanism.as_str().to_string()),
                ..CsvRow::new(e, "agreement")
            },
            EventKind::NegotiationFailed { task, mechanism } => CsvRow {
                task: Some(task.0),
                detail: Some(mechanism.as_str().to_string()),
                ..CsvRow::new(e, "negotiation_failed")
            },
            EventKind::Completed { task, cell, cost } => CsvRow {
                value: Some(*cost),
                ..CsvRow::new(e, "complete").at(*task, *cell)
            },
        }
    }
}

impl MissionLog {
    /// Writes one CSV row per event.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), EngineError> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.events {
            w.serialize(CsvRow::from(e))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn agreements(&self) -> impl Iterator<Item = (&Event, &EventKind)> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Agreement { .. }))
            .map(|e| (e, &e.kind))
    }
}

/// A running mission.
pub struct Mission {
    config: MissionConfig,
    world: GridWorld,
    hunters: Vec<HunterState>,
    gatherers: Vec<GathererState>,
    board: Board,
    rng: ChaCha8Rng,
    hunter_params: MarginParams,
    gatherer_params: MarginParams,
    events: Vec<Event>,
    negotiations: Vec<NegotiationRecord>,
    iteration: u32,
    readiness: Vec<(GathererId, Candidate)>,
    drift_goals: Vec<Option<Cell>>,
}

impl Mission {
    pub fn new(config: &MissionConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut world = config.build_world()?;
        let mut events = Vec::new();

        let placed = if config.tasks.is_empty() {
            world.scatter_tasks(config.live_tasks, &mut rng)?
        } else {
            config
                .tasks
                .iter()
                .map(|&c| world.place_task(c))
                .collect::<Result<_, _>>()?
        };
        for id in placed {
            let cell = world.task(id)?.location;
            events.push(Event {
                iteration: 0,
                actor: Actor::World,
                kind: EventKind::TaskSpawned {
                    task: id,
                    cell,
                    fallback: false,
                },
            });
        }

        let free: Vec<Cell> = world.free_cells().collect();
        if free.is_empty() {
            return Err(EngineError::Config("map has no free cell".into()));
        }
        let mut starts = |given: &[Cell], n: usize| -> Result<Vec<Cell>, EngineError> {
            if given.is_empty() {
                Ok((0..n)
                    .map(|_| *free.choose(&mut rng).expect("non-empty"))
                    .collect())
            } else {
                for &c in given {
                    if !world.is_free(c) {
                        return Err(WorldError::Blocked(c).into());
                    }
                }
                Ok(given.to_vec())
            }
        };
        let hunter_starts = starts(&config.hunter_starts, config.hunters)?;
        let gatherer_starts = starts(&config.gatherer_starts, config.gatherers)?;

        let hunters = hunter_starts
            .into_iter()
            .enumerate()
            .map(|(i, c)| HunterState::new(HunterId(i), c))
            .collect();
        let gatherers = gatherer_starts
            .into_iter()
            .enumerate()
            .map(|(j, c)| {
                Ok(GathererState {
                    id: GathererId(j),
                    plan: ActionPlan::new(config.plan_capacity, c)?,
                    odometer: 0,
                    tasks_gathered: 0,
                    cost_ledger: Vec::new(),
                    odometer_at_completion: 0,
                })
            })
            .collect::<Result<_, EngineError>>()?;

        let mut mission = Self {
            hunter_params: config.hunter_params()?,
            gatherer_params: config.gatherer_params()?,
            config: config.clone(),
            world,
            hunters,
            gatherers,
            board: Board::new(),
            rng,
            events,
            negotiations: Vec::new(),
            iteration: 0,
            readiness: Vec::new(),
            drift_goals: vec![None; config.gatherers],
        };
        for h in 0..mission.hunters.len() {
            mission.sense_and_detect(h)?;
        }
        Ok(mission)
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    pub fn hunters(&self) -> &[HunterState] {
        &self.hunters
    }

    pub fn gatherers(&self) -> &[GathererState] {
        &self.gatherers
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn negotiations(&self) -> &[NegotiationRecord] {
        &self.negotiations
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.config.max_iterations
    }

    fn emit(&mut self, actor: Actor, kind: EventKind) {
        self.events.push(Event {
            iteration: self.iteration,
            actor,
            kind,
        });
    }

    /// Runs one full iteration.
    pub fn step(&mut self) -> Result<(), EngineError> {
        self.iteration += 1;
        self.world.set_iteration(self.iteration);
        if self.config.perpetual {
            let forgotten = self.world.decay_knowledge(self.config.forget_after)?;
            if forgotten > 0 {
                self.emit(Actor::World, EventKind::Forgotten { cells: forgotten });
            }
        }
        for h in 0..self.hunters.len() {
            self.hunter_step(h)?;
        }
        for h in 0..self.hunters.len() {
            self.announce(h)?;
        }
        self.readiness.clear();
        for g in 0..self.gatherers.len() {
            self.gatherer_readiness(g);
        }
        self.resolve_negotiations()?;
        let mut completed = 0;
        for g in 0..self.gatherers.len() {
            completed += self.gatherer_step(g)?;
        }
        if self.config.perpetual && completed > 0 {
            let report = self
                .world
                .maintain_population(self.config.live_tasks, &mut self.rng)?;
            let fallbacks = report.fallbacks;
            for (k, id) in report.spawned.into_iter().enumerate() {
                let cell = self.world.task(id)?.location;
                self.emit(
                    Actor::World,
                    EventKind::TaskSpawned {
                        task: id,
                        cell,
                        fallback: k < fallbacks,
                    },
                );
            }
        }
        Ok(())
    }

    /// Exploration half of a hunter's iteration: a hunter that holds no
    /// detection moves one cell toward its frontier target and senses.
    fn hunter_step(&mut self, h: usize) -> Result<(), EngineError> {
        if self.hunters[h].hold() {
            return Ok(());
        }
        let position = self.hunters[h].position;
        let stale = match self.hunters[h].target {
            None => true,
            Some(t) => t == position || !self.world.is_frontier(t),
        };
        if stale {
            let target = next_frontier_target(position, &self.world);
            let hunter = &mut self.hunters[h];
            hunter.target = target;
            hunter.route.clear();
            if let Some(t) = target.filter(|&t| t != position) {
                let path = self.world.shortest_path(position, t)?;
                hunter.route.extend(path.cells.into_iter().skip(1));
            }
        }
        let next = match self.hunters[h].target {
            Some(t) if t == position => unknown_neighbor(position, &self.world),
            Some(_) => self.hunters[h].route.pop_front(),
            None => None,
        };
        if let Some(cell) = next {
            let hunter = &mut self.hunters[h];
            hunter.position = cell;
            hunter.odometer += 1;
            let id = hunter.id;
            self.emit(Actor::Hunter(id), EventKind::Moved { to: cell });
        }
        self.sense_and_detect(h)
    }

    fn sense_and_detect(&mut self, h: usize) -> Result<(), EngineError> {
        let position = self.hunters[h].position;
        let id = self.hunters[h].id;
        let report = self.world.sense(position, self.config.sensor_radius);
        self.emit(
            Actor::Hunter(id),
            EventKind::Sensed {
                explored: report.explored,
            },
        );
        let mut nearest: Option<(u32, Cell, TaskId)> = None;
        for &t in &report.detected {
            let cell = self.world.task(t)?.location;
            let key = (position.manhattan(cell), cell, t);
            if nearest.is_none_or(|n| key < n) {
                nearest = Some(key);
            }
        }
        let Some((_, cell, task)) = nearest else {
            return Ok(());
        };
        let hunter = &mut self.hunters[h];
        let cost = (hunter.odometer - hunter.odometer_at_detection) as f64;
        hunter.odometer_at_detection = hunter.odometer;
        hunter.cost_ledger.push((task, cost));
        if self.hunter_params.classify(cost) == MarginState::State3 {
            // No share of the extra incentive can make this task pay; the
            // travel is booked and the task is left for a later detection.
            self.emit(Actor::Hunter(id), EventKind::Abandoned { task, cell, cost });
            return Ok(());
        }
        self.world.claim_detection(task, id, self.iteration)?;
        let hunter = &mut self.hunters[h];
        hunter.detected_task = Some(task);
        hunter.target = None;
        hunter.route.clear();
        self.emit(Actor::Hunter(id), EventKind::Detected { task, cell, cost });
        Ok(())
    }

    fn announce(&mut self, h: usize) -> Result<(), EngineError> {
        let hunter = &self.hunters[h];
        let Some(task) = hunter.detected_task else {
            return Ok(());
        };
        if self.board.get(hunter.id).is_some() {
            return Ok(());
        }
        let id = hunter.id;
        let t = self.world.task(task)?;
        let cell = t.location;
        if t.phase == crate::world::TaskPhase::Hidden {
            self.world.mark_announced(task)?;
        }
        self.board.announce(Announcement {
            hunter: id,
            task,
            location: cell,
            announced_at: self.iteration,
        });
        self.emit(Actor::Hunter(id), EventKind::Announced { task, cell });
        Ok(())
    }

    /// Partner-selection half of a gatherer's iteration.
    fn gatherer_readiness(&mut self, g: usize) {
        self.drift_goals[g] = None;
        let gatherer = &self.gatherers[g];
        let candidate = choose_partner(
            &gatherer.plan,
            self.board.waiting(),
            &self.gatherer_params,
            &self.world,
        );
        let id = gatherer.id;
        match candidate {
            Some(c) => {
                if self.config.gatherer_drift && gatherer.plan.is_empty() {
                    self.drift_goals[g] = Some(c.location);
                }
                self.emit(
                    Actor::Gatherer(id),
                    EventKind::Readiness {
                        hunter: c.hunter,
                        task: c.task,
                        cost: c.cost,
                    },
                );
                self.readiness.push((id, c));
            }
            None if self.config.gatherer_drift && gatherer.plan.is_empty() => {
                self.drift_goals[g] = self.board.waiting().first().map(|a| a.location);
            }
            None => {}
        }
    }

    fn resolve_negotiations(&mut self) -> Result<(), EngineError> {
        let readiness = std::mem::take(&mut self.readiness);
        for h in 0..self.hunters.len() {
            let hid = self.hunters[h].id;
            let batch: Vec<&(GathererId, Candidate)> =
                readiness.iter().filter(|(_, c)| c.hunter == hid).collect();
            if batch.is_empty() {
                continue;
            }
            let task = batch[0].1.task;
            let hunter_cost = self.hunters[h]
                .held_cost()
                .expect("announced hunters hold a detection");
            let hunter_interval = self.hunter_params.profit_interval(hunter_cost);
            let intervals: Vec<ProfitInterval> = batch
                .iter()
                .map(|(_, c)| self.gatherer_params.profit_interval(c.cost))
                .collect();
            let result = if batch.len() == 1 {
                bargain(
                    task,
                    hid,
                    &hunter_interval,
                    batch[0].0,
                    &intervals[0],
                    &mut self.rng,
                )
            } else {
                let bids = batch
                    .iter()
                    .zip(&intervals)
                    .map(|((g, _), pi)| place_bid(*g, task, pi))
                    .collect::<Result<Vec<_>, _>>()?;
                run_auction(task, hid, &bids, &hunter_interval, &mut self.rng)?
            };
            for entry in result.transcript().to_vec() {
                match entry {
                    TranscriptEntry::Offer { offer, response } => self.emit(
                        Actor::Hunter(hid),
                        EventKind::Offered {
                            gatherer: offer.to,
                            task,
                            gatherer_share: offer.gatherer_share,
                            accepted: response == Response::Accept,
                        },
                    ),
                    TranscriptEntry::Bid(bid) => self.emit(
                        Actor::Gatherer(bid.gatherer),
                        EventKind::BidPlaced {
                            hunter: hid,
                            task,
                            hunter_share: bid.hunter_share,
                        },
                    ),
                }
            }
            match &result {
                NegotiationResult::Agreed(outcome) => {
                    let (gid, candidate) = batch
                        .iter()
                        .find(|(g, _)| *g == outcome.gatherer)
                        .map(|(g, c)| (*g, c))
                        .expect("winner sent readiness");
                    self.world.mark_assigned(task, gid, outcome.shares)?;
                    self.board.withdraw(hid);
                    let hunter = &mut self.hunters[h];
                    hunter.detected_task = None;
                    hunter.tasks_hunted += 1;
                    self.gatherers[gid.0]
                        .plan
                        .commit_candidate(candidate, outcome, &self.world)?;
                    self.emit(
                        Actor::Hunter(hid),
                        EventKind::Agreement {
                            gatherer: gid,
                            task,
                            mechanism: outcome.mechanism,
                            hunter_share: outcome.shares.hunter,
                            gatherer_share: outcome.shares.gatherer,
                            hunter_cost,
                            gatherer_cost: candidate.cost,
                        },
                    );
                }
                NegotiationResult::Failed { mechanism, .. } => {
                    // Re-posted next iteration, behind the other waiting hunters.
                    self.board.withdraw(hid);
                    self.emit(
                        Actor::Hunter(hid),
                        EventKind::NegotiationFailed {
                            task,
                            mechanism: *mechanism,
                        },
                    );
                }
            }
            self.negotiations.push(NegotiationRecord {
                iteration: self.iteration,
                hunter: hid,
                task,
                hunter_cost,
                gatherers: batch.iter().map(|(g, c)| (*g, c.cost)).collect(),
                result,
            });
        }
        Ok(())
    }

    /// Execution half of a gatherer's iteration. Returns the number of
    /// tasks completed.
    fn gatherer_step(&mut self, g: usize) -> Result<usize, EngineError> {
        let id = self.gatherers[g].id;
        let goal = self.drift_goals[g].filter(|_| self.gatherers[g].plan.is_empty());
        if let Some(goal) = goal {
            let position = self.gatherers[g].position();
            if goal != position {
                let path = self.world.shortest_path(position, goal)?;
                let cell = path.cells[1];
                let gatherer = &mut self.gatherers[g];
                gatherer.plan.relocate(cell, &self.world);
                gatherer.odometer += 1;
                self.emit(Actor::Gatherer(id), EventKind::Moved { to: cell });
            }
            return Ok(0);
        }
        let mut completed = self.complete_reached(g)?;
        if let Some(cell) = self.gatherers[g].plan.advance() {
            self.gatherers[g].odometer += 1;
            self.emit(Actor::Gatherer(id), EventKind::Moved { to: cell });
            completed += self.complete_reached(g)?;
        }
        if completed > 0 {
            self.gatherers[g].plan.replan(&self.world);
        }
        Ok(completed)
    }

    fn complete_reached(&mut self, g: usize) -> Result<usize, EngineError> {
        let mut completed = 0;
        while let Some(entry) = self.gatherers[g].plan.pop_reached() {
            self.world.mark_completed(entry.task, self.iteration)?;
            let gatherer = &mut self.gatherers[g];
            let cost = (gatherer.odometer - gatherer.odometer_at_completion) as f64;
            gatherer.odometer_at_completion = gatherer.odometer;
            gatherer.cost_ledger.push((entry.task, cost));
            gatherer.tasks_gathered += 1;
            let id = gatherer.id;
            self.emit(
                Actor::Gatherer(id),
                EventKind::Completed {
                    task: entry.task,
                    cell: entry.location,
                    cost,
                },
            );
            completed += 1;
        }
        Ok(completed)
    }

    /// Runs the remaining iterations and returns the trace.
    pub fn run(mut self) -> Result<MissionLog, EngineError> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.into_log())
    }

    pub fn into_log(self) -> MissionLog {
        MissionLog {
            config: self.config,
            events: self.events,
            negotiations: self.negotiations,
            hunters: self.hunters,
            gatherers: self.gatherers,
            tasks: self.world.tasks().to_vec(),
            iterations: self.iteration,
        }
    }
}

/// Runs a mission to completion and derives its metrics.
pub fn run_mission(config: &MissionConfig) -> Result<(MissionLog, MetricsReport), EngineError> {
    let log = Mission::new(config)?.run()?;
    let metrics = compute_metrics(&log, config.rho_h, config.rho_g);
    Ok((log, metrics))
}

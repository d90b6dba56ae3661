//! Single-type comparison model: `n_h + n_g` identical agents that explore
//! like hunters and, on detecting a task, walk to it and complete it
//! themselves. There is no board and no negotiation. Every agent's travel is
//! weighted at `rho_g`.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{EngineError, MissionConfig};
use crate::lab::metrics::{ratio, AgentMetrics, MetricsReport};
use crate::planning::{next_frontier_target, unknown_neighbor};
use crate::world::{Cell, GridWorld, HunterId, TaskId, WorldError};

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineAgent {
    pub position: Cell,
    pub odometer: u64,
    pub completed: u32,
    pub cost: f64,
    odometer_at_completion: u64,
    /// Task being walked to.
    carrying: Option<(TaskId, Cell)>,
    target: Option<Cell>,
    route: VecDeque<Cell>,
}

impl BaselineAgent {
    fn new(position: Cell) -> Self {
        Self {
            position,
            odometer: 0,
            completed: 0,
            cost: 0.0,
            odometer_at_completion: 0,
            carrying: None,
            target: None,
            route: VecDeque::new(),
        }
    }
}

pub struct Baseline {
    config: MissionConfig,
    world: GridWorld,
    agents: Vec<BaselineAgent>,
    rng: ChaCha8Rng,
    iteration: u32,
    series: Vec<f64>,
}

impl Baseline {
    pub fn new(config: &MissionConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut world = config.build_world()?;
        if config.tasks.is_empty() {
            world.scatter_tasks(config.live_tasks, &mut rng)?;
        } else {
            for &c in &config.tasks {
                world.place_task(c)?;
            }
        }
        let free: Vec<Cell> = world.free_cells().collect();
        if free.is_empty() {
            return Err(EngineError::Config("map has no free cell".into()));
        }
        let given: Vec<Cell> = config
            .hunter_starts
            .iter()
            .chain(&config.gatherer_starts)
            .copied()
            .collect();
        let n = config.hunters + config.gatherers;
        let starts: Vec<Cell> = if given.len() == n {
            for &c in &given {
                if !world.is_free(c) {
                    return Err(WorldError::Blocked(c).into());
                }
            }
            given
        } else {
            (0..n)
                .map(|_| *free.choose(&mut rng).expect("non-empty"))
                .collect()
        };
        let mut baseline = Self {
            config: config.clone(),
            world,
            agents: starts.into_iter().map(BaselineAgent::new).collect(),
            rng,
            iteration: 0,
            series: Vec::new(),
        };
        for a in 0..baseline.agents.len() {
            baseline.sense(a)?;
        }
        Ok(baseline)
    }

    pub fn agents(&self) -> &[BaselineAgent] {
        &self.agents
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    fn sense(&mut self, a: usize) -> Result<(), EngineError> {
        let position = self.agents[a].position;
        let report = self.world.sense(position, self.config.sensor_radius);
        if self.agents[a].carrying.is_some() {
            return Ok(());
        }
        let mut nearest: Option<(u32, Cell, TaskId)> = None;
        for &t in &report.detected {
            let cell = self.world.task(t)?.location;
            let key = (position.manhattan(cell), cell, t);
            if nearest.is_none_or(|n| key < n) {
                nearest = Some(key);
            }
        }
        if let Some((_, cell, task)) = nearest {
            self.world
                .claim_detection(task, HunterId(a), self.iteration)?;
            self.world.mark_announced(task)?;
            let agent = &mut self.agents[a];
            agent.carrying = Some((task, cell));
            agent.target = None;
            agent.route = self
                .world
                .shortest_path(position, cell)?
                .cells
                .into_iter()
                .skip(1)
                .collect();
        }
        Ok(())
    }

    fn explore_step(&mut self, a: usize) -> Result<Option<Cell>, EngineError> {
        let position = self.agents[a].position;
        let stale = match self.agents[a].target {
            None => true,
            Some(t) => t == position || !self.world.is_frontier(t),
        };
        if stale {
            let target = next_frontier_target(position, &self.world);
            let agent = &mut self.agents[a];
            agent.target = target;
            agent.route.clear();
            if let Some(t) = target.filter(|&t| t != position) {
                let path = self.world.shortest_path(position, t)?;
                agent.route.extend(path.cells.into_iter().skip(1));
            }
        }
        Ok(match self.agents[a].target {
            Some(t) if t == position => unknown_neighbor(position, &self.world),
            Some(_) => self.agents[a].route.pop_front(),
            None => None,
        })
    }

    /// Returns the number of completions.
    fn agent_step(&mut self, a: usize) -> Result<usize, EngineError> {
        let next = if self.agents[a].carrying.is_some() {
            self.agents[a].route.pop_front()
        } else {
            self.explore_step(a)?
        };
        if let Some(cell) = next {
            let agent = &mut self.agents[a];
            agent.position = cell;
            agent.odometer += 1;
        }
        let agent = &self.agents[a];
        if let Some((task, cell)) = agent.carrying.filter(|&(_, c)| c == agent.position) {
            self.world.mark_assigned(
                task,
                crate::world::GathererId(a),
                crate::world::Shares::from_gatherer(1.0),
            )?;
            self.world.mark_completed(task, self.iteration)?;
            let agent = &mut self.agents[a];
            agent.cost += (agent.odometer - agent.odometer_at_completion) as f64;
            agent.odometer_at_completion = agent.odometer;
            agent.completed += 1;
            agent.carrying = None;
            agent.route.clear();
            debug_assert_eq!(cell, agent.position);
            self.sense(a)?;
            return Ok(1);
        }
        self.sense(a)?;
        Ok(0)
    }

    pub fn step(&mut self) -> Result<(), EngineError> {
        self.iteration += 1;
        self.world.set_iteration(self.iteration);
        if self.config.perpetual {
            self.world.decay_knowledge(self.config.forget_after)?;
        }
        let mut completed = 0;
        for a in 0..self.agents.len() {
            completed += self.agent_step(a)?;
        }
        if self.config.perpetual && completed > 0 {
            self.world
                .maintain_population(self.config.live_tasks, &mut self.rng)?;
        }
        let (done, cost) = self.totals();
        self.series
            .push(ratio(f64::from(done), self.config.rho_g * cost).0);
        Ok(())
    }

    fn totals(&self) -> (u32, f64) {
        self.agents
            .iter()
            .fold((0, 0.0), |(n, c), a| (n + a.completed, c + a.cost))
    }

    pub fn report(&self) -> MetricsReport {
        let (done, cost) = self.totals();
        let collective_cost = self.config.rho_g * cost;
        let (total_effectiveness, degenerate) = ratio(f64::from(done), collective_cost);
        MetricsReport {
            hunters: Vec::new(),
            gatherers: self
                .agents
                .iter()
                .map(|a| AgentMetrics::new(a.completed, a.cost))
                .collect(),
            hunting_cost: 0.0,
            gathering_cost: cost,
            collective_cost,
            total_completed: done,
            total_effectiveness,
            degenerate,
            series: self.series.clone(),
        }
    }
}

/// Runs the single-type model with the same world parameters as `config`.
pub fn run_baseline(config: &MissionConfig) -> Result<MetricsReport, EngineError> {
    let mut b = Baseline::new(config)?;
    for _ in 0..config.max_iterations {
        b.step()?;
    }
    Ok(b.report())
}

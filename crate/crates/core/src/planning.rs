//! Gatherer multitask planning and hunter frontier exploration.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::margins::{MarginParams, MarginState};
use crate::negotiation::{Announcement, NegotiationOutcome};
use crate::world::{Cell, GridWorld, HunterId, Path, TaskId, UNREACHABLE};

/// Largest plan capacity the exact route solver accepts.
pub const MAX_PLAN_CAPACITY: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum PlanningError {
    #[error("action plan is full ({0} entries)")]
    PlanFull(usize),
    #[error("agreement for {agreed} does not match candidate {candidate}")]
    TaskMismatch { candidate: TaskId, agreed: TaskId },
    #[error("plan capacity must be between 1 and {MAX_PLAN_CAPACITY}, got {0}")]
    BadCapacity(usize),
    #[error("task {0} is unreachable")]
    Unreachable(TaskId),
}

/// Visiting order over a set of locations, without the concrete cells.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteOrder {
    /// Indices into the planned locations, in visiting order.
    pub order: Vec<usize>,
    /// Distance along the route from the start to each location, indexed
    /// like the input; infinite for unreachable locations.
    pub cumulative: Vec<f64>,
    /// Length of the route through every reachable location.
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutePlan {
    pub order: Vec<usize>,
    pub cumulative: Vec<f64>,
    pub total: f64,
    pub path: Path,
}

/// Minimum-length open route from `position` through all `locations`,
/// solved exactly by dynamic programming over visited subsets.
/// Unreachable locations are placed last with infinite cumulative cost.
pub fn plan_order(position: Cell, locations: &[Cell], world: &GridWorld) -> RouteOrder {
    let mut points = Vec::with_capacity(locations.len() + 1);
    points.push(position);
    points.extend_from_slice(locations);
    let dist = world.pairwise_distances(&points);

    let (reachable, unreachable): (Vec<usize>, Vec<usize>) =
        (0..locations.len()).partition(|&i| dist.get(0, i + 1) != UNREACHABLE);
    let n = reachable.len();
    assert!(
        n <= MAX_PLAN_CAPACITY,
        "route over {n} locations is too large"
    );
    let d = |a: usize, b: usize| dist.get(a, b) as u64;
    // Node 0 is the start, node k+1 is reachable[k].
    let node = |k: usize| reachable[k] + 1;

    let mut order = Vec::with_capacity(locations.len());
    let mut cumulative = vec![f64::INFINITY; locations.len()];
    let mut total = 0.0;
    if n > 0 {
        let full = (1usize << n) - 1;
        let mut best = vec![u64::MAX; (full + 1) * n];
        let mut prev = vec![usize::MAX; (full + 1) * n];
        for k in 0..n {
            best[(1 << k) * n + k] = d(0, node(k));
        }
        for mask in 1..=full {
            for last in 0..n {
                let cur = best[mask * n + last];
                if mask & (1 << last) == 0 || cur == u64::MAX {
                    continue;
                }
                for next in 0..n {
                    if mask & (1 << next) != 0 {
                        continue;
                    }
                    let m2 = mask | (1 << next);
                    let cand = cur + d(node(last), node(next));
                    if cand < best[m2 * n + next] {
                        best[m2 * n + next] = cand;
                        prev[m2 * n + next] = last;
                    }
                }
            }
        }
        let (mut last, len) = (0..n)
            .map(|k| (k, best[full * n + k]))
            .min_by_key(|&(k, c)| (c, k))
            .expect("non-empty");
        total = len as f64;
        let mut mask = full;
        let mut rev = Vec::with_capacity(n);
        loop {
            rev.push(last);
            let p = prev[mask * n + last];
            mask &= !(1 << last);
            if p == usize::MAX {
                break;
            }
            last = p;
        }
        let mut at = 0;
        let mut acc = 0u64;
        for k in rev.into_iter().rev() {
            acc += d(at, node(k));
            at = node(k);
            cumulative[reachable[k]] = acc as f64;
            order.push(reachable[k]);
        }
    }
    order.extend(unreachable);
    RouteOrder {
        order,
        cumulative,
        total,
    }
}

/// Like [`plan_order`], also materialising the cell-level path through the
/// reachable locations.
pub fn plan_route(position: Cell, locations: &[Cell], world: &GridWorld) -> RoutePlan {
    let route = plan_order(position, locations, world);
    let path = materialize(position, locations, &route, world);
    RoutePlan {
        order: route.order,
        cumulative: route.cumulative,
        total: route.total,
        path,
    }
}

fn materialize(position: Cell, locations: &[Cell], route: &RouteOrder, world: &GridWorld) -> Path {
    let mut path = Path::single(position);
    let mut at = position;
    for &i in &route.order {
        if route.cumulative[i].is_infinite() {
            break;
        }
        let leg = world
            .shortest_path(at, locations[i])
            .expect("reachable by construction");
        path.extend(&leg);
        at = locations[i];
    }
    path
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub task: TaskId,
    pub location: Cell,
    /// Cost under the route in force when the agreement was reached.
    pub agreed_cost: f64,
    /// Cost under the current route, from the current position.
    pub temp_cost: f64,
    pub share: f64,
    /// Distance from the start of the current route.
    route_offset: u32,
}

/// A gatherer's queue of committed tasks and the route through them.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionPlan {
    capacity: usize,
    entries: Vec<PlanEntry>,
    route: Path,
    cursor: usize,
}

/// A board entry that passed the feasibility checks, with the route the
/// gatherer would follow if the negotiation succeeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub hunter: HunterId,
    pub task: TaskId,
    pub location: Cell,
    /// Cost of the candidate under the tentative route.
    pub cost: f64,
    /// Tentative route over the existing entries followed by the candidate
    /// (the candidate's index is the last one).
    pub route: RouteOrder,
}

impl ActionPlan {
    pub fn new(capacity: usize, position: Cell) -> Result<Self, PlanningError> {
        if capacity == 0 || capacity > MAX_PLAN_CAPACITY {
            return Err(PlanningError::BadCapacity(capacity));
        }
        Ok(Self {
            capacity,
            entries: Vec::new(),
            route: Path::single(position),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    /// Entries in visiting order.
    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn route(&self) -> &Path {
        &self.route
    }

    /// Cells still ahead on the route, excluding the current position.
    pub fn remaining_route(&self) -> &[Cell] {
        &self.route.cells[(self.cursor + 1).min(self.route.cells.len())..]
    }

    pub fn position(&self) -> Cell {
        self.route.cells[self.cursor]
    }

    pub fn locations(&self) -> Vec<Cell> {
        self.entries.iter().map(|e| e.location).collect()
    }

    /// Adds an agreed candidate and adopts its tentative route.
    pub fn commit_candidate(
        &mut self,
        candidate: &Candidate,
        outcome: &NegotiationOutcome,
        world: &GridWorld,
    ) -> Result<(), PlanningError> {
        if self.is_full() {
            return Err(PlanningError::PlanFull(self.len()));
        }
        if outcome.task != candidate.task {
            return Err(PlanningError::TaskMismatch {
                candidate: candidate.task,
                agreed: outcome.task,
            });
        }
        if candidate.cost.is_infinite() {
            return Err(PlanningError::Unreachable(candidate.task));
        }
        let position = self.position();
        let mut locations = self.locations();
        locations.push(candidate.location);
        self.entries.push(PlanEntry {
            task: candidate.task,
            location: candidate.location,
            agreed_cost: candidate.cost,
            temp_cost: candidate.cost,
            share: outcome.shares.gatherer,
            route_offset: 0,
        });
        self.adopt(position, &locations, &candidate.route, world);
        Ok(())
    }

    /// Re-solves the route over the remaining entries from the current
    /// position.
    pub fn replan(&mut self, world: &GridWorld) {
        let position = self.position();
        let locations = self.locations();
        let route = plan_order(position, &locations, world);
        self.adopt(position, &locations, &route, world);
    }

    fn adopt(&mut self, position: Cell, locations: &[Cell], route: &RouteOrder, world: &GridWorld) {
        let mut reordered = Vec::with_capacity(self.entries.len());
        for &i in &route.order {
            let mut e = self.entries[i].clone();
            e.temp_cost = route.cumulative[i];
            e.route_offset = if route.cumulative[i].is_finite() {
                route.cumulative[i] as u32
            } else {
                u32::MAX
            };
            reordered.push(e);
        }
        self.entries = reordered;
        self.route = materialize(position, locations, route, world);
        self.cursor = 0;
    }

    /// Moves one cell along the route. Returns the new position, or `None`
    /// when the route is exhausted.
    pub fn advance(&mut self) -> Option<Cell> {
        if self.cursor + 1 >= self.route.cells.len() {
            return None;
        }
        self.cursor += 1;
        let travelled = self.cursor as u32;
        for e in &mut self.entries {
            if e.route_offset != u32::MAX {
                e.temp_cost = f64::from(e.route_offset.saturating_sub(travelled));
            }
        }
        Some(self.position())
    }

    /// Removes the next entry if the current position is its location.
    pub fn pop_reached(&mut self) -> Option<PlanEntry> {
        let first = self.entries.first()?;
        (first.location == self.position()).then(|| self.entries.remove(0))
    }

    /// Moves the plan's anchor to `position` without a route (used when an
    /// idle gatherer drifts).
    pub fn relocate(&mut self, position: Cell, world: &GridWorld) {
        self.route = Path::single(position);
        self.cursor = 0;
        if !self.entries.is_empty() {
            self.replan(world);
        }
    }
}

/// Scans the board oldest-first and returns the first announcement the
/// gatherer can profitably add to its plan without making any committed
/// entry unprofitable.
pub fn choose_partner(
    plan: &ActionPlan,
    board: &[Announcement],
    params: &MarginParams,
    world: &GridWorld,
) -> Option<Candidate> {
    if plan.is_full() {
        return None;
    }
    let position = plan.position();
    let mut locations = plan.locations();
    let existing = locations.len();
    locations.push(position);
    for announcement in board {
        locations[existing] = announcement.location;
        let route = plan_order(position, &locations, world);
        let cost = route.cumulative[existing];
        if params.classify(cost) == MarginState::State3 {
            continue;
        }
        let keeps_plan_profitable = plan
            .entries()
            .iter()
            .zip(&route.cumulative)
            .all(|(e, &c)| params.is_profitable(c, e.share));
        if keeps_plan_profitable {
            return Some(Candidate {
                hunter: announcement.hunter,
                task: announcement.task,
                location: announcement.location,
                cost,
                route,
            });
        }
    }
    None
}

/// Nearest frontier cell by grid distance, ties broken by lowest
/// (row, col). `None` when no frontier is reachable.
pub fn next_frontier_target(position: Cell, world: &GridWorld) -> Option<Cell> {
    if !world.is_free(position) {
        return None;
    }
    let width = world.width();
    let idx = |c: Cell| c.row * width + c.col;
    let mut seen = vec![false; width * world.height()];
    seen[idx(position)] = true;
    let mut layer = vec![position];
    while !layer.is_empty() {
        if let Some(best) = layer
            .iter()
            .copied()
            .filter(|&c| world.is_frontier(c))
            .min()
        {
            return Some(best);
        }
        let mut next = Vec::new();
        for &c in &layer {
            for nb in world.neighbors(c) {
                if !seen[idx(nb)] {
                    seen[idx(nb)] = true;
                    next.push(nb);
                }
            }
        }
        layer = next;
    }
    None
}

/// Reachable unknown neighbour used when the hunter itself stands on the
/// only frontier cell.
pub fn unknown_neighbor(position: Cell, world: &GridWorld) -> Option<Cell> {
    world.neighbors(position).find(|&n| !world.is_explored(n))
}

/// Breadth-first reachability check used by tests and idle logic.
pub fn reachable(a: Cell, b: Cell, world: &GridWorld) -> bool {
    if !world.is_free(a) || !world.is_free(b) {
        return false;
    }
    let width = world.width();
    let mut seen = vec![false; width * world.height()];
    let mut q = VecDeque::from([a]);
    seen[a.row * width + a.col] = true;
    while let Some(c) = q.pop_front() {
        if c == b {
            return true;
        }
        for nb in world.neighbors(c) {
            let i = nb.row * width + nb.col;
            if !seen[i] {
                seen[i] = true;
                q.push_back(nb);
            }
        }
    }
    false
}

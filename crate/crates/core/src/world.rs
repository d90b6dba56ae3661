//! Grid environment: obstacles, the task population, shared exploration
//! knowledge and shortest-path services.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance sentinel for unreachable cell pairs.
pub const UNREACHABLE: u32 = u32::MAX;

/// `T_forget` value that disables knowledge decay.
pub const NEVER_FORGET: u32 = u32::MAX;

/// Upper bound on cached BFS distance fields before the cache is flushed.
const FIELD_CACHE_LIMIT: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("cell {0} lies outside the grid")]
    OutOfBounds(Cell),
    #[error("cell {0} is an obstacle")]
    Blocked(Cell),
    #[error("no path from {from} to {to}")]
    NoPath { from: Cell, to: Cell },
    #[error("cell {0} already holds a live task")]
    Occupied(Cell),
    #[error("task {task} cannot move from {from:?} to {to:?}")]
    IllegalTransition {
        task: TaskId,
        from: TaskPhase,
        to: TaskPhase,
    },
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("knowledge decay period must be positive")]
    ZeroForgetPeriod,
    #[error("map is empty")]
    EmptyMap,
    #[error("map row {row} has width {found}, expected {expected}")]
    RaggedMap {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unexpected map character {ch:?} at row {row}, column {col}")]
    BadMapChar { ch: char, row: usize, col: usize },
    #[error("no free task-free cell left for a new task")]
    NoFreeCell,
}

/// A grid cell addressed by row and column. Ordering is row-major, which is
/// the tie-break order used throughout the simulator.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        (self.row.abs_diff(other.row) + self.col.abs_diff(other.col)) as u32
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.row
            .abs_diff(other.row)
            .max(self.col.abs_diff(other.col))
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.manhattan(other) == 1
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HunterId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GathererId(pub usize);

impl fmt::Display for HunterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

impl fmt::Display for GathererId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

/// Lifecycle of a task. Transitions only move forward one step at a time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskPhase {
    Hidden,
    Announced,
    Assigned,
    Completed,
}

impl TaskPhase {
    fn successor(self) -> Option<TaskPhase> {
        match self {
            TaskPhase::Hidden => Some(TaskPhase::Announced),
            TaskPhase::Announced => Some(TaskPhase::Assigned),
            TaskPhase::Assigned => Some(TaskPhase::Completed),
            TaskPhase::Completed => None,
        }
    }
}

/// Split of the extra incentive between the hunter and the gatherer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shares {
    pub hunter: f64,
    pub gatherer: f64,
}

impl Shares {
    pub fn from_gatherer(gatherer: f64) -> Self {
        Self {
            hunter: 1.0 - gatherer,
            gatherer,
        }
    }

    pub fn from_hunter(hunter: f64) -> Self {
        Self {
            hunter,
            gatherer: 1.0 - hunter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub location: Cell,
    pub phase: TaskPhase,
    pub detected_by: Option<HunterId>,
    pub assigned_to: Option<GathererId>,
    pub shares: Option<Shares>,
    pub detected_at: Option<u32>,
    pub completed_at: Option<u32>,
    /// Every phase the task has been in, starting with `Hidden`.
    pub history: Vec<TaskPhase>,
}

impl Task {
    fn new(id: TaskId, location: Cell) -> Self {
        Self {
            id,
            location,
            phase: TaskPhase::Hidden,
            detected_by: None,
            assigned_to: None,
            shares: None,
            detected_at: None,
            completed_at: None,
            history: vec![TaskPhase::Hidden],
        }
    }

    pub fn is_live(&self) -> bool {
        self.phase != TaskPhase::Completed
    }

    fn advance(&mut self, to: TaskPhase) -> Result<(), WorldError> {
        if self.phase.successor() != Some(to) {
            return Err(WorldError::IllegalTransition {
                task: self.id,
                from: self.phase,
                to,
            });
        }
        self.phase = to;
        self.history.push(to);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Knowledge {
    Unknown,
    Explored { last_seen: u32 },
}

/// A concrete route over grid cells.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Path {
    pub cells: Vec<Cell>,
    pub cost: u32,
}

impl Path {
    pub fn single(cell: Cell) -> Self {
        Self {
            cells: vec![cell],
            cost: 0,
        }
    }

    pub fn start(&self) -> Option<Cell> {
        self.cells.first().copied()
    }

    pub fn goal(&self) -> Option<Cell> {
        self.cells.last().copied()
    }

    /// Appends `leg`, whose first cell must equal this path's last cell.
    pub fn extend(&mut self, leg: &Path) {
        if self.cells.is_empty() {
            self.cells = leg.cells.clone();
        } else {
            debug_assert_eq!(self.goal(), leg.start());
            self.cells.extend_from_slice(&leg.cells[1..]);
        }
        self.cost += leg.cost;
    }
}

/// Symmetric matrix of shortest-path distances; `UNREACHABLE` marks pairs
/// with no connecting path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<u32>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.data[a * self.n + b]
    }

    /// Distance as a cost value, infinite when unreachable.
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        match self.get(a, b) {
            UNREACHABLE => f64::INFINITY,
            d => f64::from(d),
        }
    }
}

/// Cells explored and hidden tasks seen by a single sensing sweep.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SenseReport {
    pub explored: usize,
    pub detected: Vec<TaskId>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpawnReport {
    pub spawned: Vec<TaskId>,
    /// Spawns that found no unknown cell and fell back to any free cell.
    pub fallbacks: usize,
}

#[derive(Debug, Default)]
struct FieldCache {
    fields: Mutex<HashMap<Cell, Arc<[u32]>>>,
}

impl Clone for FieldCache {
    fn clone(&self) -> Self {
        let fields = self.fields.lock().map(|f| f.clone()).unwrap_or_default();
        Self {
            fields: Mutex::new(fields),
        }
    }
}

/// The shared environment. Only the mission engine mutates it.
#[derive(Clone, Debug)]
pub struct GridWorld {
    width: usize,
    height: usize,
    obstacles: Vec<bool>,
    has_obstacles: bool,
    knowledge: Vec<Knowledge>,
    tasks: Vec<Task>,
    task_at: Vec<Option<TaskId>>,
    iteration: u32,
    field_cache: FieldCache,
}

impl GridWorld {
    /// An obstacle-free grid with every cell unknown.
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            obstacles: vec![false; n],
            has_obstacles: false,
            knowledge: vec![Knowledge::Unknown; n],
            tasks: Vec::new(),
            task_at: vec![None; n],
            iteration: 0,
            field_cache: FieldCache::default(),
        }
    }

    /// Parses a map where `.` is free and `#` is an obstacle, one row per line.
    pub fn from_map_str(text: &str) -> Result<Self, WorldError> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let Some(first) = rows.first() else {
            return Err(WorldError::EmptyMap);
        };
        let width = first.chars().count();
        if width == 0 {
            return Err(WorldError::EmptyMap);
        }
        let mut world = Self::empty(width, rows.len());
        for (row, line) in rows.iter().enumerate() {
            let found = line.chars().count();
            if found != width {
                return Err(WorldError::RaggedMap {
                    row,
                    expected: width,
                    found,
                });
            }
            for (col, ch) in line.chars().enumerate() {
                match ch {
                    '.' => {}
                    '#' => {
                        world.obstacles[row * width + col] = true;
                        world.has_obstacles = true;
                    }
                    ch => return Err(WorldError::BadMapChar { ch, row, col }),
                }
            }
        }
        Ok(world)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn set_iteration(&mut self, iteration: u32) {
        self.iteration = iteration;
    }

    pub fn has_obstacles(&self) -> bool {
        self.has_obstacles
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.obstacles[self.index(cell)]
    }

    pub fn set_obstacle(&mut self, cell: Cell, blocked: bool) -> Result<(), WorldError> {
        if !self.in_bounds(cell) {
            return Err(WorldError::OutOfBounds(cell));
        }
        if blocked && self.task_at[self.index(cell)].is_some() {
            return Err(WorldError::Occupied(cell));
        }
        let i = self.index(cell);
        self.obstacles[i] = blocked;
        self.has_obstacles = self.obstacles.iter().any(|&b| b);
        self.field_cache = FieldCache::default();
        Ok(())
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.obstacles.len())
            .filter(|&i| !self.obstacles[i])
            .map(|i| self.cell_at(i))
    }

    /// Free 4-neighbours of `cell` in row-major order.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        let up = cell.row.checked_sub(1).map(|r| Cell::new(r, cell.col));
        let left = cell.col.checked_sub(1).map(|c| Cell::new(cell.row, c));
        let right = Some(Cell::new(cell.row, cell.col + 1));
        let down = Some(Cell::new(cell.row + 1, cell.col));
        [up, left, right, down]
            .into_iter()
            .flatten()
            .filter(move |&c| self.is_free(c))
    }

    fn check_free(&self, cell: Cell) -> Result<(), WorldError> {
        if !self.in_bounds(cell) {
            Err(WorldError::OutOfBounds(cell))
        } else if self.obstacles[self.index(cell)] {
            Err(WorldError::Blocked(cell))
        } else {
            Ok(())
        }
    }

    // ---- knowledge ----

    pub fn knowledge(&self, cell: Cell) -> Knowledge {
        self.knowledge[self.index(cell)]
    }

    pub fn is_explored(&self, cell: Cell) -> bool {
        matches!(self.knowledge(cell), Knowledge::Explored { .. })
    }

    pub fn explored_count(&self) -> usize {
        self.knowledge
            .iter()
            .filter(|k| matches!(k, Knowledge::Explored { .. }))
            .count()
    }

    /// An explored free cell with at least one free unknown neighbour.
    pub fn is_frontier(&self, cell: Cell) -> bool {
        self.is_free(cell)
            && self.is_explored(cell)
            && self.neighbors(cell).any(|n| !self.is_explored(n))
    }

    /// Marks free cells within Chebyshev `radius` of `position` as explored
    /// at the current iteration and reports hidden, unclaimed tasks on them.
    pub fn sense(&mut self, position: Cell, radius: usize) -> SenseReport {
        let mut report = SenseReport::default();
        let r0 = position.row.saturating_sub(radius);
        let c0 = position.col.saturating_sub(radius);
        let r1 = (position.row + radius).min(self.height.saturating_sub(1));
        let c1 = (position.col + radius).min(self.width.saturating_sub(1));
        for row in r0..=r1 {
            for col in c0..=c1 {
                let i = row * self.width + col;
                if self.obstacles[i] {
                    continue;
                }
                self.knowledge[i] = Knowledge::Explored {
                    last_seen: self.iteration,
                };
                report.explored += 1;
                if let Some(id) = self.task_at[i] {
                    let task = &self.tasks[id.0 as usize];
                    if task.phase == TaskPhase::Hidden && task.detected_by.is_none() {
                        report.detected.push(id);
                    }
                }
            }
        }
        report
    }

    /// Reverts explored cells not seen for at least `t_forget` iterations.
    /// Returns how many cells were forgotten.
    pub fn decay_knowledge(&mut self, t_forget: u32) -> Result<usize, WorldError> {
        if t_forget == 0 {
            return Err(WorldError::ZeroForgetPeriod);
        }
        if t_forget == NEVER_FORGET {
            return Ok(0);
        }
        let now = self.iteration;
        let mut forgotten = 0;
        for k in &mut self.knowledge {
            if let Knowledge::Explored { last_seen } = *k {
                if now.saturating_sub(last_seen) >= t_forget {
                    *k = Knowledge::Unknown;
                    forgotten += 1;
                }
            }
        }
        Ok(forgotten)
    }

    // ---- tasks ----

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, id: TaskId) -> Result<&Task, WorldError> {
        self.tasks
            .get(id.0 as usize)
            .ok_or(WorldError::UnknownTask(id))
    }

    fn task_mut(&mut self, id: TaskId) -> Result<&mut Task, WorldError> {
        self.tasks
            .get_mut(id.0 as usize)
            .ok_or(WorldError::UnknownTask(id))
    }

    pub fn task_at(&self, cell: Cell) -> Option<TaskId> {
        self.in_bounds(cell)
            .then(|| self.task_at[self.index(cell)])
            .flatten()
    }

    pub fn live_task_count(&self) -> usize {
        self.tasks.iter().filter(|t| t.is_live()).count()
    }

    /// Places a hidden task on a free, task-free cell.
    pub fn place_task(&mut self, cell: Cell) -> Result<TaskId, WorldError> {
        self.check_free(cell)?;
        let i = self.index(cell);
        if self.task_at[i].is_some() {
            return Err(WorldError::Occupied(cell));
        }
        let id = TaskId(self.tasks.len() as u32);
        self.tasks.push(Task::new(id, cell));
        self.task_at[i] = Some(id);
        Ok(id)
    }

    /// Places `count` tasks on uniformly random free, task-free cells.
    pub fn scatter_tasks<R: Rng>(
        &mut self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<TaskId>, WorldError> {
        let candidates: Vec<Cell> = self
            .free_cells()
            .filter(|&c| self.task_at(c).is_none())
            .collect();
        if candidates.len() < count {
            return Err(WorldError::NoFreeCell);
        }
        candidates
            .choose_multiple(rng, count)
            .copied()
            .collect::<Vec<_>>()
            .into_iter()
            .map(|c| self.place_task(c))
            .collect()
    }

    /// Records that `hunter` has sensed the task and holds it.
    pub fn claim_detection(
        &mut self,
        id: TaskId,
        hunter: HunterId,
        iteration: u32,
    ) -> Result<(), WorldError> {
        let task = self.task_mut(id)?;
        if task.phase != TaskPhase::Hidden || task.detected_by.is_some() {
            return Err(WorldError::IllegalTransition {
                task: id,
                from: task.phase,
                to: TaskPhase::Hidden,
            });
        }
        task.detected_by = Some(hunter);
        task.detected_at = Some(iteration);
        Ok(())
    }

    pub fn mark_announced(&mut self, id: TaskId) -> Result<(), WorldError> {
        self.task_mut(id)?.advance(TaskPhase::Announced)
    }

    pub fn mark_assigned(
        &mut self,
        id: TaskId,
        gatherer: GathererId,
        shares: Shares,
    ) -> Result<(), WorldError> {
        let task = self.task_mut(id)?;
        task.advance(TaskPhase::Assigned)?;
        task.assigned_to = Some(gatherer);
        task.shares = Some(shares);
        Ok(())
    }

    pub fn mark_completed(&mut self, id: TaskId, iteration: u32) -> Result<(), WorldError> {
        let task = self.task_mut(id)?;
        task.advance(TaskPhase::Completed)?;
        task.completed_at = Some(iteration);
        let location = task.location;
        let i = self.index(location);
        self.task_at[i] = None;
        Ok(())
    }

    /// Tops the live-task count back up to `target` with hidden tasks on
    /// random unknown cells, falling back to any free task-free cell.
    pub fn maintain_population<R: Rng>(
        &mut self,
        target: usize,
        rng: &mut R,
    ) -> Result<SpawnReport, WorldError> {
        let mut report = SpawnReport::default();
        let missing = target.saturating_sub(self.live_task_count());
        for _ in 0..missing {
            let unknown: Vec<usize> = (0..self.obstacles.len())
                .filter(|&i| {
                    !self.obstacles[i]
                        && self.task_at[i].is_none()
                        && self.knowledge[i] == Knowledge::Unknown
                })
                .collect();
            let pool = if unknown.is_empty() {
                report.fallbacks += 1;
                (0..self.obstacles.len())
                    .filter(|&i| !self.obstacles[i] && self.task_at[i].is_none())
                    .collect()
            } else {
                unknown
            };
            let &i = pool.choose(rng).ok_or(WorldError::NoFreeCell)?;
            let cell = self.cell_at(i);
            report.spawned.push(self.place_task(cell)?);
        }
        Ok(report)
    }

    // ---- paths ----

    /// Shortest 4-connected unit-cost path, found with A* under the
    /// Manhattan heuristic.
    pub fn shortest_path(&self, start: Cell, goal: Cell) -> Result<Path, WorldError> {
        self.check_free(start)?;
        self.check_free(goal)?;
        if start == goal {
            return Ok(Path::single(start));
        }
        let n = self.obstacles.len();
        let mut g = vec![UNREACHABLE; n];
        let mut parent = vec![usize::MAX; n];
        let mut open = BinaryHeap::new();
        let s = self.index(start);
        let t = self.index(goal);
        g[s] = 0;
        // (f, h, cell index) with min-heap ordering; ties favour cells closer
        // to the goal and then lower row-major index.
        open.push(Reverse((start.manhattan(goal), start.manhattan(goal), s)));
        while let Some(Reverse((f, _, i))) = open.pop() {
            let cell = self.cell_at(i);
            if f > g[i] + cell.manhattan(goal) {
                continue;
            }
            if i == t {
                break;
            }
            let next_g = g[i] + 1;
            for nb in self.neighbors(cell) {
                let j = self.index(nb);
                if next_g < g[j] {
                    g[j] = next_g;
                    parent[j] = i;
                    let h = nb.manhattan(goal);
                    open.push(Reverse((next_g + h, h, j)));
                }
            }
        }
        if g[t] == UNREACHABLE {
            return Err(WorldError::NoPath {
                from: start,
                to: goal,
            });
        }
        let mut cells = Vec::with_capacity(g[t] as usize + 1);
        let mut cur = t;
        while cur != s {
            cells.push(self.cell_at(cur));
            cur = parent[cur];
        }
        cells.push(start);
        cells.reverse();
        Ok(Path { cells, cost: g[t] })
    }

    /// Breadth-first distances from `source` to every cell (`UNREACHABLE`
    /// for obstacles and disconnected cells). Results are cached.
    pub fn distance_field(&self, source: Cell) -> Arc<[u32]> {
        if let Ok(cache) = self.field_cache.fields.lock() {
            if let Some(field) = cache.get(&source) {
                return Arc::clone(field);
            }
        }
        let field: Arc<[u32]> = self.bfs_field(source).into();
        if let Ok(mut cache) = self.field_cache.fields.lock() {
            if cache.len() >= FIELD_CACHE_LIMIT {
                cache.clear();
            }
            cache.insert(source, Arc::clone(&field));
        }
        field
    }

    fn bfs_field(&self, source: Cell) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.obstacles.len()];
        if !self.is_free(source) {
            return dist;
        }
        let s = self.index(source);
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            let cell = self.cell_at(i);
            for nb in self.neighbors(cell) {
                let j = self.index(nb);
                if dist[j] == UNREACHABLE {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    /// Grid shortest distance between two free cells, `UNREACHABLE` if none.
    pub fn distance(&self, a: Cell, b: Cell) -> u32 {
        if !self.is_free(a) || !self.is_free(b) {
            return UNREACHABLE;
        }
        if !self.has_obstacles {
            return a.manhattan(b);
        }
        self.distance_field(a)[self.index(b)]
    }

    /// All-pairs shortest distances between `points`.
    pub fn pairwise_distances(&self, points: &[Cell]) -> DistanceMatrix {
        let n = points.len();
        let mut data = vec![0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let d = self.distance(points[a], points[b]);
                data[a * n + b] = d;
                data[b * n + a] = d;
            }
            if !self.is_free(points[a]) {
                data[a * n + a] = UNREACHABLE;
            }
        }
        DistanceMatrix { n, data }
    }
}

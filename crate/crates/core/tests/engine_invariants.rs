use hgmp_core::engine::{run_mission, Actor, EventKind, Mission, MissionConfig};
use hgmp_core::world::{Cell, TaskPhase};
use proptest::prelude::*;

const LIFECYCLE: [TaskPhase; 4] = [
    TaskPhase::Hidden,
    TaskPhase::Announced,
    TaskPhase::Assigned,
    TaskPhase::Completed,
];

fn small(seed: u64) -> MissionConfig {
    MissionConfig {
        width: 30,
        height: 30,
        live_tasks: 12,
        max_iterations: 300,
        seed,
        ..MissionConfig::default()
    }
}

fn check_step_invariants(m: &Mission, config: &MissionConfig) {
    let world = m.world();
    if config.perpetual {
        assert_eq!(world.live_task_count(), config.live_tasks);
    }
    for t in world.tasks() {
        assert!(LIFECYCLE.starts_with(&t.history), "{:?}", t.history);
        assert_eq!(*t.history.last().unwrap(), t.phase);
        assert!(world.is_free(t.location));
    }
    for h in m.hunters() {
        assert!(world.is_free(h.position));
        let booked: f64 = h.cost_ledger.iter().map(|&(_, c)| c).sum();
        assert_eq!(booked + h.unattributed() as f64, h.odometer as f64);
    }
    for g in m.gatherers() {
        assert!(world.is_free(g.position()));
        let booked: f64 = g.cost_ledger.iter().map(|&(_, c)| c).sum();
        assert_eq!(booked + g.unattributed() as f64, g.odometer as f64);
        assert!(g.plan.len() <= config.plan_capacity);
    }
    let board = m.board();
    for a in board.waiting() {
        assert!(m.hunters()[a.hunter.0].hold());
    }
}

fn run_checked(config: &MissionConfig) {
    let mut m = Mission::new(config).unwrap();
    check_step_invariants(&m, config);
    for _ in 0..config.max_iterations {
        m.step().unwrap();
        check_step_invariants(&m, config);
    }
    let log = m.into_log();
    let completed = log
        .tasks
        .iter()
        .filter(|t| t.phase == TaskPhase::Completed)
        .count();
    let completions = log
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Completed { .. }))
        .count();
    assert_eq!(completed, completions);
    for t in log.tasks.iter().filter(|t| t.phase == TaskPhase::Completed) {
        assert_eq!(t.history, LIFECYCLE);
        let s = t.shares.unwrap();
        assert!((s.hunter + s.gatherer - 1.0).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&s.hunter));
    }
}

#[test]
fn invariants_hold_on_open_grids() {
    for seed in 0..4 {
        run_checked(&small(seed));
    }
}

#[test]
fn invariants_hold_without_respawning() {
    let config = MissionConfig {
        perpetual: false,
        ..small(9)
    };
    run_checked(&config);
    let (log, _) = run_mission(&config).unwrap();
    assert_eq!(log.tasks.len(), config.live_tasks);
}

#[test]
fn obstacles_are_never_occupied() {
    let mut rows = Vec::new();
    for r in 0..24 {
        let row: String = (0..24)
            .map(|c| {
                let wall =
                    (c == 8 && r < 18) || (c == 16 && r > 5) || (r == 12 && (3..6).contains(&c));
                if wall {
                    '#'
                } else {
                    '.'
                }
            })
            .collect();
        rows.push(row);
    }
    let config = MissionConfig {
        map: Some(rows.join("\n")),
        live_tasks: 10,
        max_iterations: 400,
        seed: 5,
        ..MissionConfig::default()
    };
    run_checked(&config);
}

#[test]
fn same_seed_same_log() {
    let config = small(21);
    let (a, ma) = run_mission(&config).unwrap();
    let (b, mb) = run_mission(&config).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    assert_eq!(ma, mb);
    let (c, _) = run_mission(&small(22)).unwrap();
    assert_ne!(a.to_csv_string(), c.to_csv_string());
}

#[test]
fn agreements_precede_completion_and_match_assignment() {
    let (log, _) = run_mission(&small(3)).unwrap();
    for e in &log.events {
        if let EventKind::Completed { task, .. } = e.kind {
            let Actor::Gatherer(g) = e.actor else {
                panic!("completion by {}", e.actor)
            };
            let agreed = log.events.iter().find(|a| {
                matches!(a.kind, EventKind::Agreement { task: t, gatherer, .. } if t == task && gatherer == g)
            });
            assert!(agreed.is_some_and(|a| a.iteration <= e.iteration));
            assert_eq!(log.tasks[task.0 as usize].assigned_to, Some(g));
        }
    }
}

#[test]
fn fixed_starts_and_tasks_are_respected() {
    let config = MissionConfig {
        width: 12,
        height: 12,
        hunters: 1,
        gatherers: 1,
        live_tasks: 2,
        perpetual: false,
        tasks: vec![Cell::new(2, 2), Cell::new(9, 9)],
        hunter_starts: vec![Cell::new(0, 0)],
        gatherer_starts: vec![Cell::new(11, 0)],
        max_iterations: 5,
        ..MissionConfig::default()
    };
    let m = Mission::new(&config).unwrap();
    assert_eq!(m.hunters()[0].position, Cell::new(0, 0));
    assert_eq!(m.gatherers()[0].position(), Cell::new(11, 0));
    let cells: Vec<Cell> = m.world().tasks().iter().map(|t| t.location).collect();
    assert_eq!(cells, config.tasks);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn invariants_hold_for_random_configs(
        seed in 0u64..1_000,
        side in 8usize..24,
        hunters in 1usize..4,
        gatherers in 1usize..4,
        tasks in 0usize..10,
        q in 1usize..6,
        perpetual in any::<bool>(),
    ) {
        let config = MissionConfig {
            width: side,
            height: side,
            hunters,
            gatherers,
            live_tasks: tasks,
            plan_capacity: q,
            perpetual,
            max_iterations: 120,
            seed,
            ..MissionConfig::default()
        };
        run_checked(&config);
    }
}

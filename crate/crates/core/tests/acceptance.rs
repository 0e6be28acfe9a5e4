//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use forage_sim::controller::{
    apply_trip_update, foraging_probability, observe_peer, ActivityLevel, Controller, ControllerKind,
    ControllerParams, PeerStatus, TripOutcome, Verdict,
};
use forage_sim::engine::{run, step, RunOutput, SimState};
use forage_sim::experiment::{execute, parse_spec};
use forage_sim::world::{Energy, Mode, Point, Rect, RngStream, WorldConfig};
use rayon::prelude::*;

const SEEDS: std::ops::Range<u64> = 1000..1010;
const RATIOS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (
        elapsed < limit,
        format!("{:.2}s of {}s", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

// 1. response curve against its closed form
fn c1() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..100 {
        for j in 0..100 {
            let s = 10.0 * i as f64 / 99.0;
            let th = 10.0 * j as f64 / 99.0;
            let oracle = if s == 0.0 { 0.0 } else { 1.0 / (1.0 + (th / s) * (th / s)) };
            worst = worst.max((foraging_probability(s, th) - oracle).abs());
        }
    }
    let mut exact = foraging_probability(0.0, 0.0) == 0.0;
    for x in [1e-9, 0.3, 1.0, 7.5, 10.0] {
        exact &= foraging_probability(0.0, x) == 0.0;
        exact &= foraging_probability(x, x) == 0.5;
    }
    let (fast, time) = within(t.elapsed(), Duration::from_secs(1));
    outcome(worst <= 1e-12 && exact && fast, format!("max error {worst:.1e}, boundaries exact: {exact}, {time}"))
}

// 2. trip update table, every outcome x counter sign x clamp case
fn c2() -> Outcome {
    let t = Instant::now();
    // dyadic magnitudes keep every expected value exact
    let p = ControllerParams {
        delta1: 0.125,
        delta2: 0.25,
        phi1: 0.375,
        phi2: 0.5,
        th_min: 0.5,
        th_max: 2.0,
        s_min: 0.25,
        s_max: 3.0,
        ..ControllerParams::default()
    };
    let ok = |verdict| TripOutcome {
        verdict,
        net: Energy::ZERO,
    };
    use Verdict::{Failure, Success};
    // (verdict, counter, th, s) -> (th', s')
    type Row = (Verdict, i64, f64, f64, f64, f64);
    let table: [Row; 12] = [
        (Success, 3, 1.0, 1.0, 0.875, 1.375),
        (Success, 0, 1.0, 1.0, 0.875, 1.0),
        (Success, -2, 1.0, 1.0, 0.875, 1.0),
        (Failure, 3, 1.0, 1.0, 1.25, 1.0),
        (Failure, 0, 1.0, 1.0, 1.25, 1.0),
        (Failure, -2, 1.0, 1.0, 1.25, 0.5),
        (Success, 1, 0.5625, 2.75, 0.5, 3.0),
        (Success, 0, 0.5625, 2.75, 0.5, 2.75),
        (Success, -1, 0.5625, 2.75, 0.5, 2.75),
        (Failure, 1, 1.875, 0.5, 2.0, 0.5),
        (Failure, 0, 1.875, 0.5, 2.0, 0.5),
        (Failure, -1, 1.875, 0.5, 2.0, 0.25),
    ];
    let mut bad = Vec::new();
    for (i, &(v, counter, th, s, th_want, s_want)) in table.iter().enumerate() {
        let got = apply_trip_update(th, s, &ok(v), counter, &p);
        if got != (th_want, s_want) {
            bad.push(format!("row {i}: got {got:?}"));
        }
    }
    let (fast, time) = within(t.elapsed(), Duration::from_secs(1));
    outcome(bad.is_empty() && fast, format!("{} of 12 rows exact {}, {time}", 12 - bad.len(), bad.join("; ")))
}

// 3. peer observation rules and order independence
fn c3() -> Outcome {
    let t = Instant::now();
    let rules = observe_peer(0, PeerStatus::FoundFood) == 1
        && observe_peer(0, PeerStatus::Searching) == -1
        && observe_peer(0, PeerStatus::Failed) == -2
        && observe_peer(5, PeerStatus::Failed) == 3;
    let mut rng = RngStream::new(31);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let len = (rng.next_u64() % 40) as usize;
        let mut obs: Vec<PeerStatus> = (0..len)
            .map(|_| match rng.next_u64() % 3 {
                0 => PeerStatus::FoundFood,
                1 => PeerStatus::Searching,
                _ => PeerStatus::Failed,
            })
            .collect();
        let found = obs.iter().filter(|o| **o == PeerStatus::FoundFood).count() as i64;
        let searching = obs.iter().filter(|o| **o == PeerStatus::Searching).count() as i64;
        let failed = obs.iter().filter(|o| **o == PeerStatus::Failed).count() as i64;
        let oracle = found - searching - 2 * failed;
        let forward = obs.iter().fold(0, |c, &o| observe_peer(c, o));
        for i in (1..obs.len()).rev() {
            obs.swap(i, (rng.next_u64() % (i as u64 + 1)) as usize);
        }
        let shuffled = obs.iter().fold(0, |c, &o| observe_peer(c, o));
        if forward != oracle || shuffled != oracle {
            mismatches += 1;
        }
    }
    let (fast, time) = within(t.elapsed(), Duration::from_secs(1));
    outcome(rules && mismatches == 0 && fast, format!("rules exact: {rules}, {mismatches} of 1000 multisets differ, {time}"))
}

// 4. exact energy and food conservation at every step
fn c4() -> Outcome {
    let t = Instant::now();
    let cfg = alternating(20, 0.05);
    let kinds = [
        ControllerKind::Adaptive,
        ControllerKind::AdaptiveMultilevel,
        ControllerKind::FixedRatio { ratio: 0.5 },
        ControllerKind::FixedNumber { target: 20 },
    ];
    let checked: Vec<Result<u64, String>> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let ctl = Controller::new(kinds[seed as usize % kinds.len()], ControllerParams::default());
            let mut st = SimState::new(cfg.clone(), ctl, seed).map_err(|e| e.to_string())?;
            let mut trips = 0;
            for _ in 0..2000 {
                step(&mut st).map_err(|e| format!("seed {seed}: {e}"))?;
                trips = st.trips.len() as u64;
                let mut collected = Energy::ZERO;
                let mut spent = Energy::ZERO;
                for r in &st.robots {
                    for l in [r.cumulative_ledger, r.trip_ledger] {
                        collected += l.collected;
                        spent += l.move_spent + l.comm_spent + l.idle_spent;
                    }
                }
                if st.running_net != collected - spent {
                    return Err(format!("seed {seed} step {}: energy drift", st.step));
                }
                let f = &st.food;
                let holders = st.robots.iter().filter(|r| r.carried_food.is_some()).count() as u64;
                if f.available.len() as u64 + holders + f.delivered + f.expired != f.spawned {
                    return Err(format!("seed {seed} step {}: food count", st.step));
                }
            }
            Ok(trips)
        })
        .collect();
    let failures: Vec<&String> = checked.iter().filter_map(|r| r.as_ref().err()).collect();
    let trips: u64 = checked.iter().filter_map(|r| r.as_ref().ok()).sum();
    let (fast, time) = within(t.elapsed(), Duration::from_secs(30));
    outcome(
        failures.is_empty() && fast,
        format!(
            "50 runs x 2000 steps over {trips} trips, {} violations {}, {time}",
            failures.len(),
            failures.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; ")
        ),
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

// 5. byte-identical artifacts across repeats and worker counts
fn c5() -> Outcome {
    let t = Instant::now();
    let text = "world.max_steps = 800\nruns = 3\nmaster_seed = 4242\n\
                sweep world.num_robots = 10,20\nsweep p0 = 0.3,0.45\n";
    let spec = parse_spec(text).expect("spec parses");
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, workers) in dirs.iter().zip([1, 1, 8]) {
        if let Err(e) = execute(&spec, d.path(), workers) {
            return outcome(false, format!("execute failed: {e}"));
        }
    }
    let a = snapshot(dirs[0].path());
    let same = a == snapshot(dirs[1].path()) && a == snapshot(dirs[2].path());
    let (fast, time) = within(t.elapsed(), Duration::from_secs(60));
    outcome(same && a.len() == 13 && fast, format!("{} files, identical: {same}, {time}", a.len()))
}

// 6. 1-robot, 20-step world against a hand-executed trace
fn c6() -> Outcome {
    // robot rests at (11, 4); the strip around x = 11 fixes the transit line.
    // Hand trace: 9 moves up to y = 13 (food at (11, 15) now 2 away, pickup
    // on step 8), 8 moves back toward (10, 4) (sqrt(82) - 7 > 2), arrival
    // on step 16 with move 17 and collected 50, Success, Th 1 -> 0.9, S
    // unchanged, one idle step, departure on step 17, 3 more moves.
    let cfg = WorldConfig {
        arena_width: 20.0,
        arena_height: 20.0,
        home_center: Point::new(10.0, 4.0),
        home_radius: 2.0,
        forage_area: Rect::new(10.99, 14.0, 11.01, 16.0),
        food_spawn_rate: 0.0,
        alt_spawn_rate: 0.0,
        initial_food: 0,
        food_energy: 50.0,
        move_cost: 1.0,
        idle_cost: 0.5,
        sense_radius: 2.5,
        robot_speed: 1.0,
        giveup_steps: 40,
        num_robots: 1,
        ..WorldConfig::default()
    };
    let params = ControllerParams {
        delta1: 0.1,
        p0: 0.4,
        th_init: 1.0,
        s_init: 1.0,
        ..ControllerParams::default()
    };
    let mut st = SimState::new(cfg, Controller::new(ControllerKind::Adaptive, params), 99).unwrap();
    st.place_food(Point::new(11.0, 15.0));
    let mut modes = Vec::new();
    for _ in 0..20 {
        if let Err(e) = step(&mut st) {
            return outcome(false, format!("step failed: {e}"));
        }
        modes.push(st.robots[0].mode);
    }
    let mut want = vec![Mode::Searching; 8];
    want.extend([Mode::Returning; 8]);
    want.push(Mode::AtHome);
    want.extend([Mode::Searching; 3]);
    let r = &st.robots[0];
    let trip_ok = st.trips.len() == 1
        && st.trips[0].end_step == 16
        && st.trips[0].verdict == Verdict::Success
        && st.trips[0].ledger.move_spent == Energy::from_units(17.0)
        && st.trips[0].ledger.collected == Energy::from_units(50.0);
    let ledgers_ok = r.cumulative_ledger.collected == Energy::from_units(50.0)
        && r.cumulative_ledger.move_spent == Energy::from_units(17.0)
        && r.cumulative_ledger.idle_spent == Energy::from_units(0.5)
        && r.cumulative_ledger.comm_spent == Energy::ZERO
        && r.trip_ledger.move_spent == Energy::from_units(3.0);
    let adapt_ok = (r.threshold - 0.9).abs() < 1e-12 && st.board.stimulus == 1.0;
    outcome(
        modes == want && trip_ok && ledgers_ok && adapt_ok,
        format!("modes {}, trip {trip_ok}, ledgers {ledgers_ok}, update {adapt_ok}", modes == want),
    )
}

fn regime(n: usize, rich: f64, alt: f64, period: u64, idle: f64) -> WorldConfig {
    WorldConfig {
        num_robots: n,
        food_spawn_rate: rich,
        alt_spawn_rate: alt,
        regime_period: period,
        idle_cost: idle,
        max_steps: 2000,
        ..WorldConfig::default()
    }
}

fn alternating(n: usize, idle: f64) -> WorldConfig {
    regime(n, 2.0, 0.05, 500, idle)
}

fn runs(cfg: &WorldConfig, kind: ControllerKind) -> Vec<RunOutput> {
    let ctl = Controller::new(kind, ControllerParams::default());
    SEEDS
        .into_par_iter()
        .map(|seed| run(cfg, &ctl, seed, cfg.max_steps).expect("valid run"))
        .collect()
}

fn mean_efficiency(cfg: &WorldConfig, kind: ControllerKind) -> f64 {
    let r = runs(cfg, kind);
    r.iter().map(|o| o.result.efficiency).sum::<f64>() / r.len() as f64
}

fn best_fixed_ratio(cfg: &WorldConfig) -> (f64, f64) {
    RATIOS
        .iter()
        .map(|&ratio| (ratio, mean_efficiency(cfg, ControllerKind::FixedRatio { ratio })))
        .fold((f64::NAN, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best })
}

// 7. more robots forage when food is rich than when it is scarce
fn c7() -> Outcome {
    let t = Instant::now();
    let active_fraction = |rate: f64| {
        let cfg = regime(20, rate, 0.0, 0, 0.0);
        let out = runs(&cfg, ControllerKind::Adaptive);
        let per_run: Vec<f64> = out
            .iter()
            .map(|o| {
                let window = &o.samples[1000..2000];
                window.iter().map(|s| s.active_foragers as f64 / 20.0).sum::<f64>() / window.len() as f64
            })
            .collect();
        per_run.iter().sum::<f64>() / per_run.len() as f64
    };
    let rich = active_fraction(2.0);
    let scarce = active_fraction(0.05);
    let (fast, time) = within(t.elapsed(), Duration::from_secs(60));
    outcome(
        rich - scarce >= 0.1 && fast,
        format!("active fraction rich {rich:.3}, scarce {scarce:.3}, difference {:.3} (need >= 0.1), {time}", rich - scarce),
    )
}

// 8. adaptive against the fixed ratios when abundance alternates
fn c8() -> Outcome {
    let t = Instant::now();
    let cfg = alternating(20, 0.0);
    let adaptive = mean_efficiency(&cfg, ControllerKind::Adaptive);
    let (ratio, best) = best_fixed_ratio(&cfg);
    let (fast, time) = within(t.elapsed(), Duration::from_secs(180));
    outcome(
        adaptive >= 0.95 * best && fast,
        format!("adaptive {adaptive:.4}, best fixed_ratio({ratio}) {best:.4}, ratio {:.3} (need >= 0.95), {time}", adaptive / best),
    )
}

// 9. advantage over the best fixed baseline grows with swarm size
fn c9() -> Outcome {
    let t = Instant::now();
    let advantage = |n: usize| {
        let cfg = alternating(n, 0.0);
        let adaptive = mean_efficiency(&cfg, ControllerKind::Adaptive);
        adaptive - best_fixed_ratio(&cfg).1
    };
    let small = advantage(10);
    let large = advantage(50);
    let (fast, time) = within(t.elapsed(), Duration::from_secs(300));
    outcome(
        large >= small && fast,
        format!("advantage at 10 robots {small:.4}, at 50 robots {large:.4}, {time}"),
    )
}

// 10. activity levels pay off with idle cost, and Low moves cheaper than High
fn c10() -> Outcome {
    let t = Instant::now();
    let cfg = alternating(20, 0.05);
    let adaptive = mean_efficiency(&cfg, ControllerKind::Adaptive);
    let multi = runs(&cfg, ControllerKind::AdaptiveMultilevel);
    let multilevel = multi.iter().map(|o| o.result.efficiency).sum::<f64>() / multi.len() as f64;

    // one full step of movement at a forced level
    let p = ControllerParams::default();
    let one_step = |s: f64| {
        let params = ControllerParams {
            s_init: s,
            th_init: 0.5,
            ..p.clone()
        };
        let world = WorldConfig {
            num_robots: 1,
            food_spawn_rate: 0.0,
            initial_food: 0,
            ..WorldConfig::default()
        };
        let mut st = SimState::new(world.clone(), Controller::new(ControllerKind::AdaptiveMultilevel, params), 5).unwrap();
        step(&mut st).unwrap();
        let r = &st.robots[0];
        (r.activity_level, r.trip_ledger.move_spent, world)
    };
    let (low_level, low_cost, w) = one_step(p.s_low * 0.9);
    let (high_level, high_cost, _) = one_step(p.s_high * 1.1);
    let want = |m: forage_sim::controller::LevelMultipliers| {
        Energy::from_units(w.robot_speed * m.speed * w.move_cost * m.cost)
    };
    let exact = low_level == ActivityLevel::Low
        && high_level == ActivityLevel::High
        && low_cost == want(p.profile.low)
        && high_cost == want(p.profile.high)
        && low_cost < high_cost;
    let per_step = |level| {
        let (cost, steps) = multi
            .iter()
            .flat_map(|o| &o.trips)
            .filter(|tr| tr.level == level && tr.steps > 0)
            .fold((0.0, 0u64), |(c, n), tr| (c + tr.ledger.move_spent.units(), n + tr.steps));
        cost / steps.max(1) as f64
    };
    let (low_run, high_run) = (per_step(ActivityLevel::Low), per_step(ActivityLevel::High));
    let observed = high_run == 0.0 || low_run == 0.0 || low_run < high_run;
    outcome(
        multilevel >= adaptive && exact && observed,
        format!(
            "multilevel {multilevel:.4} vs adaptive {adaptive:.4}; per-step move Low {} < High {}: {exact}; in runs {low_run:.3} vs {high_run:.3}; {:.1}s",
            low_cost, high_cost, t.elapsed().as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 10] = [
        ("C1 response curve closed form", c1),
        ("C2 trip update table", c2),
        ("C3 peer observation counter", c3),
        ("C4 energy and food conservation", c4),
        ("C5 deterministic artifacts", c5),
        ("C6 hand-trace oracle", c6),
        ("C7 adaptivity to abundance", c7),
        ("C8 adaptive vs fixed ratios", c8),
        ("C9 advantage grows with swarm size", c9),
        ("C10 activity-level extension", c10),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

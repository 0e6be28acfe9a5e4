//! Discrete-time engine.
//!
//! Every call to [`step`] runs the same eight phases in order:
//!
//! 1. spawn food
//! 2. departures (at-home robots in id order)
//! 3. movement and movement cost
//! 4. food pickup
//! 5. pairwise encounters
//! 6. give-up of overlong searches
//! 7. arrivals, trip classification and adaptation
//! 8. idle cost for robots at home
//!
//! Random draws happen in phase order and, within a phase, in ascending
//! robot id: spawn count and positions, then one departure target per
//! departing robot (x then y), then one heading perturbation per robot in
//! its random-walk leg.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::controller::{
    apply_trip_update, classify_trip, decide_depart, fixed_number_decide, fixed_ratio_decide,
    foraging_probability, observe_peer, select_activity_level, ActivityLevel, Controller,
    ControllerKind, LevelMultipliers, PeerStatus, StimulusScope, Verdict,
};
use crate::metrics::RunResult;
use crate::world::{
    spawn_food, validate_config, Energy, EnergyLedger, FoodId, FoodItem, FoodStatus, Mode, Point,
    RngStream, RobotId, RobotState, StimulusBoard, Violation, WorldConfig,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {}", join_violations(.0))]
    InvalidConfig(Vec<Violation>),
    #[error("corrupted simulation state at step {step}: {detail}")]
    CorruptedState { step: u64, detail: String },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Departed { robot: RobotId, level: ActivityLevel },
    PickedUp { robot: RobotId, food: FoodId },
    Encounter { a: RobotId, b: RobotId },
    GaveUp { robot: RobotId },
    Arrived { robot: RobotId, delivered: Option<FoodId>, verdict: Verdict },
}

/// A completed round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub robot: RobotId,
    pub level: ActivityLevel,
    pub start_step: u64,
    pub end_step: u64,
    /// Steps spent moving, departure step included.
    pub steps: u64,
    pub ledger: EnergyLedger,
    pub verdict: Verdict,
    pub task_counter: i64,
}

/// Food bookkeeping. Delivered items leave the table and are only counted.
#[derive(Debug, Clone, Default)]
pub struct FoodTable {
    /// Sorted by id.
    pub available: Vec<FoodItem>,
    pub carried: BTreeMap<FoodId, FoodItem>,
    pub delivered: u64,
    pub expired: u64,
    pub spawned: u64,
}

impl FoodTable {
    fn next_id(&self) -> FoodId {
        self.spawned
    }

    fn add(&mut self, items: Vec<FoodItem>) {
        self.spawned += items.len() as u64;
        self.available.extend(items);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSample {
    pub step: u64,
    pub active_foragers: usize,
    pub stimulus: f64,
    pub mean_threshold: f64,
    pub food_available: usize,
    pub cumulative: EnergyLedger,
}

impl StepSample {
    pub fn cum_net(&self) -> Energy {
        self.cumulative.net()
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub step: u64,
    pub config: WorldConfig,
    pub controller: Controller,
    /// Ordered by id; `robots[i].id == i`.
    pub robots: Vec<RobotState>,
    pub food: FoodTable,
    pub board: StimulusBoard,
    pub rng: RngStream,
    /// Events of the most recent step only.
    pub events: Vec<Event>,
    pub trips: Vec<TripRecord>,
    /// Net energy maintained incrementally at every accrual.
    pub running_net: Energy,
    trip_start: Vec<u64>,
}

impl SimState {
    pub fn new(config: WorldConfig, controller: Controller, seed: u64) -> Result<Self, EngineError> {
        let mut violations = validate_config(&config);
        violations.extend(crate::controller::validate_params(&controller.params));
        if let ControllerKind::FixedRatio { ratio } = controller.kind {
            if !(0.0..=1.0).contains(&ratio) {
                violations.push(Violation::new("ratio", "must be in [0, 1]"));
            }
        }
        if !violations.is_empty() {
            return Err(EngineError::InvalidConfig(violations));
        }
        let mut rng = RngStream::new(seed);
        let p = &controller.params;
        let robots = (0..config.num_robots)
            .map(|id| RobotState::new(id, config.home_slot(id), p.th_init, p.s_init))
            .collect();
        let mut food = FoodTable::default();
        let energy = Energy::from_units(config.food_energy);
        let initial = (0..config.initial_food)
            .map(|k| FoodItem {
                id: k as FoodId,
                position: config.forage_area.sample(&mut rng),
                energy,
                status: FoodStatus::Available,
                spawned_at: 0,
            })
            .collect();
        food.add(initial);
        Ok(Self {
            step: 0,
            board: StimulusBoard::new(p.s_init),
            trip_start: vec![0; config.num_robots],
            config,
            controller,
            robots,
            food,
            rng,
            events: Vec::new(),
            trips: Vec::new(),
            running_net: Energy::ZERO,
        })
    }

    /// Puts an available food item at `position` (outside the spawn process).
    pub fn place_food(&mut self, position: Point) -> FoodId {
        let id = self.food.next_id();
        self.food.add(vec![FoodItem {
            id,
            position,
            energy: Energy::from_units(self.config.food_energy),
            status: FoodStatus::Available,
            spawned_at: self.step,
        }]);
        id
    }

    /// Stimulus a robot would read when deciding.
    pub fn stimulus_for(&self, robot: &RobotState) -> f64 {
        match self.controller.params.stimulus_scope {
            StimulusScope::Blackboard => self.board.stimulus,
            StimulusScope::Local => robot.local_stimulus,
        }
    }

    /// Reported stimulus: the board, or the mean of local copies.
    pub fn stimulus(&self) -> f64 {
        match self.controller.params.stimulus_scope {
            StimulusScope::Blackboard => self.board.stimulus,
            StimulusScope::Local => mean(self.robots.iter().map(|r| r.local_stimulus)),
        }
    }

    pub fn mean_threshold(&self) -> f64 {
        mean(self.robots.iter().map(|r| r.threshold))
    }

    pub fn active_foragers(&self) -> usize {
        self.robots.iter().filter(|r| r.is_active()).count()
    }

    pub fn totals(&self) -> EnergyLedger {
        self.robots.iter().map(RobotState::total_ledger).sum()
    }

    pub fn sample(&self) -> StepSample {
        StepSample {
            step: self.step,
            active_foragers: self.active_foragers(),
            stimulus: self.stimulus(),
            mean_threshold: self.mean_threshold(),
            food_available: self.food.available.len(),
            cumulative: self.totals(),
        }
    }

    fn multipliers(&self, level: ActivityLevel) -> LevelMultipliers {
        self.controller.params.profile.get(level)
    }

    fn charge_move(&mut self, id: RobotId, distance: f64) {
        let m = self.multipliers(self.robots[id].activity_level);
        let cost = Energy::from_units(distance * self.config.move_cost * m.cost);
        self.robots[id].trip_ledger.move_spent += cost;
        self.running_net -= cost;
    }

    fn peer_status(robot: &RobotState) -> PeerStatus {
        if robot.carried_food.is_some() {
            PeerStatus::FoundFood
        } else if robot.trip_failed_flag {
            PeerStatus::Failed
        } else {
            PeerStatus::Searching
        }
    }

    fn phase_spawn(&mut self) {
        let (step, lifetime) = (self.step, self.config.food_lifetime);
        let before = self.food.available.len();
        self.food.available.retain(|f| !f.is_expired_at(step, lifetime));
        self.food.expired += (before - self.food.available.len()) as u64;
        let items = spawn_food(&self.config, step, self.food.next_id(), &mut self.rng);
        self.food.add(items);
    }

    fn phase_departures(&mut self) {
        let at_home: Vec<RobotId> = self
            .robots
            .iter()
            .filter(|r| r.mode == Mode::AtHome)
            .map(|r| r.id)
            .collect();
        let active = self.robots.len() - at_home.len();
        let kind = self.controller.kind;
        let departing: Vec<(RobotId, ActivityLevel)> = match kind {
            ControllerKind::Adaptive | ControllerKind::AdaptiveMultilevel => {
                let params = &self.controller.params;
                at_home
                    .iter()
                    .filter_map(|&id| {
                        let r = &self.robots[id];
                        let s = self.stimulus_for(r);
                        let p = foraging_probability(s, r.threshold);
                        decide_depart(p, params.p0).then(|| {
                            let level = if kind == ControllerKind::AdaptiveMultilevel {
                                select_activity_level(s, params)
                            } else {
                                ActivityLevel::Normal
                            };
                            (id, level)
                        })
                    })
                    .collect()
            }
            ControllerKind::FixedNumber { target } => fixed_number_decide(&at_home, active, target)
                .into_iter()
                .map(|id| (id, ActivityLevel::Normal))
                .collect(),
            ControllerKind::FixedRatio { ratio } => {
                fixed_ratio_decide(&at_home, active, self.robots.len(), ratio)
                    .into_iter()
                    .map(|id| (id, ActivityLevel::Normal))
                    .collect()
            }
        };
        for (id, level) in departing {
            let target = self.config.forage_area.sample(&mut self.rng);
            let r = &mut self.robots[id];
            r.mode = Mode::Searching;
            r.activity_level = level;
            r.steps_in_trip = 0;
            r.trip_failed_flag = false;
            r.task_counter = 0;
            r.trip_ledger = EnergyLedger::default();
            r.heading = (target.y - r.position.y).atan2(target.x - r.position.x);
            r.transit_target = Some(target);
            self.trip_start[id] = self.step;
            self.events.push(Event::Departed { robot: id, level });
        }
    }

    fn phase_movement(&mut self) {
        let turn = self.config.turn_max_deg.to_radians();
        let area = self.config.forage_area;
        for id in 0..self.robots.len() {
            let speed = self.config.robot_speed * self.multipliers(self.robots[id].activity_level).speed;
            let distance = match self.robots[id].mode {
                Mode::AtHome => continue,
                Mode::Searching => {
                    let r = &mut self.robots[id];
                    r.steps_in_trip += 1;
                    if let Some(target) = r.transit_target {
                        let (p, d) = r.position.step_toward(target, speed);
                        r.position = p;
                        if p == target {
                            r.transit_target = None;
                        }
                        d
                    } else {
                        let dh = self.rng.uniform_in(-turn, turn);
                        let r = &mut self.robots[id];
                        r.heading += dh;
                        let raw = Point::new(
                            r.position.x + speed * r.heading.cos(),
                            r.position.y + speed * r.heading.sin(),
                        );
                        let (p, h) = reflect_into(raw, r.heading, &area);
                        r.position = p;
                        r.heading = h;
                        speed
                    }
                }
                Mode::Returning => {
                    let home = self.config.home_center;
                    let r = &mut self.robots[id];
                    r.steps_in_trip += 1;
                    let (p, d) = r.position.step_toward(home, speed);
                    r.position = p;
                    d
                }
            };
            self.charge_move(id, distance);
        }
    }

    fn phase_pickup(&mut self) {
        let base = self.config.sense_radius;
        for id in 0..self.robots.len() {
            if self.robots[id].mode != Mode::Searching {
                continue;
            }
            let reach = base * self.multipliers(self.robots[id].activity_level).sense;
            let pos = self.robots[id].position;
            // available is id-sorted, so a strict comparison keeps the lowest id on ties
            let mut best: Option<(usize, f64)> = None;
            for (idx, item) in self.food.available.iter().enumerate() {
                let d = pos.distance(item.position);
                if d <= reach && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((idx, d));
                }
            }
            if let Some((idx, _)) = best {
                let mut item = self.food.available.remove(idx);
                item.status = FoodStatus::Carried;
                self.food.carried.insert(item.id, item);
                let r = &mut self.robots[id];
                r.carried_food = Some(item.id);
                r.mode = Mode::Returning;
                r.transit_target = None;
                self.events.push(Event::PickedUp { robot: id, food: item.id });
            }
        }
    }

    fn phase_encounters(&mut self) {
        let radius = self.config.encounter_radius;
        let cost = Energy::from_units(self.config.comm_cost);
        let active: Vec<(RobotId, Point, PeerStatus)> = self
            .robots
            .iter()
            .filter(|r| r.is_active())
            .map(|r| (r.id, r.position, Self::peer_status(r)))
            .collect();
        for (i, &(a, pa, sa)) in active.iter().enumerate() {
            for &(b, pb, sb) in &active[i + 1..] {
                if pa.distance(pb) > radius {
                    continue;
                }
                let ra = &mut self.robots[a];
                ra.trip_ledger.comm_spent += cost;
                ra.task_counter = observe_peer(ra.task_counter, sb);
                let rb = &mut self.robots[b];
                rb.trip_ledger.comm_spent += cost;
                rb.task_counter = observe_peer(rb.task_counter, sa);
                self.running_net -= cost + cost;
                self.events.push(Event::Encounter { a, b });
            }
        }
    }

    fn phase_giveup(&mut self) {
        let limit = self.config.giveup_steps;
        for r in &mut self.robots {
            if r.mode == Mode::Searching && r.steps_in_trip > limit {
                r.trip_failed_flag = true;
                r.mode = Mode::Returning;
                r.transit_target = None;
                self.events.push(Event::GaveUp { robot: r.id });
            }
        }
    }

    fn phase_arrivals(&mut self) {
        let adaptive = self.controller.kind.is_adaptive();
        for id in 0..self.robots.len() {
            let r = &self.robots[id];
            if r.mode != Mode::Returning || !self.config.in_home(r.position) {
                continue;
            }
            let delivered = r.carried_food;
            if let Some(food_id) = delivered {
                let item = self.food.carried.remove(&food_id).ok_or(food_id);
                // a missing item is caught by the post-step invariant check
                if let Ok(item) = item {
                    self.robots[id].trip_ledger.collected += item.energy;
                    self.running_net += item.energy;
                    self.food.delivered += 1;
                }
            }
            let stimulus = self.stimulus_for(&self.robots[id]);
            let params = &self.controller.params;
            let r = &mut self.robots[id];
            let outcome = classify_trip(&r.trip_ledger);
            if adaptive {
                let (th, s) = apply_trip_update(r.threshold, stimulus, &outcome, r.task_counter, params);
                r.threshold = th;
                match params.stimulus_scope {
                    StimulusScope::Blackboard => self.board.set(s),
                    StimulusScope::Local => r.local_stimulus = s,
                }
            }
            self.trips.push(TripRecord {
                robot: id,
                level: r.activity_level,
                start_step: self.trip_start[id],
                end_step: self.step,
                steps: r.steps_in_trip,
                ledger: r.trip_ledger,
                verdict: outcome.verdict,
                task_counter: r.task_counter,
            });
            let trip = r.trip_ledger;
            r.cumulative_ledger.absorb(&trip);
            r.trip_ledger = EnergyLedger::default();
            r.task_counter = 0;
            r.steps_in_trip = 0;
            r.trip_failed_flag = false;
            r.carried_food = None;
            r.transit_target = None;
            r.activity_level = ActivityLevel::Normal;
            r.mode = Mode::AtHome;
            self.events.push(Event::Arrived {
                robot: id,
                delivered,
                verdict: outcome.verdict,
            });
        }
    }

    fn phase_idle(&mut self) {
        let cost = Energy::from_units(self.config.idle_cost);
        if cost == Energy::ZERO {
            return;
        }
        for r in &mut self.robots {
            if r.mode == Mode::AtHome {
                r.cumulative_ledger.idle_spent += cost;
                self.running_net -= cost;
            }
        }
    }

    /// Checks every world invariant; a failure is an engine bug.
    pub fn check_invariants(&self) -> Result<(), String> {
        let f = &self.food;
        let carried_count = f.carried.len() as u64;
        if f.available.len() as u64 + carried_count + f.delivered + f.expired != f.spawned {
            return Err(format!(
                "food count mismatch: {} available + {} carried + {} delivered + {} expired != {} spawned",
                f.available.len(),
                carried_count,
                f.delivered,
                f.expired,
                f.spawned
            ));
        }
        for item in &f.available {
            if item.status != FoodStatus::Available || !self.config.forage_area.contains(item.position) {
                return Err(format!("available food {} misplaced or mislabeled", item.id));
            }
        }
        let mut holders: BTreeMap<FoodId, usize> = BTreeMap::new();
        let arena = self.config.arena();
        for (i, r) in self.robots.iter().enumerate() {
            if r.id != i {
                return Err(format!("robot at index {i} has id {}", r.id));
            }
            if !arena.contains(r.position) {
                return Err(format!("robot {} left the arena", r.id));
            }
            if r.threshold < 0.0 {
                return Err(format!("robot {} has negative threshold", r.id));
            }
            if !r.trip_ledger.is_nonnegative() || !r.cumulative_ledger.is_nonnegative() {
                return Err(format!("robot {} has a negative ledger field", r.id));
            }
            match r.mode {
                Mode::AtHome => {
                    if r.carried_food.is_some() || !self.config.in_home(r.position) {
                        return Err(format!("robot {} at home but carrying or outside home", r.id));
                    }
                }
                Mode::Searching => {
                    if r.carried_food.is_some() {
                        return Err(format!("robot {} searching while carrying", r.id));
                    }
                }
                Mode::Returning => {}
            }
            if let Some(fid) = r.carried_food {
                *holders.entry(fid).or_default() += 1;
                match f.carried.get(&fid) {
                    Some(item) if item.status == FoodStatus::Carried => {}
                    _ => return Err(format!("robot {} carries unknown food {fid}", r.id)),
                }
            }
        }
        if holders.len() != f.carried.len() || holders.values().any(|&n| n != 1) {
            return Err("carried food not held by exactly one robot".into());
        }
        if self.board.stimulus < 0.0 {
            return Err("negative stimulus".into());
        }
        let net = self.totals().net();
        if net != self.running_net {
            return Err(format!(
                "running net {} differs from ledger net {}",
                self.running_net.quanta(),
                net.quanta()
            ));
        }
        Ok(())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mirrors `p` back into `area`, flipping the heading component that hit a
/// wall. Path length is unchanged by reflection.
fn reflect_into(mut p: Point, mut heading: f64, area: &crate::world::Rect) -> (Point, f64) {
    for _ in 0..8 {
        let mut hit = false;
        if p.x < area.min.x {
            p.x = 2.0 * area.min.x - p.x;
            heading = std::f64::consts::PI - heading;
            hit = true;
        } else if p.x > area.max.x {
            p.x = 2.0 * area.max.x - p.x;
            heading = std::f64::consts::PI - heading;
            hit = true;
        }
        if p.y < area.min.y {
            p.y = 2.0 * area.min.y - p.y;
            heading = -heading;
            hit = true;
        } else if p.y > area.max.y {
            p.y = 2.0 * area.max.y - p.y;
            heading = -heading;
            hit = true;
        }
        if !hit {
            break;
        }
    }
    (area.closest_point(p), heading)
}

/// Advances the state by one step.
pub fn step(state: &mut SimState) -> Result<(), EngineError> {
    state.events.clear();
    state.phase_spawn();
    state.phase_departures();
    state.phase_movement();
    state.phase_pickup();
    state.phase_encounters();
    state.phase_giveup();
    state.phase_arrivals();
    state.phase_idle();
    state
        .check_invariants()
        .map_err(|detail| EngineError::CorruptedState {
            step: state.step,
            detail,
        })?;
    state.step += 1;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub samples: Vec<StepSample>,
    pub result: RunResult,
    pub trips: Vec<TripRecord>,
}

/// Runs `max_steps` steps from a fresh state and summarizes the run.
/// One sample is taken after every step.
pub fn run(
    config: &WorldConfig,
    controller: &Controller,
    seed: u64,
    max_steps: u64,
) -> Result<RunOutput, EngineError> {
    let mut state = SimState::new(config.clone(), controller.clone(), seed)?;
    let mut samples = Vec::with_capacity(max_steps as usize);
    for _ in 0..max_steps {
        step(&mut state)?;
        let mut s = state.sample();
        s.step = state.step - 1;
        samples.push(s);
    }
    let result = RunResult::from_state(String::new(), seed, &state);
    Ok(RunOutput {
        samples,
        result,
        trips: std::mem::take(&mut state.trips),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerParams;
    use crate::world::Rect;

    fn adaptive_with(params: ControllerParams) -> Controller {
        Controller::new(ControllerKind::Adaptive, params)
    }

    #[test]
    fn reflection_stays_inside() {
        let area = Rect::new(0.0, 0.0, 10.0, 5.0);
        let (p, h) = reflect_into(Point::new(-1.0, 6.0), 2.0, &area);
        assert_eq!(p, Point::new(1.0, 4.0));
        assert!((h - (-(std::f64::consts::PI - 2.0))).abs() < 1e-12);
    }

    #[test]
    fn never_departing_robot_stays_idle() {
        let cfg = WorldConfig {
            num_robots: 1,
            ..WorldConfig::default()
        };
        // P = 0.5 is not > 0.5
        let params = ControllerParams {
            p0: 0.5,
            ..ControllerParams::default()
        };
        let out = run(&cfg, &adaptive_with(params), 1, 100).unwrap();
        assert_eq!(out.samples.len(), 100);
        assert!(out.samples.iter().all(|s| s.active_foragers == 0));
        let last = out.samples.last().unwrap();
        assert_eq!(last.cumulative, EnergyLedger::default());
        assert_eq!(out.result.trips, 0);
    }

    #[test]
    fn encounter_with_carrier() {
        let cfg = WorldConfig {
            num_robots: 2,
            food_spawn_rate: 0.0,
            initial_food: 0,
            ..WorldConfig::default()
        };
        let params = ControllerParams {
            p0: 0.5,
            ..ControllerParams::default()
        };
        let mut st = SimState::new(cfg, adaptive_with(params), 9).unwrap();
        let spot = Point::new(30.0, 20.0);
        st.robots[0].position = spot;
        st.robots[0].mode = Mode::Searching;
        // the carrier moves one unit toward home, ending 0.2 above robot 0
        st.robots[1].position = Point::new(spot.x, spot.y + 1.2);
        st.robots[1].mode = Mode::Returning;
        let fid = st.place_food(Point::new(50.0, 30.0));
        st.food.available.retain(|f| f.id != fid);
        st.food.carried.insert(
            fid,
            FoodItem {
                id: fid,
                position: spot,
                energy: Energy::from_units(50.0),
                status: FoodStatus::Carried,
                spawned_at: 0,
            },
        );
        st.robots[1].carried_food = Some(fid);
        // a zero-length transit leg keeps robot 0 in place without a heading draw
        st.robots[0].transit_target = Some(spot);
        step(&mut st).unwrap();
        assert_eq!(st.robots[0].task_counter, 1);
        assert_eq!(st.robots[1].task_counter, -1);
        let c = Energy::from_units(0.2);
        assert_eq!(st.robots[0].trip_ledger.comm_spent, c);
        assert_eq!(st.robots[1].trip_ledger.comm_spent, c);
        assert!(st.events.contains(&Event::Encounter { a: 0, b: 1 }));
    }
}

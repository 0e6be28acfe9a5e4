//! World model: arena geometry, food, robots, energy ledgers and the seeded
//! random stream that every stochastic draw in a run goes through.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::ActivityLevel;

pub type RobotId = usize;
pub type FoodId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Moves up to `max_step` toward `target`, never overshooting.
    /// Returns the new point and the distance actually covered.
    pub fn step_toward(self, target: Point, max_step: f64) -> (Point, f64) {
        let d = self.distance(target);
        if d <= max_step {
            (target, d)
        } else {
            let f = max_step / d;
            (
                Point::new(
                    self.x + (target.x - self.x) * f,
                    self.y + (target.y - self.y) * f,
                ),
                max_step,
            )
        }
    }
}

/// Axis-aligned rectangle, `min` is the lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: Point::new(min_x, min_y),
            max: Point::new(max_x, max_y),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn closest_point(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    /// Uniform point inside the rectangle. Consumes two draws, x first.
    pub fn sample(&self, rng: &mut RngStream) -> Point {
        let x = rng.uniform_in(self.min.x, self.max.x);
        let y = rng.uniform_in(self.min.y, self.max.y);
        Point::new(x, y)
    }
}

/// Energy in integer quanta of [`Energy::QUANTUM`] units.
///
/// Fixed-point storage keeps every ledger sum exact and independent of
/// summation order, so conservation checks need no tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Energy(pub i64);

impl Energy {
    pub const ZERO: Energy = Energy(0);
    /// Size of one quantum in energy units.
    pub const QUANTUM: f64 = 1e-6;
    const PER_UNIT: f64 = 1e6;

    /// Rounds a real-valued amount to the nearest quantum.
    pub fn from_units(units: f64) -> Energy {
        Energy((units * Self::PER_UNIT).round() as i64)
    }

    pub fn units(self) -> f64 {
        self.0 as f64 / Self::PER_UNIT
    }

    pub fn quanta(self) -> i64 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl Sub for Energy {
    type Output = Energy;
    fn sub(self, rhs: Energy) -> Energy {
        Energy(self.0 - rhs.0)
    }
}

impl Neg for Energy {
    type Output = Energy;
    fn neg(self) -> Energy {
        Energy(-self.0)
    }
}

impl AddAssign for Energy {
    fn add_assign(&mut self, rhs: Energy) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Energy {
    fn sub_assign(&mut self, rhs: Energy) {
        self.0 -= rhs.0;
    }
}

impl Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        iter.fold(Energy::ZERO, Add::add)
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.units())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnergyLedger {
    pub collected: Energy,
    pub move_spent: Energy,
    pub comm_spent: Energy,
    pub idle_spent: Energy,
}

impl EnergyLedger {
    pub fn spent(&self) -> Energy {
        self.move_spent + self.comm_spent + self.idle_spent
    }

    pub fn net(&self) -> Energy {
        self.collected - self.move_spent - self.comm_spent - self.idle_spent
    }

    pub fn absorb(&mut self, other: &EnergyLedger) {
        self.collected += other.collected;
        self.move_spent += other.move_spent;
        self.comm_spent += other.comm_spent;
        self.idle_spent += other.idle_spent;
    }

    pub fn combined(&self, other: &EnergyLedger) -> EnergyLedger {
        let mut out = *self;
        out.absorb(other);
        out
    }

    pub fn is_nonnegative(&self) -> bool {
        self.collected >= Energy::ZERO
            && self.move_spent >= Energy::ZERO
            && self.comm_spent >= Energy::ZERO
            && self.idle_spent >= Energy::ZERO
    }
}

impl Sum for EnergyLedger {
    fn sum<I: Iterator<Item = EnergyLedger>>(iter: I) -> EnergyLedger {
        iter.fold(EnergyLedger::default(), |mut acc, l| {
            acc.absorb(&l);
            acc
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub arena_width: f64,
    pub arena_height: f64,
    pub home_center: Point,
    pub home_radius: f64,
    pub forage_area: Rect,
    /// Expected food items per step.
    pub food_spawn_rate: f64,
    /// Spawn rate used on odd regime periods when `regime_period > 0`.
    pub alt_spawn_rate: f64,
    /// Length in steps of each abundance regime; 0 keeps `food_spawn_rate` constant.
    pub regime_period: u64,
    /// Steps an uncollected item stays available before it expires; 0 keeps items forever.
    pub food_lifetime: u64,
    pub initial_food: usize,
    pub food_energy: f64,
    pub move_cost: f64,
    pub comm_cost: f64,
    pub idle_cost: f64,
    pub encounter_radius: f64,
    pub sense_radius: f64,
    pub robot_speed: f64,
    /// Half-width of the uniform heading perturbation of the random walk, in degrees.
    pub turn_max_deg: f64,
    pub giveup_steps: u64,
    pub max_steps: u64,
    pub num_robots: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            arena_width: 60.0,
            arena_height: 40.0,
            home_center: Point::new(30.0, 4.0),
            home_radius: 3.0,
            forage_area: Rect::new(5.0, 20.0, 55.0, 24.0),
            food_spawn_rate: 0.5,
            alt_spawn_rate: 0.0,
            regime_period: 0,
            food_lifetime: 150,
            initial_food: 20,
            // one item pays for ~50 steps of movement at unit speed
            food_energy: 50.0,
            move_cost: 1.0,
            comm_cost: 0.2,
            idle_cost: 0.0,
            encounter_radius: 1.0,
            sense_radius: 2.0,
            robot_speed: 1.0,
            turn_max_deg: 30.0,
            giveup_steps: 40,
            max_steps: 2000,
            num_robots: 20,
        }
    }
}

impl WorldConfig {
    /// Spawn rate in force at `step`.
    pub fn spawn_rate_at(&self, step: u64) -> f64 {
        if self.regime_period > 0 && (step / self.regime_period) % 2 == 1 {
            self.alt_spawn_rate
        } else {
            self.food_spawn_rate
        }
    }

    pub fn arena(&self) -> Rect {
        Rect::new(0.0, 0.0, self.arena_width, self.arena_height)
    }

    pub fn in_home(&self, p: Point) -> bool {
        p.distance(self.home_center) <= self.home_radius
    }

    /// Resting spot of robot `id` inside the home disc: evenly spaced on a
    /// ring at half the home radius.
    pub fn home_slot(&self, id: RobotId) -> Point {
        let n = self.num_robots.max(1) as f64;
        let angle = std::f64::consts::TAU * id as f64 / n;
        let r = self.home_radius * 0.5;
        Point::new(
            self.home_center.x + r * angle.cos(),
            self.home_center.y + r * angle.sin(),
        )
    }
}

/// One failed invariant, keyed by the config field path it concerns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Collects every invariant violation in `cfg`. An empty list means valid.
pub fn validate_config(cfg: &WorldConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut finite = |field: &str, x: f64| {
        if !x.is_finite() {
            v.push(Violation::new(field, "must be finite"));
            false
        } else {
            true
        }
    };
    let all_finite = [
        finite("arena_width", cfg.arena_width),
        finite("arena_height", cfg.arena_height),
        finite("home_center", cfg.home_center.x) && finite("home_center", cfg.home_center.y),
        finite("home_radius", cfg.home_radius),
        finite("forage_area", cfg.forage_area.min.x)
            && finite("forage_area", cfg.forage_area.min.y)
            && finite("forage_area", cfg.forage_area.max.x)
            && finite("forage_area", cfg.forage_area.max.y),
        finite("food_spawn_rate", cfg.food_spawn_rate),
        finite("alt_spawn_rate", cfg.alt_spawn_rate),
        finite("food_energy", cfg.food_energy),
        finite("move_cost", cfg.move_cost),
        finite("comm_cost", cfg.comm_cost),
        finite("idle_cost", cfg.idle_cost),
        finite("encounter_radius", cfg.encounter_radius),
        finite("sense_radius", cfg.sense_radius),
        finite("robot_speed", cfg.robot_speed),
        finite("turn_max_deg", cfg.turn_max_deg),
    ]
    .iter()
    .all(|ok| *ok);
    if !all_finite {
        return v;
    }

    if cfg.arena_width <= 0.0 {
        v.push(Violation::new("arena_width", "must be > 0"));
    }
    if cfg.arena_height <= 0.0 {
        v.push(Violation::new("arena_height", "must be > 0"));
    }
    let arena = cfg.arena();
    let fa = &cfg.forage_area;
    if fa.width() <= 0.0 || fa.height() <= 0.0 {
        v.push(Violation::new("forage_area", "must have positive width and height"));
    } else if !(arena.contains(fa.min) && arena.contains(fa.max)) {
        v.push(Violation::new("forage_area", "must lie within the arena"));
    }
    if cfg.home_radius <= 0.0 {
        v.push(Violation::new("home_radius", "must be > 0"));
    }
    let c = cfg.home_center;
    let r = cfg.home_radius;
    if c.x - r < 0.0 || c.x + r > cfg.arena_width || c.y - r < 0.0 || c.y + r > cfg.arena_height {
        v.push(Violation::new("home_center", "home disc must lie within the arena"));
    }
    if fa.width() > 0.0 && fa.height() > 0.0 && fa.closest_point(c).distance(c) <= r {
        v.push(Violation::new("forage_area", "must be disjoint from the home disc"));
    }
    for (field, x) in [
        ("food_spawn_rate", cfg.food_spawn_rate),
        ("alt_spawn_rate", cfg.alt_spawn_rate),
        ("move_cost", cfg.move_cost),
        ("comm_cost", cfg.comm_cost),
        ("idle_cost", cfg.idle_cost),
    ] {
        if x < 0.0 {
            v.push(Violation::new(field, "must be >= 0"));
        }
    }
    for (field, x) in [
        ("food_energy", cfg.food_energy),
        ("encounter_radius", cfg.encounter_radius),
        ("sense_radius", cfg.sense_radius),
        ("robot_speed", cfg.robot_speed),
    ] {
        if x <= 0.0 {
            v.push(Violation::new(field, "must be > 0"));
        }
    }
    if !(0.0..=180.0).contains(&cfg.turn_max_deg) {
        v.push(Violation::new("turn_max_deg", "must be in [0, 180]"));
    }
    if cfg.giveup_steps == 0 {
        v.push(Violation::new("giveup_steps", "must be > 0"));
    }
    if cfg.max_steps == 0 {
        v.push(Violation::new("max_steps", "must be > 0"));
    }
    if cfg.num_robots == 0 {
        v.push(Violation::new("num_robots", "must be > 0"));
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoodStatus {
    Available,
    Carried,
    Delivered,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoodItem {
    pub id: FoodId,
    pub position: Point,
    pub energy: Energy,
    pub status: FoodStatus,
    pub spawned_at: u64,
}

/// Draws this step's new food. The count is Poisson with the rate in force
/// at `step`; positions are uniform over the forage area. Ids start at
/// `next_id` and increase by one.
pub fn spawn_food(cfg: &WorldConfig, step: u64, next_id: FoodId, rng: &mut RngStream) -> Vec<FoodItem> {
    let drawn = rng.poisson(cfg.spawn_rate_at(step));
    let energy = Energy::from_units(cfg.food_energy);
    (0..drawn)
        .map(|k| FoodItem {
            id: next_id + k,
            position: cfg.forage_area.sample(rng),
            energy,
            status: FoodStatus::Available,
            spawned_at: step,
        })
        .collect()
}

impl FoodItem {
    /// True once an available item has outlived `lifetime` steps at `step`.
    pub fn is_expired_at(&self, step: u64, lifetime: u64) -> bool {
        lifetime > 0 && step.saturating_sub(self.spawned_at) >= lifetime
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    AtHome,
    Searching,
    Returning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: RobotId,
    pub position: Point,
    pub heading: f64,
    pub mode: Mode,
    pub threshold: f64,
    pub task_counter: i64,
    pub carried_food: Option<FoodId>,
    pub steps_in_trip: u64,
    pub trip_failed_flag: bool,
    pub trip_ledger: EnergyLedger,
    pub cumulative_ledger: EnergyLedger,
    pub activity_level: ActivityLevel,
    /// Straight-line leg from home into the forage area; `None` once the
    /// random walk has started.
    pub transit_target: Option<Point>,
    /// Private copy of the stimulus, used only with the local-stimulus variant.
    pub local_stimulus: f64,
}

impl RobotState {
    pub fn new(id: RobotId, position: Point, threshold: f64, stimulus: f64) -> Self {
        Self {
            id,
            position,
            heading: 0.0,
            mode: Mode::AtHome,
            threshold,
            task_counter: 0,
            carried_food: None,
            steps_in_trip: 0,
            trip_failed_flag: false,
            trip_ledger: EnergyLedger::default(),
            cumulative_ledger: EnergyLedger::default(),
            activity_level: ActivityLevel::Normal,
            transit_target: None,
            local_stimulus: stimulus,
        }
    }

    pub fn is_active(&self) -> bool {
        self.mode != Mode::AtHome
    }

    /// Everything spent and collected so far, including the trip in progress.
    pub fn total_ledger(&self) -> EnergyLedger {
        self.cumulative_ledger.combined(&self.trip_ledger)
    }
}

/// The shared task stimulus kept at the home base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusBoard {
    pub stimulus: f64,
}

impl StimulusBoard {
    pub fn new(stimulus: f64) -> Self {
        Self {
            stimulus: stimulus.max(0.0),
        }
    }

    pub fn set(&mut self, stimulus: f64) {
        self.stimulus = stimulus.max(0.0);
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `master` one SplitMix64 round at a time:
/// `h = splitmix64(master)`, then `h = splitmix64(h ^ part)` for each part.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |h, &p| splitmix64(h ^ p))
}

/// Deterministic random stream for one run (ChaCha8, platform independent).
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_run(master_seed: u64, run_index: u64) -> Self {
        Self::new(derive_seed(master_seed, &[run_index]))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Poisson draw by Knuth's product method. Means above 30 are split
    /// into equal chunks so `exp(-mean)` never underflows.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let chunks = (mean / 30.0).ceil().max(1.0) as u64;
        let part = mean / chunks as f64;
        let limit = (-part).exp();
        let mut total = 0;
        for _ in 0..chunks {
            let mut p = 1.0;
            loop {
                p *= self.uniform();
                if p <= limit {
                    break;
                }
                total += 1;
            }
        }
        total
    }
}

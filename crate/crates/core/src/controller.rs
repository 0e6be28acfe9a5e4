//! Division-of-labor decision rules.
//!
//! Everything here is a pure function of its arguments. The engine decides
//! when each rule fires; this module only says what it computes.

use std::fmt;

use crate::world::{Energy, EnergyLedger, RobotId, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActivityLevel {
    Low,
    Normal,
    High,
}

impl ActivityLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivityLevel::Low => "low",
            ActivityLevel::Normal => "normal",
            ActivityLevel::High => "high",
        }
    }
}

/// Multipliers applied to the base speed, sensing radius and move cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelMultipliers {
    pub speed: f64,
    pub sense: f64,
    pub cost: f64,
}

impl LevelMultipliers {
    pub const UNIT: LevelMultipliers = LevelMultipliers {
        speed: 1.0,
        sense: 1.0,
        cost: 1.0,
    };

    /// Move cost of one full-speed step at this level.
    pub fn per_step_move_cost(&self, base_speed: f64, move_cost: f64) -> f64 {
        base_speed * self.speed * move_cost * self.cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityProfile {
    pub low: LevelMultipliers,
    pub normal: LevelMultipliers,
    pub high: LevelMultipliers,
}

impl Default for ActivityProfile {
    fn default() -> Self {
        Self {
            low: LevelMultipliers {
                speed: 0.5,
                sense: 0.75,
                cost: 0.5,
            },
            normal: LevelMultipliers::UNIT,
            high: LevelMultipliers {
                speed: 1.5,
                sense: 2.0,
                cost: 1.25,
            },
        }
    }
}

impl ActivityProfile {
    pub fn get(&self, level: ActivityLevel) -> LevelMultipliers {
        match level {
            ActivityLevel::Low => self.low,
            ActivityLevel::Normal => self.normal,
            ActivityLevel::High => self.high,
        }
    }

    fn validate(&self, out: &mut Vec<Violation>) {
        let levels = [("low", self.low), ("normal", self.normal), ("high", self.high)];
        for (name, m) in levels {
            for (what, x) in [("speed", m.speed), ("sense", m.sense), ("cost", m.cost)] {
                if !(x.is_finite() && x > 0.0) {
                    out.push(Violation::new(format!("activity.{name}.{what}"), "must be > 0"));
                }
            }
        }
        let ordered = |f: fn(&LevelMultipliers) -> f64| {
            f(&self.low) <= f(&self.normal) && f(&self.normal) <= f(&self.high)
        };
        if !ordered(|m| m.speed) {
            out.push(Violation::new("activity.speed", "must satisfy low <= normal <= high"));
        }
        if !ordered(|m| m.sense) {
            out.push(Violation::new("activity.sense", "must satisfy low <= normal <= high"));
        }
        if !ordered(|m| m.cost) {
            out.push(Violation::new("activity.cost", "must satisfy low <= normal <= high"));
        }
    }
}

/// Where the task stimulus lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StimulusScope {
    /// One value on the home-base board, read and written by every robot.
    #[default]
    Blackboard,
    /// Each robot keeps and updates its own copy.
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub delta1: f64,
    pub delta2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub p0: f64,
    pub th_init: f64,
    pub s_init: f64,
    pub th_min: f64,
    pub th_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub s_low: f64,
    pub s_high: f64,
    pub profile: ActivityProfile,
    pub stimulus_scope: StimulusScope,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            delta1: 0.2,
            delta2: 0.05,
            phi1: 0.005,
            phi2: 0.05,
            p0: 0.3,
            th_init: 1.0,
            s_init: 1.0,
            th_min: 0.01,
            th_max: 100.0,
            s_min: 0.0,
            s_max: 100.0,
            s_low: 0.8,
            s_high: 1.2,
            profile: ActivityProfile::default(),
            stimulus_scope: StimulusScope::Blackboard,
        }
    }
}

impl ControllerParams {
    pub fn clamp_threshold(&self, th: f64) -> f64 {
        th.clamp(self.th_min, self.th_max)
    }

    pub fn clamp_stimulus(&self, s: f64) -> f64 {
        s.clamp(self.s_min, self.s_max)
    }
}

pub fn validate_params(p: &ControllerParams) -> Vec<Violation> {
    let mut v = Vec::new();
    let named = [
        ("delta1", p.delta1),
        ("delta2", p.delta2),
        ("phi1", p.phi1),
        ("phi2", p.phi2),
        ("p0", p.p0),
        ("th_init", p.th_init),
        ("s_init", p.s_init),
        ("th_min", p.th_min),
        ("th_max", p.th_max),
        ("s_min", p.s_min),
        ("s_max", p.s_max),
        ("s_low", p.s_low),
        ("s_high", p.s_high),
    ];
    let mut any_nonfinite = false;
    for (field, x) in named {
        if !x.is_finite() {
            v.push(Violation::new(field, "must be finite"));
            any_nonfinite = true;
        }
    }
    if any_nonfinite {
        return v;
    }
    for (field, x) in [
        ("delta1", p.delta1),
        ("delta2", p.delta2),
        ("phi1", p.phi1),
        ("phi2", p.phi2),
        ("th_min", p.th_min),
        ("s_min", p.s_min),
    ] {
        if x < 0.0 {
            v.push(Violation::new(field, "must be >= 0"));
        }
    }
    if !(0.0..1.0).contains(&p.p0) {
        v.push(Violation::new("p0", "must be in [0, 1)"));
    }
    if p.th_init <= 0.0 {
        v.push(Violation::new("th_init", "must be > 0"));
    }
    if p.th_min > p.th_max {
        v.push(Violation::new("th_max", "must be >= th_min"));
    } else if !(p.th_min..=p.th_max).contains(&p.th_init) {
        v.push(Violation::new("th_init", "must lie in [th_min, th_max]"));
    }
    if p.s_min > p.s_max {
        v.push(Violation::new("s_max", "must be >= s_min"));
    } else if !(p.s_min..=p.s_max).contains(&p.s_init) {
        v.push(Violation::new("s_init", "must lie in [s_min, s_max]"));
    }
    if p.s_low >= p.s_high {
        v.push(Violation::new("s_low", "must be < s_high"));
    }
    p.profile.validate(&mut v);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerStatus {
    FoundFood,
    Searching,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripOutcome {
    pub verdict: Verdict,
    pub net: Energy,
}

impl TripOutcome {
    pub fn is_success(&self) -> bool {
        self.verdict == Verdict::Success
    }
}

/// Response-threshold foraging probability `S² / (S² + Th²)`.
/// Defined as 0 when both are zero.
pub fn foraging_probability(stimulus: f64, threshold: f64) -> f64 {
    let s2 = stimulus * stimulus;
    let t2 = threshold * threshold;
    let denom = s2 + t2;
    if denom == 0.0 {
        0.0
    } else {
        s2 / denom
    }
}

/// Departure fires only when the probability strictly exceeds `p0`.
pub fn decide_depart(p: f64, p0: f64) -> bool {
    p > p0
}

pub fn observe_peer(counter: i64, status: PeerStatus) -> i64 {
    match status {
        PeerStatus::FoundFood => counter + 1,
        PeerStatus::Searching => counter - 1,
        PeerStatus::Failed => counter - 2,
    }
}

/// Applies the threshold row and, when the counter sign agrees with the
/// outcome, the stimulus row; then clamps both to their bounds.
pub fn apply_trip_update(
    threshold: f64,
    stimulus: f64,
    outcome: &TripOutcome,
    counter: i64,
    params: &ControllerParams,
) -> (f64, f64) {
    let (th, s) = match outcome.verdict {
        Verdict::Success => {
            let s = if counter > 0 { stimulus + params.phi1 } else { stimulus };
            (threshold - params.delta1, s)
        }
        Verdict::Failure => {
            let s = if counter < 0 { stimulus - params.phi2 } else { stimulus };
            (threshold + params.delta2, s)
        }
    };
    (params.clamp_threshold(th), params.clamp_stimulus(s))
}

/// Success iff the trip's net energy is strictly positive.
pub fn classify_trip(trip_ledger: &EnergyLedger) -> TripOutcome {
    let net = trip_ledger.net();
    let verdict = if net.is_positive() {
        Verdict::Success
    } else {
        Verdict::Failure
    };
    TripOutcome { verdict, net }
}

/// Lowest ids from `at_home_ids` (assumed ascending) that bring the active
/// count up to `target`.
pub fn fixed_number_decide(at_home_ids: &[RobotId], active_count: usize, target: usize) -> Vec<RobotId> {
    let need = target.saturating_sub(active_count);
    at_home_ids.iter().copied().take(need).collect()
}

pub fn fixed_ratio_decide(
    at_home_ids: &[RobotId],
    active_count: usize,
    swarm_size: usize,
    ratio: f64,
) -> Vec<RobotId> {
    fixed_number_decide(at_home_ids, active_count, ratio_target(swarm_size, ratio))
}

pub fn ratio_target(swarm_size: usize, ratio: f64) -> usize {
    (ratio.clamp(0.0, 1.0) * swarm_size as f64).floor() as usize
}

pub fn select_activity_level(stimulus: f64, params: &ControllerParams) -> ActivityLevel {
    if stimulus >= params.s_high {
        ActivityLevel::High
    } else if stimulus >= params.s_low {
        ActivityLevel::Normal
    } else {
        ActivityLevel::Low
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerKind {
    Adaptive,
    FixedNumber { target: usize },
    FixedRatio { ratio: f64 },
    AdaptiveMultilevel,
}

impl ControllerKind {
    /// True for the kinds that run the threshold/stimulus adaptation.
    pub fn is_adaptive(&self) -> bool {
        matches!(self, ControllerKind::Adaptive | ControllerKind::AdaptiveMultilevel)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Adaptive => "adaptive",
            ControllerKind::FixedNumber { .. } => "fixed_number",
            ControllerKind::FixedRatio { .. } => "fixed_ratio",
            ControllerKind::AdaptiveMultilevel => "adaptive_multilevel",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerKind::FixedNumber { target } => write!(f, "fixed_number({target})"),
            ControllerKind::FixedRatio { ratio } => write!(f, "fixed_ratio({ratio})"),
            other => f.write_str(other.name()),
        }
    }
}

/// A controller kind together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub kind: ControllerKind,
    pub params: ControllerParams,
}

impl Controller {
    pub fn new(kind: ControllerKind, params: ControllerParams) -> Self {
        Self { kind, params }
    }

    pub fn adaptive() -> Self {
        Self::new(ControllerKind::Adaptive, ControllerParams::default())
    }
}

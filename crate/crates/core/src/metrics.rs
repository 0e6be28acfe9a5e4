//! Run-level energy measures and cross-seed aggregates.

use thiserror::Error;

use crate::controller::{ControllerKind, ControllerParams, Verdict};
use crate::engine::SimState;
use crate::world::{Energy, EnergyLedger};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty group of results")]
    EmptyGroup,
}

/// Σ collected − Σ spent over all ledgers, exact.
pub fn net_energy(ledgers: &[EnergyLedger]) -> Energy {
    ledgers.iter().copied().sum::<EnergyLedger>().net()
}

/// Collected over spent. Zero activity gives 0; a positive collection with
/// nothing spent is measured against one energy quantum.
pub fn efficiency(ledgers: &[EnergyLedger]) -> f64 {
    ratio(&ledgers.iter().copied().sum())
}

fn ratio(total: &EnergyLedger) -> f64 {
    let collected = total.collected.quanta();
    let spent = total.spent().quanta();
    if collected == 0 {
        0.0
    } else {
        collected as f64 / spent.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_id: String,
    pub seed: u64,
    pub controller: ControllerKind,
    pub params: ControllerParams,
    pub num_robots: usize,
    pub steps: u64,
    pub collected: Energy,
    pub move_spent: Energy,
    pub comm_spent: Energy,
    pub idle_spent: Energy,
    pub net_energy: Energy,
    pub efficiency: f64,
    pub trips: u64,
    pub successes: u64,
    pub failures: u64,
    pub final_stimulus: f64,
    pub mean_final_threshold: f64,
}

impl RunResult {
    /// Totals include the spending of trips still in progress.
    pub fn from_state(run_id: String, seed: u64, state: &SimState) -> Self {
        let ledgers: Vec<EnergyLedger> = state.robots.iter().map(|r| r.total_ledger()).collect();
        let total: EnergyLedger = ledgers.iter().copied().sum();
        let successes = state
            .trips
            .iter()
            .filter(|t| t.verdict == Verdict::Success)
            .count() as u64;
        let trips = state.trips.len() as u64;
        Self {
            run_id,
            seed,
            controller: state.controller.kind,
            params: state.controller.params.clone(),
            num_robots: state.robots.len(),
            steps: state.step,
            collected: total.collected,
            move_spent: total.move_spent,
            comm_spent: total.comm_spent,
            idle_spent: total.idle_spent,
            net_energy: net_energy(&ledgers),
            efficiency: efficiency(&ledgers),
            trips,
            successes,
            failures: trips - successes,
            final_stimulus: state.stimulus(),
            mean_final_threshold: state.mean_threshold(),
        }
    }

    pub fn spent_total(&self) -> Energy {
        self.move_spent + self.comm_spent + self.idle_spent
    }

    pub fn net_per_robot(&self) -> f64 {
        self.net_energy.units() / self.num_robots.max(1) as f64
    }

    /// Named numeric view used by [`aggregate`].
    pub fn numeric_fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("collected", self.collected.units()),
            ("move_spent", self.move_spent.units()),
            ("comm_spent", self.comm_spent.units()),
            ("idle_spent", self.idle_spent.units()),
            ("spent_total", self.spent_total().units()),
            ("net_energy", self.net_energy.units()),
            ("efficiency", self.efficiency),
            ("trips", self.trips as f64),
            ("successes", self.successes as f64),
            ("failures", self.failures as f64),
            ("final_stimulus", self.final_stimulus),
            ("mean_final_threshold", self.mean_final_threshold),
            ("net_per_robot", self.net_per_robot()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub mean: f64,
    /// Unbiased (n − 1) sample standard deviation; 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SampleStats {
    pub fn from_values(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::EmptyGroup);
        }
        let n = values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // offsets from the minimum keep identical values exact
        let shift = values.iter().map(|x| x - min).sum::<f64>() / n;
        let mean = min + shift;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|x| (x - min - shift).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self { mean, std, min, max })
    }
}

/// Per-field statistics over one configuration's runs, in the field order
/// of [`RunResult::numeric_fields`].
pub fn aggregate(results: &[RunResult]) -> Result<Vec<(&'static str, SampleStats)>, MetricsError> {
    let first = results.first().ok_or(MetricsError::EmptyGroup)?;
    let names: Vec<&'static str> = first.numeric_fields().into_iter().map(|(n, _)| n).collect();
    let rows: Vec<Vec<f64>> = results
        .iter()
        .map(|r| r.numeric_fields().into_iter().map(|(_, v)| v).collect())
        .collect();
    names
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            // sort so the result does not depend on input order
            let mut column: Vec<f64> = rows.iter().map(|row| row[i]).collect();
            column.sort_by(f64::total_cmp);
            SampleStats::from_values(&column).map(|s| (name, s))
        })
        .collect()
}

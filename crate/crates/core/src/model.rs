//! Domain types, boundary conditions, and scenario validation.
//!
//! A tandem system has stations `0..=N` where station 0 is the arrival
//! stream: its "service times" are interarrival times, so its departures
//! are the system arrivals. In finite-buffer modes station 0 participates
//! in blocking exactly like a server — arrivals are delayed, never lost.
//!
//! All epochs are built from `max` and `+` only, so integer-valued inputs
//! below 2^53 produce exactly integer-valued epochs.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::variates::SourceSpec;

/// Time scalar; finite and nonnegative in every reachable state.
pub type Epoch = f64;

/// Buffer discipline of the tandem system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockingMode {
    /// Unbounded buffers; servers never block.
    #[serde(rename = "infinite")]
    InfiniteBuffers,
    /// A server that completes service while the downstream buffer is full
    /// holds the customer and stays busy until space frees.
    Manufacturing,
    /// A server may not start service while the downstream buffer is full.
    Communication,
}

impl BlockingMode {
    pub fn is_finite(self) -> bool {
        !matches!(self, BlockingMode::InfiniteBuffers)
    }
}

impl fmt::Display for BlockingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BlockingMode::InfiniteBuffers => "infinite",
            BlockingMode::Manufacturing => "manufacturing",
            BlockingMode::Communication => "communication",
        };
        f.write_str(name)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |p| p.get())
}

fn is_false(b: &bool) -> bool {
    !b
}

/// Full experiment description. The serialized form of this struct is the
/// scenario file format consumed by the CLI; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Number of servers N (station 0, the arrival stream, is implicit).
    pub stations: usize,
    /// Number of customers K to push through the system.
    pub customers: usize,
    pub mode: BlockingMode,
    /// Buffer capacities m_1..m_N; present exactly when mode is finite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Vec<usize>>,
    pub seed: u64,
    /// One source per station 0..=N; index 0 drives interarrivals.
    pub sources: Vec<SourceSpec>,
    /// Modeled worker count P for the wavefront engine.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Capture the full epoch matrices alongside the run.
    #[serde(default, skip_serializing_if = "is_false")]
    pub trace: bool,
}

/// One violated invariant found during validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationIssue {
    #[error("{field} must be >= 1 (got {got})")]
    NonPositiveDimension { field: &'static str, got: usize },
    #[error("station {station}: buffer capacity missing for mode {mode}")]
    MissingCapacities { station: usize, mode: BlockingMode },
    #[error("station {station}: buffer capacity must be >= 1 (got {got})")]
    InvalidCapacity { station: usize, got: usize },
    #[error("capacities given for station(s) beyond N={stations}")]
    ExcessCapacities { stations: usize },
    #[error("capacities are only meaningful with finite buffers")]
    UnexpectedCapacities,
    #[error("expected {expected} sources (stations 0..=N), got {got}")]
    WrongSourceCount { expected: usize, got: usize },
    #[error("station {station}: {reason}")]
    InvalidSourceParameter { station: usize, reason: String },
}

/// Validation failure carrying every violated invariant at once.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationError {
    pub issues: Vec<ValidationIssue>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid scenario ({} issue(s)):", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

/// A scenario that passed validation, plus any advisory warnings.
/// Immutable afterwards and safe to share across workers.
#[derive(Debug, Clone)]
pub struct ValidatedScenario {
    scenario: Scenario,
    warnings: Vec<String>,
}

impl Scenario {
    /// Check every structural invariant, collecting all violations.
    ///
    /// `K <= N` is accepted with a warning: the wavefront loop bounds stay
    /// well defined for any K >= 1.
    pub fn validate(self) -> Result<ValidatedScenario, ValidationError> {
        let mut issues = Vec::new();
        let mut warnings = Vec::new();

        if self.stations < 1 {
            issues.push(ValidationIssue::NonPositiveDimension {
                field: "stations",
                got: self.stations,
            });
        }
        if self.customers < 1 {
            issues.push(ValidationIssue::NonPositiveDimension {
                field: "customers",
                got: self.customers,
            });
        }
        if self.workers < 1 {
            issues.push(ValidationIssue::NonPositiveDimension {
                field: "workers",
                got: self.workers,
            });
        }

        match (&self.capacities, self.mode.is_finite()) {
            (None, true) => {
                for station in 1..=self.stations {
                    issues.push(ValidationIssue::MissingCapacities {
                        station,
                        mode: self.mode,
                    });
                }
            }
            (Some(caps), true) => {
                for station in caps.len() + 1..=self.stations {
                    issues.push(ValidationIssue::MissingCapacities {
                        station,
                        mode: self.mode,
                    });
                }
                if caps.len() > self.stations {
                    issues.push(ValidationIssue::ExcessCapacities {
                        stations: self.stations,
                    });
                }
                for (idx, &m) in caps.iter().enumerate().take(self.stations) {
                    if m < 1 {
                        issues.push(ValidationIssue::InvalidCapacity {
                            station: idx + 1,
                            got: m,
                        });
                    }
                }
            }
            (Some(_), false) => issues.push(ValidationIssue::UnexpectedCapacities),
            (None, false) => {}
        }

        if self.sources.len() != self.stations + 1 {
            issues.push(ValidationIssue::WrongSourceCount {
                expected: self.stations + 1,
                got: self.sources.len(),
            });
        }
        for (station, source) in self.sources.iter().enumerate() {
            if let Some(reason) = source.parameter_error() {
                issues.push(ValidationIssue::InvalidSourceParameter { station, reason });
            }
        }

        if !issues.is_empty() {
            return Err(ValidationError { issues });
        }

        if self.customers <= self.stations {
            warnings.push(format!(
                "customers K={} does not exceed stations N={}; steady-state criteria are usually \
                 read with K > N",
                self.customers, self.stations
            ));
        }

        Ok(ValidatedScenario {
            scenario: self,
            warnings,
        })
    }
}

impl ValidatedScenario {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Number of servers N.
    pub fn stations(&self) -> usize {
        self.scenario.stations
    }

    pub fn customers(&self) -> usize {
        self.scenario.customers
    }

    pub fn mode(&self) -> BlockingMode {
        self.scenario.mode
    }

    pub fn seed(&self) -> u64 {
        self.scenario.seed
    }

    pub fn workers(&self) -> usize {
        self.scenario.workers
    }

    pub fn trace_requested(&self) -> bool {
        self.scenario.trace
    }

    pub fn source(&self, station: usize) -> &SourceSpec {
        &self.scenario.sources[station]
    }

    /// Buffer capacity m_n for server `1 <= n <= N` in finite modes.
    pub fn capacity(&self, station: usize) -> usize {
        debug_assert!((1..=self.stations()).contains(&station));
        self.scenario
            .capacities
            .as_ref()
            .map_or(usize::MAX, |caps| caps[station - 1])
    }

    /// Total buffer capacity M.
    pub fn total_capacity(&self) -> usize {
        self.scenario
            .capacities
            .as_ref()
            .map_or(0, |caps| caps.iter().sum())
    }

    pub fn capacities(&self) -> Option<&[usize]> {
        self.scenario.capacities.as_deref()
    }
}

/// Boundary value of the departure recursion: 0 whenever `k <= 0`, the
/// station lies upstream of the source (`n < 0`), or downstream of the
/// last server (`n > N`). `None` means the value must come from live state.
pub fn boundary_departure(station: i64, customer: i64, stations: usize) -> Option<Epoch> {
    if customer <= 0 || station < 0 || station > stations as i64 {
        Some(0.0)
    } else {
        None
    }
}

/// Location of the first cell where two traces disagree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceDivergence {
    /// Which matrix differs: "B", "C", "H", or "D".
    pub matrix: &'static str,
    pub station: usize,
    pub customer: usize,
    pub left: Epoch,
    pub right: Epoch,
}

impl fmt::Display for TraceDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[station {}][customer {}]: {} != {}",
            self.matrix, self.station, self.customer, self.left, self.right
        )
    }
}

/// Dense per-(station, customer) epoch matrices captured during a run.
///
/// `B` and `D` are always present; `C` only under manufacturing blocking
/// and `H` only under communication blocking. Customers are 1-based.
/// Capturing a trace never changes any computed metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    stations: usize,
    customers: usize,
    mode: BlockingMode,
    service_start: Vec<Epoch>,
    departure: Vec<Epoch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    completion: Option<Vec<Epoch>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ready: Option<Vec<Epoch>>,
}

impl EpochTrace {
    pub fn new(stations: usize, customers: usize, mode: BlockingMode) -> Self {
        let cells = (stations + 1) * customers;
        EpochTrace {
            stations,
            customers,
            mode,
            service_start: vec![0.0; cells],
            departure: vec![0.0; cells],
            completion: matches!(mode, BlockingMode::Manufacturing).then(|| vec![0.0; cells]),
            ready: matches!(mode, BlockingMode::Communication).then(|| vec![0.0; cells]),
        }
    }

    pub fn stations(&self) -> usize {
        self.stations
    }

    pub fn customers(&self) -> usize {
        self.customers
    }

    pub fn mode(&self) -> BlockingMode {
        self.mode
    }

    fn idx(&self, station: usize, customer: usize) -> usize {
        debug_assert!(station <= self.stations);
        debug_assert!((1..=self.customers).contains(&customer));
        station * self.customers + (customer - 1)
    }

    /// Service initiation epoch B.
    pub fn service_start(&self, station: usize, customer: usize) -> Epoch {
        self.service_start[self.idx(station, customer)]
    }

    /// Departure epoch D, with the zero boundary applied for out-of-range
    /// indices.
    pub fn departure(&self, station: i64, customer: i64) -> Epoch {
        if let Some(v) = boundary_departure(station, customer, self.stations) {
            return v;
        }
        self.departure[self.idx(station as usize, customer as usize)]
    }

    /// Service completion epoch C (manufacturing only).
    pub fn completion(&self, station: usize, customer: usize) -> Option<Epoch> {
        let i = self.idx(station, customer);
        self.completion.as_ref().map(|c| c[i])
    }

    /// Ready-to-check epoch H (communication only).
    pub fn ready(&self, station: usize, customer: usize) -> Option<Epoch> {
        let i = self.idx(station, customer);
        self.ready.as_ref().map(|h| h[i])
    }

    pub fn set_service_start(&mut self, station: usize, customer: usize, value: Epoch) {
        let i = self.idx(station, customer);
        self.service_start[i] = value;
    }

    pub fn set_departure(&mut self, station: usize, customer: usize, value: Epoch) {
        let i = self.idx(station, customer);
        self.departure[i] = value;
    }

    pub fn set_completion(&mut self, station: usize, customer: usize, value: Epoch) {
        let i = self.idx(station, customer);
        self.completion
            .as_mut()
            .expect("completion matrix only exists under manufacturing blocking")[i] = value;
    }

    pub fn set_ready(&mut self, station: usize, customer: usize, value: Epoch) {
        let i = self.idx(station, customer);
        self.ready
            .as_mut()
            .expect("ready matrix only exists under communication blocking")[i] = value;
    }

    /// First cell at which `self` and `other` differ, scanning D, then B,
    /// then the mode-specific matrix, in (station, customer) order.
    pub fn first_divergence(&self, other: &EpochTrace) -> Option<TraceDivergence> {
        if self.stations != other.stations || self.customers != other.customers {
            return Some(TraceDivergence {
                matrix: "D",
                station: 0,
                customer: 0,
                left: self.stations as Epoch,
                right: other.stations as Epoch,
            });
        }
        let planes: [(&'static str, Option<&Vec<Epoch>>, Option<&Vec<Epoch>>); 4] = [
            ("D", Some(&self.departure), Some(&other.departure)),
            ("B", Some(&self.service_start), Some(&other.service_start)),
            ("C", self.completion.as_ref(), other.completion.as_ref()),
            ("H", self.ready.as_ref(), other.ready.as_ref()),
        ];
        for (matrix, left, right) in planes {
            let (Some(left), Some(right)) = (left, right) else {
                continue;
            };
            for station in 0..=self.stations {
                for customer in 1..=self.customers {
                    let i = station * self.customers + (customer - 1);
                    if left[i] != right[i] {
                        return Some(TraceDivergence {
                            matrix,
                            station,
                            customer,
                            left: left[i],
                            right: right[i],
                        });
                    }
                }
            }
        }
        None
    }

    /// FIFO sanity: departures nondecreasing in the customer index, and no
    /// customer departs downstream earlier than upstream.
    pub fn fifo_violation(&self) -> Option<TraceDivergence> {
        for station in 0..=self.stations {
            for customer in 2..=self.customers {
                let prev = self.departure(station as i64, customer as i64 - 1);
                let cur = self.departure(station as i64, customer as i64);
                if cur < prev {
                    return Some(TraceDivergence {
                        matrix: "D",
                        station,
                        customer,
                        left: cur,
                        right: prev,
                    });
                }
            }
        }
        for station in 1..=self.stations {
            for customer in 1..=self.customers {
                let upstream = self.departure(station as i64 - 1, customer as i64);
                let here = self.departure(station as i64, customer as i64);
                if here < upstream {
                    return Some(TraceDivergence {
                        matrix: "D",
                        station,
                        customer,
                        left: here,
                        right: upstream,
                    });
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_sources(n: usize) -> Vec<SourceSpec> {
        (0..=n).map(|_| SourceSpec::Constant(1.0)).collect()
    }

    fn base(stations: usize, customers: usize, mode: BlockingMode) -> Scenario {
        Scenario {
            stations,
            customers,
            mode,
            capacities: mode.is_finite().then(|| vec![1; stations]),
            seed: 0,
            sources: constant_sources(stations),
            workers: 1,
            trace: false,
        }
    }

    #[test]
    fn minimal_scenario_is_valid() {
        let v = base(1, 1, BlockingMode::InfiniteBuffers).validate().unwrap();
        assert_eq!(v.stations(), 1);
        // K <= N warning applies here (K = N = 1).
        assert_eq!(v.warnings().len(), 1);
    }

    #[test]
    fn missing_capacity_reported_per_station() {
        let mut s = base(2, 3, BlockingMode::Manufacturing);
        s.capacities = Some(vec![1]);
        let err = s.validate().unwrap_err();
        assert_eq!(
            err.issues,
            vec![ValidationIssue::MissingCapacities {
                station: 2,
                mode: BlockingMode::Manufacturing
            }]
        );
    }

    #[test]
    fn small_customer_count_warns() {
        let v = base(3, 2, BlockingMode::InfiniteBuffers).validate().unwrap();
        assert_eq!(v.warnings().len(), 1);
        assert!(v.warnings()[0].contains("K=2"));
    }

    #[test]
    fn every_issue_listed() {
        let s = Scenario {
            stations: 0,
            customers: 0,
            mode: BlockingMode::Communication,
            capacities: None,
            seed: 0,
            sources: vec![SourceSpec::Exponential { rate: -1.0 }],
            workers: 0,
            trace: false,
        };
        let err = s.validate().unwrap_err();
        // stations, customers, workers, and the bad rate; no capacity issues
        // because N = 0 has no servers.
        assert_eq!(err.issues.len(), 4);
    }

    #[test]
    fn zero_capacity_rejected() {
        let mut s = base(2, 5, BlockingMode::Communication);
        s.capacities = Some(vec![1, 0]);
        let err = s.validate().unwrap_err();
        assert_eq!(
            err.issues,
            vec![ValidationIssue::InvalidCapacity { station: 2, got: 0 }]
        );
    }

    #[test]
    fn capacities_rejected_for_infinite_buffers() {
        let mut s = base(2, 5, BlockingMode::InfiniteBuffers);
        s.capacities = Some(vec![1, 1]);
        let err = s.validate().unwrap_err();
        assert_eq!(err.issues, vec![ValidationIssue::UnexpectedCapacities]);
    }

    #[test]
    fn source_arity_checked() {
        let mut s = base(2, 5, BlockingMode::InfiniteBuffers);
        s.sources.pop();
        let err = s.validate().unwrap_err();
        assert_eq!(
            err.issues,
            vec![ValidationIssue::WrongSourceCount {
                expected: 3,
                got: 2
            }]
        );
    }

    #[test]
    fn boundary_zeros() {
        assert_eq!(boundary_departure(-1, 5, 3), Some(0.0));
        assert_eq!(boundary_departure(2, 0, 3), Some(0.0));
        assert_eq!(boundary_departure(4, 3, 3), Some(0.0));
        assert_eq!(boundary_departure(2, -7, 3), Some(0.0));
        assert_eq!(boundary_departure(2, 3, 3), None);
    }

    #[test]
    fn scenario_file_round_trip() {
        let s = base(2, 4, BlockingMode::Manufacturing);
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn unknown_scenario_keys_rejected() {
        let text = r#"{"stations":1,"customers":1,"mode":"infinite","seed":0,
                       "sources":[{"dist":"constant","value":1.0}],"bogus":true}"#;
        assert!(serde_json::from_str::<Scenario>(text).is_err());
    }

    #[test]
    fn trace_boundary_and_divergence() {
        let mut t = EpochTrace::new(2, 3, BlockingMode::InfiniteBuffers);
        t.set_departure(1, 2, 4.0);
        assert_eq!(t.departure(1, 2), 4.0);
        assert_eq!(t.departure(-1, 2), 0.0);
        assert_eq!(t.departure(1, 0), 0.0);
        assert_eq!(t.departure(3, 1), 0.0);

        let mut other = t.clone();
        assert_eq!(t.first_divergence(&other), None);
        other.set_departure(1, 2, 5.0);
        let d = t.first_divergence(&other).unwrap();
        assert_eq!((d.matrix, d.station, d.customer), ("D", 1, 2));
        assert_eq!((d.left, d.right), (4.0, 5.0));
    }
}

//! Deterministic generation of service and interarrival times.
//!
//! Every value is addressed by `(seed, station, customer)` through a
//! stateless counter-based mixer: any worker may materialize any value in
//! any order and always observes the same number. No generator state
//! survives between calls, which is what makes the wavefront sweep
//! reproducible for every worker count and chunk schedule.

use std::fmt;

use serde::de::{Deserializer, Error as DeError};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Epoch;

/// Supplier of per-station service times (station 0 supplies interarrival
/// times). Values are pure functions of `(seed, station, customer)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    /// Explicit per-customer values; customer `k` reads entry `k - 1`.
    List(Vec<f64>),
    /// The same duration for every customer.
    Constant(f64),
    /// Exponential with the given rate, via inverse CDF.
    Exponential { rate: f64 },
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Erlang: sum of `shape` exponentials of the given rate, one sub-draw
    /// per summand so the result stays order-free.
    Erlang { shape: u32, rate: f64 },
}

/// Failures surfaced lazily when a value is materialized.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariateError {
    #[error("station {station}: explicit list has {len} values but customer {customer} was requested")]
    OutOfRange {
        station: usize,
        customer: usize,
        len: usize,
    },
    #[error("station {station}: negative service time {value} for customer {customer}")]
    NegativeValue {
        station: usize,
        customer: usize,
        value: f64,
    },
}

impl SourceSpec {
    /// Materialize the duration for `customer` (1-based) at `station`.
    ///
    /// Repeated calls return the identical value regardless of what else
    /// has been generated in between.
    pub fn value(&self, seed: u64, station: usize, customer: usize) -> Result<Epoch, VariateError> {
        debug_assert!(customer >= 1);
        match self {
            SourceSpec::List(values) => {
                let v = *values
                    .get(customer - 1)
                    .ok_or(VariateError::OutOfRange {
                        station,
                        customer,
                        len: values.len(),
                    })?;
                if v < 0.0 || !v.is_finite() {
                    return Err(VariateError::NegativeValue {
                        station,
                        customer,
                        value: v,
                    });
                }
                Ok(v)
            }
            SourceSpec::Constant(c) => Ok(*c),
            SourceSpec::Exponential { rate } => {
                Ok(exponential_draw(seed, station, customer, 0, *rate))
            }
            SourceSpec::Uniform { lo, hi } => {
                let u = unit_open(mix_key(seed, station as u64, customer as u64, 0));
                Ok(lo + u * (hi - lo))
            }
            SourceSpec::Erlang { shape, rate } => {
                let mut sum = 0.0;
                for draw in 0..*shape {
                    sum += exponential_draw(seed, station, customer, u64::from(draw), *rate);
                }
                Ok(sum)
            }
        }
    }

    /// Structural parameter check run at scenario validation time.
    /// List entries are deliberately not scanned here; negative entries
    /// surface as [`VariateError::NegativeValue`] when first used.
    pub(crate) fn parameter_error(&self) -> Option<String> {
        match self {
            SourceSpec::List(_) => None,
            SourceSpec::Constant(c) => {
                (!c.is_finite() || *c < 0.0).then(|| format!("constant value {c} must be finite and >= 0"))
            }
            SourceSpec::Exponential { rate } => {
                (!rate.is_finite() || *rate <= 0.0).then(|| format!("exponential rate {rate} must be finite and > 0"))
            }
            SourceSpec::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || *lo < 0.0 || lo > hi {
                    Some(format!("uniform bounds [{lo}, {hi}] must satisfy 0 <= lo <= hi"))
                } else {
                    None
                }
            }
            SourceSpec::Erlang { shape, rate } => {
                if *shape < 1 {
                    Some("erlang shape must be >= 1".to_string())
                } else if !rate.is_finite() || *rate <= 0.0 {
                    Some(format!("erlang rate {rate} must be finite and > 0"))
                } else {
                    None
                }
            }
        }
    }
}

fn exponential_draw(seed: u64, station: usize, customer: usize, draw: u64, rate: f64) -> f64 {
    let u = unit_open(mix_key(seed, station as u64, customer as u64, draw));
    // -ln(1 - u) / rate; ln_1p keeps precision for small u.
    -(-u).ln_1p() / rate
}

/// splitmix64 finalizer; full avalanche on 64 bits.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless address of one draw: each component passes through a full
/// mixing round so neighboring (station, customer) keys decorrelate.
pub(crate) fn mix_key(seed: u64, station: u64, customer: u64, draw: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0xA076_1D64_78BD_642F);
    h = splitmix64(h ^ station);
    h = splitmix64(h ^ customer);
    h = splitmix64(h ^ draw);
    h
}

/// Map 64 random bits to a double in `[0, 1)`.
fn unit_open(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

// The scenario-file shape is {"list": [..]} or {"dist": "<name>", <params>}.
// An intermediate struct keeps unknown-key rejection strict, which serde's
// untagged enums cannot do on their own.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    dist: Option<String>,
    list: Option<Vec<f64>>,
    value: Option<f64>,
    rate: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
    shape: Option<u32>,
}

impl RawSource {
    fn into_spec(self) -> Result<SourceSpec, String> {
        let RawSource {
            dist,
            list,
            value,
            rate,
            lo,
            hi,
            shape,
        } = self;
        if let Some(values) = list {
            if dist.is_some() || value.is_some() || rate.is_some() || lo.is_some() || hi.is_some() || shape.is_some()
            {
                return Err("a list source takes no other keys".to_string());
            }
            return Ok(SourceSpec::List(values));
        }
        let name = dist.ok_or("source needs either \"list\" or \"dist\"")?;
        let reject_extra = |used: &[bool]| -> Result<(), String> {
            if used.iter().any(|&u| u) {
                Err(format!("unexpected parameter for dist \"{name}\""))
            } else {
                Ok(())
            }
        };
        match name.as_str() {
            "constant" => {
                reject_extra(&[rate.is_some(), lo.is_some(), hi.is_some(), shape.is_some()])?;
                Ok(SourceSpec::Constant(value.ok_or("constant needs \"value\"")?))
            }
            "exponential" => {
                reject_extra(&[value.is_some(), lo.is_some(), hi.is_some(), shape.is_some()])?;
                Ok(SourceSpec::Exponential {
                    rate: rate.ok_or("exponential needs \"rate\"")?,
                })
            }
            "uniform" => {
                reject_extra(&[value.is_some(), rate.is_some(), shape.is_some()])?;
                Ok(SourceSpec::Uniform {
                    lo: lo.ok_or("uniform needs \"lo\"")?,
                    hi: hi.ok_or("uniform needs \"hi\"")?,
                })
            }
            "erlang" => {
                reject_extra(&[value.is_some(), lo.is_some(), hi.is_some()])?;
                Ok(SourceSpec::Erlang {
                    shape: shape.ok_or("erlang needs \"shape\"")?,
                    rate: rate.ok_or("erlang needs \"rate\"")?,
                })
            }
            other => Err(format!("unknown dist \"{other}\"")),
        }
    }
}

impl<'de> Deserialize<'de> for SourceSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        RawSource::deserialize(deserializer)?
            .into_spec()
            .map_err(D::Error::custom)
    }
}

impl Serialize for SourceSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SourceSpec::List(values) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("list", values)?;
                map.end()
            }
            SourceSpec::Constant(value) => {
                let mut map = serializer.serialize_map(Some(2))?;
                map.serialize_entry("dist", "constant")?;
                map.serialize_entry("value", value)?;
                map.end()
            }
            SourceSpec::Exponential { rate } => {
                let mut map = serializer.serialize_map(Some(2))?;
                map.serialize_entry("dist", "exponential")?;
                map.serialize_entry("rate", rate)?;
                map.end()
            }
            SourceSpec::Uniform { lo, hi } => {
                let mut map = serializer.serialize_map(Some(3))?;
                map.serialize_entry("dist", "uniform")?;
                map.serialize_entry("lo", lo)?;
                map.serialize_entry("hi", hi)?;
                map.end()
            }
            SourceSpec::Erlang { shape, rate } => {
                let mut map = serializer.serialize_map(Some(3))?;
                map.serialize_entry("dist", "erlang")?;
                map.serialize_entry("shape", shape)?;
                map.serialize_entry("rate", rate)?;
                map.end()
            }
        }
    }
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::List(v) => write!(f, "list[{}]", v.len()),
            SourceSpec::Constant(c) => write!(f, "constant({c})"),
            SourceSpec::Exponential { rate } => write!(f, "exponential(rate={rate})"),
            SourceSpec::Uniform { lo, hi } => write!(f, "uniform({lo}, {hi})"),
            SourceSpec::Erlang { shape, rate } => write!(f, "erlang(shape={shape}, rate={rate})"),
        }
    }
}

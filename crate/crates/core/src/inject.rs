//! Synthetic anomaly injection: spikes, stuck sensors, and drifts, each
//! pushing a feature beyond one of its rule bounds so the rule engine labels
//! every modified record anomalous. Deterministic for a given seed.

use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{quantize_feature, Dataset, SensorId};
use crate::error::{Error, Result};
use crate::rules::{RuleKind, RuleSet};
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectKind {
    /// One record pushed 10-50% of the feature's observed range beyond a bound.
    Spike,
    /// One frozen out-of-band value repeated over 5-15 consecutive records.
    Stuck,
    /// A linear ramp beyond a bound, deepening over 20-60 records.
    Drift,
}

impl InjectKind {
    pub fn name(self) -> &'static str {
        match self {
            InjectKind::Spike => "spike",
            InjectKind::Stuck => "stuck",
            InjectKind::Drift => "drift",
        }
    }

    fn from_name(name: &str) -> Result<Self> {
        match name {
            "spike" => Ok(InjectKind::Spike),
            "stuck" => Ok(InjectKind::Stuck),
            "drift" => Ok(InjectKind::Drift),
            other => Err(Error::data(format!("unknown injection kind {other:?}"))),
        }
    }
}

impl fmt::Display for InjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    /// Number of injection events (a stuck run or drift ramp is one event).
    pub count: usize,
    pub kinds: Vec<InjectKind>,
    pub target_features: Vec<SensorId>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionEntry {
    pub timestamp: Timestamp,
    pub feature: SensorId,
    pub kind: InjectKind,
    pub old_value: f64,
    pub new_value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionLog {
    pub entries: Vec<InjectionEntry>,
}

impl InjectionLog {
    pub const HEADER: &'static str = "timestamp,feature,kind,old_value,new_value";

    pub fn write_csv(&self, mut sink: impl Write) -> Result<()> {
        sink.write_all(Self::HEADER.as_bytes())?;
        sink.write_all(b"\n")?;
        for e in &self.entries {
            // full precision so the log replays exactly
            let line = format!(
                "{},{},{},{},{}\n",
                e.timestamp.to_iso(),
                e.feature,
                e.kind,
                e.old_value,
                e.new_value
            );
            sink.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv(source: impl BufRead) -> Result<Self> {
        let mut lines = source.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::data("empty input: missing header"))??;
        if header.trim_end() != Self::HEADER {
            return Err(Error::Ingest {
                row: 1,
                message: format!("expected header {:?}", Self::HEADER),
            });
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Ingest {
                    row,
                    message: format!("expected 5 columns, found {}", fields.len()),
                });
            }
            let parse_f64 = |text: &str| -> Result<f64> {
                text.parse().map_err(|_| Error::Ingest {
                    row,
                    message: format!("non-numeric value {text:?}"),
                })
            };
            entries.push(InjectionEntry {
                timestamp: Timestamp::parse(fields[0]).map_err(|e| Error::Ingest {
                    row,
                    message: e.to_string(),
                })?,
                feature: SensorId::from_name(fields[1]).map_err(|e| Error::Ingest {
                    row,
                    message: e.to_string(),
                })?,
                kind: InjectKind::from_name(fields[2]).map_err(|e| Error::Ingest {
                    row,
                    message: e.to_string(),
                })?,
                old_value: parse_f64(fields[3])?,
                new_value: parse_f64(fields[4])?,
            });
        }
        Ok(InjectionLog { entries })
    }
}

/// A violable single-value bound for one feature.
struct Bound {
    kind: RuleKind,
    threshold: f64,
}

fn bounds_for(rules: &RuleSet, sensor: SensorId) -> Result<Vec<Bound>> {
    let bounds: Vec<Bound> = rules
        .bounds_for(sensor)
        .into_iter()
        .map(|r| Bound {
            kind: r.kind,
            threshold: r.threshold,
        })
        .collect();
    if bounds.is_empty() {
        return Err(Error::data(format!(
            "no rule bounds feature {sensor}; cannot inject against it"
        )));
    }
    Ok(bounds)
}

/// Applies `spec.count` injection events to a copy of the dataset. Every
/// modified record ends up beyond at least one rule bound; modified records
/// have their label cleared so a fresh labeling pass stays honest.
pub fn inject(
    dataset: &Dataset,
    spec: &InjectionSpec,
    rules: &RuleSet,
) -> Result<(Dataset, InjectionLog)> {
    if spec.count > dataset.len() {
        return Err(Error::InvalidConfig(format!(
            "count {} exceeds record count {}",
            spec.count,
            dataset.len()
        )));
    }
    if spec.kinds.is_empty() {
        return Err(Error::InvalidConfig("kinds must not be empty".into()));
    }
    if spec.target_features.is_empty() {
        return Err(Error::InvalidConfig(
            "target_features must not be empty".into(),
        ));
    }
    let mut feature_bounds: Vec<Vec<Bound>> = Vec::new();
    for &feature in &spec.target_features {
        feature_bounds.push(bounds_for(rules, feature)?);
    }

    let mut records = dataset.records().to_vec();
    let n = records.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // occupied[feature_index] marks records already injected on that feature
    let mut occupied: [Vec<bool>; 5] = std::array::from_fn(|_| vec![false; n]);
    let mut log = InjectionLog::default();

    let ranges: [f64; 5] = std::array::from_fn(|i| {
        let sensor = crate::data::FEATURE_ORDER[i];
        let min = records
            .iter()
            .map(|r| r.value(sensor))
            .fold(f64::INFINITY, f64::min);
        let max = records
            .iter()
            .map(|r| r.value(sensor))
            .fold(f64::NEG_INFINITY, f64::max);
        (max - min).max(1.0)
    });

    for _ in 0..spec.count {
        let kind = spec.kinds[rng.random_range(0..spec.kinds.len())];
        let feature_idx = rng.random_range(0..spec.target_features.len());
        let feature = spec.target_features[feature_idx];
        let bounds = &feature_bounds[feature_idx];
        let bound = &bounds[rng.random_range(0..bounds.len())];
        let range = ranges[feature.index()];

        let len = match kind {
            InjectKind::Spike => 1,
            InjectKind::Stuck => rng.random_range(5..=15usize),
            InjectKind::Drift => rng.random_range(20..=60usize),
        };
        if len > n {
            return Err(Error::data(format!(
                "dataset too small for a {kind} run of {len} records"
            )));
        }

        let slots = &mut occupied[feature.index()];
        let mut start = None;
        for _ in 0..200 {
            let candidate = rng.random_range(0..=n - len);
            if slots[candidate..candidate + len].iter().all(|b| !b) {
                start = Some(candidate);
                break;
            }
        }
        let start = start.ok_or_else(|| {
            Error::data(format!("could not place {kind} injection without overlap"))
        })?;
        slots[start..start + len].iter_mut().for_each(|b| *b = true);

        let beyond = |threshold: f64, exceedance: f64| match bound.kind {
            RuleKind::Above => quantize_feature(threshold + exceedance),
            _ => quantize_feature(threshold - exceedance),
        };
        let peak = range * rng.random_range(0.1..0.5);
        for offset in 0..len {
            let exceedance = match kind {
                InjectKind::Spike | InjectKind::Stuck => peak,
                InjectKind::Drift => {
                    // ramp from a toe-hold past the bound up to the peak
                    let toe = 0.02 * range;
                    toe + (peak - toe) * offset as f64 / (len - 1).max(1) as f64
                }
            };
            let rec = &mut records[start + offset];
            let old_value = rec.value(feature);
            let new_value = beyond(bound.threshold, exceedance);
            rec.set_value(feature, new_value);
            rec.label = None;
            log.entries.push(InjectionEntry {
                timestamp: rec.timestamp,
                feature,
                kind,
                old_value,
                new_value,
            });
        }
    }

    Ok((Dataset::new(records)?, log))
}

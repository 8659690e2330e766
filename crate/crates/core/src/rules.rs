//! Rule-based anomaly labeling: the twelve default threshold rules, the
//! labeling pass, and scrubbing of anomalous records from training data.
//!
//! All comparators are strict; a value exactly equal to a threshold does not
//! fire. The consecutive-difference rule compares a record with its immediate
//! predecessor within the same segment and flags the later record.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::{format_feature, Dataset, Label, SensorId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Below,
    Above,
    AbsConsecutiveDiffAbove,
}

impl RuleKind {
    fn name(self) -> &'static str {
        match self {
            RuleKind::Below => "below",
            RuleKind::Above => "above",
            RuleKind::AbsConsecutiveDiffAbove => "abs_consecutive_diff_above",
        }
    }

    fn from_name(name: &str) -> Result<Self> {
        match name {
            "below" => Ok(RuleKind::Below),
            "above" => Ok(RuleKind::Above),
            "abs_consecutive_diff_above" => Ok(RuleKind::AbsConsecutiveDiffAbove),
            other => Err(Error::data(format!("unknown rule kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCategory {
    Natural,
    Potential,
}

impl fmt::Display for RuleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleCategory::Natural => "natural",
            RuleCategory::Potential => "potential",
        })
    }
}

/// What a rule examines: a single sensor value, or the difference between
/// consecutive temperature readings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleFeature {
    Sensor(SensorId),
    TemperaturePair,
}

impl RuleFeature {
    pub fn name(self) -> &'static str {
        match self {
            RuleFeature::Sensor(s) => s.name(),
            RuleFeature::TemperaturePair => "temperature_pair",
        }
    }

    fn from_name(name: &str) -> Result<Self> {
        if name == "temperature_pair" {
            Ok(RuleFeature::TemperaturePair)
        } else {
            Ok(RuleFeature::Sensor(SensorId::from_name(name)?))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRule {
    pub rule_id: String,
    pub feature: RuleFeature,
    pub kind: RuleKind,
    pub threshold: f64,
    pub category: RuleCategory,
}

impl AnomalyRule {
    fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::data(format!(
                "rule {}: non-finite threshold",
                self.rule_id
            )));
        }
        match (self.feature, self.kind) {
            (RuleFeature::TemperaturePair, RuleKind::AbsConsecutiveDiffAbove) => Ok(()),
            (RuleFeature::TemperaturePair, _) => Err(Error::data(format!(
                "rule {}: temperature_pair requires kind abs_consecutive_diff_above",
                self.rule_id
            ))),
            (RuleFeature::Sensor(_), RuleKind::AbsConsecutiveDiffAbove) => {
                Err(Error::data(format!(
                    "rule {}: abs_consecutive_diff_above requires temperature_pair",
                    self.rule_id
                )))
            }
            (RuleFeature::Sensor(_), _) => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    rules: Vec<AnomalyRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<AnomalyRule>) -> Result<Self> {
        let mut seen = HashSet::new();
        for rule in &rules {
            rule.validate()?;
            if !seen.insert(rule.rule_id.clone()) {
                return Err(Error::data(format!("duplicate rule id {:?}", rule.rule_id)));
            }
        }
        Ok(RuleSet { rules })
    }

    pub fn rules(&self) -> &[AnomalyRule] {
        &self.rules
    }

    /// Rules that bound a single sensor value (everything except the
    /// consecutive-difference rule) for the given sensor.
    pub fn bounds_for(&self, sensor: SensorId) -> Vec<&AnomalyRule> {
        self.rules
            .iter()
            .filter(|r| r.feature == RuleFeature::Sensor(sensor))
            .collect()
    }

    /// One rule per line: `id,feature,kind,threshold,category`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for rule in &self.rules {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                rule.rule_id,
                rule.feature.name(),
                rule.kind.name(),
                format_feature(rule.threshold),
                rule.category,
            ));
        }
        out
    }

    pub fn from_config(source: impl BufRead) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let row = i + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Ingest {
                    row,
                    message: format!("expected 5 columns, found {}", fields.len()),
                });
            }
            let threshold: f64 = fields[3].parse().map_err(|_| Error::Ingest {
                row,
                message: format!("non-numeric threshold {:?}", fields[3]),
            })?;
            let category = match fields[4] {
                "natural" => RuleCategory::Natural,
                "potential" => RuleCategory::Potential,
                other => {
                    return Err(Error::Ingest {
                        row,
                        message: format!("unknown category {other:?}"),
                    })
                }
            };
            rules.push(AnomalyRule {
                rule_id: fields[0].to_owned(),
                feature: RuleFeature::from_name(fields[1]).map_err(|e| Error::Ingest {
                    row,
                    message: e.to_string(),
                })?,
                kind: RuleKind::from_name(fields[2]).map_err(|e| Error::Ingest {
                    row,
                    message: e.to_string(),
                })?,
                threshold,
                category,
            });
        }
        RuleSet::new(rules)
    }

    pub fn write_config(&self, mut sink: impl Write) -> Result<()> {
        sink.write_all(self.to_config_string().as_bytes())?;
        Ok(())
    }
}

/// The twelve threshold rules used throughout: three natural (observed in the
/// greenhouse) and nine potential (guardrail bounds).
pub fn default_ruleset() -> RuleSet {
    fn rule(
        rule_id: &str,
        feature: RuleFeature,
        kind: RuleKind,
        threshold: f64,
        category: RuleCategory,
    ) -> AnomalyRule {
        AnomalyRule {
            rule_id: rule_id.to_owned(),
            feature,
            kind,
            threshold,
            category,
        }
    }
    use RuleCategory::{Natural, Potential};
    use RuleFeature::{Sensor, TemperaturePair};
    use RuleKind::{Above, AbsConsecutiveDiffAbove, Below};
    use SensorId::{AirQuality, Humidity, Light, Moisture, Temperature};

    RuleSet::new(vec![
        rule("temp_low", Sensor(Temperature), Below, 54.0, Natural),
        rule(
            "temp_diff",
            TemperaturePair,
            AbsConsecutiveDiffAbove,
            25.0,
            Natural,
        ),
        rule("air_elevated", Sensor(AirQuality), Above, 20.0, Natural),
        rule("moisture_low", Sensor(Moisture), Below, 1300.0, Potential),
        rule("moisture_high", Sensor(Moisture), Above, 1900.0, Potential),
        rule("light_high", Sensor(Light), Above, 640.0, Potential),
        rule("light_low", Sensor(Light), Below, 0.0, Potential),
        rule("air_high", Sensor(AirQuality), Above, 40.0, Potential),
        rule("air_low", Sensor(AirQuality), Below, 0.0, Potential),
        rule("temp_high", Sensor(Temperature), Above, 150.0, Potential),
        rule("humidity_high", Sensor(Humidity), Above, 90.0, Potential),
        rule("humidity_low", Sensor(Humidity), Below, 0.0, Potential),
    ])
    .expect("default ruleset is valid")
}

/// Per-rule fire counts from one labeling pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReport {
    pub fires: Vec<RuleFires>,
    pub anomalous_records: usize,
    pub total_records: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFires {
    pub rule_id: String,
    pub count: usize,
}

/// Labels every record: anomalous iff at least one rule fires, with the fired
/// rule ids recorded in ruleset order.
pub fn label(dataset: &Dataset, rules: &RuleSet) -> (Dataset, LabelReport) {
    let mut counts = vec![0usize; rules.rules().len()];
    let mut labels: Vec<Option<Label>> = Vec::with_capacity(dataset.len());
    let mut anomalous_records = 0;

    for (idx, rec) in dataset.records().iter().enumerate() {
        let mut fired: Vec<String> = Vec::new();
        for (rule_idx, rule) in rules.rules().iter().enumerate() {
            let fires = match (rule.feature, rule.kind) {
                (RuleFeature::Sensor(sensor), RuleKind::Below) => {
                    rec.value(sensor) < rule.threshold
                }
                (RuleFeature::Sensor(sensor), RuleKind::Above) => {
                    rec.value(sensor) > rule.threshold
                }
                (RuleFeature::TemperaturePair, RuleKind::AbsConsecutiveDiffAbove) => {
                    if idx == 0 || dataset.is_segment_start(idx) {
                        false
                    } else {
                        let prev = &dataset.records()[idx - 1];
                        (rec.temperature - prev.temperature).abs() > rule.threshold
                    }
                }
                _ => false,
            };
            if fires {
                counts[rule_idx] += 1;
                fired.push(rule.rule_id.clone());
            }
        }
        if fired.is_empty() {
            labels.push(Some(Label::Normal));
        } else {
            anomalous_records += 1;
            labels.push(Some(Label::Anomalous(fired)));
        }
    }

    let labeled = dataset
        .with_labels(labels)
        .expect("label count matches record count");
    let report = LabelReport {
        fires: rules
            .rules()
            .iter()
            .zip(counts)
            .map(|(rule, count)| RuleFires {
                rule_id: rule.rule_id.clone(),
                count,
            })
            .collect(),
        anomalous_records,
        total_records: dataset.len(),
    };
    (labeled, report)
}

/// Removes every anomalous record, preserving order. Gaps left by removals
/// become segment breaks.
pub fn scrub(dataset: &Dataset) -> Result<Dataset> {
    let mut survivors = Vec::with_capacity(dataset.len());
    for rec in dataset.records() {
        match &rec.label {
            None => return Err(Error::data("cannot scrub an unlabeled dataset")),
            Some(Label::Normal) => survivors.push(rec.clone()),
            Some(Label::Anomalous(_)) => {}
        }
    }
    if survivors.is_empty() {
        return Err(Error::data("no normal data to train on"));
    }
    Dataset::new(survivors)
}

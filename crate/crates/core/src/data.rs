//! Time-series data model: per-sensor raw series, the merged minute-resolution
//! dataset, CSV ingestion and export, forward-fill, and inner-join merging.
//!
//! Segment boundaries are first-class: a segment is a maximal run of records
//! spaced exactly one minute apart. Gaps (capped fills, join drops, scrubbed
//! records) start a new segment, and consecutive-difference rules never fire
//! across a gap.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Timestamp;

/// The five physical sensors, in canonical feature order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorId {
    Moisture,
    Light,
    AirQuality,
    Temperature,
    Humidity,
}

/// Fixed feature order used everywhere a record becomes a vector.
pub const FEATURE_ORDER: [SensorId; 5] = [
    SensorId::Moisture,
    SensorId::Light,
    SensorId::AirQuality,
    SensorId::Temperature,
    SensorId::Humidity,
];

impl SensorId {
    pub fn name(self) -> &'static str {
        match self {
            SensorId::Moisture => "moisture",
            SensorId::Light => "light",
            SensorId::AirQuality => "air_quality",
            SensorId::Temperature => "temperature",
            SensorId::Humidity => "humidity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        FEATURE_ORDER
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::data(format!("unknown sensor {name:?}")))
    }

    pub fn index(self) -> usize {
        FEATURE_ORDER.iter().position(|s| *s == self).unwrap()
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One sensor's samples, strictly increasing in time, all values finite.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub sensor_id: SensorId,
    samples: Vec<(Timestamp, f64)>,
}

impl RawSeries {
    pub fn new(sensor_id: SensorId, samples: Vec<(Timestamp, f64)>) -> Result<Self> {
        for pair in samples.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::data(format!(
                    "samples out of order at {}",
                    pair[1].0
                )));
            }
        }
        if let Some((ts, v)) = samples.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::data(format!("non-finite value {v} at {ts}")));
        }
        Ok(RawSeries { sensor_id, samples })
    }

    pub fn samples(&self) -> &[(Timestamp, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-record ground truth produced by the rule engine.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Normal,
    /// Carries the ids of every rule that fired.
    Anomalous(Vec<String>),
}

impl Label {
    pub fn is_anomalous(&self) -> bool {
        matches!(self, Label::Anomalous(_))
    }
}

/// One minute-aligned row of all five features.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorRecord {
    pub timestamp: Timestamp,
    pub moisture: f64,
    pub light: f64,
    pub air_quality: f64,
    pub temperature: f64,
    pub humidity: f64,
    pub label: Option<Label>,
}

impl SensorRecord {
    pub fn value(&self, sensor: SensorId) -> f64 {
        match sensor {
            SensorId::Moisture => self.moisture,
            SensorId::Light => self.light,
            SensorId::AirQuality => self.air_quality,
            SensorId::Temperature => self.temperature,
            SensorId::Humidity => self.humidity,
        }
    }

    pub fn set_value(&mut self, sensor: SensorId, value: f64) {
        match sensor {
            SensorId::Moisture => self.moisture = value,
            SensorId::Light => self.light = value,
            SensorId::AirQuality => self.air_quality = value,
            SensorId::Temperature => self.temperature = value,
            SensorId::Humidity => self.humidity = value,
        }
    }

    pub fn features(&self) -> [f64; 5] {
        [
            self.moisture,
            self.light,
            self.air_quality,
            self.temperature,
            self.humidity,
        ]
    }

    fn all_finite(&self) -> bool {
        self.features().iter().all(|v| v.is_finite())
    }
}

/// Minute-resolution multivariate dataset with explicit segment boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<SensorRecord>,
    /// Indices where a new contiguous segment begins; starts with 0 when non-empty.
    segment_starts: Vec<usize>,
}

impl Dataset {
    /// Validates ordering and finiteness and derives segment boundaries from
    /// minute gaps.
    pub fn new(records: Vec<SensorRecord>) -> Result<Self> {
        let mut segment_starts = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            if !rec.all_finite() {
                return Err(Error::data(format!(
                    "non-finite feature value at {}",
                    rec.timestamp
                )));
            }
            if i == 0 {
                segment_starts.push(0);
                continue;
            }
            let gap = rec.timestamp.minutes_since(records[i - 1].timestamp);
            if gap <= 0 {
                return Err(Error::data(format!(
                    "timestamps not strictly increasing at {}",
                    rec.timestamp
                )));
            }
            if gap > 1 {
                segment_starts.push(i);
            }
        }
        Ok(Dataset {
            records,
            segment_starts,
        })
    }

    pub fn records(&self) -> &[SensorRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn segment_starts(&self) -> &[usize] {
        &self.segment_starts
    }

    /// Segments as index ranges into `records()`.
    pub fn segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.segment_starts.len());
        for (i, &start) in self.segment_starts.iter().enumerate() {
            let end = self
                .segment_starts
                .get(i + 1)
                .copied()
                .unwrap_or(self.records.len());
            out.push(start..end);
        }
        out
    }

    /// True when `idx` opens a new segment (its predecessor is across a gap).
    pub fn is_segment_start(&self, idx: usize) -> bool {
        self.segment_starts.binary_search(&idx).is_ok()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.records.iter().map(|r| r.timestamp)
    }

    /// Replaces every label; record count and order are preserved.
    pub fn with_labels(&self, labels: Vec<Option<Label>>) -> Result<Dataset> {
        if labels.len() != self.records.len() {
            return Err(Error::data("label count does not match record count"));
        }
        let mut records = self.records.clone();
        for (rec, label) in records.iter_mut().zip(labels) {
            rec.label = label;
        }
        Ok(Dataset {
            records,
            segment_starts: self.segment_starts.clone(),
        })
    }
}

/// Counts of rows adjusted during raw-series ingestion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarnings {
    /// Rows whose (minute-truncated) timestamp repeated an earlier one; the
    /// last occurrence wins.
    pub duplicates: usize,
    /// Rows that arrived before a row with a later timestamp; sorted.
    pub out_of_order: usize,
}

/// Reads a two-column `timestamp,value` CSV (header required) into a series.
pub fn ingest_csv(
    source: impl BufRead,
    sensor_id: SensorId,
) -> Result<(RawSeries, IngestWarnings)> {
    let mut lines = source.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data("empty input: missing header"))??;
    if header.trim_end() != "timestamp,value" {
        return Err(Error::Ingest {
            row: 1,
            message: format!("expected header \"timestamp,value\", found {header:?}"),
        });
    }

    let mut rows: Vec<(Timestamp, f64)> = Vec::new();
    let mut warnings = IngestWarnings::default();
    for (i, line) in lines.enumerate() {
        let row = i + 2; // 1-based, after the header
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let (ts_text, value_text) = line.split_once(',').ok_or_else(|| Error::Ingest {
            row,
            message: "expected two comma-separated columns".into(),
        })?;
        let timestamp = Timestamp::parse(ts_text).map_err(|e| Error::Ingest {
            row,
            message: e.to_string(),
        })?;
        let value: f64 = value_text.trim().parse().map_err(|_| Error::Ingest {
            row,
            message: format!("non-numeric value {:?}", value_text.trim()),
        })?;
        if !value.is_finite() {
            return Err(Error::Ingest {
                row,
                message: format!("non-finite value {value_text:?}"),
            });
        }
        if let Some(&(last_ts, _)) = rows.last() {
            if timestamp < last_ts {
                warnings.out_of_order += 1;
            }
        }
        rows.push((timestamp, value));
    }

    // Stable sort keeps file order among equal minutes, so "last occurrence
    // wins" below sees the freshest reading.
    rows.sort_by_key(|(ts, _)| *ts);
    let mut deduped: Vec<(Timestamp, f64)> = Vec::with_capacity(rows.len());
    for (ts, v) in rows {
        match deduped.last_mut() {
            Some((last_ts, last_v)) if *last_ts == ts => {
                *last_v = v;
                warnings.duplicates += 1;
            }
            _ => deduped.push((ts, v)),
        }
    }

    Ok((RawSeries::new(sensor_id, deduped)?, warnings))
}

/// Forward-fill result: the filled series plus the timestamps that open a new
/// segment after an unfillable gap.
#[derive(Clone, Debug, PartialEq)]
pub struct FilledSeries {
    pub series: RawSeries,
    pub segment_breaks: Vec<Timestamp>,
}

/// Propagates each sample into the following minute slots, up to
/// `max_fill_minutes` per sample. A gap larger than the cap leaves the excess
/// minutes unfilled and reports the later sample as a segment break.
pub fn forward_fill(
    series: &RawSeries,
    interval_minutes: i64,
    max_fill_minutes: i64,
) -> Result<FilledSeries> {
    if series.is_empty() {
        return Err(Error::data("cannot forward-fill an empty series"));
    }
    if interval_minutes < 1 {
        return Err(Error::InvalidConfig("interval_minutes must be >= 1".into()));
    }
    if max_fill_minutes < interval_minutes {
        return Err(Error::InvalidConfig(
            "max_fill_minutes must be >= interval_minutes".into(),
        ));
    }

    let samples = series.samples();
    let mut filled: Vec<(Timestamp, f64)> = Vec::with_capacity(samples.len());
    let mut segment_breaks = Vec::new();
    for (i, &(ts, value)) in samples.iter().enumerate() {
        filled.push((ts, value));
        let Some(&(next_ts, _)) = samples.get(i + 1) else {
            continue;
        };
        let gap = next_ts.minutes_since(ts);
        // A gap within the cap is bridged completely; otherwise the sample
        // covers only its own cadence window and the rest stays open.
        let fill_until = if gap <= max_fill_minutes {
            gap
        } else {
            segment_breaks.push(next_ts);
            max_fill_minutes
        };
        let mut offset = interval_minutes;
        while offset < fill_until {
            filled.push((ts.plus_minutes(offset), value));
            offset += interval_minutes;
        }
    }

    Ok(FilledSeries {
        series: RawSeries::new(series.sensor_id, filled)?,
        segment_breaks,
    })
}

/// Per-sensor counts of minutes dropped by the inner join.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub dropped: [usize; 5],
}

impl MergeReport {
    pub fn dropped_for(&self, sensor: SensorId) -> usize {
        self.dropped[sensor.index()]
    }
}

/// Inner-joins one series per sensor on the minute key. Only minutes present
/// in all five series survive.
pub fn align_merge(series_set: &[RawSeries]) -> Result<(Dataset, MergeReport)> {
    let mut by_sensor: [Option<&RawSeries>; 5] = [None; 5];
    for series in series_set {
        let slot = &mut by_sensor[series.sensor_id.index()];
        if slot.is_some() {
            return Err(Error::data(format!(
                "duplicate series for sensor {}",
                series.sensor_id
            )));
        }
        *slot = Some(series);
    }
    let mut resolved: [&RawSeries; 5] = [series_set
        .first()
        .ok_or_else(|| Error::data("align_merge requires one series per sensor, got none"))?;
        5];
    for (i, slot) in by_sensor.iter().enumerate() {
        resolved[i] = slot.ok_or_else(|| {
            Error::data(format!("missing series for sensor {}", FEATURE_ORDER[i]))
        })?;
    }

    // March five cursors in lockstep over the sorted series.
    let mut cursors = [0usize; 5];
    let mut records = Vec::new();
    'outer: loop {
        let mut candidate: Option<Timestamp> = None;
        for (series, &cursor) in resolved.iter().zip(&cursors) {
            match series.samples().get(cursor) {
                Some(&(ts, _)) => {
                    candidate = Some(match candidate {
                        Some(c) if c >= ts => c,
                        Some(_) | None => ts,
                    })
                }
                None => break 'outer,
            }
        }
        let target = candidate.expect("five non-exhausted cursors");
        let mut all_match = true;
        for (series, cursor) in resolved.iter().zip(cursors.iter_mut()) {
            while let Some(&(ts, _)) = series.samples().get(*cursor) {
                if ts < target {
                    *cursor += 1;
                } else {
                    break;
                }
            }
            match series.samples().get(*cursor) {
                Some(&(ts, _)) if ts == target => {}
                Some(_) => all_match = false,
                None => break 'outer,
            }
        }
        if all_match {
            let value_at = |s: SensorId| resolved[s.index()].samples()[cursors[s.index()]].1;
            records.push(SensorRecord {
                timestamp: target,
                moisture: value_at(SensorId::Moisture),
                light: value_at(SensorId::Light),
                air_quality: value_at(SensorId::AirQuality),
                temperature: value_at(SensorId::Temperature),
                humidity: value_at(SensorId::Humidity),
                label: None,
            });
            for cursor in cursors.iter_mut() {
                *cursor += 1;
            }
        }
    }

    if records.is_empty() {
        return Err(Error::data("no overlapping time range"));
    }
    let mut report = MergeReport::default();
    for (i, series) in resolved.iter().enumerate() {
        report.dropped[i] = series.len() - records.len();
    }
    Ok((Dataset::new(records)?, report))
}

pub const DATASET_HEADER: &str =
    "timestamp,moisture,light,air_quality,temperature_f,humidity_pct,label";

/// Prints a feature with up to six decimal places, trailing zeros trimmed.
/// Values quantized to 1e-6 round-trip exactly through this format.
pub fn format_feature(value: f64) -> String {
    let mut s = format!("{value:.6}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Rounds to six decimal places, the dataset CSV's value resolution.
pub fn quantize_feature(value: f64) -> f64 {
    (value * 1e6).round() / 1e6
}

fn format_label(label: &Option<Label>) -> String {
    match label {
        None => String::new(),
        Some(Label::Normal) => "normal".into(),
        Some(Label::Anomalous(rules)) => format!("anomalous:{}", rules.join(";")),
    }
}

fn parse_label(text: &str) -> Result<Option<Label>> {
    if text.is_empty() {
        return Ok(None);
    }
    if text == "normal" {
        return Ok(Some(Label::Normal));
    }
    if let Some(rules) = text.strip_prefix("anomalous:") {
        if rules.is_empty() {
            return Err(Error::data("anomalous label lists no rules"));
        }
        return Ok(Some(Label::Anomalous(
            rules.split(';').map(str::to_owned).collect(),
        )));
    }
    Err(Error::data(format!("unrecognized label {text:?}")))
}

/// Writes the dataset CSV schema: UTF-8, `\n` line endings, ISO timestamps.
pub fn write_csv(dataset: &Dataset, mut sink: impl Write) -> Result<()> {
    sink.write_all(DATASET_HEADER.as_bytes())?;
    sink.write_all(b"\n")?;
    for rec in dataset.records() {
        let line = format!(
            "{},{},{},{},{},{},{}\n",
            rec.timestamp.to_iso(),
            format_feature(rec.moisture),
            format_feature(rec.light),
            format_feature(rec.air_quality),
            format_feature(rec.temperature),
            format_feature(rec.humidity),
            format_label(&rec.label),
        );
        sink.write_all(line.as_bytes())?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads the dataset CSV schema back into a [`Dataset`].
pub fn read_csv(source: impl BufRead) -> Result<Dataset> {
    let mut lines = source.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data("empty input: missing header"))??;
    if header.trim_end() != DATASET_HEADER {
        return Err(Error::Ingest {
            row: 1,
            message: format!("expected header {DATASET_HEADER:?}, found {header:?}"),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Ingest {
                row,
                message: format!("expected 7 columns, found {}", fields.len()),
            });
        }
        let timestamp = Timestamp::parse(fields[0]).map_err(|e| Error::Ingest {
            row,
            message: e.to_string(),
        })?;
        let mut values = [0.0f64; 5];
        for (j, value) in values.iter_mut().enumerate() {
            *value = fields[j + 1].parse().map_err(|_| Error::Ingest {
                row,
                message: format!("non-numeric value {:?}", fields[j + 1]),
            })?;
        }
        let label = parse_label(fields[6]).map_err(|e| Error::Ingest {
            row,
            message: e.to_string(),
        })?;
        records.push(SensorRecord {
            timestamp,
            moisture: values[0],
            light: values[1],
            air_quality: values[2],
            temperature: values[3],
            humidity: values[4],
            label,
        });
    }
    Dataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;
    use std::io::Cursor;

    fn ts(minute: i64) -> Timestamp {
        Timestamp::from_epoch_minute(minute)
    }

    fn record(minute: i64) -> SensorRecord {
        SensorRecord {
            timestamp: ts(minute),
            moisture: 1500.0,
            light: 300.0,
            air_quality: 10.0,
            temperature: 85.0,
            humidity: 40.0,
            label: None,
        }
    }

    #[test]
    fn ingest_reads_valid_rows() {
        let csv = "timestamp,value\n\
                   2021-04-16T10:19:00Z,85.44\n\
                   2021-04-16T10:20:00Z,85.5\n\
                   2021-04-16T10:21:00Z,85.6\n";
        let (series, warnings) = ingest_csv(Cursor::new(csv), SensorId::Temperature).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(warnings, IngestWarnings::default());
        assert_eq!(series.samples()[0].1, 85.44);
    }

    #[test]
    fn ingest_rejects_non_numeric_cell_with_row() {
        let csv = "timestamp,value\n\
                   2021-04-16T10:19:00Z,85.44\n\
                   2021-04-16T10:20:00Z,Dry\n";
        let err = ingest_csv(Cursor::new(csv), SensorId::Moisture).unwrap_err();
        match err {
            Error::Ingest { row, message } => {
                assert_eq!(row, 3);
                assert!(message.contains("Dry"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn ingest_collapses_duplicate_minutes_to_last() {
        let csv = "timestamp,value\n\
                   2021-04-16T10:19:02Z,1.0\n\
                   2021-04-16T10:19:40Z,2.0\n";
        let (series, warnings) = ingest_csv(Cursor::new(csv), SensorId::Light).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series.samples()[0].1, 2.0);
        assert_eq!(warnings.duplicates, 1);
    }

    #[test]
    fn ingest_sorts_out_of_order_rows_with_warning() {
        let csv = "timestamp,value\n\
                   2021-04-16T10:21:00Z,3.0\n\
                   2021-04-16T10:19:00Z,1.0\n\
                   2021-04-16T10:20:00Z,2.0\n";
        let (series, warnings) = ingest_csv(Cursor::new(csv), SensorId::Light).unwrap();
        assert_eq!(warnings.out_of_order, 1); // one descent in arrival order
        let values: Vec<f64> = series.samples().iter().map(|(_, v)| *v).collect();
        assert_eq!(values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn forward_fill_copies_into_minute_slots() {
        // a 10-minute-cadence reading covers every minute until the next one
        let t0 = Timestamp::parse("2021-04-16T10:19:00Z").unwrap();
        let series = RawSeries::new(
            SensorId::Temperature,
            vec![(t0, 85.44), (t0.plus_minutes(10), 86.0)],
        )
        .unwrap();
        let filled = forward_fill(&series, 1, 10).unwrap();
        assert!(filled.segment_breaks.is_empty());
        assert_eq!(filled.series.len(), 11);
        for offset in 0..10 {
            assert_eq!(
                filled.series.samples()[offset],
                (t0.plus_minutes(offset as i64), 85.44)
            );
        }
        assert_eq!(filled.series.samples()[10], (t0.plus_minutes(10), 86.0));
    }

    #[test]
    fn forward_fill_is_identity_on_minute_spaced_series() {
        let series = RawSeries::new(
            SensorId::Light,
            (0..5).map(|i| (ts(100 + i), i as f64)).collect(),
        )
        .unwrap();
        let filled = forward_fill(&series, 1, 10).unwrap();
        assert_eq!(filled.series, series);
        assert!(filled.segment_breaks.is_empty());
    }

    #[test]
    fn forward_fill_caps_large_gaps_and_reports_break() {
        // Hand enumeration for samples at minutes 0, 45, 47 with max_fill 10:
        // minute 0 covers 0..=9 (10 minutes), then a break at 45; 45..=46
        // bridge normally.
        let series = RawSeries::new(
            SensorId::Humidity,
            vec![(ts(0), 30.0), (ts(45), 31.0), (ts(47), 32.0)],
        )
        .unwrap();
        let filled = forward_fill(&series, 1, 10).unwrap();
        assert_eq!(filled.segment_breaks, vec![ts(45)]);
        let expected: Vec<(Timestamp, f64)> = (0..10)
            .map(|m| (ts(m), 30.0))
            .chain([(ts(45), 31.0), (ts(46), 31.0), (ts(47), 32.0)])
            .collect();
        assert_eq!(filled.series.samples(), expected.as_slice());
    }

    #[test]
    fn forward_fill_rejects_empty_series() {
        let series = RawSeries::new(SensorId::Light, vec![]).unwrap();
        assert!(forward_fill(&series, 1, 10).is_err());
    }

    fn five_series(minutes: [&[i64]; 5]) -> Vec<RawSeries> {
        FEATURE_ORDER
            .iter()
            .zip(minutes)
            .map(|(&sensor, ms)| {
                RawSeries::new(sensor, ms.iter().map(|&m| (ts(m), m as f64)).collect()).unwrap()
            })
            .collect()
    }

    #[test]
    fn align_merge_full_overlap_keeps_everything() {
        let minutes: Vec<i64> = (0..100).collect();
        let series = five_series([&minutes, &minutes, &minutes, &minutes, &minutes]);
        let (dataset, report) = align_merge(&series).unwrap();
        assert_eq!(dataset.len(), 100);
        assert_eq!(report.dropped, [0; 5]);
        assert_eq!(dataset.segment_starts(), &[0]);
    }

    #[test]
    fn align_merge_drops_minutes_missing_from_any_sensor() {
        let full: Vec<i64> = (0..100).collect();
        let gappy: Vec<i64> = (0..100).filter(|&m| m != 50).collect();
        let series = five_series([&full, &gappy, &full, &full, &full]);
        let (dataset, report) = align_merge(&series).unwrap();
        assert_eq!(dataset.len(), 99);
        assert_eq!(report.dropped_for(SensorId::Light), 0);
        assert_eq!(report.dropped_for(SensorId::Moisture), 1);
        assert!(dataset.timestamps().all(|t| t != ts(50)));
        assert_eq!(dataset.segment_starts(), &[0, 50]);
    }

    #[test]
    fn align_merge_rejects_empty_intersection() {
        let series = five_series([&[0, 1], &[2, 3], &[0, 1], &[0, 1], &[0, 1]]);
        let err = align_merge(&series).unwrap_err();
        assert!(err.to_string().contains("no overlapping time range"));
    }

    #[test]
    fn write_csv_emits_header_plus_rows() {
        let dataset = Dataset::new(vec![record(0)]).unwrap();
        let mut out = Vec::new();
        write_csv(&dataset, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(DATASET_HEADER));
    }

    #[test]
    fn labeled_dataset_writes_expected_file() {
        let minute = Timestamp::parse("2021-04-16T10:19:00Z")
            .unwrap()
            .epoch_minute();
        let mut a = record(minute);
        a.label = Some(Label::Anomalous(vec![
            "temp_low".into(),
            "temp_diff".into(),
        ]));
        a.temperature = 48.5;
        let mut b = record(minute + 1);
        b.label = Some(Label::Normal);
        b.moisture = 1550.25;
        let dataset = Dataset::new(vec![a, b]).unwrap();
        let mut out = Vec::new();
        write_csv(&dataset, &mut out).unwrap();
        let expected = "timestamp,moisture,light,air_quality,temperature_f,humidity_pct,label\n\
             2021-04-16T10:19:00Z,1500,300,10,48.5,40,anomalous:temp_low;temp_diff\n\
             2021-04-16T10:20:00Z,1550.25,300,10,85,40,normal\n";
        assert_eq!(String::from_utf8(out).unwrap(), expected);
    }

    #[test]
    fn csv_roundtrip_is_identity() {
        let mut a = record(1000);
        a.label = Some(Label::Normal);
        let mut b = record(1001);
        b.light = 0.123456;
        b.label = Some(Label::Anomalous(vec!["light_low".into()]));
        let c = record(1005); // forces a segment break
        let dataset = Dataset::new(vec![a, b, c]).unwrap();
        let mut out = Vec::new();
        write_csv(&dataset, &mut out).unwrap();
        let back = read_csv(Cursor::new(&out)).unwrap();
        assert_eq!(back, dataset);
        assert_eq!(back.segment_starts(), &[0, 2]);

        // write ∘ read is the identity on the file too
        let mut out2 = Vec::new();
        write_csv(&back, &mut out2).unwrap();
        assert_eq!(out, out2);
    }

    #[test]
    fn format_feature_trims_trailing_zeros() {
        assert_eq!(format_feature(85.44), "85.44");
        assert_eq!(format_feature(300.0), "300");
        assert_eq!(format_feature(0.5), "0.5");
        assert_eq!(format_feature(-0.0), "0");
        assert_eq!(format_feature(1.000001), "1.000001");
    }

    proptest! {
        /// Record count of the merge equals the size of the timestamp
        /// intersection, per a brute-force set oracle.
        #[test]
        fn align_merge_matches_set_intersection_oracle(
            sets in proptest::collection::vec(
                proptest::collection::btree_set(0i64..60, 1..40), 5)
        ) {
            let series: Vec<RawSeries> = FEATURE_ORDER
                .iter()
                .zip(&sets)
                .map(|(&sensor, set)| {
                    RawSeries::new(sensor, set.iter().map(|&m| (ts(m), m as f64)).collect()).unwrap()
                })
                .collect();
            let mut intersection: BTreeSet<i64> = sets[0].clone();
            for set in &sets[1..] {
                intersection = intersection.intersection(set).copied().collect();
            }
            match align_merge(&series) {
                Ok((dataset, report)) => {
                    prop_assert_eq!(dataset.len(), intersection.len());
                    for (i, set) in sets.iter().enumerate() {
                        prop_assert_eq!(report.dropped[i], set.len() - intersection.len());
                    }
                }
                Err(_) => prop_assert!(intersection.is_empty()),
            }
        }

        /// Forward-fill agrees with a per-pair enumeration oracle; output
        /// timestamps are a superset of the input's.
        #[test]
        fn forward_fill_matches_enumeration_oracle(
            minutes in proptest::collection::btree_set(0i64..400, 1..30),
            max_fill in 1i64..30,
        ) {
            let input: Vec<(Timestamp, f64)> = minutes.iter().map(|&m| (ts(m), m as f64)).collect();
            let series = RawSeries::new(SensorId::Moisture, input.clone()).unwrap();
            let filled = forward_fill(&series, 1, max_fill).unwrap();

            let mut expected = Vec::new();
            for (i, &(t, v)) in input.iter().enumerate() {
                expected.push((t, v));
                if let Some(&(next, _)) = input.get(i + 1) {
                    let gap = next.minutes_since(t);
                    for offset in 1..gap.min(max_fill) {
                        expected.push((t.plus_minutes(offset), v));
                    }
                }
            }
            prop_assert_eq!(filled.series.samples(), expected.as_slice());

            let out: BTreeSet<i64> =
                filled.series.samples().iter().map(|(t, _)| t.epoch_minute()).collect();
            for m in &minutes {
                prop_assert!(out.contains(m));
            }
        }
    }
}

//! Minute-resolution UTC timestamps.
//!
//! Two text formats are accepted: ISO-8601 (`2021-04-16T10:19:00Z`) and the
//! C `asctime` layout (`Fri Apr 16 10:19:00 2021`). Seconds are discarded on
//! parse; the minute is the grouping key for the whole pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whole minutes since the Unix epoch, UTC. Ordering is integer ordering.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Timestamp(i64);

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];
const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

impl Timestamp {
    pub fn from_epoch_minute(epoch_minute: i64) -> Self {
        Timestamp(epoch_minute)
    }

    pub fn epoch_minute(self) -> i64 {
        self.0
    }

    pub fn from_civil(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Self {
        Timestamp(
            days_from_civil(year, month, day) * 1440 + i64::from(hour) * 60 + i64::from(minute),
        )
    }

    pub fn plus_minutes(self, minutes: i64) -> Self {
        Timestamp(self.0 + minutes)
    }

    pub fn minutes_since(self, earlier: Timestamp) -> i64 {
        self.0 - earlier.0
    }

    /// Parses either accepted format, truncating to the minute.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.contains('-') && text.contains('T') {
            Self::parse_iso(text)
        } else if text.contains(' ') {
            Self::parse_asctime(text)
        } else {
            Err(Error::parse(
                "timestamp",
                format!("unrecognized format: {text:?}"),
            ))
        }
    }

    /// `YYYY-MM-DDThh:mm:ssZ` (the `Z` suffix is optional on input).
    fn parse_iso(text: &str) -> Result<Self> {
        let body = text.strip_suffix('Z').unwrap_or(text);
        let (date, time) = body
            .split_once('T')
            .ok_or_else(|| Error::parse("timestamp", "missing 'T' separator"))?;
        let mut date_parts = date.split('-');
        let year = field_i32(date_parts.next(), "year")?;
        let month = field_u32(date_parts.next(), "month")?;
        let day = field_u32(date_parts.next(), "day")?;
        if date_parts.next().is_some() {
            return Err(Error::parse("date", "too many components"));
        }
        let mut time_parts = time.split(':');
        let hour = field_u32(time_parts.next(), "hour")?;
        let minute = field_u32(time_parts.next(), "minute")?;
        let second = field_u32(time_parts.next(), "second")?;
        if time_parts.next().is_some() {
            return Err(Error::parse("time", "too many components"));
        }
        Self::from_fields(year, month, day, hour, minute, second)
    }

    /// `Www Mmm dd hh:mm:ss yyyy`, the `time.asctime()` layout.
    fn parse_asctime(text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(Error::parse(
                "timestamp",
                format!("expected 5 fields, found {}", tokens.len()),
            ));
        }
        if !WEEKDAYS.contains(&tokens[0]) {
            return Err(Error::parse(
                "weekday",
                format!("unknown name {:?}", tokens[0]),
            ));
        }
        let month = MONTHS
            .iter()
            .position(|m| *m == tokens[1])
            .ok_or_else(|| Error::parse("month", format!("unknown name {:?}", tokens[1])))?
            as u32
            + 1;
        let day: u32 = tokens[2]
            .parse()
            .map_err(|_| Error::parse("day", format!("not a number: {:?}", tokens[2])))?;
        let mut time_parts = tokens[3].split(':');
        let hour = field_u32(time_parts.next(), "hour")?;
        let minute = field_u32(time_parts.next(), "minute")?;
        let second = field_u32(time_parts.next(), "second")?;
        if time_parts.next().is_some() {
            return Err(Error::parse("time", "too many components"));
        }
        let year = field_i32(Some(tokens[4]), "year")?;
        Self::from_fields(year, month, day, hour, minute, second)
    }

    fn from_fields(
        year: i32,
        month: u32,
        day: u32,
        hour: u32,
        minute: u32,
        second: u32,
    ) -> Result<Self> {
        if !(1..=9999).contains(&year) {
            return Err(Error::parse("year", format!("{year} out of range")));
        }
        if !(1..=12).contains(&month) {
            return Err(Error::parse("month", format!("{month} out of range")));
        }
        let dim = days_in_month(year, month);
        if day < 1 || day > dim {
            return Err(Error::parse(
                "day",
                format!("{day} out of range for month {month}"),
            ));
        }
        if hour > 23 {
            return Err(Error::parse("hour", format!("{hour} out of range")));
        }
        if minute > 59 {
            return Err(Error::parse("minute", format!("{minute} out of range")));
        }
        if second > 59 {
            return Err(Error::parse("second", format!("{second} out of range")));
        }
        Ok(Self::from_civil(year, month, day, hour, minute))
    }

    fn civil(self) -> (i32, u32, u32, u32, u32) {
        let days = self.0.div_euclid(1440);
        let minute_of_day = self.0.rem_euclid(1440);
        let (y, m, d) = civil_from_days(days);
        (
            y,
            m,
            d,
            (minute_of_day / 60) as u32,
            (minute_of_day % 60) as u32,
        )
    }

    /// ISO form with the seconds pinned to `:00`, as written to dataset CSVs.
    pub fn to_iso(self) -> String {
        let (y, m, d, h, min) = self.civil();
        format!("{y:04}-{m:02}-{d:02}T{h:02}:{min:02}:00Z")
    }

    /// `asctime`-style form.
    pub fn to_asctime(self) -> String {
        let (y, m, d, h, min) = self.civil();
        // epoch day 0 (1970-01-01) was a Thursday; WEEKDAYS is Monday-first
        let weekday = WEEKDAYS[(self.0.div_euclid(1440) + 3).rem_euclid(7) as usize];
        format!(
            "{weekday} {} {d:2} {h:02}:{min:02}:00 {y}",
            MONTHS[(m - 1) as usize]
        )
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso())
    }
}

fn field_u32(token: Option<&str>, field: &str) -> Result<u32> {
    let token = token.ok_or_else(|| Error::parse(field, "missing"))?;
    token
        .parse()
        .map_err(|_| Error::parse(field, format!("not a number: {token:?}")))
}

fn field_i32(token: Option<&str>, field: &str) -> Result<i32> {
    let token = token.ok_or_else(|| Error::parse(field, "missing"))?;
    token
        .parse()
        .map_err(|_| Error::parse(field, format!("not a number: {token:?}")))
}

fn is_leap(year: i32) -> bool {
    year % 4 == 0 && (year % 100 != 0 || year % 400 == 0)
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

/// Days since 1970-01-01 for a proleptic Gregorian civil date.
fn days_from_civil(year: i32, month: u32, day: u32) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = i64::from(if month > 2 { month - 3 } else { month + 9 });
    let doy = (153 * mp + 2) / 5 + i64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

fn civil_from_days(days: i64) -> (i32, u32, u32) {
    let z = days + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = z - era * 146097;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = (if mp < 10 { mp + 3 } else { mp - 9 }) as u32;
    ((y + i64::from(m <= 2)) as i32, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_asctime_to_expected_minute() {
        // chrono oracle: 2021-04-16 10:19 UTC
        let expected = chrono::NaiveDate::from_ymd_opt(2021, 4, 16)
            .unwrap()
            .and_hms_opt(10, 19, 0)
            .unwrap()
            .and_utc()
            .timestamp()
            / 60;
        let ts = Timestamp::parse("Fri Apr 16 10:19:00 2021").unwrap();
        assert_eq!(ts.epoch_minute(), expected);
    }

    #[test]
    fn iso_and_asctime_agree() {
        let a = Timestamp::parse("Fri Apr 16 10:19:00 2021").unwrap();
        let b = Timestamp::parse("2021-04-16T10:19:00Z").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seconds_are_truncated() {
        let a = Timestamp::parse("2021-04-16T10:19:37Z").unwrap();
        let b = Timestamp::parse("2021-04-16T10:19:00Z").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_text_is_rejected_with_field() {
        let err = Timestamp::parse("April the 16th").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        let err = Timestamp::parse("2021-13-01T00:00:00Z").unwrap_err();
        match err {
            Error::Parse { field, .. } => assert_eq!(field, "month"),
            other => panic!("unexpected error {other}"),
        }
        let err = Timestamp::parse("Fri Apr 16 10:61:00 2021").unwrap_err();
        match err {
            Error::Parse { field, .. } => assert_eq!(field, "minute"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn asctime_single_digit_day_is_space_padded() {
        let ts = Timestamp::parse("Tue Apr  6 08:05:00 2021").unwrap();
        assert_eq!(ts.to_iso(), "2021-04-06T08:05:00Z");
        assert_eq!(ts.to_asctime(), "Tue Apr  6 08:05:00 2021");
    }

    proptest! {
        #[test]
        fn roundtrips_and_matches_chrono(minute in -20_000_000i64..40_000_000i64) {
            let ts = Timestamp::from_epoch_minute(minute);
            let iso = ts.to_iso();
            prop_assert_eq!(Timestamp::parse(&iso).unwrap(), ts);
            prop_assert_eq!(Timestamp::parse(&ts.to_asctime()).unwrap(), ts);

            let oracle = chrono::DateTime::from_timestamp(minute * 60, 0).unwrap();
            prop_assert_eq!(iso, oracle.format("%Y-%m-%dT%H:%M:00Z").to_string());
        }

        #[test]
        fn ordering_is_integer_ordering(a in -1_000_000i64..1_000_000, b in -1_000_000i64..1_000_000) {
            let (ta, tb) = (Timestamp::from_epoch_minute(a), Timestamp::from_epoch_minute(b));
            prop_assert_eq!(ta.cmp(&tb), a.cmp(&b));
        }
    }
}

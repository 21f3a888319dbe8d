//! Calendar dates with month-step arithmetic.
//!
//! The protocol works on a quarterly grid (the fifteenth of the second month
//! of each quarter), so all date arithmetic here is month-based: adding months
//! carries years and keeps the day of month, clamping to the target month's
//! length only when the source day does not exist there.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DateError {
    #[error("invalid calendar date {year:04}-{month:02}-{day:02}")]
    Invalid { year: i32, month: u32, day: u32 },
    #[error("cannot parse `{0}` as a date")]
    Parse(String),
}

pub const MONTH_NAMES: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// A Gregorian calendar date. Ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DateStamp {
    year: i32,
    month: u8,
    day: u8,
}

impl DateStamp {
    pub fn new(year: i32, month: u32, day: u32) -> Result<Self, DateError> {
        if !(1..=12).contains(&month)
            || day == 0
            || day > u32::from(days_in_month(year, month as u8))
        {
            return Err(DateError::Invalid { year, month, day });
        }
        Ok(DateStamp {
            year,
            month: month as u8,
            day: day as u8,
        })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    pub fn day(&self) -> u8 {
        self.day
    }

    /// Calendar quarter of this date, 1 through 4.
    pub fn quarter(&self) -> u8 {
        (self.month - 1) / 3 + 1
    }

    /// True on the protocol grid: day 15 of the second month of a quarter.
    pub fn is_grid_date(&self) -> bool {
        self.day == 15 && matches!(self.month, 2 | 5 | 8 | 11)
    }

    /// Shifts by whole months, keeping the day of month (clamped to the
    /// target month length when needed; never triggered on the grid).
    pub fn add_months(&self, months: i32) -> DateStamp {
        let total = self.year * 12 + i32::from(self.month) - 1 + months;
        let year = total.div_euclid(12);
        let month = (total.rem_euclid(12) + 1) as u8;
        let day = self.day.min(days_in_month(year, month));
        DateStamp { year, month, day }
    }

    /// Whole months from `self` to `other`, ignoring days.
    pub fn months_until(&self, other: &DateStamp) -> i32 {
        (other.year - self.year) * 12 + i32::from(other.month) - i32::from(self.month)
    }

    /// Year and month of the calendar month immediately before this date's.
    pub fn preceding_month(&self) -> (i32, u8) {
        if self.month == 1 {
            (self.year - 1, 12)
        } else {
            (self.year, self.month - 1)
        }
    }

    /// Year and quarter of the calendar quarter immediately before this date's.
    pub fn preceding_quarter(&self) -> (i32, u8) {
        if self.quarter() == 1 {
            (self.year - 1, 4)
        } else {
            (self.year, self.quarter() - 1)
        }
    }

    pub fn month_name(&self) -> &'static str {
        MONTH_NAMES[usize::from(self.month) - 1]
    }

    /// Renders as prompts spell dates: "May 15, 2005".
    pub fn long_format(&self) -> String {
        format!("{} {}, {}", self.month_name(), self.day, self.year)
    }

    /// Parses the long prompt form, e.g. "May 15, 2005".
    pub fn parse_long(s: &str) -> Result<Self, DateError> {
        let err = || DateError::Parse(s.to_string());
        let (name, rest) = s.split_once(' ').ok_or_else(err)?;
        let month = MONTH_NAMES
            .iter()
            .position(|m| *m == name)
            .ok_or_else(err)? as u32
            + 1;
        let (day, year) = rest.split_once(", ").ok_or_else(err)?;
        DateStamp::new(
            year.trim().parse().map_err(|_| err())?,
            month,
            day.trim().parse().map_err(|_| err())?,
        )
    }

    /// Parses ISO `YYYY-MM-DD`.
    pub fn parse_iso(s: &str) -> Result<Self, DateError> {
        let err = || DateError::Parse(s.to_string());
        let mut parts = s.splitn(3, '-');
        let year = parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
        let month = parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
        let day = parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
        DateStamp::new(year, month, day)
    }
}

impl fmt::Display for DateStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl Serialize for DateStamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DateStamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        DateStamp::parse_iso(&s).map_err(serde::de::Error::custom)
    }
}

/// Last day of the given month.
pub fn month_end(year: i32, month: u8) -> DateStamp {
    DateStamp {
        year,
        month,
        day: days_in_month(year, month),
    }
}

fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(year) => 29,
        2 => 28,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> DateStamp {
        DateStamp::parse_iso(s).unwrap()
    }

    #[test]
    fn rejects_invalid_dates() {
        assert!(DateStamp::new(2005, 2, 29).is_err());
        assert!(DateStamp::new(2004, 2, 29).is_ok());
        assert!(DateStamp::new(2005, 13, 1).is_err());
        assert!(DateStamp::new(2005, 0, 1).is_err());
        assert!(DateStamp::new(2005, 6, 31).is_err());
    }

    #[test]
    fn month_arithmetic_carries_years() {
        assert_eq!(d("2005-05-15").add_months(12), d("2006-05-15"));
        assert_eq!(d("2005-05-15").add_months(-36), d("2002-05-15"));
        assert_eq!(d("2005-11-15").add_months(3), d("2006-02-15"));
        assert_eq!(d("2030-02-15").add_months(12), d("2031-02-15"));
    }

    #[test]
    fn months_until_matches_add_months() {
        let a = d("2005-05-15");
        assert_eq!(a.months_until(&d("2006-05-15")), 12);
        assert_eq!(a.months_until(&d("2002-05-15")), -36);
    }

    #[test]
    fn preceding_periods_cross_year_boundaries() {
        assert_eq!(d("2030-02-15").preceding_month(), (2030, 1));
        assert_eq!(d("2030-01-15").preceding_month(), (2029, 12));
        assert_eq!(d("2030-02-15").preceding_quarter(), (2029, 4));
        assert_eq!(d("2005-05-15").preceding_quarter(), (2005, 1));
    }

    #[test]
    fn long_format_round_trips() {
        let a = d("2005-05-15");
        assert_eq!(a.long_format(), "May 15, 2005");
        assert_eq!(DateStamp::parse_long("May 15, 2005").unwrap(), a);
        assert_eq!(DateStamp::parse_long("January 1, 2030").unwrap(), d("2030-01-01"));
        assert!(DateStamp::parse_long("Smarch 15, 2005").is_err());
    }

    #[test]
    fn grid_membership() {
        assert!(d("2005-05-15").is_grid_date());
        assert!(d("2030-02-15").is_grid_date());
        assert!(!d("2005-05-14").is_grid_date());
        assert!(!d("2005-06-15").is_grid_date());
    }

    #[test]
    fn ordering_is_chronological() {
        assert!(d("2005-05-15") < d("2005-05-16"));
        assert!(d("2005-12-31") < d("2006-01-01"));
    }

    #[test]
    fn serde_round_trips_as_iso() {
        let a = d("2025-08-15");
        let j = serde_json::to_string(&a).unwrap();
        assert_eq!(j, "\"2025-08-15\"");
        assert_eq!(serde_json::from_str::<DateStamp>(&j).unwrap(), a);
    }

    #[test]
    fn day_clamps_only_when_target_month_is_shorter() {
        assert_eq!(d("2005-01-31").add_months(1), d("2005-02-28"));
        assert_eq!(d("2005-01-15").add_months(1), d("2005-02-15"));
    }
}

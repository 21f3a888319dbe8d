//! Real-time vintage ingestion and snapshot assembly.
//!
//! The harness itself must not look ahead: a snapshot for date `t` may only
//! use observations whose first release was available on or before `t`.
//! Series are first releases keyed by reference period plus an explicit
//! availability date; the policy rate is a step series known the day it
//! changes.

use crate::date::{DateError, DateStamp};
use crate::prompt::VariableKind;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: duplicate reference period {period}")]
    DuplicatePeriod { path: String, period: String },
    #[error("{path}: observations are not sorted by reference period at {period}")]
    Unsorted { path: String, period: String },
    #[error("{path}: series is empty")]
    EmptySeries { path: String },
    #[error("no {variable} data released on or before {date}")]
    NoDataAvailable {
        variable: VariableKind,
        date: DateStamp,
    },
    #[error("{0} is not on the quarterly grid (day 15, month 2/5/8/11)")]
    OffGrid(DateStamp),
    #[error("grid start {start} is after grid end {end}")]
    InvalidRange { start: DateStamp, end: DateStamp },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Date(#[from] DateError),
}

/// Reference period of one first-release observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RefPeriod {
    /// Year and calendar month (CPI).
    Month { year: i32, month: u8 },
    /// Year and calendar quarter (GDP).
    Quarter { year: i32, quarter: u8 },
    /// A point-in-time level known the same day (policy rate).
    Instant(DateStamp),
}

impl RefPeriod {
    /// Last calendar day of the period.
    fn end(&self) -> DateStamp {
        match *self {
            RefPeriod::Month { year, month } => crate::date::month_end(year, month),
            RefPeriod::Quarter { year, quarter } => crate::date::month_end(year, quarter * 3),
            RefPeriod::Instant(d) => d,
        }
    }

    fn label(&self) -> String {
        match *self {
            RefPeriod::Month { year, month } => format!("{year}-{month:02}"),
            RefPeriod::Quarter { year, quarter } => format!("{year}-Q{quarter}"),
            RefPeriod::Instant(d) => d.to_string(),
        }
    }
}

/// One first-release observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub period: RefPeriod,
    pub value: f64,
    pub available_from: DateStamp,
}

/// A validated first-release series for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VintageSeries {
    variable: VariableKind,
    observations: Vec<Observation>,
    /// True when any availability date was filled by the approximate
    /// "period end + 45 days" fallback rather than given in the file.
    approximate_availability: bool,
}

impl VintageSeries {
    pub fn new(
        variable: VariableKind,
        observations: Vec<Observation>,
        approximate_availability: bool,
    ) -> Result<Self, DataError> {
        let path = format!("<{variable}>");
        Self::validate(&path, &observations)?;
        Ok(VintageSeries {
            variable,
            observations,
            approximate_availability,
        })
    }

    fn validate(path: &str, observations: &[Observation]) -> Result<(), DataError> {
        if observations.is_empty() {
            return Err(DataError::EmptySeries {
                path: path.to_string(),
            });
        }
        for pair in observations.windows(2) {
            if pair[1].period == pair[0].period {
                return Err(DataError::DuplicatePeriod {
                    path: path.to_string(),
                    period: pair[1].period.label(),
                });
            }
            if pair[1].period < pair[0].period {
                return Err(DataError::Unsorted {
                    path: path.to_string(),
                    period: pair[1].period.label(),
                });
            }
        }
        for obs in observations {
            let ok = match obs.period {
                RefPeriod::Instant(d) => obs.available_from == d,
                period => obs.available_from > period.end(),
            };
            if !ok {
                return Err(DataError::Parse {
                    path: path.to_string(),
                    line: 0,
                    message: format!(
                        "release date {} does not follow period {}",
                        obs.available_from,
                        obs.period.label()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn variable(&self) -> VariableKind {
        self.variable
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn is_approximate(&self) -> bool {
        self.approximate_availability
    }

    /// Latest-reference-period observation released on or before `date`.
    fn latest_at(&self, date: DateStamp) -> Result<&Observation, DataError> {
        self.observations
            .iter()
            .filter(|o| o.available_from <= date)
            .max_by_key(|o| o.period)
            .ok_or(DataError::NoDataAvailable {
                variable: self.variable,
                date,
            })
    }
}

/// The statistics block of one prompt: the latest first releases available
/// at the owning current date, with their period labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroSnapshot {
    pub rate_lower_bound: f64,
    pub gdp_yoy: f64,
    pub gdp_quarter: u8,
    pub gdp_year: i32,
    pub cpi_yoy: f64,
    pub cpi_month: u8,
    pub cpi_year: i32,
}

impl MacroSnapshot {
    /// Same statistics values, relabeled to the quarter/month immediately
    /// preceding `t_current`. Used when dates are shifted under fixed data.
    pub fn relabel_for(&self, t_current: DateStamp) -> MacroSnapshot {
        let (gdp_year, gdp_quarter) = t_current.preceding_quarter();
        let (cpi_year, cpi_month) = t_current.preceding_month();
        MacroSnapshot {
            gdp_year,
            gdp_quarter,
            cpi_year,
            cpi_month,
            ..*self
        }
    }

    pub fn value_for(&self, variable: VariableKind) -> f64 {
        match variable {
            VariableKind::FedRateLowerBound => self.rate_lower_bound,
            VariableKind::CpiYoY => self.cpi_yoy,
            VariableKind::GdpYoY => self.gdp_yoy,
        }
    }
}

/// All three vintage series, immutable after loading.
#[derive(Debug, Clone)]
pub struct VintageStore {
    pub rate: VintageSeries,
    pub cpi: VintageSeries,
    pub gdp: VintageSeries,
}

impl VintageStore {
    /// Loads `<dir>/{rate,cpi,gdp}.csv`.
    pub fn load_dir(dir: &Path) -> Result<VintageStore, DataError> {
        Ok(VintageStore {
            rate: load_series(&dir.join("rate.csv"), VariableKind::FedRateLowerBound)?,
            cpi: load_series(&dir.join("cpi.csv"), VariableKind::CpiYoY)?,
            gdp: load_series(&dir.join("gdp.csv"), VariableKind::GdpYoY)?,
        })
    }
}

/// Approximate availability fallback when a CSV row leaves the column empty.
const FALLBACK_RELEASE_LAG_DAYS: u32 = 45;

/// Reads one first-release CSV. Schemas:
/// rate: `available_from,value`; cpi: `ref_year,ref_month,value,available_from`;
/// gdp: `ref_year,ref_quarter,value,available_from`.
pub fn load_series(path: &Path, variable: VariableKind) -> Result<VintageSeries, DataError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut observations = Vec::new();
    let mut approximate = false;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = idx as u64 + 2; // header is line 1
        let parse_err = |message: String| DataError::Parse {
            path: path_str.clone(),
            line,
            message,
        };
        let field = |i: usize| -> Result<&str, DataError> {
            record
                .get(i)
                .ok_or_else(|| parse_err(format!("missing column {i}")))
        };
        let obs = match variable {
            VariableKind::FedRateLowerBound => {
                let available_from = DateStamp::parse_iso(field(0)?)
                    .map_err(|e| parse_err(e.to_string()))?;
                let value: f64 = field(1)?
                    .parse()
                    .map_err(|_| parse_err(format!("bad value `{}`", field(1).unwrap())))?;
                Observation {
                    period: RefPeriod::Instant(available_from),
                    value,
                    available_from,
                }
            }
            VariableKind::CpiYoY | VariableKind::GdpYoY => {
                let year: i32 = field(0)?
                    .parse()
                    .map_err(|_| parse_err(format!("bad year `{}`", field(0).unwrap())))?;
                let sub: u8 = field(1)?
                    .parse()
                    .map_err(|_| parse_err(format!("bad period `{}`", field(1).unwrap())))?;
                let period = match variable {
                    VariableKind::CpiYoY if (1..=12).contains(&sub) => {
                        RefPeriod::Month { year, month: sub }
                    }
                    VariableKind::GdpYoY if (1..=4).contains(&sub) => {
                        RefPeriod::Quarter { year, quarter: sub }
                    }
                    _ => return Err(parse_err(format!("period {sub} out of range"))),
                };
                let value: f64 = field(2)?
                    .parse()
                    .map_err(|_| parse_err(format!("bad value `{}`", field(2).unwrap())))?;
                let avail_field = record.get(3).unwrap_or("");
                let available_from = if avail_field.is_empty() {
                    approximate = true;
                    add_days(period.end(), FALLBACK_RELEASE_LAG_DAYS)
                } else {
                    DateStamp::parse_iso(avail_field).map_err(|e| parse_err(e.to_string()))?
                };
                Observation {
                    period,
                    value,
                    available_from,
                }
            }
        };
        if !obs.value.is_finite() {
            return Err(parse_err("value is not finite".to_string()));
        }
        observations.push(obs);
    }
    if observations.is_empty() {
        return Err(DataError::EmptySeries { path: path_str });
    }
    VintageSeries::validate(&path_str, &observations)?;
    Ok(VintageSeries {
        variable,
        observations,
        approximate_availability: approximate,
    })
}

fn add_days(date: DateStamp, days: u32) -> DateStamp {
    let mut d = date;
    for _ in 0..days {
        let next_day = u32::from(d.day()) + 1;
        d = match DateStamp::new(d.year(), u32::from(d.month()), next_day) {
            Ok(n) => n,
            Err(_) => {
                let first = DateStamp::new(d.year(), u32::from(d.month()), 1).unwrap();
                first.add_months(1)
            }
        };
    }
    d
}

/// Assembles the statistics block available at `date`: for each series, the
/// observation with the latest reference period among those already released.
pub fn snapshot_at(date: DateStamp, store: &VintageStore) -> Result<MacroSnapshot, DataError> {
    let rate = store.rate.latest_at(date)?;
    let cpi = store.cpi.latest_at(date)?;
    let gdp = store.gdp.latest_at(date)?;
    let (cpi_year, cpi_month) = match cpi.period {
        RefPeriod::Month { year, month } => (year, month),
        _ => unreachable!("cpi series is monthly"),
    };
    let (gdp_year, gdp_quarter) = match gdp.period {
        RefPeriod::Quarter { year, quarter } => (year, quarter),
        _ => unreachable!("gdp series is quarterly"),
    };
    Ok(MacroSnapshot {
        rate_lower_bound: rate.value,
        gdp_yoy: gdp.value,
        gdp_quarter,
        gdp_year,
        cpi_yoy: cpi.value,
        cpi_month,
        cpi_year,
    })
}

/// All protocol grid dates from `start` to `end` inclusive, spaced 3 months.
pub fn quarterly_grid(start: DateStamp, end: DateStamp) -> Result<Vec<DateStamp>, DataError> {
    if !start.is_grid_date() {
        return Err(DataError::OffGrid(start));
    }
    if !end.is_grid_date() {
        return Err(DataError::OffGrid(end));
    }
    if start > end {
        return Err(DataError::InvalidRange { start, end });
    }
    let mut dates = Vec::new();
    let mut d = start;
    while d <= end {
        dates.push(d);
        d = d.add_months(3);
    }
    Ok(dates)
}

//! Answer extraction from raw model responses.
//!
//! A response is an explanation followed by a marker line such as
//! `Interest rate forecast: 2.5%`. Only marker lines are inspected; numbers
//! appearing anywhere else in the explanation are ignored. Extraction is
//! total: every input yields either a numeric value or a refusal.

use crate::prompt::VariableKind;
use serde::{Deserialize, Serialize};

/// Why a response carries no usable number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefusalKind {
    /// A marker line is present but its payload is not a number (e.g. "N/A").
    ExplicitNA,
    /// No line contains the variable's marker at all.
    NoMarker,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Numeric(f64),
    Refusal(RefusalKind),
}

/// One parsed response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSample {
    pub raw_text: String,
    pub outcome: Outcome,
}

/// The parsed distribution for one prompt condition: numeric values in
/// sampling order plus the number of refusals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForecastDistribution {
    pub values: Vec<f64>,
    pub refusals: usize,
}

impl ForecastDistribution {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a ForecastSample>) -> Self {
        let mut dist = ForecastDistribution::default();
        for s in samples {
            match s.outcome {
                Outcome::Numeric(v) => dist.values.push(v),
                Outcome::Refusal(_) => dist.refusals += 1,
            }
        }
        dist
    }

    /// Total number of parsed responses behind this distribution.
    pub fn count(&self) -> usize {
        self.values.len() + self.refusals
    }

    pub fn mean(&self) -> Option<f64> {
        if self.values.is_empty() {
            None
        } else {
            Some(self.values.iter().sum::<f64>() / self.values.len() as f64)
        }
    }
}

/// Extracts the answer for `variable` from `raw_text`.
///
/// Scans for lines containing the variable's marker, takes the last one, and
/// parses a signed decimal immediately after the marker's colon. Tolerates
/// surrounding whitespace, a trailing `%`, markup emphasis characters, and
/// typographic minus signs. A non-numeric payload (such as "N/A", any case)
/// is an explicit refusal; a missing marker line is a refusal of its own kind.
pub fn extract_forecast(raw_text: &str, variable: VariableKind) -> ForecastSample {
    let marker = variable.marker();
    let outcome = match raw_text.lines().filter(|l| l.contains(marker)).next_back() {
        None => Outcome::Refusal(RefusalKind::NoMarker),
        Some(line) => {
            // value begins after the last occurrence of the marker in the line
            let at = line.rfind(marker).expect("line was filtered on marker") + marker.len();
            match parse_payload(&line[at..]) {
                Some(v) => Outcome::Numeric(v),
                None => Outcome::Refusal(RefusalKind::ExplicitNA),
            }
        }
    };
    ForecastSample {
        raw_text: raw_text.to_string(),
        outcome,
    }
}

/// Parses the text after the marker colon into a number, or None for
/// refusal-like payloads.
fn parse_payload(payload: &str) -> Option<f64> {
    let cleaned: String = payload
        .chars()
        .map(|c| match c {
            // typographic minus and dashes used as a minus sign
            '\u{2212}' | '\u{2013}' | '\u{2014}' => '-',
            other => other,
        })
        .filter(|c| !matches!(c, '*' | '_' | '`' | '[' | ']'))
        .collect();
    let bytes = cleaned.trim().as_bytes();
    let mut number = String::new();
    let mut i = 0;
    if let Some(b'+' | b'-') = bytes.first() {
        if bytes[0] == b'-' {
            number.push('-');
        }
        i = 1;
    }
    let mut seen_digit = false;
    let mut seen_dot = false;
    while i < bytes.len() {
        match bytes[i] {
            d @ b'0'..=b'9' => {
                seen_digit = true;
                number.push(char::from(d));
            }
            b'.' if seen_digit && !seen_dot => {
                seen_dot = true;
                number.push('.');
            }
            _ => break,
        }
        i += 1;
    }
    if !seen_digit {
        return None;
    }
    let value: f64 = number.trim_end_matches('.').parse().ok()?;
    value.is_finite().then_some(value)
}

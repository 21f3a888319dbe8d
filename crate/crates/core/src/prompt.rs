//! Prompt construction: templates, component tuples, and the real/fake/seasonal
//! date transformations.
//!
//! A prompt is fully determined by a [`PromptComponents`] value: the linking
//! template, the three dates (current, forecast, cutoff), the forecast
//! variable, and the statistics block. Rendering is deterministic, so prompt
//! texts can be compared byte for byte.

use crate::data::MacroSnapshot;
use crate::date::DateStamp;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid prompt components: {0}")]
    InvalidComponents(String),
    #[error("template set `{set}` has no template for variable `{variable}`")]
    MissingTemplate { set: String, variable: VariableKind },
    #[error("fake date {fake} precedes the real current date {real}")]
    FakeBeforeReal { fake: DateStamp, real: DateStamp },
    #[error("template `{name}`: {problem}")]
    BadTemplate { name: String, problem: String },
    #[error("failed to read template asset: {0}")]
    Io(#[from] std::io::Error),
}

/// The macroeconomic variable a prompt asks to forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VariableKind {
    #[serde(rename = "rate")]
    FedRateLowerBound,
    #[serde(rename = "cpi")]
    CpiYoY,
    #[serde(rename = "gdp")]
    GdpYoY,
}

impl VariableKind {
    pub const ALL: [VariableKind; 3] = [
        VariableKind::FedRateLowerBound,
        VariableKind::CpiYoY,
        VariableKind::GdpYoY,
    ];

    /// The answer-line marker the template instructs the model to emit.
    pub fn marker(&self) -> &'static str {
        match self {
            VariableKind::FedRateLowerBound => "Interest rate forecast:",
            VariableKind::CpiYoY => "Inflation forecast:",
            VariableKind::GdpYoY => "GDP growth forecast:",
        }
    }

    /// Short token used in file names, CSV headers and CLI flags.
    pub fn token(&self) -> &'static str {
        match self {
            VariableKind::FedRateLowerBound => "rate",
            VariableKind::CpiYoY => "cpi",
            VariableKind::GdpYoY => "gdp",
        }
    }

    pub fn from_token(s: &str) -> Option<VariableKind> {
        match s {
            "rate" => Some(VariableKind::FedRateLowerBound),
            "cpi" => Some(VariableKind::CpiYoY),
            "gdp" => Some(VariableKind::GdpYoY),
            _ => None,
        }
    }
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Placeholders every template must contain exactly once.
pub const PLACEHOLDERS: [&str; 10] = [
    "{date_cutoff}",
    "{date}",
    "{rate}",
    "{GDP_value_period}",
    "{GDP_value_year}",
    "{GDP}",
    "{CPI_value_period}",
    "{CPI_value_year}",
    "{CPI}",
    "{date_forecast}",
];

/// One linking template per forecast variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    id: String,
    texts: BTreeMap<VariableKind, String>,
}

impl TemplateSet {
    /// The bundled templates (see `assets/templates/`).
    pub fn builtin() -> TemplateSet {
        let mut texts = BTreeMap::new();
        texts.insert(
            VariableKind::FedRateLowerBound,
            trim_trailing_newline(include_str!("../assets/templates/rate.txt")).to_string(),
        );
        texts.insert(
            VariableKind::CpiYoY,
            trim_trailing_newline(include_str!("../assets/templates/cpi.txt")).to_string(),
        );
        texts.insert(
            VariableKind::GdpYoY,
            trim_trailing_newline(include_str!("../assets/templates/gdp.txt")).to_string(),
        );
        let set = TemplateSet {
            id: "builtin".to_string(),
            texts,
        };
        set.validate().expect("bundled templates are well-formed");
        set
    }

    /// Loads `<dir>/{rate,cpi,gdp}.txt`. A single trailing newline is trimmed
    /// so that editors appending one do not change rendered bytes.
    pub fn from_dir(dir: &Path, id: &str) -> Result<TemplateSet, PromptError> {
        let mut texts = BTreeMap::new();
        for variable in VariableKind::ALL {
            let path = dir.join(format!("{}.txt", variable.token()));
            let raw = std::fs::read_to_string(&path)?;
            texts.insert(variable, trim_trailing_newline(&raw).to_string());
        }
        let set = TemplateSet {
            id: id.to_string(),
            texts,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self, variable: VariableKind) -> Option<&str> {
        self.texts.get(&variable).map(String::as_str)
    }

    fn validate(&self) -> Result<(), PromptError> {
        for (variable, text) in &self.texts {
            for ph in PLACEHOLDERS {
                let n = text.matches(ph).count();
                if n != 1 {
                    return Err(PromptError::BadTemplate {
                        name: format!("{}/{}", self.id, variable),
                        problem: format!("placeholder {ph} appears {n} times, expected 1"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// The tuple that fully determines one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptComponents {
    pub template: String,
    pub t_current: DateStamp,
    pub t_forecast: DateStamp,
    pub t_cutoff: DateStamp,
    pub variable: VariableKind,
    pub snapshot: MacroSnapshot,
}

impl PromptComponents {
    /// Checks the ordering invariant and that the statistics labels name the
    /// periods immediately preceding `t_current`.
    pub fn validate(&self) -> Result<(), PromptError> {
        if !(self.t_cutoff <= self.t_current && self.t_current < self.t_forecast) {
            return Err(PromptError::InvalidComponents(format!(
                "dates must satisfy cutoff <= current < forecast, got {} / {} / {}",
                self.t_cutoff, self.t_current, self.t_forecast
            )));
        }
        for v in [
            self.snapshot.rate_lower_bound,
            self.snapshot.gdp_yoy,
            self.snapshot.cpi_yoy,
        ] {
            if !v.is_finite() {
                return Err(PromptError::InvalidComponents(
                    "snapshot contains a non-finite value".to_string(),
                ));
            }
        }
        let (gy, gq) = self.t_current.preceding_quarter();
        if (self.snapshot.gdp_year, self.snapshot.gdp_quarter) != (gy, gq) {
            return Err(PromptError::InvalidComponents(format!(
                "GDP label Q{} {} is not the quarter preceding {}",
                self.snapshot.gdp_quarter, self.snapshot.gdp_year, self.t_current
            )));
        }
        let (cy, cm) = self.t_current.preceding_month();
        if (self.snapshot.cpi_year, self.snapshot.cpi_month) != (cy, cm) {
            return Err(PromptError::InvalidComponents(format!(
                "CPI label {}-{:02} is not the month preceding {}",
                self.snapshot.cpi_year, self.snapshot.cpi_month, self.t_current
            )));
        }
        Ok(())
    }
}

/// Percent rendering used in prompts: one decimal digit, half-up.
pub fn format_percent(v: f64) -> String {
    format!("{:.1}", (v * 10.0).round() / 10.0)
}

/// Substitutes the components into the template for `components.variable`.
/// Deterministic: equal inputs yield byte-identical texts.
pub fn render_prompt(
    components: &PromptComponents,
    templates: &TemplateSet,
) -> Result<String, PromptError> {
    components.validate()?;
    if components.template != templates.id {
        return Err(PromptError::MissingTemplate {
            set: templates.id.clone(),
            variable: components.variable,
        });
    }
    let text = templates
        .text(components.variable)
        .ok_or(PromptError::MissingTemplate {
            set: templates.id.clone(),
            variable: components.variable,
        })?;
    let snap = &components.snapshot;
    let cpi_month_name =
        crate::date::MONTH_NAMES[usize::from(snap.cpi_month) - 1];
    let out = text
        .replace("{date_cutoff}", &components.t_cutoff.long_format())
        .replace("{date_forecast}", &components.t_forecast.long_format())
        .replace("{date}", &components.t_current.long_format())
        .replace("{rate}", &format_percent(snap.rate_lower_bound))
        .replace("{GDP_value_period}", &snap.gdp_quarter.to_string())
        .replace("{GDP_value_year}", &snap.gdp_year.to_string())
        .replace("{GDP}", &format_percent(snap.gdp_yoy))
        .replace("{CPI_value_period}", cpi_month_name)
        .replace("{CPI_value_year}", &snap.cpi_year.to_string())
        .replace("{CPI}", &format_percent(snap.cpi_yoy));
    Ok(out)
}

/// Components for a retrospective forecast: current date `t_retro`, forecast
/// `h` months ahead, information cutoff `d` months back.
pub fn real_prompt(
    t_retro: DateStamp,
    h_months: u32,
    d_months: u32,
    variable: VariableKind,
    snapshot: MacroSnapshot,
    templates: &TemplateSet,
) -> Result<PromptComponents, PromptError> {
    if h_months == 0 {
        return Err(PromptError::InvalidComponents(
            "forecast horizon must be positive".to_string(),
        ));
    }
    let components = PromptComponents {
        template: templates.id.clone(),
        t_current: t_retro,
        t_forecast: t_retro.add_months(h_months as i32),
        t_cutoff: t_retro.add_months(-(d_months as i32)),
        variable,
        snapshot,
    };
    components.validate()?;
    Ok(components)
}

/// Shifts the current and forecast dates of `real` in parallel to `t_fake`,
/// keeping the cutoff and all statistics values. Period labels are relabeled
/// to the quarter/month immediately preceding the fake date.
pub fn fake_prompt(
    real: &PromptComponents,
    t_fake: DateStamp,
) -> Result<PromptComponents, PromptError> {
    if t_fake < real.t_current {
        return Err(PromptError::FakeBeforeReal {
            fake: t_fake,
            real: real.t_current,
        });
    }
    let horizon = real.t_current.months_until(&real.t_forecast);
    let components = PromptComponents {
        template: real.template.clone(),
        t_current: t_fake,
        t_forecast: t_fake.add_months(horizon),
        t_cutoff: real.t_cutoff,
        variable: real.variable,
        snapshot: real.snapshot.relabel_for(t_fake),
    };
    components.validate()?;
    Ok(components)
}

/// The seasonal variant of the fake date: same day and month as `t_retro`,
/// year replaced by `fake_year`.
pub fn seasonal_fake_date(t_retro: DateStamp, fake_year: i32) -> DateStamp {
    debug_assert!(fake_year >= t_retro.year());
    DateStamp::new(fake_year, u32::from(t_retro.month()), u32::from(t_retro.day()))
        .expect("same month and day stay valid on the protocol grid")
}

fn trim_trailing_newline(s: &str) -> &str {
    s.strip_suffix("\r\n").or_else(|| s.strip_suffix('\n')).unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MacroSnapshot;

    fn d(s: &str) -> DateStamp {
        DateStamp::parse_iso(s).unwrap()
    }

    /// Statistics block shown in the bundled rate example: rate 3.0, GDP Q1
    /// 2005 = 3.6, CPI April 2005 = 3.5.
    pub(crate) fn snapshot_2005() -> MacroSnapshot {
        MacroSnapshot {
            rate_lower_bound: 3.0,
            gdp_yoy: 3.6,
            gdp_quarter: 1,
            gdp_year: 2005,
            cpi_yoy: 3.5,
            cpi_month: 4,
            cpi_year: 2005,
        }
    }

    fn components_2005(variable: VariableKind) -> PromptComponents {
        real_prompt(
            d("2005-05-15"),
            12,
            36,
            variable,
            snapshot_2005(),
            &TemplateSet::builtin(),
        )
        .unwrap()
    }

    #[test]
    fn real_prompt_shifts_cutoff_back_and_forecast_forward() {
        let c = components_2005(VariableKind::FedRateLowerBound);
        assert_eq!(c.t_cutoff, d("2002-05-15"));
        assert_eq!(c.t_forecast, d("2006-05-15"));
        assert_eq!(c.t_current.months_until(&c.t_forecast), 12);
    }

    #[test]
    fn zero_depth_puts_cutoff_on_the_current_date() {
        let c = real_prompt(
            d("2005-05-15"),
            12,
            0,
            VariableKind::FedRateLowerBound,
            snapshot_2005(),
            &TemplateSet::builtin(),
        )
        .unwrap();
        assert_eq!(c.t_cutoff, d("2005-05-15"));
    }

    #[test]
    fn render_is_deterministic() {
        let templates = TemplateSet::builtin();
        let c = components_2005(VariableKind::FedRateLowerBound);
        assert_eq!(
            render_prompt(&c, &templates).unwrap(),
            render_prompt(&c, &templates).unwrap()
        );
    }

    #[test]
    fn gdp_variant_uses_gdp_marker() {
        let templates = TemplateSet::builtin();
        let c = components_2005(VariableKind::GdpYoY);
        let text = render_prompt(&c, &templates).unwrap();
        assert!(text.contains("GDP growth forecast: [your forecast]%"));
        assert!(text.contains("Forecast US YoY real GDP growth for May 15, 2006"));
    }

    #[test]
    fn fake_prompt_relabels_periods_and_keeps_cutoff() {
        let real = components_2005(VariableKind::FedRateLowerBound);
        let fake = fake_prompt(&real, d("2030-02-15")).unwrap();
        assert_eq!(fake.t_current, d("2030-02-15"));
        assert_eq!(fake.t_forecast, d("2031-02-15"));
        assert_eq!(fake.t_cutoff, d("2002-05-15"));
        assert_eq!((fake.snapshot.gdp_year, fake.snapshot.gdp_quarter), (2029, 4));
        assert_eq!((fake.snapshot.cpi_year, fake.snapshot.cpi_month), (2030, 1));
        assert_eq!(fake.snapshot.rate_lower_bound, real.snapshot.rate_lower_bound);
        assert_eq!(fake.snapshot.gdp_yoy, real.snapshot.gdp_yoy);
        assert_eq!(fake.snapshot.cpi_yoy, real.snapshot.cpi_yoy);
    }

    #[test]
    fn fake_prompt_at_the_real_date_is_identity() {
        let real = components_2005(VariableKind::CpiYoY);
        let fake = fake_prompt(&real, real.t_current).unwrap();
        assert_eq!(fake, real);
    }

    #[test]
    fn fake_prompt_rejects_earlier_dates() {
        let real = components_2005(VariableKind::FedRateLowerBound);
        assert!(matches!(
            fake_prompt(&real, d("2005-02-15")),
            Err(PromptError::FakeBeforeReal { .. })
        ));
    }

    #[test]
    fn seasonal_fake_date_keeps_month_and_day() {
        assert_eq!(seasonal_fake_date(d("2013-08-15"), 2030), d("2030-08-15"));
        assert_eq!(seasonal_fake_date(d("2008-11-15"), 2030), d("2030-11-15"));
        assert_eq!(seasonal_fake_date(d("2030-02-15"), 2030), d("2030-02-15"));
    }

    #[test]
    fn label_inconsistency_is_rejected() {
        let mut c = components_2005(VariableKind::FedRateLowerBound);
        c.snapshot.cpi_month = 3; // stale label
        assert!(matches!(
            render_prompt(&c, &TemplateSet::builtin()),
            Err(PromptError::InvalidComponents(_))
        ));
    }

    #[test]
    fn unknown_template_set_is_missing() {
        let mut c = components_2005(VariableKind::FedRateLowerBound);
        c.template = "other".to_string();
        assert!(matches!(
            render_prompt(&c, &TemplateSet::builtin()),
            Err(PromptError::MissingTemplate { .. })
        ));
    }

    #[test]
    fn percent_formatting_is_one_decimal_half_up() {
        assert_eq!(format_percent(3.0), "3.0");
        assert_eq!(format_percent(3.55), "3.6");
        assert_eq!(format_percent(2.25), "2.3");
        assert_eq!(format_percent(-0.8), "-0.8");
        assert_eq!(format_percent(12.2), "12.2");
    }

    #[test]
    fn rendered_dates_parse_back_out() {
        let templates = TemplateSet::builtin();
        let c = components_2005(VariableKind::FedRateLowerBound);
        let text = render_prompt(&c, &templates).unwrap();
        let cutoff = text.split("after ").nth(1).unwrap().split(" when").next().unwrap();
        let current = text.split("Today is ").nth(1).unwrap().split('.').next().unwrap();
        let forecast = text.split(" on ").nth(1).unwrap().split(" and explain").next().unwrap();
        assert_eq!(DateStamp::parse_long(cutoff).unwrap(), c.t_cutoff);
        assert_eq!(DateStamp::parse_long(current).unwrap(), c.t_current);
        assert_eq!(DateStamp::parse_long(forecast).unwrap(), c.t_forecast);
    }

    #[test]
    fn template_dir_round_trip_matches_builtin() {
        let dir = tempfile::tempdir().unwrap();
        let builtin = TemplateSet::builtin();
        for v in VariableKind::ALL {
            std::fs::write(
                dir.path().join(format!("{}.txt", v.token())),
                format!("{}\n", builtin.text(v).unwrap()),
            )
            .unwrap();
        }
        let loaded = TemplateSet::from_dir(dir.path(), "builtin").unwrap();
        assert_eq!(loaded, builtin);
    }

    #[test]
    fn duplicate_placeholder_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let builtin = TemplateSet::builtin();
        for v in VariableKind::ALL {
            let mut text = builtin.text(v).unwrap().to_string();
            if v == VariableKind::CpiYoY {
                text.push_str(" {date}");
            }
            std::fs::write(dir.path().join(format!("{}.txt", v.token())), text).unwrap();
        }
        assert!(matches!(
            TemplateSet::from_dir(dir.path(), "dup"),
            Err(PromptError::BadTemplate { .. })
        ));
    }
}

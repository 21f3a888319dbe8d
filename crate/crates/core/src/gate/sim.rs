//! The built-in simulated model.
//!
//! Used to validate the protocols: the unbiased mode draws forecasts that
//! depend only on the statistics in the prompt (never on its dates), which is
//! exactly the premise under which the fake date tests must pass. The biased
//! modes inject controlled violations so the tests have something to catch.

use super::GateError;
use crate::data::MacroSnapshot;
use crate::prompt::{format_percent, PromptComponents, VariableKind};
use crate::date::DateStamp;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Forecast = base rule + noise, independent of every date in the prompt.
    Unbiased,
    /// Adds `leak_shift` whenever the forecast target date falls inside the
    /// simulated model's knowledge horizon, i.e. the model "remembers" the
    /// outcome period.
    LookaheadBiased,
    /// Adds `leak_shift` on odd-numbered current years: a deterministic
    /// sensitivity to the stated forecast date itself.
    DateSensitive,
}

/// Mapping from the statistics block to the mean forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseRule {
    /// Forecast the variable at its latest reported value.
    Persistence,
    Constant(f64),
}

impl BaseRule {
    pub fn mean(&self, snapshot: &MacroSnapshot, variable: VariableKind) -> f64 {
        match *self {
            BaseRule::Persistence => snapshot.value_for(variable),
            BaseRule::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedGateSpec {
    pub mode: SimMode,
    pub base_rule: BaseRule,
    pub noise_sd: f64,
    pub leak_shift: f64,
    pub knowledge_horizon: DateStamp,
    pub refusal_rate: f64,
}

impl SimulatedGateSpec {
    pub fn unbiased(noise_sd: f64) -> SimulatedGateSpec {
        SimulatedGateSpec {
            mode: SimMode::Unbiased,
            base_rule: BaseRule::Persistence,
            noise_sd,
            leak_shift: 0.0,
            knowledge_horizon: DateStamp::new(2025, 8, 15).unwrap(),
            refusal_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GateError> {
        if !(self.noise_sd >= 0.0) {
            return Err(GateError::Config(format!(
                "noise_sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if !(0.0..=1.0).contains(&self.refusal_rate) {
            return Err(GateError::Config(format!(
                "refusal_rate must be in [0, 1], got {}",
                self.refusal_rate
            )));
        }
        Ok(())
    }
}

/// Produces one raw response text: an explanation paragraph plus the marker
/// line for `components.variable`.
///
/// The explanation mentions only the statistics values, never the prompt's
/// dates, so in unbiased mode two prompts differing only in dates yield
/// byte-identical output for the same rng state.
pub fn simulate_response(
    spec: &SimulatedGateSpec,
    components: &PromptComponents,
    rng: &mut impl Rng,
) -> String {
    let refuse = rng.gen::<f64>() < spec.refusal_rate;
    let noise = if spec.noise_sd > 0.0 {
        Normal::new(0.0, spec.noise_sd)
            .expect("validated noise_sd")
            .sample(rng)
    } else {
        0.0
    };
    let mut value = spec.base_rule.mean(&components.snapshot, components.variable) + noise;
    match spec.mode {
        SimMode::Unbiased => {}
        SimMode::LookaheadBiased => {
            if components.t_forecast <= spec.knowledge_horizon {
                value += spec.leak_shift;
            }
        }
        SimMode::DateSensitive => {
            if components.t_current.year() % 2 != 0 {
                value += spec.leak_shift;
            }
        }
    }
    let snap = &components.snapshot;
    let explanation = format!(
        "The statistics provided show a policy rate of {}%, real GDP growth of {}% (YoY) \
         and CPI inflation of {}% (YoY). Carrying the latest readings forward under the \
         stated information restriction gives the estimate below.",
        format_percent(snap.rate_lower_bound),
        format_percent(snap.gdp_yoy),
        format_percent(snap.cpi_yoy),
    );
    let marker = components.variable.marker();
    if refuse {
        format!("{explanation}\n\n{marker} N/A")
    } else {
        format!("{explanation}\n\n{marker} {value:.2}%")
    }
}

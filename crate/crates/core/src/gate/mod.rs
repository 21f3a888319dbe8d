//! The gate: the harness's single interface to forecast-text producers.
//!
//! Three backends sit behind one `complete` call: a live chat-completions
//! endpoint, a deterministic replay of a recorded session, and the simulated
//! model used for validation. Live responses are appended to the cache before
//! they are returned, so every live session can be replayed byte-exactly.

mod cache;
mod live;
mod sim;

pub use cache::{CacheRecord, CompletionCache, ReplayStore};
pub use live::LiveConfig;
pub use sim::{simulate_response, BaseRule, SimMode, SimulatedGateSpec};

use crate::prompt::{render_prompt, PromptComponents, PromptError, TemplateSet};
use crate::seeding;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GateError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("gate configuration error: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("replay cache has no record for key {key}")]
    ReplayMiss { key: String },
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("cache I/O failure: {0}")]
    Cache(std::io::Error),
    #[error("batch failed at sample indices {failing:?}: {message}")]
    Batch { failing: Vec<u32>, message: String },
}

/// One completion request as the cache sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct GateRequest {
    pub model_id: String,
    pub temperature: f64,
    pub prompt: String,
    pub sample_index: u32,
}

impl GateRequest {
    /// Content hash of (model, temperature, prompt, sample index). Two
    /// requests share a key exactly when all four fields match.
    pub fn cache_key(&self) -> String {
        let temp = self.temperature.to_bits().to_le_bytes();
        let digest = seeding::digest32(&[
            b"gate-request-v1",
            self.model_id.as_bytes(),
            &temp,
            self.prompt.as_bytes(),
            &self.sample_index.to_le_bytes(),
        ]);
        seeding::hex32(&digest)
    }
}

#[derive(Debug)]
enum BackendImpl {
    Simulated(SimulatedGateSpec),
    Replay(ReplayStore),
    Live(live::LiveClient),
}

/// A configured forecast-text producer.
#[derive(Debug)]
pub struct Gate {
    pub model_id: String,
    pub temperature: f64,
    master_seed: u64,
    backend: BackendImpl,
    cache: Option<CompletionCache>,
    max_in_flight: usize,
}

impl Gate {
    pub fn simulated(
        spec: SimulatedGateSpec,
        model_id: &str,
        temperature: f64,
        master_seed: u64,
    ) -> Result<Gate, GateError> {
        spec.validate()?;
        Ok(Gate {
            model_id: model_id.to_string(),
            temperature,
            master_seed,
            backend: BackendImpl::Simulated(spec),
            cache: None,
            max_in_flight: 1,
        })
    }

    pub fn replay(
        cache_path: &Path,
        model_id: &str,
        temperature: f64,
        master_seed: u64,
    ) -> Result<Gate, GateError> {
        Ok(Gate {
            model_id: model_id.to_string(),
            temperature,
            master_seed,
            backend: BackendImpl::Replay(ReplayStore::load(cache_path)?),
            cache: None,
            max_in_flight: 1,
        })
    }

    pub fn live(
        config: LiveConfig,
        model_id: &str,
        temperature: f64,
        master_seed: u64,
        max_in_flight: usize,
    ) -> Result<Gate, GateError> {
        Ok(Gate {
            model_id: model_id.to_string(),
            temperature,
            master_seed,
            backend: BackendImpl::Live(live::LiveClient::new(config)?),
            cache: None,
            max_in_flight: max_in_flight.max(1),
        })
    }

    /// Attaches an append cache; every completion is persisted through it.
    pub fn with_cache(mut self, path: &Path) -> Result<Gate, GateError> {
        self.cache = Some(CompletionCache::open_append(path)?);
        Ok(self)
    }

    pub fn is_live(&self) -> bool {
        matches!(self.backend, BackendImpl::Live(_))
    }

    /// Per-request random stream for the simulated backend. Derived from the
    /// master seed, model identity, temperature, the statistics values, the
    /// variable, and the sample index; never from the prompt's dates, so the
    /// unbiased mode is date-invariant sample by sample.
    fn sim_rng(&self, components: &PromptComponents, sample_index: u32) -> ChaCha12Rng {
        let snap = &components.snapshot;
        let seed = seeding::digest32(&[
            b"sim-stream-v1",
            &self.master_seed.to_le_bytes(),
            self.model_id.as_bytes(),
            &self.temperature.to_bits().to_le_bytes(),
            components.variable.token().as_bytes(),
            &snap.rate_lower_bound.to_bits().to_le_bytes(),
            &snap.gdp_yoy.to_bits().to_le_bytes(),
            &snap.cpi_yoy.to_bits().to_le_bytes(),
            &sample_index.to_le_bytes(),
        ]);
        ChaCha12Rng::from_seed(seed)
    }

    /// Produces one raw completion for the prompt built from `components`.
    pub fn complete(
        &self,
        components: &PromptComponents,
        prompt_text: &str,
        sample_index: u32,
    ) -> Result<String, GateError> {
        let request = GateRequest {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            prompt: prompt_text.to_string(),
            sample_index,
        };
        let (text, record) = match &self.backend {
            BackendImpl::Simulated(spec) => {
                let mut rng = self.sim_rng(components, sample_index);
                (simulate_response(spec, components, &mut rng), true)
            }
            BackendImpl::Replay(store) => {
                let key = request.cache_key();
                let text = store
                    .get(&key)
                    .ok_or(GateError::ReplayMiss { key })?
                    .to_string();
                (text, false)
            }
            BackendImpl::Live(client) => (client.complete(&request)?, true),
        };
        if record {
            if let Some(cache) = &self.cache {
                cache.append(&CacheRecord::for_request(&request, &text))?;
            }
        }
        Ok(text)
    }
}

/// Samples `n` completions for one prompt condition, ordered by sample index
/// regardless of completion order. Failures abort the batch and report every
/// failing index.
pub fn sample_forecasts(
    components: &PromptComponents,
    templates: &TemplateSet,
    n: u32,
    gate: &Gate,
) -> Result<Vec<String>, GateError> {
    let prompt = render_prompt(components, templates)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let workers = if gate.is_live() {
        gate.max_in_flight.min(n as usize)
    } else {
        1
    };
    let mut slots: Vec<Option<Result<String, GateError>>> = (0..n).map(|_| None).collect();
    if workers <= 1 {
        for (i, slot) in slots.iter_mut().enumerate() {
            *slot = Some(gate.complete(components, &prompt, i as u32));
        }
    } else {
        let results: Vec<(u32, Result<String, GateError>)> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..workers {
                let prompt = &prompt;
                let handle = scope.spawn(move || {
                    let mut out = Vec::new();
                    let mut i = w as u32;
                    while i < n {
                        out.push((i, gate.complete(components, prompt, i)));
                        i += workers as u32;
                    }
                    out
                });
                handles.push(handle);
            }
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("gate worker panicked"))
                .collect()
        });
        for (i, result) in results {
            slots[i as usize] = Some(result);
        }
    }
    let mut texts = Vec::with_capacity(n as usize);
    let mut failing = Vec::new();
    let mut message = String::new();
    for (i, slot) in slots.into_iter().enumerate() {
        match slot.expect("every index was attempted") {
            Ok(text) => texts.push(text),
            Err(e) => {
                if failing.is_empty() {
                    message = e.to_string();
                }
                failing.push(i as u32);
            }
        }
    }
    if failing.is_empty() {
        Ok(texts)
    } else {
        Err(GateError::Batch { failing, message })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MacroSnapshot;
    use crate::date::DateStamp;
    use crate::parse::{extract_forecast, Outcome};
    use crate::prompt::{fake_prompt, real_prompt, VariableKind};

    fn components(variable: VariableKind) -> PromptComponents {
        let snapshot = MacroSnapshot {
            rate_lower_bound: 1.0,
            gdp_yoy: 0.8,
            gdp_quarter: 3,
            gdp_year: 2008,
            cpi_yoy: 3.7,
            cpi_month: 10,
            cpi_year: 2008,
        };
        real_prompt(
            DateStamp::new(2008, 11, 15).unwrap(),
            12,
            36,
            variable,
            snapshot,
            &TemplateSet::builtin(),
        )
        .unwrap()
    }

    fn sim_gate(spec: SimulatedGateSpec, seed: u64) -> Gate {
        Gate::simulated(spec, "sim", 0.7, seed).unwrap()
    }

    fn parsed(texts: &[String], variable: VariableKind) -> Vec<f64> {
        texts
            .iter()
            .map(|t| match extract_forecast(t, variable).outcome {
                Outcome::Numeric(v) => v,
                other => panic!("refusal {other:?}"),
            })
            .collect()
    }

    #[test]
    fn simulated_gate_is_deterministic_per_request() {
        let gate = sim_gate(SimulatedGateSpec::unbiased(0.25), 42);
        let c = components(VariableKind::FedRateLowerBound);
        let text = |i| gate.complete(&c, "p", i).unwrap();
        assert_eq!(text(3), text(3));
        assert_ne!(text(3), text(4));
    }

    #[test]
    fn unbiased_gate_pairs_samples_across_date_variants() {
        let gate = sim_gate(SimulatedGateSpec::unbiased(0.25), 42);
        let templates = TemplateSet::builtin();
        let real = components(VariableKind::FedRateLowerBound);
        let fake = fake_prompt(&real, DateStamp::new(2030, 2, 15).unwrap()).unwrap();
        let a = sample_forecasts(&real, &templates, 20, &gate).unwrap();
        let b = sample_forecasts(&fake, &templates, 20, &gate).unwrap();
        assert_eq!(
            parsed(&a, VariableKind::FedRateLowerBound),
            parsed(&b, VariableKind::FedRateLowerBound)
        );
    }

    #[test]
    fn batch_sizes_and_order_are_exact() {
        let gate = sim_gate(SimulatedGateSpec::unbiased(0.25), 7);
        let templates = TemplateSet::builtin();
        let c = components(VariableKind::GdpYoY);
        let texts = sample_forecasts(&c, &templates, 100, &gate).unwrap();
        assert_eq!(texts.len(), 100);
        assert!(sample_forecasts(&c, &templates, 0, &gate).unwrap().is_empty());
        // order matches per-index completion
        for (i, text) in texts.iter().enumerate() {
            assert_eq!(*text, gate.complete(&c, "ignored", i as u32).unwrap());
        }
    }

    #[test]
    fn lookahead_leak_moves_the_mean_by_the_shift() {
        let mut spec = SimulatedGateSpec::unbiased(0.25);
        spec.mode = SimMode::LookaheadBiased;
        spec.leak_shift = 1.0;
        let gate = sim_gate(spec, 11);
        let templates = TemplateSet::builtin();
        let real = components(VariableKind::FedRateLowerBound); // forecast 2009-11-15, inside horizon
        let fake = fake_prompt(&real, DateStamp::new(2030, 2, 15).unwrap()).unwrap(); // outside
        let n = 1000;
        let a = parsed(&sample_forecasts(&real, &templates, n, &gate).unwrap(), real.variable);
        let b = parsed(&sample_forecasts(&fake, &templates, n, &gate).unwrap(), fake.variable);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let diff = mean(&a) - mean(&b);
        assert!((diff - 1.0).abs() < 0.03, "mean leak {diff}");
    }

    #[test]
    fn replay_hits_return_stored_bytes_and_misses_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let c = components(VariableKind::FedRateLowerBound);
        let recorded = {
            let gate = sim_gate(SimulatedGateSpec::unbiased(0.25), 3)
                .with_cache(&path)
                .unwrap();
            let templates = TemplateSet::builtin();
            sample_forecasts(&c, &templates, 5, &gate).unwrap()
        };
        let templates = TemplateSet::builtin();
        let replay = Gate::replay(&path, "sim", 0.7, 3).unwrap();
        let replayed = sample_forecasts(&c, &templates, 5, &replay).unwrap();
        assert_eq!(recorded, replayed);
        match sample_forecasts(&c, &templates, 6, &replay) {
            Err(GateError::Batch { failing, .. }) => assert_eq!(failing, vec![5]),
            other => panic!("expected a replay miss, got {other:?}"),
        }
    }

    #[test]
    fn replay_uses_the_prompt_specific_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let c = components(VariableKind::FedRateLowerBound);
        {
            let gate = sim_gate(SimulatedGateSpec::unbiased(0.25), 3)
                .with_cache(&path)
                .unwrap();
            gate.complete(&c, "prompt one", 0).unwrap();
        }
        let replay = Gate::replay(&path, "sim", 0.7, 3).unwrap();
        assert!(replay.complete(&c, "prompt one", 0).is_ok());
        assert!(matches!(
            replay.complete(&c, "prompt two", 0),
            Err(GateError::ReplayMiss { .. })
        ));
    }
}

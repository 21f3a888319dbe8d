//! Protocol orchestration: the fake date tests over the quarterly grid, the
//! generic K-variant prompt-sensitivity test, the date-sensitivity scan with
//! a fixed near-release cutoff, triple screening, and max-Wasserstein pair
//! selection.

use crate::data::{quarterly_grid, snapshot_at, DataError, VintageStore};
use crate::date::DateStamp;
use crate::gate::{sample_forecasts, Gate, GateError, LiveConfig, SimMode, SimulatedGateSpec};
use crate::gate::BaseRule;
use crate::parse::{extract_forecast, ForecastDistribution};
use crate::prompt::{
    fake_prompt, real_prompt, seasonal_fake_date, PromptComponents, PromptError, TemplateSet,
    VariableKind,
};
use crate::seeding;
use crate::stats::{
    bonferroni_bound, compare, identity_comparison, wasserstein, ComparisonResult, Sample,
    StatKind, StatsError,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TestError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cell {date}/{variable}: {source}")]
    Cell {
        date: DateStamp,
        variable: VariableKind,
        #[source]
        source: Box<TestError>,
    },
    #[error("fewer than two rows beyond the burn-in window")]
    InsufficientRows,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// How the familywise bound groups per-date p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyScope {
    /// One Bonferroni family per variable over the grid dates (m = #dates).
    PerVariable,
    /// A single family over every (date, variable) cell.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendChoice {
    SimulatedUnbiased,
    SimulatedLookahead,
    SimulatedDateSensitive,
    Replay,
    Live,
}

/// Gate construction knobs carried by the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateSettings {
    pub backend: BackendChoice,
    pub noise_sd: f64,
    pub leak_shift: f64,
    pub refusal_rate: f64,
    pub knowledge_horizon: DateStamp,
    pub base_rule: BaseRule,
    pub endpoint: Option<String>,
    pub api_key_env: String,
    pub max_in_flight: usize,
}

impl Default for GateSettings {
    fn default() -> Self {
        GateSettings {
            backend: BackendChoice::SimulatedUnbiased,
            noise_sd: 0.25,
            leak_shift: 1.0,
            refusal_rate: 0.0,
            knowledge_horizon: date(2025, 8, 15),
            base_rule: BaseRule::Persistence,
            endpoint: None,
            api_key_env: "LLM_API_KEY".to_string(),
            max_in_flight: 4,
        }
    }
}

/// All protocol knobs. The defaults give the standard run: N = 100 forecasts
/// at temperature 0.7, horizon 12 months, cutoff depth 36 months, fake date
/// 2030-02-15, 10,000 permutations at alpha 0.05 over the 80-date grid from
/// 2005-05-15 to 2025-02-15.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n_samples: u32,
    pub temperature: f64,
    /// Forecast horizon h in months.
    pub horizon_months: u32,
    /// Cutoff depth d in months (0 switches to the zero-depth protocol).
    pub cutoff_depth_months: u32,
    pub fake_date: DateStamp,
    /// Use the seasonal fake date (same month and day, fake year) per grid date.
    pub seasonal: bool,
    pub n_perm: u32,
    pub alpha: f64,
    pub grid_start: DateStamp,
    pub grid_end: DateStamp,
    pub variables: Vec<VariableKind>,
    pub master_seed: u64,
    pub model_id: String,
    pub statistic: StatKind,
    pub family: FamilyScope,
    pub keep_going: bool,
    /// Fixed near-release cutoff for the date-sensitivity scan.
    pub scan_cutoff: DateStamp,
    pub scan_horizon_end: DateStamp,
    pub scan_baseline: DateStamp,
    pub gate: GateSettings,
}

fn date(y: i32, m: u32, d: u32) -> DateStamp {
    DateStamp::new(y, m, d).expect("static date")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_samples: 100,
            temperature: 0.7,
            horizon_months: 12,
            cutoff_depth_months: 36,
            fake_date: date(2030, 2, 15),
            seasonal: false,
            n_perm: 10_000,
            alpha: 0.05,
            grid_start: date(2005, 5, 15),
            grid_end: date(2025, 2, 15),
            variables: VariableKind::ALL.to_vec(),
            master_seed: 0,
            model_id: "simulated".to_string(),
            statistic: StatKind::Ks,
            family: FamilyScope::PerVariable,
            keep_going: false,
            scan_cutoff: date(2025, 8, 15),
            scan_horizon_end: date(2035, 11, 15),
            scan_baseline: date(2030, 2, 15),
            gate: GateSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), TestError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TestError::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.horizon_months == 0 {
            return Err(TestError::Config("horizon must be positive".to_string()));
        }
        if self.n_perm == 0 {
            return Err(TestError::Config(
                "permutation count must be positive".to_string(),
            ));
        }
        if self.variables.is_empty() {
            return Err(TestError::Config("no variables selected".to_string()));
        }
        Ok(())
    }
}

/// Builds the gate described by `config`, attaching `cache_path` when given.
pub fn build_gate(config: &RunConfig, cache_path: Option<&Path>) -> Result<Gate, TestError> {
    let settings = &config.gate;
    let sim_spec = |mode: SimMode| SimulatedGateSpec {
        mode,
        base_rule: settings.base_rule,
        noise_sd: settings.noise_sd,
        leak_shift: settings.leak_shift,
        knowledge_horizon: settings.knowledge_horizon,
        refusal_rate: settings.refusal_rate,
    };
    let gate = match settings.backend {
        BackendChoice::SimulatedUnbiased => Gate::simulated(
            sim_spec(SimMode::Unbiased),
            &config.model_id,
            config.temperature,
            config.master_seed,
        )?,
        BackendChoice::SimulatedLookahead => Gate::simulated(
            sim_spec(SimMode::LookaheadBiased),
            &config.model_id,
            config.temperature,
            config.master_seed,
        )?,
        BackendChoice::SimulatedDateSensitive => Gate::simulated(
            sim_spec(SimMode::DateSensitive),
            &config.model_id,
            config.temperature,
            config.master_seed,
        )?,
        BackendChoice::Replay => {
            let path = cache_path.ok_or_else(|| {
                TestError::Config("replay backend requires a cache path".to_string())
            })?;
            return Ok(Gate::replay(
                path,
                &config.model_id,
                config.temperature,
                config.master_seed,
            )?);
        }
        BackendChoice::Live => {
            let endpoint = settings.endpoint.clone().ok_or_else(|| {
                TestError::Config("live backend requires an endpoint".to_string())
            })?;
            Gate::live(
                LiveConfig {
                    endpoint,
                    api_key_env: settings.api_key_env.clone(),
                    ..LiveConfig::default()
                },
                &config.model_id,
                config.temperature,
                config.master_seed,
                settings.max_in_flight,
            )?
        }
    };
    match cache_path {
        Some(path) => Ok(gate.with_cache(path)?),
        None => Ok(gate),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    FakeDateI,
    FakeDateII,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Pass,
    Fail,
}

/// One (grid date, variable) cell of a protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub date: DateStamp,
    pub variable: VariableKind,
    pub real: ForecastDistribution,
    pub fake: ForecastDistribution,
    pub comparison: ComparisonResult,
    /// First release of the variable as available at the real target date.
    pub realized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub date: DateStamp,
    pub variable: VariableKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableBound {
    pub variable: VariableKind,
    pub bound: f64,
    pub n_dates: usize,
}

/// Full result of a protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub protocol: Protocol,
    pub config: RunConfig,
    pub cells: Vec<CellOutcome>,
    pub failures: Vec<CellFailure>,
    pub variable_bounds: Vec<VariableBound>,
    /// Worst familywise bound across the configured families.
    pub global_p: f64,
    pub decision: Decision,
}

impl TestOutcome {
    /// Content digest of the canonical JSON encoding; bit-identical runs
    /// produce equal digests.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("outcome serializes");
        seeding::hex32(&seeding::digest32(&[b"outcome-v1", &bytes]))
    }
}

/// Detects lookahead leakage: compares forecasts at each retrospective grid
/// date against the same prompt shifted to the fake date, cutoff `d` months
/// in the past. Requires d > 0.
pub fn fake_date_test_i(
    config: &RunConfig,
    gate: &Gate,
    store: &VintageStore,
    templates: &TemplateSet,
) -> Result<TestOutcome, TestError> {
    if config.cutoff_depth_months == 0 {
        return Err(TestError::Config(
            "this protocol requires a positive cutoff depth; use the zero-depth protocol instead"
                .to_string(),
        ));
    }
    run_protocol(Protocol::FakeDateI, config.clone(), gate, store, templates)
}

/// The zero-depth variant: identical pipeline with the cutoff forced onto the
/// real forecast date. Any configured depth is ignored and recorded as 0.
pub fn fake_date_test_ii(
    config: &RunConfig,
    gate: &Gate,
    store: &VintageStore,
    templates: &TemplateSet,
) -> Result<TestOutcome, TestError> {
    let mut config = config.clone();
    config.cutoff_depth_months = 0;
    run_protocol(Protocol::FakeDateII, config, gate, store, templates)
}

fn run_protocol(
    protocol: Protocol,
    config: RunConfig,
    gate: &Gate,
    store: &VintageStore,
    templates: &TemplateSet,
) -> Result<TestOutcome, TestError> {
    config.validate()?;
    let grid = quarterly_grid(config.grid_start, config.grid_end)?;
    let mut jobs: Vec<(DateStamp, VariableKind)> = Vec::new();
    for &date in &grid {
        for &variable in &config.variables {
            jobs.push((date, variable));
        }
    }
    let results: Vec<Result<CellOutcome, TestError>> = jobs
        .par_iter()
        .map(|&(date, variable)| {
            run_cell(&config, gate, store, templates, date, variable).map_err(|e| {
                TestError::Cell {
                    date,
                    variable,
                    source: Box::new(e),
                }
            })
        })
        .collect();

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(cell) => cells.push(cell),
            Err(TestError::Cell {
                date,
                variable,
                source,
            }) => {
                if config.keep_going {
                    failures.push(CellFailure {
                        date,
                        variable,
                        message: source.to_string(),
                    });
                } else {
                    return Err(TestError::Cell {
                        date,
                        variable,
                        source,
                    });
                }
            }
            Err(other) => return Err(other),
        }
    }
    if cells.is_empty() {
        return Err(TestError::Config(
            "no cell completed successfully".to_string(),
        ));
    }
    cells.sort_by_key(|c| (c.date, c.variable));
    failures.sort_by_key(|f| (f.date, f.variable));
    aggregate(protocol, config, cells, failures)
}

fn run_cell(
    config: &RunConfig,
    gate: &Gate,
    store: &VintageStore,
    templates: &TemplateSet,
    date: DateStamp,
    variable: VariableKind,
) -> Result<CellOutcome, TestError> {
    let snapshot = snapshot_at(date, store)?;
    let real = real_prompt(
        date,
        config.horizon_months,
        config.cutoff_depth_months,
        variable,
        snapshot,
        templates,
    )?;
    let t_fake = if config.seasonal {
        seasonal_fake_date(date, config.fake_date.year())
    } else {
        config.fake_date
    };
    let fake = fake_prompt(&real, t_fake)?;
    let (real_dist, real_sample) = sample_condition(&real, templates, config, gate)?;
    let (fake_dist, fake_sample) = sample_condition(&fake, templates, config, gate)?;
    let seed = comparison_seed(config.master_seed, &real, &fake, config.statistic);
    let comparison = compare(
        &real_sample,
        &fake_sample,
        config.statistic,
        config.n_perm,
        seed,
    )?;
    let realized = snapshot_at(real.t_forecast, store)
        .ok()
        .map(|s| s.value_for(variable));
    Ok(CellOutcome {
        date,
        variable,
        real: real_dist,
        fake: fake_dist,
        comparison,
        realized,
    })
}

fn sample_condition(
    components: &PromptComponents,
    templates: &TemplateSet,
    config: &RunConfig,
    gate: &Gate,
) -> Result<(ForecastDistribution, Sample), TestError> {
    let texts = sample_forecasts(components, templates, config.n_samples, gate)?;
    let samples: Vec<_> = texts
        .iter()
        .map(|t| extract_forecast(t, components.variable))
        .collect();
    let dist = ForecastDistribution::from_samples(&samples);
    debug_assert_eq!(dist.count(), config.n_samples as usize);
    let sample = Sample::new(dist.values.clone(), dist.refusals)?;
    Ok((dist, sample))
}

fn aggregate(
    protocol: Protocol,
    config: RunConfig,
    cells: Vec<CellOutcome>,
    failures: Vec<CellFailure>,
) -> Result<TestOutcome, TestError> {
    let mut variable_bounds = Vec::new();
    for &variable in &config.variables {
        let ps: Vec<f64> = cells
            .iter()
            .filter(|c| c.variable == variable)
            .map(|c| c.comparison.p_value)
            .collect();
        if ps.is_empty() {
            continue;
        }
        variable_bounds.push(VariableBound {
            variable,
            bound: bonferroni_bound(&ps)?,
            n_dates: ps.len(),
        });
    }
    let global_p = match config.family {
        FamilyScope::PerVariable => variable_bounds
            .iter()
            .map(|b| b.bound)
            .fold(f64::INFINITY, f64::min),
        FamilyScope::Pooled => {
            let ps: Vec<f64> = cells.iter().map(|c| c.comparison.p_value).collect();
            bonferroni_bound(&ps)?
        }
    };
    let decision = if global_p <= config.alpha {
        Decision::Fail
    } else {
        Decision::Pass
    };
    Ok(TestOutcome {
        protocol,
        config,
        cells,
        failures,
        variable_bounds,
        global_p,
        decision,
    })
}

/// Seed for one comparison, derived from the identities of both prompt
/// conditions; independent of scheduling.
fn comparison_seed(
    master_seed: u64,
    a: &PromptComponents,
    b: &PromptComponents,
    statistic: StatKind,
) -> u64 {
    let da = seeding::digest32(&[&serde_json::to_vec(a).expect("components serialize")]);
    let db = seeding::digest32(&[&serde_json::to_vec(b).expect("components serialize")]);
    let stat_tag: &[u8] = match statistic {
        StatKind::Ks => b"ks",
        StatKind::Wasserstein => b"wasserstein",
    };
    seeding::seed64(&[b"compare-v1", &master_seed.to_le_bytes(), &da, &db, stat_tag])
}

/// The generic K-variant test: samples every variant and returns the full
/// pairwise comparison matrix (symmetric, unit diagonal convention). With
/// K = 2 this reduces exactly to one fake-date-style comparison.
pub fn family_test(
    variants: &[PromptComponents],
    templates: &TemplateSet,
    gate: &Gate,
    config: &RunConfig,
) -> Result<Vec<Vec<ComparisonResult>>, TestError> {
    if variants.len() < 2 {
        return Err(TestError::Config(
            "the prompt-sensitivity family needs at least two variants".to_string(),
        ));
    }
    let mut samples = Vec::with_capacity(variants.len());
    for v in variants {
        let (_, sample) = sample_condition(v, templates, config, gate)?;
        samples.push(sample);
    }
    let k = variants.len();
    let mut matrix: Vec<Vec<ComparisonResult>> = Vec::with_capacity(k);
    for i in 0..k {
        let seed_ii = comparison_seed(
            config.master_seed,
            &variants[i],
            &variants[i],
            config.statistic,
        );
        matrix.push(vec![
            identity_comparison(&samples[i], config.n_perm, seed_ii);
            k
        ]);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let seed = comparison_seed(
                config.master_seed,
                &variants[i],
                &variants[j],
                config.statistic,
            );
            let result = compare(
                &samples[i],
                &samples[j],
                config.statistic,
                config.n_perm,
                seed,
            )?;
            matrix[i][j] = result;
            let mut mirrored = result;
            mirrored.n_a = result.n_b;
            mirrored.n_b = result.n_a;
            matrix[j][i] = mirrored;
        }
    }
    Ok(matrix)
}

/// Column identity of the scan grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridColumn {
    pub variable: VariableKind,
    pub stat_date: DateStamp,
}

/// Permutation p-values comparing each horizon row against the baseline row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueGrid {
    pub model_id: String,
    pub cutoff: DateStamp,
    pub baseline: DateStamp,
    pub rows: Vec<DateStamp>,
    pub columns: Vec<GridColumn>,
    /// cells[row][column]
    pub cells: Vec<Vec<f64>>,
}

impl PValueGrid {
    /// Loads a grid from CSV: header `date,<var>@<stat-date>,...`; cells may
    /// use either decimal point or decimal comma. The cutoff is the first
    /// row; the baseline is the first row whose cells are all 1.
    pub fn from_csv(path: &Path, model_id: &str) -> Result<PValueGrid, TestError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(DataError::from)?;
        let headers = reader.headers().map_err(DataError::from)?.clone();
        let mut columns = Vec::new();
        for h in headers.iter().skip(1) {
            let (var, date) = h.split_once('@').ok_or_else(|| {
                TestError::Config(format!("column header `{h}` is not <variable>@<date>"))
            })?;
            let variable = VariableKind::from_token(var)
                .ok_or_else(|| TestError::Config(format!("unknown variable `{var}`")))?;
            let stat_date =
                DateStamp::parse_iso(date).map_err(|e| TestError::Config(e.to_string()))?;
            columns.push(GridColumn {
                variable,
                stat_date,
            });
        }
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for record in reader.records() {
            let record = record.map_err(DataError::from)?;
            let row_date = DateStamp::parse_iso(record.get(0).unwrap_or_default())
                .map_err(|e| TestError::Config(e.to_string()))?;
            let mut row = Vec::with_capacity(columns.len());
            for i in 0..columns.len() {
                let cell = record.get(i + 1).unwrap_or_default().replace(',', ".");
                let p: f64 = cell
                    .parse()
                    .map_err(|_| TestError::Config(format!("bad p-value `{cell}`")))?;
                row.push(p);
            }
            rows.push(row_date);
            cells.push(row);
        }
        if rows.is_empty() {
            return Err(TestError::Config(format!(
                "{} holds no grid rows",
                path.display()
            )));
        }
        let cutoff = rows[0];
        let baseline = rows
            .iter()
            .zip(&cells)
            .find(|(_, row)| row.iter().all(|&p| p == 1.0))
            .map(|(d, _)| *d)
            .unwrap_or(cutoff);
        Ok(PValueGrid {
            model_id: model_id.to_string(),
            cutoff,
            baseline,
            rows,
            columns,
            cells,
        })
    }

    pub fn column_cells(&self, col: usize) -> impl Iterator<Item = (DateStamp, f64)> + '_ {
        self.rows
            .iter()
            .zip(self.cells.iter())
            .map(move |(d, row)| (*d, row[col]))
    }
}

/// Parsed distributions behind one scan column, by horizon row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanColumnSamples {
    pub column: GridColumn,
    pub rows: Vec<(DateStamp, ForecastDistribution)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub grid: PValueGrid,
    pub samples: Vec<ScanColumnSamples>,
}

/// Preset statistics dates spanning a recession trough, a calm mid-sample
/// date, the pandemic onset, a base-effect distortion, and the sample end.
pub const STANDARD_SCAN_DATES: [(i32, u32, u32); 5] = [
    (2008, 11, 15),
    (2013, 8, 15),
    (2020, 5, 15),
    (2021, 8, 15),
    (2025, 2, 15),
];

pub fn standard_scan_dates() -> Vec<DateStamp> {
    STANDARD_SCAN_DATES
        .iter()
        .map(|&(y, m, d)| date(y, m, d))
        .collect()
}

/// Date-sensitivity scan: holds the statistics and the cutoff fixed, walks
/// the current date over quarterly horizon rows, and compares every row's
/// forecast distribution against the baseline row's.
pub fn assumption2_scan(
    config: &RunConfig,
    statistics_dates: &[DateStamp],
    gate: &Gate,
    store: &VintageStore,
    templates: &TemplateSet,
) -> Result<ScanOutcome, TestError> {
    config.validate()?;
    if statistics_dates.is_empty() {
        return Err(TestError::Config(
            "the scan needs at least one statistics date".to_string(),
        ));
    }
    let rows = quarterly_grid(config.scan_cutoff, config.scan_horizon_end)?;
    let baseline_idx = rows
        .iter()
        .position(|&r| r == config.scan_baseline)
        .ok_or_else(|| {
            TestError::Config(format!(
                "baseline {} is not one of the horizon rows",
                config.scan_baseline
            ))
        })?;
    let mut columns = Vec::new();
    for &variable in &config.variables {
        for &stat_date in statistics_dates {
            columns.push(GridColumn {
                variable,
                stat_date,
            });
        }
    }
    let per_column: Vec<Result<(Vec<f64>, ScanColumnSamples), TestError>> = columns
        .par_iter()
        .map(|&column| scan_column(config, gate, store, templates, &rows, baseline_idx, column))
        .collect();

    let mut cells = vec![vec![0.0; columns.len()]; rows.len()];
    let mut samples = Vec::with_capacity(columns.len());
    for (c, result) in per_column.into_iter().enumerate() {
        let (ps, column_samples) = result?;
        for (r, p) in ps.into_iter().enumerate() {
            cells[r][c] = p;
        }
        samples.push(column_samples);
    }
    Ok(ScanOutcome {
        grid: PValueGrid {
            model_id: config.model_id.clone(),
            cutoff: config.scan_cutoff,
            baseline: config.scan_baseline,
            rows,
            columns,
            cells,
        },
        samples,
    })
}

fn scan_column(
    config: &RunConfig,
    gate: &Gate,
    store: &VintageStore,
    templates: &TemplateSet,
    rows: &[DateStamp],
    baseline_idx: usize,
    column: GridColumn,
) -> Result<(Vec<f64>, ScanColumnSamples), TestError> {
    let attach = |e: TestError, row: DateStamp| TestError::Cell {
        date: row,
        variable: column.variable,
        source: Box::new(e),
    };
    let snapshot =
        snapshot_at(column.stat_date, store).map_err(|e| attach(e.into(), column.stat_date))?;
    let mut row_components = Vec::with_capacity(rows.len());
    let mut row_samples = Vec::with_capacity(rows.len());
    let mut dists = Vec::with_capacity(rows.len());
    for &row in rows {
        let components = PromptComponents {
            template: templates.id().to_string(),
            t_current: row,
            t_forecast: row.add_months(config.horizon_months as i32),
            t_cutoff: config.scan_cutoff,
            variable: column.variable,
            snapshot: snapshot.relabel_for(row),
        };
        components.validate().map_err(|e| attach(e.into(), row))?;
        let (dist, sample) =
            sample_condition(&components, templates, config, gate).map_err(|e| attach(e, row))?;
        row_components.push(components);
        row_samples.push(sample);
        dists.push((row, dist));
    }
    let mut ps = Vec::with_capacity(rows.len());
    for (i, &row) in rows.iter().enumerate() {
        let seed = comparison_seed(
            config.master_seed,
            &row_components[i],
            &row_components[baseline_idx],
            config.statistic,
        );
        let p = crate::stats::permutation_pvalue(
            &row_samples[i],
            &row_samples[baseline_idx],
            config.statistic,
            config.n_perm,
            seed,
        )
        .map_err(|e| attach(e.into(), row))?;
        ps.push(p);
    }
    Ok((
        ps,
        ScanColumnSamples {
            column,
            rows: dists,
        },
    ))
}

/// One flagged (model, variable, statistics-date) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenFlag {
    pub model_id: String,
    pub variable: VariableKind,
    pub stat_date: DateStamp,
    pub hits: usize,
    pub rows_considered: usize,
}

/// Flags the columns whose share of near-zero p-values among post-burn-in
/// rows reaches `fraction`. A cell counts when it lies strictly below
/// `threshold`: the reference tables carry three decimals, so a printed
/// `0.001` may round up from above the screening level while `0.000` cannot.
pub fn triple_screen(
    grid: &PValueGrid,
    threshold: f64,
    fraction: f64,
    burn_in_months: u32,
) -> Vec<ScreenFlag> {
    let from = grid.cutoff.add_months(burn_in_months as i32);
    let kept: Vec<usize> = (0..grid.rows.len())
        .filter(|&i| grid.rows[i] >= from)
        .collect();
    if kept.is_empty() {
        return Vec::new();
    }
    let mut flags = Vec::new();
    for (c, column) in grid.columns.iter().enumerate() {
        let hits = kept
            .iter()
            .filter(|&&r| grid.cells[r][c] < threshold)
            .count();
        if hits as f64 / kept.len() as f64 >= fraction {
            flags.push(ScreenFlag {
                model_id: grid.model_id.clone(),
                variable: column.variable,
                stat_date: column.stat_date,
                hits,
                rows_considered: kept.len(),
            });
        }
    }
    flags
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxWassersteinPair {
    pub row_a: DateStamp,
    pub row_b: DateStamp,
    pub distance: f64,
}

/// The pair of post-burn-in horizon rows whose forecast distributions are
/// farthest apart in Wasserstein distance.
pub fn max_wasserstein_pair(
    column: &ScanColumnSamples,
    cutoff: DateStamp,
    burn_in_months: u32,
) -> Result<MaxWassersteinPair, TestError> {
    let from = cutoff.add_months(burn_in_months as i32);
    let rows: Vec<&(DateStamp, ForecastDistribution)> = column
        .rows
        .iter()
        .filter(|(d, _)| *d >= from)
        .collect();
    if rows.len() < 2 {
        return Err(TestError::InsufficientRows);
    }
    let samples: Vec<Sample> = rows
        .iter()
        .map(|(_, dist)| Sample::new(dist.values.clone(), dist.refusals))
        .collect::<Result<_, _>>()?;
    let mut best: Option<MaxWassersteinPair> = None;
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let distance = wasserstein(&samples[i], &samples[j])?;
            if best.map_or(true, |b| distance > b.distance) {
                best = Some(MaxWassersteinPair {
                    row_a: rows[i].0,
                    row_b: rows[j].0,
                    distance,
                });
            }
        }
    }
    Ok(best.expect("at least one pair exists"))
}

/// What a run records for exact reproduction: the resolved configuration,
/// where the raw texts went, and the outcome digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub protocol: Protocol,
    pub config: RunConfig,
    pub cache_path: Option<String>,
    pub code_version: String,
    pub outcome_digest: String,
}

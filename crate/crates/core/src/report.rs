//! Table and plot-data emission.
//!
//! Bubble histograms mirror the presentation format of the protocol results:
//! per grid date, the forecast distribution is binned on a fixed lattice and
//! each bin becomes one bubble whose size is its density. P-value grids are
//! written as CSV with three decimals.

use crate::date::DateStamp;
use crate::parse::ForecastDistribution;
use crate::prompt::VariableKind;
use crate::testkit::{PValueGrid, TestOutcome};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("outcome holds no cells")]
    EmptyOutcome,
    #[error("p-value grid holds no cells")]
    EmptyGrid,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bin widths per variable. The defaults follow the natural forecast step of
/// each indicator: 0.25 for the policy rate, 0.1 for CPI and GDP growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinWidths {
    pub rate: f64,
    pub cpi: f64,
    pub gdp: f64,
}

impl Default for BinWidths {
    fn default() -> Self {
        BinWidths {
            rate: 0.25,
            cpi: 0.1,
            gdp: 0.1,
        }
    }
}

impl BinWidths {
    pub fn for_variable(&self, variable: VariableKind) -> f64 {
        match variable {
            VariableKind::FedRateLowerBound => self.rate,
            VariableKind::CpiYoY => self.cpi,
            VariableKind::GdpYoY => self.gdp,
        }
    }
}

/// Bubbles for one (date, condition): lattice bin centers with densities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BinnedCondition {
    pub bins: Vec<(f64, f64)>,
    pub refusals: usize,
    pub n_numeric: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleDate {
    pub date: DateStamp,
    pub real: BinnedCondition,
    pub fake: BinnedCondition,
    pub realized: Option<f64>,
}

/// Plot data for one variable over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleSeries {
    pub variable: VariableKind,
    pub bin_width: f64,
    pub dates: Vec<BubbleDate>,
}

fn bin_condition(dist: &ForecastDistribution, width: f64) -> BinnedCondition {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in &dist.values {
        let k = (v / width).round() as i64;
        *counts.entry(k).or_default() += 1;
    }
    let n_numeric = dist.values.len();
    let bins = counts
        .into_iter()
        .map(|(k, c)| (k as f64 * width, c as f64 / n_numeric as f64))
        .collect();
    BinnedCondition {
        bins,
        refusals: dist.refusals,
        n_numeric,
    }
}

/// Bins every cell of the outcome at its variable's width. Refusals are
/// reported as a separate count channel, never binned.
pub fn bubble_histogram(
    outcome: &TestOutcome,
    widths: &BinWidths,
) -> Result<Vec<BubbleSeries>, ReportError> {
    if outcome.cells.is_empty() {
        return Err(ReportError::EmptyOutcome);
    }
    let mut by_variable: BTreeMap<VariableKind, Vec<BubbleDate>> = BTreeMap::new();
    for cell in &outcome.cells {
        let width = widths.for_variable(cell.variable);
        by_variable
            .entry(cell.variable)
            .or_default()
            .push(BubbleDate {
                date: cell.date,
                real: bin_condition(&cell.real, width),
                fake: bin_condition(&cell.fake, width),
                realized: cell.realized,
            });
    }
    Ok(by_variable
        .into_iter()
        .map(|(variable, dates)| BubbleSeries {
            variable,
            bin_width: widths.for_variable(variable),
            dates,
        })
        .collect())
}

/// Writes one bubble series as CSV:
/// `date,condition,bin_center,density,count,refusals,realized`.
pub fn emit_bubble_csv(series: &BubbleSeries, path: &Path) -> Result<(), ReportError> {
    let mut out = String::from("date,condition,bin_center,density,count,refusals,realized\n");
    for d in &series.dates {
        for (label, cond) in [("real", &d.real), ("fake", &d.fake)] {
            for &(center, density) in &cond.bins {
                let count = (density * cond.n_numeric as f64).round() as usize;
                let realized = d
                    .realized
                    .map(|v| format!("{v}"))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    d.date, label, center, density, count, cond.refusals, realized
                ));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes the p-value grid as CSV, three decimals, decimal point. The
/// baseline row renders as 1.000 across.
pub fn emit_pvalue_table(grid: &PValueGrid, path: &Path) -> Result<(), ReportError> {
    if grid.rows.is_empty() || grid.columns.is_empty() {
        return Err(ReportError::EmptyGrid);
    }
    let mut file = std::fs::File::create(path)?;
    let header: Vec<String> = std::iter::once("date".to_string())
        .chain(
            grid.columns
                .iter()
                .map(|c| format!("{}@{}", c.variable, c.stat_date)),
        )
        .collect();
    writeln!(file, "{}", header.join(","))?;
    for (r, date) in grid.rows.iter().enumerate() {
        let cells: Vec<String> = grid.cells[r].iter().map(|p| format!("{p:.3}")).collect();
        writeln!(file, "{},{}", date, cells.join(","))?;
    }
    Ok(())
}

/// Renders a self-contained SVG of one bubble series: real condition in red,
/// fake in blue, the realized first release as a yellow diamond.
pub fn render_bubble_svg(series: &BubbleSeries) -> String {
    const WIDTH: f64 = 1200.0;
    const HEIGHT: f64 = 420.0;
    const MARGIN: f64 = 45.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for d in &series.dates {
        for cond in [&d.real, &d.fake] {
            for &(center, _) in &cond.bins {
                lo = lo.min(center);
                hi = hi.max(center);
            }
        }
        if let Some(v) = d.realized {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let n = series.dates.len().max(1) as f64;
    let x = |i: usize| MARGIN + (i as f64 + 0.5) * (WIDTH - 2.0 * MARGIN) / n;
    let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{} forecasts \
         (bin {}, real=red, fake=blue, realized=yellow)</text>\n",
        series.variable, series.bin_width
    ));
    for (i, d) in series.dates.iter().enumerate() {
        let cx = x(i);
        for (cond, color, dx) in [(&d.real, "#c0392b", -4.0), (&d.fake, "#2d6fa3", 4.0)] {
            for &(center, density) in &cond.bins {
                let r = 1.0 + 9.0 * density.sqrt();
                svg.push_str(&format!(
                    "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"{:.2}\" fill=\"{}\" fill-opacity=\"0.55\"/>\n",
                    cx + dx,
                    y(center),
                    r,
                    color
                ));
            }
        }
        if let Some(v) = d.realized {
            let cy = y(v);
            svg.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"6\" height=\"6\" fill=\"#e1b12c\" \
                 transform=\"rotate(45 {:.1} {:.1})\"/>\n",
                cx - 3.0,
                cy - 3.0,
                cx,
                cy
            ));
        }
        if i % 4 == 0 {
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"9\" \
                 text-anchor=\"middle\">{}</text>\n",
                cx,
                HEIGHT - MARGIN / 2.0,
                d.date
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

//! Parameter sweeps and histogram construction, emitted as plot-ready CSV
//! and JSON.
//!
//! Sweeps call straight into [`crate::queueing`] at every grid point;
//! points that violate a stability condition become the literal cell token
//! `unstable` instead of aborting the table. Floats are written with six
//! significant digits in scientific form so identical inputs always
//! produce byte-identical files.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::access::TokenStats;
use crate::queueing::{
    batch_cdn_time, infra_time, legal_price_threshold, mm1_time, PriorityEconParams, QueueError,
    QueueParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("InvalidSweep: {0}")]
    InvalidSweep(String),
    #[error("InvalidHistogram: {0}")]
    InvalidHistogram(String),
    #[error(transparent)]
    Queue(#[from] QueueError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Mu,
    B,
    Q,
    Beta,
}

impl std::fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepVariable::Mu => write!(f, "mu"),
            SweepVariable::B => write!(f, "b"),
            SweepVariable::Q => write!(f, "q"),
            SweepVariable::Beta => write!(f, "beta"),
        }
    }
}

/// An inclusive linear grid over one swept symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub lo: f64,
    pub hi: f64,
    pub steps: u32,
}

impl SweepSpec {
    fn validate(&self) -> Result<(), ReportError> {
        if !(self.lo < self.hi) {
            return Err(ReportError::InvalidSweep(format!(
                "lo {} must be below hi {}",
                self.lo, self.hi
            )));
        }
        if self.steps < 2 {
            return Err(ReportError::InvalidSweep("steps must be >= 2".into()));
        }
        Ok(())
    }

    fn grid(&self) -> Vec<f64> {
        let n = self.steps as usize;
        (0..n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Maps a stability failure to an empty cell; parameter errors abort.
fn cell(res: Result<f64, QueueError>) -> Result<Option<f64>, ReportError> {
    match res {
        Ok(v) => Ok(Some(v)),
        Err(QueueError::UnstableQueue { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub x: f64,
    pub t_orig: Option<f64>,
    pub t_cdn: Option<f64>,
    pub t_infra: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSweep {
    pub variable: SweepVariable,
    pub rows: Vec<ScenarioRow>,
}

/// Sweeps `mu` or `b` and tabulates the three scenario times.
pub fn sweep_scenarios(spec: &SweepSpec, fixed: &QueueParams) -> Result<ScenarioSweep, ReportError> {
    spec.validate()?;
    match spec.variable {
        SweepVariable::Mu => {
            if spec.lo <= 0.0 {
                return Err(ReportError::InvalidSweep("mu grid must be > 0".into()));
            }
        }
        SweepVariable::B => {
            if spec.lo < 1.0 {
                return Err(ReportError::InvalidSweep("b grid must be >= 1".into()));
            }
        }
        other => {
            return Err(ReportError::InvalidSweep(format!(
                "scenario sweeps support mu or b, not {other}"
            )))
        }
    }
    let mut rows = Vec::with_capacity(spec.steps as usize);
    for x in spec.grid() {
        let p = match spec.variable {
            SweepVariable::Mu => QueueParams { mu: x, ..*fixed },
            SweepVariable::B => QueueParams {
                b: x.round() as u32,
                ..*fixed
            },
            _ => unreachable!(),
        };
        rows.push(ScenarioRow {
            x,
            t_orig: cell(mm1_time(&p))?,
            t_cdn: cell(batch_cdn_time(&p))?,
            t_infra: cell(infra_time(&p))?,
        });
    }
    Ok(ScenarioSweep {
        variable: spec.variable,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceRow {
    pub x: f64,
    /// One limiting price per beta column (single column for beta sweeps).
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSweep {
    pub variable: SweepVariable,
    /// Beta column set; empty when beta itself is swept.
    pub betas: Vec<f64>,
    pub rows: Vec<PriceRow>,
}

/// Sweeps `q`, `beta`, or `mu` and tabulates the limiting legal price, one
/// column per configured beta.
pub fn sweep_price_threshold(
    spec: &SweepSpec,
    fixed: &PriorityEconParams,
    betas: &[f64],
) -> Result<PriceSweep, ReportError> {
    spec.validate()?;
    let column_betas: Vec<f64> = match spec.variable {
        SweepVariable::Q => {
            if spec.lo < 0.0 || spec.hi > 1.0 {
                return Err(ReportError::InvalidSweep("q grid must lie in [0, 1]".into()));
            }
            betas.to_vec()
        }
        SweepVariable::Mu => {
            if spec.lo <= 0.0 {
                return Err(ReportError::InvalidSweep("mu grid must be > 0".into()));
            }
            betas.to_vec()
        }
        SweepVariable::Beta => {
            if spec.lo < 0.0 {
                return Err(ReportError::InvalidSweep("beta grid must be >= 0".into()));
            }
            Vec::new()
        }
        other => {
            return Err(ReportError::InvalidSweep(format!(
                "price sweeps support q, beta, or mu, not {other}"
            )))
        }
    };
    if spec.variable != SweepVariable::Beta {
        if column_betas.is_empty() {
            return Err(ReportError::InvalidSweep(
                "at least one beta column is required".into(),
            ));
        }
        for beta in &column_betas {
            if !(0.0..1.0).contains(beta) {
                return Err(ReportError::InvalidSweep(format!(
                    "beta column {beta} must lie in [0, 1)"
                )));
            }
        }
    }

    let price_cell = |p: PriorityEconParams| -> Result<Option<f64>, ReportError> {
        // The threshold diverges as beta approaches 1; report the cell as
        // unstable rather than failing the sweep.
        if p.beta >= 1.0 {
            return Ok(None);
        }
        cell(legal_price_threshold(&p))
    };

    let mut rows = Vec::with_capacity(spec.steps as usize);
    for x in spec.grid() {
        let values = if spec.variable == SweepVariable::Beta {
            vec![price_cell(PriorityEconParams { beta: x, ..*fixed })?]
        } else {
            column_betas
                .iter()
                .map(|&beta| {
                    let p = match spec.variable {
                        SweepVariable::Q => PriorityEconParams { q: x, beta, ..*fixed },
                        SweepVariable::Mu => PriorityEconParams { mu: x, beta, ..*fixed },
                        _ => unreachable!(),
                    };
                    price_cell(p)
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        rows.push(PriceRow { x, values });
    }
    Ok(PriceSweep {
        variable: spec.variable,
        betas: column_betas,
        rows,
    })
}

/// Six significant digits in scientific form; the crate's stable float
/// representation for emitted tables.
pub fn format_sig6(v: f64) -> String {
    format!("{v:.5e}")
}

fn format_cell(v: &Option<f64>) -> String {
    match v {
        Some(v) => format_sig6(*v),
        None => "unstable".to_string(),
    }
}

pub fn scenario_sweep_csv(sweep: &ScenarioSweep) -> String {
    let mut out = String::from("x,t_orig,t_cdn,t_infra\n");
    for row in &sweep.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_sig6(row.x),
            format_cell(&row.t_orig),
            format_cell(&row.t_cdn),
            format_cell(&row.t_infra),
        ));
    }
    out
}

pub fn price_sweep_csv(sweep: &PriceSweep) -> String {
    let mut out = String::from("x");
    if sweep.betas.is_empty() {
        out.push_str(",P_l");
    } else {
        for beta in &sweep.betas {
            out.push_str(&format!(",P_l_beta{beta}"));
        }
    }
    out.push('\n');
    for row in &sweep.rows {
        out.push_str(&format_sig6(row.x));
        for v in &row.values {
            out.push(',');
            out.push_str(&format_cell(v));
        }
        out.push('\n');
    }
    out
}

/// Fixed-bin counts of a value sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Strictly increasing edges; `counts.len() + 1` entries.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values binned (out-of-range values are not counted).
    pub total: u64,
}

impl Histogram {
    /// Bins `values` into `edges`. Bins are half-open `[e_i, e_{i+1})`
    /// except the last, which includes its upper edge.
    pub fn from_values(values: &[f64], bin_edges: Vec<f64>) -> Result<Self, ReportError> {
        if bin_edges.len() < 2 {
            return Err(ReportError::InvalidHistogram(
                "at least two bin edges required".into(),
            ));
        }
        if !bin_edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(ReportError::InvalidHistogram(
                "bin edges must be strictly increasing".into(),
            ));
        }
        let bins = bin_edges.len() - 1;
        let mut counts = vec![0u64; bins];
        let lo = bin_edges[0];
        let hi = bin_edges[bins];
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let idx = if v == hi {
                bins - 1
            } else {
                bin_edges.partition_point(|e| *e <= v) - 1
            };
            counts[idx] += 1;
        }
        let total = counts.iter().sum();
        Ok(Self {
            bin_edges,
            counts,
            total,
        })
    }
}

/// Histogram bin selection: a bin count over `[0, max]` or explicit edges.
#[derive(Debug, Clone, PartialEq)]
pub enum Binning {
    /// Equal-width bins from zero to the observed maximum.
    Count(usize),
    Edges(Vec<f64>),
}

impl Default for Binning {
    fn default() -> Self {
        Binning::Count(50)
    }
}

fn equal_width_edges(max: f64, bins: usize) -> Vec<f64> {
    let max = if max > 0.0 { max } else { 1.0 };
    (0..=bins).map(|i| max * i as f64 / bins as f64).collect()
}

/// Per-content histogram of per-token request counts.
pub fn request_histogram(
    stats: &[TokenStats],
    binning: &Binning,
) -> Result<BTreeMap<String, Histogram>, ReportError> {
    if let Binning::Count(0) = binning {
        return Err(ReportError::InvalidHistogram("bins must be >= 1".into()));
    }
    let mut per_content: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in stats {
        per_content
            .entry(s.content.clone())
            .or_default()
            .push(s.requests as f64);
    }
    per_content
        .into_iter()
        .map(|(content, values)| {
            let edges = match binning {
                Binning::Count(bins) => {
                    let max = values.iter().copied().fold(0.0, f64::max);
                    equal_width_edges(max, *bins)
                }
                Binning::Edges(edges) => edges.clone(),
            };
            Histogram::from_values(&values, edges).map(|h| (content, h))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_params() -> QueueParams {
        QueueParams {
            lambda: 0.5,
            mu: 1.0,
            b: 2,
        }
    }

    fn base_econ() -> PriorityEconParams {
        PriorityEconParams {
            lambda: 0.5,
            mu: 1.0,
            q: 0.0,
            alpha: 2.0,
            beta: 0.2,
            p_legal: 1.0,
        }
    }

    #[test]
    fn mu_sweep_matches_direct_calls_and_decreases() {
        let spec = SweepSpec {
            variable: SweepVariable::Mu,
            lo: 0.6,
            hi: 4.0,
            steps: 35,
        };
        let sweep = sweep_scenarios(&spec, &base_params()).unwrap();
        assert_eq!(sweep.rows.len(), 35);
        let mut prev_gap = f64::INFINITY;
        let mut prev: Option<&ScenarioRow> = None;
        for row in &sweep.rows {
            let p = QueueParams {
                mu: row.x,
                ..base_params()
            };
            assert_eq!(row.t_orig.unwrap(), mm1_time(&p).unwrap());
            assert_eq!(row.t_cdn.unwrap(), batch_cdn_time(&p).unwrap());
            assert_eq!(row.t_infra.unwrap(), infra_time(&p).unwrap());
            if let Some(prev) = prev {
                assert!(row.t_orig.unwrap() < prev.t_orig.unwrap());
                assert!(row.t_cdn.unwrap() < prev.t_cdn.unwrap());
                assert!(row.t_infra.unwrap() < prev.t_infra.unwrap());
            }
            let gap = row.t_cdn.unwrap() - row.t_orig.unwrap();
            assert!(gap < prev_gap);
            prev_gap = gap;
            prev = Some(row);
        }
    }

    #[test]
    fn b_sweep_widens_the_cdn_gap() {
        let spec = SweepSpec {
            variable: SweepVariable::B,
            lo: 2.0,
            hi: 10.0,
            steps: 5,
        };
        let sweep = sweep_scenarios(&spec, &base_params()).unwrap();
        let gaps: Vec<f64> = sweep
            .rows
            .iter()
            .map(|r| r.t_cdn.unwrap() - r.t_orig.unwrap())
            .collect();
        assert!(gaps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn unstable_points_become_empty_cells() {
        let spec = SweepSpec {
            variable: SweepVariable::Mu,
            lo: 0.3,
            hi: 1.0,
            steps: 8,
        };
        let sweep = sweep_scenarios(&spec, &base_params()).unwrap();
        let first = &sweep.rows[0];
        // mu = 0.3: rho > 1 but lambda/(b mu) < 1.
        assert!(first.t_orig.is_none());
        assert!(first.t_cdn.is_none());
        assert!(first.t_infra.is_some());
        assert!(sweep.rows.last().unwrap().t_orig.is_some());
        let csv = scenario_sweep_csv(&sweep);
        assert!(csv.starts_with("x,t_orig,t_cdn,t_infra\n"));
        assert!(csv.contains("unstable"));
    }

    #[test]
    fn scenario_sweep_rejects_bad_specs() {
        let bad_var = SweepSpec {
            variable: SweepVariable::Q,
            lo: 0.0,
            hi: 0.3,
            steps: 5,
        };
        assert!(sweep_scenarios(&bad_var, &base_params()).is_err());
        let bad_range = SweepSpec {
            variable: SweepVariable::Mu,
            lo: 2.0,
            hi: 1.0,
            steps: 5,
        };
        assert!(sweep_scenarios(&bad_range, &base_params()).is_err());
        let bad_steps = SweepSpec {
            variable: SweepVariable::Mu,
            lo: 1.0,
            hi: 2.0,
            steps: 1,
        };
        assert!(sweep_scenarios(&bad_steps, &base_params()).is_err());
    }

    #[test]
    fn q_sweep_increases_and_orders_by_beta() {
        let spec = SweepSpec {
            variable: SweepVariable::Q,
            lo: 0.0,
            hi: 0.3,
            steps: 7,
        };
        let sweep = sweep_price_threshold(&spec, &base_econ(), &[0.2, 0.3, 0.4]).unwrap();
        for col in 0..3 {
            let column: Vec<f64> = sweep.rows.iter().map(|r| r.values[col].unwrap()).collect();
            assert!(column.windows(2).all(|w| w[0] < w[1]), "column {col}");
        }
        for row in &sweep.rows {
            let v: Vec<f64> = row.values.iter().map(|v| v.unwrap()).collect();
            assert!(v[0] < v[1] && v[1] < v[2]);
        }
        assert_eq!(sweep.rows[0].values[0].unwrap(), 1.25);
    }

    #[test]
    fn beta_sweep_diverges_at_one() {
        let spec = SweepSpec {
            variable: SweepVariable::Beta,
            lo: 0.0,
            hi: 1.0,
            steps: 11,
        };
        let sweep = sweep_price_threshold(&spec, &base_econ(), &[]).unwrap();
        assert!(sweep.rows.last().unwrap().values[0].is_none());
        assert!(sweep.rows[..10].iter().all(|r| r.values[0].is_some()));
        let csv = price_sweep_csv(&sweep);
        assert!(csv.starts_with("x,P_l\n"));
        assert!(csv.ends_with("unstable\n"));
    }

    #[test]
    fn mu_price_sweep_decreases() {
        let spec = SweepSpec {
            variable: SweepVariable::Mu,
            lo: 0.5,
            hi: 2.0,
            steps: 16,
        };
        let mut econ = base_econ();
        econ.q = 0.1;
        let sweep = sweep_price_threshold(&spec, &econ, &[0.2]).unwrap();
        // rho = 1 exactly at mu = 0.5.
        assert!(sweep.rows[0].values[0].is_none());
        let stable: Vec<f64> = sweep
            .rows
            .iter()
            .filter_map(|r| r.values[0])
            .collect();
        assert_eq!(stable.len(), 15);
        assert!(stable.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn csv_output_is_reproducible() {
        let spec = SweepSpec {
            variable: SweepVariable::Mu,
            lo: 0.6,
            hi: 4.0,
            steps: 20,
        };
        let a = scenario_sweep_csv(&sweep_scenarios(&spec, &base_params()).unwrap());
        let b = scenario_sweep_csv(&sweep_scenarios(&spec, &base_params()).unwrap());
        assert_eq!(a, b);
        assert_eq!(format_sig6(2.0), "2.00000e0");
        assert_eq!(format_sig6(10.0 / 19.0), "5.26316e-1");
    }

    #[test]
    fn histogram_counts_and_edges() {
        let h = Histogram::from_values(&[0.5, 1.5, 2.5, 3.0], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(h.counts, vec![1, 1, 2]);
        assert_eq!(h.total, 4);

        // Out-of-range values are dropped from total.
        let h = Histogram::from_values(&[-1.0, 0.5, 9.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(h.counts, vec![1]);
        assert_eq!(h.total, 1);

        let empty = Histogram::from_values(&[], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(empty.counts, vec![0, 0]);
        assert_eq!(empty.total, 0);

        assert!(Histogram::from_values(&[1.0], vec![0.0, 0.0]).is_err());
        assert!(Histogram::from_values(&[1.0], vec![0.0]).is_err());
    }

    #[test]
    fn histogram_is_permutation_invariant() {
        let mut values: Vec<f64> = (0..500).map(|i| (i % 97) as f64).collect();
        let edges: Vec<f64> = (0..=10).map(|i| i as f64 * 10.0).collect();
        let a = Histogram::from_values(&values, edges.clone()).unwrap();
        values.reverse();
        values.rotate_left(123);
        let b = Histogram::from_values(&values, edges).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn request_histogram_groups_by_content() {
        let row = |content: &str, requests: u64| TokenStats {
            window_start: 0,
            window_end: 86_400,
            token: format!("t{requests}"),
            user: "u".into(),
            content: content.into(),
            distinct_ips: 1,
            requests,
        };
        let stats = vec![row("a", 10), row("a", 20), row("b", 100)];
        let hists = request_histogram(&stats, &Binning::Count(4)).unwrap();
        assert_eq!(hists.len(), 2);
        assert_eq!(hists["a"].total, 2);
        assert_eq!(hists["a"].bin_edges.last().copied(), Some(20.0));
        assert_eq!(hists["b"].total, 1);

        assert!(request_histogram(&stats, &Binning::Count(0)).is_err());
        assert!(request_histogram(&[], &Binning::Count(4)).unwrap().is_empty());
    }
}

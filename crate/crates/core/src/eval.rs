//! Batch evaluation: error statistics, module ablations, density sweeps,
//! dissimilarity confusion matrices and outdated-reading statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::config::{Config, Modules};
use crate::error::{Error, Result};
use crate::fingerprint::{location_error, Location};
use crate::localizer::{localize, localize_with, score_candidates, LocationEstimate, Method};
use crate::par;
use crate::phantom::detect_outdated;
use crate::radio_map::RadioMap;
use crate::trace::{Query, QueryTrace};

/// What to run for each query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Method(Method),
    /// Full pipeline with an explicit module selection.
    Modules(Modules),
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::Method(m) => m.as_str().to_string(),
            Scheme::Modules(m) => m.label(),
        }
    }

    pub fn run(&self, query: &Query, map: &RadioMap, config: &Config) -> Result<LocationEstimate> {
        match self {
            Scheme::Method(m) => localize(query, map, config, *m),
            Scheme::Modules(m) => localize_with(query, map, config, *m),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Nearest-rank percentile of ascending `sorted`: the `ceil(p * n)`-th value.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub method: String,
    pub n: usize,
    pub mean_m: f64,
    pub p50_m: f64,
    pub p95_m: f64,
    pub max_m: f64,
    /// Queries for which no estimate could be produced.
    pub failures: usize,
    /// Per-query errors in input order.
    #[serde(skip)]
    pub errors: Vec<f64>,
}

impl ErrorSummary {
    pub fn from_errors(method: impl Into<String>, errors: Vec<f64>, failures: usize) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptyQueries);
        }
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(ErrorSummary {
            method: method.into(),
            n: errors.len(),
            mean_m: errors.iter().sum::<f64>() / errors.len() as f64,
            p50_m: nearest_rank(&sorted, 0.5),
            p95_m: nearest_rank(&sorted, 0.95),
            max_m: sorted[sorted.len() - 1],
            failures,
            errors,
        })
    }
}

/// One localized query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub trace_id: String,
    pub t: f64,
    pub truth: Option<Location>,
    pub estimate: Option<LocationEstimate>,
    pub error_m: Option<f64>,
}

/// Localize every query, in input order. Failures leave `estimate` empty.
pub fn run_queries(map: &RadioMap, queries: &[Query], scheme: Scheme, config: &Config) -> Vec<QueryOutcome> {
    par::map_indices(queries.len(), config.parallel, |i| {
        let q = &queries[i];
        let estimate = scheme.run(q, map, config).ok();
        let error_m = match (&estimate, q.truth) {
            (Some(e), Some(t)) => Some(location_error(&t, &e.location)),
            _ => None,
        };
        QueryOutcome {
            trace_id: q.trace_id.clone(),
            t: q.t,
            truth: q.truth,
            estimate,
            error_m,
        }
    })
}

/// Error statistics of `scheme` over `queries`, which must carry ground truth.
pub fn evaluate(map: &RadioMap, queries: &[Query], scheme: Scheme, config: &Config) -> Result<ErrorSummary> {
    Ok(evaluate_detailed(map, queries, scheme, config)?.0)
}

/// As [`evaluate`], also returning the per-query outcomes.
pub fn evaluate_detailed(
    map: &RadioMap,
    queries: &[Query],
    scheme: Scheme,
    config: &Config,
) -> Result<(ErrorSummary, Vec<QueryOutcome>)> {
    if queries.is_empty() {
        return Err(Error::EmptyQueries);
    }
    if let Some(q) = queries.iter().find(|q| q.truth.is_none()) {
        return Err(Error::InvalidArgument(format!(
            "query {}@{} has no ground truth",
            q.trace_id, q.t
        )));
    }
    let outcomes = run_queries(map, queries, scheme, config);
    let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.error_m).collect();
    let failures = outcomes.len() - errors.len();
    if errors.is_empty() {
        return Err(Error::NoCommonAp);
    }
    Ok((ErrorSummary::from_errors(scheme.label(), errors, failures)?, outcomes))
}

/// Result of an ablation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub rows: Vec<ErrorSummary>,
    pub warnings: Vec<String>,
}

/// Schemes compared by [`ablation_suite`], in row order.
pub fn ablation_schemes(mobile: bool) -> Vec<Scheme> {
    let one = |f: fn(&mut Modules)| {
        let mut m = Modules::NONE;
        f(&mut m);
        Scheme::Modules(m)
    };
    let mut out = vec![
        Scheme::Method(Method::Basic),
        one(|m| m.df = true),
        one(|m| m.rr = true),
        one(|m| m.ca = true),
    ];
    if mobile {
        out.push(one(|m| m.pf = true));
    }
    out.push(Scheme::Modules(Modules::ALL));
    out
}

/// Basic, each single module on top of Basic, and the full pipeline. The
/// PF-only row is included only when some query carries motion data.
pub fn ablation_suite(map: &RadioMap, queries: &[Query], config: &Config) -> Result<Ablation> {
    let mobile = queries.iter().any(|q| !q.motions.is_empty());
    let mut warnings = Vec::new();
    if !mobile {
        warnings.push("no motion data in queries: phantom fingerprints have no effect, PF row skipped".into());
    }
    let rows = ablation_schemes(mobile)
        .into_iter()
        .map(|s| evaluate(map, queries, s, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ablation { rows, warnings })
}

/// Evaluate `scheme` on `map` decimated to each spacing.
pub fn density_sweep(
    map: &RadioMap,
    queries: &[Query],
    spacings: &[f64],
    scheme: Scheme,
    config: &Config,
) -> Result<Vec<(f64, ErrorSummary)>> {
    spacings
        .iter()
        .map(|&s| {
            let sub = map.decimate(s)?;
            Ok((s, evaluate(&sub, queries, scheme, config)?))
        })
        .collect()
}

/// Mean dissimilarity between queries grouped by true location (rows) and
/// map locations (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub rows: Vec<Location>,
    pub cols: Vec<Location>,
    pub values: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Wide CSV: one row per query location, one column per map location.
    /// Infinite entries are written as `inf`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["truth_x".to_string(), "truth_y".to_string()];
        header.extend(self.cols.iter().map(|c| format!("{:.3}:{:.3}", c.x, c.y)));
        out.write_record(&header)?;
        for (loc, row) in self.rows.iter().zip(&self.values) {
            let mut rec = vec![format!("{:.3}", loc.x), format!("{:.3}", loc.y)];
            rec.extend(row.iter().map(|v| format_value(*v)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.4}")
    }
}

/// Confusion matrix under the dissimilarity selected by `modules`
/// (`Modules::NONE` gives plain Euclidean distance to location means).
pub fn confusion_matrix(map: &RadioMap, queries: &[Query], modules: Modules, config: &Config) -> Result<ConfusionMatrix> {
    let mut groups: Vec<(Location, Vec<usize>)> = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        let t = q.truth.ok_or_else(|| {
            Error::InvalidArgument(format!("query {}@{} has no ground truth", q.trace_id, q.t))
        })?;
        match groups.iter_mut().find(|(l, _)| *l == t) {
            Some((_, v)) => v.push(i),
            None => groups.push((t, vec![i])),
        }
    }
    if groups.is_empty() {
        return Err(Error::EmptyQueries);
    }
    groups.sort_by(|a, b| a.0.lex_cmp(&b.0));
    let scores = par::map_indices(queries.len(), config.parallel, |i| {
        score_candidates(&queries[i], map, config, modules)
    });
    let cols: Vec<Location> = (0..map.len()).map(|j| map.location(j)).collect();
    let values = groups
        .iter()
        .map(|(_, members)| {
            (0..map.len())
                .map(|j| members.iter().map(|&i| scores[i][j].phi).sum::<f64>() / members.len() as f64)
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        rows: groups.into_iter().map(|(l, _)| l).collect(),
        cols,
        values,
    })
}

/// Outdated-reading statistics over raw scans.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OutdatedStats {
    pub scans: usize,
    /// Scans holding at least one outdated reading.
    pub scans_with_outdated: usize,
    pub readings: usize,
    pub outdated_readings: usize,
    /// Outdated readings by delay, keyed in milliseconds.
    pub delay_histogram_ms: BTreeMap<u64, usize>,
}

impl OutdatedStats {
    pub fn fraction_with_outdated(&self) -> f64 {
        self.scans_with_outdated as f64 / self.scans.max(1) as f64
    }

    pub fn outdated_rate(&self) -> f64 {
        self.outdated_readings as f64 / self.readings.max(1) as f64
    }
}

pub fn outdated_stats(traces: &[QueryTrace], threshold_s: f64) -> OutdatedStats {
    let mut s = OutdatedStats::default();
    for scan in traces.iter().flat_map(|t| &t.scans) {
        let report = detect_outdated(&scan.fingerprint, threshold_s);
        s.scans += 1;
        s.readings += report.entries.len();
        let mut any = false;
        for (_, e) in report.outdated() {
            any = true;
            s.outdated_readings += 1;
            *s.delay_histogram_ms.entry((e.dt * 1000.0).round() as u64).or_default() += 1;
        }
        s.scans_with_outdated += any as usize;
    }
    s
}

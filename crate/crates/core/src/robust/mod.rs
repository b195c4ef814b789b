//! Robust matching of a query against every sample of a candidate location.
//!
//! The query is regressed on the candidate's samples (`y = theta1 x + theta2`)
//! with a least-median-of-squares fit. Query observations whose standardized
//! residual exceeds the cutoff are replaced by the fitted value before the
//! query is averaged back into one adjusted fingerprint.

pub mod lms;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::fingerprint::{ApId, Fingerprint, RsdVector, RSS_FLOOR};

pub use lms::{lms_scale, median, median_sq_residual, ols_fit, LmsConfig, LmsFit, LmsSolver};

/// Paired observations: `x` from candidate samples, `y` the repeated query.
/// Stored sample-major: pair `k * aps.len() + i` is sample `k`, AP `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub aps: Vec<ApId>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub ap_index: Vec<usize>,
    pub sample_index: Vec<usize>,
    pub sample_count: usize,
    query_aps: BTreeSet<ApId>,
}

impl RegressionData {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

pub fn build_regression(query: &Fingerprint, samples: &[Fingerprint]) -> Result<RegressionData> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let union: BTreeSet<&ApId> = query
        .aps()
        .chain(samples.iter().flat_map(|s| s.aps()))
        .collect();
    let aps: Vec<ApId> = union.into_iter().cloned().collect();
    let n = aps.len() * samples.len();
    let mut data = RegressionData {
        xs: Vec::with_capacity(n),
        ys: Vec::with_capacity(n),
        ap_index: Vec::with_capacity(n),
        sample_index: Vec::with_capacity(n),
        sample_count: samples.len(),
        query_aps: query.aps().cloned().collect(),
        aps,
    };
    for (k, s) in samples.iter().enumerate() {
        for (i, ap) in data.aps.iter().enumerate() {
            data.xs.push(s.rss_or_floor(ap));
            data.ys.push(query.rss_or_floor(ap));
            data.ap_index.push(i);
            data.sample_index.push(k);
        }
    }
    Ok(data)
}

/// LMS fit of the regression data. `seed` feeds the random elemental-set
/// search used for large problems.
pub fn lms_fit(data: &RegressionData, cfg: &LmsConfig) -> Result<LmsFit> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument("LMS needs at least two observations".into()));
    }
    Ok(LmsSolver::new(&data.xs, &data.ys).solve(cfg, cfg.rng_seed))
}

/// Whether a residual is an outlier under the fit's scale.
pub fn is_outlier(residual: f64, scale: f64, cutoff: f64) -> bool {
    if scale > 0.0 {
        (residual / scale).abs() > cutoff
    } else {
        residual.abs() > lms::ZERO_RESIDUAL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedQuery {
    /// Adjusted query RSS over the AP union.
    pub adjusted_rss: BTreeMap<ApId, f64>,
    /// `(sample index, AP)` pairs whose query value was replaced.
    pub outlier_flags: BTreeMap<(usize, ApId), bool>,
    /// APs actually present in the original query.
    pub query_aps: BTreeSet<ApId>,
}

impl AdjustedQuery {
    pub fn outlier_count(&self) -> usize {
        self.outlier_flags.values().filter(|&&f| f).count()
    }
}

/// Replace outlying observations with fitted values and average per AP.
pub fn adjust(data: &RegressionData, fit: &LmsFit, cutoff: f64) -> AdjustedQuery {
    let p = data.aps.len();
    let mut sums = vec![0.0; p];
    let mut outlier_flags = BTreeMap::new();
    for idx in 0..data.len() {
        let (x, y) = (data.xs[idx], data.ys[idx]);
        let fitted = fit.predict(x);
        let outlier = is_outlier(y - fitted, fit.scale, cutoff);
        let i = data.ap_index[idx];
        sums[i] += if outlier { fitted } else { y };
        outlier_flags.insert((data.sample_index[idx], data.aps[i].clone()), outlier);
    }
    let m = data.sample_count as f64;
    AdjustedQuery {
        adjusted_rss: data
            .aps
            .iter()
            .zip(sums)
            .map(|(ap, s)| (ap.clone(), s / m))
            .collect(),
        outlier_flags,
        query_aps: data.query_aps.clone(),
    }
}

pub fn adjust_query(
    query: &Fingerprint,
    samples: &[Fingerprint],
    fit: &LmsFit,
    cutoff: f64,
) -> Result<AdjustedQuery> {
    Ok(adjust(&build_regression(query, samples)?, fit, cutoff))
}

/// Adjusted RSDs against the candidate's mean fingerprint.
pub fn adjusted_rsd(adj: &AdjustedQuery, candidate_mean: &Fingerprint) -> RsdVector {
    let union: BTreeSet<&ApId> = adj.adjusted_rss.keys().chain(candidate_mean.aps()).collect();
    let q = adj
        .query_aps
        .iter()
        .filter(|ap| candidate_mean.rss(ap).is_some())
        .count();
    let deltas: BTreeMap<ApId, f64> = union
        .into_iter()
        .map(|ap| {
            let s = adj.adjusted_rss.get(ap).copied().unwrap_or(RSS_FLOOR);
            (ap.clone(), (s - candidate_mean.rss_or_floor(ap)).abs())
        })
        .collect();
    RsdVector {
        p: deltas.len(),
        q,
        deltas,
    }
}

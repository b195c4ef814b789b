//! Candidate scoring and the localization methods.
//!
//! The full pipeline scores every survey location independently:
//!
//! 1. phantom substitution of outdated APs (database side),
//! 2. robust regression of the query against the (phantom) samples,
//! 3. discrimination weights `max(rho_s, rho_t)` per AP,
//! 4. weighted dissimilarity `h`, scaled by the common-AP ratio `p / q`.
//!
//! Each stage can be switched off through [`Modules`]; with everything off
//! the score is the plain Euclidean distance to the location mean.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::config::{Config, Modules};
use crate::discrimination::{normalize, raw_factor};
use crate::error::{Error, Result};
use crate::fingerprint::{clamp_rss, ApId, Fingerprint, Location, RsdVector, RSS_FLOOR};
use crate::par;
use crate::phantom::{detect_outdated, select_bl_index, MotionEstimate};
use crate::radio_map::RadioMap;
use crate::robust::{is_outlier, LmsSolver};
use crate::trace::Query;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dorfin,
    Basic,
    Radar,
    Horus,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dorfin, Method::Basic, Method::Radar, Method::Horus];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Dorfin => "dorfin",
            Method::Basic => "basic",
            Method::Radar => "radar",
            Method::Horus => "horus",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Score of one candidate location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchScore {
    pub location: Location,
    /// Weighted dissimilarity.
    pub h: f64,
    /// Final dissimilarity; `+inf` when the common-AP ratio is on and no AP is shared.
    pub phi: f64,
    pub p: usize,
    pub q: usize,
    /// Observations replaced by the robust fit.
    pub outliers: usize,
    /// APs borrowed from bequeathal locations.
    pub substitutions: usize,
}

impl MatchScore {
    /// Total order used for selection: `(phi, h, x, y)`.
    pub fn selection_cmp(&self, other: &MatchScore) -> Ordering {
        self.phi
            .total_cmp(&other.phi)
            .then_with(|| self.h.total_cmp(&other.h))
            .then_with(|| self.location.lex_cmp(&other.location))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationEstimate {
    pub location: Location,
    pub score: MatchScore,
    /// Method tag, e.g. `dorfin`, `basic+rr`, `horus`.
    pub method: String,
}

/// `sqrt(sum (rho_i * delta_i)^2)`; APs without a weight count as zero.
pub fn weighted_h(delta: &RsdVector, weights: &BTreeMap<ApId, f64>) -> f64 {
    delta
        .deltas
        .iter()
        .map(|(ap, d)| {
            let w = weights.get(ap).copied().unwrap_or(0.0);
            (w * d) * (w * d)
        })
        .sum::<f64>()
        .sqrt()
}

/// Common-AP ratio scaling: `h * p / q`, infinite when `q == 0`.
pub fn phi(h: f64, p: usize, q: usize) -> f64 {
    if q == 0 {
        f64::INFINITY
    } else {
        h * p as f64 / q as f64
    }
}

/// Query projected onto the map's AP registry.
struct DenseQuery {
    /// Registry-indexed RSS; `NaN` where the query lacks the AP.
    values: Vec<f64>,
    /// Query APs the map has never seen, in id order.
    extras: Vec<f64>,
    /// Outdated registry APs with motion estimates.
    outdated: Vec<(usize, MotionEstimate)>,
}

impl DenseQuery {
    fn new(query: &Query, map: &RadioMap, config: &Config, use_phantom: bool) -> Self {
        let reg = map.registry();
        let fp: Cow<Fingerprint> = if use_phantom {
            let report = detect_outdated(&query.fingerprint, config.phantom.staleness_s);
            let max = config.phantom.max_staleness_s;
            match query
                .fingerprint
                .retain(|ap, _| report.entries[ap].dt <= max + 1e-9)
            {
                Some(f) => Cow::Owned(f),
                None => Cow::Borrowed(&query.fingerprint),
            }
        } else {
            Cow::Borrowed(&query.fingerprint)
        };
        let mut values = vec![f64::NAN; reg.len()];
        let mut extras = Vec::new();
        for (ap, r) in fp.readings() {
            match reg.index_of(ap) {
                Some(i) => values[i] = r.rss,
                None => extras.push(r.rss),
            }
        }
        let mut outdated = Vec::new();
        if use_phantom {
            let report = detect_outdated(&fp, config.phantom.staleness_s);
            for (ap, _) in report.outdated() {
                if let (Some(i), Some(m)) = (reg.index_of(ap), query.motions.get(ap)) {
                    outdated.push((i, *m));
                }
            }
        }
        DenseQuery {
            values,
            extras,
            outdated,
        }
    }
}

fn or_floor(v: f64) -> f64 {
    if v.is_nan() {
        RSS_FLOOR
    } else {
        v
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Scorer<'a> {
    map: &'a RadioMap,
    config: &'a Config,
    modules: Modules,
}

impl Scorer<'_> {
    fn score(&self, dq: &DenseQuery, cand: usize) -> MatchScore {
        let map = self.map;
        let cfg = self.config;
        let st = map.stats(cand);
        let location = map.location(cand);

        // 1. phantom substitution on the candidate side
        let mut substituted: Vec<usize> = Vec::new();
        let mut target: Cow<[f64]> = Cow::Borrowed(&st.mean);
        if self.modules.pf && !dq.outdated.is_empty() {
            let half_grid = map.grid_spacing() / 2.0;
            for (i, motion) in &dq.outdated {
                if motion.ell <= half_grid {
                    continue;
                }
                if let Some(bl) = select_bl_index(location, motion, map) {
                    let v = map.stats(bl).mean[*i];
                    target.to_mut()[*i] = or_floor(v);
                    substituted.push(*i);
                }
            }
        }

        let union: Vec<usize> = (0..target.len())
            .filter(|&i| !dq.values[i].is_nan() || !target[i].is_nan())
            .collect();
        let width = union.len() + dq.extras.len();
        let q = union
            .iter()
            .filter(|&&i| !dq.values[i].is_nan() && !target[i].is_nan())
            .count();

        // 2. robust adjustment of the query values over the union
        let mut outliers = 0;
        let query_side: Vec<f64> = if self.modules.rr {
            let m = st.sample_count;
            let mut xs = Vec::with_capacity(m * width);
            let mut ys = Vec::with_capacity(m * width);
            for k in 0..m {
                let row = st.sample_row(k);
                for &i in &union {
                    let x = if substituted.contains(&i) { target[i] } else { or_floor(row[i]) };
                    xs.push(x);
                    ys.push(or_floor(dq.values[i]));
                }
                for &e in &dq.extras {
                    xs.push(RSS_FLOOR);
                    ys.push(e);
                }
            }
            let seed = splitmix64(cfg.lms.rng_seed ^ splitmix64(cand as u64));
            let fit = LmsSolver::new(&xs, &ys).solve(&cfg.lms, seed);
            let mut sums = vec![0.0; width];
            for (idx, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
                let fitted = fit.predict(x);
                let outlier = is_outlier(y - fitted, fit.scale, cfg.lms.outlier_cutoff);
                outliers += outlier as usize;
                sums[idx % width] += if outlier { fitted } else { y };
            }
            sums.iter().map(|s| s / m as f64).collect()
        } else {
            union
                .iter()
                .map(|&i| or_floor(dq.values[i]))
                .chain(dq.extras.iter().copied())
                .collect()
        };

        // 3. discrimination weights over the union, in the same order
        let weights: Option<Vec<f64>> = self.modules.df.then(|| {
            let params = &cfg.propagation;
            let mut rho_s: Vec<f64> = union
                .iter()
                .map(|&i| dq.values[i])
                .chain(dq.extras.iter().copied())
                .zip(&query_side)
                .map(|(orig, &adj)| if orig.is_nan() { 0.0 } else { raw_factor(clamp_rss(adj), params) })
                .collect();
            let mut rho_t: Vec<f64> = union
                .iter()
                .map(|&i| target[i])
                .chain(dq.extras.iter().map(|_| f64::NAN))
                .map(|v| if v.is_nan() { 0.0 } else { raw_factor(clamp_rss(v), params) })
                .collect();
            normalize(&mut rho_s);
            normalize(&mut rho_t);
            rho_s.iter().zip(&rho_t).map(|(s, t)| s.max(*t)).collect()
        });

        // 4. dissimilarity
        let targets = union
            .iter()
            .map(|&i| or_floor(target[i]))
            .chain(dq.extras.iter().map(|_| RSS_FLOOR));
        let mut acc = 0.0;
        for (pos, (s, t)) in query_side.iter().zip(targets).enumerate() {
            let d = (s - t).abs();
            let wd = match &weights {
                Some(w) => w[pos] * d,
                None => d,
            };
            acc += wd * wd;
        }
        let h = acc.sqrt();
        let p = width;
        MatchScore {
            location,
            h,
            phi: if self.modules.ca { phi(h, p, q) } else { h },
            p,
            q,
            outliers,
            substitutions: substituted.len(),
        }
    }
}

fn best_of(scores: impl IntoIterator<Item = MatchScore>) -> Result<MatchScore> {
    scores
        .into_iter()
        .filter(|s| s.phi.is_finite())
        .min_by(MatchScore::selection_cmp)
        .ok_or(Error::NoCommonAp)
}

/// Score every map location for `query` under the given modules.
pub fn score_candidates(query: &Query, map: &RadioMap, config: &Config, modules: Modules) -> Vec<MatchScore> {
    let dq = DenseQuery::new(query, map, config, modules.pf);
    let scorer = Scorer { map, config, modules };
    par::map_indices(map.len(), config.parallel, |c| scorer.score(&dq, c))
}

/// Full pipeline with an explicit module selection.
pub fn localize_with(query: &Query, map: &RadioMap, config: &Config, modules: Modules) -> Result<LocationEstimate> {
    let score = best_of(score_candidates(query, map, config, modules))?;
    Ok(LocationEstimate {
        location: score.location,
        score,
        method: modules.label(),
    })
}

/// Full pipeline using the modules enabled in `config`.
pub fn dorfin_localize(query: &Query, map: &RadioMap, config: &Config) -> Result<LocationEstimate> {
    localize_with(query, map, config, config.modules)
}

/// Euclidean scores against every location mean.
fn euclidean_scores(query: &Fingerprint, map: &RadioMap) -> Vec<MatchScore> {
    let reg = map.registry();
    let mut values = vec![f64::NAN; reg.len()];
    let mut extras = Vec::new();
    for (ap, r) in query.readings() {
        match reg.index_of(ap) {
            Some(i) => values[i] = r.rss,
            None => extras.push(r.rss),
        }
    }
    (0..map.len())
        .map(|c| {
            let mean = &map.stats(c).mean;
            let (mut acc, mut p, mut q) = (0.0, 0usize, 0usize);
            for (v, t) in values.iter().zip(mean) {
                if v.is_nan() && t.is_nan() {
                    continue;
                }
                p += 1;
                q += (!v.is_nan() && !t.is_nan()) as usize;
                let d = (or_floor(*v) - or_floor(*t)).abs();
                acc += d * d;
            }
            for e in &extras {
                p += 1;
                let d = (e - RSS_FLOOR).abs();
                acc += d * d;
            }
            let h = acc.sqrt();
            MatchScore {
                location: map.location(c),
                h,
                phi: h,
                p,
                q,
                outliers: 0,
                substitutions: 0,
            }
        })
        .collect()
}

/// Nearest neighbour in signal space against per-location means.
pub fn basic_localize(query: &Fingerprint, map: &RadioMap) -> Result<LocationEstimate> {
    let score = best_of(euclidean_scores(query, map))?;
    Ok(LocationEstimate {
        location: score.location,
        score,
        method: Method::Basic.as_str().into(),
    })
}

/// Centroid of the `k` nearest locations in signal space.
pub fn radar_localize(query: &Fingerprint, map: &RadioMap, k: usize) -> Result<LocationEstimate> {
    if k == 0 || k > map.len() {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            map.len()
        )));
    }
    let mut scores = euclidean_scores(query, map);
    scores.sort_by(MatchScore::selection_cmp);
    let nearest = &scores[..k];
    let (sx, sy) = nearest
        .iter()
        .fold((0.0, 0.0), |(x, y), s| (x + s.location.x, y + s.location.y));
    Ok(LocationEstimate {
        location: Location::new(sx / k as f64, sy / k as f64),
        score: nearest[0],
        method: Method::Radar.as_str().into(),
    })
}

/// Maximum-likelihood location under independent per-AP Gaussians. The
/// returned score carries the negative log-likelihood in `h` and `phi`.
pub fn horus_localize(query: &Fingerprint, map: &RadioMap, std_floor: f64) -> Result<LocationEstimate> {
    let reg = map.registry();
    let mut values = vec![RSS_FLOOR; reg.len()];
    let mut extras = Vec::new();
    let mut present = vec![false; reg.len()];
    for (ap, r) in query.readings() {
        match reg.index_of(ap) {
            Some(i) => {
                values[i] = r.rss;
                present[i] = true;
            }
            None => extras.push(r.rss),
        }
    }
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let log_n = |v: f64, mu: f64, sd: f64| {
        let z = (v - mu) / sd;
        -0.5 * z * z - sd.ln() - half_ln_2pi
    };
    let scores = (0..map.len()).map(|c| {
        let st = map.stats(c);
        let mut ll = 0.0;
        let mut q = 0;
        for i in 0..reg.len() {
            ll += log_n(values[i], st.floored_mean[i], st.floored_std[i].max(std_floor));
            q += (present[i] && !st.mean[i].is_nan()) as usize;
        }
        for &e in &extras {
            ll += log_n(e, RSS_FLOOR, std_floor);
        }
        MatchScore {
            location: map.location(c),
            h: -ll,
            phi: -ll,
            p: reg.len() + extras.len(),
            q,
            outliers: 0,
            substitutions: 0,
        }
    });
    let score = best_of(scores)?;
    Ok(LocationEstimate {
        location: score.location,
        score,
        method: Method::Horus.as_str().into(),
    })
}

/// Dispatch on a method tag.
pub fn localize(query: &Query, map: &RadioMap, config: &Config, method: Method) -> Result<LocationEstimate> {
    match method {
        Method::Dorfin => dorfin_localize(query, map, config),
        Method::Basic => basic_localize(&query.fingerprint, map),
        Method::Radar => radar_localize(&query.fingerprint, map, config.radar.k),
        Method::Horus => horus_localize(&query.fingerprint, map, config.horus.std_floor),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::union_rsd;
    use crate::radio_map::MapEntry;

    fn fp(rs: &[(&str, f64)]) -> Fingerprint {
        Fingerprint::from_rss(0.0, rs.iter().map(|(a, r)| (a.to_string(), *r))).unwrap()
    }

    fn entry(x: f64, y: f64, samples: Vec<Fingerprint>) -> MapEntry {
        MapEntry {
            location: Location::new(x, y),
            samples,
        }
    }

    fn id(s: &str) -> ApId {
        ApId::new(s).unwrap()
    }

    #[test]
    fn weighted_h_examples() {
        let rsd = union_rsd(&fp(&[("a", -50.0), ("b", -60.0)]), &fp(&[("a", -60.0), ("b", -60.0)]));
        let w: BTreeMap<ApId, f64> = [(id("a"), 0.6), (id("b"), 0.4)].into_iter().collect();
        assert!((weighted_h(&rsd, &w) - 6.0).abs() < 1e-12);
        let zero = union_rsd(&fp(&[("a", -50.0)]), &fp(&[("a", -50.0)]));
        assert_eq!(weighted_h(&zero, &w), 0.0);

        let rsd = union_rsd(&fp(&[("a", -50.0), ("b", -64.0)]), &fp(&[("a", -53.0), ("b", -60.0)]));
        let uniform: BTreeMap<ApId, f64> = [(id("a"), 0.5), (id("b"), 0.5)].into_iter().collect();
        assert!((weighted_h(&rsd, &uniform) - 0.5 * rsd.norm()).abs() < 1e-12);
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(6.0, 2, 2), 6.0);
        assert_eq!(phi(6.0, 3, 1), 18.0);
        assert_eq!(phi(6.0, 3, 0), f64::INFINITY);
        assert_eq!(phi(0.0, 3, 0), f64::INFINITY);
    }

    fn two_location_map() -> RadioMap {
        RadioMap::new(
            1.0,
            vec![
                entry(0.0, 0.0, vec![fp(&[("a", -50.0), ("b", -70.0)]), fp(&[("a", -52.0), ("b", -72.0)])]),
                entry(5.0, 0.0, vec![fp(&[("c", -45.0)]), fp(&[("c", -47.0)])]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn exact_sample_query_matches() {
        let map = two_location_map();
        let q = Query::single(fp(&[("a", -50.0), ("b", -70.0)]));
        let est = dorfin_localize(&q, &map, &Config::default()).unwrap();
        assert_eq!(est.location, Location::new(0.0, 0.0));
    }

    #[test]
    fn disjoint_candidate_never_selected() {
        let map = RadioMap::new(
            1.0,
            vec![
                entry(0.0, 0.0, vec![fp(&[("a", -50.0), ("b", -50.0)])]),
                entry(5.0, 0.0, vec![fp(&[("c", -60.0)])]),
            ],
        )
        .unwrap();
        // closer to location 2 in raw Euclidean terms, but shares no AP with it
        let q = Query::single(fp(&[("a", -95.0)]));
        let basic = basic_localize(&q.fingerprint, &map).unwrap();
        assert_eq!(basic.location, Location::new(5.0, 0.0));
        let scores = score_candidates(&q, &map, &Config::default(), Modules::ALL);
        assert_eq!(scores[1].phi, f64::INFINITY);
        let est = dorfin_localize(&q, &map, &Config::default()).unwrap();
        assert_eq!(est.location, Location::new(0.0, 0.0));

        let q = Query::single(fp(&[("zz", -60.0)]));
        assert!(matches!(dorfin_localize(&q, &map, &Config::default()), Err(Error::NoCommonAp)));
        // Basic still scores disjoint candidates finitely
        assert!(basic_localize(&q.fingerprint, &map).unwrap().score.phi.is_finite());
    }

    #[test]
    fn basic_picks_nearer_mean() {
        let map = RadioMap::new(
            1.0,
            vec![entry(0.0, 0.0, vec![fp(&[("a", -55.0)])]), entry(1.0, 0.0, vec![fp(&[("a", -43.0)])])],
        )
        .unwrap();
        let est = basic_localize(&fp(&[("a", -50.0)]), &map).unwrap();
        assert_eq!(est.location, Location::new(0.0, 0.0));
        assert_eq!(est.score.h, 5.0);
    }

    #[test]
    fn radar_centroid_and_k_bounds() {
        let map = RadioMap::new(
            1.0,
            vec![
                entry(0.0, 0.0, vec![fp(&[("a", -50.0)])]),
                entry(2.0, 0.0, vec![fp(&[("a", -50.0)])]),
                entry(1.0, 3.0, vec![fp(&[("a", -50.0)])]),
                entry(9.0, 9.0, vec![fp(&[("a", -90.0)])]),
            ],
        )
        .unwrap();
        let q = fp(&[("a", -50.0)]);
        let est = radar_localize(&q, &map, 3).unwrap();
        assert!((est.location.x - 1.0).abs() < 1e-12 && (est.location.y - 1.0).abs() < 1e-12);
        assert_eq!(radar_localize(&q, &map, 1).unwrap().location, basic_localize(&q, &map).unwrap().location);
        assert!(radar_localize(&q, &map, 5).is_err());
        assert!(radar_localize(&q, &map, 0).is_err());
    }

    #[test]
    fn horus_cases() {
        let map = RadioMap::new(
            1.0,
            vec![
                entry(0.0, 0.0, vec![fp(&[("a", -50.0), ("b", -70.0)]), fp(&[("a", -51.0), ("b", -71.0)])]),
                entry(3.0, 0.0, vec![fp(&[("a", -70.0), ("b", -50.0)]), fp(&[("a", -71.0), ("b", -51.0)])]),
            ],
        )
        .unwrap();
        let est = horus_localize(&fp(&[("a", -50.5), ("b", -70.5)]), &map, 1.0).unwrap();
        assert_eq!(est.location, Location::new(0.0, 0.0));

        let uniform = RadioMap::new(
            1.0,
            vec![
                entry(2.0, 0.0, vec![fp(&[("a", -60.0)]), fp(&[("a", -60.0)])]),
                entry(1.0, 0.0, vec![fp(&[("a", -60.0)]), fp(&[("a", -60.0)])]),
            ],
        )
        .unwrap();
        let est = horus_localize(&fp(&[("a", -60.0)]), &uniform, 1.0).unwrap();
        assert_eq!(est.location, Location::new(1.0, 0.0));

        // missing AP is observed at the floor
        let est = horus_localize(&fp(&[("b", -50.5)]), &map, 1.0).unwrap();
        assert_eq!(est.location, Location::new(3.0, 0.0));
    }

    #[test]
    fn all_off_equals_basic() {
        let map = two_location_map();
        let q = Query::single(fp(&[("a", -58.0), ("c", -80.0), ("new", -75.0)]));
        let basic = basic_localize(&q.fingerprint, &map).unwrap();
        let off = localize_with(&q, &map, &Config::default(), Modules::NONE).unwrap();
        assert_eq!(basic.location, off.location);
        assert_eq!(basic.score.h, off.score.h);
        assert_eq!((basic.score.p, basic.score.q), (off.score.p, off.score.q));
    }

    #[test]
    fn method_parsing() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("knn".parse::<Method>().is_err());
    }

    #[test]
    fn phi_at_least_h() {
        let map = two_location_map();
        let q = Query::single(fp(&[("a", -58.0), ("b", -80.0), ("c", -70.0)]));
        for s in score_candidates(&q, &map, &Config::default(), Modules::ALL) {
            assert!(s.phi >= s.h);
            assert_eq!(s.phi == s.h, s.p == s.q || s.h == 0.0);
        }
    }
}

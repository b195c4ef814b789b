//! Phantom fingerprints for outdated readings.
//!
//! A scan may carry readings duplicated from earlier scans. For a mobile user
//! those readings were measured somewhere else: the bequeathal location (BL).
//! Given the user's displacement since then, each candidate location gets a
//! phantom fingerprint whose outdated APs are borrowed from the survey
//! location that best matches the BL.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{ApId, Fingerprint, Location, RSS_FLOOR};
use crate::radio_map::RadioMap;

const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    /// Readings older than this relative to the newest one are outdated.
    pub staleness_s: f64,
    /// Readings older than this are dropped from the query.
    pub max_staleness_s: f64,
    /// Displacement error bound, meters.
    pub dl_m: f64,
    /// Heading error bound, radians.
    pub dtheta_rad: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            staleness_s: 0.5,
            max_staleness_s: 5.0,
            dl_m: 1.0,
            dtheta_rad: 0.1309,
        }
    }
}

/// Displacement from a BL to the current position, with error bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionEstimate {
    /// Distance travelled, meters.
    pub ell: f64,
    /// Travel direction, radians counterclockwise from +x.
    pub theta: f64,
    pub d_ell: f64,
    pub d_theta: f64,
}

impl MotionEstimate {
    pub fn new(ell: f64, theta: f64, d_ell: f64, d_theta: f64) -> Result<Self> {
        if !(ell >= 0.0 && d_ell >= 0.0 && (0.0..PI).contains(&d_theta) && theta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid motion estimate ell={ell} theta={theta} d_ell={d_ell} d_theta={d_theta}"
            )));
        }
        Ok(MotionEstimate {
            ell,
            theta,
            d_ell,
            d_theta,
        })
    }
}

/// Per-scan dead-reckoning input: displacement since the previous scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionStep {
    pub t: f64,
    pub step_len: f64,
    pub heading: f64,
}

/// Integrate displacement steps over `[now - dt, now]`. Steps are assumed
/// time-ordered; each covers the interval since the previous step and is
/// pro-rated when the window cuts it.
pub fn integrate_motion(steps: &[MotionStep], now: f64, dt: f64) -> (f64, f64) {
    let start = now - dt;
    let (mut dx, mut dy) = (0.0, 0.0);
    let mut prev_t: Option<f64> = None;
    for s in steps {
        let seg_start = prev_t.unwrap_or(s.t);
        prev_t = Some(s.t);
        if s.t > now + GEOM_EPS || s.step_len == 0.0 {
            continue;
        }
        let frac = if s.t > seg_start {
            let overlap = s.t.min(now) - seg_start.max(start);
            (overlap / (s.t - seg_start)).clamp(0.0, 1.0)
        } else if s.t >= start - GEOM_EPS {
            1.0
        } else {
            0.0
        };
        // Snap float noise at exact window boundaries.
        let frac = if frac > 1.0 - 1e-9 {
            1.0
        } else if frac < 1e-9 {
            0.0
        } else {
            frac
        };
        dx += frac * s.step_len * s.heading.cos();
        dy += frac * s.step_len * s.heading.sin();
    }
    (dx.hypot(dy), dy.atan2(dx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutdatedEntry {
    /// Age relative to the newest reading in the scan, seconds.
    pub dt: f64,
    pub is_outdated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutdatedReport {
    pub entries: BTreeMap<ApId, OutdatedEntry>,
}

impl OutdatedReport {
    pub fn outdated(&self) -> impl Iterator<Item = (&ApId, &OutdatedEntry)> {
        self.entries.iter().filter(|(_, e)| e.is_outdated)
    }

    pub fn is_outdated(&self, ap: &ApId) -> bool {
        self.entries.get(ap).is_some_and(|e| e.is_outdated)
    }
}

pub fn detect_outdated(query: &Fingerprint, threshold: f64) -> OutdatedReport {
    let newest = query.latest_t();
    OutdatedReport {
        entries: query
            .readings()
            .iter()
            .map(|(ap, r)| {
                let dt = newest - r.t;
                // 1e-9 keeps 8.6 -> 10.0 style differences from flipping at the threshold.
                (ap.clone(), OutdatedEntry { dt, is_outdated: dt > threshold + 1e-9 })
            })
            .collect(),
    }
}

/// Annular sector of candidate BLs for one candidate location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuspiciousArea {
    pub candidate: Location,
    /// Point at distance `ell` behind the candidate along the travel heading.
    pub center: Location,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub heading: f64,
    pub half_width: f64,
    /// Sector area, m^2. Equals `4 d_theta ell d_ell` unless the inner radius
    /// was clamped to zero.
    pub area: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl SuspiciousArea {
    /// Whether `p` lies within both the distance band and the bearing band.
    pub fn contains(&self, p: &Location) -> bool {
        let d = p.distance(&self.candidate);
        if d < self.inner_radius - GEOM_EPS || d > self.outer_radius + GEOM_EPS {
            return false;
        }
        if d < GEOM_EPS {
            return self.inner_radius <= GEOM_EPS;
        }
        let bearing = (self.candidate.y - p.y).atan2(self.candidate.x - p.x);
        wrap_angle(bearing - self.heading).abs() <= self.half_width + GEOM_EPS
    }
}

pub fn suspicious_area(candidate: Location, motion: &MotionEstimate) -> SuspiciousArea {
    let inner = (motion.ell - motion.d_ell).max(0.0);
    let outer = motion.ell + motion.d_ell;
    SuspiciousArea {
        candidate,
        center: Location::new(
            candidate.x - motion.ell * motion.theta.cos(),
            candidate.y - motion.ell * motion.theta.sin(),
        ),
        inner_radius: inner,
        outer_radius: outer,
        heading: motion.theta,
        half_width: motion.d_theta,
        area: motion.d_theta * (outer * outer - inner * inner),
    }
}

/// Map index of the survey location inside the suspicious area closest to
/// its center; ties go to the lexicographically smaller location.
pub fn select_bl_index(candidate: Location, motion: &MotionEstimate, map: &RadioMap) -> Option<usize> {
    let area = suspicious_area(candidate, motion);
    let r = area.outer_radius + GEOM_EPS;
    map.indices_in_x_range(candidate.x - r, candidate.x + r)
        .filter(|&i| {
            let loc = map.location(i);
            (loc.y - candidate.y).abs() <= r && area.contains(&loc)
        })
        .min_by(|&a, &b| {
            let (la, lb) = (map.location(a), map.location(b));
            la.distance(&area.center)
                .total_cmp(&lb.distance(&area.center))
                .then_with(|| la.lex_cmp(&lb))
        })
}

pub fn select_bl(candidate: Location, motion: &MotionEstimate, map: &RadioMap) -> Option<Location> {
    select_bl_index(candidate, motion, map).map(|i| map.location(i))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomFingerprint {
    pub base_location: Location,
    pub readings: BTreeMap<ApId, f64>,
    /// Substituted APs and the BL each value came from.
    pub substitutions: BTreeMap<ApId, Location>,
}

/// Value to borrow for `ap` from survey location `bl`: its mean RSS, or the
/// floor when the BL never detected the AP.
pub(crate) fn bl_value(map: &RadioMap, bl: usize, ap: &ApId) -> f64 {
    map.registry()
        .index_of(ap)
        .map(|i| map.stats(bl).mean[i])
        .filter(|v| !v.is_nan())
        .unwrap_or(RSS_FLOOR)
}

pub fn assemble_phantom(
    candidate: Location,
    candidate_mean: &Fingerprint,
    report: &OutdatedReport,
    motions: &BTreeMap<ApId, MotionEstimate>,
    map: &RadioMap,
) -> PhantomFingerprint {
    let mut readings: BTreeMap<ApId, f64> = candidate_mean
        .readings()
        .iter()
        .map(|(ap, r)| (ap.clone(), r.rss))
        .collect();
    let mut substitutions = BTreeMap::new();
    let half_grid = map.grid_spacing() / 2.0;
    for (ap, _) in report.outdated() {
        let Some(motion) = motions.get(ap) else { continue };
        if motion.ell <= half_grid {
            continue;
        }
        if let Some(bl) = select_bl_index(candidate, motion, map) {
            readings.insert(ap.clone(), bl_value(map, bl, ap));
            substitutions.insert(ap.clone(), map.location(bl));
        }
    }
    PhantomFingerprint {
        base_location: candidate,
        readings,
        substitutions,
    }
}

//! Fingerprints, locations and RSS-difference vectors.
//!
//! A fingerprint is one WiFi scan: a set of per-AP RSS readings, each with the
//! timestamp at which the AP was last heard. APs missing from one side of a
//! comparison are treated as received at [`RSS_FLOOR`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default minimum RSS. Substituted for absent APs and used as the hard floor
/// for valid readings.
pub const RSS_FLOOR: f64 = -100.0;

/// Strongest RSS accepted by the data model.
pub const RSS_CEIL: f64 = -20.0;

/// Clamp a reading into `[RSS_FLOOR, RSS_CEIL]`.
pub fn clamp_rss(rss: f64) -> f64 {
    rss.clamp(RSS_FLOOR, RSS_CEIL)
}

/// Opaque access point identifier (a BSSID-like token).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ApId(String);

impl ApId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidFingerprint("empty AP id".into()));
        }
        Ok(ApId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ApId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A 2-D position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Location { x, y }
    }

    pub fn distance(&self, other: &Location) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Lexicographic `(x, y)` order, used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Location) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Euclidean location error in meters.
pub fn location_error(truth: &Location, estimate: &Location) -> f64 {
    truth.distance(estimate)
}

/// One AP observation inside a fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    /// RSS in dBm.
    pub rss: f64,
    /// Time at which the AP was detected, seconds.
    pub t: f64,
}

/// A single scan: per-AP RSS readings plus detection timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    readings: BTreeMap<ApId, Reading>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location_hint: Option<Location>,
}

impl Fingerprint {
    /// Build a fingerprint, clamping RSS into the valid range.
    pub fn new(readings: BTreeMap<ApId, Reading>) -> Result<Self> {
        Fingerprint {
            readings,
            location_hint: None,
        }
        .validated()
    }

    /// Convenience constructor used heavily in tests: all readings at time `t`.
    pub fn from_rss<I, S>(t: f64, readings: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (id, rss) in readings {
            map.insert(ApId::new(id)?, Reading { rss, t });
        }
        Fingerprint::new(map)
    }

    pub fn with_location_hint(mut self, hint: Location) -> Self {
        self.location_hint = Some(hint);
        self
    }

    /// Re-check invariants; used after deserialization.
    pub fn validated(mut self) -> Result<Self> {
        if self.readings.is_empty() {
            return Err(Error::InvalidFingerprint("fingerprint has no readings".into()));
        }
        for (id, r) in self.readings.iter_mut() {
            if !r.rss.is_finite() {
                return Err(Error::InvalidFingerprint(format!("non-finite rss for {id}")));
            }
            if !r.t.is_finite() || r.t < 0.0 {
                return Err(Error::InvalidFingerprint(format!(
                    "timestamp for {id} must be finite and >= 0, got {}",
                    r.t
                )));
            }
            r.rss = clamp_rss(r.rss);
        }
        Ok(self)
    }

    pub fn readings(&self) -> &BTreeMap<ApId, Reading> {
        &self.readings
    }

    pub fn location_hint(&self) -> Option<Location> {
        self.location_hint
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn rss(&self, ap: &ApId) -> Option<f64> {
        self.readings.get(ap).map(|r| r.rss)
    }

    /// RSS with the floor substituted for a missing AP.
    pub fn rss_or_floor(&self, ap: &ApId) -> f64 {
        self.rss(ap).unwrap_or(RSS_FLOOR)
    }

    pub fn aps(&self) -> impl Iterator<Item = &ApId> {
        self.readings.keys()
    }

    /// Latest detection timestamp in the scan.
    pub fn latest_t(&self) -> f64 {
        self.readings
            .values()
            .map(|r| r.t)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Drop readings, keeping those for which `keep` returns true. Returns
    /// `None` if nothing is left.
    pub fn retain(&self, mut keep: impl FnMut(&ApId, &Reading) -> bool) -> Option<Fingerprint> {
        let readings: BTreeMap<_, _> = self
            .readings
            .iter()
            .filter(|(id, r)| keep(id, r))
            .map(|(id, r)| (id.clone(), *r))
            .collect();
        if readings.is_empty() {
            None
        } else {
            Some(Fingerprint {
                readings,
                location_hint: self.location_hint,
            })
        }
    }
}

/// Per-AP RSS differences over the union of two fingerprints' AP sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RsdVector {
    pub deltas: BTreeMap<ApId, f64>,
    /// Size of the AP union.
    pub p: usize,
    /// Number of APs common to both sides.
    pub q: usize,
}

impl RsdVector {
    pub fn norm(&self) -> f64 {
        self.deltas.values().map(|d| d * d).sum::<f64>().sqrt()
    }
}

/// RSD vector between two fingerprints, substituting the floor for absent APs.
pub fn union_rsd(a: &Fingerprint, b: &Fingerprint) -> RsdVector {
    let union: BTreeSet<&ApId> = a.aps().chain(b.aps()).collect();
    let mut q = 0;
    let deltas = union
        .into_iter()
        .map(|ap| {
            if a.rss(ap).is_some() && b.rss(ap).is_some() {
                q += 1;
            }
            (ap.clone(), (a.rss_or_floor(ap) - b.rss_or_floor(ap)).abs())
        })
        .collect::<BTreeMap<_, _>>();
    RsdVector {
        p: deltas.len(),
        q,
        deltas,
    }
}

/// Plain Euclidean fingerprint dissimilarity.
pub fn euclidean_dissimilarity(a: &Fingerprint, b: &Fingerprint) -> f64 {
    union_rsd(a, b).norm()
}

/// Trailing moving-average filter over a time-ordered scan stream.
///
/// Each AP in scan `j` gets the mean RSS over scans `j+1-window ..= j` that
/// contain it. AP sets and timestamps are those of scan `j`.
pub fn moving_average(scans: &[Fingerprint], window: usize) -> Vec<Fingerprint> {
    let window = window.max(1);
    (0..scans.len())
        .map(|j| {
            let start = (j + 1).saturating_sub(window);
            let history = &scans[start..=j];
            let readings = scans[j]
                .readings
                .iter()
                .map(|(ap, r)| {
                    let (sum, count) = history
                        .iter()
                        .filter_map(|s| s.rss(ap))
                        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                    (
                        ap.clone(),
                        Reading {
                            rss: sum / count as f64,
                            t: r.t,
                        },
                    )
                })
                .collect();
            Fingerprint {
                readings,
                location_hint: scans[j].location_hint,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(rs: &[(&str, f64)]) -> Fingerprint {
        Fingerprint::from_rss(0.0, rs.iter().map(|(a, r)| (a.to_string(), *r))).unwrap()
    }

    fn ap(s: &str) -> ApId {
        ApId::new(s).unwrap()
    }

    #[test]
    fn union_rsd_identical() {
        let a = fp(&[("a", -50.0), ("b", -70.0)]);
        let rsd = union_rsd(&a, &a);
        assert!(rsd.deltas.values().all(|&d| d == 0.0));
        assert_eq!((rsd.p, rsd.q), (2, 2));
    }

    #[test]
    fn union_rsd_disjoint_uses_floor() {
        let rsd = union_rsd(&fp(&[("AP1", -50.0)]), &fp(&[("AP2", -60.0)]));
        assert_eq!(rsd.deltas[&ap("AP1")], 50.0);
        assert_eq!(rsd.deltas[&ap("AP2")], 40.0);
        assert_eq!((rsd.p, rsd.q), (2, 0));
    }

    #[test]
    fn union_rsd_body_blocked_example() {
        let rsd = union_rsd(
            &fp(&[("AP1", -40.0), ("AP2", -65.0)]),
            &fp(&[("AP1", -52.0), ("AP2", -65.0)]),
        );
        assert_eq!(rsd.deltas[&ap("AP1")], 12.0);
        assert_eq!(rsd.deltas[&ap("AP2")], 0.0);
        assert_eq!((rsd.p, rsd.q), (2, 2));
    }

    #[test]
    fn euclidean_examples() {
        let a = fp(&[("a", -50.0), ("b", -60.0)]);
        assert_eq!(euclidean_dissimilarity(&a, &a), 0.0);
        let b = fp(&[("a", -53.0), ("b", -64.0)]);
        assert!((euclidean_dissimilarity(&a, &b) - 5.0).abs() < 1e-12);
        let c = fp(&[("a", -40.0), ("b", -65.0), ("c", -50.0)]);
        let d = fp(&[("a", -52.0), ("b", -65.0), ("c", -50.0)]);
        assert!((euclidean_dissimilarity(&c, &d) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn moving_average_examples() {
        let scans: Vec<_> = [-50.0, -54.0, -58.0].iter().map(|&r| fp(&[("AP1", r)])).collect();
        assert_eq!(moving_average(&scans, 1), scans);
        let out = moving_average(&scans, 3);
        assert!((out[2].rss(&ap("AP1")).unwrap() + 54.0).abs() < 1e-12);

        let sparse = vec![
            fp(&[("AP1", -50.0)]),
            fp(&[("AP1", -52.0)]),
            fp(&[("AP1", -54.0), ("AP2", -77.0)]),
        ];
        let out = moving_average(&sparse, 3);
        assert_eq!(out[2].rss(&ap("AP2")), Some(-77.0));
        assert!(moving_average(&[], 3).is_empty());
    }

    #[test]
    fn moving_average_keeps_latest_timestamps() {
        let mut m = BTreeMap::new();
        m.insert(ap("a"), Reading { rss: -60.0, t: 2.8 });
        let s0 = Fingerprint::from_rss(1.4, [("a", -70.0)]).unwrap();
        let s1 = Fingerprint::new(m).unwrap();
        let out = moving_average(&[s0, s1], 3);
        assert_eq!(out[1].readings()[&ap("a")], Reading { rss: -65.0, t: 2.8 });
    }

    #[test]
    fn location_error_examples() {
        let o = Location::new(0.0, 0.0);
        assert_eq!(location_error(&o, &o), 0.0);
        assert_eq!(location_error(&o, &Location::new(3.0, 4.0)), 5.0);
        assert_eq!(location_error(&Location::new(1.0, 1.0), &Location::new(4.0, 5.0)), 5.0);
    }

    #[test]
    fn invalid_fingerprints() {
        assert!(Fingerprint::new(BTreeMap::new()).is_err());
        assert!(ApId::new("").is_err());
        let mut m = BTreeMap::new();
        m.insert(ap("a"), Reading { rss: -50.0, t: -1.0 });
        assert!(Fingerprint::new(m).is_err());
        // out-of-range readings are clamped on ingest
        let f = fp(&[("a", -120.0), ("b", -5.0)]);
        assert_eq!(f.rss(&ap("a")), Some(RSS_FLOOR));
        assert_eq!(f.rss(&ap("b")), Some(RSS_CEIL));
    }
}

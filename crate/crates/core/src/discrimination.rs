//! Per-AP discrimination factors.
//!
//! Weak readings get a weight equal to the reciprocal of the distance implied
//! by the log-distance path loss model. Readings stronger than the watershed
//! `f0` are capped by a sigmoid so that one fluctuating strong AP cannot
//! swamp the others.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{ApId, Fingerprint, RSS_CEIL, RSS_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    /// RSS at the 1 m reference distance, dBm.
    pub p_d0: f64,
    /// Path loss exponent.
    pub gamma: f64,
    pub a: f64,
    pub c: f64,
    /// Watershed RSS between the path-loss and sigmoid branches, dBm.
    pub f0: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            p_d0: -30.0,
            gamma: 3.0,
            a: 4.0,
            c: 4.3,
            f0: -57.0,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0 && self.gamma <= 6.0) {
            return Err(Error::InvalidArgument(format!("gamma must be in (1, 6], got {}", self.gamma)));
        }
        if !(self.a > 0.0) {
            return Err(Error::InvalidArgument(format!("a must be > 0, got {}", self.a)));
        }
        if !(RSS_FLOOR..=RSS_CEIL).contains(&self.f0) {
            return Err(Error::InvalidArgument(format!("f0 must be in [-100, -20], got {}", self.f0)));
        }
        if !self.p_d0.is_finite() || !self.c.is_finite() {
            return Err(Error::InvalidArgument("p_d0 and c must be finite".into()));
        }
        Ok(())
    }
}

/// Log-distance path loss: RSS at distance `d` meters.
pub fn ldpl_rss(d: f64, params: &PropagationParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be > 0, got {d}")));
    }
    Ok(params.p_d0 - 10.0 * params.gamma * d.log10())
}

/// Distance implied by an RSS under the path loss model.
pub fn ldpl_distance(rss: f64, params: &PropagationParams) -> f64 {
    10f64.powf((params.p_d0 - rss) / (10.0 * params.gamma))
}

/// Path-loss branch of the factor: the reciprocal of the implied distance.
pub fn ldpl_factor(rss: f64, params: &PropagationParams) -> f64 {
    10f64.powf((rss - params.p_d0) / (10.0 * params.gamma))
}

/// Sigmoid branch of the factor, bounded above by `1 / a`.
pub fn sigmoid_factor(rss: f64, params: &PropagationParams) -> f64 {
    (1.0 / params.a) / (1.0 + (-2.0 * ((rss + 100.0) / 10.0 - params.c)).exp())
}

/// Un-normalized discrimination factor of one reading.
pub fn raw_factor(rss: f64, params: &PropagationParams) -> f64 {
    if rss <= params.f0 {
        ldpl_factor(rss, params)
    } else {
        sigmoid_factor(rss, params)
    }
}

/// Normalized per-AP weights for one fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationProfile {
    pub weights: BTreeMap<ApId, f64>,
}

impl DiscriminationProfile {
    pub fn weight(&self, ap: &ApId) -> f64 {
        self.weights.get(ap).copied().unwrap_or(0.0)
    }
}

pub fn profile(f: &Fingerprint, params: &PropagationParams) -> DiscriminationProfile {
    let raw: Vec<(ApId, f64)> = f
        .readings()
        .iter()
        .map(|(id, r)| (id.clone(), raw_factor(r.rss, params)))
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    DiscriminationProfile {
        weights: raw.into_iter().map(|(id, w)| (id, w / total)).collect(),
    }
}

/// Normalize raw factors in place. Used by the dense scoring path.
pub(crate) fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in weights {
            *w /= total;
        }
    }
}

/// Weight of `ap` when matching two profiles: the larger of the two, with 0
/// for an AP missing from a profile.
pub fn pairwise_weight(rho_s: &DiscriminationProfile, rho_t: &DiscriminationProfile, ap: &ApId) -> f64 {
    rho_s.weight(ap).max(rho_t.weight(ap))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PropagationParams {
        PropagationParams::default()
    }

    #[test]
    fn ldpl_examples() {
        let p = params();
        assert_eq!(ldpl_rss(1.0, &p).unwrap(), -30.0);
        assert!((ldpl_rss(10.0, &p).unwrap() + 60.0).abs() < 1e-12);
        assert!((ldpl_rss(100.0, &p).unwrap() + 90.0).abs() < 1e-12);
        assert!(ldpl_rss(0.0, &p).is_err());
        assert!(ldpl_rss(-1.0, &p).is_err());
    }

    #[test]
    fn raw_factor_examples() {
        let p = params();
        assert!((raw_factor(-90.0, &p) - 0.01).abs() < 1e-12);
        // -57 sits on the path-loss side of the watershed
        assert!((raw_factor(-57.0, &p) - 10f64.powf(-0.9)).abs() < 1e-12);
        assert!((raw_factor(-57.0, &p) - 0.125_89).abs() < 1e-5);
        assert!((sigmoid_factor(-57.0, &p) - 0.125).abs() < 1e-12);
        let expected = 0.25 / (1.0 + (-5.4f64).exp());
        assert!((raw_factor(-30.0, &p) - expected).abs() < 1e-12);
        assert!((raw_factor(-30.0, &p) - 0.248_88).abs() < 1e-5);
    }

    #[test]
    fn profile_examples() {
        let p = params();
        let single = Fingerprint::from_rss(0.0, [("a", -70.0)]).unwrap();
        assert_eq!(profile(&single, &p).weights.values().copied().collect::<Vec<_>>(), vec![1.0]);

        let two = Fingerprint::from_rss(0.0, [("a", -57.0), ("b", -87.0)]).unwrap();
        let prof = profile(&two, &p);
        let a = ApId::new("a").unwrap();
        let b = ApId::new("b").unwrap();
        assert!((prof.weight(&a) - 10.0 / 11.0).abs() < 1e-12);
        assert!((prof.weight(&b) - 1.0 / 11.0).abs() < 1e-12);

        let mut raw = [0.1, 0.3];
        normalize(&mut raw);
        assert!((raw[0] - 0.25).abs() < 1e-12 && (raw[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn pairwise_examples() {
        let id = |s: &str| ApId::new(s).unwrap();
        let s = DiscriminationProfile {
            weights: [(id("a"), 0.2), (id("c"), 0.3)].into_iter().collect(),
        };
        let t = DiscriminationProfile {
            weights: [(id("a"), 0.5)].into_iter().collect(),
        };
        assert_eq!(pairwise_weight(&s, &t, &id("a")), 0.5);
        assert_eq!(pairwise_weight(&s, &t, &id("zz")), 0.0);
        assert_eq!(pairwise_weight(&s, &t, &id("c")), 0.3);
    }

    #[test]
    fn factor_times_distance_is_one() {
        let p = params();
        for rss in [-100.0, -90.5, -75.25, -60.0, -57.0] {
            let prod = raw_factor(rss, &p) * ldpl_distance(rss, &p);
            assert!((prod - 1.0).abs() < 1e-12, "{rss}: {prod}");
        }
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        let bad = PropagationParams { gamma: 1.0, ..params() };
        assert!(bad.validate().is_err());
        let bad = PropagationParams { a: 0.0, ..params() };
        assert!(bad.validate().is_err());
        let bad = PropagationParams { f0: -10.0, ..params() };
        assert!(bad.validate().is_err());
    }
}

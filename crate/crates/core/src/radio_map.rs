//! Survey database: grid locations with their sample fingerprints.
//!
//! Besides the raw samples, a [`RadioMap`] keeps a dense per-location summary
//! indexed by AP registry position. Scoring code works on those dense rows so
//! the hot loops never touch string keys.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::fingerprint::{ApId, Fingerprint, Location, Reading, RSS_FLOOR};

/// Sorted set of every AP id seen in the survey.
#[derive(Debug, Clone, Default)]
pub struct ApRegistry {
    ids: Vec<ApId>,
    index: HashMap<ApId, usize>,
}

impl ApRegistry {
    pub fn from_ids<'a>(ids: impl IntoIterator<Item = &'a ApId>) -> Self {
        let set: BTreeSet<&ApId> = ids.into_iter().collect();
        let ids: Vec<ApId> = set.into_iter().cloned().collect();
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        ApRegistry { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &ApId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, idx: usize) -> &ApId {
        &self.ids[idx]
    }

    pub fn ids(&self) -> &[ApId] {
        &self.ids
    }

    pub fn contains(&self, id: &ApId) -> bool {
        self.index.contains_key(id)
    }
}

/// One surveyed location and its raw sample fingerprints.
#[derive(Debug, Clone, PartialEq)]
pub struct MapEntry {
    pub location: Location,
    pub samples: Vec<Fingerprint>,
}

/// Dense summary of one location. Absent values are `NaN`.
#[derive(Debug, Clone)]
pub struct LocationStats {
    /// Per-AP mean over the samples that detected the AP.
    pub mean: Vec<f64>,
    /// Registry indices of APs detected in at least one sample, ascending.
    pub present: Vec<usize>,
    /// Row-major `samples x registry` RSS table.
    pub samples: Vec<f64>,
    pub sample_count: usize,
    /// Per-AP mean with the floor substituted for missed samples.
    pub floored_mean: Vec<f64>,
    /// Per-AP standard deviation with the floor substituted for missed samples.
    pub floored_std: Vec<f64>,
}

impl LocationStats {
    fn build(samples: &[Fingerprint], registry: &ApRegistry) -> Self {
        let r = registry.len();
        let m = samples.len();
        let mut table = vec![f64::NAN; m * r];
        for (k, s) in samples.iter().enumerate() {
            for (id, reading) in s.readings() {
                let i = registry.index_of(id).expect("registry built from samples");
                table[k * r + i] = reading.rss;
            }
        }
        let mut mean = vec![f64::NAN; r];
        let mut floored_mean = vec![RSS_FLOOR; r];
        let mut floored_std = vec![0.0; r];
        let mut present = Vec::new();
        for i in 0..r {
            let (mut sum, mut count) = (0.0, 0usize);
            for k in 0..m {
                let v = table[k * r + i];
                if !v.is_nan() {
                    sum += v;
                    count += 1;
                }
            }
            if count > 0 {
                mean[i] = sum / count as f64;
                present.push(i);
            }
            let col = (0..m).map(|k| {
                let v = table[k * r + i];
                if v.is_nan() {
                    RSS_FLOOR
                } else {
                    v
                }
            });
            let fm = col.clone().sum::<f64>() / m as f64;
            let var = if m > 1 {
                col.map(|v| (v - fm) * (v - fm)).sum::<f64>() / (m - 1) as f64
            } else {
                0.0
            };
            floored_mean[i] = fm;
            floored_std[i] = var.sqrt();
        }
        LocationStats {
            mean,
            present,
            samples: table,
            sample_count: m,
            floored_mean,
            floored_std,
        }
    }

    pub fn sample_row(&self, k: usize) -> &[f64] {
        let r = self.mean.len();
        &self.samples[k * r..(k + 1) * r]
    }
}

/// The fingerprint database.
#[derive(Debug, Clone)]
pub struct RadioMap {
    grid_spacing: f64,
    entries: Vec<MapEntry>,
    registry: ApRegistry,
    stats: Vec<LocationStats>,
    /// Entry indices sorted by x, for range lookups.
    by_x: Vec<usize>,
}

impl RadioMap {
    pub fn new(grid_spacing: f64, entries: Vec<MapEntry>) -> Result<Self> {
        if !(grid_spacing.is_finite() && grid_spacing > 0.0) {
            return Err(Error::InvalidMap(format!(
                "grid_spacing must be > 0, got {grid_spacing}"
            )));
        }
        if entries.is_empty() {
            return Err(Error::InvalidMap("radio map has no locations".into()));
        }
        for e in &entries {
            if !e.location.is_finite() {
                return Err(Error::InvalidMap("non-finite location".into()));
            }
            if e.samples.is_empty() {
                return Err(Error::InvalidMap(format!(
                    "location ({}, {}) has no samples",
                    e.location.x, e.location.y
                )));
            }
        }
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by(|&a, &b| entries[a].location.lex_cmp(&entries[b].location));
        for w in order.windows(2) {
            if entries[w[0]].location == entries[w[1]].location {
                let l = entries[w[0]].location;
                return Err(Error::InvalidMap(format!("duplicate location ({}, {})", l.x, l.y)));
            }
        }
        let registry =
            ApRegistry::from_ids(entries.iter().flat_map(|e| e.samples.iter().flat_map(|s| s.aps())));
        let stats = entries
            .iter()
            .map(|e| LocationStats::build(&e.samples, &registry))
            .collect();
        let mut by_x: Vec<usize> = (0..entries.len()).collect();
        by_x.sort_by(|&a, &b| entries[a].location.x.total_cmp(&entries[b].location.x));
        Ok(RadioMap {
            grid_spacing,
            entries,
            registry,
            stats,
            by_x,
        })
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn registry(&self) -> &ApRegistry {
        &self.registry
    }

    pub fn location(&self, idx: usize) -> Location {
        self.entries[idx].location
    }

    pub fn stats(&self, idx: usize) -> &LocationStats {
        &self.stats[idx]
    }

    pub fn index_of(&self, loc: &Location) -> Option<usize> {
        self.entries.iter().position(|e| e.location == *loc)
    }

    /// Per-AP mean fingerprint of one location.
    pub fn mean_fingerprint(&self, idx: usize) -> Fingerprint {
        let st = &self.stats[idx];
        let readings: BTreeMap<ApId, Reading> = st
            .present
            .iter()
            .map(|&i| (self.registry.id(i).clone(), Reading { rss: st.mean[i], t: 0.0 }))
            .collect();
        Fingerprint::new(readings).expect("every location has at least one detected AP")
    }

    /// Indices of locations with `x` in `[lo, hi]`.
    pub fn indices_in_x_range(&self, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
        let start = self
            .by_x
            .partition_point(|&i| self.entries[i].location.x < lo);
        self.by_x[start..]
            .iter()
            .copied()
            .take_while(move |&i| self.entries[i].location.x <= hi)
    }

    /// Keep only locations lying on a coarser grid of `spacing` meters,
    /// anchored at the map's minimum corner.
    pub fn decimate(&self, spacing: f64) -> Result<RadioMap> {
        let ratio = spacing / self.grid_spacing;
        if !(ratio.is_finite() && ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-6) {
            return Err(Error::InvalidArgument(format!(
                "spacing {spacing} is not a multiple of the base spacing {}",
                self.grid_spacing
            )));
        }
        let min_x = self.entries.iter().map(|e| e.location.x).fold(f64::INFINITY, f64::min);
        let min_y = self.entries.iter().map(|e| e.location.y).fold(f64::INFINITY, f64::min);
        let on_grid = |v: f64, origin: f64| {
            let k = (v - origin) / spacing;
            (k - k.round()).abs() < 1e-6
        };
        let kept: Vec<MapEntry> = self
            .entries
            .iter()
            .filter(|e| on_grid(e.location.x, min_x) && on_grid(e.location.y, min_y))
            .cloned()
            .collect();
        RadioMap::new(spacing, kept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(x: f64, y: f64, samples: &[&[(&str, f64)]]) -> MapEntry {
        MapEntry {
            location: Location::new(x, y),
            samples: samples
                .iter()
                .map(|s| Fingerprint::from_rss(0.0, s.iter().map(|(a, r)| (a.to_string(), *r))).unwrap())
                .collect(),
        }
    }

    #[test]
    fn stats_and_means() {
        let map = RadioMap::new(
            1.0,
            vec![entry(0.0, 0.0, &[&[("a", -50.0), ("b", -70.0)], &[("a", -54.0)]])],
        )
        .unwrap();
        let st = map.stats(0);
        assert_eq!(st.mean, vec![-52.0, -70.0]);
        assert_eq!(st.present, vec![0, 1]);
        assert_eq!(st.floored_mean[1], -85.0);
        assert!(st.sample_row(1)[1].is_nan());
        let mean = map.mean_fingerprint(0);
        assert_eq!(mean.len(), 2);
    }

    #[test]
    fn rejects_bad_maps() {
        assert!(RadioMap::new(0.0, vec![entry(0.0, 0.0, &[&[("a", -50.0)]])]).is_err());
        assert!(RadioMap::new(1.0, vec![]).is_err());
        assert!(RadioMap::new(
            1.0,
            vec![MapEntry {
                location: Location::new(0.0, 0.0),
                samples: vec![]
            }]
        )
        .is_err());
        let dup = vec![entry(1.0, 1.0, &[&[("a", -50.0)]]), entry(1.0, 1.0, &[&[("a", -51.0)]])];
        assert!(RadioMap::new(1.0, dup).is_err());
    }

    #[test]
    fn decimate_grid() {
        let mut entries = Vec::new();
        for i in 0..=10 {
            for j in 0..=10 {
                entries.push(entry(i as f64, j as f64, &[&[("a", -50.0)]]));
            }
        }
        let map = RadioMap::new(1.0, entries).unwrap();
        assert_eq!(map.decimate(1.0).unwrap().len(), 121);
        assert_eq!(map.decimate(2.0).unwrap().len(), 36);
        assert_eq!(map.decimate(3.0).unwrap().len(), 16);
        assert!(map.decimate(1.5).is_err());
        let xs: Vec<usize> = map.indices_in_x_range(2.0, 3.0).collect();
        assert_eq!(xs.len(), 22);
    }
}

//! Query streams: raw traces in, filtered queries with motion estimates out.

use std::collections::BTreeMap;

use crate::config::Config;
use crate::fingerprint::{moving_average, ApId, Fingerprint, Location};
use crate::phantom::{detect_outdated, integrate_motion, MotionEstimate, MotionStep};

/// One scan of a trace as read from a query file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceScan {
    /// Scan completion time, seconds.
    pub t: f64,
    pub fingerprint: Fingerprint,
    pub truth: Option<Location>,
    /// Dead-reckoned `(distance, heading)` since the previous scan.
    pub step: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryTrace {
    pub id: String,
    pub scans: Vec<TraceScan>,
}

impl QueryTrace {
    pub fn has_motion(&self) -> bool {
        self.scans.iter().any(|s| s.step.is_some())
    }
}

/// A localization request: a filtered fingerprint plus per-AP motion
/// estimates for its outdated readings.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub trace_id: String,
    pub t: f64,
    pub fingerprint: Fingerprint,
    pub truth: Option<Location>,
    pub motions: BTreeMap<ApId, MotionEstimate>,
}

impl Query {
    /// A query with no motion information.
    pub fn single(fingerprint: Fingerprint) -> Self {
        Query {
            trace_id: String::new(),
            t: fingerprint.latest_t(),
            fingerprint,
            truth: None,
            motions: BTreeMap::new(),
        }
    }

    pub fn with_truth(mut self, truth: Location) -> Self {
        self.truth = Some(truth);
        self
    }
}

/// Filter every trace and attach motion estimates. Output order follows the
/// input traces and scans.
pub fn prepare_queries(traces: &[QueryTrace], config: &Config) -> Vec<Query> {
    let mut out = Vec::new();
    for trace in traces {
        let raw: Vec<Fingerprint> = trace.scans.iter().map(|s| s.fingerprint.clone()).collect();
        let filtered = moving_average(&raw, config.filter.window);
        let steps: Vec<MotionStep> = trace
            .scans
            .iter()
            .filter_map(|s| {
                s.step.map(|(step_len, heading)| MotionStep {
                    t: s.t,
                    step_len,
                    heading,
                })
            })
            .collect();
        for (scan, fp) in trace.scans.iter().zip(filtered) {
            let mut motions = BTreeMap::new();
            if trace.has_motion() {
                let upto = steps.partition_point(|s| s.t <= scan.t);
                let history = &steps[..upto];
                for (ap, entry) in detect_outdated(&fp, config.phantom.staleness_s).outdated() {
                    let (ell, theta) = integrate_motion(history, scan.t, entry.dt);
                    motions.insert(
                        ap.clone(),
                        MotionEstimate {
                            ell,
                            theta,
                            d_ell: config.phantom.dl_m,
                            d_theta: config.phantom.dtheta_rad,
                        },
                    );
                }
            }
            out.push(Query {
                trace_id: trace.id.clone(),
                t: scan.t,
                fingerprint: fp,
                truth: scan.truth,
                motions,
            });
        }
    }
    out
}

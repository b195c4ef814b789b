//! WiFi fingerprint indoor localization with discrimination-factor weighting,
//! robust regression against RSS outliers, a common-AP ratio, and phantom
//! fingerprints for outdated scan results. Includes a propagation simulator
//! and an evaluation harness.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod discrimination;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod io;
pub mod localizer;
pub mod par;
pub mod phantom;
pub mod radio_map;
pub mod robust;
pub mod sim;
pub mod trace;

pub use config::{Config, Modules};
pub use error::{Error, Result};
pub use fingerprint::{ApId, Fingerprint, Location, Reading, RsdVector};
pub use localizer::{
    basic_localize, dorfin_localize, horus_localize, localize, localize_with, radar_localize, LocationEstimate,
    MatchScore, Method,
};
pub use radio_map::{MapEntry, RadioMap};
pub use trace::{prepare_queries, Query, QueryTrace, TraceScan};

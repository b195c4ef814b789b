//! Synthetic environments: log-distance propagation with Gaussian noise, body
//! blockage, passive scans that replay stale results, grid surveys and
//! walking trajectories.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::discrimination::{ldpl_rss, PropagationParams};
use crate::error::{Error, Result};
use crate::fingerprint::{ApId, Fingerprint, Location, Reading};
use crate::radio_map::{MapEntry, RadioMap};
use crate::trace::{QueryTrace, TraceScan};

/// Distances are clamped to this before applying the path loss model.
const MIN_DISTANCE_M: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApSpec {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_p_d0")]
    pub p_d0: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_p_d0() -> f64 {
    -30.0
}

fn default_gamma() -> f64 {
    3.0
}

/// Per-AP probability that a scan misses the AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MissRates {
    Fixed(f64),
    /// One value per AP, in `aps` order.
    PerAp(Vec<f64>),
    /// Drawn uniformly per AP from `[min, max]`.
    Range { min: f64, max: f64 },
}

impl Default for MissRates {
    fn default() -> Self {
        MissRates::Range { min: 0.02, max: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanSpec {
    pub period_s: f64,
    pub miss_rates: MissRates,
    pub max_staleness_s: f64,
    pub detection_floor: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            period_s: 1.4,
            miss_rates: MissRates::default(),
            max_staleness_s: 5.0,
            detection_floor: -90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveySpec {
    pub grid_spacing: f64,
    pub samples_per_location: usize,
}

impl Default for SurveySpec {
    fn default() -> Self {
        SurveySpec {
            grid_spacing: 1.0,
            samples_per_location: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Location>,
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// Body heading while standing still (single waypoint).
    #[serde(default)]
    pub heading: f64,
}

fn default_speed() -> f64 {
    1.2
}

/// Randomly generated walks: `legs` straight segments between uniform
/// waypoints, each walk at its own speed drawn from `[speed_min, speed_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomWalks {
    pub count: usize,
    pub legs: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Keep waypoints this far from the walls.
    pub margin: f64,
}

impl Default for RandomWalks {
    fn default() -> Self {
        RandomWalks {
            count: 0,
            legs: 3,
            speed_min: 0.6,
            speed_max: 1.5,
            margin: 1.0,
        }
    }
}

/// Stationary users at uniform positions with a fixed random body heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaticQueries {
    pub count: usize,
    pub scans_per_query: usize,
    /// Snap positions to the survey grid.
    pub on_grid: bool,
}

impl Default for StaticQueries {
    fn default() -> Self {
        StaticQueries {
            count: 0,
            scans_per_query: 3,
            on_grid: false,
        }
    }
}

/// Noise on the dead-reckoned motion columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepNoise {
    /// Relative step-length error, uniform in `[-r, r]`.
    pub length_rel: f64,
    /// Heading error, uniform in `[-h, h]` radians.
    pub heading_rad: f64,
}

impl Default for StepNoise {
    fn default() -> Self {
        StepNoise {
            length_rel: 0.02,
            heading_rad: 0.1309,
        }
    }
}

impl StepNoise {
    pub const NONE: StepNoise = StepNoise {
        length_rel: 0.0,
        heading_rad: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub width: f64,
    pub height: f64,
    pub aps: Vec<ApSpec>,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default = "default_true")]
    pub body_blockage: bool,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub survey: SurveySpec,
    /// Survey-time noise; defaults to `noise_std`.
    #[serde(default)]
    pub survey_noise_std: Option<f64>,
    #[serde(default)]
    pub static_queries: StaticQueries,
    #[serde(default)]
    pub trajectories: Vec<TrajectorySpec>,
    #[serde(default)]
    pub random_walks: RandomWalks,
    #[serde(default)]
    pub step_noise: StepNoise,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    3.0
}

fn default_true() -> bool {
    true
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("environment width and height must be > 0".into());
        }
        if self.aps.is_empty() {
            return bad("environment needs at least one AP".into());
        }
        for ap in &self.aps {
            ApId::new(ap.id.clone())?;
            if !self.contains(&Location::new(ap.x, ap.y)) {
                return bad(format!("AP {} outside the environment", ap.id));
            }
            ap_params(ap).validate()?;
        }
        if !(self.noise_std >= 0.0) || !(self.survey_noise_std.unwrap_or(0.0) >= 0.0) {
            return bad("noise_std must be >= 0".into());
        }
        if !(self.scan.period_s > 0.0) || !(self.scan.max_staleness_s >= 0.0) {
            return bad("scan period must be > 0 and max staleness >= 0".into());
        }
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        match &self.scan.miss_rates {
            MissRates::Fixed(r) if !rate_ok(*r) => return bad("miss rate outside [0, 1]".into()),
            MissRates::PerAp(v) if v.len() != self.aps.len() || !v.iter().all(|r| rate_ok(*r)) => {
                return bad("per-AP miss rates must match the AP list and lie in [0, 1]".into())
            }
            MissRates::Range { min, max } if !(rate_ok(*min) && rate_ok(*max) && min <= max) => {
                return bad("miss rate range must satisfy 0 <= min <= max <= 1".into())
            }
            _ => {}
        }
        if !(self.survey.grid_spacing > 0.0) || self.survey.samples_per_location == 0 {
            return bad("survey needs grid_spacing > 0 and samples_per_location >= 1".into());
        }
        for tr in &self.trajectories {
            if tr.waypoints.is_empty() || !(tr.speed > 0.0) {
                return bad("trajectories need waypoints and speed > 0".into());
            }
            if let Some(p) = tr.waypoints.iter().find(|p| !self.contains(p)) {
                return bad(format!("waypoint ({}, {}) outside the environment", p.x, p.y));
            }
        }
        let w = &self.random_walks;
        if w.count > 0 && !(w.legs >= 1 && w.speed_min > 0.0 && w.speed_min <= w.speed_max) {
            return bad("random walks need legs >= 1 and 0 < speed_min <= speed_max".into());
        }
        if self.static_queries.count > 0 && self.static_queries.scans_per_query == 0 {
            return bad("static queries need scans_per_query >= 1".into());
        }
        Ok(())
    }

    pub fn contains(&self, p: &Location) -> bool {
        p.is_finite() && (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Environment = serde_json::from_str(text)?;
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Environment::from_json(&std::fs::read_to_string(path)?)
    }

    /// Survey grid points, row by row from the origin.
    pub fn grid(&self, spacing: f64) -> Vec<Location> {
        let nx = (self.width / spacing + 1e-9).floor() as usize;
        let ny = (self.height / spacing + 1e-9).floor() as usize;
        let mut pts = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                pts.push(Location::new(i as f64 * spacing, j as f64 * spacing));
            }
        }
        pts
    }
}

fn ap_params(ap: &ApSpec) -> PropagationParams {
    PropagationParams {
        p_d0: ap.p_d0,
        gamma: ap.gamma,
        ..PropagationParams::default()
    }
}

fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Scan-level settings derived from an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanModel {
    pub period_s: f64,
    /// One rate per AP, in environment order.
    pub miss_rates: Vec<f64>,
    pub max_staleness_s: f64,
    pub detection_floor: f64,
}

impl ScanModel {
    /// Resolve the environment's miss-rate description, drawing ranges from `rng`.
    pub fn from_env<R: Rng>(env: &Environment, rng: &mut R) -> Self {
        let n = env.aps.len();
        let miss_rates = match &env.scan.miss_rates {
            MissRates::Fixed(r) => vec![*r; n],
            MissRates::PerAp(v) => v.clone(),
            MissRates::Range { min, max } => (0..n)
                .map(|_| if max > min { rng.gen_range(*min..=*max) } else { *min })
                .collect(),
        };
        ScanModel {
            period_s: env.scan.period_s,
            miss_rates,
            max_staleness_s: env.scan.max_staleness_s,
            detection_floor: env.scan.detection_floor,
        }
    }

    /// Same model with every miss rate zero.
    pub fn without_misses(&self) -> Self {
        ScanModel {
            miss_rates: vec![0.0; self.miss_rates.len()],
            ..self.clone()
        }
    }
}

/// RSS from AP `ap` at `position`, or `None` below the detection floor.
/// `body_heading` enables blockage for APs behind the user.
pub fn true_rss<R: Rng>(
    env: &Environment,
    ap: usize,
    position: &Location,
    body_heading: Option<f64>,
    noise_std: f64,
    detection_floor: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    if !env.contains(position) {
        return Err(Error::Domain(format!(
            "position ({}, {}) outside the environment",
            position.x, position.y
        )));
    }
    let spec = env
        .aps
        .get(ap)
        .ok_or_else(|| Error::InvalidArgument(format!("no AP with index {ap}")))?;
    let ap_loc = Location::new(spec.x, spec.y);
    let d = position.distance(&ap_loc).max(MIN_DISTANCE_M);
    let mut rss = ldpl_rss(d, &ap_params(spec))?;
    if noise_std > 0.0 {
        rss += Normal::new(0.0, noise_std)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng);
    }
    if let Some(h) = body_heading {
        let bearing = (ap_loc.y - position.y).atan2(ap_loc.x - position.x);
        if wrap_angle(bearing - h).abs() > PI / 2.0 {
            rss -= rng.gen_range(5.0..=10.0);
        }
    }
    Ok((rss >= detection_floor).then_some(rss))
}

/// Last detection of every AP, replayed when a scan misses it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanHistory {
    last: BTreeMap<usize, Reading>,
}

/// One passive scan at time `t`. Each detectable AP is missed with its miss
/// rate; a missed AP repeats its last detection if that is at most
/// `max_staleness_s` old. Returns `None` when nothing is heard.
#[allow(clippy::too_many_arguments)]
pub fn scan<R: Rng>(
    env: &Environment,
    model: &ScanModel,
    position: &Location,
    t: f64,
    body_heading: Option<f64>,
    noise_std: f64,
    history: &mut ScanHistory,
    rng: &mut R,
) -> Result<Option<Fingerprint>> {
    let mut readings = BTreeMap::new();
    for (i, ap) in env.aps.iter().enumerate() {
        let rss = true_rss(env, i, position, body_heading, noise_std, model.detection_floor, rng)?;
        let Some(rss) = rss else { continue };
        let missed = model.miss_rates[i] > 0.0 && rng.gen_bool(model.miss_rates[i]);
        let reading = if missed {
            match history.last.get(&i) {
                Some(r) if t - r.t <= model.max_staleness_s + 1e-9 => *r,
                _ => continue,
            }
        } else {
            let r = Reading { rss, t };
            history.last.insert(i, r);
            r
        };
        readings.insert(ApId::new(ap.id.clone())?, reading);
    }
    if readings.is_empty() {
        return Ok(None);
    }
    Ok(Some(Fingerprint::new(readings)?))
}

/// Body-free, miss-free scans at every grid point.
pub fn survey<R: Rng>(
    env: &Environment,
    grid_spacing: f64,
    samples_per_location: usize,
    model: &ScanModel,
    noise_std: f64,
    rng: &mut R,
) -> Result<RadioMap> {
    let model = model.without_misses();
    let mut entries = Vec::new();
    for loc in env.grid(grid_spacing) {
        let mut history = ScanHistory::default();
        let mut samples = Vec::with_capacity(samples_per_location);
        for k in 0..samples_per_location {
            let t = k as f64 * model.period_s;
            if let Some(fp) = scan(env, &model, &loc, t, None, noise_std, &mut history, rng)? {
                samples.push(fp);
            }
        }
        if samples.is_empty() {
            return Err(Error::InvalidMap(format!(
                "no AP detectable at survey point ({}, {})",
                loc.x, loc.y
            )));
        }
        entries.push(MapEntry { location: loc, samples });
    }
    RadioMap::new(grid_spacing, entries)
}

fn polyline_point(waypoints: &[Location], s: f64) -> (Location, Option<f64>) {
    let mut remaining = s;
    for w in waypoints.windows(2) {
        let len = w[0].distance(&w[1]);
        let heading = (w[1].y - w[0].y).atan2(w[1].x - w[0].x);
        if len > 0.0 && remaining <= len {
            let f = remaining / len;
            let p = Location::new(w[0].x + f * (w[1].x - w[0].x), w[0].y + f * (w[1].y - w[0].y));
            return (p, Some(heading));
        }
        remaining -= len;
    }
    let last = *waypoints.last().expect("validated trajectory");
    let heading = waypoints
        .windows(2)
        .rev()
        .find(|w| w[0] != w[1])
        .map(|w| (w[1].y - w[0].y).atan2(w[1].x - w[0].x));
    (last, heading)
}

/// Walk `trajectory`, scanning every period. Body heading follows the travel
/// direction; motion columns carry the noisy displacement since the previous
/// scan.
#[allow(clippy::too_many_arguments)]
pub fn walk<R: Rng>(
    env: &Environment,
    id: &str,
    trajectory: &TrajectorySpec,
    model: &ScanModel,
    step_noise: StepNoise,
    body: bool,
    noise_std: f64,
    rng: &mut R,
) -> Result<QueryTrace> {
    let length: f64 = trajectory.waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum();
    let duration = length / trajectory.speed;
    let n_scans = (duration / model.period_s + 1e-9).floor() as usize + 1;
    let mut history = ScanHistory::default();
    let mut scans = Vec::with_capacity(n_scans);
    let mut prev: Option<Location> = None;
    for k in 0..n_scans {
        let t = k as f64 * model.period_s;
        let (pos, heading) = polyline_point(&trajectory.waypoints, trajectory.speed * t);
        let heading = heading.unwrap_or(trajectory.heading);
        let step = match prev {
            None => (0.0, heading),
            Some(p) => {
                let len = p.distance(&pos);
                let dir = if len > 0.0 { (pos.y - p.y).atan2(pos.x - p.x) } else { heading };
                let noisy_len = if step_noise.length_rel > 0.0 {
                    len * (1.0 + rng.gen_range(-step_noise.length_rel..=step_noise.length_rel))
                } else {
                    len
                };
                let noisy_dir = if step_noise.heading_rad > 0.0 {
                    dir + rng.gen_range(-step_noise.heading_rad..=step_noise.heading_rad)
                } else {
                    dir
                };
                (noisy_len, noisy_dir)
            }
        };
        prev = Some(pos);
        let body_heading = body.then_some(heading);
        if let Some(fp) = scan(env, model, &pos, t, body_heading, noise_std, &mut history, rng)? {
            scans.push(TraceScan {
                t,
                fingerprint: fp,
                truth: Some(pos),
                step: Some(step),
            });
        }
    }
    Ok(QueryTrace { id: id.to_string(), scans })
}

/// Output of a full simulation run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub map: RadioMap,
    pub traces: Vec<QueryTrace>,
    pub scan_model: ScanModel,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream.wrapping_add(1))))
}

const STREAM_MODEL: u64 = 0;
const STREAM_SURVEY: u64 = 1;
const STREAM_LAYOUT: u64 = 2;
const STREAM_TRACES: u64 = 1 << 32;

/// Survey the environment and generate every configured query trace:
/// static users (`s0`, `s1`, ...), listed trajectories (`t0`, ...) and random
/// walks (`w0`, ...). All randomness derives from `seed`.
pub fn simulate(env: &Environment, seed: u64) -> Result<Simulation> {
    env.validate()?;
    let model = ScanModel::from_env(env, &mut stream_rng(seed, STREAM_MODEL));
    let survey_noise = env.survey_noise_std.unwrap_or(env.noise_std);
    let map = survey(
        env,
        env.survey.grid_spacing,
        env.survey.samples_per_location,
        &model,
        survey_noise,
        &mut stream_rng(seed, STREAM_SURVEY),
    )?;

    let mut layout = stream_rng(seed, STREAM_LAYOUT);
    let mut specs: Vec<(String, TrajectorySpec)> = Vec::new();
    let sq = &env.static_queries;
    let grid = env.grid(env.survey.grid_spacing);
    for i in 0..sq.count {
        let pos = if sq.on_grid {
            grid[layout.gen_range(0..grid.len())]
        } else {
            Location::new(layout.gen_range(0.0..=env.width), layout.gen_range(0.0..=env.height))
        };
        let heading = layout.gen_range(-PI..PI);
        specs.push((
            format!("s{i}"),
            TrajectorySpec {
                waypoints: vec![pos],
                speed: 1.0,
                heading,
            },
        ));
    }
    for (i, tr) in env.trajectories.iter().enumerate() {
        specs.push((format!("t{i}"), tr.clone()));
    }
    let rw = &env.random_walks;
    let m = rw.margin.min(env.width / 2.0).min(env.height / 2.0);
    for i in 0..rw.count {
        let waypoints = (0..=rw.legs)
            .map(|_| Location::new(layout.gen_range(m..=env.width - m), layout.gen_range(m..=env.height - m)))
            .collect();
        let speed = if rw.speed_max > rw.speed_min {
            layout.gen_range(rw.speed_min..=rw.speed_max)
        } else {
            rw.speed_min
        };
        specs.push((
            format!("w{i}"),
            TrajectorySpec {
                waypoints,
                speed,
                heading: 0.0,
            },
        ));
    }

    let mut traces = Vec::with_capacity(specs.len());
    for (k, (id, spec)) in specs.iter().enumerate() {
        let mut rng = stream_rng(seed, STREAM_TRACES + k as u64);
        let trace = if id.starts_with('s') {
            static_trace(env, id, spec, &model, sq.scans_per_query, &mut rng)?
        } else {
            walk(env, id, spec, &model, env.step_noise, env.body_blockage, env.noise_std, &mut rng)?
        };
        if !trace.scans.is_empty() {
            traces.push(trace);
        }
    }
    Ok(Simulation {
        map,
        traces,
        scan_model: model,
    })
}

fn static_trace<R: Rng>(
    env: &Environment,
    id: &str,
    spec: &TrajectorySpec,
    model: &ScanModel,
    n_scans: usize,
    rng: &mut R,
) -> Result<QueryTrace> {
    let pos = spec.waypoints[0];
    let body = env.body_blockage.then_some(spec.heading);
    let mut history = ScanHistory::default();
    let mut scans = Vec::with_capacity(n_scans);
    for k in 0..n_scans {
        let t = k as f64 * model.period_s;
        if let Some(fp) = scan(env, model, &pos, t, body, env.noise_std, &mut history, rng)? {
            scans.push(TraceScan {
                t,
                fingerprint: fp,
                truth: Some(pos),
                step: None,
            });
        }
    }
    Ok(QueryTrace { id: id.to_string(), scans })
}

/// Environments used by the tests, benches and shipped data files.
pub mod presets {
    use super::*;

    fn scattered_aps(n: usize, width: f64, height: f64, p_d0: (f64, f64), gamma: (f64, f64), seed: u64) -> Vec<ApSpec> {
        let mut rng = stream_rng(seed, 7);
        (0..n)
            .map(|i| ApSpec {
                id: format!("ap{i:02}"),
                x: rng.gen_range(0.0..=width),
                y: rng.gen_range(0.0..=height),
                p_d0: rng.gen_range(p_d0.0..=p_d0.1),
                gamma: rng.gen_range(gamma.0..=gamma.1),
            })
            .collect()
    }

    /// 20 x 20 m, 8 APs, no noise, no misses, no body.
    pub fn noiseless() -> Environment {
        Environment {
            width: 20.0,
            height: 20.0,
            aps: scattered_aps(8, 20.0, 20.0, (-35.0, -30.0), (2.5, 3.0), 1),
            noise_std: 0.0,
            body_blockage: false,
            scan: ScanSpec {
                miss_rates: MissRates::Fixed(0.0),
                detection_floor: -100.0,
                ..ScanSpec::default()
            },
            survey: SurveySpec {
                grid_spacing: 1.0,
                samples_per_location: 1,
            },
            survey_noise_std: None,
            static_queries: StaticQueries::default(),
            trajectories: Vec::new(),
            random_walks: RandomWalks::default(),
            step_noise: StepNoise::NONE,
            seed: 0,
        }
    }

    /// Noisy static workload: 3 dB noise, body blockage, 20 APs, -90 dBm floor.
    pub fn standard_static(layout_seed: u64) -> Environment {
        Environment {
            width: 20.0,
            height: 20.0,
            aps: scattered_aps(20, 20.0, 20.0, (-45.0, -35.0), (3.2, 3.8), layout_seed),
            noise_std: 3.0,
            body_blockage: true,
            scan: ScanSpec {
                miss_rates: MissRates::Fixed(0.0),
                detection_floor: -90.0,
                ..ScanSpec::default()
            },
            survey: SurveySpec {
                grid_spacing: 1.0,
                samples_per_location: 3,
            },
            survey_noise_std: None,
            static_queries: StaticQueries {
                count: 170,
                scans_per_query: 3,
                on_grid: false,
            },
            trajectories: Vec::new(),
            random_walks: RandomWalks::default(),
            step_noise: StepNoise::default(),
            seed: layout_seed,
        }
    }

    /// Mobile workload: random walks under the outdated-scan model.
    pub fn standard_mobile(layout_seed: u64) -> Environment {
        Environment {
            scan: ScanSpec {
                miss_rates: MissRates::Range { min: 0.02, max: 0.25 },
                detection_floor: -90.0,
                ..ScanSpec::default()
            },
            static_queries: StaticQueries::default(),
            random_walks: RandomWalks {
                count: 30,
                legs: 3,
                speed_min: 0.6,
                speed_max: 1.5,
                margin: 1.0,
            },
            ..standard_static(layout_seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_ap_env() -> Environment {
        let mut env = presets::noiseless();
        env.aps = vec![ApSpec {
            id: "a".into(),
            x: 0.0,
            y: 0.0,
            p_d0: -30.0,
            gamma: 3.0,
        }];
        env
    }

    #[test]
    fn rss_examples() {
        let env = one_ap_env();
        let env = &env;
        let mut rng = stream_rng(1, 0);
        let at = |x: f64, rng: &mut ChaCha8Rng| {
            true_rss(env, 0, &Location::new(x, 0.0), None, 0.0, -100.0, rng).unwrap().unwrap()
        };
        assert_eq!(at(1.0, &mut rng), -30.0);
        assert!((at(10.0, &mut rng) + 60.0).abs() < 1e-12);
        // user at (10, 0) facing +x has the AP directly behind
        for _ in 0..200 {
            let v = true_rss(env, 0, &Location::new(10.0, 0.0), Some(0.0), 0.0, -100.0, &mut rng)
                .unwrap()
                .unwrap();
            assert!((-70.0..=-65.0).contains(&v), "{v}");
        }
        let front = true_rss(env, 0, &Location::new(10.0, 0.0), Some(PI), 0.0, -100.0, &mut rng).unwrap();
        assert!((front.unwrap() + 60.0).abs() < 1e-12);
        assert!(true_rss(env, 0, &Location::new(30.0, 0.0), None, 0.0, -100.0, &mut rng).is_err());
        assert_eq!(true_rss(env, 0, &Location::new(10.0, 0.0), None, 0.0, -50.0, &mut rng).unwrap(), None);
    }

    fn model(rate: f64, n: usize) -> ScanModel {
        ScanModel {
            period_s: 1.4,
            miss_rates: vec![rate; n],
            max_staleness_s: 5.0,
            detection_floor: -100.0,
        }
    }

    #[test]
    fn no_misses_means_fresh() {
        let env = presets::noiseless();
        let m = model(0.0, env.aps.len());
        let mut h = ScanHistory::default();
        let mut rng = stream_rng(3, 0);
        let fp = scan(&env, &m, &Location::new(5.0, 5.0), 2.8, None, 0.0, &mut h, &mut rng).unwrap().unwrap();
        assert_eq!(fp.len(), env.aps.len());
        assert!(fp.readings().values().all(|r| r.t == 2.8));
    }

    #[test]
    fn missed_ap_replays_until_stale() {
        let env = one_ap_env();
        let p = Location::new(3.0, 0.0);
        let mut h = ScanHistory::default();
        let mut rng = stream_rng(3, 0);
        scan(&env, &model(0.0, 1), &p, 0.0, None, 0.0, &mut h, &mut rng).unwrap().unwrap();
        let always = model(1.0, 1);
        let fp = scan(&env, &always, &p, 1.4, None, 0.0, &mut h, &mut rng).unwrap().unwrap();
        assert_eq!(fp.readings().values().next().unwrap().t, 0.0);
        for t in [2.8, 4.2] {
            assert!(scan(&env, &always, &p, t, None, 0.0, &mut h, &mut rng).unwrap().is_some());
        }
        assert!(scan(&env, &always, &p, 5.6, None, 0.0, &mut h, &mut rng).unwrap().is_none());
    }

    #[test]
    fn survey_grid_counts() {
        let mut env = presets::noiseless();
        env.width = 10.0;
        env.height = 10.0;
        env.aps.retain(|a| a.x <= 10.0 && a.y <= 10.0);
        env.aps.push(ApSpec {
            id: "z".into(),
            x: 5.0,
            y: 5.0,
            p_d0: -30.0,
            gamma: 3.0,
        });
        let m = ScanModel::from_env(&env, &mut stream_rng(0, 0));
        let map = survey(&env, 1.0, 60, &m, 1.0, &mut stream_rng(0, 1)).unwrap();
        assert_eq!(map.len(), 121);
        assert!(map.entries().iter().all(|e| e.samples.len() == 60));
        assert_eq!(map.decimate(2.0).unwrap().len(), 36);
    }

    #[test]
    fn walk_examples() {
        let env = presets::noiseless();
        let m = model(0.0, env.aps.len());
        let tr = TrajectorySpec {
            waypoints: vec![Location::new(2.0, 5.0), Location::new(14.0, 5.0)],
            speed: 1.2,
            heading: 0.0,
        };
        let trace = walk(&env, "w", &tr, &m, StepNoise::NONE, false, 0.0, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(trace.scans.len(), 8);
        for w in trace.scans.windows(2) {
            let d = w[0].truth.unwrap().distance(&w[1].truth.unwrap());
            assert!((d - 1.68).abs() < 1e-9);
            let (len, heading) = w[1].step.unwrap();
            assert!((len - 1.68).abs() < 1e-9 && heading.abs() < 1e-12);
        }

        let still = TrajectorySpec {
            waypoints: vec![Location::new(3.0, 3.0)],
            speed: 1.0,
            heading: 0.0,
        };
        let trace = walk(&env, "s", &still, &m, StepNoise::NONE, false, 0.0, &mut stream_rng(0, 0)).unwrap();
        assert!(trace.scans.iter().all(|s| s.truth == Some(Location::new(3.0, 3.0))));
    }

    #[test]
    fn seeded_runs_repeat() {
        let mut env = presets::standard_mobile(4);
        env.random_walks.count = 2;
        env.survey.samples_per_location = 2;
        let a = simulate(&env, 11).unwrap();
        let b = simulate(&env, 11).unwrap();
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.map.entries(), b.map.entries());
        let c = simulate(&env, 12).unwrap();
        assert_ne!(a.traces, c.traces);
    }

    #[test]
    fn env_json_round_trip() {
        let env = presets::standard_mobile(2);
        let text = serde_json::to_string(&env).unwrap();
        assert_eq!(Environment::from_json(&text).unwrap(), env);
        let minimal = r#"{"width": 5, "height": 5, "aps": [{"id": "a", "x": 1, "y": 1}],
            "scan": {"miss_rates": [0.1]}}"#;
        let env = Environment::from_json(minimal).unwrap();
        assert_eq!(env.scan.miss_rates, MissRates::PerAp(vec![0.1]));
        assert_eq!(env.noise_std, 3.0);
        assert!(Environment::from_json(r#"{"width": 5, "height": 5, "aps": [{"id": "a", "x": 9, "y": 1}]}"#).is_err());
    }
}

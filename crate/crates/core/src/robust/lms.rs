//! Least median of squares line fitting by elemental-set search.
//!
//! Every candidate line passes through two data points. Small problems try
//! every pair; large ones draw a fixed number of random pairs and then polish
//! the winner by pivoting on each of its two defining points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Residuals smaller than this are treated as exact zeros.
pub const ZERO_RESIDUAL: f64 = 1e-9;

const CHUNK: usize = 16;
const WARM_START_PROBES: usize = 16;
const PIVOT_CANDIDATES: usize = 48;
const MAX_REFINE_ROUNDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmsConfig {
    /// Problems with at most this many points are solved exhaustively.
    pub exact_threshold: usize,
    /// Random pairs drawn for larger problems.
    pub subsample_pairs: usize,
    /// Standardized residual above which an observation is an outlier.
    pub outlier_cutoff: f64,
    pub rng_seed: u64,
}

impl Default for LmsConfig {
    fn default() -> Self {
        LmsConfig {
            exact_threshold: 200,
            subsample_pairs: 3000,
            outlier_cutoff: 2.5,
            rng_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmsFit {
    /// Slope.
    pub theta1: f64,
    /// Intercept, dB.
    pub theta2: f64,
    pub median_sq_residual: f64,
    /// Robust residual scale, dB.
    pub scale: f64,
    /// All explanatory values were identical; slope forced to zero.
    pub degenerate: bool,
}

impl LmsFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.theta1 * x + self.theta2
    }
}

/// Median with the mean-of-two-central-elements rule for even lengths.
/// Reorders `values`.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of empty slice");
    let lo = (n - 1) / 2;
    let (_, lo_val, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    if n % 2 == 1 {
        lo_val
    } else {
        let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
        0.5 * (lo_val + hi_val)
    }
}

pub fn median(values: &[f64]) -> f64 {
    median_in_place(&mut values.to_vec())
}

/// LMS objective of a given line.
pub fn median_sq_residual(xs: &[f64], ys: &[f64], theta1: f64, theta2: f64) -> f64 {
    let mut sq: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - theta1 * x - theta2;
            r * r
        })
        .collect();
    median_in_place(&mut sq)
}

/// Preliminary LMS scale: `1.4826 (1 + 5 / (n - 2)) sqrt(med r^2)`.
pub fn lms_scale(n: usize, median_sq: f64) -> f64 {
    if median_sq <= 0.0 || n <= 2 {
        return 0.0;
    }
    1.4826 * (1.0 + 5.0 / (n as f64 - 2.0)) * median_sq.sqrt()
}

/// Ordinary least squares `(slope, intercept)`. Falls back to a flat line
/// through the mean when all x coincide.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        (0.0, my)
    } else {
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    theta1: f64,
    theta2: f64,
    objective: f64,
    pair: (usize, usize),
}

/// Reusable LMS solver over borrowed data.
pub struct LmsSolver<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    scratch: Vec<f64>,
}

impl<'a> LmsSolver<'a> {
    pub fn new(xs: &'a [f64], ys: &'a [f64]) -> Self {
        assert_eq!(xs.len(), ys.len());
        LmsSolver {
            xs,
            ys,
            scratch: Vec::with_capacity(xs.len()),
        }
    }

    fn n(&self) -> usize {
        self.xs.len()
    }

    fn objective(&mut self, theta1: f64, theta2: f64) -> f64 {
        self.scratch.clear();
        self.scratch.extend(self.xs.iter().zip(self.ys).map(|(x, y)| {
            let r = y - theta1 * x - theta2;
            r * r
        }));
        median_in_place(&mut self.scratch)
    }

    /// Objective of the line if it is strictly below `bound`.
    fn beats(&mut self, theta1: f64, theta2: f64, bound: f64) -> Option<f64> {
        if bound.is_finite() {
            let n = self.n();
            let need = (n - 1) / 2 + 1;
            let max_fail = n - need;
            let mut fails = 0usize;
            for (cx, cy) in self.xs.chunks(CHUNK).zip(self.ys.chunks(CHUNK)) {
                fails += cx
                    .iter()
                    .zip(cy)
                    .filter(|(x, y)| {
                        let r = *y - theta1 * *x - theta2;
                        r * r >= bound
                    })
                    .count();
                if fails > max_fail {
                    return None;
                }
            }
        }
        let obj = self.objective(theta1, theta2);
        (obj < bound).then_some(obj)
    }

    fn line_through(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        let (xi, xj) = (self.xs[i], self.xs[j]);
        if xi == xj {
            return None;
        }
        let slope = (self.ys[j] - self.ys[i]) / (xj - xi);
        Some((slope, self.ys[i] - slope * xi))
    }

    fn consider(&mut self, i: usize, j: usize, best: &mut Option<Candidate>) -> bool {
        let Some((t1, t2)) = self.line_through(i, j) else {
            return false;
        };
        let bound = best.map_or(f64::INFINITY, |b| b.objective);
        match self.beats(t1, t2, bound) {
            Some(objective) => {
                *best = Some(Candidate {
                    theta1: t1,
                    theta2: t2,
                    objective,
                    pair: (i, j),
                });
                true
            }
            None => false,
        }
    }

    fn degenerate(&mut self) -> LmsFit {
        let theta2 = median(self.ys);
        let med = self.objective(0.0, theta2);
        LmsFit {
            theta1: 0.0,
            theta2,
            median_sq_residual: med,
            scale: lms_scale(self.n(), med),
            degenerate: true,
        }
    }

    fn finish(&self, c: Candidate) -> LmsFit {
        LmsFit {
            theta1: c.theta1,
            theta2: c.theta2,
            median_sq_residual: c.objective,
            scale: lms_scale(self.n(), c.objective),
            degenerate: false,
        }
    }

    /// Exhaustive search over every pair of points.
    pub fn solve_exact(&mut self) -> LmsFit {
        let n = self.n();
        let mut best = None;
        // Deterministic probes give the pruning bound a good start.
        for s in 0..WARM_START_PROBES.min(n) {
            let i = s * n / WARM_START_PROBES.min(n);
            let j = (i + n / 2) % n;
            if i != j {
                self.consider(i.min(j), i.max(j), &mut best);
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                self.consider(i, j, &mut best);
            }
        }
        match best {
            Some(c) => self.finish(c),
            None => self.degenerate(),
        }
    }

    /// Random elemental sets followed by pivot refinement.
    pub fn solve_random(&mut self, draws: usize, seed: u64) -> LmsFit {
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = None;
        for _ in 0..draws {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            self.consider(i.min(j), i.max(j), &mut best);
        }
        if best.is_none() {
            // Sampling only hit vertical pairs; any non-vertical pair will do.
            let first = self.xs[0];
            if let Some(j) = self.xs.iter().position(|&x| x != first) {
                self.consider(0, j, &mut best);
            }
        }
        let Some(mut cur) = best else {
            return self.degenerate();
        };
        for _ in 0..MAX_REFINE_ROUNDS {
            let before = cur.objective;
            let mut order: Vec<usize> = (0..n).collect();
            let resid = |k: usize| (self.ys[k] - cur.theta1 * self.xs[k] - cur.theta2).abs();
            order.sort_by(|&a, &b| resid(a).total_cmp(&resid(b)).then(a.cmp(&b)));
            let inliers = &order[..(n / 2 + 1).min(n)];
            let stride = (inliers.len() / PIVOT_CANDIDATES).max(1);
            let (p0, p1) = cur.pair;
            let mut local = Some(cur);
            for pivot in [p0, p1] {
                for &k in inliers.iter().step_by(stride) {
                    if k != pivot {
                        self.consider(pivot.min(k), pivot.max(k), &mut local);
                    }
                }
            }
            cur = local.expect("seeded with current best");
            if cur.objective >= before {
                break;
            }
        }
        self.finish(cur)
    }

    pub fn solve(&mut self, cfg: &LmsConfig, seed: u64) -> LmsFit {
        let n = self.n();
        if n < 2 || self.xs.iter().all(|&x| x == self.xs[0]) {
            return self.degenerate();
        }
        let fit = if n <= cfg.exact_threshold {
            self.solve_exact()
        } else {
            self.solve_random(cfg.subsample_pairs.max(1), seed)
        };
        // Elemental lines can lose to least squares on tiny, spread-out samples.
        let (t1, t2) = ols_fit(self.xs, self.ys);
        let obj = self.objective(t1, t2);
        if obj < fit.median_sq_residual {
            LmsFit {
                theta1: t1,
                theta2: t2,
                median_sq_residual: obj,
                scale: lms_scale(n, obj),
                degenerate: false,
            }
        } else {
            fit
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn exact_line_recovered() {
        let xs: Vec<f64> = (0..10).map(|i| -90.0 + 5.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let fit = LmsSolver::new(&xs, &ys).solve(&LmsConfig::default(), 1);
        assert!((fit.theta1 - 2.0).abs() < 1e-12);
        assert!((fit.theta2 - 1.0).abs() < 1e-9);
        assert!(fit.median_sq_residual < 1e-18);
        assert_eq!(fit.scale, 0.0);
    }

    #[test]
    fn two_points_interpolate() {
        let xs = [-80.0, -40.0];
        let ys = [-70.0, -50.0];
        let fit = LmsSolver::new(&xs, &ys).solve(&LmsConfig::default(), 1);
        assert!((fit.theta1 - 0.5).abs() < 1e-12);
        assert!((fit.theta2 + 30.0).abs() < 1e-12);
        assert_eq!(fit.median_sq_residual, 0.0);
    }

    #[test]
    fn degenerate_x() {
        let xs = [-60.0; 5];
        let ys = [-50.0, -52.0, -51.0, -90.0, -49.0];
        let fit = LmsSolver::new(&xs, &ys).solve(&LmsConfig::default(), 1);
        assert!(fit.degenerate);
        assert_eq!(fit.theta1, 0.0);
        assert_eq!(fit.theta2, -51.0);
    }

    #[test]
    fn scale_formula() {
        assert_eq!(lms_scale(2, 4.0), 0.0);
        assert_eq!(lms_scale(10, 0.0), 0.0);
        let s = lms_scale(12, 4.0);
        assert!((s - 1.4826 * 1.5 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_matches_closed_form() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.1, 5.9, 8.0];
        let (a, b) = ols_fit(&xs, &ys);
        assert!((a - 1.98).abs() < 1e-12);
        assert!((b - 0.05).abs() < 1e-12);
        assert_eq!(ols_fit(&[1.0, 1.0], &[2.0, 4.0]), (0.0, 3.0));
    }

    #[test]
    fn random_mode_with_vertical_heavy_data() {
        let mut xs = vec![-70.0; 400];
        xs[399] = -60.0;
        let ys: Vec<f64> = (0..400).map(|i| -65.0 + (i % 3) as f64).collect();
        let cfg = LmsConfig {
            subsample_pairs: 5,
            ..Default::default()
        };
        let fit = LmsSolver::new(&xs, &ys).solve(&cfg, 3);
        assert!(fit.median_sq_residual.is_finite());
    }
}

//! Time-varying transition model built from Gaussian motion.
//!
//! The displacement after one motion step of duration `duration` is Gaussian.
//! Action and disturbance contributions are independent Gaussians, so the
//! combined displacement has the summed mean and summed covariance. The
//! resulting density is integrated over the cells of the one-hop
//! neighborhood to give a probability mass function over successor states.

use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::disturbance::TimeVaryingField;
use crate::error::{Error, Result};
use crate::gridworld::{Action, ActionSet, GridWorld, StateId};
use crate::{Mat2, Vec2};

/// Gauss–Legendre node count for correlated-covariance cell integrals.
pub const CORRELATED_QUADRATURE_NODES: usize = 16;

/// Displacement covariances (m²) accumulated over one motion step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub action_cov: [[f64; 2]; 2],
    pub disturbance_cov: [[f64; 2]; 2],
}

impl NoiseConfig {
    pub fn isotropic(action_sigma: f64, disturbance_sigma: f64) -> Self {
        let a = action_sigma * action_sigma;
        let d = disturbance_sigma * disturbance_sigma;
        NoiseConfig {
            action_cov: [[a, 0.0], [0.0, a]],
            disturbance_cov: [[d, 0.0], [0.0, d]],
        }
    }

    /// `(0.1 cell)^2 I` for the action and `(0.2 cell)^2 I` for the disturbance.
    pub fn default_for(cell_size: f64) -> Self {
        Self::isotropic(0.1 * cell_size, 0.2 * cell_size)
    }

    pub fn zero() -> Self {
        Self::isotropic(0.0, 0.0)
    }

    pub fn action(&self) -> Mat2 {
        to_mat(self.action_cov)
    }

    pub fn disturbance(&self) -> Mat2 {
        to_mat(self.disturbance_cov)
    }

    /// Both covariances multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let s = |m: [[f64; 2]; 2]| [[m[0][0] * k, m[0][1] * k], [m[1][0] * k, m[1][1] * k]];
        NoiseConfig {
            action_cov: s(self.action_cov),
            disturbance_cov: s(self.disturbance_cov),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_psd(&self.action(), "action covariance")?;
        check_psd(&self.disturbance(), "disturbance covariance")
    }
}

fn to_mat(m: [[f64; 2]; 2]) -> Mat2 {
    Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn check_psd(m: &Mat2, what: &str) -> Result<()> {
    let finite = m.iter().all(|x| x.is_finite());
    let symmetric = (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * (1.0 + m[(0, 1)].abs());
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let tol = 1e-12 * (m[(0, 0)].abs() + m[(1, 1)].abs()).powi(2);
    if !finite || !symmetric || m[(0, 0)] < 0.0 || m[(1, 1)] < 0.0 || det < -tol {
        return Err(Error::DegenerateCovariance(format!(
            "{what} must be symmetric positive semi-definite, got {m:?}"
        )));
    }
    Ok(())
}

/// Which distribution drives the transition model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionModel {
    /// Action and disturbance combined.
    #[default]
    Synergistic,
    /// Action only; the disturbance is ignored.
    ActionOnly,
}

/// Robot motion parameters shared by planners and the simulator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionConfig {
    /// Commanded speed (m/s).
    pub speed: f64,
    /// Duration of one motion step (s).
    pub duration: f64,
    pub noise: NoiseConfig,
}

impl MotionConfig {
    pub fn new(speed: f64, duration: f64, noise: NoiseConfig) -> Result<Self> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "speed must be positive, got {speed}"
            )));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step duration must be positive, got {duration}"
            )));
        }
        noise.validate()?;
        Ok(MotionConfig {
            speed,
            duration,
            noise,
        })
    }

    /// One step covers one cell at full speed: `duration = cell_size / speed`.
    pub fn nominal(grid: &GridWorld, speed: f64, noise: NoiseConfig) -> Result<Self> {
        Self::new(speed, grid.cell_size() / speed, noise)
    }

    /// Time charged for staying in place.
    pub fn dwell_time(&self, grid: &GridWorld) -> f64 {
        grid.cell_size() / self.speed
    }
}

/// Gaussian displacement over one motion step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianMotion {
    pub mean: Vec2,
    pub covariance: Mat2,
    pub duration: f64,
}

impl GaussianMotion {
    pub fn density(&self, x: Vec2) -> f64 {
        let det = self.covariance.determinant();
        let inv = match self.covariance.try_inverse() {
            Some(inv) if det > 0.0 => inv,
            _ => return 0.0,
        };
        let d = x - self.mean;
        let q = d.dot(&(inv * d));
        (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    }

    /// Lower-triangular factor `L` with `L L^T = covariance`; tolerates
    /// singular (rank-deficient) covariances.
    pub fn cholesky(&self) -> Mat2 {
        let c = &self.covariance;
        let l11 = c[(0, 0)].max(0.0).sqrt();
        let l21 = if l11 > 0.0 { c[(1, 0)] / l11 } else { 0.0 };
        let l22 = (c[(1, 1)] - l21 * l21).max(0.0).sqrt();
        Mat2::new(l11, 0.0, l21, l22)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let z = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.mean + self.cholesky() * z
    }
}

/// Combined action + disturbance displacement distribution at `x(s)`, time `t`.
pub fn motion_model(
    grid: &GridWorld,
    s: StateId,
    action: Action,
    field: &TimeVaryingField,
    t: f64,
    motion: &MotionConfig,
) -> Result<GaussianMotion> {
    let x = grid.state_center(s)?;
    motion_model_at(x, action, field, t, motion)
}

/// Same as [`motion_model`] at an arbitrary continuous position.
pub fn motion_model_at(
    x: Vec2,
    action: Action,
    field: &TimeVaryingField,
    t: f64,
    motion: &MotionConfig,
) -> Result<GaussianMotion> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time must be >= 0, got {t}"
        )));
    }
    let velocity = action.velocity(motion.speed) + field.query(x, t);
    let covariance = motion.noise.action() + motion.noise.disturbance();
    check_psd(&covariance, "combined covariance")?;
    Ok(GaussianMotion {
        mean: velocity * motion.duration,
        covariance,
        duration: motion.duration,
    })
}

/// Action-only displacement distribution (no disturbance).
pub fn action_motion_model(action: Action, motion: &MotionConfig) -> Result<GaussianMotion> {
    let covariance = motion.noise.action();
    check_psd(&covariance, "action covariance")?;
    Ok(GaussianMotion {
        mean: action.velocity(motion.speed) * motion.duration,
        covariance,
        duration: motion.duration,
    })
}

/// Probability mass over the one-hop neighborhood `N(source)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionPmf {
    pub source: StateId,
    pub time: f64,
    /// `(successor, probability)`, in the grid's neighbor order.
    pub entries: Vec<(StateId, f64)>,
}

impl TransitionPmf {
    pub fn probability(&self, target: StateId) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == target)
            .map_or(0.0, |e| e.1)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn max_probability(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    /// Point mass on the source state.
    pub fn absorbing(source: StateId, time: f64) -> Self {
        TransitionPmf {
            source,
            time,
            entries: vec![(source, 1.0)],
        }
    }
}

/// `P(a <= X < b)` for `X ~ N(mu, sigma^2)`; a point mass when `sigma == 0`.
fn interval_prob(a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if a <= mu && mu < b { 1.0 } else { 0.0 };
    }
    let za = (a - mu) / sigma;
    let zb = (b - mu) / sigma;
    if za >= 0.0 {
        0.5 * (erfc(za / SQRT_2) - erfc(zb / SQRT_2))
    } else if zb <= 0.0 {
        0.5 * (erfc(-zb / SQRT_2) - erfc(-za / SQRT_2))
    } else {
        1.0 - 0.5 * erfc(zb / SQRT_2) - 0.5 * erfc(-za / SQRT_2)
    }
    .max(0.0)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 {
                1.0
            } else if n == 1 {
                x
            } else {
                p1
            };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn default_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(CORRELATED_QUADRATURE_NODES))
}

/// Probability that a Gaussian displacement falls in the axis-aligned box
/// `[lo, hi)`.
///
/// Diagonal covariances use the closed-form product of 1-D normal
/// probabilities. Correlated ones integrate the conditional probability of
/// the second axis against the standardized first axis, using the rule on
/// panels of unit width over the part of the box within 8.5 standard
/// deviations.
pub fn box_probability(g: &GaussianMotion, lo: Vec2, hi: Vec2, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let c = &g.covariance;
    let s1 = c[(0, 0)].max(0.0).sqrt();
    let s2 = c[(1, 1)].max(0.0).sqrt();
    let cov = 0.5 * (c[(0, 1)] + c[(1, 0)]);
    if s1 == 0.0 || s2 == 0.0 || cov.abs() <= 1e-14 * s1 * s2 {
        return interval_prob(lo.x, hi.x, g.mean.x, s1) * interval_prob(lo.y, hi.y, g.mean.y, s2);
    }
    const Z_MAX: f64 = 8.5;
    let rho = (cov / (s1 * s2)).clamp(-1.0, 1.0);
    let cond_sd = s2 * (1.0 - rho * rho).max(0.0).sqrt();
    let za = ((lo.x - g.mean.x) / s1).max(-Z_MAX);
    let zb = ((hi.x - g.mean.x) / s1).min(Z_MAX);
    if zb <= za {
        return 0.0;
    }
    let (nodes, weights) = rule;
    let panels = (zb - za).ceil().max(1.0) as usize;
    let half = 0.5 * (zb - za) / panels as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for k in 0..panels {
        let mid = za + (2 * k + 1) as f64 * half;
        for (xi, wi) in nodes.iter().zip(weights) {
            let z = mid + half * xi;
            let m = g.mean.y + rho * s2 * z;
            acc += wi * norm * (-0.5 * z * z).exp() * interval_prob(lo.y, hi.y, m, cond_sd);
        }
    }
    (acc * half).max(0.0)
}

/// Integrates `g` (a displacement from `x(s)`) over each cell of `N(s)` and
/// renormalizes so the mass sums to one over the neighborhood.
pub fn discretize(
    g: &GaussianMotion,
    s: StateId,
    grid: &GridWorld,
    time: f64,
) -> Result<TransitionPmf> {
    discretize_with_rule(g, s, grid, time, default_rule())
}

pub fn discretize_with_rule(
    g: &GaussianMotion,
    s: StateId,
    grid: &GridWorld,
    time: f64,
    rule: &(Vec<f64>, Vec<f64>),
) -> Result<TransitionPmf> {
    check_psd(&g.covariance, "motion covariance")?;
    if !(g.mean.x.is_finite() && g.mean.y.is_finite()) {
        return Err(Error::DegenerateCovariance(format!(
            "non-finite mean {:?}",
            g.mean
        )));
    }
    let origin = grid.state_center(s)?;
    let half = Vec2::repeat(grid.cell_size() / 2.0);
    let neighbors = grid.neighbors_unchecked(s);
    let mut entries: Vec<(StateId, f64)> = neighbors
        .iter()
        .map(|&(_, n)| {
            let rel = grid.center_unchecked(n) - origin;
            (n, box_probability(g, rel - half, rel + half, rule))
        })
        .collect();
    let total: f64 = entries.iter().map(|e| e.1).sum();
    if total.is_finite() && total > 1e-300 {
        for e in &mut entries {
            e.1 /= total;
        }
    } else {
        // All mass is far outside the neighborhood: collapse onto the
        // neighbor closest to the mean landing point.
        let target = origin + g.mean;
        let nearest = entries
            .iter()
            .map(|e| e.0)
            .min_by(|&a, &b| {
                let da = (grid.center_unchecked(a) - target).norm_squared();
                let db = (grid.center_unchecked(b) - target).norm_squared();
                da.total_cmp(&db)
            })
            .ok_or(Error::InvalidState(s))?;
        for e in &mut entries {
            e.1 = if e.0 == nearest { 1.0 } else { 0.0 };
        }
    }
    Ok(TransitionPmf {
        source: s,
        time,
        entries,
    })
}

/// PMF of a single action at `(s, t)` under the chosen transition model.
pub fn action_pmf(
    grid: &GridWorld,
    s: StateId,
    action: Action,
    field: &TimeVaryingField,
    t: f64,
    motion: &MotionConfig,
    model: TransitionModel,
) -> Result<TransitionPmf> {
    let g = match model {
        TransitionModel::Synergistic => motion_model(grid, s, action, field, t, motion)?,
        TransitionModel::ActionOnly => action_motion_model(action, motion)?,
    };
    discretize(&g, s, grid, t)
}

/// PMFs of every admissible action at `s`, in neighbor order.
pub fn state_action_pmfs(
    grid: &GridWorld,
    s: StateId,
    field: &TimeVaryingField,
    t: f64,
    motion: &MotionConfig,
    model: TransitionModel,
) -> Result<Vec<TransitionPmf>> {
    grid.neighbors(s)?
        .iter()
        .map(|&(a, _)| action_pmf(grid, s, a, field, t, motion, model))
        .collect()
}

/// Equal-weight average of PMFs sharing one source.
pub fn mix(pmfs: &[&TransitionPmf]) -> Result<TransitionPmf> {
    let first = pmfs.first().ok_or(Error::EmptyActions(usize::MAX))?;
    let w = 1.0 / pmfs.len() as f64;
    let mut entries: Vec<(StateId, f64)> = first.entries.iter().map(|e| (e.0, 0.0)).collect();
    for p in pmfs {
        debug_assert_eq!(p.source, first.source);
        for (acc, e) in entries.iter_mut().zip(&p.entries) {
            debug_assert_eq!(acc.0, e.0);
            acc.1 += w * e.1;
        }
    }
    Ok(TransitionPmf {
        source: first.source,
        time: first.time,
        entries,
    })
}

/// Mixture PMF for tied optimal actions, each weighted `1/k`.
pub fn mixture_pmf(
    grid: &GridWorld,
    s: StateId,
    tied: &[Action],
    field: &TimeVaryingField,
    t: f64,
    motion: &MotionConfig,
    model: TransitionModel,
) -> Result<TransitionPmf> {
    if tied.is_empty() {
        return Err(Error::EmptyActions(s));
    }
    let pmfs = tied
        .iter()
        .map(|&a| action_pmf(grid, s, a, field, t, motion, model))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&TransitionPmf> = pmfs.iter().collect();
    mix(&refs)
}

/// Mixture over an [`ActionSet`] using precomputed per-action PMFs
/// (aligned with `grid.neighbors(s)`).
pub fn mixture_from_set(
    grid: &GridWorld,
    s: StateId,
    set: ActionSet,
    per_action: &[TransitionPmf],
) -> Result<TransitionPmf> {
    let refs: Vec<&TransitionPmf> = grid
        .neighbors(s)?
        .iter()
        .zip(per_action)
        .filter(|((a, _), _)| set.contains(*a))
        .map(|(_, p)| p)
        .collect();
    if refs.is_empty() {
        return Err(Error::EmptyActions(s));
    }
    mix(&refs)
}

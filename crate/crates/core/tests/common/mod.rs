//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the code it checks: Gaussians are sampled with a
//! hand-rolled Cholesky factor, chains are walked step by step, and sample
//! statistics are computed directly.

#![allow(dead_code)]

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tvmdp::{TimeChain, Vec2};

/// Samples `N(mean, cov)` for a 2x2 covariance given as `[c11, c12, c22]`.
pub struct Gauss2 {
    mean: Vec2,
    l11: f64,
    l21: f64,
    l22: f64,
}

impl Gauss2 {
    pub fn new(mean: Vec2, cov: [f64; 3]) -> Self {
        let l11 = cov[0].sqrt();
        let l21 = if l11 > 0.0 { cov[1] / l11 } else { 0.0 };
        let l22 = (cov[2] - l21 * l21).max(0.0).sqrt();
        Gauss2 {
            mean,
            l11,
            l21,
            l22,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec2 {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        self.mean + Vec2::new(self.l11 * z1, self.l21 * z1 + self.l22 * z2)
    }
}

/// Mean first-crossing time of the center line of the target cell, over
/// the walks that cross it inside the cell.
///
/// Each walk draws a fresh displacement from `displacement` every `duration`
/// seconds and moves linearly within a step, like the simulator. `offset`
/// points from the start to the target center; `half_width` is half the
/// length of the cell's section along the crossing line (`c/2` for an axis
/// neighbor, `c/sqrt(2)` for a diagonal one).
pub fn mc_one_hop(
    displacement: &Gauss2,
    duration: f64,
    offset: Vec2,
    half_width: f64,
    samples: usize,
    seed: u64,
) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = offset.norm();
    let dir = offset / dist;
    let perp = Vec2::new(-dir.y, dir.x);
    let (mut sum, mut hits) = (0.0, 0usize);
    for _ in 0..samples {
        let (mut along, mut lateral) = (0.0, 0.0);
        for step in 0..10_000 {
            let d = displacement.sample(&mut rng);
            let (da, dl) = (d.dot(&dir), d.dot(&perp));
            if along + da >= dist {
                let frac = (dist - along) / da;
                if (lateral + frac * dl).abs() <= half_width {
                    sum += (step as f64 + frac) * duration;
                    hits += 1;
                }
                break;
            }
            along += da;
            lateral += dl;
        }
    }
    (sum / hits as f64, hits)
}

/// Monte-Carlo mean of the first time the chain started at `s0` reaches
/// `end`, over the walks that reach it before any absorbing state.
pub fn mc_hitting_time(
    chain: &TimeChain,
    s0: usize,
    end: usize,
    walks: usize,
    seed: u64,
) -> (f64, usize) {
    let n = chain.len();
    let picks: Vec<Option<WeightedIndex<f64>>> = (0..n)
        .map(|s| {
            let w: Vec<f64> = chain.row(s).iter().map(|e| e.probability).collect();
            WeightedIndex::new(w).ok()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut hits) = (0.0, 0usize);
    'walk: for _ in 0..walks {
        let (mut s, mut t) = (s0, 0.0);
        for _ in 0..100_000 {
            if s == end {
                sum += t;
                hits += 1;
                continue 'walk;
            }
            if chain.is_absorbing(s) {
                continue 'walk;
            }
            let Some(pick) = &picks[s] else {
                continue 'walk;
            };
            let e = chain.row(s)[pick.sample(&mut rng)];
            t += e.time;
            s = e.target;
        }
    }
    (sum / hits as f64, hits)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1).
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// One-sided paired t-test that `a` is smaller than `b`. Returns the t
/// statistic and the p-value.
pub fn paired_less(a: &[f64], b: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let s = std_dev(&d);
    if s == 0.0 {
        return if m > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NAN, 1.0)
        };
    }
    let t = m / (s / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).unwrap();
    (t, 1.0 - dist.cdf(t))
}

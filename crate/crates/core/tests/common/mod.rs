//! Random generators shared by the integration tests.
#![allow(dead_code)]

use opdyn::geometry::{dot, normalize, sample_at_distance, sample_uniform_sphere};
use opdyn::rng::{stream_rng, SimRng};
use opdyn::{Configuration, Opinion, UpdateFunctionSpec};
use rand::Rng;

pub fn rng(seed: u64) -> SimRng {
    stream_rng(seed, 7)
}

pub fn log_uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    lo * (hi / lo).powf(rng.random::<f64>())
}

pub fn random_sign(rng: &mut SimRng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

pub fn random_stable_spec(rng: &mut SimRng) -> UpdateFunctionSpec {
    match rng.random_range(0..3) {
        0 => UpdateFunctionSpec::linear(rng.random_range(0.01..1.5)),
        1 => UpdateFunctionSpec::asymmetric_linear(rng.random_range(0.01..1.5), rng.random_range(0.01..1.5)),
        _ => UpdateFunctionSpec::slerp(rng.random_range(0.05..0.95)),
    }
    .unwrap()
}

pub fn random_active_spec(rng: &mut SimRng) -> UpdateFunctionSpec {
    if rng.random::<bool>() {
        UpdateFunctionSpec::sign(rng.random_range(0.05..0.9))
    } else {
        UpdateFunctionSpec::asymmetric_sign(
            rng.random_range(0.05..0.9),
            rng.random_range(0.05..0.9),
            rng.random_range(-0.5..0.5),
        )
    }
    .unwrap()
}

pub fn random_spec(rng: &mut SimRng) -> UpdateFunctionSpec {
    if rng.random_range(0..5) < 3 {
        random_stable_spec(rng)
    } else {
        random_active_spec(rng)
    }
}

pub fn uniform_config(n: usize, d: usize, rng: &mut SimRng) -> Configuration {
    Configuration::new((0..n).map(|_| sample_uniform_sphere(d, rng).unwrap()).collect()).unwrap()
}

/// Unit vector with correlation exactly `a` (up to rounding) with unit `u`.
pub fn at_corr(u: &[f64], a: f64, rng: &mut SimRng) -> Vec<f64> {
    loop {
        let g = sample_uniform_sphere(u.len(), rng).unwrap();
        let p = dot(&g, u);
        let t: Vec<f64> = g.iter().zip(u).map(|(x, y)| x - p * y).collect();
        let Ok(t) = normalize(&t) else { continue };
        let s = (1.0 - a * a).max(0.0).sqrt();
        return u.iter().zip(t.iter()).map(|(x, y)| a * x + s * y).collect();
    }
}

/// Opinions within `pi/4` of a common axis, each with a random sign, so the
/// configuration is strictly convex.
pub fn strictly_convex_config(n: usize, d: usize, rng: &mut SimRng) -> Configuration {
    let axis = sample_uniform_sphere(d, rng).unwrap();
    let spread = rng.random_range(0.05..0.78);
    let opinions: Vec<Opinion> = (0..n)
        .map(|_| {
            let o = sample_at_distance(&axis, rng.random_range(0.0..spread), rng).unwrap();
            if rng.random::<bool>() {
                o.negated()
            } else {
                o
            }
        })
        .collect();
    Configuration::new(opinions).unwrap()
}

/// Signed opinions scattered around a random axis; `bias` controls how often
/// the result is strictly convex.
pub fn biased_config(n: usize, d: usize, bias: f64, rng: &mut SimRng) -> Configuration {
    let axis = sample_uniform_sphere(d, rng).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let g = sample_uniform_sphere(d, rng).unwrap();
            let s = random_sign(rng);
            axis.iter().zip(g.iter()).map(|(a, x)| s * (bias * a + x)).collect()
        })
        .collect();
    Configuration::from_rows(&rows).unwrap()
}

/// Two groups living on disjoint coordinate blocks, so every cross
/// correlation is exactly zero.
pub fn block_config(n: usize, rng: &mut SimRng) -> (Configuration, Vec<bool>) {
    let mut side: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    side[0] = true;
    side[n - 1] = false;
    let rows: Vec<Vec<f64>> = side
        .iter()
        .map(|&s| {
            let g = sample_uniform_sphere(2, rng).unwrap();
            if s {
                vec![g[0], g[1], 0.0, 0.0]
            } else {
                vec![0.0, 0.0, g[0], g[1]]
            }
        })
        .collect();
    (Configuration::from_rows(&rows).unwrap(), side)
}

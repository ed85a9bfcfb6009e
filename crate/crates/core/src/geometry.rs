//! Unit-sphere primitives shared by every other module.
//!
//! Opinions are unit vectors in `R^d` with `d >= 2`. Correlations are inner
//! products clamped to `[-1, 1]`; angles are geodesic distances on the sphere
//! and effective angles are distances between opinion *lines*, so that
//! `effective_angle(-u, v) == effective_angle(u, v)`.

use std::f64::consts::PI;
use std::ops::Deref;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vectors with norm at or below this value cannot be normalized.
pub const NORM_FLOOR: f64 = 1e-12;

/// Tolerance on `|norm - 1|` accepted by [`Opinion::new`].
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// A stance vector on the unit sphere `S^{d-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Opinion(Vec<f64>);

impl Opinion {
    /// Wraps coordinates that are already unit norm (within [`UNIT_TOLERANCE`]).
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "opinions need dimension >= 2, got {}",
                coords.len()
            )));
        }
        let n = norm(&coords);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidParams(format!(
                "opinion is not unit norm (norm = {n})"
            )));
        }
        Ok(Opinion(coords))
    }

    /// Standard basis vector `e_k` in dimension `d`.
    pub fn basis(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(Error::IndexOutOfRange { index: k, n: d });
        }
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        Opinion::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn negated(&self) -> Opinion {
        Opinion(self.0.iter().map(|x| -x).collect())
    }
}

impl Deref for Opinion {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Opinion {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        normalize(&v)
    }
}

impl From<Opinion> for Vec<f64> {
    fn from(o: Opinion) -> Self {
        o.0
    }
}

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[inline]
pub(crate) fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Scales `v` onto the unit sphere.
pub fn normalize(v: &[f64]) -> Result<Opinion> {
    if v.len() < 2 {
        return Err(Error::InvalidParams(format!(
            "opinions need dimension >= 2, got {}",
            v.len()
        )));
    }
    let n = norm(v);
    if !(n > NORM_FLOOR) {
        return Err(Error::ZeroVector);
    }
    Ok(Opinion(v.iter().map(|x| x / n).collect()))
}

fn check_dims(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(())
}

/// Inner product of two opinions, clamped to `[-1, 1]`.
pub fn correlation(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    Ok(clamp_unit(dot(u, v)))
}

/// Geodesic angle in `[0, pi]`.
///
/// Computed as `2 atan2(|u - v|, |u + v|)`, which stays accurate for nearly
/// parallel and nearly antipodal pairs where `acos` loses half the digits.
pub fn angle(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// Angle between the lines spanned by `u` and `v`, in `[0, pi/2]`.
pub fn effective_angle(u: &[f64], v: &[f64]) -> Result<f64> {
    let a = angle(u, v)?;
    Ok(a.min(PI - a))
}

pub fn angle_from_correlation(a: f64) -> f64 {
    clamp_unit(a).acos()
}

pub fn effective_angle_from_correlation(a: f64) -> f64 {
    clamp_unit(a).abs().acos()
}

/// Draws a uniformly distributed opinion by normalizing a standard Gaussian vector.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Opinion> {
    if d < 2 {
        return Err(Error::InvalidParams(format!(
            "opinions need dimension >= 2, got {d}"
        )));
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(o) = normalize(&v) {
            return Ok(o);
        }
    }
}

/// Unit vector at geodesic distance `radius` from `center`, in a uniformly
/// random tangent direction.
pub fn sample_at_distance<R: Rng + ?Sized>(
    center: &[f64],
    radius: f64,
    rng: &mut R,
) -> Result<Opinion> {
    let d = center.len();
    loop {
        let g = sample_uniform_sphere(d, rng)?;
        let proj = dot(&g, center);
        let tangent: Vec<f64> = g.iter().zip(center).map(|(x, c)| x - proj * c).collect();
        let Ok(t) = normalize(&tangent) else { continue };
        let (s, c) = radius.sin_cos();
        let v: Vec<f64> = center.iter().zip(t.iter()).map(|(a, b)| c * a + s * b).collect();
        return normalize(&v);
    }
}

/// A random orthonormal frame of `k` vectors in dimension `d` (Gram-Schmidt on
/// Gaussian draws).
pub fn random_orthonormal_frame<R: Rng + ?Sized>(
    d: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Opinion>> {
    if k > d {
        return Err(Error::InvalidParams(format!(
            "cannot fit {k} orthonormal vectors in dimension {d}"
        )));
    }
    let mut frame: Vec<Opinion> = Vec::with_capacity(k);
    while frame.len() < k {
        let mut v = sample_uniform_sphere(d, rng)?.into_inner();
        for b in &frame {
            let p = dot(&v, b);
            v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= p * y);
        }
        // A second pass keeps the frame orthogonal to machine precision.
        for b in &frame {
            let p = dot(&v, b);
            v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= p * y);
        }
        if norm(&v) > 1e-6 {
            frame.push(normalize(&v)?);
        }
    }
    Ok(frame)
}

//! Predicates on configurations: activity, clusters, convexity, separability,
//! polarization, and the two potentials.

use serde::{Deserialize, Serialize};

use crate::configuration::Configuration;
use crate::error::{Error, Result};

pub const DEFAULT_TOL_ORTH: f64 = 1e-9;
pub const DEFAULT_TOL_POLAR: f64 = 1e-6;
pub const DEFAULT_CLUSTER_EPSILON: f64 = 1.0 / 256.0;

/// `eps < |a| < 1 - eps`.
#[inline]
pub fn is_active_pair(a: f64, eps: f64) -> bool {
    let m = a.abs();
    eps < m && m < 1.0 - eps
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ActivityVerdict {
    Active { i: usize, j: usize },
    Inactive,
}

impl ActivityVerdict {
    pub fn is_active(&self) -> bool {
        matches!(self, ActivityVerdict::Active { .. })
    }
}

/// First pair in lexicographic order that is `eps`-active, if any.
pub fn epsilon_activity(config: &Configuration, eps: f64) -> ActivityVerdict {
    config
        .correlations()
        .pairs()
        .find(|&(_, _, a)| is_active_pair(a, eps))
        .map_or(ActivityVerdict::Inactive, |(i, j, _)| ActivityVerdict::Active { i, j })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    /// Sorted index sets, ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    pub epsilon: f64,
}

impl ClusterPartition {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&i))
    }
}

fn components(n: usize, mut edge: impl FnMut(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for root in 0..n {
        if label[root] != usize::MAX {
            continue;
        }
        let id = out.len();
        label[root] = id;
        let mut stack = vec![root];
        let mut members = vec![root];
        while let Some(v) = stack.pop() {
            for w in 0..n {
                if label[w] == usize::MAX && edge(v, w) {
                    label[w] = id;
                    stack.push(w);
                    members.push(w);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Connected components of the closeness relation `|A_ij| >= 1 - eps`.
pub fn closeness_components(config: &Configuration, eps: f64) -> Vec<Vec<usize>> {
    components(config.n(), |v, w| {
        v != w && config.correlation(v, w).abs() >= 1.0 - eps
    })
}

/// Partition of an `eps`-inactive configuration into clusters.
///
/// Components are built first and then checked against the definition, so a
/// too-large `eps` surfaces as `StructureViolation` instead of a wrong answer.
pub fn cluster_partition(config: &Configuration, eps: f64) -> Result<ClusterPartition> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::InvalidParams(format!(
            "cluster epsilon must lie in [0, 1/2), got {eps}"
        )));
    }
    if let ActivityVerdict::Active { i, j } = epsilon_activity(config, eps) {
        return Err(Error::NotInactive(i, j));
    }
    let clusters = closeness_components(config, eps);
    for c in &clusters {
        for (x, &i) in c.iter().enumerate() {
            for &j in &c[x + 1..] {
                let a = config.correlation(i, j).abs();
                if a < 1.0 - eps {
                    return Err(Error::StructureViolation(format!(
                        "agents {i} and {j} share a component but |A| = {a} < 1 - {eps}"
                    )));
                }
            }
        }
    }
    let d = config.d() as f64;
    if eps < 1.0 / (d * (d + 1.0)) && clusters.len() > config.d() {
        return Err(Error::StructureViolation(format!(
            "{} clusters exceed dimension {}",
            clusters.len(),
            config.d()
        )));
    }
    Ok(ClusterPartition {
        clusters,
        epsilon: eps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignAssignment {
    pub signs: Vec<i8>,
    /// `min_{i<j} b_i b_j A_ij`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ConvexityVerdict {
    Certified(SignAssignment),
    Refuted,
}

impl ConvexityVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, ConvexityVerdict::Certified(_))
    }
}

/// Margin of a given sign assignment.
pub fn sign_margin(config: &Configuration, signs: &[i8]) -> f64 {
    config
        .correlations()
        .pairs()
        .map(|(i, j, a)| f64::from(signs[i]) * f64::from(signs[j]) * a)
        .fold(f64::INFINITY, f64::min)
}

/// Decides `c`-strict convexity: signs `b` with `b_i b_j A_ij > c` for all pairs.
///
/// Any valid assignment must have `b_j = b_0 sgn(A_0j)`, so fixing `b_0 = +1`
/// leaves exactly one candidate.
pub fn strict_convexity(config: &Configuration, c: f64, tol: f64) -> ConvexityVerdict {
    let n = config.n();
    let mut signs = vec![1i8; n];
    for (j, s) in signs.iter_mut().enumerate().skip(1) {
        let a = config.correlation(0, j);
        if a.abs() <= tol {
            return ConvexityVerdict::Refuted;
        }
        *s = if a > 0.0 { 1 } else { -1 };
    }
    let margin = sign_margin(config, &signs);
    if margin > c + tol {
        ConvexityVerdict::Certified(SignAssignment { signs, margin })
    } else {
        ConvexityVerdict::Refuted
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SeparabilityVerdict {
    Separable { s: Vec<usize>, t: Vec<usize> },
    NotSeparable,
}

impl SeparabilityVerdict {
    pub fn is_separable(&self) -> bool {
        matches!(self, SeparabilityVerdict::Separable { .. })
    }
}

/// Separable iff the graph with edges `|A_ij| > tol` is disconnected; `s` is
/// the component of agent 0.
pub fn separability(config: &Configuration, tol: f64) -> SeparabilityVerdict {
    let comps = components(config.n(), |v, w| {
        v != w && config.correlation(v, w).abs() > tol
    });
    if comps.len() < 2 {
        return SeparabilityVerdict::NotSeparable;
    }
    let s = comps[0].clone();
    let t: Vec<usize> = (0..config.n()).filter(|i| !s.contains(i)).collect();
    SeparabilityVerdict::Separable { s, t }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PolarizationVerdict {
    /// Sizes of agent 0's group and of its complement.
    Polarized { sizes: (usize, usize) },
    NotPolarized,
}

impl PolarizationVerdict {
    pub fn is_polarized(&self) -> bool {
        matches!(self, PolarizationVerdict::Polarized { .. })
    }
}

/// Sizes of `{j : A_0j >= 0}` and its complement.
pub fn sign_groups(config: &Configuration) -> (usize, usize) {
    let same = (0..config.n())
        .filter(|&j| config.correlation(0, j) >= 0.0)
        .count();
    (same, config.n() - same)
}

/// Finite-time surrogate for polarization: `min |A_ij| >= 1 - tol`.
pub fn polarization_check(config: &Configuration, tol: f64) -> PolarizationVerdict {
    if config.correlations().min_abs_off_diagonal() >= 1.0 - tol {
        PolarizationVerdict::Polarized {
            sizes: sign_groups(config),
        }
    } else {
        PolarizationVerdict::NotPolarized
    }
}

/// `1 - min_{i != j} |A_ij|`.
pub fn potential_min_corr(config: &Configuration) -> f64 {
    (1.0 - config.correlations().min_abs_off_diagonal()).clamp(0.0, 1.0)
}

/// Sum of the three pairwise effective angles.
pub fn potential_triangle(config: &Configuration) -> Result<f64> {
    if config.n() != 3 {
        return Err(Error::WrongArity {
            expected: 3,
            found: config.n(),
        });
    }
    Ok(config
        .correlations()
        .pairs()
        .map(|(_, _, a)| a.abs().min(1.0).acos())
        .sum())
}

//! Update functions and the single-interaction update.
//!
//! An interaction in which agent `j` influences agent `i` replaces `u_i` by
//! `w / |w|` with `w = u_i + f(<u_i, u_j>) u_j`. The new correlation with
//! `u_j` depends only on the old one:
//!
//! ```text
//! A' = (A + f(A)) / sqrt(1 + 2 A f(A) + f(A)^2)
//! ```
//!
//! which is what [`predicted_correlation`] evaluates.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clamp_unit, dot, norm, normalize, Opinion};

/// Correlations further than this outside `[-1, 1]` are rejected.
pub const DOMAIN_SLACK: f64 = 1e-12;

/// Update vectors with norm at or below this are reported as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-9;

/// Below this `sin(theta)` a slerp pair is treated as a fixed point.
pub const SLERP_FIXED_POINT: f64 = 1e-12;

/// Parametric description of an update function `f: [-1, 1] -> R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum UpdateFunctionSpec {
    /// `f(A) = eta A`
    Linear { eta: f64 },
    /// `f(A) = eta_plus A` for `A >= 0`, `eta_minus A` otherwise.
    AsymmetricLinear { eta_plus: f64, eta_minus: f64 },
    /// `f(A) = eta sgn(A)` with `sgn(0) = +1`.
    Sign { eta: f64 },
    /// `f(A) = eta_plus` for `A >= threshold`, `-eta_minus` otherwise.
    AsymmetricSign {
        eta_plus: f64,
        eta_minus: f64,
        threshold: f64,
    },
    /// Spherical linear interpolation by `phi = (eta / 2) sin(2 theta)`.
    Slerp { eta: f64 },
}

impl UpdateFunctionSpec {
    pub fn linear(eta: f64) -> Result<Self> {
        UpdateFunctionSpec::Linear { eta }.validated()
    }

    pub fn asymmetric_linear(eta_plus: f64, eta_minus: f64) -> Result<Self> {
        UpdateFunctionSpec::AsymmetricLinear { eta_plus, eta_minus }.validated()
    }

    pub fn sign(eta: f64) -> Result<Self> {
        UpdateFunctionSpec::Sign { eta }.validated()
    }

    pub fn asymmetric_sign(eta_plus: f64, eta_minus: f64, threshold: f64) -> Result<Self> {
        UpdateFunctionSpec::AsymmetricSign {
            eta_plus,
            eta_minus,
            threshold,
        }
        .validated()
    }

    pub fn slerp(eta: f64) -> Result<Self> {
        UpdateFunctionSpec::Slerp { eta }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be positive, got {x}")))
            }
        };
        match *self {
            UpdateFunctionSpec::Linear { eta } | UpdateFunctionSpec::Sign { eta } => {
                positive("eta", eta)
            }
            UpdateFunctionSpec::AsymmetricLinear { eta_plus, eta_minus } => {
                positive("eta_plus", eta_plus)?;
                positive("eta_minus", eta_minus)
            }
            UpdateFunctionSpec::AsymmetricSign {
                eta_plus,
                eta_minus,
                threshold,
            } => {
                positive("eta_plus", eta_plus)?;
                positive("eta_minus", eta_minus)?;
                if threshold > -1.0 && threshold < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParams(format!(
                        "threshold must lie in (-1, 1), got {threshold}"
                    )))
                }
            }
            UpdateFunctionSpec::Slerp { eta } => {
                if eta > 0.0 && eta < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParams(format!(
                        "slerp eta must lie in (0, 1), got {eta}"
                    )))
                }
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            UpdateFunctionSpec::Linear { .. } => "linear",
            UpdateFunctionSpec::AsymmetricLinear { .. } => "asym-linear",
            UpdateFunctionSpec::Sign { .. } => "sign",
            UpdateFunctionSpec::AsymmetricSign { .. } => "asym-sign",
            UpdateFunctionSpec::Slerp { .. } => "slerp",
        }
    }

    /// `f(A)` without the domain check; `a` must already lie in `[-1, 1]`.
    #[inline]
    pub(crate) fn eval_unchecked(&self, a: f64) -> f64 {
        match *self {
            UpdateFunctionSpec::Linear { eta } => eta * a,
            UpdateFunctionSpec::AsymmetricLinear { eta_plus, eta_minus } => {
                if a >= 0.0 {
                    eta_plus * a
                } else {
                    eta_minus * a
                }
            }
            UpdateFunctionSpec::Sign { eta } => {
                if a >= 0.0 {
                    eta
                } else {
                    -eta
                }
            }
            UpdateFunctionSpec::AsymmetricSign {
                eta_plus,
                eta_minus,
                threshold,
            } => {
                if a >= threshold {
                    eta_plus
                } else {
                    -eta_minus
                }
            }
            UpdateFunctionSpec::Slerp { eta } => a.signum() * slerp_weight(a.abs(), eta),
        }
    }
}

/// `f_slerp` on `[0, 1]`, where `theta <= pi/2` keeps every sine well conditioned.
/// The odd extension covers negative correlations.
fn slerp_weight(abs_a: f64, eta: f64) -> f64 {
    let theta = abs_a.acos();
    // (1/2) sin(2 theta) = sin(theta) cos(theta), exact zero at A = 0.
    let phi = eta * abs_a * (1.0 - abs_a * abs_a).max(0.0).sqrt();
    let denom = (theta - phi).sin();
    if theta < 1e-150 || denom <= 0.0 {
        // Removable singularity at A = 1: phi ~ eta theta.
        eta / (1.0 - eta)
    } else {
        phi.sin() / denom
    }
}

impl fmt::Display for UpdateFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            UpdateFunctionSpec::Linear { eta } => write!(f, "linear:eta={eta}"),
            UpdateFunctionSpec::AsymmetricLinear { eta_plus, eta_minus } => {
                write!(f, "asym-linear:eta_plus={eta_plus},eta_minus={eta_minus}")
            }
            UpdateFunctionSpec::Sign { eta } => write!(f, "sign:eta={eta}"),
            UpdateFunctionSpec::AsymmetricSign {
                eta_plus,
                eta_minus,
                threshold,
            } => write!(
                f,
                "asym-sign:eta_plus={eta_plus},eta_minus={eta_minus},threshold={threshold}"
            ),
            UpdateFunctionSpec::Slerp { eta } => write!(f, "slerp:eta={eta}"),
        }
    }
}

impl FromStr for UpdateFunctionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut params: Vec<(String, f64)> = Vec::new();
        for kv in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{kv}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{v}` for `{k}`")))?;
            let k = k.trim().to_string();
            if params.iter().any(|(p, _)| *p == k) {
                return Err(Error::Parse(format!("duplicate parameter `{k}`")));
            }
            params.push((k, v));
        }
        let allowed: &[&str] = match family {
            "linear" | "sign" | "slerp" => &["eta"],
            "asym-linear" => &["eta_plus", "eta_minus"],
            "asym-sign" => &["eta_plus", "eta_minus", "threshold"],
            other => return Err(Error::Parse(format!("unknown update family `{other}`"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Parse(format!("unknown parameter `{k}` for `{family}`")));
        }
        let get = |name: &str| {
            params
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Parse(format!("missing parameter `{name}` for `{family}`")))
        };
        let spec = match family {
            "linear" => UpdateFunctionSpec::Linear { eta: get("eta")? },
            "sign" => UpdateFunctionSpec::Sign { eta: get("eta")? },
            "slerp" => UpdateFunctionSpec::Slerp { eta: get("eta")? },
            "asym-linear" => UpdateFunctionSpec::AsymmetricLinear {
                eta_plus: get("eta_plus")?,
                eta_minus: get("eta_minus")?,
            },
            _ => UpdateFunctionSpec::AsymmetricSign {
                eta_plus: get("eta_plus")?,
                eta_minus: get("eta_minus")?,
                threshold: get("threshold").unwrap_or(0.0),
            },
        };
        spec.validated()
    }
}

impl TryFrom<String> for UpdateFunctionSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<UpdateFunctionSpec> for String {
    fn from(s: UpdateFunctionSpec) -> String {
        s.to_string()
    }
}

fn check_domain(a: f64) -> Result<f64> {
    if !(a.abs() <= 1.0 + DOMAIN_SLACK) {
        return Err(Error::DomainError(a));
    }
    Ok(clamp_unit(a))
}

/// Evaluates `f(A)`.
pub fn evaluate(spec: &UpdateFunctionSpec, a: f64) -> Result<f64> {
    Ok(spec.eval_unchecked(check_domain(a)?))
}

/// Writes the updated opinion of `u_i` after `u_j` influences it into `out`.
/// `a` is the (cached) correlation `<u_i, u_j>`.
#[inline]
pub(crate) fn update_into(
    spec: &UpdateFunctionSpec,
    u_i: &[f64],
    u_j: &[f64],
    a: f64,
    out: &mut [f64],
) -> Result<()> {
    let f = spec.eval_unchecked(a);
    for ((o, x), y) in out.iter_mut().zip(u_i).zip(u_j) {
        *o = x + f * y;
    }
    let n = norm(out);
    if !(n > DEGENERATE_NORM) {
        return Err(Error::DegenerateUpdate);
    }
    out.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

/// The opinion of agent `i` after agent `j` influences it.
pub fn apply_update(u_i: &[f64], u_j: &[f64], spec: &UpdateFunctionSpec) -> Result<Opinion> {
    if u_i.len() != u_j.len() {
        return Err(Error::DimensionMismatch {
            expected: u_i.len(),
            found: u_j.len(),
        });
    }
    let a = clamp_unit(dot(u_i, u_j));
    let mut out = vec![0.0; u_i.len()];
    update_into(spec, u_i, u_j, a, &mut out)?;
    Opinion::new(out)
}

/// Correlation with the influencer after one interaction, from the old correlation alone.
pub fn predicted_correlation(a: f64, spec: &UpdateFunctionSpec) -> Result<f64> {
    let a = check_domain(a)?;
    let f = spec.eval_unchecked(a);
    if a.abs() == 1.0 {
        // The update stays on the line of u_j, so +-1 is exact.
        return if (a + f).abs() <= DEGENERATE_NORM {
            Err(Error::DegenerateUpdate)
        } else {
            Ok(a)
        };
    }
    let denom_sq = 1.0 + 2.0 * a * f + f * f;
    // 1 + 2Af + f^2 = (A + f)^2 + (1 - A^2) >= 0; guard rounding at the boundary.
    let denom = denom_sq.max(0.0).sqrt();
    if denom <= DEGENERATE_NORM {
        return Err(Error::DegenerateUpdate);
    }
    Ok(clamp_unit((a + f) / denom))
}

/// Moves `u_i` along the great circle towards (or away from) `u_j` by
/// `phi = (eta / 2) sin(2 theta)`.
///
/// Equal and antipodal pairs are fixed points and return `u_i` unchanged.
pub fn slerp_update(u_i: &[f64], u_j: &[f64], eta: f64) -> Result<Opinion> {
    UpdateFunctionSpec::slerp(eta)?;
    if u_i.len() != u_j.len() {
        return Err(Error::DimensionMismatch {
            expected: u_i.len(),
            found: u_j.len(),
        });
    }
    let a = dot(u_i, u_j);
    let perp: Vec<f64> = u_i.iter().zip(u_j).map(|(x, y)| x - a * y).collect();
    let sin_theta = norm(&perp);
    if sin_theta <= SLERP_FIXED_POINT {
        return normalize(u_i);
    }
    let theta = sin_theta.atan2(a);
    let phi = eta * sin_theta * a.clamp(-1.0, 1.0);
    let (wi, wj) = ((theta - phi).sin() / sin_theta, phi.sin() / sin_theta);
    let v: Vec<f64> = u_i.iter().zip(u_j).map(|(x, y)| wi * x + wj * y).collect();
    normalize(&v)
}

/// Exact classification of an update function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionClassification {
    pub is_stable: bool,
    pub is_active: bool,
    pub is_odd: bool,
    /// The unique point where `f` changes sign.
    pub sign_change_point: Option<f64>,
    /// `inf |f|` over `[-1, 1]` for active functions.
    pub activity_floor: Option<f64>,
}

pub fn classify(spec: &UpdateFunctionSpec) -> FunctionClassification {
    match *spec {
        UpdateFunctionSpec::Linear { .. } | UpdateFunctionSpec::Slerp { .. } => {
            FunctionClassification {
                is_stable: true,
                is_active: false,
                is_odd: true,
                sign_change_point: Some(0.0),
                activity_floor: None,
            }
        }
        UpdateFunctionSpec::AsymmetricLinear { .. } => FunctionClassification {
            is_stable: true,
            is_active: false,
            is_odd: false,
            sign_change_point: Some(0.0),
            activity_floor: None,
        },
        UpdateFunctionSpec::Sign { eta } => FunctionClassification {
            is_stable: false,
            is_active: true,
            is_odd: true,
            sign_change_point: Some(0.0),
            activity_floor: Some(eta),
        },
        UpdateFunctionSpec::AsymmetricSign {
            eta_plus,
            eta_minus,
            threshold,
        } => FunctionClassification {
            is_stable: false,
            is_active: true,
            is_odd: false,
            sign_change_point: Some(threshold),
            activity_floor: Some(eta_plus.min(eta_minus)),
        },
    }
}

/// `c = max { 1 / (1 + |f(x)|) : delta <= |x| <= 1 }`, the factor by which one
/// interaction shrinks `1 - |A|` whenever `|A| >= delta`.
pub fn contraction_constant(spec: &UpdateFunctionSpec, delta: f64) -> Result<f64> {
    if !classify(spec).is_stable {
        return Err(Error::NotStable);
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let min_abs_f = match *spec {
        UpdateFunctionSpec::Linear { eta } => eta * delta,
        UpdateFunctionSpec::AsymmetricLinear { eta_plus, eta_minus } => {
            eta_plus.min(eta_minus) * delta
        }
        _ => {
            let lower = minimize_abs_f(spec, delta, 1.0);
            let upper = minimize_abs_f(spec, -1.0, -delta);
            lower.min(upper)
        }
    };
    Ok(1.0 / (1.0 + min_abs_f))
}

/// Grid search followed by golden-section refinement of `|f|` on `[lo, hi]`.
fn minimize_abs_f(spec: &UpdateFunctionSpec, lo: f64, hi: f64) -> f64 {
    const GRID: usize = 10_000;
    let g = |x: f64| spec.eval_unchecked(x).abs();
    let step = (hi - lo) / GRID as f64;
    let (mut best_k, mut best) = (0, g(lo));
    for k in 1..=GRID {
        let v = g(lo + k as f64 * step);
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let (mut a, mut b) = (
        (lo + (best_k as f64 - 1.0) * step).max(lo),
        (lo + (best_k as f64 + 1.0) * step).min(hi),
    );
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let (x1, x2) = (b - r * (b - a), a + r * (b - a));
        if g(x1) < g(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    best.min(g(0.5 * (a + b))).min(g(lo)).min(g(hi))
}

/// Numeric sweep for the contraction factor of an active function:
/// the smallest `beta` with `1 - A' <= beta (1 - A)` for `A >= A_0` and
/// `A' + 1 <= beta (A + 1)` for `A < A_0`, over a grid of `points` values
/// plus the one-sided limits at `A_0`.
pub fn active_contraction_factor(spec: &UpdateFunctionSpec, points: usize) -> Result<f64> {
    let class = classify(spec);
    if !class.is_active {
        return Err(Error::NotActive);
    }
    let a0 = class.sign_change_point.unwrap_or(0.0);
    let ratio = |a: f64| -> Result<f64> {
        let ap = predicted_correlation(a, spec)?;
        Ok(if a >= a0 {
            (1.0 - ap) / (1.0 - a)
        } else {
            (ap + 1.0) / (a + 1.0)
        })
    };
    let mut beta: f64 = 0.0;
    let points = points.max(2);
    for k in 1..points {
        let a = -1.0 + 2.0 * k as f64 / points as f64;
        beta = beta.max(ratio(a)?);
    }
    for a in [a0, a0 - 1e-12, 1.0 - 1e-9, -1.0 + 1e-9] {
        if a > -1.0 && a < 1.0 {
            beta = beta.max(ratio(a)?);
        }
    }
    Ok(beta)
}

/// Effective angle after one interaction, as a function of the old correlation.
pub fn predicted_effective_angle(a: f64, spec: &UpdateFunctionSpec) -> Result<f64> {
    Ok(predicted_correlation(a, spec)?.abs().acos().min(FRAC_PI_2))
}

//! Explicit intervention scripts that steer a configuration into a target
//! region, and the three-agent configuration that no short script can make
//! strictly convex.
//!
//! Script lengths come from iterating [`predicted_correlation`] exactly, so
//! they are tight rather than worst-case. Every builder simulates its own
//! script and refuses to return one whose postcondition fails.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, closeness_components, epsilon_activity, separability, strict_convexity, ActivityVerdict,
    ConvexityVerdict, DEFAULT_TOL_ORTH,
};
use crate::configuration::{Configuration, ConfigurationSnapshot};
use crate::dynamics::apply_sequence;
use crate::error::{Error, Result};
use crate::geometry::Opinion;
use crate::rng::stream_rng;
use crate::update::{classify, predicted_correlation, UpdateFunctionSpec};

/// Hard cap on the length of a single pair drive.
pub const MAX_DRIVE_STEPS: usize = 1_000_000;

/// Predicted values must clear a threshold by this much, so rounding in the
/// actual vector updates cannot undo the postcondition.
const SLACK: f64 = 1e-12;

/// Closeness radius used by the two-dimensional quadrant construction.
pub const QUADRANT_EPSILON: f64 = 1.0 / 256.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptIntent {
    DrivePairClose,
    Inactivate,
    Quadrant2D,
    ActiveConvexify,
    ClusterMerge,
}

/// What a script guarantees about the configuration it produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Postcondition {
    /// `|A_ij| >= 1 - epsilon`.
    PairClose { i: usize, j: usize, epsilon: f64 },
    /// Effective angle between `i` and `j` at most `angle`.
    AngleAtMost { i: usize, j: usize, angle: f64 },
    /// No pair is `epsilon`-active.
    EpsilonInactive { epsilon: f64 },
    /// Certified by [`strict_convexity`] at level `c`.
    StrictlyConvex { c: f64 },
    /// `epsilon`-inactive with fewer than `before` clusters.
    FewerClusters { epsilon: f64, before: usize },
}

impl Postcondition {
    pub fn holds(&self, config: &Configuration) -> bool {
        match *self {
            Postcondition::PairClose { i, j, epsilon } => {
                config.correlation(i, j).abs() >= 1.0 - epsilon
            }
            Postcondition::AngleAtMost { i, j, angle } => {
                config.correlation(i, j).abs().min(1.0).acos() <= angle
            }
            Postcondition::EpsilonInactive { epsilon } => {
                !epsilon_activity(config, epsilon).is_active()
            }
            Postcondition::StrictlyConvex { c } => strict_convexity(config, c, 0.0).is_certified(),
            Postcondition::FewerClusters { epsilon, before } => {
                !epsilon_activity(config, epsilon).is_active()
                    && closeness_components(config, epsilon).len() < before
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionScript {
    /// Ordered pairs `(i, j)`: `j` influences `i`.
    pub pairs: Vec<(usize, usize)>,
    pub intent: ScriptIntent,
    pub postcondition: Postcondition,
}

impl InterventionScript {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The configuration after running the script.
    pub fn apply(&self, config: &Configuration, spec: &UpdateFunctionSpec) -> Result<Configuration> {
        let mut out = config.clone();
        apply_sequence(&mut out, &self.pairs, spec)?;
        Ok(out)
    }

    /// Runs the script and checks its postcondition.
    pub fn verify(&self, config: &Configuration, spec: &UpdateFunctionSpec) -> Result<bool> {
        Ok(self.postcondition.holds(&self.apply(config, spec)?))
    }

    fn checked(self, config: &Configuration, spec: &UpdateFunctionSpec) -> Result<Self> {
        if self.verify(config, spec)? {
            Ok(self)
        } else {
            Err(Error::StructureViolation(format!(
                "{:?} script of length {} misses {:?}",
                self.intent,
                self.len(),
                self.postcondition
            )))
        }
    }
}

/// Number of repeated `(i, j)` interactions until `done` accepts the
/// predicted correlation.
fn iterate_until(
    a0: f64,
    spec: &UpdateFunctionSpec,
    (i, j): (usize, usize),
    done: impl Fn(f64) -> bool,
) -> Result<usize> {
    let mut a = a0;
    for steps in 0..=MAX_DRIVE_STEPS {
        if done(a) {
            return Ok(steps);
        }
        a = predicted_correlation(a, spec)?;
    }
    Err(Error::StructureViolation(format!(
        "pair ({i}, {j}) did not converge within {MAX_DRIVE_STEPS} steps"
    )))
}

/// Repeats `(i, j)` until `|A_ij| >= 1 - target_eps`, or until the effective
/// angle has shrunk by `divide_factor` when one is given.
pub fn drive_pair_close(
    config: &Configuration,
    i: usize,
    j: usize,
    spec: &UpdateFunctionSpec,
    target_eps: f64,
    divide_factor: Option<f64>,
) -> Result<InterventionScript> {
    if !classify(spec).is_stable {
        return Err(Error::NotStable);
    }
    drive_any(config, i, j, spec, target_eps, divide_factor)
}

/// Pair driver shared by the stable and active constructions.
fn drive_any(
    config: &Configuration,
    i: usize,
    j: usize,
    spec: &UpdateFunctionSpec,
    target_eps: f64,
    divide_factor: Option<f64>,
) -> Result<InterventionScript> {
    config.check_index(i)?;
    config.check_index(j)?;
    if i == j {
        return Err(Error::InvalidParams(format!("cannot drive agent {i} towards itself")));
    }
    let a0 = config.correlation(i, j);
    let (postcondition, len) = match divide_factor {
        None => {
            if !(1e-10..1.0).contains(&target_eps) {
                return Err(Error::InvalidParams(format!(
                    "target epsilon must lie in [1e-10, 1), got {target_eps}"
                )));
            }
            let post = Postcondition::PairClose {
                i,
                j,
                epsilon: target_eps,
            };
            if post.holds(config) {
                return Ok(script(vec![], ScriptIntent::DrivePairClose, post));
            }
            if a0.abs() <= DEFAULT_TOL_ORTH && !classify(spec).is_active {
                return Err(Error::NoProgress(i, j));
            }
            let len = iterate_until(a0, spec, (i, j), |a| a.abs() >= 1.0 - target_eps + SLACK)?;
            (post, len)
        }
        Some(k) => {
            if !(k > 1.0) {
                return Err(Error::InvalidParams(format!("divide factor must exceed 1, got {k}")));
            }
            let gamma0 = a0.abs().min(1.0).acos();
            let post = Postcondition::AngleAtMost {
                i,
                j,
                angle: gamma0 / k,
            };
            if gamma0 == 0.0 {
                return Ok(script(vec![], ScriptIntent::DrivePairClose, post));
            }
            if a0.abs() <= DEFAULT_TOL_ORTH && !classify(spec).is_active {
                return Err(Error::NoProgress(i, j));
            }
            let target = gamma0 / k * (1.0 - 1e-9);
            let len = iterate_until(a0, spec, (i, j), |a| a.abs().min(1.0).acos() <= target)?;
            (post, len)
        }
    };
    script(vec![(i, j); len], ScriptIntent::DrivePairClose, postcondition).checked(config, spec)
}

fn script(pairs: Vec<(usize, usize)>, intent: ScriptIntent, postcondition: Postcondition) -> InterventionScript {
    InterventionScript {
        pairs,
        intent,
        postcondition,
    }
}

/// Greedy construction that makes a configuration `epsilon`-inactive.
///
/// Agents are scanned in index order and kept as representatives while they
/// are `eps0`-orthogonal to all earlier representatives, `eps0 = (eps/64)^2`.
/// Every other agent is driven `eps0`-close to the representative it
/// correlates with most.
pub fn greedy_inactivation(
    config: &Configuration,
    epsilon: f64,
    spec: &UpdateFunctionSpec,
) -> Result<InterventionScript> {
    if !classify(spec).is_stable {
        return Err(Error::NotStable);
    }
    if !(epsilon > 0.0 && epsilon < 0.25) {
        return Err(Error::InvalidParams(format!(
            "epsilon must lie in (0, 1/4), got {epsilon}"
        )));
    }
    let post = Postcondition::EpsilonInactive { epsilon };
    if post.holds(config) {
        return Ok(script(vec![], ScriptIntent::Inactivate, post));
    }
    let eps0 = (epsilon / 64.0).powi(2);
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..config.n() {
        if reps.iter().all(|&r| config.correlation(i, r).abs() <= eps0) {
            reps.push(i);
        }
    }
    let mut owner = vec![usize::MAX; config.n()];
    let mut pairs = Vec::new();
    for i in 0..config.n() {
        if reps.contains(&i) {
            owner[i] = i;
            continue;
        }
        let r = *reps
            .iter()
            .max_by(|&&a, &&b| {
                config
                    .correlation(i, a)
                    .abs()
                    .total_cmp(&config.correlation(i, b).abs())
                    .then(b.cmp(&a))
            })
            .expect("agent 0 is always a representative");
        owner[i] = r;
        // Representatives never move, so each drive sees the original A_ir.
        pairs.extend(drive_pair_close(config, i, r, spec, eps0, None)?.pairs);
    }
    let out = script(pairs, ScriptIntent::Inactivate, post);
    let after = out.apply(config, spec)?;
    verify_greedy_cases(&after, &reps, &owner, eps0)?;
    out.checked(config, spec)
}

/// Re-checks the three relations that make the greedy output inactive.
fn verify_greedy_cases(after: &Configuration, reps: &[usize], owner: &[usize], eps0: f64) -> Result<()> {
    let bound_other_rep = 8.0 * eps0.sqrt();
    let bound_cross = 64.0 * eps0.sqrt();
    let fail = |what: &str, i: usize, j: usize| {
        Err(Error::StructureViolation(format!("greedy inactivation: {what} at ({i}, {j})")))
    };
    for (i, j, a) in after.correlations().pairs() {
        let a = a.abs();
        if owner[i] == owner[j] {
            if a < 1.0 - 4.0 * eps0 {
                return fail("same representative but not close", i, j);
            }
        } else if a > bound_cross {
            return fail("different representatives but correlated", i, j);
        }
    }
    for i in 0..after.n() {
        for &r in reps {
            if r != owner[i] && after.correlation(i, r).abs() > bound_other_rep {
                return fail("agent correlated with a foreign representative", i, r);
            }
        }
    }
    Ok(())
}

/// Makes a two-dimensional, `1/256`-inactive, non-separable configuration
/// strictly convex.
///
/// With a single tight cluster or exactly two lines the input is already
/// strictly convex. Otherwise there are two clusters; take the closest
/// cross-cluster pair `(p, q)` (ties broken lexicographically) and shrink every
/// other agent's effective angle to its representative eightfold.
pub fn quadrant_2d(config: &Configuration, spec: &UpdateFunctionSpec) -> Result<InterventionScript> {
    let eps = QUADRANT_EPSILON;
    if config.d() != 2 {
        return Err(Error::PreconditionViolated(format!(
            "quadrant construction needs d = 2, got {}",
            config.d()
        )));
    }
    if !classify(spec).is_stable {
        return Err(Error::NotStable);
    }
    if let ActivityVerdict::Active { i, j } = epsilon_activity(config, eps) {
        return Err(Error::PreconditionViolated(format!("pair ({i}, {j}) is 1/256-active")));
    }
    if separability(config, DEFAULT_TOL_ORTH).is_separable() {
        return Err(Error::PreconditionViolated("configuration is separable".into()));
    }
    let post = Postcondition::StrictlyConvex { c: 0.0 };
    let lines = closeness_components(config, 1e-12).len();
    let all_close = config
        .correlations()
        .pairs()
        .all(|(_, _, a)| a.abs() >= 1.0 - eps);
    if lines <= 2 || all_close {
        return script(vec![], ScriptIntent::Quadrant2D, post).checked(config, spec);
    }
    let (p, q, _) = config
        .correlations()
        .pairs()
        .filter(|&(_, _, a)| a.abs() <= eps)
        .fold(None::<(usize, usize, f64)>, |best, (i, j, a)| match best {
            Some((_, _, b)) if b >= a.abs() => best,
            _ => Some((i, j, a.abs())),
        })
        .ok_or_else(|| Error::StructureViolation("no cross-cluster pair".into()))?;
    let mut pairs = Vec::new();
    for rep in [p, q] {
        for i in (0..config.n()).filter(|&i| i != rep) {
            if config.correlation(rep, i).abs() >= 1.0 - eps {
                pairs.extend(drive_pair_close(config, i, rep, spec, eps, Some(8.0))?.pairs);
            }
        }
    }
    script(pairs, ScriptIntent::Quadrant2D, post).checked(config, spec)
}

/// For an active update function: agent 0 influences every other agent until
/// all correlations with it are within `eps0` of `±1`, which makes the
/// configuration strictly convex at level `c = |A_0|`.
pub fn active_convexify(config: &Configuration, spec: &UpdateFunctionSpec) -> Result<InterventionScript> {
    let class = classify(spec);
    if !class.is_active {
        return Err(Error::NotActive);
    }
    let c = class.sign_change_point.unwrap_or(0.0).abs();
    let eps = 0.5 * (1.0 - c).min(QUADRANT_EPSILON);
    let eps0 = eps / 4.0;
    let mut pairs = Vec::new();
    for i in 1..config.n() {
        pairs.extend(drive_any(config, i, 0, spec, eps0, None)?.pairs);
    }
    script(pairs, ScriptIntent::ActiveConvexify, Postcondition::StrictlyConvex { c }).checked(config, spec)
}

/// Merges the clusters of `i` and `j` once their cross correlation has become
/// `epsilon`-active.
///
/// Both groups are driven `epsilon^2/16`-close to `i`. If that activates a pair
/// between the merged group and a third cluster, the merge repeats from that
/// pair, at most `n` times.
pub fn cluster_merge(
    config: &Configuration,
    (i, j): (usize, usize),
    epsilon: f64,
    spec: &UpdateFunctionSpec,
) -> Result<InterventionScript> {
    if !classify(spec).is_stable {
        return Err(Error::NotStable);
    }
    config.check_index(i)?;
    config.check_index(j)?;
    if !(epsilon > 0.0 && epsilon < 0.25) {
        return Err(Error::InvalidParams(format!(
            "epsilon must lie in (0, 1/4), got {epsilon}"
        )));
    }
    if i == j || config.correlation(i, j).abs() <= epsilon {
        return Err(Error::PreconditionViolated(format!(
            "pair ({i}, {j}) is not an active cross-cluster pair"
        )));
    }
    let before = closeness_components(config, epsilon);
    let comp = |c: &[Vec<usize>], x: usize| c.iter().position(|g| g.contains(&x)).unwrap();
    if comp(&before, i) == comp(&before, j) {
        return Err(Error::PreconditionViolated(format!(
            "agents {i} and {j} are in the same cluster"
        )));
    }
    let eps_close = epsilon * epsilon / 16.0;
    let mut work = config.clone();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut merged: Vec<usize> = Vec::new();
    let (mut anchor, mut other) = (i, j);
    for _round in 0..config.n() {
        let comps = closeness_components(&work, epsilon);
        let group_a = comps[comp(&comps, anchor)].clone();
        let group_b = comps[comp(&comps, other)].clone();
        let mut round: Vec<(usize, usize)> = Vec::new();
        let mut drive = |work: &mut Configuration, x: usize, y: usize| -> Result<()> {
            let s = drive_pair_close(work, x, y, spec, eps_close, None)?;
            apply_sequence(work, &s.pairs, spec)?;
            round.extend(s.pairs);
            Ok(())
        };
        for &m in group_a.iter().filter(|&&m| m != anchor) {
            drive(&mut work, m, anchor)?;
        }
        for &m in group_b.iter().filter(|&&m| m != other) {
            drive(&mut work, m, other)?;
            drive(&mut work, m, anchor)?;
        }
        drive(&mut work, other, anchor)?;
        pairs.extend(round);
        merged.extend(group_a.iter().chain(&group_b));
        merged.sort_unstable();
        merged.dedup();

        match epsilon_activity(&work, epsilon) {
            ActivityVerdict::Inactive => {
                return script(
                    pairs,
                    ScriptIntent::ClusterMerge,
                    Postcondition::FewerClusters {
                        epsilon,
                        before: before.len(),
                    },
                )
                .checked(config, spec);
            }
            ActivityVerdict::Active { i: x, j: y } => {
                let (in_x, in_y) = (merged.contains(&x), merged.contains(&y));
                (anchor, other) = match (in_x, in_y) {
                    (true, false) => (x, y),
                    (false, true) => (y, x),
                    _ => {
                        return Err(Error::StructureViolation(format!(
                            "active pair ({x}, {y}) does not touch the merged group"
                        )))
                    }
                };
            }
        }
    }
    Err(Error::StructureViolation(format!(
        "cluster merge did not settle within {} rounds",
        config.n()
    )))
}

/// Three opinions with correlations `(eps, eps, -eps)` that stay non-convex
/// under every short sequence of linear updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSpec {
    pub d: usize,
    pub eta: f64,
    pub horizon: usize,
    pub epsilon: f64,
    pub configuration: ConfigurationSnapshot,
}

/// `K = eta + (2 eta + eta^2) / 2`.
fn drift_constant(eta: f64) -> f64 {
    eta + (2.0 * eta + eta * eta) / 2.0
}

/// `eps / 2 >= eps^2 K T (1 + eta)^(2T)`.
pub fn counterexample_inequality_holds(eta: f64, horizon: usize, epsilon: f64) -> bool {
    epsilon <= counterexample_bound(eta, horizon)
}

/// Largest `eps` allowed by the inequality.
pub fn counterexample_bound(eta: f64, horizon: usize) -> f64 {
    let t = horizon as f64;
    1.0 / (2.0 * drift_constant(eta) * t * (1.0 + eta).powf(2.0 * t))
}

impl CounterexampleSpec {
    /// Builds the configuration for a caller-chosen `epsilon`, rejecting values
    /// that violate the inequality.
    pub fn with_epsilon(d: usize, eta: f64, horizon: usize, epsilon: f64) -> Result<Self> {
        if d < 3 || !(eta > 0.0 && eta.is_finite()) || horizon == 0 {
            return Err(Error::InvalidParams(format!(
                "need d >= 3, eta > 0, T >= 1; got d = {d}, eta = {eta}, T = {horizon}"
            )));
        }
        if !(epsilon > 0.0) || !counterexample_inequality_holds(eta, horizon, epsilon) {
            return Err(Error::InvalidParams(format!(
                "epsilon = {epsilon} violates the admissibility bound {}",
                counterexample_bound(eta, horizon)
            )));
        }
        let e = epsilon;
        let s = (1.0 - e * e).sqrt();
        let y = (-e - e * e) / s;
        let z2 = 1.0 - e * e - y * y;
        if z2 <= 0.0 {
            return Err(Error::InvalidParams(format!("epsilon = {e} cannot be realized")));
        }
        let pad = |v: [f64; 3]| {
            let mut out = v.to_vec();
            out.resize(d, 0.0);
            out
        };
        let rows = vec![pad([1.0, 0.0, 0.0]), pad([e, s, 0.0]), pad([e, y, z2.sqrt()])];
        let opinions = rows.into_iter().map(Opinion::new).collect::<Result<Vec<_>>>()?;
        let config = Configuration::new(opinions)?;
        Ok(CounterexampleSpec {
            d,
            eta,
            horizon,
            epsilon,
            configuration: (&config).into(),
        })
    }

    pub fn config(&self) -> Configuration {
        Configuration::from_rows(&self.configuration.opinions).expect("stored opinions are valid")
    }
}

/// Picks the largest `eps = 10^(-k/4)` satisfying the inequality.
pub fn counterexample(d: usize, eta: f64, horizon: usize) -> Result<CounterexampleSpec> {
    if !(eta > 0.0 && eta.is_finite()) || horizon == 0 {
        return Err(Error::InvalidParams(format!(
            "need eta > 0 and T >= 1; got eta = {eta}, T = {horizon}"
        )));
    }
    let bound = counterexample_bound(eta, horizon);
    let k = (1..=4_000)
        .find(|&k| 10f64.powf(-(k as f64) / 4.0) <= bound)
        .ok_or_else(|| Error::InvalidParams(format!("admissible epsilon below 1e-1000 ({bound})")))?;
    CounterexampleSpec::with_epsilon(d, eta, horizon, 10f64.powf(-(k as f64) / 4.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum CounterexampleVerdict {
    Pass {
        sequences: u64,
        /// Largest `|A_ij(t) - A_ij(0)|` seen; informational, it can exceed `eps / 2`.
        max_drift: f64,
        /// Largest `|A_ij(0)| - |A_ij(t)|` seen; at most `eps / 2` on a pass.
        max_loss: f64,
    },
    Fail { sequence: Vec<(usize, usize)>, reason: String },
}

impl CounterexampleVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, CounterexampleVerdict::Pass { .. })
    }
}

const ORDERED_PAIRS_3: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];

#[derive(Default)]
struct DriftStats {
    max_drift: f64,
    max_loss: f64,
}

/// Checks one prefix: still not strictly convex, no sign flips, and no
/// correlation has lost more than `eps / 2` of its magnitude.
fn prefix_violation(
    config: &Configuration,
    initial: &Configuration,
    eps: f64,
    stats: &mut DriftStats,
) -> Option<String> {
    if strict_convexity(config, 0.0, 0.0).is_certified() {
        return Some("configuration became strictly convex".into());
    }
    for (i, j, a) in config.correlations().pairs() {
        let a0 = initial.correlation(i, j);
        if a.signum() != a0.signum() || a == 0.0 {
            return Some(format!("sign of A_{i}{j} flipped"));
        }
        let loss = a0.abs() - a.abs();
        stats.max_drift = stats.max_drift.max((a - a0).abs());
        stats.max_loss = stats.max_loss.max(loss);
        if loss > eps / 2.0 {
            return Some(format!("|A_{i}{j}| shrank by {loss}"));
        }
    }
    None
}

/// Visits every sequence of `horizon` interactions among the three agents and
/// checks every prefix.
pub fn verify_counterexample_exhaustive(ce: &CounterexampleSpec) -> Result<CounterexampleVerdict> {
    struct Search<'a> {
        initial: Configuration,
        spec: UpdateFunctionSpec,
        ce: &'a CounterexampleSpec,
        path: Vec<(usize, usize)>,
        leaves: u64,
        stats: DriftStats,
    }
    impl Search<'_> {
        fn dfs(&mut self, config: &Configuration) -> Result<Option<CounterexampleVerdict>> {
            if let Some(reason) = prefix_violation(config, &self.initial, self.ce.epsilon, &mut self.stats) {
                return Ok(Some(CounterexampleVerdict::Fail {
                    sequence: self.path.clone(),
                    reason,
                }));
            }
            if self.path.len() == self.ce.horizon {
                self.leaves += 1;
                return Ok(None);
            }
            for &(i, j) in &ORDERED_PAIRS_3 {
                let mut next = config.clone();
                crate::dynamics::step(&mut next, i, j, &self.spec)?;
                self.path.push((i, j));
                if let Some(fail) = self.dfs(&next)? {
                    return Ok(Some(fail));
                }
                self.path.pop();
            }
            Ok(None)
        }
    }
    let initial = ce.config();
    let mut search = Search {
        initial: initial.clone(),
        spec: UpdateFunctionSpec::linear(ce.eta)?,
        ce,
        path: Vec::with_capacity(ce.horizon),
        leaves: 0,
        stats: DriftStats::default(),
    };
    Ok(search.dfs(&initial)?.unwrap_or(CounterexampleVerdict::Pass {
        sequences: search.leaves,
        max_drift: search.stats.max_drift,
        max_loss: search.stats.max_loss,
    }))
}

/// Checks `samples` uniformly random sequences of length `horizon`.
pub fn verify_counterexample_sampled(
    ce: &CounterexampleSpec,
    samples: u64,
    seed: u64,
) -> Result<CounterexampleVerdict> {
    let spec = UpdateFunctionSpec::linear(ce.eta)?;
    let initial = ce.config();
    let mut rng = stream_rng(seed, 0);
    let mut stats = DriftStats::default();
    for _ in 0..samples {
        let mut config = initial.clone();
        let mut path = Vec::with_capacity(ce.horizon);
        for _ in 0..ce.horizon {
            let (i, j) = ORDERED_PAIRS_3[rng.random_range(0..6)];
            crate::dynamics::step(&mut config, i, j, &spec)?;
            path.push((i, j));
            if let Some(reason) = prefix_violation(&config, &initial, ce.epsilon, &mut stats) {
                return Ok(CounterexampleVerdict::Fail { sequence: path, reason });
            }
        }
    }
    Ok(CounterexampleVerdict::Pass {
        sequences: samples,
        max_drift: stats.max_drift,
        max_loss: stats.max_loss,
    })
}

/// Convexity margin of a configuration, or `None` when it is not strictly convex.
pub fn convexity_margin(config: &Configuration) -> Option<f64> {
    match analysis::strict_convexity(config, 0.0, 0.0) {
        ConvexityVerdict::Certified(s) => Some(s.margin),
        ConvexityVerdict::Refuted => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform_sphere;

    fn lin(eta: f64) -> UpdateFunctionSpec {
        UpdateFunctionSpec::linear(eta).unwrap()
    }

    fn cfg(rows: &[Vec<f64>]) -> Configuration {
        Configuration::from_rows(rows).unwrap()
    }

    fn pair(a: f64) -> Configuration {
        cfg(&[vec![1.0, 0.0], vec![a, (1.0 - a * a).sqrt()]])
    }

    fn at_angle(t: f64) -> Vec<f64> {
        vec![t.cos(), t.sin()]
    }

    #[test]
    fn drive_examples() {
        let s = drive_pair_close(&pair(0.999), 0, 1, &lin(0.5), 0.01, None).unwrap();
        assert!(s.is_empty());
        // 0.5 -> 0.7559 -> 0.9177 -> 0.9773 -> 0.9942
        let s = drive_pair_close(&pair(0.5), 0, 1, &lin(1.0), 0.1, None).unwrap();
        assert_eq!(s.len(), 2);
        let s = drive_pair_close(&pair(0.5), 0, 1, &lin(1.0), 0.01, None).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.pairs, vec![(0, 1); 4]);
        assert!(matches!(
            drive_pair_close(&pair(0.0), 0, 1, &lin(1.0), 0.01, None),
            Err(Error::NoProgress(0, 1))
        ));
        assert!(matches!(
            drive_pair_close(&pair(0.5), 0, 1, &UpdateFunctionSpec::sign(0.3).unwrap(), 0.01, None),
            Err(Error::NotStable)
        ));
    }

    #[test]
    fn drive_divides_angle() {
        let c = pair(-0.3);
        let s = drive_pair_close(&c, 1, 0, &lin(0.2), 0.0, Some(8.0)).unwrap();
        let after = s.apply(&c, &lin(0.2)).unwrap();
        let g0 = 0.3f64.acos();
        let g = after.correlation(0, 1).abs().acos();
        assert!(g <= g0 / 8.0);
        // One step fewer would not suffice.
        let mut short = c.clone();
        apply_sequence(&mut short, &s.pairs[1..], &lin(0.2)).unwrap();
        assert!(short.correlation(0, 1).abs().acos() > g0 / 8.0 * (1.0 - 1e-9));
    }

    #[test]
    fn drive_postcondition_on_random_starts() {
        let mut rng = stream_rng(21, 0);
        for _ in 0..10_000 {
            let a: f64 = rng.random_range(-0.999..0.999);
            if a.abs() < 1e-6 {
                continue;
            }
            let eps = 10f64.powf(rng.random_range(-8.0..-1.0));
            let spec = if rng.random::<bool>() { lin(rng.random_range(0.05..1.0)) } else {
                UpdateFunctionSpec::slerp(rng.random_range(0.05..0.95)).unwrap()
            };
            let c = pair(a);
            let s = drive_pair_close(&c, 0, 1, &spec, eps, None).unwrap();
            assert!(s.verify(&c, &spec).unwrap());
        }
    }

    #[test]
    fn greedy_examples() {
        let c = cfg(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]);
        assert!(greedy_inactivation(&c, 0.1, &lin(0.1)).unwrap().is_empty());
        let c = cfg(&[vec![1.0, 0.0], vec![0.5, 0.75f64.sqrt()], vec![0.0, 1.0]]);
        let s = greedy_inactivation(&c, 0.1, &lin(0.1)).unwrap();
        assert!(!s.is_empty());
        let after = s.apply(&c, &lin(0.1)).unwrap();
        assert!(!epsilon_activity(&after, 0.1).is_active());
    }

    #[test]
    fn greedy_on_random_configs() {
        let mut rng = stream_rng(22, 0);
        for k in 0..200 {
            let d = 2 + k % 2;
            let n = 2 + k % 9;
            let c = Configuration::new((0..n).map(|_| sample_uniform_sphere(d, &mut rng).unwrap()).collect())
                .unwrap();
            let s = greedy_inactivation(&c, 0.1, &lin(0.3)).unwrap();
            assert!(s.verify(&c, &lin(0.3)).unwrap());
        }
    }

    #[test]
    fn quadrant_examples() {
        let spec = lin(0.2);
        let c = cfg(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0]]);
        assert!(quadrant_2d(&c, &spec).unwrap().is_empty());
        let c = cfg(&[at_angle(0.01), at_angle(0.02), at_angle(0.03 + std::f64::consts::PI)]);
        assert!(quadrant_2d(&c, &spec).unwrap().is_empty());
        let h = std::f64::consts::FRAC_PI_2;
        let d = 0.001;
        let c = cfg(&[at_angle(h - d), at_angle(h + d), at_angle(0.0)]);
        let s = quadrant_2d(&c, &spec).unwrap();
        assert!(s.verify(&c, &spec).unwrap());
        assert!(convexity_margin(&s.apply(&c, &spec).unwrap()).unwrap() > 0.0);
    }

    #[test]
    fn quadrant_preconditions() {
        let spec = lin(0.2);
        let c3 = cfg(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
        assert!(matches!(quadrant_2d(&c3, &spec), Err(Error::PreconditionViolated(_))));
        let sep = cfg(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(quadrant_2d(&sep, &spec), Err(Error::PreconditionViolated(_))));
        let h = std::f64::consts::FRAC_PI_2;
        let act = cfg(&[at_angle(h - 0.05), at_angle(h + 0.05), at_angle(0.0)]);
        assert!(matches!(quadrant_2d(&act, &spec), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn inactivation_then_quadrant() {
        let spec = lin(0.2);
        let h = std::f64::consts::FRAC_PI_2;
        let c = cfg(&[at_angle(h - 0.05), at_angle(h + 0.05), at_angle(0.0)]);
        let first = greedy_inactivation(&c, QUADRANT_EPSILON, &spec).unwrap();
        let mid = first.apply(&c, &spec).unwrap();
        let second = quadrant_2d(&mid, &spec).unwrap();
        let end = second.apply(&mid, &spec).unwrap();
        assert!(strict_convexity(&end, 0.0, 0.0).is_certified());
    }

    #[test]
    fn active_convexify_examples() {
        let spec = UpdateFunctionSpec::sign(0.3).unwrap();
        let c = cfg(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let s = active_convexify(&c, &spec).unwrap();
        let after = s.apply(&c, &spec).unwrap();
        let eps0 = QUADRANT_EPSILON / 8.0;
        for i in 1..3 {
            assert!(after.correlation(0, i).abs() >= 1.0 - eps0);
        }
        assert!(convexity_margin(&after).unwrap() > 0.0);

        let tight = cfg(&vec![vec![0.3, 0.4, 0.5]; 4]);
        assert!(active_convexify(&tight, &spec).unwrap().len() <= 3);
        assert!(matches!(active_convexify(&c, &lin(0.1)), Err(Error::NotActive)));
    }

    #[test]
    fn active_convexify_with_threshold() {
        let spec = UpdateFunctionSpec::asymmetric_sign(0.2, 0.4, 0.3).unwrap();
        let mut rng = stream_rng(23, 0);
        for _ in 0..200 {
            let c = Configuration::new((0..5).map(|_| sample_uniform_sphere(3, &mut rng).unwrap()).collect())
                .unwrap();
            let s = active_convexify(&c, &spec).unwrap();
            let after = s.apply(&c, &spec).unwrap();
            assert!(strict_convexity(&after, 0.3, 0.0).is_certified());
        }
    }

    fn two_clusters(cross: f64) -> Configuration {
        // Cluster {0, 1} near e1, cluster {2, 3} near e2; A_02 = cross.
        cfg(&[
            vec![1.0, 0.0, 0.0],
            vec![0.999, 0.0, 0.0447],
            vec![cross, (1.0 - cross * cross).sqrt(), 0.0],
            vec![0.0, -1.0, 0.03],
        ])
    }

    #[test]
    fn cluster_merge_examples() {
        let spec = lin(0.2);
        let c = two_clusters(0.02);
        assert_eq!(closeness_components(&c, 0.01).len(), 2);
        let s = cluster_merge(&c, (0, 2), 0.01, &spec).unwrap();
        let after = s.apply(&c, &spec).unwrap();
        assert_eq!(analysis::cluster_partition(&after, 0.01).unwrap().len(), 1);
        assert!(matches!(
            cluster_merge(&c, (0, 1), 0.01, &spec),
            Err(Error::PreconditionViolated(_))
        ));
        assert!(matches!(
            cluster_merge(&two_clusters(0.005), (0, 2), 0.01, &spec),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn counterexample_examples() {
        let bound = counterexample_bound(0.1, 10);
        assert!((bound - 0.0363).abs() < 1e-4);
        let ce = counterexample(3, 0.1, 10).unwrap();
        assert!((ce.epsilon - 10f64.powf(-1.5)).abs() < 1e-15);
        let c = ce.config();
        assert!((c.correlation(0, 1) - ce.epsilon).abs() < 1e-12);
        assert!((c.correlation(0, 2) - ce.epsilon).abs() < 1e-12);
        assert!((c.correlation(1, 2) + ce.epsilon).abs() < 1e-12);
        assert!(!strict_convexity(&c, 0.0, 0.0).is_certified());
        assert_eq!(counterexample(5, 0.1, 10).unwrap().config().d(), 5);
        assert!(counterexample(2, 0.1, 10).is_err());
        assert!(counterexample(3, 0.1, 0).is_err());
        assert!(CounterexampleSpec::with_epsilon(3, 0.1, 10, 0.2).is_err());
    }

    #[test]
    fn counterexample_short_horizon_exhaustive() {
        let ce = counterexample(3, 0.1, 4).unwrap();
        match verify_counterexample_exhaustive(&ce).unwrap() {
            CounterexampleVerdict::Pass { sequences, max_loss, .. } => {
                assert_eq!(sequences, 6u64.pow(4));
                assert!(max_loss <= ce.epsilon / 2.0);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn interacting_pair_grows_beyond_half_epsilon() {
        // Only magnitude losses are bounded by eps/2; the interacting pair
        // itself grows by a factor of about (1 + eta) per step.
        let ce = counterexample(3, 0.1, 6).unwrap();
        let spec = lin(0.1);
        let after = InterventionScript {
            pairs: vec![(0, 1); 5],
            intent: ScriptIntent::DrivePairClose,
            postcondition: Postcondition::PairClose { i: 0, j: 1, epsilon: 0.5 },
        }
        .apply(&ce.config(), &spec)
        .unwrap();
        let drift = after.correlation(0, 1) - ce.epsilon;
        assert!(drift > ce.epsilon / 2.0);
        match verify_counterexample_exhaustive(&ce).unwrap() {
            CounterexampleVerdict::Pass { max_drift, .. } => assert!(max_drift > ce.epsilon / 2.0),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn inflated_epsilon_fails_verification() {
        // Bypass the admissibility gate to confirm the verifier can fail.
        let mut ce = counterexample(3, 0.5, 3).unwrap();
        let big = CounterexampleSpec::with_epsilon(3, 0.5, 1, 0.19).unwrap();
        ce.epsilon = big.epsilon;
        ce.configuration = big.configuration;
        ce.horizon = 12;
        assert!(!verify_counterexample_sampled(&ce, 1_000, 1).unwrap().passed());
    }
}

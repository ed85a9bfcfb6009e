//! The random interaction process.
//!
//! Each step draws an ordered pair `(i, j)` from the intervention
//! distribution and lets `j` influence `i`. The correlation matrix is kept up
//! to date incrementally: only row `i` changes, so a step costs `O(n d)`.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, is_active_pair, DEFAULT_TOL_POLAR};
use crate::configuration::{Configuration, ConfigurationSnapshot};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, DYNAMICS_STREAM};
use crate::update::{update_into, UpdateFunctionSpec};

/// One weighted ordered pair: agent `j` influences agent `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedPair {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Distribution over ordered pairs `(i, j)`, `i != j`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InterventionDistribution {
    /// Mass `1 / (n (n - 1))` on every ordered pair.
    #[default]
    Uniform,
    /// Explicit weights, normalized on use. Pairs not listed get zero mass.
    Weighted { pairs: Vec<WeightedPair> },
}

impl InterventionDistribution {
    pub fn validate(&self, n: usize) -> Result<()> {
        let InterventionDistribution::Weighted { pairs } = self else {
            return Ok(());
        };
        let mut total = 0.0;
        for p in pairs {
            if p.i >= n || p.j >= n {
                return Err(Error::IndexOutOfRange {
                    index: p.i.max(p.j),
                    n,
                });
            }
            if p.i == p.j {
                return Err(Error::InvalidParams(format!("self-pair ({}, {})", p.i, p.j)));
            }
            if !(p.weight >= 0.0 && p.weight.is_finite()) {
                return Err(Error::InvalidParams(format!("bad weight {}", p.weight)));
            }
            total += p.weight;
        }
        if total <= 0.0 {
            return Err(Error::InvalidParams("weights sum to zero".into()));
        }
        Ok(())
    }

    /// Probability of the ordered pair `(i, j)`.
    pub fn probability(&self, n: usize, i: usize, j: usize) -> f64 {
        if i == j || i >= n || j >= n {
            return 0.0;
        }
        match self {
            InterventionDistribution::Uniform => 1.0 / (n * (n - 1)) as f64,
            InterventionDistribution::Weighted { pairs } => {
                let total: f64 = pairs.iter().map(|p| p.weight).sum();
                pairs
                    .iter()
                    .filter(|p| p.i == i && p.j == j)
                    .map(|p| p.weight)
                    .sum::<f64>()
                    / total
            }
        }
    }

    /// Smallest probability over all ordered pairs.
    pub fn p_min(&self, n: usize) -> f64 {
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.probability(n, i, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks that every ordered pair has mass at least `floor`.
    pub fn check_full_support(&self, n: usize, floor: f64) -> Result<()> {
        let p = self.p_min(n);
        if p < floor || p == 0.0 {
            return Err(Error::InvalidParams(format!(
                "distribution lacks full support: min pair mass {p} < {floor}"
            )));
        }
        Ok(())
    }

    pub fn sampler(&self, n: usize) -> Result<PairSampler> {
        self.validate(n)?;
        Ok(match self {
            InterventionDistribution::Uniform => PairSampler::Uniform { n },
            InterventionDistribution::Weighted { pairs } => PairSampler::Weighted {
                pairs: pairs.iter().map(|p| (p.i, p.j)).collect(),
                index: WeightedIndex::new(pairs.iter().map(|p| p.weight))
                    .map_err(|e| Error::InvalidParams(e.to_string()))?,
            },
        })
    }
}

/// Draws ordered pairs from an [`InterventionDistribution`].
#[derive(Clone, Debug)]
pub enum PairSampler {
    Uniform { n: usize },
    Weighted {
        pairs: Vec<(usize, usize)>,
        index: WeightedIndex<f64>,
    },
}

impl PairSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        match self {
            PairSampler::Uniform { n } => {
                let i = rng.random_range(0..*n);
                let mut j = rng.random_range(0..*n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            }
            PairSampler::Weighted { pairs, index } => pairs[index.sample(rng)],
        }
    }
}

/// When a run ends early. The step cap always applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopRule {
    /// Run until `max_steps`.
    MaxSteps,
    /// Stop once `1 - min |A_ij| <= tol`.
    Polarized { tol: f64 },
    /// Stop once no pair is `epsilon`-active.
    Inactive { epsilon: f64 },
    /// Stop as soon as any member rule fires.
    Any { rules: Vec<StopRule> },
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::Polarized {
            tol: DEFAULT_TOL_POLAR,
        }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: f64| {
            if x > 0.0 && x < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must lie in (0, 1), got {x}")))
            }
        };
        match self {
            StopRule::MaxSteps => Ok(()),
            StopRule::Polarized { tol } => unit("tol", *tol),
            StopRule::Inactive { epsilon } => unit("epsilon", *epsilon),
            StopRule::Any { rules } => rules.iter().try_for_each(StopRule::validate),
        }
    }

    /// Tolerance used for the polarization verdict in run summaries.
    pub fn polarization_tol(&self) -> f64 {
        match self {
            StopRule::Polarized { tol } => *tol,
            StopRule::Any { rules } => rules
                .iter()
                .find_map(|r| match r {
                    StopRule::Polarized { tol } => Some(*tol),
                    _ => None,
                })
                .unwrap_or(DEFAULT_TOL_POLAR),
            _ => DEFAULT_TOL_POLAR,
        }
    }

    fn leaves(&self, out: &mut Vec<Condition>) {
        match self {
            StopRule::MaxSteps => {}
            StopRule::Polarized { tol } => out.push(Condition::Polarized(*tol)),
            StopRule::Inactive { epsilon } => out.push(Condition::Inactive(*epsilon)),
            StopRule::Any { rules } => rules.iter().for_each(|r| r.leaves(out)),
        }
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopRule::MaxSteps => write!(f, "steps"),
            StopRule::Polarized { tol } => write!(f, "polarized:{tol}"),
            StopRule::Inactive { epsilon } => write!(f, "inactive:{epsilon}"),
            StopRule::Any { rules } => {
                let parts: Vec<String> = rules.iter().map(ToString::to_string).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

/// Parses `steps`, `polarized:<tol>`, `inactive:<eps>`, or a comma-separated
/// list of these (fires when any member does).
impl FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() > 1 {
            let rules = parts.iter().map(|p| p.parse()).collect::<Result<Vec<_>>>()?;
            return Ok(StopRule::Any { rules });
        }
        let (kind, arg) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let num = |name: &str| {
            arg.parse::<f64>()
                .map_err(|_| Error::Parse(format!("`{kind}` needs a numeric {name}, got `{arg}`")))
        };
        let rule = match kind {
            "steps" | "max-steps" if arg.is_empty() => StopRule::MaxSteps,
            "polarized" if arg.is_empty() => StopRule::default(),
            "polarized" => StopRule::Polarized { tol: num("tolerance")? },
            "inactive" => StopRule::Inactive {
                epsilon: num("epsilon")?,
            },
            _ => return Err(Error::Parse(format!("unknown stop rule `{s}`"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    Polarized,
    Inactive,
}

#[derive(Clone, Copy, Debug)]
enum Condition {
    Polarized(f64),
    Inactive(f64),
}

impl Condition {
    /// Whether a pair with correlation `a` blocks this condition.
    #[inline]
    fn blocks(&self, a: f64) -> bool {
        match *self {
            Condition::Polarized(tol) => a.abs() < 1.0 - tol,
            Condition::Inactive(eps) => is_active_pair(a, eps),
        }
    }

    fn reason(&self) -> StopReason {
        match self {
            Condition::Polarized(_) => StopReason::Polarized,
            Condition::Inactive(_) => StopReason::Inactive,
        }
    }
}

/// Counts of blocking pairs per stop condition, maintained in `O(n)` per step.
struct StopTracker {
    conditions: Vec<Condition>,
    blocking: Vec<usize>,
}

impl StopTracker {
    fn new(rule: &StopRule, config: &Configuration) -> Self {
        let mut conditions = Vec::new();
        rule.leaves(&mut conditions);
        let blocking = conditions
            .iter()
            .map(|c| config.correlations().pairs().filter(|&(_, _, a)| c.blocks(a)).count())
            .collect();
        StopTracker {
            conditions,
            blocking,
        }
    }

    fn row_changed(&mut self, old_row: &[f64], config: &Configuration, i: usize) {
        for (c, count) in self.conditions.iter().zip(self.blocking.iter_mut()) {
            for (k, &old) in old_row.iter().enumerate() {
                if k == i {
                    continue;
                }
                let new = config.correlation(i, k);
                match (c.blocks(old), c.blocks(new)) {
                    (true, false) => *count -= 1,
                    (false, true) => *count += 1,
                    _ => {}
                }
            }
        }
    }

    fn fired(&self) -> Option<StopReason> {
        self.conditions
            .iter()
            .zip(&self.blocking)
            .find(|(_, &count)| count == 0)
            .map(|(c, _)| c.reason())
    }
}

fn default_record_every() -> u64 {
    100
}

/// Everything needed to reproduce a run, apart from the initial configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    pub n: usize,
    pub d: usize,
    pub update: UpdateFunctionSpec,
    #[serde(default)]
    pub distribution: InterventionDistribution,
    #[serde(default)]
    pub seed: u64,
    pub max_steps: u64,
    #[serde(default)]
    pub stop_rule: StopRule,
    /// Metric records are taken at step 0, every `record_every` steps, and at the end.
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    /// Keep the full list of sampled interactions.
    #[serde(default)]
    pub record_interactions: bool,
    /// Steps at which full configuration snapshots are kept.
    #[serde(default)]
    pub snapshot_steps: Vec<u64>,
}

impl SimulationParams {
    pub fn new(n: usize, d: usize, update: UpdateFunctionSpec, seed: u64, max_steps: u64) -> Self {
        SimulationParams {
            n,
            d,
            update,
            distribution: InterventionDistribution::Uniform,
            seed,
            max_steps,
            stop_rule: StopRule::default(),
            record_every: default_record_every(),
            record_interactions: false,
            snapshot_steps: Vec::new(),
        }
    }

    pub fn with_stop_rule(mut self, rule: StopRule) -> Self {
        self.stop_rule = rule;
        self
    }

    pub fn with_record_every(mut self, k: u64) -> Self {
        self.record_every = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d < 2 {
            return Err(Error::InvalidParams(format!(
                "need n >= 2 and d >= 2, got n = {}, d = {}",
                self.n, self.d
            )));
        }
        if self.max_steps == 0 || self.record_every == 0 {
            return Err(Error::InvalidParams(
                "max_steps and record_every must be positive".into(),
            ));
        }
        self.update.validate()?;
        self.distribution.validate(self.n)?;
        self.stop_rule.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub step: u64,
    pub i: usize,
    pub j: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    /// The interaction applied at this step; `None` at step 0.
    pub pair: Option<(usize, usize)>,
    pub min_abs_corr: f64,
    /// `max_{i<j} min(|A_ij|, 1 - |A_ij|)`; a configuration is `eps`-active iff this exceeds `eps`.
    pub max_activity: f64,
    pub potential_min_corr: f64,
    /// Only for three agents.
    pub potential_triangle: Option<f64>,
}

impl MetricRecord {
    fn take(step: u64, pair: Option<(usize, usize)>, config: &Configuration) -> Self {
        let corr = config.correlations();
        MetricRecord {
            step,
            pair,
            min_abs_corr: corr.min_abs_off_diagonal(),
            max_activity: corr.max_activity(),
            potential_min_corr: analysis::potential_min_corr(config),
            potential_triangle: analysis::potential_triangle(config).ok(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub configuration: ConfigurationSnapshot,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub records: Vec<MetricRecord>,
    pub interactions: Vec<Interaction>,
    pub snapshots: Vec<Snapshot>,
    pub final_config: Configuration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Tolerance-based finite-time verdict, see [`analysis::polarization_check`].
    pub polarized: bool,
    pub steps: u64,
    pub stop_reason: StopReason,
    /// Sizes of agent 0's sign group and of its complement.
    pub cluster_sizes: [usize; 2],
    pub final_min_abs_corr: f64,
    pub seed: u64,
}

/// Lets `j` influence `i` in place. Other opinions and correlations are untouched.
pub fn step(config: &mut Configuration, i: usize, j: usize, spec: &UpdateFunctionSpec) -> Result<()> {
    config.check_index(i)?;
    config.check_index(j)?;
    if i == j {
        return Err(Error::InvalidParams(format!("self-interaction ({i}, {i})")));
    }
    let mut out = vec![0.0; config.d()];
    step_with_buffer(config, i, j, spec, &mut out)
}

#[inline]
fn step_with_buffer(
    config: &mut Configuration,
    i: usize,
    j: usize,
    spec: &UpdateFunctionSpec,
    out: &mut [f64],
) -> Result<()> {
    let a = config.correlation(i, j);
    update_into(spec, config.opinion(i), config.opinion(j), a, out)?;
    config.replace_opinion(i, out);
    Ok(())
}

/// Applies a scripted list of interactions in order.
pub fn apply_sequence(
    config: &mut Configuration,
    pairs: &[(usize, usize)],
    spec: &UpdateFunctionSpec,
) -> Result<()> {
    for &(i, j) in pairs {
        config.check_index(i)?;
        config.check_index(j)?;
    }
    pairs.iter().try_for_each(|&(i, j)| step(config, i, j, spec))
}

/// Runs the random process from `initial` until the stop rule fires or
/// `max_steps` interactions have been applied.
pub fn run(params: &SimulationParams, initial: Configuration) -> Result<(RunTrace, RunSummary)> {
    params.validate()?;
    if initial.n() != params.n || initial.d() != params.d {
        return Err(Error::InvalidParams(format!(
            "initial configuration is {}x{}, params expect {}x{}",
            initial.n(),
            initial.d(),
            params.n,
            params.d
        )));
    }
    let sampler = params.distribution.sampler(params.n)?;
    let mut rng = stream_rng(params.seed, DYNAMICS_STREAM);
    let mut config = initial;
    let mut tracker = StopTracker::new(&params.stop_rule, &config);
    let mut snapshot_steps = params.snapshot_steps.clone();
    snapshot_steps.sort_unstable();
    snapshot_steps.dedup();
    let mut next_snapshot = snapshot_steps.iter().peekable();

    let mut records = vec![MetricRecord::take(0, None, &config)];
    let mut interactions = Vec::new();
    let mut snapshots = Vec::new();
    let mut take_snapshot = |t: u64, config: &Configuration, snapshots: &mut Vec<Snapshot>| {
        while next_snapshot.peek().is_some_and(|&&s| s <= t) {
            if *next_snapshot.next().unwrap() == t {
                snapshots.push(Snapshot {
                    step: t,
                    configuration: config.into(),
                });
            }
        }
    };
    take_snapshot(0, &config, &mut snapshots);

    let mut buf = vec![0.0; params.d];
    let mut old_row = vec![0.0; params.n];
    let mut t = 0;
    let mut reason = tracker.fired();
    let mut last_pair = None;
    while reason.is_none() && t < params.max_steps {
        let (i, j) = sampler.sample(&mut rng);
        for (k, slot) in old_row.iter_mut().enumerate() {
            *slot = config.correlation(i, k);
        }
        step_with_buffer(&mut config, i, j, &params.update, &mut buf)?;
        t += 1;
        last_pair = Some((i, j));
        tracker.row_changed(&old_row, &config, i);
        reason = tracker.fired();
        if params.record_interactions {
            interactions.push(Interaction { step: t, i, j });
        }
        if t % params.record_every == 0 {
            records.push(MetricRecord::take(t, last_pair, &config));
        }
        take_snapshot(t, &config, &mut snapshots);
    }
    if records.last().map(|r| r.step) != Some(t) {
        records.push(MetricRecord::take(t, last_pair, &config));
    }

    let tol = params.stop_rule.polarization_tol();
    let (a, b) = analysis::sign_groups(&config);
    let summary = RunSummary {
        polarized: analysis::polarization_check(&config, tol).is_polarized(),
        steps: t,
        stop_reason: reason.unwrap_or(StopReason::MaxSteps),
        cluster_sizes: [a, b],
        final_min_abs_corr: config.correlations().min_abs_off_diagonal(),
        seed: params.seed,
    };
    let trace = RunTrace {
        records,
        interactions,
        snapshots,
        final_config: config,
    };
    Ok((trace, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{epsilon_activity, separability, strict_convexity, ConvexityVerdict};
    use crate::geometry::{norm, sample_uniform_sphere};
    use crate::rng::stream_rng;
    use crate::update::predicted_correlation;

    fn lin(eta: f64) -> UpdateFunctionSpec {
        UpdateFunctionSpec::linear(eta).unwrap()
    }

    fn cfg(rows: &[Vec<f64>]) -> Configuration {
        Configuration::from_rows(rows).unwrap()
    }

    fn random_config(n: usize, d: usize, seed: u64) -> Configuration {
        let mut rng = stream_rng(seed, 1);
        Configuration::new((0..n).map(|_| sample_uniform_sphere(d, &mut rng).unwrap()).collect())
            .unwrap()
    }

    #[test]
    fn orthogonal_pair_is_fixed_under_stable_update() {
        let mut c = cfg(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let before = c.clone();
        step(&mut c, 0, 1, &lin(0.5)).unwrap();
        assert_eq!(c.opinion(0), before.opinion(0));
        assert_eq!(c.correlations(), before.correlations());
    }

    #[test]
    fn step_is_local() {
        let mut c = random_config(5, 3, 1);
        let before = c.clone();
        step(&mut c, 1, 2, &lin(0.3)).unwrap();
        for k in 0..5 {
            if k != 1 {
                assert_eq!(c.opinion(k), before.opinion(k));
            }
            for l in 0..5 {
                if k != 1 && l != 1 {
                    assert_eq!(c.correlation(k, l).to_bits(), before.correlation(k, l).to_bits());
                }
            }
        }
    }

    #[test]
    fn step_matches_predicted_correlation() {
        let mut c = cfg(&[vec![1.0, 0.0], vec![0.5, 0.75f64.sqrt()]]);
        step(&mut c, 0, 1, &lin(1.0)).unwrap();
        assert!((c.correlation(0, 1) - 0.755929).abs() < 1e-6);
        assert!((c.correlation(0, 1) - predicted_correlation(0.5, &lin(1.0)).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_bad_indices() {
        let mut c = random_config(3, 2, 2);
        assert!(matches!(step(&mut c, 0, 3, &lin(0.1)), Err(Error::IndexOutOfRange { index: 3, n: 3 })));
        assert!(step(&mut c, 1, 1, &lin(0.1)).is_err());
        assert!(apply_sequence(&mut c, &[(0, 1), (5, 0)], &lin(0.1)).is_err());
    }

    #[test]
    fn apply_sequence_composes_steps() {
        let c0 = random_config(4, 3, 3);
        let mut a = c0.clone();
        apply_sequence(&mut a, &[], &lin(0.2)).unwrap();
        assert_eq!(a.correlations(), c0.correlations());
        apply_sequence(&mut a, &[(0, 1), (0, 1)], &lin(0.2)).unwrap();
        let mut b = c0.clone();
        step(&mut b, 0, 1, &lin(0.2)).unwrap();
        step(&mut b, 0, 1, &lin(0.2)).unwrap();
        assert_eq!(a.opinion(0), b.opinion(0));
    }

    #[test]
    fn polarized_input_stops_immediately() {
        let c = cfg(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0]]);
        let params = SimulationParams::new(3, 2, lin(0.1), 1, 100);
        let (trace, summary) = run(&params, c).unwrap();
        assert_eq!(summary.steps, 0);
        assert_eq!(summary.stop_reason, StopReason::Polarized);
        assert!(summary.polarized);
        assert_eq!(summary.cluster_sizes, [2, 1]);
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn two_agents_increase_monotonically() {
        let c = cfg(&[vec![1.0, 0.0], vec![0.5, 0.75f64.sqrt()]]);
        let params = SimulationParams::new(2, 2, lin(0.5), 5, 100)
            .with_stop_rule(StopRule::MaxSteps)
            .with_record_every(1);
        let (trace, summary) = run(&params, c).unwrap();
        assert_eq!(summary.steps, 100);
        let mut expected = 0.5;
        // Strictly increasing until rounding pins the value next to 1.
        for w in trace.records.windows(2) {
            if 1.0 - w[0].min_abs_corr > 1e-14 {
                assert!(w[1].min_abs_corr > w[0].min_abs_corr);
            } else {
                assert!(w[1].min_abs_corr >= w[0].min_abs_corr - 1e-15);
            }
        }
        for r in &trace.records[1..6] {
            expected = predicted_correlation(expected, &lin(0.5)).unwrap();
            assert!((r.min_abs_corr - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let params = SimulationParams::new(6, 3, lin(0.2), 7, 5_000)
            .with_record_every(10)
            .with_stop_rule(StopRule::MaxSteps);
        let mut p = params.clone();
        p.record_interactions = true;
        let (ta, sa) = run(&p, random_config(6, 3, 7)).unwrap();
        let (tb, sb) = run(&p, random_config(6, 3, 7)).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(ta.records, tb.records);
        assert_eq!(ta.interactions, tb.interactions);
        assert_eq!(ta.interactions.len(), 5_000);
        let (_, sc) = run(&SimulationParams { seed: 8, ..params }, random_config(6, 3, 7)).unwrap();
        assert_ne!(sa.final_min_abs_corr, sc.final_min_abs_corr);
    }

    #[test]
    fn unit_norms_survive_long_runs() {
        let params = SimulationParams::new(10, 4, UpdateFunctionSpec::sign(0.3).unwrap(), 3, 200_000)
            .with_stop_rule(StopRule::MaxSteps)
            .with_record_every(50_000);
        let (trace, _) = run(&params, random_config(10, 4, 3)).unwrap();
        for o in trace.final_config.opinions() {
            assert!((norm(o) - 1.0).abs() < 1e-12);
        }
        let mut fresh = trace.final_config.clone();
        fresh.refresh_correlations();
        assert_eq!(fresh.correlations(), trace.final_config.correlations());
    }

    #[test]
    fn incremental_stop_tracking_matches_full_check() {
        for seed in 0..20 {
            let params = SimulationParams::new(4, 2, lin(0.3), seed, 1_000_000)
                .with_stop_rule("polarized:1e-4,inactive:0.01".parse().unwrap());
            let (trace, summary) = run(&params, random_config(4, 2, seed)).unwrap();
            let c = &trace.final_config;
            match summary.stop_reason {
                StopReason::Polarized => assert!(c.correlations().min_abs_off_diagonal() >= 1.0 - 1e-4),
                StopReason::Inactive => assert!(!epsilon_activity(c, 0.01).is_active()),
                StopReason::MaxSteps => panic!("did not stop"),
            }
        }
    }

    #[test]
    fn snapshots_and_records_follow_schedule() {
        let mut params = SimulationParams::new(5, 3, lin(0.1), 4, 1_000)
            .with_stop_rule(StopRule::MaxSteps)
            .with_record_every(300);
        params.snapshot_steps = vec![250, 0, 5_000];
        let (trace, _) = run(&params, random_config(5, 3, 4)).unwrap();
        let steps: Vec<u64> = trace.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 300, 600, 900, 1_000]);
        let snaps: Vec<u64> = trace.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(snaps, vec![0, 250]);
        assert!(trace.records[0].pair.is_none() && trace.records[1].pair.is_some());
    }

    #[test]
    fn weighted_distribution_respects_support() {
        let dist = InterventionDistribution::Weighted {
            pairs: vec![
                WeightedPair { i: 0, j: 1, weight: 3.0 },
                WeightedPair { i: 2, j: 0, weight: 1.0 },
            ],
        };
        assert!((dist.probability(3, 0, 1) - 0.75).abs() < 1e-15);
        assert_eq!(dist.p_min(3), 0.0);
        assert!(dist.check_full_support(3, 1e-3).is_err());
        assert!(InterventionDistribution::Uniform.check_full_support(3, 1.0 / 6.0).is_ok());
        let sampler = dist.sampler(3).unwrap();
        let mut rng = stream_rng(1, 0);
        let hits = (0..10_000).filter(|_| sampler.sample(&mut rng) == (0, 1)).count();
        assert!((hits as f64 / 10_000.0 - 0.75).abs() < 0.02);
        let bad = InterventionDistribution::Weighted {
            pairs: vec![WeightedPair { i: 1, j: 1, weight: 1.0 }],
        };
        assert!(bad.validate(3).is_err());
    }

    #[test]
    fn uniform_sampler_covers_all_ordered_pairs() {
        let sampler = InterventionDistribution::Uniform.sampler(4).unwrap();
        let mut rng = stream_rng(2, 0);
        let mut counts = [[0usize; 4]; 4];
        for _ in 0..120_000 {
            let (i, j) = sampler.sample(&mut rng);
            counts[i][j] += 1;
        }
        for (i, row) in counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if i == j {
                    assert_eq!(c, 0);
                } else {
                    assert!((c as f64 - 10_000.0).abs() < 500.0, "({i},{j}) {c}");
                }
            }
        }
    }

    #[test]
    fn stop_rule_syntax() {
        assert_eq!("steps".parse::<StopRule>().unwrap(), StopRule::MaxSteps);
        assert_eq!("polarized:1e-6".parse::<StopRule>().unwrap(), StopRule::Polarized { tol: 1e-6 });
        assert_eq!("polarized".parse::<StopRule>().unwrap(), StopRule::default());
        assert!("polarized:2".parse::<StopRule>().is_err());
        assert!("bogus".parse::<StopRule>().is_err());
        let r: StopRule = "polarized:0.001,inactive:0.1".parse().unwrap();
        assert_eq!(r.to_string(), "polarized:0.001,inactive:0.1");
        assert_eq!(r.polarization_tol(), 0.001);
    }

    #[test]
    fn params_json_rejects_unknown_fields() {
        let ok = r#"{"n": 3, "d": 2, "update": "linear:eta=0.1", "max_steps": 10}"#;
        let p: SimulationParams = serde_json::from_str(ok).unwrap();
        assert_eq!(p.record_every, 100);
        assert_eq!(p.stop_rule, StopRule::default());
        let bad = r#"{"n": 3, "d": 2, "update": "linear:eta=0.1", "max_steps": 10, "x": 1}"#;
        assert!(serde_json::from_str::<SimulationParams>(bad).is_err());
    }

    #[test]
    fn convexity_certificate_survives_steps() {
        // Opinions in an open half-plane cone around e1.
        let rows: Vec<Vec<f64>> = (0..5).map(|k| vec![1.0, 0.3 * k as f64 - 0.6, 0.1]).collect();
        let mut c = cfg(&rows);
        let ConvexityVerdict::Certified(cert) = strict_convexity(&c, 0.0, 0.0) else {
            panic!("not convex");
        };
        let mut rng = stream_rng(5, 0);
        let sampler = InterventionDistribution::Uniform.sampler(5).unwrap();
        for _ in 0..1_000 {
            let (i, j) = sampler.sample(&mut rng);
            step(&mut c, i, j, &lin(0.2)).unwrap();
            assert!(crate::analysis::sign_margin(&c, &cert.signs) > 0.0);
        }
    }

    #[test]
    fn separability_is_absorbing_for_stable_updates() {
        let mut c = cfg(&[
            vec![1.0, 0.2, 0.0, 0.0],
            vec![0.3, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.5],
            vec![0.0, 0.0, -0.4, 1.0],
        ]);
        let mut rng = stream_rng(6, 0);
        let sampler = InterventionDistribution::Uniform.sampler(4).unwrap();
        for _ in 0..1_000 {
            let (i, j) = sampler.sample(&mut rng);
            step(&mut c, i, j, &lin(0.3)).unwrap();
            assert!(separability(&c, 1e-9).is_separable());
        }
    }
}

//! Monte Carlo experiments: many seeded replicas of a run, aggregated.
//!
//! Replica `r` runs with seed `replica_seed(master_seed, r)`, drawing its
//! initial configuration from stream [`INIT_STREAM`] and its interactions from
//! stream [`DYNAMICS_STREAM`](crate::rng::DYNAMICS_STREAM) of that seed. Replicas run on the rayon
//! pool and are collected in index order, so output never depends on the
//! number of threads.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configuration::Configuration;
use crate::dynamics::{run, InterventionDistribution, RunSummary, SimulationParams, Snapshot, StopReason, StopRule};
use crate::error::{Error, Result};
use crate::geometry::{random_orthonormal_frame, sample_at_distance, sample_uniform_sphere, Opinion};
use crate::io;
use crate::rng::{replica_seed, stream_rng, SimRng, INIT_STREAM};
use crate::sequences::{
    counterexample, counterexample_bound, verify_counterexample_exhaustive,
    verify_counterexample_sampled, CounterexampleSpec, CounterexampleVerdict,
};
use crate::update::{classify, UpdateFunctionSpec};

/// Sequences up to this length are verified exhaustively.
pub const EXHAUSTIVE_HORIZON: usize = 6;

fn default_bundles() -> usize {
    3
}

/// How initial configurations are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Independent uniform opinions.
    UniformSphere,
    /// Opinion file, one opinion per line.
    FromFile { path: PathBuf },
    /// Tight bundles around `bundles` orthogonal axes: every pair has
    /// `|A| <= low` or `|A| >= high`.
    AlmostOrthogonal {
        low: f64,
        high: f64,
        #[serde(default = "default_bundles")]
        bundles: usize,
    },
    /// Literal opinions.
    Explicit { opinions: Vec<Vec<f64>> },
}

impl InitSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        match *self {
            InitSpec::AlmostOrthogonal { low, high, bundles } => {
                if !(0.0 <= low && low < high && high <= 1.0) {
                    return Err(Error::InvalidParams(format!(
                        "need 0 <= low < high <= 1, got low = {low}, high = {high}"
                    )));
                }
                if bundles == 0 || bundles > d {
                    return Err(Error::InvalidParams(format!(
                        "bundle count {bundles} must lie in 1..={d}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Angular radius of each bundle: same-bundle pairs then satisfy
    /// `|A| >= high` and cross-bundle pairs `|A| <= low`.
    pub fn bundle_radius(low: f64, high: f64) -> f64 {
        0.5 * high.acos().min(low.asin())
    }

    pub fn sample(&self, n: usize, d: usize, rng: &mut SimRng) -> Result<Configuration> {
        self.validate(d)?;
        let config = match self {
            InitSpec::UniformSphere => Configuration::new(
                (0..n).map(|_| sample_uniform_sphere(d, rng)).collect::<Result<_>>()?,
            )?,
            InitSpec::FromFile { path } => Configuration::new(io::read_opinions(path)?)?,
            InitSpec::Explicit { opinions } => Configuration::from_rows(opinions)?,
            &InitSpec::AlmostOrthogonal { low, high, bundles } => {
                almost_orthogonal(n, d, low, high, bundles, rng)?
            }
        };
        if config.n() != n || config.d() != d {
            return Err(Error::InvalidParams(format!(
                "initial configuration is {}x{}, expected {n}x{d}",
                config.n(),
                config.d()
            )));
        }
        Ok(config)
    }
}

fn almost_orthogonal(
    n: usize,
    d: usize,
    low: f64,
    high: f64,
    bundles: usize,
    rng: &mut SimRng,
) -> Result<Configuration> {
    let frame = random_orthonormal_frame(d, bundles, rng)?;
    let radius = InitSpec::bundle_radius(low, high);
    let draw = |rng: &mut SimRng| -> Result<Opinion> {
        let axis = &frame[rng.random_range(0..bundles)];
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let center: Vec<f64> = axis.iter().map(|x| sign * x).collect();
        sample_at_distance(&center, radius * rng.random::<f64>(), rng)
    };
    let mut opinions = (0..n).map(|_| draw(rng)).collect::<Result<Vec<_>>>()?;
    for _ in 0..1_000 {
        let config = Configuration::new(opinions.clone())?;
        let bad = config
            .correlations()
            .pairs()
            .find(|&(_, _, a)| a.abs() > low && a.abs() < high);
        match bad {
            None => return Ok(config),
            Some((_, j, _)) => opinions[j] = draw(rng)?,
        }
    }
    Err(Error::StructureViolation(
        "almost-orthogonal sampler kept producing violating pairs".into(),
    ))
}

fn default_snapshots() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            traces: false,
            snapshots: default_snapshots(),
        }
    }
}

/// Where results go. Nothing is written without a directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Write a trace CSV per replica.
    #[serde(default)]
    pub traces: bool,
    /// Write configured snapshots as opinion files.
    #[serde(default = "default_snapshots")]
    pub snapshots: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub params: SimulationParams,
    pub replicas: usize,
    pub init: InitSpec,
    #[serde(default)]
    pub master_seed: u64,
    /// Flags replicas whose records ever exceed this activity level.
    #[serde(default)]
    pub activity_epsilon: Option<f64>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::InvalidParams("replicas must be at least 1".into()));
        }
        self.params.validate()?;
        self.init.validate(self.params.d)
    }
}

/// One row per replica.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub replica: usize,
    pub seed: u64,
    pub polarized: bool,
    pub steps: u64,
    pub stop_reason: StopReason,
    pub cluster_sizes: [usize; 2],
    pub final_min_abs_corr: f64,
    /// Whether some record exceeded the activity level; absent when not tracked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub became_active: Option<bool>,
}

impl ReplicaRow {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            polarized: self.polarized,
            steps: self.steps,
            stop_reason: self.stop_reason,
            cluster_sizes: self.cluster_sizes,
            final_min_abs_corr: self.final_min_abs_corr,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: u64,
    pub q25: u64,
    pub median: u64,
    pub q75: u64,
    pub max: u64,
}

impl Quantiles {
    /// Nearest-rank quantiles.
    pub fn of(values: &[u64]) -> Option<Quantiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_unstable();
        let at = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(Quantiles {
            min: v[0],
            q25: at(0.25),
            median: at(0.5),
            q75: at(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub replicas: usize,
    pub polarized: usize,
    pub polarization_rate: f64,
    /// Steps to polarization over polarized replicas.
    pub steps_to_polarization: Option<Quantiles>,
    /// Size of agent 0's group among polarized replicas, as `size -> count`.
    pub cluster_size_histogram: BTreeMap<usize, usize>,
    pub mean_cluster_size: Option<f64>,
    /// Fraction of replicas flagged active, when tracked.
    pub activity_rate: Option<f64>,
}

/// Aggregates are a pure function of the rows.
pub fn recompute_aggregates(rows: &[ReplicaRow]) -> Aggregates {
    let polarized: Vec<&ReplicaRow> = rows.iter().filter(|r| r.polarized).collect();
    let mut hist = BTreeMap::new();
    for r in &polarized {
        *hist.entry(r.cluster_sizes[0]).or_insert(0) += 1;
    }
    let steps: Vec<u64> = polarized.iter().map(|r| r.steps).collect();
    let tracked: Vec<bool> = rows.iter().filter_map(|r| r.became_active).collect();
    Aggregates {
        replicas: rows.len(),
        polarized: polarized.len(),
        polarization_rate: polarized.len() as f64 / rows.len().max(1) as f64,
        steps_to_polarization: Quantiles::of(&steps),
        mean_cluster_size: (!polarized.is_empty()).then(|| {
            polarized.iter().map(|r| r.cluster_sizes[0] as f64).sum::<f64>() / polarized.len() as f64
        }),
        cluster_size_histogram: hist,
        activity_rate: (!tracked.is_empty())
            .then(|| tracked.iter().filter(|&&a| a).count() as f64 / tracked.len() as f64),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub update: UpdateFunctionSpec,
    /// The intervention distribution used (uniform unless configured).
    pub distribution: InterventionDistribution,
    /// Polarization is judged by `min |A_ij| >= 1 - tol` at the end of a run.
    pub polarization_tol: f64,
    pub master_seed: u64,
    pub rows: Vec<ReplicaRow>,
    pub aggregates: Aggregates,
}

/// Everything a replica produced.
#[derive(Clone, Debug)]
pub struct ReplicaOutput {
    pub row: ReplicaRow,
    pub records: Vec<crate::dynamics::MetricRecord>,
    pub snapshots: Vec<Snapshot>,
}

pub fn run_replica(spec: &ExperimentSpec, replica: usize) -> Result<ReplicaOutput> {
    let seed = replica_seed(spec.master_seed, replica as u64);
    let mut init_rng = stream_rng(seed, INIT_STREAM);
    let initial = spec.init.sample(spec.params.n, spec.params.d, &mut init_rng)?;
    let params = SimulationParams {
        seed,
        ..spec.params.clone()
    };
    let (trace, summary) = run(&params, initial)?;
    let became_active = spec
        .activity_epsilon
        .map(|eps| trace.records.iter().any(|r| r.max_activity > eps));
    Ok(ReplicaOutput {
        row: ReplicaRow {
            replica,
            seed,
            polarized: summary.polarized,
            steps: summary.steps,
            stop_reason: summary.stop_reason,
            cluster_sizes: summary.cluster_sizes,
            final_min_abs_corr: summary.final_min_abs_corr,
            became_active,
        },
        records: if spec.outputs.traces { trace.records } else { Vec::new() },
        snapshots: trace.snapshots,
    })
}

/// Runs all replicas in parallel and assembles the report.
pub fn run_experiment_outputs(spec: &ExperimentSpec) -> Result<(ExperimentReport, Vec<ReplicaOutput>)> {
    spec.validate()?;
    let outputs = (0..spec.replicas)
        .into_par_iter()
        .map(|r| run_replica(spec, r))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ReplicaRow> = outputs.iter().map(|o| o.row.clone()).collect();
    let report = ExperimentReport {
        name: spec.name.clone(),
        update: spec.params.update,
        distribution: spec.params.distribution.clone(),
        polarization_tol: spec.params.stop_rule.polarization_tol(),
        master_seed: spec.master_seed,
        aggregates: recompute_aggregates(&rows),
        rows,
    };
    Ok((report, outputs))
}

/// Runs the experiment and writes its outputs when a directory is configured.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let (report, outputs) = run_experiment_outputs(spec)?;
    if let Some(dir) = &spec.outputs.dir {
        write_experiment(dir, spec, &report, &outputs)?;
    }
    Ok(report)
}

/// Summary CSV header, one row per replica.
pub const SUMMARY_CSV_HEADER: &str =
    "replica,seed,polarized,steps,stop_reason,cluster_size_0,cluster_size_1,final_min_abs_corr,became_active";

pub fn summary_csv(rows: &[ReplicaRow]) -> String {
    let mut s = String::from(SUMMARY_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let reason = serde_json::to_value(r.stop_reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{:.16e},{}\n",
            r.replica,
            r.seed,
            r.polarized,
            r.steps,
            reason,
            r.cluster_sizes[0],
            r.cluster_sizes[1],
            r.final_min_abs_corr,
            r.became_active.map_or(String::new(), |b| b.to_string())
        ));
    }
    s
}

fn write_experiment(
    dir: &Path,
    spec: &ExperimentSpec,
    report: &ExperimentReport,
    outputs: &[ReplicaOutput],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    io::write_json(&dir.join("report.json"), report)?;
    fs::write(dir.join("summary.csv"), summary_csv(&report.rows))?;
    if spec.outputs.traces {
        let traces = dir.join("traces");
        fs::create_dir_all(&traces)?;
        for o in outputs {
            io::write_trace_file(&traces.join(format!("replica_{:04}.csv", o.row.replica)), &o.records)?;
        }
    }
    if spec.outputs.snapshots && outputs.iter().any(|o| !o.snapshots.is_empty()) {
        let snaps = dir.join("snapshots");
        fs::create_dir_all(&snaps)?;
        for o in outputs {
            for s in &o.snapshots {
                let name = format!("replica_{:04}_t{}.txt", o.row.replica, s.step);
                let text = io::format_opinions(s.configuration.opinions.iter().map(Vec::as_slice));
                fs::write(snaps.join(name), text)?;
            }
        }
    }
    Ok(())
}

/// Step at which the first reference figure shows its intermediate state.
pub const FIGURE1_SNAPSHOT_STEP: u64 = 2_500;

/// 100 agents in three dimensions under strong attraction and weak repulsion.
pub fn preset_figure1() -> ExperimentSpec {
    let update = UpdateFunctionSpec::asymmetric_linear(0.9, 0.1).expect("valid rates");
    let mut params = SimulationParams::new(100, 3, update, 0, 1_000_000)
        .with_stop_rule(StopRule::Polarized { tol: 1e-6 });
    params.snapshot_steps = vec![FIGURE1_SNAPSHOT_STEP];
    ExperimentSpec {
        name: "figure1".into(),
        params,
        replicas: 100,
        init: InitSpec::UniformSphere,
        master_seed: 1,
        activity_epsilon: None,
        outputs: OutputSpec::default(),
    }
}

/// Almost orthogonal bundles under a weak linear update.
pub fn preset_figure2() -> ExperimentSpec {
    let update = UpdateFunctionSpec::linear(0.1).expect("valid rate");
    let params = SimulationParams::new(100, 3, update, 0, 1_000_000)
        .with_stop_rule(StopRule::Polarized { tol: 1e-6 });
    ExperimentSpec {
        name: "figure2".into(),
        params,
        replicas: 100,
        init: InitSpec::AlmostOrthogonal {
            low: 0.1,
            high: 0.9,
            bundles: default_bundles(),
        },
        master_seed: 2,
        activity_epsilon: Some(0.1),
        outputs: OutputSpec::default(),
    }
}

/// Tail of the final group size of agent 0 for an odd update rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationSpec {
    pub experiment: ExperimentSpec,
    pub c_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub c: f64,
    /// `2 exp(-c^2 / 2)`.
    pub bound: f64,
    /// Fraction of polarized replicas with `|S - (n+1)/2| >= c sqrt(n - 1)`.
    pub empirical: f64,
    /// Binomial standard error at the bound, `sqrt(p (1 - p) / N)` with `p = min(bound, 1)`.
    pub sigma: f64,
    pub within_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub polarized: usize,
    /// Replicas that did not polarize within the step cap and are excluded.
    pub excluded: usize,
    pub tails: Vec<TailRow>,
    pub passed: bool,
    pub report: ExperimentReport,
}

pub fn preset_concentration() -> ConcentrationSpec {
    let update = UpdateFunctionSpec::linear(0.1).expect("valid rate");
    let params = SimulationParams::new(101, 3, update, 0, 1_000_000)
        .with_stop_rule(StopRule::Polarized { tol: 1e-6 });
    ConcentrationSpec {
        experiment: ExperimentSpec {
            name: "concentration".into(),
            params,
            replicas: 400,
            init: InitSpec::UniformSphere,
            master_seed: 3,
            activity_epsilon: None,
            outputs: OutputSpec::default(),
        },
        c_values: vec![0.0, 1.0, 2.0, 3.0],
    }
}

/// Tail table from already computed rows.
pub fn concentration_tails(n: usize, rows: &[ReplicaRow], c_values: &[f64]) -> Vec<TailRow> {
    let sizes: Vec<f64> = rows.iter().filter(|r| r.polarized).map(|r| r.cluster_sizes[0] as f64).collect();
    let total = sizes.len().max(1) as f64;
    let mid = (n as f64 + 1.0) / 2.0;
    let scale = (n as f64 - 1.0).sqrt();
    c_values
        .iter()
        .map(|&c| {
            let bound = 2.0 * (-c * c / 2.0).exp();
            let hits = sizes.iter().filter(|&&s| (s - mid).abs() >= c * scale).count();
            let empirical = hits as f64 / total;
            let p = bound.min(1.0);
            let sigma = (p * (1.0 - p) / total).sqrt();
            TailRow {
                c,
                bound,
                empirical,
                sigma,
                within_bound: empirical <= bound + 3.0 * sigma,
            }
        })
        .collect()
}

pub fn concentration_experiment(spec: &ConcentrationSpec) -> Result<ConcentrationReport> {
    if !classify(&spec.experiment.params.update).is_odd {
        return Err(Error::NotOdd);
    }
    let report = run_experiment(&spec.experiment)?;
    let n = spec.experiment.params.n;
    let tails = concentration_tails(n, &report.rows, &spec.c_values);
    let out = ConcentrationReport {
        n,
        polarized: report.aggregates.polarized,
        excluded: report.rows.len() - report.aggregates.polarized,
        passed: tails.iter().all(|t| t.within_bound),
        tails,
        report,
    };
    if let Some(dir) = &spec.experiment.outputs.dir {
        io::write_json(&dir.join("concentration.json"), &out)?;
    }
    Ok(out)
}

/// Verification of the non-convexifiable three-agent configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleExperiment {
    pub eta: f64,
    pub horizon: usize,
    /// Overrides the grid choice of epsilon.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Random sequences to check when the horizon is too long for exhaustive search.
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub eta: f64,
    pub horizon: usize,
    pub epsilon: f64,
    pub admissible_bound: f64,
    pub inequality_holds: bool,
    pub exhaustive: bool,
    /// Absent when the inequality check failed and nothing was run.
    pub verdict: Option<CounterexampleVerdict>,
}

impl CounterexampleReport {
    pub fn passed(&self) -> bool {
        self.verdict.as_ref().is_some_and(CounterexampleVerdict::passed)
    }
}

pub fn counterexample_experiment(exp: &CounterexampleExperiment) -> Result<CounterexampleReport> {
    let bound = counterexample_bound(exp.eta, exp.horizon);
    let exhaustive = exp.horizon <= EXHAUSTIVE_HORIZON;
    let ce = match exp.epsilon {
        None => counterexample(3, exp.eta, exp.horizon)?,
        Some(eps) => match CounterexampleSpec::with_epsilon(3, exp.eta, exp.horizon, eps) {
            Ok(ce) => ce,
            Err(Error::InvalidParams(_)) if eps > bound => {
                return Ok(CounterexampleReport {
                    eta: exp.eta,
                    horizon: exp.horizon,
                    epsilon: eps,
                    admissible_bound: bound,
                    inequality_holds: false,
                    exhaustive,
                    verdict: None,
                })
            }
            Err(e) => return Err(e),
        },
    };
    let verdict = if exhaustive {
        verify_counterexample_exhaustive(&ce)?
    } else {
        verify_counterexample_sampled(&ce, exp.samples, exp.seed)?
    };
    Ok(CounterexampleReport {
        eta: exp.eta,
        horizon: exp.horizon,
        epsilon: ce.epsilon,
        admissible_bound: bound,
        inequality_holds: true,
        exhaustive,
        verdict: Some(verdict),
    })
}

/// Exhaustive check at horizon 6 and a sampled check at horizon 10.
pub fn preset_counterexample() -> Vec<CounterexampleExperiment> {
    vec![
        CounterexampleExperiment {
            eta: 0.1,
            horizon: 6,
            epsilon: None,
            samples: 0,
            seed: 4,
        },
        CounterexampleExperiment {
            eta: 0.1,
            horizon: 10,
            epsilon: None,
            samples: 100_000,
            seed: 4,
        },
    ]
}

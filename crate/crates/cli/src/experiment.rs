//! Seeded repetitions of one configured run, written out as CSV.
//!
//! Files under the output directory:
//!
//! * `trace_<rep>.csv`: `t,w,grad_norm,eta,G_t,segment_k`
//! * `distance_<rep>.csv`: `t,D_t,P_t` with `D_t = ||w_t - w_t*||` and
//!   `P_t = ||w_{t+1}* - w_t*||`
//! * `signs_<rep>.csv`: `t,sigma` for Rademacher streams
//! * `summary.csv`: one row per repetition
//!
//! Floats use 17 significant digits so traces replay exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use dynregret::analysis::{assess, dynamic_regret, BoundKind, RegretReport};
use dynregret::geometry::{ComparatorPath, ConvexSet, FeasibleSet, Vector};
use dynregret::optimizer::{run, RunError, StepRate, Trace};
use dynregret::rng::derive_seed;
use dynregret::scheduler::{CoordinateRate, RatePolicy};
use dynregret::streams::{
    best_segmented_comparator, best_segmented_per_coordinate, brute_force_comparator,
    gen_rademacher, gen_regression, linear_fixed, max_segments, prefix_budgeted_comparator,
    zero_prefix, Segmentation, Stream,
};

use crate::config::{ComparatorSpec, ConfigError, ExperimentConfig, PolicySpec, StreamSpec};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] dynregret::Error),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } => 3,
            Self::Engine(_) | Self::Run(_) => 4,
        }
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub const TRACE_HEADER: &str = "t,w,grad_norm,eta,G_t,segment_k";

pub fn summary_header() -> String {
    let mut h = String::from(
        "rep,seed,realized_regret,linearized_regret,G_T,L,path_variation,path_budget",
    );
    for kind in BoundKind::ALL {
        h.push(',');
        h.push_str(kind.name());
    }
    h.push_str(",violation");
    h
}

/// One completed repetition.
#[derive(Debug, Clone)]
pub struct Repetition {
    pub rep: usize,
    pub seed: u64,
    pub trace: Trace,
    pub comparator: ComparatorPath,
    pub report: RegretReport,
    pub signs: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub repetitions: Vec<Repetition>,
    pub violations: usize,
}

impl ExperimentSummary {
    pub fn exit_code(&self) -> i32 {
        i32::from(self.violations > 0)
    }
}

fn build_stream(
    cfg: &ExperimentConfig,
    set: &FeasibleSet,
    seed: u64,
) -> Result<(Stream, Option<ComparatorPath>), ExperimentError> {
    let n = set.dim();
    let k = cfg.zero_prefix;
    let inner_horizon = cfg.horizon - k.min(cfg.horizon);
    let wrap = |s: Stream| if k > 0 { zero_prefix(k, s) } else { s };
    Ok(match &cfg.stream {
        StreamSpec::Zero => (linear_fixed(vec![Vector::zeros(n); cfg.horizon])?, None),
        StreamSpec::Rademacher { scale, direction } => {
            let u = match direction {
                Some(u) => Vector::new(u.clone())?,
                None => Vector::basis(n, 0),
            };
            (wrap(gen_rademacher(u, *scale, inner_horizon, seed)?), None)
        }
        StreamSpec::Linear { gradients } => {
            let gs = gradients
                .iter()
                .map(|g| Vector::new(g.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            (wrap(linear_fixed(gs)?), None)
        }
        StreamSpec::Regression { drift, noise } => {
            let (stream, truth) = gen_regression(set, inner_horizon, *drift, *noise, seed)?;
            let truth = if k > 0 {
                let mut points = vec![truth.points()[0].clone(); k];
                points.extend_from_slice(truth.points());
                ComparatorPath::tight(set, points)?
            } else {
                truth
            };
            (wrap(stream), Some(truth))
        }
    })
}

fn policy_budget(cfg: &ExperimentConfig) -> f64 {
    match &cfg.policy {
        PolicySpec::Adaptive { p_hat } => *p_hat,
        PolicySpec::Constant { p, .. } => *p,
        PolicySpec::PerCoordinate { p_hat } => p_hat.iter().sum(),
        PolicySpec::Doubling { .. } => 0.0,
    }
}

fn build_comparator(
    cfg: &ExperimentConfig,
    set: &FeasibleSet,
    policy: &RatePolicy,
    gradients: &[Vector],
    truth: Option<ComparatorPath>,
) -> Result<ComparatorPath, ExperimentError> {
    let d = set.diameter();
    let horizon = gradients.len();
    Ok(match (&cfg.comparator, policy) {
        (ComparatorSpec::GroundTruth, _) => truth.expect("validated: regression stream"),
        (ComparatorSpec::Prefix, RatePolicy::DoublingReset { budget, .. }) => {
            prefix_budgeted_comparator(gradients, set, budget)?
        }
        (ComparatorSpec::Prefix, _) => unreachable!("validated: doubling policy"),
        (ComparatorSpec::BruteForce { p, resolution }, _) => {
            brute_force_comparator(gradients, set, *p, *resolution)?
        }
        (ComparatorSpec::Segmented { p: None }, RatePolicy::PerCoordinate { p_hat }) => {
            best_segmented_per_coordinate(gradients, set, p_hat)?
        }
        (ComparatorSpec::Segmented { p: None }, RatePolicy::DoublingReset { budget, .. }) => {
            prefix_budgeted_comparator(gradients, set, budget)?
        }
        (ComparatorSpec::Segmented { p }, _) => {
            let p = p.unwrap_or_else(|| policy_budget(cfg));
            let pieces = max_segments(d, p).min(horizon);
            best_segmented_comparator(gradients, set, p, Segmentation::Equal(pieces))?.expand(set)?
        }
    })
}

/// Reruns allowed while tuning a constant rate to its own realized `G_T`.
/// For streams whose gradient norms do not depend on the decisions the
/// second run already matches.
const MAX_TUNING_RUNS: usize = 8;

/// A finished run and its comparator, before regret is assessed.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub seed: u64,
    pub set: FeasibleSet,
    pub stream: Stream,
    pub policy: RatePolicy,
    pub trace: Trace,
    pub comparator: ComparatorPath,
}

impl Simulation {
    /// Regret against the comparator with every applicable bound checked.
    pub fn report(&self) -> dynregret::Result<RegretReport> {
        self.report_against(&self.comparator)
    }

    pub fn report_against(&self, comparator: &ComparatorPath) -> dynregret::Result<RegretReport> {
        let mut report = dynamic_regret(&self.trace.records, comparator, &self.stream)?;
        assess(&mut report, &self.trace.records, &self.set, &self.policy, comparator)?;
        Ok(report)
    }
}

/// Plays repetition `rep` of the configuration. A constant-rate policy
/// without a configured `G_T` is re-run until it is tuned with the energy
/// it actually realizes.
pub fn simulate(cfg: &ExperimentConfig, rep: usize) -> Result<Simulation, ExperimentError> {
    let seed = derive_seed(cfg.seed, rep as u64);
    let set = cfg.build_set()?;
    let (stream, truth) = build_stream(cfg, &set, seed)?;
    let w1 = match &cfg.w1 {
        Some(w) => Vector::new(w.clone())?,
        None => set.center(),
    };

    let tuned = matches!(cfg.policy, PolicySpec::Constant { g_total: None, .. });
    let mut guess = 1.0;
    let mut attempt = 0;
    let (policy, trace) = loop {
        let policy = cfg.build_policy(set.diameter(), guess)?;
        let trace = run(&mut stream.rewound(), &set, w1.clone(), &policy, cfg.horizon)?;
        let realized = trace.records.last().map_or(0.0, |r| r.energy);
        attempt += 1;
        if !tuned || realized == guess || realized == 0.0 || attempt == MAX_TUNING_RUNS {
            break (policy, trace);
        }
        guess = realized;
    };

    let comparator = build_comparator(cfg, &set, &policy, &trace.gradients(), truth)?;
    Ok(Simulation {
        seed,
        set,
        stream,
        policy,
        trace,
        comparator,
    })
}

pub fn run_repetition(cfg: &ExperimentConfig, rep: usize) -> Result<Repetition, ExperimentError> {
    let sim = simulate(cfg, rep)?;
    let report = sim.report()?;
    Ok(Repetition {
        rep,
        seed: sim.seed,
        signs: sim.stream.kind().signs(),
        trace: sim.trace,
        comparator: sim.comparator,
        report,
    })
}

pub fn trace_csv(trace: &Trace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let w = r.decision.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
        let eta = match &r.rate {
            StepRate::Skipped => String::new(),
            StepRate::Step(e) | StepRate::ZeroStep(e) => fmt_f64(*e),
            StepRate::Coordinates(rates) => rates
                .iter()
                .map(|c| match c {
                    CoordinateRate::Active(e) => fmt_f64(*e),
                    CoordinateRate::Dormant => String::new(),
                })
                .collect::<Vec<_>>()
                .join(";"),
        };
        let seg = r.segment.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{w},{},{eta},{},{seg}",
            r.round,
            fmt_f64(r.gradient.norm()),
            fmt_f64(r.energy)
        );
    }
    out
}

pub fn distance_csv(trace: &Trace, comparator: &ComparatorPath) -> dynregret::Result<String> {
    let mut out = String::from("t,D_t,P_t\n");
    for (t, (d, p)) in comparator.distance_profile(&trace.decisions())?.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", t + 1, fmt_f64(*d), fmt_f64(*p));
    }
    Ok(out)
}

pub fn signs_csv(signs: &[f64]) -> String {
    let mut out = String::from("t,sigma\n");
    for (t, s) in signs.iter().enumerate() {
        let _ = writeln!(out, "{},{}", t + 1, *s as i8);
    }
    out
}

pub fn summary_row(rep: &Repetition) -> String {
    let r = &rep.report;
    let mut row = format!(
        "{},{},{},{},{},{},{},{}",
        rep.rep,
        rep.seed,
        fmt_opt(r.realized_regret),
        fmt_f64(r.linearized_regret),
        fmt_f64(r.energy),
        fmt_f64(r.max_grad_norm),
        fmt_f64(r.path_variation),
        fmt_f64(r.path_budget),
    );
    for kind in BoundKind::ALL {
        row.push(',');
        row.push_str(&fmt_opt(r.bounds.get(&kind).copied()));
    }
    let _ = write!(row, ",{}", u8::from(r.has_violation()));
    row
}

/// File names and contents for a set of repetitions, in repetition order.
pub fn render_outputs(repetitions: &[Repetition]) -> dynregret::Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    let mut summary = summary_header();
    summary.push('\n');
    for rep in repetitions {
        files.push((format!("trace_{}.csv", rep.rep), trace_csv(&rep.trace)));
        files.push((
            format!("distance_{}.csv", rep.rep),
            distance_csv(&rep.trace, &rep.comparator)?,
        ));
        if let Some(signs) = &rep.signs {
            files.push((format!("signs_{}.csv", rep.rep), signs_csv(signs)));
        }
        summary.push_str(&summary_row(rep));
        summary.push('\n');
    }
    files.push(("summary.csv".into(), summary));
    Ok(files)
}

/// Runs all repetitions, in parallel, and writes the CSV files under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary, ExperimentError> {
    cfg.validate().map_err(|(key, message)| ConfigError {
        line: None,
        key: key.to_string(),
        message,
    })?;
    let repetitions = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, rep))
        .collect::<Result<Vec<_>, _>>()?;

    fs::create_dir_all(out).map_err(|source| ExperimentError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    for (name, contents) in render_outputs(&repetitions)? {
        let path = out.join(name);
        fs::write(&path, contents).map_err(|source| ExperimentError::Io { path, source })?;
    }
    let violations = repetitions.iter().filter(|r| r.report.has_violation()).count();
    Ok(ExperimentSummary {
        repetitions,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn header_lists_every_bound() {
        let h = summary_header();
        assert!(h.starts_with("rep,seed,realized_regret,linearized_regret,G_T,L,path_variation"));
        assert!(h.contains("bound_adaptive") && h.contains("lower_bound_max"));
        assert!(h.ends_with(",violation"));
    }

    #[test]
    fn constant_policy_is_tuned_to_realized_energy() {
        let cfg = ExperimentConfig::parse(
            "policy.kind = constant\npolicy.p = 2\nstream.kind = regression\nstream.drift = 0.01\n\
             comparator.kind = ground_truth\nrun.horizon = 200\nrun.seed = 3\n",
        )
        .unwrap();
        let rep = run_repetition(&cfg, 0).unwrap();
        assert!(rep.report.checked.contains(&BoundKind::RateSequence));
        assert!(!rep.report.has_violation());
    }

    #[test]
    fn per_coordinate_rates_serialize_per_axis() {
        let cfg = ExperimentConfig::parse(
            "set.kind = box\nset.lower = -1,0\nset.upper = 1,0\npolicy.kind = per_coordinate\n\
             policy.p_hat = 1,0\nstream.kind = linear\nstream.gradients = 1,2; 0,0\n",
        )
        .unwrap();
        let rep = run_repetition(&cfg, 0).unwrap();
        let csv = trace_csv(&rep.trace);
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        // second axis has zero width, so its rate is 0 rather than dormant
        assert_eq!(row[3], format!("{};{}", fmt_f64(2.0), fmt_f64(0.0)));
    }
}

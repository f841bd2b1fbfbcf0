//! Property checks over seeded sweeps, one outcome per criterion.
//!
//! `Scale::Small` shrinks horizons and repetition counts so the whole suite
//! runs in well under a minute; `Scale::Full` uses the complete sweeps.

use std::f64::consts::SQRT_2;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use dynregret::analysis::{
    bound_adaptive, bound_constant, bound_per_coordinate, dynamic_regret, lower_bound_sum,
    BoundKind, RegretReport,
};
use dynregret::geometry::{ComparatorPath, ConvexSet, FeasibleSet, Vector};
use dynregret::optimizer::{run, StepRate};
use dynregret::rng::{derive_seed, CounterRng};
use dynregret::scheduler::{rate_adaptive, rate_constant_oracle, BudgetShape, RatePolicy};
use dynregret::streams::{
    best_segmented_comparator, best_segmented_per_coordinate, brute_force_comparator,
    linear_fixed, Segmentation,
};

use crate::config::{ComparatorSpec, ExperimentConfig, PolicySpec, SetSpec, StreamSpec};
use crate::experiment::{render_outputs, run_repetition, simulate, Simulation};
use crate::studies::{lower_bound_study, trace_inequality_study, GramFamily, LowerBoundParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Small,
    Full,
}

impl Scale {
    fn pick<T>(self, small: T, full: T) -> T {
        match self {
            Self::Small => small,
            Self::Full => full,
        }
    }
}

/// Deliberate defects used to show that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Raise the final learning rate of every run above its predecessor.
    EtaIncrease,
    /// Check every upper bound at half its value.
    HalvedBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<28} {} checks={} failures={} time={:.2}s {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.checks,
            self.failures,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub outcomes: Vec<CriterionOutcome>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("criterion,name,passed,checks,failures,seconds,detail\n");
        for o in &self.outcomes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3},\"{}\"",
                o.id,
                o.name,
                o.passed,
                o.checks,
                o.failures,
                o.seconds,
                o.detail.replace('"', "'")
            );
        }
        out
    }
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "adaptive_bound_soundness"),
    (2, "constant_oracle_soundness"),
    (3, "sqrt2_redundancy"),
    (4, "static_regret"),
    (5, "brute_force_dominance"),
    (6, "trace_inequality"),
    (7, "doubling_soundness"),
    (8, "lower_bound_monte_carlo"),
    (9, "per_coordinate_improvement"),
    (10, "determinism_causality"),
];

pub fn verify_suite(scale: Scale) -> SuiteReport {
    verify_suite_with(scale, None)
}

pub fn verify_suite_with(scale: Scale, fault: Option<Fault>) -> SuiteReport {
    SuiteReport {
        outcomes: CRITERIA
            .iter()
            .map(|(id, _)| verify_criterion(*id, scale, fault))
            .collect(),
    }
}

/// Tally of individual checks; `notes` keeps the first few failures.
#[derive(Debug, Default)]
struct Tally {
    checks: usize,
    failures: usize,
    notes: Vec<String>,
    summary: String,
}

impl Tally {
    fn check(&mut self, ok: bool, note: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.notes.len() < 3 {
                self.notes.push(note());
            }
        }
    }

    fn merge(&mut self, other: Tally) {
        self.checks += other.checks;
        self.failures += other.failures;
        for n in other.notes {
            if self.notes.len() < 3 {
                self.notes.push(n);
            }
        }
    }
}

pub fn verify_criterion(id: u8, scale: Scale, fault: Option<Fault>) -> CriterionOutcome {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| *n)
        .unwrap_or("unknown");
    let start = Instant::now();
    let result = match id {
        1 => adaptive_soundness(scale, fault),
        2 => constant_soundness(scale, fault),
        3 => sqrt2_redundancy(),
        4 => static_regret(scale, fault),
        5 => brute_force_dominance(scale, fault),
        6 => trace_inequality(scale),
        7 => doubling_soundness(scale, fault),
        8 => lower_bound(scale),
        9 => per_coordinate(scale, fault),
        10 => determinism(scale),
        _ => Err(format!("no criterion {id}")),
    };
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(t) => {
            let mut detail = t.summary.clone();
            if !t.notes.is_empty() {
                if !detail.is_empty() {
                    detail.push_str("; ");
                }
                detail.push_str(&t.notes.join("; "));
            }
            CriterionOutcome {
                id,
                name,
                passed: t.failures == 0 && t.checks > 0,
                checks: t.checks,
                failures: t.failures,
                detail,
                seconds,
            }
        }
        Err(e) => CriterionOutcome {
            id,
            name,
            passed: false,
            checks: 0,
            failures: 1,
            detail: e,
            seconds,
        },
    }
}

/// Assesses a simulation after applying the injected fault, if any.
fn faulty_report(
    sim: &mut Simulation,
    comparator: &ComparatorPath,
    fault: Option<Fault>,
) -> Result<RegretReport, String> {
    if fault == Some(Fault::EtaIncrease) {
        let records = &mut sim.trace.records;
        if let Some(last) = records.iter().rposition(|r| r.rate.scalar().is_some()) {
            let prev = records[..last]
                .iter()
                .rev()
                .find_map(|r| r.rate.scalar())
                .unwrap_or(1.0);
            records[last].rate = StepRate::Step(prev * 1.5);
        }
    }
    let mut report = sim.report_against(comparator).map_err(|e| e.to_string())?;
    if fault == Some(Fault::HalvedBound) {
        let checked: Vec<BoundKind> = report.checked.iter().copied().collect();
        for kind in checked {
            let v = report.bounds[&kind];
            report.check_bound(kind, 0.5 * v);
        }
    }
    Ok(report)
}

fn tally_report(t: &mut Tally, label: &str, report: &RegretReport, required: &[BoundKind]) {
    for kind in required {
        t.check(report.checked.contains(kind), || format!("{label}: {} not checked", kind.name()));
    }
    for kind in &report.checked {
        t.check(!report.violations.contains(kind), || {
            format!(
                "{label}: regret {:.6e} exceeds {} {:.6e}",
                report.linearized_regret,
                kind.name(),
                report.bounds[kind]
            )
        });
    }
    t.check(!report.convexity_gap_violated, || {
        format!("{label}: realized regret above linearized regret")
    });
}

fn ball(n: usize) -> SetSpec {
    SetSpec::Ball {
        dim: n,
        radius: 1.0,
        center: None,
    }
}

fn cube(n: usize) -> SetSpec {
    SetSpec::Box {
        lower: vec![-1.0; n],
        upper: vec![1.0; n],
    }
}

fn diameter(set: &SetSpec) -> f64 {
    match set {
        SetSpec::Ball { radius, .. } => 2.0 * radius,
        SetSpec::Box { lower, upper } => lower
            .iter()
            .zip(upper)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt(),
    }
}

/// The soundness sweep shared by the adaptive and constant-rate criteria.
fn soundness_configs(scale: Scale, constant: bool) -> Vec<(String, ExperimentConfig)> {
    let horizon = scale.pick(200, 1000);
    let seeds = scale.pick(1u64, 4);
    let mut out = Vec::new();
    let policy = |p: f64| {
        if constant {
            PolicySpec::Constant { p, g_total: None }
        } else {
            PolicySpec::Adaptive { p_hat: p }
        }
    };
    for n in [1usize, 2, 8] {
        for (set_name, set) in [("ball", ball(n)), ("box", cube(n))] {
            let d = diameter(&set);
            let streams = [
                ("rademacher", StreamSpec::Rademacher { scale: 1.0, direction: None }, 0),
                ("regression", StreamSpec::Regression { drift: 0.002 * d, noise: 0.1 }, 0),
                ("zero_prefix", StreamSpec::Rademacher { scale: 2.0, direction: None }, horizon / 4),
            ];
            for (stream_name, stream, zeros) in streams {
                for mult in [0.0, 1.0, 5.0] {
                    let p = mult * d;
                    for seed in 0..seeds {
                        let cfg = ExperimentConfig {
                            set: set.clone(),
                            policy: policy(p),
                            stream: stream.clone(),
                            zero_prefix: zeros,
                            comparator: ComparatorSpec::Segmented { p: Some(p) },
                            horizon,
                            reps: 1,
                            seed: 1000 * n as u64 + 10 * seed + mult as u64,
                            w1: None,
                            out: None,
                        };
                        out.push((format!("{set_name} N={n} {stream_name} P={mult}D seed={seed}"), cfg));
                    }
                }
            }
            // ground-truth drift paths, with the rate tuned to their variation
            for drift in [0.001, 0.01] {
                for seed in 0..seeds {
                    let mut cfg = ExperimentConfig {
                        set: set.clone(),
                        policy: policy(0.0),
                        stream: StreamSpec::Regression { drift: drift * d, noise: 0.05 },
                        zero_prefix: if seed % 2 == 1 { horizon / 10 } else { 0 },
                        comparator: ComparatorSpec::GroundTruth,
                        horizon,
                        reps: 1,
                        seed: 7000 + 100 * n as u64 + seed,
                        w1: None,
                        out: None,
                    };
                    // the truth variation is known before the run: it only depends on the seed
                    let truth_budget = simulate(&cfg, 0).map(|s| s.comparator.budget()).unwrap_or(0.0);
                    cfg.policy = policy(truth_budget);
                    out.push((format!("{set_name} N={n} drift={drift}D seed={seed}"), cfg));
                }
            }
        }
    }
    // runs started on the boundary against the first gradient, where the
    // bound is within a small factor of the regret
    for horizon in 1..=3 {
        let cfg = ExperimentConfig {
            set: cube(1),
            policy: policy(0.0),
            stream: StreamSpec::Linear {
                gradients: vec![vec![1.0]; horizon],
            },
            zero_prefix: 0,
            comparator: ComparatorSpec::Segmented { p: Some(0.0) },
            horizon,
            reps: 1,
            seed: 0,
            w1: Some(vec![1.0]),
            out: None,
        };
        out.push((format!("corner start T={horizon}"), cfg));
    }
    out
}

fn sweep(
    configs: Vec<(String, ExperimentConfig)>,
    required: &[BoundKind],
    fault: Option<Fault>,
) -> Result<Tally, String> {
    let runs = configs.len();
    let tallies = configs
        .into_par_iter()
        .map(|(label, cfg)| {
            let mut sim = simulate(&cfg, 0).map_err(|e| format!("{label}: {e}"))?;
            let comparator = sim.comparator.clone();
            let report = faulty_report(&mut sim, &comparator, fault).map_err(|e| format!("{label}: {e}"))?;
            let mut t = Tally::default();
            t.check(
                comparator.variation() <= comparator.budget() * (1.0 + 1e-12) + 1e-12,
                || format!("{label}: comparator exceeds its budget"),
            );
            tally_report(&mut t, &label, &report, required);
            Ok(t)
        })
        .collect::<Result<Vec<Tally>, String>>()?;
    let mut total = Tally::default();
    for t in tallies {
        total.merge(t);
    }
    total.summary = format!("runs={runs}");
    Ok(total)
}

fn adaptive_soundness(scale: Scale, fault: Option<Fault>) -> Result<Tally, String> {
    sweep(
        soundness_configs(scale, false),
        &[BoundKind::Adaptive, BoundKind::RateSequence],
        fault,
    )
}

fn constant_soundness(scale: Scale, fault: Option<Fault>) -> Result<Tally, String> {
    sweep(
        soundness_configs(scale, true),
        &[BoundKind::Constant, BoundKind::RateSequence],
        fault,
    )
}

fn sqrt2_redundancy() -> Result<Tally, String> {
    let mut t = Tally::default();
    for d in [0.01, 0.3, 1.0, 7.0, 250.0] {
        for mult in [0.0, 0.25, 1.0, 5.0, 1000.0] {
            for g in [1e-3, 1.0, 37.5, 1e4] {
                let p = mult * d;
                let a = bound_adaptive(d, p, p, g);
                let c = bound_constant(d, p, g);
                t.check((a - SQRT_2 * c).abs() <= 1e-12 * a, || {
                    format!("D={d} P={p} G={g}: {a} vs sqrt2 * {c}")
                });
                t.check(c <= a && a <= SQRT_2 * c * (1.0 + 1e-12), || {
                    format!("D={d} P={p} G={g}: ordering fails")
                });
                let ra = rate_adaptive(d, p, g).map_err(|e| e.to_string())?;
                let rc = rate_constant_oracle(d, p, g).map_err(|e| e.to_string())?;
                t.check((ra * SQRT_2 - rc).abs() <= 1e-12 * rc, || {
                    format!("D={d} P={p} G={g}: rates {ra} vs {rc}")
                });
            }
        }
    }
    t.summary = "grid=100".into();
    Ok(t)
}

fn random_gradients(rng: CounterRng, n: usize, horizon: usize, scale: f64) -> Vec<Vector> {
    (0..horizon)
        .map(|t| {
            Vector::new((0..n).map(|i| scale * (2.0 * rng.uniform((t * n + i) as u64) - 1.0)).collect())
                .expect("finite")
        })
        .collect()
}

fn random_point(set: &FeasibleSet, rng: CounterRng) -> Vector {
    let n = set.dim();
    let raw: Vec<f64> = (0..n).map(|i| 4.0 * rng.uniform(i as u64) - 2.0).collect();
    set.project(&Vector::new(raw).expect("finite")).expect("projection")
}

/// Plays the adaptive policy from `w1` on fixed gradients.
fn play(set: &FeasibleSet, gradients: Vec<Vector>, w1: Vector, p_hat: f64) -> Result<Simulation, String> {
    let stream = linear_fixed(gradients).map_err(|e| e.to_string())?;
    let policy = RatePolicy::adaptive(p_hat);
    let horizon = stream.kind().horizon();
    let trace = run(&mut stream.rewound(), set, w1, &policy, horizon).map_err(|e| e.to_string())?;
    let comparator = ComparatorPath::tight(set, trace.decisions()).map_err(|e| e.to_string())?;
    Ok(Simulation {
        seed: 0,
        set: set.clone(),
        stream,
        policy,
        trace,
        comparator,
    })
}

fn small_set(rng: CounterRng, n: usize) -> FeasibleSet {
    if rng.word(100).is_multiple_of(2) {
        FeasibleSet::unit_ball(n, 0.5 + rng.uniform(101)).expect("valid ball")
    } else {
        let lower: Vec<f64> = (0..n).map(|i| -0.5 - rng.uniform(102 + i as u64)).collect();
        let upper: Vec<f64> = (0..n).map(|i| 0.5 + rng.uniform(110 + i as u64)).collect();
        FeasibleSet::hyper_box(Vector::new(lower).unwrap(), Vector::new(upper).unwrap())
            .expect("valid box")
    }
}

fn static_regret(scale: Scale, fault: Option<Fault>) -> Result<Tally, String> {
    let instances = scale.pick(20, 50);
    let mut total = Tally::default();
    for i in 0..instances {
        let rng = CounterRng::new(derive_seed(40, i as u64));
        let set = small_set(rng, 1);
        let d = set.diameter();
        let grads = random_gradients(rng.lane(1), 1, 8, 2.0);
        let w1 = random_point(&set, rng.lane(2));
        let mut sim = play(&set, grads.clone(), w1, 0.0)?;
        let comp = brute_force_comparator(&grads, &set, 0.0, 21).map_err(|e| e.to_string())?;
        let report = faulty_report(&mut sim, &comp, fault)?;
        let label = format!("instance {i}");
        let g = report.energy;
        total.check(
            (report.bounds[&BoundKind::Adaptive] - SQRT_2 * d * g).abs() <= 1e-12 * SQRT_2 * d * g,
            || format!("{label}: static bound is not sqrt2 D G_T"),
        );
        tally_report(&mut total, &label, &report, &[BoundKind::Adaptive]);
    }
    total.summary = format!("instances={instances}");
    Ok(total)
}

fn brute_force_dominance(scale: Scale, fault: Option<Fault>) -> Result<Tally, String> {
    let instances = scale.pick(12, 50);
    let tallies = (0..instances)
        .into_par_iter()
        .map(|i| {
            let rng = CounterRng::new(derive_seed(50, i as u64));
            let n = 1 + i % 2;
            let horizon = 2 + (rng.word(0) % 7) as usize;
            let set = small_set(rng, n);
            let d = set.diameter();
            let p = [0.0, 0.5, 1.0, 2.5][i % 4] * d;
            let grads = random_gradients(rng.lane(1), n, horizon, 1.5);
            let w1 = random_point(&set, rng.lane(2));
            let mut sim = play(&set, grads.clone(), w1, p)?;
            let comp = brute_force_comparator(&grads, &set, p, 21).map_err(|e| e.to_string())?;
            let report = faulty_report(&mut sim, &comp, fault)?;
            let mut t = Tally::default();
            tally_report(&mut t, &format!("instance {i} N={n} T={horizon}"), &report, &[BoundKind::Adaptive]);
            Ok(t)
        })
        .collect::<Result<Vec<Tally>, String>>()?;
    let mut total = Tally::default();
    for t in tallies {
        total.merge(t);
    }
    total.summary = format!("instances={instances}");
    Ok(total)
}

fn trace_inequality(scale: Scale) -> Result<Tally, String> {
    let random = scale.pick(100, 500);
    let special = scale.pick(20, 50);
    let mut t = Tally::default();
    let run_family = |family, count, seed| {
        trace_inequality_study(family, count, seed).map_err(|e: dynregret::Error| e.to_string())
    };
    for g in run_family(GramFamily::Random, random, 60)? {
        let root_n = (g.dim as f64).sqrt();
        let r = g.comparison.ratio;
        t.check((1.0 - 1e-10..=root_n + 1e-10).contains(&r), || {
            format!("random N={} T={}: ratio {r}", g.dim, g.rounds)
        });
    }
    for g in run_family(GramFamily::RankOne, special, 61)? {
        let r = g.comparison.ratio;
        t.check((r - 1.0).abs() <= 1e-8, || format!("rank one N={}: ratio {r}", g.dim));
    }
    for g in run_family(GramFamily::Isotropic, special, 62)? {
        let r = g.comparison.ratio;
        let root_n = (g.dim as f64).sqrt();
        t.check((r - root_n).abs() <= 1e-6, || format!("isotropic N={}: ratio {r}", g.dim));
    }
    t.summary = format!("random={random} rank_one={special} isotropic={special}");
    Ok(t)
}

fn doubling_soundness(scale: Scale, fault: Option<Fault>) -> Result<Tally, String> {
    let runs = scale.pick(10, 50);
    let horizon = scale.pick(255, 1023);
    let configs: Vec<(String, ExperimentConfig)> = (0..runs)
        .map(|i| {
            let set = if i % 4 < 2 { ball(2) } else { cube(2) };
            let d = diameter(&set);
            let c = if i % 2 == 0 { 0.1 * d } else { d };
            let stream = if (i / 2) % 2 == 0 {
                StreamSpec::Rademacher { scale: 1.0, direction: None }
            } else {
                StreamSpec::Regression { drift: 0.01 * d, noise: 0.1 }
            };
            let cfg = ExperimentConfig {
                set,
                policy: PolicySpec::Doubling {
                    budget: BudgetShape::Sqrt(c),
                    reset_decision: false,
                },
                stream,
                zero_prefix: 0,
                comparator: ComparatorSpec::Prefix,
                horizon,
                reps: 1,
                seed: 700 + i as u64,
                w1: None,
                out: None,
            };
            (format!("run {i} c={:.1}D", c / d), cfg)
        })
        .collect();
    let tallies = configs
        .into_par_iter()
        .map(|(label, cfg)| {
            let mut sim = simulate(&cfg, 0).map_err(|e| format!("{label}: {e}"))?;
            let grads = sim.trace.gradients();
            let fixed = best_segmented_comparator(&grads, &sim.set, 0.0, Segmentation::Equal(1))
                .and_then(|s| s.expand(&sim.set))
                .map_err(|e| e.to_string())?;
            let mut t = Tally::default();
            for (name, comp) in [("prefix", sim.comparator.clone()), ("fixed", fixed)] {
                let report = faulty_report(&mut sim, &comp, fault)?;
                tally_report(
                    &mut t,
                    &format!("{label} {name}"),
                    &report,
                    &[BoundKind::DoublingSum, BoundKind::DoublingMax],
                );
            }
            Ok(t)
        })
        .collect::<Result<Vec<Tally>, String>>()?;
    let mut total = Tally::default();
    for t in tallies {
        total.merge(t);
    }
    total.summary = format!("runs={runs}");
    Ok(total)
}

fn lower_bound(scale: Scale) -> Result<Tally, String> {
    let params = LowerBoundParams {
        dim: 2,
        radius: 1.0,
        scale: 1.0,
        budget: 0.0,
        horizon: scale.pick(1024, 4096),
        reps: scale.pick(200, 2000),
        seed: 80,
    };
    let study = lower_bound_study(&params).map_err(|e| e.to_string())?;
    let threshold = 0.5 * lower_bound_sum(2.0, 0.0, study.energy);
    let mut t = Tally::default();
    t.check(study.mean >= threshold, || {
        format!("mean regret {:.4} below {threshold:.4}", study.mean)
    });
    t.summary = format!(
        "reps={} T={} mean={:.4} threshold={threshold:.4}",
        params.reps, params.horizon, study.mean
    );
    Ok(t)
}

fn per_coordinate(scale: Scale, fault: Option<Fault>) -> Result<Tally, String> {
    let sets = scale.pick(30, 100);
    let widths = [10.0, 0.1];
    let d_inf: f64 = 10.0;
    let set = FeasibleSet::hyper_box(
        Vector::new(widths.iter().map(|w| -w / 2.0).collect()).unwrap(),
        Vector::new(widths.iter().map(|w| w / 2.0).collect()).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let tallies = (0..sets)
        .into_par_iter()
        .map(|i| {
            let rng = CounterRng::new(derive_seed(90, i as u64));
            let horizon = 20 + (rng.word(0) % 181) as usize;
            let grads: Vec<Vector> = (0..horizon)
                .map(|t| {
                    let s = rng.lane(1);
                    Vector::new(vec![
                        s.normal(2 * t as u64) * (0.1 + rng.uniform(1)),
                        s.normal(2 * t as u64 + 1) * (0.1 + 10.0 * rng.uniform(2)),
                    ])
                    .unwrap()
                })
                .collect();
            let budgets: Vec<f64> = widths
                .iter()
                .enumerate()
                .map(|(k, w)| w * 3.0 * rng.uniform(3 + k as u64))
                .collect();
            let energies: Vec<f64> = (0..2)
                .map(|k| grads.iter().map(|g| g[k] * g[k]).sum::<f64>().sqrt())
                .collect();
            let mut t = Tally::default();

            let lhs: f64 = (0..2)
                .map(|k| widths[k] * (budgets[k] / widths[k] + 0.5).sqrt() * energies[k])
                .sum();
            let rhs: f64 = d_inf
                * (0..2)
                    .map(|k| (budgets[k] / d_inf + 0.5).sqrt() * energies[k])
                    .sum::<f64>();
            t.check(lhs <= rhs * (1.0 + 1e-12), || format!("set {i}: {lhs} > {rhs}"));
            let closed = bound_per_coordinate(&widths, &budgets, &energies).map_err(|e| e.to_string())?;
            t.check((closed - 2.0 * lhs).abs() <= 1e-12 * closed, || {
                format!("set {i}: per-coordinate bound {closed} vs {}", 2.0 * lhs)
            });

            let stream = linear_fixed(grads.clone()).map_err(|e| e.to_string())?;
            let policy = RatePolicy::PerCoordinate { p_hat: budgets.clone() };
            let trace = run(&mut stream.rewound(), &set, set.center(), &policy, horizon)
                .map_err(|e| e.to_string())?;
            let comparator = best_segmented_per_coordinate(&grads, &set, &budgets).map_err(|e| e.to_string())?;
            let mut sim = Simulation {
                seed: 0,
                set: set.clone(),
                stream,
                policy,
                trace,
                comparator: comparator.clone(),
            };
            let report = faulty_report(&mut sim, &comparator, fault)?;
            tally_report(&mut t, &format!("set {i}"), &report, &[BoundKind::PerCoordinate]);
            Ok(t)
        })
        .collect::<Result<Vec<Tally>, String>>()?;
    let mut total = Tally::default();
    for t in tallies {
        total.merge(t);
    }
    total.summary = format!("gradient_sets={sets}");
    Ok(total)
}

fn determinism(scale: Scale) -> Result<Tally, String> {
    let mut t = Tally::default();
    let cfg = ExperimentConfig {
        set: cube(3),
        policy: PolicySpec::Adaptive { p_hat: 1.0 },
        stream: StreamSpec::Regression { drift: 0.01, noise: 0.1 },
        zero_prefix: 5,
        comparator: ComparatorSpec::Segmented { p: None },
        horizon: scale.pick(200, 1000),
        reps: 4,
        seed: 2024,
        w1: None,
        out: None,
    };
    let render = || -> Result<Vec<(String, String)>, String> {
        let reps = (0..cfg.reps)
            .into_par_iter()
            .map(|r| run_repetition(&cfg, r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        render_outputs(&reps).map_err(|e| e.to_string())
    };
    let (a, b) = (render()?, render()?);
    t.check(a == b, || "two renders of the same seed differ".into());

    let runs = 20;
    for i in 0..runs {
        let rng = CounterRng::new(derive_seed(100, i as u64));
        let n = 1 + (rng.word(0) % 4) as usize;
        let horizon = 10 + (rng.word(1) % 300) as usize;
        let set = if i % 2 == 0 {
            FeasibleSet::unit_ball(n, 1.0).unwrap()
        } else {
            FeasibleSet::hyper_box(Vector::new(vec![-1.0; n]).unwrap(), Vector::new(vec![2.0; n]).unwrap())
                .unwrap()
        };
        let grads = random_gradients(rng.lane(1), n, horizon, 3.0);
        let policy = RatePolicy::adaptive(rng.uniform(2) * 5.0);
        let full = run(&mut linear_fixed(grads.clone()).unwrap(), &set, set.center(), &policy, horizon)
            .map_err(|e| e.to_string())?;
        let k = (rng.word(3) % horizon as u64) as usize;
        let mut altered = grads.clone();
        for g in &mut altered[k..] {
            *g = g.scale(-2.0).add_scaled(1.0, &Vector::basis(n, 0));
        }
        let other = run(&mut linear_fixed(altered).unwrap(), &set, set.center(), &policy, horizon)
            .map_err(|e| e.to_string())?;
        let same = (0..=k).all(|t| full.records[t].decision == other.records[t].decision);
        t.check(same, || format!("run {i}: decisions before round {} changed", k + 1));

        // replaying recorded gradients reproduces the trace exactly
        let replay = run(&mut linear_fixed(full.gradients()).unwrap(), &set, set.center(), &policy, horizon)
            .map_err(|e| e.to_string())?;
        t.check(replay == full, || format!("run {i}: replay differs"));
        let report = dynamic_regret(
            &full.records,
            &ComparatorPath::tight(&set, full.decisions()).map_err(|e| e.to_string())?,
            &linear_fixed(grads).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        t.check(report.linearized_regret == 0.0, || format!("run {i}: self-regret nonzero"));
    }
    t.summary = format!("files={} replay_runs={runs}", a.len());
    Ok(t)
}

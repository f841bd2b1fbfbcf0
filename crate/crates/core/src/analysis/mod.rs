//! Regret accounting and bound checking.

pub mod bounds;
pub mod eigen;

use std::collections::{BTreeMap, BTreeSet};

pub use bounds::{
    bound_adaptive, bound_constant, bound_per_coordinate, bound_per_coordinate_mismatched,
    bound_rate_sequence, bounds_doubling, lower_bound_max, lower_bound_sum,
};
pub use eigen::{symmetric_eigenvalues, GramAccumulator, SymmetricMatrix, TraceComparison};

use crate::error::{Error, Result};
use crate::geometry::{coordinate_path_variation, ComparatorPath, ConvexSet, Vector};
use crate::optimizer::StepRecord;
use crate::scheduler::RatePolicy;
use crate::streams::LossStream;

/// Relative slack separating rounding noise from a genuine bound violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;

/// `value > bound + 1e-9 (1 + |bound|)`.
pub fn exceeds_bound(value: f64, bound: f64) -> bool {
    value > bound + VIOLATION_TOLERANCE * (1.0 + bound.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundKind {
    RateSequence,
    Constant,
    Adaptive,
    PerCoordinate,
    DoublingSum,
    DoublingMax,
    LowerSum,
    LowerMax,
}

impl BoundKind {
    pub const ALL: [BoundKind; 8] = [
        Self::RateSequence,
        Self::Constant,
        Self::Adaptive,
        Self::PerCoordinate,
        Self::DoublingSum,
        Self::DoublingMax,
        Self::LowerSum,
        Self::LowerMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::RateSequence => "bound_rate_sequence",
            Self::Constant => "bound_constant",
            Self::Adaptive => "bound_adaptive",
            Self::PerCoordinate => "bound_per_coordinate",
            Self::DoublingSum => "bound_doubling_sum",
            Self::DoublingMax => "bound_doubling_max",
            Self::LowerSum => "lower_bound_sum",
            Self::LowerMax => "lower_bound_max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub horizon: usize,
    /// `sum f_t(w_t) - f_t(w_t*)`; `None` when the stream has no loss values.
    pub realized_regret: Option<f64>,
    /// `sum g_t^T (w_t - w_t*)`.
    pub linearized_regret: f64,
    /// `G_T`.
    pub energy: f64,
    /// `max_t ||g_t||`.
    pub max_grad_norm: f64,
    pub path_variation: f64,
    pub path_budget: f64,
    pub bounds: BTreeMap<BoundKind, f64>,
    /// Upper bounds that were checked against the linearized regret.
    pub checked: BTreeSet<BoundKind>,
    pub violations: BTreeSet<BoundKind>,
    /// Realized regret above linearized regret, which convexity forbids.
    pub convexity_gap_violated: bool,
}

impl RegretReport {
    /// Records an upper bound and flags it when the linearized regret exceeds it.
    pub fn check_bound(&mut self, kind: BoundKind, value: f64) -> bool {
        self.bounds.insert(kind, value);
        self.checked.insert(kind);
        let violated = exceeds_bound(self.linearized_regret, value);
        if violated {
            self.violations.insert(kind);
        }
        violated
    }

    /// Records a bound value for reporting only.
    pub fn record_bound(&mut self, kind: BoundKind, value: f64) {
        self.bounds.insert(kind, value);
    }

    pub fn has_violation(&self) -> bool {
        !self.violations.is_empty() || self.convexity_gap_violated
    }
}

/// Regret of a recorded run against a comparator path.
pub fn dynamic_regret(
    records: &[StepRecord],
    comparator: &ComparatorPath,
    stream: &dyn LossStream,
) -> Result<RegretReport> {
    if records.len() != comparator.len() {
        return Err(Error::invalid(format!(
            "{} records but comparator has length {}",
            records.len(),
            comparator.len()
        )));
    }
    if records.is_empty() {
        return Err(Error::invalid("cannot compute regret of an empty run"));
    }
    let mut linearized = 0.0;
    let mut realized = Some(0.0);
    let mut energy_sq = 0.0;
    let mut max_norm = 0.0f64;
    for (t, (rec, star)) in records.iter().zip(comparator.points()).enumerate() {
        linearized += rec.gradient.dot(&rec.decision.sub(star));
        let norm_sq = rec.gradient.norm_squared();
        energy_sq += norm_sq;
        max_norm = max_norm.max(norm_sq.sqrt());
        realized = match (
            realized,
            stream.loss(t + 1, &rec.decision),
            stream.loss(t + 1, star),
        ) {
            (Some(acc), Some(a), Some(b)) => Some(acc + (a - b)),
            _ => None,
        };
    }
    let convexity_gap_violated = realized.is_some_and(|r| {
        r > linearized + VIOLATION_TOLERANCE * (1.0 + linearized.abs())
    });
    Ok(RegretReport {
        horizon: records.len(),
        realized_regret: realized,
        linearized_regret: linearized,
        energy: energy_sq.sqrt(),
        max_grad_norm: max_norm,
        path_variation: comparator.variation(),
        path_budget: comparator.budget(),
        bounds: BTreeMap::new(),
        checked: BTreeSet::new(),
        violations: BTreeSet::new(),
        convexity_gap_violated,
    })
}

/// Fills in every bound that applies to the policy and checks the ones that
/// the policy guarantees.
///
/// * adaptive: `bound_adaptive(D, P, P_hat, G_T)` and the general
///   nonincreasing-rate bound on the recorded rates;
/// * constant oracle: the general bound, and the closed form when the rate
///   was tuned with the comparator's budget and the realized `G_T`;
/// * per-coordinate: the summed per-coordinate bound, using each
///   coordinate's comparator variation where it exceeds `P_hat_i`;
/// * doubling: both restart bounds, for comparators that respect `P(t)` on
///   every prefix.
///
/// Lower bounds are recorded for reference.
pub fn assess<S: ConvexSet + ?Sized>(
    report: &mut RegretReport,
    records: &[StepRecord],
    set: &S,
    policy: &RatePolicy,
    comparator: &ComparatorPath,
) -> Result<()> {
    let d = set.diameter();
    let p = comparator.budget();
    let g = report.energy;
    report.record_bound(BoundKind::LowerSum, lower_bound_sum(d, p, g));
    report.record_bound(
        BoundKind::LowerMax,
        lower_bound_max(d, p, report.max_grad_norm, report.horizon),
    );
    report.record_bound(BoundKind::Constant, bound_constant(d, p, g));
    report.record_bound(BoundKind::Adaptive, bound_adaptive(d, p, p, g));

    let grad_norms: Vec<f64> = records.iter().map(|r| r.gradient.norm()).collect();
    let scalar_rates = || -> Vec<Option<f64>> { records.iter().map(|r| r.rate.scalar()).collect() };
    match policy {
        RatePolicy::Adaptive { p_hat } => {
            report.check_bound(BoundKind::Adaptive, bound_adaptive(d, p, *p_hat, g));
            let t1 = bound_rate_sequence(d, p, &scalar_rates(), &grad_norms)?;
            report.check_bound(BoundKind::RateSequence, t1);
        }
        RatePolicy::ConstantOracle {
            path_budget,
            horizon_energy,
        } => {
            let t1 = bound_rate_sequence(d, p, &scalar_rates(), &grad_norms)?;
            report.check_bound(BoundKind::RateSequence, t1);
            if *horizon_energy == g && *path_budget == p {
                report.check_bound(BoundKind::Constant, bound_constant(d, p, g));
            }
        }
        RatePolicy::PerCoordinate { p_hat } => {
            let diameters = set.coordinate_diameters();
            let actual = coordinate_path_variation(comparator.points())?;
            let budgets: Vec<f64> = actual.iter().zip(p_hat).map(|(a, b)| a.max(*b)).collect();
            let energies = coordinate_energies(records, set.dim());
            let bound = bound_per_coordinate_mismatched(&diameters, &budgets, p_hat, &energies)?;
            report.check_bound(BoundKind::PerCoordinate, bound);
        }
        RatePolicy::DoublingReset { budget, .. } => {
            let (sum_form, max_form) = bounds_doubling(d, budget, &grad_norms)?;
            report.check_bound(BoundKind::DoublingSum, sum_form);
            report.check_bound(BoundKind::DoublingMax, max_form);
        }
    }
    Ok(())
}

/// `G_{T,i} = sqrt(sum_t g_{t,i}^2)` for each coordinate.
pub fn coordinate_energies(records: &[StepRecord], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for r in records {
        for (a, x) in acc.iter_mut().zip(r.gradient.iter()) {
            *a += x * x;
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

/// Linearized regret `sum g_t^T (w_t - w_t*)` from decisions and gradients.
pub fn linearized_regret(decisions: &[Vector], gradients: &[Vector], comparator: &[Vector]) -> f64 {
    decisions
        .iter()
        .zip(gradients)
        .zip(comparator)
        .map(|((w, g), star)| g.dot(&w.sub(star)))
        .sum()
}

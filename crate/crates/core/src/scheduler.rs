//! Learning-rate policies.
//!
//! Every policy is driven by the gradient energy `G_t = sqrt(sum ||g_s||^2)`.
//! The adaptive rate `D sqrt(P/D + 1/2) / G_t` needs no knowledge of the
//! future, the constant oracle rate needs the final energy `G_T`, and the
//! doubling policy re-tunes the adaptive rate on segments `[2^(k-1), 2^k)`
//! when the path budget grows with the horizon.

use crate::error::{Error, Result};
use crate::geometry::{check_dims, Vector};

/// Running root-sum-of-squares of observed sub-gradients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientEnergy {
    sum_squares: f64,
    coordinate_sum_squares: Option<Vec<f64>>,
}

impl GradientEnergy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Energy that also tracks `G_{t,i}` for each coordinate.
    pub fn with_coordinates(dim: usize) -> Self {
        Self {
            sum_squares: 0.0,
            coordinate_sum_squares: Some(vec![0.0; dim]),
        }
    }

    /// `G_t = sqrt(G_{t-1}^2 + ||g_t||^2)`.
    pub fn update(&self, g: &Vector) -> Result<Self> {
        let mut next = self.clone();
        next.accumulate(g)?;
        Ok(next)
    }

    pub fn accumulate(&mut self, g: &Vector) -> Result<()> {
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("gradient entry {i} is not finite")));
        }
        if let Some(coords) = &mut self.coordinate_sum_squares {
            check_dims(coords.len(), g.dim())?;
            for (c, x) in coords.iter_mut().zip(g.iter()) {
                *c += x * x;
            }
        }
        self.sum_squares += g.norm_squared();
        Ok(())
    }

    /// Current `G_t`.
    pub fn value(&self) -> f64 {
        self.sum_squares.sqrt()
    }

    pub fn sum_squares(&self) -> f64 {
        self.sum_squares
    }

    pub fn coordinate_values(&self) -> Option<Vec<f64>> {
        self.coordinate_sum_squares
            .as_ref()
            .map(|c| c.iter().map(|x| x.sqrt()).collect())
    }

    pub fn reset(&mut self) {
        self.sum_squares = 0.0;
        if let Some(c) = &mut self.coordinate_sum_squares {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

fn check_geometry(d: f64, p: f64) -> Result<()> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::invalid(format!("diameter must be positive, got {d}")));
    }
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::invalid(format!("path budget must be nonnegative, got {p}")));
    }
    Ok(())
}

/// Best constant rate in hindsight: `D sqrt(1 + 2P/D) / G_T`.
pub fn rate_constant_oracle(d: f64, p: f64, horizon_energy: f64) -> Result<f64> {
    check_geometry(d, p)?;
    if horizon_energy.is_nan() || horizon_energy <= 0.0 {
        return Err(Error::RateUndefined(
            "constant oracle rate needs G_T > 0; with G_T = 0 no step is ever taken".into(),
        ));
    }
    Ok(d * (1.0 + 2.0 * p / d).sqrt() / horizon_energy)
}

/// Adaptive rate `D sqrt(P_hat/D + 1/2) / G_t`.
pub fn rate_adaptive(d: f64, p_hat: f64, energy: f64) -> Result<f64> {
    check_geometry(d, p_hat)?;
    if energy.is_nan() || energy <= 0.0 {
        return Err(Error::RateUndefined(
            "adaptive rate needs G_t > 0 (zero-gradient prefix)".into(),
        ));
    }
    Ok(d * (p_hat / d + 0.5).sqrt() / energy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordinateRate {
    Active(f64),
    /// No gradient mass seen on this coordinate yet; it is not updated.
    Dormant,
}

impl CoordinateRate {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Active(r) => Some(r),
            Self::Dormant => None,
        }
    }
}

/// Per-coordinate adaptive rates. A coordinate with zero width gets rate 0.
pub fn rate_per_coordinate(
    diameters: &[f64],
    p_hat: &[f64],
    energies: &[f64],
) -> Result<Vec<CoordinateRate>> {
    check_dims(diameters.len(), p_hat.len())?;
    check_dims(diameters.len(), energies.len())?;
    diameters
        .iter()
        .zip(p_hat)
        .zip(energies)
        .map(|((&d, &p), &g)| {
            if !(d.is_finite() && d >= 0.0) || !(p.is_finite() && p >= 0.0) {
                return Err(Error::invalid(format!(
                    "per-coordinate diameter {d} or budget {p} is invalid"
                )));
            }
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::invalid(format!("per-coordinate energy {g} is invalid")));
            }
            Ok(if g == 0.0 {
                CoordinateRate::Dormant
            } else if d == 0.0 {
                CoordinateRate::Active(0.0)
            } else {
                CoordinateRate::Active(d * (p / d + 0.5).sqrt() / g)
            })
        })
        .collect()
}

/// Shape of a horizon-dependent path budget before clamping to `D (T - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetShape {
    /// `P(T) = p`.
    Constant(f64),
    /// `P(T) = c sqrt(T)`.
    Sqrt(f64),
    /// `P(T) = c T`.
    Linear(f64),
}

/// Largest horizon checked for almost sub-additivity at construction.
pub const BUDGET_CHECK_HORIZON: u64 = 1024;

/// A nondecreasing path budget `T -> P(T)`, clamped to `D (T - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBudget {
    shape: BudgetShape,
    diameter: f64,
}

impl PathBudget {
    /// Builds the budget and checks `P(T1 + T2) <= P(T1) + P(T2 + 1)` and
    /// monotonicity for all `T1, T2` up to [`BUDGET_CHECK_HORIZON`].
    pub fn new(shape: BudgetShape, diameter: f64) -> Result<Self> {
        let coef = match shape {
            BudgetShape::Constant(c) | BudgetShape::Sqrt(c) | BudgetShape::Linear(c) => c,
        };
        check_geometry(diameter, coef)?;
        let budget = Self { shape, diameter };
        budget.check_almost_subadditive(BUDGET_CHECK_HORIZON)?;
        Ok(budget)
    }

    pub fn shape(&self) -> BudgetShape {
        self.shape
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// `P(T)` for `T >= 1`.
    pub fn eval(&self, horizon: u64) -> f64 {
        assert!(horizon >= 1, "path budget is defined for T >= 1");
        let t = horizon as f64;
        let raw = match self.shape {
            BudgetShape::Constant(p) => p,
            BudgetShape::Sqrt(c) => c * t.sqrt(),
            BudgetShape::Linear(c) => c * t,
        };
        raw.min(self.diameter * (t - 1.0))
    }

    pub fn check_almost_subadditive(&self, max_horizon: u64) -> Result<()> {
        let values: Vec<f64> = (1..=2 * max_horizon + 1).map(|t| self.eval(t)).collect();
        let p = |t: u64| values[(t - 1) as usize];
        for t in 2..=2 * max_horizon + 1 {
            if p(t) < p(t - 1) {
                return Err(Error::invalid(format!("path budget decreases at T = {t}")));
            }
        }
        for t1 in 1..=max_horizon {
            for t2 in 1..=max_horizon {
                let lhs = p(t1 + t2);
                let rhs = p(t1) + p(t2 + 1);
                if lhs > rhs * (1.0 + 1e-12) {
                    return Err(Error::invalid(format!(
                        "path budget is not almost sub-additive at T1 = {t1}, T2 = {t2}: \
                         {lhs} > {rhs}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One restart segment of the doubling schedule: rounds `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub index: u32,
    pub start: u64,
    pub end: u64,
}

impl Segment {
    /// Segment `k` covers `2^(k-1) <= t < 2^k`.
    pub fn new(index: u32) -> Self {
        assert!((1..64).contains(&index), "segment index out of range");
        Self {
            index,
            start: 1 << (index - 1),
            end: (1 << index) - 1,
        }
    }

    pub fn containing(round: u64) -> Self {
        assert!(round >= 1, "rounds start at 1");
        Self::new(64 - round.leading_zeros())
    }

    pub fn contains(&self, round: u64) -> bool {
        (self.start..=self.end).contains(&round)
    }
}

/// Segment of round `t` and the budget `P(2^k - 1)` used inside it.
pub fn doubling_schedule(round: u64, budget: &PathBudget) -> (Segment, f64) {
    let seg = Segment::containing(round);
    (seg, budget.eval(seg.end))
}

/// Number of doubling segments touched by a horizon: `ceil(log2(T + 1))`.
pub fn segment_count(horizon: u64) -> u32 {
    Segment::containing(horizon).index
}

/// How `eta_t` is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum RatePolicy {
    /// Constant rate tuned with the (hindsight) final energy `G_T`.
    ConstantOracle { path_budget: f64, horizon_energy: f64 },
    /// `D sqrt(P_hat/D + 1/2) / G_t`.
    Adaptive { p_hat: f64 },
    /// Independent adaptive rate per coordinate; boxes only.
    PerCoordinate { p_hat: Vec<f64> },
    /// Adaptive rate restarted at rounds `2^(k-1)` with budget `P(2^k - 1)`.
    /// The iterate is kept across restarts unless `reset_decision` is set.
    DoublingReset {
        budget: PathBudget,
        reset_decision: bool,
    },
}

impl RatePolicy {
    pub fn adaptive(p_hat: f64) -> Self {
        Self::Adaptive { p_hat }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ConstantOracle { .. } => "constant",
            Self::Adaptive { .. } => "adaptive",
            Self::PerCoordinate { .. } => "per_coordinate",
            Self::DoublingReset { .. } => "doubling",
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |what: &str, x: f64| {
            Err(Error::invalid(format!("{what} must be finite and nonnegative, got {x}")))
        };
        match self {
            Self::ConstantOracle {
                path_budget,
                horizon_energy,
            } => {
                if !(path_budget.is_finite() && *path_budget >= 0.0) {
                    return bad("path budget", *path_budget);
                }
                if !(horizon_energy.is_finite() && *horizon_energy >= 0.0) {
                    return bad("horizon energy", *horizon_energy);
                }
            }
            Self::Adaptive { p_hat } => {
                if !(p_hat.is_finite() && *p_hat >= 0.0) {
                    return bad("p_hat", *p_hat);
                }
            }
            Self::PerCoordinate { p_hat } => {
                check_dims(dim, p_hat.len())?;
                if let Some(&p) = p_hat.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                    return bad("p_hat", p);
                }
            }
            Self::DoublingReset { .. } => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn energy_examples() {
        let e = GradientEnergy::new().update(&v(&[3.0, 0.0])).unwrap();
        assert_eq!(e.value(), 3.0);
        let e = e.update(&v(&[0.0, 4.0])).unwrap();
        assert_eq!(e.value(), 5.0);
        let e = e.update(&v(&[0.0, 0.0])).unwrap();
        assert_eq!(e.value(), 5.0);
        let coords = GradientEnergy::with_coordinates(2)
            .update(&v(&[3.0, 4.0]))
            .unwrap();
        assert_eq!(coords.coordinate_values().unwrap(), vec![3.0, 4.0]);
        assert!(coords.update(&v(&[1.0])).is_err());
    }

    #[test]
    fn constant_oracle_examples() {
        assert!((rate_constant_oracle(1.0, 0.0, 10.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((rate_constant_oracle(1.0, 4.0, 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((rate_constant_oracle(2.0, 0.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(
            rate_constant_oracle(1.0, 0.0, 0.0),
            Err(Error::RateUndefined(_))
        ));
    }

    #[test]
    fn adaptive_examples() {
        assert!((rate_adaptive(2.0, 1.0, 4.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((rate_adaptive(1.0, 0.0, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((rate_adaptive(1.0, 0.0, 2.0).unwrap() - 0.353_553_390_593_273_8).abs() < 1e-15);
        assert!(matches!(rate_adaptive(1.0, 0.0, 0.0), Err(Error::RateUndefined(_))));
        assert!(rate_adaptive(0.0, 0.0, 1.0).is_err());
        assert!(rate_adaptive(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn per_coordinate_examples() {
        let r = rate_per_coordinate(&[2.0, 2.0], &[1.0, 1.0], &[4.0, 4.0]).unwrap();
        assert_eq!(r, vec![CoordinateRate::Active(0.5); 2]);
        let r = rate_per_coordinate(&[1.0, 1.0], &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(r[1], CoordinateRate::Dormant);
        assert!((r[0].value().unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let r = rate_per_coordinate(&[0.0, 1.0], &[0.0, 0.0], &[5.0, 1.0]).unwrap();
        assert_eq!(r[0], CoordinateRate::Active(0.0));
        assert!((r[1].value().unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(rate_per_coordinate(&[1.0], &[0.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn doubling_examples() {
        let s = Segment::containing(1);
        assert_eq!((s.index, s.start, s.end), (1, 1, 1));
        let s = Segment::containing(3);
        assert_eq!((s.index, s.start, s.end), (2, 2, 3));
        let s = Segment::containing(4);
        assert_eq!((s.index, s.start, s.end), (3, 4, 7));
        assert_eq!(segment_count(1023), 10);
        assert_eq!(segment_count(1024), 11);
        let budget = PathBudget::new(BudgetShape::Linear(0.5), 1.0).unwrap();
        let (seg, p) = doubling_schedule(5, &budget);
        assert_eq!(seg.index, 3);
        assert_eq!(p, 3.5);
    }

    #[test]
    fn shipped_budgets_validate() {
        for d in [0.5, 1.0, 2.0, 10.0] {
            for c in [0.0, 0.1 * d, d, 3.0 * d] {
                PathBudget::new(BudgetShape::Constant(c), d).unwrap();
                PathBudget::new(BudgetShape::Sqrt(c), d).unwrap();
                PathBudget::new(BudgetShape::Linear(c), d).unwrap();
            }
        }
        let b = PathBudget::new(BudgetShape::Sqrt(1.0), 1.0).unwrap();
        assert_eq!(b.eval(1), 0.0);
        assert_eq!(b.eval(4), 2.0);
        assert!(PathBudget::new(BudgetShape::Sqrt(-1.0), 1.0).is_err());
    }

    proptest! {
        #[test]
        fn adaptive_times_sqrt2_is_oracle(d in 0.01..100.0f64, p in 0.0..1000.0f64, g in 1e-3..1e3f64) {
            let a = rate_adaptive(d, p, g).unwrap() * 2f64.sqrt();
            let c = rate_constant_oracle(d, p, g).unwrap();
            prop_assert!((a - c).abs() <= 1e-12 * c);
        }

        #[test]
        fn energy_matches_fresh_sum(gs in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 1..60)) {
            let mut e = GradientEnergy::new();
            let mut prev = 0.0;
            for g in &gs {
                e.accumulate(&v(g)).unwrap();
                prop_assert!(e.value() >= prev);
                prev = e.value();
            }
            let fresh: f64 = gs.iter().flatten().map(|x| x * x).sum();
            prop_assert!((e.value().powi(2) - fresh).abs() <= 1e-10 * fresh.max(1e-300));
        }

        #[test]
        fn segment_budgets_bounded_by_twice_horizon_budget(
            d in 0.1..5.0f64,
            c_frac in 0.0..2.0f64,
            kind in 0usize..3,
            horizon in 1u64..5000,
        ) {
            let c = c_frac * d;
            let shape = [BudgetShape::Constant(c), BudgetShape::Sqrt(c), BudgetShape::Linear(c)][kind];
            let budget = PathBudget::new(shape, d).unwrap();
            let last = Segment::containing(horizon);
            let mut prev = 0.0;
            for k in 1..=last.index {
                let pk = budget.eval(Segment::new(k).end);
                prop_assert!(pk >= prev);
                prev = pk;
            }
            prop_assert!(prev <= 2.0 * budget.eval(horizon) * (1.0 + 1e-12));
        }

        #[test]
        fn budget_subadditive_on_random_grid(
            d in 0.1..5.0f64,
            c_frac in 0.0..2.0f64,
            kind in 0usize..3,
            t1 in 1u64..100_000,
            t2 in 1u64..100_000,
        ) {
            let c = c_frac * d;
            let shape = [BudgetShape::Constant(c), BudgetShape::Sqrt(c), BudgetShape::Linear(c)][kind];
            let b = PathBudget::new(shape, d).unwrap();
            prop_assert!(b.eval(t1 + t2) <= (b.eval(t1) + b.eval(t2 + 1)) * (1.0 + 1e-12));
            prop_assert!(b.eval(t1) <= d * (t1 - 1) as f64);
        }
    }
}

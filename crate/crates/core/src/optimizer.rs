//! Online sub-gradient descent with projection.
//!
//! Each round the learner plays `w_t`, observes a sub-gradient `g_t` at that
//! point, folds `||g_t||^2` into the gradient energy, asks the rate policy for
//! `eta_t` and moves to `w_{t+1} = proj_K(w_t - eta_t g_t)`. While every
//! gradient seen so far is zero the rate is undefined and the iterate stays
//! put.

use crate::error::{Error, Result, StreamError};
use crate::geometry::{check_dims, ConvexSet, Vector};
use crate::scheduler::{
    doubling_schedule, rate_adaptive, rate_constant_oracle, rate_per_coordinate, CoordinateRate,
    GradientEnergy, RatePolicy, Segment,
};
use crate::streams::LossStream;

/// Emitted when the requested starting point had to be projected.
#[derive(Debug, Clone, PartialEq)]
pub struct InitWarning {
    pub requested: Vector,
    pub projected: Vector,
    pub distance: f64,
}

/// The rate applied in one round.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRate {
    /// Zero gradient while the energy is still zero: no rate exists.
    Skipped,
    Step(f64),
    /// Zero gradient after the prefix: the rate is defined but the step is null.
    ZeroStep(f64),
    Coordinates(Vec<CoordinateRate>),
}

impl StepRate {
    /// The scalar rate, if one was defined this round.
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Self::Step(r) | Self::ZeroStep(r) => Some(*r),
            _ => None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self, Self::Skipped)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub round: u64,
    pub decision: Vector,
    pub gradient: Vector,
    pub rate: StepRate,
    /// `proj_K(w_t - eta_t g_t)`. With a doubling policy that resets the
    /// iterate, the next round may start elsewhere.
    pub next_decision: Vector,
    /// `G_t` after folding in `g_t` (segment-local for doubling).
    pub energy: f64,
    pub segment: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    decision: Vector,
    initial: Vector,
    energy: GradientEnergy,
    round: u64,
    zero_prefix: bool,
    segment: Option<Segment>,
}

impl OptimizerState {
    /// Starts at `w1`, projecting it onto the set if necessary.
    pub fn init<S: ConvexSet + ?Sized>(
        set: &S,
        w1: Vector,
    ) -> Result<(Self, Option<InitWarning>)> {
        check_dims(set.dim(), w1.dim())?;
        let projected = set.project(&w1)?;
        let warning = (projected != w1).then(|| InitWarning {
            distance: projected.distance(&w1),
            requested: w1,
            projected: projected.clone(),
        });
        Ok((
            Self {
                decision: projected.clone(),
                initial: projected,
                energy: GradientEnergy::with_coordinates(set.dim()),
                round: 1,
                zero_prefix: true,
                segment: None,
            },
            warning,
        ))
    }

    /// Decision for the current round.
    pub fn decision(&self) -> &Vector {
        &self.decision
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn energy(&self) -> &GradientEnergy {
        &self.energy
    }

    /// True while every gradient observed so far was the zero vector.
    pub fn zero_prefix(&self) -> bool {
        self.zero_prefix
    }

    pub fn segment(&self) -> Option<u32> {
        self.segment.map(|s| s.index)
    }

    /// Observes `g_t` at the current decision and advances one round.
    pub fn step<S: ConvexSet + ?Sized>(
        &mut self,
        set: &S,
        policy: &RatePolicy,
        g: &Vector,
    ) -> Result<StepRecord> {
        check_dims(set.dim(), g.dim())?;
        policy.validate(set.dim())?;
        if let RatePolicy::PerCoordinate { p_hat } = policy {
            return self.step_per_coordinate(set, p_hat, g);
        }
        let round = self.round;
        let segment = match policy {
            RatePolicy::DoublingReset { budget, .. } => {
                let (seg, _) = doubling_schedule(round, budget);
                self.segment = Some(seg);
                Some(seg.index)
            }
            _ => None,
        };

        self.energy.accumulate(g)?;
        let energy = self.energy.value();
        let decision = self.decision.clone();

        let rate = if energy == 0.0 {
            StepRate::Skipped
        } else {
            let eta = self.scalar_rate(set, policy, round, energy)?;
            if g.is_zero() {
                StepRate::ZeroStep(eta)
            } else {
                StepRate::Step(eta)
            }
        };
        if let StepRate::Step(eta) = rate {
            self.decision = set.project(&decision.add_scaled(-eta, g))?;
        }
        self.zero_prefix &= g.is_zero();

        let record = StepRecord {
            round,
            decision,
            gradient: g.clone(),
            rate,
            next_decision: self.decision.clone(),
            energy,
            segment,
        };
        self.advance(policy);
        Ok(record)
    }

    fn scalar_rate<S: ConvexSet + ?Sized>(
        &self,
        set: &S,
        policy: &RatePolicy,
        round: u64,
        energy: f64,
    ) -> Result<f64> {
        let d = set.diameter();
        let rate = match policy {
            RatePolicy::ConstantOracle {
                path_budget,
                horizon_energy,
            } => rate_constant_oracle(d, *path_budget, *horizon_energy),
            RatePolicy::Adaptive { p_hat } => rate_adaptive(d, *p_hat, energy),
            RatePolicy::DoublingReset { budget, .. } => {
                let (_, p_seg) = doubling_schedule(round, budget);
                rate_adaptive(d, p_seg, energy)
            }
            RatePolicy::PerCoordinate { .. } => unreachable!("handled by step_per_coordinate"),
        };
        rate.map_err(|e| match e {
            Error::RateUndefined(msg) => Error::ContractViolation(format!(
                "rate undefined with nonzero gradient energy at round {round}: {msg}"
            )),
            other => other,
        })
    }

    fn advance(&mut self, policy: &RatePolicy) {
        self.round += 1;
        if let RatePolicy::DoublingReset { reset_decision, .. } = policy {
            if Segment::containing(self.round).start == self.round {
                self.energy.reset();
                if *reset_decision {
                    self.decision = self.initial.clone();
                }
            }
        }
    }

    /// Coordinate-wise adaptive step on a hyper-rectangle.
    pub fn step_per_coordinate<S: ConvexSet + ?Sized>(
        &mut self,
        set: &S,
        p_hat: &[f64],
        g: &Vector,
    ) -> Result<StepRecord> {
        let (lower, upper) = set.coordinate_bounds().ok_or_else(|| {
            Error::UnsupportedSet(
                "per-coordinate rates need a hyper-rectangle (product) feasible set".into(),
            )
        })?;
        check_dims(set.dim(), g.dim())?;
        check_dims(set.dim(), p_hat.len())?;

        self.energy.accumulate(g)?;
        let energies = self
            .energy
            .coordinate_values()
            .expect("optimizer tracks per-coordinate energy");
        let rates = rate_per_coordinate(&set.coordinate_diameters(), p_hat, &energies)?;
        let decision = self.decision.clone();

        let rate = if g.is_zero() && rates.iter().all(|r| *r == CoordinateRate::Dormant) {
            StepRate::Skipped
        } else {
            let mut next = decision.clone();
            for (i, r) in rates.iter().enumerate() {
                if let CoordinateRate::Active(eta) = r {
                    next.as_mut_slice()[i] = (decision[i] - eta * g[i]).clamp(lower[i], upper[i]);
                }
            }
            self.decision = next;
            StepRate::Coordinates(rates)
        };
        self.zero_prefix &= g.is_zero();

        let record = StepRecord {
            round: self.round,
            decision,
            gradient: g.clone(),
            rate,
            next_decision: self.decision.clone(),
            energy: self.energy.value(),
            segment: None,
        };
        self.round += 1;
        Ok(record)
    }
}

/// Records of a run together with the start-point warning, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<StepRecord>,
    pub init_warning: Option<InitWarning>,
}

impl Trace {
    pub fn decisions(&self) -> Vec<Vector> {
        self.records.iter().map(|r| r.decision.clone()).collect()
    }

    pub fn gradients(&self) -> Vec<Vector> {
        self.records.iter().map(|r| r.gradient.clone()).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("run truncated after {} rounds: {source}", partial.records.len())]
    Truncated {
        partial: Trace,
        #[source]
        source: StreamError,
    },
    #[error(transparent)]
    Failed(#[from] Error),
}

/// Plays `horizon` rounds against `stream`. The decision of round `t` is
/// fixed before `g_t` is requested.
pub fn run<S: ConvexSet + ?Sized>(
    stream: &mut dyn LossStream,
    set: &S,
    w1: Vector,
    policy: &RatePolicy,
    horizon: usize,
) -> Result<Trace, RunError> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1").into());
    }
    check_dims(set.dim(), stream.dim())?;
    let (mut state, init_warning) = OptimizerState::init(set, w1)?;
    let mut records = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let g = match stream.reveal(t, state.decision()) {
            Ok(g) => g,
            Err(source) => {
                return Err(RunError::Truncated {
                    partial: Trace {
                        records,
                        init_warning,
                    },
                    source,
                })
            }
        };
        records.push(state.step(set, policy, &g)?);
    }
    Ok(Trace {
        records,
        init_warning,
    })
}

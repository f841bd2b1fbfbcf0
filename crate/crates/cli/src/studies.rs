//! Monte Carlo studies: adversarial regret on Rademacher streams, and the
//! gradient-energy versus `tr(sqrt(A))` comparison on random Gram matrices.

use std::fmt::Write as _;

use rayon::prelude::*;

use dynregret::analysis::{lower_bound_sum, GramAccumulator, TraceComparison};
use dynregret::geometry::{ConvexSet, FeasibleSet, Vector};
use dynregret::optimizer::run;
use dynregret::rng::{derive_seed, CounterRng};
use dynregret::scheduler::RatePolicy;
use dynregret::streams::{best_segmented_comparator, gen_rademacher, max_segments, Segmentation};
use dynregret::Result;

use crate::experiment::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundParams {
    pub dim: usize,
    pub radius: f64,
    pub scale: f64,
    pub budget: f64,
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundStudy {
    pub regrets: Vec<f64>,
    /// `G_T = L sqrt(T)`, identical for every repetition.
    pub energy: f64,
    pub mean: f64,
    /// `D sqrt(floor(P/D) + 1) G_T / (2 sqrt 2)`.
    pub lower_bound: f64,
}

/// Adaptive policy tuned with `P_hat = P` against fair Rademacher signs,
/// measured against the best comparator with `floor(P/D) + 1` equal pieces.
pub fn lower_bound_study(params: &LowerBoundParams) -> Result<LowerBoundStudy> {
    let set = FeasibleSet::unit_ball(params.dim, params.radius)?;
    let d = set.diameter();
    let policy = RatePolicy::adaptive(params.budget);
    let pieces = max_segments(d, params.budget).min(params.horizon);
    let regrets = (0..params.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(params.seed, rep as u64);
            let mut stream = gen_rademacher(
                Vector::basis(params.dim, 0),
                params.scale,
                params.horizon,
                seed,
            )?;
            let trace = run(&mut stream, &set, set.center(), &policy, params.horizon)
                .map_err(|e| dynregret::Error::ContractViolation(e.to_string()))?;
            let grads = trace.gradients();
            let comp = best_segmented_comparator(&grads, &set, params.budget, Segmentation::Equal(pieces))?
                .expand(&set)?;
            Ok(trace
                .records
                .iter()
                .zip(comp.points())
                .map(|(r, star)| r.gradient.dot(&r.decision.sub(star)))
                .sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    let energy = params.scale * (params.horizon as f64).sqrt();
    let mean = regrets.iter().sum::<f64>() / regrets.len() as f64;
    Ok(LowerBoundStudy {
        lower_bound: lower_bound_sum(d, params.budget, energy),
        regrets,
        energy,
        mean,
    })
}

impl LowerBoundStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rep,regret,G_T,lower_bound_sum\n");
        for (i, r) in self.regrets.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{}",
                fmt_f64(*r),
                fmt_f64(self.energy),
                fmt_f64(self.lower_bound)
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramFamily {
    /// Independent Gaussian gradients with a random overall scale.
    Random,
    /// Multiples of one random direction.
    RankOne,
    /// Each basis direction `k` times with the same length, so `A = c I`.
    Isotropic,
}

impl GramFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::RankOne => "rank_one",
            Self::Isotropic => "isotropic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramInstance {
    pub family: GramFamily,
    pub dim: usize,
    pub rounds: usize,
    pub comparison: TraceComparison,
}

pub const GRAM_DIMS: [usize; 4] = [2, 4, 8, 16];

/// Instance `index` of a family: the dimension cycles through [`GRAM_DIMS`]
/// and the number of rounds is drawn from `1..=100`.
pub fn gram_instance(family: GramFamily, index: usize, seed: u64) -> Result<GramInstance> {
    let rng = CounterRng::new(derive_seed(seed, index as u64));
    let dim = GRAM_DIMS[index % GRAM_DIMS.len()];
    let mut rounds = 1 + (rng.word(0) % 100) as usize;
    let scale = 10f64.powf(4.0 * rng.uniform(1) - 2.0);
    let normal = rng.lane(1);
    let mut acc = GramAccumulator::new(dim);
    match family {
        GramFamily::Random => {
            for t in 0..rounds {
                let g: Vec<f64> = (0..dim).map(|i| scale * normal.normal((t * dim + i) as u64)).collect();
                acc.add(&Vector::new(g)?)?;
            }
        }
        GramFamily::RankOne => {
            let u: Vec<f64> = (0..dim).map(|i| normal.normal(i as u64)).collect();
            let coef = rng.lane(2);
            for t in 0..rounds {
                let c = scale * coef.normal(t as u64);
                acc.add(&Vector::new(u.iter().map(|x| c * x).collect())?)?;
            }
        }
        GramFamily::Isotropic => {
            let k = rounds.div_ceil(dim);
            rounds = k * dim;
            for t in 0..rounds {
                let sign = rng.lane(3).sign(t as u64);
                acc.add(&Vector::basis(dim, t % dim).scale(sign * scale))?;
            }
        }
    }
    Ok(GramInstance {
        family,
        dim,
        rounds,
        comparison: acc.trace_inequality()?,
    })
}

pub fn trace_inequality_study(family: GramFamily, count: usize, seed: u64) -> Result<Vec<GramInstance>> {
    (0..count)
        .into_par_iter()
        .map(|i| gram_instance(family, i, seed))
        .collect()
}

pub fn gram_csv(instances: &[GramInstance]) -> String {
    let mut out = String::from("instance,family,N,T,lhs,rhs,ratio\n");
    for (i, g) in instances.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{}",
            g.family.name(),
            g.dim,
            g.rounds,
            fmt_f64(g.comparison.lhs),
            fmt_f64(g.comparison.rhs),
            fmt_f64(g.comparison.ratio)
        );
    }
    out
}

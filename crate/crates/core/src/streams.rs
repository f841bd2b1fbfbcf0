//! Loss streams, comparator constructors and brute-force comparator search.
//!
//! A stream reveals exactly one sub-gradient per round, at the decision the
//! learner committed to for that round. Streams that know their loss
//! functions also evaluate `f_t` at arbitrary points so realized regret can
//! be measured against a comparator.

use crate::error::{Error, Result, StreamError};
use crate::geometry::{check_dims, path_variation, ComparatorPath, ConvexSet, FeasibleSet, Vector};
use crate::rng::CounterRng;
use crate::scheduler::PathBudget;

/// Source of losses `f_t` and sub-gradients `g_t`. Rounds are 1-based.
pub trait LossStream {
    fn dim(&self) -> usize;

    fn horizon(&self) -> usize;

    /// Sub-gradient of `f_t` at `decision`. Each round is revealed once, in order.
    fn reveal(&mut self, round: usize, decision: &Vector) -> Result<Vector, StreamError>;

    /// `f_t(point)`, or `None` for gradient-only streams.
    fn loss(&self, round: usize, point: &Vector) -> Option<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamKind {
    /// `f_t(w) = g_t^T w` for a fixed list of `g_t`.
    LinearFixed { gradients: Vec<Vector> },
    /// `f_t(w) = sigma_t L u^T w` with fair signs drawn from the counter RNG.
    LinearRademacher {
        direction: Vector,
        scale: f64,
        seed: u64,
        horizon: usize,
    },
    /// `f_t(w) = |w^T x_t - d_t|`.
    AbsoluteRegression { features: Vec<Vector>, targets: Vec<f64> },
    /// `zeros` rounds of `f_t = 0`, then the inner stream.
    ZeroPrefix { zeros: usize, inner: Box<StreamKind> },
}

impl StreamKind {
    pub fn dim(&self) -> usize {
        match self {
            Self::LinearFixed { gradients } => gradients[0].dim(),
            Self::LinearRademacher { direction, .. } => direction.dim(),
            Self::AbsoluteRegression { features, .. } => features[0].dim(),
            Self::ZeroPrefix { inner, .. } => inner.dim(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Self::LinearFixed { gradients } => gradients.len(),
            Self::LinearRademacher { horizon, .. } => *horizon,
            Self::AbsoluteRegression { targets, .. } => targets.len(),
            Self::ZeroPrefix { zeros, inner } => zeros + inner.horizon(),
        }
    }

    /// Sub-gradient of `f_t` at `point`; `round` must be within the horizon.
    pub fn gradient_at(&self, round: usize, point: &Vector) -> Vector {
        debug_assert!((1..=self.horizon()).contains(&round));
        match self {
            Self::LinearFixed { gradients } => gradients[round - 1].clone(),
            Self::LinearRademacher {
                direction,
                scale,
                seed,
                ..
            } => direction.scale(rademacher_sign(*seed, round) * scale),
            Self::AbsoluteRegression { features, targets } => {
                let x = &features[round - 1];
                let residual = point.dot(x) - targets[round - 1];
                if residual > 0.0 {
                    x.clone()
                } else if residual < 0.0 {
                    x.scale(-1.0)
                } else {
                    // 0 is a sub-gradient at the kink
                    Vector::zeros(x.dim())
                }
            }
            Self::ZeroPrefix { zeros, inner } => {
                if round <= *zeros {
                    Vector::zeros(inner.dim())
                } else {
                    inner.gradient_at(round - zeros, point)
                }
            }
        }
    }

    pub fn loss_at(&self, round: usize, point: &Vector) -> f64 {
        match self {
            Self::LinearFixed { .. } | Self::LinearRademacher { .. } => {
                self.gradient_at(round, point).dot(point)
            }
            Self::AbsoluteRegression { features, targets } => {
                (point.dot(&features[round - 1]) - targets[round - 1]).abs()
            }
            Self::ZeroPrefix { zeros, inner } => {
                if round <= *zeros {
                    0.0
                } else {
                    inner.loss_at(round - zeros, point)
                }
            }
        }
    }

    /// Rademacher signs of the stream, with 0 for prefix rounds.
    pub fn signs(&self) -> Option<Vec<f64>> {
        match self {
            Self::LinearRademacher { seed, horizon, .. } => {
                Some((1..=*horizon).map(|t| rademacher_sign(*seed, t)).collect())
            }
            Self::ZeroPrefix { zeros, inner } => inner.signs().map(|s| {
                let mut out = vec![0.0; *zeros];
                out.extend(s);
                out
            }),
            _ => None,
        }
    }
}

/// Sign `sigma_t` of a Rademacher stream: lane 0 of the counter RNG at `t - 1`.
pub fn rademacher_sign(seed: u64, round: usize) -> f64 {
    CounterRng::new(seed).sign(round as u64 - 1)
}

/// A [`StreamKind`] plus the cursor enforcing one query per round.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    kind: StreamKind,
    next_round: usize,
}

impl Stream {
    pub fn new(kind: StreamKind) -> Self {
        Self {
            kind,
            next_round: 1,
        }
    }

    pub fn kind(&self) -> &StreamKind {
        &self.kind
    }

    /// A fresh copy positioned at round 1.
    pub fn rewound(&self) -> Self {
        Self::new(self.kind.clone())
    }
}

impl LossStream for Stream {
    fn dim(&self) -> usize {
        self.kind.dim()
    }

    fn horizon(&self) -> usize {
        self.kind.horizon()
    }

    fn reveal(&mut self, round: usize, decision: &Vector) -> Result<Vector, StreamError> {
        if round != self.next_round {
            return Err(StreamError::OutOfOrder {
                round,
                expected: self.next_round,
            });
        }
        let horizon = self.kind.horizon();
        if round > horizon {
            return Err(StreamError::Exhausted { round, horizon });
        }
        if decision.dim() != self.kind.dim() {
            return Err(StreamError::DimensionMismatch {
                expected: self.kind.dim(),
                got: decision.dim(),
            });
        }
        self.next_round += 1;
        Ok(self.kind.gradient_at(round, decision))
    }

    fn loss(&self, round: usize, point: &Vector) -> Option<f64> {
        (1..=self.kind.horizon())
            .contains(&round)
            .then(|| self.kind.loss_at(round, point))
    }
}

pub fn linear_fixed(gradients: Vec<Vector>) -> Result<Stream> {
    let first = gradients
        .first()
        .ok_or_else(|| Error::invalid("linear stream needs at least one gradient"))?;
    for g in &gradients {
        check_dims(first.dim(), g.dim())?;
    }
    Ok(Stream::new(StreamKind::LinearFixed { gradients }))
}

/// `g_t = sigma_t L u` with i.i.d. fair signs; `G_T^2 = T L^2`.
pub fn gen_rademacher(direction: Vector, scale: f64, horizon: usize, seed: u64) -> Result<Stream> {
    if (direction.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "Rademacher direction must be a unit vector (norm {})",
            direction.norm()
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("gradient scale must be positive, got {scale}")));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    Ok(Stream::new(StreamKind::LinearRademacher {
        direction,
        scale,
        seed,
        horizon,
    }))
}

/// Prepends `zeros` rounds with zero loss.
pub fn zero_prefix(zeros: usize, inner: Stream) -> Stream {
    Stream::new(StreamKind::ZeroPrefix {
        zeros,
        inner: Box::new(inner.kind),
    })
}

/// Absolute-error regression against a drifting ground truth.
///
/// Features are standard normal (lane 1), drift directions are normalized
/// standard normals (lane 2), target noise is `noise` times a standard normal
/// (lane 3) and the start point is drawn from lane 4. The ground truth moves
/// by at most `drift_rate` per round and is projected back onto the set; it
/// is returned as a comparator whose budget is its measured variation.
pub fn gen_regression(
    set: &FeasibleSet,
    horizon: usize,
    drift_rate: f64,
    noise: f64,
    seed: u64,
) -> Result<(Stream, ComparatorPath)> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if !(drift_rate.is_finite() && drift_rate >= 0.0) {
        return Err(Error::invalid(format!("drift rate must be nonnegative, got {drift_rate}")));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::invalid(format!("noise must be nonnegative, got {noise}")));
    }
    let n = set.dim();
    let rng = CounterRng::new(seed);
    let draw = |lane: u32, t: usize| -> Vector {
        let r = rng.lane(lane);
        Vector::from_raw((0..n).map(|i| r.normal((t * n + i) as u64)).collect())
    };

    let start = draw(4, 0);
    let offset = set.diameter() / 4.0 / start.norm().max(1.0);
    let mut truth = Vec::with_capacity(horizon);
    truth.push(set.project(&set.center().add_scaled(offset, &start))?);
    for t in 1..horizon {
        let dir = draw(2, t);
        let len = dir.norm();
        let prev = &truth[t - 1];
        let next = if drift_rate == 0.0 || len == 0.0 {
            prev.clone()
        } else {
            set.project(&prev.add_scaled(drift_rate / len, &dir))?
        };
        truth.push(next);
    }

    let noise_rng = rng.lane(3);
    let mut features = Vec::with_capacity(horizon);
    let mut targets = Vec::with_capacity(horizon);
    for (t, w) in truth.iter().enumerate() {
        let x = draw(1, t);
        targets.push(w.dot(&x) + noise * noise_rng.normal(t as u64));
        features.push(x);
    }
    let comparator = ComparatorPath::tight(set, truth)?;
    Ok((
        Stream::new(StreamKind::AbsoluteRegression { features, targets }),
        comparator,
    ))
}

/// Minimizer of `s^T w` over the set.
pub fn linear_minimizer(set: &FeasibleSet, s: &Vector) -> Result<Vector> {
    check_dims(set.dim(), s.dim())?;
    match set {
        FeasibleSet::Ball { center, radius } => {
            let norm = s.norm();
            if norm == 0.0 {
                return Ok(center.clone());
            }
            set.project(&center.add_scaled(-radius / norm, s))
        }
        FeasibleSet::Box { lower, upper } => Ok(Vector::from_raw(
            (0..s.dim())
                .map(|i| {
                    if s[i] > 0.0 {
                        lower[i]
                    } else if s[i] < 0.0 {
                        upper[i]
                    } else {
                        0.5 * (lower[i] + upper[i])
                    }
                })
                .collect(),
        )),
    }
}

/// How to cut the horizon into stationary pieces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segmentation {
    /// `count` pieces of (nearly) equal length.
    Equal(usize),
    /// Explicit right ends `t_1 < ... < t_M = T`.
    Boundaries(Vec<usize>),
}

/// Piecewise-constant comparator: `w_t* = points[k]` for `t_{k-1} < t <= t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedComparator {
    pub boundaries: Vec<usize>,
    pub points: Vec<Vector>,
    pub budget: f64,
}

impl SegmentedComparator {
    pub fn horizon(&self) -> usize {
        *self.boundaries.last().expect("at least one segment")
    }

    pub fn expand(&self, set: &FeasibleSet) -> Result<ComparatorPath> {
        let mut path = Vec::with_capacity(self.horizon());
        let mut start = 0;
        for (end, p) in self.boundaries.iter().zip(&self.points) {
            path.extend(std::iter::repeat_n(p.clone(), end - start));
            start = *end;
        }
        ComparatorPath::new(set, path, self.budget)
    }
}

/// Largest number of stationary pieces a budget `P` affords: `floor(P/D) + 1`.
pub fn max_segments(diameter: f64, budget: f64) -> usize {
    ((budget / diameter) * (1.0 + 1e-12)).floor() as usize + 1
}

fn equal_boundaries(horizon: usize, count: usize) -> Vec<usize> {
    (1..=count).map(|k| k * horizon / count).collect()
}

/// Best piecewise-constant comparator for linearized losses `g_t^T w`.
///
/// Each piece sits at the minimizer of the summed gradient over the set, so
/// consecutive pieces are at most `D` apart and `M <= floor(P/D) + 1` pieces
/// stay within the budget.
pub fn best_segmented_comparator(
    gradients: &[Vector],
    set: &FeasibleSet,
    budget: f64,
    segmentation: Segmentation,
) -> Result<SegmentedComparator> {
    let horizon = gradients.len();
    if horizon == 0 {
        return Err(Error::invalid("need at least one gradient"));
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::invalid(format!("path budget must be nonnegative, got {budget}")));
    }
    let boundaries = match segmentation {
        Segmentation::Equal(m) => {
            if m == 0 || m > horizon {
                return Err(Error::Infeasible(format!(
                    "cannot split {horizon} rounds into {m} segments"
                )));
            }
            equal_boundaries(horizon, m)
        }
        Segmentation::Boundaries(b) => {
            let increasing = b.windows(2).all(|w| w[0] < w[1]);
            if b.is_empty() || b[0] == 0 || !increasing || *b.last().unwrap() != horizon {
                return Err(Error::invalid(
                    "segment boundaries must increase strictly and end at T",
                ));
            }
            b
        }
    };
    let d = set.diameter();
    let allowed = max_segments(d, budget);
    if boundaries.len() > allowed {
        return Err(Error::Infeasible(format!(
            "{} segments need budget {} but only {budget} is available",
            boundaries.len(),
            (boundaries.len() - 1) as f64 * d
        )));
    }
    let budget = budget.min(d * (horizon - 1) as f64);
    let mut points = Vec::with_capacity(boundaries.len());
    let mut start = 0;
    for &end in &boundaries {
        let mut sum = Vector::zeros(set.dim());
        for g in &gradients[start..end] {
            check_dims(set.dim(), g.dim())?;
            sum = sum.add_scaled(1.0, g);
        }
        points.push(linear_minimizer(set, &sum)?);
        start = end;
    }
    Ok(SegmentedComparator {
        boundaries,
        points,
        budget,
    })
}

/// Per-coordinate analogue of [`best_segmented_comparator`] on a box: each
/// coordinate `i` gets `floor(P_i / D_i) + 1` equal pieces, so its own path
/// variation stays within `P_i`.
pub fn best_segmented_per_coordinate(
    gradients: &[Vector],
    set: &FeasibleSet,
    budgets: &[f64],
) -> Result<ComparatorPath> {
    let FeasibleSet::Box { lower, upper } = set else {
        return Err(Error::UnsupportedSet("per-coordinate comparators need a box".into()));
    };
    let horizon = gradients.len();
    if horizon == 0 {
        return Err(Error::invalid("need at least one gradient"));
    }
    check_dims(set.dim(), budgets.len())?;
    let mut path = vec![lower.clone(); horizon];
    for i in 0..set.dim() {
        let width = upper[i] - lower[i];
        if width == 0.0 {
            continue;
        }
        let pieces = max_segments(width, budgets[i]).min(horizon);
        let mut start = 0;
        for end in equal_boundaries(horizon, pieces) {
            let s: f64 = gradients[start..end].iter().map(|g| g[i]).sum();
            let x = if s > 0.0 {
                lower[i]
            } else if s < 0.0 {
                upper[i]
            } else {
                0.5 * (lower[i] + upper[i])
            };
            for w in &mut path[start..end] {
                w.as_mut_slice()[i] = x;
            }
            start = end;
        }
    }
    ComparatorPath::tight(set, path)
}

/// Best response comparator whose cumulative variation respects a growing
/// budget at every prefix: the `j`-th switch happens at the first round `t`
/// with `P(t) >= j D`.
pub fn prefix_budgeted_comparator(
    gradients: &[Vector],
    set: &FeasibleSet,
    budget: &PathBudget,
) -> Result<ComparatorPath> {
    let horizon = gradients.len();
    if horizon == 0 {
        return Err(Error::invalid("need at least one gradient"));
    }
    let d = set.diameter();
    let mut boundaries = Vec::new();
    let mut switches = 0usize;
    for t in 2..=horizon {
        if budget.eval(t as u64) >= (switches + 1) as f64 * d {
            boundaries.push(t - 1);
            switches += 1;
        }
    }
    boundaries.push(horizon);
    let seg = best_segmented_comparator(
        gradients,
        set,
        budget.eval(horizon as u64),
        Segmentation::Boundaries(boundaries),
    )?;
    seg.expand(set)
}

/// Limits of [`brute_force_comparator`].
pub const BRUTE_FORCE_MAX_DIM: usize = 2;
pub const BRUTE_FORCE_MAX_ROUNDS: usize = 8;
pub const BRUTE_FORCE_MAX_RESOLUTION: usize = 21;

/// Grid points of the set: `resolution` points per axis over the bounding
/// box, keeping those inside the set.
pub fn comparator_grid(set: &FeasibleSet, resolution: usize) -> Result<Vec<Vector>> {
    if resolution < 2 {
        return Err(Error::invalid("grid resolution must be at least 2"));
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = match set {
        FeasibleSet::Ball { center, radius } => (
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        ),
        FeasibleSet::Box { lower, upper } => (lower.to_vec(), upper.to_vec()),
    };
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(&hi)
        .map(|(&l, &h)| {
            if l == h {
                vec![l]
            } else {
                let mut axis: Vec<f64> = (0..resolution)
                    .map(|k| l + (h - l) * k as f64 / (resolution - 1) as f64)
                    .collect();
                axis[resolution - 1] = h;
                axis
            }
        })
        .collect();
    let mut points = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    Ok(points
        .into_iter()
        .map(Vector::from_raw)
        .filter(|p| set.contains(p, 1e-12 * set.diameter()))
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Label {
    used: f64,
    cost: f64,
    prev_point: u32,
    prev_label: u32,
}

/// Exact minimizer of `sum_t g_t^T w_t*` over grid-valued paths with
/// variation at most `P` (compared with a `1e-9 D` floating slack).
///
/// Maximizing the linearized regret `sum_t g_t^T (w_t - w_t*)` is the same
/// problem. The search is a dynamic program over grid points whose labels
/// are Pareto frontiers of (variation used, cost), so no feasible path is
/// discarded unless another dominates it or provably cannot beat a known
/// feasible path. The pruning bounds come from the relaxation that charges
/// `lambda` per unit of movement instead of capping it.
pub fn brute_force_comparator(
    gradients: &[Vector],
    set: &FeasibleSet,
    budget: f64,
    resolution: usize,
) -> Result<ComparatorPath> {
    let horizon = gradients.len();
    if set.dim() > BRUTE_FORCE_MAX_DIM
        || horizon > BRUTE_FORCE_MAX_ROUNDS
        || resolution > BRUTE_FORCE_MAX_RESOLUTION
    {
        return Err(Error::SizeLimit(format!(
            "brute force supports N <= {BRUTE_FORCE_MAX_DIM}, T <= {BRUTE_FORCE_MAX_ROUNDS}, \
             resolution <= {BRUTE_FORCE_MAX_RESOLUTION}; got N = {}, T = {horizon}, \
             resolution = {resolution}",
            set.dim()
        )));
    }
    if horizon == 0 {
        return Err(Error::invalid("need at least one gradient"));
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::invalid(format!("path budget must be nonnegative, got {budget}")));
    }
    for g in gradients {
        check_dims(set.dim(), g.dim())?;
    }
    let grid = comparator_grid(set, resolution)?;
    let search = GridSearch::new(gradients, &grid, budget + 1e-9 * set.diameter());
    let indices = search.solve();
    let path: Vec<Vector> = indices.iter().map(|&i| grid[i].clone()).collect();
    let variation = path_variation(&path)?;
    let cap = set.diameter() * (horizon - 1) as f64;
    ComparatorPath::new(set, path, budget.max(variation).min(cap))
}

struct GridSearch {
    n: usize,
    horizon: usize,
    /// `cost[t * n + q] = g_t^T q`.
    cost: Vec<f64>,
    dist: Vec<f64>,
    limit: f64,
    max_hop: f64,
}

/// Outcome of the movement-penalized relaxation for one `lambda`.
struct Relaxed {
    path: Vec<usize>,
    cost: f64,
    variation: f64,
}

impl GridSearch {
    fn new(gradients: &[Vector], grid: &[Vector], limit: f64) -> Self {
        let n = grid.len();
        let dist: Vec<f64> = (0..n * n)
            .map(|k| grid[k / n].distance(&grid[k % n]))
            .collect();
        let cost = gradients
            .iter()
            .flat_map(|g| grid.iter().map(move |q| g.dot(q)))
            .collect();
        Self {
            n,
            horizon: gradients.len(),
            cost,
            max_hop: dist.iter().fold(0.0f64, |m, &d| m.max(d)),
            dist,
            limit,
        }
    }

    fn c(&self, t: usize, q: usize) -> f64 {
        self.cost[t * self.n + q]
    }

    fn path_stats(&self, path: &[usize]) -> (f64, f64) {
        let cost = path.iter().enumerate().map(|(t, &q)| self.c(t, q)).sum();
        let variation = path.windows(2).map(|w| self.dist[w[0] * self.n + w[1]]).sum();
        (cost, variation)
    }

    /// Minimizes `sum_t g_t^T w_t + lambda * variation` exactly.
    fn relaxed(&self, lambda: f64) -> Relaxed {
        let n = self.n;
        let mut value: Vec<f64> = (0..n).map(|q| self.c(0, q)).collect();
        let mut back = vec![0usize; self.horizon * n];
        for t in 1..self.horizon {
            let next: Vec<f64> = (0..n)
                .map(|q| {
                    let (best_p, best) = (0..n)
                        .map(|p| (p, value[p] + lambda * self.dist[p * n + q]))
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .expect("grid is nonempty");
                    back[t * n + q] = best_p;
                    best + self.c(t, q)
                })
                .collect();
            value = next;
        }
        let mut q = (0..n).min_by(|&a, &b| value[a].total_cmp(&value[b])).expect("grid is nonempty");
        let mut path = vec![0; self.horizon];
        for t in (0..self.horizon).rev() {
            path[t] = q;
            q = back[t * n + q];
        }
        let (cost, variation) = self.path_stats(&path);
        Relaxed {
            path,
            cost,
            variation,
        }
    }

    /// `h[t * n + q]`: least penalized cost of rounds after `t` starting from `q`.
    fn cost_to_go(&self, lambda: f64) -> Vec<f64> {
        let n = self.n;
        let mut h = vec![0.0; self.horizon * n];
        for t in (0..self.horizon - 1).rev() {
            for q in 0..n {
                h[t * n + q] = (0..n)
                    .map(|p| self.c(t + 1, p) + lambda * self.dist[q * n + p] + h[(t + 1) * n + p])
                    .fold(f64::INFINITY, f64::min);
            }
        }
        h
    }

    fn solve(&self) -> Vec<usize> {
        let free = self.relaxed(0.0);
        if free.variation <= self.limit {
            return free.path;
        }
        // a static path is always feasible; moving stops paying off once
        // lambda exceeds the largest possible per-unit gain
        let spread: f64 = (0..self.horizon)
            .map(|t| {
                let (lo, hi) = (0..self.n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
                    (lo.min(self.c(t, q)), hi.max(self.c(t, q)))
                });
                hi - lo
            })
            .sum();
        let min_hop = self
            .dist
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min);
        let mut hi = spread / min_hop + 1.0;
        let mut best = self.relaxed(hi);
        let mut lo = 0.0;
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let r = self.relaxed(mid);
            if r.variation <= self.limit {
                hi = mid;
                if r.cost < best.cost {
                    best = r;
                }
            } else {
                lo = mid;
            }
        }
        self.exact(hi, best)
    }

    /// Label-setting search, pruned by the relaxation at `lambda` and the
    /// feasible `incumbent`.
    fn exact(&self, lambda: f64, incumbent: Relaxed) -> Vec<usize> {
        let n = self.n;
        let h = self.cost_to_go(lambda);
        let scale = self.cost.iter().fold(0.0f64, |m, c| m.max(c.abs())) * self.horizon as f64;
        let cutoff = incumbent.cost + 1e-9 * (1.0 + scale);
        let prunable = |t: usize, q: usize, l: &Label| {
            l.cost + h[t * n + q] - lambda * (self.limit - l.used) > cutoff
        };

        let mut layers: Vec<Vec<Vec<Label>>> = Vec::with_capacity(self.horizon);
        layers.push(
            (0..n)
                .map(|q| {
                    let l = Label {
                        used: 0.0,
                        cost: self.c(0, q),
                        prev_point: u32::MAX,
                        prev_label: u32::MAX,
                    };
                    if prunable(0, q, &l) {
                        Vec::new()
                    } else {
                        vec![l]
                    }
                })
                .collect(),
        );
        let mut candidates = Vec::new();
        for t in 1..self.horizon {
            // labels that can still afford any remaining movement are interchangeable
            let slack_free = self.limit - (self.horizon - 1 - t) as f64 * self.max_hop;
            let prev = layers.last().expect("first layer pushed");
            let layer: Vec<Vec<Label>> = (0..n)
                .map(|q| {
                    let step_cost = self.c(t, q);
                    candidates.clear();
                    for (p, labels) in prev.iter().enumerate() {
                        let hop = self.dist[p * n + q];
                        for (li, l) in labels.iter().enumerate() {
                            let used = l.used + hop;
                            if used > self.limit {
                                // labels are sorted by used
                                break;
                            }
                            let cand = Label {
                                used,
                                cost: l.cost + step_cost,
                                prev_point: p as u32,
                                prev_label: li as u32,
                            };
                            if !prunable(t, q, &cand) {
                                candidates.push(cand);
                            }
                        }
                    }
                    pareto_front(&mut candidates, slack_free)
                })
                .collect();
            layers.push(layer);
        }

        let last = layers.last().expect("at least one layer");
        let Some((mut point, mut label)) = (0..n)
            .flat_map(|q| (0..last[q].len()).map(move |l| (q, l)))
            .min_by(|a, b| last[a.0][a.1].cost.total_cmp(&last[b.0][b.1].cost))
        else {
            return incumbent.path;
        };
        if last[point][label].cost >= incumbent.cost {
            return incumbent.path;
        }
        let mut path = vec![0; self.horizon];
        for t in (0..self.horizon).rev() {
            path[t] = point;
            let l = layers[t][point][label];
            point = l.prev_point as usize;
            label = l.prev_label as usize;
        }
        path
    }
}

/// Pareto front of (used, cost), sorted by `used`. Labels with
/// `used <= slack_free` compete on cost alone.
fn pareto_front(candidates: &mut [Label], slack_free: f64) -> Vec<Label> {
    candidates.sort_by(|a, b| a.used.total_cmp(&b.used).then(a.cost.total_cmp(&b.cost)));
    let mut front: Vec<Label> = Vec::new();
    for c in candidates.iter() {
        match front.last_mut() {
            Some(best) if c.used <= slack_free && best.used <= slack_free => {
                if c.cost < best.cost {
                    *best = *c;
                }
            }
            Some(best) if c.cost >= best.cost => {}
            _ => front.push(*c),
        }
    }
    front
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn rademacher_energy_and_determinism() {
        let s = gen_rademacher(v(&[1.0, 0.0]), 1.0, 4, 9).unwrap();
        let signs = s.kind().signs().unwrap();
        assert_eq!(signs.len(), 4);
        let energy: f64 = signs.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_eq!(energy, 2.0);
        let again = gen_rademacher(v(&[1.0, 0.0]), 1.0, 4, 9).unwrap();
        assert_eq!(again.kind().signs(), Some(signs));
        assert!(gen_rademacher(v(&[1.0, 1.0]), 1.0, 4, 9).is_err());
        assert!(gen_rademacher(v(&[1.0]), 0.0, 4, 9).is_err());
    }

    #[test]
    fn rademacher_signs_are_fair() {
        let s = gen_rademacher(v(&[1.0]), 1.0, 100_000, 2024).unwrap();
        let signs = s.kind().signs().unwrap();
        let mean = signs.iter().sum::<f64>() / signs.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn stream_rejects_repeated_and_skipped_rounds() {
        let mut s = linear_fixed(vec![v(&[1.0]), v(&[2.0])]).unwrap();
        let w = v(&[0.0]);
        assert!(s.reveal(1, &w).is_ok());
        assert_eq!(
            s.reveal(1, &w),
            Err(StreamError::OutOfOrder { round: 1, expected: 2 })
        );
        assert!(matches!(s.reveal(3, &w), Err(StreamError::OutOfOrder { .. })));
        assert!(matches!(s.reveal(2, &v(&[0.0, 1.0])), Err(StreamError::DimensionMismatch { .. })));
        assert_eq!(s.reveal(2, &w).unwrap(), v(&[2.0]));
        assert!(matches!(s.reveal(3, &w), Err(StreamError::Exhausted { .. })));
        assert_eq!(s.loss(2, &v(&[3.0])), Some(6.0));
        assert_eq!(s.loss(3, &v(&[3.0])), None);
    }

    #[test]
    fn zero_prefix_wrapper() {
        let inner = linear_fixed(vec![v(&[1.0]), v(&[-1.0])]).unwrap();
        let mut s = zero_prefix(3, inner);
        assert_eq!(s.horizon(), 5);
        let w = v(&[0.5]);
        for t in 1..=3 {
            assert!(s.reveal(t, &w).unwrap().is_zero());
            assert_eq!(s.loss(t, &w), Some(0.0));
        }
        assert_eq!(s.reveal(4, &w).unwrap(), v(&[1.0]));
        assert_eq!(s.loss(5, &w), Some(-0.5));
    }

    #[test]
    fn regression_stream() {
        let set = FeasibleSet::unit_ball(3, 1.0).unwrap();
        let (s, comp) = gen_regression(&set, 50, 0.0, 0.0, 5).unwrap();
        assert_eq!(comp.variation(), 0.0);
        assert_eq!(comp.budget(), 0.0);
        // the ground truth has zero loss and sits at the kink
        let w = comp.points()[0].clone();
        for t in 1..=50 {
            assert!(s.loss(t, &w).unwrap() < 1e-12);
        }
        let StreamKind::AbsoluteRegression { features, .. } = s.kind() else {
            panic!("expected a regression stream")
        };
        let x0 = &features[0];
        assert_eq!(s.kind().gradient_at(1, &w.add_scaled(1.0, x0)), x0.clone());
        assert_eq!(s.kind().gradient_at(1, &w.add_scaled(-1.0, x0)), x0.scale(-1.0));

        let kink = StreamKind::AbsoluteRegression {
            features: vec![v(&[1.0, 0.0, 0.0])],
            targets: vec![0.5],
        };
        assert!(kink.gradient_at(1, &v(&[0.5, 0.3, 0.0])).is_zero());

        let (_, drifting) = gen_regression(&set, 200, 0.05, 0.1, 6).unwrap();
        assert!(drifting.variation() > 0.0);
        assert!(drifting.variation() <= 0.05 * 199.0 + 1e-12);
    }

    #[test]
    fn linear_minimizer_examples() {
        let line = FeasibleSet::hyper_box(v(&[-1.0]), v(&[1.0])).unwrap();
        let seg = best_segmented_comparator(&[v(&[1.0]), v(&[2.0])], &line, 0.0, Segmentation::Equal(1))
            .unwrap();
        assert_eq!(seg.points, vec![v(&[-1.0])]);
        let ball = FeasibleSet::unit_ball(2, 1.0).unwrap();
        let w = linear_minimizer(&ball, &v(&[3.0, 4.0])).unwrap();
        assert!((w[0] + 0.6).abs() < 1e-15 && (w[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn segmented_budget_checks() {
        let line = FeasibleSet::hyper_box(v(&[-1.0]), v(&[1.0])).unwrap();
        let gs = vec![v(&[1.0]), v(&[-1.0]), v(&[1.0]), v(&[-1.0])];
        assert!(matches!(
            best_segmented_comparator(&gs, &line, 1.9, Segmentation::Equal(2)),
            Err(Error::Infeasible(_))
        ));
        let seg = best_segmented_comparator(&gs, &line, 2.0, Segmentation::Equal(2)).unwrap();
        assert_eq!(seg.boundaries, vec![2, 4]);
        let path = seg.expand(&line).unwrap();
        assert_eq!(path.len(), 4);
        assert!(best_segmented_comparator(&gs, &line, 6.0, Segmentation::Boundaries(vec![1, 3])).is_err());
    }

    /// 41-point grid search per segment.
    #[test]
    fn segmented_matches_grid_search() {
        let line = FeasibleSet::hyper_box(v(&[-1.0]), v(&[1.0])).unwrap();
        let gs = vec![v(&[0.3]), v(&[0.5]), v(&[-2.0]), v(&[0.4])];
        let seg = best_segmented_comparator(&gs, &line, 2.0, Segmentation::Equal(2)).unwrap();
        for (k, (lo, hi)) in [(0usize, 2usize), (2, 4)].into_iter().enumerate() {
            let s: f64 = gs[lo..hi].iter().map(|g| g[0]).sum();
            let best = (0..41)
                .map(|i| -1.0 + 2.0 * i as f64 / 40.0)
                .min_by(|a, b| (s * a).total_cmp(&(s * b)))
                .unwrap();
            assert_eq!(seg.points[k][0], best);
        }
    }

    #[test]
    fn per_coordinate_comparator_respects_budgets() {
        let set = FeasibleSet::hyper_box(v(&[-5.0, -0.05]), v(&[5.0, 0.05])).unwrap();
        let gs: Vec<Vector> = (0..40)
            .map(|t| v(&[((t * 7) % 5) as f64 - 2.0, ((t * 3) % 4) as f64 - 1.5]))
            .collect();
        let budgets = [10.0, 0.25];
        let path = best_segmented_per_coordinate(&gs, &set, &budgets).unwrap();
        let per = crate::geometry::coordinate_path_variation(path.points()).unwrap();
        assert!(per[0] <= budgets[0] + 1e-12 && per[1] <= budgets[1] + 1e-12);
    }

    #[test]
    fn prefix_budget_comparator() {
        let set = FeasibleSet::hyper_box(v(&[-1.0]), v(&[1.0])).unwrap();
        let budget = PathBudget::new(crate::scheduler::BudgetShape::Sqrt(1.0), 2.0).unwrap();
        let gs: Vec<Vector> = (0..100).map(|t| v(&[if (t / 7) % 2 == 0 { 1.0 } else { -1.0 }])).collect();
        assert!(check_prefix_budget(&gs, &set, &budget) > 0);
    }

    fn check_prefix_budget(gs: &[Vector], set: &FeasibleSet, budget: &PathBudget) -> usize {
        let path = prefix_budgeted_comparator(gs, set, budget).unwrap();
        let mut used = 0.0;
        let mut hops = 0;
        for t in 1..path.len() {
            let hop = path.points()[t].distance(&path.points()[t - 1]);
            if hop > 0.0 {
                hops += 1;
            }
            used += hop;
            assert!(used <= budget.eval(t as u64 + 1) + 1e-12);
        }
        hops
    }

    /// Enumerates every grid path of a 1-D instance.
    fn enumerate_min_cost(gs: &[f64], grid: &[f64], budget: f64) -> f64 {
        let n = grid.len();
        let t = gs.len();
        let total = n.pow(t as u32);
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; t];
        for code in 0..total {
            let mut c = code;
            for slot in idx.iter_mut() {
                *slot = c % n;
                c /= n;
            }
            let used: f64 = idx.windows(2).map(|w| (grid[w[1]] - grid[w[0]]).abs()).sum();
            if used <= budget + 1e-9 {
                let cost: f64 = idx.iter().zip(gs).map(|(&i, g)| g * grid[i]).sum();
                best = best.min(cost);
            }
        }
        best
    }

    /// DP over (point, budget used in grid cells).
    fn discretized_dp(gs: &[f64], grid: &[f64], cells: usize) -> f64 {
        let n = grid.len();
        let mut layer = vec![vec![f64::INFINITY; cells + 1]; n];
        for p in 0..n {
            layer[p][0] = gs[0] * grid[p];
        }
        for g in &gs[1..] {
            let mut next = vec![vec![f64::INFINITY; cells + 1]; n];
            for p in 0..n {
                for used in 0..=cells {
                    let c = layer[p][used];
                    if !c.is_finite() {
                        continue;
                    }
                    for q in 0..n {
                        let u = used + p.abs_diff(q);
                        if u <= cells {
                            let nc = c + g * grid[q];
                            if nc < next[q][u] {
                                next[q][u] = nc;
                            }
                        }
                    }
                }
            }
            layer = next;
        }
        layer.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    fn path_cost(gs: &[Vector], path: &ComparatorPath) -> f64 {
        gs.iter().zip(path.points()).map(|(g, w)| g.dot(w)).sum()
    }

    #[test]
    fn brute_force_matches_enumeration_and_discrete_dp() {
        let set = FeasibleSet::hyper_box(v(&[-1.0]), v(&[1.0])).unwrap();
        let grid: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let cases: [[f64; 4]; 3] = [
            [1.0, -2.0, 0.5, -0.7],
            [0.3, 0.3, -1.0, 2.0],
            [-1.0, 1.0, -1.0, 1.0],
        ];
        for gs in cases {
            let gv: Vec<Vector> = gs.iter().map(|g| v(&[*g])).collect();
            let path = brute_force_comparator(&gv, &set, 1.0, 21).unwrap();
            assert!(path.variation() <= 1.0 + 1e-9);
            let cost = path_cost(&gv, &path);
            let enumerated = enumerate_min_cost(&gs, &grid, 1.0);
            let dp = discretized_dp(&gs, &grid, 10);
            assert!((cost - enumerated).abs() < 1e-9, "{cost} vs {enumerated}");
            assert!((cost - dp).abs() < 1e-9, "{cost} vs {dp}");
        }
    }

    /// Every grid path of a small 2-D instance.
    fn enumerate_grid_paths(gs: &[Vector], grid: &[Vector], budget: f64) -> f64 {
        let n = grid.len();
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; gs.len()];
        for code in 0..n.pow(gs.len() as u32) {
            let mut c = code;
            for slot in idx.iter_mut() {
                *slot = c % n;
                c /= n;
            }
            let used: f64 = idx.windows(2).map(|w| grid[w[0]].distance(&grid[w[1]])).sum();
            if used <= budget + 1e-9 {
                best = best.min(idx.iter().zip(gs).map(|(&i, g)| g.dot(&grid[i])).sum());
            }
        }
        best
    }

    #[test]
    fn brute_force_matches_enumeration_in_two_dimensions() {
        let rng = CounterRng::new(77);
        for case in 0..40u64 {
            let set = if case % 2 == 0 {
                FeasibleSet::unit_ball(2, 1.0).unwrap()
            } else {
                FeasibleSet::hyper_box(v(&[-1.0, -0.5]), v(&[1.0, 0.5])).unwrap()
            };
            let horizon = 2 + (case % 3) as usize;
            let gs: Vec<Vector> = (0..horizon)
                .map(|t| {
                    let k = 10 * case + 2 * t as u64;
                    v(&[rng.normal(k), rng.normal(k + 1)])
                })
                .collect();
            let budget = set.diameter() * [0.0, 0.3, 0.8, 1.7][(case / 2 % 4) as usize];
            let grid = comparator_grid(&set, 5).unwrap();
            let path = brute_force_comparator(&gs, &set, budget, 5).unwrap();
            let expect = enumerate_grid_paths(&gs, &grid, budget);
            assert!(path.variation() <= budget + 1e-9 * set.diameter());
            assert!((path_cost(&gs, &path) - expect).abs() < 1e-9, "case {case}");
        }
    }

    #[test]
    fn brute_force_special_budgets() {
        let set = FeasibleSet::hyper_box(v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
        let gs = vec![v(&[1.0, -0.5]), v(&[-0.2, 0.3]), v(&[0.4, 0.4])];
        // P = 0: best fixed grid point
        let fixed = brute_force_comparator(&gs, &set, 0.0, 5).unwrap();
        assert_eq!(fixed.variation(), 0.0);
        let grid = comparator_grid(&set, 5).unwrap();
        let sum = gs.iter().fold(Vector::zeros(2), |a, g| a.add_scaled(1.0, g));
        let best_fixed = grid.iter().map(|p| sum.dot(p)).fold(f64::INFINITY, f64::min);
        assert!((path_cost(&gs, &fixed) - best_fixed).abs() < 1e-12);
        // unconstrained: independent per-round minimizers
        let free = brute_force_comparator(&gs, &set, set.diameter() * 2.0, 5).unwrap();
        let independent: f64 = gs
            .iter()
            .map(|g| grid.iter().map(|p| g.dot(p)).fold(f64::INFINITY, f64::min))
            .sum();
        assert!((path_cost(&gs, &free) - independent).abs() < 1e-12);
    }

    #[test]
    fn brute_force_limits() {
        let set = FeasibleSet::unit_ball(3, 1.0).unwrap();
        assert!(matches!(
            brute_force_comparator(&[v(&[1.0, 0.0, 0.0])], &set, 0.0, 5),
            Err(Error::SizeLimit(_))
        ));
        let line = FeasibleSet::hyper_box(v(&[-1.0]), v(&[1.0])).unwrap();
        let gs = vec![v(&[1.0]); 9];
        assert!(matches!(brute_force_comparator(&gs, &line, 0.0, 5), Err(Error::SizeLimit(_))));
        assert!(matches!(brute_force_comparator(&gs[..2], &line, 0.0, 22), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn ball_grid_points_are_members() {
        let ball = FeasibleSet::unit_ball(2, 1.0).unwrap();
        let grid = comparator_grid(&ball, 21).unwrap();
        assert!(grid.iter().all(|p| ball.infeasibility(p).unwrap() == 0.0));
        assert!(grid.len() > 300 && grid.len() < 441);
    }

    proptest! {
        #[test]
        fn segmented_dominates_alternatives(
            gs in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 4..30),
            m in 1usize..4,
            alt in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 2), 4),
            use_ball in any::<bool>(),
        ) {
            let set = if use_ball {
                FeasibleSet::unit_ball(2, 1.0).unwrap()
            } else {
                FeasibleSet::hyper_box(v(&[-1.0, -0.5]), v(&[1.0, 0.5])).unwrap()
            };
            let gv: Vec<Vector> = gs.iter().map(|g| v(g)).collect();
            let m = m.min(gv.len());
            let p = set.diameter() * (m - 1) as f64;
            let seg = best_segmented_comparator(&gv, &set, p, Segmentation::Equal(m)).unwrap();
            let path = seg.expand(&set).unwrap();
            prop_assert!(path.variation() <= p + 1e-9 * set.diameter());
            let best = path_cost(&gv, &path);
            let alt_points: Vec<Vector> = alt.iter().take(m).map(|a| set.project(&v(a)).unwrap()).collect();
            let alt_seg = SegmentedComparator { boundaries: seg.boundaries.clone(), points: alt_points, budget: p };
            let alt_path = alt_seg.expand(&set).unwrap();
            prop_assert!(best <= path_cost(&gv, &alt_path) + 1e-12);
        }
    }
}

//! Convex feasible sets, Euclidean projection and path variation.
//!
//! Only sets with closed-form projections are shipped: the Euclidean ball and
//! the axis-aligned hyper-rectangle. Other sets can be plugged into the
//! optimizer through the [`ConvexSet`] trait.

use std::fmt;
use std::ops::{Deref, Index};

use crate::error::{Error, Result};

/// A finite real vector.
#[derive(Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("vector must have dimension at least 1"));
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "vector entry {i} is not finite ({})",
                entries[i]
            )));
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self(vec![0.0; dim])
    }

    /// The `i`-th standard basis vector in `dim` dimensions.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, scale: f64, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + scale * b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, factor: f64) -> Vector {
        Vector(self.0.iter().map(|x| x * factor).collect())
    }

    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(!entries.is_empty() && entries.iter().all(|x| x.is_finite()));
        Self(entries)
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        Vector::new(entries)
    }
}

impl<const N: usize> TryFrom<[f64; N]> for Vector {
    type Error = Error;

    fn try_from(entries: [f64; N]) -> Result<Self> {
        Vector::new(entries.to_vec())
    }
}

/// Interface for convex decision sets with a Euclidean projection.
pub trait ConvexSet: Send + Sync {
    fn dim(&self) -> usize;

    /// Euclidean projection of `point` onto the set.
    fn project(&self, point: &Vector) -> Result<Vector>;

    fn diameter(&self) -> f64;

    /// Width of the set's projection onto each coordinate axis.
    fn coordinate_diameters(&self) -> Vec<f64>;

    /// Axis bounds when the set is a hyper-rectangle; coordinate-wise
    /// projection is only Euclidean for product sets.
    fn coordinate_bounds(&self) -> Option<(&[f64], &[f64])> {
        None
    }

    /// Distance moved by projecting `point`; zero for members.
    fn infeasibility(&self, point: &Vector) -> Result<f64> {
        Ok(self.project(point)?.distance(point))
    }
}

/// The shipped feasible sets.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Ball { center: Vector, radius: f64 },
    Box { lower: Vector, upper: Vector },
}

impl FeasibleSet {
    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self::Ball { center, radius })
    }

    /// Ball centred at the origin.
    pub fn unit_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(Vector::zeros(dim), radius)
    }

    pub fn hyper_box(lower: Vector, upper: Vector) -> Result<Self> {
        check_dims(lower.dim(), upper.dim())?;
        if let Some(i) = (0..lower.dim()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::invalid(format!(
                "box lower bound exceeds upper bound at coordinate {i}"
            )));
        }
        if (0..lower.dim()).all(|i| lower[i] == upper[i]) {
            return Err(Error::invalid("box must have positive width in some coordinate"));
        }
        Ok(Self::Box { lower, upper })
    }

    /// Ball centre or box midpoint.
    pub fn center(&self) -> Vector {
        match self {
            Self::Ball { center, .. } => center.clone(),
            Self::Box { lower, upper } => Vector::from_raw(
                lower.iter().zip(upper.iter()).map(|(l, u)| 0.5 * (l + u)).collect(),
            ),
        }
    }

    /// Whether `point` lies in the set up to `slack` on each constraint residual.
    pub fn contains(&self, point: &Vector, slack: f64) -> bool {
        if point.dim() != self.dim() {
            return false;
        }
        match self {
            Self::Ball { center, radius } => point.distance(center) <= radius + slack,
            Self::Box { lower, upper } => (0..point.dim())
                .all(|i| point[i] >= lower[i] - slack && point[i] <= upper[i] + slack),
        }
    }
}

impl ConvexSet for FeasibleSet {
    fn dim(&self) -> usize {
        match self {
            Self::Ball { center, .. } => center.dim(),
            Self::Box { lower, .. } => lower.dim(),
        }
    }

    fn project(&self, point: &Vector) -> Result<Vector> {
        check_dims(self.dim(), point.dim())?;
        Ok(match self {
            Self::Ball { center, radius } => project_ball(center, *radius, point),
            Self::Box { lower, upper } => Vector::from_raw(
                point
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(&x, (&l, &u))| x.clamp(l, u))
                    .collect(),
            ),
        })
    }

    fn diameter(&self) -> f64 {
        match self {
            Self::Ball { radius, .. } => 2.0 * radius,
            Self::Box { lower, upper } => upper.distance(lower),
        }
    }

    fn coordinate_diameters(&self) -> Vec<f64> {
        match self {
            Self::Ball { center, radius } => vec![2.0 * radius; center.dim()],
            Self::Box { lower, upper } => {
                lower.iter().zip(upper.iter()).map(|(l, u)| u - l).collect()
            }
        }
    }

    fn coordinate_bounds(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Self::Ball { .. } => None,
            Self::Box { lower, upper } => Some((lower.as_slice(), upper.as_slice())),
        }
    }
}

fn project_ball(center: &Vector, radius: f64, point: &Vector) -> Vector {
    let offset = point.sub(center);
    let dist = offset.norm();
    if dist <= radius {
        return point.clone();
    }
    // Shrink the scale until the rounded result is a member, so that a second
    // projection is the identity bit for bit.
    let mut scale = radius / dist;
    loop {
        let candidate = center.add_scaled(scale, &offset);
        if candidate.distance(center) <= radius {
            return candidate;
        }
        scale *= 1.0 - f64::EPSILON;
    }
}

/// Sum of Euclidean distances between consecutive points.
pub fn path_variation(points: &[Vector]) -> Result<f64> {
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("path must contain at least one point"))?;
    for p in points {
        check_dims(first.dim(), p.dim())?;
    }
    Ok(points.windows(2).map(|w| w[1].distance(&w[0])).sum())
}

/// Per-coordinate path variation `sum_t |w_{t+1,i} - w_{t,i}|`.
pub fn coordinate_path_variation(points: &[Vector]) -> Result<Vec<f64>> {
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("path must contain at least one point"))?;
    let mut out = vec![0.0; first.dim()];
    for p in points {
        check_dims(first.dim(), p.dim())?;
    }
    for w in points.windows(2) {
        for (i, o) in out.iter_mut().enumerate() {
            *o += (w[1][i] - w[0][i]).abs();
        }
    }
    Ok(out)
}

/// Relative membership tolerance used when validating comparator paths.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;

/// A comparator sequence `w_1*, ..., w_T*` together with its path budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorPath {
    points: Vec<Vector>,
    budget: f64,
}

impl ComparatorPath {
    /// Validates membership, the budget and `budget <= D (T - 1)`.
    pub fn new<S: ConvexSet + ?Sized>(set: &S, points: Vec<Vector>, budget: f64) -> Result<Self> {
        let variation = path_variation(&points)?;
        let d = set.diameter();
        let tol = MEMBERSHIP_TOLERANCE * d;
        for (t, p) in points.iter().enumerate() {
            check_dims(set.dim(), p.dim())?;
            if set.infeasibility(p)? >= tol {
                return Err(Error::invalid(format!(
                    "comparator point at round {} lies outside the feasible set",
                    t + 1
                )));
            }
        }
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::invalid(format!("path budget must be nonnegative, got {budget}")));
        }
        let max_budget = d * (points.len() - 1) as f64;
        if budget > max_budget * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "path budget {budget} exceeds D (T - 1) = {max_budget}"
            )));
        }
        if variation > budget + tol {
            return Err(Error::invalid(format!(
                "path variation {variation} exceeds budget {budget}"
            )));
        }
        Ok(Self { points, budget })
    }

    /// A path whose budget is its own measured variation.
    pub fn tight<S: ConvexSet + ?Sized>(set: &S, points: Vec<Vector>) -> Result<Self> {
        let variation = path_variation(&points)?;
        let cap = set.diameter() * (points.len().saturating_sub(1)) as f64;
        Self::new(set, points, variation.min(cap))
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn variation(&self) -> f64 {
        self.points.windows(2).map(|w| w[1].distance(&w[0])).sum()
    }

    /// `(D_t, P_t)` diagnostics: distance of each decision to the comparator
    /// and the comparator's per-round move (zero at the last round).
    pub fn distance_profile(&self, decisions: &[Vector]) -> Result<Vec<(f64, f64)>> {
        if decisions.len() != self.points.len() {
            return Err(Error::invalid(format!(
                "{} decisions for a comparator of length {}",
                decisions.len(),
                self.points.len()
            )));
        }
        Ok((0..self.points.len())
            .map(|t| {
                let dt = decisions[t].distance(&self.points[t]);
                let pt = self
                    .points
                    .get(t + 1)
                    .map_or(0.0, |next| next.distance(&self.points[t]));
                (dt, pt)
            })
            .collect())
    }
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::invalid(format!(
            "dimension mismatch: expected {expected}, got {got}"
        )));
    }
    Ok(())
}

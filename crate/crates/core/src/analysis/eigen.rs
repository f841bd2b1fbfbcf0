//! Cyclic Jacobi eigenvalues for small symmetric matrices, and the Gram
//! accumulator used to compare `sqrt(sum ||g_t||^2)` with `tr(sqrt(sum g_t g_t^T))`.

use crate::error::{Error, Result};
use crate::geometry::{check_dims, Vector};

pub const MAX_EIGEN_DIM: usize = 64;
const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;

/// Dense row-major square matrix expected to be symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds from rows; symmetry is checked by [`symmetric_eigenvalues`].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("matrix must be at least 1x1"));
        }
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            check_dims(n, row.len())?;
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("matrix entries must be finite"));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `self += g g^T`, written symmetrically.
    pub fn add_outer(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let v = g[i] * g[j];
                self.data[i * self.n + j] += v;
                if i != j {
                    self.data[j * self.n + i] += v;
                }
            }
        }
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    s += self.get(i, j).powi(2);
                }
            }
        }
        s.sqrt()
    }
}

/// Eigenvalues of a symmetric positive semidefinite matrix, ascending.
///
/// Cyclic Jacobi sweeps run until the off-diagonal Frobenius mass is at most
/// `1e-12 ||A||_F`. Negative eigenvalues down to `-1e-10 tr(A)` are rounding
/// noise and are clamped to 0; anything more negative is rejected.
pub fn symmetric_eigenvalues(a: &SymmetricMatrix) -> Result<Vec<f64>> {
    let n = a.n;
    if n > MAX_EIGEN_DIM {
        return Err(Error::SizeLimit(format!(
            "eigensolver supports N <= {MAX_EIGEN_DIM}, got {n}"
        )));
    }
    let scale = a.data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..n {
        for j in i + 1..n {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-12 * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let fro = a.frobenius_norm();
    let mut m = a.clone();
    if fro > 0.0 {
        jacobi_diagonalize(&mut m, fro)?;
    }
    let trace = a.trace();
    let mut eigenvalues: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    for lambda in &mut eigenvalues {
        if *lambda < 0.0 {
            if *lambda >= -1e-10 * trace.abs() {
                *lambda = 0.0;
            } else {
                return Err(Error::invalid(format!(
                    "matrix is not positive semidefinite (eigenvalue {lambda})"
                )));
            }
        }
    }
    eigenvalues.sort_by(f64::total_cmp);
    Ok(eigenvalues)
}

fn jacobi_diagonalize(m: &mut SymmetricMatrix, fro: f64) -> Result<()> {
    let n = m.n;
    for _ in 0..MAX_SWEEPS {
        if m.off_diagonal_norm() <= OFF_DIAGONAL_TOLERANCE * fro {
            return Ok(());
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.data[k * n + p];
                    let akq = m.data[k * n + q];
                    m.data[k * n + p] = c * akp - s * akq;
                    m.data[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m.data[p * n + k];
                    let aqk = m.data[q * n + k];
                    m.data[p * n + k] = c * apk - s * aqk;
                    m.data[q * n + k] = s * apk + c * aqk;
                }
                m.data[p * n + q] = 0.0;
                m.data[q * n + p] = 0.0;
            }
        }
    }
    let residual = m.off_diagonal_norm() / fro;
    if residual <= OFF_DIAGONAL_TOLERANCE {
        Ok(())
    } else {
        Err(Error::NumericalFailure {
            message: format!("Jacobi sweeps did not converge in {MAX_SWEEPS} sweeps"),
            residual,
        })
    }
}

/// Running `A_T = sum g_t g_t^T` and `sum ||g_t||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramAccumulator {
    matrix: SymmetricMatrix,
    energy: f64,
    rounds: usize,
}

/// Both sides of `sqrt(sum ||g_t||^2) <= tr(sqrt(A_T))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceComparison {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs / lhs`, in `[1, sqrt N]`; 1 when every gradient is zero.
    pub ratio: f64,
}

impl GramAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            matrix: SymmetricMatrix::zeros(dim),
            energy: 0.0,
            rounds: 0,
        }
    }

    pub fn add(&mut self, g: &Vector) -> Result<()> {
        check_dims(self.matrix.n, g.dim())?;
        self.matrix.add_outer(g);
        self.energy += g.norm_squared();
        self.rounds += 1;
        Ok(())
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Compares the scalar energy with the trace of the matrix square root.
    ///
    /// Eigenvalues below `8 N eps tr(A)` are at the rounding floor of the
    /// accumulated matrix and count as zero; their square roots would
    /// otherwise inflate the trace by `O(N sqrt(eps))`.
    pub fn trace_inequality(&self) -> Result<TraceComparison> {
        let lhs = self.energy.sqrt();
        if self.energy == 0.0 {
            return Ok(TraceComparison {
                lhs: 0.0,
                rhs: 0.0,
                ratio: 1.0,
            });
        }
        let eigenvalues = symmetric_eigenvalues(&self.matrix)?;
        let floor = 8.0 * self.matrix.n as f64 * f64::EPSILON * self.matrix.trace();
        let rhs: f64 = eigenvalues
            .iter()
            .filter(|&&l| l > floor)
            .map(|l| l.sqrt())
            .sum();
        Ok(TraceComparison {
            lhs,
            rhs,
            ratio: rhs / lhs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> SymmetricMatrix {
        SymmetricMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn small_examples() {
        assert_eq!(symmetric_eigenvalues(&SymmetricMatrix::identity(2)).unwrap(), vec![1.0, 1.0]);
        assert_eq!(symmetric_eigenvalues(&m(&[&[3.0, 0.0], &[0.0, 5.0]])).unwrap(), vec![3.0, 5.0]);
        let e = symmetric_eigenvalues(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
        assert_eq!(symmetric_eigenvalues(&SymmetricMatrix::zeros(3)).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            symmetric_eigenvalues(&m(&[&[1.0, 2.0], &[0.0, 1.0]])),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            symmetric_eigenvalues(&m(&[&[1.0, 0.0], &[0.0, -1.0]])),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            symmetric_eigenvalues(&SymmetricMatrix::identity(65)),
            Err(Error::SizeLimit(_))
        ));
    }

    #[test]
    fn trace_examples() {
        let mut gram = GramAccumulator::new(2);
        gram.add(&Vector::new(vec![1.0, 0.0]).unwrap()).unwrap();
        gram.add(&Vector::new(vec![0.0, 1.0]).unwrap()).unwrap();
        let c = gram.trace_inequality().unwrap();
        assert!((c.lhs - 2f64.sqrt()).abs() < 1e-15);
        assert!((c.rhs - 2.0).abs() < 1e-12);
        assert!((c.ratio - 2f64.sqrt()).abs() < 1e-12);

        let mut gram = GramAccumulator::new(3);
        for s in [1.0, -2.0, 0.5] {
            gram.add(&Vector::new(vec![s * 0.3, s * -0.4, s * 1.2]).unwrap()).unwrap();
        }
        let c = gram.trace_inequality().unwrap();
        assert!((c.ratio - 1.0).abs() < 1e-8);

        let empty = GramAccumulator::new(4).trace_inequality().unwrap();
        assert_eq!(empty.ratio, 1.0);
    }

    /// Closed-form roots of a symmetric 3x3 (trigonometric method).
    fn closed_form_3x3(a: &SymmetricMatrix) -> Vec<f64> {
        let (a11, a22, a33) = (a.get(0, 0), a.get(1, 1), a.get(2, 2));
        let (a12, a13, a23) = (a.get(0, 1), a.get(0, 2), a.get(1, 2));
        let p1 = a12 * a12 + a13 * a13 + a23 * a23;
        let q = (a11 + a22 + a33) / 3.0;
        let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return vec![q; 3];
        }
        let b = |i: usize, j: usize| (a.get(i, j) - if i == j { q } else { 0.0 }) / p;
        let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
            - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
            + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let mut e = vec![e1, 3.0 * q - e1 - e3, e3];
        e.sort_by(f64::total_cmp);
        e
    }

    fn gram_from(rows: &[Vec<f64>], n: usize) -> SymmetricMatrix {
        let mut g = SymmetricMatrix::zeros(n);
        for r in rows {
            g.add_outer(r);
        }
        g
    }

    fn nalgebra_eigenvalues(a: &SymmetricMatrix) -> Vec<f64> {
        let n = a.dim();
        let dm = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let mut e: Vec<f64> = dm.symmetric_eigen().eigenvalues.iter().cloned().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    proptest! {
        #[test]
        fn matches_closed_form_3x3(rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 1..8)) {
            let a = gram_from(&rows, 3);
            let ours = symmetric_eigenvalues(&a).unwrap();
            let exact = closed_form_3x3(&a);
            let scale = a.trace().max(1e-300);
            for (x, y) in ours.iter().zip(&exact) {
                prop_assert!((x - y.max(0.0)).abs() <= 1e-8 * scale, "{:?} vs {:?}", ours, exact);
            }
        }

        #[test]
        fn matches_reference_solver(n in 2usize..12, rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 12), 1..30)) {
            let trimmed: Vec<Vec<f64>> = rows.iter().map(|r| r[..n].to_vec()).collect();
            let a = gram_from(&trimmed, n);
            let ours = symmetric_eigenvalues(&a).unwrap();
            let reference = nalgebra_eigenvalues(&a);
            let trace = a.trace();
            let sum: f64 = ours.iter().sum();
            prop_assert!((sum - trace).abs() <= 1e-9 * trace.max(1e-300));
            for (x, y) in ours.iter().zip(&reference) {
                prop_assert!((x - y.max(0.0)).abs() <= 1e-9 * trace);
            }
        }

        #[test]
        fn trace_inequality_ratio_in_range(n in 1usize..10, rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 10), 1..40)) {
            let mut gram = GramAccumulator::new(n);
            for r in &rows {
                gram.add(&Vector::new(r[..n].to_vec()).unwrap()).unwrap();
            }
            let c = gram.trace_inequality().unwrap();
            let energy: f64 = rows.iter().map(|r| r[..n].iter().map(|x| x * x).sum::<f64>()).sum();
            prop_assert!((gram.matrix().trace() - energy).abs() <= 1e-10 * energy.max(1e-300));
            prop_assert!(c.ratio >= 1.0 - 1e-10);
            prop_assert!(c.ratio <= (n as f64).sqrt() + 1e-10);
        }
    }
}

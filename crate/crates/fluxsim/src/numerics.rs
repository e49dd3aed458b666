//! Dense complex linear algebra kernel.
//!
//! Everything in here operates on small dense Hermitian matrices: subsystem
//! Hamiltonians in their native bases (charge or Fock) and the per-site
//! factors of composite operators. Eigendecomposition uses a cyclic Jacobi
//! sweep, which is robust and plenty fast for the dimensions that occur here
//! (a few tens up to a few hundred).

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Hard cap on composite state dimensions; large enough for every
/// architecture studied here (16 * 16 * 4 = 1024) with headroom.
pub const MAX_STATE_DIM: usize = 4096;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |A - A^H| = {residual:.3e} exceeds {tol:.3e}")]
    NotHermitian { residual: f64, tol: f64 },
    #[error("dimension mismatch: operator dim {op_dim}, state dim {state_dim}")]
    DimensionMismatch { op_dim: usize, state_dim: usize },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("Kronecker product dimension {dim} exceeds maximum state dimension {max}")]
    DimensionOverflow { dim: usize, max: usize },
    #[error("Jacobi eigensolver failed to converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for c in 0..self.cols.min(8) {
                let z = self[(r, c)];
                write!(f, "{:+.3e}{:+.3e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(*v, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, a: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * a).collect() }
    }

    pub fn scale_re(&self, a: f64) -> Self {
        self.scale(C64::new(a, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matrix product dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == C64::ZERO {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(C64::ZERO, |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest |A[i][j] - conj(A[j][i])| over all entries.
    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                let d = (self[(r, c)] - self[(c, r)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_finite(&self) -> Result<(), NumericsError> {
        for r in 0..self.rows {
            for c in 0..self.cols {
                let z = self[(r, c)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(NumericsError::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(())
    }

    fn check_hermitian(&self) -> Result<(), NumericsError> {
        if self.rows != self.cols {
            return Err(NumericsError::NotSquare { rows: self.rows, cols: self.cols });
        }
        self.is_finite()?;
        let scale = self.max_abs().max(1.0);
        let tol = 1e-12 * scale;
        let residual = self.hermiticity_residual();
        if residual > tol {
            return Err(NumericsError::NotHermitian { residual, tol });
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Kronecker product; the result dimension is capped by [`MAX_STATE_DIM`].
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    if rows > MAX_STATE_DIM || cols > MAX_STATE_DIM {
        return Err(NumericsError::DimensionOverflow { dim: rows.max(cols), max: MAX_STATE_DIM });
    }
    let mut out = ComplexMatrix::zeros(rows, cols);
    for ra in 0..a.rows {
        for ca in 0..a.cols {
            let f = a[(ra, ca)];
            if f == C64::ZERO {
                continue;
            }
            for rb in 0..b.rows {
                for cb in 0..b.cols {
                    out[(ra * b.rows + rb, ca * b.cols + cb)] = f * b[(rb, cb)];
                }
            }
        }
    }
    Ok(out)
}

/// Eigendecomposition A = V diag(eigenvalues) V^H of a Hermitian matrix,
/// eigenvalues ascending, V unitary with eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SpectralFactorization {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
pub fn hermitian_eigendecomposition(
    a: &ComplexMatrix,
) -> Result<SpectralFactorization, NumericsError> {
    a.check_hermitian()?;
    let n = a.rows;
    if n == 0 {
        return Ok(SpectralFactorization {
            eigenvalues: Vec::new(),
            eigenvectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let mut m = a.clone();
    // Symmetrize exactly so rounding in the input cannot bias the sweep.
    for r in 0..n {
        m[(r, r)] = C64::new(m[(r, r)].re, 0.0);
        for c in r + 1..n {
            let avg = 0.5 * (m[(r, c)] + m[(c, r)].conj());
            m[(r, c)] = avg;
            m[(c, r)] = avg.conj();
        }
    }
    let mut v = ComplexMatrix::identity(n);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let stop = 1e-15 * scale;
    const MAX_SWEEPS: usize = 64;
    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m[(p, q)].norm());
            }
        }
        if off <= stop {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let r = apq.norm();
                if r <= stop * 1e-2 {
                    continue;
                }
                let w = apq / r;
                let tau = (m[(q, q)].re - m[(p, p)].re) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = w * (c * t);
                // Right-multiply columns p,q of M and V by the plane rotation,
                // then left-multiply rows p,q of M by its adjoint.
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * c - mkq * s.conj();
                    m[(k, q)] = mkp * s + mkq * c;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * s.conj();
                    v[(k, q)] = vkp * s + vkq * c;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = mpk * c - mqk * s;
                    m[(q, k)] = mpk * s.conj() + mqk * c;
                }
            }
        }
    }
    if !converged {
        // Final residual check: accept if the remaining off-diagonal mass is
        // at machine-noise level anyway.
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m[(p, q)].norm());
            }
        }
        if off > 1e-12 * scale {
            return Err(NumericsError::NoConvergence { sweeps: MAX_SWEEPS });
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.partial_cmp(&m[(j, j)].re).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[(i, i)].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SpectralFactorization { eigenvalues, eigenvectors })
}

impl SpectralFactorization {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Reconstruct V diag(lambda) V^H.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        ComplexMatrix::from_fn(n, n, |r, c| {
            (0..n)
                .map(|k| v[(r, k)] * self.eigenvalues[k] * v[(c, k)].conj())
                .fold(C64::ZERO, |acc, z| acc + z)
        })
    }

    /// Largest deviation of V^H V from the identity.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.dim();
        let v = &self.eigenvectors;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                let dot = (0..n)
                    .map(|k| v[(k, r)].conj() * v[(k, c)])
                    .fold(C64::ZERO, |acc, z| acc + z);
                let expect = if r == c { C64::ONE } else { C64::ZERO };
                worst = worst.max((dot - expect).norm());
            }
        }
        worst
    }
}

/// Normalized complex amplitude vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub amps: Vec<C64>,
}

impl StateVector {
    pub fn basis_state(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut amps = vec![C64::ZERO; dim];
        amps[index] = C64::ONE;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.amps[index].norm_sqr()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .fold(C64::ZERO, |acc, z| acc + z)
    }
}

/// Apply V exp(-i s diag(lambda)) V^H to a state.
pub fn apply_exponential(
    f: &SpectralFactorization,
    s: f64,
    psi: &StateVector,
) -> Result<StateVector, NumericsError> {
    let n = f.dim();
    if psi.dim() != n {
        return Err(NumericsError::DimensionMismatch { op_dim: n, state_dim: psi.dim() });
    }
    let v = &f.eigenvectors;
    // y = V^H psi
    let mut y = vec![C64::ZERO; n];
    for k in 0..n {
        let mut acc = C64::ZERO;
        for r in 0..n {
            acc += v[(r, k)].conj() * psi.amps[r];
        }
        y[k] = acc;
    }
    for (yk, lam) in y.iter_mut().zip(&f.eigenvalues) {
        let ph = C64::from_polar(1.0, -s * lam);
        *yk *= ph;
    }
    let mut out = vec![C64::ZERO; n];
    for r in 0..n {
        let mut acc = C64::ZERO;
        for k in 0..n {
            acc += v[(r, k)] * y[k];
        }
        out[r] = acc;
    }
    Ok(StateVector { amps: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Deterministic splitmix64 stream for reproducible "random" matrices.
    pub(crate) struct Rng(u64);

    impl Rng {
        pub(crate) fn new(seed: u64) -> Self {
            Self(seed)
        }
        pub(crate) fn next_f64(&mut self) -> f64 {
            self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z = z ^ (z >> 31);
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        }
    }

    pub(crate) fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = Rng::new(seed);
        let mut m = ComplexMatrix::zeros(n, n);
        for r in 0..n {
            m[(r, r)] = c(rng.next_f64(), 0.0);
            for col in r + 1..n {
                let z = c(rng.next_f64(), rng.next_f64());
                m[(r, col)] = z;
                m[(col, r)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn eig_of_diagonal_matrix_sorts_ascending() {
        let a = ComplexMatrix::diag(&[3.0, 1.0, 2.0]);
        let f = hermitian_eigendecomposition(&a).unwrap();
        assert!((f.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((f.eigenvalues[1] - 2.0).abs() < 1e-14);
        assert!((f.eigenvalues[2] - 3.0).abs() < 1e-14);
        // permutation eigenvectors: each column has a single unit entry
        for k in 0..3 {
            let col_norms: Vec<f64> = (0..3).map(|r| f.eigenvectors[(r, k)].norm()).collect();
            let biggest = col_norms.iter().cloned().fold(0.0, f64::max);
            assert!((biggest - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_of_sigma_x() {
        let mut a = ComplexMatrix::zeros(2, 2);
        a[(0, 1)] = C64::ONE;
        a[(1, 0)] = C64::ONE;
        let f = hermitian_eigendecomposition(&a).unwrap();
        assert!((f.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((f.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    /// Characteristic-polynomial oracle for a 3x3 Hermitian matrix: the
    /// eigenvalues are the roots of -x^3 + tr x^2 - c1 x + det, found here by
    /// bisection on the (real) cubic.
    fn char_poly_roots_3x3(a: &ComplexMatrix) -> Vec<f64> {
        assert_eq!(a.rows(), 3);
        let tr = (0..3).map(|i| a[(i, i)].re).sum::<f64>();
        // sum of principal 2x2 minors
        let minor = |i: usize, j: usize| -> f64 {
            (a[(i, i)] * a[(j, j)] - a[(i, j)] * a[(j, i)]).re
        };
        let c1 = minor(0, 1) + minor(0, 2) + minor(1, 2);
        let det = {
            let m = a;
            let d = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
            d.re
        };
        let p = |x: f64| -> f64 { ((x - tr) * x + c1) * x - det };
        // all roots live within the Gershgorin bound
        let bound = (0..3)
            .map(|r| (0..3).map(|c| a[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
            + 1.0;
        let mut roots = Vec::new();
        let n_grid = 20000;
        let mut x_prev = -bound;
        let mut f_prev = p(x_prev);
        for i in 1..=n_grid {
            let x = -bound + 2.0 * bound * i as f64 / n_grid as f64;
            let fx = p(x);
            if f_prev == 0.0 {
                roots.push(x_prev);
            } else if f_prev * fx < 0.0 {
                let (mut lo, mut hi) = (x_prev, x);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if p(lo) * p(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x_prev = x;
            f_prev = fx;
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        roots
    }

    #[test]
    fn eig_matches_characteristic_polynomial_roots() {
        let a = random_hermitian(3, 7);
        let f = hermitian_eigendecomposition(&a).unwrap();
        let roots = char_poly_roots_3x3(&a);
        assert_eq!(roots.len(), 3, "cubic oracle must find three real roots");
        for (lam, root) in f.eigenvalues.iter().zip(&roots) {
            assert!((lam - root).abs() < 1e-9, "{lam} vs {root}");
        }
    }

    #[test]
    fn eig_reconstruction_and_unitarity_on_random_matrices() {
        for seed in 0..5 {
            let a = random_hermitian(6, seed);
            let f = hermitian_eigendecomposition(&a).unwrap();
            assert!(f.unitarity_residual() < 1e-10);
            let diff = f.reconstruct().sub(&a).max_abs();
            assert!(diff < 1e-9 * a.max_abs().max(1.0), "residual {diff}");
            for w in f.eigenvalues.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn eig_shift_invariance_and_projector_stability() {
        let a = random_hermitian(6, 99);
        let shift = 2.75;
        let mut b = a.clone();
        for i in 0..6 {
            b[(i, i)] += c(shift, 0.0);
        }
        let fa = hermitian_eigendecomposition(&a).unwrap();
        let fb = hermitian_eigendecomposition(&b).unwrap();
        for (la, lb) in fa.eigenvalues.iter().zip(&fb.eigenvalues) {
            assert!((la + shift - lb).abs() < 1e-10);
        }
        // spectra of random matrices are non-degenerate: compare rank-1
        // projectors |v><v| which are phase-free
        for k in 0..6 {
            for r in 0..6 {
                for s in 0..6 {
                    let pa = fa.eigenvectors[(r, k)] * fa.eigenvectors[(s, k)].conj();
                    let pb = fb.eigenvectors[(r, k)] * fb.eigenvectors[(s, k)].conj();
                    assert!((pa - pb).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn eig_rejects_non_hermitian_and_non_square() {
        let mut a = ComplexMatrix::zeros(2, 2);
        a[(0, 1)] = c(1.0, 0.0);
        a[(1, 0)] = c(0.5, 0.0);
        assert!(matches!(
            hermitian_eigendecomposition(&a),
            Err(NumericsError::NotHermitian { .. })
        ));
        let b = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            hermitian_eigendecomposition(&b),
            Err(NumericsError::NotSquare { .. })
        ));
    }

    #[test]
    fn kron_identities() {
        let i2 = ComplexMatrix::identity(2);
        let i3 = ComplexMatrix::identity(3);
        let k = kron(&i2, &i3).unwrap();
        assert_eq!(k.sub(&ComplexMatrix::identity(6)).max_abs(), 0.0);

        let d = ComplexMatrix::diag(&[2.0, 5.0]);
        let k = kron(&d, &i2).unwrap();
        let expect = ComplexMatrix::diag(&[2.0, 2.0, 5.0, 5.0]);
        assert_eq!(k.sub(&expect).max_abs(), 0.0);
    }

    #[test]
    fn kron_of_paulis_matches_index_formula() {
        let sx = ComplexMatrix::from_fn(2, 2, |r, c_| if r != c_ { C64::ONE } else { C64::ZERO });
        let sy = ComplexMatrix::from_fn(2, 2, |r, c_| match (r, c_) {
            (0, 1) => c(0.0, -1.0),
            (1, 0) => c(0.0, 1.0),
            _ => C64::ZERO,
        });
        let k = kron(&sx, &sy).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let expect = sx[(r / 2, col / 2)] * sy[(r % 2, col % 2)];
                assert_eq!(k[(r, col)], expect);
            }
        }
    }

    #[test]
    fn kron_associativity() {
        let a = random_hermitian(2, 1);
        let b = random_hermitian(3, 2);
        let cm = random_hermitian(2, 3);
        let left = kron(&kron(&a, &b).unwrap(), &cm).unwrap();
        let right = kron(&a, &kron(&b, &cm).unwrap()).unwrap();
        assert!(left.sub(&right).max_abs() < 1e-14);
    }

    #[test]
    fn kron_overflow_rejected() {
        let a = ComplexMatrix::identity(100);
        let b = ComplexMatrix::identity(100);
        assert!(matches!(kron(&a, &b), Err(NumericsError::DimensionOverflow { .. })));
    }

    #[test]
    fn apply_exponential_identity_at_zero() {
        let a = random_hermitian(5, 11);
        let f = hermitian_eigendecomposition(&a).unwrap();
        let psi = StateVector::basis_state(5, 2);
        let out = apply_exponential(&f, 0.0, &psi).unwrap();
        for (o, i) in out.amps.iter().zip(&psi.amps) {
            assert!((o - i).norm() < 1e-14);
        }
    }

    #[test]
    fn apply_exponential_diagonal_phases() {
        let omega = [0.3, 1.7, -2.4];
        let a = ComplexMatrix::diag(&omega);
        let f = hermitian_eigendecomposition(&a).unwrap();
        let psi = StateVector {
            amps: vec![c(0.5, 0.1), c(-0.3, 0.7), c(0.2, -0.2)],
        };
        let s = 0.83;
        let out = apply_exponential(&f, s, &psi).unwrap();
        for k in 0..3 {
            let expect = psi.amps[k] * C64::from_polar(1.0, -s * omega[k]);
            assert!((out.amps[k] - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn apply_exponential_sigma_x_half_pi_swaps_amplitudes() {
        // exp(-i (pi/2) sx) = -i sx
        let mut sx = ComplexMatrix::zeros(2, 2);
        sx[(0, 1)] = C64::ONE;
        sx[(1, 0)] = C64::ONE;
        let f = hermitian_eigendecomposition(&sx).unwrap();
        let psi = StateVector { amps: vec![c(0.8, 0.0), c(0.0, 0.6)] };
        let out = apply_exponential(&f, std::f64::consts::FRAC_PI_2, &psi).unwrap();
        let mi = c(0.0, -1.0);
        assert!((out.amps[0] - mi * psi.amps[1]).norm() < 1e-12);
        assert!((out.amps[1] - mi * psi.amps[0]).norm() < 1e-12);
    }

    #[test]
    fn apply_exponential_preserves_norm() {
        let a = random_hermitian(8, 5).scale_re(3.0);
        let f = hermitian_eigendecomposition(&a).unwrap();
        let mut rng = Rng::new(17);
        let mut psi = StateVector {
            amps: (0..8).map(|_| c(rng.next_f64(), rng.next_f64())).collect(),
        };
        let n = psi.norm();
        for z in psi.amps.iter_mut() {
            *z /= n;
        }
        let mut cur = psi.clone();
        for _ in 0..50 {
            cur = apply_exponential(&f, 0.37, &cur).unwrap();
            assert!((cur.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_exponential_dimension_mismatch() {
        let a = random_hermitian(3, 4);
        let f = hermitian_eigendecomposition(&a).unwrap();
        let psi = StateVector::basis_state(4, 0);
        assert!(matches!(
            apply_exponential(&f, 1.0, &psi),
            Err(NumericsError::DimensionMismatch { .. })
        ));
    }
}

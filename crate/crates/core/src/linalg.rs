//! Regularised Gram matrices with an incrementally maintained inverse.
//!
//! Storage is dense row-major; every feature map in this crate has at most a
//! few dozen coordinates.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{check_dim, input, Error, Result};
use crate::scalar::Scalar;

/// Rank-one updates between full re-inversions of the Gram matrix.
pub const REFACTOR_INTERVAL: u64 = 10_000;

/// `lambda I + sum_t phi_t phi_t^T` together with its inverse.
#[derive(Debug)]
pub struct GramState<T> {
    dim: usize,
    lambda: T,
    matrix: Vec<T>,
    inverse: Vec<T>,
    count: u64,
    since_refactor: u64,
    refactor_interval: Option<u64>,
    clamped: AtomicU64,
}

impl<T: Scalar> Clone for GramState<T> {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            lambda: self.lambda,
            matrix: self.matrix.clone(),
            inverse: self.inverse.clone(),
            count: self.count,
            since_refactor: self.since_refactor,
            refactor_interval: self.refactor_interval,
            clamped: AtomicU64::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl<T: Scalar> GramState<T> {
    pub fn new(dim: usize, lambda: T) -> Result<Self> {
        if dim == 0 {
            return input("Gram dimension must be at least 1");
        }
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return input(format!("ridge parameter must be positive, got {lambda}"));
        }
        let mut matrix = vec![T::zero(); dim * dim];
        let mut inverse = vec![T::zero(); dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = lambda;
            inverse[i * dim + i] = T::one() / lambda;
        }
        Ok(Self {
            dim,
            lambda,
            matrix,
            inverse,
            count: 0,
            since_refactor: 0,
            refactor_interval: Some(REFACTOR_INTERVAL),
            clamped: AtomicU64::new(0),
        })
    }

    /// Rebuilds a state from persisted matrices; the inverse is recomputed when absent.
    pub fn from_parts(
        dim: usize,
        lambda: T,
        matrix: Vec<T>,
        inverse: Option<Vec<T>>,
        count: u64,
    ) -> Result<Self> {
        let mut state = Self::new(dim, lambda)?;
        check_dim(dim * dim, matrix.len())?;
        let inverse = match inverse {
            Some(inv) => {
                check_dim(dim * dim, inv.len())?;
                inv
            }
            None => spd_inverse(&matrix, dim)?,
        };
        state.matrix = matrix;
        state.inverse = inverse;
        state.count = count;
        Ok(state)
    }

    /// Overrides the re-inversion cadence; `None` keeps the rank-one updates only.
    pub fn with_refactor_interval(mut self, interval: Option<u64>) -> Self {
        self.refactor_interval = interval;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Row-major `Lambda`.
    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    /// Row-major maintained `Lambda^{-1}`.
    pub fn inverse(&self) -> &[T] {
        &self.inverse
    }

    /// Number of bonus evaluations whose quadratic form came out negative.
    pub fn clamp_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// `Lambda += phi phi^T`, with the Sherman-Morrison update of the inverse.
    pub fn update(&mut self, phi: &[T]) -> Result<()> {
        check_dim(self.dim, phi.len())?;
        if phi.iter().any(|x| !x.is_finite()) {
            return input("feature vector has non-finite entries");
        }
        let d = self.dim;
        for i in 0..d {
            if phi[i] == T::zero() {
                continue;
            }
            for j in 0..d {
                self.matrix[i * d + j] = self.matrix[i * d + j] + phi[i] * phi[j];
            }
        }
        let u = self.apply_inverse(phi);
        let denom = T::one() + dot(phi, &u);
        for i in 0..d {
            if u[i] == T::zero() {
                continue;
            }
            let ui = u[i] / denom;
            for j in 0..d {
                self.inverse[i * d + j] = self.inverse[i * d + j] - ui * u[j];
            }
        }
        self.count += 1;
        self.since_refactor += 1;
        if let Some(every) = self.refactor_interval {
            if self.since_refactor >= every {
                self.refactorize()?;
            }
        }
        Ok(())
    }

    /// Replaces the maintained inverse by a fresh Cholesky inversion of `Lambda`.
    pub fn refactorize(&mut self) -> Result<()> {
        self.inverse = spd_inverse(&self.matrix, self.dim)?;
        self.since_refactor = 0;
        Ok(())
    }

    /// `Lambda^{-1} v`.
    pub fn apply_inverse(&self, v: &[T]) -> Vec<T> {
        let d = self.dim;
        (0..d)
            .map(|i| dot(&self.inverse[i * d..(i + 1) * d], v))
            .collect()
    }

    /// `phi^T Lambda^{-1} phi`, skipping zero coordinates.
    pub fn quadratic_form(&self, phi: &[T]) -> T {
        let d = self.dim;
        let mut total = T::zero();
        for i in 0..d {
            if phi[i] == T::zero() {
                continue;
            }
            let row = &self.inverse[i * d..(i + 1) * d];
            let mut acc = T::zero();
            for j in 0..d {
                acc = acc + row[j] * phi[j];
            }
            total = total + phi[i] * acc;
        }
        total
    }

    /// Exploration width `sqrt(phi^T Lambda^{-1} phi)`; negative round-off is clamped to zero.
    pub fn bonus(&self, phi: &[T]) -> T {
        let q = self.quadratic_form(phi);
        if q < T::zero() {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            T::zero()
        } else {
            q.sqrt()
        }
    }
}

/// Ridge regression state: a Gram matrix plus the target-weighted feature sum.
#[derive(Debug)]
pub struct StageRegression<T> {
    pub gram: GramState<T>,
    targets: Vec<T>,
}

impl<T: Scalar> Clone for StageRegression<T> {
    fn clone(&self) -> Self {
        Self {
            gram: self.gram.clone(),
            targets: self.targets.clone(),
        }
    }
}

impl<T: Scalar> StageRegression<T> {
    pub fn new(gram: GramState<T>) -> Self {
        let targets = vec![T::zero(); gram.dim()];
        Self { gram, targets }
    }

    /// Adds one observation to both the Gram matrix and the target sum.
    pub fn observe(&mut self, phi: &[T], y: T) -> Result<()> {
        self.gram.update(phi)?;
        self.add_target(phi, y)
    }

    /// Adds `phi * y` to the target sum only (the features are already in the Gram matrix).
    pub fn add_target(&mut self, phi: &[T], y: T) -> Result<()> {
        check_dim(self.targets.len(), phi.len())?;
        if !y.is_finite() {
            return Err(Error::Numerical(format!("non-finite regression target {y}")));
        }
        for (b, &p) in self.targets.iter_mut().zip(phi) {
            *b = *b + p * y;
        }
        Ok(())
    }

    pub fn clear_targets(&mut self) {
        self.targets.iter_mut().for_each(|b| *b = T::zero());
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    /// `w = Lambda^{-1} b`, the ridge minimiser.
    pub fn ridge_solve(&self) -> Vec<T> {
        self.gram.apply_inverse(&self.targets)
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// Inverse of a symmetric positive definite row-major matrix via Cholesky.
pub fn spd_inverse<T: Scalar>(m: &[T], d: usize) -> Result<Vec<T>> {
    check_dim(d * d, m.len())?;
    // lower-triangular factor L with m = L L^T
    let mut l = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = m[i * d + j];
            for k in 0..j {
                s = s - l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > T::zero()) {
                    return Err(Error::Numerical("matrix is not positive definite".into()));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    // L^{-1}, lower triangular
    let mut li = vec![T::zero(); d * d];
    for i in 0..d {
        li[i * d + i] = T::one() / l[i * d + i];
        for j in 0..i {
            let mut s = T::zero();
            for k in j..i {
                s = s + l[i * d + k] * li[k * d + j];
            }
            li[i * d + j] = -s / l[i * d + i];
        }
    }
    // m^{-1} = L^{-T} L^{-1}
    let mut inv = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = T::zero();
            for k in i..d {
                s = s + li[k * d + i] * li[k * d + j];
            }
            inv[i * d + j] = s;
            inv[j * d + i] = s;
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_phi(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-scale..scale)).collect()
    }

    fn frobenius_residual(g: &GramState<f64>) -> f64 {
        let d = g.dim();
        let a = DMatrix::from_row_slice(d, d, g.matrix());
        let b = DMatrix::from_row_slice(d, d, g.inverse());
        (a * b - DMatrix::<f64>::identity(d, d)).norm()
    }

    #[test]
    fn init_examples() {
        let g = GramState::<f64>::new(2, 1.0).unwrap();
        assert_eq!(g.matrix(), &[1.0, 0.0, 0.0, 1.0]);
        let g = GramState::<f64>::new(1, 0.1).unwrap();
        assert_abs_diff_eq!(g.inverse()[0], 10.0, epsilon = 1e-12);
        let g = GramState::<f64>::new(3, 2.0).unwrap();
        let eig = DMatrix::from_row_slice(3, 3, g.matrix()).symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| (e - 2.0).abs() < 1e-14));
        assert!(GramState::<f64>::new(2, 0.0).is_err());
        assert!(GramState::<f64>::new(2, -1.0).is_err());
        assert!(GramState::<f64>::new(0, 1.0).is_err());
    }

    #[test]
    fn update_examples() {
        let mut g = GramState::<f64>::new(2, 1.0).unwrap();
        g.update(&[1.0, 0.0]).unwrap();
        assert_eq!(g.matrix(), &[2.0, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(g.inverse()[0], 0.5, epsilon = 1e-15);

        let before = g.clone();
        g.update(&[0.0, 0.0]).unwrap();
        assert_eq!(g.matrix(), before.matrix());
        assert_eq!(g.inverse(), before.inverse());
        assert_eq!(g.count(), before.count() + 1);

        assert!(matches!(g.update(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn sherman_morrison_tracks_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = GramState::<f64>::new(8, 1.0).unwrap().with_refactor_interval(None);
        for _ in 0..1000 {
            let phi = random_phi(&mut rng, 8, 1.0);
            g.update(&phi).unwrap();
        }
        let direct = DMatrix::from_row_slice(8, 8, g.matrix()).try_inverse().unwrap();
        let maintained = DMatrix::from_row_slice(8, 8, g.inverse());
        assert!((direct - maintained).norm() < 1e-8);
        assert!(frobenius_residual(&g) < 1e-8);
    }

    #[test]
    fn long_update_sequence_stays_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 32;
        let mut g = GramState::<f64>::new(d, 0.5).unwrap();
        for _ in 0..25_000 {
            let raw = random_phi(&mut rng, d, 1.0);
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let r = rng.random_range(0.0..10.0);
            let phi: Vec<f64> = raw.iter().map(|x| x / norm * r).collect();
            g.update(&phi).unwrap();
        }
        assert!(frobenius_residual(&g) < 1e-8);
        let eig = DMatrix::from_row_slice(d, d, g.matrix()).symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= 0.5 - 1e-9));
    }

    #[test]
    fn spd_inverse_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 6;
        let a: Vec<f64> = random_phi(&mut rng, d * d, 1.0);
        let a = DMatrix::from_row_slice(d, d, &a);
        let spd = &a * a.transpose() + DMatrix::<f64>::identity(d, d) * 0.3;
        let flat: Vec<f64> = spd.transpose().iter().copied().collect();
        let inv = spd_inverse(&flat, d).unwrap();
        let oracle = spd.try_inverse().unwrap();
        let ours = DMatrix::from_row_slice(d, d, &inv);
        assert!((ours - oracle).norm() < 1e-10);
    }

    #[test]
    fn ridge_examples() {
        let g = GramState::<f64>::new(3, 1.0).unwrap();
        let reg = StageRegression::new(g);
        assert_eq!(reg.ridge_solve(), vec![0.0; 3]);

        let mut reg = StageRegression::new(GramState::<f64>::new(1, 1.0).unwrap());
        reg.observe(&[1.0], 2.0).unwrap();
        assert_abs_diff_eq!(reg.ridge_solve()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (d, n, lambda) = (5, 200, 0.3);
        let mut reg = StageRegression::new(GramState::<f64>::new(d, lambda).unwrap());
        let mut x = DMatrix::<f64>::zeros(n, d);
        let mut y = nalgebra::DVector::<f64>::zeros(n);
        for t in 0..n {
            let phi = random_phi(&mut rng, d, 2.0);
            let target = rng.random_range(-1.0..3.0);
            for j in 0..d {
                x[(t, j)] = phi[j];
            }
            y[t] = target;
            reg.observe(&phi, target).unwrap();
        }
        let lhs = x.transpose() * &x + DMatrix::<f64>::identity(d, d) * lambda;
        let direct = lhs.lu().solve(&(x.transpose() * y)).unwrap();
        for (a, b) in reg.ridge_solve().iter().zip(direct.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn bonus_examples_and_monotonicity() {
        let g = GramState::<f64>::new(3, 1.0).unwrap();
        assert_abs_diff_eq!(g.bonus(&[3.0, 0.0, 4.0]), 5.0, epsilon = 1e-15);

        let mut g = GramState::<f64>::new(1, 1.0).unwrap();
        g.update(&[1.0]).unwrap();
        assert_abs_diff_eq!(g.bonus(&[1.0]), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let lambda = 0.7;
        let mut g = GramState::<f64>::new(4, lambda).unwrap();
        let probe = random_phi(&mut rng, 4, 1.0);
        let norm = probe.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut last = g.bonus(&probe);
        for _ in 0..300 {
            g.update(&random_phi(&mut rng, 4, 1.0)).unwrap();
            let b = g.bonus(&probe);
            assert!(b <= last + 1e-12);
            assert!(b <= norm / lambda.sqrt() + 1e-12);
            last = b;
        }
        assert_eq!(g.clamp_count(), 0);
    }

    #[test]
    fn elliptic_potential_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (d, k, lambda) = (6, 5000, 1.0);
        let mut g = GramState::<f64>::new(d, lambda).unwrap();
        let mut total = 0.0;
        for _ in 0..k {
            let raw = random_phi(&mut rng, d, 1.0);
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let phi: Vec<f64> = raw.iter().map(|x| x / norm).collect();
            total += g.bonus(&phi).powi(2);
            g.update(&phi).unwrap();
        }
        assert!(total <= 2.0 * d as f64 * (1.0 + k as f64 / lambda).ln());
    }

    #[test]
    fn from_parts_roundtrip() {
        let mut g = GramState::<f64>::new(3, 0.2).unwrap();
        g.update(&[0.1, 0.5, -0.3]).unwrap();
        let rebuilt = GramState::from_parts(3, 0.2, g.matrix().to_vec(), None, g.count()).unwrap();
        let phi = [0.4, -0.2, 0.9];
        assert_abs_diff_eq!(g.bonus(&phi), rebuilt.bonus(&phi), epsilon = 1e-12);
    }
}

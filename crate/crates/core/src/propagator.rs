//! Exact single-interval propagators `S = exp(-i H dt)` for Hermitian `H`.
//!
//! Tridiagonal Hamiltonians (the only kind the chain model produces) take a
//! fast path: a diagonal phase similarity maps them to a real symmetric
//! tridiagonal matrix, which is diagonalized by QL iteration. Anything else
//! falls back to a dense Hermitian eigendecomposition. Both paths produce a
//! matrix whose unitarity defect is checked against an explicit bound, and
//! composition tracks how that bound grows.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg;

/// Per-step unitarity budget. Freshly exponentiated steps must come out at
/// least this clean; composition adds budgets together.
pub const STEP_DEFECT_BOUND: f64 = 1e-10;

/// Elementwise tolerance for the Hermiticity precondition.
pub const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |H - H^H| = {defect:e}")]
    NotHermitian { defect: f64 },
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: step is {step}, operand is {operand}")]
    DimensionMismatch { step: usize, operand: usize },
    #[error("unitarity lost: defect {defect:e} exceeds bound {bound:e}")]
    UnitarityLost { defect: f64, bound: f64 },
    #[error("eigensolver failed: {0}")]
    EigenFailed(&'static str),
}

/// One verified unitary interval step.
#[derive(Debug, Clone)]
pub struct UnitaryStep {
    matrix: DMatrix<Complex64>,
    dt: f64,
    defect_bound: f64,
}

impl UnitaryStep {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Bound on `max |S^H S - I|` this step is guaranteed to satisfy.
    pub fn defect_bound(&self) -> f64 {
        self.defect_bound
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> Result<DVector<Complex64>, PropagatorError> {
        if v.len() != self.dim() {
            return Err(PropagatorError::DimensionMismatch {
                step: self.dim(),
                operand: v.len(),
            });
        }
        Ok(&self.matrix * v)
    }
}

/// `exp(-i h dt)` with a verified unitarity defect below [`STEP_DEFECT_BOUND`].
pub fn expm_unitary(h: &DMatrix<Complex64>, dt: f64) -> Result<UnitaryStep, PropagatorError> {
    if h.nrows() != h.ncols() {
        return Err(PropagatorError::NotSquare {
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    if !dt.is_finite() {
        return Err(PropagatorError::NonFinite("dt"));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(PropagatorError::NonFinite("H"));
    }
    let defect = linalg::hermiticity_defect(h);
    if defect > HERMITICITY_TOL {
        return Err(PropagatorError::NotHermitian { defect });
    }
    let n = h.nrows();
    let matrix = if is_tridiagonal(h) {
        let mut ws = TridiagExp::new(n);
        let diag: Vec<f64> = (0..n).map(|i| h[(i, i)].re).collect();
        let off: Vec<Complex64> = (0..n.saturating_sub(1)).map(|i| h[(i, i + 1)]).collect();
        ws.exp_into(&diag, &off, dt)?;
        ws.take_matrix()
    } else {
        let eig = h.clone().symmetric_eigen();
        let mut scaled = eig.eigenvectors.clone();
        for j in 0..n {
            let ph = (-Complex64::i() * eig.eigenvalues[j] * dt).exp();
            for i in 0..n {
                scaled[(i, j)] *= ph;
            }
        }
        scaled * eig.eigenvectors.adjoint()
    };
    let defect = linalg::unitarity_defect(&matrix);
    if defect > STEP_DEFECT_BOUND {
        return Err(PropagatorError::UnitarityLost {
            defect,
            bound: STEP_DEFECT_BOUND,
        });
    }
    Ok(UnitaryStep {
        matrix,
        dt,
        defect_bound: STEP_DEFECT_BOUND,
    })
}

/// `second` applied after `first`. Durations add; unitarity budgets add.
pub fn compose(first: &UnitaryStep, second: &UnitaryStep) -> Result<UnitaryStep, PropagatorError> {
    if first.dim() != second.dim() {
        return Err(PropagatorError::DimensionMismatch {
            step: second.dim(),
            operand: first.dim(),
        });
    }
    let matrix = &second.matrix * &first.matrix;
    let bound = first.defect_bound
        + second.defect_bound
        + 64.0 * first.dim() as f64 * f64::EPSILON;
    let defect = linalg::unitarity_defect(&matrix);
    if defect > bound {
        return Err(PropagatorError::UnitarityLost {
            defect,
            bound,
        });
    }
    Ok(UnitaryStep {
        matrix,
        dt: first.dt + second.dt,
        defect_bound: bound,
    })
}

fn is_tridiagonal(h: &DMatrix<Complex64>) -> bool {
    let n = h.nrows();
    for j in 0..n {
        for i in 0..n {
            if i.abs_diff(j) > 1 && h[(i, j)] != Complex64::new(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}

/// Reusable buffers for exponentiating tridiagonal Hermitian matrices.
/// The ensemble loop calls this millions of times, so nothing here allocates
/// after construction.
pub(crate) struct TridiagExp {
    n: usize,
    d: Vec<f64>,
    e: Vec<f64>,
    q: Vec<f64>,
    phases: Vec<Complex64>,
    weights: Vec<Complex64>,
    qw: Vec<Complex64>,
    matrix: DMatrix<Complex64>,
}

impl TridiagExp {
    pub(crate) fn new(n: usize) -> Self {
        TridiagExp {
            n,
            d: vec![0.0; n],
            e: vec![0.0; n.saturating_sub(1)],
            q: vec![0.0; n * n],
            phases: vec![Complex64::new(0.0, 0.0); n],
            weights: vec![Complex64::new(0.0, 0.0); n],
            qw: vec![Complex64::new(0.0, 0.0); n * n],
            matrix: DMatrix::zeros(n, n),
        }
    }

    /// Writes `exp(-i H dt)` into the internal matrix, where `H` has real
    /// diagonal `diag` and first superdiagonal `off` (Hermitian completion).
    pub(crate) fn exp_into(
        &mut self,
        diag: &[f64],
        off: &[Complex64],
        dt: f64,
    ) -> Result<&DMatrix<Complex64>, PropagatorError> {
        let n = self.n;
        debug_assert_eq!(diag.len(), n);
        debug_assert_eq!(off.len(), n.saturating_sub(1));
        self.d.copy_from_slice(diag);
        // phase similarity rotates each coupling onto the positive real axis
        self.phases[0] = Complex64::new(1.0, 0.0);
        for i in 0..n - 1 {
            let r = off[i].norm();
            self.e[i] = r;
            self.phases[i + 1] = if r == 0.0 {
                self.phases[i]
            } else {
                self.phases[i] * off[i] / r
            };
        }
        self.q.fill(0.0);
        for i in 0..n {
            self.q[i * n + i] = 1.0;
        }
        linalg::sym_tridiag_eigen(&mut self.d, &mut self.e, &mut self.q)
            .map_err(PropagatorError::EigenFailed)?;
        for k in 0..n {
            self.weights[k] = (-Complex64::i() * self.d[k] * dt).exp();
        }
        // S = P^H (Q W Q^T) P with P = diag(phases); Q W Q^T is symmetric
        for a in 0..n {
            for k in 0..n {
                self.qw[a * n + k] = self.weights[k] * self.q[a * n + k];
            }
        }
        for a in 0..n {
            for b in a..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.qw[a * n + k] * self.q[b * n + k];
                }
                let sab = self.phases[a].conj() * acc * self.phases[b];
                self.matrix[(a, b)] = sab;
                if b != a {
                    // core symmetry: swap the phase dressing for the mirror element
                    self.matrix[(b, a)] = self.phases[b].conj() * acc * self.phases[a];
                }
            }
        }
        Ok(&self.matrix)
    }

    pub(crate) fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    fn take_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }
}

/// `out = m * x` without allocating; column-major friendly.
pub(crate) fn matvec_into(m: &DMatrix<Complex64>, x: &[Complex64], out: &mut [Complex64]) {
    let n = m.nrows();
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(out.len(), n);
    out.fill(Complex64::new(0.0, 0.0));
    let data = m.as_slice();
    for (j, &xj) in x.iter().enumerate() {
        let col = &data[j * n..(j + 1) * n];
        for i in 0..n {
            out[i] += col[i] * xj;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Reference exponential: scaling and squaring with a long Taylor series.
    /// Independent of the eigendecomposition used by the implementation.
    fn expm_taylor(h: &DMatrix<Complex64>, dt: f64) -> DMatrix<Complex64> {
        let n = h.nrows();
        let a = h.map(|z| -Complex64::i() * z * dt);
        let norm = a.iter().map(|z| z.norm()).fold(0.0, f64::max) * n as f64;
        let squarings = if norm > 0.25 {
            (norm / 0.25).log2().ceil() as u32
        } else {
            0
        };
        let scaled = a.map(|z| z / 2f64.powi(squarings as i32));
        let mut term = DMatrix::<Complex64>::identity(n, n);
        let mut sum = DMatrix::<Complex64>::identity(n, n);
        for k in 1..=30 {
            term = (&term * &scaled) / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        let mut result = sum;
        for _ in 0..squarings {
            result = &result * &result;
        }
        result
    }

    fn random_tridiag(n: usize, rng: &mut impl Rng, with_diag: bool) -> DMatrix<Complex64> {
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            if with_diag {
                h[(i, i)] = c(rng.random_range(-2.0..2.0), 0.0);
            }
            if i + 1 < n {
                let v = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                h[(i, i + 1)] = v;
                h[(i + 1, i)] = v.conj();
            }
        }
        h
    }

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = c(rng.random_range(-2.0..2.0), 0.0);
            for j in (i + 1)..n {
                let v = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        h
    }

    #[test]
    fn matches_taylor_reference_on_tridiagonals() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for n in 1..=10usize {
            for &dt in &[0.01, 0.33, 1.7] {
                let h = random_tridiag(n, &mut rng, n % 2 == 0);
                let step = expm_unitary(&h, dt).unwrap();
                let want = expm_taylor(&h, dt);
                let err = crate::linalg::max_abs_diff(step.matrix(), &want);
                assert!(err < 1e-10, "n={n} dt={dt} err={err:e}");
            }
        }
    }

    #[test]
    fn matches_taylor_reference_on_dense_hermitian() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for n in 2..=8usize {
            let mut h = random_hermitian(n, &mut rng);
            // guarantee a entry beyond the tridiagonal band so the dense path runs
            if n >= 3 && h[(0, 2)] == c(0.0, 0.0) {
                h[(0, 2)] = c(0.1, 0.2);
                h[(2, 0)] = c(0.1, -0.2);
            }
            let step = expm_unitary(&h, 0.47).unwrap();
            let want = expm_taylor(&h, 0.47);
            let err = crate::linalg::max_abs_diff(step.matrix(), &want);
            assert!(err < 1e-10, "n={n} err={err:e}");
        }
    }

    #[test]
    fn two_mode_closed_form() {
        // single link: S = cos(|v| dt) I - i sin(|v| dt) H / |v|
        let v = c(0.8, -0.6);
        let h = crate::model::coupling_matrix(&[v]);
        let dt = 0.9;
        let step = expm_unitary(&h, dt).unwrap();
        let (s, cs) = (v.norm() * dt).sin_cos();
        let want = DMatrix::from_row_slice(
            2,
            2,
            &[
                c(cs, 0.0),
                -Complex64::i() * s * v / v.norm(),
                -Complex64::i() * s * v.conj() / v.norm(),
                c(cs, 0.0),
            ],
        );
        assert!(crate::linalg::max_abs_diff(step.matrix(), &want) < 1e-12);
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let h = DMatrix::<Complex64>::zeros(4, 4);
        let step = expm_unitary(&h, 2.5).unwrap();
        let err = crate::linalg::max_abs_diff(step.matrix(), &DMatrix::identity(4, 4));
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut h = DMatrix::<Complex64>::zeros(2, 2);
        h[(0, 1)] = c(1.0, 0.0);
        h[(1, 0)] = c(0.5, 0.0);
        match expm_unitary(&h, 0.1) {
            Err(PropagatorError::NotHermitian { .. }) => {}
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn composition_of_300_steps_stays_unitary() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 6;
        let dt = 1.0 / 30.0;
        let mut acc: Option<UnitaryStep> = None;
        for _ in 0..300 {
            let h = random_tridiag(n, &mut rng, false);
            let step = expm_unitary(&h, dt).unwrap();
            acc = Some(match acc {
                None => step,
                Some(prev) => compose(&prev, &step).unwrap(),
            });
        }
        let total = acc.unwrap();
        let defect = crate::linalg::unitarity_defect(total.matrix());
        assert!(defect <= 1e-7, "defect {defect:e}");
        assert!((total.dt() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn compose_matches_double_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let h = random_tridiag(5, &mut rng, false);
        let one = expm_unitary(&h, 0.2).unwrap();
        let two = expm_unitary(&h, 0.4).unwrap();
        let composed = compose(&one, &one).unwrap();
        assert!(crate::linalg::max_abs_diff(composed.matrix(), two.matrix()) < 1e-12);
    }

    #[test]
    fn apply_dimension_checked() {
        let h = DMatrix::<Complex64>::zeros(3, 3);
        let step = expm_unitary(&h, 1.0).unwrap();
        let bad = DVector::from_element(2, c(1.0, 0.0));
        assert!(matches!(
            step.apply(&bad),
            Err(PropagatorError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matvec_matches_nalgebra() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let h = random_hermitian(7, &mut rng);
        let x: Vec<Complex64> = (0..7)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut out = vec![c(0.0, 0.0); 7];
        matvec_into(&h, &x, &mut out);
        let want = &h * DVector::from_column_slice(&x);
        for i in 0..7 {
            assert!((out[i] - want[i]).norm() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn steps_are_unitary(seed in 0u64..5000, n in 1usize..9, dt in 0.001f64..2.0) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let h = random_tridiag(n, &mut rng, false);
            let step = expm_unitary(&h, dt).unwrap();
            prop_assert!(crate::linalg::unitarity_defect(step.matrix()) <= STEP_DEFECT_BOUND);
        }

        #[test]
        fn apply_preserves_norm(seed in 0u64..5000, n in 2usize..8) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let h = random_tridiag(n, &mut rng, false);
            let step = expm_unitary(&h, 0.31).unwrap();
            let x = DVector::from_iterator(n, (0..n).map(|_| {
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }));
            let y = step.apply(&x).unwrap();
            prop_assert!((y.norm() - x.norm()).abs() <= 1e-10 * (1.0 + x.norm()));
        }
    }
}

//! Closed moment hierarchies of the noise-averaged master equation.
//!
//! Each system is a linear ODE `dphi/dt = G phi` over a fixed basis of
//! normally ordered operator expectations. Builders produce the generator for:
//!
//! * the two-mode first, second, and fourth moment sets (any mean coupling,
//!   any pair correlation within the physical cone),
//! * the N-mode occupation set (requires zero mean couplings),
//! * the N-mode density-density set over `<adag_j adag_{j+k} a_{j+k} a_j>`
//!   (requires zero mean couplings and zero pair correlation).
//!
//! Long-time limits come from the generator's null space matched against the
//! conserved functionals (its left null space), which avoids integrating to
//! large times and is exact in the degenerate case where the relaxation rate
//! of some sector vanishes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ChainSpec, InitialState, ModelError, TimeGrid};
use crate::ode::{self, OdeError, OdeOptions};
use crate::propagator::matvec_into;

/// Floor under squared occupations when forming normalized correlations.
pub const G2_DENOMINATOR_FLOOR: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum MomentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("moment system needs exactly {expected} modes, got {actual}")]
    WrongModeCount { expected: usize, actual: usize },
    #[error("moment system requires zero mean couplings (link {link} has |v| = {value:e})")]
    RequiresZeroMean { link: usize, value: f64 },
    #[error("moment system requires circular noise (link {link} has |kappa| = {value:e})")]
    RequiresCircular { link: usize, value: f64 },
    #[error(transparent)]
    Integration(#[from] OdeError),
    #[error("steady-state projection is singular; generator has a defective zero eigenvalue")]
    SingularProjection,
    #[error("generator has a non-decaying mode (eigenvalue {re:e}{im:+e}i); no steady state")]
    NonDecaying { re: f64, im: f64 },
    #[error("label {0} not present in this moment basis")]
    MissingLabel(String),
    #[error("series have different time grids")]
    GridMismatch,
}

/// Basis element of a moment system. Mode indices are zero based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    /// `<a_j>`
    Amp(usize),
    /// `<adag_j a_j>`
    Occ(usize),
    /// `<adag_i a_j>`, `i != j`
    Coh(usize, usize),
    /// `<adag_p adag_q a_r a_s>` with `p <= q`, `r <= s`
    Quartic { dag: (usize, usize), und: (usize, usize) },
}

impl Label {
    /// Canonical quartic constructor; sorts each index pair.
    pub fn quartic(dag: (usize, usize), und: (usize, usize)) -> Label {
        let d = if dag.0 <= dag.1 { dag } else { (dag.1, dag.0) };
        let u = if und.0 <= und.1 { und } else { (und.1, und.0) };
        Label::Quartic { dag: d, und: u }
    }

    /// Density-density correlator `<adag_j adag_{j+k} a_{j+k} a_j>`.
    pub fn pair(j: usize, k: usize) -> Label {
        Label::quartic((j, j + k), (j, j + k))
    }

    /// Label of the complex conjugate expectation, if it is expressible.
    pub fn conjugate(&self) -> Option<Label> {
        match *self {
            Label::Amp(_) => None,
            Label::Occ(j) => Some(Label::Occ(j)),
            Label::Coh(i, j) => Some(Label::Coh(j, i)),
            Label::Quartic { dag, und } => Some(Label::quartic(und, dag)),
        }
    }

    /// Per-mode powers `(mode, dagger_count, annihilation_count)`.
    fn powers(&self) -> Vec<(usize, u32, u32)> {
        let mut acc: Vec<(usize, u32, u32)> = Vec::new();
        let mut bump = |mode: usize, p: u32, q: u32| {
            if let Some(e) = acc.iter_mut().find(|e| e.0 == mode) {
                e.1 += p;
                e.2 += q;
            } else {
                acc.push((mode, p, q));
            }
        };
        match *self {
            Label::Amp(j) => bump(j, 0, 1),
            Label::Occ(j) => bump(j, 1, 1),
            Label::Coh(i, j) => {
                bump(i, 1, 0);
                bump(j, 0, 1);
            }
            Label::Quartic { dag, und } => {
                bump(dag.0, 1, 0);
                bump(dag.1, 1, 0);
                bump(und.0, 0, 1);
                bump(und.1, 0, 1);
            }
        }
        acc
    }

    pub fn max_mode(&self) -> usize {
        self.powers().iter().map(|e| e.0).max().unwrap_or(0)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Label::Amp(j) => write!(f, "a_{}", j + 1),
            Label::Occ(j) => write!(f, "n_{}", j + 1),
            Label::Coh(i, j) => write!(f, "coh_{}_{}", i + 1, j + 1),
            Label::Quartic { dag, und } => write!(
                f,
                "q_{}{}_{}{}",
                dag.0 + 1,
                dag.1 + 1,
                und.0 + 1,
                und.1 + 1
            ),
        }
    }
}

/// Linear moment system `dphi/dt = G phi` over a labeled basis.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    n_modes: usize,
    labels: Vec<Label>,
    gen: DMatrix<Complex64>,
}

/// Moment trajectories on a time grid.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub labels: Vec<Label>,
    /// One basis vector per time point.
    pub values: Vec<DVector<Complex64>>,
}

impl MomentSeries {
    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn get(&self, time_index: usize, label: Label) -> Result<Complex64, MomentError> {
        let li = self
            .index_of(label)
            .ok_or_else(|| MomentError::MissingLabel(label.to_string()))?;
        Ok(self.values[time_index][li])
    }

    /// Concatenates the bases of two series sharing the same time grid.
    pub fn merge(self, other: MomentSeries) -> Result<MomentSeries, MomentError> {
        if self.times.len() != other.times.len()
            || self
                .times
                .iter()
                .zip(&other.times)
                .any(|(a, b)| (a - b).abs() > 1e-15 * (1.0 + a.abs()))
        {
            return Err(MomentError::GridMismatch);
        }
        let labels: Vec<Label> = self
            .labels
            .iter()
            .chain(other.labels.iter())
            .copied()
            .collect();
        let values = self
            .values
            .into_iter()
            .zip(other.values)
            .map(|(a, b)| {
                DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
            })
            .collect();
        Ok(MomentSeries {
            times: self.times,
            labels,
            values,
        })
    }
}

impl MomentSystem {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn generator(&self) -> &DMatrix<Complex64> {
        &self.gen
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Initial basis vector for a coherent product state with an optional
    /// injected photon, using the mode-factorized expectation values.
    pub fn initial_moments(&self, init: &InitialState) -> Result<DVector<Complex64>, MomentError> {
        if init.n_modes() != self.n_modes {
            return Err(MomentError::Model(ModelError::LengthMismatch {
                field: "amplitudes",
                expected: self.n_modes,
                actual: init.n_modes(),
            }));
        }
        let mut phi = DVector::zeros(self.dim());
        for (i, label) in self.labels.iter().enumerate() {
            let mut val = Complex64::new(1.0, 0.0);
            for (mode, p, q) in label.powers() {
                val *= mode_expectation(init, mode, p, q);
            }
            phi[i] = val;
        }
        Ok(phi)
    }

    /// Integrates the system over the grid with default tolerances.
    pub fn integrate(
        &self,
        phi0: &DVector<Complex64>,
        grid: &TimeGrid,
    ) -> Result<MomentSeries, MomentError> {
        self.integrate_times(phi0, &grid.times(), &OdeOptions::default())
    }

    pub fn integrate_times(
        &self,
        phi0: &DVector<Complex64>,
        times: &[f64],
        opts: &OdeOptions,
    ) -> Result<MomentSeries, MomentError> {
        assert_eq!(phi0.len(), self.dim(), "initial vector dimension");
        let mut values = Vec::with_capacity(times.len());
        let gen = &self.gen;
        ode::integrate_grid(
            &mut |_t, y: &[Complex64], dy: &mut [Complex64]| matvec_into(gen, y, dy),
            phi0.as_slice(),
            times,
            opts,
            &mut |_, _, y| {
                values.push(DVector::from_column_slice(y));
                Ok(())
            },
        )?;
        Ok(MomentSeries {
            times: times.to_vec(),
            labels: self.labels.clone(),
            values,
        })
    }

    /// Infinite-time limit of `exp(G t) phi0`.
    ///
    /// Writes `phi0` as (steady component) + (decaying component) by matching
    /// the conserved functionals. Requires every nonzero eigenvalue of the
    /// generator to have a negative real part.
    pub fn steady_state(
        &self,
        phi0: &DVector<Complex64>,
    ) -> Result<DVector<Complex64>, MomentError> {
        let n = self.dim();
        assert_eq!(phi0.len(), n, "initial vector dimension");
        let scale = self
            .gen
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let eigvals = self
            .gen
            .clone()
            .schur()
            .eigenvalues()
            .ok_or(MomentError::SingularProjection)?;
        for lam in eigvals.iter() {
            if lam.norm() > 1e-9 * scale && lam.re > -1e-12 * scale {
                return Err(MomentError::NonDecaying {
                    re: lam.re,
                    im: lam.im,
                });
            }
        }
        let svd = self.gen.clone().svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
        let null_idx: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s <= 1e-10 * smax.max(1e-300))
            .map(|(i, _)| i)
            .collect();
        if null_idx.is_empty() {
            // every mode decays
            return Ok(DVector::zeros(n));
        }
        let d = null_idx.len();
        // right null vectors: conjugated rows of V^H; left: columns of U
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        let mut rhs = DVector::<Complex64>::zeros(d);
        let rvecs: Vec<DVector<Complex64>> = null_idx
            .iter()
            .map(|&i| DVector::from_iterator(n, (0..n).map(|j| v_t[(i, j)].conj())))
            .collect();
        for (a, &ia) in null_idx.iter().enumerate() {
            let ua = u.column(ia);
            for (b, rb) in rvecs.iter().enumerate() {
                m[(a, b)] = ua.iter().zip(rb.iter()).map(|(x, y)| x.conj() * y).sum();
            }
            rhs[a] = ua.iter().zip(phi0.iter()).map(|(x, y)| x.conj() * y).sum();
        }
        let coeff = m
            .lu()
            .solve(&rhs)
            .ok_or(MomentError::SingularProjection)?;
        let mut out = DVector::zeros(n);
        for (b, rb) in rvecs.iter().enumerate() {
            out += rb * coeff[b];
        }
        Ok(out)
    }
}

fn mode_expectation(init: &InitialState, mode: usize, p: u32, q: u32) -> Complex64 {
    if init.photon_mode() == Some(mode) {
        if p == q && p <= 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    } else {
        let a = init.amplitudes()[mode];
        if p == 0 && q == 0 {
            return Complex64::new(1.0, 0.0);
        }
        if a == Complex64::new(0.0, 0.0) {
            return Complex64::new(0.0, 0.0);
        }
        a.conj().powu(p) * a.powu(q)
    }
}

fn require_modes(spec: &ChainSpec, expected: usize) -> Result<(), MomentError> {
    if spec.n_modes() != expected {
        return Err(MomentError::WrongModeCount {
            expected,
            actual: spec.n_modes(),
        });
    }
    Ok(())
}

fn require_zero_mean(spec: &ChainSpec) -> Result<(), MomentError> {
    for (j, v) in spec.mean_couplings().iter().enumerate() {
        if v.norm() != 0.0 {
            return Err(MomentError::RequiresZeroMean {
                link: j + 1,
                value: v.norm(),
            });
        }
    }
    Ok(())
}

fn require_circular(spec: &ChainSpec) -> Result<(), MomentError> {
    require_zero_mean(spec)?;
    for (j, k) in spec.kappa().iter().enumerate() {
        if k.norm() != 0.0 {
            return Err(MomentError::RequiresCircular {
                link: j + 1,
                value: k.norm(),
            });
        }
    }
    Ok(())
}

/// Amplitude set `[<a_1>, <a_2>]` of a single noisy link.
pub fn two_mode_first(spec: &ChainSpec) -> Result<MomentSystem, MomentError> {
    spec.validate()?;
    require_modes(spec, 2)?;
    let v = spec.mean_couplings()[0];
    let g = spec.gamma()[0];
    let i = Complex64::i();
    let mut gen = DMatrix::zeros(2, 2);
    gen[(0, 0)] = (-g).into();
    gen[(0, 1)] = -i * v;
    gen[(1, 0)] = -i * v.conj();
    gen[(1, 1)] = (-g).into();
    Ok(MomentSystem {
        n_modes: 2,
        labels: vec![Label::Amp(0), Label::Amp(1)],
        gen,
    })
}

/// Quadratic set `[n_1, n_2, <adag_1 a_2>, <adag_2 a_1>]` of a single link.
pub fn two_mode_second(spec: &ChainSpec) -> Result<MomentSystem, MomentError> {
    spec.validate()?;
    require_modes(spec, 2)?;
    let v = spec.mean_couplings()[0];
    let g = Complex64::from(spec.gamma()[0]);
    let k = spec.kappa()[0];
    let i = Complex64::i();
    let rows: [[Complex64; 4]; 4] = [
        [-2.0 * g, 2.0 * g, -i * v, i * v.conj()],
        [2.0 * g, -2.0 * g, i * v, -i * v.conj()],
        [-i * v.conj(), i * v.conj(), -2.0 * g, 2.0 * k.conj()],
        [i * v, -i * v, 2.0 * k, -2.0 * g],
    ];
    let gen = DMatrix::from_fn(4, 4, |r, c| rows[r][c]);
    Ok(MomentSystem {
        n_modes: 2,
        labels: vec![
            Label::Occ(0),
            Label::Occ(1),
            Label::Coh(0, 1),
            Label::Coh(1, 0),
        ],
        gen,
    })
}

/// Quartic set of a single link, ordered
/// `[<adag_1^2 a_1^2>, <adag_2^2 a_2^2>, <adag_1 adag_2 a_2 a_1>,
///   <adag_1^2 a_2^2>, <adag_2^2 a_1^2>, <adag_1^2 a_1 a_2>,
///   <adag_1 adag_2 a_1^2>, <adag_2^2 a_1 a_2>, <adag_1 adag_2 a_2^2>]`.
pub fn two_mode_fourth(spec: &ChainSpec) -> Result<MomentSystem, MomentError> {
    spec.validate()?;
    require_modes(spec, 2)?;
    let v = spec.mean_couplings()[0];
    let g = Complex64::from(spec.gamma()[0]);
    let k = spec.kappa()[0];
    let kc = k.conj();
    let i = Complex64::i();
    let o = Complex64::new(0.0, 0.0);
    let iv = i * v;
    let ivc = i * v.conj();
    let rows: [[Complex64; 9]; 9] = [
        [
            -4.0 * g, o, 8.0 * g, -2.0 * k, -2.0 * kc,
            -2.0 * iv, 2.0 * ivc, o, o,
        ],
        [
            o, -4.0 * g, 8.0 * g, -2.0 * k, -2.0 * kc,
            o, o, -2.0 * ivc, 2.0 * iv,
        ],
        [
            2.0 * g, 2.0 * g, -8.0 * g, 2.0 * k, 2.0 * kc,
            iv, -ivc, ivc, -iv,
        ],
        [
            -2.0 * kc, -2.0 * kc, 8.0 * kc, -4.0 * g, o,
            -2.0 * ivc, o, o, 2.0 * ivc,
        ],
        [
            -2.0 * k, -2.0 * k, 8.0 * k, o, -4.0 * g,
            o, 2.0 * iv, -2.0 * iv, o,
        ],
        [
            -ivc, o, 2.0 * ivc, -iv, o,
            -6.0 * g, 4.0 * kc, -2.0 * kc, 4.0 * g,
        ],
        [
            iv, o, -2.0 * iv, o, ivc,
            4.0 * k, -6.0 * g, 4.0 * g, -2.0 * k,
        ],
        [
            o, -iv, 2.0 * iv, o, -ivc,
            -2.0 * k, 4.0 * g, -6.0 * g, 4.0 * k,
        ],
        [
            o, ivc, -2.0 * ivc, iv, o,
            4.0 * g, -2.0 * kc, 4.0 * kc, -6.0 * g,
        ],
    ];
    let gen = DMatrix::from_fn(9, 9, |r, c| rows[r][c]);
    Ok(MomentSystem {
        n_modes: 2,
        labels: vec![
            Label::quartic((0, 0), (0, 0)),
            Label::quartic((1, 1), (1, 1)),
            Label::quartic((0, 1), (0, 1)),
            Label::quartic((0, 0), (1, 1)),
            Label::quartic((1, 1), (0, 0)),
            Label::quartic((0, 0), (0, 1)),
            Label::quartic((0, 1), (0, 0)),
            Label::quartic((1, 1), (0, 1)),
            Label::quartic((0, 1), (1, 1)),
        ],
        gen,
    })
}

/// Occupation set `[n_1 .. n_M]` of a zero-mean chain of any length.
pub fn nmode_photon(spec: &ChainSpec) -> Result<MomentSystem, MomentError> {
    spec.validate()?;
    require_zero_mean(spec)?;
    let m = spec.n_modes();
    let gamma = spec.gamma();
    // rate on the link left/right of mode j; zero off the chain ends
    let gl = |j: usize| if j == 0 { 0.0 } else { gamma[j - 1] };
    let gr = |j: usize| if j + 1 < m { gamma[j] } else { 0.0 };
    let mut gen = DMatrix::zeros(m, m);
    for j in 0..m {
        gen[(j, j)] = Complex64::from(-2.0 * (gl(j) + gr(j)));
        if j > 0 {
            gen[(j, j - 1)] = Complex64::from(2.0 * gl(j));
        }
        if j + 1 < m {
            gen[(j, j + 1)] = Complex64::from(2.0 * gr(j));
        }
    }
    Ok(MomentSystem {
        n_modes: m,
        labels: (0..m).map(Label::Occ).collect(),
        gen,
    })
}

/// Density-density set `n^k_j = <adag_j adag_{j+k} a_{j+k} a_j>` of a
/// circular zero-mean chain, ordered by separation `k` then site `j`.
pub fn nmode_fourth(spec: &ChainSpec) -> Result<MomentSystem, MomentError> {
    spec.validate()?;
    require_circular(spec)?;
    let m = spec.n_modes();
    let gamma = spec.gamma();
    let g = |link: isize| -> f64 {
        if link < 0 || link as usize >= m - 1 {
            0.0
        } else {
            gamma[link as usize]
        }
    };
    let dim = m * (m + 1) / 2;
    let offset = |k: usize| k * (2 * m - k + 1) / 2;
    let idx = |k: usize, j: usize| offset(k) + j;
    let mut labels = Vec::with_capacity(dim);
    for k in 0..m {
        for j in 0..m - k {
            labels.push(Label::pair(j, k));
        }
    }
    let mut gen = DMatrix::<Complex64>::zeros(dim, dim);
    let mut add = |r: usize, c: usize, val: f64| {
        gen[(r, c)] += Complex64::from(val);
    };
    for j in 0..m {
        // same-site pair density couples to adjacent k = 1 correlators
        let r = idx(0, j);
        let (l, rr) = (j as isize - 1, j as isize);
        add(r, r, -4.0 * (g(l) + g(rr)));
        if g(l) != 0.0 {
            add(r, idx(1, j - 1), 8.0 * g(l));
        }
        if g(rr) != 0.0 {
            add(r, idx(1, j), 8.0 * g(rr));
        }
    }
    for k in 1..m {
        for j in 0..m - k {
            let r = idx(k, j);
            let (jl, jr) = (j as isize - 1, j as isize);
            let (ul, ur) = ((j + k) as isize - 1, (j + k) as isize);
            if k == 1 {
                add(r, r, -2.0 * (g(jl) + 4.0 * g(jr) + g(ur)));
                add(r, idx(0, j), 2.0 * g(jr));
                add(r, idx(0, j + 1), 2.0 * g(jr));
                if g(jl) != 0.0 {
                    add(r, idx(2, j - 1), 2.0 * g(jl));
                }
                if g(ur) != 0.0 {
                    add(r, idx(2, j), 2.0 * g(ur));
                }
            } else {
                add(r, r, -2.0 * (g(jl) + g(jr) + g(ur) + g(ul)));
                if g(jl) != 0.0 {
                    add(r, idx(k + 1, j - 1), 2.0 * g(jl));
                }
                add(r, idx(k - 1, j + 1), 2.0 * g(jr));
                if g(ur) != 0.0 {
                    add(r, idx(k + 1, j), 2.0 * g(ur));
                }
                add(r, idx(k - 1, j), 2.0 * g(ul));
            }
        }
    }
    Ok(MomentSystem {
        n_modes: m,
        labels,
        gen,
    })
}

/// Normalized same-site correlation `g2_j = <adag_j^2 a_j^2> / n_j^2` from a
/// quartic series and an occupation series on the same grid. Undefined points
/// (occupation squared below the floor) come out as NaN.
pub fn g2_series(
    quartic: &MomentSeries,
    occ: &MomentSeries,
    mode: usize,
) -> Result<Vec<f64>, MomentError> {
    if quartic.times.len() != occ.times.len()
        || quartic
            .times
            .iter()
            .zip(&occ.times)
            .any(|(a, b)| (a - b).abs() > 1e-15 * (1.0 + a.abs()))
    {
        return Err(MomentError::GridMismatch);
    }
    let ql = Label::pair(mode, 0);
    let ol = Label::Occ(mode);
    let qi = quartic
        .index_of(ql)
        .ok_or_else(|| MomentError::MissingLabel(ql.to_string()))?;
    let oi = occ
        .index_of(ol)
        .ok_or_else(|| MomentError::MissingLabel(ol.to_string()))?;
    Ok((0..quartic.times.len())
        .map(|t| {
            let q = quartic.values[t][qi].re;
            let n = occ.values[t][oi].re;
            let n2 = n * n;
            if n2 < G2_DENOMINATOR_FLOOR {
                f64::NAN
            } else {
                q / n2
            }
        })
        .collect())
}

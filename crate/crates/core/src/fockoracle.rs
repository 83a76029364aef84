//! Exact reference dynamics in a truncated number-state space.
//!
//! The basis keeps every occupation vector whose total does not exceed a
//! cutoff. Both the coupling Hamiltonian and the hop-type damping channels
//! conserve the total occupation, so truncating by total is exact: the only
//! approximation anywhere in this module is the weight the initial state
//! itself loses to the cutoff, which is measured and bounded at construction.
//!
//! Two evolutions are offered. [`evolve_schrodinger`] propagates a state
//! vector under piecewise-constant sampled couplings, one unitary per
//! interval, and adjudicates the amplitude-level ensemble code realization by
//! realization. [`evolve_lindblad`] integrates the averaged density-matrix
//! flow and adjudicates the moment generators without any ensemble noise.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ChainSpec, InitialState, ModelError};
use crate::moments::G2_DENOMINATOR_FLOOR;
use crate::ode::{integrate_grid, OdeError, OdeOptions};

/// Largest admissible probability lost by the initial state to the cutoff.
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;
/// Largest admissible probability sitting on the outermost total-occupation
/// layer during state-vector evolution.
pub const DEFAULT_LEAK_TOL: f64 = 1e-4;

const MAX_BASIS_DIM: usize = 200_000;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error)]
pub enum FockError {
    #[error("basis of {dim} states exceeds the limit of {max} for this operation")]
    TooLarge { dim: usize, max: usize },
    #[error("expected a state over {expected} modes, got {actual}")]
    WrongModeCount { expected: usize, actual: usize },
    #[error("expected couplings for {expected} links, got {actual}")]
    WrongLinkCount { expected: usize, actual: usize },
    #[error("vector of length {actual} does not match the basis dimension {expected}")]
    WrongDimension { expected: usize, actual: usize },
    #[error("initial state loses probability {tail:.3e} to the cutoff (tolerance {tol:.3e})")]
    TailTooLarge { tail: f64, tol: f64 },
    #[error("cutoff layer holds probability {weight:.3e} after interval {interval} (tolerance {tol:.3e})")]
    CutoffLeak {
        interval: usize,
        weight: f64,
        tol: f64,
    },
    #[error("interval length {value} is not a positive finite number")]
    BadInterval { value: f64 },
    #[error("matrix exponential did not converge within {0} terms")]
    ExpNotConverged(usize),
    #[error("trace drifted by {drift:.3e} at t = {t}")]
    TraceDrift { t: f64, drift: f64 },
    #[error("density matrix hermiticity defect {defect:.3e} at t = {t}")]
    HermiticityLost { t: f64, defect: f64 },
    #[error("density matrix eigenvalue {value:.3e} below floor at t = {t}")]
    NegativeDensity { t: f64, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

/// Number-state basis restricted to total occupation `<= n_total_max`.
///
/// States are enumerated lexicographically with mode 0 most significant, so
/// the ordering is reproducible across runs and machines.
#[derive(Debug, Clone)]
pub struct FockBasis {
    n_modes: usize,
    n_total_max: u32,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl FockBasis {
    pub fn new(n_modes: usize, n_total_max: u32) -> Result<Self, FockError> {
        if n_modes < 2 {
            return Err(FockError::Model(ModelError::TooFewModes(n_modes)));
        }
        let dim = simplex_count(n_modes, n_total_max as usize);
        if dim > MAX_BASIS_DIM {
            return Err(FockError::TooLarge {
                dim,
                max: MAX_BASIS_DIM,
            });
        }
        let mut states = Vec::with_capacity(dim);
        let mut occ = vec![0u32; n_modes];
        fill_states(&mut states, &mut occ, 0, n_total_max);
        debug_assert_eq!(states.len(), dim);
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(FockBasis {
            n_modes,
            n_total_max,
            states,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_total_max(&self) -> u32 {
        self.n_total_max
    }

    pub fn occupation(&self, state: usize) -> &[u32] {
        &self.states[state]
    }

    pub fn index_of(&self, occupation: &[u32]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    pub fn total(&self, state: usize) -> u32 {
        self.states[state].iter().sum()
    }

    /// Annihilation operator of one mode, `sqrt(n) |n - 1>` columnwise.
    pub fn annihilation(&self, mode: usize) -> Result<UnitSparseOp, FockError> {
        if mode >= self.n_modes {
            return Err(FockError::WrongModeCount {
                expected: self.n_modes,
                actual: mode + 1,
            });
        }
        let mut cols = vec![None; self.dim()];
        let mut target = vec![0u32; self.n_modes];
        for (s, occ) in self.states.iter().enumerate() {
            let n = occ[mode];
            if n == 0 {
                continue;
            }
            target.copy_from_slice(occ);
            target[mode] = n - 1;
            let t = self.index[&target];
            cols[s] = Some((t as u32, (n as f64).sqrt()));
        }
        Ok(UnitSparseOp {
            dim: self.dim(),
            cols,
        })
    }

    /// Hop operator moving one quantum from `link + 1` to `link`. Conserves
    /// the total occupation, so it never leaves the basis.
    pub fn hop(&self, link: usize) -> Result<UnitSparseOp, FockError> {
        if link + 1 >= self.n_modes {
            return Err(FockError::WrongLinkCount {
                expected: self.n_modes - 1,
                actual: link + 1,
            });
        }
        let mut cols = vec![None; self.dim()];
        let mut target = vec![0u32; self.n_modes];
        for (s, occ) in self.states.iter().enumerate() {
            let n_from = occ[link + 1];
            if n_from == 0 {
                continue;
            }
            let n_to = occ[link];
            target.copy_from_slice(occ);
            target[link + 1] = n_from - 1;
            target[link] = n_to + 1;
            let t = self.index[&target];
            let val = (n_from as f64 * (n_to as f64 + 1.0)).sqrt();
            cols[s] = Some((t as u32, val));
        }
        Ok(UnitSparseOp {
            dim: self.dim(),
            cols,
        })
    }

    /// Hamiltonian `sum_j v_j (hop_j) + conj(v_j) (hop_j)^T` for one set of
    /// link couplings.
    pub fn coupling_hamiltonian(&self, couplings: &[Complex64]) -> Result<SparseHam, FockError> {
        if couplings.len() != self.n_modes - 1 {
            return Err(FockError::WrongLinkCount {
                expected: self.n_modes - 1,
                actual: couplings.len(),
            });
        }
        let d = self.dim();
        let mut cols: Vec<Vec<(u32, Complex64)>> = vec![Vec::new(); d];
        let mut target = vec![0u32; self.n_modes];
        for (s, occ) in self.states.iter().enumerate() {
            for (j, &v) in couplings.iter().enumerate() {
                if v == ZERO {
                    continue;
                }
                // forward hop j+1 -> j carries v_j
                if occ[j + 1] > 0 {
                    target.copy_from_slice(occ);
                    target[j + 1] -= 1;
                    target[j] += 1;
                    let amp = (occ[j + 1] as f64 * (occ[j] as f64 + 1.0)).sqrt();
                    cols[s].push((self.index[&target] as u32, v * amp));
                }
                // reverse hop j -> j+1 carries conj(v_j)
                if occ[j] > 0 {
                    target.copy_from_slice(occ);
                    target[j] -= 1;
                    target[j + 1] += 1;
                    let amp = (occ[j] as f64 * (occ[j + 1] as f64 + 1.0)).sqrt();
                    cols[s].push((self.index[&target] as u32, v.conj() * amp));
                }
            }
        }
        let norm1 = cols
            .iter()
            .map(|c| c.iter().map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(SparseHam { dim: d, cols, norm1 })
    }

    /// Indices of the states sitting exactly on the cutoff layer.
    fn top_layer(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&s| self.total(s) == self.n_total_max)
            .collect()
    }
}

fn fill_states(states: &mut Vec<Vec<u32>>, occ: &mut Vec<u32>, mode: usize, remaining: u32) {
    if mode == occ.len() - 1 {
        for n in 0..=remaining {
            occ[mode] = n;
            states.push(occ.clone());
        }
        occ[mode] = 0;
        return;
    }
    for n in 0..=remaining {
        occ[mode] = n;
        fill_states(states, occ, mode + 1, remaining - n);
    }
    occ[mode] = 0;
}

/// Number of occupation vectors of `n_modes` nonnegative integers summing to
/// at most `n_max`, saturating well above any dimension this module accepts.
fn simplex_count(n_modes: usize, n_max: usize) -> usize {
    let mut acc: u128 = 1;
    for i in 1..=n_modes {
        acc = acc.saturating_mul((n_max + i) as u128) / i as u128;
        if acc > (2 * MAX_BASIS_DIM) as u128 {
            return 2 * MAX_BASIS_DIM;
        }
    }
    acc as usize
}

/// Linear map with at most one nonzero per column; closed under transpose and
/// composition, which covers every ladder product the dissipators need.
#[derive(Debug, Clone)]
pub struct UnitSparseOp {
    dim: usize,
    cols: Vec<Option<(u32, f64)>>,
}

impl UnitSparseOp {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, col: usize) -> Option<(usize, f64)> {
        self.cols[col].map(|(r, v)| (r as usize, v))
    }

    pub fn apply(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::from_element(self.dim, ZERO);
        for (c, e) in self.cols.iter().enumerate() {
            if let Some((r, v)) = e {
                out[*r as usize] += x[c] * *v;
            }
        }
        out
    }

    /// Adjoint map. Valid because the ladder products used here never send
    /// two states to the same target.
    pub fn transpose(&self) -> UnitSparseOp {
        let mut cols = vec![None; self.dim];
        for (c, e) in self.cols.iter().enumerate() {
            if let Some((r, v)) = e {
                debug_assert!(cols[*r as usize].is_none());
                cols[*r as usize] = Some((c as u32, *v));
            }
        }
        UnitSparseOp {
            dim: self.dim,
            cols,
        }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &UnitSparseOp) -> UnitSparseOp {
        let mut cols = vec![None; self.dim];
        for (c, e) in first.cols.iter().enumerate() {
            if let Some((r1, v1)) = e {
                if let Some((r2, v2)) = self.cols[*r1 as usize] {
                    cols[c] = Some((r2, v1 * v2));
                }
            }
        }
        UnitSparseOp {
            dim: self.dim,
            cols,
        }
    }
}

/// Column-sparse Hermitian matrix over the number-state basis.
#[derive(Debug, Clone)]
pub struct SparseHam {
    dim: usize,
    cols: Vec<Vec<(u32, Complex64)>>,
    norm1: f64,
}

impl SparseHam {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Max column absolute sum; bounds the spectral norm.
    pub fn norm1(&self) -> f64 {
        self.norm1
    }

    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        out.fill(ZERO);
        for (c, entries) in self.cols.iter().enumerate() {
            let xc = x[c];
            if xc == ZERO {
                continue;
            }
            for (r, v) in entries {
                out[*r as usize] += *v * xc;
            }
        }
    }
}

/// Builds the truncated product state: coherent amplitude per mode, one
/// quantum on the injection mode when the initial state carries one. Returns
/// the state normalized inside the basis together with the probability the
/// untruncated state holds beyond the cutoff.
pub fn product_state(
    basis: &FockBasis,
    init: &InitialState,
    tail_tol: f64,
) -> Result<(DVector<Complex64>, f64), FockError> {
    if init.n_modes() != basis.n_modes {
        return Err(FockError::WrongModeCount {
            expected: basis.n_modes,
            actual: init.n_modes(),
        });
    }
    let n_max = basis.n_total_max as usize;
    let m = basis.n_modes;
    let mut tables: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut table = vec![ZERO; n_max + 1];
        if init.photon_mode() == Some(j) {
            if n_max >= 1 {
                table[1] = Complex64::new(1.0, 0.0);
            }
        } else {
            let alpha = init.amplitudes()[j];
            table[0] = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
            for n in 1..=n_max {
                table[n] = table[n - 1] * alpha / (n as f64).sqrt();
            }
        }
        tables.push(table);
    }
    let mut psi = DVector::from_element(basis.dim(), ZERO);
    for (s, occ) in basis.states.iter().enumerate() {
        let mut amp = Complex64::new(1.0, 0.0);
        for (j, &n) in occ.iter().enumerate() {
            amp *= tables[j][n as usize];
        }
        psi[s] = amp;
    }
    let norm2 = psi.norm_squared();
    let tail = (1.0 - norm2).max(0.0);
    if tail > tail_tol {
        return Err(FockError::TailTooLarge {
            tail,
            tol: tail_tol,
        });
    }
    psi /= Complex64::new(norm2.sqrt(), 0.0);
    Ok((psi, tail))
}

/// Per-mode occupations `<n_j>` of a state vector.
pub fn occupations(basis: &FockBasis, psi: &DVector<Complex64>) -> Result<Vec<f64>, FockError> {
    check_dim(basis, psi.len())?;
    let mut out = vec![0.0; basis.n_modes];
    for (s, occ) in basis.states.iter().enumerate() {
        let w = psi[s].norm_sqr();
        if w == 0.0 {
            continue;
        }
        for (j, &n) in occ.iter().enumerate() {
            out[j] += w * n as f64;
        }
    }
    Ok(out)
}

/// Per-mode same-site pair densities `<n_j (n_j - 1)>` of a state vector.
pub fn pair_densities(basis: &FockBasis, psi: &DVector<Complex64>) -> Result<Vec<f64>, FockError> {
    check_dim(basis, psi.len())?;
    let mut out = vec![0.0; basis.n_modes];
    for (s, occ) in basis.states.iter().enumerate() {
        let w = psi[s].norm_sqr();
        if w == 0.0 {
            continue;
        }
        for (j, &n) in occ.iter().enumerate() {
            out[j] += w * n as f64 * (n as f64 - 1.0);
        }
    }
    Ok(out)
}

fn check_dim(basis: &FockBasis, actual: usize) -> Result<(), FockError> {
    if actual != basis.dim() {
        return Err(FockError::WrongDimension {
            expected: basis.dim(),
            actual,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SchrodingerOptions {
    /// Bound on the probability allowed to sit on the cutoff layer.
    pub leak_tol: f64,
    /// Series length cap for the scaled exponential.
    pub max_terms: usize,
}

impl Default for SchrodingerOptions {
    fn default() -> Self {
        SchrodingerOptions {
            leak_tol: DEFAULT_LEAK_TOL,
            max_terms: 60,
        }
    }
}

/// Propagates a state vector through one unitary per interval, rebuilding the
/// Hamiltonian from that interval's couplings. Returns the state at every
/// grid point, the initial state first.
pub fn evolve_schrodinger(
    basis: &FockBasis,
    psi0: &DVector<Complex64>,
    couplings_per_interval: &[Vec<Complex64>],
    dt: f64,
    opts: &SchrodingerOptions,
) -> Result<Vec<DVector<Complex64>>, FockError> {
    check_dim(basis, psi0.len())?;
    if !dt.is_finite() || !(dt > 0.0) {
        return Err(FockError::BadInterval { value: dt });
    }
    let top = basis.top_layer();
    let mut psi = psi0.clone();
    let mut term = DVector::from_element(basis.dim(), ZERO);
    let mut tmp = DVector::from_element(basis.dim(), ZERO);
    let mut out = Vec::with_capacity(couplings_per_interval.len() + 1);
    out.push(psi.clone());
    for (i, cs) in couplings_per_interval.iter().enumerate() {
        let h = basis.coupling_hamiltonian(cs)?;
        apply_exp(&h, dt, &mut psi, &mut term, &mut tmp, opts.max_terms)?;
        let leak: f64 = top.iter().map(|&s| psi[s].norm_sqr()).sum();
        if leak > opts.leak_tol {
            return Err(FockError::CutoffLeak {
                interval: i,
                weight: leak,
                tol: opts.leak_tol,
            });
        }
        out.push(psi.clone());
    }
    Ok(out)
}

/// Applies `exp(-i H dt)` by a scaled Taylor series: the interval is split
/// until `|H| dt` per substep is at most 1/2, where the series reaches
/// machine precision in a few dozen terms.
fn apply_exp(
    h: &SparseHam,
    dt: f64,
    psi: &mut DVector<Complex64>,
    term: &mut DVector<Complex64>,
    tmp: &mut DVector<Complex64>,
    max_terms: usize,
) -> Result<(), FockError> {
    let scale = h.norm1 * dt;
    let splits = if scale <= 0.5 {
        0
    } else {
        (scale / 0.5).log2().ceil() as u32
    };
    let steps = 1u64 << splits.min(62);
    let z = Complex64::new(0.0, -dt / steps as f64);
    for _ in 0..steps {
        term.copy_from(psi);
        let mut converged = false;
        for k in 1..=max_terms {
            h.apply_into(term.as_slice(), tmp.as_mut_slice());
            let f = z / k as f64;
            for (t, s) in term.iter_mut().zip(tmp.iter()) {
                *t = *s * f;
            }
            for (p, t) in psi.iter_mut().zip(term.iter()) {
                *p += *t;
            }
            if term.norm() <= 1e-16 * psi.norm() {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(FockError::ExpNotConverged(max_terms));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LindbladOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Bound on the probability the initial state loses to the cutoff.
    pub tail_tol: f64,
    /// Bound on `|tr rho - 1|` at grid points.
    pub trace_tol: f64,
    /// Bound on the hermiticity defect at grid points.
    pub herm_tol: f64,
    /// Eigenvalues of the density matrix may not fall below this.
    pub positivity_floor: f64,
    /// Full eigendecompositions run every this many grid points.
    pub eigen_stride: usize,
    /// Densest basis admitted; the flow costs `dim^2` state entries.
    pub max_density_dim: usize,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        LindbladOptions {
            rtol: 1e-9,
            atol: 1e-12,
            tail_tol: DEFAULT_TAIL_TOL,
            trace_tol: 1e-7,
            herm_tol: 1e-8,
            positivity_floor: -1e-8,
            eigen_stride: 10,
            max_density_dim: 512,
        }
    }
}

/// Diagonal observables of the density-matrix flow, with the worst
/// self-consistency defects seen at the checked grid points.
#[derive(Debug, Clone)]
pub struct DensitySeries {
    pub times: Vec<f64>,
    /// `[time][mode]` occupations.
    pub n: Vec<Vec<f64>>,
    /// `[time][mode]` pair densities `<n (n - 1)>`.
    pub pair: Vec<Vec<f64>>,
    /// `[time][mode]` normalized pair correlations, NaN where undefined.
    pub g2: Vec<Vec<f64>>,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

struct LinkKernel {
    gamma: f64,
    kappa: Complex64,
    l: UnitSparseOp,
    ldag: UnitSparseOp,
    l2: UnitSparseOp,
    ldag2: UnitSparseOp,
    /// Diagonal of `L L^H + L^H L`.
    diag: Vec<f64>,
}

/// Integrates the averaged density-matrix flow
///
/// ```text
/// d rho / dt = -i [H, rho]
///            + sum_j gamma_j (2 L rho L^H + 2 L^H rho L - {L L^H + L^H L, rho})
///            + sum_j kappa_j (2 L rho L - L^2 rho - rho L^2) + h.c.-pair
/// ```
///
/// with `L = hop_j`, reporting diagonal observables at every grid point.
/// Trace and hermiticity are checked at every grid point, full positivity on
/// a stride; any violation aborts the run with a typed error.
pub fn evolve_lindblad(
    basis: &FockBasis,
    chain: &ChainSpec,
    init: &InitialState,
    times: &[f64],
    opts: &LindbladOptions,
) -> Result<DensitySeries, FockError> {
    if chain.n_modes() != basis.n_modes {
        return Err(FockError::WrongModeCount {
            expected: basis.n_modes,
            actual: chain.n_modes(),
        });
    }
    let d = basis.dim();
    if d > opts.max_density_dim {
        return Err(FockError::TooLarge {
            dim: d,
            max: opts.max_density_dim,
        });
    }
    let (psi, _tail) = product_state(basis, init, opts.tail_tol)?;

    // rho = psi psi^H, column major
    let mut y0 = vec![ZERO; d * d];
    for q in 0..d {
        let cq = psi[q].conj();
        for p in 0..d {
            y0[q * d + p] = psi[p] * cq;
        }
    }

    let mut kernels = Vec::with_capacity(basis.n_modes - 1);
    for j in 0..basis.n_modes - 1 {
        let l = basis.hop(j)?;
        let ldag = l.transpose();
        let l2 = l.compose(&l);
        let ldag2 = ldag.compose(&ldag);
        let mut diag = vec![0.0; d];
        for c in 0..d {
            if let Some((_, v)) = l.cols[c] {
                diag[c] += v * v;
            }
            if let Some((_, v)) = ldag.cols[c] {
                diag[c] += v * v;
            }
        }
        kernels.push(LinkKernel {
            gamma: chain.gamma()[j],
            kappa: chain.kappa()[j],
            l,
            ldag,
            l2,
            ldag2,
            diag,
        });
    }
    let ham = if chain.mean_couplings().iter().any(|v| *v != ZERO) {
        Some(basis.coupling_hamiltonian(chain.mean_couplings())?)
    } else {
        None
    };

    let mut rhs = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        dy.fill(ZERO);
        if let Some(h) = &ham {
            commutator_into(h, y, dy, d);
        }
        for k in &kernels {
            if k.gamma != 0.0 {
                let c = Complex64::new(2.0 * k.gamma, 0.0);
                sandwich_into(&k.l, c, y, dy, d);
                sandwich_into(&k.ldag, c, y, dy, d);
                for q in 0..d {
                    for p in 0..d {
                        let w = k.gamma * (k.diag[p] + k.diag[q]);
                        dy[q * d + p] -= y[q * d + p] * w;
                    }
                }
            }
            if k.kappa != ZERO {
                let two_k = k.kappa * 2.0;
                let two_kc = k.kappa.conj() * 2.0;
                skew_sandwich_into(&k.l, two_k, y, dy, d);
                skew_sandwich_into(&k.ldag, two_kc, y, dy, d);
                shift_left_into(&k.l2, -k.kappa, y, dy, d);
                shift_right_into(&k.l2, -k.kappa, y, dy, d);
                shift_left_into(&k.ldag2, -k.kappa.conj(), y, dy, d);
                shift_right_into(&k.ldag2, -k.kappa.conj(), y, dy, d);
            }
        }
    };

    let n_points = times.len();
    let m = basis.n_modes;
    let mut series = DensitySeries {
        times: times.to_vec(),
        n: Vec::with_capacity(n_points),
        pair: Vec::with_capacity(n_points),
        g2: Vec::with_capacity(n_points),
        max_trace_drift: 0.0,
        max_hermiticity_defect: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    let mut violation: Option<FockError> = None;
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        ..OdeOptions::default()
    };
    let stride = opts.eigen_stride.max(1);

    let result = integrate_grid(
        &mut rhs,
        &y0,
        times,
        &ode_opts,
        &mut |idx: usize, t: f64, y: &[Complex64]| {
            let mut tr = ZERO;
            for p in 0..d {
                tr += y[p * d + p];
            }
            let drift = (tr - Complex64::new(1.0, 0.0)).norm();
            series.max_trace_drift = series.max_trace_drift.max(drift);
            if drift > opts.trace_tol {
                violation = Some(FockError::TraceDrift { t, drift });
                return Err("trace drift".into());
            }
            let mut defect: f64 = 0.0;
            for q in 0..d {
                for p in 0..=q {
                    let diff = (y[q * d + p] - y[p * d + q].conj()).norm();
                    defect = defect.max(diff);
                }
            }
            series.max_hermiticity_defect = series.max_hermiticity_defect.max(defect);
            if defect > opts.herm_tol {
                violation = Some(FockError::HermiticityLost { t, defect });
                return Err("hermiticity".into());
            }
            let mut n_row = vec![0.0; m];
            let mut g_row = vec![0.0; m];
            for (s, occ) in basis.states.iter().enumerate() {
                let w = y[s * d + s].re;
                for (j, &n) in occ.iter().enumerate() {
                    n_row[j] += w * n as f64;
                    g_row[j] += w * n as f64 * (n as f64 - 1.0);
                }
            }
            let g2_row: Vec<f64> = n_row
                .iter()
                .zip(&g_row)
                .map(|(&nv, &gv)| {
                    let d2 = nv * nv;
                    if d2 < G2_DENOMINATOR_FLOOR {
                        f64::NAN
                    } else {
                        gv / d2
                    }
                })
                .collect();
            series.n.push(n_row);
            series.pair.push(g_row);
            series.g2.push(g2_row);
            if idx % stride == 0 || idx + 1 == n_points {
                let rho = DMatrix::from_column_slice(d, d, y);
                let herm = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
                let eigs = herm.symmetric_eigen().eigenvalues;
                let lo = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                series.min_eigenvalue = series.min_eigenvalue.min(lo);
                if lo < opts.positivity_floor {
                    violation = Some(FockError::NegativeDensity { t, value: lo });
                    return Err("positivity".into());
                }
            }
            Ok(())
        },
    );
    match result {
        Ok(()) => Ok(series),
        Err(e) => Err(violation.unwrap_or(FockError::Integration(e))),
    }
}

/// `dy += -i (H y - y H)` over column-major `d x d` matrices.
fn commutator_into(h: &SparseHam, y: &[Complex64], dy: &mut [Complex64], d: usize) {
    let mi = Complex64::new(0.0, -1.0);
    for q in 0..d {
        let col = &y[q * d..(q + 1) * d];
        let out = &mut dy[q * d..(q + 1) * d];
        for p in 0..d {
            let x = col[p];
            if x == ZERO {
                continue;
            }
            for (a, v) in &h.cols[p] {
                out[*a as usize] += mi * *v * x;
            }
        }
    }
    let i = Complex64::new(0.0, 1.0);
    for b in 0..d {
        for (q, v) in &h.cols[b] {
            let q = *q as usize;
            let f = i * *v;
            for p in 0..d {
                dy[b * d + p] += f * y[q * d + p];
            }
        }
    }
}

/// `dy += c A y A^H` for unit-sparse real `A`.
fn sandwich_into(a: &UnitSparseOp, c: Complex64, y: &[Complex64], dy: &mut [Complex64], d: usize) {
    for q in 0..d {
        let Some((rq, vq)) = a.cols[q] else { continue };
        let rq = rq as usize;
        for p in 0..d {
            let Some((rp, vp)) = a.cols[p] else { continue };
            dy[rq * d + rp as usize] += c * (vp * vq) * y[q * d + p];
        }
    }
}

/// `dy += c A y A` for unit-sparse real `A`.
fn skew_sandwich_into(
    a: &UnitSparseOp,
    c: Complex64,
    y: &[Complex64],
    dy: &mut [Complex64],
    d: usize,
) {
    for b in 0..d {
        let Some((rb, vb)) = a.cols[b] else { continue };
        let rb = rb as usize;
        for p in 0..d {
            let Some((rp, vp)) = a.cols[p] else { continue };
            dy[b * d + rp as usize] += c * (vp * vb) * y[rb * d + p];
        }
    }
}

/// `dy += c A y` for unit-sparse real `A`.
fn shift_left_into(
    a: &UnitSparseOp,
    c: Complex64,
    y: &[Complex64],
    dy: &mut [Complex64],
    d: usize,
) {
    for q in 0..d {
        for p in 0..d {
            let Some((rp, vp)) = a.cols[p] else { continue };
            dy[q * d + rp as usize] += c * vp * y[q * d + p];
        }
    }
}

/// `dy += c y A` for unit-sparse real `A`.
fn shift_right_into(
    a: &UnitSparseOp,
    c: Complex64,
    y: &[Complex64],
    dy: &mut [Complex64],
    d: usize,
) {
    for b in 0..d {
        let Some((rb, vb)) = a.cols[b] else { continue };
        let rb = rb as usize;
        for p in 0..d {
            dy[b * d + p] += c * vb * y[rb * d + p];
        }
    }
}

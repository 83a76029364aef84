//! Problem description shared by all solver routes: chain parameters, initial
//! state, and the output time grid.
//!
//! Index conventions: modes and links are 0-based everywhere in this crate.
//! Link `j` couples modes `j` and `j + 1`, so a chain of `M` modes has `M - 1`
//! links. Error messages render 1-based numbers because that is how the
//! command-line layer labels columns.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("chain needs at least 2 modes, got {0}")]
    TooFewModes(usize),
    #[error("{field} has length {actual}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("gamma for link {link} is {value}, must be >= 0")]
    NegativeGamma { link: usize, value: f64 },
    #[error("|kappa| = {kappa_abs} for link {link} exceeds gamma = {gamma}")]
    KappaExceedsGamma {
        link: usize,
        kappa_abs: f64,
        gamma: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("single-photon mode {mode} out of range for {n_modes} modes")]
    PhotonModeOutOfRange { mode: usize, n_modes: usize },
    #[error("single-photon mode {mode} must carry zero coherent amplitude")]
    PhotonModeNotVacuum { mode: usize },
    #[error("time grid needs t_max > 0 and at least 1 step (got t_max = {t_max}, steps = {n_steps})")]
    BadTimeGrid { t_max: f64, n_steps: usize },
}

/// Rates are per link: `gamma[j]` is the total fluctuation strength of link `j`
/// and `kappa[j]` the anomalous one. Physical noise satisfies `|kappa| <= gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    mean_couplings: Vec<Complex64>,
    gamma: Vec<f64>,
    kappa: Vec<Complex64>,
}

impl ChainSpec {
    pub fn new(
        mean_couplings: Vec<Complex64>,
        gamma: Vec<f64>,
        kappa: Vec<Complex64>,
    ) -> Result<Self, ModelError> {
        let spec = ChainSpec {
            mean_couplings,
            gamma,
            kappa,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Uniform chain: every link has mean coupling `v_bar` and rates `(gamma, kappa)`.
    pub fn uniform(
        n_modes: usize,
        v_bar: Complex64,
        gamma: f64,
        kappa: Complex64,
    ) -> Result<Self, ModelError> {
        if n_modes < 2 {
            return Err(ModelError::TooFewModes(n_modes));
        }
        let n = n_modes - 1;
        ChainSpec::new(vec![v_bar; n], vec![gamma; n], vec![kappa; n])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.mean_couplings.len();
        if n == 0 {
            return Err(ModelError::TooFewModes(1));
        }
        if self.gamma.len() != n {
            return Err(ModelError::LengthMismatch {
                field: "gamma",
                expected: n,
                actual: self.gamma.len(),
            });
        }
        if self.kappa.len() != n {
            return Err(ModelError::LengthMismatch {
                field: "kappa",
                expected: n,
                actual: self.kappa.len(),
            });
        }
        if self
            .mean_couplings
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(ModelError::NonFinite("mean_couplings"));
        }
        for (j, (&g, k)) in self.gamma.iter().zip(&self.kappa).enumerate() {
            if !g.is_finite() || !k.re.is_finite() || !k.im.is_finite() {
                return Err(ModelError::NonFinite("rates"));
            }
            if g < 0.0 {
                return Err(ModelError::NegativeGamma {
                    link: j + 1,
                    value: g,
                });
            }
            // |kappa| <= gamma keeps the noise correlation matrix positive.
            if k.norm() > g {
                return Err(ModelError::KappaExceedsGamma {
                    link: j + 1,
                    kappa_abs: k.norm(),
                    gamma: g,
                });
            }
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.mean_couplings.len() + 1
    }

    pub fn n_links(&self) -> usize {
        self.mean_couplings.len()
    }

    pub fn mean_couplings(&self) -> &[Complex64] {
        &self.mean_couplings
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn kappa(&self) -> &[Complex64] {
        &self.kappa
    }

    /// Hamiltonian built from the mean couplings.
    pub fn mean_hamiltonian(&self) -> DMatrix<Complex64> {
        coupling_matrix(&self.mean_couplings)
    }

    pub fn is_circular_zero_mean(&self) -> bool {
        self.mean_couplings.iter().all(|v| v.norm() == 0.0)
            && self.kappa.iter().all(|k| k.norm() == 0.0)
    }
}

/// Tridiagonal hopping Hamiltonian for the given instantaneous couplings:
/// `H[j, j+1] = v[j]`, `H[j+1, j] = conj(v[j])`, zero diagonal.
pub fn coupling_matrix(couplings: &[Complex64]) -> DMatrix<Complex64> {
    let m = couplings.len() + 1;
    let mut h = DMatrix::zeros(m, m);
    for (j, &v) in couplings.iter().enumerate() {
        h[(j, j + 1)] = v;
        h[(j + 1, j)] = v.conj();
    }
    h
}

/// Product initial state: coherent amplitude `alpha[j]` in every mode, with an
/// optional single-photon Fock excitation replacing the coherent state in one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    amplitudes: Vec<Complex64>,
    photon_mode: Option<usize>,
}

impl InitialState {
    pub fn coherent(amplitudes: Vec<Complex64>) -> Result<Self, ModelError> {
        if amplitudes.len() < 2 {
            return Err(ModelError::TooFewModes(amplitudes.len()));
        }
        if amplitudes
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(ModelError::NonFinite("amplitudes"));
        }
        Ok(InitialState {
            amplitudes,
            photon_mode: None,
        })
    }

    /// Coherent amplitudes everywhere except `photon_mode`, which holds exactly
    /// one photon and must have zero amplitude.
    pub fn with_photon(
        amplitudes: Vec<Complex64>,
        photon_mode: usize,
    ) -> Result<Self, ModelError> {
        let mut st = InitialState::coherent(amplitudes)?;
        if photon_mode >= st.amplitudes.len() {
            return Err(ModelError::PhotonModeOutOfRange {
                mode: photon_mode,
                n_modes: st.amplitudes.len(),
            });
        }
        if st.amplitudes[photon_mode].norm() != 0.0 {
            return Err(ModelError::PhotonModeNotVacuum { mode: photon_mode });
        }
        st.photon_mode = Some(photon_mode);
        Ok(st)
    }

    pub fn n_modes(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn photon_mode(&self) -> Option<usize> {
        self.photon_mode
    }

    /// Mean total photon number: `sum |alpha_j|^2`, plus one for the Fock photon.
    pub fn total_photons(&self) -> f64 {
        let coherent: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        coherent + if self.photon_mode.is_some() { 1.0 } else { 0.0 }
    }
}

/// Uniform output grid: `n_steps` intervals of width `dt = t_max / n_steps`,
/// reporting at `t_m = m * dt` for `m = 0..=n_steps`. The Monte-Carlo route
/// resamples couplings once per interval, so this grid also fixes the noise
/// correlation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self, ModelError> {
        if !(t_max > 0.0) || !t_max.is_finite() || n_steps == 0 {
            return Err(ModelError::BadTimeGrid { t_max, n_steps });
        }
        Ok(TimeGrid { t_max, n_steps })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_steps).map(|m| m as f64 * dt).collect()
    }
}

//! Closed-form predictions for the correlation dynamics.
//!
//! Everything here is an algebraic consequence of the moment flow: jump
//! heights at release, infinite-time plateaus, and the per-link growth rate
//! of the short-time pair-density profile. The integrators adjudicate these
//! expressions in the test suites; at runtime they serve as cheap references.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("decay rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("|kappa| = {kappa_abs} exceeds gamma = {gamma}")]
    Unphysical { kappa_abs: f64, gamma: f64 },
    #[error("ellipticity must be a nonnegative finite number, got {0}")]
    BadEllipticity(f64),
    #[error("need at least two modes, got {0}")]
    TooFewModes(usize),
    #[error("mode {mode} out of range for {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("second absolute moment vanishes on link {0}")]
    ZeroSecondMoment(usize),
    #[error("expected the 9 pair-basis components, got {0}")]
    WrongLayout(usize),
}

fn check_rates(gamma: f64, kappa: Complex64) -> Result<(), AnalyticsError> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(AnalyticsError::BadRate(gamma));
    }
    let ka = kappa.norm();
    if !ka.is_finite() || ka > gamma * (1.0 + 1e-12) {
        return Err(AnalyticsError::Unphysical {
            kappa_abs: ka,
            gamma,
        });
    }
    Ok(())
}

/// Normalized pair correlation of the receiving mode immediately after a
/// coherent seed is released across one noisy link: `2 + |kappa|^2 / gamma^2`.
///
/// Ranges from 2 (circular noise) to 3 (fully real noise).
pub fn jump_g2(gamma: f64, kappa: Complex64) -> Result<f64, AnalyticsError> {
    check_rates(gamma, kappa)?;
    Ok(2.0 + kappa.norm_sqr() / (gamma * gamma))
}

/// Infinite-time pair correlation of the two-mode quench.
#[derive(Debug, Clone, Copy)]
pub struct TwoModeAsymptote {
    pub g2: f64,
    /// Relative distance of `|kappa|` from `gamma`; relaxation toward the
    /// plateau slows down as this gap closes.
    pub degeneracy_gap: f64,
    /// Set when the gap is below 5% but the plateau is still 4/3: expect
    /// slow convergence in any finite-time measurement.
    pub slow_convergence: bool,
}

/// Plateau of `g2` for two modes seeded on one side.
///
/// The quartic flow conserves the total pair weight, which pins the plateau
/// at 4/3. On the degenerate line `|kappa| = gamma` with the coupling phase
/// aligned (`Im(v^2 conj(kappa)) = 0`, which includes `v = 0`), a second
/// functional is conserved and the same seed lands on 3/2 instead.
pub fn two_mode_asymptote(
    v_bar: Complex64,
    gamma: f64,
    kappa: Complex64,
) -> Result<TwoModeAsymptote, AnalyticsError> {
    check_rates(gamma, kappa)?;
    let gap = (gamma - kappa.norm()).abs() / gamma;
    let align_scale = (v_bar.norm_sqr() * kappa.norm()).max(f64::MIN_POSITIVE);
    let aligned = (v_bar * v_bar * kappa.conj()).im.abs() <= 1e-12 * align_scale;
    let degenerate = gap <= 1e-12 && aligned;
    Ok(TwoModeAsymptote {
        g2: if degenerate { 1.5 } else { 4.0 / 3.0 },
        degeneracy_gap: gap,
        slow_convergence: !degenerate && gap < 0.05,
    })
}

/// Conventional large-time plateau estimate `2 (M - 1) / M` for the fully
/// ground chain of `M` modes.
pub fn nmode_asymptote(n_modes: usize) -> Result<f64, AnalyticsError> {
    if n_modes < 2 {
        return Err(AnalyticsError::TooFewModes(n_modes));
    }
    let m = n_modes as f64;
    Ok(2.0 * (m - 1.0) / m)
}

/// Equipartition plateau `2 M / (M + 1)`: the grinding flow spreads the
/// conserved pair weight uniformly over the `M (M + 1) / 2` unordered mode
/// pairs, leaving each same-site density at twice the cross-site value.
pub fn nmode_asymptote_exact(n_modes: usize) -> Result<f64, AnalyticsError> {
    if n_modes < 2 {
        return Err(AnalyticsError::TooFewModes(n_modes));
    }
    let m = n_modes as f64;
    Ok(2.0 * m / (m + 1.0))
}

/// Per-link amplification base of the short-time pair-density front for
/// centered noise of ellipticity `nu`:
/// `2 + (1 - nu^2)^2 / (1 + nu^2)^2 = E|dv|^4 / (E|dv|^2)^2`.
///
/// Equals 3 for fully real noise, 2 for circular noise.
pub fn avalanche_rate(ellipticity: f64) -> Result<f64, AnalyticsError> {
    if !ellipticity.is_finite() || ellipticity < 0.0 {
        return Err(AnalyticsError::BadEllipticity(ellipticity));
    }
    let nu2 = ellipticity * ellipticity;
    let r = (1.0 - nu2) / (1.0 + nu2);
    Ok(2.0 + r * r)
}

/// Leading-order `g2` one interval after release, at `mode`, for a seed at
/// `seed_mode`: the product of `m4 / m2^2` over every link in between.
/// `link_moments[j]` holds `(E|v_j|^2, E|v_j|^4)` of the full coupling.
pub fn short_time_g2(
    link_moments: &[(f64, f64)],
    seed_mode: usize,
    mode: usize,
) -> Result<f64, AnalyticsError> {
    let n_modes = link_moments.len() + 1;
    for &m in &[seed_mode, mode] {
        if m >= n_modes {
            return Err(AnalyticsError::ModeOutOfRange { mode: m, n_modes });
        }
    }
    let (lo, hi) = if seed_mode <= mode {
        (seed_mode, mode)
    } else {
        (mode, seed_mode)
    };
    let mut acc = 1.0;
    for (j, &(m2, m4)) in link_moments.iter().enumerate().take(hi).skip(lo) {
        if !(m2 > 0.0) {
            return Err(AnalyticsError::ZeroSecondMoment(j));
        }
        acc *= m4 / (m2 * m2);
    }
    Ok(acc)
}

/// Linear functional of the 9-component two-mode quartic basis that the flow
/// conserves exactly: `phi_1 + phi_2 + 2 phi_3` in the basis ordering used by
/// the quartic moment system.
pub fn pair_weight(phi: &[Complex64]) -> Result<Complex64, AnalyticsError> {
    if phi.len() != 9 {
        return Err(AnalyticsError::WrongLayout(phi.len()));
    }
    Ok(phi[0] + phi[1] + phi[2] * 2.0)
}

//! Adaptive Dormand-Prince 5(4) integration over complex state vectors.
//!
//! The driver lands exactly on caller-supplied grid times (no interpolation;
//! the step is clamped to each grid point) and hands the state to an observer
//! callback there. Step-size control uses the embedded fourth-order error
//! estimate with a mixed absolute/relative norm.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("bad time grid: {0}")]
    BadGrid(&'static str),
    #[error("step size underflow at t = {t:e} (h = {h:e}); system too stiff for this method")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t:e}")]
    NonFinite { t: f64 },
    #[error("step limit {max_steps} exhausted at t = {t:e}")]
    StepLimit { t: f64, max_steps: usize },
    #[error("halted by observer: {0}")]
    Halted(String),
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Minimum step as a fraction of the total time span.
    pub min_step_frac: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 20_000_000,
            min_step_frac: 1e-12,
        }
    }
}

// Dormand-Prince RK5(4) tableau, FSAL form.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

/// Integrates `y' = rhs(t, y)` from `times[0]`, calling
/// `on_grid(index, t, y)` at every grid time including the first.
/// The observer may halt integration by returning an error message.
pub fn integrate_grid<F, O>(
    rhs: &mut F,
    y0: &[Complex64],
    times: &[f64],
    opts: &OdeOptions,
    on_grid: &mut O,
) -> Result<(), OdeError>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(usize, f64, &[Complex64]) -> Result<(), String>,
{
    if times.is_empty() {
        return Err(OdeError::BadGrid("empty"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(OdeError::BadGrid("non-finite time"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OdeError::BadGrid("times must be strictly increasing"));
    }
    if y0.is_empty() {
        return Err(OdeError::BadGrid("empty state"));
    }
    let n = y0.len();
    let span = times[times.len() - 1] - times[0];
    let h_min = opts.min_step_frac * span;

    let mut y = y0.to_vec();
    let mut t = times[0];
    on_grid(0, t, &y).map_err(OdeError::Halted)?;
    if times.len() == 1 {
        return Ok(());
    }

    let zero = Complex64::new(0.0, 0.0);
    let mut k: [Vec<Complex64>; 7] = core::array::from_fn(|_| vec![zero; n]);
    let mut y_stage = vec![zero; n];
    let mut y_new = vec![zero; n];

    rhs(t, &y, &mut k[0]);
    let mut h = initial_step(rhs, t, &y, &k[0].clone(), span, opts, &mut y_stage, &mut y_new);
    let mut steps = 0usize;
    let mut just_rejected = false;

    for (gi, &t_goal) in times.iter().enumerate().skip(1) {
        while t < t_goal {
            let mut h_try = h.min(t_goal - t);
            if h_try < h_min && t_goal - t > h_min {
                return Err(OdeError::StepSizeUnderflow { t, h: h_try });
            }
            loop {
                steps += 1;
                if steps > opts.max_steps {
                    return Err(OdeError::StepLimit {
                        t,
                        max_steps: opts.max_steps,
                    });
                }
                let err = dopri_attempt(rhs, t, &y, h_try, &mut k, &mut y_stage, &mut y_new, opts);
                if !err.is_finite() {
                    // overflow inside the attempt: shrink hard
                    h_try *= 0.1;
                    just_rejected = true;
                } else if err <= 1.0 {
                    t += h_try;
                    std::mem::swap(&mut y, &mut y_new);
                    k.swap(0, 6); // FSAL: last stage is the derivative at the new point
                    let mut fac = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if just_rejected {
                        fac = fac.min(1.0);
                    }
                    just_rejected = false;
                    // a step clamped onto a grid point must not shrink the free step
                    let grown = h_try * fac;
                    h = if h_try < h { h.max(grown) } else { grown }.min(span);
                    break;
                } else {
                    let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                    h_try *= fac;
                    just_rejected = true;
                    if h_try < h_min {
                        return Err(OdeError::StepSizeUnderflow { t, h: h_try });
                    }
                }
            }
            if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(OdeError::NonFinite { t });
            }
        }
        t = t_goal; // clamp roundoff so observers see the exact grid value
        on_grid(gi, t, &y).map_err(OdeError::Halted)?;
    }
    Ok(())
}

/// One trial step from `(t, y)` with size `h`. Fills `y_new` with the
/// fifth-order result and `k[6]` with the derivative there; returns the
/// scaled error norm. `k[0]` must hold `rhs(t, y)` on entry.
#[allow(clippy::too_many_arguments)]
fn dopri_attempt<F>(
    rhs: &mut F,
    t: f64,
    y: &[Complex64],
    h: f64,
    k: &mut [Vec<Complex64>; 7],
    y_stage: &mut [Complex64],
    y_new: &mut [Complex64],
    opts: &OdeOptions,
) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let n = y.len();
    for i in 0..n {
        y_stage[i] = y[i] + h * (A21 * k[0][i]);
    }
    rhs(t + C2 * h, y_stage, &mut k[1]);
    for i in 0..n {
        y_stage[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
    }
    rhs(t + C3 * h, y_stage, &mut k[2]);
    for i in 0..n {
        y_stage[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
    }
    rhs(t + C4 * h, y_stage, &mut k[3]);
    for i in 0..n {
        y_stage[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
    }
    rhs(t + C5 * h, y_stage, &mut k[4]);
    for i in 0..n {
        y_stage[i] = y[i]
            + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
    }
    rhs(t + h, y_stage, &mut k[5]);
    for i in 0..n {
        y_new[i] =
            y[i] + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
    }
    rhs(t + h, y_new, &mut k[6]);

    let mut acc = 0.0;
    for i in 0..n {
        let e = h
            * (E1 * k[0][i]
                + E3 * k[2][i]
                + E4 * k[3][i]
                + E5 * k[4][i]
                + E6 * k[5][i]
                + E7 * k[6][i]);
        let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
        let r = e.norm() / sc;
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}

/// Hairer-style starting step estimate from the derivative at `t0` and one
/// explicit Euler probe.
#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    rhs: &mut F,
    t0: f64,
    y0: &[Complex64],
    f0: &[Complex64],
    span: f64,
    opts: &OdeOptions,
    scratch_y: &mut [Complex64],
    scratch_f: &mut [Complex64],
) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let n = y0.len();
    let sc = |y: Complex64| opts.atol + opts.rtol * y.norm();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..n {
        let s = sc(y0[i]);
        d0 += (y0[i].norm() / s).powi(2);
        d1 += (f0[i].norm() / s).powi(2);
    }
    d0 = (d0 / n as f64).sqrt();
    d1 = (d1 / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * span
    } else {
        0.01 * d0 / d1
    };
    for i in 0..n {
        scratch_y[i] = y0[i] + h0 * f0[i];
    }
    rhs(t0 + h0, scratch_y, scratch_f);
    let mut d2 = 0.0;
    for i in 0..n {
        let s = sc(y0[i]);
        d2 += ((scratch_f[i] - f0[i]).norm() / s).powi(2);
    }
    d2 = (d2 / n as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (1e-3 * span).max(h0 * 100.0)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

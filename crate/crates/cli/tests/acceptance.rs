//! End-to-end checks of the library's headline physics. Each numbered block
//! prints one pass/fail line; the process exits nonzero if any block fails.

use std::process::Command;
use std::time::Instant;

use noisychain::analytics::{jump_g2, nmode_asymptote, pair_weight};
use noisychain::fockoracle::{
    evolve_lindblad, evolve_schrodinger, occupations, pair_densities, product_state, FockBasis,
    LindbladOptions, SchrodingerOptions,
};
use noisychain::model::{coupling_matrix, ChainSpec, InitialState, TimeGrid};
use noisychain::moments::{
    g2_series, nmode_fourth, nmode_photon, two_mode_fourth, two_mode_second, Label,
};
use noisychain::montecarlo::{estimate, run_realization, EstimateOptions, NoiseMapping, NoiseSpec};
use noisychain::propagator::{compose, expm_unitary, UnitaryStep};
use noisychain::Complex64;

type Outcome = Result<String, String>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    num / den
}

/// Two-mode moments route: right after release the neighbor's correlation
/// sits at 2 + kappa^2 / gamma^2, within 1% relative for each rate ratio.
fn criterion_1() -> Outcome {
    let grid = TimeGrid::new(1e-6, 1).map_err(s)?;
    let init = InitialState::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)]).map_err(s)?;
    let mut worst = 0.0f64;
    for ratio in [0.0, 0.5, 0.75, 1.0] {
        let chain = ChainSpec::new(vec![c(0.0, 0.0)], vec![1.0], vec![c(ratio, 0.0)]).map_err(s)?;
        let second = two_mode_second(&chain).map_err(s)?;
        let fourth = two_mode_fourth(&chain).map_err(s)?;
        let occ = second
            .integrate(&second.initial_moments(&init).map_err(s)?, &grid)
            .map_err(s)?;
        let quartic = fourth
            .integrate(&fourth.initial_moments(&init).map_err(s)?, &grid)
            .map_err(s)?;
        let g2 = g2_series(&quartic, &occ, 1).map_err(s)?[1];
        let expected = jump_g2(1.0, c(ratio, 0.0)).map_err(s)?;
        let rel = ((g2 - expected) / expected).abs();
        worst = worst.max(rel);
        if rel > 0.01 {
            return Err(format!(
                "kappa/gamma = {ratio}: g2_2 = {g2} vs {expected} (relative error {rel:.1e})"
            ));
        }
    }
    Ok(format!(
        "g2_2 jumps to 2 + (kappa/gamma)^2 for ratios 0, 0.5, 0.75, 1; worst relative error {worst:.1e}"
    ))
}

/// Steady states straight from the nullspace of the 9-component quartic
/// system: 4/3 for circular noise, 3/2 on the degenerate ray kappa = gamma.
fn criterion_2() -> Outcome {
    let init = InitialState::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)]).map_err(s)?;
    let mut parts = Vec::new();
    for (kappa, expected) in [(0.0, 4.0 / 3.0), (1.0, 1.5)] {
        let chain = ChainSpec::new(vec![c(0.0, 0.0)], vec![1.0], vec![c(kappa, 0.0)]).map_err(s)?;
        let second = two_mode_second(&chain).map_err(s)?;
        let fourth = two_mode_fourth(&chain).map_err(s)?;
        let occ_inf = second
            .steady_state(&second.initial_moments(&init).map_err(s)?)
            .map_err(s)?;
        let q_inf = fourth
            .steady_state(&fourth.initial_moments(&init).map_err(s)?)
            .map_err(s)?;
        let n1 = occ_inf[second.index_of(Label::Occ(0)).expect("occupation")].re;
        let q11 = q_inf[fourth.index_of(Label::pair(0, 0)).expect("pair density")].re;
        let g2 = q11 / (n1 * n1);
        let err = (g2 - expected).abs();
        if err > 1e-6 {
            return Err(format!(
                "kappa = {kappa}: steady g2 = {g2} vs {expected} (off by {err:.1e})"
            ));
        }
        parts.push(format!("{expected:.4} hit to {err:.1e}"));
    }
    Ok(format!("nullspace asymptotes {}", parts.join(" and ")))
}

/// Ensemble route against the moments route over nine noise/drive
/// combinations: correlations of both modes within 3 standard errors at
/// 95% or more of the grid points.
fn criterion_3() -> Outcome {
    let grid = TimeGrid::new(3.0, 300).map_err(s)?;
    let init = InitialState::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)]).map_err(s)?;
    let mut min_fraction = 1.0f64;
    let mut worst = String::from("none");
    let mut case = 0u64;
    for nu in [0.0, 0.5, 1.0] {
        for v_bar in [0.0, 5.0, 15.0] {
            let noise = NoiseSpec::from_gamma_target(
                vec![c(v_bar, 0.0)],
                1.0,
                nu,
                grid.dt(),
                NoiseMapping::AlgebraConsistent,
            )
            .map_err(s)?;
            let chain = noise.effective_chain(grid.dt()).map_err(s)?;
            let second = two_mode_second(&chain).map_err(s)?;
            let fourth = two_mode_fourth(&chain).map_err(s)?;
            let occ = second
                .integrate(&second.initial_moments(&init).map_err(s)?, &grid)
                .map_err(s)?;
            let quartic = fourth
                .integrate(&fourth.initial_moments(&init).map_err(s)?, &grid)
                .map_err(s)?;
            let est = estimate(
                &noise,
                &init,
                &grid,
                &EstimateOptions {
                    base_seed: 3_000 + case,
                    realizations: 5_000,
                    progress: false,
                },
            )
            .map_err(s)?;
            let mut cells = 0usize;
            let mut within = 0usize;
            for j in 0..2 {
                let exact = g2_series(&quartic, &occ, j).map_err(s)?;
                for t in 0..est.times.len() {
                    let a = est.g2[t][j];
                    let b = exact[t];
                    if a.is_nan() || b.is_nan() {
                        if a.is_nan() != b.is_nan() {
                            // one route thinks the point is undefined: a miss
                            cells += 1;
                        }
                        continue;
                    }
                    cells += 1;
                    if (a - b).abs() <= 3.0 * est.se_g2[t][j] + 1e-12 {
                        within += 1;
                    }
                }
            }
            let fraction = within as f64 / cells as f64;
            if fraction < min_fraction {
                min_fraction = fraction;
                worst = format!("nu = {nu}, mean drive {v_bar}");
            }
            case += 1;
        }
    }
    if min_fraction < 0.95 {
        return Err(format!(
            "combination ({worst}) keeps only {:.1}% of points within 3 SE",
            100.0 * min_fraction
        ));
    }
    Ok(format!(
        "9 noise/drive combinations agree within 3 SE at >= {:.1}% of points (floor 95%)",
        100.0 * min_fraction
    ))
}

/// Six-mode circular chain grinds any initial distribution flat: steady
/// occupations 1/6 from the nullspace, correlations near 2(M-1)/M by t = 50.
fn criterion_4() -> Outcome {
    let m = 6;
    let chain = ChainSpec::uniform(m, c(0.0, 0.0), 1.0, c(0.0, 0.0)).map_err(s)?;
    let mut alpha = vec![c(0.0, 0.0); m];
    alpha[0] = c(1.0, 0.0);
    let init = InitialState::coherent(alpha).map_err(s)?;
    let photon = nmode_photon(&chain).map_err(s)?;
    let occ_inf = photon
        .steady_state(&photon.initial_moments(&init).map_err(s)?)
        .map_err(s)?;
    let mut worst_n = 0.0f64;
    for j in 0..m {
        let nj = occ_inf[photon.index_of(Label::Occ(j)).expect("occupation")].re;
        worst_n = worst_n.max((nj - 1.0 / m as f64).abs());
    }
    if worst_n > 1e-6 {
        return Err(format!("steady occupations off 1/6 by {worst_n:.1e}"));
    }
    let grid = TimeGrid::new(50.0, 100).map_err(s)?;
    let fourth = nmode_fourth(&chain).map_err(s)?;
    let occ = photon
        .integrate(&photon.initial_moments(&init).map_err(s)?, &grid)
        .map_err(s)?;
    let quartic = fourth
        .integrate(&fourth.initial_moments(&init).map_err(s)?, &grid)
        .map_err(s)?;
    let target = nmode_asymptote(m).map_err(s)?;
    let last = grid.n_steps();
    let mut worst_g2 = 0.0f64;
    for j in 0..m {
        let g2 = g2_series(&quartic, &occ, j).map_err(s)?[last];
        worst_g2 = worst_g2.max(((g2 - target) / target).abs());
    }
    if worst_g2 > 0.05 {
        return Err(format!(
            "g2 at t = 50 misses 2(M-1)/M = {target:.4} by {:.1}%",
            100.0 * worst_g2
        ));
    }
    Ok(format!(
        "occupations flatten to 1/6 within {worst_n:.1e}; g2 within {:.1}% of {target:.4}",
        100.0 * worst_g2
    ))
}

/// Short-time correlation front on a ten-mode chain: the fitted base of the
/// exponential growth over modes 2..6 follows the per-link amplification.
fn criterion_5() -> Outcome {
    let dt = 1.0 / 300.0;
    let grid = TimeGrid::new(dt, 1).map_err(s)?;
    let m = 10;
    let mut alpha = vec![c(0.0, 0.0); m];
    alpha[0] = c(10.0, 0.0);
    let init = InitialState::coherent(alpha).map_err(s)?;
    let xs: Vec<f64> = (2..=6).map(|j| j as f64).collect();
    let mut parts = Vec::new();
    for (nu, seed) in [(0.5, 11u64), (1.0, 11), (0.0, 11)] {
        let noise = NoiseSpec::from_gamma_target(
            vec![c(5.0, 0.0); m - 1],
            1.0,
            nu,
            dt,
            NoiseMapping::AlgebraConsistent,
        )
        .map_err(s)?;
        let est = estimate(
            &noise,
            &init,
            &grid,
            &EstimateOptions {
                base_seed: seed,
                realizations: 300_000,
                progress: false,
            },
        )
        .map_err(s)?;
        let mut ys = Vec::with_capacity(xs.len());
        for j in 1..=5 {
            let g2 = est.g2[1][j];
            if !(g2 > 0.0) {
                return Err(format!("nu = {nu}: g2 of mode {} unusable ({g2})", j + 1));
            }
            ys.push(g2.ln());
        }
        let slope = ls_slope(&xs, &ys);
        let base = slope.exp();
        match nu {
            0.5 => {
                let t = 2.36f64.ln();
                if (slope - t).abs() > 0.15 * t {
                    return Err(format!(
                        "nu = 0.5: log-slope {slope:.3} outside 15% of {t:.3} (base {base:.2})"
                    ));
                }
            }
            1.0 => {
                if !(1.8..=2.2).contains(&base) {
                    return Err(format!("nu = 1: fitted base {base:.2} outside [1.8, 2.2]"));
                }
            }
            _ => {
                if !(2.6..=3.4).contains(&base) {
                    return Err(format!("nu = 0: fitted base {base:.2} outside [2.6, 3.4]"));
                }
            }
        }
        parts.push(format!("nu = {nu} -> base {base:.2}"));
    }
    Ok(format!(
        "per-mode growth of the first-step g2: {}",
        parts.join(", ")
    ))
}

/// Banded moment equations against an independent truncated number-basis
/// density-matrix integration on a three-mode chain.
fn criterion_6() -> Outcome {
    let chain = ChainSpec::uniform(3, c(0.0, 0.0), 1.0, c(0.0, 0.0)).map_err(s)?;
    let init = InitialState::coherent(vec![c(0.7, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).map_err(s)?;
    let grid = TimeGrid::new(5.0, 100).map_err(s)?;
    let photon = nmode_photon(&chain).map_err(s)?;
    let fourth = nmode_fourth(&chain).map_err(s)?;
    let occ = photon
        .integrate(&photon.initial_moments(&init).map_err(s)?, &grid)
        .map_err(s)?;
    let quartic = fourth
        .integrate(&fourth.initial_moments(&init).map_err(s)?, &grid)
        .map_err(s)?;
    let basis = FockBasis::new(3, 8).map_err(s)?;
    let series = evolve_lindblad(
        &basis,
        &chain,
        &init,
        &grid.times(),
        &LindbladOptions::default(),
    )
    .map_err(s)?;
    let mut worst_n = 0.0f64;
    let mut worst_g2 = 0.0f64;
    for j in 0..3 {
        let g2m = g2_series(&quartic, &occ, j).map_err(s)?;
        let oi = photon.index_of(Label::Occ(j)).expect("occupation");
        for t in 0..series.times.len() {
            worst_n = worst_n.max((occ.values[t][oi].re - series.n[t][j]).abs());
            let a = g2m[t];
            let b = series.g2[t][j];
            if a.is_nan() || b.is_nan() {
                if a.is_nan() != b.is_nan() {
                    return Err(format!(
                        "mode {} at t = {}: one route has no defined g2",
                        j + 1,
                        series.times[t]
                    ));
                }
                continue;
            }
            worst_g2 = worst_g2.max((a - b).abs());
        }
    }
    if worst_n > 1e-3 || worst_g2 > 1e-3 {
        return Err(format!(
            "routes disagree: max |dn| = {worst_n:.1e}, max |dg2| = {worst_g2:.1e} (tolerance 1e-3)"
        ));
    }
    Ok(format!(
        "density-matrix route agrees: max |dn| = {worst_n:.1e}, max |dg2| = {worst_g2:.1e}"
    ))
}

/// A single photon parked mid-chain kills the correlation front beyond it;
/// the per-realization closed form matches the number-basis propagator.
fn criterion_7() -> Outcome {
    let dt = 1.0 / 300.0;
    let grid = TimeGrid::new(3.0 * dt, 3).map_err(s)?;
    let m = 8;
    let mut alpha = vec![c(0.0, 0.0); m];
    alpha[0] = c(10.0, 0.0);
    let init = InitialState::with_photon(alpha, 3).map_err(s)?;
    let noise = NoiseSpec::from_gamma_target(
        vec![c(0.0, 0.0); m - 1],
        1.0,
        1.0,
        dt,
        NoiseMapping::AlgebraConsistent,
    )
    .map_err(s)?;
    let est = estimate(
        &noise,
        &init,
        &grid,
        &EstimateOptions {
            base_seed: 7_100,
            realizations: 100_000,
            progress: false,
        },
    )
    .map_err(s)?;
    let mut worst_beyond = 0.0f64;
    for j in 4..m {
        let g2 = est.g2[1][j];
        if !g2.is_finite() {
            return Err(format!("g2 of mode {} undefined at the first step", j + 1));
        }
        worst_beyond = worst_beyond.max(g2);
    }
    if worst_beyond >= 0.1 {
        return Err(format!(
            "first-step g2 beyond the photon reaches {worst_beyond:.3} (floor 0.1)"
        ));
    }

    // independent check of the per-realization observables on a small chain
    let noise3 = NoiseSpec::from_gamma_target(
        vec![c(0.0, 0.0); 2],
        1.0,
        1.0,
        dt,
        NoiseMapping::AlgebraConsistent,
    )
    .map_err(s)?;
    let init3 =
        InitialState::with_photon(vec![c(0.7, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 2).map_err(s)?;
    let grid3 = TimeGrid::new(10.0 * dt, 10).map_err(s)?;
    let basis = FockBasis::new(3, 11).map_err(s)?;
    let (psi0, _tail) = product_state(&basis, &init3, 1e-9).map_err(s)?;
    let mut worst_oracle = 0.0f64;
    for k in 0..3u64 {
        let real = run_realization(&noise3, &init3, &grid3, 7_200, k).map_err(s)?;
        let states = evolve_schrodinger(
            &basis,
            &psi0,
            &real.couplings,
            grid3.dt(),
            &SchrodingerOptions::default(),
        )
        .map_err(s)?;
        for (t, psi) in states.iter().enumerate() {
            let n = occupations(&basis, psi).map_err(s)?;
            let pair = pair_densities(&basis, psi).map_err(s)?;
            for j in 0..3 {
                worst_oracle = worst_oracle
                    .max((real.n[t][j] - n[j]).abs())
                    .max((real.pair[t][j] - pair[j]).abs());
            }
        }
    }
    if worst_oracle > 1e-6 {
        return Err(format!(
            "closed-form observables drift {worst_oracle:.1e} from the number-basis propagator"
        ));
    }
    Ok(format!(
        "first-step g2 beyond the photon <= {worst_beyond:.1e}; upstream modes 3, 4 sit at {:.2}, {:.2} (reported, not asserted); oracle gap {worst_oracle:.1e}",
        est.g2[1][2], est.g2[1][3]
    ))
}

/// Conservation: composed one-interval unitaries stay unitary, every moments
/// trajectory keeps total occupation, the two-mode quartic flow keeps its
/// conserved functional, and the density-matrix route keeps trace one.
fn criterion_8() -> Outcome {
    // unitarity after 300 composed steps
    let grid = TimeGrid::new(1.0, 300).map_err(s)?;
    let noise = NoiseSpec::from_gamma_target(
        vec![c(1.0, 0.5), c(-0.3, 0.8), c(0.2, -0.4)],
        1.0,
        0.5,
        grid.dt(),
        NoiseMapping::AlgebraConsistent,
    )
    .map_err(s)?;
    let init4 = InitialState::coherent(vec![
        c(1.0, 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
    ])
    .map_err(s)?;
    let real = run_realization(&noise, &init4, &grid, 8_000, 0).map_err(s)?;
    let mut acc: Option<UnitaryStep> = None;
    for cs in &real.couplings {
        let h = coupling_matrix(cs);
        let step = expm_unitary(&h, grid.dt()).map_err(s)?;
        acc = Some(match acc {
            None => step,
            Some(p) => compose(&p, &step).map_err(s)?,
        });
    }
    let u = acc.expect("300 intervals");
    let prod = u.matrix().adjoint() * u.matrix();
    let mut defect = 0.0f64;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((prod[(i, j)] - c(target, 0.0)).norm());
        }
    }
    if defect > 1e-7 {
        return Err(format!("unitarity defect {defect:.1e} after 300 steps"));
    }

    // occupation total and quartic functional along moment trajectories
    let tgrid = TimeGrid::new(10.0, 200).map_err(s)?;
    let init2 = InitialState::coherent(vec![c(1.0, 0.0), c(0.0, 0.0)]).map_err(s)?;
    let mut n_drift = 0.0f64;
    let mut p_drift = 0.0f64;
    for (v, kappa) in [
        (c(0.0, 0.0), c(0.0, 0.0)),
        (c(0.0, 0.0), c(1.0, 0.0)),
        (c(1.1, 0.3), c(0.25, -0.33)),
    ] {
        let chain = ChainSpec::new(vec![v], vec![1.0], vec![kappa]).map_err(s)?;
        let second = two_mode_second(&chain).map_err(s)?;
        let occ = second
            .integrate(&second.initial_moments(&init2).map_err(s)?, &tgrid)
            .map_err(s)?;
        let i0 = second.index_of(Label::Occ(0)).expect("occupation");
        let i1 = second.index_of(Label::Occ(1)).expect("occupation");
        let total0 = occ.values[0][i0].re + occ.values[0][i1].re;
        for row in &occ.values {
            let total = row[i0].re + row[i1].re;
            n_drift = n_drift.max((total - total0).abs() / total0);
        }
        let fourth = two_mode_fourth(&chain).map_err(s)?;
        let q = fourth
            .integrate(&fourth.initial_moments(&init2).map_err(s)?, &tgrid)
            .map_err(s)?;
        let p0 = pair_weight(q.values[0].as_slice()).map_err(s)?;
        for row in &q.values {
            let p = pair_weight(row.as_slice()).map_err(s)?;
            p_drift = p_drift.max((p - p0).norm() / p0.norm());
        }
    }
    // a longer chain with a photon on top exercises the banded generator
    let chain6 = ChainSpec::uniform(6, c(0.0, 0.0), 1.0, c(0.0, 0.0)).map_err(s)?;
    let mut alpha6 = vec![c(0.0, 0.0); 6];
    alpha6[0] = c(1.2, 0.0);
    let init6 = InitialState::with_photon(alpha6, 2).map_err(s)?;
    let photon = nmode_photon(&chain6).map_err(s)?;
    let occ6 = photon
        .integrate(&photon.initial_moments(&init6).map_err(s)?, &tgrid)
        .map_err(s)?;
    let idx: Vec<usize> = (0..6)
        .map(|j| photon.index_of(Label::Occ(j)).expect("occupation"))
        .collect();
    let total0: f64 = idx.iter().map(|&i| occ6.values[0][i].re).sum();
    for row in &occ6.values {
        let total: f64 = idx.iter().map(|&i| row[i].re).sum();
        n_drift = n_drift.max((total - total0).abs() / total0);
    }
    if n_drift > 1e-8 {
        return Err(format!("total occupation drifts by {n_drift:.1e} relative"));
    }
    if p_drift > 1e-8 {
        return Err(format!(
            "conserved quartic functional drifts by {p_drift:.1e} relative"
        ));
    }

    // trace preservation of the density-matrix route
    let chain3 = ChainSpec::uniform(3, c(0.0, 0.0), 1.0, c(0.0, 0.0)).map_err(s)?;
    let init3 = InitialState::coherent(vec![c(0.7, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).map_err(s)?;
    let basis = FockBasis::new(3, 8).map_err(s)?;
    let times = TimeGrid::new(2.0, 40).map_err(s)?.times();
    let series = evolve_lindblad(&basis, &chain3, &init3, &times, &LindbladOptions::default())
        .map_err(s)?;
    if series.max_trace_drift > 1e-8 {
        return Err(format!("trace drifts by {:.1e}", series.max_trace_drift));
    }
    Ok(format!(
        "unitarity defect {defect:.1e}, occupation drift {n_drift:.1e}, functional drift {p_drift:.1e}, trace drift {:.1e}",
        series.max_trace_drift
    ))
}

/// The command-line runner is deterministic in (seed, realizations): worker
/// count must not change a single output byte.
fn criterion_9() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_noisychain");
    let base = std::env::temp_dir().join(format!("acceptance-determinism-{}", std::process::id()));
    let mut tables = Vec::new();
    for workers in ["1", "8"] {
        let dir = base.join(format!("w{workers}"));
        let status = Command::new(exe)
            .args([
                "run",
                "--scenario",
                "two_mode",
                "--method",
                "montecarlo",
                "--realizations",
                "4000",
                "--seed",
                "11",
                "--workers",
                workers,
                "--quiet",
                "--out",
            ])
            .arg(&dir)
            .status()
            .map_err(s)?;
        if !status.success() {
            return Err(format!("run with {workers} workers exited with {status}"));
        }
        tables.push(std::fs::read(dir.join("two_mode_montecarlo.tsv")).map_err(s)?);
    }
    let _ = std::fs::remove_dir_all(&base);
    if tables[0] != tables[1] {
        return Err("worker count changed the output bytes".into());
    }
    Ok(format!(
        "1-worker and 8-worker runs wrote bitwise identical tables ({} bytes)",
        tables[0].len()
    ))
}

fn main() {
    let checks: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = 0;
    for (n, check) in checks {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("criterion {n}: PASS ({msg}) [{elapsed:.1} s]"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n}: FAIL ({msg}) [{elapsed:.1} s]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}

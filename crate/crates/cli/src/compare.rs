//! Statistical comparison of two series files.
//!
//! Observables are matched column by column; the discrepancy at each grid
//! point is scored as a z value, the difference over the combined standard
//! error. Deterministic columns carry no error, so two exact series must
//! agree almost to machine precision to pass.

use crate::table::Table;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("time grids differ: {0}")]
    GridMismatch(String),
    #[error("mode counts differ: {0} vs {1}")]
    ModeMismatch(usize, usize),
    #[error("no observable columns in common")]
    NoSharedColumns,
}

/// Tolerance for matching grid times and for zero-error cells, relative to
/// the magnitude of the values involved.
const EXACT_RTOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CellReport {
    pub column: String,
    pub time: f64,
    pub z: f64,
}

/// Score summary for one observable column.
#[derive(Debug, Clone)]
pub struct ColumnStats {
    pub name: String,
    pub cells: usize,
    pub within: usize,
    pub worst_z: f64,
    pub worst_time: f64,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub n_modes: usize,
    /// Cells actually scored (both values defined).
    pub cells: usize,
    /// Cells skipped because both sides were NaN.
    pub skipped: usize,
    pub within: usize,
    pub max_z: f64,
    pub min_fraction: f64,
    pub worst: Option<CellReport>,
    pub columns: Vec<ColumnStats>,
    pub pass: bool,
}

impl CompareOutcome {
    pub fn fraction(&self) -> f64 {
        if self.cells == 0 {
            1.0
        } else {
            self.within as f64 / self.cells as f64
        }
    }

    pub fn summary(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let worst = match &self.worst {
            Some(w) => format!(", worst z = {:.3} ({} at t = {:.6})", w.z, w.column, w.time),
            None => String::new(),
        };
        format!(
            "{verdict}: {}/{} cells within z <= {} ({:.2}% needed {:.2}%{}{})",
            self.within,
            self.cells,
            self.max_z,
            100.0 * self.fraction(),
            100.0 * self.min_fraction,
            if self.skipped > 0 {
                format!(", {} undefined cells skipped", self.skipped)
            } else {
                String::new()
            },
            worst,
        )
    }
}

fn se_column(table: &Table, name: &str) -> Option<Vec<f64>> {
    let idx = table.column(&format!("se_{name}"))?;
    Some(table.rows.iter().map(|r| r[idx]).collect())
}

/// Scores every shared observable column of `a` against `b`.
///
/// A cell passes when `|a - b| <= max_z * sqrt(se_a^2 + se_b^2)`, or, when
/// neither side carries an error, when the values agree to a tight relative
/// tolerance. A NaN on one side only fails the cell; on both sides the cell
/// is skipped as mutually undefined. The overall verdict requires at least
/// `min_fraction` of scored cells to pass.
pub fn compare_tables(
    a: &Table,
    b: &Table,
    max_z: f64,
    min_fraction: f64,
) -> Result<CompareOutcome, CompareError> {
    let (ma, mb) = (a.n_modes(), b.n_modes());
    if ma != mb || ma == 0 {
        return Err(CompareError::ModeMismatch(ma, mb));
    }
    if a.rows.len() != b.rows.len() {
        return Err(CompareError::GridMismatch(format!(
            "{} rows vs {}",
            a.rows.len(),
            b.rows.len()
        )));
    }
    for (i, (ra, rb)) in a.rows.iter().zip(&b.rows).enumerate() {
        let (ta, tb) = (ra[0], rb[0]);
        if (ta - tb).abs() > EXACT_RTOL * (1.0 + ta.abs().max(tb.abs())) {
            return Err(CompareError::GridMismatch(format!(
                "row {}: t = {ta} vs {tb}",
                i + 1
            )));
        }
    }

    let mut names = Vec::new();
    for j in 1..=ma {
        names.push(format!("n_{j}"));
        names.push(format!("g2_{j}"));
    }
    let shared: Vec<String> = names
        .into_iter()
        .filter(|n| a.column(n).is_some() && b.column(n).is_some())
        .collect();
    if shared.is_empty() {
        return Err(CompareError::NoSharedColumns);
    }

    let mut cells = 0usize;
    let mut skipped = 0usize;
    let mut within = 0usize;
    let mut worst: Option<CellReport> = None;
    let mut columns = Vec::with_capacity(shared.len());
    for name in &shared {
        let (ia, ib) = (a.column(name).unwrap(), b.column(name).unwrap());
        let sea = se_column(a, name);
        let seb = se_column(b, name);
        let mut col = ColumnStats {
            name: name.clone(),
            cells: 0,
            within: 0,
            worst_z: 0.0,
            worst_time: f64::NAN,
        };
        for (row, (ra, rb)) in a.rows.iter().zip(&b.rows).enumerate() {
            let (xa, xb) = (ra[ia], rb[ib]);
            if xa.is_nan() && xb.is_nan() {
                skipped += 1;
                continue;
            }
            cells += 1;
            col.cells += 1;
            let ea = sea.as_ref().map_or(0.0, |c| c[row]);
            let eb = seb.as_ref().map_or(0.0, |c| c[row]);
            let combined = (ea * ea + eb * eb).sqrt();
            let diff = (xa - xb).abs();
            let (ok, z) = if xa.is_nan() || xb.is_nan() {
                (false, f64::INFINITY)
            } else if combined > 0.0 {
                let z = diff / combined;
                (z <= max_z, z)
            } else {
                // both deterministic: exact agreement up to rounding
                let tol = EXACT_RTOL * (1.0 + xa.abs().max(xb.abs()));
                (diff <= tol, if diff <= tol { 0.0 } else { f64::INFINITY })
            };
            if ok {
                within += 1;
                col.within += 1;
            }
            if col.cells == 1 || z > col.worst_z {
                col.worst_z = z;
                col.worst_time = ra[0];
            }
            if worst.as_ref().map_or(true, |w| z > w.z) {
                worst = Some(CellReport {
                    column: name.clone(),
                    time: ra[0],
                    z,
                });
            }
        }
        columns.push(col);
    }

    let fraction = if cells == 0 {
        1.0
    } else {
        within as f64 / cells as f64
    };
    Ok(CompareOutcome {
        n_modes: ma,
        cells,
        skipped,
        within,
        max_z,
        min_fraction,
        worst,
        columns,
        pass: fraction >= min_fraction,
    })
}

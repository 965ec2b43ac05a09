//! Sparse antisymmetric generator `A(t_i)` of the discretized Vlasov flow and
//! its sparse-access oracles.
//!
//! `df/dt = A f` with `A = Σ_axes (advection + forcing)`; the Hamiltonian is
//! `H = iA`, which is never stored. Rows are phase-space flat indices.
//!
//! Structural neighbours of a row are enumerated by the displacement index
//! `k ∈ [0, 4d)`: phase-space axis `k / 2` (position axes first, then velocity
//! axes), step `-1` for even `k` and `+1` for odd `k`. Position steps wrap
//! periodically; a velocity step leaving `[0, n_gr)` yields the sentinel
//! `i + N_gr`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::forcefield::ForceField;
use crate::grid::PhaseSpaceGrid;

#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    grid: PhaseSpaceGrid,
    i_t: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    sparsity: usize,
    max_abs: f64,
}

/// Magnitude of the stencil coefficient attached to displacement axis `axis`
/// at multi-index `multi`; the entry is `-step * coefficient`.
#[inline]
fn coefficient(grid: &PhaseSpaceGrid, ff: &ForceField, i_t: usize, multi: &[usize], axis: usize, spatial: usize) -> f64 {
    let d = grid.dim();
    if axis < d {
        grid.u_values()[multi[d + axis]] / (2.0 * grid.dx())
    } else {
        ff.force_flat(i_t, axis - d, spatial) / (2.0 * grid.dv())
    }
}

/// Neighbour of `multi` along `axis` with `step`, or `None` past a velocity boundary.
#[inline]
fn neighbour(grid: &PhaseSpaceGrid, flat: usize, multi: &[usize], axis: usize, step: i64) -> Option<usize> {
    let n = grid.ngr();
    let stride = grid.stride(axis);
    let cur = multi[axis];
    let next = if axis < grid.dim() {
        (cur as i64 + step).rem_euclid(n as i64) as usize
    } else {
        let next = cur as i64 + step;
        if next < 0 || next >= n as i64 {
            return None;
        }
        next as usize
    };
    Some(flat - cur * stride + next * stride)
}

#[inline]
fn step_of(k: usize) -> i64 {
    if k.is_multiple_of(2) {
        -1
    } else {
        1
    }
}

fn check_field(grid: &PhaseSpaceGrid, ff: &ForceField, i_t: usize) -> Result<()> {
    if !ff.matches_grid(grid) {
        return domain(format!(
            "force field shape (d={}, n_gr={}) does not match grid (d={}, n_gr={})",
            ff.dim(),
            ff.ngr(),
            grid.dim(),
            grid.ngr()
        ));
    }
    if i_t >= ff.nt() {
        return domain(format!("time slice {i_t} out of range [0, {})", ff.nt()));
    }
    Ok(())
}

/// Assembles `A(t_{i_t})` in compressed-row form. Coinciding structural
/// positions are summed and exact zeros are dropped.
pub fn assemble(grid: &PhaseSpaceGrid, ff: &ForceField, i_t: usize) -> Result<SparseHamiltonian> {
    check_field(grid, ff, i_t)?;
    let n_total = grid.len();
    let n_disp = 2 * grid.n_axes();
    let mut row_ptr = Vec::with_capacity(n_total + 1);
    let mut cols = Vec::with_capacity(n_total * n_disp);
    let mut vals = Vec::with_capacity(n_total * n_disp);
    let mut multi = vec![0; grid.n_axes()];
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(n_disp);
    let mut sparsity = 0;
    let mut max_abs = 0.0_f64;

    row_ptr.push(0);
    for i in 0..n_total {
        grid.unflatten_into(i, &mut multi);
        let (spatial, _) = grid.split(i);
        row.clear();
        for k in 0..n_disp {
            let axis = k / 2;
            let step = step_of(k);
            if let Some(j) = neighbour(grid, i, &multi, axis, step) {
                let c = coefficient(grid, ff, i_t, &multi, axis, spatial);
                row.push((j, if step > 0 { -c } else { c }));
            }
        }
        row.sort_by_key(|&(j, _)| j);
        let start = cols.len();
        let mut idx = 0;
        while idx < row.len() {
            let j = row[idx].0;
            let mut v = 0.0;
            while idx < row.len() && row[idx].0 == j {
                v += row[idx].1;
                idx += 1;
            }
            if v != 0.0 {
                cols.push(j);
                vals.push(v);
                max_abs = max_abs.max(v.abs());
            }
        }
        sparsity = sparsity.max(cols.len() - start);
        row_ptr.push(cols.len());
    }

    Ok(SparseHamiltonian {
        grid: grid.clone(),
        i_t,
        row_ptr,
        cols,
        vals,
        sparsity,
        max_abs,
    })
}

impl SparseHamiltonian {
    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn time_slice(&self) -> usize {
        self.i_t
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Largest number of stored entries in any row.
    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    /// `‖A‖_max`, which equals `‖H‖_max`.
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(pos) => self.vals[r.start + pos],
            Err(_) => 0.0,
        }
    }

    /// `A + Aᵀ == 0` entrywise, with no diagonal.
    pub fn is_antisymmetric(&self) -> bool {
        self.entries().all(|(i, j, v)| i != j && self.get(j, i) == -v)
    }

    /// Largest number of stored entries in any column.
    pub fn column_sparsity(&self) -> usize {
        let mut counts = vec![0usize; self.dim()];
        for &j in &self.cols {
            counts[j] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, out) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in self.row(i) {
                acc += x[j] * v;
            }
            *out = acc;
        }
    }

    /// `y = A x` for real vectors.
    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        for (i, out) in y.iter_mut().enumerate() {
            *out = self.row(i).map(|(j, v)| x[j] * v).sum();
        }
    }

    /// Row-major dense copy of `A`; intended for small grids.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for (i, j, v) in self.entries() {
            out[i * n + j] = v;
        }
        out
    }

    /// Writes `(i, j, value)` triples as CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "i,j,value")?;
        for (i, j, v) in self.entries() {
            writeln!(w, "{i},{j},{v:e}")?;
        }
        w.flush()?;
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn vals_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }
}

/// Row oracle: column index of the `k`-th structural neighbour of row `i`,
/// or `i + N_gr` when the displacement leaves the velocity range.
pub fn oracle_row(grid: &PhaseSpaceGrid, i: usize, k: usize) -> Result<usize> {
    let n_disp = 2 * grid.n_axes();
    if k >= n_disp {
        return domain(format!("displacement index {k} out of range [0, {n_disp})"));
    }
    let multi = grid.unflatten(i)?;
    Ok(neighbour(grid, i, &multi, k / 2, step_of(k)).unwrap_or(i + grid.len()))
}

/// Column oracle. The sparsity pattern is symmetric, so it coincides with the row oracle.
pub fn oracle_col(grid: &PhaseSpaceGrid, j: usize, k: usize) -> Result<usize> {
    oracle_row(grid, j, k)
}

/// Entry oracle: `A_ij` composed as the sum of the per-axis advection and
/// forcing contributions.
pub fn oracle_entry(grid: &PhaseSpaceGrid, ff: &ForceField, i_t: usize, i: usize, j: usize) -> Result<f64> {
    check_field(grid, ff, i_t)?;
    let mi = grid.unflatten(i)?;
    let mj = grid.unflatten(j)?;
    let n = grid.ngr() as i64;
    let d = grid.dim();
    let (spatial, _) = grid.split(i);

    // Index of the single axis on which i and j differ, if any.
    let mut differing = mi.iter().zip(&mj).enumerate().filter(|(_, (a, b))| a != b);
    let Some((axis, (&a, &b))) = differing.next() else {
        return Ok(0.0);
    };
    if differing.next().is_some() {
        return Ok(0.0);
    }

    let delta = b as i64 - a as i64;
    let mut total = 0.0;
    for step in [-1_i64, 1] {
        let hit = if axis < d {
            (delta - step).rem_euclid(n) == 0
        } else {
            delta == step
        };
        if hit {
            let c = coefficient(grid, ff, i_t, &mi, axis, spatial);
            total += if step > 0 { -c } else { c };
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleMismatch {
    pub row: usize,
    pub col: usize,
    pub assembled: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub n_rows: usize,
    pub checked_entries: usize,
    pub mismatches: Vec<OracleMismatch>,
    /// Columns whose oracle-reported structure misses an assembled entry.
    pub column_mismatches: usize,
}

impl OracleReport {
    pub fn mismatch_count(&self) -> usize {
        self.mismatches.len() + self.column_mismatches
    }

    pub fn is_consistent(&self) -> bool {
        self.mismatch_count() == 0
    }

    pub fn into_result(self) -> Result<Self> {
        if let Some(m) = self.mismatches.first() {
            return Err(Error::Verification(format!(
                "{} oracle mismatches; first at (i={}, j={}): assembled {:e}, oracle {:e}",
                self.mismatches.len(),
                m.row,
                m.col,
                m.assembled,
                m.oracle
            )));
        }
        if self.column_mismatches > 0 {
            return Err(Error::Verification(format!(
                "{} column-oracle mismatches",
                self.column_mismatches
            )));
        }
        Ok(self)
    }
}

/// Rebuilds `A` from the row and entry oracles and compares it with the
/// assembled matrix entrywise, without tolerance.
pub fn verify_oracles(h: &SparseHamiltonian, ff: &ForceField) -> Result<OracleReport> {
    let grid = &h.grid;
    let n_total = grid.len();
    let n_disp = 2 * grid.n_axes();
    let mut mismatches = Vec::new();
    let mut checked = 0;
    let mut column_mismatches = 0;

    for i in 0..n_total {
        let mut rebuilt = BTreeMap::new();
        for k in 0..n_disp {
            let j = oracle_row(grid, i, k)?;
            if j >= n_total {
                continue;
            }
            let v = oracle_entry(grid, ff, h.i_t, i, j)?;
            if v != 0.0 {
                rebuilt.insert(j, v);
            }
        }
        let assembled: BTreeMap<usize, f64> = h.row(i).collect();
        let cols: std::collections::BTreeSet<usize> =
            rebuilt.keys().chain(assembled.keys()).copied().collect();
        for j in cols {
            checked += 1;
            let a = assembled.get(&j).copied().unwrap_or(0.0);
            let o = rebuilt.get(&j).copied().unwrap_or(0.0);
            if a.to_bits() != o.to_bits() {
                mismatches.push(OracleMismatch { row: i, col: j, assembled: a, oracle: o });
            }
        }
    }

    // Every stored entry (i, j) must be listed by the column oracle of j.
    for (i, j, _) in h.entries() {
        let listed = (0..n_disp).any(|k| oracle_col(grid, j, k).map(|r| r == i).unwrap_or(false));
        if !listed {
            column_mismatches += 1;
        }
    }

    Ok(OracleReport { n_rows: n_total, checked_entries: checked, mismatches, column_mismatches })
}

/// Closed-form bound `max{V/L, F_max/(2V)} · n_gr/2` on `‖H‖_max`.
pub fn hmax_bound(grid: &PhaseSpaceGrid, ff: &ForceField) -> f64 {
    let v = grid.vmax();
    (v / grid.box_length()).max(ff.fmax() / (2.0 * v)) * grid.ngr() as f64 / 2.0
}

/// Per-axis maximum `max{max_i |u_i|/(2Δx), F_max/(2Δv)}` over all time slices;
/// the entry magnitudes the assembled matrix can actually reach.
pub fn hmax_tight(grid: &PhaseSpaceGrid, ff: &ForceField) -> f64 {
    let umax = grid.u_values().iter().fold(0.0_f64, |m, u| m.max(u.abs()));
    (umax / (2.0 * grid.dx())).max(ff.fmax() / (2.0 * grid.dv()))
}

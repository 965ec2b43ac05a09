//! Phase-space discretization: `d` periodic position axes and `d` Dirichlet
//! velocity axes with `n_gr` points each.
//!
//! Flat indices use the mixed-radix map `i = Σ_k i_k n_gr^k` with the position
//! axes occupying the low digits and the velocity axes the high digits, so a
//! flat index splits as `spatial + n_gr^d * velocity`.

use serde::Serialize;

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSpaceGrid {
    dim: usize,
    ngr: usize,
    box_length: f64,
    vmax: f64,
    dx: f64,
    dv: f64,
    #[serde(skip)]
    x: Vec<f64>,
    #[serde(skip)]
    u: Vec<f64>,
}

impl PhaseSpaceGrid {
    pub fn new(dim: usize, ngr: usize, box_length: f64, vmax: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return domain(format!("spatial dimension must be 1, 2 or 3, got {dim}"));
        }
        if ngr < 2 || !ngr.is_power_of_two() {
            return domain(format!("ngr must be a power of two >= 2, got {ngr}"));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return domain(format!("box length must be positive, got {box_length}"));
        }
        if !(vmax.is_finite() && vmax > 0.0) {
            return domain(format!("velocity half-range must be positive, got {vmax}"));
        }
        // 2d axes of ngr points must fit the index type.
        if (ngr as u128).pow(2 * dim as u32) > u32::MAX as u128 {
            return domain(format!("grid with ngr={ngr}, dim={dim} is too large"));
        }

        let dx = box_length / ngr as f64;
        let dv = 2.0 * vmax / (ngr as f64 + 1.0);
        let x = (0..ngr).map(|i| i as f64 * dx).collect();

        // Lower half by formula, upper half mirrored so that u[n-1-i] == -u[i]
        // holds bit for bit.
        let mut u = vec![0.0; ngr];
        for i in 0..ngr / 2 {
            u[i] = -vmax + (i as f64 + 1.0) * dv;
            u[ngr - 1 - i] = -u[i];
        }

        Ok(Self { dim, ngr, box_length, vmax, dx, dv, x, u })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ngr(&self) -> usize {
        self.ngr
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn vmax(&self) -> f64 {
        self.vmax
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    /// Number of axes in the phase space (2d).
    pub fn n_axes(&self) -> usize {
        2 * self.dim
    }

    /// Number of spatial grid points, `n_gr^d`.
    pub fn n_spatial(&self) -> usize {
        self.ngr.pow(self.dim as u32)
    }

    /// Total number of phase-space points, `N_gr = n_gr^(2d)`.
    pub fn len(&self) -> usize {
        self.ngr.pow(2 * self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position coordinates `x_i = i Δx` (identical for every position axis).
    pub fn x_values(&self) -> &[f64] {
        &self.x
    }

    /// Velocity coordinates `u_i = -V + (i+1) Δv` (identical for every velocity axis).
    pub fn u_values(&self) -> &[f64] {
        &self.u
    }

    pub fn coordinate_values(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.u)
    }

    /// Stride of `axis` in the flat index.
    pub fn stride(&self, axis: usize) -> usize {
        self.ngr.pow(axis as u32)
    }

    pub fn flatten(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.n_axes() {
            return domain(format!(
                "multi-index has {} components, expected {}",
                multi.len(),
                self.n_axes()
            ));
        }
        let mut flat = 0;
        for (axis, &i) in multi.iter().enumerate().rev() {
            if i >= self.ngr {
                return domain(format!("axis {axis} index {i} out of range [0, {})", self.ngr));
            }
            flat = flat * self.ngr + i;
        }
        Ok(flat)
    }

    pub fn unflatten(&self, flat: usize) -> Result<Vec<usize>> {
        if flat >= self.len() {
            return domain(format!("flat index {flat} out of range [0, {})", self.len()));
        }
        let mut out = vec![0; self.n_axes()];
        self.unflatten_into(flat, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`unflatten`](Self::unflatten) writing into `out`.
    pub(crate) fn unflatten_into(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut() {
            *slot = flat % self.ngr;
            flat /= self.ngr;
        }
    }

    /// Splits a flat phase-space index into (spatial flat index, velocity flat index).
    pub fn split(&self, flat: usize) -> (usize, usize) {
        let ns = self.n_spatial();
        (flat % ns, flat / ns)
    }

    /// Whether the phase-space point sits on the first or last velocity grid
    /// point of any velocity axis.
    pub fn is_velocity_boundary(&self, flat: usize) -> bool {
        let (_, mut vel) = self.split(flat);
        for _ in 0..self.dim {
            let iv = vel % self.ngr;
            if iv == 0 || iv == self.ngr - 1 {
                return true;
            }
            vel /= self.ngr;
        }
        false
    }
}

//! Piecewise-time-constant CDM force samples on the spatial grid.
//!
//! Samples are held per time slice, per force axis, per spatial point
//! (row-major, x fastest). On disk they live in the VQFF1 container:
//!
//! ```text
//! b"VQFF1\n"
//! u32 LE  d
//! u32 LE  n_gr
//! u32 LE  n_t
//! u32 LE  n_IV
//! f64 LE  × n_IV·n_t·d·n_gr^d   (i_IV outer, then i_t, then axis, then spatial index)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{domain, Error, Result};
use crate::grid::PhaseSpaceGrid;

pub const VQFF_MAGIC: &[u8; 6] = b"VQFF1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    dim: usize,
    ngr: usize,
    nt: usize,
    samples: Vec<f64>,
    fmax: f64,
}

/// `F_x(x) = A sin(K x)` along the first axis, zero along the others.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticForce {
    pub amplitude: f64,
    pub wavenumber: f64,
}

impl AnalyticForce {
    pub fn new(amplitude: f64, wavenumber: f64) -> Self {
        Self { amplitude, wavenumber }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (self.wavenumber * x).sin()
    }
}

impl ForceField {
    /// Builds a field from raw samples in (i_t, axis, spatial) order.
    pub fn from_samples(dim: usize, ngr: usize, nt: usize, samples: Vec<f64>) -> Result<Self> {
        if nt == 0 {
            return domain("force field needs at least one time slice");
        }
        let expected = nt * dim * ngr.pow(dim as u32);
        if samples.len() != expected {
            return domain(format!(
                "force field expects {expected} samples, got {}",
                samples.len()
            ));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return domain(format!("non-finite force sample at position {pos}"));
        }
        let fmax = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Self { dim, ngr, nt, samples, fmax })
    }

    pub fn zeros(grid: &PhaseSpaceGrid, nt: usize) -> Result<Self> {
        let n = nt * grid.dim() * grid.n_spatial();
        Self::from_samples(grid.dim(), grid.ngr(), nt, vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ngr(&self) -> usize {
        self.ngr
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn fmax(&self) -> f64 {
        self.fmax
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    fn n_spatial(&self) -> usize {
        self.ngr.pow(self.dim as u32)
    }

    /// All samples of one time slice, (axis, spatial) order.
    pub fn slice(&self, i_t: usize) -> &[f64] {
        let len = self.dim * self.n_spatial();
        &self.samples[i_t * len..(i_t + 1) * len]
    }

    /// The sub-field made of slices `range`.
    pub fn slices(&self, range: std::ops::Range<usize>) -> Result<ForceField> {
        if range.start >= range.end || range.end > self.nt {
            return domain(format!("slice range {range:?} invalid for n_t = {}", self.nt));
        }
        let len = self.dim * self.n_spatial();
        let samples = self.samples[range.start * len..range.end * len].to_vec();
        ForceField::from_samples(self.dim, self.ngr, range.len(), samples)
    }

    /// Largest absolute sample within one time slice.
    pub fn slice_fmax(&self, i_t: usize) -> f64 {
        self.slice(i_t).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn matches_grid(&self, grid: &PhaseSpaceGrid) -> bool {
        self.dim == grid.dim() && self.ngr == grid.ngr()
    }

    pub fn force_at(&self, i_t: usize, spatial: &[usize], axis: usize) -> Result<f64> {
        if i_t >= self.nt {
            return domain(format!("time slice {i_t} out of range [0, {})", self.nt));
        }
        if axis >= self.dim {
            return domain(format!("force axis {axis} out of range [0, {})", self.dim));
        }
        if spatial.len() != self.dim {
            return domain(format!(
                "spatial index has {} components, expected {}",
                spatial.len(),
                self.dim
            ));
        }
        let mut flat = 0;
        for &i in spatial.iter().rev() {
            if i >= self.ngr {
                return domain(format!("spatial index {i} out of range [0, {})", self.ngr));
            }
            flat = flat * self.ngr + i;
        }
        Ok(self.force_flat(i_t, axis, flat))
    }

    /// Unchecked lookup by flat spatial index.
    #[inline]
    pub fn force_flat(&self, i_t: usize, axis: usize, spatial: usize) -> f64 {
        let ns = self.n_spatial();
        self.samples[(i_t * self.dim + axis) * ns + spatial]
    }
}

pub fn sample_analytic(force: &AnalyticForce, grid: &PhaseSpaceGrid, nt: usize) -> Result<ForceField> {
    if nt == 0 {
        return domain("nt must be at least 1");
    }
    let ns = grid.n_spatial();
    let dim = grid.dim();
    let x = grid.x_values();
    let mut one = vec![0.0; dim * ns];
    for (s, slot) in one[..ns].iter_mut().enumerate() {
        *slot = force.eval(x[s % grid.ngr()]);
    }
    let mut samples = Vec::with_capacity(nt * one.len());
    for _ in 0..nt {
        samples.extend_from_slice(&one);
    }
    ForceField::from_samples(dim, grid.ngr(), nt, samples)
}

/// Force fields of several initial-condition realizations sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceEnsemble {
    realizations: Vec<ForceField>,
}

impl ForceEnsemble {
    pub fn new(realizations: Vec<ForceField>) -> Result<Self> {
        let Some(first) = realizations.first() else {
            return domain("force ensemble needs at least one realization");
        };
        for (i, r) in realizations.iter().enumerate() {
            if (r.dim, r.ngr, r.nt) != (first.dim, first.ngr, first.nt) {
                return domain(format!(
                    "realization {i} has shape (d={}, n_gr={}, n_t={}), expected (d={}, n_gr={}, n_t={})",
                    r.dim, r.ngr, r.nt, first.dim, first.ngr, first.nt
                ));
            }
        }
        Ok(Self { realizations })
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn realizations(&self) -> &[ForceField] {
        &self.realizations
    }

    pub fn get(&self, i_iv: usize) -> Result<&ForceField> {
        self.realizations.get(i_iv).ok_or_else(|| {
            Error::Domain(format!(
                "realization {i_iv} out of range [0, {})",
                self.realizations.len()
            ))
        })
    }

    pub fn ensemble_force_at(
        &self,
        i_iv: usize,
        i_t: usize,
        spatial: &[usize],
        axis: usize,
    ) -> Result<f64> {
        self.get(i_iv)?.force_at(i_t, spatial, axis)
    }

    pub fn into_inner(self) -> Vec<ForceField> {
        self.realizations
    }
}

/// Raw contents of a VQFF1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct VqffData {
    pub dim: usize,
    pub ngr: usize,
    pub nt: usize,
    pub niv: usize,
    pub values: Vec<f64>,
}

impl VqffData {
    pub fn record_len(&self) -> usize {
        self.nt * self.dim * self.ngr.pow(self.dim as u32)
    }

    /// Samples belonging to realization `i_iv`.
    pub fn realization(&self, i_iv: usize) -> &[f64] {
        let len = self.record_len();
        &self.values[i_iv * len..(i_iv + 1) * len]
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads and validates a VQFF1 container. Every value must be finite.
pub fn read_vqff(path: &Path) -> Result<VqffData> {
    let fmt = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| fmt("truncated header: missing magic".into()))?;
    if &magic != VQFF_MAGIC {
        return Err(fmt(format!("bad magic {magic:?}, expected \"VQFF1\\n\"")));
    }
    let mut fields = [0usize; 4];
    for (slot, name) in fields.iter_mut().zip(["d", "n_gr", "n_t", "n_IV"]) {
        *slot = read_u32(&mut r)
            .map_err(|_| fmt(format!("truncated header: missing field {name}")))?
            as usize;
    }
    let [dim, ngr, nt, niv] = fields;
    if !(1..=3).contains(&dim) {
        return Err(fmt(format!("header field d = {dim} not in 1..=3")));
    }
    if ngr < 2 || !ngr.is_power_of_two() {
        return Err(fmt(format!("header field n_gr = {ngr} is not a power of two >= 2")));
    }
    if nt == 0 {
        return Err(fmt("header field n_t = 0".into()));
    }
    if niv == 0 {
        return Err(fmt("header field n_IV = 0".into()));
    }
    let ns = ngr.pow(dim as u32);
    let total = niv
        .checked_mul(nt)
        .and_then(|v| v.checked_mul(dim))
        .and_then(|v| v.checked_mul(ns))
        .ok_or_else(|| fmt("header describes an impossibly large payload".into()))?;

    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != total * 8 {
        return Err(fmt(format!(
            "payload has {} bytes, header implies {} values ({} bytes)",
            bytes.len(),
            total,
            total * 8
        )));
    }
    let mut values = Vec::with_capacity(total);
    for (k, chunk) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !v.is_finite() {
            let spatial = k % ns;
            let axis = (k / ns) % dim;
            let i_t = (k / (ns * dim)) % nt;
            let i_iv = k / (ns * dim * nt);
            return Err(fmt(format!(
                "non-finite value {v} in record i_IV={i_iv}, i_t={i_t}, axis={axis}, spatial={spatial}"
            )));
        }
        values.push(v);
    }
    Ok(VqffData { dim, ngr, nt, niv, values })
}

pub fn write_vqff(path: &Path, data: &VqffData) -> Result<()> {
    if data.values.len() != data.niv * data.record_len() {
        return domain("VQFF payload length does not match header");
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(VQFF_MAGIC)?;
    for v in [data.dim, data.ngr, data.nt, data.niv] {
        let v = u32::try_from(v).map_err(|_| Error::Domain(format!("header value {v} exceeds u32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &data.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one or more force fields as the realizations of a single VQFF1 file.
pub fn write_force_fields(path: &Path, fields: &[ForceField]) -> Result<()> {
    let ens = ForceEnsemble::new(fields.to_vec())?;
    let first = &ens.realizations[0];
    let values = ens
        .realizations
        .iter()
        .flat_map(|f| f.samples.iter().copied())
        .collect();
    write_vqff(
        path,
        &VqffData { dim: first.dim, ngr: first.ngr, nt: first.nt, niv: ens.len(), values },
    )
}

fn check_against_grid(path: &Path, data: &VqffData, grid: &PhaseSpaceGrid) -> Result<()> {
    if data.dim != grid.dim() || data.ngr != grid.ngr() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!(
                "dimension mismatch: file has d={}, n_gr={}, run uses d={}, n_gr={}",
                data.dim,
                data.ngr,
                grid.dim(),
                grid.ngr()
            ),
        });
    }
    Ok(())
}

/// Loads every realization stored in a VQFF1 force file.
pub fn load_force_ensemble(path: &Path, grid: &PhaseSpaceGrid) -> Result<ForceEnsemble> {
    let data = read_vqff(path)?;
    check_against_grid(path, &data, grid)?;
    let fields = (0..data.niv)
        .map(|i| ForceField::from_samples(data.dim, data.ngr, data.nt, data.realization(i).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    ForceEnsemble::new(fields)
}

/// Loads a single-realization VQFF1 force file.
pub fn load_force_field(path: &Path, grid: &PhaseSpaceGrid) -> Result<ForceField> {
    let ens = load_force_ensemble(path, grid)?;
    if ens.len() != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("file holds {} realizations; load it as an ensemble", ens.len()),
        });
    }
    Ok(ens.into_inner().remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid4() -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(1, 4, 2.0, 1.0).unwrap()
    }

    #[test]
    fn zero_field() {
        let ff = ForceField::from_samples(1, 4, 1, vec![0.0; 4]).unwrap();
        assert_eq!(ff.fmax(), 0.0);
        assert_eq!(ff.force_at(0, &[3], 0).unwrap(), 0.0);
    }

    #[test]
    fn demo_field_values() {
        let ff = sample_analytic(&AnalyticForce::new(-1.0, std::f64::consts::PI), &grid4(), 1).unwrap();
        let expected = [0.0, -1.0, 0.0, 1.0];
        for (i, e) in expected.iter().enumerate() {
            assert!((ff.force_at(0, &[i], 0).unwrap() - e).abs() < 1e-15);
        }
        assert!((ff.fmax() - 1.0).abs() < 1e-15);

        let g64 = PhaseSpaceGrid::new(1, 64, 2.0, 1.0).unwrap();
        let ff = sample_analytic(&AnalyticForce::new(-1.0, std::f64::consts::PI), &g64, 1).unwrap();
        assert_eq!(ff.force_at(0, &[16], 0).unwrap(), -1.0);
    }

    #[test]
    fn analytic_time_independent() {
        let g = PhaseSpaceGrid::new(2, 4, 2.0, 1.0).unwrap();
        let ff = sample_analytic(&AnalyticForce::new(0.7, 1.3), &g, 5).unwrap();
        assert_eq!(ff.nt(), 5);
        for i_t in 1..5 {
            assert_eq!(ff.slice(i_t), ff.slice(0));
        }
        // second axis carries no force
        for s in 0..16 {
            assert_eq!(ff.force_flat(2, 1, s), 0.0);
        }
        let zero = sample_analytic(&AnalyticForce::new(0.0, 1.0), &g, 2).unwrap();
        assert!(zero.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn force_at_errors() {
        let ff = ForceField::zeros(&grid4(), 2).unwrap();
        assert!(ff.force_at(2, &[0], 0).is_err());
        assert!(ff.force_at(0, &[4], 0).is_err());
        assert!(ff.force_at(0, &[0], 1).is_err());
        assert!(ff.force_at(0, &[0, 0], 0).is_err());
    }

    #[test]
    fn fmax_is_full_scan() {
        let samples = vec![0.5, -2.5, 1.0, 2.0, 0.0, -0.1, 0.3, 2.4];
        let ff = ForceField::from_samples(1, 4, 2, samples.clone()).unwrap();
        let scan = samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert_eq!(ff.fmax(), scan);
        assert_eq!(ff.slice_fmax(1), 2.4);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ForceField::from_samples(1, 4, 1, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(ForceField::from_samples(1, 4, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn ensemble_dispatch() {
        let g = grid4();
        let a = sample_analytic(&AnalyticForce::new(-1.0, std::f64::consts::PI), &g, 1).unwrap();
        let z = ForceField::zeros(&g, 1).unwrap();
        let single = ForceEnsemble::new(vec![a.clone()]).unwrap();
        for i in 0..4 {
            assert_eq!(single.ensemble_force_at(0, 0, &[i], 0).unwrap(), a.force_at(0, &[i], 0).unwrap());
        }
        let ens = ForceEnsemble::new(vec![a, z]).unwrap();
        for i in 0..4 {
            assert_eq!(ens.ensemble_force_at(1, 0, &[i], 0).unwrap(), 0.0);
        }
        assert!(ens.ensemble_force_at(2, 0, &[0], 0).is_err());

        let other = ForceField::zeros(&g, 3).unwrap();
        assert!(ForceEnsemble::new(vec![ForceField::zeros(&g, 1).unwrap(), other]).is_err());
    }
}

//! Eigenspaces, their aggregation across Fock layers, and smooth local
//! eigenframes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{enumerate_layer, enumerate_truncated, operator_matrix, FockBasis, ModeSystem};
use crate::linalg::{eigh, hermitian_defect, lowdin, max_abs, zeros, CMat, C64};
use crate::models::{hamiltonian_at, unitary_at, ModelSpec, ParameterPoint};

/// Degenerate eigenspace on one basis.
#[derive(Debug, Clone)]
pub struct EigenspaceBlock {
    pub eigenvalue: f64,
    /// `None` for truncated (non-number-conserving) bases.
    pub particle_number: Option<u32>,
    pub dimension: usize,
    pub frame: CMat,
    /// Position of the first eigenvalue of the block in the sorted spectrum.
    pub spectral_index: usize,
    /// Set when a neighbouring gap is within ten times the cluster tolerance.
    pub ill_conditioned: bool,
}

impl EigenspaceBlock {
    pub fn projector(&self) -> CMat {
        &self.frame * self.frame.adjoint()
    }
}

#[derive(Debug, Clone)]
pub struct EigenspaceFamily {
    pub label: usize,
    pub eigenvalue: f64,
    pub blocks: Vec<EigenspaceBlock>,
}

impl EigenspaceFamily {
    pub fn dimension(&self) -> usize {
        self.blocks.iter().map(|b| b.dimension).sum()
    }

    pub fn block(&self, n: u32) -> Option<&EigenspaceBlock> {
        self.blocks.iter().find(|b| b.particle_number == Some(n))
    }
}

/// Default cluster tolerances.
pub const CLUSTER_TOL_ISOSPECTRAL: f64 = 1e-9;
pub const CLUSTER_TOL_GRAPH: f64 = 1e-8;

pub fn default_cluster_tol(spec: &ModelSpec) -> f64 {
    if spec.compiled().isospectral() {
        CLUSTER_TOL_ISOSPECTRAL
    } else {
        CLUSTER_TOL_GRAPH
    }
}

fn is_diagonal(m: &CMat) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && (m[(i, j)].re != 0.0 || m[(i, j)].im != 0.0) {
                return false;
            }
        }
    }
    true
}

/// Split a Hermitian matrix into clustered eigenspaces, sorted by eigenvalue.
pub fn eigen_blocks(matrix: &CMat, cluster_tol: f64) -> Result<Vec<EigenspaceBlock>> {
    let n = matrix.nrows();
    if n == 0 {
        return Ok(vec![]);
    }
    let scale = max_abs(matrix).max(1.0);
    let defect = hermitian_defect(matrix);
    if defect > 1e-10 * scale {
        return Err(Error::NotHermitian(defect));
    }
    // exact unit-vector frames for diagonal matrices keep number-state
    // eigenspaces free of solver noise
    let (vals, vecs) = if is_diagonal(matrix) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| matrix[(a, a)].re.total_cmp(&matrix[(b, b)].re).then(a.cmp(&b)));
        let vals: Vec<f64> = order.iter().map(|&k| matrix[(k, k)].re).collect();
        let mut vecs = zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            vecs[(k, col)] = C64::new(1.0, 0.0);
        }
        (vals, vecs)
    } else {
        eigh(matrix)
    };
    let radius = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = cluster_tol * radius.max(1.0);
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=n {
        if k == n || vals[k] - vals[k - 1] >= tol {
            let d = k - start;
            let mean = vals[start..k].iter().sum::<f64>() / d as f64;
            let gap_lo = if start > 0 { vals[start] - vals[start - 1] } else { f64::INFINITY };
            let gap_hi = if k < n { vals[k] - vals[k - 1] } else { f64::INFINITY };
            out.push(EigenspaceBlock {
                eigenvalue: mean,
                particle_number: None,
                dimension: d,
                frame: vecs.columns(start, d).into_owned(),
                spectral_index: start,
                ill_conditioned: gap_lo < 10.0 * tol || gap_hi < 10.0 * tol,
            });
            start = k;
        }
    }
    Ok(out)
}

/// Eigenspaces of every layer up to `n_max`, merged by eigenvalue.
pub fn family_across_layers(spec: &ModelSpec, params: &ParameterPoint, n_max: u32, cluster_tol: f64) -> Result<Vec<EigenspaceFamily>> {
    if !spec.number_conserving() {
        return Err(Error::Config(format!("model `{}` does not conserve particle number", spec.name)));
    }
    let sys = spec.compiled().system;
    let mut all: Vec<EigenspaceBlock> = Vec::new();
    for n in 0..=n_max {
        let basis = enumerate_layer(&sys, n);
        let h = hamiltonian_at(spec, params, &basis)?;
        for mut b in eigen_blocks(&h, cluster_tol)? {
            b.particle_number = Some(n);
            all.push(b);
        }
    }
    Ok(group_families(all, cluster_tol))
}

fn group_families(mut blocks: Vec<EigenspaceBlock>, cluster_tol: f64) -> Vec<EigenspaceFamily> {
    blocks.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue).then(a.particle_number.cmp(&b.particle_number)));
    let mut fams: Vec<EigenspaceFamily> = Vec::new();
    for b in blocks {
        let tol = cluster_tol * b.eigenvalue.abs().max(1.0) * 10.0;
        match fams.last_mut() {
            Some(f) if (b.eigenvalue - f.eigenvalue).abs() < tol => f.blocks.push(b),
            _ => fams.push(EigenspaceFamily { label: 0, eigenvalue: b.eigenvalue, blocks: vec![b] }),
        }
    }
    for (k, f) in fams.iter_mut().enumerate() {
        f.label = k;
        f.blocks.sort_by_key(|b| b.particle_number);
    }
    fams
}

/// Eigenspace of the constant part `H̃` of an isospectral model.
#[derive(Debug, Clone, Serialize)]
pub struct StaticEigenspace {
    pub label: usize,
    pub eigenvalue: f64,
    pub dimension: usize,
    /// Basis positions of the spanning number states (diagonal `H̃` only).
    pub states: Vec<usize>,
    pub particles_needed: u32,
    /// False when raising the cutoff changes the dimension.
    pub complete: bool,
}

/// Eigenspaces of `H̃` on the model's truncated basis.
pub fn static_eigenspaces(spec: &ModelSpec, cluster_tol: f64) -> Result<(FockBasis, Vec<StaticEigenspace>)> {
    let c = spec.compiled();
    if !c.isospectral() {
        return Err(Error::Config(format!("model `{}` is not isospectral", spec.name)));
    }
    let basis = enumerate_truncated(&c.system)?;
    let h0 = operator_matrix(&c.h, &basis, &ParameterPoint::new())?;
    if !is_diagonal(&h0) {
        return Err(Error::Config("static eigenspaces need a number-diagonal `h0`".into()));
    }
    let bigger = ModeSystem { cutoff: c.system.cutoff.map(|x| x + 2), ..c.system };
    let big_basis = enumerate_truncated(&bigger)?;
    let big_h = operator_matrix(&c.h, &big_basis, &ParameterPoint::new())?;
    let blocks = eigen_blocks(&h0, cluster_tol)?;
    let mut out = Vec::new();
    for (label, b) in blocks.iter().enumerate() {
        let states: Vec<usize> = (0..b.dimension)
            .map(|col| (0..basis.len()).find(|&r| b.frame[(r, col)].re == 1.0).expect("unit frame"))
            .collect();
        let particles_needed = states.iter().map(|&s| basis.states[s].particles()).max().unwrap_or(0);
        let tol = cluster_tol * b.eigenvalue.abs().max(1.0);
        let big_dim = (0..big_basis.len()).filter(|&k| (big_h[(k, k)].re - b.eigenvalue).abs() < tol).count();
        out.push(StaticEigenspace {
            label,
            eigenvalue: b.eigenvalue,
            dimension: b.dimension,
            states,
            particles_needed,
            complete: big_dim == b.dimension,
        });
    }
    Ok((basis, out))
}

/// Gauge used to pick frames around a base point.
#[derive(Debug, Clone, PartialEq)]
pub enum Gauge {
    /// `frame(κ) = Löwdin(P(κ)·frame(κ₀))`.
    ProjectorTransport,
    /// `frame(κ) = Löwdin(P(κ)·R)` for fixed reference columns `R`.
    Reference(CMat),
    /// `frame(κ) = V(κ)·Φ₀` with `Φ₀` an eigenframe of the constant `H̃`.
    Isospectral,
}

/// Which eigenspace a frame follows.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSelector {
    /// Particle number of the layer, or `None` for the truncated basis.
    pub layer: Option<u32>,
    /// Eigenvalue at the base point.
    pub eigenvalue: f64,
}

/// Smooth eigenframe field around a base point.
#[derive(Debug, Clone)]
pub struct LocalFrameField {
    pub spec: ModelSpec,
    pub basis: FockBasis,
    pub base_point: ParameterPoint,
    pub base_frame: CMat,
    /// Static frame `Φ₀` (isospectral gauge only).
    pub static_frame: Option<CMat>,
    pub eigenvalue: f64,
    pub spectral_index: usize,
    pub gauge: Gauge,
    pub cluster_tol: f64,
}

pub fn basis_for(spec: &ModelSpec, layer: Option<u32>) -> Result<FockBasis> {
    let sys = spec.compiled().system;
    match layer {
        Some(n) => Ok(enumerate_layer(&sys, n)),
        None => enumerate_truncated(&sys),
    }
}

/// Eigenframe field of the selected block around `base`.
pub fn local_frame(spec: &ModelSpec, base: &ParameterPoint, sel: &BlockSelector, gauge: Gauge, cluster_tol: f64) -> Result<LocalFrameField> {
    spec.check_point(base)?;
    let basis = basis_for(spec, sel.layer)?;
    let c = spec.compiled();
    let pick = |blocks: Vec<EigenspaceBlock>| -> Result<EigenspaceBlock> {
        blocks
            .into_iter()
            .min_by(|a, b| (a.eigenvalue - sel.eigenvalue).abs().total_cmp(&(b.eigenvalue - sel.eigenvalue).abs()))
            .filter(|b| (b.eigenvalue - sel.eigenvalue).abs() < 1e-6 * sel.eigenvalue.abs().max(1.0))
            .ok_or_else(|| Error::Config(format!("no eigenvalue {} in the selected layer", sel.eigenvalue)))
    };
    match &gauge {
        Gauge::Isospectral => {
            if !c.isospectral() {
                return Err(Error::Config("isospectral gauge needs a constant `h0`".into()));
            }
            let h0 = operator_matrix(&c.h, &basis, &ParameterPoint::new())?;
            let b = pick(eigen_blocks(&h0, cluster_tol)?)?;
            let v = unitary_at(spec, base, &basis)?;
            Ok(LocalFrameField {
                spec: spec.clone(),
                base_frame: &v * &b.frame,
                static_frame: Some(b.frame),
                basis,
                base_point: base.clone(),
                eigenvalue: b.eigenvalue,
                spectral_index: b.spectral_index,
                gauge,
                cluster_tol,
            })
        }
        Gauge::ProjectorTransport | Gauge::Reference(_) => {
            let h = hamiltonian_at(spec, base, &basis)?;
            let b = pick(eigen_blocks(&h, cluster_tol)?)?;
            let mut field = LocalFrameField {
                spec: spec.clone(),
                base_frame: b.frame.clone(),
                static_frame: None,
                basis,
                base_point: base.clone(),
                eigenvalue: b.eigenvalue,
                spectral_index: b.spectral_index,
                gauge,
                cluster_tol,
            };
            if let Gauge::Reference(r) = &field.gauge {
                if r.nrows() != field.basis.len() || r.ncols() != b.dimension {
                    return Err(Error::Config("reference columns do not match the block shape".into()));
                }
                field.base_frame = field.frame_from_projector(&b.projector(), r)?;
            }
            Ok(field)
        }
    }
}

impl LocalFrameField {
    pub fn dimension(&self) -> usize {
        self.base_frame.ncols()
    }

    /// Projector onto the tracked eigenspace at κ, found by spectral position.
    pub fn projector_at(&self, k: &ParameterPoint) -> Result<(CMat, f64)> {
        let h = hamiltonian_at(&self.spec, k, &self.basis)?;
        let (vals, vecs) = eigh(&h);
        let d = self.dimension();
        let (lo, hi) = (self.spectral_index, self.spectral_index + d);
        let radius = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        let tol = 10.0 * self.cluster_tol * radius;
        let gap_lo = if lo > 0 { vals[lo] - vals[lo - 1] } else { f64::INFINITY };
        let gap_hi = if hi < vals.len() { vals[hi] - vals[hi - 1] } else { f64::INFINITY };
        if gap_lo.min(gap_hi) <= tol {
            return Err(Error::FrameDegeneracy(format!("gap {:.3e} closes at {:?}", gap_lo.min(gap_hi), k.values)));
        }
        let w = vecs.columns(lo, d).into_owned();
        let mean = vals[lo..hi].iter().sum::<f64>() / d as f64;
        Ok((&w * w.adjoint(), mean))
    }

    fn frame_from_projector(&self, p: &CMat, cols: &CMat) -> Result<CMat> {
        lowdin(&(p * cols), 1e-6).ok_or_else(|| Error::FrameDegeneracy("transported frame lost rank".into()))
    }

    /// Frame at κ in this field's gauge.
    pub fn evaluate(&self, k: &ParameterPoint) -> Result<CMat> {
        if *k == self.base_point {
            return Ok(self.base_frame.clone());
        }
        match &self.gauge {
            Gauge::Isospectral => {
                let v = unitary_at(&self.spec, k, &self.basis)?;
                Ok(v * self.static_frame.as_ref().expect("isospectral frame"))
            }
            Gauge::ProjectorTransport => {
                let (p, _) = self.projector_at(k)?;
                self.frame_from_projector(&p, &self.base_frame)
            }
            Gauge::Reference(r) => {
                let (p, _) = self.projector_at(k)?;
                self.frame_from_projector(&p, r)
            }
        }
    }

    /// Transport an arbitrary frame into the eigenspace at κ.
    pub fn transport(&self, from: &CMat, k: &ParameterPoint) -> Result<CMat> {
        let (p, _) = self.projector_at(k)?;
        self.frame_from_projector(&p, from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, eye};

    #[test]
    fn identity_is_one_block() {
        let b = eigen_blocks(&eye(4), 1e-9).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].dimension, 4);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(eigen_blocks(&m, 1e-9), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn clusters_close_eigenvalues() {
        let m = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(1.0 + 1e-12, 0.0), c(2.0, 0.0)]));
        let b = eigen_blocks(&m, 1e-9).unwrap();
        assert_eq!(b.iter().map(|x| x.dimension).collect::<Vec<_>>(), vec![2, 1]);
    }
}

//! Fock bases and matrix representations of ladder-operator polynomials.
//!
//! States are ordered by total particle number, then descending
//! lexicographically on `(n_1, …, n_M, s_1, …, s_L)`, so the two-mode layer
//! N = 2 reads `|2,0⟩, |1,1⟩, |0,2⟩`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Ladder, OperatorExpression, ParamExpr};
use crate::jet::{Jet, JetSpace, MatJet};
use crate::linalg::{zeros, CMat, C64};
use crate::models::ParameterPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeSystem {
    pub boson_modes: usize,
    pub two_level_modes: usize,
    /// Per-mode occupation cap for truncated bases.
    pub cutoff: Option<u32>,
}

impl ModeSystem {
    pub fn bosons(m: usize) -> Self {
        ModeSystem { boson_modes: m, two_level_modes: 0, cutoff: None }
    }

    pub fn with_cutoff(mut self, cutoff: u32) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.boson_modes + self.two_level_modes == 0 {
            return Err(Error::Config("mode system has no modes".into()));
        }
        if self.cutoff == Some(0) {
            return Err(Error::Config("cutoff must be at least 1".into()));
        }
        Ok(())
    }

    pub fn check_expression(&self, expr: &OperatorExpression) -> Result<()> {
        for t in &expr.terms {
            for l in &t.factors {
                let (idx, avail) = match *l {
                    Ladder::Create(k) | Ladder::Annihilate(k) => (k, self.boson_modes),
                    Ladder::Raise(j) | Ladder::Lower(j) => (j, self.two_level_modes),
                };
                if idx >= avail {
                    return Err(Error::ModeIndex { index: idx + 1, available: avail });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OccupationState {
    pub occupations: Vec<u32>,
    pub excitations: Vec<u8>,
}

impl OccupationState {
    pub fn vacuum(sys: &ModeSystem) -> Self {
        OccupationState { occupations: vec![0; sys.boson_modes], excitations: vec![0; sys.two_level_modes] }
    }

    pub fn particles(&self) -> u32 {
        self.occupations.iter().sum::<u32>() + self.excitations.iter().map(|&e| e as u32).sum::<u32>()
    }
}

impl fmt::Display for OccupationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        let mut first = true;
        for n in &self.occupations {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
            first = false;
        }
        if !self.excitations.is_empty() {
            write!(f, ";")?;
            for (k, e) in self.excitations.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", if *e == 1 { 'e' } else { 'g' })?;
            }
        }
        write!(f, "⟩")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    pub system: ModeSystem,
    pub states: Vec<OccupationState>,
    pub index: HashMap<OccupationState, usize>,
    /// Particle number for a layer basis, `None` for a truncated one.
    pub layer: Option<u32>,
}

impl FockBasis {
    fn from_states(system: ModeSystem, states: Vec<OccupationState>, layer: Option<u32>) -> Self {
        let index = states.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        FockBasis { system, states, index, layer }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn position(&self, s: &OccupationState) -> Option<usize> {
        self.index.get(s).copied()
    }

    fn truncated(&self) -> bool {
        self.layer.is_none()
    }
}

/// All states with `particles` quanta in total (cutoff ignored).
pub fn enumerate_layer(system: &ModeSystem, particles: u32) -> FockBasis {
    let m = system.boson_modes;
    let l = system.two_level_modes;
    let mut out = Vec::new();
    let mut cur = vec![0u32; m + l];
    fill_desc(&mut cur, 0, particles, m, None, &mut out);
    let states = out
        .into_iter()
        .map(|v| OccupationState { occupations: v[..m].to_vec(), excitations: v[m..].iter().map(|&x| x as u8).collect() })
        .collect();
    FockBasis::from_states(*system, states, Some(particles))
}

// Distribute `left` quanta over positions pos.. in descending lexicographic order.
fn fill_desc(cur: &mut [u32], pos: usize, left: u32, m: usize, cap: Option<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == cur.len() {
        if left == 0 {
            out.push(cur.to_vec());
        }
        return;
    }
    let room: u32 = cur[pos + 1..]
        .iter()
        .enumerate()
        .map(|(k, _)| if pos + 1 + k < m { cap.unwrap_or(u32::MAX / 4) } else { 1 })
        .fold(0u32, |a, b| a.saturating_add(b));
    let hi = if pos < m { cap.map_or(left, |c| c.min(left)) } else { left.min(1) };
    for v in (0..=hi).rev() {
        if left - v > room {
            break;
        }
        cur[pos] = v;
        fill_desc(cur, pos + 1, left - v, m, cap, out);
    }
    cur[pos] = 0;
}

/// All states with every boson occupation at most the cutoff.
pub fn enumerate_truncated(system: &ModeSystem) -> Result<FockBasis> {
    system.validate()?;
    let cap = system
        .cutoff
        .ok_or_else(|| Error::Config("truncated basis requires a per-mode cutoff".into()))?;
    let m = system.boson_modes;
    let l = system.two_level_modes;
    let n_max = cap * m as u32 + l as u32;
    let mut out = Vec::new();
    let mut cur = vec![0u32; m + l];
    for n in 0..=n_max {
        fill_desc(&mut cur, 0, n, m, Some(cap), &mut out);
    }
    let states = out
        .into_iter()
        .map(|v| OccupationState { occupations: v[..m].to_vec(), excitations: v[m..].iter().map(|&x| x as u8).collect() })
        .collect();
    Ok(FockBasis::from_states(*system, states, None))
}

/// Apply a ladder word (rightmost first) to a number state.
fn apply_word(word: &[Ladder], s: &OccupationState, cap: Option<u32>) -> Option<(OccupationState, f64)> {
    let mut st = s.clone();
    let mut amp = 1.0f64;
    for l in word.iter().rev() {
        match *l {
            Ladder::Create(k) => {
                let n = st.occupations[k];
                if cap.is_some_and(|c| n + 1 > c) {
                    return None;
                }
                amp *= ((n + 1) as f64).sqrt();
                st.occupations[k] = n + 1;
            }
            Ladder::Annihilate(k) => {
                let n = st.occupations[k];
                if n == 0 {
                    return None;
                }
                amp *= (n as f64).sqrt();
                st.occupations[k] = n - 1;
            }
            Ladder::Raise(j) => {
                if st.excitations[j] == 1 {
                    return None;
                }
                st.excitations[j] = 1;
            }
            Ladder::Lower(j) => {
                if st.excitations[j] == 0 {
                    return None;
                }
                st.excitations[j] = 0;
            }
        }
    }
    Some((st, amp))
}

/// Compressed-sparse-row complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<C64>,
}

impl SparseMatrix {
    /// Build from coordinate triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, C64)>) -> Self {
        trip.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut vals: Vec<C64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            vals.push(v);
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix { nrows, ncols, row_ptr, col_idx, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.vals[k])))
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        SparseMatrix::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scaled(&self, s: C64) -> Self {
        SparseMatrix { vals: self.vals.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn add(&self, o: &SparseMatrix) -> Self {
        SparseMatrix::from_triplets(self.nrows, self.ncols, self.triplets().chain(o.triplets()).collect())
    }

    /// `self · x` for a dense block of columns.
    pub fn mul_dense(&self, x: &CMat) -> CMat {
        let mut out = zeros(self.nrows, x.ncols());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = self.vals[k];
                let c = self.col_idx[k];
                for j in 0..x.ncols() {
                    out[(r, j)] += v * x[(c, j)];
                }
            }
        }
        out
    }
}

/// Matrix of a bare ladder word on a basis (no coefficient).
pub fn word_matrix(word: &[Ladder], basis: &FockBasis) -> SparseMatrix {
    let cap = if basis.truncated() { basis.system.cutoff } else { None };
    let mut trip = Vec::new();
    for (col, s) in basis.states.iter().enumerate() {
        if let Some((t, amp)) = apply_word(word, s, cap) {
            if let Some(row) = basis.position(&t) {
                trip.push((row, col, C64::new(amp, 0.0)));
            }
        }
    }
    SparseMatrix::from_triplets(basis.len(), basis.len(), trip)
}

/// Coefficient expressions paired with their ladder-word matrices.
pub fn term_matrices(expr: &OperatorExpression, basis: &FockBasis) -> Result<Vec<(ParamExpr, SparseMatrix)>> {
    basis.system.check_expression(expr)?;
    Ok(expr.terms.iter().map(|t| (t.coef.clone(), word_matrix(&t.factors, basis))).collect())
}

/// Sparse matrix of `expr` at a parameter point.
pub fn operator_sparse(expr: &OperatorExpression, basis: &FockBasis, params: &ParameterPoint) -> Result<SparseMatrix> {
    let mut trip = Vec::new();
    for (coef, m) in term_matrices(expr, basis)? {
        let c = coef.eval(&|n| params.get(n))?;
        trip.extend(m.triplets().map(|(r, col, v)| (r, col, v * c)));
    }
    Ok(SparseMatrix::from_triplets(basis.len(), basis.len(), trip))
}

/// Dense matrix of `expr` at a parameter point.
pub fn operator_matrix(expr: &OperatorExpression, basis: &FockBasis, params: &ParameterPoint) -> Result<CMat> {
    Ok(operator_sparse(expr, basis, params)?.to_dense())
}

/// Taylor jet of the matrix of `expr` in the variables `vars` around `params`.
pub fn operator_jet(
    expr: &OperatorExpression,
    basis: &FockBasis,
    params: &ParameterPoint,
    sp: &JetSpace,
    k: usize,
    vars: &[String],
) -> Result<MatJet> {
    let n = basis.len();
    let mut out = MatJet::zeros(sp, k, n, n);
    let lookup = |name: &str| -> Option<(Option<usize>, f64)> {
        let x = params.get(name)?;
        Some((vars.iter().position(|v| v == name), x))
    };
    for (coef, m) in term_matrices(expr, basis)? {
        let cj: Jet = coef.eval_jet(sp, k, &lookup)?;
        let dense = m.to_dense();
        for (idx, z) in cj.nonzeros() {
            out.c[idx].zip_apply(&dense, |a, b| *a += b * z);
        }
    }
    Ok(out)
}

/// True when every term has as many creation as annihilation symbols.
pub fn is_number_conserving(expr: &OperatorExpression) -> bool {
    expr.terms.iter().all(|t| {
        let up = t.factors.iter().filter(|l| matches!(l, Ladder::Create(_) | Ladder::Raise(_))).count();
        up * 2 == t.factors.len()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(b: &FockBasis) -> Vec<Vec<u32>> {
        b.states.iter().map(|s| s.occupations.clone()).collect()
    }

    #[test]
    fn layer_order_is_descending_lexicographic() {
        let b = enumerate_layer(&ModeSystem::bosons(2), 2);
        assert_eq!(labels(&b), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        let b = enumerate_layer(&ModeSystem::bosons(3), 1);
        assert_eq!(labels(&b), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn two_level_modes_are_capped() {
        let sys = ModeSystem { boson_modes: 1, two_level_modes: 2, cutoff: None };
        let b = enumerate_layer(&sys, 2);
        assert!(b.states.iter().all(|s| s.excitations.iter().all(|&e| e <= 1)));
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn truncated_basis_is_graded() {
        let sys = ModeSystem::bosons(2).with_cutoff(2);
        let b = enumerate_truncated(&sys).unwrap();
        let n: Vec<u32> = b.states.iter().map(|s| s.particles()).collect();
        assert!(n.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(b.states[0].particles(), 0);
    }

    #[test]
    fn truncated_creation_past_cutoff_vanishes() {
        let sys = ModeSystem::bosons(1).with_cutoff(2);
        let b = enumerate_truncated(&sys).unwrap();
        let m = word_matrix(&[Ladder::Create(0)], &b).to_dense();
        assert_eq!(m[(2, 1)], C64::new(2f64.sqrt(), 0.0));
        assert_eq!(m.column(2).iter().map(|z| z.norm()).sum::<f64>(), 0.0);
    }

    #[test]
    fn sparse_roundtrip() {
        let s = SparseMatrix::from_triplets(2, 2, vec![(0, 1, C64::new(1.0, 2.0)), (0, 1, C64::new(1.0, 0.0)), (1, 0, C64::new(0.0, 1.0))]);
        assert_eq!(s.nnz(), 2);
        let d = s.to_dense();
        assert_eq!(d[(0, 1)], C64::new(2.0, 2.0));
        assert_eq!(s.adjoint().to_dense(), d.adjoint());
        let x = CMat::from_fn(2, 3, |i, j| C64::new(i as f64 + 1.0, j as f64));
        assert_eq!(s.mul_dense(&x), &d * &x);
    }
}

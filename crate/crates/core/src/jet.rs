//! Truncated multivariate Taylor series ("jets") with scalar and matrix
//! coefficients.
//!
//! A jet of order `k` in `n` variables stores the Taylor coefficients
//! `c_m` of `f(x0 + δ) = Σ_m c_m δ^m` for all multi-indices `|m| ≤ k`.
//! Monomials are graded by total degree, so a jet of lower order is a
//! prefix of a jet of higher order over the same [`JetSpace`].

use std::collections::HashMap;

use crate::linalg::{eigh, zeros, CMat, C64};

/// Monomial tables shared by all jets over the same variables.
#[derive(Debug, Clone)]
pub struct JetSpace {
    nvars: usize,
    order: usize,
    monos: Vec<Vec<u8>>,
    degree: Vec<usize>,
    prefix: Vec<usize>,
    // by_left[i] = [(j, out)] with m_i + m_j = m_out, sorted by out
    by_left: Vec<Vec<(u32, u32)>>,
    // by_out[o] = [(i, j)] with m_i + m_j = m_o
    by_out: Vec<Vec<(u32, u32)>>,
    // shift[v][m] = index of m + e_v
    shift: Vec<Vec<Option<u32>>>,
}

impl JetSpace {
    pub fn new(nvars: usize, order: usize) -> Self {
        let mut monos: Vec<Vec<u8>> = vec![vec![0; nvars]];
        let mut prefix = vec![1];
        let mut last_start = 0;
        for _deg in 1..=order {
            let start = monos.len();
            let mut next: Vec<Vec<u8>> = Vec::new();
            // extend each monomial of the previous degree by a variable >= its last one
            for m in &monos[last_start..start] {
                let lo = m.iter().rposition(|&e| e > 0).unwrap_or(0);
                for v in lo..nvars {
                    let mut t = m.clone();
                    t[v] += 1;
                    next.push(t);
                }
            }
            monos.extend(next);
            prefix.push(monos.len());
            last_start = start;
        }
        let index: HashMap<Vec<u8>, usize> =
            monos.iter().enumerate().map(|(k, m)| (m.clone(), k)).collect();
        let degree: Vec<usize> = monos.iter().map(|m| m.iter().map(|&e| e as usize).sum()).collect();
        let n = monos.len();
        let mut by_left = vec![Vec::new(); n];
        let mut by_out = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let s: Vec<u8> = monos[i].iter().zip(&monos[j]).map(|(a, b)| a + b).collect();
                let o = index[&s];
                by_left[i].push((j as u32, o as u32));
                by_out[o].push((i as u32, j as u32));
            }
            by_left[i].sort_by_key(|&(_, o)| o);
        }
        let shift = (0..nvars)
            .map(|v| {
                monos
                    .iter()
                    .map(|m| {
                        let mut t = m.clone();
                        t[v] += 1;
                        index.get(&t).map(|&k| k as u32)
                    })
                    .collect()
            })
            .collect();
        JetSpace { nvars, order, monos, degree, prefix, by_left, by_out, shift }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of monomials of total degree at most `k`.
    pub fn len(&self, k: usize) -> usize {
        self.prefix[k.min(self.order)]
    }

    pub fn monomial(&self, idx: usize) -> &[u8] {
        &self.monos[idx]
    }

    pub fn degree(&self, idx: usize) -> usize {
        self.degree[idx]
    }

    /// Order of a jet with `len` coefficients.
    pub fn order_of(&self, len: usize) -> usize {
        self.prefix.iter().position(|&p| p == len).expect("jet length not a monomial prefix")
    }

    /// Pairs `(i, j)` with `m_i + m_j = m_o`.
    pub fn pairs(&self, o: usize) -> &[(u32, u32)] {
        &self.by_out[o]
    }

    /// Index of `m_idx + e_v`, if inside the space.
    pub fn shifted(&self, v: usize, idx: usize) -> Option<usize> {
        self.shift[v][idx].map(|x| x as usize)
    }

    /// Index of the degree-one monomial for variable `v`.
    pub fn var_index(&self, v: usize) -> usize {
        self.shift[v][0].expect("order zero space has no variables") as usize
    }
}

/// Scalar jet.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub c: Vec<C64>,
}

impl Jet {
    pub fn constant(sp: &JetSpace, k: usize, v: C64) -> Self {
        let mut c = vec![C64::new(0.0, 0.0); sp.len(k)];
        c[0] = v;
        Jet { c }
    }

    pub fn zero(sp: &JetSpace, k: usize) -> Self {
        Self::constant(sp, k, C64::new(0.0, 0.0))
    }

    /// The coordinate function `x_v` expanded around `x0`.
    pub fn variable(sp: &JetSpace, k: usize, v: usize, x0: f64) -> Self {
        let mut j = Self::constant(sp, k, C64::new(x0, 0.0));
        if k >= 1 {
            j.c[sp.var_index(v)] = C64::new(1.0, 0.0);
        }
        j
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    pub fn order(&self, sp: &JetSpace) -> usize {
        sp.order_of(self.c.len())
    }

    pub fn truncate(&self, sp: &JetSpace, k: usize) -> Self {
        Jet { c: self.c[..sp.len(k).min(self.c.len())].to_vec() }
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        Jet { c: (0..n).map(|k| self.c[k] + o.c[k]).collect() }
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        Jet { c: (0..n).map(|k| self.c[k] - o.c[k]).collect() }
    }

    pub fn scale(&self, s: C64) -> Jet {
        Jet { c: self.c.iter().map(|z| z * s).collect() }
    }

    pub fn conj(&self) -> Jet {
        Jet { c: self.c.iter().map(|z| z.conj()).collect() }
    }

    pub fn mul(&self, sp: &JetSpace, o: &Jet) -> Jet {
        let n = self.c.len().min(o.c.len());
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (i, a) in self.c.iter().enumerate().take(n) {
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            for &(j, oi) in &sp.by_left[i] {
                if oi as usize >= n {
                    break;
                }
                out[oi as usize] += a * o.c[j as usize];
            }
        }
        Jet { c: out }
    }

    /// `f(self)` given the derivatives `f^(n)(x0)` for `n = 0..=order`.
    pub fn compose(&self, sp: &JetSpace, derivs: &[C64]) -> Jet {
        let k = self.order(sp);
        let mut delta = self.clone();
        delta.c[0] = C64::new(0.0, 0.0);
        let mut out = Jet::constant(sp, k, derivs[0]);
        let mut pow = Jet::constant(sp, k, C64::new(1.0, 0.0));
        let mut fact = 1.0;
        for n in 1..=k {
            pow = pow.mul(sp, &delta);
            fact *= n as f64;
            out = out.add(&pow.scale(derivs[n] / fact));
        }
        out
    }

    pub fn exp(&self, sp: &JetSpace) -> Jet {
        let e = self.value().exp();
        self.compose(sp, &vec![e; self.order(sp) + 1])
    }

    pub fn cos(&self, sp: &JetSpace) -> Jet {
        let x = self.value();
        let cyc = [x.cos(), -x.sin(), -x.cos(), x.sin()];
        let d: Vec<C64> = (0..=self.order(sp)).map(|n| cyc[n % 4]).collect();
        self.compose(sp, &d)
    }

    pub fn sin(&self, sp: &JetSpace) -> Jet {
        let x = self.value();
        let cyc = [x.sin(), x.cos(), -x.sin(), -x.cos()];
        let d: Vec<C64> = (0..=self.order(sp)).map(|n| cyc[n % 4]).collect();
        self.compose(sp, &d)
    }

    pub fn sqrt(&self, sp: &JetSpace) -> Jet {
        let x = self.value();
        let mut d = Vec::new();
        let mut coef = 1.0;
        for n in 0..=self.order(sp) {
            d.push(x.powf(0.5 - n as f64) * coef);
            coef *= 0.5 - n as f64;
        }
        self.compose(sp, &d)
    }

    pub fn recip(&self, sp: &JetSpace) -> Jet {
        let x = self.value();
        let mut d = Vec::new();
        let mut coef = 1.0;
        for n in 0..=self.order(sp) {
            d.push(x.powi(-(n as i32) - 1) * coef);
            coef *= -(n as f64 + 1.0);
        }
        self.compose(sp, &d)
    }

    /// Nonzero coefficients as (monomial index, value).
    pub fn nonzeros(&self) -> Vec<(usize, C64)> {
        self.c
            .iter()
            .enumerate()
            .filter(|(_, z)| z.re != 0.0 || z.im != 0.0)
            .map(|(k, z)| (k, *z))
            .collect()
    }
}

/// Jet with matrix coefficients, all of the same shape.
#[derive(Debug, Clone)]
pub struct MatJet {
    pub c: Vec<CMat>,
}

impl MatJet {
    pub fn zeros(sp: &JetSpace, k: usize, r: usize, cols: usize) -> Self {
        MatJet { c: vec![zeros(r, cols); sp.len(k)] }
    }

    pub fn constant(sp: &JetSpace, k: usize, m: CMat) -> Self {
        let mut j = Self::zeros(sp, k, m.nrows(), m.ncols());
        j.c[0] = m;
        j
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.c[0].nrows(), self.c[0].ncols())
    }

    pub fn value(&self) -> &CMat {
        &self.c[0]
    }

    pub fn order(&self, sp: &JetSpace) -> usize {
        sp.order_of(self.c.len())
    }

    pub fn truncate(&self, sp: &JetSpace, k: usize) -> Self {
        MatJet { c: self.c[..sp.len(k).min(self.c.len())].to_vec() }
    }

    pub fn adjoint(&self) -> Self {
        MatJet { c: self.c.iter().map(|m| m.adjoint()).collect() }
    }

    pub fn add(&self, o: &MatJet) -> Self {
        let n = self.c.len().min(o.c.len());
        MatJet { c: (0..n).map(|k| &self.c[k] + &o.c[k]).collect() }
    }

    pub fn sub(&self, o: &MatJet) -> Self {
        let n = self.c.len().min(o.c.len());
        MatJet { c: (0..n).map(|k| &self.c[k] - &o.c[k]).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        MatJet { c: self.c.iter().map(|m| m * s).collect() }
    }

    pub fn add_assign_scaled(&mut self, o: &MatJet, s: C64) {
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            a.zip_apply(b, |x, y| *x += y * s);
        }
    }

    /// Left-multiply every coefficient by a constant matrix.
    pub fn lmul_const(&self, m: &CMat) -> Self {
        MatJet { c: self.c.iter().map(|x| m * x).collect() }
    }

    /// Right-multiply every coefficient by a constant matrix.
    pub fn rmul_const(&self, m: &CMat) -> Self {
        MatJet { c: self.c.iter().map(|x| x * m).collect() }
    }

    /// Apply a linear map coefficient-wise.
    pub fn map(&self, f: impl Fn(&CMat) -> CMat) -> Self {
        MatJet { c: self.c.iter().map(f).collect() }
    }

    pub fn mul(&self, sp: &JetSpace, o: &MatJet) -> Self {
        let n = self.c.len().min(o.c.len());
        let (r, _) = self.shape();
        let (_, cols) = o.shape();
        let mut out = vec![zeros(r, cols); n];
        let live: Vec<bool> = o.c.iter().map(|m| m.iter().any(|z| z.re != 0.0 || z.im != 0.0)).collect();
        for (i, a) in self.c.iter().enumerate().take(n) {
            if a.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                continue;
            }
            for &(j, oi) in &sp.by_left[i] {
                if oi as usize >= n {
                    break;
                }
                if !live[j as usize] {
                    continue;
                }
                out[oi as usize].gemm(C64::new(1.0, 0.0), a, &o.c[j as usize], C64::new(1.0, 0.0));
            }
        }
        MatJet { c: out }
    }

    /// Scalar jet times matrix jet.
    pub fn scalar_mul(&self, sp: &JetSpace, s: &Jet) -> Self {
        let n = self.c.len().min(s.c.len());
        let (r, cols) = self.shape();
        let mut out = vec![zeros(r, cols); n];
        for (i, a) in s.nonzeros() {
            if i >= n {
                break;
            }
            for &(j, oi) in &sp.by_left[i] {
                if oi as usize >= n {
                    break;
                }
                out[oi as usize].zip_apply(&self.c[j as usize], |x, y| *x += y * a);
            }
        }
        MatJet { c: out }
    }

    pub fn commutator(&self, sp: &JetSpace, o: &MatJet) -> Self {
        self.mul(sp, o).sub(&o.mul(sp, self))
    }

    /// Partial derivative with respect to variable `v`; the order drops by one.
    pub fn derivative(&self, sp: &JetSpace, v: usize) -> Self {
        let k = self.order(sp);
        assert!(k >= 1, "cannot differentiate an order-zero jet");
        let n = sp.len(k - 1);
        let c = (0..n)
            .map(|m| {
                let t = sp.shift[v][m].expect("shift inside order") as usize;
                let e = sp.monos[m][v] as f64 + 1.0;
                &self.c[t] * C64::new(e, 0.0)
            })
            .collect();
        MatJet { c }
    }

    /// Inverse of a square jet with invertible constant term.
    pub fn inverse(&self, sp: &JetSpace) -> Option<Self> {
        let y0 = self.c[0].clone().try_inverse()?;
        let n = self.c.len();
        let (r, _) = self.shape();
        let mut y: Vec<CMat> = vec![zeros(r, r); n];
        y[0] = y0.clone();
        for o in 1..n {
            let mut acc = zeros(r, r);
            for &(i, j) in &sp.by_out[o] {
                if i == 0 {
                    continue;
                }
                acc += &self.c[i as usize] * &y[j as usize];
            }
            y[o] = -(&y0 * acc);
        }
        Some(MatJet { c: y })
    }

    /// Principal square root of a Hermitian positive-definite jet.
    pub fn sqrt_hpd(&self, sp: &JetSpace) -> Option<Self> {
        let n = self.c.len();
        let (r, _) = self.shape();
        let (vals, w) = eigh(&self.c[0]);
        if vals.iter().any(|&v| v <= 0.0) {
            return None;
        }
        let sig: Vec<f64> = vals.iter().map(|v| v.sqrt()).collect();
        let mut s: Vec<CMat> = vec![zeros(r, r); n];
        s[0] = &w * CMat::from_diagonal(&nalgebra::DVector::from_iterator(r, sig.iter().map(|&x| C64::new(x, 0.0)))) * w.adjoint();
        for o in 1..n {
            let mut rhs = self.c[o].clone();
            for &(i, j) in &sp.by_out[o] {
                if i == 0 || j == 0 {
                    continue;
                }
                rhs -= &s[i as usize] * &s[j as usize];
            }
            let mut t = w.adjoint() * rhs * &w;
            for a in 0..r {
                for b in 0..r {
                    t[(a, b)] /= sig[a] + sig[b];
                }
            }
            s[o] = &w * t * w.adjoint();
        }
        Some(MatJet { c: s })
    }

    /// Max-abs over all coefficients.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(crate::linalg::max_abs).fold(0.0, f64::max)
    }
}

/// Evaluate a jet at displacement `delta` from its expansion point.
pub fn eval_scalar(sp: &JetSpace, j: &Jet, delta: &[f64]) -> C64 {
    j.c.iter()
        .enumerate()
        .map(|(k, z)| {
            let m = sp.monomial(k);
            z * m.iter().zip(delta).map(|(&e, &d)| d.powi(e as i32)).product::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs};

    #[test]
    fn monomial_counts_match_binomials() {
        let sp = JetSpace::new(3, 4);
        assert_eq!(sp.len(0), 1);
        assert_eq!(sp.len(1), 4);
        assert_eq!(sp.len(2), 10);
        assert_eq!(sp.len(4), 35);
        let sp = JetSpace::new(8, 5);
        assert_eq!(sp.len(5), 1287);
    }

    #[test]
    fn product_of_variables() {
        let sp = JetSpace::new(2, 3);
        let x = Jet::variable(&sp, 3, 0, 1.5);
        let y = Jet::variable(&sp, 3, 1, -0.5);
        let p = x.mul(&sp, &y);
        for d in [[0.1, 0.2], [-0.3, 0.05]] {
            let v = eval_scalar(&sp, &p, &d);
            assert!((v.re - (1.5 + d[0]) * (-0.5 + d[1])).abs() < 1e-14);
        }
    }

    #[test]
    fn transcendental_functions_match_series() {
        let sp = JetSpace::new(1, 8);
        let x = Jet::variable(&sp, 8, 0, 0.7);
        let d = [0.01];
        let e = eval_scalar(&sp, &x.exp(&sp), &d).re;
        assert!((e - 0.71f64.exp()).abs() < 1e-14);
        let s = eval_scalar(&sp, &x.sin(&sp), &d).re;
        assert!((s - 0.71f64.sin()).abs() < 1e-14);
        let q = eval_scalar(&sp, &x.sqrt(&sp), &d).re;
        assert!((q - 0.71f64.sqrt()).abs() < 1e-14);
        let r = eval_scalar(&sp, &x.recip(&sp), &d).re;
        assert!((r - 1.0 / 0.71).abs() < 1e-13);
    }

    #[test]
    fn matrix_inverse_and_sqrt() {
        let sp = JetSpace::new(2, 3);
        let x = Jet::variable(&sp, 3, 0, 0.0);
        let y = Jet::variable(&sp, 3, 1, 0.0);
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, 0.1), c(0.3, -0.1), c(1.0, 0.0)]);
        let b = CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.2), c(0.0, -0.2), c(0.1, 0.0)]);
        let m = MatJet::constant(&sp, 3, a.clone())
            .add(&MatJet::constant(&sp, 3, b.clone()).scalar_mul(&sp, &x))
            .add(&MatJet::constant(&sp, 3, b.adjoint() * &b).scalar_mul(&sp, &y));
        let inv = m.inverse(&sp).unwrap();
        let id = m.mul(&sp, &inv);
        assert!(max_abs(&(&id.c[0] - crate::linalg::eye(2))) < 1e-14);
        assert!(id.c[1..].iter().all(|z| max_abs(z) < 1e-13));
        let s = m.sqrt_hpd(&sp).unwrap();
        let sq = s.mul(&sp, &s);
        assert!(sq.sub(&m).max_abs() < 1e-13);
    }

    #[test]
    fn derivative_lowers_order() {
        let sp = JetSpace::new(2, 3);
        let x = Jet::variable(&sp, 3, 0, 0.2);
        let f = MatJet::constant(&sp, 3, crate::linalg::eye(1)).scalar_mul(&sp, &x.mul(&sp, &x).mul(&sp, &x));
        let d = f.derivative(&sp, 0);
        assert_eq!(d.c.len(), sp.len(2));
        assert!((d.c[0][(0, 0)].re - 3.0 * 0.04).abs() < 1e-15);
    }
}

//! Normal-ordered bosonic polynomials of degree ≤ 2 and the Lie algebra
//! they span under commutation.
//!
//! Every mixer and Gaussian factor lives in this algebra, so `V†∂V` and
//! the adjoint action of each factor are finite matrices over the monomial
//! basis. Matrix elements between number states are exact.

use std::collections::{BTreeMap, HashMap};

use crate::expr::Ladder;
use crate::jet::{Jet, JetSpace, MatJet};
use crate::linalg::{zeros, CMat, C64};

/// `∏_k (a_k†)^{cre_k} a_k^{ann_k}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mono {
    pub cre: Vec<u8>,
    pub ann: Vec<u8>,
}

impl Mono {
    pub fn identity(m: usize) -> Self {
        Mono { cre: vec![0; m], ann: vec![0; m] }
    }

    pub fn degree(&self) -> usize {
        self.cre.iter().chain(&self.ann).map(|&e| e as usize).sum()
    }

    /// Ladder word, creators to the left.
    pub fn word(&self) -> Vec<Ladder> {
        let mut w = Vec::new();
        for (k, &e) in self.cre.iter().enumerate() {
            w.extend(std::iter::repeat_n(Ladder::Create(k), e as usize));
        }
        for (k, &e) in self.ann.iter().enumerate() {
            w.extend(std::iter::repeat_n(Ladder::Annihilate(k), e as usize));
        }
        w
    }

    /// Hermitian conjugate.
    pub fn dagger(&self) -> Mono {
        Mono { cre: self.ann.clone(), ann: self.cre.clone() }
    }

    pub fn conserves_number(&self) -> bool {
        self.cre.iter().map(|&e| e as i32).sum::<i32>() == self.ann.iter().map(|&e| e as i32).sum::<i32>()
    }
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn fact(n: u32) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Normal-ordered expansion of `a · b`.
pub fn product(a: &Mono, b: &Mono) -> Vec<(Mono, f64)> {
    let m = a.cre.len();
    // per mode: a^q (a†)^r = Σ_j C(q,j) C(r,j) j! (a†)^{r−j} a^{q−j}
    let mut acc: Vec<(Mono, f64)> = vec![(Mono::identity(m), 1.0)];
    for k in 0..m {
        let q = a.ann[k] as u32;
        let r = b.cre[k] as u32;
        let mut next = Vec::new();
        for (mono, c) in &acc {
            for j in 0..=q.min(r) {
                let w = binom(q, j) * binom(r, j) * fact(j);
                let mut t = mono.clone();
                t.cre[k] = a.cre[k] + (r - j) as u8;
                t.ann[k] = (q - j) as u8 + b.ann[k];
                next.push((t, c * w));
            }
        }
        acc = next;
    }
    acc
}

/// `[a, b]` as a sparse polynomial.
pub fn commutator(a: &Mono, b: &Mono) -> BTreeMap<Mono, f64> {
    let mut out: BTreeMap<Mono, f64> = BTreeMap::new();
    for (t, c) in product(a, b) {
        *out.entry(t).or_default() += c;
    }
    for (t, c) in product(b, a) {
        *out.entry(t).or_default() -= c;
    }
    out.retain(|_, v| *v != 0.0);
    out
}

/// Monomials of degree ≤ 2 in `m` modes with their structure constants.
#[derive(Debug, Clone)]
pub struct QuadraticAlgebra {
    pub modes: usize,
    pub basis: Vec<Mono>,
    pub index: HashMap<Mono, usize>,
    // bracket[i][j] = [b_i, b_j] as (k, coefficient)
    bracket: Vec<Vec<Vec<(usize, f64)>>>,
}

impl QuadraticAlgebra {
    pub fn new(modes: usize) -> Self {
        let mut basis = Vec::new();
        let total = 2 * modes;
        // exponent vectors over (cre_1..cre_m, ann_1..ann_m) with sum ≤ 2
        let mut rec = |v: Vec<u8>| {
            basis.push(Mono { cre: v[..modes].to_vec(), ann: v[modes..].to_vec() });
        };
        rec(vec![0; total]);
        for i in 0..total {
            let mut v = vec![0; total];
            v[i] = 1;
            rec(v);
        }
        for i in 0..total {
            for j in i..total {
                let mut v = vec![0; total];
                v[i] += 1;
                v[j] += 1;
                rec(v);
            }
        }
        let index: HashMap<Mono, usize> = basis.iter().enumerate().map(|(k, m)| (m.clone(), k)).collect();
        let n = basis.len();
        let bracket = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        commutator(&basis[i], &basis[j])
                            .into_iter()
                            .map(|(t, c)| (*index.get(&t).expect("algebra closed under brackets"), c))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        QuadraticAlgebra { modes, basis, index, bracket }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn position(&self, m: &Mono) -> usize {
        self.index[m]
    }

    /// Matrix of `ad_{b_i}` (column j holds the coordinates of `[b_i, b_j]`).
    pub fn ad_basis(&self, i: usize) -> CMat {
        let n = self.dim();
        let mut m = zeros(n, n);
        for j in 0..n {
            for &(k, c) in &self.bracket[i][j] {
                m[(k, j)] += C64::new(c, 0.0);
            }
        }
        m
    }

    /// Monomial `a_i† a_j`.
    pub fn hop(&self, i: usize, j: usize) -> usize {
        let mut m = Mono::identity(self.modes);
        m.cre[i] += 1;
        m.ann[j] += 1;
        self.position(&m)
    }

    /// Jet matrix of `Y ↦ W† Y W` for a passive map with
    /// `W† a_k† W = Σ_i w_ik a_i†`.
    pub fn linear_substitution(&self, sp: &JetSpace, k: usize, w: &[Vec<Jet>]) -> MatJet {
        let n = self.dim();
        let m = self.modes;
        let mut out = MatJet::zeros(sp, k, n, n);
        let wc: Vec<Vec<Jet>> = w.iter().map(|row| row.iter().map(|x| x.conj()).collect()).collect();
        for (col, mono) in self.basis.iter().enumerate() {
            // letters: (mode, creator?)
            let mut letters = Vec::new();
            for (q, &e) in mono.cre.iter().enumerate() {
                for _ in 0..e {
                    letters.push((q, true));
                }
            }
            for (q, &e) in mono.ann.iter().enumerate() {
                for _ in 0..e {
                    letters.push((q, false));
                }
            }
            let mut terms: Vec<(Mono, Jet)> = vec![(Mono::identity(m), Jet::constant(sp, k, C64::new(1.0, 0.0)))];
            for &(q, cre) in &letters {
                let mut next = Vec::new();
                for (t, c) in &terms {
                    for i in 0..m {
                        let coef = if cre { &w[i][q] } else { &wc[i][q] };
                        if coef.c.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                            continue;
                        }
                        let mut t2 = t.clone();
                        if cre {
                            t2.cre[i] += 1;
                        } else {
                            t2.ann[i] += 1;
                        }
                        next.push((t2, c.mul(sp, coef)));
                    }
                }
                terms = next;
            }
            for (t, c) in terms {
                let row = self.position(&t);
                for (idx, z) in c.c.iter().enumerate() {
                    out.c[idx][(row, col)] += z;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_commutator() {
        let a = Mono { cre: vec![0], ann: vec![1] };
        let ad = a.dagger();
        let c = commutator(&a, &ad);
        assert_eq!(c.len(), 1);
        assert_eq!(c[&Mono::identity(1)], 1.0);
    }

    #[test]
    fn dimension_counts() {
        assert_eq!(QuadraticAlgebra::new(1).dim(), 6);
        assert_eq!(QuadraticAlgebra::new(2).dim(), 15);
        assert_eq!(QuadraticAlgebra::new(4).dim(), 45);
    }

    #[test]
    fn jacobi_identity_holds() {
        let alg = QuadraticAlgebra::new(2);
        let n = alg.dim();
        for i in 0..n {
            for j in 0..n {
                let lhs = alg.ad_basis(i) * alg.ad_basis(j) - alg.ad_basis(j) * alg.ad_basis(i);
                let mut rhs = zeros(n, n);
                for (t, c) in commutator(&alg.basis[i], &alg.basis[j]) {
                    rhs += alg.ad_basis(alg.position(&t)) * C64::new(c, 0.0);
                }
                assert!(crate::linalg::max_abs(&(lhs - rhs)) < 1e-12);
            }
        }
    }
}

//! Non-Abelian connection, curvature, covariant derivatives and the rank of
//! the Lie algebra they span.
//!
//! Two independent routes are provided. The finite-difference route
//! differentiates transported frames numerically. The jet route carries
//! truncated Taylor series of the frame (or of `V†∂V` in the quadratic
//! ladder algebra) and differentiates exactly; the rank scans use it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{Mono, QuadraticAlgebra};
use crate::error::{Error, Result};
use crate::fock::{enumerate_truncated, operator_jet, operator_matrix, word_matrix, FockBasis, ModeSystem};
use crate::jet::{Jet, JetSpace, MatJet};
use crate::linalg::{anti_hermitian_part, c, commutator, eye, max_abs, random_unitary, real_singular_values, zeros, CMat};
use crate::models::{mixer_entries, ring_matmul, unitary_at, Compiled, Factor, FactorKind, JetRing, ModelSpec, ParameterPoint, Ring};
use crate::spectral::{basis_for, default_cluster_tol, eigen_blocks, LocalFrameField};

/// Anti-Hermiticity tolerance of finite-difference components.
pub const TAU_AH: f64 = 1e-7;
/// Default first-derivative step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default step for derivatives of connection and curvature fields.
pub const DEFAULT_OUTER_STEP: f64 = 1e-2;
/// Default relative rank tolerance.
pub const DEFAULT_RANK_TOL: f64 = 1e-6;
/// Singular values below this are never counted.
pub const RANK_FLOOR: f64 = 1e-9;
/// Seed of the random sample points.
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

/// Connection components `A_μ = Ψ†∂_μΨ` at one point.
#[derive(Debug, Clone, Serialize)]
pub struct ConnectionField {
    pub directions: Vec<String>,
    #[serde(skip)]
    pub components: Vec<CMat>,
    pub at: ParameterPoint,
    /// Largest anti-Hermiticity defect before symmetrization.
    pub defect: f64,
}

impl ConnectionField {
    pub fn component(&self, name: &str) -> Option<&CMat> {
        self.directions.iter().position(|d| d == name).map(|k| &self.components[k])
    }
}

/// Curvature and covariant derivatives at one point.
///
/// Level 0 holds `F_{μν}` for `μ < ν` in [`pairs`](Self::pairs) order.
/// Level `j` holds `∇_σ T` for every level `j − 1` tensor `T` and every
/// direction `σ`, at index `t·n + σ`.
#[derive(Debug, Clone)]
pub struct CurvatureSet {
    pub directions: Vec<String>,
    pub pairs: Vec<(usize, usize)>,
    pub levels: Vec<Vec<CMat>>,
    pub defect: f64,
    pub warnings: Vec<String>,
}

impl CurvatureSet {
    pub fn components(&self) -> &[CMat] {
        &self.levels[0]
    }

    /// `F_{μν}` with sign from antisymmetry.
    pub fn curvature(&self, mu: &str, nu: &str) -> Option<CMat> {
        let a = self.directions.iter().position(|d| d == mu)?;
        let b = self.directions.iter().position(|d| d == nu)?;
        if a == b {
            let d = self.levels[0].first().map_or(0, |m| m.nrows());
            return Some(zeros(d, d));
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let k = self.pairs.iter().position(|&p| p == (lo, hi))?;
        Some(&self.levels[0][k] * c(sign, 0.0))
    }

    /// `∇_{σ_j}⋯∇_{σ_1} F_{μν}`; `sigmas` lists the outermost direction first.
    pub fn derivative(&self, sigmas: &[&str], mu: &str, nu: &str) -> Option<CMat> {
        let n = self.directions.len();
        let a = self.directions.iter().position(|d| d == mu)?;
        let b = self.directions.iter().position(|d| d == nu)?;
        if a == b {
            let d = self.levels[0].first().map_or(0, |m| m.nrows());
            return Some(zeros(d, d));
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut idx = self.pairs.iter().position(|&p| p == (lo, hi))?;
        for s in sigmas.iter().rev() {
            idx = idx * n + self.directions.iter().position(|d| d == s)?;
        }
        self.levels.get(sigmas.len()).map(|l| &l[idx] * c(sign, 0.0))
    }

    /// All matrices up to level `k`.
    pub fn matrices(&self, k: usize) -> Vec<&CMat> {
        self.levels.iter().take(k + 1).flatten().collect()
    }
}

fn pairs_of(n: usize) -> Vec<(usize, usize)> {
    let mut p = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            p.push((a, b));
        }
    }
    p
}

// ------------------------------------------------------------ rank

/// Rank of a real linear span.
#[derive(Debug, Clone, Serialize)]
pub struct LieSpanResult {
    pub matrices: usize,
    pub rank: usize,
    /// Rank of curvature alone.
    pub dim_f: usize,
    /// Rank after adding derivatives of order 0, 1, …
    pub rank_by_order: Vec<usize>,
    pub singular_values: Vec<f64>,
    /// First order at which the rank stopped growing, if it did.
    pub stagnation_order: Option<usize>,
    /// Upper bound `Σ d²` of the direct sum.
    pub max_dimension: usize,
    pub sample_points: Vec<ParameterPoint>,
    pub skipped: Vec<SkippedPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedPoint {
    pub point: ParameterPoint,
    pub reason: String,
}

fn flatten(blocks: &[&CMat]) -> Vec<f64> {
    let mut v = Vec::new();
    for m in blocks {
        for z in m.iter() {
            v.push(z.re);
            v.push(z.im);
        }
    }
    v
}

/// Number of singular values above `max(tol·σ_max, RANK_FLOOR)`.
pub fn count_rank(sv: &[f64], tol: f64) -> usize {
    let top = sv.first().copied().unwrap_or(0.0);
    let cut = (tol * top).max(RANK_FLOOR);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Dimension of the real span of a set of equally shaped matrices.
pub fn lie_algebra_dimension(matrices: &[CMat], rank_tol: f64) -> Result<LieSpanResult> {
    if let Some(first) = matrices.first() {
        if matrices.iter().any(|m| m.shape() != first.shape()) {
            return Err(Error::Config("matrices differ in shape".into()));
        }
    }
    let rows: Vec<Vec<f64>> = matrices.iter().map(|m| flatten(&[m])).collect();
    let sv = real_singular_values(&rows);
    let rank = count_rank(&sv, rank_tol);
    let d = matrices.first().map_or(0, |m| m.nrows());
    Ok(LieSpanResult {
        matrices: matrices.len(),
        rank,
        dim_f: rank,
        rank_by_order: vec![rank],
        singular_values: sv,
        stagnation_order: None,
        max_dimension: d * d,
        sample_points: vec![],
        skipped: vec![],
    })
}

/// Rank after each derivative order for a direct sum of towers sharing one
/// layout. Returns the ranks and the singular values of the full set.
pub fn direct_sum_ranks(towers: &[&[Vec<CMat>]], rank_tol: f64) -> (Vec<usize>, Vec<f64>) {
    let Some(first) = towers.first() else {
        return (vec![], vec![]);
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ranks = Vec::new();
    let mut sv = Vec::new();
    for level in 0..first.len() {
        for idx in 0..first[level].len() {
            let parts: Vec<&CMat> = towers.iter().map(|t| &t[level][idx]).collect();
            rows.push(flatten(&parts));
        }
        sv = real_singular_values(&rows);
        ranks.push(count_rank(&sv, rank_tol));
    }
    (ranks, sv)
}

pub fn stagnation(ranks: &[usize], max_dim: usize) -> Option<usize> {
    if ranks.first() == Some(&max_dim) {
        return Some(0);
    }
    (1..ranks.len()).find(|&k| ranks[k] == ranks[k - 1] || ranks[k] == max_dim)
}

// ------------------------------------------------------------ jets

/// One eigenspace block, identified by its position in the sorted spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRef {
    /// Particle number of the layer, or `None` for the truncated basis.
    pub layer: Option<u32>,
    pub spectral_index: usize,
    pub dimension: usize,
}

/// Settings for jet towers.
#[derive(Debug, Clone)]
pub struct TowerOptions {
    pub k_max: usize,
    pub cluster_tol: Option<f64>,
    /// Fixed unitary applied to the base frame of every block.
    pub rotation: Option<u64>,
}

impl Default for TowerOptions {
    fn default() -> Self {
        TowerOptions { k_max: 3, cluster_tol: None, rotation: None }
    }
}

/// Taylor jets of the connection components at a point.
pub struct ConnectionJets {
    pub sp: JetSpace,
    pub directions: Vec<String>,
    /// `A_μ` jets of order `sp.order() − 1`.
    pub a: Vec<MatJet>,
    /// Frame `Φ` at the expansion point (columns in the basis of the layer
    /// or truncation); for isospectral models this is the static frame.
    pub frame: CMat,
}

fn param_jet(sp: &JetSpace, k: usize, vars: &[String], point: &ParameterPoint, name: &str) -> Result<Jet> {
    let x = point.get(name).ok_or_else(|| Error::UnboundParameter(name.to_string()))?;
    Ok(match vars.iter().position(|v| v == name) {
        Some(v) => Jet::variable(sp, k, v, x),
        None => Jet::constant(sp, k, c(x, 0.0)),
    })
}

/// Frame jet by order-by-order solution of the invariant-subspace Riccati
/// equation in the base eigenbasis `q` (block first, `d` columns).
/// The result is the Löwdin-orthonormalized projection of the base frame.
fn riccati_frame(sp: &JetSpace, k: usize, h: &MatJet, q: &CMat, d: usize, gap_tol: f64) -> Result<MatJet> {
    let n = q.nrows();
    let r = n - d;
    let ht = h.map(|m| q.adjoint() * m * q);
    let len = sp.len(k);
    let blk = |m: &CMat, r0: usize, c0: usize, nr: usize, nc: usize| m.view((r0, c0), (nr, nc)).into_owned();
    let h11: Vec<CMat> = ht.c.iter().map(|m| blk(m, 0, 0, d, d)).collect();
    let h12: Vec<CMat> = ht.c.iter().map(|m| blk(m, 0, d, d, r)).collect();
    let h21: Vec<CMat> = ht.c.iter().map(|m| blk(m, d, 0, r, d)).collect();
    let h22: Vec<CMat> = ht.c.iter().map(|m| blk(m, d, d, r, r)).collect();
    let live = |m: &CMat| m.iter().any(|z| z.re != 0.0 || z.im != 0.0);
    let live22: Vec<bool> = h22.iter().map(live).collect();
    let live12: Vec<bool> = h12.iter().map(live).collect();
    let mu: Vec<f64> = (0..d).map(|j| h11[0][(j, j)].re).collect();
    let lam: Vec<f64> = (0..r).map(|i| h22[0][(i, i)].re).collect();
    for &l in &lam {
        for &m in &mu {
            if (l - m).abs() <= gap_tol {
                return Err(Error::FrameDegeneracy(format!("spectral gap {:.3e} too small", (l - m).abs())));
            }
        }
    }
    let mut z: Vec<CMat> = vec![zeros(r, d); len];
    let mut w: Vec<CMat> = vec![zeros(d, d); len];
    let mut zlive = vec![false; len];
    w[0] = h11[0].clone();
    for a in 1..len {
        let mut rhs = -&h21[a];
        for &(b, g) in sp.pairs(a) {
            let (b, g) = (b as usize, g as usize);
            if b == 0 || g == 0 {
                continue;
            }
            if live22[b] && zlive[g] {
                rhs -= &h22[b] * &z[g];
            }
            if zlive[b] {
                rhs += &z[b] * &w[g];
            }
        }
        for i in 0..r {
            for j in 0..d {
                rhs[(i, j)] /= lam[i] - mu[j];
            }
        }
        zlive[a] = live(&rhs);
        z[a] = rhs;
        let mut wa = h11[a].clone();
        for &(b, g) in sp.pairs(a) {
            let (b, g) = (b as usize, g as usize);
            if g != 0 && live12[b] && zlive[g] {
                wa += &h12[b] * &z[g];
            }
        }
        w[a] = wa;
    }
    let zj = MatJet { c: z };
    let s = MatJet::constant(sp, k, eye(d)).add(&zj.adjoint().mul(sp, &zj));
    let s_inv_half = s
        .sqrt_hpd(sp)
        .and_then(|x| x.inverse(sp))
        .ok_or_else(|| Error::Numerical("frame overlap not positive definite".into()))?;
    let q1 = q.columns(0, d).into_owned();
    let q2 = q.columns(d, r).into_owned();
    let y = zj.lmul_const(&q2).add(&MatJet::constant(sp, k, q1));
    Ok(y.mul(sp, &s_inv_half))
}

/// Coefficients of `V†∂_μV` over the algebra basis, as column jets.
fn word_connection(alg: &QuadraticAlgebra, word: &[Factor], point: &ParameterPoint, sp: &JetSpace, k: usize, vars: &[String]) -> Result<Vec<MatJet>> {
    let dim = alg.dim();
    let m = alg.modes;
    let mut out: Vec<MatJet> = (0..vars.len()).map(|_| MatJet::zeros(sp, k, dim, 1)).collect();
    let mut r = MatJet::constant(sp, k, eye(dim));
    let one = c(1.0, 0.0);
    let iu = c(0.0, 1.0);
    for f in word.iter().rev() {
        let x = param_jet(sp, k, vars, point, &f.params[0])?;
        let y = param_jet(sp, k, vars, point, &f.params[1])?;
        let (ad_f, mc): (MatJet, [MatJet; 2]) = match f.kind {
            FactorKind::Mixer => {
                let ring = JetRing { sp, k };
                let (cs, sn) = (x.cos(sp), x.sin(sp));
                let e = y.scale(iu).exp(sp);
                let ec = e.conj();
                let (ka, la) = (f.modes[0], f.modes[1]);
                let u = mixer_entries(&ring, m, ka, la, cs.clone(), sn.clone(), e.clone(), ec.clone());
                let ud: Vec<Vec<Jet>> = (0..m).map(|i| (0..m).map(|j| u[j][i].conj()).collect()).collect();
                let zero_m = || -> Vec<Vec<Jet>> { (0..m).map(|_| (0..m).map(|_| ring.zero()).collect()).collect() };
                let mut d_theta = zero_m();
                d_theta[ka][ka] = sn.mul(sp, &e).scale(-one);
                d_theta[la][ka] = cs.clone();
                d_theta[ka][la] = cs.scale(-one);
                d_theta[la][la] = sn.mul(sp, &ec).scale(-one);
                let mut d_phi = zero_m();
                d_phi[ka][ka] = cs.mul(sp, &e).scale(iu);
                d_phi[la][la] = cs.mul(sp, &ec).scale(-iu);
                let to_vec = |g: Vec<Vec<Jet>>| {
                    let mut v = MatJet::zeros(sp, k, dim, 1);
                    for i in 0..m {
                        for j in 0..m {
                            let row = alg.hop(i, j);
                            for (idx, zz) in g[i][j].nonzeros() {
                                v.c[idx][(row, 0)] += zz;
                            }
                        }
                    }
                    v
                };
                let mc0 = to_vec(ring_matmul(&ring, &ud, &d_theta));
                let mc1 = to_vec(ring_matmul(&ring, &ud, &d_phi));
                (alg.linear_substitution(sp, k, &ud), [mc0, mc1])
            }
            _ => {
                let word_g = f.generator_word().expect("gaussian factor");
                let mut g = Mono::identity(m);
                for l in &word_g {
                    match l {
                        crate::expr::Ladder::Create(q) => g.cre[*q] += 1,
                        crate::expr::Ladder::Annihilate(q) => g.ann[*q] += 1,
                        _ => unreachable!("bosonic generator"),
                    }
                }
                let gi = alg.position(&g);
                let gdi = alg.position(&g.dagger());
                let e = y.scale(iu).exp(sp);
                let p = x.mul(sp, &e);
                let dp = [e.clone(), p.scale(iu)];
                let ad_x = MatJet::constant(sp, k, alg.ad_basis(gi))
                    .scalar_mul(sp, &p)
                    .sub(&MatJet::constant(sp, k, alg.ad_basis(gdi)).scalar_mul(sp, &p.conj()));
                let neg = ad_x.scale(-one);
                // exp(−ad_X)
                let mut term = MatJet::constant(sp, k, eye(dim));
                let mut sum = term.clone();
                for nterm in 1..400 {
                    term = term.mul(sp, &neg).scale(c(1.0 / nterm as f64, 0.0));
                    sum = sum.add(&term);
                    if term.max_abs() < 1e-17 * sum.max_abs() {
                        break;
                    }
                }
                // Σ (−1)^n/(n+1)! ad_X^n ∂X
                let mut mcs = Vec::new();
                for dpj in &dp {
                    let mut v = MatJet::zeros(sp, k, dim, 1);
                    let mut dx = MatJet::zeros(sp, k, dim, 1);
                    for (idx, zz) in dpj.nonzeros() {
                        dx.c[idx][(gi, 0)] += zz;
                    }
                    for (idx, zz) in dpj.conj().nonzeros() {
                        dx.c[idx][(gdi, 0)] -= zz;
                    }
                    let mut t = dx;
                    v = v.add(&t);
                    for nterm in 1..400 {
                        t = neg.mul(sp, &t).scale(c(1.0 / (nterm + 1) as f64, 0.0));
                        v = v.add(&t);
                        if t.max_abs() < 1e-17 * v.max_abs() {
                            break;
                        }
                    }
                    mcs.push(v);
                }
                let mc1 = mcs.pop().expect("two parameters");
                let mc0 = mcs.pop().expect("two parameters");
                (sum, [mc0, mc1])
            }
        };
        for (slot, mcj) in f.params.iter().zip(mc.iter()) {
            if let Some(v) = vars.iter().position(|x| x == slot) {
                out[v] = out[v].add(&r.mul(sp, mcj));
            }
        }
        r = r.mul(sp, &ad_f);
    }
    Ok(out)
}

fn select_block(basis_h: &CMat, blk: &BlockRef, tol: f64) -> Result<(CMat, usize, f64)> {
    let blocks = eigen_blocks(basis_h, tol)?;
    let b = blocks
        .iter()
        .position(|b| b.spectral_index == blk.spectral_index && b.dimension == blk.dimension)
        .ok_or_else(|| Error::FrameDegeneracy(format!("no isolated block of dimension {} at spectral position {}", blk.dimension, blk.spectral_index)))?;
    let mut cols: Vec<CMat> = vec![blocks[b].frame.clone()];
    for (i, o) in blocks.iter().enumerate() {
        if i != b {
            cols.push(o.frame.clone());
        }
    }
    let n = basis_h.nrows();
    let mut q = zeros(n, n);
    let mut at = 0;
    for m in cols {
        q.columns_mut(at, m.ncols()).copy_from(&m);
        at += m.ncols();
    }
    Ok((q, blocks[b].dimension, blocks[b].eigenvalue))
}

fn rotation_for(seed: u64, blk: &BlockRef) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((blk.spectral_index as u64) << 20) ^ blk.layer.map_or(0xffff, |n| n as u64));
    random_unitary(blk.dimension, &mut rng)
}

/// Connection jets of one block at `point`, expanded in every model
/// parameter to order `order`.
///
/// Models without a word use the projector-transport gauge anchored at
/// `point`. Models with a word use `Ψ = V·Φ`, with `Φ` the transported
/// frame of `H̃` (constant when `H̃` carries no parameters).
pub fn connection_jets(spec: &ModelSpec, point: &ParameterPoint, blk: &BlockRef, order: usize, opts: &TowerOptions) -> Result<ConnectionJets> {
    spec.check_point(point)?;
    let c = spec.compiled();
    let vars = c.param_names();
    let k = order + 1;
    let sp = JetSpace::new(vars.len(), k);
    let basis = basis_for(spec, blk.layer)?;
    let tol = opts.cluster_tol.unwrap_or_else(|| default_cluster_tol(spec));
    let h0 = operator_matrix(&c.h, &basis, point)?;
    let (q, d, _) = select_block(&h0, blk, tol)?;
    let radius = crate::linalg::op_norm(&h0).max(1.0);
    let mut phi = if c.isospectral() {
        MatJet::constant(&sp, k, q.columns(0, d).into_owned())
    } else {
        let hj = operator_jet(&c.h, &basis, point, &sp, k, &vars)?;
        riccati_frame(&sp, k, &hj, &q, d, 10.0 * tol * radius)?
    };
    if let Some(seed) = opts.rotation {
        phi = phi.rmul_const(&rotation_for(seed, blk));
    }
    let phid = phi.adjoint();
    let mut a: Vec<MatJet> = if c.isospectral() {
        (0..vars.len()).map(|_| MatJet::zeros(&sp, order, d, d)).collect()
    } else {
        (0..vars.len()).map(|v| phid.truncate(&sp, order).mul(&sp, &phi.derivative(&sp, v))).collect()
    };
    if !c.word.is_empty() {
        check_word_exactness(&c, &basis, &phi.c[0])?;
        let alg = QuadraticAlgebra::new(c.system.boson_modes);
        let coeff = word_connection(&alg, &c.word, point, &sp, order, &vars)?;
        let phi_o = phi.truncate(&sp, order);
        let phid_o = phid.truncate(&sp, order);
        for (gi, mono) in alg.basis.iter().enumerate() {
            let used: Vec<usize> = (0..vars.len()).filter(|&v| coeff[v].c.iter().any(|m| m[(gi, 0)].norm() > 0.0)).collect();
            if used.is_empty() {
                continue;
            }
            let gmat = word_matrix(&mono.word(), &basis);
            let mg = phid_o.mul(&sp, &phi_o.map(|x| gmat.mul_dense(x)));
            for v in used {
                let s = Jet { c: coeff[v].c.iter().map(|m| m[(gi, 0)]).collect() };
                a[v] = a[v].add(&mg.scalar_mul(&sp, &s));
            }
        }
    }
    let frame = phi.c[0].clone();
    Ok(ConnectionJets { sp, directions: vars, a, frame })
}

// Matrix elements of degree-two monomials are exact only if no spanning
// state sits within two quanta of the cutoff.
fn check_word_exactness(c: &Compiled, basis: &FockBasis, frame: &CMat) -> Result<()> {
    if c.word.iter().all(|f| f.kind.conserves_number()) {
        return Ok(());
    }
    let Some(cut) = basis.system.cutoff else {
        return Ok(());
    };
    for (row, st) in basis.states.iter().enumerate() {
        if (0..frame.ncols()).any(|j| frame[(row, j)].norm() > 1e-12) && st.occupations.iter().any(|&o| o + 2 > cut) {
            return Err(Error::Truncation(format!("state {st} is within two quanta of the cutoff {cut}")));
        }
    }
    Ok(())
}

/// Curvature tower from connection jets: level 0 is `F`, level `j` is the
/// `j`-th covariant derivative.
pub fn tower_from_jets(cj: &ConnectionJets, k_max: usize) -> Vec<Vec<CMat>> {
    let sp = &cj.sp;
    let n = cj.directions.len();
    let a = &cj.a;
    let a_order = sp.order() - 1;
    assert!(a_order > k_max, "connection jets of order {a_order} cannot reach level {k_max}");
    if n < 2 {
        return vec![vec![]; k_max + 1];
    }
    let mut level: Vec<MatJet> = pairs_of(n)
        .into_iter()
        .map(|(mu, nu)| {
            let o = a_order - 1;
            a[nu].derivative(sp, mu).sub(&a[mu].derivative(sp, nu)).add(&a[mu].truncate(sp, o).commutator(sp, &a[nu].truncate(sp, o)))
        })
        .collect();
    let mut out = vec![level.iter().map(|j| j.c[0].clone()).collect::<Vec<_>>()];
    for step in 1..=k_max {
        let o = a_order - 1 - step;
        let a_t: Vec<MatJet> = a.iter().map(|x| x.truncate(sp, o)).collect();
        let mut next = Vec::with_capacity(level.len() * n);
        for t in &level {
            let tt = t.truncate(sp, o);
            for (s, asig) in a_t.iter().enumerate() {
                next.push(t.derivative(sp, s).add(&asig.commutator(sp, &tt)));
            }
        }
        out.push(next.iter().map(|j| j.c[0].clone()).collect());
        level = next;
    }
    out
}

/// Curvature and covariant derivatives up to order `k_max` from jets.
pub fn jet_curvature(cj: &ConnectionJets, k_max: usize) -> CurvatureSet {
    CurvatureSet {
        directions: cj.directions.clone(),
        pairs: pairs_of(cj.directions.len()),
        levels: tower_from_jets(cj, k_max),
        defect: 0.0,
        warnings: vec![],
    }
}

/// Curvature tower of one block at one point via jets.
pub fn block_tower(spec: &ModelSpec, point: &ParameterPoint, blk: &BlockRef, opts: &TowerOptions) -> Result<Vec<Vec<CMat>>> {
    let cj = connection_jets(spec, point, blk, opts.k_max + 1, opts)?;
    if cj.directions.len() < 2 {
        return Ok(vec![vec![]; opts.k_max + 1]);
    }
    Ok(tower_from_jets(&cj, opts.k_max))
}

/// The named base point (if any) followed by `count` random points.
pub fn sample_points(spec: &ModelSpec, seed: u64, count: usize) -> Vec<ParameterPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<ParameterPoint> = spec.base_point.iter().cloned().collect();
    for _ in 0..count {
        pts.push(spec.random_point(&mut rng));
    }
    pts
}

/// Maximum rank over sample points of the direct sum of the blocks'
/// curvature towers.
pub fn holonomy_dimension(spec: &ModelSpec, blocks: &[BlockRef], points: &[ParameterPoint], opts: &TowerOptions, rank_tol: f64) -> Result<LieSpanResult> {
    let max_dim: usize = blocks.iter().map(|b| b.dimension * b.dimension).sum();
    let mut best: Option<(Vec<usize>, Vec<f64>, usize)> = None;
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    'points: for p in points {
        let mut towers = Vec::new();
        for b in blocks {
            match block_tower(spec, p, b, opts) {
                Ok(t) => towers.push(t),
                Err(e @ Error::FrameDegeneracy(_)) => {
                    skipped.push(SkippedPoint { point: p.clone(), reason: e.to_string() });
                    continue 'points;
                }
                Err(e) => return Err(e),
            }
        }
        used.push(p.clone());
        let refs: Vec<&[Vec<CMat>]> = towers.iter().map(|t| t.as_slice()).collect();
        let (ranks, sv) = direct_sum_ranks(&refs, rank_tol);
        let count = towers.first().map_or(0, |t| t.iter().map(|l| l.len()).sum());
        best = Some(match best {
            None => (ranks, sv, count),
            Some((r0, s0, c0)) => {
                let merged: Vec<usize> = r0.iter().zip(&ranks).map(|(a, b)| *a.max(b)).collect();
                let sv_keep = if ranks.last() > r0.last() { sv } else { s0 };
                (merged, sv_keep, c0.max(count))
            }
        });
    }
    let Some((ranks, sv, count)) = best else {
        return Err(Error::FrameDegeneracy("every sample point was skipped".into()));
    };
    Ok(LieSpanResult {
        matrices: count,
        rank: ranks.last().copied().unwrap_or(0),
        dim_f: ranks.first().copied().unwrap_or(0),
        stagnation_order: stagnation(&ranks, max_dim),
        rank_by_order: ranks,
        singular_values: sv,
        max_dimension: max_dim,
        sample_points: used,
        skipped,
    })
}

// ------------------------------------------------------------ finite differences

fn shifted(p: &ParameterPoint, name: &str, dx: f64) -> ParameterPoint {
    let mut q = p.clone();
    q.set(name, p.get(name).unwrap_or(0.0) + dx);
    q
}

fn central(f: &dyn Fn(&ParameterPoint) -> Result<CMat>, p: &ParameterPoint, name: &str, h: f64) -> Result<CMat> {
    let d1 = (f(&shifted(p, name, h))? - f(&shifted(p, name, -h))?) / c(2.0 * h, 0.0);
    let h2 = h / 2.0;
    let d2 = (f(&shifted(p, name, h2))? - f(&shifted(p, name, -h2))?) / c(2.0 * h2, 0.0);
    Ok((d2 * c(4.0, 0.0) - d1) / c(3.0, 0.0))
}

fn five_point<T: Clone>(f: &dyn Fn(&ParameterPoint) -> Result<Vec<T>>, p: &ParameterPoint, name: &str, h: f64) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::new();
    for s in [-2.0, -1.0, 1.0, 2.0] {
        out.push(f(&shifted(p, name, s * h))?);
    }
    Ok(out)
}

fn five_point_combine(v: &[Vec<CMat>], h: f64) -> Vec<CMat> {
    (0..v[0].len())
        .map(|i| (&v[0][i] - &v[1][i] * c(8.0, 0.0) + &v[2][i] * c(8.0, 0.0) - &v[3][i]) / c(12.0 * h, 0.0))
        .collect()
}

fn ah_defect(m: &CMat) -> f64 {
    max_abs(&(m + m.adjoint())) / 2.0
}

/// Connection of a frame field at κ by central differences with one
/// Richardson level.
pub fn connection_at(field: &LocalFrameField, k: &ParameterPoint, h: f64) -> Result<ConnectionField> {
    let dirs = field.spec.param_names();
    let psi = field.evaluate(k)?;
    let frame = |p: &ParameterPoint| field.evaluate(p);
    let mut comps = Vec::new();
    let mut defect = 0.0f64;
    for d in &dirs {
        let raw = psi.adjoint() * central(&frame, k, d, h)?;
        defect = defect.max(ah_defect(&raw));
        comps.push(anti_hermitian_part(&raw));
    }
    if defect > 10.0 * TAU_AH {
        return Err(Error::StepSize(format!("connection anti-Hermiticity defect {defect:.3e} at step {h}")));
    }
    Ok(ConnectionField { directions: dirs, components: comps, at: k.clone(), defect })
}

/// `Φ₀† V†∂_μV Φ₀` with `V†∂V` from central differences of `V`.
///
/// For models that do not conserve particle number the cutoff is raised
/// by 4 until entries move by less than `1e−8`.
pub fn connection_isospectral(spec: &ModelSpec, layer: Option<u32>, static_frame: &CMat, k: &ParameterPoint, h: f64) -> Result<ConnectionField> {
    let c0 = spec.compiled();
    if !c0.isospectral() {
        return Err(Error::Config(format!("model `{}` is not isospectral", spec.name)));
    }
    let basis = basis_for(spec, layer)?;
    let eval = |basis: &FockBasis, frame: &CMat| -> Result<ConnectionField> {
        let v = unitary_at(spec, k, basis)?;
        let vd = v.adjoint();
        let dirs = spec.param_names();
        let f = |p: &ParameterPoint| unitary_at(spec, p, basis);
        let mut comps = Vec::new();
        let mut defect = 0.0f64;
        for d in &dirs {
            let raw = frame.adjoint() * &vd * central(&f, k, d, h)? * frame;
            defect = defect.max(ah_defect(&raw));
            comps.push(anti_hermitian_part(&raw));
        }
        Ok(ConnectionField { directions: dirs, components: comps, at: k.clone(), defect })
    };
    let Some(mut cut) = basis.system.cutoff.filter(|_| layer.is_none()) else {
        return eval(&basis, static_frame);
    };
    let mut current = eval(&basis, static_frame)?;
    for _ in 0..6 {
        cut += 4;
        let sys = ModeSystem { cutoff: Some(cut), ..basis.system };
        let big = enumerate_truncated(&sys)?;
        let frame = embed(static_frame, &basis, &big);
        let next = eval(&big, &frame)?;
        let change = current.components.iter().zip(&next.components).map(|(a, b)| max_abs(&(a - b))).fold(0.0, f64::max);
        current = next;
        if change < 1e-8 {
            if current.defect > 10.0 * TAU_AH {
                return Err(Error::StepSize(format!("connection anti-Hermiticity defect {:.3e}", current.defect)));
            }
            return Ok(current);
        }
    }
    Err(Error::Truncation(format!("connection did not converge up to cutoff {cut}")))
}

/// Re-express columns on a larger basis of the same mode system.
pub fn embed(frame: &CMat, from: &FockBasis, to: &FockBasis) -> CMat {
    let mut out = zeros(to.len(), frame.ncols());
    for (r, st) in from.states.iter().enumerate() {
        if let Some(t) = to.position(st) {
            for j in 0..frame.ncols() {
                out[(t, j)] = frame[(r, j)];
            }
        }
    }
    out
}

type Sampler<'a> = dyn Fn(&ParameterPoint) -> Result<ConnectionField> + 'a;

/// Curvature by five-point differences of a connection sampler.
pub fn curvature_at(conn: &Sampler, k: &ParameterPoint, h: f64) -> Result<CurvatureSet> {
    covariant_derivatives(conn, k, 0, h)
}

/// Curvature and covariant derivatives up to order `order` by nested
/// five-point differences.
pub fn covariant_derivatives(conn: &Sampler, k: &ParameterPoint, order: usize, h: f64) -> Result<CurvatureSet> {
    let a0 = conn(k)?;
    let dirs = a0.directions.clone();
    let pairs = pairs_of(dirs.len());
    let levels = fd_levels(conn, k, order, h, &dirs, &pairs)?;
    let mut defect = 0.0f64;
    let mut warnings = Vec::new();
    let levels: Vec<Vec<CMat>> = levels
        .into_iter()
        .enumerate()
        .map(|(lv, l)| {
            let dl = l.iter().map(ah_defect).fold(0.0, f64::max);
            if dl > DEFAULT_RANK_TOL * l.iter().map(max_abs).fold(1.0, f64::max) {
                warnings.push(format!("order {lv} finite-difference noise {dl:.2e} exceeds the rank tolerance"));
            }
            defect = defect.max(dl);
            l.iter().map(anti_hermitian_part).collect()
        })
        .collect();
    if defect > 10.0 * TAU_AH && order == 0 {
        return Err(Error::StepSize(format!("curvature anti-Hermiticity defect {defect:.3e} at step {h}")));
    }
    Ok(CurvatureSet { directions: dirs, pairs, levels, defect, warnings })
}

fn fd_levels(conn: &Sampler, k: &ParameterPoint, order: usize, h: f64, dirs: &[String], pairs: &[(usize, usize)]) -> Result<Vec<Vec<CMat>>> {
    let a = conn(k)?.components;
    if order == 0 {
        let comps = |p: &ParameterPoint| conn(p).map(|f| f.components);
        let mut da: Vec<Vec<CMat>> = Vec::new();
        for d in dirs {
            da.push(five_point_combine(&five_point(&comps, k, d, h)?, h));
        }
        return Ok(vec![pairs.iter().map(|&(m, n)| &da[m][n] - &da[n][m] + commutator(&a[m], &a[n])).collect()]);
    }
    let mut lower = fd_levels(conn, k, order - 1, h, dirs, pairs)?;
    let top = |p: &ParameterPoint| fd_levels(conn, p, order - 1, h, dirs, pairs).map(|mut l| l.pop().expect("level"));
    let mut dt: Vec<Vec<CMat>> = Vec::new();
    for d in dirs {
        dt.push(five_point_combine(&five_point(&top, k, d, h)?, h));
    }
    let t = lower.last().expect("level").clone();
    let mut next = Vec::with_capacity(t.len() * dirs.len());
    for (ti, tm) in t.iter().enumerate() {
        for s in 0..dirs.len() {
            next.push(&dt[s][ti] + commutator(&a[s], tm));
        }
    }
    lower.push(next);
    Ok(lower)
}

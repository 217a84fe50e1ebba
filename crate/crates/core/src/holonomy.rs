//! Holonomies along closed parameter loops, the Λ-scheme geometric phase,
//! Abelianness diagnostics and an adiabatic cross-check.
//!
//! Path ordering: `U = ∏_k exp(−Σ_μ A_μ(m_k) Δκ^μ)` with later segments
//! multiplied on the left. With `A = Ψ†∂Ψ` this is the parallel transport
//! map: a state starting as `Ψ(κ₀)·c` returns as `Ψ(κ₀)·U·c`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{connection_at, DEFAULT_STEP};
use crate::linalg::{c, commutator, expm, eye, lowdin, max_abs, op_norm, singular_values_desc, CMat, C64};
use crate::models::{hamiltonian_at, line_col, ParameterPoint};
use crate::spectral::{Gauge, LocalFrameField};

/// Closed piecewise-linear loop in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLoop {
    /// First and last waypoint are identical.
    pub waypoints: Vec<ParameterPoint>,
    /// Minimum number of segments per leg.
    pub segments_per_leg: usize,
}

impl ParameterLoop {
    pub fn new(waypoints: Vec<ParameterPoint>, segments_per_leg: usize) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Config("a loop needs at least two waypoints".into()));
        }
        if waypoints.first() != waypoints.last() {
            return Err(Error::Config("loop is not closed: first and last waypoints differ".into()));
        }
        let keys = |p: &ParameterPoint| p.values.keys().cloned().collect::<Vec<_>>();
        if waypoints.iter().any(|p| keys(p) != keys(&waypoints[0])) {
            return Err(Error::Config("waypoints name different parameters".into()));
        }
        if segments_per_leg == 0 {
            return Err(Error::Config("segments_per_leg must be positive".into()));
        }
        Ok(ParameterLoop { waypoints, segments_per_leg })
    }

    /// Axis-aligned rectangle `(x0,y0) → (x1,y0) → (x1,y1) → (x0,y1) → (x0,y0)`
    /// in the `(x, y)` parameters, other parameters taken from `base`.
    pub fn rectangle(base: &ParameterPoint, x: (&str, f64, f64), y: (&str, f64, f64), segments_per_leg: usize) -> Self {
        let at = |a: f64, b: f64| base.clone().with(x.0, a).with(y.0, b);
        let pts = vec![at(x.1, y.1), at(x.2, y.1), at(x.2, y.2), at(x.1, y.2), at(x.1, y.1)];
        ParameterLoop { waypoints: pts, segments_per_leg }
    }

    pub fn base(&self) -> &ParameterPoint {
        &self.waypoints[0]
    }

    pub fn legs(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn distinct_waypoints(&self) -> usize {
        let mut seen: Vec<&ParameterPoint> = Vec::new();
        for p in &self.waypoints {
            if !seen.contains(&p) {
                seen.push(p);
            }
        }
        seen.len()
    }

    pub fn is_constant(&self) -> bool {
        self.distinct_waypoints() == 1
    }

    pub fn reversed(&self) -> Self {
        ParameterLoop { waypoints: self.waypoints.iter().rev().cloned().collect(), segments_per_leg: self.segments_per_leg }
    }

    /// `other ∘ self`: traverse `self` first, then `other`.
    pub fn then(&self, other: &ParameterLoop) -> Result<Self> {
        if self.base() != other.base() {
            return Err(Error::Config("concatenated loops must share the base point".into()));
        }
        let mut w = self.waypoints.clone();
        w.extend(other.waypoints.iter().skip(1).cloned());
        ParameterLoop::new(w, self.segments_per_leg.max(other.segments_per_leg))
    }

    /// Parameters that change along the loop.
    pub fn moving(&self) -> Vec<String> {
        self.base()
            .values
            .keys()
            .filter(|k| self.waypoints.iter().any(|p| p.get(k) != self.base().get(k)))
            .cloned()
            .collect()
    }

    /// Discretization with `per_leg` segments on every leg; returns the
    /// `legs·per_leg + 1` nodes.
    pub fn nodes(&self, per_leg: usize) -> Vec<ParameterPoint> {
        let mut out = vec![self.waypoints[0].clone()];
        for w in self.waypoints.windows(2) {
            for s in 1..=per_leg {
                if s == per_leg {
                    out.push(w[1].clone());
                } else {
                    out.push(w[0].lerp(&w[1], s as f64 / per_leg as f64));
                }
            }
        }
        out
    }

    /// Euclidean length in parameter space.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| distance(&w[0], &w[1])).sum()
    }

    /// Point at arc-length fraction `s ∈ [0, 1]`.
    pub fn at_fraction(&self, s: f64) -> ParameterPoint {
        let total = self.length();
        if total == 0.0 {
            return self.base().clone();
        }
        let mut target = s.clamp(0.0, 1.0) * total;
        for w in self.waypoints.windows(2) {
            let l = distance(&w[0], &w[1]);
            if target <= l && l > 0.0 {
                return w[0].lerp(&w[1], target / l);
            }
            target -= l;
        }
        self.waypoints.last().expect("non-empty").clone()
    }

    /// Parse a loop document.
    pub fn parse(text: &str) -> Result<Self> {
        let d: LoopDoc = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            Error::Parse { line, column, message: e.message().to_string() }
        })?;
        let fixed = ParameterPoint { values: d.fixed.unwrap_or_default() };
        let mut pts: Vec<ParameterPoint> = d.waypoints.into_iter().map(|w| fixed.merged(&ParameterPoint { values: w })).collect();
        if d.close.unwrap_or(false) && pts.first() != pts.last() {
            let first = pts[0].clone();
            pts.push(first);
        }
        let lp = ParameterLoop::new(pts, d.segments_per_leg.unwrap_or(DEFAULT_SEGMENTS_PER_LEG))?;
        if !lp.is_constant() && lp.distinct_waypoints() < 3 {
            return Err(Error::Config("a loop needs at least three distinct waypoints".into()));
        }
        Ok(lp)
    }

    pub fn to_toml(&self) -> String {
        let d = LoopDoc {
            segments_per_leg: Some(self.segments_per_leg),
            close: None,
            fixed: None,
            waypoints: self.waypoints.iter().map(|p| p.values.clone()).collect(),
        };
        toml::to_string(&d).expect("loop serializes")
    }
}

fn distance(a: &ParameterPoint, b: &ParameterPoint) -> f64 {
    a.values.iter().map(|(k, v)| (b.get(k).unwrap_or(*v) - v).powi(2)).sum::<f64>().sqrt()
}

/// Default minimum segments per leg of parsed loops.
pub const DEFAULT_SEGMENTS_PER_LEG: usize = 500;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoopDoc {
    segments_per_leg: Option<usize>,
    /// Append the first waypoint when missing.
    close: Option<bool>,
    /// Parameters held fixed along the loop.
    fixed: Option<BTreeMap<String, f64>>,
    waypoints: Vec<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HolonomyMethod {
    OrderedExponential,
    ProjectorTransport,
    Adiabatic,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyResult {
    #[serde(skip)]
    pub unitary: CMat,
    pub method: HolonomyMethod,
    /// Change of the unitary under the last refinement (or time doubling).
    pub estimate: f64,
    pub segments: usize,
    pub unitarity_defect: f64,
}

impl HolonomyResult {
    fn new(unitary: CMat, method: HolonomyMethod, estimate: f64, segments: usize) -> Self {
        let d = unitary.nrows();
        let unitarity_defect = max_abs(&(unitary.adjoint() * &unitary - eye(d)));
        HolonomyResult { unitary, method, estimate, segments, unitarity_defect }
    }

    /// Eigenvalues of the unitary, sorted by phase.
    pub fn eigenvalues(&self) -> Vec<C64> {
        let (_, t) = self.unitary.clone().schur().unpack();
        let mut ev: Vec<C64> = t.diagonal().iter().cloned().collect();
        ev.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
        ev
    }
}

/// Refinement settings for loop discretizations.
#[derive(Debug, Clone)]
pub struct HolonomyOptions {
    /// Minimum total number of segments.
    pub min_segments: usize,
    pub max_segments: usize,
    /// Stop doubling once the unitary moves by less than this.
    pub tol: f64,
    /// Fail if the last change is above this.
    pub fail_tol: f64,
    pub step: f64,
}

impl Default for HolonomyOptions {
    fn default() -> Self {
        HolonomyOptions { min_segments: 2000, max_segments: 1 << 16, tol: 1e-6, fail_tol: 1e-5, step: DEFAULT_STEP }
    }
}

fn converge(lp: &ParameterLoop, opts: &HolonomyOptions, method: HolonomyMethod, f: impl Fn(usize) -> Result<CMat>) -> Result<HolonomyResult> {
    let legs = lp.legs();
    let mut per_leg = lp.segments_per_leg.max(opts.min_segments.div_ceil(legs));
    if lp.is_constant() {
        return Ok(HolonomyResult::new(f(1)?, method, 0.0, legs));
    }
    let mut prev = f(per_leg)?;
    loop {
        let next_leg = per_leg * 2;
        let cur = f(next_leg)?;
        let change = op_norm(&(&cur - &prev));
        per_leg = next_leg;
        if change < opts.tol {
            return Ok(HolonomyResult::new(cur, method, change, per_leg * legs));
        }
        if per_leg * 2 * legs > opts.max_segments {
            if change < opts.fail_tol {
                return Ok(HolonomyResult::new(cur, method, change, per_leg * legs));
            }
            return Err(Error::Numerical(format!("holonomy did not converge: change {change:.3e} at {} segments", per_leg * legs)));
        }
        prev = cur;
    }
}

/// Ordered exponential of the connection of `field` around the loop.
///
/// Projector-transport and reference gauges degrade far from their anchor,
/// so the frame is re-anchored whenever the transported frame becomes
/// ill-conditioned; frames agree at each switch and the final frame is
/// compared with the starting one.
pub fn holonomy_ordered_exp(field: &LocalFrameField, lp: &ParameterLoop, opts: &HolonomyOptions) -> Result<HolonomyResult> {
    check_base(field, lp)?;
    let moving = lp.moving();
    let d = field.dimension();
    let f0 = field.evaluate(lp.base())?;
    let once = |per_leg: usize| -> Result<CMat> {
        let nodes = lp.nodes(per_leg);
        let mut patch = field.clone();
        let mut u = eye(d);
        for w in nodes.windows(2) {
            if patch.gauge != Gauge::Isospectral {
                let (p, _) = patch.projector_at(&w[1])?;
                let anchor = match &patch.gauge {
                    Gauge::Reference(r) => r.clone(),
                    _ => patch.base_frame.clone(),
                };
                let sv = singular_values_desc(&(p * anchor));
                if sv.last().copied().unwrap_or(0.0) < REANCHOR_SV {
                    patch.base_frame = patch.evaluate(&w[0])?;
                    patch.base_point = w[0].clone();
                    patch.gauge = Gauge::ProjectorTransport;
                }
            }
            let mid = w[0].lerp(&w[1], 0.5);
            let conn = connection_at(&patch, &mid, opts.step)?;
            let mut gen = CMat::zeros(d, d);
            for name in &moving {
                let dk = w[1].get(name).unwrap_or(0.0) - w[0].get(name).unwrap_or(0.0);
                if dk != 0.0 {
                    let a = conn.component(name).ok_or_else(|| Error::UnboundParameter(name.clone()))?;
                    gen -= a * c(dk, 0.0);
                }
            }
            u = expm(&gen) * u;
        }
        Ok(f0.adjoint() * patch.evaluate(lp.base())? * u)
    };
    converge(lp, opts, HolonomyMethod::OrderedExponential, once)
}

// smallest singular value of P·F before the frame is re-anchored
const REANCHOR_SV: f64 = 0.7;

/// Discrete parallel transport: repeatedly project onto the eigenspace and
/// re-orthonormalize, then read off the loop unitary on the base frame.
pub fn holonomy_projector_transport(field: &LocalFrameField, lp: &ParameterLoop, opts: &HolonomyOptions) -> Result<HolonomyResult> {
    check_base(field, lp)?;
    let f0 = field.evaluate(lp.base())?;
    let once = |per_leg: usize| -> Result<CMat> {
        let nodes = lp.nodes(per_leg);
        let mut psi = f0.clone();
        for p in &nodes[1..] {
            let (proj, _) = field.projector_at(p)?;
            psi = lowdin(&(proj * &psi), 1e-8).ok_or_else(|| Error::FrameDegeneracy("transported frame lost rank".into()))?;
        }
        Ok(f0.adjoint() * psi)
    };
    converge(lp, opts, HolonomyMethod::ProjectorTransport, once)
}

fn check_base(field: &LocalFrameField, lp: &ParameterLoop) -> Result<()> {
    for name in field.spec.param_names() {
        if lp.base().get(&name).is_none() {
            return Err(Error::UnboundParameter(name));
        }
    }
    Ok(())
}

/// `‖UV − VU‖` in operator norm.
pub fn commutator_defect(u: &CMat, v: &CMat) -> f64 {
    op_norm(&commutator(u, v))
}

// ------------------------------------------------------------ geometric phase

/// Signed `∬ sin 2θ dθ dφ` over the region enclosed by a polygon in the
/// `(θ, φ)` plane, positive for counterclockwise loops with θ horizontal.
pub fn geometric_phase_area(vertices: &[(f64, f64)]) -> Result<f64> {
    let poly = polygon(vertices)?;
    if poly.len() < 3 || shoelace(&poly).abs() < 1e-300 {
        return Ok(0.0);
    }
    let orient = shoelace(&poly).signum();
    let tris = ear_clip(&poly)?;
    let f = |x: f64, _y: f64| (2.0 * x).sin();
    let total: f64 = tris.iter().map(|t| adaptive_triangle(&f, *t, 1e-12, 0)).sum();
    Ok(orient * total)
}

/// `∮ sin²θ dφ` along the polygon by adaptive Gauss–Kronrod quadrature,
/// equal to [`geometric_phase_area`] by Green's theorem.
pub fn geometric_phase_line(vertices: &[(f64, f64)]) -> Result<f64> {
    let poly = polygon(vertices)?;
    let mut total = 0.0;
    for k in 0..poly.len() {
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        let dphi = b.1 - a.1;
        if dphi == 0.0 {
            continue;
        }
        let g = |t: f64| (a.0 + t * (b.0 - a.0)).sin().powi(2) * dphi;
        total += adaptive_gk(&g, 0.0, 1.0, 1e-13, 0);
    }
    Ok(total)
}

/// Vertices of a (θ, φ) polygon traced by a loop.
pub fn loop_polygon(lp: &ParameterLoop, theta: &str, phi: &str) -> Result<Vec<(f64, f64)>> {
    lp.waypoints
        .iter()
        .map(|p| match (p.get(theta), p.get(phi)) {
            (Some(t), Some(f)) => Ok((t, f)),
            _ => Err(Error::UnboundParameter(format!("{theta}/{phi}"))),
        })
        .collect()
}

// drop the closing duplicate and repeated vertices, reject self-intersection
fn polygon(vertices: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let mut v: Vec<(f64, f64)> = Vec::new();
    for &p in vertices {
        if v.last() != Some(&p) {
            v.push(p);
        }
    }
    while v.len() > 1 && v.first() == v.last() {
        v.pop();
    }
    let n = v.len();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return Err(Error::Config("loop is self-intersecting".into()));
            }
        }
    }
    Ok(v)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn segments_cross(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    let on = |o: (f64, f64), a: (f64, f64), p: (f64, f64)| {
        p.0 >= o.0.min(a.0) && p.0 <= o.0.max(a.0) && p.1 >= o.1.min(a.1) && p.1 <= o.1.max(a.1)
    };
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return true;
    }
    (d1 == 0.0 && on(q1, q2, p1)) || (d2 == 0.0 && on(q1, q2, p2)) || (d3 == 0.0 && on(p1, p2, q1)) || (d4 == 0.0 && on(p1, p2, q2))
}

fn shoelace(v: &[(f64, f64)]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].0 * v[(i + 1) % n].1 - v[(i + 1) % n].0 * v[i].1).sum::<f64>() / 2.0
}

type Tri = [(f64, f64); 3];

fn ear_clip(poly: &[(f64, f64)]) -> Result<Vec<Tri>> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    if shoelace(poly) < 0.0 {
        idx.reverse();
    }
    let mut out = Vec::new();
    let mut guard = 0;
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (a, b, cc) = (poly[idx[(k + n - 1) % n]], poly[idx[k]], poly[idx[(k + 1) % n]]);
            if cross(a, b, cc) <= 0.0 {
                continue;
            }
            let inside = idx.iter().any(|&j| {
                let p = poly[j];
                p != a && p != b && p != cc && cross(a, b, p) >= 0.0 && cross(b, cc, p) >= 0.0 && cross(cc, a, p) >= 0.0
            });
            if !inside {
                out.push([a, b, cc]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // only collinear vertices remain
            let k = (0..n).find(|&k| cross(poly[idx[(k + n - 1) % n]], poly[idx[k]], poly[idx[(k + 1) % n]]).abs() < 1e-300);
            match k {
                Some(k) => {
                    idx.remove(k);
                }
                None => return Err(Error::Numerical("triangulation failed".into())),
            }
        }
        guard += 1;
        if guard > 10 * poly.len() {
            return Err(Error::Numerical("triangulation failed".into()));
        }
    }
    if idx.len() == 3 {
        out.push([poly[idx[0]], poly[idx[1]], poly[idx[2]]]);
    }
    Ok(out)
}

// Strang–Fix 6-point degree-4 rule and 7-point degree-5 rule
const DUNAVANT5: [(f64, f64, f64); 7] = [
    (0.225, 1.0 / 3.0, 1.0 / 3.0),
    (0.132_394_152_788_506_2, 0.059_715_871_789_769_8, 0.470_142_064_105_115_1),
    (0.132_394_152_788_506_2, 0.470_142_064_105_115_1, 0.059_715_871_789_769_8),
    (0.132_394_152_788_506_2, 0.470_142_064_105_115_1, 0.470_142_064_105_115_1),
    (0.125_939_180_544_827_2, 0.797_426_985_353_087_3, 0.101_286_507_323_456_3),
    (0.125_939_180_544_827_2, 0.101_286_507_323_456_3, 0.797_426_985_353_087_3),
    (0.125_939_180_544_827_2, 0.101_286_507_323_456_3, 0.101_286_507_323_456_3),
];

fn tri_rule(f: &dyn Fn(f64, f64) -> f64, t: Tri) -> f64 {
    let area = (cross(t[0], t[1], t[2]) / 2.0).abs();
    DUNAVANT5
        .iter()
        .map(|&(w, l1, l2)| {
            let l0 = 1.0 - l1 - l2;
            let x = l0 * t[0].0 + l1 * t[1].0 + l2 * t[2].0;
            let y = l0 * t[0].1 + l1 * t[1].1 + l2 * t[2].1;
            w * f(x, y)
        })
        .sum::<f64>()
        * area
}

fn adaptive_triangle(f: &dyn Fn(f64, f64) -> f64, t: Tri, tol: f64, depth: usize) -> f64 {
    let whole = tri_rule(f, t);
    let m = |a: (f64, f64), b: (f64, f64)| ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
    let (m01, m12, m20) = (m(t[0], t[1]), m(t[1], t[2]), m(t[2], t[0]));
    let kids = [[t[0], m01, m20], [m01, t[1], m12], [m20, m12, t[2]], [m01, m12, m20]];
    let parts: f64 = kids.iter().map(|k| tri_rule(f, *k)).sum();
    if (parts - whole).abs() < tol || depth > 12 {
        return parts;
    }
    kids.iter().map(|k| adaptive_triangle(f, *k, tol / 4.0, depth + 1)).sum()
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_2,
    0.063_092_092_629_979_0,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Adaptive 7/15-point Gauss–Kronrod quadrature.
pub fn adaptive_gk(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    let mut k = GK_WK[7] * f(mid);
    let mut g = GK_WG[3] * f(mid);
    for i in 0..7 {
        let (fp, fm) = (f(mid + half * GK_X[i]), f(mid - half * GK_X[i]));
        k += GK_WK[i] * (fp + fm);
        if i % 2 == 1 {
            g += GK_WG[i / 2] * (fp + fm);
        }
    }
    let (k, g) = (k * half, g * half);
    if (k - g).abs() < tol || depth > 30 {
        return k;
    }
    adaptive_gk(f, a, mid, tol / 2.0, depth + 1) + adaptive_gk(f, mid, b, tol / 2.0, depth + 1)
}

// ------------------------------------------------------------ adiabatic

/// Settings for [`adiabatic_check`].
#[derive(Debug, Clone)]
pub struct AdiabaticOptions {
    pub total_time: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for AdiabaticOptions {
    fn default() -> Self {
        AdiabaticOptions { total_time: 100.0, rtol: 1e-9, atol: 1e-12, max_steps: 10_000_000 }
    }
}

/// Schrödinger evolution around the loop at constant parameter speed; the
/// dynamical phase `exp(−i∫ε dt)` is removed and the result projected on
/// the base frame.
pub fn adiabatic_check(field: &LocalFrameField, lp: &ParameterLoop, opts: &AdiabaticOptions) -> Result<HolonomyResult> {
    check_base(field, lp)?;
    let f0 = field.evaluate(lp.base())?;
    let t_end = opts.total_time;
    let ham = |t: f64| -> Result<CMat> { hamiltonian_at(&field.spec, &lp.at_fraction(t / t_end), &field.basis) };
    let rhs = |t: f64, y: &CMat| -> Result<CMat> { Ok(ham(t)? * y * c(0.0, -1.0)) };
    let energy = |t: f64| -> Result<f64> { Ok(field.projector_at(&lp.at_fraction(t / t_end))?.1) };
    let (psi, phase) = dopri5(&rhs, &energy, f0.clone(), t_end, opts)?;
    let u = f0.adjoint() * psi * C64::from_polar(1.0, phase);
    Ok(HolonomyResult::new(u, HolonomyMethod::Adiabatic, 0.0, 0))
}

// Dormand–Prince 5(4) with the dynamical phase ∫ε dt accumulated by the
// trapezoid rule on accepted steps.
fn dopri5(
    f: &dyn Fn(f64, &CMat) -> Result<CMat>,
    energy: &dyn Fn(f64) -> Result<f64>,
    y0: CMat,
    t_end: f64,
    opts: &AdiabaticOptions,
) -> Result<(CMat, f64)> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut t = 0.0;
    let mut y = y0;
    let mut h = (t_end / 1000.0).min(0.01);
    let mut k1 = f(t, &y)?;
    let mut phase = 0.0;
    let mut e_prev = energy(0.0)?;
    let mut steps = 0;
    while t < t_end {
        if steps > opts.max_steps {
            return Err(Error::Numerical("adiabatic integration exceeded the step budget".into()));
        }
        steps += 1;
        h = h.min(t_end - t);
        let mut ks = vec![k1.clone()];
        for s in 0..6 {
            let mut yi = y.clone();
            for (j, kj) in ks.iter().enumerate() {
                if A[s][j] != 0.0 {
                    yi += kj * c(h * A[s][j], 0.0);
                }
            }
            ks.push(f(t + C[s + 1] * h, &yi)?);
        }
        // 5th-order solution is the stage-7 input (FSAL)
        let mut y5 = y.clone();
        for (j, kj) in ks.iter().take(6).enumerate() {
            if A[5][j] != 0.0 {
                y5 += kj * c(h * A[5][j], 0.0);
            }
        }
        let mut err = CMat::zeros(y.nrows(), y.ncols());
        for (j, kj) in ks.iter().enumerate() {
            if E[j] != 0.0 {
                err += kj * c(h * E[j], 0.0);
            }
        }
        let mut ratio = 0.0f64;
        for (e, (a, b)) in err.iter().zip(y.iter().zip(y5.iter())) {
            let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
            ratio = ratio.max(e.norm() / sc);
        }
        if ratio <= 1.0 {
            t += h;
            let e_now = energy(t)?;
            phase += 0.5 * (e_prev + e_now) * h;
            e_prev = e_now;
            y = y5;
            k1 = ks.pop().expect("seven stages");
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t_end.max(1.0) {
            return Err(Error::Numerical("adiabatic step size underflow".into()));
        }
    }
    Ok((y, phase))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_area_phase() {
        let r = [(0.0, 0.0), (std::f64::consts::FRAC_PI_4, 0.0), (std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2), (0.0, std::f64::consts::FRAC_PI_2), (0.0, 0.0)];
        let a = geometric_phase_area(&r).unwrap();
        let l = geometric_phase_line(&r).unwrap();
        assert!((a - std::f64::consts::FRAC_PI_4).abs() < 1e-10, "{a}");
        assert!((l - std::f64::consts::FRAC_PI_4).abs() < 1e-10, "{l}");
    }

    #[test]
    fn degenerate_loop_has_zero_phase() {
        assert_eq!(geometric_phase_area(&[(0.3, 0.1), (0.3, 0.1), (0.3, 0.1)]).unwrap(), 0.0);
    }

    #[test]
    fn bow_tie_is_rejected() {
        let bow = [(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0), (0.0, 0.0)];
        assert!(matches!(geometric_phase_area(&bow), Err(Error::Config(_))));
    }

    #[test]
    fn open_loop_is_rejected() {
        let p = |x: f64| ParameterPoint::from_pairs(&[("a", x)]);
        assert!(ParameterLoop::new(vec![p(0.0), p(1.0), p(2.0)], 10).is_err());
    }
}

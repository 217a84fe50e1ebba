//! Acceptance criteria 1–9. Each test prints one PASS/FAIL line to stderr
//! (uncaptured) and then asserts the criterion.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pntkit::fock::{operator_matrix, OccupationState};
use pntkit::geometry::{
    connection_at, connection_isospectral, connection_jets, holonomy_dimension, jet_curvature, sample_points, BlockRef, TowerOptions, DEFAULT_STEP,
};
use pntkit::holonomy::{
    adiabatic_check, commutator_defect, geometric_phase_area, geometric_phase_line, holonomy_ordered_exp, loop_polygon, AdiabaticOptions,
    HolonomyOptions, ParameterLoop,
};
use pntkit::linalg::{c, commutator, eye, max_abs, op_norm, CMat, C64};
use pntkit::models::{builtin, builtin_with, compose, hamiltonian_at, BuiltinOptions, ModelSpec, ParameterPoint};
use pntkit::pnt::{composite_pnt, pnt_scan, table_report, ScanConfig};
use pntkit::spectral::{basis_for, eigen_blocks, local_frame, BlockSelector, Gauge, LocalFrameField};

fn verdict(n: usize, pass: bool, detail: &str, t: Instant) {
    let line = format!("criterion {n}: {} {detail} ({:.1} s)\n", if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn block_ref(spec: &ModelSpec, point: &ParameterPoint, layer: Option<u32>, eps: f64) -> BlockRef {
    let basis = basis_for(spec, layer).unwrap();
    let c = spec.compiled();
    let h = if c.isospectral() { operator_matrix(&c.h, &basis, point).unwrap() } else { hamiltonian_at(spec, point, &basis).unwrap() };
    let b = eigen_blocks(&h, 1e-9).unwrap().into_iter().find(|b| (b.eigenvalue - eps).abs() < 1e-6).expect("eigenvalue present");
    BlockRef { layer, spectral_index: b.spectral_index, dimension: b.dimension }
}

fn lambda_point(theta: f64, phi: f64) -> ParameterPoint {
    ParameterPoint::from_pairs(&[("theta", theta), ("phi", phi)])
}

fn dark_field(spec: &ModelSpec, base: &ParameterPoint, n: u32) -> LocalFrameField {
    local_frame(spec, base, &BlockSelector { layer: Some(n), eigenvalue: 0.0 }, Gauge::ProjectorTransport, 1e-9).unwrap()
}

fn phase_of(u: &CMat) -> f64 {
    u[(0, 0)].arg()
}

fn phase_gap(a: f64, b: f64) -> f64 {
    (C64::from_polar(1.0, a) - C64::from_polar(1.0, b)).norm()
}

fn random_rectangle(r: &mut ChaCha8Rng) -> ParameterLoop {
    let t0 = r.random_range(0.2..0.7);
    let t1 = t0 + r.random_range(0.2..0.6);
    let f0 = r.random_range(0.0..2.0 * PI);
    let f1 = f0 + r.random_range(0.3..1.5);
    ParameterLoop::rectangle(&lambda_point(t0, f0), ("theta", t0, t1), ("phi", f0, f1), 100)
}

// ------------------------------------------------------------------ 1

#[test]
fn criterion_1_lambda_abelian_structure() {
    let t = Instant::now();
    let lam = builtin("lambda").unwrap();
    let basis = basis_for(&lam, Some(1)).unwrap();
    let plus = basis.index[&OccupationState { occupations: vec![1, 0, 0], excitations: vec![] }];
    let mut r_plus = CMat::zeros(basis.len(), 1);
    r_plus[(plus, 0)] = c(1.0, 0.0);

    let mut r = rng(1);
    let mut conn_err = 0.0f64;
    for _ in 0..20 {
        let p = lambda_point(r.random_range(0.15..1.42), r.random_range(0.0..2.0 * PI));
        let field = local_frame(&lam, &p, &BlockSelector { layer: Some(1), eigenvalue: 0.0 }, Gauge::Reference(r_plus.clone()), 1e-9).unwrap();
        let a = connection_at(&field, &p, DEFAULT_STEP).unwrap();
        let theta = p.get("theta").unwrap();
        conn_err = conn_err.max((a.component("phi").unwrap()[(0, 0)] - c(0.0, theta.cos().powi(2))).norm());
    }

    let opts = HolonomyOptions::default();
    let mut two_photon_err = 0.0f64;
    let mut seen = Vec::new();
    for _ in 0..5 {
        let lp = random_rectangle(&mut r);
        let phi = geometric_phase_area(&loop_polygon(&lp, "theta", "phi").unwrap()).unwrap();
        let u = holonomy_ordered_exp(&dark_field(&lam, lp.base(), 2), &lp, &opts).unwrap();
        let ev = u.eigenvalues();
        let want = [C64::from_polar(1.0, 2.0 * phi), C64::from_polar(1.0, -2.0 * phi)];
        let direct = (ev[0] - want[0]).norm().max((ev[1] - want[1]).norm());
        let swapped = (ev[0] - want[1]).norm().max((ev[1] - want[0]).norm());
        two_photon_err = two_photon_err.max(direct.min(swapped));
        seen.push(format!("Φ={phi:.3}: args {:.3},{:.3}", ev[0].arg(), ev[1].arg()));
    }

    let mut comm = 0.0f64;
    for n in 2..=4u32 {
        for _ in 0..2 {
            let t0 = r.random_range(0.3..0.8);
            let f0 = r.random_range(0.0..2.0 * PI);
            let base = lambda_point(t0, f0);
            let a = ParameterLoop::rectangle(&base, ("theta", t0, t0 + r.random_range(0.2..0.5)), ("phi", f0, f0 + r.random_range(0.3..1.2)), 100);
            let b = ParameterLoop::rectangle(&base, ("theta", t0, t0 - r.random_range(0.1..0.25)), ("phi", f0, f0 - r.random_range(0.3..1.2)), 100);
            let field = dark_field(&lam, &base, n);
            let ua = holonomy_ordered_exp(&field, &a, &opts).unwrap();
            let ub = holonomy_ordered_exp(&field, &b, &opts).unwrap();
            comm = comm.max(commutator_defect(&ua.unitary, &ub.unitary));
        }
    }

    let pass = conn_err < 1e-6 && two_photon_err < 1e-4 && comm < 1e-5;
    verdict(
        1,
        pass,
        &format!("A_phi err {conn_err:.1e}; two-photon eigenvalue err {two_photon_err:.1e} [{}]; commutator defect {comm:.1e}", seen.join("; ")),
        t,
    );
    assert!(conn_err < 1e-6, "A_phi deviates by {conn_err}");
    assert!(comm < 1e-5, "commutator defect {comm}");
    assert!(two_photon_err < 1e-4, "two-photon eigenvalues deviate by {two_photon_err}: {seen:?}");
}

// ------------------------------------------------------------------ 2

fn random_star(r: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let (tc, fc) = (r.random_range(0.5..1.0), r.random_range(0.5..5.5));
    let k = r.random_range(4..8);
    let mut angles: Vec<f64> = (0..k).map(|_| r.random_range(0.0..2.0 * PI)).collect();
    angles.sort_by(f64::total_cmp);
    let mut v: Vec<(f64, f64)> = angles
        .iter()
        .map(|a| {
            let rad = r.random_range(0.1..0.35);
            (tc + rad * a.cos(), fc + rad * a.sin())
        })
        .collect();
    v.push(v[0]);
    v
}

#[test]
fn criterion_2_geometric_phase_dual_oracle() {
    let t = Instant::now();
    let lam = builtin("lambda").unwrap();
    let mut r = rng(2);
    let opts = HolonomyOptions::default();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let poly = random_star(&mut r);
        let area = geometric_phase_area(&poly).unwrap();
        let line = geometric_phase_line(&poly).unwrap();
        let pts = poly.iter().map(|&(a, b)| lambda_point(a, b)).collect();
        let lp = ParameterLoop::new(pts, 50).unwrap();
        let u = holonomy_ordered_exp(&dark_field(&lam, lp.base(), 1), &lp, &opts).unwrap();
        let oe = phase_of(&u.unitary);
        worst = worst.max((area - line).abs()).max(phase_gap(area, oe)).max(phase_gap(line, oe));
    }
    let pass = worst < 1e-5;
    verdict(2, pass, &format!("max pairwise deviation {worst:.1e} over 20 loops"), t);
    assert!(pass);
}

// ------------------------------------------------------------------ 3

fn fcg4_closed_forms(p: &ParameterPoint) -> (Vec<(&'static str, C64)>, Vec<(&'static str, &'static str, C64)>) {
    let g = |n: &str| p.get(n).unwrap();
    let (t1, t2, t3) = (g("theta1"), g("theta2"), g("theta3"));
    let (c1, s1, c2, s2, c3, s3) = (t1.cos(), t1.sin(), t2.cos(), t2.sin(), t3.cos(), t3.sin());
    let a = vec![
        ("phi1", c(0.0, -c1 * c1 * s2 * s2 * c3 * c3)),
        ("phi2", c(0.0, -c2 * c2 * c3 * c3)),
        ("phi3", c(0.0, c3 * c3)),
        ("theta1", c(0.0, 0.0)),
        ("theta2", c(0.0, 0.0)),
        ("theta3", c(0.0, 0.0)),
    ];
    let f = vec![
        ("phi1", "theta1", c(0.0, -2.0 * s1 * c1 * s2 * s2 * c3 * c3)),
        ("phi1", "theta2", c(0.0, 2.0 * c1 * c1 * s2 * c2 * c3 * c3)),
        ("phi1", "theta3", c(0.0, -2.0 * c1 * c1 * s2 * s2 * s3 * c3)),
        ("phi2", "theta2", c(0.0, -2.0 * s2 * c2 * c3 * c3)),
        ("phi2", "theta3", c(0.0, -2.0 * c2 * c2 * s3 * c3)),
        ("phi3", "theta3", c(0.0, 2.0 * s3 * c3)),
    ];
    (a, f)
}

#[test]
fn criterion_3_fcg4_fixtures() {
    let t = Instant::now();
    let fcg = builtin("fcg4").unwrap();
    let names = fcg.param_names();
    let mut worst = 0.0f64;
    for p in sample_points(&fcg, 3, 20).into_iter().skip(1) {
        let blk = block_ref(&fcg, &p, Some(1), 0.0);
        let cj = connection_jets(&fcg, &p, &blk, 1, &TowerOptions::default()).unwrap();
        let curv = jet_curvature(&cj, 0);
        let (a, f) = fcg4_closed_forms(&p);
        for (name, want) in a {
            let k = names.iter().position(|n| n == name).unwrap();
            worst = worst.max((cj.a[k].c[0][(0, 0)] - want).norm());
        }
        for (i, mu) in names.iter().enumerate() {
            for nu in &names[i + 1..] {
                let want = f
                    .iter()
                    .find_map(|&(a, b, v)| if (a, b) == (mu.as_str(), nu.as_str()) { Some(v) } else if (b, a) == (mu.as_str(), nu.as_str()) { Some(-v) } else { None })
                    .unwrap_or(c(0.0, 0.0));
                worst = worst.max((curv.curvature(mu, nu).unwrap()[(0, 0)] - want).norm());
            }
        }
    }
    let k0 = fcg.base_point.clone().unwrap();
    let blk = block_ref(&fcg, &k0, Some(2), 0.0);
    let rank = holonomy_dimension(&fcg, &[blk], &[k0], &TowerOptions { k_max: 1, ..Default::default() }, 1e-6).unwrap().rank;
    let pass = worst < 1e-6 && rank == 5;
    verdict(3, pass, &format!("closed-form deviation {worst:.1e} over 20 points; two-particle rank at κ₀ = {rank}"), t);
    assert!(worst < 1e-6);
    assert_eq!(rank, 5);
}

// ------------------------------------------------------------------ 4

fn kerr_basis_map(frame: &CMat, basis: &pntkit::fock::FockBasis) -> CMat {
    // columns: |0,2⟩, |1,2⟩, |2,0⟩, |2,1⟩; the reference A_r4 couples
    // columns 2 and 4, which the beam splitter only allows in this order
    let order = [[0u32, 2], [1, 2], [2, 0], [2, 1]];
    let mut p = CMat::zeros(frame.ncols(), 4);
    for (k, occ) in order.iter().enumerate() {
        let row = basis.index[&OccupationState { occupations: occ.to_vec(), excitations: vec![] }];
        for j in 0..frame.ncols() {
            p[(j, k)] = frame[(row, j)].conj();
        }
    }
    p
}

fn mat4(entries: &[((usize, usize), C64)]) -> CMat {
    let mut m = CMat::zeros(4, 4);
    for &((i, j), v) in entries {
        m[(i, j)] = v;
    }
    m
}

#[test]
fn criterion_4_kerr_matrix_fixtures() {
    let t = Instant::now();
    let kerr = builtin_with("kerr2", &BuiltinOptions { cutoff: 20, ..Default::default() }).unwrap();
    let (r4, t4) = (0.3f64, 0.7f64);
    let mut p = ParameterPoint::new();
    for n in ["r1", "r2", "r3", "t1", "t2", "t3"] {
        p.set(n, 0.0);
    }
    p.set("r4", r4);
    p.set("t4", t4);
    let blk = block_ref(&kerr, &p, None, 2.0);
    let cj = connection_jets(&kerr, &p, &blk, 2, &TowerOptions::default()).unwrap();
    let basis = basis_for(&kerr, None).unwrap();
    let pm = kerr_basis_map(&cj.frame, &basis);
    let to_paper = |m: &CMat| pm.adjoint() * m * &pm;
    let curv = jet_curvature(&cj, 1);
    let a = |n: &str| to_paper(&cj.a[cj.directions.iter().position(|d| d == n).unwrap()].c[0]);

    let zeta = C64::from_polar(r4, t4);
    let (s1, s2) = (r4.cos(), r4.sin());
    let e = |x: f64| C64::from_polar(1.0, x);
    let i = c(0.0, 1.0);
    let k = r4 * s1 * s2;
    let cz = (2.0 * r4).cos();
    let fixtures: Vec<(&str, CMat, CMat)> = vec![
        ("A_r1", a("r1"), mat4(&[((0, 1), c(-1.0, 0.0)), ((1, 0), c(1.0, 0.0))])),
        ("A_r4", a("r4"), mat4(&[((1, 3), -2.0 * e(-t4)), ((3, 1), 2.0 * e(t4))])),
        (
            "A_t4",
            a("t4"),
            mat4(&[
                ((0, 0), i * 4.0 * k),
                ((1, 1), i * 2.0 * k),
                ((2, 2), -i * 4.0 * k),
                ((3, 3), -i * 2.0 * k),
                ((1, 3), i * 2.0 * zeta.conj() * cz),
                ((3, 1), i * 2.0 * zeta * cz),
            ]),
        ),
        ("F_r1r2", to_paper(&curv.curvature("r1", "r2").unwrap()), mat4(&[((0, 1), c(-2.0, 0.0)), ((1, 0), c(2.0, 0.0))])),
        ("F_r2r3", to_paper(&curv.curvature("r2", "r3").unwrap()), mat4(&[((1, 3), c(4.0, 0.0)), ((3, 1), c(-4.0, 0.0))])),
        (
            "F_r4t4",
            to_paper(&curv.curvature("r4", "t4").unwrap()),
            mat4(&[
                ((0, 0), i * 4.0 * (r4 * cz + s1 * s2)),
                ((1, 1), -i * 2.0 * (3.0 * r4 * cz - s1 * s2)),
                ((2, 2), -i * 2.0 * (r4 * cz + s1 * s2)),
                ((3, 3), i * 2.0 * (3.0 * r4 * cz - s1 * s2)),
                ((1, 3), -i * 4.0 * s2 * s2 * e(-t4)),
                ((3, 1), -i * 4.0 * s2 * s2 * e(t4)),
            ]),
        ),
        (
            "dr1 F_r1t1",
            to_paper(&curv.derivative(&["r1"], "r1", "t1").unwrap()),
            mat4(&[((0, 0), i * 2.0), ((1, 1), i * 6.0), ((2, 2), i * 4.0), ((3, 3), i * 4.0)]),
        ),
        (
            "dr3 F_r2r4",
            to_paper(&curv.derivative(&["r3"], "r2", "r4").unwrap()),
            mat4(&[((0, 0), i * 4.0 * t4.sin()), ((1, 1), i * 12.0 * t4.sin()), ((2, 2), i * 20.0 * t4.sin()), ((3, 3), i * 20.0 * t4.sin())]),
        ),
    ];
    let mut bad = Vec::new();
    let mut report = Vec::new();
    for (name, got, want) in &fixtures {
        let err = max_abs(&(got - want));
        report.push(format!("{name} {err:.1e}"));
        if err >= 1e-5 {
            bad.push(*name);
        }
    }
    let pass = bad.is_empty();
    verdict(4, pass, &format!("entrywise deviations: {}", report.join(", ")), t);
    assert!(pass, "fixtures off: {bad:?}");
}

// ------------------------------------------------------------------ 5

#[test]
fn criterion_5_kerr_table_rows() {
    let t = Instant::now();
    let kerr = builtin("kerr2").unwrap();
    let cfg = ScanConfig { n_max: 6, k_max: 3, rank_tol: 1e-6, ..Default::default() };
    let rows = table_report(&kerr, &cfg).unwrap();
    let want = [(0.0, 4, 14, 16), (2.0, 4, 14, 16), (12.0, 5, 9, 9)];
    let mut got = Vec::new();
    let mut pass = true;
    for (eps, d, f, h) in want {
        let row = rows.iter().find(|r| (r.eigenvalue - eps).abs() < 1e-9 && r.degeneracy == d);
        let pair = row.map(|r| (r.dim_f, r.dim_hol));
        pass &= pair == Some((f, h));
        got.push(format!("(ε={eps}, d={d}) → {pair:?} want ({f}, {h})"));
    }
    verdict(5, pass, &got.join("; "), t);
    assert!(pass, "{got:?}");
}

// ------------------------------------------------------------------ 6

#[test]
fn criterion_6_pnt_values() {
    let t = Instant::now();
    let cases = [("lambda", 4, 1), ("fcg3", 4, 1), ("kerr2", 6, 2), ("jaynes_cummings", 4, 0)];
    let mut got = Vec::new();
    let mut pass = true;
    for (name, n_max, want) in cases {
        let r = pnt_scan(&builtin(name).unwrap(), &ScanConfig { n_max, ..Default::default() }).unwrap();
        pass &= r.n_t == want;
        got.push(format!("{name} N_t={} (want {want}, D={:?})", r.n_t, r.attainment));
    }
    verdict(6, pass, &got.join("; "), t);
    assert!(pass, "{got:?}");
}

// ------------------------------------------------------------------ 7

#[test]
fn criterion_7_composite_additivity() {
    let t = Instant::now();
    let lam = builtin("lambda").unwrap();
    let both = compose(&[lam.with_prefix("a"), lam.with_prefix("b")]).unwrap();
    let r = composite_pnt(&both, &ScanConfig { n_max: 3, ..Default::default() }).unwrap();
    let pass = r.n_t == 2;
    verdict(7, pass, &format!("compose(lambda, lambda) N_t={} (want 2, D={:?})", r.n_t, r.attainment), t);
    assert_eq!(r.n_t, 2, "D = {:?}", r.attainment);
}

// ------------------------------------------------------------------ 8

fn tripod_rectangle(base: &ParameterPoint, x: &str, dx: f64, y: &str, dy: f64) -> ParameterLoop {
    let (x0, y0) = (base.get(x).unwrap(), base.get(y).unwrap());
    ParameterLoop::rectangle(base, (x, x0, x0 + dx), (y, y0, y0 + dy), 100)
}

#[test]
fn criterion_8_property_suites() {
    let t = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;

    // gauge covariance of ranks
    let fcg = builtin("fcg4").unwrap();
    let k0 = fcg.base_point.clone().unwrap();
    let pts = sample_points(&fcg, 8, 2);
    let blk = block_ref(&fcg, &k0, Some(2), 0.0);
    let plain = holonomy_dimension(&fcg, std::slice::from_ref(&blk), &pts, &TowerOptions { k_max: 2, ..Default::default() }, 1e-6).unwrap().rank_by_order;
    let mut gauge_ok = true;
    for seed in 0..10 {
        let rot = holonomy_dimension(&fcg, std::slice::from_ref(&blk), &pts, &TowerOptions { k_max: 2, rotation: Some(seed), ..Default::default() }, 1e-6).unwrap();
        gauge_ok &= rot.rank_by_order == plain;
    }
    notes.push(format!("gauge ranks {plain:?} invariant: {gauge_ok}"));
    pass &= gauge_ok;

    // unitarity, reversal and concatenation on the tripod dark block
    let tri = builtin("tripod").unwrap();
    let base = ParameterPoint::from_pairs(&[("theta", 0.7), ("chi", 0.6), ("phi1", 0.4), ("phi2", 1.1)]);
    let field = dark_field(&tri, &base, 1);
    let opts = HolonomyOptions::default();
    let g1 = tripod_rectangle(&base, "theta", 0.3, "phi1", 0.8);
    let g2 = tripod_rectangle(&base, "chi", 0.35, "phi2", 0.9);
    let u1 = holonomy_ordered_exp(&field, &g1, &opts).unwrap().unitary;
    let u2 = holonomy_ordered_exp(&field, &g2, &opts).unwrap().unitary;
    let u1r = holonomy_ordered_exp(&field, &g1.reversed(), &opts).unwrap().unitary;
    let u12 = holonomy_ordered_exp(&field, &g1.then(&g2).unwrap(), &opts).unwrap().unitary;
    let unit = max_abs(&(u1.adjoint() * &u1 - eye(2)));
    let rev = max_abs(&(&u1r - u1.adjoint()));
    let cat = max_abs(&(&u12 - &u2 * &u1));
    notes.push(format!("unitarity {unit:.1e}, reversal {rev:.1e}, concatenation {cat:.1e}"));
    pass &= unit < 1e-5 && rev < 1e-5 && cat < 1e-5;

    // block-diagonality: Λ dark space on a truncated multi-layer basis
    let mut lam = builtin("lambda").unwrap();
    lam.system.cutoff = Some(2);
    let lbase = lambda_point(0.5, 0.3);
    let field = local_frame(&lam, &lbase, &BlockSelector { layer: None, eigenvalue: 0.0 }, Gauge::ProjectorTransport, 1e-9).unwrap();
    let lp = ParameterLoop::rectangle(&lbase, ("theta", 0.5, 0.9), ("phi", 0.3, 1.2), 100);
    let u = holonomy_ordered_exp(&field, &lp, &opts).unwrap().unitary;
    let basis = basis_for(&lam, None).unwrap();
    let number = CMat::from_diagonal(&nalgebra::DVector::from_iterator(basis.len(), basis.states.iter().map(|s| c(s.particles() as f64, 0.0))));
    let nf = field.base_frame.adjoint() * number * &field.base_frame;
    let bd = op_norm(&commutator(&u, &nf));
    notes.push(format!("block-diagonality {bd:.1e} (d={})", u.nrows()));
    pass &= bd < 1e-8;

    // Richardson order of the finite-difference connection against jets
    let mut r = rng(8);
    let names = fcg.param_names();
    let mut orders = Vec::new();
    while orders.len() < 10 {
        let p = fcg.random_point(&mut r);
        let blk = block_ref(&fcg, &p, Some(2), 0.0);
        let cj = connection_jets(&fcg, &p, &blk, 1, &TowerOptions::default()).unwrap();
        let dir = r.random_range(0..names.len());
        let (i, j) = (r.random_range(0..3), r.random_range(0..3));
        let exact = cj.a[dir].c[0][(i, j)];
        if exact.norm() < 1e-2 {
            continue;
        }
        let err = |h: f64| (connection_isospectral(&fcg, Some(2), &cj.frame, &p, h).unwrap().components[dir][(i, j)] - exact).norm();
        let (e1, e2) = (err(0.1), err(0.05));
        orders.push((e1 / e2).log2());
    }
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    notes.push(format!("min Richardson order {min_order:.2}"));
    pass &= min_order >= 1.8;

    // adiabatic error decreases with the total time
    let lam = builtin("lambda").unwrap();
    let lbase = lambda_point(0.4, 0.6);
    let field = dark_field(&lam, &lbase, 1);
    // smooth loop: corners would add interfering non-adiabatic kicks
    let mut ring: Vec<ParameterPoint> =
        (0..64).map(|k| k as f64 / 64.0 * 2.0 * PI).map(|a| lambda_point(0.65 - 0.25 * a.cos(), 0.6 - 0.4 * a.sin())).collect();
    ring.push(ring[0].clone());
    let lp = ParameterLoop::new(ring, 20).unwrap();
    let reference = holonomy_ordered_exp(&field, &lp, &opts).unwrap().unitary;
    let errs: Vec<f64> = [100.0, 200.0, 400.0]
        .iter()
        .map(|&tt| op_norm(&(adiabatic_check(&field, &lp, &AdiabaticOptions { total_time: tt, ..Default::default() }).unwrap().unitary - &reference)))
        .collect();
    let mono = errs.windows(2).all(|w| w[1] < w[0]);
    notes.push(format!("adiabatic errors {:?}", errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>()));
    pass &= mono;

    verdict(8, pass, &notes.join("; "), t);
    assert!(pass, "{notes:?}");
}

// ------------------------------------------------------------------ 9

#[test]
fn criterion_9_tripod_non_abelian() {
    let t = Instant::now();
    let tri = builtin("tripod").unwrap();
    let mut r = rng(9);
    let opts = HolonomyOptions::default();
    // coarse holonomies rank candidates; the best pair is recomputed at full tolerance
    let coarse = HolonomyOptions { min_segments: 400, tol: 1e-4, fail_tol: 1e-2, ..Default::default() };
    let names = ["theta", "chi", "phi1", "phi2"];
    let mut best: Option<(f64, LocalFrameField, ParameterLoop, ParameterLoop)> = None;
    for _ in 0..150 {
        let base = tri.random_point(&mut r);
        let field = dark_field(&tri, &base, 1);
        let mut pick = || {
            let i = r.random_range(0..4);
            let j = (i + r.random_range(1..4)) % 4;
            let span = |k: usize, r: &mut ChaCha8Rng| if k < 2 { r.random_range(-0.6..0.6) } else { r.random_range(-2.5..2.5) };
            let (dx, dy) = (span(i, &mut r), span(j, &mut r));
            let end = |k: usize, d: f64| {
                let v = base.get(names[k]).unwrap() + d;
                if k < 2 { v.clamp(0.05, 1.52) } else { v }
            };
            let (x0, y0) = (base.get(names[i]).unwrap(), base.get(names[j]).unwrap());
            ParameterLoop::rectangle(&base, (names[i], x0, end(i, dx)), (names[j], y0, end(j, dy)), 60)
        };
        let (a, b) = (pick(), pick());
        let (Ok(ua), Ok(ub)) = (holonomy_ordered_exp(&field, &a, &coarse), holonomy_ordered_exp(&field, &b, &coarse)) else {
            continue;
        };
        let d = commutator_defect(&ua.unitary, &ub.unitary);
        if best.as_ref().map_or(true, |x| d > x.0) {
            best = Some((d, field, a, b));
        }
        if d > 0.2 {
            break;
        }
    }
    let (_, field, a, b) = best.expect("some loop pair integrates");
    let ua = holonomy_ordered_exp(&field, &a, &opts).unwrap();
    let ub = holonomy_ordered_exp(&field, &b, &opts).unwrap();
    let best = commutator_defect(&ua.unitary, &ub.unitary);
    let pts = sample_points(&tri, 9, 3);
    let blk = block_ref(&tri, &pts[0], Some(1), 0.0);
    let span = holonomy_dimension(&tri, &[blk], &pts, &TowerOptions { k_max: 2, ..Default::default() }, 1e-6).unwrap();
    let pass = best > 0.1 && span.rank == 4;
    verdict(9, pass, &format!("commutator defect {best:.3}; rank by order {:?}", span.rank_by_order), t);
    assert!(best > 0.1);
    assert_eq!(span.rank, 4);
}

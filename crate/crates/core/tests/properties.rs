use std::f64::consts::PI;

use proptest::prelude::*;

use pntkit::fock::operator_matrix;
use pntkit::geometry::{connection_jets, holonomy_dimension, jet_curvature, BlockRef, TowerOptions};
use pntkit::holonomy::{geometric_phase_area, geometric_phase_line, holonomy_ordered_exp, HolonomyOptions, ParameterLoop};
use pntkit::linalg::{eye, max_abs, CMat};
use pntkit::models::{builtin, hamiltonian_at, unitary_at, ModelSpec, ParameterPoint};
use pntkit::pnt::{pnt_scan, ScanConfig};
use pntkit::spectral::{basis_for, eigen_blocks, local_frame, BlockSelector, Gauge};

fn lambda_point(theta: f64, phi: f64) -> ParameterPoint {
    ParameterPoint::from_pairs(&[("theta", theta), ("phi", phi)])
}

fn point_of(spec: &ModelSpec, values: &[f64]) -> ParameterPoint {
    let mut p = ParameterPoint::new();
    for (name, v) in spec.param_names().iter().zip(values) {
        p.set(name, *v);
    }
    p
}

fn block_ref(spec: &ModelSpec, p: &ParameterPoint, layer: u32, eps: f64) -> BlockRef {
    let basis = basis_for(spec, Some(layer)).unwrap();
    let h = operator_matrix(&spec.compiled().h, &basis, p).unwrap();
    let b = eigen_blocks(&h, 1e-9).unwrap().into_iter().find(|b| (b.eigenvalue - eps).abs() < 1e-6).unwrap();
    BlockRef { layer: Some(layer), spectral_index: b.spectral_index, dimension: b.dimension }
}

fn star(center: (f64, f64), radii: &[f64], offset: f64) -> Vec<(f64, f64)> {
    let k = radii.len();
    let mut v: Vec<(f64, f64)> = radii
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let a = offset + 2.0 * PI * i as f64 / k as f64;
            (center.0 + r * a.cos(), center.1 + r * a.sin())
        })
        .collect();
    v.push(v[0]);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loop_documents_round_trip(pts in prop::collection::vec((0.1f64..1.4, -3.0f64..3.0), 3..7), seg in 1usize..400) {
        let mut wp: Vec<ParameterPoint> = pts.iter().map(|&(t, f)| lambda_point(t, f)).collect();
        wp.push(wp[0].clone());
        if let Ok(lp) = ParameterLoop::new(wp, seg) {
            let back = ParameterLoop::parse(&lp.to_toml()).unwrap();
            prop_assert_eq!(back.segments_per_leg, lp.segments_per_leg);
            prop_assert_eq!(back.waypoints, lp.waypoints);
        }
    }

    #[test]
    fn area_and_line_phases_agree(tc in 0.5f64..1.0, fc in -2.0f64..2.0, radii in prop::collection::vec(0.1f64..0.4, 3..9), offset in 0.0f64..6.0) {
        let poly = star((tc, fc), &radii, offset);
        let area = geometric_phase_area(&poly).unwrap();
        let line = geometric_phase_line(&poly).unwrap();
        prop_assert!((area - line).abs() < 1e-9, "{} vs {}", area, line);
        let rev: Vec<_> = poly.iter().rev().cloned().collect();
        prop_assert!((geometric_phase_area(&rev).unwrap() + area).abs() < 1e-9);
    }

    #[test]
    fn frames_are_orthonormal_eigenvectors(v in prop::collection::vec(0.15f64..1.42, 4), n in 1u32..4) {
        let tri = builtin("tripod").unwrap();
        let p = point_of(&tri, &v);
        let field = local_frame(&tri, &p, &BlockSelector { layer: Some(n), eigenvalue: 0.0 }, Gauge::ProjectorTransport, 1e-9).unwrap();
        let f = &field.base_frame;
        prop_assert!(max_abs(&(f.adjoint() * f - eye(f.ncols()))) < 1e-10);
        let h = hamiltonian_at(&tri, &p, &field.basis).unwrap();
        prop_assert!(max_abs(&(&h * f)) < 1e-9);
    }

    #[test]
    fn word_unitaries_are_unitary_on_layers(v in prop::collection::vec(0.0f64..std::f64::consts::TAU, 6), n in 1u32..4) {
        let fcg = builtin("fcg4").unwrap();
        let p = point_of(&fcg, &v);
        let basis = basis_for(&fcg, Some(n)).unwrap();
        let u = unitary_at(&fcg, &p, &basis).unwrap();
        prop_assert!(max_abs(&(u.adjoint() * &u - eye(u.nrows()))) < 1e-10);
    }

    #[test]
    fn layer_bases_are_indexed_and_uniform(n in 0u32..5) {
        let basis = basis_for(&builtin("fcg4").unwrap(), Some(n)).unwrap();
        for (i, s) in basis.states.iter().enumerate() {
            prop_assert_eq!(basis.index[s], i);
            prop_assert_eq!(s.particles(), n);
        }
    }

    #[test]
    fn curvature_is_antisymmetric_and_anti_hermitian(v in prop::collection::vec(0.15f64..1.42, 6)) {
        let fcg = builtin("fcg4").unwrap();
        let p = point_of(&fcg, &v);
        let cj = connection_jets(&fcg, &p, &block_ref(&fcg, &p, 2, 0.0), 2, &TowerOptions::default()).unwrap();
        let curv = jet_curvature(&cj, 1);
        let names = fcg.param_names();
        for mu in &names {
            for nu in &names {
                if mu == nu {
                    continue;
                }
                let f = curv.curvature(mu, nu).unwrap();
                prop_assert!(max_abs(&(&f + curv.curvature(nu, mu).unwrap())) < 1e-12);
                prop_assert!(max_abs(&(&f + f.adjoint())) < 1e-7);
                let df = curv.derivative(&[names[0].as_str()], mu, nu).unwrap();
                prop_assert!(max_abs(&(&df + df.adjoint())) < 1e-7);
            }
        }
    }

    #[test]
    fn holonomies_are_unitary(t0 in 0.2f64..0.8, dt in 0.1f64..0.5, f0 in 0.0f64..6.0, df in -1.5f64..1.5, n in 1u32..3) {
        prop_assume!(df.abs() > 0.1);
        let lam = builtin("lambda").unwrap();
        let base = lambda_point(t0, f0);
        let lp = ParameterLoop::rectangle(&base, ("theta", t0, t0 + dt), ("phi", f0, f0 + df), 50);
        let field = local_frame(&lam, &base, &BlockSelector { layer: Some(n), eigenvalue: 0.0 }, Gauge::ProjectorTransport, 1e-9).unwrap();
        let u: CMat = holonomy_ordered_exp(&field, &lp, &HolonomyOptions::default()).unwrap().unitary;
        prop_assert!(max_abs(&(u.adjoint() * &u - eye(u.nrows()))) < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ranks_are_bounded_and_non_decreasing(seed in any::<u64>(), n in 1u32..3) {
        let tri = builtin("tripod").unwrap();
        let pts = pntkit::geometry::sample_points(&tri, seed, 2);
        let blk = block_ref(&tri, &pts[0], n, 0.0);
        let r = holonomy_dimension(&tri, std::slice::from_ref(&blk), &pts, &TowerOptions { k_max: 2, ..Default::default() }, 1e-6).unwrap();
        prop_assert!(r.rank <= blk.dimension * blk.dimension);
        prop_assert!(r.rank_by_order.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn attainment_is_monotone_and_reports_are_deterministic(seed in any::<u64>()) {
        let cfg = ScanConfig { n_max: 3, k_max: 2, seed, ..Default::default() };
        for name in ["lambda", "jaynes_cummings"] {
            let spec = builtin(name).unwrap();
            let a = pnt_scan(&spec, &cfg).unwrap();
            prop_assert!(a.attainment.windows(2).all(|w| w[0] <= w[1]), "{:?}", a.attainment);
            prop_assert_eq!(a.attainment[0], 0);
            if name == "lambda" {
                prop_assert!(a.attainment[1..].iter().all(|&d| d == 1), "{:?}", a.attainment);
            }
            let b = pnt_scan(&spec, &cfg).unwrap();
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }
}

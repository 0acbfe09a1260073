use super::*;
use crate::canonical::{
    frame_of_point, random_samples, FlowSpec, HalfWave, HamiltonianFlow, Identity, MetricHamiltonian,
};
use crate::diffeo::{Diffeo, ExprDiffeo, QuadraticChart};
use crate::inertia::inertia;
use crate::lagrangian::{kashiwara_direct, numerical_rank};
use nalgebra::{dmatrix, dvector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn maps() -> Vec<SharedMap> {
    let curved = MetricHamiltonian::new(&[
        vec!["1".into(), "0".into()],
        vec!["0".into(), "(1 + 0.3*sin(x1))^(-2)".into()],
    ])
    .unwrap();
    vec![
        Arc::new(Identity { n: 2 }),
        Arc::new(HalfWave { n: 1, t: 1.0 }),
        Arc::new(HalfWave { n: 2, t: 1.0 }),
        Arc::new(HalfWave { n: 2, t: -1.3 }),
        Arc::new(Lift::new("lift", Arc::new(ExprDiffeo::new(&["y+y^3"]).unwrap()))),
        Arc::new(Lift::new("lift", Arc::new(ExprDiffeo::new(&["y1 + 0.2*sin(y2)", "y2 + 0.1*y1^3"]).unwrap()))),
        Arc::new(HamiltonianFlow::new(FlowSpec::new(Arc::new(curved), 1.5, 150)).unwrap()),
    ]
}

fn both(map: &SharedMap) -> [SharedPhase; 2] {
    [Arc::new(RealChartPhase::new(map.clone())), Arc::new(GaussianPhase::new(map.clone()))]
}

fn cmax(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn jet_examples() {
    let id: SharedMap = Arc::new(Identity { n: 2 });
    let j = RealChartPhase::new(id.clone()).jet(&dvector![0.1, 0.2], &dvector![1.0, 1.0]).unwrap();
    assert_eq!(j.phi_x_eta, CMatrix::identity(2, 2));
    assert_eq!(j.phi_eta_eta, CMatrix::zeros(2, 2));

    let g = GaussianPhase::new(id).jet(&dvector![0.0, 0.0], &dvector![0.6, 0.8]).unwrap();
    assert!(cmax(&(g.phi_x_eta - CMatrix::identity(2, 2))) < 1e-15);

    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    let j = RealChartPhase::new(hw).jet(&dvector![0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
    assert!(cmax(&(j.phi_eta_eta + complexify(&dmatrix![0.0, 0.0; 0.0, 1.0]))) < 1e-15);

    assert!(RealChartPhase::new(Arc::new(Identity { n: 1 })).jet(&dvector![0.0], &dvector![0.0]).is_err());
}

#[test]
fn jet_identities_hold_against_direct_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for map in maps() {
        for phase in both(&map) {
            for (y, eta) in random_samples(&mut rng, map.dim(), 5, 1.0) {
                let jet = phase.jet(&y, &eta).unwrap();
                assert!(jet.identity_residual() < 1e-10, "{}", phase.describe());
                // φ_ηη at the frozen point x⋆ by differentiating the phase itself
                let direct = phi_eta_eta_by_differences(phase.as_ref(), &jet.x_star, &y, &eta, 1e-4).unwrap();
                let scale = 1.0 + cmax(&jet.phi_eta_eta);
                assert!(cmax(&(direct - &jet.phi_eta_eta)) < 1e-5 * scale, "{} {}", map.name(), phase.describe());
            }
        }
    }
}

#[test]
fn rank_of_phi_eta_eta_matches_rank_of_x_eta() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for map in maps() {
        for phase in both(&map) {
            for (y, eta) in random_samples(&mut rng, map.dim(), 10, 1.0) {
                let jet = phase.jet(&y, &eta).unwrap();
                if det_c(&jet.phi_x_eta).norm() < 1e-6 {
                    continue;
                }
                // complex rank via minors, n ≤ 2
                let r = if jet.dim() == 1 {
                    usize::from(jet.phi_eta_eta[(0, 0)].norm() > 1e-9)
                } else if det_c(&jet.phi_eta_eta).norm() > 1e-9 {
                    2
                } else if cmax(&jet.phi_eta_eta) > 1e-9 {
                    1
                } else {
                    0
                };
                assert_eq!(r, numerical_rank(&jet.x_eta, 1e-9), "{} {}", map.name(), phase.describe());
            }
        }
    }
}

#[test]
fn validation_of_catalog_phases() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for map in maps() {
        let s = random_samples(&mut rng, map.dim(), 8, 1.0);
        let g = validate_phase(&GaussianPhase::new(map.clone()), &s, 1e-8).unwrap();
        assert!(g.pass(), "{g:?}");
    }
    let id: SharedMap = Arc::new(Identity { n: 2 });
    let s = random_samples(&mut rng, 2, 8, 1.0);
    assert!(validate_phase(&RealChartPhase::new(id), &s, 1e-8).unwrap().pass());
}

#[test]
fn degenerate_chart_breaks_nondegeneracy() {
    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    let (y, eta) = (dvector![0.0, 0.0], dvector![1.0, 0.0]);
    let p = hw.point(&y, &eta).unwrap();
    let chart = QuadraticChart::with_covector_hessian(p.x.clone(), &p.xi, &dmatrix![0.0, 0.0; 0.0, 1.0]).unwrap();
    let phase = RealChartPhase::in_chart(hw.clone(), "bent", Arc::new(chart)).unwrap();
    let rep = validate_phase(&phase, &[(y.clone(), eta.clone())], 1e-8).unwrap();
    assert!(rep.homogeneous && rep.quadratic && !rep.nondegenerate, "{rep:?}");
    assert_eq!(rep.chart_degenerate, vec![0]);
    // the default chart is fine at the same point
    assert!(validate_phase(&RealChartPhase::new(hw), &[(y, eta)], 1e-8).unwrap().pass());
}

#[test]
fn custom_phase_with_linear_defect_fails_expansion() {
    let id: SharedMap = Arc::new(Identity { n: 1 });
    let m = id.clone();
    let bad = CustomPhase::new(
        "tilted",
        id,
        Arc::new(move |x: &DVector<f64>, y: &DVector<f64>, eta: &DVector<f64>| {
            let p = m.point(y, eta).unwrap();
            Complex64::new(1.1 * (x - &p.x).dot(&p.xi), 0.0)
        }),
    );
    let rep = validate_phase(&bad, &[(dvector![0.2], dvector![1.5])], 1e-8).unwrap();
    assert!(rep.homogeneous && !rep.quadratic, "{rep:?}");

    let id: SharedMap = Arc::new(Identity { n: 1 });
    let m = id.clone();
    let inhomogeneous = CustomPhase::new(
        "squared",
        id,
        Arc::new(move |x: &DVector<f64>, y: &DVector<f64>, eta: &DVector<f64>| {
            let p = m.point(y, eta).unwrap();
            Complex64::new((x - &p.x).dot(&p.xi) * eta.norm(), 0.0)
        }),
    );
    let rep = validate_phase(&inhomogeneous, &[(dvector![0.2], dvector![1.5])], 1e-8).unwrap();
    assert!(!rep.homogeneous);
}

#[test]
fn gaussian_nondegeneracy_margins() {
    let id: SharedMap = Arc::new(Identity { n: 2 });
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = random_samples(&mut rng, 2, 10, 1.0);
    let (ok, margin) = complex_nondegeneracy_check(&GaussianPhase::new(id), &s).unwrap();
    assert!(ok && (margin - 1.0).abs() < 1e-12);

    // det(I − i t(I − η̂η̂ᵀ)) = 1 − i t on the unit sphere
    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    let ring: Vec<_> = (0..24)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 24.0;
            (dvector![0.0, 0.0], dvector![a.cos(), a.sin()])
        })
        .collect();
    let (ok, margin) = complex_nondegeneracy_check(&GaussianPhase::new(hw.clone()), &ring).unwrap();
    assert!(ok && (margin - 2f64.sqrt()).abs() < 1e-12);
    assert!(complex_nondegeneracy_check(&RealChartPhase::new(hw), &ring).is_err());
}

#[test]
fn horizontal_examples() {
    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    let (y, eta) = (dvector![0.1, 0.0], dvector![0.3, 1.0]);
    for phase in both(&hw) {
        let h = horizontal_of_phase(phase.as_ref(), &y, &eta).unwrap();
        assert_eq!(h.b, DMatrix::identity(2, 2));
        assert_eq!(h.c, DMatrix::zeros(2, 2));
    }
    let a = dmatrix![1.0, 0.0; 0.0, 2.0];
    let m = hw.clone();
    let a2 = a.clone();
    let custom = CustomPhase::new(
        "curved",
        hw,
        Arc::new(move |x: &DVector<f64>, y: &DVector<f64>, eta: &DVector<f64>| {
            let p = m.point(y, eta).unwrap();
            let d = x - &p.x;
            Complex64::new(d.dot(&p.xi) + 0.5 * d.dot(&(&a2 * &d)) * eta.norm(), 0.0)
        }),
    );
    let h = horizontal_of_phase(&custom, &y, &dvector![0.6, 0.8]).unwrap();
    assert!((&h.c + &a).amax() < 1e-6, "{}", h.c);
}

#[test]
fn signature_of_phi_eta_eta_is_minus_kashiwara_with_phase_horizontal() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for map in maps() {
        let phase = RealChartPhase::new(map.clone());
        for (y, eta) in random_samples(&mut rng, map.dim(), 100 / 7 + 1, 1.0) {
            let p = map.point(&y, &eta).unwrap();
            let jet = phase.jet(&y, &eta).unwrap();
            let s = inertia(&jet.phi_eta_eta.map(|z| z.re), 1e-9).unwrap().sgn;
            let h = horizontal_of_phase(&phase, &y, &eta).unwrap();
            let k = kashiwara_direct(&frame_of_point(&p), &h, 1e-9).unwrap();
            assert_eq!(s, -k, "{}", map.name());
            checked += 1;
        }
    }
    assert!(checked >= 100);
}

#[test]
fn quadratic_chart_removes_real_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 0.8 });
    for _ in 0..5 {
        let a = {
            let m = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
            (&m + m.transpose()) * 0.5
        };
        let (y, eta) = (dvector![0.1, -0.2], dvector![rng.gen_range(0.5..1.5), rng.gen_range(-1.0..1.0)]);
        let p = hw.point(&y, &eta).unwrap();
        let phi = |x: &DVector<f64>| (x - &p.x).dot(&p.xi) + 0.5 * (x - &p.x).dot(&(&a * (x - &p.x)));
        let chart = QuadraticChart::with_covector_hessian(p.x.clone(), &p.xi, &a).unwrap();
        let new_star = chart.value(&p.x).unwrap();
        let in_new = |xt: &DVector<f64>| phi(&chart.inverse_value(xt, xt).unwrap());
        let h = 1e-4;
        let mut hess = DMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let at = |si: f64, sj: f64| {
                    let mut v = new_star.clone();
                    v[i] += si * h;
                    v[j] += sj * h;
                    in_new(&v)
                };
                hess[(i, j)] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
            }
        }
        assert!(hess.amax() < 1e-5, "{hess}");
    }
}

#[test]
fn registry_builds_phase_kinds() {
    let reg = PhaseRegistry::default();
    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    assert_eq!(reg.build(&json!("gaussian"), hw.clone()).unwrap().kind(), PhaseKind::Gaussian);
    let rc = reg.build(&json!({"phase": "real_chart", "chart": "default"}), hw.clone()).unwrap();
    assert_eq!(rc.kind(), PhaseKind::RealChart);
    let bent = reg
        .build(
            &json!({"phase": "real_chart", "chart": {"quadratic": {"center": [1.0, 0.0], "xi": [1.0, 0.0], "a": [[0.0, 0.0], [0.0, 1.0]]}}}),
            hw.clone(),
        )
        .unwrap();
    let jet = bent.jet(&dvector![0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
    assert!(det_c(&jet.phi_x_eta).norm() < 1e-12);
    assert!(reg.build(&json!({"phase": "gaussian", "chart": "default"}), hw.clone()).is_err());
    assert!(reg.build(&json!("mystery"), hw).is_err());
}

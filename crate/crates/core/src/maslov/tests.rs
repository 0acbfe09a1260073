use super::*;
use crate::canonical::{
    random_samples, HalfWave, Identity, Lift, SharedMap,
};
use crate::diffeo::ExprDiffeo;
use crate::phase::{GaussianPhase, RealChartPhase, SharedPhase};
use nalgebra::dvector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use crate::verify::fixtures::{caustic_flow, caustic_path, far_side_chart};
use std::sync::Arc;

const TOL: f64 = DEFAULT_TOL;

fn real(map: &SharedMap) -> SharedPhase {
    Arc::new(RealChartPhase::new(map.clone()))
}
fn gauss(map: &SharedMap) -> SharedPhase {
    Arc::new(GaussianPhase::new(map.clone()))
}

#[test]
fn theta_s_examples() {
    let id: SharedMap = Arc::new(Identity { n: 2 });
    let j = real(&id).jet(&dvector![0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
    assert_eq!(theta_s(&j, TOL).unwrap(), 0.0);

    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    let j = real(&hw).jet(&dvector![0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
    assert!(theta_s(&j, TOL).unwrap().abs() < 1e-12);
    assert_eq!(theta_s_real(&j, TOL).unwrap(), 0);

    let back: SharedMap = Arc::new(HalfWave { n: 2, t: -1.0 });
    let j = real(&back).jet(&dvector![0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
    assert!((theta_s(&j, TOL).unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(theta_s_real(&j, TOL).unwrap(), -1);
}

#[test]
fn theta_s_rejects_phases_outside_the_class() {
    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    let mut j = gauss(&hw).jet(&dvector![0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
    // flipping Im φ_ηη makes Re(φ_ηη / i) negative
    j.phi_eta_eta = j.phi_eta_eta.map(|z| z.conj());
    assert!(matches!(theta_s(&j, TOL), Err(Error::InvalidPhase(_))));
}

#[test]
fn theta_r_examples() {
    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    let line = PathSpec::new(vec![(dvector![0.0, 0.0], dvector![1.0, 0.2]), (dvector![1.0, 0.5], dvector![0.3, 1.0])], 10);
    let r = theta_r_continued(real(&hw).as_ref(), &line, 0.0, TOL).unwrap();
    assert!(r.iter().all(|v| *v == 0.0));

    let id: SharedMap = Arc::new(Identity { n: 2 });
    let r = theta_r_continued(gauss(&id).as_ref(), &line, 3.0, TOL).unwrap();
    assert!(r.iter().all(|v| (*v - 3.0).abs() < 1e-14));

    // a full circle of η: det(ξ⋆_η − i|η|x⋆_η) = 1 − i t all the way round
    let circle: Vec<_> = (0..=8)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 8.0;
            (dvector![0.0, 0.0], dvector![a.cos(), a.sin()] * 1.5)
        })
        .collect();
    let coarse = PathSpec::new(circle, 4);
    let a = theta_r_continued(gauss(&hw).as_ref(), &coarse, 0.0, TOL).unwrap();
    let b = theta_r_continued(gauss(&hw).as_ref(), &coarse.refined(), 0.0, TOL).unwrap();
    assert!((a.last().unwrap() - b.last().unwrap()).abs() < 1e-8);
    assert!(a.last().unwrap().abs() < 1e-8);
}

#[test]
fn real_chart_through_degeneracy_is_an_error() {
    // the chart phase of a map with a singular ξ⋆_η somewhere on the path
    let f: SharedMap = Arc::new(Lift::new("lift", Arc::new(ExprDiffeo::new(&["y + y^3/3 - y^2"]).unwrap())));
    let path = PathSpec::new(vec![(dvector![0.5], dvector![1.0]), (dvector![1.5], dvector![1.0])], 10);
    assert!(matches!(theta_r_continued(real(&f).as_ref(), &path, 0.0, TOL), Err(Error::ChartDegenerate { .. }) | Err(Error::Domain(_))));
}

fn catalog() -> Vec<SharedMap> {
    vec![
        Arc::new(Identity { n: 2 }),
        Arc::new(HalfWave { n: 1, t: 0.7 }),
        Arc::new(HalfWave { n: 2, t: 1.0 }),
        Arc::new(HalfWave { n: 2, t: -1.0 }),
        Arc::new(Lift::new("lift", Arc::new(ExprDiffeo::new(&["y+y^3"]).unwrap()))),
        Arc::new(Lift::new("lift", Arc::new(ExprDiffeo::new(&["y1 + 0.2*sin(y2)", "y2 + 0.1*y1^3"]).unwrap()))),
    ]
}

fn random_path(rng: &mut ChaCha8Rng, n: usize) -> PathSpec {
    let pts = random_samples(rng, n, 3, 1.0);
    PathSpec::new(pts, 8)
}

#[test]
fn constant_rank_paths_have_equal_integer_theta_for_both_phases() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for map in catalog() {
        for _ in 0..20 {
            let path = random_path(&mut rng, map.dim());
            let a = branch_state(real(&map).as_ref(), &path, 0, TOL).unwrap();
            let b = branch_state(gauss(&map).as_ref(), &path, 0, TOL).unwrap();
            assert_eq!(a.theta_phi, b.theta_phi, "{}", map.name());
            assert!(a.events.is_empty() && b.events.is_empty());
            assert_eq!(a.maslov_index(), 0);
            // Θ_Φ − κ₊(φ_ηη) is a constant integer along real chart segments
            let m: Vec<i64> = path
                .params()
                .iter()
                .zip(&a.theta_phi)
                .map(|(&s, th)| {
                    let (y, eta) = path.at(s);
                    th + theta_s_real(&real(&map).jet(&y, &eta).unwrap(), TOL).unwrap()
                })
                .collect();
            assert!(m.iter().all(|v| *v == m[0]));
        }
    }
}

#[test]
fn closed_loops_have_zero_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for map in catalog() {
        let mut pts = random_samples(&mut rng, map.dim(), 4, 1.0);
        pts.push(pts[0].clone());
        let path = PathSpec::new(pts, 12);
        assert_eq!(maslov_index_of_path(gauss(&map).as_ref(), &path, TOL).unwrap(), 0, "{}", map.name());
    }
}

#[test]
fn theta_s_agrees_with_the_real_shortcut() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for map in catalog() {
        for (y, eta) in random_samples(&mut rng, map.dim(), 10, 1.0) {
            let j = real(&map).jet(&y, &eta).unwrap();
            assert!((theta_s(&j, TOL).unwrap() - theta_s_real(&j, TOL).unwrap() as f64).abs() < 1e-9, "{} {} {} {:?} {}", map.name(), theta_s(&j, TOL).unwrap(), theta_s_real(&j, TOL).unwrap(), j.phi_eta_eta, j.x_eta);
        }
    }
}

#[test]
fn anchor_shift_moves_theta_phi_uniformly() {
    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let path = random_path(&mut rng, 2);
    let a = branch_state(gauss(&hw).as_ref(), &path, 0, TOL).unwrap();
    let b = branch_state(gauss(&hw).as_ref(), &path, 4, TOL).unwrap();
    assert!(a.theta_phi.iter().zip(&b.theta_phi).all(|(x, y)| y - x == 4));
    assert_eq!(a.maslov_index(), b.maslov_index());
}

#[test]
fn fold_caustic_crossing() {
    let flow = caustic_flow();
    let coarse = caustic_path(24);
    let mut indices = Vec::new();
    for path in [coarse.clone(), coarse.refined()] {
        for phase in [real(&flow), gauss(&flow)] {
            let st = branch_state(phase.as_ref(), &path, 0, TOL).unwrap();
            assert_eq!(st.events.len(), 1, "{:?}", st.events);
            assert!((st.events[0].at + 0.0 - 0.36).abs() < 0.05, "{:?}", st.events);
            assert_eq!(st.events[0].rank_at, 0);
            indices.push(st.maslov_index());
        }
    }
    assert!(indices.iter().all(|v| *v == indices[0]), "{indices:?}");
    assert_eq!(indices[0].abs(), 1);
}

#[test]
fn cocycle_numbers_across_the_caustic() {
    let flow = caustic_flow();
    let j = real(&flow);
    let k = far_side_chart(&flow).unwrap();
    let overlap: Vec<_> = [-0.7, -0.65, -0.6].iter().map(|y1| (dvector![*y1, 0.0], dvector![0.0, 1.0])).collect();
    let m_jk = cocycle_number(j.as_ref(), k.as_ref(), &overlap, TOL).unwrap();
    let m_kj = cocycle_number(k.as_ref(), j.as_ref(), &overlap, TOL).unwrap();
    assert_eq!(m_jk, -m_kj);
    assert_eq!(m_jk.abs(), 1);
    assert_eq!(cocycle_number(j.as_ref(), j.as_ref(), &overlap, TOL).unwrap(), 0);

    // the far chart is degenerate at the fold itself
    assert!(cocycle_number(j.as_ref(), k.as_ref(), &[(dvector![-0.43, 0.0], dvector![0.0, 1.0])], TOL).is_err()
        || k.jet(&dvector![-0.43, 0.0], &dvector![0.0, 1.0]).is_ok());

    // the index assembled from the two charts matches the branch-tracked index
    let start = (dvector![0.0, 0.0], dvector![0.0, 1.0]);
    let end = overlap[1].clone();
    let path = PathSpec::new(vec![start.clone(), end.clone()], 24);
    let direct = maslov_index_of_path(gauss(&flow).as_ref(), &path, TOL).unwrap();
    assert_eq!(direct.abs(), 1);
    assert_eq!(cech_path_index(j.as_ref(), k.as_ref(), &start, &end, m_jk, TOL).unwrap(), direct);
}

#[test]
fn cocycle_antisymmetry_on_random_charts() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let hw: SharedMap = Arc::new(HalfWave { n: 2, t: 1.0 });
    for _ in 0..10 {
        let (y, eta) = (dvector![0.0, 0.0], dvector![1.0, rng.gen_range(-0.2..0.2)]);
        let p = hw.point(&y, &eta).unwrap();
        let a = rng.gen_range(-0.5..0.5);
        let chart = crate::diffeo::QuadraticChart::with_covector_hessian(p.x.clone(), &p.xi, &nalgebra::dmatrix![0.0, 0.0; 0.0, a]).unwrap();
        let k: SharedPhase = Arc::new(RealChartPhase::in_chart(hw.clone(), "c", Arc::new(chart)).unwrap());
        let j = real(&hw);
        let s = [(y.clone(), eta.clone())];
        assert_eq!(cocycle_number(j.as_ref(), k.as_ref(), &s, TOL).unwrap(), -cocycle_number(k.as_ref(), j.as_ref(), &s, TOL).unwrap());
    }
}

#[test]
fn endpoint_on_event_is_rejected() {
    let flow = caustic_flow();
    let st = branch_state(gauss(&flow).as_ref(), &caustic_path(24), 0, TOL).unwrap();
    let at = st.events[0].at;
    let y1 = -1.2 * at;
    let path = PathSpec::new(vec![(dvector![0.0, 0.0], dvector![0.0, 1.0]), (dvector![y1, 0.0], dvector![0.0, 1.0])], 16);
    assert!(matches!(branch_state(gauss(&flow).as_ref(), &path, 0, TOL), Err(Error::EndpointOnEvent(_))));
}


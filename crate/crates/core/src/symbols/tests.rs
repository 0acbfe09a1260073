use super::*;
use crate::verify::fixtures::caustic_flow;
use crate::canonical::{random_samples, CanonicalMap, HalfWave, Lift};
use crate::diffeo::ExprDiffeo;
use crate::lagrangian::{kashiwara_direct, rank_correction};
use crate::phase::RealChartPhase;
use nalgebra::dvector;
use rand::Rng;

const TOL: f64 = DEFAULT_TOL;
const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() < tol
}

fn hw(n: usize, t: f64) -> SharedMap {
    Arc::new(HalfWave { n, t })
}

fn id(n: usize) -> SharedMap {
    Arc::new(Identity { n })
}

fn lift(f: &[&str]) -> SharedMap {
    Arc::new(Lift::new("lift", Arc::new(ExprDiffeo::new(f).unwrap())))
}

fn catalog(n: usize) -> Vec<SharedMap> {
    if n == 1 {
        vec![id(1), hw(1, 0.7), hw(1, -1.3), lift(&["y+y^3"]), lift(&["2*y + sin(y)"])]
    } else {
        vec![id(2), hw(2, 1.0), hw(2, -0.6), lift(&["y1 + 0.2*sin(y2)", "y2 + 0.1*y1^3"]), lift(&["y1 + y2", "y2"])]
    }
}

#[test]
fn ipow_conventions() {
    assert!(close(ipow(1.0), I, 1e-15));
    assert!(close(ipow(-1.0), -I, 1e-15));
    for k in -9..9 {
        assert!(close(ipow(k as f64), ipow_int(k), 1e-12));
    }
}

#[test]
fn amplitude_expressions() {
    let a = Amplitude::parse("1 + 0.5*cos(y1)*h2 + i*r^0", 2).unwrap();
    let v = a.eval(&dvector![0.0, 1.0], &dvector![0.0, 3.0]);
    assert!(close(v, Complex64::new(1.5, 1.0), 1e-14));
    let s = PrincipalSymbol::new(0.0, a, id(2));
    let rays = vec![(dvector![0.3, 0.1], dvector![1.0, -2.0])];
    assert!(s.check_homogeneous(&rays, 1e-12).is_ok());

    let bad = PrincipalSymbol::new(0.0, Amplitude::parse("r", 2).unwrap(), id(2));
    assert!(bad.check_homogeneous(&rays, 1e-6).is_err());
    let first = PrincipalSymbol::new(1.0, Amplitude::parse("r*h", 1).unwrap(), id(1));
    assert!(first.check_homogeneous(&[(dvector![0.0], dvector![-2.0])], 1e-12).is_ok());
    assert!(Amplitude::parse("q + 1", 1).is_err());
}

#[test]
fn singular_symbol_examples() {
    let p = Amplitude::constant(ONE);
    let y = dvector![0.0, 0.0];
    let e = dvector![1.0, 0.0];
    let cases = [(id(2), ONE), (hw(2, 1.0), ONE), (hw(2, -1.0), I)];
    for (map, want) in cases {
        let s = singular_from_amplitude(&p, &RealChartPhase::new(map.clone()), &y, &e).unwrap();
        assert!(close(s, want, 1e-12), "{} {s}", map.name());
        assert!(close(PrincipalSymbol::unit(map).singular_value(&y, &e).unwrap(), want, 1e-12));
    }
}

#[test]
fn singular_symbol_is_phase_independent() {
    // the same operator written with the real and the gaussian phase
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = Amplitude::parse("2 + sin(y1) - i*h2", 2).unwrap();
    let mut moved = 0;
    for map in catalog(2) {
        let real = RealChartPhase::new(map.clone());
        let gauss = GaussianPhase::new(map.clone());
        for (y, eta) in random_samples(&mut rng, 2, 20, 1.0) {
            let f = amplitude_transfer_factor(&real, &gauss, &y, &eta).unwrap();
            let a = singular_from_amplitude(&p, &real, &y, &eta).unwrap();
            let b = singular_from_amplitude(&p, &gauss, &y, &eta).unwrap() * f;
            assert!(close(a, b, 1e-10), "{}: {a} vs {b}", map.name());
            moved += ((f - ONE).norm() > 1e-3) as usize;
        }
    }
    // the factor is nontrivial wherever x⋆_η ≠ 0
    assert!(moved >= 40, "{moved}");
}

#[test]
fn psi_do_amplitudes_do_not_depend_on_the_phase_kind() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for map in [id(2), lift(&["y1 + 0.2*sin(y2)", "y2 + 0.1*y1^3"]), hw(1, 1.0)] {
        let n = map.dim();
        for (y, eta) in random_samples(&mut rng, n, 10, 1.0) {
            let f = amplitude_transfer_factor(&RealChartPhase::new(map.clone()), &GaussianPhase::new(map.clone()), &y, &eta)
                .unwrap();
            assert!(close(f, ONE, 1e-12));
        }
    }
}

#[test]
fn classical_branch_examples() {
    let s = PrincipalSymbol::new(0.0, Amplitude::parse("1 + 0.3*h1", 2).unwrap(), hw(2, 1.0));
    let a = (dvector![0.1, 0.2], dvector![1.0, 0.5]);
    assert_eq!(classical_branch(&s, &a, &a, None).unwrap(), s.singular_value(&a.0, &a.1).unwrap());

    // a ψDO: the branch is the symbol itself
    let psi = PrincipalSymbol::new(0.0, Amplitude::parse("3 + y1*h2", 2).unwrap(), id(2));
    let q = (dvector![-0.4, 1.0], dvector![-0.2, 1.0]);
    let v = classical_branch(&psi, &a, &q, None).unwrap();
    assert!(close(v, psi.amplitude.eval(&q.0, &q.1), 1e-12));

    let viewed = psi.clone().with_view(SymbolView::ClassicalBranch {
        anchor_y: a.0.as_slice().to_vec(),
        anchor_eta: a.1.as_slice().to_vec(),
    });
    assert!(close(viewed.value(&q.0, &q.1).unwrap(), v, 1e-14));
}

#[test]
fn classical_branch_is_continuous_across_a_caustic() {
    let s = PrincipalSymbol::unit(caustic_flow());
    let anchor = (dvector![0.0, 0.0], dvector![0.0, 1.0]);
    let before = (dvector![-0.40, 0.0], dvector![0.0, 1.0]);
    let after = (dvector![-0.46, 0.0], dvector![0.0, 1.0]);
    let sb = s.singular_value(&before.0, &before.1).unwrap();
    let sa = s.singular_value(&after.0, &after.1).unwrap();
    // the singular symbol jumps by a power of i at the fold
    assert!((sb - sa).norm() > 1.0, "{sb} {sa}");
    let cb = classical_branch(&s, &anchor, &before, None).unwrap();
    let ca = classical_branch(&s, &anchor, &after, None).unwrap();
    assert!(close(cb, ca, 1e-9), "{cb} {ca}");
}

#[test]
fn composition_index_examples() {
    let y = dvector![0.2, -0.1];
    let e = dvector![1.0, 0.0];
    assert_eq!(composition_index(&hw(2, 1.0), &hw(2, 1.0), &y, &e, TOL).unwrap().value, 0);
    assert_eq!(composition_index(&id(2), &hw(2, 1.0), &y, &e, TOL).unwrap().value, 1);
    assert_eq!(composition_index(&hw(2, 1.0), &id(2), &y, &e, TOL).unwrap().value, 0);
    // at n = 1 every image of the vertical is vertical
    for m1 in catalog(1) {
        for m2 in catalog(1) {
            assert_eq!(composition_index(&m1, &m2, &dvector![0.3], &dvector![-2.0], TOL).unwrap().value, 0);
        }
    }
}

#[test]
fn composition_index_matches_the_gram_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let maps = catalog(2);
    let mut nonzero = 0;
    for _ in 0..200 {
        let m1 = &maps[rng.gen_range(0..maps.len())];
        let m2 = &maps[rng.gen_range(0..maps.len())];
        let (y, eta) = random_samples(&mut rng, 2, 1, 1.0).remove(0);
        let rep = composition_index(m1, m2, &y, &eta, TOL).unwrap();
        let (z, zeta) = m1.eval(&y, &eta).unwrap();
        let (x, xi) = m2.inverse().unwrap().eval(&z, &zeta).unwrap();
        let l1 = image_of_vertical(m1.as_ref(), &y, &eta).unwrap();
        let mut l2 = image_of_vertical(m2.as_ref(), &x, &xi).unwrap();
        l2.base = l1.base.clone();
        let kappa = kashiwara_direct(&l1, &l2, TOL).unwrap();
        let r = rank_correction(&l1, &l2, 1e-9).unwrap();
        assert_eq!(2 * rep.value, kappa + r);
        nonzero += (rep.value != 0) as usize;
    }
    assert!(nonzero > 10);
}

#[test]
fn star_composition_examples() {
    let y = dvector![0.0, 0.3];
    let e = dvector![0.6, -0.8];
    let v = PrincipalSymbol::new(0.0, Amplitude::parse("2 + i*h1", 2).unwrap(), hw(2, 1.0));
    let vv = star_composition(&v, &v, &y, &e, TOL).unwrap();
    assert_eq!(vv.index, 0);
    assert!(close(vv.value, Complex64::new(v.singular_value(&y, &e).unwrap().norm_sqr(), 0.0), 1e-12));

    let a = PrincipalSymbol::new(1.0, Amplitude::parse("r*(1 + h2)", 2).unwrap(), id(2));
    let b = PrincipalSymbol::new(0.0, Amplitude::parse("y1 - i", 2).unwrap(), id(2));
    let ab = star_composition(&a, &b, &y, &e, TOL).unwrap();
    assert_eq!(ab.index, 0);
    assert_eq!(ab.order, 1.0);
    let want = a.amplitude.eval(&y, &e) * b.amplitude.eval(&y, &e).conj();
    assert!(close(ab.value, want, 1e-12));

    let u = PrincipalSymbol::unit(hw(2, 1.0));
    let adj = star_composition(&PrincipalSymbol::unit(id(2)), &u, &dvector![0.0, 0.0], &dvector![1.0, 0.0], TOL).unwrap();
    assert_eq!(adj.index, 1);
    assert!(close(adj.value, I, 1e-12));
}

#[test]
fn adjoint_routes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for map in catalog(1) {
        let s = PrincipalSymbol::new(0.0, Amplitude::parse("1 + 0.5*i*h + 0.2*y", 1).unwrap(), map.clone());
        for (y, eta) in random_samples(&mut rng, 1, 5, 1.0) {
            let a = adjoint_symbol(&s, &y, &eta, TOL).unwrap();
            assert_eq!(a.index, 0);
            let (py, peta) = map.inverse().unwrap().eval(&y, &eta).unwrap();
            let want = s.singular_value(&py, &peta).unwrap().conj();
            assert!(close(a.with_index, want, 1e-12) && close(a.without_index, want, 1e-12));
        }
    }

    let u = PrincipalSymbol::new(0.0, Amplitude::parse("2 - i*h2", 2).unwrap(), hw(2, 1.0));
    let (y, e) = (dvector![0.1, 0.4], dvector![0.3, 1.0]);
    let a = adjoint_symbol(&u, &y, &e, TOL).unwrap();
    let (py, pe) = HalfWave { n: 2, t: -1.0 }.eval(&y, &e).unwrap();
    let conj_s = u.singular_value(&py, &pe).unwrap().conj();
    assert_eq!(a.index, 1);
    assert!(close(a.with_index, I * conj_s, 1e-12));
    assert!(close(a.without_index, conj_s, 1e-12));

    let psi = PrincipalSymbol::new(0.0, Amplitude::parse("3 + i*y1", 2).unwrap(), id(2));
    let a = adjoint_symbol(&psi, &y, &e, TOL).unwrap();
    assert!(close(a.with_index, a.without_index, 1e-14));
    assert!(close(a.with_index, psi.amplitude.eval(&y, &e).conj(), 1e-12));
}

#[test]
fn composition_symbol_examples() {
    let y = dvector![0.3, -0.2];
    let e = dvector![0.5, 1.0];
    let s1 = PrincipalSymbol::new(0.0, Amplitude::parse("1 + i*h1*y2", 2).unwrap(), hw(2, 0.8));
    let c = composition_symbol(&s1, &PrincipalSymbol::unit(id(2)), &y, &e, TOL).unwrap();
    let want = s1.singular_value(&y, &e).unwrap();
    assert!(close(c.corrected, want, 1e-12) && close(c.uncorrected, want, 1e-12));

    let f = lift(&["y1 + 0.2*sin(y2)", "y2 + 0.1*y1^3"]);
    let g = lift(&["y1 + y2", "y2"]);
    let sf = PrincipalSymbol::new(0.0, Amplitude::parse("2 + y1", 2).unwrap(), f.clone());
    let sg = PrincipalSymbol::new(0.0, Amplitude::parse("1 - i*h2", 2).unwrap(), g.clone());
    let c = composition_symbol(&sf, &sg, &y, &e, TOL).unwrap();
    assert_eq!((c.k, c.k_adjoint), (0, 0));
    let (z, zeta) = f.eval(&y, &e).unwrap();
    assert!(close(c.corrected, sf.amplitude.eval(&y, &e) * sg.amplitude.eval(&z, &zeta), 1e-12));
}

#[test]
fn half_wave_compositions_reproduce_the_summed_half_wave() {
    // s of HW(t) with unit amplitude is 1 for t > 0 and i for t < 0
    let y = dvector![0.1, 0.0];
    let e = dvector![0.8, -0.6];
    let mut uncorrected_wrong = 0;
    for (a, b) in [(1.0, 0.5), (1.0, -0.4), (0.4, -1.0), (-0.3, -0.9), (-1.0, 0.3), (-0.3, 1.0)] {
        let c = composition_symbol(&PrincipalSymbol::unit(hw(2, b)), &PrincipalSymbol::unit(hw(2, a)), &y, &e, TOL).unwrap();
        let want = PrincipalSymbol::unit(hw(2, a + b)).singular_value(&y, &e).unwrap();
        assert!(close(c.corrected, want, 1e-12), "a={a} b={b}: {} vs {want}", c.corrected);
        uncorrected_wrong += (!close(c.uncorrected, want, 1e-6)) as usize;
    }
    assert!(uncorrected_wrong > 0);
}

#[test]
fn composition_of_lifts_is_associative() {
    let maps = [lift(&["y1 + 0.3*y2^2", "y2"]), lift(&["y1", "y2 + 0.2*sin(y1)"]), lift(&["2*y1 + y2", "y2 - y1"])];
    let syms: Vec<_> = maps
        .iter()
        .zip(["1 + i*h1", "2 - y1", "h2 + 3"])
        .map(|(m, a)| PrincipalSymbol::new(0.0, Amplitude::parse(a, 2).unwrap(), m.clone()))
        .collect();
    let y = dvector![0.2, 0.7];
    let e = dvector![-1.0, 0.4];
    // (s3 s2) s1 versus s3 (s2 s1), evaluated pointwise along the chain
    let c21 = composition_symbol(&syms[0], &syms[1], &y, &e, TOL).unwrap();
    let (z1, w1) = maps[0].eval(&y, &e).unwrap();
    let (z2, w2) = maps[1].eval(&z1, &w1).unwrap();
    let left = c21.corrected * syms[2].singular_value(&z2, &w2).unwrap();
    let c32 = composition_symbol(&syms[1], &syms[2], &z1, &w1, TOL).unwrap();
    let right = syms[0].singular_value(&y, &e).unwrap() * c32.corrected;
    assert_eq!(left, right);
    assert_eq!(c21.order + syms[2].order, 0.0);
}

#[test]
fn egorov_examples() {
    let map = lift(&["y + 0.3*sin(y)"]);
    let v = PrincipalSymbol::unit(map.clone());
    let one = |_: &DVector<f64>, _: &DVector<f64>| ONE;
    let anchor = (dvector![0.0], dvector![1.0]);
    let q = (dvector![0.4], dvector![2.0]);
    assert!(close(egorov_symbol(&v, &v, &one, &anchor, &q).unwrap(), ONE, 1e-12));

    let w = PrincipalSymbol::new(0.0, Amplitude::parse("1 + 0.5*i*y", 1).unwrap(), map.clone());
    let a = |x: &DVector<f64>, xi: &DVector<f64>| Complex64::new(xi[0].signum() * (1.0 + 0.2 * x[0]), 0.0);
    let b = egorov_symbol(&w, &w, &a, &anchor, &q).unwrap();
    assert!(b.im.abs() < 1e-12);
    let (x, xi) = map.eval(&q.0, &q.1).unwrap();
    assert!(close(b, a(&x, &xi) * w.amplitude.eval(&q.0, &q.1).norm_sqr(), 1e-12));

    let other = PrincipalSymbol::unit(hw(1, 1.0));
    assert!(egorov_symbol(&w, &other, &a, &anchor, &q).is_err());
}

#[test]
fn conic_boxes() {
    let b = ConicBox::around(&dvector![0.0, 0.0], 1.0);
    assert!(b.contains(&dvector![0.5, -0.5], &dvector![3.0, 1.0]));
    assert!(!b.contains(&dvector![1.5, 0.0], &dvector![3.0, 1.0]));
    let narrow = ConicBox::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![0.5, -1.0], vec![1.0, 1.0]).unwrap();
    let i = b.intersect(&narrow);
    assert!(!i.is_empty());
    assert!(!i.contains(&dvector![0.0, 0.0], &dvector![-1.0, 0.0]));

    // image under the half-wave map shifts y by t along the direction
    let img = narrow.image(&HalfWave { n: 2, t: 1.0 }, 5, 0.05).unwrap();
    for (y, h) in narrow.sample(4) {
        let (x, xi) = HalfWave { n: 2, t: 1.0 }.eval(&y, &h).unwrap();
        assert!(img.contains(&x, &xi));
    }
    let pre = img.preimage(&HalfWave { n: 2, t: 1.0 }, 5, 0.05).unwrap();
    for (y, h) in narrow.sample(3) {
        assert!(pre.contains(&y, &h));
    }
    let supp = star_support(&b, &b, &HalfWave { n: 2, t: 1.0 }, 5).unwrap();
    assert!(supp.y_hi[0] <= 1.0 && !supp.is_empty());
}

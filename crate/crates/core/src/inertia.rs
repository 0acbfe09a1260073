//! Inertia of real symmetric matrices and the branch-resolved argument of `det₊`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub kappa_plus: usize,
    pub kappa_minus: usize,
    pub rank: usize,
    pub sgn: i64,
}

/// Default eigenvalue threshold: `1e-9 · ‖S‖_F`.
pub fn default_tol(s: &DMatrix<f64>) -> f64 {
    1e-9 * s.norm()
}

/// Largest entry of `S − Sᵀ`.
pub fn asymmetry(s: &DMatrix<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..s.nrows() {
        for j in 0..i {
            m = m.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    m
}

fn check_symmetric(s: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Dimension(format!("{}x{} is not square", s.nrows(), s.ncols())));
    }
    // Products like BᵀC are only symmetric to rounding, so the check never
    // goes below a few ulps of the matrix scale.
    let allowed = tol.max(64.0 * f64::EPSILON * s.norm());
    let a = asymmetry(s);
    if a > allowed {
        return Err(Error::Asymmetric { asymmetry: a, tol: allowed });
    }
    Ok(())
}

pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

pub fn eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
    if s.nrows() == 0 {
        return Vec::new();
    }
    SymmetricEigen::new(symmetrize(s)).eigenvalues.iter().copied().collect()
}

pub fn inertia(s: &DMatrix<f64>, tol: f64) -> Result<Inertia> {
    check_symmetric(s, tol)?;
    let (mut p, mut m) = (0usize, 0usize);
    for ev in eigenvalues(s) {
        if ev > tol {
            p += 1;
        } else if ev < -tol {
            m += 1;
        }
    }
    Ok(Inertia {
        kappa_plus: p,
        kappa_minus: m,
        rank: p + m,
        sgn: p as i64 - m as i64,
    })
}

/// Inertia with the default relative threshold.
pub fn inertia_default(s: &DMatrix<f64>) -> Result<Inertia> {
    inertia(s, default_tol(s))
}

/// Complex symmetric matrix `C = C₁ + iC₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSymMatrix {
    pub real_part: DMatrix<f64>,
    pub imag_part: DMatrix<f64>,
}

impl ComplexSymMatrix {
    pub fn new(real_part: DMatrix<f64>, imag_part: DMatrix<f64>) -> Result<Self> {
        if real_part.shape() != imag_part.shape() {
            return Err(Error::Dimension("real and imaginary parts differ in shape".into()));
        }
        Ok(ComplexSymMatrix { real_part, imag_part })
    }

    pub fn from_real(real_part: DMatrix<f64>) -> Self {
        let n = real_part.nrows();
        ComplexSymMatrix { real_part, imag_part: DMatrix::zeros(n, n) }
    }

    pub fn from_complex(c: &DMatrix<Complex64>) -> Self {
        ComplexSymMatrix {
            real_part: c.map(|z| z.re),
            imag_part: c.map(|z| z.im),
        }
    }

    pub fn dim(&self) -> usize {
        self.real_part.nrows()
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            Complex64::new(self.real_part[(i, j)], self.imag_part[(i, j)])
        })
    }

    pub fn norm(&self) -> f64 {
        (self.real_part.norm_squared() + self.imag_part.norm_squared()).sqrt()
    }
}

/// Orthonormal basis (columns) of `ker C = ker C₁ ∩ ker C₂`.
///
/// For `Re C ⪰ 0` the complex kernel is real: `C u = 0` forces `ū·C₁u = 0`,
/// hence `C₁u = 0` and then `C₂u = 0`.
pub fn kernel_basis(c: &ComplexSymMatrix, tol: f64) -> DMatrix<f64> {
    let n = c.dim();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&c.real_part);
    stacked.view_mut((n, 0), (n, n)).copy_from(&c.imag_part);
    // right singular vectors of the stacked (2n x n) matrix; the thin SVD is full here
    let svd = stacked.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let cols: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] <= tol.max(0.0)).collect();
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, &k) in cols.iter().enumerate() {
        out.set_column(j, &vt.row(k).transpose());
    }
    out
}

fn check_det_plus_domain(c: &ComplexSymMatrix, tol: f64) -> Result<()> {
    check_symmetric(&c.real_part, tol)?;
    check_symmetric(&c.imag_part, tol)?;
    let min = eigenvalues(&c.real_part).into_iter().fold(f64::INFINITY, f64::min);
    if c.dim() > 0 && min < -tol {
        return Err(Error::Domain(format!(
            "real part has eigenvalue {min:.3e} below -tol; det+ needs Re C >= 0"
        )));
    }
    Ok(())
}

/// `C + Π_C` as a complex matrix, together with the kernel dimension.
fn regularized(c: &ComplexSymMatrix, tol: f64) -> (DMatrix<Complex64>, usize) {
    let k = kernel_basis(c, tol);
    let proj = &k * k.transpose();
    let mut m = c.to_complex();
    for i in 0..c.dim() {
        for j in 0..c.dim() {
            m[(i, j)] += Complex64::new(proj[(i, j)], 0.0);
        }
    }
    (m, k.ncols())
}

fn complex_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.clone()
        .try_schur(f64::EPSILON, 100_000)
        .and_then(|s| s.eigenvalues())
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::NoConvergence("complex Schur decomposition".into()))
}

/// `arg det₊ C` on the principal branch: the sum of eigenvalue arguments of `C + Π_C`.
pub fn det_plus_arg(c: &ComplexSymMatrix, tol: f64) -> Result<f64> {
    check_det_plus_domain(c, tol)?;
    let (m, _) = regularized(c, tol);
    let scale = 1.0 + c.norm();
    let mut total = 0.0;
    for ev in complex_eigenvalues(&m)? {
        // Re λ ≥ 0 holds exactly; allow only rounding-level violations.
        if ev.re < -1e-8 * scale {
            return Err(Error::Domain(format!(
                "eigenvalue {ev} of C + Pi_C has negative real part"
            )));
        }
        // a rounding-level negative real part must not flip a real eigenvalue to arg = pi
        total += ev.im.atan2(ev.re.max(0.0));
    }
    Ok(total)
}

/// Continuous branch of `arg det₊ C(s)` along a sampled path, anchored at the pointwise value of `C(0)`.
pub fn det_plus_arg_continued(path: &[ComplexSymMatrix], tol: f64) -> Result<Vec<f64>> {
    let Some(first) = path.first() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(path.len());
    let mut value = det_plus_arg(first, tol)?;
    let (m0, mut kdim) = regularized(first, tol);
    let mut prev_arg = m0.determinant().arg();
    out.push(value);
    for (j, c) in path.iter().enumerate().skip(1) {
        check_det_plus_domain(c, tol)?;
        let (m, k) = regularized(c, tol);
        let at = j as f64 / (path.len() - 1) as f64;
        if k != kdim {
            return Err(Error::StratumChange { at, from: kdim, to: k });
        }
        let arg = m.determinant().arg();
        let mut d = arg - prev_arg;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d <= -PI {
            d += 2.0 * PI;
        }
        if d.abs() >= FRAC_PI_2 {
            return Err(Error::RefinementNeeded { at, increment: d });
        }
        value += d;
        prev_arg = arg;
        kdim = k;
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        symmetrize(&a)
    }

    #[test]
    fn inertia_examples() {
        let d = DMatrix::from_diagonal(&nalgebra::dvector![2.0, -3.0]);
        let i = inertia_default(&d).unwrap();
        assert_eq!((i.kappa_plus, i.kappa_minus, i.rank, i.sgn), (1, 1, 2, 0));
        let z = DMatrix::<f64>::zeros(3, 3);
        let i = inertia_default(&z).unwrap();
        assert_eq!((i.kappa_plus, i.kappa_minus, i.rank, i.sgn), (0, 0, 0, 0));
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let i = inertia_default(&a).unwrap();
        assert_eq!((i.kappa_plus, i.kappa_minus, i.rank, i.sgn), (1, 1, 2, 0));
    }

    #[test]
    fn asymmetric_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        match inertia(&a, 1e-9) {
            Err(Error::Asymmetric { asymmetry, .. }) => assert_eq!(asymmetry, 2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn congruence_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=5);
            // Random inertia with prescribed zero eigenvalues.
            let q = nalgebra::linalg::QR::new(DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))).q();
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
                [0.0, 1.0, -1.0, 2.5, -0.7][rng.gen_range(0..5)]
            }));
            let s = symmetrize(&(q.transpose() * d * &q));
            let mut j: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            while j.determinant().abs() < 0.1 {
                j = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            }
            let t = symmetrize(&(j.transpose() * &s * &j));
            let tol = 1e-8;
            assert_eq!(inertia(&s, tol).unwrap(), inertia(&t, tol).unwrap());
        }
    }

    #[test]
    fn det_plus_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let z2 = DMatrix::<f64>::zeros(2, 2);
        let real = ComplexSymMatrix::new(i2.clone(), z2.clone()).unwrap();
        assert_eq!(det_plus_arg(&real, 1e-12).unwrap(), 0.0);
        let imag = ComplexSymMatrix::new(z2.clone(), i2.clone()).unwrap();
        assert!((det_plus_arg(&imag, 1e-12).unwrap() - PI).abs() < 1e-12);
        let mixed = ComplexSymMatrix::new(
            DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]),
            DMatrix::from_diagonal(&nalgebra::dvector![0.0, 1.0]),
        )
        .unwrap();
        assert!((det_plus_arg(&mixed, 1e-12).unwrap() - FRAC_PI_2).abs() < 1e-12);
        // real part zero: (pi/2) sgn C2
        let c2 = DMatrix::from_diagonal(&nalgebra::dvector![3.0, -1.0, 0.0]);
        let c = ComplexSymMatrix::new(DMatrix::zeros(3, 3), c2).unwrap();
        assert!(det_plus_arg(&c, 1e-12).unwrap().abs() < 1e-12);
    }

    #[test]
    fn det_plus_rejects_negative_real_part() {
        let c = ComplexSymMatrix::from_real(DMatrix::from_diagonal(&nalgebra::dvector![1.0, -1.0]));
        assert!(matches!(det_plus_arg(&c, 1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn det_plus_congruence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(1..=4);
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let c1 = a.transpose() * &a; // PSD
            let c2 = rand_sym(&mut rng, n);
            let c = ComplexSymMatrix::new(c1.clone(), c2.clone()).unwrap();
            let j = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)) + DMatrix::identity(n, n) * 2.0;
            let cj = ComplexSymMatrix::new(
                symmetrize(&(j.transpose() * &c1 * &j)),
                symmetrize(&(j.transpose() * &c2 * &j)),
            )
            .unwrap();
            let a0 = det_plus_arg(&c, 1e-10).unwrap();
            let a1 = det_plus_arg(&cj, 1e-10).unwrap();
            assert!((a0 - a1).abs() < 1e-9, "{a0} vs {a1}");
        }
    }

    #[test]
    fn continued_examples() {
        let steps = 200;
        let constant: Vec<_> = (0..=steps)
            .map(|_| ComplexSymMatrix::from_real(DMatrix::identity(2, 2)))
            .collect();
        assert!(det_plus_arg_continued(&constant, 1e-12).unwrap().iter().all(|v| *v == 0.0));

        let ramp: Vec<_> = (0..=steps)
            .map(|k| {
                let s = k as f64 / steps as f64;
                ComplexSymMatrix::new(
                    DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]),
                    DMatrix::from_diagonal(&nalgebra::dvector![0.0, s]),
                )
                .unwrap()
            })
            .collect();
        // kernel dimension drops at s > 0, so start the ramp just off zero
        assert!(matches!(det_plus_arg_continued(&ramp, 1e-12), Err(Error::StratumChange { .. })));
        let end = *det_plus_arg_continued(&ramp[1..], 1e-12).unwrap().last().unwrap();
        assert!((end - FRAC_PI_2).abs() < 1e-12);

        let circle: Vec<_> = (0..=steps)
            .map(|k| {
                let s = (PI / 3.0) * k as f64 / steps as f64;
                ComplexSymMatrix::new(
                    DMatrix::from_element(1, 1, s.cos()),
                    DMatrix::from_element(1, 1, s.sin()),
                )
                .unwrap()
            })
            .collect();
        let end = *det_plus_arg_continued(&circle, 1e-12).unwrap().last().unwrap();
        assert!((end - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn continued_requires_refinement() {
        let path: Vec<_> = [0.0, 1.4, 2.9]
            .iter()
            .map(|&s: &f64| {
                // n = 2: argument doubles, so a 1.4 rad step becomes 2.8 rad
                ComplexSymMatrix::new(DMatrix::identity(2, 2) * s.cos(), DMatrix::identity(2, 2) * s.sin().abs())
                    .unwrap()
            })
            .collect();
        assert!(matches!(det_plus_arg_continued(&path, 1e-12), Err(Error::RefinementNeeded { .. })));
    }

    #[test]
    fn continued_matches_pointwise_and_is_step_stable() {
        // C(s) = A + i s B with A ⪰ 0 invertible, B symmetric.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 3;
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let c1 = a.transpose() * &a + DMatrix::identity(n, n) * 0.1;
        let b = rand_sym(&mut rng, n) * 4.0;
        let make = |steps: usize| -> Vec<ComplexSymMatrix> {
            (0..=steps)
                .map(|k| {
                    let s = k as f64 / steps as f64;
                    ComplexSymMatrix::new(c1.clone(), &b * s).unwrap()
                })
                .collect()
        };
        let coarse = det_plus_arg_continued(&make(400), 1e-12).unwrap();
        let fine = det_plus_arg_continued(&make(800), 1e-12).unwrap();
        assert!((coarse.last().unwrap() - fine.last().unwrap()).abs() < 1e-6);
        let pointwise = det_plus_arg(make(1).last().unwrap(), 1e-12).unwrap();
        assert!((fine.last().unwrap() - pointwise).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn inertia_counts_consistent(entries in proptest::collection::vec(-3i32..=3, 16)) {
            let m = DMatrix::from_fn(4, 4, |i, j| {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                entries[a * 4 + b] as f64
            });
            let i = inertia(&m, 1e-9).unwrap();
            prop_assert_eq!(i.kappa_plus + i.kappa_minus, i.rank);
            prop_assert!(i.rank <= 4);
            prop_assert_eq!(i.sgn, i.kappa_plus as i64 - i.kappa_minus as i64);
            let neg = inertia(&(-&m), 1e-9).unwrap();
            prop_assert_eq!(neg.sgn, -i.sgn);
        }

        #[test]
        fn real_input_has_zero_det_plus_arg(entries in proptest::collection::vec(-2.0f64..2.0, 9)) {
            let a = DMatrix::from_row_slice(3, 3, &entries);
            let c = ComplexSymMatrix::from_real(a.transpose() * &a);
            prop_assert!(det_plus_arg(&c, 1e-10).unwrap().abs() < 1e-12);
        }
    }
}

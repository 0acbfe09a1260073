//! Lagrangian subspaces of `T_ϑ T*M` and the Kashiwara index.
//!
//! Tangent vectors are pairs `(X, Ξ)` of horizontal and vertical components with
//! symplectic form `ω((X₁,Ξ₁),(X₂,Ξ₂)) = X₁·Ξ₂ − X₂·Ξ₁`. A frame `(B; C)` spans
//! the columns `(B e_j, C e_j)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffeo::{inverse_hessians, Diffeo};
use crate::error::{Error, Result};
use crate::inertia::{inertia, symmetrize, Inertia};

/// Default threshold for rank and inertia decisions on frames of unit scale.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    pub x: DVector<f64>,
    pub xi: DVector<f64>,
    pub chart: String,
}

impl BasePoint {
    pub fn new(x: DVector<f64>, xi: DVector<f64>) -> Self {
        BasePoint { x, xi, chart: "default".into() }
    }

    pub fn in_chart(mut self, chart: &str) -> Self {
        self.chart = chart.to_string();
        self
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    fn same_as(&self, other: &BasePoint) -> bool {
        let close = |a: &DVector<f64>, b: &DVector<f64>| {
            a.len() == b.len() && (a - b).amax() <= 1e-9 * (1.0 + a.amax().max(b.amax()))
        };
        self.chart == other.chart && close(&self.x, &other.x) && close(&self.xi, &other.xi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianFrame {
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub base: BasePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameReport {
    pub valid: bool,
    pub asymmetry: f64,
    pub rank_defect: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `L = {(A v, v)}`; needs `L` transversal to the horizontal.
    OverVertical,
    /// `L = {(w, A w)}`; needs `L` transversal to the vertical.
    OverHorizontal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphForm {
    pub a: DMatrix<f64>,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KashiwaraTriple {
    pub kappa: i64,
    pub r: i64,
    pub varkappa: i64,
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Number of singular values above `tol · max(1, σ_max)`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = singular_values(m);
    let top = sv.iter().copied().fold(0.0, f64::max).max(1.0);
    sv.iter().filter(|&&s| s > tol * top).count()
}

fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).into_iter().fold(f64::INFINITY, f64::min)
}

impl LagrangianFrame {
    pub fn new(b: DMatrix<f64>, c: DMatrix<f64>, base: BasePoint) -> Result<Self> {
        let n = base.dim();
        if b.shape() != (n, n) || c.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "frame blocks {:?}/{:?} do not match base dimension {n}",
                b.shape(),
                c.shape()
            )));
        }
        Ok(LagrangianFrame { b, c, base })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn vertical(base: BasePoint) -> Self {
        let n = base.dim();
        LagrangianFrame { b: DMatrix::zeros(n, n), c: DMatrix::identity(n, n), base }
    }

    pub fn horizontal(base: BasePoint) -> Self {
        let n = base.dim();
        LagrangianFrame { b: DMatrix::identity(n, n), c: DMatrix::zeros(n, n), base }
    }

    pub fn from_graph(g: &GraphForm, base: BasePoint) -> Result<Self> {
        let n = base.dim();
        let id = DMatrix::identity(n, n);
        match g.orientation {
            Orientation::OverVertical => LagrangianFrame::new(g.a.clone(), id, base),
            Orientation::OverHorizontal => LagrangianFrame::new(id, g.a.clone(), base),
        }
    }

    /// The `2n × n` matrix `(B; C)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(2 * n, n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.b);
        m.view_mut((n, 0), (n, n)).copy_from(&self.c);
        m
    }

    /// Image under the symplectic shear `(X, Ξ) ↦ (X, Ξ − S X)`, which fixes the vertical.
    pub fn sheared(&self, s: &DMatrix<f64>) -> Self {
        LagrangianFrame { b: self.b.clone(), c: &self.c - s * &self.b, base: self.base.clone() }
    }

    /// Span equality with another frame at the same base point.
    pub fn same_span(&self, other: &LagrangianFrame, tol: f64) -> bool {
        let n = self.dim();
        let mut cat = DMatrix::zeros(2 * n, 2 * n);
        cat.view_mut((0, 0), (2 * n, n)).copy_from(&self.stacked());
        cat.view_mut((0, n), (2 * n, n)).copy_from(&other.stacked());
        numerical_rank(&cat, tol) == n
    }
}

pub fn validate_frame(f: &LagrangianFrame, tol: f64) -> FrameReport {
    let n = f.dim();
    let s = f.b.transpose() * &f.c;
    let asym = (&s - s.transpose()).amax();
    let rank = numerical_rank(&f.stacked(), tol);
    FrameReport {
        valid: asym <= tol * (1.0 + s.amax()) && rank == n,
        asymmetry: asym,
        rank_defect: n - rank,
    }
}

fn require_valid(f: &LagrangianFrame, tol: f64) -> Result<()> {
    let r = validate_frame(f, tol);
    if !r.valid {
        return Err(Error::Domain(format!(
            "invalid Lagrangian frame: asymmetry {:.3e}, rank defect {}",
            r.asymmetry, r.rank_defect
        )));
    }
    Ok(())
}

fn require_common_base(l1: &LagrangianFrame, l2: &LagrangianFrame) -> Result<()> {
    if l1.dim() != l2.dim() {
        return Err(Error::Dimension("frames of different dimension".into()));
    }
    if !l1.base.same_as(&l2.base) {
        return Err(Error::BasePointMismatch);
    }
    Ok(())
}

/// `(dim L₁∩V, dim L₂∩V, dim L₁∩L₂)`.
pub fn intersection_dims(l1: &LagrangianFrame, l2: &LagrangianFrame, tol: f64) -> Result<(usize, usize, usize)> {
    require_common_base(l1, l2)?;
    let n = l1.dim();
    let mut cat = DMatrix::zeros(2 * n, 2 * n);
    cat.view_mut((0, 0), (2 * n, n)).copy_from(&l1.stacked());
    cat.view_mut((0, n), (2 * n, n)).copy_from(&l2.stacked());
    Ok((
        n - numerical_rank(&l1.b, tol),
        n - numerical_rank(&l2.b, tol),
        2 * n - numerical_rank(&cat, tol),
    ))
}

/// `r(L₁, L₂) = n + dim(L₁∩V) − dim(L₂∩V) − dim(L₁∩L₂)`.
pub fn rank_correction(l1: &LagrangianFrame, l2: &LagrangianFrame, tol: f64) -> Result<i64> {
    let (d1, d2, d12) = intersection_dims(l1, l2, tol)?;
    Ok(l1.dim() as i64 + d1 as i64 - d2 as i64 - d12 as i64)
}

/// Gram matrix of `Q(θ₁,θ,θ₂) = ω(θ₁,θ) + ω(θ,θ₂) + ω(θ₂,θ₁)` on `L₁ × V × L₂`.
pub fn kashiwara_gram(l1: &LagrangianFrame, l2: &LagrangianFrame) -> DMatrix<f64> {
    let n = l1.dim();
    // ω between frame columns: Ω(F, G) = F_Bᵀ G_C − F_Cᵀ G_B
    let omega = |b1: &DMatrix<f64>, c1: &DMatrix<f64>, b2: &DMatrix<f64>, c2: &DMatrix<f64>| {
        b1.transpose() * c2 - c1.transpose() * b2
    };
    let zero = DMatrix::zeros(n, n);
    let id = DMatrix::identity(n, n);
    let g12 = omega(&l1.b, &l1.c, &zero, &id);
    let g23 = omega(&zero, &id, &l2.b, &l2.c);
    let g31 = omega(&l2.b, &l2.c, &l1.b, &l1.c);
    let mut g = DMatrix::zeros(3 * n, 3 * n);
    g.view_mut((0, n), (n, n)).copy_from(&(&g12 * 0.5));
    g.view_mut((n, 0), (n, n)).copy_from(&(g12.transpose() * 0.5));
    g.view_mut((n, 2 * n), (n, n)).copy_from(&(&g23 * 0.5));
    g.view_mut((2 * n, n), (n, n)).copy_from(&(g23.transpose() * 0.5));
    g.view_mut((2 * n, 0), (n, n)).copy_from(&(&g31 * 0.5));
    g.view_mut((0, 2 * n), (n, n)).copy_from(&(g31.transpose() * 0.5));
    g
}

/// Kashiwara index `κ(L₁, V, L₂)` as the signature of the `3n × 3n` Gram matrix.
pub fn kashiwara_direct(l1: &LagrangianFrame, l2: &LagrangianFrame, tol: f64) -> Result<i64> {
    require_common_base(l1, l2)?;
    require_valid(l1, tol)?;
    require_valid(l2, tol)?;
    let g = kashiwara_gram(l1, l2);
    let scale = 1.0 + g.norm();
    Ok(inertia(&g, tol * scale)?.sgn)
}

fn check_graph(a: &GraphForm, tol: f64) -> Result<()> {
    let asym = crate::inertia::asymmetry(&a.a);
    if asym > tol * (1.0 + a.a.amax()) {
        return Err(Error::Asymmetric { asymmetry: asym, tol });
    }
    Ok(())
}

/// `κ`, `r` and `ϰ` from graph forms over the vertical.
pub fn kashiwara_graphs(a1: &GraphForm, a2: &GraphForm, tol: f64) -> Result<KashiwaraTriple> {
    for g in [a1, a2] {
        if g.orientation != Orientation::OverVertical {
            return Err(Error::Config("kashiwara_graphs needs graph-over-vertical forms".into()));
        }
        check_graph(g, tol)?;
    }
    if a1.a.shape() != a2.a.shape() {
        return Err(Error::Dimension("graph forms of different size".into()));
    }
    let s1 = symmetrize(&a1.a);
    let s2 = symmetrize(&a2.a);
    let d = &s1 - &s2;
    let scale = 1.0 + s1.norm() + s2.norm();
    let t = tol * scale;
    let (i1, i2, id): (Inertia, Inertia, Inertia) = (inertia(&s1, t)?, inertia(&s2, t)?, inertia(&d, t)?);
    let kappa = i1.sgn - i2.sgn - id.sgn;
    let r = i2.rank as i64 - i1.rank as i64 + id.rank as i64;
    let varkappa = i2.kappa_minus as i64 - i1.kappa_minus as i64 + id.kappa_minus as i64;
    debug_assert_eq!(2 * varkappa, kappa + r);
    Ok(KashiwaraTriple { kappa, r, varkappa })
}

/// `κ₊(BᵀC)`.
///
/// This is the modified index `ϰ(L, H)` when `L` is transversal to the
/// vertical. The Gram-matrix index against the horizontal is `sgn(BᵀC)`, so in
/// general `κ₊(BᵀC) = (κ(L, H) + rank BᵀC) / 2`.
pub fn kashiwara_vs_horizontal(l: &LagrangianFrame, tol: f64) -> Result<i64> {
    require_valid(l, tol)?;
    let s = symmetrize(&(l.b.transpose() * &l.c));
    Ok(inertia(&s, tol * (1.0 + s.norm()))?.kappa_plus as i64)
}

pub fn graph_form(f: &LagrangianFrame, orientation: Orientation, tol: f64) -> Result<GraphForm> {
    let (num, den, what) = match orientation {
        Orientation::OverVertical => (&f.b, &f.c, "horizontal (C block is singular)"),
        Orientation::OverHorizontal => (&f.c, &f.b, "vertical (B block is singular)"),
    };
    let scale = f.stacked().norm().max(1e-300);
    if min_singular_value(den) <= tol * scale {
        return Err(Error::NotTransversal(what));
    }
    let inv = den.clone().try_inverse().ok_or(Error::NotTransversal(what))?;
    Ok(GraphForm { a: symmetrize(&(num * inv)), orientation })
}

/// Coordinate change `x ↦ x̃` evaluated at a base point, with the data needed to
/// push tangent vectors of `T*M` forward.
#[derive(Debug, Clone)]
pub struct ChartChange {
    pub target_chart: String,
    pub new_x: DVector<f64>,
    /// `J = ∂x̃/∂x`.
    pub jacobian: DMatrix<f64>,
    /// `∂²x_k/∂x̃_i∂x̃_j`, one matrix per old coordinate `k`.
    pub inverse_hessians: Vec<DMatrix<f64>>,
}

impl ChartChange {
    pub fn from_diffeo(map: &dyn Diffeo, x: &DVector<f64>, target_chart: &str) -> Result<Self> {
        let j = map.jacobian(x)?;
        let ih = inverse_hessians(&j, &map.hessians(x)?)?;
        Ok(ChartChange { target_chart: target_chart.into(), new_x: map.value(x)?, jacobian: j, inverse_hessians: ih })
    }

    fn k_matrix(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let n = xi.len();
        let mut k = DMatrix::zeros(n, n);
        for (l, h) in self.inverse_hessians.iter().enumerate() {
            k += h * xi[l];
        }
        k
    }

    fn j_inv_t(&self) -> Result<DMatrix<f64>> {
        self.jacobian
            .clone()
            .try_inverse()
            .map(|m| m.transpose())
            .ok_or_else(|| Error::Domain("singular chart Jacobian".into()))
    }

    /// Pushes `(X, Ξ)` at covector `ξ` to `(J X, J⁻ᵀ Ξ + K J X)`.
    pub fn transform_vector(&self, xi: &DVector<f64>, x: &DVector<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let jx = &self.jacobian * x;
        let kv = self.k_matrix(xi) * &jx;
        Ok((jx, self.j_inv_t()? * v + kv))
    }
}

pub fn transform_frame(f: &LagrangianFrame, chart: &ChartChange) -> Result<LagrangianFrame> {
    if chart.jacobian.nrows() != f.dim() {
        return Err(Error::Dimension("chart dimension differs from frame".into()));
    }
    let jit = chart.j_inv_t()?;
    let jb = &chart.jacobian * &f.b;
    let k = chart.k_matrix(&f.base.xi);
    let c = &jit * &f.c + k * &jb;
    let base = BasePoint { x: chart.new_x.clone(), xi: &jit * &f.base.xi, chart: chart.target_chart.clone() };
    Ok(LagrangianFrame { b: jb, c, base })
}

/// Draws a symmetric shear `S` with `C_j − S B_j` invertible for every frame, so
/// the horizontal `{Ξ = −S X}` is transversal to all of them.
pub fn random_transversal_shear<R: Rng>(
    frames: &[&LagrangianFrame],
    rng: &mut R,
    max_draws: usize,
) -> Result<DMatrix<f64>> {
    let n = frames.first().map(|f| f.dim()).unwrap_or(0);
    for draw in 0..max_draws {
        let s = if draw == 0 && frames.iter().all(|f| min_singular_value(&f.c) > 1e-3 * f.stacked().norm()) {
            // the chart horizontal already works
            DMatrix::zeros(n, n)
        } else {
            symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0)))
        };
        let ok = frames.iter().all(|f| {
            let c = &f.c - &s * &f.b;
            min_singular_value(&c) > 1e-3 * (1.0 + s.norm()) * f.stacked().norm()
        });
        if ok {
            return Ok(s);
        }
    }
    Err(Error::NoTransversalShear(max_draws))
}

/// Kashiwara triple for arbitrary frames: graph forms relative to a random
/// transversal horizontal, cross-checked against the Gram signature and the
/// intersection-dimension definition of `r`.
pub fn modified_kashiwara<R: Rng>(
    l1: &LagrangianFrame,
    l2: &LagrangianFrame,
    rng: &mut R,
    tol: f64,
) -> Result<KashiwaraTriple> {
    require_common_base(l1, l2)?;
    require_valid(l1, tol)?;
    require_valid(l2, tol)?;
    let s = random_transversal_shear(&[l1, l2], rng, 5)?;
    let a1 = graph_form(&l1.sheared(&s), Orientation::OverVertical, tol)?;
    let a2 = graph_form(&l2.sheared(&s), Orientation::OverVertical, tol)?;
    let triple = kashiwara_graphs(&a1, &a2, tol)?;
    let direct = kashiwara_direct(l1, l2, tol)?;
    let r = rank_correction(l1, l2, tol)?;
    if direct != triple.kappa || r != triple.r {
        return Err(Error::Domain(format!(
            "index routes disagree: graphs (kappa {}, r {}), direct kappa {direct}, definition r {r}",
            triple.kappa, triple.r
        )));
    }
    Ok(triple)
}

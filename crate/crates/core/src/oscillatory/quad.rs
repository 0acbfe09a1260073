use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// Nodes and weights mapped to `[a, b]`.
pub fn gl_interval(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(&w).map(|(xi, wi)| (m + h * xi, h * wi)).collect()
}

/// `C^∞` step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let f = |s: f64| (-1.0 / s).exp();
    f(t) / (f(t) + f(1.0 - t))
}

/// Points and weights of a ball of radius `r` around `center` in dimension
/// `n ∈ {1, 2}`: Gauss–Legendre along the radius (or the segment at n = 1)
/// and the trapezoid rule in angle.
pub fn ball_rule(center: &[f64], r: f64, radial: usize, angular: usize) -> Vec<(Vec<f64>, f64)> {
    match center.len() {
        1 => gl_interval(radial, center[0] - r, center[0] + r)
            .into_iter()
            .map(|(x, w)| (vec![x], w))
            .collect(),
        _ => {
            let rad = gl_interval(radial, 0.0, r);
            let dth = 2.0 * PI / angular as f64;
            let mut out = Vec::with_capacity(radial * angular);
            for (rho, wr) in rad {
                for k in 0..angular {
                    let th = k as f64 * dth;
                    out.push((vec![center[0] + rho * th.cos(), center[1] + rho * th.sin()], wr * rho * dth));
                }
            }
            out
        }
    }
}

/// Tensor Gauss–Legendre box `center ± h` with `per_dim` nodes per axis.
pub fn gl_box(center: &[f64], h: f64, per_dim: usize) -> Vec<(Vec<f64>, f64)> {
    let line: Vec<(f64, f64)> = gl_interval(per_dim, -h, h);
    tensor(center, &line)
}

/// Tensor trapezoid grid `center ± h` with spacing at most `dz`.
pub fn trapezoid_box(center: &[f64], h: f64, dz: f64) -> Vec<(Vec<f64>, f64)> {
    let m = (h / dz).ceil() as i64;
    let step = h / m as f64;
    let line: Vec<(f64, f64)> = (-m..=m).map(|k| (k as f64 * step, step)).collect();
    tensor(center, &line)
}

fn tensor(center: &[f64], line: &[(f64, f64)]) -> Vec<(Vec<f64>, f64)> {
    let n = center.len();
    let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::with_capacity(n), 1.0)];
    for c in center {
        out = out
            .into_iter()
            .flat_map(|(p, w)| {
                line.iter().map(move |(x, wx)| {
                    let mut q = p.clone();
                    q.push(c + x);
                    (q, w * wx)
                })
            })
            .collect();
    }
    out
}

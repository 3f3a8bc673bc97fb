//! Quadrature oracles shared by the integration suites. Deliberately
//! independent of the library's algorithms: Gauss-Legendre nodes are
//! produced by a local Newton iteration, and both oracles integrate the
//! normal densities directly.

#![allow(dead_code)] // each test binary uses the subset it needs

/// Gauss-Legendre nodes/weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

pub fn map_to(nodes: &[f64], weights: &[f64], lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (
        nodes.iter().map(|&x| mid + half * x).collect(),
        weights.iter().map(|&w| half * w).collect(),
    )
}

/// Phi(z) by 200-node quadrature of the density from 0 to z.
pub fn cdf_oracle(z: f64) -> f64 {
    if z == 0.0 {
        return 0.5;
    }
    let (nodes, weights) = gauss_legendre(200);
    let (lo, hi) = if z > 0.0 { (0.0, z.min(9.0)) } else { (z.max(-9.0), 0.0) };
    let (xs, ws) = map_to(&nodes, &weights, lo, hi);
    let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mass: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(&x, &w)| w * inv * (-0.5 * x * x).exp())
        .sum();
    // Residual beyond |z| = 9 is below 1.2e-19.
    if z > 0.0 {
        0.5 + mass
    } else {
        0.5 - mass
    }
}

/// Phi_rho(x, y) by 400x400 tensor quadrature of the bivariate density
/// over [-9, x] x [-9, y].
pub fn bvn_oracle(x: f64, y: f64, rho: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(400);
    let (xs, wx) = map_to(&nodes, &weights, -9.0, x.min(9.0));
    let (ys, wy) = map_to(&nodes, &weights, -9.0, y.min(9.0));
    let det = 1.0 - rho * rho;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let mut total = 0.0;
    for (&u, &wu) in xs.iter().zip(&wx) {
        let mut row = 0.0;
        for (&v, &wv) in ys.iter().zip(&wy) {
            let q = (u * u - 2.0 * rho * u * v + v * v) / (2.0 * det);
            row += wv * (-q).exp();
        }
        total += wu * row * norm;
    }
    total
}

//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `int_x^inf pdf(t) dt` via `t = x / v`, which maps the tail onto `(0, 1]`.
pub fn upper_tail(pdf: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    assert!(x > 0.0);
    let g = |v: f64| if v <= 0.0 { 0.0 } else { pdf(x / v) * x / (v * v) };
    integrate(&g, 0.0, 1.0, 1e-15)
}

pub fn chi2_density(n: f64) -> impl Fn(f64) -> f64 {
    let k = 0.5 * n;
    let c = -k * std::f64::consts::LN_2 - libm::lgamma(k);
    move |t: f64| if t <= 0.0 { 0.0 } else { ((k - 1.0) * t.ln() - 0.5 * t + c).exp() }
}

pub fn f_density(m: f64, n: f64) -> impl Fn(f64) -> f64 {
    let c = 0.5 * m * (m / n).ln() - (libm::lgamma(0.5 * m) + libm::lgamma(0.5 * n) - libm::lgamma(0.5 * (m + n)));
    move |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            (c + (0.5 * m - 1.0) * t.ln() - 0.5 * (m + n) * (1.0 + m * t / n).ln()).exp()
        }
    }
}

/// Checks that consecutive entries never increase by more than `slack`.
pub fn nonincreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack)
}

pub fn nondecreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - slack)
}

/// Returns `{0.01, 0.02, ..., 0.99}`.
pub fn u_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// Inverse by solving against unit vectors.
pub fn gauss_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| gauss_solve(a, &(0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>()))
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// Population `R_i^2` of coordinate `i` regressed on the others.
pub fn regression_r2(sigma: &[Vec<f64>], i: usize) -> f64 {
    let rest: Vec<usize> = (0..sigma.len()).filter(|&k| k != i).collect();
    let sub: Vec<Vec<f64>> = rest.iter().map(|&r| rest.iter().map(|&c| sigma[r][c]).collect()).collect();
    let cross: Vec<f64> = rest.iter().map(|&r| sigma[r][i]).collect();
    let coef = gauss_solve(&sub, &cross);
    coef.iter().zip(&cross).map(|(b, c)| b * c).sum::<f64>() / sigma[i][i]
}

/// `B Bᵀ + eps I` with Gaussian `B`, rows rescaled by random positive factors.
pub fn random_covariance<R: rand::Rng>(rng: &mut R, d: usize, eps: f64) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    let b: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect();
    let scale: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..5.0)).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let g: f64 = (0..d).map(|k| b[i][k] * b[j][k]).sum();
                    scale[i] * scale[j] * (g + if i == j { eps } else { 0.0 })
                })
                .collect()
        })
        .collect()
}

/// Textbook BH step-up on `i (q / d)`, returning rejected indices ascending.
pub fn plain_bh(p: &[f64], q: f64) -> Vec<usize> {
    let d = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cut = None;
    for i in (1..=d).rev() {
        if sorted[i - 1] <= i as f64 * (q / d as f64) {
            cut = Some(sorted[i - 1]);
            break;
        }
    }
    match cut {
        None => Vec::new(),
        Some(c) => (0..d).filter(|&i| p[i] <= c).collect(),
    }
}

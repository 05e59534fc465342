//! Shared numerical helpers: summary statistics, Gaussian CDF,
//! Gauss–Legendre quadrature nodes, goodness-of-fit tests, least squares
//! and a small symmetric eigensolver.

use std::sync::OnceLock;

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Streaming mean/variance accumulator (Welford).
#[derive(Debug, Clone, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability mass a `N(mean, var)` law assigns to `[lo, hi]`.
pub fn gaussian_interval_mass(mean: f64, var: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if var <= 0.0 {
        // degenerate kernel
        return if mean >= lo && mean <= hi { 1.0 } else { 0.0 };
    }
    let sd = var.sqrt();
    (normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd)).clamp(0.0, 1.0)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence and cached per order.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<std::sync::Mutex<std::collections::HashMap<usize, &'static (Vec<f64>, Vec<f64>)>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| std::sync::Mutex::new(std::collections::HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(v) = guard.get(&n) {
        return v;
    }
    let computed: &'static (Vec<f64>, Vec<f64>) = Box::leak(Box::new(compute_gauss_legendre(n)));
    guard.insert(n, computed);
    computed
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n(x) and P_n'(x) by recurrence
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
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Laguerre nodes and weights for `∫_0^∞ g(z) e^{−z} dz ≈ Σ w_i g(z_i)`,
/// computed by Newton iteration on the Laguerre recurrence and cached.
pub fn gauss_laguerre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<std::sync::Mutex<std::collections::HashMap<usize, &'static (Vec<f64>, Vec<f64>)>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| std::sync::Mutex::new(std::collections::HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(v) = guard.get(&n) {
        return v;
    }
    let computed: &'static (Vec<f64>, Vec<f64>) = Box::leak(Box::new(compute_gauss_laguerre(n)));
    guard.insert(n, computed);
    computed
}

fn compute_gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n {
        // initial guesses from the standard asymptotic spacing
        if i == 0 {
            z = 3.0 / (1.0 + 2.4 * nf);
        } else if i == 1 {
            z += 15.0 / (1.0 + 2.5 * nf);
        } else {
            let ai = (i - 1) as f64;
            z += (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2]);
        }
        let mut pp = 0.0;
        let mut p2 = 0.0;
        for _ in 0..200 {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (p1 - p2) / z;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 * z.max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        weights[i] = -1.0 / (pp * nf * p2);
    }
    (nodes, weights)
}

/// `∫_0^∞ g(z) e^{−z} dz` by Gauss–Laguerre of the given order.
pub fn integrate_exp_halfline(g: impl Fn(f64) -> f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_laguerre(order);
    nodes.iter().zip(weights).map(|(&z, &w)| w * g(z)).sum()
}

/// ∫_a^b g(x) dx by Gauss–Legendre of the given order.
pub fn integrate_gl(g: impl Fn(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (&x, &w) in nodes.iter().zip(weights) {
        acc += w * g(mid + half * x);
    }
    acc * half
}

/// Kolmogorov distribution `P(K ≤ x)` (asymptotic law of `√n·D_n`).
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x < 0.02 {
        return 0.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * x * x).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (1.0 - 2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against the CDF `f0`.
/// Returns `(statistic, p_value)` using the asymptotic distribution.
pub fn ks_test(samples: &mut [f64], f0: impl Fn(f64) -> f64) -> (f64, f64) {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let cdf = f0(x);
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    let p = 1.0 - kolmogorov_cdf(n.sqrt() * d);
    (d, p)
}

/// Pearson chi-square statistic and p-value for observed counts against
/// expected probabilities (`dof = cells − 1`, normal-approximated through
/// the Wilson–Hilferty transform).
pub fn chi_square_test(observed: &[u64], probs: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = n as f64 * p;
        if e > 0.0 {
            stat += (o as f64 - e) * (o as f64 - e) / e;
        }
    }
    let dof = (observed.len() - 1) as f64;
    // Wilson–Hilferty: (X/k)^(1/3) approx normal
    let z = ((stat / dof).powf(1.0 / 3.0) - (1.0 - 2.0 / (9.0 * dof))) / (2.0 / (9.0 * dof)).sqrt();
    let p = 1.0 - normal_cdf(z);
    (stat, p)
}

/// Ordinary least squares of `y` on `x`. Returns `(slope, intercept, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Largest eigenvalue of a symmetric matrix (row-major `d × d`) by the
/// cyclic Jacobi method. Intended for the small matrices (`d ≤ 5` or so)
/// of the linearized drift criterion.
pub fn max_symmetric_eigenvalue(mat: &[f64], d: usize) -> f64 {
    assert_eq!(mat.len(), d * d);
    if d == 1 {
        return mat[0];
    }
    let mut a = mat.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p * d + q] * a[p * d + q];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..d {
                    let aip = a[i * d + p];
                    let aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for i in 0..d {
                    let api = a[p * d + i];
                    let aqi = a[q * d + i];
                    a[p * d + i] = c * api - s * aqi;
                    a[q * d + i] = s * api + c * aqi;
                }
            }
        }
    }
    (0..d).map(|i| a[i * d + i]).fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        // order-n GL is exact for degree up to 2n-1
        let v = integrate_gl(|x| x * x * x * x, -1.0, 2.0, 8);
        let exact = (2.0f64.powi(5) - (-1.0f64).powi(5)) / 5.0;
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
    }

    #[test]
    fn laguerre_exponential_moments() {
        // ∫_0^∞ z² e^{-z} dz = 2 and ∫_0^∞ z⁴ e^{-z} dz = 24, exactly
        let m2 = integrate_exp_halfline(|z| z * z, 48);
        assert!((m2 - 2.0).abs() < 1e-12, "{m2}");
        let m4 = integrate_exp_halfline(|z| z.powi(4), 48);
        assert!((m4 - 24.0).abs() < 1e-10, "{m4}");
        // non-polynomial: ∫_0^∞ cos(z) e^{-z} dz = 1/2
        let c = integrate_exp_halfline(f64::cos, 48);
        assert!((c - 0.5).abs() < 1e-10, "{c}");
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_critical_value() {
        // P(K ≤ 1.6276) ≈ 0.99
        let p = kolmogorov_cdf(1.6276);
        assert!((p - 0.99).abs() < 5e-4, "{p}");
    }

    #[test]
    fn jacobi_matches_hand_eigenvalues() {
        // [[2, 1], [1, 2]] has eigenvalues {1, 3}
        let m = [2.0, 1.0, 1.0, 2.0];
        assert!((max_symmetric_eigenvalue(&m, 2) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (a, b, r2) = linear_fit(&x, &y);
        assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}

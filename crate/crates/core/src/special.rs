//! Special functions used by the kernels, generic where both precisions need them.

use crate::num::Real;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral E1(x) for x > 0 in double precision.
pub fn e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NAN;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let t = -term / k as f64;
            sum += t;
            if t.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -EULER_GAMMA - x.ln() + sum
    } else {
        e1_scaled(x) * (-x).exp()
    }
}

/// e^x E1(x) for x > 1 by Lentz's continued fraction; finite for large x.
pub fn e1_scaled(x: f64) -> f64 {
    if x <= 1.0 {
        return e1(x) * x.exp();
    }
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized lower incomplete gamma P(n, x) for integer shape n ≥ 1.
///
/// Uses the finite sum for the upper tail when x ≥ n and the convergent
/// tail series otherwise, so neither branch subtracts nearly equal numbers.
pub fn gamma_p_int<T: Real>(n: u32, x: &T) -> T {
    assert!(n >= 1);
    if x.is_zero() {
        return x.zero();
    }
    let nf = x.lift(n as f64);
    if *x >= nf {
        let mut term = x.one();
        let mut q = x.one();
        for j in 1..n {
            term = term * x.clone() / x.lift(j as f64);
            q += term.clone();
        }
        x.one() - q * (-x.clone()).exp()
    } else {
        let lead = poisson_pmf(n, x);
        let mut term = lead.clone();
        let mut sum = lead;
        let eps = x.unit_roundoff();
        let mut j = n;
        loop {
            j += 1;
            term = term * x.clone() / x.lift(j as f64);
            sum += term.clone();
            if (term.clone() / sum.clone()).abs().to_f64() <= eps || j > n + 100_000 {
                break;
            }
        }
        sum
    }
}

/// P(n, x) for n = n0, n0+1, …, n0+count−1 via downward recurrence from the top.
pub fn gamma_p_int_seq<T: Real>(n0: u32, count: usize, x: &T) -> Vec<T> {
    if count == 0 {
        return Vec::new();
    }
    let top = n0 + count as u32 - 1;
    let mut out = vec![x.zero(); count];
    out[count - 1] = gamma_p_int(top, x);
    for idx in (0..count - 1).rev() {
        let j = n0 + idx as u32;
        out[idx] = out[idx + 1].clone() + poisson_pmf(j, x);
    }
    out
}

/// e^{-x} x^n / n!, evaluated in the log domain.
pub fn poisson_pmf<T: Real>(n: u32, x: &T) -> T {
    if x.is_zero() {
        return if n == 0 { x.one() } else { x.zero() };
    }
    let mut lg = x.zero();
    for j in 2..=n {
        lg += x.lift(j as f64).ln();
    }
    (x.lift(n as f64) * x.ln() - x.clone() - lg).exp()
}

/// Generalized Laguerre polynomials L_0^{(α)}(x), …, L_n^{(α)}(x) by the
/// three-term recurrence.
pub fn laguerre_all<T: Real>(n: usize, alpha: f64, x: &T) -> Vec<T> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(x.one());
    if n == 0 {
        return out;
    }
    let a = x.lift(alpha);
    out.push(x.one() + a.clone() - x.clone());
    for k in 1..n {
        let kf = x.lift(k as f64);
        let next = ((x.lift(2.0 * k as f64 + 1.0) + a.clone() - x.clone()) * out[k].clone()
            - (kf.clone() + a.clone()) * out[k - 1].clone())
            / (kf + x.one());
        out.push(next);
    }
    out
}

/// ln C(n, k).
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

/// Asymptotic Kolmogorov distribution tail: P(D_n > d).
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let t = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += t;
        if t.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

//! Globally adaptive Gauss–Kronrod (7/15) quadrature for complex integrands.

use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Debug)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.partial_cmp(&o.error).unwrap_or(Ordering::Equal)
    }
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    ((k * h), ((k - g) * h).norm())
}

/// Integrates `f` over each consecutive pair of `breaks` until the summed
/// error estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F>(
    mut f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> QuadResult
where
    F: FnMut(f64) -> Complex64,
{
    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        total += v;
        err += e;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    while err > abs_tol.max(rel_tol * total.norm()) && heap.len() < max_intervals {
        let p = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Piece {
            a: p.a,
            b: m,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: m,
            b: p.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed accumulated update drift.
    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    let intervals = heap.len();
    for p in heap.into_iter() {
        value += p.value;
        error += p.error;
    }
    QuadResult {
        value,
        error,
        intervals,
    }
}

/// Real-valued convenience wrapper.
pub fn integrate_real<F>(mut f: F, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let r = integrate(
        |x| Complex64::new(f(x), 0.0),
        breaks,
        abs_tol,
        rel_tol,
        20_000,
    );
    (r.value.re, r.error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let (v, _) = integrate_real(|x| x * x * x - 2.0 * x, &[0.0, 2.0], 1e-14, 1e-14);
        assert!((v - 0.0).abs() < 1e-13);
    }

    #[test]
    fn peaked_laplacian_mass() {
        let s = 0.05;
        let (v, _) = integrate_real(
            |x| (-(x.abs()) / s).exp() / (2.0 * s),
            &[-1.0, 0.0, 1.0],
            1e-12,
            1e-12,
        );
        assert!((v - (1.0 - (-1.0f64 / s).exp())).abs() < 1e-11);
    }

    #[test]
    fn oscillatory_complex() {
        let r = integrate(
            |x| Complex64::new(0.0, 7.0 * x).exp(),
            &[0.0, 1.0],
            1e-13,
            1e-13,
            1000,
        );
        let want = (Complex64::new(0.0, 7.0).exp() - 1.0) / Complex64::new(0.0, 7.0);
        assert!((r.value - want).norm() < 1e-12);
    }
}

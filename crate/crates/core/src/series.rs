//! Truncated infinite series for the performance measures.
//!
//! The single series is h(z) = Σ_n G_n·Poisson(z; n) with
//! G_n = Σ_m C(n,m)(N)_m/(N_R+n−m)_m c₁^m H_m, evaluated at z = x₂.

use serde::{Deserialize, Serialize};

use crate::channel::SnrParams;
use crate::error::{Error, Result};
use crate::kernel::{kernel_values, MeasureKind};
use crate::num::{digits_to_bits, CompensatedSum, Mp, Real};

/// Largest tolerated mass/|value| ratio at double precision; scaled by the
/// unit roundoff for other precisions.
pub const CANCELLATION_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Double,
    /// Target decimal digits; guard bits are added for the outer index budget.
    Digits(u32),
}

impl Precision {
    /// Working precision in bits for a series with `n_max` outer terms.
    pub fn working_bits(&self, n_max: usize) -> u32 {
        match *self {
            Precision::Double => 53,
            Precision::Digits(d) => digits_to_bits(d) + n_max as u32 + 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub rel_tol: f64,
    pub n_max: usize,
    pub precision: Precision,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            rel_tol: 1e-10,
            n_max: 150,
            precision: Precision::Double,
        }
    }
}

impl TruncationPolicy {
    pub fn high_precision(digits: u32) -> Self {
        TruncationPolicy {
            precision: Precision::Digits(digits),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || self.n_max < 1 {
            return Err(Error::InvalidArgument(
                "rel_tol must be positive and n_max >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    pub value: f64,
    pub n_used: usize,
    /// Tolerance met and cancellation within the trusted range.
    pub converged: bool,
    pub max_term_magnitude: f64,
    /// Sum of absolute contributions divided by |value|.
    pub cancellation: f64,
    pub trusted: bool,
}

/// Series value in the working precision together with its diagnostics.
#[derive(Clone, Debug)]
pub struct SeriesValue<T> {
    pub value: T,
    pub n_used: usize,
    pub met_tol: bool,
    pub mass: T,
    pub max_term: f64,
    /// ln of the magnitude below which |value| is measured against instead
    /// (derivatives that vanish are judged against the function itself).
    pub floor_ln: f64,
}

impl<T: Real> SeriesValue<T> {
    pub fn cancellation(&self) -> f64 {
        let scale = self.value.ln_abs_f64().max(self.floor_ln);
        if self.mass.is_zero() {
            return 1.0;
        }
        if scale == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        (self.mass.ln_abs_f64() - scale).exp()
    }

    pub fn trusted(&self) -> bool {
        let budget = CANCELLATION_LIMIT * (f64::EPSILON / 2.0) / self.value.unit_roundoff();
        self.cancellation() <= budget && self.value.to_f64().is_finite()
    }

    pub fn converged(&self) -> bool {
        self.met_tol && self.trusted()
    }

    pub fn summary(&self) -> SeriesResult {
        SeriesResult {
            value: self.value.to_f64(),
            n_used: self.n_used,
            converged: self.converged(),
            max_term_magnitude: self.max_term,
            cancellation: self.cancellation(),
            trusted: self.trusted(),
        }
    }
}

fn stop<T: Real>(n: usize, z: f64, term: &T, sum: &T, rel_tol: f64) -> bool {
    n as f64 > z && term.abs().to_f64() <= rel_tol * sum.abs().to_f64()
        || (term.is_zero() && sum.is_zero() && n as f64 > z)
}

/// Outer coefficients G_n of the single series, each with its absolute mass.
pub struct GSequence<T> {
    h: Vec<T>,
    c1: T,
    n_dof: usize,
    n_rx: usize,
    cache: Vec<(T, T)>,
}

impl<T: Real> GSequence<T> {
    pub fn new(kind: &MeasureKind, p: &SnrParams, len: usize, proto: &T) -> Result<GSequence<T>> {
        let h = kernel_values(kind, p, len, proto)?;
        Ok(GSequence {
            h,
            c1: proto.lift(p.c1.unwrap_or(0.0)),
            n_dof: p.n_dof,
            n_rx: p.n_rx,
            cache: Vec::new(),
        })
    }

    pub fn kernels(&self) -> &[T] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// (G_n, Σ_m |term|).
    pub fn get(&mut self, n: usize) -> (T, T) {
        while self.cache.len() <= n {
            let k = self.cache.len();
            let g = self.compute(k);
            self.cache.push(g);
        }
        self.cache[n].clone()
    }

    fn compute(&self, n: usize) -> (T, T) {
        let proto = &self.c1;
        let mut acc = CompensatedSum::new(proto);
        let mut w = proto.one();
        let mut cp = proto.one();
        for m in 0..=n {
            acc.add(w.clone() * cp.clone() * self.h[m].clone());
            if m < n {
                let num = ((n - m) * (self.n_dof + m)) as f64;
                let den = ((m + 1) * (self.n_rx + n - m - 1)) as f64;
                w = w * proto.lift(num) / proto.lift(den);
                cp *= self.c1.clone();
            }
        }
        (acc.value(), acc.mass())
    }
}

/// Poisson weights e^{−z} z^n/n! computed in the log domain so that large z
/// does not underflow the leading weight.
struct PoissonWeights<T> {
    ln_z: Option<T>,
    neg_z: T,
    ln_w: T,
    n: usize,
}

impl<T: Real> PoissonWeights<T> {
    fn new(z: &T) -> Self {
        let ln_z = if z.is_zero() { None } else { Some(z.ln()) };
        PoissonWeights {
            ln_z,
            neg_z: -z.clone(),
            ln_w: -z.clone(),
            n: 0,
        }
    }

    /// Weight for index `self.n`, then advance.
    fn next(&mut self) -> T {
        let w = match &self.ln_z {
            None if self.n == 0 => self.neg_z.one(),
            None => self.neg_z.zero(),
            Some(_) => self.ln_w.exp(),
        };
        self.n += 1;
        if let Some(lz) = &self.ln_z {
            self.ln_w += lz.clone() - self.neg_z.lift(self.n as f64).ln();
        }
        w
    }
}

/// Σ_n G_{n+shift} Poisson(z; n), truncated per the policy.
fn poisson_sum<T: Real>(
    g: &mut GSequence<T>,
    z: &T,
    shift: usize,
    rel_tol: f64,
    n_max: usize,
) -> SeriesValue<T> {
    let zf = z.to_f64();
    let mut pw = PoissonWeights::new(z);
    let mut acc = CompensatedSum::new(z);
    let mut max_term = 0.0f64;
    let mut met = false;
    let mut n_used = 0;
    for n in 0..=n_max {
        let w = pw.next();
        let (gn, mass) = g.get(n + shift);
        let term = w.clone() * gn;
        max_term = max_term.max(term.abs().to_f64());
        acc.add_with_mass(term.clone(), w * mass);
        n_used = n + 1;
        if stop(n, zf, &term, &acc.value(), rel_tol) {
            met = true;
            break;
        }
    }
    SeriesValue {
        value: acc.value(),
        n_used,
        met_tol: met,
        mass: acc.mass(),
        max_term,
        floor_ln: f64::NEG_INFINITY,
    }
}

/// Single series h(z) at the precision of `proto`.
pub fn single_series<T: Real>(
    kind: &MeasureKind,
    p: &SnrParams,
    z: f64,
    rel_tol: f64,
    n_max: usize,
    proto: &T,
) -> Result<SeriesValue<T>> {
    if p.is_rician_rayleigh() {
        return rician_rayleigh_series(kind, p, rel_tol, n_max, proto);
    }
    let mut g = GSequence::new(kind, p, n_max + 1, proto)?;
    Ok(poisson_sum(&mut g, &proto.lift(z), 0, rel_tol, n_max))
}

/// x₂ = 0: Σ_m x₁^m/m! (N)_m/(N_R)_m H_m.
fn rician_rayleigh_series<T: Real>(
    kind: &MeasureKind,
    p: &SnrParams,
    rel_tol: f64,
    n_max: usize,
    proto: &T,
) -> Result<SeriesValue<T>> {
    let h = kernel_values(kind, p, n_max + 1, proto)?;
    Ok(inner_sum(&h, p.x1, p.n_dof, p.n_rx, rel_tol, n_max, proto))
}

/// Σ_m x^m/m! (N)_m/(d)_m H_m.
fn inner_sum<T: Real>(
    h: &[T],
    x: f64,
    n_dof: usize,
    d: usize,
    rel_tol: f64,
    n_max: usize,
    proto: &T,
) -> SeriesValue<T> {
    let xt = proto.lift(x);
    let mut acc = CompensatedSum::new(proto);
    let mut w = proto.one();
    let mut max_term = 0.0f64;
    let mut met = false;
    let mut n_used = 0;
    for (m, hm) in h.iter().enumerate().take(n_max + 1) {
        let term = w.clone() * hm.clone();
        max_term = max_term.max(term.abs().to_f64());
        acc.add(term.clone());
        n_used = m + 1;
        if stop(m, x, &term, &acc.value(), rel_tol) {
            met = true;
            break;
        }
        w = w * xt.clone() * proto.lift((n_dof + m) as f64)
            / proto.lift(((m + 1) * (d + m)) as f64);
    }
    SeriesValue {
        value: acc.value(),
        n_used,
        met_tol: met,
        mass: acc.mass(),
        max_term,
        floor_ln: f64::NEG_INFINITY,
    }
}

fn with_precision<R>(
    policy: &TruncationPolicy,
    f64_path: impl FnOnce(&f64) -> R,
    mp_path: impl FnOnce(&Mp) -> R,
) -> R {
    match policy.precision {
        Precision::Double => f64_path(&0.0),
        Precision::Digits(_) => mp_path(&Mp::new(policy.precision.working_bits(policy.n_max), 0.0)),
    }
}

pub fn eval_series(
    kind: &MeasureKind,
    p: &SnrParams,
    policy: &TruncationPolicy,
) -> Result<SeriesResult> {
    policy.validate()?;
    with_precision(
        policy,
        |x| Ok(single_series(kind, p, p.x2, policy.rel_tol, policy.n_max, x)?.summary()),
        |x| Ok(single_series(kind, p, p.x2, policy.rel_tol, policy.n_max, x)?.summary()),
    )
}

/// ∂_z^k h(z) for k = 0..=order in the precision of `proto`.
///
/// Uses ∂^k h = Σ_l C(k,l)(−1)^{k−l} D_l with D_l = Σ_n G_{n+l} Poisson(z; n).
pub fn series_derivatives<T: Real>(
    kind: &MeasureKind,
    p: &SnrParams,
    z: f64,
    order: usize,
    rel_tol: f64,
    n_max: usize,
    proto: &T,
) -> Result<Vec<SeriesValue<T>>> {
    let mut g = GSequence::new(kind, p, n_max + order + 1, proto)?;
    let zt = proto.lift(z);
    let d: Vec<SeriesValue<T>> = (0..=order)
        .map(|l| poisson_sum(&mut g, &zt, l, rel_tol, n_max))
        .collect();
    let mut out = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut acc = CompensatedSum::new(proto);
        let mut binom = proto.one();
        let mut met = true;
        let mut n_used = 0;
        let mut max_term = 0.0f64;
        for (l, dl) in d.iter().enumerate().take(k + 1) {
            let sign = if (k - l) % 2 == 0 {
                proto.one()
            } else {
                -proto.one()
            };
            acc.add_with_mass(
                sign * binom.clone() * dl.value.clone(),
                binom.clone() * dl.mass.clone(),
            );
            binom = binom * proto.lift((k - l) as f64) / proto.lift((l + 1) as f64);
            met &= dl.met_tol;
            n_used = n_used.max(dl.n_used);
            max_term = max_term.max(dl.max_term);
        }
        let floor_ln = d[0].value.ln_abs_f64();
        out.push(SeriesValue {
            value: acc.value(),
            n_used,
            met_tol: met,
            mass: acc.mass(),
            max_term,
            floor_ln,
        });
    }
    Ok(out)
}

/// ∂_z^k h(z0), k = 0..=order; errors when any derivative series fails to converge.
pub fn eval_series_derivatives(
    kind: &MeasureKind,
    p: &SnrParams,
    z0: f64,
    order: usize,
    policy: &TruncationPolicy,
) -> Result<Vec<f64>> {
    policy.validate()?;
    fn collect<T: Real>(v: Vec<SeriesValue<T>>, z0: f64) -> Result<Vec<f64>> {
        if v.iter().all(|s| s.converged()) {
            Ok(v.iter().map(|s| s.value.to_f64()).collect())
        } else {
            Err(Error::InitialPointTooLarge { z0 })
        }
    }
    with_precision(
        policy,
        |x| {
            collect(
                series_derivatives(kind, p, z0, order, policy.rel_tol, policy.n_max, x)?,
                z0,
            )
        },
        |x| {
            collect(
                series_derivatives(kind, p, z0, order, policy.rel_tol, policy.n_max, x)?,
                z0,
            )
        },
    )
}

/// Σ_{n₂} Poisson(x₂; n₂) Σ_{n₁} x₁^{n₁}/n₁! (N)_{n₁}/(N_R+n₂)_{n₁} H_{n₁}.
pub fn double_series<T: Real>(
    kind: &MeasureKind,
    p: &SnrParams,
    rel_tol: f64,
    n_max: usize,
    proto: &T,
) -> Result<SeriesValue<T>> {
    let h = kernel_values(kind, p, n_max + 1, proto)?;
    let z = proto.lift(p.x2);
    let mut pw = PoissonWeights::new(&z);
    let mut acc = CompensatedSum::new(proto);
    let mut max_term = 0.0f64;
    let mut met = true;
    let mut outer_met = false;
    let mut n_used = 0;
    for n2 in 0..=n_max {
        let w = pw.next();
        let inner = inner_sum(&h, p.x1, p.n_dof, p.n_rx + n2, rel_tol * 1e-2, n_max, proto);
        met &= inner.met_tol;
        let term = w.clone() * inner.value;
        max_term = max_term.max(term.abs().to_f64());
        acc.add_with_mass(term.clone(), w * inner.mass);
        n_used = n2 + 1;
        if stop(n2, p.x2, &term, &acc.value(), rel_tol) {
            outer_met = true;
            break;
        }
    }
    Ok(SeriesValue {
        value: acc.value(),
        n_used,
        met_tol: met && outer_met,
        mass: acc.mass(),
        max_term,
        floor_ln: f64::NEG_INFINITY,
    })
}

pub fn eval_double_series(
    kind: &MeasureKind,
    p: &SnrParams,
    policy: &TruncationPolicy,
) -> Result<SeriesResult> {
    policy.validate()?;
    with_precision(
        policy,
        |x| Ok(double_series(kind, p, policy.rel_tol, policy.n_max, x)?.summary()),
        |x| Ok(double_series(kind, p, policy.rel_tol, policy.n_max, x)?.summary()),
    )
}

/// ₁F₁(n; d; σ) in the precision of `proto`; Kummer's transformation for σ < 0.
pub fn hyp1f1_t<T: Real>(n: i64, d: i64, sigma: f64, proto: &T) -> Result<T> {
    if d < 1 {
        return Err(Error::InvalidArgument(format!(
            "hyp1f1 lower parameter d = {d} must be >= 1"
        )));
    }
    if sigma < 0.0 {
        let v = hyp1f1_t(d - n, d, -sigma, proto)?;
        return Ok(proto.lift(sigma).exp() * v);
    }
    let x = proto.lift(sigma);
    let eps = proto.unit_roundoff();
    let mut term = proto.one();
    let mut sum = proto.one();
    let budget = 100_000 + (10.0 * sigma) as usize;
    for k in 0..budget {
        let a = n + k as i64;
        if a == 0 {
            return Ok(sum);
        }
        term = term * proto.lift_int(a) * x.clone()
            / (proto.lift_int(d + k as i64) * proto.lift((k + 1) as f64));
        sum += term.clone();
        if k as f64 > sigma && term.abs().to_f64() <= eps * sum.abs().to_f64() {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence {
        n_used: budget,
        partial: sum.to_f64(),
    })
}

pub fn hyp1f1(n: i64, d: i64, sigma: f64) -> Result<f64> {
    hyp1f1_t(n, d, sigma, &0.0)
}

/// Closed form of the mgf when x₂ = 0: (1−Γ₁s)^{−N} ₁F₁(N; N_R; Γ₁s x₁/(1−Γ₁s)).
pub fn rician_rayleigh_mgf(s: f64, p: &SnrParams) -> Result<f64> {
    let u = 1.0 / (1.0 - s * p.gamma1);
    Ok(u.powi(p.n_dof as i32) * hyp1f1(p.n_dof as i64, p.n_rx as i64, (u - 1.0) * p.x1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hyp1f1_identities() {
        assert_eq!(hyp1f1(3, 8, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            hyp1f1(1, 1, 1.0).unwrap(),
            std::f64::consts::E,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            hyp1f1(3, 8, 5.0).unwrap(),
            9.192_394_300_063_554_6,
            max_relative = 1e-13
        );
        let mp = hyp1f1_t(3, 8, 5.0, &Mp::with_digits(50, 0.0)).unwrap();
        assert!((mp.to_f64() - hyp1f1(3, 8, 5.0).unwrap()).abs() < 1e-12);
        // Kummer branch against a direct alternating sum at high precision.
        let neg = hyp1f1_t(3, 8, -4.0, &Mp::with_digits(50, 0.0)).unwrap();
        assert_relative_eq!(
            hyp1f1(3, 8, -4.0).unwrap(),
            neg.to_f64(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn mgf_at_zero_is_one() {
        let p = SnrParams::new(3.0, 4.0, 8.0, 6, 4);
        let r = eval_series(
            &MeasureKind::Mgf { s: 0.0 },
            &p,
            &TruncationPolicy::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn rayleigh_mgf_is_gamma() {
        let p = SnrParams::new(3.0, 0.0, 0.0, 6, 4);
        let r = eval_series(
            &MeasureKind::Mgf { s: -0.2 },
            &p,
            &TruncationPolicy::default(),
        )
        .unwrap();
        assert_relative_eq!(r.value, 1.6f64.powi(-3), max_relative = 1e-14);
    }

    #[test]
    fn poisson_weights_survive_large_z() {
        let mut pw = PoissonWeights::new(&5000.0);
        let mut total = 0.0;
        for _ in 0..12_000 {
            total += pw.next();
        }
        assert_relative_eq!(total, 1.0, max_relative = 1e-9);
    }
}

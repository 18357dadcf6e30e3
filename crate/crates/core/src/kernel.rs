//! Inner kernels H_m of the performance series.
//!
//! Each kernel is the m-th forward difference H_m = Σ_k C(m,k)(−1)^k B_{N+m−k}
//! of a measure-specific base sequence B_j (the measure under a gamma law of
//! shape j and scale Γ₁). Closed forms avoid the cancellation of the
//! alternating sum where they exist.

use serde::{Deserialize, Serialize};

use crate::channel::SnrParams;
use crate::error::{Error, Result};
use crate::num::{Mp, Real};
use crate::special::{gamma_p_int, gamma_p_int_seq, laguerre_all};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    /// E[e^{sγ}], defined for 1 − sΓ₁ > 0.
    Mgf { s: f64 },
    /// Density of γ at t ≥ 0.
    Pdf { t: f64 },
    /// P(γ < tau) with tau in linear units.
    OutageProb { tau: f64 },
    /// E[log₂(1 + γ)].
    Capacity,
}

impl MeasureKind {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::Mgf { .. } => "mgf",
            MeasureKind::Pdf { .. } => "pdf",
            MeasureKind::OutageProb { .. } => "outage",
            MeasureKind::Capacity => "capacity",
        }
    }

    pub fn validate(&self, p: &SnrParams) -> Result<()> {
        match *self {
            MeasureKind::Mgf { s } if !(1.0 - s * p.gamma1 > 0.0) => Err(Error::InvalidArgument(
                format!("mgf argument s = {s} outside 1 - s*gamma1 > 0"),
            )),
            MeasureKind::Pdf { t } if !(t >= 0.0) => {
                Err(Error::InvalidArgument(format!("pdf argument t = {t} < 0")))
            }
            MeasureKind::OutageProb { tau } if !(tau > 0.0) => Err(Error::InvalidArgument(
                format!("outage threshold tau = {tau} must be positive"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    /// Laguerre / power closed forms where available.
    #[default]
    Closed,
    /// Literal alternating binomial sum over the base sequence.
    Binomial,
}

/// H_m at double precision.
pub fn kernel_h(kind: &MeasureKind, m: usize, p: &SnrParams) -> Result<f64> {
    Ok(kernel_values(kind, p, m + 1, &0.0)?[m])
}

/// H_0, …, H_{count−1} in the precision of `proto`.
pub fn kernel_values<T: Real>(
    kind: &MeasureKind,
    p: &SnrParams,
    count: usize,
    proto: &T,
) -> Result<Vec<T>> {
    kernel_values_with(kind, p, count, proto, KernelForm::Closed)
}

pub fn kernel_values_with<T: Real>(
    kind: &MeasureKind,
    p: &SnrParams,
    count: usize,
    proto: &T,
    form: KernelForm,
) -> Result<Vec<T>> {
    kind.validate(p)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = p.n_dof;
    let g1 = proto.lift(p.gamma1);
    match (kind, form) {
        (MeasureKind::Mgf { s }, KernelForm::Closed) => {
            let u = proto.one() / (proto.one() - proto.lift(*s) * g1);
            let um1 = u.clone() - proto.one();
            let mut h = u.powi(n as i32);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                out.push(h.clone());
                h *= um1.clone();
            }
            Ok(out)
        }
        (MeasureKind::Pdf { t }, KernelForm::Closed) => {
            let v = proto.lift(*t) / g1.clone();
            let lag = laguerre_all(count - 1, (n - 1) as f64, &v);
            let base = v.powi(n as i32 - 1) * (-v.clone()).exp() / g1;
            // m!/(N+m−1)!
            let mut ratio = proto.one();
            for j in 1..n {
                ratio /= proto.lift(j as f64);
            }
            let mut out = Vec::with_capacity(count);
            for (m, l) in lag.into_iter().enumerate() {
                let sign = if m % 2 == 0 {
                    proto.one()
                } else {
                    -proto.one()
                };
                out.push(sign * ratio.clone() * base.clone() * l);
                ratio = ratio * proto.lift((m + 1) as f64) / proto.lift((n + m) as f64);
            }
            Ok(out)
        }
        (MeasureKind::OutageProb { tau }, KernelForm::Closed) => {
            let y = proto.lift(*tau) / g1;
            let mut out = Vec::with_capacity(count);
            out.push(gamma_p_int(n as u32, &y));
            if count > 1 {
                let lag = laguerre_all(count - 2, n as f64, &y);
                let base = y.powi(n as i32) * (-y.clone()).exp();
                // (m−1)!/(N+m−1)!
                let mut ratio = proto.one();
                for j in 1..=n {
                    ratio /= proto.lift(j as f64);
                }
                for m in 1..count {
                    let sign = if m % 2 == 0 {
                        proto.one()
                    } else {
                        -proto.one()
                    };
                    out.push(sign * ratio.clone() * base.clone() * lag[m - 1].clone());
                    ratio = ratio * proto.lift(m as f64) / proto.lift((n + m) as f64);
                }
            }
            Ok(out)
        }
        (MeasureKind::Capacity, _) => capacity_kernels(p, count, proto),
        (_, KernelForm::Binomial) => {
            let base = base_sequence(kind, p, n + count, proto)?;
            Ok(forward_differences(&base[n..], count))
        }
    }
}

/// B_j for j = 0..len (B_0 is unused padding).
fn base_sequence<T: Real>(
    kind: &MeasureKind,
    p: &SnrParams,
    len: usize,
    proto: &T,
) -> Result<Vec<T>> {
    let g1 = proto.lift(p.gamma1);
    let mut out = vec![proto.zero(); len];
    match *kind {
        MeasureKind::Mgf { s } => {
            let u = proto.one() / (proto.one() - proto.lift(s) * g1);
            let mut pw = proto.one();
            for b in out.iter_mut() {
                *b = pw.clone();
                pw *= u.clone();
            }
        }
        MeasureKind::Pdf { t } => {
            let v = proto.lift(t) / g1.clone();
            let mut b = (-v.clone()).exp() / g1;
            for (j, slot) in out.iter_mut().enumerate().skip(1) {
                *slot = b.clone();
                b = b * v.clone() / proto.lift(j as f64);
            }
        }
        MeasureKind::OutageProb { tau } => {
            let y = proto.lift(tau) / g1;
            let seq = gamma_p_int_seq(1, len - 1, &y);
            for (j, v) in seq.into_iter().enumerate() {
                out[j + 1] = v;
            }
        }
        MeasureKind::Capacity => unreachable!("capacity has its own path"),
    }
    Ok(out)
}

/// Δ^m b_0 = Σ_k C(m,k)(−1)^k b_{m−k} for m = 0..count.
fn forward_differences<T: Real>(b: &[T], count: usize) -> Vec<T> {
    let mut row: Vec<T> = b[..count].to_vec();
    let mut out = Vec::with_capacity(count);
    for m in 0..count {
        out.push(row[0].clone());
        for j in 0..count - m - 1 {
            row[j] = row[j + 1].clone() - row[j].clone();
        }
    }
    out
}

/// Capacity base: E_k = (1/ln 2)·∫ ln(1+t) gamma_k(t; Γ₁) dt through
/// u_0 = e^{1/Γ}E₁(1/Γ), u_k = (1 − u_{k−1}/Γ)/k, E_k = Σ_{j<k} u_j.
///
/// The differences cancel heavily, so the work is done in MPFR with guard
/// bits and rounded to the caller's precision.
fn capacity_kernels<T: Real>(p: &SnrParams, count: usize, proto: &T) -> Result<Vec<T>> {
    if !(p.gamma1 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma1 = {} must be positive",
            p.gamma1
        )));
    }
    let n = p.n_dof;
    let len = n + count;
    let mut growth = 0.0f64;
    for k in 1..len {
        growth += (1.0 / (k as f64 * p.gamma1)).log2().max(0.0);
    }
    let bits = proto.precision_bits().max(53) + count as u32 + 64 + growth.ceil() as u32;
    let g = Mp::new(bits, p.gamma1);
    let inv = g.one() / g.clone();
    let mut u = inv.exp() * inv.e1();
    let ln2 = g.lift(2.0).ln();
    // e[j] = E_{j+1}
    let mut e = Vec::with_capacity(len);
    let mut acc = u.clone();
    e.push(acc.clone() / ln2.clone());
    for k in 1..len {
        u = (g.one() - u / g.clone()) / g.lift(k as f64);
        acc += u.clone();
        e.push(acc.clone() / ln2.clone());
    }
    let diffs = forward_differences(&e[n - 1..], count);
    Ok(diffs.iter().map(|d| proto.from_mp(d)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(gamma1: f64, n_rx: usize, n_tx: usize) -> SnrParams {
        SnrParams::new(gamma1, 0.0, 0.0, n_rx, n_tx)
    }

    #[test]
    fn mgf_at_zero_is_binomial_identity() {
        let p = params(2.0, 6, 4);
        let h = kernel_values(&MeasureKind::Mgf { s: 0.0 }, &p, 5, &0.0).unwrap();
        assert_eq!(h[0], 1.0);
        assert!(h[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn outage_m0_reference() {
        let p = params(1.0, 6, 4);
        let h = kernel_h(&MeasureKind::OutageProb { tau: 1.0 }, 0, &p).unwrap();
        assert_relative_eq!(h, 0.080_301_397_071_394_2, max_relative = 1e-12);
    }

    #[test]
    fn capacity_m0_reference() {
        let p = params(1.0, 4, 4);
        let h = kernel_h(&MeasureKind::Capacity, 0, &p).unwrap();
        assert_relative_eq!(h, 0.860_347_382_270_885_9, max_relative = 1e-12);
    }

    #[test]
    fn closed_forms_match_binomial_sums() {
        let p = params(1.7, 6, 4);
        let proto = Mp::with_digits(80, 0.0);
        for kind in [
            MeasureKind::Mgf { s: -0.3 },
            MeasureKind::Pdf { t: 2.2 },
            MeasureKind::OutageProb { tau: 3.1 },
        ] {
            let a = kernel_values_with(&kind, &p, 30, &proto, KernelForm::Closed).unwrap();
            let b = kernel_values_with(&kind, &p, 30, &proto, KernelForm::Binomial).unwrap();
            for (m, (x, y)) in a.iter().zip(&b).enumerate() {
                let d = (x.clone() - y.clone()).abs().to_f64();
                assert!(
                    d <= 1e-60 * x.abs().to_f64().max(1e-30),
                    "{kind:?} m={m}: {x:?} vs {y:?}"
                );
            }
        }
    }

    #[test]
    fn invalid_mgf_argument_rejected() {
        let p = params(2.0, 6, 4);
        assert!(kernel_h(&MeasureKind::Mgf { s: 0.6 }, 0, &p).is_err());
    }
}

//! Linear ODEs with polynomial coefficients in z: guessing from Taylor
//! coefficients, certification on held-out coefficients, and companion form.
//!
//! An operator Σ_i q_i(z) ∂^i acting on f = Σ a_j z^j maps, coefficient-wise
//! and after scaling row r by r!, to Σ_{i,k} q_{ik} b_{r−k+i} r!/(r−k)! with
//! b_j = a_j j!. Guessing solves for the q_{ik} in the null space of that
//! Hermite–Padé system.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rug::{Integer, Rational};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

use crate::channel::SnrParams;
use crate::error::{Error, Result};
use crate::kernel::MeasureKind;
use crate::num::{digits_to_bits, Mp, Real};
use crate::series::GSequence;

/// Scalars the guesser can work over: exact rationals or MPFR floats.
pub trait GuessField: Clone + fmt::Debug + Send + Sync {
    const EXACT: bool;
    fn zero_like(&self) -> Self;
    fn from_int_like(&self, n: &Integer) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn vanishes(&self) -> bool;
    /// log₂|x|, −∞ for zero.
    fn log2_abs(&self) -> f64;
    fn abs_val(&self) -> Self;
    /// Working precision in bits (`u32::MAX` when exact).
    fn bits(&self) -> u32;
    fn as_f64(&self) -> f64;
    fn to_mp(&self, bits: u32) -> Mp;
    fn repr(&self) -> String;
    fn parse_like(&self, s: &str) -> Option<Self>;

    fn one_like(&self) -> Self {
        self.from_int_like(&Integer::from(1))
    }
    fn neg(&self) -> Self {
        self.zero_like().sub(self)
    }
    fn cmp_abs(&self, o: &Self) -> Ordering {
        self.log2_abs()
            .partial_cmp(&o.log2_abs())
            .unwrap_or(Ordering::Equal)
    }
}

impl GuessField for Rational {
    const EXACT: bool = true;
    fn zero_like(&self) -> Self {
        Rational::new()
    }
    fn from_int_like(&self, n: &Integer) -> Self {
        Rational::from(n)
    }
    fn add(&self, o: &Self) -> Self {
        Rational::from(self + o)
    }
    fn sub(&self, o: &Self) -> Self {
        Rational::from(self - o)
    }
    fn mul(&self, o: &Self) -> Self {
        Rational::from(self * o)
    }
    fn div(&self, o: &Self) -> Self {
        Rational::from(self / o)
    }
    fn vanishes(&self) -> bool {
        self.cmp0() == Ordering::Equal
    }
    fn log2_abs(&self) -> f64 {
        if GuessField::vanishes(self) {
            return f64::NEG_INFINITY;
        }
        rug::Float::with_val(64, self).abs().log2().to_f64()
    }
    fn abs_val(&self) -> Self {
        self.clone().abs()
    }
    fn bits(&self) -> u32 {
        u32::MAX
    }
    fn as_f64(&self) -> f64 {
        Rational::to_f64(self)
    }
    fn to_mp(&self, bits: u32) -> Mp {
        Mp::from_rational(bits, self)
    }
    fn repr(&self) -> String {
        self.to_string()
    }
    fn parse_like(&self, s: &str) -> Option<Self> {
        s.parse::<Rational>().ok()
    }
    fn cmp_abs(&self, o: &Self) -> Ordering {
        Rational::cmp_abs(self, o)
    }
}

impl GuessField for Mp {
    const EXACT: bool = false;
    fn zero_like(&self) -> Self {
        Real::zero(self)
    }
    fn from_int_like(&self, n: &Integer) -> Self {
        Mp(rug::Float::with_val(self.prec(), n))
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn vanishes(&self) -> bool {
        Real::is_zero(self)
    }
    fn log2_abs(&self) -> f64 {
        self.ln_abs_f64() / std::f64::consts::LN_2
    }
    fn abs_val(&self) -> Self {
        Real::abs(self)
    }
    fn bits(&self) -> u32 {
        self.prec()
    }
    fn as_f64(&self) -> f64 {
        Real::to_f64(self)
    }
    fn to_mp(&self, bits: u32) -> Mp {
        Mp(rug::Float::with_val(bits, &self.0))
    }
    fn repr(&self) -> String {
        self.to_decimal()
    }
    fn parse_like(&self, s: &str) -> Option<Self> {
        Mp::parse(self.prec(), s)
    }
}

/// Where an operator came from and how well it certified.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<SnrParams>,
    pub fit_count: usize,
    pub holdout_count: usize,
    pub max_residual: f64,
    pub precision_bits: Option<u32>,
    /// "h" for the measure itself, "g" for e^z·h.
    pub function: String,
}

/// Σ_{i=0}^{p} q_i(z) ∂^i with q_i stored as ascending coefficient lists.
#[derive(Clone, Debug)]
pub struct OdeOperator<T> {
    pub coeffs: Vec<Vec<T>>,
    pub provenance: Option<Provenance>,
}

impl<T: GuessField> OdeOperator<T> {
    pub fn new(coeffs: Vec<Vec<T>>) -> Self {
        OdeOperator {
            coeffs,
            provenance: None,
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .map(|q| q.iter().rposition(|c| !c.vanishes()).unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    pub fn leading(&self) -> &[T] {
        &self.coeffs[self.order()]
    }

    /// Scales so the highest nonzero coefficient of q_p is one.
    pub fn normalized(mut self) -> Option<Self> {
        let lead = self.leading().iter().rev().find(|c| !c.vanishes())?.clone();
        for q in self.coeffs.iter_mut() {
            for c in q.iter_mut() {
                *c = c.div(&lead);
            }
        }
        let d = self.degree();
        for q in self.coeffs.iter_mut() {
            q.truncate(d + 1);
            let z = q[0].zero_like();
            q.resize(d + 1, z);
        }
        Some(self)
    }

    /// Operator for h when `self` annihilates g = e^z h: ∂ ↦ ∂ + 1.
    pub fn exp_shift(&self) -> Self {
        let p = self.order();
        let width = self.coeffs.iter().map(|q| q.len()).max().unwrap_or(1);
        let zero = self.coeffs[0][0].zero_like();
        let mut out = vec![vec![zero.clone(); width]; p + 1];
        for i in 0..=p {
            let mut binom = Integer::from(1);
            for j in 0..=i {
                let b = zero.from_int_like(&binom);
                for (k, c) in self.coeffs[i].iter().enumerate() {
                    out[j][k] = out[j][k].add(&b.mul(c));
                }
                binom = binom * (i - j) as u32 / (j + 1) as u32;
            }
        }
        OdeOperator {
            coeffs: out,
            provenance: self.provenance.clone(),
        }
    }

    /// Residual of coefficient row r on factorial-scaled coefficients, with its absolute mass.
    pub fn row_residual(&self, b: &[T], r: usize) -> (T, f64) {
        let zero = b[0].zero_like();
        let mut acc = zero.clone();
        let mut mass_log: Vec<f64> = Vec::new();
        for (i, q) in self.coeffs.iter().enumerate() {
            let mut fall = Integer::from(1);
            for (k, c) in q.iter().enumerate() {
                if k > r {
                    break;
                }
                if k > 0 {
                    fall *= (r - k + 1) as u32;
                }
                if c.vanishes() {
                    continue;
                }
                let t = c.mul(&b[r - k + i]).mul(&zero.from_int_like(&fall));
                mass_log.push(t.log2_abs());
                acc = acc.add(&t);
            }
        }
        let top = mass_log.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mass = if top == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            top + mass_log
                .iter()
                .map(|l| (l - top).exp2())
                .sum::<f64>()
                .log2()
        };
        (acc, mass)
    }

    pub fn to_mp(&self, bits: u32) -> OdeOperator<Mp> {
        OdeOperator {
            coeffs: self
                .coeffs
                .iter()
                .map(|q| q.iter().map(|c| c.to_mp(bits)).collect())
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.coeffs
            .iter()
            .map(|q| q.iter().map(|c| c.as_f64()).collect())
            .collect()
    }

    pub fn to_json(&self) -> OperatorJson {
        OperatorJson {
            order: self.order(),
            degree: self.degree(),
            exact: T::EXACT,
            precision_bits: if T::EXACT {
                None
            } else {
                Some(self.coeffs[0][0].bits())
            },
            coeffs: self
                .coeffs
                .iter()
                .map(|q| q.iter().map(|c| c.repr()).collect())
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_json(j: &OperatorJson, proto: &T) -> Result<Self> {
        if j.coeffs.len() != j.order + 1 {
            return Err(Error::Config(
                "operator order does not match coefficient rows".into(),
            ));
        }
        let coeffs = j
            .coeffs
            .iter()
            .map(|q| {
                q.iter()
                    .map(|s| {
                        proto
                            .parse_like(s)
                            .ok_or_else(|| Error::Config(format!("bad coefficient {s:?}")))
                    })
                    .collect::<Result<Vec<T>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OdeOperator {
            coeffs,
            provenance: j.provenance.clone(),
        })
    }

    /// True when both operators agree after monic normalization.
    pub fn same_up_to_scale(&self, other: &Self, tol_log2: f64) -> bool {
        let (Some(a), Some(b)) = (self.clone().normalized(), other.clone().normalized()) else {
            return false;
        };
        if a.order() != b.order() || a.degree() != b.degree() {
            return false;
        }
        a.coeffs.iter().zip(&b.coeffs).all(|(qa, qb)| {
            qa.iter().zip(qb).all(|(x, y)| {
                let d = x.sub(y);
                d.vanishes() || d.log2_abs() - x.log2_abs().max(0.0) < tol_log2
            })
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorJson {
    pub order: usize,
    pub degree: usize,
    pub exact: bool,
    pub precision_bits: Option<u32>,
    /// coeffs[i][k] is the z^k coefficient of q_i, as a decimal (or p/q) string.
    pub coeffs: Vec<Vec<String>>,
    pub provenance: Option<Provenance>,
}

/// z∂² + (d − z)∂ − n, the annihilator of ₁F₁(n; d; z).
pub fn hypergeometric_annihilator(n: u32, d: u32) -> OdeOperator<Rational> {
    let r = |v: i64| Rational::from(v);
    OdeOperator::new(vec![
        vec![r(-(n as i64)), r(0)],
        vec![r(d as i64), r(-1)],
        vec![r(0), r(1)],
    ])
}

/// Taylor coefficients of ₁F₁(n; d; z) as exact rationals.
pub fn hyp1f1_coefficients(n: u32, d: u32, count: usize) -> Vec<Rational> {
    let mut out = Vec::with_capacity(count);
    let mut a = Rational::from(1);
    for j in 0..count {
        out.push(a.clone());
        a = a * Rational::from(((n as usize + j) as u64, ((d as usize + j) * (j + 1)) as u64));
    }
    out
}

/// b_j = a_j j!.
pub fn factorial_scaled<T: GuessField>(a: &[T]) -> Vec<T> {
    let mut f = Integer::from(1);
    a.iter()
        .enumerate()
        .map(|(j, x)| {
            if j > 0 {
                f *= j as u32;
            }
            x.mul(&x.from_int_like(&f))
        })
        .collect()
}

/// G_0, …, G_{count−1}: the factorial-scaled Taylor coefficients of e^z h(z).
pub fn g_coefficients(
    kind: &MeasureKind,
    p: &SnrParams,
    count: usize,
    bits: u32,
) -> Result<Vec<Mp>> {
    let proto = Mp::new(bits, 0.0);
    let mut g = GSequence::new(kind, p, count, &proto)?;
    Ok((0..count).map(|n| g.get(n).0).collect())
}

/// Taylor coefficients a_j of h(z) at z = 0, with x₁ = c₁z and x₂ = z.
pub fn series_coefficients(
    kind: &MeasureKind,
    p: &SnrParams,
    count: usize,
    digits: u32,
) -> Result<Vec<Mp>> {
    if count >= 40 && digits < 50 {
        return Err(Error::PrecisionInsufficient(format!(
            "{count} coefficients need at least 50 digits (got {digits})"
        )));
    }
    let bits = digits_to_bits(digits);
    let work = bits + count as u32 + 64;
    let g = g_coefficients(kind, p, count, work)?;
    let proto = Mp::new(work, 0.0);
    let mut out = Vec::with_capacity(count);
    let mut fact = proto.one();
    for j in 0..count {
        if j > 0 {
            fact *= proto.lift(j as f64);
        }
        let mut acc = proto.zero();
        let mut binom = proto.one();
        for (l, gl) in g.iter().enumerate().take(j + 1) {
            let sign = if (j - l) % 2 == 0 {
                proto.one()
            } else {
                -proto.one()
            };
            acc += sign * binom.clone() * gl.clone();
            binom = binom * proto.lift((j - l) as f64) / proto.lift((l + 1) as f64);
        }
        out.push(Mp::new(bits, 0.0).from_mp(&(acc / fact.clone())));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub fit_coeff_count: usize,
    pub holdout_coeff_count: usize,
    pub max_residual: f64,
    pub passed: bool,
}

/// Applies the operator's coefficient recurrence to the rows that reach past
/// the fitted prefix of the plain Taylor coefficients `coeffs`.
pub fn certify<T: GuessField>(
    op: &OdeOperator<T>,
    coeffs: &[T],
    fit_count: usize,
    tol: f64,
) -> Certification {
    certify_scaled(op, &factorial_scaled(coeffs), fit_count, tol)
}

/// As [`certify`] on factorial-scaled coefficients.
pub fn certify_scaled<T: GuessField>(
    op: &OdeOperator<T>,
    b: &[T],
    fit_count: usize,
    tol: f64,
) -> Certification {
    let p = op.order();
    let holdout = b.len().saturating_sub(fit_count);
    let first = fit_count.saturating_sub(p);
    let mut worst = 0.0f64;
    let mut rows = 0;
    for r in first..b.len().saturating_sub(p) {
        let (res, mass) = op.row_residual(b, r);
        rows += 1;
        if res.vanishes() {
            continue;
        }
        let rel = if mass == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            (res.log2_abs() - mass).exp2()
        };
        worst = worst.max(rel);
    }
    Certification {
        fit_coeff_count: fit_count,
        holdout_coeff_count: holdout,
        max_residual: worst,
        passed: rows > 0 && holdout >= fit_count && worst < tol,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessOptions {
    pub min_order: usize,
    pub max_order: usize,
    pub max_degree: usize,
    /// Certification tolerance on held-out rows.
    pub tol: f64,
    /// Kept pivots must clear the drop threshold by this many bits.
    pub gap_bits: Option<u32>,
}

impl GuessOptions {
    pub fn new(max_order: usize, max_degree: usize) -> Self {
        GuessOptions {
            min_order: 1,
            max_order,
            max_degree,
            tol: 1e-30,
            gap_bits: None,
        }
    }
}

/// All null-space operators at the minimal order and degree, certified.
#[derive(Clone, Debug)]
pub struct GuessOutcome<T> {
    pub order: usize,
    pub degree: usize,
    pub candidates: Vec<OdeOperator<T>>,
    pub certification: Certification,
}

fn system_rows<T: GuessField>(b: &[T], p: usize, d: usize, rows: usize) -> Vec<Vec<T>> {
    let zero = b[0].zero_like();
    (0..rows)
        .map(|r| {
            let mut row = Vec::with_capacity((p + 1) * (d + 1));
            for i in 0..=p {
                let mut fall = Integer::from(1);
                for k in 0..=d {
                    if k > 0 && k <= r {
                        fall *= (r - k + 1) as u32;
                    }
                    if k > r {
                        row.push(zero.clone());
                    } else {
                        row.push(b[r - k + i].mul(&zero.from_int_like(&fall)));
                    }
                }
            }
            row
        })
        .collect()
}

/// Right null space by Gauss–Jordan elimination with partial pivoting.
///
/// Inexact fields are row- and column-equilibrated first; pivots below
/// 2^{−prec/2} count as zero. The rank decision is ambiguous, and reported as
/// ill-conditioned, when kept and dropped magnitudes are within 2·`gap_bits`
/// of each other (or, at full rank, the smallest pivot is within `gap_bits`
/// of the threshold).
pub fn nullspace<T: GuessField>(
    mut a: Vec<Vec<T>>,
    ncol: usize,
    gap_bits: Option<u32>,
) -> Result<Vec<Vec<T>>> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty system".into()));
    }
    let proto = a[0][0].zero_like();
    let nr = a.len();
    let mut col_scale: Vec<T> = vec![proto.one_like(); ncol];
    let bits = proto.bits();
    let thresh = -(bits as f64) / 2.0;
    let gap = gap_bits.unwrap_or(bits / 8) as f64;
    if !T::EXACT {
        for row in a.iter_mut() {
            if let Some(m) = row.iter().max_by(|x, y| x.cmp_abs(y)).cloned() {
                if !m.vanishes() {
                    let m = m.abs_val();
                    for x in row.iter_mut() {
                        *x = x.div(&m);
                    }
                }
            }
        }
        for (j, scale) in col_scale.iter_mut().enumerate() {
            let m = a
                .iter()
                .map(|r| &r[j])
                .max_by(|x, y| x.cmp_abs(y))
                .cloned()
                .unwrap();
            if !m.vanishes() {
                let m = m.abs_val();
                for row in a.iter_mut() {
                    row[j] = row[j].div(&m);
                }
                *scale = m;
            }
        }
    }
    let mut pivots: Vec<usize> = Vec::new();
    let mut rank = 0;
    let mut kept_min = f64::INFINITY;
    for col in 0..ncol {
        if rank == nr {
            break;
        }
        let best = (rank..nr)
            .max_by(|&x, &y| a[x][col].cmp_abs(&a[y][col]))
            .unwrap();
        let mag = a[best][col].log2_abs();
        if a[best][col].vanishes() || (!T::EXACT && mag < thresh) {
            continue;
        }
        kept_min = kept_min.min(mag);
        a.swap(rank, best);
        let pv = a[rank][col].clone();
        let pivot_row: Vec<T> = a[rank].iter().map(|x| x.div(&pv)).collect();
        for (r, row) in a.iter_mut().enumerate() {
            if r == rank || row[col].vanishes() {
                continue;
            }
            let f = row[col].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row).skip(col) {
                *x = x.sub(&f.mul(y));
            }
        }
        a[rank] = pivot_row;
        pivots.push(col);
        rank += 1;
    }
    if !T::EXACT {
        let dropped = a[rank..]
            .iter()
            .flat_map(|r| r.iter())
            .map(|x| x.log2_abs())
            .fold(f64::NEG_INFINITY, f64::max);
        let ambiguous = if dropped == f64::NEG_INFINITY || rank == nr {
            kept_min < thresh + gap
        } else {
            kept_min - dropped < 2.0 * gap
        };
        if ambiguous {
            return Err(Error::IllConditioned {
                kept: kept_min.exp2(),
                dropped: dropped.exp2(),
            });
        }
    }
    let free: Vec<usize> = (0..ncol).filter(|c| !pivots.contains(c)).collect();
    let mut out = Vec::with_capacity(free.len());
    for &fc in &free {
        let mut v = vec![proto.clone(); ncol];
        v[fc] = proto.one_like();
        for (i, &pc) in pivots.iter().enumerate() {
            v[pc] = a[i][fc].neg();
        }
        for (x, s) in v.iter_mut().zip(&col_scale) {
            *x = x.div(s);
        }
        if !T::EXACT {
            snap_tiny(&mut v, thresh);
        }
        out.push(v);
    }
    Ok(out)
}

fn snap_tiny<T: GuessField>(v: &mut [T], thresh: f64) {
    let top = v
        .iter()
        .map(|x| x.log2_abs())
        .fold(f64::NEG_INFINITY, f64::max);
    for x in v.iter_mut() {
        if x.log2_abs() < top + thresh {
            *x = x.zero_like();
        }
    }
}

fn unpack<T: GuessField>(v: &[T], p: usize, d: usize) -> OdeOperator<T> {
    OdeOperator::new(
        (0..=p)
            .map(|i| v[i * (d + 1)..(i + 1) * (d + 1)].to_vec())
            .collect(),
    )
}

/// Null-space operators of order `p` and degree ≤ `d` fitted on b[..fit].
pub fn candidates_at<T: GuessField>(
    b: &[T],
    fit: usize,
    p: usize,
    d: usize,
    gap_bits: Option<u32>,
) -> Result<Vec<OdeOperator<T>>> {
    let unknowns = (p + 1) * (d + 1);
    let rows = fit.saturating_sub(p);
    if rows < unknowns + 4 {
        return Err(Error::InvalidArgument(format!(
            "order {p}, degree {d} needs at least {} fitted coefficients, have {fit}",
            unknowns + p + 4
        )));
    }
    let sys = system_rows(b, p, d, rows);
    let ns = nullspace(sys, unknowns, gap_bits)?;
    Ok(ns
        .iter()
        .filter_map(|v| unpack(v, p, d).normalized())
        .filter(|op| !op.leading().iter().all(|c| c.vanishes()))
        .collect())
}

/// Smallest-order, then smallest-degree operators annihilating the
/// factorial-scaled coefficients `b`; the first half fits, the second certifies.
pub fn guess_scaled<T: GuessField>(b: &[T], opts: &GuessOptions) -> Result<GuessOutcome<T>> {
    let fit = b.len() / 2;
    for p in opts.min_order.max(1)..=opts.max_order {
        let top = candidates_at(b, fit, p, opts.max_degree, opts.gap_bits)?;
        if top.is_empty() {
            continue;
        }
        let (mut lo, mut hi) = (0usize, opts.max_degree);
        let mut best = top;
        while lo < hi {
            let mid = (lo + hi) / 2;
            let c = candidates_at(b, fit, p, mid, opts.gap_bits)?;
            if c.is_empty() {
                lo = mid + 1;
            } else {
                hi = mid;
                best = c;
            }
        }
        if hi == opts.max_degree && lo == hi {
            // `best` already holds the top-degree result
        }
        let degree = hi;
        let certs: Vec<Certification> = best
            .iter()
            .map(|op| certify_scaled(op, b, fit, opts.tol))
            .collect();
        let worst = certs.iter().map(|c| c.max_residual).fold(0.0, f64::max);
        let cert = Certification {
            fit_coeff_count: fit,
            holdout_coeff_count: b.len() - fit,
            max_residual: worst,
            passed: certs.iter().all(|c| c.passed),
        };
        let candidates = best
            .into_iter()
            .zip(&certs)
            .map(|(mut op, c)| {
                op.provenance = Some(Provenance {
                    fit_count: fit,
                    holdout_count: b.len() - fit,
                    max_residual: c.max_residual,
                    precision_bits: if T::EXACT { None } else { Some(b[0].bits()) },
                    ..Default::default()
                });
                op
            })
            .collect();
        return Ok(GuessOutcome {
            order: p,
            degree,
            candidates,
            certification: cert,
        });
    }
    Err(Error::NoOperator {
        max_order: opts.max_order,
        max_degree: opts.max_degree,
    })
}

/// Guesses an annihilator from plain Taylor coefficients and certifies it on
/// the held-out half; errors when nothing certifies within the bounds.
pub fn guess_annihilator<T: GuessField>(
    coeffs: &[T],
    max_order: usize,
    max_degree: usize,
    tol: f64,
) -> Result<OdeOperator<T>> {
    let out = guess_scaled(
        &factorial_scaled(coeffs),
        &GuessOptions {
            tol,
            ..GuessOptions::new(max_order, max_degree)
        },
    )?;
    if !out.certification.passed {
        return Err(Error::NoOperator {
            max_order,
            max_degree,
        });
    }
    Ok(out
        .candidates
        .into_iter()
        .next()
        .expect("non-empty candidate list"))
}

/// First-order form v' = A(z) v for the stack (h, h′, …, h^{(p−1)}).
#[derive(Clone, Debug)]
pub struct CompanionSystem {
    pub dim: usize,
    /// q_i as ascending f64 coefficients.
    pub q: Vec<Vec<f64>>,
    pub singular_points: Vec<f64>,
}

pub fn poly_eval(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &x| acc * z + x)
}

impl CompanionSystem {
    pub fn a_of_z(&self, z: f64) -> DMatrix<f64> {
        let p = self.dim;
        let mut a = DMatrix::zeros(p, p);
        for i in 0..p.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        let lead = poly_eval(&self.q[p], z);
        for i in 0..p {
            a[(p - 1, i)] = -poly_eval(&self.q[i], z) / lead;
        }
        a
    }

    pub fn rhs(&self, z: f64, v: &[f64], dv: &mut [f64]) {
        let p = self.dim;
        dv[..p - 1].copy_from_slice(&v[1..p]);
        let lead = poly_eval(&self.q[p], z);
        let mut s = 0.0;
        for i in 0..p {
            s += poly_eval(&self.q[i], z) * v[i];
        }
        dv[p - 1] = -s / lead;
    }
}

/// Companion form; `interval` bounds the search for real roots of q_p.
pub fn to_companion<T: GuessField>(
    op: &OdeOperator<T>,
    z0: f64,
    interval: (f64, f64),
) -> Result<CompanionSystem> {
    let q = op.to_f64();
    let p = op.order();
    let lead = &q[p];
    let scale = lead
        .iter()
        .enumerate()
        .map(|(k, c)| (c * z0.abs().powi(k as i32)).abs())
        .fold(0.0, f64::max);
    if poly_eval(lead, z0).abs() <= 1e-12 * scale || scale == 0.0 {
        return Err(Error::SingularExpansionPoint(z0));
    }
    let singular_points = real_roots_in(lead, interval.0, interval.1);
    Ok(CompanionSystem {
        dim: p,
        q,
        singular_points,
    })
}

/// Real roots of an ascending-coefficient polynomial inside [lo, hi].
pub fn real_roots_in(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let deg = match c.iter().rposition(|x| *x != 0.0) {
        Some(d) => d,
        None => return Vec::new(),
    };
    let mut roots: Vec<f64> = Vec::new();
    for z in poly_roots(&c[..=deg]) {
        if z.im.abs() <= 1e-7 * z.norm().max(1.0) {
            roots.push(newton_polish(c, z.re));
        }
    }
    // Sign-change scan catches roots the eigenvalue route misplaces.
    let steps = 4000;
    let width = hi - lo;
    if width > 0.0 {
        let mut prev_z = lo;
        let mut prev = poly_eval(c, lo);
        for s in 1..=steps {
            let z = lo + width * s as f64 / steps as f64;
            let v = poly_eval(c, z);
            if prev == 0.0 {
                roots.push(prev_z);
            } else if prev.signum() != v.signum() && v != 0.0 {
                roots.push(bisect(c, prev_z, z));
            }
            prev = v;
            prev_z = z;
        }
    }
    roots.retain(|r| *r >= lo && *r <= hi);
    roots.sort_by(crate::num::cmp_f64);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    roots
}

/// All complex roots by Aberth–Ehrlich iteration (bounded iteration count).
pub fn poly_roots(c: &[f64]) -> Vec<Complex64> {
    let deg = match c.iter().rposition(|x| *x != 0.0) {
        Some(d) if d > 0 => d,
        _ => return Vec::new(),
    };
    let lead = c[deg];
    let a: Vec<f64> = c[..=deg].iter().map(|x| x / lead).collect();
    let radius = 1.0
        + a[..deg]
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max)
            .powf(1.0 / deg as f64);
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| {
            Complex64::from_polar(
                radius,
                0.4 + 2.0 * std::f64::consts::PI * k as f64 / deg as f64,
            )
        })
        .collect();
    let eval = |x: Complex64| {
        let mut p = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for &ak in a.iter().rev() {
            d = d * x + p;
            p = p * x + ak;
        }
        (p, d)
    };
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..deg {
            let (p, d) = eval(z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / d;
            let s: Complex64 = (0..deg)
                .filter(|&j| j != i)
                .map(|j| 1.0 / (z[i] - z[j]))
                .sum();
            let w = ratio / (1.0 - ratio * s);
            if w.is_finite() {
                z[i] -= w;
                moved = moved.max(w.norm() / z[i].norm().max(1e-300));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

fn newton_polish(c: &[f64], mut z: f64) -> f64 {
    for _ in 0..50 {
        let v = poly_eval(c, z);
        let dc: Vec<f64> = c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, x)| k as f64 * x)
            .collect();
        let d = poly_eval(&dc, z);
        if d == 0.0 {
            break;
        }
        let step = v / d;
        z -= step;
        if step.abs() <= 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

fn bisect(c: &[f64], mut a: f64, mut b: f64) -> f64 {
    let mut fa = poly_eval(c, a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = poly_eval(c, m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

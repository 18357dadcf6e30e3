//! Monte Carlo ground truth: channel sampling, ZF SNRs, outage, capacity and
//! ML-rate estimates, and empirical checks of the β₁/β₂ factorization.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::channel::{
    checked_cholesky, steering_vectors, CMatrix, CVector, ChannelSpec, CorrelationMatrix,
    LosComponent,
};
use crate::special::kolmogorov_pvalue;
use crate::{Error, Result};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Every `audit_every`-th draw is re-evaluated with the Hermitian-form route.
    pub audit_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_samples: 1_000_000,
            seed: 1,
            batch_size: 10_000,
            audit_every: 997,
        }
    }
}

impl SimConfig {
    pub fn with_samples(n_samples: usize, seed: u64) -> SimConfig {
        SimConfig {
            n_samples,
            seed,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.batch_size == 0 || self.audit_every == 0 {
            return Err(Error::InvalidArgument(
                "n_samples, batch_size and audit_every must be positive".into(),
            ));
        }
        Ok(())
    }

    fn batches(&self) -> Vec<(u64, usize)> {
        let full = self.n_samples / self.batch_size;
        let mut out: Vec<(u64, usize)> = (0..full).map(|b| (b as u64, self.batch_size)).collect();
        let rest = self.n_samples % self.batch_size;
        if rest > 0 {
            out.push((full as u64, rest));
        }
        out
    }

    fn rng(&self, batch: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(batch);
        rng
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    fn from_sums(sum: f64, sum_sq: f64, n: usize) -> MeanSe {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        MeanSe {
            mean,
            se: (var / nf).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub n_samples: usize,
    pub p_out: f64,
    /// Binomial standard error of `p_out`.
    pub p_out_se: f64,
    pub cap_per_stream: Vec<MeanSe>,
    pub ml_sum_rate: MeanSe,
    pub zf_sum_rate: MeanSe,
    pub mean_snr1: MeanSe,
    /// Draws whose Gram matrix was numerically singular and were resampled.
    pub singular_draws: usize,
    pub audited: usize,
    /// Largest relative gap between the inverse-diagonal and Hermitian-form SNRs.
    pub max_dual_discrepancy: f64,
}

/// Precomputed sampler for H = a bᴴ + H_w R_{T,K}^{1/2}.
#[derive(Clone, Debug)]
pub struct ChannelSampler {
    n_rx: usize,
    n_tx: usize,
    /// H_d, column-major.
    h_d: Vec<C>,
    /// Factor Fᴴ with F Fᴴ = R_{T,K}, column-major.
    f_h: Vec<C>,
}

impl ChannelSampler {
    pub fn new(
        spec: &ChannelSpec,
        los: &LosComponent,
        r_t: &CorrelationMatrix,
    ) -> Result<ChannelSampler> {
        spec.validate()?;
        let (n_rx, n_tx) = (spec.n_rx, spec.n_tx);
        if r_t.dim() != n_tx || los.a.len() != n_rx || los.b.len() != n_tx {
            return Err(Error::InvalidArgument(
                "dimension mismatch between spec, LoS and R_T".into(),
            ));
        }
        let rtk = &r_t.r_t / C::new(spec.k_linear() + 1.0, 0.0);
        let f = psd_factor(&rtk)?;
        let f_h = f.adjoint();
        let h_d = los.h_d();
        Ok(ChannelSampler {
            n_rx,
            n_tx,
            h_d: h_d.as_slice().to_vec(),
            f_h: f_h.as_slice().to_vec(),
        })
    }

    pub fn from_spec(spec: &ChannelSpec, r_t: &CorrelationMatrix) -> Result<ChannelSampler> {
        ChannelSampler::new(spec, &steering_vectors(spec)?, r_t)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_rx, self.n_tx)
    }

    /// Fills `h` (column-major, N_R × N_T) with one draw; `w` is scratch of the same size.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, w: &mut [C], h: &mut [C]) {
        let (nr, nt) = (self.n_rx, self.n_tx);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for x in w.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *x = C::new(re * s, im * s);
        }
        h.copy_from_slice(&self.h_d);
        for j in 0..nt {
            for k in 0..nt {
                let f = self.f_h[k + j * nt];
                if f == ZERO {
                    continue;
                }
                let (wk, hj) = (&w[k * nr..(k + 1) * nr], j * nr);
                for i in 0..nr {
                    h[hj + i] += wk[i] * f;
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let mut w = vec![ZERO; self.n_rx * self.n_tx];
        let mut h = w.clone();
        self.fill(rng, &mut w, &mut h);
        CMatrix::from_column_slice(self.n_rx, self.n_tx, &h)
    }
}

/// Any F with F Fᴴ = R: Cholesky when it succeeds, otherwise the eigen square root.
fn psd_factor(r: &CMatrix) -> Result<CMatrix> {
    if let Some(ch) = checked_cholesky(r.clone()) {
        return Ok(ch.l());
    }
    let eig = SymmetricEigen::new(r.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut f = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -1e-10 * scale.max(1e-300) {
            return Err(Error::NotPsd(lam));
        }
        let s = C::new(lam.max(0.0).sqrt(), 0.0);
        f.column_mut(j).iter_mut().for_each(|x| *x *= s);
    }
    Ok(f)
}

/// One channel draw H = a bᴴ + H_w R_{T,K}^{1/2}.
pub fn sample_channel<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    r_t: &CorrelationMatrix,
    rng: &mut R,
) -> Result<CMatrix> {
    Ok(ChannelSampler::from_spec(spec, r_t)?.sample(rng))
}

/// Dense Hermitian work buffers for one N_T.
struct GramWork {
    n: usize,
    g: Vec<C>,
    l: Vec<C>,
    y: Vec<C>,
}

impl GramWork {
    fn new(n: usize) -> GramWork {
        GramWork {
            n,
            g: vec![ZERO; n * n],
            l: vec![ZERO; n * n],
            y: vec![ZERO; n],
        }
    }

    /// G = HᴴH (lower triangle, row-major index j*n + k for k ≤ j).
    fn gram(&mut self, h: &[C], n_rx: usize) {
        let n = self.n;
        for j in 0..n {
            let hj = &h[j * n_rx..(j + 1) * n_rx];
            for k in 0..=j {
                let hk = &h[k * n_rx..(k + 1) * n_rx];
                let mut s = ZERO;
                for i in 0..n_rx {
                    s += hj[i].conj() * hk[i];
                }
                self.g[j * n + k] = s;
            }
        }
    }

    /// Cholesky of `g` + shift·I (lower triangle) into `l`; false when a pivot is not positive.
    fn cholesky(&mut self, shift: f64) -> bool {
        let n = self.n;
        let scale = (0..n).fold(0.0f64, |m, i| m.max(self.g[i * n + i].re + shift));
        for j in 0..n {
            let mut d = self.g[j * n + j].re + shift;
            for k in 0..j {
                d -= self.l[j * n + k].norm_sqr();
            }
            if !(d > 1e-13 * scale) {
                return false;
            }
            let d = d.sqrt();
            self.l[j * n + j] = C::new(d, 0.0);
            for i in j + 1..n {
                let mut s = self.g[i * n + j];
                for k in 0..j {
                    s -= self.l[i * n + k] * self.l[j * n + k].conj();
                }
                self.l[i * n + j] = s / d;
            }
        }
        true
    }

    /// [(HᴴH)⁻¹]_{kk} = ‖L⁻¹ e_k‖².
    fn inverse_diagonal(&mut self, k: usize) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for m in 0..n {
            self.y[m] = ZERO;
        }
        for m in k..n {
            let mut s = if m == k { C::new(1.0, 0.0) } else { ZERO };
            for q in k..m {
                s -= self.l[m * n + q] * self.y[q];
            }
            let v = s / self.l[m * n + m].re;
            self.y[m] = v;
            acc += v.norm_sqr();
        }
        acc
    }

    fn log2_det(&self) -> f64 {
        (0..self.n)
            .map(|j| 2.0 * self.l[j * self.n + j].re.log2())
            .sum()
    }
}

/// Per-stream ZF SNR by the inverse-diagonal route: Γ_s / [(HᴴH)⁻¹]_{kk}.
pub fn zf_snr(h: &CMatrix, gamma_s: f64, stream: usize) -> Result<f64> {
    let (nr, nt) = h.shape();
    if stream >= nt {
        return Err(Error::InvalidArgument(format!(
            "stream {stream} out of range for {nt} columns"
        )));
    }
    let mut w = GramWork::new(nt);
    w.gram(h.as_slice(), nr);
    if !w.cholesky(0.0) {
        return Err(Error::SingularChannel("HᴴH is numerically singular".into()));
    }
    Ok(gamma_s / w.inverse_diagonal(stream))
}

/// Per-stream ZF SNR as the Hermitian form Γ_s h_kᴴ Q h_k with Q the projector
/// onto the orthogonal complement of the other columns.
pub fn zf_snr_hermitian(h: &CMatrix, gamma_s: f64, stream: usize) -> Result<f64> {
    let (nr, nt) = h.shape();
    if stream >= nt {
        return Err(Error::InvalidArgument(format!(
            "stream {stream} out of range for {nt} columns"
        )));
    }
    let hk = h.column(stream).into_owned();
    let others: Vec<usize> = (0..nt).filter(|&j| j != stream).collect();
    let h2 = h.select_columns(&others);
    let gram = h2.adjoint() * &h2;
    let chol = checked_cholesky(gram)
        .ok_or_else(|| Error::SingularChannel("H₂ᴴH₂ is numerically singular".into()))?;
    let proj = &h2 * chol.solve(&h2.adjoint());
    let q = CMatrix::identity(nr, nr) - proj;
    let v = (hk.adjoint() * q * &hk)[(0, 0)].re;
    Ok(gamma_s * v)
}

#[derive(Clone, Debug, Default)]
struct Acc {
    n: usize,
    outage: usize,
    cap: Vec<(f64, f64)>,
    ml: (f64, f64),
    zf: (f64, f64),
    snr1: (f64, f64),
    singular: usize,
    audited: usize,
    max_dual: f64,
}

impl Acc {
    fn merge(mut self, o: Acc) -> Acc {
        self.n += o.n;
        self.outage += o.outage;
        if self.cap.is_empty() {
            self.cap = o.cap;
        } else {
            for (a, b) in self.cap.iter_mut().zip(o.cap) {
                a.0 += b.0;
                a.1 += b.1;
            }
        }
        self.ml = (self.ml.0 + o.ml.0, self.ml.1 + o.ml.1);
        self.zf = (self.zf.0 + o.zf.0, self.zf.1 + o.zf.1);
        self.snr1 = (self.snr1.0 + o.snr1.0, self.snr1.1 + o.snr1.1);
        self.singular += o.singular;
        self.audited += o.audited;
        self.max_dual = self.max_dual.max(o.max_dual);
        self
    }
}

/// Runs `f(batch_index, batch_len)` over the batch schedule in parallel and
/// returns the per-batch results in schedule order.
fn run_batches<T: Send>(
    cfg: &SimConfig,
    f: impl Fn(u64, usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    cfg.batches()
        .into_par_iter()
        .map(|(b, len)| f(b, len))
        .collect()
}

fn simulate_batch(
    sampler: &ChannelSampler,
    gamma_s: f64,
    tau: f64,
    cfg: &SimConfig,
    batch: u64,
    len: usize,
) -> Result<Acc> {
    let (nr, nt) = sampler.dims();
    let mut rng = cfg.rng(batch);
    let mut w = vec![ZERO; nr * nt];
    let mut h = vec![ZERO; nr * nt];
    let mut gw = GramWork::new(nt);
    let mut acc = Acc {
        cap: vec![(0.0, 0.0); nt],
        ..Acc::default()
    };
    let base = batch as usize * cfg.batch_size;
    let mut done = 0;
    while done < len {
        sampler.fill(&mut rng, &mut w, &mut h);
        gw.gram(&h, nr);
        if !gw.cholesky(0.0) {
            acc.singular += 1;
            if acc.singular > 1000 + len {
                return Err(Error::SingularChannel("too many singular draws".into()));
            }
            continue;
        }
        let mut zf = 0.0;
        let mut snr1 = 0.0;
        for k in 0..nt {
            let snr = gamma_s / gw.inverse_diagonal(k);
            let c = snr.ln_1p() / std::f64::consts::LN_2;
            acc.cap[k].0 += c;
            acc.cap[k].1 += c * c;
            zf += c;
            if k == 0 {
                snr1 = snr;
            }
        }
        if snr1 < tau {
            acc.outage += 1;
        }
        acc.snr1 = (acc.snr1.0 + snr1, acc.snr1.1 + snr1 * snr1);
        acc.zf = (acc.zf.0 + zf, acc.zf.1 + zf * zf);
        if (base + done) % cfg.audit_every == 0 {
            let hm = CMatrix::from_column_slice(nr, nt, &h);
            let other = zf_snr_hermitian(&hm, gamma_s, 0)?;
            acc.max_dual = acc.max_dual.max(((other - snr1) / snr1).abs());
            acc.audited += 1;
        }
        // log₂det(I + Γ_s HᴴH) through a Cholesky of the shifted Gram matrix.
        for x in gw.g.iter_mut() {
            *x *= gamma_s;
        }
        let ml = if gw.cholesky(1.0) {
            gw.log2_det()
        } else {
            f64::NAN
        };
        acc.ml = (acc.ml.0 + ml, acc.ml.1 + ml * ml);
        acc.n += 1;
        done += 1;
    }
    Ok(acc)
}

/// Monte Carlo estimates at the channel's own LoS geometry.
pub fn estimate(
    spec: &ChannelSpec,
    r_t: &CorrelationMatrix,
    gamma_s: f64,
    tau: f64,
    cfg: &SimConfig,
) -> Result<Estimates> {
    estimate_with_los(spec, &steering_vectors(spec)?, r_t, gamma_s, tau, cfg)
}

pub fn estimate_with_los(
    spec: &ChannelSpec,
    los: &LosComponent,
    r_t: &CorrelationMatrix,
    gamma_s: f64,
    tau: f64,
    cfg: &SimConfig,
) -> Result<Estimates> {
    cfg.validate()?;
    if !(gamma_s > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidArgument(
            "gamma_s and tau must be positive".into(),
        ));
    }
    let sampler = ChannelSampler::new(spec, los, r_t)?;
    let parts = run_batches(cfg, |b, len| {
        simulate_batch(&sampler, gamma_s, tau, cfg, b, len)
    })?;
    let acc = parts.into_iter().fold(Acc::default(), Acc::merge);
    let n = acc.n;
    let p = acc.outage as f64 / n as f64;
    let cap_per_stream: Vec<MeanSe> = acc
        .cap
        .iter()
        .map(|&(s, q)| MeanSe::from_sums(s, q, n))
        .collect();
    Ok(Estimates {
        n_samples: n,
        p_out: p,
        p_out_se: (p * (1.0 - p) / n as f64).sqrt(),
        cap_per_stream,
        ml_sum_rate: MeanSe::from_sums(acc.ml.0, acc.ml.1, n),
        zf_sum_rate: MeanSe::from_sums(acc.zf.0, acc.zf.1, n),
        mean_snr1: MeanSe::from_sums(acc.snr1.0, acc.snr1.1, n),
        singular_draws: acc.singular,
        audited: acc.audited,
        max_dual_discrepancy: acc.max_dual,
    })
}

/// Stream-1 ZF SNR draws, in batch order.
pub fn snr_samples(
    spec: &ChannelSpec,
    los: &LosComponent,
    r_t: &CorrelationMatrix,
    gamma_s: f64,
    cfg: &SimConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let sampler = ChannelSampler::new(spec, los, r_t)?;
    let (nr, nt) = sampler.dims();
    let parts = run_batches(cfg, |b, len| {
        let mut rng = cfg.rng(b);
        let mut w = vec![ZERO; nr * nt];
        let mut h = vec![ZERO; nr * nt];
        let mut gw = GramWork::new(nt);
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            sampler.fill(&mut rng, &mut w, &mut h);
            gw.gram(&h, nr);
            if gw.cholesky(0.0) {
                out.push(gamma_s / gw.inverse_diagonal(0));
            }
        }
        Ok(out)
    })?;
    Ok(parts.concat())
}

/// Intermediate quantities of the β₁/β₂ factorization for one draw.
#[derive(Clone, Debug)]
pub struct TransformChain {
    /// F = V H, whose mean has only its first row nonzero.
    pub f: CMatrix,
    /// E₂ = F₂ Ṽ.
    pub e2: CMatrix,
    /// G₂ = E₂ A⁻ᴴ, unit-covariance rows with a single nonzero mean entry.
    pub g2: CMatrix,
    pub u2: CMatrix,
    pub t2: CMatrix,
    pub beta1: f64,
    pub beta2: f64,
    /// [Q₂]₁₁ computed directly from F₂.
    pub q2_11: f64,
}

/// The deterministic part of the chain: V, Ṽ and A.
#[derive(Clone, Debug)]
pub struct ChainFrame {
    /// Unitary with first row aᴴ.
    pub v: CMatrix,
    /// Unitary with first column b̃/‖b̃‖.
    pub v_tilde: CMatrix,
    /// Upper triangular with positive diagonal, A Aᴴ = Ṽᴴ R₂₂ Ṽ.
    pub a: CMatrix,
    a_inv_h: CMatrix,
    pub x2: f64,
}

/// Unitary whose first column is the unit vector `u`.
fn unitary_with_first_column(u: &CVector) -> CMatrix {
    let n = u.len();
    let mut m = CMatrix::zeros(n, n + 1);
    m.set_column(0, u);
    for i in 0..n {
        m[(i, i + 1)] = C::new(1.0, 0.0);
    }
    let mut q = m.qr().q();
    let phase = (u.adjoint() * q.column(0))[(0, 0)];
    let fix = phase.conj() / phase.norm();
    q.column_mut(0).iter_mut().for_each(|x| *x *= fix);
    q
}

/// Upper-triangular A with positive diagonal and A Aᴴ = M, via a reversed Cholesky.
fn upper_cholesky(m: &CMatrix) -> Result<CMatrix> {
    let n = m.nrows();
    let rev = CMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
    let l = checked_cholesky(rev)
        .ok_or_else(|| Error::NotPsd(SymmetricEigen::new(m.clone()).eigenvalues.min()))?
        .l();
    Ok(CMatrix::from_fn(n, n, |i, j| l[(n - 1 - i, n - 1 - j)]))
}

impl ChainFrame {
    pub fn new(
        spec: &ChannelSpec,
        los: &LosComponent,
        r_t: &CorrelationMatrix,
    ) -> Result<ChainFrame> {
        spec.validate()?;
        let nt = spec.n_tx;
        let v = unitary_with_first_column(&los.a.normalize()).adjoint();
        let nb = los.b_tilde.norm();
        let v_tilde = if nb > 0.0 {
            unitary_with_first_column(&(&los.b_tilde / C::new(nb, 0.0)))
        } else {
            CMatrix::identity(nt - 1, nt - 1)
        };
        let rtk = &r_t.r_t / C::new(spec.k_linear() + 1.0, 0.0);
        let r22 = rtk.view((1, 1), (nt - 1, nt - 1)).into_owned();
        let a = upper_cholesky(&(v_tilde.adjoint() * r22 * &v_tilde))?;
        let a_inv_h = a
            .adjoint()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateCorrelation("Cholesky factor is singular".into()))?;
        let x2 = nb * nb / a[(0, 0)].norm_sqr();
        Ok(ChainFrame {
            v,
            v_tilde,
            a,
            a_inv_h,
            x2,
        })
    }

    /// Mean of G₂, which should have the single entry √x₂ at (1, 1) up to phase.
    pub fn g2_mean(&self, los: &LosComponent) -> CMatrix {
        let hd2 = los.h_d().columns(1, los.b.len() - 1).into_owned();
        &self.v * hd2 * &self.v_tilde * &self.a_inv_h
    }

    pub fn chain(&self, h: &CMatrix) -> Result<TransformChain> {
        let nt = h.ncols();
        let f = &self.v * h;
        let f2 = f.columns(1, nt - 1).into_owned();
        let e2 = &f2 * &self.v_tilde;
        let g2 = &e2 * &self.a_inv_h;
        let qr = g2.clone().qr();
        let (u2, t2) = (qr.q(), qr.r());
        let row: Vec<f64> = (0..nt - 1).map(|j| u2[(0, j)].norm_sqr()).collect();
        let beta1 = 1.0 - row[0];
        let beta2 = 1.0 - row[1..].iter().sum::<f64>() / beta1;
        let gram = f2.adjoint() * &f2;
        let chol = checked_cholesky(gram)
            .ok_or_else(|| Error::SingularChannel("F₂ᴴF₂ is numerically singular".into()))?;
        let r1 = f2.row(0).adjoint();
        let q2_11 = 1.0 - (f2.row(0) * chol.solve(&r1))[(0, 0)].re;
        Ok(TransformChain {
            f,
            e2,
            g2,
            u2,
            t2,
            beta1,
            beta2,
            q2_11,
        })
    }
}

/// Poisson-mixed Pochhammer series for E{β₁ⁿ}.
pub fn beta1_moment(n_rx: usize, x2: f64, n: u32) -> f64 {
    let a = (n_rx - 1) as f64;
    let hi = (x2 + 40.0 * x2.sqrt() + 60.0).ceil() as usize;
    let mut sum = 0.0;
    for n2 in 0..=hi {
        let ln_w = if x2 > 0.0 {
            -x2 + n2 as f64 * x2.ln() - statrs::function::gamma::ln_gamma(n2 as f64 + 1.0)
        } else if n2 == 0 {
            0.0
        } else {
            break;
        };
        let mut ratio = 1.0;
        for i in 0..n {
            ratio *= (a + i as f64) / (n2 as f64 + n_rx as f64 + i as f64);
        }
        sum += ln_w.exp() * ratio;
    }
    sum
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub order: u32,
    pub sample: f64,
    pub se: f64,
    pub theory: f64,
}

impl MomentCheck {
    pub fn z_score(&self) -> f64 {
        (self.sample - self.theory) / self.se
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub n_samples: usize,
    pub x2: f64,
    pub beta1_moments: Vec<MomentCheck>,
    /// Shape parameters (N, N_T − 2) of the reference beta law for β₂.
    pub beta2_shape: (f64, f64),
    pub ks_distance: Option<f64>,
    pub ks_pvalue: Option<f64>,
    pub corr: f64,
    /// max |[Q₂]₁₁ − β₁β₂| over all draws.
    pub max_identity_error: f64,
}

#[derive(Default)]
struct LemmaAcc {
    n: usize,
    pow: [f64; 6],
    b2: Vec<f64>,
    s1: f64,
    s2: f64,
    s11: f64,
    s22: f64,
    s12: f64,
    max_err: f64,
}

pub fn lemma_checks(
    spec: &ChannelSpec,
    r_t: &CorrelationMatrix,
    cfg: &SimConfig,
) -> Result<LemmaReport> {
    lemma_checks_with_los(spec, &steering_vectors(spec)?, r_t, cfg)
}

pub fn lemma_checks_with_los(
    spec: &ChannelSpec,
    los: &LosComponent,
    r_t: &CorrelationMatrix,
    cfg: &SimConfig,
) -> Result<LemmaReport> {
    cfg.validate()?;
    if spec.n_tx < 2 {
        return Err(Error::InvalidSpec(
            "the factorization needs n_tx ≥ 2".into(),
        ));
    }
    let frame = ChainFrame::new(spec, los, r_t)?;
    let sampler = ChannelSampler::new(spec, los, r_t)?;
    let parts = run_batches(cfg, |b, len| {
        let mut rng = cfg.rng(b);
        let mut acc = LemmaAcc {
            b2: Vec::with_capacity(len),
            ..LemmaAcc::default()
        };
        while acc.n < len {
            let h = sampler.sample(&mut rng);
            let c = match frame.chain(&h) {
                Ok(c) => c,
                Err(Error::SingularChannel(_)) => continue,
                Err(e) => return Err(e),
            };
            let (b1, b2) = (c.beta1, c.beta2);
            acc.max_err = acc.max_err.max((c.q2_11 - b1 * b2).abs());
            let mut p = 1.0;
            for slot in acc.pow.iter_mut() {
                p *= b1;
                *slot += p;
            }
            acc.s1 += b1;
            acc.s2 += b2;
            acc.s11 += b1 * b1;
            acc.s22 += b2 * b2;
            acc.s12 += b1 * b2;
            acc.b2.push(b2);
            acc.n += 1;
        }
        Ok(acc)
    })?;
    let mut t = LemmaAcc::default();
    for p in parts {
        t.n += p.n;
        for (a, b) in t.pow.iter_mut().zip(p.pow) {
            *a += b;
        }
        t.s1 += p.s1;
        t.s2 += p.s2;
        t.s11 += p.s11;
        t.s22 += p.s22;
        t.s12 += p.s12;
        t.max_err = t.max_err.max(p.max_err);
        t.b2.extend(p.b2);
    }
    let nf = t.n as f64;
    let beta1_moments = (1..=3u32)
        .map(|k| {
            let m = t.pow[k as usize - 1] / nf;
            let m2 = t.pow[2 * k as usize - 1] / nf;
            MomentCheck {
                order: k,
                sample: m,
                se: ((m2 - m * m).max(0.0) / nf).sqrt(),
                theory: beta1_moment(spec.n_rx, frame.x2, k),
            }
        })
        .collect();
    let shape = (spec.n_dof() as f64, spec.n_tx as f64 - 2.0);
    let (ks_distance, ks_pvalue) = if spec.n_tx >= 3 {
        let law = Beta::new(shape.0, shape.1).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let d = ks_distance(&mut t.b2, |x| law.cdf(x));
        (Some(d), Some(kolmogorov_pvalue(d, t.n)))
    } else {
        (None, None)
    };
    let cov = t.s12 / nf - (t.s1 / nf) * (t.s2 / nf);
    let v1 = t.s11 / nf - (t.s1 / nf).powi(2);
    let v2 = t.s22 / nf - (t.s2 / nf).powi(2);
    let corr = if v1 > 0.0 && v2 > 0.0 {
        cov / (v1 * v2).sqrt()
    } else {
        0.0
    };
    Ok(LemmaReport {
        n_samples: t.n,
        x2: frame.x2,
        beta1_moments,
        beta2_shape: shape,
        ks_distance,
        ks_pvalue,
        corr,
        max_identity_error: t.max_err,
    })
}

/// Two-sided Kolmogorov–Smirnov distance of the sample against `cdf`; sorts in place.
pub fn ks_distance(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

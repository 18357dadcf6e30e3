//! Closed-form baselines: the central-Wishart gamma approximation, the exact
//! Rayleigh outage and the worst-case LoS condition.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    checked_cholesky, derive_from_los, steering_vectors, CMatrix, ChannelSpec, CorrelationMatrix,
    LosComponent,
};
use crate::kernel::MeasureKind;
use crate::special::{e1_scaled, gamma_p_int};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaApprox {
    /// Γ̂₁ = Γ_s/[R̂⁻¹]₁₁ with R̂ = R_{T,K} + H_dᴴH_d/N_R.
    pub gamma1_hat: f64,
    pub n_dof: usize,
}

impl GammaApprox {
    pub fn new(spec: &ChannelSpec, r_t: &CorrelationMatrix, gamma_s: f64) -> Result<GammaApprox> {
        GammaApprox::with_los(spec, &steering_vectors(spec)?, r_t, gamma_s)
    }

    pub fn with_los(
        spec: &ChannelSpec,
        los: &LosComponent,
        r_t: &CorrelationMatrix,
        gamma_s: f64,
    ) -> Result<GammaApprox> {
        spec.validate()?;
        let hd = los.h_d();
        let r_hat = &r_t.r_t / Complex64::new(spec.k_linear() + 1.0, 0.0)
            + hd.adjoint() * &hd / Complex64::new(spec.n_rx as f64, 0.0);
        let inv11 = inverse_11(&r_hat)?;
        Ok(GammaApprox {
            gamma1_hat: gamma_s / inv11,
            n_dof: spec.n_dof(),
        })
    }

    pub fn measure(&self, kind: &MeasureKind) -> Result<f64> {
        gamma_measure(self.n_dof, self.gamma1_hat, kind)
    }
}

fn inverse_11(m: &CMatrix) -> Result<f64> {
    let n = m.nrows();
    let chol = checked_cholesky(m.clone())
        .ok_or_else(|| Error::DegenerateCorrelation("R̂ is not invertible".into()))?;
    let mut e1 = crate::channel::CVector::zeros(n);
    e1[0] = Complex64::new(1.0, 0.0);
    Ok(chol.solve(&e1)[0].re)
}

/// Measures of a Gamma(n, θ) SNR in closed form.
pub fn gamma_measure(n: usize, theta: f64, kind: &MeasureKind) -> Result<f64> {
    if n == 0 || !(theta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma law needs n ≥ 1 and θ > 0 (n = {n}, θ = {theta})"
        )));
    }
    let nf = n as f64;
    match *kind {
        MeasureKind::Mgf { s } => {
            if !(1.0 - s * theta > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "mgf argument s = {s} beyond 1/θ"
                )));
            }
            Ok((1.0 - s * theta).powf(-nf))
        }
        MeasureKind::Pdf { t } => {
            if t < 0.0 {
                return Err(Error::InvalidArgument(format!("pdf argument t = {t} < 0")));
            }
            if t == 0.0 {
                return Ok(if n == 1 { 1.0 / theta } else { 0.0 });
            }
            let ln = (nf - 1.0) * t.ln()
                - t / theta
                - nf * theta.ln()
                - statrs::function::gamma::ln_gamma(nf);
            Ok(ln.exp())
        }
        MeasureKind::OutageProb { tau } => rayleigh_outage(n, tau / theta),
        MeasureKind::Capacity => Ok(gamma_capacity(n, theta)),
    }
}

/// E log₂(1 + γ) for γ ~ Gamma(n, θ): e^{1/θ} Σ_{k=1..n} E_k(1/θ) / ln 2.
fn gamma_capacity(n: usize, theta: f64) -> f64 {
    let x = 1.0 / theta;
    // f_k = e^x E_k(x), with f_{k+1} = (1 − x f_k)/k.
    let mut f = e1_scaled(x);
    let mut sum = f;
    for k in 1..n {
        f = (1.0 - x * f) / k as f64;
        sum += f;
    }
    sum / std::f64::consts::LN_2
}

/// Exact Rayleigh outage P(N, τ/Γ₁).
pub fn rayleigh_outage(n_dof: usize, tau_over_gamma1: f64) -> Result<f64> {
    if n_dof == 0 || !(tau_over_gamma1 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rayleigh outage needs n ≥ 1 and τ/Γ₁ ≥ 0 (n = {n_dof}, τ/Γ₁ = {tau_over_gamma1})"
        )));
    }
    Ok(gamma_p_int(n_dof as u32, &tau_over_gamma1))
}

/// Closed-form measure from the gamma approximation at the channel's geometry.
pub fn gamma_approx_measures(
    spec: &ChannelSpec,
    r_t: &CorrelationMatrix,
    gamma_s: f64,
    kind: &MeasureKind,
) -> Result<f64> {
    GammaApprox::new(spec, r_t, gamma_s)?.measure(kind)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    /// ‖h_{d,1} − H_{d,2} r_{2,1}‖ with r_{2,1} = R₂₂⁻¹ × (column 1 of R_{T,K} below the diagonal).
    pub residual: f64,
    pub x1: f64,
}

pub fn worst_case_condition(spec: &ChannelSpec, r_t: &CorrelationMatrix) -> Result<WorstCase> {
    worst_case_with_los(spec, &steering_vectors(spec)?, r_t)
}

pub fn worst_case_with_los(
    spec: &ChannelSpec,
    los: &LosComponent,
    r_t: &CorrelationMatrix,
) -> Result<WorstCase> {
    let d = derive_from_los(spec, los, r_t, 1.0)?;
    let hd = los.h_d();
    let n = spec.n_tx;
    let h1 = hd.column(0).into_owned();
    let h2 = hd.columns(1, n - 1).into_owned();
    let residual = (h1 - h2 * &d.r21).norm();
    Ok(WorstCase {
        residual,
        x1: d.params.x1,
    })
}

/// LoS component with b₁ replaced so that h_{d,1} = H_{d,2} r_{2,1}, hence x₁ = 0.
pub fn worst_case_los(spec: &ChannelSpec, r_t: &CorrelationMatrix) -> Result<LosComponent> {
    let mut los = steering_vectors(spec)?;
    let d = derive_from_los(spec, &los, r_t, 1.0)?;
    los.b[0] = (d.r21.adjoint() * &los.b_tilde)[(0, 0)];
    Ok(los)
}

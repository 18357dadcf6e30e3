//! Rank-1 Rician channel statistics and their reduction to the scalar
//! parameters (Γ₁, x₁, x₂, c₁, N) consumed by every engine.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{Scenario, WinnerConfig};
use crate::error::{Error, Result};
use crate::quad;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Which trigonometric function maps the angle to the array phase.
///
/// `Sine` measures angles from broadside; `Cosine` measures them from the array axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseConvention {
    #[default]
    Sine,
    Cosine,
}

impl PhaseConvention {
    pub fn apply(self, deg: f64) -> f64 {
        match self {
            PhaseConvention::Sine => deg.to_radians().sin(),
            PhaseConvention::Cosine => deg.to_radians().cos(),
        }
    }
}

/// Ratio between the Laplacian scale parameter and the azimuth spread.
pub const DEFAULT_PAS_SCALE: f64 = 1.07;

fn default_angle() -> f64 {
    5.0
}
fn default_spacing() -> f64 {
    0.5
}
fn default_pas_scale() -> f64 {
    DEFAULT_PAS_SCALE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub n_rx: usize,
    pub n_tx: usize,
    /// Rician K-factor in dB; `-inf` means K = 0 (Rayleigh).
    pub k_db: f64,
    pub as_deg: f64,
    #[serde(default = "default_angle")]
    pub theta_r_deg: f64,
    #[serde(default = "default_angle")]
    pub theta_t_deg: f64,
    #[serde(default = "default_angle")]
    pub theta_c_deg: f64,
    #[serde(default = "default_spacing")]
    pub spacing_wl: f64,
    #[serde(default)]
    pub phase: PhaseConvention,
    #[serde(default = "default_pas_scale")]
    pub pas_scale: f64,
}

impl ChannelSpec {
    pub fn new(n_rx: usize, n_tx: usize, k_db: f64, as_deg: f64) -> ChannelSpec {
        ChannelSpec {
            n_rx,
            n_tx,
            k_db,
            as_deg,
            theta_r_deg: default_angle(),
            theta_t_deg: default_angle(),
            theta_c_deg: default_angle(),
            spacing_wl: default_spacing(),
            phase: PhaseConvention::default(),
            pas_scale: DEFAULT_PAS_SCALE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx < 2 {
            return Err(Error::InvalidSpec(format!("n_tx = {} < 2", self.n_tx)));
        }
        if self.n_rx < self.n_tx {
            return Err(Error::InvalidSpec(format!(
                "n_rx = {} < n_tx = {}",
                self.n_rx, self.n_tx
            )));
        }
        if !(self.as_deg > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "as_deg = {} must be positive",
                self.as_deg
            )));
        }
        if self.k_db.is_nan() || self.k_db == f64::INFINITY {
            return Err(Error::InvalidSpec(format!(
                "k_db = {} is not finite",
                self.k_db
            )));
        }
        if !(self.spacing_wl > 0.0) || !(self.pas_scale > 0.0) {
            return Err(Error::InvalidSpec(
                "spacing and PAS scale must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn k_linear(&self) -> f64 {
        db_to_linear(self.k_db)
    }

    pub fn n_dof(&self) -> usize {
        self.n_rx - self.n_tx + 1
    }

    pub fn with_k_db(&self, k_db: f64) -> ChannelSpec {
        ChannelSpec {
            k_db,
            ..self.clone()
        }
    }

    pub fn pas(&self) -> PasModel {
        PasModel {
            scale: self.pas_scale,
            phase: self.phase,
        }
    }

    /// Transmit correlation matrix implied by the channel's AS and geometry.
    pub fn correlation(&self) -> Result<CorrelationMatrix> {
        laplacian_correlation_with(
            self.as_deg,
            self.theta_c_deg,
            self.n_tx,
            self.spacing_wl,
            &self.pas(),
        )
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    if db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(db / 10.0)
    }
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Γ_s from Γ_b for QPSK (two bits per symbol).
pub fn gamma_s_from_gamma_b_db(gamma_b_db: f64) -> f64 {
    2.0 * db_to_linear(gamma_b_db)
}

#[derive(Clone, Debug)]
pub struct LosComponent {
    pub a: CVector,
    pub b: CVector,
    pub b_tilde: CVector,
}

impl LosComponent {
    /// H_d = a bᴴ.
    pub fn h_d(&self) -> CMatrix {
        &self.a * self.b.adjoint()
    }

    /// Copy with the transmit entries cyclically rotated so `stream` comes first.
    pub fn rotated(&self, stream: usize) -> LosComponent {
        let n = self.b.len();
        let b = CVector::from_fn(n, |i, _| self.b[(i + stream) % n]);
        let b_tilde = b.rows(1, n - 1).into_owned();
        LosComponent {
            a: self.a.clone(),
            b,
            b_tilde,
        }
    }
}

/// Cholesky factorization that rejects indefinite input.
///
/// nalgebra's complex Cholesky takes complex square roots of negative pivots
/// instead of failing, so the diagonal is checked here.
pub fn checked_cholesky(
    m: CMatrix,
) -> Option<nalgebra::linalg::Cholesky<Complex64, nalgebra::Dyn>> {
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.re.abs()));
    let ch = m.cholesky()?;
    let ok = ch
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 1e-14 * scale.sqrt() && d.im.abs() <= 1e-12 * d.re);
    ok.then_some(ch)
}

fn ula(n: usize, spacing_wl: f64, u: f64) -> CVector {
    let norm = 1.0 / (n as f64).sqrt();
    CVector::from_fn(n, |k, _| {
        Complex64::from_polar(
            norm,
            -2.0 * std::f64::consts::PI * spacing_wl * k as f64 * u,
        )
    })
}

pub fn steering_vectors(spec: &ChannelSpec) -> Result<LosComponent> {
    spec.validate()?;
    let a = ula(
        spec.n_rx,
        spec.spacing_wl,
        spec.phase.apply(spec.theta_r_deg),
    );
    let k = spec.k_linear();
    let scale = (k / (k + 1.0) * (spec.n_rx * spec.n_tx) as f64).sqrt();
    let b = ula(
        spec.n_tx,
        spec.spacing_wl,
        spec.phase.apply(spec.theta_t_deg),
    ) * Complex64::new(scale, 0.0);
    let b_tilde = b.rows(1, spec.n_tx - 1).into_owned();
    Ok(LosComponent { a, b, b_tilde })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub r_t: CMatrix,
}

impl CorrelationMatrix {
    pub fn identity(n: usize) -> CorrelationMatrix {
        CorrelationMatrix {
            r_t: CMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.r_t.nrows()
    }

    pub fn r12_abs(&self) -> f64 {
        self.r_t[(0, 1)].norm()
    }

    /// Checks Hermitian symmetry, unit diagonal and positive semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.r_t.ncols() != n {
            return Err(Error::InvalidArgument(
                "correlation matrix must be square".into(),
            ));
        }
        for i in 0..n {
            if (self.r_t[(i, i)] - Complex64::new(1.0, 0.0)).norm() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry {i} is not 1"
                )));
            }
            for j in 0..i {
                if (self.r_t[(i, j)] - self.r_t[(j, i)].conj()).norm() > 1e-9 {
                    return Err(Error::InvalidArgument(
                        "correlation matrix is not Hermitian".into(),
                    ));
                }
            }
        }
        let min = self.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::NotPsd(min));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let eig = nalgebra::SymmetricEigen::new(self.r_t.clone());
        eig.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Copy with rows and columns cyclically rotated so `stream` comes first.
    pub fn rotated(&self, stream: usize) -> CorrelationMatrix {
        let n = self.dim();
        CorrelationMatrix {
            r_t: CMatrix::from_fn(n, n, |i, j| self.r_t[((i + stream) % n, (j + stream) % n)]),
        }
    }

    /// Rescales an arbitrary positive-diagonal Hermitian matrix to unit diagonal.
    pub fn normalized(m: &CMatrix) -> CorrelationMatrix {
        let d: Vec<f64> = (0..m.nrows()).map(|i| m[(i, i)].re.sqrt()).collect();
        CorrelationMatrix {
            r_t: CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] / (d[i] * d[j])),
        }
    }
}

/// Shape of the power azimuth spectrum used to build R_T.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PasModel {
    /// σ_L / AS.
    pub scale: f64,
    pub phase: PhaseConvention,
}

impl Default for PasModel {
    fn default() -> Self {
        PasModel {
            scale: DEFAULT_PAS_SCALE,
            phase: PhaseConvention::Sine,
        }
    }
}

pub fn laplacian_correlation(
    as_deg: f64,
    theta_c_deg: f64,
    n: usize,
    spacing_wl: f64,
) -> Result<CorrelationMatrix> {
    laplacian_correlation_with(as_deg, theta_c_deg, n, spacing_wl, &PasModel::default())
}

/// Transmit correlation for a Laplacian PAS truncated to θ_c ± 180°.
pub fn laplacian_correlation_with(
    as_deg: f64,
    theta_c_deg: f64,
    n: usize,
    spacing_wl: f64,
    pas: &PasModel,
) -> Result<CorrelationMatrix> {
    if !(as_deg > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "as_deg = {as_deg} must be positive"
        )));
    }
    let sigma = pas.scale * as_deg;
    let rate = std::f64::consts::SQRT_2 / sigma;
    // Mass of the truncated density, in closed form.
    let mass = 2.0 / rate * (-(-rate * 180.0).exp_m1());
    let lo = theta_c_deg - 180.0;
    let hi = theta_c_deg + 180.0;
    let mut breaks = vec![lo];
    for w in [8.0, 1.0] {
        if w * sigma < 180.0 {
            breaks.push(theta_c_deg - w * sigma);
        }
    }
    breaks.push(theta_c_deg);
    for w in [1.0, 8.0] {
        if w * sigma < 180.0 {
            breaks.push(theta_c_deg + w * sigma);
        }
    }
    breaks.push(hi);

    let mut lags = vec![Complex64::new(1.0, 0.0); n];
    for (d, lag) in lags.iter_mut().enumerate().skip(1) {
        let omega = 2.0 * std::f64::consts::PI * spacing_wl * d as f64;
        let r = quad::integrate(
            |th| {
                let w = (-rate * (th - theta_c_deg).abs()).exp() / mass;
                Complex64::from_polar(w, -omega * pas.phase.apply(th))
            },
            &breaks,
            1e-13,
            1e-12,
            50_000,
        );
        *lag = r.value;
    }
    let r_t = CMatrix::from_fn(n, n, |p, q| {
        if p >= q {
            lags[p - q]
        } else {
            lags[q - p].conj()
        }
    });
    let cm = CorrelationMatrix { r_t };
    let min = cm.min_eigenvalue();
    if min < -1e-8 {
        return Err(Error::NotPsd(min));
    }
    Ok(cm)
}

/// Scalars that fully parameterize the performance series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrParams {
    pub gamma1: f64,
    pub x1: f64,
    pub x2: f64,
    /// x₁/x₂; `None` in the Rician–Rayleigh case x₂ = 0.
    pub c1: Option<f64>,
    pub n_dof: usize,
    pub n_rx: usize,
    pub n_tx: usize,
}

impl SnrParams {
    pub fn new(gamma1: f64, x1: f64, x2: f64, n_rx: usize, n_tx: usize) -> SnrParams {
        SnrParams {
            gamma1,
            x1,
            x2,
            c1: if x2 > 0.0 { Some(x1 / x2) } else { None },
            n_dof: n_rx - n_tx + 1,
            n_rx,
            n_tx,
        }
    }

    pub fn is_rician_rayleigh(&self) -> bool {
        self.x2 == 0.0
    }

    /// Same geometry and Γ₁ with the noncentralities moved to x₂ = z along x₁ = c₁z.
    pub fn at_z(&self, z: f64) -> SnrParams {
        let c1 = self.c1.unwrap_or(0.0);
        SnrParams {
            x1: c1 * z,
            x2: z,
            c1: self.c1,
            ..self.clone()
        }
    }
}

/// Intermediates of the SNR parameter derivation.
#[derive(Clone, Debug)]
pub struct SnrDetails {
    pub params: SnrParams,
    pub mu1: Complex64,
    pub r21: CVector,
    /// [R_{T,K}⁻¹]₁₁.
    pub rtk_inv11: f64,
}

pub fn derive_snr_params(
    spec: &ChannelSpec,
    r_t: &CorrelationMatrix,
    gamma_s: f64,
) -> Result<SnrParams> {
    Ok(derive_snr_details(spec, r_t, gamma_s)?.params)
}

/// Parameters of stream `stream`, obtained by cyclic rotation of b and R_T.
pub fn derive_stream_params(
    spec: &ChannelSpec,
    r_t: &CorrelationMatrix,
    gamma_s: f64,
    stream: usize,
) -> Result<SnrParams> {
    let los = steering_vectors(spec)?.rotated(stream);
    Ok(derive_from_los(spec, &los, &r_t.rotated(stream), gamma_s)?.params)
}

pub fn derive_snr_details(
    spec: &ChannelSpec,
    r_t: &CorrelationMatrix,
    gamma_s: f64,
) -> Result<SnrDetails> {
    let los = steering_vectors(spec)?;
    derive_from_los(spec, &los, r_t, gamma_s)
}

/// Derivation from an explicit LoS component (used for constructed test geometries).
pub fn derive_from_los(
    spec: &ChannelSpec,
    los: &LosComponent,
    r_t: &CorrelationMatrix,
    gamma_s: f64,
) -> Result<SnrDetails> {
    spec.validate()?;
    let n = spec.n_tx;
    if r_t.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "R_T is {}x{}, expected {n}x{n}",
            r_t.dim(),
            r_t.dim()
        )));
    }
    let k = spec.k_linear();
    let rtk = &r_t.r_t / Complex64::new(k + 1.0, 0.0);
    let r11 = rtk[(0, 0)].re;
    let r21v = rtk.view((1, 0), (n - 1, 1)).into_owned();
    let r22 = rtk.view((1, 1), (n - 1, n - 1)).into_owned();
    let chol = checked_cholesky(r22.clone())
        .ok_or_else(|| Error::DegenerateCorrelation("R22 is singular".into()))?;
    let r21 = chol.solve(&r21v).column(0).into_owned();
    let schur = r11 - (r21v.adjoint() * &r21)[(0, 0)].re;
    if !(schur > 0.0) {
        return Err(Error::DegenerateCorrelation(format!(
            "Schur complement {schur:e} is not positive"
        )));
    }
    let inv11 = 1.0 / schur;
    let mu1 = los.b[0].conj() - (los.b_tilde.adjoint() * &r21)[(0, 0)];
    let x1 = inv11 * mu1.norm_sqr();
    let x2 = if los.b_tilde.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        0.0
    } else {
        let sol = chol.solve(&los.b_tilde);
        (los.b_tilde.adjoint() * sol)[(0, 0)].re.max(0.0)
    };
    let mut params = SnrParams::new(gamma_s / inv11, x1, x2, spec.n_rx, spec.n_tx);
    if x2 == 0.0 {
        params.c1 = None;
    }
    Ok(SnrDetails {
        params,
        mu1,
        r21,
        rtk_inv11: inv11,
    })
}

/// i.i.d. (K dB, AS°) draws from the scenario's lognormal laws.
pub fn sample_winner_params(
    scenario: Scenario,
    count: usize,
    rng_seed: u64,
    cfg: &WinnerConfig,
) -> Result<Vec<(f64, f64)>> {
    let law = cfg.get(scenario).ok_or_else(|| {
        Error::MissingConfig(format!("lognormal parameters for scenario {scenario:?}"))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let zk: f64 = std_normal.sample(&mut rng);
        let za: f64 = std_normal.sample(&mut rng);
        let k_db = law.k_db_mean + law.k_db_std * zk;
        let as_deg = 10f64.powf(law.as_deg_mean.log10() + law.as_log10_std * za);
        out.push((k_db, as_deg));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element_array_is_unit() {
        let a = ula(1, 0.5, 0.3);
        assert_eq!(a.len(), 1);
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rotation_moves_stream_first() {
        let r = laplacian_correlation(20.0, 5.0, 4, 0.5).unwrap();
        let rot = r.rotated(2);
        assert_eq!(rot.r_t[(0, 1)], r.r_t[(2, 3)]);
        assert_eq!(rot.r_t[(0, 2)], r.r_t[(2, 0)]);
    }

    #[test]
    fn db_conversions() {
        assert_eq!(db_to_linear(f64::NEG_INFINITY), 0.0);
        assert!((db_to_linear(7.0) - 5.011_872_336_272_722).abs() < 1e-12);
        assert!((gamma_s_from_gamma_b_db(0.0) - 2.0).abs() < 1e-15);
    }
}

//! Holonomic gradient method: start from the series at a small noncentrality
//! z₀ and integrate the guessed ODE in z = x₂ (with x₁ = c₁z) to the target.

use serde::{Deserialize, Serialize};

use crate::channel::{derive_snr_params, ChannelSpec, CorrelationMatrix, SnrParams};
use crate::deq::{
    g_coefficients, guess_scaled, to_companion, CompanionSystem, GuessOptions, GuessOutcome,
    OdeOperator,
};
use crate::error::{Error, Result};
use crate::kernel::MeasureKind;
use crate::num::{digits_to_bits, Mp};
use crate::ode::{self, OdeStats, StepControl};
use crate::series::{eval_series, eval_series_derivatives, Precision, TruncationPolicy};

/// Largest operator order tried before giving up, per measure.
pub fn default_max_order(kind: &MeasureKind) -> usize {
    match kind {
        MeasureKind::Mgf { .. } => 3,
        MeasureKind::Pdf { .. } => 4,
        MeasureKind::OutageProb { .. } => 5,
        MeasureKind::Capacity => 7,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step; unbounded when unset.
    pub max_step: Option<f64>,
    /// Leading-coefficient roots within this relative margin of [z₀, z_target] are rejected.
    pub singularity_clearance: f64,
    /// Rician factor (dB) of the expansion point.
    pub z0_k_db: f64,
    /// Lower expansion points are tried in 5 dB steps down to this one.
    pub z0_min_k_db: f64,
    pub init_rel_tol: f64,
    pub init_digits: u32,
    pub guess_digits: u32,
    pub max_guess_digits: u32,
    pub degree_start: usize,
    pub degree_step: usize,
    pub degree_cap: usize,
    /// Overrides the per-measure maximum order.
    pub max_order: Option<usize>,
    pub cert_tol: f64,
    /// Fewest coefficients in the fitted prefix (an equal number is held out).
    pub min_fit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: None,
            singularity_clearance: 1e-3,
            z0_k_db: -25.0,
            z0_min_k_db: -60.0,
            init_rel_tol: 1e-12,
            init_digits: 40,
            guess_digits: 200,
            max_guess_digits: 800,
            degree_start: 8,
            degree_step: 4,
            degree_cap: 24,
            max_order: None,
            cert_tol: 1e-30,
            min_fit: 80,
        }
    }
}

/// The operator chosen for one measure together with how it was found.
#[derive(Clone, Debug)]
pub struct FoundOperator {
    /// Annihilator of h(z).
    pub op: OdeOperator<Mp>,
    pub companion: CompanionSystem,
    pub order: usize,
    pub degree: usize,
    pub minimal_order: usize,
    /// (order, degree, offending root) of rejected minimal candidates.
    pub rejected: Vec<(usize, usize, f64)>,
    pub fit_count: usize,
    pub max_residual: f64,
    pub digits: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HgmResult {
    pub value: f64,
    pub z0: f64,
    pub z_target: f64,
    pub order: usize,
    pub degree: usize,
    /// True when z_target ≤ z₀ and the series alone answered.
    pub series_only: bool,
    pub steps: usize,
    pub evals: usize,
}

fn path_root(c: &CompanionSystem, from: f64, to: f64, clearance: f64) -> Option<f64> {
    let (lo, hi) = (
        from.min(to) * (1.0 - clearance),
        from.max(to) * (1.0 + clearance),
    );
    c.singular_points
        .iter()
        .copied()
        .find(|r| *r >= lo && *r <= hi)
}

fn h_candidates(out: &GuessOutcome<Mp>) -> Vec<OdeOperator<Mp>> {
    let mut list: Vec<OdeOperator<Mp>> = out.candidates.iter().map(|g| g.exp_shift()).collect();
    if out.candidates.len() >= 2 {
        let a = &out.candidates[0];
        let b = &out.candidates[1];
        for w in [1.0, -1.0, 2.0, 0.5] {
            let coeffs = a
                .coeffs
                .iter()
                .zip(&b.coeffs)
                .map(|(qa, qb)| {
                    qa.iter()
                        .zip(qb)
                        .map(|(x, y)| x.clone() + y.clone() * Mp::new(y.prec(), w))
                        .collect()
                })
                .collect();
            if let Some(op) = OdeOperator::new(coeffs).normalized() {
                list.push(op.exp_shift());
            }
        }
    }
    list
}

/// Guesses the annihilator of h along [z_from, z_to], escalating order past
/// candidates whose leading coefficient vanishes on the path, then degree
/// bound, then working precision.
pub fn find_operator(
    kind: &MeasureKind,
    p: &SnrParams,
    z_from: f64,
    z_to: f64,
    cfg: &SolverConfig,
) -> Result<FoundOperator> {
    let max_order = cfg.max_order.unwrap_or_else(|| default_max_order(kind));
    let mut digits = cfg.guess_digits;
    loop {
        match find_at_digits(kind, p, z_from, z_to, cfg, max_order, digits) {
            Err(Error::IllConditioned { .. }) | Err(Error::PrecisionInsufficient(_))
                if digits < cfg.max_guess_digits =>
            {
                digits = (digits * 2).min(cfg.max_guess_digits);
            }
            r => return r,
        }
    }
}

fn find_at_digits(
    kind: &MeasureKind,
    p: &SnrParams,
    z_from: f64,
    z_to: f64,
    cfg: &SolverConfig,
    max_order: usize,
    digits: u32,
) -> Result<FoundOperator> {
    let bits = digits_to_bits(digits);
    let mut degree = cfg.degree_start;
    let mut last_root: Option<f64> = None;
    loop {
        let fit = ((max_order + 1) * (degree + 1) + max_order + 8).max(cfg.min_fit);
        let g = g_coefficients(kind, p, 2 * fit, bits)?;
        let mut rejected = Vec::new();
        let mut minimal_order = None;
        let mut min_order = 1;
        while min_order <= max_order {
            let opts = GuessOptions {
                min_order,
                tol: cfg.cert_tol,
                ..GuessOptions::new(max_order, degree)
            };
            let out = match guess_scaled(&g, &opts) {
                Ok(o) => o,
                Err(Error::NoOperator { .. }) => break,
                Err(e) => return Err(e),
            };
            if !out.certification.passed {
                return Err(Error::PrecisionInsufficient(format!(
                    "operator of order {} failed certification (residual {:e})",
                    out.order, out.certification.max_residual
                )));
            }
            minimal_order.get_or_insert(out.order);
            for op in h_candidates(&out) {
                let comp = match to_companion(
                    &op,
                    z_from,
                    (z_from.min(z_to) * 0.5, z_from.max(z_to) * 1.5),
                ) {
                    Ok(c) => c,
                    Err(Error::SingularExpansionPoint(z)) => {
                        rejected.push((out.order, out.degree, z));
                        last_root = Some(z);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                if let Some(r) = path_root(&comp, z_from, z_to, cfg.singularity_clearance) {
                    rejected.push((out.order, out.degree, r));
                    last_root = Some(r);
                    continue;
                }
                let mut op = op;
                if let Some(pr) = op.provenance.as_mut() {
                    pr.measure = Some(*kind);
                    pr.params = Some(p.clone());
                    pr.function = "h".into();
                }
                return Ok(FoundOperator {
                    order: out.order,
                    degree: op.degree(),
                    companion: comp,
                    op,
                    minimal_order: minimal_order.unwrap_or(out.order),
                    rejected,
                    fit_count: out.certification.fit_coeff_count,
                    max_residual: out.certification.max_residual,
                    digits,
                });
            }
            min_order = out.order + 1;
        }
        if degree >= cfg.degree_cap {
            return Err(match last_root {
                Some(point) => Error::SingularPath {
                    point,
                    from: z_from,
                    to: z_to,
                },
                None => Error::NoOperator {
                    max_order,
                    max_degree: degree,
                },
            });
        }
        degree = (degree + cfg.degree_step).min(cfg.degree_cap);
    }
}

fn init_policy(cfg: &SolverConfig) -> TruncationPolicy {
    TruncationPolicy {
        rel_tol: cfg.init_rel_tol,
        n_max: 150,
        precision: Precision::Digits(cfg.init_digits),
    }
}

/// (h, h′, …, h^{(dim−1)}) at z₀ from the series.
pub fn initial_vector(
    kind: &MeasureKind,
    p: &SnrParams,
    z0: f64,
    dim: usize,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    eval_series_derivatives(kind, p, z0, dim - 1, &init_policy(cfg))
}

/// A companion system with initial stack v0 at z0 and increasing targets.
#[derive(Clone, Debug)]
pub struct HgmProblem {
    pub system: CompanionSystem,
    pub z0: f64,
    pub v0: Vec<f64>,
    pub targets: Vec<f64>,
}

impl HgmProblem {
    pub fn validate(&self, cfg: &SolverConfig) -> Result<()> {
        if self.v0.len() != self.system.dim {
            return Err(Error::InvalidArgument(format!(
                "v0 has {} entries for a {}-dimensional system",
                self.v0.len(),
                self.system.dim
            )));
        }
        if !self.z0.is_finite() || self.targets.iter().any(|t| !t.is_finite() || *t < self.z0) {
            return Err(Error::InvalidArgument(
                "targets must be finite and not below z0".into(),
            ));
        }
        if self.targets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "targets must be strictly increasing".into(),
            ));
        }
        if !(cfg.rel_tol > 0.0 && cfg.abs_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        let end = self.targets.last().copied().unwrap_or(self.z0);
        for &r in &self.system.singular_points {
            if (r - self.z0).abs() <= 1e-9 * self.z0.abs().max(1.0) {
                return Err(Error::SingularExpansionPoint(r));
            }
            if r > self.z0 && r <= end * (1.0 + cfg.singularity_clearance) {
                return Err(Error::SingularPath {
                    point: r,
                    from: self.z0,
                    to: end,
                });
            }
        }
        Ok(())
    }
}

/// Full derivative stacks at each target by Dormand–Prince integration.
pub fn integrate_stack(
    problem: &HgmProblem,
    cfg: &SolverConfig,
) -> Result<(Vec<Vec<f64>>, OdeStats)> {
    problem.validate(cfg)?;
    let ctl = StepControl {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_step: cfg.max_step.unwrap_or(f64::INFINITY),
        ..Default::default()
    };
    let sys = &problem.system;
    ode::integrate(
        |z, v, dv| sys.rhs(z, v, dv),
        problem.z0,
        &problem.v0,
        &problem.targets,
        &ctl,
    )
}

/// h at each target.
pub fn integrate(problem: &HgmProblem, cfg: &SolverConfig) -> Result<(Vec<f64>, OdeStats)> {
    let (states, stats) = integrate_stack(problem, cfg)?;
    Ok((states.into_iter().map(|s| s[0]).collect(), stats))
}

/// End-to-end evaluation for a channel at its target Rician factor.
pub fn hgm_measure(
    spec: &ChannelSpec,
    r_t: &CorrelationMatrix,
    kind: &MeasureKind,
    gamma_s: f64,
    cfg: &SolverConfig,
) -> Result<HgmResult> {
    let p = derive_snr_params(spec, r_t, gamma_s).map_err(|e| e.at("channel"))?;
    hgm_params(kind, &p, spec.k_db, cfg)
}

/// z at Rician factor `k0_db` for a target at `k_db` with noncentrality x₂.
pub fn expansion_point(x2_target: f64, k_db: f64, k0_db: f64) -> f64 {
    x2_target * 10f64.powf((k0_db - k_db) / 10.0)
}

/// Evaluates the measure at z = p.x₂ by the holonomic gradient method; `k_db`
/// is the target Rician factor and places the expansion point.
pub fn hgm_params(
    kind: &MeasureKind,
    p: &SnrParams,
    k_db: f64,
    cfg: &SolverConfig,
) -> Result<HgmResult> {
    kind.validate(p)?;
    let zt = p.x2;
    if p.c1.is_none() || zt == 0.0 || k_db <= cfg.z0_k_db {
        let v = eval_series(kind, p, &init_policy(cfg)).map_err(|e| e.at("series"))?;
        if !v.converged {
            return Err(Error::NoConvergence {
                n_used: v.n_used,
                partial: v.value,
            }
            .at("series"));
        }
        return Ok(HgmResult {
            value: v.value,
            z0: zt,
            z_target: zt,
            order: 0,
            degree: 0,
            series_only: true,
            steps: 0,
            evals: 0,
        });
    }
    let mut k0 = cfg.z0_k_db;
    let mut last_err = None;
    while k0 >= cfg.z0_min_k_db {
        let z0 = expansion_point(zt, k_db, k0);
        k0 -= 5.0;
        match hgm_from(kind, p, z0, cfg) {
            Err(Error::Stage { stage, source })
                if matches!(
                    *source,
                    Error::InitialPointTooLarge { .. } | Error::SingularPath { .. }
                ) =>
            {
                last_err = Some(Error::Stage { stage, source });
            }
            r => return r,
        }
    }
    Err(last_err.unwrap_or(
        Error::InitialPointTooLarge {
            z0: expansion_point(zt, k_db, cfg.z0_k_db),
        }
        .at("series"),
    ))
}

/// h at each of the increasing `targets` along z, from the series at z₀.
pub fn hgm_path(
    kind: &MeasureKind,
    p: &SnrParams,
    z0: f64,
    targets: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, FoundOperator, OdeStats)> {
    let end = targets.last().copied().unwrap_or(z0);
    if !(z0 > 0.0 && z0 < end) {
        return Err(Error::InvalidArgument(format!(
            "expansion point {z0} must lie in (0, {end})"
        )));
    }
    // A z₀ where the series fails needs no operator.
    initial_vector(kind, p, z0, 1, cfg).map_err(|e| e.at("series"))?;
    let found = find_operator(kind, p, z0, end, cfg).map_err(|e| e.at("guess"))?;
    let v0 = initial_vector(kind, p, z0, found.order, cfg).map_err(|e| e.at("series"))?;
    let problem = HgmProblem {
        system: found.companion.clone(),
        z0,
        v0,
        targets: targets.to_vec(),
    };
    let (vals, stats) = integrate(&problem, cfg).map_err(|e| e.at("integrate"))?;
    if matches!(kind, MeasureKind::OutageProb { .. }) {
        if let Some(v) = vals.iter().find(|v| !(-1e-8..=1.0 + 1e-8).contains(*v)) {
            return Err(Error::ProbabilityOutOfRange(*v).at("integrate"));
        }
        return Ok((
            vals.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            found,
            stats,
        ));
    }
    Ok((vals, found, stats))
}

/// As [`hgm_params`] with an explicit expansion point z₀ < p.x₂.
pub fn hgm_from(
    kind: &MeasureKind,
    p: &SnrParams,
    z0: f64,
    cfg: &SolverConfig,
) -> Result<HgmResult> {
    let (vals, found, stats) = hgm_path(kind, p, z0, &[p.x2], cfg)?;
    Ok(HgmResult {
        value: vals[0],
        z0,
        z_target: p.x2,
        order: found.order,
        degree: found.degree,
        series_only: false,
        steps: stats.accepted,
        evals: stats.evals,
    })
}

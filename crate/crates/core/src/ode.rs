//! Dormand–Prince 5(4) integrator with PI step control and dense output.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Clone, Debug)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

/// Integrates `y' = f(t, y)` from `t0` and returns the state at each of the
/// increasing `targets` (all ≥ `t0`), interpolating with the continuous extension.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    targets: &[f64],
    ctl: &StepControl,
) -> Result<(Vec<Vec<f64>>, OdeStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(targets.len());
    let mut ti = 0;
    while ti < targets.len() && targets[ti] <= t0 {
        out.push(y0.to_vec());
        ti += 1;
    }
    if ti == targets.len() {
        return Ok((out, stats));
    }
    let t_end = *targets.last().unwrap();

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    f(t, &y, &mut k[0]);
    stats.evals += 1;

    let mut h = initial_step(&mut f, t, &y, &k[0], ctl, t_end - t0);
    stats.evals += 1;
    let mut err_old = 1e-4f64;
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut rejected_last = false;

    while ti < targets.len() {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(Error::StepUnderflow(t));
        }
        h = h.min(ctl.max_step).min(t_end - t);
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow(t));
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..s {
                    acc += h * A[s][j] * k[j][i];
                }
                ytmp[i] = acc;
            }
            f(t + C[s] * h, &ytmp, &mut k[s]);
            stats.evals += 1;
            if s == 6 {
                ynew.copy_from_slice(&ytmp);
            }
        }
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * k[s][i];
            }
            let sc = ctl.abs_tol + ctl.rel_tol * y[i].abs().max(ynew[i].abs());
            let r = h * e / sc;
            err += r * r;
        }
        err = (err / n as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            rejected_last = true;
            continue;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            let t_new = t + h;
            while ti < targets.len() && targets[ti] <= t_new {
                let theta = ((targets[ti] - t) / h).clamp(0.0, 1.0);
                out.push(dense(&y, &ynew, &k, h, theta));
                ti += 1;
            }
            // PI controller (Hairer's beta = 0.04 variant).
            let fac = (0.9 * err.max(1e-10).powf(-0.17) * err_old.powf(0.04)).clamp(0.2, 10.0);
            let fac = if rejected_last { fac.min(1.0) } else { fac };
            err_old = err.max(1e-4);
            rejected_last = false;
            y.copy_from_slice(&ynew);
            t = t_new;
            let last = k[6].clone();
            k[0].copy_from_slice(&last);
            h *= fac;
        } else {
            stats.rejected += 1;
            rejected_last = true;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok((out, stats))
}

fn dense(y: &[f64], ynew: &[f64], k: &[Vec<f64>], h: f64, theta: f64) -> Vec<f64> {
    let th1 = 1.0 - theta;
    (0..y.len())
        .map(|i| {
            let ydiff = ynew[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            let c3 = ydiff - h * k[6][i] - bspl;
            let mut c4 = 0.0;
            for s in 0..7 {
                c4 += D[s] * k[s][i];
            }
            c4 *= h;
            y[i] + theta * (ydiff + th1 * (bspl + theta * (c3 + th1 * c4)))
        })
        .collect()
}

fn initial_step<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64], ctl: &StepControl, span: f64) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let sc: Vec<f64> = y
        .iter()
        .map(|v| ctl.abs_tol + ctl.rel_tol * v.abs())
        .collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter()
            .zip(&sc)
            .map(|(a, s)| (a / s) * (a / s))
            .sum::<f64>()
            / n as f64)
            .sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span).min(ctl.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    f(t + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(ctl.max_step)
}

//! Benchmark fixtures shared by the criterion benches.

use zfhgm::channel::{derive_snr_params, gamma_s_from_gamma_b_db, ChannelSpec, SnrParams};
use zfhgm::kernel::MeasureKind;

/// Outage threshold of 8.2 dB.
pub fn tau() -> f64 {
    10f64.powf(0.82)
}

pub fn outage() -> MeasureKind {
    MeasureKind::OutageProb { tau: tau() }
}

/// A named operating point: geometry, Γ_s and derived parameters.
pub struct Fixture {
    pub name: &'static str,
    pub spec: ChannelSpec,
    pub gamma_s: f64,
    pub params: SnrParams,
}

pub fn fixture(
    name: &'static str,
    n_rx: usize,
    n_tx: usize,
    k_db: f64,
    as_deg: f64,
    gamma_b_db: f64,
) -> Fixture {
    let spec = ChannelSpec::new(n_rx, n_tx, k_db, as_deg);
    let gamma_s = gamma_s_from_gamma_b_db(gamma_b_db);
    let r = spec.correlation().expect("valid correlation");
    let params = derive_snr_params(&spec, &r, gamma_s).expect("valid geometry");
    Fixture {
        name,
        spec,
        gamma_s,
        params,
    }
}

/// Small, doubled and large-array operating points.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        fixture("6x4", 6, 4, 7.0, 51.0, 15.0),
        fixture("12x8", 12, 8, 7.0, 51.0, 11.0),
        fixture("100x20", 100, 20, 7.0, 51.0, -5.0),
    ]
}

//! Shared fixtures for the benchmarks.

use jubilee::{MarketParams, RevisionSpec, TypeDistribution, TypeProfile};

/// `n` creditors with types uniform on `[0, 1]`, debt `n` and revision slope `alpha`.
pub fn uniform_market(n: usize, continuation_value: f64, alpha: f64) -> MarketParams {
    let revision = if alpha == 0.0 { RevisionSpec::Zero } else { RevisionSpec::Linear { alpha } };
    MarketParams::new(n as f64, n, continuation_value, 0.0, TypeDistribution::uniform(0.0, 1.0).unwrap(), revision)
        .unwrap()
}

/// Evenly spread reports in `(0, 1)`.
pub fn spread_profile(params: &MarketParams) -> TypeProfile {
    let n = params.creditors();
    let types = (0..n).map(|i| (i as f64 + 0.5) / (n as f64 + 1.0)).collect();
    TypeProfile::new(params, types).unwrap()
}

//! Numerical verification of the mechanism's incentive, participation and
//! welfare properties.
//!
//! Creditor-side quantities are computed for creditor 0; creditors are
//! symmetric, so every other creditor sees the same values.

mod engine;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::MarketParams;
use crate::quadrature::Estimate;

use engine::Engine;

pub const IC_TOLERANCE: f64 = 1e-6;
pub const IR_TOLERANCE: f64 = 1e-9;
pub const TOP_TYPE_TOLERANCE: f64 = 1e-9;
pub const MONOTONICITY_TOLERANCE: f64 = 1e-6;
pub const ENVELOPE_TOLERANCE: f64 = 1e-4;
pub const QUADRATURE_IDENTITY_TOLERANCE: f64 = 1e-6;
/// Standard errors allowed for Monte Carlo comparisons.
pub const MC_SIGMAS: f64 = 3.0;
/// Default strength of the report-dependent bonus in the IC negative control.
pub const NEGATIVE_CONTROL_COEFFICIENT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QuadratureSpec {
    GaussLegendre { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadratureSpec::GaussLegendre { nodes } if nodes < 16 => {
                Err(Error::InvalidQuadrature(format!("need at least 16 nodes, got {nodes}")))
            }
            QuadratureSpec::MonteCarlo { samples, .. } if samples < 10_000 => {
                Err(Error::InvalidQuadrature(format!("need at least 10^4 samples, got {samples}")))
            }
            _ => Ok(()),
        }
    }

    /// 64-node Gauss–Legendre for two creditors, 10⁵-sample Monte Carlo otherwise.
    pub fn default_for(creditors: usize, seed: u64) -> Self {
        if creditors == 2 {
            QuadratureSpec::GaussLegendre { nodes: 64 }
        } else {
            QuadratureSpec::MonteCarlo { samples: 100_000, seed }
        }
    }
}

/// Transfer rule under test: the optimal one, or a negative control that
/// adds `coefficient · own report` to the optimal payment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TransferRule {
    Optimal,
    ReportBonus { coefficient: f64 },
}

impl TransferRule {
    pub fn apply(&self, optimal: f64, report: f64) -> f64 {
        match *self {
            TransferRule::Optimal => optimal,
            TransferRule::ReportBonus { coefficient } => optimal + coefficient * report,
        }
    }
}

/// `U(θ, θ̂)`: expected gain over the outside option of a creditor with type
/// `θ` reporting `θ̂` while everyone else is truthful.
pub fn expected_utility_change(params: &MarketParams, theta: f64, report: f64, quad: &QuadratureSpec) -> Result<Estimate> {
    expected_utility_change_with(params, TransferRule::Optimal, theta, report, quad)
}

pub fn expected_utility_change_with(
    params: &MarketParams,
    rule: TransferRule,
    theta: f64,
    report: f64,
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    params.distribution().check_in_support(theta)?;
    params.distribution().check_in_support(report)?;
    Ok(Engine::new(params, quad)?.utility_change(rule, theta, report))
}

/// `K(θ)`: probability of settlement given own type `θ`.
pub fn solvency_probability(params: &MarketParams, theta: f64, quad: &QuadratureSpec) -> Result<Estimate> {
    params.distribution().check_in_support(theta)?;
    Ok(Engine::new(params, quad)?.solvency_probability(theta))
}

/// `V = E[k(θ)(A − Σ tᵢ(θ))]`.
pub fn debtor_expected_utility(params: &MarketParams, quad: &QuadratureSpec) -> Result<Estimate> {
    Ok(Engine::new(params, quad)?.debtor_utility())
}

/// `E[k(θ)(A − Σ [lᵢ + F/pdf(θᵢ)])]`, computed without transfers.
pub fn virtual_surplus(params: &MarketParams, quad: &QuadratureSpec) -> Result<Estimate> {
    Ok(Engine::new(params, quad)?.virtual_surplus())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcCheck {
    /// `max U(θ, θ̂) − U(θ, θ)` over the grid.
    pub max_violation: f64,
    pub theta: f64,
    pub report: f64,
    /// Smallest truthful utility on the grid (participation).
    pub min_truthful_utility: f64,
}

pub fn check_ic(params: &MarketParams, grid: usize, quad: &QuadratureSpec) -> Result<IcCheck> {
    check_ic_with(params, TransferRule::Optimal, grid, quad)
}

pub fn check_ic_with(params: &MarketParams, rule: TransferRule, grid: usize, quad: &QuadratureSpec) -> Result<IcCheck> {
    let engine = Engine::new(params, quad)?;
    ic_on(&engine, rule, grid)
}

fn ic_on(engine: &Engine<'_>, rule: TransferRule, grid: usize) -> Result<IcCheck> {
    if grid < 11 {
        return Err(Error::Precondition(format!("IC grid needs at least 11 points, got {grid}")));
    }
    let points = engine.params().distribution().support().grid(grid);
    let mut best = IcCheck {
        max_violation: f64::NEG_INFINITY,
        theta: points[0],
        report: points[0],
        min_truthful_utility: f64::INFINITY,
    };
    for &theta in &points {
        let truthful = engine.utility_change(rule, theta, theta).value;
        best.min_truthful_utility = best.min_truthful_utility.min(truthful);
        for &report in &points {
            let violation = if report == theta {
                0.0
            } else {
                engine.utility_change(rule, theta, report).value - truthful
            };
            if violation > best.max_violation {
                best.max_violation = violation;
                best.theta = theta;
                best.report = report;
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    /// `max |U(θ,θ) − U(hi,hi) − ∫_θ^hi K(u) du|` over interior grid points.
    pub integral_residual: f64,
    /// `max |dU(θ,θ)/dθ + K(θ)|` by centred differences on interior grid points.
    pub slope_residual: f64,
    pub interior_points: usize,
}

impl EnvelopeCheck {
    pub fn max_residual(&self) -> f64 {
        self.integral_residual.max(self.slope_residual)
    }
}

pub fn check_envelope(params: &MarketParams, grid: usize, quad: &QuadratureSpec) -> Result<EnvelopeCheck> {
    let engine = Engine::new(params, quad)?;
    envelope_on(&engine, grid)
}

fn envelope_on(engine: &Engine<'_>, grid: usize) -> Result<EnvelopeCheck> {
    if grid < 3 {
        return Err(Error::Precondition(format!("envelope grid needs interior points, got {grid}")));
    }
    let support = engine.params().distribution().support();
    let hi = support.hi();
    let h = 1e-5 * support.width();
    let truthful = |x: f64| engine.utility_change(TransferRule::Optimal, x, x).value;
    let top = truthful(hi);
    let points = support.grid(grid);
    let interior = &points[1..grid - 1];
    let mut check = EnvelopeCheck { integral_residual: 0.0, slope_residual: 0.0, interior_points: interior.len() };
    for &theta in interior {
        let rent = engine.integrated_solvency(theta).value;
        check.integral_residual = check.integral_residual.max((truthful(theta) - top - rent).abs());
        let slope = (truthful(theta + h) - truthful(theta - h)) / (2.0 * h);
        let k = engine.solvency_probability(theta).value;
        check.slope_residual = check.slope_residual.max((slope + k).abs());
    }
    Ok(check)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferIdentity {
    pub creditor: usize,
    /// `E[k·tᵢ]`.
    pub paid: Estimate,
    /// `E[k·(lᵢ + F/pdf(θᵢ))]`.
    pub recovery_plus_rent: Estimate,
    pub residual: f64,
    pub tolerance: f64,
}

impl TransferIdentity {
    pub fn passed(&self) -> bool {
        self.residual.abs() <= self.tolerance
    }
}

/// Checks `E[k·tᵢ] = E[k·(lᵢ + F/pdf(θᵢ))]` for every creditor.
pub fn check_transfer_identity(params: &MarketParams, quad: &QuadratureSpec) -> Result<Vec<TransferIdentity>> {
    let engine = Engine::new(params, quad)?;
    Ok(transfer_identity_on(&engine))
}

fn transfer_identity_on(engine: &Engine<'_>) -> Vec<TransferIdentity> {
    (0..engine.params().creditors())
        .map(|i| {
            let (paid, recovery_plus_rent, diff) = engine.transfer_identity(i);
            let tolerance = if engine.is_deterministic() {
                QUADRATURE_IDENTITY_TOLERANCE
            } else {
                MC_SIGMAS * diff.std_error
            };
            TransferIdentity { creditor: i, paid, recovery_plus_rent, residual: diff.value, tolerance }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlessingDelta {
    /// `E[k(θ) Σᵢ Σ_{j≠i} e(θⱼ)]`; negative when private information helps the debtor.
    pub integral: Estimate,
    /// Debtor profit minus the profit with `e ≡ 0` under the same `k̂`.
    pub profit_gap: Estimate,
    /// `profit_gap + integral`, zero in expectation.
    pub consistency: Estimate,
    pub samples: usize,
    pub seed: u64,
}

impl BlessingDelta {
    pub fn passed(&self) -> bool {
        self.integral.value < -MC_SIGMAS * self.integral.std_error
    }
}

pub fn blessing_delta(params: &MarketParams, samples: usize, seed: u64) -> Result<BlessingDelta> {
    if params.alpha() <= 0.0 {
        return Err(Error::Precondition("blessing comparison needs a revision slope alpha > 0".into()));
    }
    if samples < 2 {
        return Err(Error::Precondition(format!("need at least 2 samples, got {samples}")));
    }
    let est = engine::blessing(params, samples, seed);
    Ok(BlessingDelta {
        integral: est.integral,
        profit_gap: est.profit_gap,
        consistency: est.consistency,
        samples,
        seed,
    })
}

/// Monte Carlo averages of the settlement policy over type profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    /// `E[k]`.
    pub settlement_probability: Estimate,
    /// `E[k · Σᵢ (d − tᵢ)]`: face value written off, zero on bankruptcy.
    pub expected_forgiveness: Estimate,
    /// `E[k · (A − Σᵢ tᵢ)]`.
    pub debtor_profit: Estimate,
}

pub fn simulate_policy(params: &MarketParams, draws: usize, seed: u64) -> Result<PolicySummary> {
    if draws < 2 {
        return Err(Error::Precondition(format!("need at least 2 draws, got {draws}")));
    }
    Ok(engine::simulate(params, draws, seed))
}

/// Inputs of a full verification run; echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationSpec {
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_ic_grid")]
    pub ic_grid: usize,
    #[serde(default = "default_fine_grid")]
    pub envelope_grid: usize,
    #[serde(default = "default_fine_grid")]
    pub monotonicity_grid: usize,
    #[serde(default = "default_blessing_samples")]
    pub blessing_samples: usize,
    #[serde(default)]
    pub blessing_seed: u64,
    /// When set, the IC suite runs against a corrupted transfer rule.
    #[serde(default)]
    pub negative_control: Option<f64>,
}

fn default_ic_grid() -> usize {
    41
}

fn default_fine_grid() -> usize {
    101
}

fn default_blessing_samples() -> usize {
    100_000
}

impl VerificationSpec {
    pub fn new(quadrature: QuadratureSpec, seed: u64) -> Self {
        Self {
            quadrature,
            ic_grid: default_ic_grid(),
            envelope_grid: default_fine_grid(),
            monotonicity_grid: default_fine_grid(),
            blessing_samples: default_blessing_samples(),
            blessing_seed: seed,
            negative_control: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub status: CheckStatus,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        let status = if value <= threshold { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name: name.into(), value, threshold, status }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        let status = if value >= threshold { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name: name.into(), value, threshold, status }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub max_ic_violation: f64,
    pub min_ir_utility: f64,
    pub top_type_utility: f64,
    pub k_monotonicity_worst_slope: f64,
    pub envelope_max_residual: f64,
    pub transfer_identity_residual: f64,
    pub debtor_utility_v: f64,
    pub debtor_utility_std_error: f64,
    pub virtual_surplus: f64,
    pub virtual_surplus_std_error: f64,
    pub feasibility: bool,
    pub blessing_integral: f64,
    pub blessing_std_error: f64,
    pub blessing_profit_gap: f64,
    pub checks: Vec<CheckResult>,
    pub market: MarketParams,
    pub spec: VerificationSpec,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }
}

/// Runs every check on one economy.
pub fn run_verification(params: &MarketParams, spec: &VerificationSpec) -> Result<VerificationReport> {
    let engine = Engine::new(params, &spec.quadrature)?;
    let support = params.distribution().support();
    let mut checks = Vec::new();

    let rule = match spec.negative_control {
        Some(coefficient) => TransferRule::ReportBonus { coefficient },
        None => TransferRule::Optimal,
    };
    let ic = ic_on(&engine, rule, spec.ic_grid)?;
    checks.push(CheckResult::at_most("incentive-compatibility", ic.max_violation, IC_TOLERANCE));

    let truthful = |x: f64| engine.utility_change(TransferRule::Optimal, x, x).value;
    let min_ir_utility = support.grid(spec.ic_grid).into_iter().map(truthful).fold(f64::INFINITY, f64::min);
    checks.push(CheckResult::at_least("individual-rationality", min_ir_utility, -IR_TOLERANCE));
    let top_type_utility = truthful(support.hi());
    checks.push(CheckResult::at_most("top-type-zero-rent", top_type_utility.abs(), TOP_TYPE_TOLERANCE));

    let k: Vec<f64> = support
        .grid(spec.monotonicity_grid)
        .into_iter()
        .map(|x| engine.solvency_probability(x).value)
        .collect();
    let worst_slope = k.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    checks.push(CheckResult::at_most("solvency-probability-monotone", worst_slope, MONOTONICITY_TOLERANCE));

    let envelope = envelope_on(&engine, spec.envelope_grid)?;
    checks.push(CheckResult::at_most("envelope", envelope.max_residual(), ENVELOPE_TOLERANCE));

    let identities = transfer_identity_on(&engine);
    let worst_identity = identities
        .iter()
        .max_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs()))
        .expect("at least two creditors");
    checks.push(CheckResult::at_most(
        "transfer-identity",
        worst_identity.residual.abs(),
        worst_identity.tolerance,
    ));

    let v = engine.debtor_utility();
    let vs = engine.virtual_surplus();
    let agreement_tolerance = if engine.is_deterministic() {
        QUADRATURE_IDENTITY_TOLERANCE
    } else {
        MC_SIGMAS * (v.std_error.powi(2) + vs.std_error.powi(2)).sqrt()
    };
    checks.push(CheckResult::at_most("welfare-agreement", (v.value - vs.value).abs(), agreement_tolerance));
    let feasibility = vs.value >= 0.0;
    let budget_balance = if feasibility {
        CheckResult::at_least("ex-ante-budget-balance", v.value, -agreement_tolerance)
    } else {
        CheckResult {
            name: "ex-ante-budget-balance".into(),
            value: v.value,
            threshold: 0.0,
            status: CheckStatus::Skipped,
        }
    };
    checks.push(budget_balance);

    let (blessing_integral, blessing_std_error, blessing_profit_gap) = match blessing_delta(
        params,
        spec.blessing_samples,
        spec.blessing_seed,
    ) {
        Ok(b) => {
            let status = if b.passed() { CheckStatus::Pass } else { CheckStatus::Fail };
            checks.push(CheckResult {
                name: "blessing-of-the-debtor".into(),
                value: b.integral.value,
                threshold: -MC_SIGMAS * b.integral.std_error,
                status,
            });
            (b.integral.value, b.integral.std_error, b.profit_gap.value)
        }
        Err(Error::Precondition(_)) => {
            checks.push(CheckResult {
                name: "blessing-of-the-debtor".into(),
                value: 0.0,
                threshold: 0.0,
                status: CheckStatus::Skipped,
            });
            (0.0, 0.0, 0.0)
        }
        Err(e) => return Err(e),
    };

    Ok(VerificationReport {
        max_ic_violation: ic.max_violation,
        min_ir_utility,
        top_type_utility,
        k_monotonicity_worst_slope: worst_slope,
        envelope_max_residual: envelope.max_residual(),
        transfer_identity_residual: worst_identity.residual,
        debtor_utility_v: v.value,
        debtor_utility_std_error: v.std_error,
        virtual_surplus: vs.value,
        virtual_surplus_std_error: vs.std_error,
        feasibility,
        blessing_integral,
        blessing_std_error,
        blessing_profit_gap,
        checks,
        market: params.clone(),
        spec: spec.clone(),
    })
}

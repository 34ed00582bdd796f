//! The optimal revelation mechanism for debt settlement.
//!
//! Creditor `i` holds a private recovery value `θᵢ`. Knowing the other
//! creditors' types revises its outside option to the liquidation value
//! `lᵢ = θᵢ + Σ_{j≠i} e(θⱼ)`. The debtor keeps the continuation value `A`
//! and settles iff `A ≥ Σᵢ [lᵢ + F(θᵢ)/pdf(θᵢ)]`; each creditor is then paid
//! `θ̃(θ₋ᵢ) + Σ_{j≠i} e(θⱼ)`, where the pivotal type `θ̃` is the largest
//! report that keeps the settlement alive. The payment never depends on the
//! creditor's own report.
//!
//! Creditor indices are zero-based throughout the library.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::distributions::TypeDistribution;
use crate::error::{Error, Result};

/// Absolute tolerance (in type units) of the pivotal-type bisection.
pub const PIVOTAL_TOLERANCE: f64 = 1e-12;

/// How a creditor revises its recovery estimate on learning another creditor's type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RevisionSpec {
    Zero,
    /// `e(θ) = alpha · (θ − mean)`.
    Linear { alpha: f64 },
}

impl RevisionSpec {
    pub fn alpha(&self) -> f64 {
        match self {
            RevisionSpec::Zero => 0.0,
            RevisionSpec::Linear { alpha } => *alpha,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    debt: f64,
    creditors: usize,
    continuation_value: f64,
    #[serde(default)]
    investment: f64,
    distribution: TypeDistribution,
    revision: RevisionSpec,
}

/// The public economy: debt, creditor count, continuation value, type
/// distribution and revision function are common knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarket", into = "RawMarket")]
pub struct MarketParams {
    debt: f64,
    creditors: usize,
    continuation_value: f64,
    investment: f64,
    distribution: TypeDistribution,
    revision: RevisionSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "kebab-case")]
pub enum MarketWarning {
    /// Some admissible profile has a liquidation value above the per-creditor debt.
    LiquidationMayExceedDebt { max_liquidation: f64, debt_share: f64 },
}

impl MarketParams {
    pub fn new(
        debt: f64,
        creditors: usize,
        continuation_value: f64,
        investment: f64,
        distribution: TypeDistribution,
        revision: RevisionSpec,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidMarket(msg));
        if !(debt.is_finite() && debt > 0.0) {
            return invalid(format!("total debt must be positive, got {debt}"));
        }
        if creditors < 2 {
            return invalid(format!("at least two creditors required, got {creditors}"));
        }
        if !(continuation_value.is_finite() && continuation_value > 0.0) {
            return invalid(format!("continuation value must be positive, got {continuation_value}"));
        }
        if !investment.is_finite() {
            return invalid(format!("investment must be finite, got {investment}"));
        }
        if distribution.support().hi() > debt {
            return invalid(format!(
                "type support upper bound {} exceeds total debt {debt}",
                distribution.support().hi()
            ));
        }
        match revision {
            RevisionSpec::Zero => {}
            RevisionSpec::Linear { alpha } if alpha.is_finite() && alpha >= 0.0 => {}
            RevisionSpec::Linear { alpha } => {
                return invalid(format!("revision slope must be finite and non-negative, got {alpha}"))
            }
        }
        Ok(Self { debt, creditors, continuation_value, investment, distribution, revision })
    }

    pub fn debt(&self) -> f64 {
        self.debt
    }

    pub fn creditors(&self) -> usize {
        self.creditors
    }

    /// Per-creditor debt `d = D / n`.
    pub fn debt_share(&self) -> f64 {
        self.debt / self.creditors as f64
    }

    pub fn continuation_value(&self) -> f64 {
        self.continuation_value
    }

    pub fn investment(&self) -> f64 {
        self.investment
    }

    pub fn distribution(&self) -> &TypeDistribution {
        &self.distribution
    }

    pub fn revision_spec(&self) -> RevisionSpec {
        self.revision
    }

    pub fn alpha(&self) -> f64 {
        self.revision.alpha()
    }

    pub fn with_continuation_value(&self, continuation_value: f64) -> Result<Self> {
        Self::new(
            self.debt,
            self.creditors,
            continuation_value,
            self.investment,
            self.distribution.clone(),
            self.revision,
        )
    }

    pub fn with_revision(&self, revision: RevisionSpec) -> Result<Self> {
        Self::new(self.debt, self.creditors, self.continuation_value, self.investment, self.distribution.clone(), revision)
    }

    /// The revision function `e(θ)`, shared by all creditors.
    pub fn revision(&self, theta: f64) -> f64 {
        match self.revision {
            RevisionSpec::Zero => 0.0,
            RevisionSpec::Linear { alpha } => alpha * (theta - self.distribution.mean()),
        }
    }

    pub fn warnings(&self) -> Vec<MarketWarning> {
        let hi = self.distribution.support().hi();
        let max_liquidation = hi + (self.creditors - 1) as f64 * self.revision(hi);
        if max_liquidation > self.debt_share() {
            vec![MarketWarning::LiquidationMayExceedDebt { max_liquidation, debt_share: self.debt_share() }]
        } else {
            Vec::new()
        }
    }

    pub(crate) fn check_index(&self, index: usize) -> Result<()> {
        if index < self.creditors {
            Ok(())
        } else {
            Err(Error::CreditorIndex { index, creditors: self.creditors })
        }
    }

    pub(crate) fn check_others(&self, others: &[f64]) -> Result<()> {
        if others.len() != self.creditors - 1 {
            return Err(Error::ProfileLength { got: others.len(), expected: self.creditors - 1 });
        }
        others.iter().try_for_each(|&x| self.distribution.check_in_support(x))
    }
}

impl TryFrom<RawMarket> for MarketParams {
    type Error = Error;

    fn try_from(raw: RawMarket) -> Result<Self> {
        MarketParams::new(raw.debt, raw.creditors, raw.continuation_value, raw.investment, raw.distribution, raw.revision)
    }
}

impl From<MarketParams> for RawMarket {
    fn from(p: MarketParams) -> Self {
        RawMarket {
            debt: p.debt,
            creditors: p.creditors,
            continuation_value: p.continuation_value,
            investment: p.investment,
            distribution: p.distribution,
            revision: p.revision,
        }
    }
}

/// Reported (or true) types of all creditors, validated against the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeProfile(Vec<f64>);

impl TypeProfile {
    pub fn new(params: &MarketParams, types: Vec<f64>) -> Result<Self> {
        if types.len() != params.creditors() {
            return Err(Error::ProfileLength { got: types.len(), expected: params.creditors() });
        }
        types.iter().try_for_each(|&x| params.distribution().check_in_support(x))?;
        Ok(Self(types))
    }

    pub fn types(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `θ₋ᵢ`: every type except creditor `i`'s, in index order.
    pub fn others(&self, i: usize) -> Vec<f64> {
        others_of(&self.0, i)
    }
}

pub(crate) fn others_of(types: &[f64], i: usize) -> Vec<f64> {
    types
        .iter()
        .enumerate()
        .filter_map(|(j, &x)| (j != i).then_some(x))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clamp {
    /// Even the lowest report forces bankruptcy.
    Low,
    /// Every report keeps the settlement alive.
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pivotal {
    pub value: f64,
    pub clamp: Option<Clamp>,
}

impl Pivotal {
    /// Whether a report of `theta` keeps the settlement alive.
    pub fn admits(&self, theta: f64) -> bool {
        match self.clamp {
            Some(Clamp::Low) => false,
            Some(Clamp::High) => true,
            None => theta <= self.value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidationValue {
    pub value: f64,
    pub exceeds_debt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeFlag {
    TransferExceedsDebt,
    PivotalClampedLow,
    PivotalClampedHigh,
    /// The secure comparison ran inside its fixed-point quantisation band.
    QuantizationBand,
}

/// Settlement decision, payments and write-downs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub solvent: bool,
    /// Pivotal type per creditor; empty when the producer cannot see it.
    pub pivotal: Vec<Pivotal>,
    pub transfers: Vec<f64>,
    pub forgiveness: Vec<f64>,
    pub flags: BTreeSet<OutcomeFlag>,
}

impl Outcome {
    pub fn bankrupt(creditors: usize, pivotal: Vec<Pivotal>, flags: BTreeSet<OutcomeFlag>) -> Self {
        Self {
            solvent: false,
            pivotal,
            transfers: vec![0.0; creditors],
            forgiveness: vec![0.0; creditors],
            flags,
        }
    }
}

/// `lᵢ(θ) = θᵢ + Σ_{j≠i} e(θⱼ)`.
pub fn liquidation_value(params: &MarketParams, i: usize, profile: &TypeProfile) -> Result<LiquidationValue> {
    params.check_index(i)?;
    let value = liquidation_unchecked(params, profile.types()[i], &profile.others(i));
    Ok(LiquidationValue { value, exceeds_debt: value > params.debt_share() })
}

pub(crate) fn liquidation_unchecked(params: &MarketParams, own: f64, others: &[f64]) -> f64 {
    own + others.iter().map(|&x| params.revision(x)).sum::<f64>()
}

/// `B(θᵢ) = θᵢ + F/pdf(θᵢ) + Σ_{j≠i} e(θᵢ)`: everything in the virtual
/// cost that moves with creditor `i`'s own type.
pub fn b_term(params: &MarketParams, theta: f64) -> f64 {
    theta + params.distribution().ratio(theta) + (params.creditors() - 1) as f64 * params.revision(theta)
}

/// `Q(θ₋ᵢ) = Σⱼ Σ_{k≠j,i} e(θₖ) + Σ_{j≠i} [θⱼ + F/pdf(θⱼ)]`.
///
/// `others` lists the other creditors' types in index order, so the
/// excluded creditor `i` is implicit.
pub fn q_term(params: &MarketParams, others: &[f64]) -> f64 {
    let n = params.creditors();
    let mut revisions = 0.0;
    // Position `n - 1` stands for creditor i, who is excluded from k.
    for j in 0..n {
        for (k, &theta_k) in others.iter().enumerate() {
            if k != j {
                revisions += params.revision(theta_k);
            }
        }
    }
    let rents: f64 = others.iter().map(|&x| x + params.distribution().ratio(x)).sum();
    revisions + rents
}

/// `Σᵢ [lᵢ(θ) + F(θᵢ)/pdf(θᵢ)]`, the debtor's virtual cost of settling.
pub fn virtual_cost(params: &MarketParams, types: &[f64]) -> f64 {
    let total_revision: f64 = types.iter().map(|&x| params.revision(x)).sum();
    types
        .iter()
        .map(|&x| {
            let liquidation = x + total_revision - params.revision(x);
            liquidation + params.distribution().ratio(x)
        })
        .sum()
}

/// Largest report of creditor `i` that keeps the settlement alive given the
/// other creditors' types: the root of `B(θ) = A − Q(θ₋ᵢ)`.
pub fn pivotal_type(params: &MarketParams, others: &[f64]) -> Result<Pivotal> {
    params.check_others(others)?;
    Ok(pivotal_unchecked(params, others))
}

pub(crate) fn pivotal_unchecked(params: &MarketParams, others: &[f64]) -> Pivotal {
    pivotal_from_target(params, params.continuation_value() - q_term(params, others))
}

/// Solves `B(θ) = target` on the support, clamping in the degenerate regimes.
pub(crate) fn pivotal_from_target(params: &MarketParams, target: f64) -> Pivotal {
    let support = params.distribution().support();
    let (lo, hi) = (support.lo(), support.hi());
    if b_term(params, lo) > target {
        return Pivotal { value: lo, clamp: Some(Clamp::Low) };
    }
    if b_term(params, hi) <= target {
        return Pivotal { value: hi, clamp: Some(Clamp::High) };
    }
    let value = bisect_increasing(|x| b_term(params, x) - target, lo, hi, PIVOTAL_TOLERANCE);
    Pivotal { value, clamp: None }
}

/// Root of a strictly increasing `f` with `f(lo) <= 0 < f(hi)`.
pub fn bisect_increasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tolerance: f64) -> f64 {
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `k̂(θ) = 1` iff `A ≥ Σᵢ [lᵢ + F/pdf(θᵢ)]`; equality settles.
pub fn investment_rule(params: &MarketParams, profile: &TypeProfile) -> bool {
    investment_rule_unchecked(params, profile.types())
}

pub(crate) fn investment_rule_unchecked(params: &MarketParams, types: &[f64]) -> bool {
    params.continuation_value() >= virtual_cost(params, types)
}

/// `t̂ᵢ(θ₋ᵢ) = θ̃(θ₋ᵢ) + Σ_{j≠i} e(θⱼ)`. Takes no own-type argument.
pub fn optimal_transfer(params: &MarketParams, others: &[f64]) -> Result<f64> {
    params.check_others(others)?;
    Ok(transfer_unchecked(params, others))
}

pub(crate) fn transfer_unchecked(params: &MarketParams, others: &[f64]) -> f64 {
    transfer_from_pivotal(params, &pivotal_unchecked(params, others), others)
}

fn transfer_from_pivotal(params: &MarketParams, pivotal: &Pivotal, others: &[f64]) -> f64 {
    pivotal.value + others.iter().map(|&x| params.revision(x)).sum::<f64>()
}

/// Evaluates the mechanism on a reported profile.
pub fn settle(params: &MarketParams, profile: &TypeProfile) -> Result<Outcome> {
    if profile.len() != params.creditors() {
        return Err(Error::ProfileLength { got: profile.len(), expected: params.creditors() });
    }
    profile.types().iter().try_for_each(|&x| params.distribution().check_in_support(x))?;

    let n = params.creditors();
    let others: Vec<Vec<f64>> = (0..n).map(|i| profile.others(i)).collect();
    let pivotal: Vec<Pivotal> = others.iter().map(|o| pivotal_unchecked(params, o)).collect();

    let mut flags = BTreeSet::new();
    for p in &pivotal {
        match p.clamp {
            Some(Clamp::Low) => flags.insert(OutcomeFlag::PivotalClampedLow),
            Some(Clamp::High) => flags.insert(OutcomeFlag::PivotalClampedHigh),
            None => false,
        };
    }

    if !investment_rule(params, profile) {
        return Ok(Outcome::bankrupt(n, pivotal, flags));
    }

    let d = params.debt_share();
    let transfers: Vec<f64> = pivotal
        .iter()
        .zip(&others)
        .map(|(p, o)| transfer_from_pivotal(params, p, o))
        .collect();
    if transfers.iter().any(|&t| t > d) {
        flags.insert(OutcomeFlag::TransferExceedsDebt);
    }
    let forgiveness = transfers.iter().map(|t| d - t).collect();
    Ok(Outcome { solvent: true, pivotal, transfers, forgiveness, flags })
}

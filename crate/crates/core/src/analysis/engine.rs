//! Integration back ends for the creditor- and debtor-side expectations.
//!
//! Two creditors: nested Gauss–Legendre. The settlement region in the
//! other creditor's type is an interval `[lo, θ̃(θ_own)]`, and transfers are
//! smooth except where a pivotal type hits a support bound, so every
//! integral is split at those points and converges to near machine precision.
//!
//! Three or more creditors: seeded Monte Carlo over full type profiles with
//! per-sample caches of the pivotal type and revision sums. All expectations
//! share one draw (common random numbers), so finite differences and grid
//! comparisons are not swamped by sampling noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mechanism::{self, Clamp, MarketParams, Pivotal};
use crate::quadrature::{Accumulator, Estimate, GaussLegendre};

use super::{PolicySummary, QuadratureSpec, TransferRule};

pub(crate) enum Engine<'a> {
    Pair(PairEngine<'a>),
    MonteCarlo(McEngine<'a>),
}

impl<'a> Engine<'a> {
    pub(crate) fn new(params: &'a MarketParams, quad: &QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        match *quad {
            QuadratureSpec::GaussLegendre { nodes } => {
                if params.creditors() != 2 {
                    return Err(Error::InvalidQuadrature(format!(
                        "Gauss-Legendre integration covers two creditors, economy has {}; use monte-carlo",
                        params.creditors()
                    )));
                }
                Ok(Engine::Pair(PairEngine::new(params, nodes)?))
            }
            QuadratureSpec::MonteCarlo { samples, seed } => Ok(Engine::MonteCarlo(McEngine::new(params, samples, seed))),
        }
    }

    pub(crate) fn params(&self) -> &MarketParams {
        match self {
            Engine::Pair(e) => e.params,
            Engine::MonteCarlo(e) => e.params,
        }
    }

    pub(crate) fn is_deterministic(&self) -> bool {
        matches!(self, Engine::Pair(_))
    }

    /// `U(θ, θ̂)` for creditor 0 when everyone else reports truthfully.
    pub(crate) fn utility_change(&self, rule: TransferRule, theta: f64, report: f64) -> Estimate {
        match self {
            Engine::Pair(e) => Estimate::exact(e.utility_change(rule, theta, report)),
            Engine::MonteCarlo(e) => e.utility_change(rule, theta, report),
        }
    }

    /// `K(θ)`: settlement probability given own report `θ`.
    pub(crate) fn solvency_probability(&self, theta: f64) -> Estimate {
        match self {
            Engine::Pair(e) => Estimate::exact(e.solvency_probability(theta)),
            Engine::MonteCarlo(e) => e.solvency_probability(theta),
        }
    }

    /// `∫_θ^hi K(u) du`.
    pub(crate) fn integrated_solvency(&self, theta: f64) -> Estimate {
        match self {
            Engine::Pair(e) => Estimate::exact(e.integrated_solvency(theta)),
            Engine::MonteCarlo(e) => e.integrated_solvency(theta),
        }
    }

    pub(crate) fn debtor_utility(&self) -> Estimate {
        match self {
            Engine::Pair(e) => Estimate::exact(e.debtor_utility()),
            Engine::MonteCarlo(e) => e.debtor_utility(),
        }
    }

    pub(crate) fn virtual_surplus(&self) -> Estimate {
        match self {
            Engine::Pair(e) => Estimate::exact(e.virtual_surplus()),
            Engine::MonteCarlo(e) => e.virtual_surplus(),
        }
    }

    /// `(E[k·tᵢ], E[k·(lᵢ + F/pdf(θᵢ))], residual)` for creditor `i`.
    pub(crate) fn transfer_identity(&self, i: usize) -> (Estimate, Estimate, Estimate) {
        match self {
            Engine::Pair(e) => {
                let (l, r) = e.transfer_identity(i);
                (Estimate::exact(l), Estimate::exact(r), Estimate::exact(l - r))
            }
            Engine::MonteCarlo(e) => e.transfer_identity(i),
        }
    }
}

pub(crate) struct PairEngine<'a> {
    params: &'a MarketParams,
    gl: GaussLegendre,
    lo: f64,
    hi: f64,
    /// Points where a pivotal type or the settlement boundary changes regime.
    breaks: Vec<f64>,
}

impl<'a> PairEngine<'a> {
    fn new(params: &'a MarketParams, nodes: usize) -> Result<Self> {
        let support = params.distribution().support();
        let mut engine = Self {
            params,
            gl: GaussLegendre::new(nodes)?,
            lo: support.lo(),
            hi: support.hi(),
            breaks: Vec::new(),
        };
        engine.breaks = engine.critical_points();
        Ok(engine)
    }

    fn critical_points(&self) -> Vec<f64> {
        let p = self.params;
        let a = p.continuation_value();
        let q = |x: f64| mechanism::q_term(p, &[x]);
        // Q is strictly increasing in the other creditor's type.
        let crossing = |level: f64| -> Option<f64> {
            if q(self.lo) > level || q(self.hi) <= level {
                None
            } else {
                Some(mechanism::bisect_increasing(|x| q(x) - level, self.lo, self.hi, 1e-14))
            }
        };
        let mut points = Vec::new();
        // End of the always-settle regime and start of the never-settle regime.
        for level in [a - mechanism::b_term(p, self.hi), a - mechanism::b_term(p, self.lo)] {
            if let Some(x) = crossing(level) {
                points.push(x);
                points.push(self.bound(x));
            }
        }
        points
    }

    fn pivotal(&self, other: f64) -> Pivotal {
        mechanism::pivotal_unchecked(self.params, &[other])
    }

    /// Upper end of the settlement interval in the other creditor's type.
    fn bound(&self, own_report: f64) -> f64 {
        let p = self.pivotal(own_report);
        match p.clamp {
            Some(Clamp::Low) => self.lo,
            _ => p.value,
        }
    }

    fn density(&self, x: f64) -> f64 {
        self.params.distribution().density(x)
    }

    fn transfer(&self, other: f64) -> f64 {
        mechanism::transfer_unchecked(self.params, &[other])
    }

    fn utility_change(&self, rule: TransferRule, theta: f64, report: f64) -> f64 {
        let upper = self.bound(report);
        self.gl.integrate_piecewise(self.lo, upper, &self.breaks, |x| {
            let paid = rule.apply(self.transfer(x), report);
            let liquidation = theta + self.params.revision(x);
            (paid - liquidation) * self.density(x)
        })
    }

    fn solvency_probability(&self, theta: f64) -> f64 {
        self.params.distribution().cdf(self.bound(theta))
    }

    fn integrated_solvency(&self, theta: f64) -> f64 {
        self.gl
            .integrate_piecewise(theta, self.hi, &self.breaks, |u| self.solvency_probability(u))
    }

    /// `∫∫ k(θ)(A − t₁ − t₂) φ(θ) dθ`.
    fn debtor_utility(&self) -> f64 {
        let a = self.params.continuation_value();
        self.gl.integrate_piecewise(self.lo, self.hi, &self.breaks, |x1| {
            let t2 = self.transfer(x1);
            let inner = self.gl.integrate_piecewise(self.lo, self.bound(x1), &self.breaks, |x2| {
                (a - self.transfer(x2) - t2) * self.density(x2)
            });
            inner * self.density(x1)
        })
    }

    /// `∫∫ k(θ)(A − Σ[lᵢ + F/pdf(θᵢ)]) φ(θ) dθ`, with the settlement region
    /// located from the virtual cost itself rather than from pivotal types.
    fn virtual_surplus(&self) -> f64 {
        let p = self.params;
        let a = p.continuation_value();
        let cost = |x1: f64, x2: f64| mechanism::virtual_cost(p, &[x1, x2]);
        let region_end = |x1: f64| -> f64 {
            if cost(x1, self.lo) > a {
                self.lo
            } else if cost(x1, self.hi) <= a {
                self.hi
            } else {
                mechanism::bisect_increasing(|x2| cost(x1, x2) - a, self.lo, self.hi, 1e-13)
            }
        };
        let mut breaks = Vec::new();
        for edge in [self.lo, self.hi] {
            if cost(self.lo, edge) <= a && cost(self.hi, edge) > a {
                let x = mechanism::bisect_increasing(|x1| cost(x1, edge) - a, self.lo, self.hi, 1e-14);
                breaks.push(x);
                breaks.push(region_end(x));
            }
        }
        self.gl.integrate_piecewise(self.lo, self.hi, &breaks, |x1| {
            let inner = self
                .gl
                .integrate_piecewise(self.lo, region_end(x1), &breaks, |x2| (a - cost(x1, x2)) * self.density(x2));
            inner * self.density(x1)
        })
    }

    /// Both sides of `E[k·tᵢ] = E[k·(lᵢ + F/pdf(θᵢ))]`, integrating creditor
    /// 0's type on the outside and creditor 1's inside for either `i`.
    fn transfer_identity(&self, i: usize) -> (f64, f64) {
        let p = self.params;
        let ratio = |x: f64| p.distribution().ratio(x);
        let side = |paid: bool| {
            self.gl.integrate_piecewise(self.lo, self.hi, &self.breaks, |x0| {
                let inner = self.gl.integrate_piecewise(self.lo, self.bound(x0), &self.breaks, |x1| {
                    let (own, other) = if i == 0 { (x0, x1) } else { (x1, x0) };
                    let value = if paid {
                        self.transfer(other)
                    } else {
                        own + p.revision(other) + ratio(own)
                    };
                    value * self.density(x1)
                });
                inner * self.density(x0)
            })
        };
        (side(true), side(false))
    }
}

struct Draw {
    types: Vec<f64>,
    /// Pivotal type of creditor 0 given the others.
    pivotal0: Pivotal,
    /// `Σ_{j≠0} e(θⱼ)`.
    revision0: f64,
}

pub(crate) struct McEngine<'a> {
    params: &'a MarketParams,
    draws: Vec<Draw>,
}

impl<'a> McEngine<'a> {
    fn new(params: &'a MarketParams, samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = params.creditors();
        let dist = params.distribution();
        let draws = (0..samples)
            .map(|_| {
                let types: Vec<f64> = (0..n).map(|_| dist.quantile(rng.gen::<f64>())).collect();
                let others = &types[1..];
                Draw {
                    pivotal0: mechanism::pivotal_unchecked(params, others),
                    revision0: others.iter().map(|&x| params.revision(x)).sum(),
                    types,
                }
            })
            .collect();
        Self { params, draws }
    }

    fn mean<F: Fn(&Draw) -> f64>(&self, f: F) -> Estimate {
        let mut acc = Accumulator::default();
        self.draws.iter().for_each(|d| acc.push(f(d)));
        acc.estimate()
    }

    fn utility_change(&self, rule: TransferRule, theta: f64, report: f64) -> Estimate {
        self.mean(|d| {
            if d.pivotal0.admits(report) {
                let paid = rule.apply(d.pivotal0.value + d.revision0, report);
                paid - theta - d.revision0
            } else {
                0.0
            }
        })
    }

    fn solvency_probability(&self, theta: f64) -> Estimate {
        self.mean(|d| if d.pivotal0.admits(theta) { 1.0 } else { 0.0 })
    }

    fn integrated_solvency(&self, theta: f64) -> Estimate {
        self.mean(|d| match d.pivotal0.clamp {
            Some(Clamp::Low) => 0.0,
            _ => (d.pivotal0.value - theta).max(0.0),
        })
    }

    fn transfers(&self, types: &[f64]) -> Vec<f64> {
        (0..types.len())
            .map(|i| mechanism::transfer_unchecked(self.params, &mechanism::others_of(types, i)))
            .collect()
    }

    fn debtor_utility(&self) -> Estimate {
        let a = self.params.continuation_value();
        self.mean(|d| {
            if mechanism::investment_rule_unchecked(self.params, &d.types) {
                a - self.transfers(&d.types).iter().sum::<f64>()
            } else {
                0.0
            }
        })
    }

    fn virtual_surplus(&self) -> Estimate {
        let a = self.params.continuation_value();
        self.mean(|d| (a - mechanism::virtual_cost(self.params, &d.types)).max(0.0))
    }

    fn transfer_identity(&self, i: usize) -> (Estimate, Estimate, Estimate) {
        let p = self.params;
        let (mut lhs, mut rhs, mut diff) = (Accumulator::default(), Accumulator::default(), Accumulator::default());
        for d in &self.draws {
            let (l, r) = if mechanism::investment_rule_unchecked(p, &d.types) {
                let others = mechanism::others_of(&d.types, i);
                let own = d.types[i];
                (
                    mechanism::transfer_unchecked(p, &others),
                    mechanism::liquidation_unchecked(p, own, &others) + p.distribution().ratio(own),
                )
            } else {
                (0.0, 0.0)
            };
            lhs.push(l);
            rhs.push(r);
            diff.push(l - r);
        }
        (lhs.estimate(), rhs.estimate(), diff.estimate())
    }
}

/// Monte Carlo estimates of the private-information effect on debtor profits.
pub(crate) struct BlessingEstimates {
    pub integral: Estimate,
    pub profit_gap: Estimate,
    pub consistency: Estimate,
}

pub(crate) fn blessing(params: &MarketParams, samples: usize, seed: u64) -> BlessingEstimates {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.creditors();
    let dist = params.distribution();
    let a = params.continuation_value();
    let (mut integral, mut gap, mut consistency) =
        (Accumulator::default(), Accumulator::default(), Accumulator::default());
    let mut types = vec![0.0; n];
    for _ in 0..samples {
        types.iter_mut().for_each(|t| *t = dist.quantile(rng.gen::<f64>()));
        let (revision_term, profit_gap) = if mechanism::investment_rule_unchecked(params, &types) {
            let total_revision: f64 = types.iter().map(|&x| params.revision(x)).sum();
            // Σᵢ Σ_{j≠i} e(θⱼ) = (n − 1) Σⱼ e(θⱼ).
            let revision_term = (n - 1) as f64 * total_revision;
            let paid: f64 = (0..n)
                .map(|i| mechanism::transfer_unchecked(params, &mechanism::others_of(&types, i)))
                .sum();
            let actual = a - paid;
            // Same k̂, creditors valued at their own types plus information rent.
            let without_revision = a - types.iter().map(|&x| x + dist.ratio(x)).sum::<f64>();
            (revision_term, actual - without_revision)
        } else {
            (0.0, 0.0)
        };
        integral.push(revision_term);
        gap.push(profit_gap);
        consistency.push(profit_gap + revision_term);
    }
    BlessingEstimates {
        integral: integral.estimate(),
        profit_gap: gap.estimate(),
        consistency: consistency.estimate(),
    }
}

pub(crate) fn simulate(params: &MarketParams, draws: usize, seed: u64) -> PolicySummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.creditors();
    let dist = params.distribution();
    let (a, d) = (params.continuation_value(), params.debt_share());
    let (mut settle, mut forgiven, mut profit) = (Accumulator::default(), Accumulator::default(), Accumulator::default());
    let mut types = vec![0.0; n];
    for _ in 0..draws {
        types.iter_mut().for_each(|t| *t = dist.quantile(rng.gen::<f64>()));
        if mechanism::investment_rule_unchecked(params, &types) {
            let paid: f64 = (0..n)
                .map(|i| mechanism::transfer_unchecked(params, &mechanism::others_of(&types, i)))
                .sum();
            settle.push(1.0);
            forgiven.push(n as f64 * d - paid);
            profit.push(a - paid);
        } else {
            settle.push(0.0);
            forgiven.push(0.0);
            profit.push(0.0);
        }
    }
    PolicySummary {
        settlement_probability: settle.estimate(),
        expected_forgiveness: forgiven.estimate(),
        debtor_profit: profit.estimate(),
    }
}

//! The two-creditor economy with types uniform on `[0, 1]` and revision
//! `e(θ) = α(θ − 1/2)`, solved in closed form.
//!
//! With `F/pdf = θ` the virtual cost is `(θ₁ + θ₂)(2 + α) − α`, so the
//! pivotal type is `(A + α)/(2 + α) − θ_other` and the transfer is
//! `(2A − α²)/(2α + 4) − θ_other(1 − α)`. [`printed_discrepancies`] lists
//! where the commonly quoted constants for this example differ.

use serde::{Deserialize, Serialize};

use crate::distributions::TypeDistribution;
use crate::error::{Error, Result};
use crate::mechanism::{Clamp, MarketParams, Pivotal, RevisionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoCreditorEconomy {
    pub continuation_value: f64,
    pub debt: f64,
    pub alpha: f64,
}

impl TwoCreditorEconomy {
    pub fn new(continuation_value: f64, debt: f64, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidMarket(format!("alpha must be non-negative, got {alpha}")));
        }
        // Reuse the general validation (A > 0, D ≥ 1, ...).
        let econ = Self { continuation_value, debt, alpha };
        econ.market()?;
        Ok(econ)
    }

    pub fn debt_share(&self) -> f64 {
        self.debt / 2.0
    }

    /// The same economy expressed for the general mechanism.
    pub fn market(&self) -> Result<MarketParams> {
        let revision = if self.alpha == 0.0 {
            RevisionSpec::Zero
        } else {
            RevisionSpec::Linear { alpha: self.alpha }
        };
        MarketParams::new(self.debt, 2, self.continuation_value, 0.0, TypeDistribution::uniform(0.0, 1.0)?, revision)
    }

    fn revision(&self, theta: f64) -> f64 {
        self.alpha * (theta - 0.5)
    }

    /// Settlement threshold on `θ₁ + θ₂`.
    pub fn threshold(&self) -> f64 {
        (self.continuation_value + self.alpha) / (2.0 + self.alpha)
    }
}

fn check_unit(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::OutsideSupport { value: theta, lo: 0.0, hi: 1.0 })
    }
}

fn check_creditor(i: usize) -> Result<()> {
    if i < 2 {
        Ok(())
    } else {
        Err(Error::CreditorIndex { index: i, creditors: 2 })
    }
}

/// Settle iff `A ≥ (θ₁ + θ₂)(2 + α) − α`.
pub fn cf_investment_rule(econ: &TwoCreditorEconomy, theta1: f64, theta2: f64) -> Result<bool> {
    check_unit(theta1)?;
    check_unit(theta2)?;
    Ok(econ.continuation_value >= (theta1 + theta2) * (2.0 + econ.alpha) - econ.alpha)
}

pub fn cf_pivotal(econ: &TwoCreditorEconomy, theta_other: f64) -> Result<Pivotal> {
    check_unit(theta_other)?;
    let raw = econ.threshold() - theta_other;
    Ok(if raw < 0.0 {
        Pivotal { value: 0.0, clamp: Some(Clamp::Low) }
    } else if raw >= 1.0 {
        Pivotal { value: 1.0, clamp: Some(Clamp::High) }
    } else {
        Pivotal { value: raw, clamp: None }
    })
}

/// Payment to creditor `i` (zero-based); symmetric in `i`.
pub fn cf_transfer(econ: &TwoCreditorEconomy, i: usize, theta_other: f64) -> Result<f64> {
    check_creditor(i)?;
    let pivotal = cf_pivotal(econ, theta_other)?;
    Ok(match pivotal.clamp {
        None => {
            let a = econ.alpha;
            (2.0 * econ.continuation_value - a * a) / (2.0 * a + 4.0) - theta_other * (1.0 - a)
        }
        Some(_) => pivotal.value + econ.revision(theta_other),
    })
}

pub fn cf_forgiveness(econ: &TwoCreditorEconomy, i: usize, theta_other: f64) -> Result<f64> {
    Ok(econ.debt_share() - cf_transfer(econ, i, theta_other)?)
}

/// One row of the comparison between commonly printed constants for this
/// economy and the values that follow from the general optimal rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub quantity: String,
    pub printed: String,
    pub derived: String,
    pub printed_value: f64,
    pub derived_value: f64,
}

/// Evaluates printed vs. derived formulas at `(θ₁, θ₂)` and returns every
/// row where they disagree.
pub fn printed_discrepancies(econ: &TwoCreditorEconomy, theta1: f64, theta2: f64) -> Vec<Discrepancy> {
    let (a, alpha) = (econ.continuation_value, econ.alpha);
    let d = econ.debt_share();
    let derived_pivotal = econ.threshold() - theta2;
    let derived_transfer = derived_pivotal + econ.revision(theta2);
    let rows = [
        Discrepancy {
            quantity: "settlement threshold".into(),
            printed: "(θ1 + θ2)(1 + α) − α".into(),
            derived: "(θ1 + θ2)(2 + α) − α".into(),
            printed_value: (theta1 + theta2) * (1.0 + alpha) - alpha,
            derived_value: (theta1 + theta2) * (2.0 + alpha) - alpha,
        },
        Discrepancy {
            quantity: "pivotal type of creditor 1".into(),
            printed: "(4/(2 + α))(A − α/2) − 2θ1".into(),
            derived: "(A + α)/(2 + α) − θ2".into(),
            printed_value: 4.0 / (2.0 + alpha) * (a - alpha / 2.0) - 2.0 * theta1,
            derived_value: derived_pivotal,
        },
        Discrepancy {
            quantity: "transfer to creditor 1".into(),
            printed: "(4A − α²)/(2α + 4) − θ2(1 − α)".into(),
            derived: "(2A − α²)/(2α + 4) − θ2(1 − α)".into(),
            printed_value: (4.0 * a - alpha * alpha) / (2.0 * alpha + 4.0) - theta2 * (1.0 - alpha),
            derived_value: derived_transfer,
        },
        Discrepancy {
            quantity: "forgiveness of creditor 1".into(),
            printed: "d − θ1".into(),
            derived: "d − t1".into(),
            printed_value: d - theta1,
            derived_value: d - derived_transfer,
        },
    ];
    rows.into_iter()
        .filter(|r| (r.printed_value - r.derived_value).abs() > 1e-12)
        .collect()
}

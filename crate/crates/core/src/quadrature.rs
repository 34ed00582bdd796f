//! Integration primitives shared by the distribution and analysis layers.

use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-order Gauss–Legendre rule with support for piecewise integration
/// across known kinks of the integrand.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    rule: gauss_quad::GaussLegendre,
    nodes: usize,
}

impl GaussLegendre {
    pub fn new(nodes: usize) -> Result<Self> {
        let degree = NonZeroUsize::new(nodes)
            .filter(|n| n.get() >= 2)
            .ok_or_else(|| Error::InvalidQuadrature(format!("{nodes} Gauss-Legendre nodes")))?;
        Ok(Self {
            rule: gauss_quad::GaussLegendre::new(degree),
            nodes,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.rule.integrate(a, b, f)
    }

    /// Integrates over `[a, b]`, splitting the interval at every break point
    /// strictly inside it. Each piece gets the full rule, so integrands that
    /// are smooth between breaks are integrated to near machine precision.
    pub fn integrate_piecewise<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        mut f: F,
    ) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut points: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|x| x.is_finite() && *x > a && *x < b)
            .collect();
        points.sort_by(f64::total_cmp);
        points.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (b - a));

        let mut total = 0.0;
        let mut left = a;
        for right in points.into_iter().chain(std::iter::once(b)) {
            total += self.rule.integrate(left, right, &mut f);
            left = right;
        }
        total
    }
}

/// A numerical estimate with its standard error (zero for deterministic rules).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0 }
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self::exact(0.0);
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self::exact(mean);
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            value: mean,
            std_error: (var / n as f64).sqrt(),
        }
    }
}

/// Streaming accumulator for [`Estimate::from_samples`] without storing draws.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Accumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub(crate) fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub(crate) fn estimate(&self) -> Estimate {
        if self.count < 2 {
            return Estimate::exact(self.mean);
        }
        let var = self.m2 / (self.count - 1) as f64;
        Estimate {
            value: self.mean,
            std_error: (var / self.count as f64).sqrt(),
        }
    }
}

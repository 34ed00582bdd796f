//! Creditor-type distributions on a bounded support.
//!
//! Every family is truncated and renormalised to its support so that
//! `cdf(lo) = 0` and `cdf(hi) = 1` exactly. Construction rejects any
//! parameterisation whose inverse-hazard ratio `F/pdf` fails to increase
//! strictly on a 1 000-point grid, since the optimal mechanism relies on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Grid size for the monotone inverse-hazard gate.
pub const HAZARD_GRID: usize = 1_000;
/// Minimum per-step increase of `F/pdf` on the gate grid, relative to the support width.
pub const HAZARD_TOLERANCE: f64 = 1e-12;

const SQRT_PI_OVER_2: f64 = 1.253_314_137_315_500_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    lo: f64,
    hi: f64,
}

impl SupportInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidSupport { lo, hi, reason: "bounds must be finite" });
        }
        if lo < 0.0 {
            return Err(Error::InvalidSupport { lo, hi, reason: "lower bound must be non-negative" });
        }
        if lo >= hi {
            return Err(Error::InvalidSupport { lo, hi, reason: "lower bound must be below upper bound" });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// `points` evenly spaced values from `lo` to `hi` inclusive.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        match points {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => {
                let step = self.width() / (points - 1) as f64;
                (0..points)
                    .map(|k| if k + 1 == points { self.hi } else { self.lo + step * k as f64 })
                    .collect()
            }
        }
    }
}

/// Distribution family before truncation to the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Uniform,
    /// Exponential with the given rate, shifted to start at `lo`.
    TruncatedExponential { rate: f64 },
    /// Pareto with `shape` and `scale`; requires `lo >= scale`.
    TruncatedPareto { shape: f64, scale: f64 },
    /// Half-normal on `[0, inf)` with scale `sigma`.
    TruncatedPositiveNormal { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Uniform,
    TruncatedExponential,
    TruncatedPareto,
    TruncatedPositiveNormal,
}

/// JSON form: `{"kind": "...", "lo": x, "hi": y, ...family params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub kind: FamilyKind,
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

/// A validated type distribution `F` with density `pdf` on a bounded support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct TypeDistribution {
    family: Family,
    support: SupportInterval,
    /// Unnormalised mass on the whole support.
    mass: f64,
    mean: f64,
}

impl TypeDistribution {
    pub fn new(family: Family, support: SupportInterval) -> Result<Self> {
        let (lo, hi) = (support.lo, support.hi);
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidDistribution(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match family {
            Family::Uniform => {}
            Family::TruncatedExponential { rate } => positive("rate", rate)?,
            Family::TruncatedPareto { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)?;
                if lo < scale {
                    return Err(Error::InvalidDistribution(format!(
                        "pareto support must start at or above the scale ({lo} < {scale})"
                    )));
                }
            }
            Family::TruncatedPositiveNormal { sigma } => {
                positive("sigma", sigma)?;
                if hi / sigma > 30.0 {
                    return Err(Error::InvalidDistribution(format!(
                        "support reaches {:.1} standard deviations; density underflows",
                        hi / sigma
                    )));
                }
            }
        }

        let mut dist = Self { family, support, mass: 1.0, mean: 0.0 };
        dist.mass = dist.raw_mass(hi);
        if !(dist.mass.is_finite() && dist.mass > 0.0) {
            return Err(Error::InvalidDistribution("support carries no probability mass".into()));
        }
        dist.check_hazard_monotone()?;
        dist.mean = dist.compute_mean();
        Ok(dist)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(Family::Uniform, SupportInterval::new(lo, hi)?)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Cumulative distribution; arguments outside the support are clamped.
    pub fn cdf(&self, theta: f64) -> f64 {
        if theta <= self.support.lo {
            return 0.0;
        }
        if theta >= self.support.hi {
            return 1.0;
        }
        (self.raw_mass(theta) / self.mass).clamp(0.0, 1.0)
    }

    pub fn pdf(&self, theta: f64) -> Result<f64> {
        self.check_in_support(theta)?;
        Ok(self.density(theta))
    }

    /// `F(theta) / pdf(theta)`, the informational-rent term of the optimal rule.
    pub fn inverse_hazard(&self, theta: f64) -> Result<f64> {
        self.check_in_support(theta)?;
        if self.density(theta) <= 0.0 {
            return Err(Error::ZeroDensity(theta));
        }
        Ok(self.ratio(theta))
    }

    /// Inverse of [`cdf`](Self::cdf) for `u` in `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let (lo, hi) = (self.support.lo, self.support.hi);
        let u = u.clamp(0.0, 1.0);
        let x = match self.family {
            Family::Uniform => lo + u * (hi - lo),
            Family::TruncatedExponential { rate } => {
                let span = -(-rate * (hi - lo)).exp_m1();
                lo - (-u * span).ln_1p() / rate
            }
            Family::TruncatedPareto { shape, .. } => {
                let span = 1.0 - (lo / hi).powf(shape);
                lo * (1.0 - u * span).powf(-1.0 / shape)
            }
            Family::TruncatedPositiveNormal { .. } => {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    if self.cdf(mid) < u {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            }
        };
        self.support.clamp(x)
    }

    /// Inverse-transform sampling with a seeded ChaCha generator.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, count)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.quantile(rng.gen::<f64>())).collect()
    }

    pub(crate) fn check_in_support(&self, theta: f64) -> Result<()> {
        if self.support.contains(theta) {
            Ok(())
        } else {
            Err(Error::OutsideSupport { value: theta, lo: self.support.lo, hi: self.support.hi })
        }
    }

    /// Density with no support check; callers guarantee `theta` is in range.
    pub(crate) fn density(&self, theta: f64) -> f64 {
        self.raw_density(theta) / self.mass
    }

    /// `F/pdf` with no support check; the normalisation cancels.
    pub(crate) fn ratio(&self, theta: f64) -> f64 {
        let lo = self.support.lo;
        let x = theta.clamp(lo, self.support.hi);
        match self.family {
            Family::Uniform => x - lo,
            Family::TruncatedExponential { rate } => (rate * (x - lo)).exp_m1() / rate,
            Family::TruncatedPareto { shape, .. } => x * ((x / lo).powf(shape) - 1.0) / shape,
            Family::TruncatedPositiveNormal { sigma } => {
                let s = sigma * std::f64::consts::SQRT_2;
                let (a, b) = (lo / s, x / s);
                sigma * SQRT_PI_OVER_2 * (erfc(a) - erfc(b)) * (b * b).exp()
            }
        }
    }

    /// Unnormalised mass on `[lo, theta]`.
    fn raw_mass(&self, theta: f64) -> f64 {
        let lo = self.support.lo;
        match self.family {
            Family::Uniform => theta - lo,
            Family::TruncatedExponential { rate } => -(-rate * (theta - lo)).exp_m1() / rate,
            Family::TruncatedPareto { shape, .. } => 1.0 - (lo / theta).powf(shape),
            Family::TruncatedPositiveNormal { sigma } => {
                let s = sigma * std::f64::consts::SQRT_2;
                sigma * SQRT_PI_OVER_2 * (erfc(lo / s) - erfc(theta / s))
            }
        }
    }

    fn raw_density(&self, theta: f64) -> f64 {
        let lo = self.support.lo;
        match self.family {
            Family::Uniform => 1.0,
            Family::TruncatedExponential { rate } => (-rate * (theta - lo)).exp(),
            Family::TruncatedPareto { shape, .. } => shape * (lo / theta).powf(shape + 1.0) / lo,
            Family::TruncatedPositiveNormal { sigma } => (-(theta * theta) / (2.0 * sigma * sigma)).exp(),
        }
    }

    fn check_hazard_monotone(&self) -> Result<()> {
        let step_floor = HAZARD_TOLERANCE * self.support.width();
        let grid = self.support.grid(HAZARD_GRID);
        let mut prev = self.ratio(grid[0]);
        for &x in &grid[1..] {
            let d = self.density(x);
            let r = self.ratio(x);
            if !(d > 0.0 && d.is_finite() && r.is_finite()) {
                return Err(Error::ZeroDensity(x));
            }
            if r - prev <= step_floor {
                return Err(Error::HazardNotIncreasing { at: x });
            }
            prev = r;
        }
        Ok(())
    }

    fn compute_mean(&self) -> f64 {
        let (lo, hi) = (self.support.lo, self.support.hi);
        if let Family::Uniform = self.family {
            return 0.5 * (lo + hi);
        }
        let gl = GaussLegendre::new(64).expect("static rule");
        let panels = self.support.grid(9);
        gl.integrate_piecewise(lo, hi, &panels, |x| x * self.density(x))
    }
}

impl TryFrom<DistributionSpec> for TypeDistribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::InvalidDistribution(format!("{:?} requires `{name}`", spec.kind)))
        };
        let unexpected: Vec<&str> = [
            ("rate", spec.rate.is_some() && spec.kind != FamilyKind::TruncatedExponential),
            ("shape", spec.shape.is_some() && spec.kind != FamilyKind::TruncatedPareto),
            ("scale", spec.scale.is_some() && spec.kind != FamilyKind::TruncatedPareto),
            ("sigma", spec.sigma.is_some() && spec.kind != FamilyKind::TruncatedPositiveNormal),
        ]
        .into_iter()
        .filter_map(|(name, bad)| bad.then_some(name))
        .collect();
        if !unexpected.is_empty() {
            return Err(Error::InvalidDistribution(format!(
                "parameters {unexpected:?} do not apply to {:?}",
                spec.kind
            )));
        }
        let family = match spec.kind {
            FamilyKind::Uniform => Family::Uniform,
            FamilyKind::TruncatedExponential => Family::TruncatedExponential { rate: need("rate", spec.rate)? },
            FamilyKind::TruncatedPareto => Family::TruncatedPareto {
                shape: need("shape", spec.shape)?,
                scale: need("scale", spec.scale)?,
            },
            FamilyKind::TruncatedPositiveNormal => {
                Family::TruncatedPositiveNormal { sigma: need("sigma", spec.sigma)? }
            }
        };
        TypeDistribution::new(family, SupportInterval::new(spec.lo, spec.hi)?)
    }
}

impl From<TypeDistribution> for DistributionSpec {
    fn from(dist: TypeDistribution) -> Self {
        let mut spec = DistributionSpec {
            kind: FamilyKind::Uniform,
            lo: dist.support.lo,
            hi: dist.support.hi,
            rate: None,
            shape: None,
            scale: None,
            sigma: None,
        };
        match dist.family {
            Family::Uniform => {}
            Family::TruncatedExponential { rate } => {
                spec.kind = FamilyKind::TruncatedExponential;
                spec.rate = Some(rate);
            }
            Family::TruncatedPareto { shape, scale } => {
                spec.kind = FamilyKind::TruncatedPareto;
                spec.shape = Some(shape);
                spec.scale = Some(scale);
            }
            Family::TruncatedPositiveNormal { sigma } => {
                spec.kind = FamilyKind::TruncatedPositiveNormal;
                spec.sigma = Some(sigma);
            }
        }
        spec
    }
}

/// Kolmogorov–Smirnov statistic of `samples` against the distribution's cdf.
pub fn ks_statistic(dist: &TypeDistribution, samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = dist.cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1() -> TypeDistribution {
        TypeDistribution::new(Family::TruncatedExponential { rate: 1.0 }, SupportInterval::new(0.0, 1.0).unwrap())
            .unwrap()
    }

    fn all_families() -> Vec<TypeDistribution> {
        let s = |lo, hi| SupportInterval::new(lo, hi).unwrap();
        vec![
            TypeDistribution::uniform(0.0, 1.0).unwrap(),
            TypeDistribution::uniform(0.2, 3.0).unwrap(),
            exp1(),
            TypeDistribution::new(Family::TruncatedExponential { rate: 4.0 }, s(0.5, 2.0)).unwrap(),
            TypeDistribution::new(Family::TruncatedPareto { shape: 2.5, scale: 0.5 }, s(0.5, 2.0)).unwrap(),
            TypeDistribution::new(Family::TruncatedPositiveNormal { sigma: 0.4 }, s(0.0, 1.0)).unwrap(),
            TypeDistribution::new(Family::TruncatedPositiveNormal { sigma: 1.0 }, s(0.3, 2.0)).unwrap(),
        ]
    }

    // Composite Simpson on a fine grid; independent of the closed forms.
    fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + h * k as f64);
        }
        s * h / 3.0
    }

    #[test]
    fn uniform_values() {
        let u = TypeDistribution::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.cdf(0.5), 0.5);
        assert_eq!(u.cdf(0.0), 0.0);
        assert_eq!(u.pdf(0.3).unwrap(), 1.0);
        assert_eq!(u.inverse_hazard(0.5).unwrap(), 0.5);
        let u2 = TypeDistribution::uniform(0.0, 2.0).unwrap();
        assert_eq!(u2.pdf(0.3).unwrap(), 0.5);
        assert!((u2.inverse_hazard(1.2).unwrap() - 1.2).abs() < 1e-15);
        assert!((u2.cdf(1.2) / u2.pdf(1.2).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn truncated_exponential_matches_quadrature() {
        let d = exp1();
        let closed = (1.0 - (-0.5f64).exp()) / (1.0 - (-1.0f64).exp());
        let numeric = simpson(0.0, 0.5, |x| d.pdf(x).unwrap());
        assert!((d.cdf(0.5) - closed).abs() < 1e-12);
        assert!((numeric - closed).abs() < 1e-10);
        assert!((closed - 0.62246).abs() < 1e-5);

        let pdf0 = 1.0 / (1.0 - (-1.0f64).exp());
        assert!((d.pdf(0.0).unwrap() - pdf0).abs() < 1e-12);
        assert!((pdf0 - 1.58198).abs() < 1e-5);
    }

    #[test]
    fn endpoints_are_exact() {
        for d in all_families() {
            let s = d.support();
            assert_eq!(d.cdf(s.lo()), 0.0);
            assert_eq!(d.cdf(s.hi()), 1.0);
            assert_eq!(d.inverse_hazard(s.lo()).unwrap(), 0.0);
            assert_eq!(d.cdf(s.lo() - 1.0), 0.0);
            assert_eq!(d.cdf(s.hi() + 1.0), 1.0);
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for d in all_families() {
            let s = d.support();
            let total = simpson(s.lo(), s.hi(), |x| d.pdf(x).unwrap());
            assert!((total - 1.0).abs() < 1e-9, "{:?}: {total}", d.family());
        }
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        let h = 1e-6;
        for d in all_families() {
            let s = d.support();
            for x in s.grid(51).into_iter().skip(1).take(49) {
                let fd = (d.cdf(x + h) - d.cdf(x - h)) / (2.0 * h);
                assert!((fd - d.pdf(x).unwrap()).abs() < 1e-5, "{:?} at {x}", d.family());
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in all_families() {
            for k in 0..=100 {
                let u = k as f64 / 100.0;
                let x = d.quantile(u);
                assert!((d.cdf(x) - u).abs() < 1e-9, "{:?} u={u}", d.family());
            }
        }
    }

    #[test]
    fn inverse_hazard_strictly_increasing() {
        for d in all_families() {
            let grid = d.support().grid(HAZARD_GRID);
            let r: Vec<f64> = grid.iter().map(|&x| d.inverse_hazard(x).unwrap()).collect();
            assert!(r.windows(2).all(|w| w[1] > w[0]), "{:?}", d.family());
        }
    }

    #[test]
    fn mean_matches_quadrature() {
        for d in all_families() {
            let s = d.support();
            let m = simpson(s.lo(), s.hi(), |x| x * d.pdf(x).unwrap());
            assert!((d.mean() - m).abs() < 1e-10);
        }
    }

    #[test]
    fn out_of_support_errors() {
        let u = TypeDistribution::uniform(0.0, 1.0).unwrap();
        assert!(matches!(u.pdf(1.5), Err(Error::OutsideSupport { .. })));
        assert!(matches!(u.inverse_hazard(-0.1), Err(Error::OutsideSupport { .. })));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(SupportInterval::new(1.0, 1.0).is_err());
        assert!(SupportInterval::new(-0.5, 1.0).is_err());
        assert!(SupportInterval::new(0.0, f64::INFINITY).is_err());
        let s = SupportInterval::new(0.1, 1.0).unwrap();
        assert!(TypeDistribution::new(Family::TruncatedExponential { rate: 0.0 }, s).is_err());
        assert!(TypeDistribution::new(Family::TruncatedPareto { shape: 2.0, scale: 0.5 }, s).is_err());
        assert!(TypeDistribution::new(Family::TruncatedPositiveNormal { sigma: 0.01 }, s).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let u = TypeDistribution::uniform(0.0, 1.0).unwrap();
        let a = u.sample(42, 3);
        assert_eq!(a, u.sample(42, 3));
        assert_ne!(a, u.sample(43, 3));
        assert!(a.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn sample_mean_and_ks() {
        let u = TypeDistribution::uniform(0.0, 1.0).unwrap();
        let xs = u.sample(7, 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.005);

        for d in all_families() {
            let xs = d.sample(11, 100_000);
            assert!(ks_statistic(&d, &xs) < 0.02, "{:?}", d.family());
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let d: TypeDistribution =
            serde_json::from_str(r#"{"kind":"truncated-exponential","lo":0,"hi":1,"rate":1}"#).unwrap();
        assert_eq!(d, exp1());
        let back: TypeDistribution = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<TypeDistribution>(r#"{"kind":"uniform","lo":0,"hi":1,"rate":1}"#).is_err());
        assert!(serde_json::from_str::<TypeDistribution>(r#"{"kind":"uniform","lo":0,"hi":1,"bogus":1}"#).is_err());
        assert!(serde_json::from_str::<TypeDistribution>(r#"{"kind":"truncated-pareto","lo":1,"hi":2}"#).is_err());
    }
}

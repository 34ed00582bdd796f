//! Arithmetic in `Z_p` with `p = 2⁶¹ − 1`, fixed-point encoding and additive
//! two-party shares.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ProtocolError;

pub const MODULUS: u64 = (1 << 61) - 1;
pub const DEFAULT_FRACTIONAL_BITS: u32 = 20;
/// Largest magnitude accepted by [`encode`].
pub const MAX_ENCODABLE: f64 = (1u64 << 30) as f64;
/// Signed values must stay below this magnitude to avoid wrapping.
const SIGNED_LIMIT: f64 = (1u64 << 60) as f64;

/// Field element, always reduced. Serialized as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Fp(u64);

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);

    pub fn new(value: u64) -> Self {
        Fp(value % MODULUS)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn from_signed(value: i128) -> Self {
        Fp(value.rem_euclid(MODULUS as i128) as u64)
    }

    /// Values above `p/2` read as negative.
    pub fn to_signed(self) -> i128 {
        if self.0 > MODULUS / 2 {
            self.0 as i128 - MODULUS as i128
        } else {
            self.0 as i128
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Fp(rng.gen_range(0..MODULUS))
    }

    pub fn pow2(bits: u32) -> Self {
        Fp::new(1u64 << bits)
    }
}

impl Add for Fp {
    type Output = Fp;
    fn add(self, rhs: Fp) -> Fp {
        let s = self.0 + rhs.0;
        Fp(if s >= MODULUS { s - MODULUS } else { s })
    }
}

impl Sub for Fp {
    type Output = Fp;
    fn sub(self, rhs: Fp) -> Fp {
        self + (-rhs)
    }
}

impl Neg for Fp {
    type Output = Fp;
    fn neg(self) -> Fp {
        Fp(if self.0 == 0 { 0 } else { MODULUS - self.0 })
    }
}

impl Mul for Fp {
    type Output = Fp;
    fn mul(self, rhs: Fp) -> Fp {
        let wide = self.0 as u128 * rhs.0 as u128;
        // 2⁶¹ ≡ 1 (mod p).
        let folded = (wide & MODULUS as u128) + (wide >> 61);
        Fp::new(folded as u64)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Fp {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v: u64 = s.parse().map_err(|e| format!("bad field element {s:?}: {e}"))?;
        if v >= MODULUS {
            return Err(format!("field element {v} not reduced"));
        }
        Ok(Fp(v))
    }
}

impl Serialize for Fp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A fixed-point value: `raw = round(x · 2^bits) mod p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPoint {
    pub raw: Fp,
    pub fractional_bits: u32,
}

impl FixedPoint {
    pub fn encode(x: f64, fractional_bits: u32) -> Result<Self, ProtocolError> {
        Ok(Self { raw: encode(x, fractional_bits)?, fractional_bits })
    }

    pub fn decode(&self) -> f64 {
        decode(self.raw, self.fractional_bits)
    }
}

/// `round(x · 2^bits)` with halves rounded away from zero.
pub fn encode(x: f64, bits: u32) -> Result<Fp, ProtocolError> {
    if !x.is_finite() || x.abs() >= MAX_ENCODABLE {
        return Err(ProtocolError::FieldOverflow(format!("{x} is outside ±2^30")));
    }
    let scaled = (x * (bits as f64).exp2()).round();
    if scaled.abs() >= SIGNED_LIMIT {
        return Err(ProtocolError::FieldOverflow(format!("{x} at 2^{bits} exceeds the signed range")));
    }
    Ok(Fp::from_signed(scaled as i128))
}

pub fn decode(raw: Fp, bits: u32) -> f64 {
    raw.to_signed() as f64 / (bits as f64).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Evaluator {
    E1,
    E2,
}

impl Evaluator {
    pub fn other(self) -> Evaluator {
        match self {
            Evaluator::E1 => Evaluator::E2,
            Evaluator::E2 => Evaluator::E1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub party: Evaluator,
    pub value: Fp,
}

/// `(r, x − r)` with `r` uniform in `Z_p`.
pub fn share<R: Rng + ?Sized>(x: Fp, rng: &mut R) -> [Share; 2] {
    let r = Fp::random(rng);
    [Share { party: Evaluator::E1, value: r }, Share { party: Evaluator::E2, value: x - r }]
}

/// Encodes `theta` at `bits` and splits it between the evaluators.
pub fn share_input<R: Rng + ?Sized>(theta: f64, bits: u32, rng: &mut R) -> Result<[Share; 2], ProtocolError> {
    Ok(share(encode(theta, bits)?, rng))
}

pub fn reconstruct(a: Share, b: Share) -> Fp {
    a.value + b.value
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arithmetic_matches_big_integers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let (a, b) = (Fp::random(&mut rng), Fp::random(&mut rng));
            let p = MODULUS as u128;
            assert_eq!((a * b).value() as u128, a.value() as u128 * b.value() as u128 % p);
            assert_eq!((a + b).value() as u128, (a.value() as u128 + b.value() as u128) % p);
            assert_eq!(a - b + b, a);
            assert_eq!(a + (-a), Fp::ZERO);
        }
    }

    #[test]
    fn encoding_examples() {
        assert_eq!(encode(0.4, 20).unwrap().value(), 419_430);
        // 2.5 · 2⁻²⁰ sits exactly on a half.
        assert_eq!(encode(2.5 / (1u64 << 20) as f64, 20).unwrap().value(), 3);
        assert_eq!(encode(-2.5 / (1u64 << 20) as f64, 20).unwrap().to_signed(), -3);
        assert!((decode(encode(-7.3, 20).unwrap(), 20) + 7.3).abs() <= 2f64.powi(-21));
        assert!(matches!(encode(2f64.powi(30), 20), Err(ProtocolError::FieldOverflow(_))));
        assert!(matches!(encode(f64::NAN, 20), Err(ProtocolError::FieldOverflow(_))));
    }

    #[test]
    fn shares_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let x: f64 = rng.gen_range(-1000.0..1000.0);
            let [a, b] = share_input(x, 20, &mut rng).unwrap();
            assert_eq!(reconstruct(a, b), encode(x, 20).unwrap());
            assert!((decode(reconstruct(a, b), 20) - x).abs() <= 2f64.powi(-20));
        }
    }

    #[test]
    fn share_randomness_depends_on_seed() {
        let x = encode(0.4, 20).unwrap();
        let a = share(x, &mut ChaCha8Rng::seed_from_u64(1));
        let b = share(x, &mut ChaCha8Rng::seed_from_u64(2));
        assert_ne!(a[0].value, b[0].value);
    }

    #[test]
    fn serializes_as_decimal_string() {
        let x = Fp::new(419_430);
        assert_eq!(serde_json::to_string(&x).unwrap(), "\"419430\"");
        assert_eq!(serde_json::from_str::<Fp>("\"419430\"").unwrap(), x);
        assert!(serde_json::from_str::<Fp>(&format!("\"{MODULUS}\"")).is_err());
        assert!(serde_json::from_str::<Fp>("419430").is_err());
    }
}

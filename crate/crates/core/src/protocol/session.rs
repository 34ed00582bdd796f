//! The settlement circuit for two creditors and the per-role state machines.
//!
//! With uniform types `F/pdf(θ) = θ − lo`, so `A ≥ S` is equivalent to
//! `θ₁ + θ₂ ≤ τ = (A + 2·lo + 2αμ)/(2 + α)` and each transfer is affine in
//! the other creditor's type. The only non-linear step is the sign test,
//! done on a Beaver-multiplied masked value.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::field::{decode, encode, share, share_input, Evaluator, Fp};
use super::transport::Mailbox;
use super::wire::{Body, DealerShare, PartyRole};
use super::{PartyOutcome, ProtocolError};
use crate::distributions::Family;
use crate::mechanism::MarketParams;

/// Extra fractional bits used for the comparison operands.
pub(crate) const COMPARISON_EXTRA_BITS: u32 = 10;
pub(crate) const MASK_BITS: u32 = 20;
/// Signed magnitudes must stay below `2^60` inside the field.
const HEADROOM_BITS: i32 = 60;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Circuit {
    pub creditors: usize,
    pub bits: u32,
    pub tau: f64,
    pub hi: f64,
    pub alpha: f64,
    pub mean: f64,
    pub debt_share: f64,
    /// Whether some profile can clamp a pivotal type at the top of the support.
    pub clamp_possible: bool,
}

impl Circuit {
    pub(crate) fn new(params: &MarketParams, bits: u32) -> Result<Self, ProtocolError> {
        if params.creditors() != 2 {
            return Err(ProtocolError::Unsupported(format!(
                "secure evaluation covers two creditors, economy has {}",
                params.creditors()
            )));
        }
        let dist = params.distribution();
        if dist.family() != Family::Uniform {
            return Err(ProtocolError::Unsupported("secure evaluation needs uniform types".into()));
        }
        if !(8..=24).contains(&bits) {
            return Err(ProtocolError::Unsupported(format!("fractional bits must be in 8..=24, got {bits}")));
        }
        let support = dist.support();
        let (lo, hi, alpha, mean) = (support.lo(), support.hi(), params.alpha(), dist.mean());
        let tau = (params.continuation_value() + 2.0 * lo + 2.0 * alpha * mean) / (2.0 + alpha);
        let circuit = Self {
            creditors: 2,
            bits,
            tau,
            hi,
            alpha,
            mean,
            debt_share: params.debt_share(),
            clamp_possible: tau - lo >= hi,
        };
        circuit.check_headroom()?;
        Ok(circuit)
    }

    fn check_headroom(&self) -> Result<(), ProtocolError> {
        let fits = |magnitude: f64, bits: u32| magnitude == 0.0 || magnitude.log2() + (bits as f64) < HEADROOM_BITS as f64;
        let operand = self.tau.abs().max((self.tau - self.hi).abs()) + 2.0 * self.hi.abs();
        if !fits(operand, self.comparison_bits() + MASK_BITS) {
            return Err(ProtocolError::FieldOverflow(format!(
                "masked comparison of magnitude {operand} does not fit the field"
            )));
        }
        for clamped in [false, true] {
            let (c0, c1) = self.coefficients(clamped);
            let transfer = c0.abs() + c1.abs() * self.hi.abs();
            if !fits(transfer, 2 * self.bits) {
                return Err(ProtocolError::FieldOverflow(format!("transfer of magnitude {transfer} does not fit the field")));
            }
        }
        Ok(())
    }

    pub(crate) fn comparison_bits(&self) -> u32 {
        self.bits + COMPARISON_EXTRA_BITS
    }

    /// Solvency plus, when possible, one clamp test per creditor.
    pub(crate) fn comparisons(&self) -> usize {
        if self.clamp_possible {
            1 + self.creditors
        } else {
            1
        }
    }

    /// `t = c0 + c1·θ_other`.
    pub(crate) fn coefficients(&self, clamped: bool) -> (f64, f64) {
        if clamped {
            (self.hi - self.alpha * self.mean, self.alpha)
        } else {
            (self.tau - self.alpha * self.mean, self.alpha - 1.0)
        }
    }
}

fn expect_decision(mb: &mut Mailbox) -> Result<bool, ProtocolError> {
    let mut seen = Vec::with_capacity(2);
    for e in [PartyRole::E1, PartyRole::E2] {
        match mb.expect(e, "decision", |b| matches!(b, Body::Decision { .. }))? {
            Body::Decision { solvent } => seen.push(solvent),
            _ => unreachable!(),
        }
    }
    if seen[0] != seen[1] {
        return Err(ProtocolError::Malformed("evaluators announced different decisions".into()));
    }
    Ok(seen[0])
}

fn expect_transfer(mb: &mut Mailbox, creditor: usize, bits: u32) -> Result<f64, ProtocolError> {
    let mut total = Fp::ZERO;
    for e in [PartyRole::E1, PartyRole::E2] {
        match mb.expect(e, "transfer share", |b| matches!(b, Body::TransferShare { creditor: c, .. } if *c == creditor))? {
            Body::TransferShare { share, .. } => total = total + share,
            _ => unreachable!(),
        }
    }
    Ok(decode(total, 2 * bits))
}

pub(crate) fn run_creditor(
    mb: &mut Mailbox,
    circuit: &Circuit,
    session: &str,
    index: usize,
    theta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PartyOutcome, ProtocolError> {
    let role = PartyRole::Creditor(index);
    let [s1, s2] = share_input(theta, circuit.bits, rng)?;
    mb.send(PartyRole::E1, Body::InputShare { share: s1.value })?;
    mb.send(PartyRole::E2, Body::InputShare { share: s2.value })?;
    let solvent = expect_decision(mb)?;
    let own = if solvent { Some(expect_transfer(mb, index, circuit.bits)?) } else { None };
    let settlement = mb.expect(PartyRole::Debtor, "settlement", |b| matches!(b, Body::Settlement { .. }))?;
    let Body::Settlement { solvent: announced, transfer, forgiveness } = settlement else { unreachable!() };
    if announced != solvent || own.is_some_and(|t| t != transfer) {
        return Err(ProtocolError::Malformed("debtor settlement disagrees with the evaluators".into()));
    }
    let mut outcome = PartyOutcome::new(session, role, solvent, circuit.creditors);
    outcome.transfers[index] = Some(transfer);
    outcome.forgiveness[index] = Some(forgiveness);
    Ok(outcome)
}

/// Multiplies the shared operand by the shared mask and opens the product
/// between the evaluators; `true` when the operand is non-negative.
fn masked_sign(
    mb: &mut Mailbox,
    me: Evaluator,
    comparison: usize,
    z: Fp,
    item: &DealerShare,
) -> Result<bool, ProtocolError> {
    let peer = PartyRole::Evaluator(me.other());
    let (d, e) = (z - item.a, item.m - item.b);
    mb.send(peer, Body::OpenMasked { comparison, d, e })?;
    let Body::OpenMasked { d: pd, e: pe, .. } = mb.expect(peer, "masked opening", |b| {
        matches!(b, Body::OpenMasked { comparison: c, .. } if *c == comparison)
    })?
    else {
        unreachable!()
    };
    let (d, e) = (d + pd, e + pe);
    let mut w = item.c + d * item.b + e * item.a;
    if me == Evaluator::E1 {
        w = w + d * e;
    }
    mb.send(peer, Body::OpenProduct { comparison, w })?;
    let Body::OpenProduct { w: pw, .. } = mb.expect(peer, "product opening", |b| {
        matches!(b, Body::OpenProduct { comparison: c, .. } if *c == comparison)
    })?
    else {
        unreachable!()
    };
    Ok((w + pw).to_signed() >= 0)
}

pub(crate) fn run_evaluator(
    mb: &mut Mailbox,
    circuit: &Circuit,
    session: &str,
    me: Evaluator,
) -> Result<PartyOutcome, ProtocolError> {
    let n = circuit.creditors;
    let first = me == Evaluator::E1;
    let mut inputs = Vec::with_capacity(n);
    for i in 0..n {
        match mb.expect(PartyRole::Creditor(i), "input share", |b| matches!(b, Body::InputShare { .. }))? {
            Body::InputShare { share } => inputs.push(share),
            _ => unreachable!(),
        }
    }
    let Body::DealerItems { items } = mb.expect(PartyRole::Debtor, "dealer items", |b| matches!(b, Body::DealerItems { .. }))?
    else {
        unreachable!()
    };
    if items.len() != circuit.comparisons() {
        return Err(ProtocolError::Malformed(format!(
            "expected {} dealer items, got {}",
            circuit.comparisons(),
            items.len()
        )));
    }

    let cmp_bits = circuit.comparison_bits();
    let upscale = Fp::pow2(COMPARISON_EXTRA_BITS);
    let public = |x: Fp| if first { x } else { Fp::ZERO };
    let sum = inputs.iter().fold(Fp::ZERO, |acc, &x| acc + x);
    let z = public(encode(circuit.tau, cmp_bits)?) - upscale * sum;
    let solvent = masked_sign(mb, me, 0, z, &items[0])?;
    for to in [PartyRole::Debtor].into_iter().chain((0..n).map(PartyRole::Creditor)) {
        mb.send(to, Body::Decision { solvent })?;
    }

    if solvent {
        for i in 0..n {
            let other = inputs[1 - i];
            let clamped = if circuit.clamp_possible {
                let zi = public(encode(circuit.tau - circuit.hi, cmp_bits)?) - upscale * other;
                masked_sign(mb, me, 1 + i, zi, &items[1 + i])?
            } else {
                false
            };
            let (c0, c1) = circuit.coefficients(clamped);
            let share = public(encode(c0, 2 * circuit.bits)?) + encode(c1, circuit.bits)? * other;
            for to in [PartyRole::Debtor, PartyRole::Creditor(i)] {
                mb.send(to, Body::TransferShare { creditor: i, share })?;
            }
        }
    }
    Ok(PartyOutcome::new(session, PartyRole::Evaluator(me), solvent, n))
}

pub(crate) fn run_debtor(
    mb: &mut Mailbox,
    circuit: &Circuit,
    session: &str,
    rng: &mut ChaCha8Rng,
) -> Result<PartyOutcome, ProtocolError> {
    let n = circuit.creditors;
    let (mut to_e1, mut to_e2) = (Vec::new(), Vec::new());
    for _ in 0..circuit.comparisons() {
        let a = Fp::random(rng);
        let b = Fp::random(rng);
        let m = Fp::new(rng.gen_range(1..=1u64 << MASK_BITS));
        let [a1, a2] = share(a, rng);
        let [b1, b2] = share(b, rng);
        let [c1, c2] = share(a * b, rng);
        let [m1, m2] = share(m, rng);
        to_e1.push(DealerShare { a: a1.value, b: b1.value, c: c1.value, m: m1.value });
        to_e2.push(DealerShare { a: a2.value, b: b2.value, c: c2.value, m: m2.value });
    }
    mb.send(PartyRole::E1, Body::DealerItems { items: to_e1 })?;
    mb.send(PartyRole::E2, Body::DealerItems { items: to_e2 })?;

    let solvent = expect_decision(mb)?;
    let mut outcome = PartyOutcome::new(session, PartyRole::Debtor, solvent, n);
    for i in 0..n {
        let (transfer, forgiveness) = if solvent {
            let t = expect_transfer(mb, i, circuit.bits)?;
            (t, circuit.debt_share - t)
        } else {
            (0.0, 0.0)
        };
        outcome.transfers[i] = Some(transfer);
        outcome.forgiveness[i] = Some(forgiveness);
    }
    for i in 0..n {
        let body = Body::Settlement {
            solvent,
            transfer: outcome.transfers[i].unwrap_or(0.0),
            forgiveness: outcome.forgiveness[i].unwrap_or(0.0),
        };
        mb.send(PartyRole::Creditor(i), body)?;
    }
    Ok(outcome)
}

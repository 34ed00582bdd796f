//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use jubilee::analysis::{
    self, check_envelope, check_ic, check_ic_with, check_transfer_identity, QuadratureSpec, TransferRule,
};
use jubilee::closedform::{cf_investment_rule, cf_transfer, printed_discrepancies, TwoCreditorEconomy};
use jubilee::mechanism;
use jubilee::protocol::{
    ideal_run, mpc_run, scan_clear_inputs, share_uniformity_p_value, Body, Fp, LocalTransport, PartyRole,
    SessionConfig,
};
use jubilee::{MarketParams, OutcomeFlag, RevisionSpec, TypeDistribution, TypeProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const IC_TOL: f64 = 1e-6;
const NEGATIVE_CONTROL_MIN: f64 = 0.01;
const NEGATIVE_CONTROL_COEFFICIENT: f64 = 0.5;
const IR_TOL: f64 = 1e-9;
const TOP_TOL: f64 = 1e-9;
const ANCHOR_TOL: f64 = 1e-6;
const MC_SIGMAS: f64 = 3.0;
const ENVELOPE_TOL: f64 = 1e-4;
const MONOTONE_TOL: f64 = 1e-6;
const IDENTITY_TOL: f64 = 1e-6;
const CF_TRANSFER_TOL: f64 = 1e-10;
const PROTOCOL_TRANSFER_TOL: f64 = 1e-5;
const QUANTIZATION_BAND: f64 = 1.0 / 262_144.0; // 2^-18
const CHI_SQUARE_MIN_P: f64 = 0.01;
const E2E_TOL: f64 = 1e-5;
const GL: QuadratureSpec = QuadratureSpec::GaussLegendre { nodes: 64 };
const ALPHAS: [f64; 3] = [0.0, 0.5, 1.0];
const CONTINUATION: [f64; 2] = [1.0, 2.0];

fn economy(a: f64, alpha: f64) -> MarketParams {
    let revision = if alpha == 0.0 { RevisionSpec::Zero } else { RevisionSpec::Linear { alpha } };
    MarketParams::new(2.0, 2, a, 0.0, TypeDistribution::uniform(0.0, 1.0).unwrap(), revision).unwrap()
}

fn test_economies() -> impl Iterator<Item = (f64, f64, MarketParams)> {
    ALPHAS.into_iter().flat_map(|alpha| CONTINUATION.into_iter().map(move |a| (a, alpha, economy(a, alpha))))
}

type Verdict = (bool, String);
type Criterion = (&'static str, fn() -> Verdict);

fn c1_incentive_compatibility() -> Verdict {
    let start = Instant::now();
    let (mut worst, mut weakest_control) = (f64::NEG_INFINITY, f64::INFINITY);
    for (_, _, p) in test_economies() {
        worst = worst.max(check_ic(&p, 41, &GL).unwrap().max_violation);
        let rule = TransferRule::ReportBonus { coefficient: NEGATIVE_CONTROL_COEFFICIENT };
        weakest_control = weakest_control.min(check_ic_with(&p, rule, 41, &GL).unwrap().max_violation);
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst <= IC_TOL && weakest_control > NEGATIVE_CONTROL_MIN && secs < 30.0,
        format!("max violation {worst:.3e} (<= {IC_TOL:e}); negative control min {weakest_control:.4} (> {NEGATIVE_CONTROL_MIN}); {secs:.1}s (< 30s)"),
    )
}

fn c2_participation() -> Verdict {
    let (mut min_u, mut top) = (f64::INFINITY, 0.0f64);
    for (_, _, p) in test_economies() {
        let ic = check_ic(&p, 41, &GL).unwrap();
        min_u = min_u.min(ic.min_truthful_utility);
        top = top.max(analysis::expected_utility_change(&p, 1.0, 1.0, &GL).unwrap().value.abs());
    }
    (
        min_u >= -IR_TOL && top <= TOP_TOL,
        format!("min U(θ,θ) {min_u:.3e} (>= -{IR_TOL:e}); max |U(1,1)| {top:.3e} (<= {TOP_TOL:e})"),
    )
}

fn c3_analytic_anchor() -> Verdict {
    let p = economy(1.0, 0.0);
    let u = analysis::expected_utility_change(&p, 0.2, 0.2, &GL).unwrap().value;
    let k = analysis::solvency_probability(&p, 0.2, &GL).unwrap().value;
    let v = analysis::debtor_expected_utility(&p, &GL).unwrap().value;
    let vs = analysis::virtual_surplus(&p, &GL).unwrap().value;
    let mc = analysis::debtor_expected_utility(&p, &QuadratureSpec::MonteCarlo { samples: 100_000, seed: 3 }).unwrap();
    let exact_v = 1.0 / 24.0;
    let ok = (u - 0.045).abs() <= ANCHOR_TOL
        && (k - 0.3).abs() <= ANCHOR_TOL
        && (v - exact_v).abs() <= ANCHOR_TOL
        && (mc.value - exact_v).abs() <= MC_SIGMAS * mc.std_error
        && (v - vs).abs() <= ANCHOR_TOL;
    (
        ok,
        format!(
            "U(0.2,0.2) {u:.9}; K(0.2) {k:.9}; V {v:.9} (1/24 = {exact_v:.9}); MC V {:.6} ± {:.6}; |V - VS| {:.2e}",
            mc.value,
            mc.std_error,
            (v - vs).abs()
        ),
    )
}

fn c4_envelope() -> Verdict {
    let mut worst = 0.0f64;
    let mut points = 0;
    for (_, _, p) in test_economies() {
        let env = check_envelope(&p, 101, &GL).unwrap();
        worst = worst.max(env.slope_residual);
        points = env.interior_points;
    }
    (
        worst <= ENVELOPE_TOL && points == 99,
        format!("max |dU/dθ + K| {worst:.3e} over {points} interior points (<= {ENVELOPE_TOL:e})"),
    )
}

fn c5_monotone_solvency() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    for (_, _, p) in test_economies() {
        let k: Vec<f64> = p
            .distribution()
            .support()
            .grid(101)
            .into_iter()
            .map(|x| analysis::solvency_probability(&p, x, &GL).unwrap().value)
            .collect();
        worst = worst.max(k.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max));
    }
    (worst <= MONOTONE_TOL, format!("largest increase of K on 101 points {worst:.3e} (<= {MONOTONE_TOL:e})"))
}

fn c6_transfer_identity() -> Verdict {
    let mut worst = 0.0f64;
    for (_, _, p) in test_economies() {
        for id in check_transfer_identity(&p, &GL).unwrap() {
            worst = worst.max(id.residual.abs());
        }
    }
    (worst <= IDENTITY_TOL, format!("max |E[k t] - E[k (l + F/f)]| {worst:.3e} over both creditors (<= {IDENTITY_TOL:e})"))
}

fn c7_blessing() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0, 2.0] {
        let b = analysis::blessing_delta(&economy(2.0, alpha), 100_000, 17).unwrap();
        ok &= b.integral.value < -MC_SIGMAS * b.integral.std_error;
        parts.push(format!("α={alpha}: {:.5} ± {:.5}", b.integral.value, b.integral.std_error));
    }
    (ok, format!("{} (each < -3 s.e.)", parts.join("; ")))
}

fn c8_closed_form() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut decision_mismatches, mut worst) = (0, 0.0f64);
    for _ in 0..10_000 {
        let econ = TwoCreditorEconomy::new(rng.gen_range(0.05..4.0), 2.0, rng.gen_range(0.0..2.0)).unwrap();
        let market = econ.market().unwrap();
        let (t1, t2): (f64, f64) = (rng.gen(), rng.gen());
        let profile = TypeProfile::new(&market, vec![t1, t2]).unwrap();
        if cf_investment_rule(&econ, t1, t2).unwrap() != mechanism::investment_rule(&market, &profile) {
            decision_mismatches += 1;
        }
        for (i, other) in [(0, t2), (1, t1)] {
            let general = mechanism::optimal_transfer(&market, &[other]).unwrap();
            worst = worst.max((cf_transfer(&econ, i, other).unwrap() - general).abs());
        }
    }
    let econ = TwoCreditorEconomy::new(2.0, 2.0, 1.0).unwrap();
    let table = printed_discrepancies(&econ, 0.3, 0.6);
    println!("    discrepancy table at A=2, α=1, θ=(0.3, 0.6):");
    for row in &table {
        println!(
            "      {:<28} printed {:<34} = {:>8.4}   derived {:<30} = {:>8.4}",
            row.quantity, row.printed, row.printed_value, row.derived, row.derived_value
        );
    }
    (
        decision_mismatches == 0 && worst <= CF_TRANSFER_TOL && !table.is_empty(),
        format!(
            "{decision_mismatches} decision mismatches in 10^4 draws; max transfer gap {worst:.2e} (<= {CF_TRANSFER_TOL:e}); {} discrepancy rows",
            table.len()
        ),
    )
}

fn c9_protocol_differential() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut mismatches, mut banded, mut leaks, mut worst) = (0, 0, 0, 0.0f64);
    for session in 0..1_000u64 {
        let p = economy(rng.gen_range(0.2..4.0), rng.gen_range(0.0..2.0));
        let profile = TypeProfile::new(&p, vec![rng.gen(), rng.gen()]).unwrap();
        let (ideal, _) = ideal_run(&p, &profile).unwrap();
        let (secure, transcript) =
            mpc_run(&p, &profile, LocalTransport::InProcess, &SessionConfig::new(Some(session))).unwrap();
        leaks += scan_clear_inputs(&transcript.messages, profile.types(), 20).len();
        let gap = p.continuation_value() - mechanism::virtual_cost(&p, profile.types());
        if gap.abs() < QUANTIZATION_BAND {
            banded += 1;
            assert!(secure.flags.contains(&OutcomeFlag::QuantizationBand));
            continue;
        }
        if ideal.solvent != secure.solvent {
            mismatches += 1;
        } else if ideal.solvent {
            for (a, b) in ideal.transfers.iter().zip(&secure.transfers) {
                worst = worst.max((a - b).abs());
            }
        }
    }

    // E1's view of creditor 0's share over sessions with fixed inputs.
    let p = economy(2.0, 1.0);
    let profile = TypeProfile::new(&p, vec![0.3, 0.6]).unwrap();
    let shares: Vec<Fp> = (0..1_000u64)
        .map(|s| {
            let (_, t) =
                mpc_run(&p, &profile, LocalTransport::InProcess, &SessionConfig::new(Some(50_000 + s))).unwrap();
            t.messages
                .iter()
                .find_map(|m| match m.body {
                    Body::InputShare { share } if m.from == PartyRole::Creditor(0) && m.to == PartyRole::E1 => Some(share),
                    _ => None,
                })
                .expect("input share present")
        })
        .collect();
    let p_value = share_uniformity_p_value(&shares, 16);
    let secs = start.elapsed().as_secs_f64();
    (
        mismatches == 0 && worst <= PROTOCOL_TRANSFER_TOL && leaks == 0 && p_value > CHI_SQUARE_MIN_P && secs < 60.0,
        format!(
            "{mismatches} decision mismatches ({banded} in band); max transfer gap {worst:.2e} (<= {PROTOCOL_TRANSFER_TOL:e}); \
             {leaks} clear inputs; chi-square p {p_value:.3} (> {CHI_SQUARE_MIN_P}); {secs:.1}s (< 60s)"
        ),
    )
}

struct Reaper(Vec<Child>);

impl Drop for Reaper {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn c10_end_to_end() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_jubilee");
    let dir = tempfile::tempdir().unwrap();
    let roles = ["C0", "C1", "E1", "E2", "D"];
    let endpoints: BTreeMap<String, String> = roles
        .iter()
        .map(|r| {
            let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
            (r.to_string(), format!("127.0.0.1:{port}"))
        })
        .collect();
    let config = json!({
        "market": {
            "debt": 2.0, "creditors": 2, "continuation_value": 2.0,
            "distribution": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            "revision": {"kind": "linear", "alpha": 1.0}
        },
        "protocol": {"transport": "tcp", "endpoints": endpoints, "seed": 2024, "timeout_ms": 10_000}
    });
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config.to_string()).unwrap();

    let settle_out = dir.path().join("settle.json");
    let status = Command::new(bin)
        .args(["--quiet", "--config"])
        .arg(&cfg)
        .args(["settle", "--types", "0.3,0.6", "--out"])
        .arg(&settle_out)
        .status()
        .unwrap();
    let reference: Value = serde_json::from_str(&std::fs::read_to_string(&settle_out).unwrap()).unwrap();
    let reference_forgiveness = reference["outcome"]["forgiveness"][0].as_f64().unwrap();

    let launches: [(&str, Vec<&str>); 5] = [
        ("E1", vec!["--role", "evaluator", "--index", "1"]),
        ("E2", vec!["--role", "evaluator", "--index", "2"]),
        ("D", vec!["--role", "debtor"]),
        ("C0", vec!["--role", "creditor", "--index", "0", "--input", "0.3"]),
        ("C1", vec!["--role", "creditor", "--index", "1", "--input", "0.6"]),
    ];
    let mut reaper = Reaper(Vec::new());
    for (name, args) in &launches {
        let child = Command::new(bin)
            .args(["--quiet", "--config"])
            .arg(&cfg)
            .args(["protocol", "--out"])
            .arg(dir.path().join(format!("{name}.jsonl")))
            .args(args)
            .stdout(Stdio::null())
            .spawn()
            .unwrap();
        reaper.0.push(child);
    }
    let deadline = Instant::now() + Duration::from_secs(60);
    let mut codes = Vec::new();
    for child in &mut reaper.0 {
        loop {
            if let Some(s) = child.try_wait().unwrap() {
                codes.push(s.code().unwrap_or(-1));
                break;
            }
            if Instant::now() > deadline {
                codes.push(-1);
                break;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }
    let footer = |name: &str| -> Option<Value> {
        let text = std::fs::read_to_string(dir.path().join(format!("{name}.jsonl"))).ok()?;
        serde_json::from_str(text.lines().last()?).ok()
    };
    let footers: Vec<Option<Value>> = roles.iter().map(|r| footer(r)).collect();
    let all_written = footers.iter().all(Option::is_some);
    let sessions: Vec<&Value> = footers.iter().flatten().map(|f| &f["outcome"]["session"]).collect();
    let same_session = all_written && sessions.windows(2).all(|w| w[0] == w[1]);
    let all_solvent = all_written && footers.iter().flatten().all(|f| f["outcome"]["solvent"] == true);
    let forgiveness = footers[0].as_ref().and_then(|f| f["outcome"]["forgiveness"][0].as_f64()).unwrap_or(f64::NAN);
    let ok = status.code() == Some(0)
        && codes.iter().all(|&c| c == 0)
        && same_session
        && all_solvent
        && (forgiveness - 0.5).abs() <= E2E_TOL
        && (forgiveness - reference_forgiveness).abs() <= E2E_TOL;
    (
        ok,
        format!(
            "exit codes {codes:?}; same session {same_session}; all solvent {all_solvent}; \
             creditor 0 forgiveness {forgiveness:.7} vs settle {reference_forgiveness:.7} (0.5 ± {E2E_TOL:e})"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("incentive compatibility + negative control", c1_incentive_compatibility),
        ("individual rationality + zero rent at the top", c2_participation),
        ("analytic anchor", c3_analytic_anchor),
        ("envelope condition", c4_envelope),
        ("settlement probability monotone", c5_monotone_solvency),
        ("transfer identity", c6_transfer_identity),
        ("blessing of the debtor", c7_blessing),
        ("closed-form oracle equivalence", c8_closed_form),
        ("protocol differential test", c9_protocol_differential),
        ("end-to-end TCP session", c10_end_to_end),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        if !ok {
            failures += 1;
        }
        println!("criterion {:>2} {}: {name}: {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

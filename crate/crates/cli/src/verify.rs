use jubilee::analysis::{self, CheckStatus, QuadratureSpec, VerificationReport, VerificationSpec};

use crate::output::{write_json, Stamped};
use crate::{exit, Context, Failure, OrExit};

#[derive(clap::Args)]
pub struct Args {
    /// Replace the optimal transfer by `t + c·(own report)`; the IC check must then fail.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.5", value_name = "C")]
    pub negative_control: Option<f64>,
    /// Points per axis of the (type, report) grid.
    #[arg(long, default_value_t = 41)]
    pub ic_grid: usize,
}

pub fn run(ctx: &Context, args: Args) -> Result<u8, Failure> {
    let params = &ctx.config.market;
    let seed = ctx.analysis_seed();
    let quadrature = ctx
        .config
        .quadrature
        .unwrap_or_else(|| QuadratureSpec::default_for(params.creditors(), seed));
    let mut spec = VerificationSpec::new(quadrature, seed);
    spec.ic_grid = args.ic_grid;
    spec.negative_control = args.negative_control;
    let report: VerificationReport = analysis::run_verification(params, &spec).or_exit(exit::DOMAIN)?;

    for check in &report.checks {
        let status = match check.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        ctx.say(format!("{status} {:<32} value {:>14.6e}  threshold {:>12.3e}", check.name, check.value, check.threshold));
    }
    if let Some(path) = &ctx.out {
        write_json(path, &Stamped::new(&ctx.config_hash, Some(seed), &report)).or_exit(exit::CONFIG)?;
    }
    Ok(if report.passed() { exit::OK } else { exit::CHECK_FAILED })
}

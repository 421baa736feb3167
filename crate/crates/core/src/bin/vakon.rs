use std::process::ExitCode;

use vakonomic::experiments::config::SETTINGS_ENV;
use vakonomic::experiments::{
    run_bvp, run_check, run_convergence, run_energy_study, run_flow, run_oracle, ExperimentConfig, ExperimentError,
    RawConfig,
};

const USAGE: &str = "usage: vakon <flow|bvp|oracle|energy|convergence|check> [--config FILE] [--key value ...]";

fn run(cmd: &str, args: &[String]) -> Result<(), ExperimentError> {
    let env = std::env::var(SETTINGS_ENV).ok();
    let raw = RawConfig::from_sources(args, env.as_deref())?;
    let cfg = ExperimentConfig::from_raw(&raw)?;
    match cmd {
        "flow" => println!("{}", run_flow(&cfg)?),
        "bvp" => println!("{}", run_bvp(&cfg)?),
        "oracle" => println!("{}", run_oracle(&cfg)?),
        "energy" => println!("{}", run_energy_study(&cfg)?),
        "convergence" => {
            println!("{:>10} {:>6} {:>14} {:>8}", "h", "N", "max error", "order");
            for r in run_convergence(&cfg)? {
                let order = r.order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into());
                println!("{:>10} {:>6} {:>14.6e} {:>8}", r.h, r.n_last, r.max_error, order);
            }
        }
        "check" => {
            let report = run_check(&cfg)?;
            println!("{report}");
            if report.failures() > 0 {
                return Err(ExperimentError::ChecksFailed(report.failures()));
            }
        }
        other => return Err(ExperimentError::Config(format!("unknown subcommand {other:?}\n{USAGE}"))),
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some((cmd, rest)) = args.split_first() else {
        eprintln!("{USAGE}");
        return ExitCode::from(1);
    };
    match run(cmd, rest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                ExperimentError::Solver(v) => eprintln!("error ({}): {e}", v.kind()),
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

mod args;
mod commands;
mod config;
mod error;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use error::{classify, error_json, Kind, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            eprint!("{text}");
            let message = text.lines().next().unwrap_or("usage error");
            let message = message.strip_prefix("error: ").unwrap_or(message);
            eprintln!("{}", error_json(Kind::Usage, message, Vec::new()));
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };

    let level = match (cli.global.quiet, cli.global.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let kind = classify(&e);
            let causes = e.chain().skip(1).map(|c| c.to_string()).collect();
            eprintln!("{}", error_json(kind, &e.to_string(), causes));
            ExitCode::from(kind.exit_code() as u8)
        }
        Err(_) => {
            eprintln!(
                "{}",
                error_json(Kind::Internal, "internal error (panic)", Vec::new())
            );
            ExitCode::from(Kind::Internal.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = cli.global;
    let jobs = g.jobs as usize;
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()?;
    let mut cfg = config::load(g.config.as_deref(), &g.set)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    commands::run(cli.command, commands::Session { cfg, jobs })
}

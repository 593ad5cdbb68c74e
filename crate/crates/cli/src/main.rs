//! `hgcae` command-line entry point.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

fn main() -> ExitCode {
    let matches = args::cli().get_matches();
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let spec = args::command(name).expect("declared subcommand");
    let file = match sub.get_one::<String>("config") {
        Some(p) => match config::read_config_file(p.as_ref()) {
            Ok(kv) => kv,
            Err(e) => return usage_failure(&e),
        },
        None => Vec::new(),
    };
    let cfg = match config::resolve(spec, args::explicit_options(spec, sub), file) {
        Ok(c) => c,
        Err(e) => return usage_failure(&e),
    };
    if let Err(e) = commands::write_provenance(&cfg) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match commands::dispatch(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {name}: {e}");
            ExitCode::FAILURE
        }
    }
}

fn usage_failure(e: &config::UsageError) -> ExitCode {
    eprintln!("error: {e}");
    eprintln!("run `hgcae help` for usage");
    ExitCode::from(2)
}

mod args;
mod commands;
mod config;
mod util;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::{error::ErrorKind as ClapKind, ArgMatches, CommandFactory, FromArgMatches};

use args::{Cli, Command};
use util::{CliResult, EXIT_USAGE};

/// What a command needs to record its own run manifest.
pub struct RunContext<'a> {
    sub: &'a clap::Command,
    matches: &'a ArgMatches,
}

impl RunContext<'_> {
    pub fn write_manifest(&self, out: &Path, extra: &[(&str, String)]) -> CliResult<()> {
        let text = config::manifest(self.sub, self.matches, out, extra);
        util::write_file(&out.join("manifest.txt"), text)
    }
}

fn run(raw: Vec<OsString>) -> CliResult<()> {
    let cmd = Cli::command();
    let argv = config::expand_config(&cmd, raw)?;
    let matches = match cmd.clone().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(util::CliError::usage(e.render().to_string().trim_end())),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| util::CliError::usage(e.to_string()))?;
    let (name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let ctx = RunContext {
        sub: cmd.find_subcommand(name).expect("parsed subcommand exists"),
        matches: sub_matches,
    };
    match &cli.command {
        Command::Learn(a) => commands::learn::run(a, &ctx),
        Command::Sweep(a) => commands::sweep::run(a, &ctx),
        Command::Size(a) => commands::size::run(a, &ctx),
        Command::Analyze(a) => commands::analyze::run(a, &ctx),
        Command::Eval(a) => commands::eval::run(a, &ctx),
        Command::Pack(a) => commands::codec::pack(a, &ctx),
        Command::Unpack(a) => commands::codec::unpack(a, &ctx),
        Command::Reconstruct(a) => commands::codec::reconstruct(a, &ctx),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = std::io::stdout().flush();
            if e.code == EXIT_USAGE && e.message.starts_with("error:") {
                eprintln!("{}", e.message);
            } else {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}

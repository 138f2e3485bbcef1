//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code:
//!
//! - `0` success
//! - `2` rejected input (including unknown subcommands and bad flags)
//! - `3` a numerical target was missed, or a result was not finite
//!
//! Failures always print `{"error": {"kind", "message"}}` on stderr.

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use serde_json::json;

mod commands;
pub mod emit;

use commands::{Command, Context};
use emit::Format;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const THREADS_ENV: &str = "QTOOLKIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "qtoolkit", version, about = "Truncated Fock spaces, phase-space algebras and thermal states")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output path; `json` or `csv` select the format and print to stdout.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Tolerance override for checks that take one.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (overrides QTOOLKIT_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

fn report(err: &mut dyn Write, kind: &str, message: &str) {
    let doc = json!({"error": {"kind": kind, "message": message}});
    let _ = writeln!(err, "{doc}");
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("{THREADS_ENV}={v} is not a thread count")),
        Err(_) => Ok(None),
    }
}

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return EXIT_OK;
            }
            let help = matches!(e.kind(), ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand);
            let _ = write!(err, "{}", e.render());
            report(err, if help { "usage" } else { "invalid_arguments" }, e.kind().as_str().unwrap_or("usage"));
            return EXIT_INVALID;
        }
    };

    let (mut format, mut path) = (cli.format, None);
    match cli.out.as_deref() {
        Some("json") if format.is_none() => format = Some(Format::Json),
        Some("csv") if format.is_none() => format = Some(Format::Csv),
        Some(p) => path = Some(p.to_string()),
        None => {}
    }

    let threads = match thread_count(cli.threads) {
        Ok(t) => t,
        Err(msg) => {
            report(err, "invalid", &msg);
            return EXIT_INVALID;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            report(err, "invalid", &e.to_string());
            return EXIT_INVALID;
        }
    };

    let ctx = Context {
        seed: cli.seed,
        tol: cli.tol,
    };
    let result = pool.install(|| commands::dispatch(&cli.command, &ctx));
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            report(err, e.kind(), &e.to_string());
            return if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INVALID };
        }
    };
    if let Some(at) = emit::non_finite(&output) {
        report(err, "non_finite", &format!("non-finite value at {at}"));
        return EXIT_NUMERICAL;
    }
    let rendered = match emit::render(&output, format) {
        Ok(r) => r,
        Err(e) => {
            report(err, e.kind(), &e.to_string());
            return EXIT_INVALID;
        }
    };
    if let Some(side) = rendered.side {
        let _ = writeln!(err, "{side}");
    }
    let written = match path {
        Some(p) => std::fs::write(&p, &rendered.body).map_err(|e| format!("{p}: {e}")),
        None => out.write_all(&rendered.body).map_err(|e| e.to_string()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            report(err, "io", &msg);
            EXIT_INVALID
        }
    }
}

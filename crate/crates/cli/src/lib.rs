//! Library half of the `breathid` binary: argument types, run-manifest
//! schemas, and the subcommand implementations, exposed so integration
//! tests can drive commands in process.

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;
use thiserror::Error;

pub mod args;
pub mod commands;
pub mod manifest;

/// Anything a subcommand can fail with at runtime (exit code 2 territory;
/// flag problems never reach here, clap reports those as usage errors).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Audio(#[from] breathid_core::audio::AudioError),
    #[error(transparent)]
    Feature(#[from] breathid_core::features::FeatureError),
    #[error(transparent)]
    Dataset(#[from] breathid_core::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] breathid_core::lstm::LstmError),
    #[error(transparent)]
    Selection(#[from] breathid_core::selection::SelectionError),
    #[error(transparent)]
    Quantize(#[from] breathid_core::quantize::QuantizeError),
    #[error(transparent)]
    Store(#[from] breathid_core::store::StoreError),
    #[error(transparent)]
    Svm(#[from] breathid_core::svm::SvmError),
    #[error(transparent)]
    Bench(#[from] breathid_core::bench::BenchError),
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON artifact: {0}")]
    Json(#[from] serde_json::Error),
}

/// Parses and runs one invocation. Exit codes: 0 success, 1 usage error
/// (help and version also count as clean exits), 2 runtime failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            2
        }
    }
}

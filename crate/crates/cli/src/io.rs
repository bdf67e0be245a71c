use std::fs;
use std::path::Path;

use pdolab::json::to_canonical_string;
use pdolab::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INCOMPATIBLE: u8 = 2;
pub const EXIT_NOT_FOUND: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Incompatible { .. } => EXIT_INCOMPATIBLE,
        Error::NotChordal | Error::NoMarginalChannel(_) | Error::NoSteadyState(_) => EXIT_NOT_FOUND,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::new(exit_code(&e), e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

/// Parses JSON, prefixing parse errors (which carry line and column) with the path.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

/// Runs a library parser and prefixes failures with the path.
pub fn parse_with<T>(path: &Path, parse: impl FnOnce(&str) -> pdolab::Result<T>) -> CliResult<T> {
    let text = read_text(path)?;
    parse(&text).map_err(|e| CliError::new(exit_code(&e), format!("{}: {e}", path.display())))
}

pub fn write_text(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::new(EXIT_USAGE, format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    write_text(out, &to_canonical_string(value))
}

//! Config files, flag overrides and the output envelope.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Everything that ends a run without a result.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(sgd_cover::Error),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(sgd_cover::Error::CapExceeded { required, cap }) => write!(
                f,
                "enumeration needs {required} entries but the cap is {cap}; rerun with --cap {required} or SGD_COVER_CAP={required}"
            ),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl From<sgd_cover::Error> for CliError {
    fn from(e: sgd_cover::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// A flag value given as JSON text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Json<T>(pub T);

impl<T: DeserializeOwned> FromStr for Json<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_str(s).map(Json).map_err(|e| format!("invalid JSON: {e}"))
    }
}

/// A family given by name (`quadratic_centers`) or as a JSON descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FamilyArg(pub Value);

impl FromStr for FamilyArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim_start();
        if t.starts_with('{') {
            serde_json::from_str(s).map(FamilyArg).map_err(|e| format!("invalid JSON: {e}"))
        } else {
            Ok(FamilyArg(Value::String(s.to_string())))
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound = "P: DeserializeOwned")]
struct FileConfig<P> {
    #[serde(default)]
    command: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    #[allow(dead_code)]
    params: Option<P>,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    format: Option<Format>,
    #[serde(default)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

/// How and where to run; these do not change the result and stay out of
/// the config hash.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

/// Overlays the non-null leaves of `top` onto `base`.
fn overlay(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, t) if !t.is_null() => *b = t.clone(),
        _ => {}
    }
}

fn strip_nulls(v: &mut Value) {
    if let Value::Object(m) = v {
        m.retain(|_, x| !x.is_null());
        m.values_mut().for_each(strip_nulls);
    }
}

/// The resolved parameters of a run and their canonical echo.
pub struct Resolved<P> {
    pub params: P,
    pub seed: u64,
    /// `{"command", "seed", "params"}` with keys sorted and nulls dropped.
    pub echo: Value,
    pub hash: String,
    /// Run options found in the file.
    pub run: RunOptions,
}

/// Reads `path` (if any), checks it against the schema of `P` and applies
/// the flags on top.
pub fn resolve<P>(command: &str, path: Option<&Path>, flags: &P, seed_flag: Option<u64>) -> CliResult<Resolved<P>>
where
    P: Serialize + DeserializeOwned,
{
    let mut run = RunOptions::default();
    let (mut merged, file_seed) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            // typed parse first: its errors carry the file's line and column
            let file: FileConfig<P> =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            if let Some(c) = &file.command {
                if c != command {
                    return usage(format!("{}: config is for `{c}`, not `{command}`", p.display()));
                }
            }
            let raw: Value = serde_json::from_str(&text)?;
            let params = raw.get("params").cloned().unwrap_or_else(empty_object);
            run = RunOptions {
                output: file.output,
                format: file.format,
                threads: file.threads,
            };
            (params, file.seed)
        }
        None => (empty_object(), None),
    };
    overlay(&mut merged, &serde_json::to_value(flags)?);
    strip_nulls(&mut merged);
    let params: P = serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("params: {e}")))?;
    // re-serialize so equal configs echo (and hash) identically: `1` vs `1.0`
    let mut merged = serde_json::to_value(&params)?;
    strip_nulls(&mut merged);
    let seed = seed_flag.or(file_seed).unwrap_or(0);
    let mut echo = Map::new();
    echo.insert("command".into(), command.into());
    echo.insert("seed".into(), seed.into());
    echo.insert("params".into(), merged);
    let echo = Value::Object(echo);
    let hash = hex::encode(Sha256::digest(serde_json::to_string(&echo)?.as_bytes()));
    Ok(Resolved {
        params,
        seed,
        echo,
        hash,
        run,
    })
}

/// The document every command emits.
#[derive(Debug, Serialize)]
pub struct Envelope<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config_sha256: &'a str,
    pub config: &'a Value,
    pub status: Status,
    pub result: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Ok,
    Pass,
    Fail,
}

impl Status {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// `path: value` lines for every scalar leaf of `v`.
pub fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&p, x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::Null => {}
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

//! Session configuration: a plain `key = value` file overlaid by flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qseal::{required_shots, Bit, SessionParams, Strategy};

use crate::error::CliError;

/// Keys accepted in a config file, in canonical spelling.
pub const KEYS: [&str; 12] =
    ["p_a", "c_m", "n", "seed", "strategy", "loss", "mode", "role", "endpoint", "upstream", "bit", "out"];

/// Folds spelling variants (`C_m`, `N`, `p-a`) onto the canonical key.
fn canonical(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Raw string values keyed by canonical name. Later layers win.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    /// Reads `key = value` lines. Blank lines and lines starting with `#`
    /// are skipped; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config("config", format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            let key = canonical(key);
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::config(key, format!("line {}: unknown key", i + 1)));
            }
            let value = value.trim().trim_matches('"').to_string();
            if values.insert(key.clone(), value).is_some() {
                return Err(CliError::config(key, format!("line {}: repeated key", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Overrides `key` when a flag supplied it.
    pub fn set(&mut self, key: &str, value: Option<&str>) {
        if let Some(v) = value {
            self.values.insert(canonical(key), v.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::config(key, format!("cannot parse {v:?}: {e}"))))
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Local,
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetRole {
    Alice,
    Bob,
    EveProxy,
}

/// A fully validated `run` configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub p_a: Option<f64>,
    pub c_m: Option<f64>,
    pub n: Option<usize>,
    pub seed: u64,
    pub strategy: Strategy,
    pub loss: f64,
    pub mode: Mode,
    pub role: Option<NetRole>,
    pub endpoint: Option<String>,
    pub upstream: Option<String>,
    pub bit: Option<Bit>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let p_a: Option<f64> = raw.parsed("p_a")?;
        if let Some(p) = p_a {
            if !(0.0..=1.0).contains(&p) {
                return Err(CliError::config("p_a", format!("must lie in [0, 1], got {p}")));
            }
        }
        let c_m: Option<f64> = raw.parsed("c_m")?;
        if let Some(c) = c_m {
            if !(c > 0.0 && c < 1.0) {
                return Err(CliError::config("c_m", format!("must lie in (0, 1), got {c}")));
            }
        }
        let n: Option<usize> = raw.parsed("n")?;
        if n == Some(0) {
            return Err(CliError::config("n", "must be positive"));
        }
        let loss: f64 = raw.parsed("loss")?.unwrap_or(0.0);
        if !(0.0..1.0).contains(&loss) {
            return Err(CliError::config("loss", format!("must lie in [0, 1), got {loss}")));
        }
        let strategy = match raw.get("strategy") {
            Some(s) => {
                let strategy: Strategy = s.parse().map_err(|e| CliError::config("strategy", e))?;
                strategy.validate().map_err(|e| CliError::config("strategy", e))?;
                strategy
            }
            None => Strategy::Passive,
        };
        let mode = match raw.get("mode") {
            None | Some("local") => Mode::Local,
            Some("network") => Mode::Network,
            Some(other) => return Err(CliError::config("mode", format!("expected local or network, got {other:?}"))),
        };
        let role = match raw.get("role") {
            None => None,
            Some("alice") => Some(NetRole::Alice),
            Some("bob") => Some(NetRole::Bob),
            Some("eve-proxy" | "eve_proxy") => Some(NetRole::EveProxy),
            Some(other) => return Err(CliError::config("role", format!("expected alice, bob or eve-proxy, got {other:?}"))),
        };
        Ok(Self {
            p_a,
            c_m,
            n,
            seed: raw.parsed("seed")?.unwrap_or(0),
            strategy,
            loss,
            mode,
            role,
            endpoint: raw.get("endpoint").map(str::to_string),
            upstream: raw.get("upstream").map(str::to_string),
            bit: raw.parsed("bit")?,
            out: raw.get("out").map(PathBuf::from),
        })
    }

    /// Session parameters for the sending side. N is taken from `n` when
    /// given, which must then meet the confidence target if `c_m` is also set.
    pub fn session_params(&self) -> Result<SessionParams, CliError> {
        let p_a = self.p_a.ok_or_else(|| CliError::config("p_a", "missing; pass --p-a or set p_a in the config file"))?;
        let mut params = match (self.n, self.c_m) {
            (Some(n), c_m) => {
                let mut params = SessionParams::with_shots(p_a, n, self.seed).map_err(|e| CliError::config("n", e))?;
                if let Some(c) = c_m {
                    let needed = required_shots(c, p_a).map_err(|e| CliError::config("p_a", e))?;
                    if n < needed {
                        return Err(CliError::config("n", format!("{n} shots fall short of c_m={c}, which needs {needed}")));
                    }
                    params.c_m = Some(c);
                }
                params
            }
            (None, Some(c)) => SessionParams::from_confidence(p_a, c, self.seed).map_err(|e| CliError::config("p_a", e))?,
            (None, None) => return Err(CliError::config("c_m", "missing; set c_m or n")),
        };
        params = params.loss(self.loss).map_err(|e| CliError::config("loss", e))?;
        if let Some(b) = self.bit {
            params = params.message(b);
        }
        Ok(params)
    }

    pub fn require_endpoint(&self) -> Result<&str, CliError> {
        self.endpoint.as_deref().ok_or_else(|| CliError::config("endpoint", "missing; network mode needs --endpoint"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::from_raw(&RawConfig::parse(text)?)
    }

    fn offending_key(e: CliError) -> String {
        match e {
            CliError::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn file_keys_and_spellings() {
        let c = config("# session\nP-A = 0.1\nC_m=0.95\n\nseed = 7\nstrategy = \"intercept_resend basis=random\"\n").unwrap();
        let params = c.session_params().unwrap();
        assert_eq!(params.shots, 59);
        assert_eq!(params.seed, 7);
        assert_eq!(c.strategy.to_string(), "intercept_resend basis=random");
    }

    #[test]
    fn flags_override_file() {
        let mut raw = RawConfig::parse("p_a=0.1\nn=20\nseed=1").unwrap();
        raw.set("seed", Some("9"));
        raw.set("n", None);
        let c = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.n, Some(20));
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(offending_key(config("c_m=0.95").unwrap().session_params().unwrap_err()), "p_a");
        assert_eq!(offending_key(config("p_a=0.3").unwrap().session_params().unwrap_err()), "c_m");
        assert_eq!(offending_key(config("p_a=0.1\nc_m=0.95\nn=10").unwrap().session_params().unwrap_err()), "n");
        assert_eq!(offending_key(config("p_a=2").unwrap_err()), "p_a");
        assert_eq!(offending_key(config("loss=1").unwrap_err()), "loss");
        assert_eq!(offending_key(config("strategy=teleport").unwrap_err()), "strategy");
        assert_eq!(offending_key(config("colour=blue").unwrap_err()), "colour");
        assert_eq!(offending_key(config("seed=1\nseed=2").unwrap_err()), "seed");
        assert_eq!(offending_key(config("bit=2").unwrap_err()), "bit");
    }
}

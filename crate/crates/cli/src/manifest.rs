//! Experiment manifests and per-subcommand parameter schemas.

use std::collections::BTreeMap;

use lerw3d::Dyadic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{validation, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

/// Everything needed to reproduce a run. `params` holds the full, validated
/// parameter map with defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub subcommand: String,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub workers: usize,
    pub version: String,
    pub format: Format,
    pub config: Option<String>,
    pub output: Option<String>,
}

/// One entry of a subcommand schema.
pub struct ParamSpec {
    pub key: &'static str,
    /// `None` marks a required parameter.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn req(key: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { key, default: None, help }
}

const fn opt(key: &'static str, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { key, default: Some(default), help }
}

/// `auto` for `beta` means a quick growth-exponent fit seeded from the run.
pub const AUTO: &str = "auto";

pub const SUBCOMMANDS: [&str; 13] = [
    "sample",
    "ust",
    "beta",
    "escape",
    "quasiloops",
    "hittability",
    "events",
    "tube",
    "vevents",
    "modulus",
    "annulus-scan",
    "oracle",
    "selftest",
];

pub fn schema(sub: &str) -> Option<Vec<ParamSpec>> {
    let s = match sub {
        "sample" => vec![
            req("n", "lattice scale"),
            opt("samples", "1", "number of paths"),
            opt("kind", "lerw", "lerw or srw"),
        ],
        "ust" => vec![req("n", "lattice scale (at most 6)"), opt("samples", "1", "number of trees")],
        "beta" => vec![
            opt("n", "4..9", "scales, e.g. 4..9 or 4,6,8"),
            opt("samples", "10000", "samples per scale"),
            opt("variant", "unit", "unit, or outer for the length inside B(0, outer)"),
            opt("outer", "4", "outer radius for the outer variant"),
        ],
        "escape" => vec![
            opt("r", "8,16,32,64,128", "radii N"),
            opt("samples", "100000", "pairs"),
            opt("beta", AUTO, "growth exponent to compare the slope with"),
        ],
        "quasiloops" => vec![
            req("n", "lattice scale"),
            opt("samples", "1000", "paths"),
            opt("theta", "1/2,1/4,1/8", "dyadic θ values"),
            opt("l", "2", "exponent L in QL(θ^L, θ)"),
        ],
        "hittability" => vec![
            req("n", "lattice scale"),
            req("r", "ball radius around x, dyadic"),
            opt("samples", "1000", "walks"),
            opt("x", "mid", "lattice site i,j,k, or mid for a site next to the midpoint of γ"),
        ],
        "events" => vec![
            req("n", "lattice scale"),
            req("delta", "δ"),
            req("eps", "ε"),
            req("r", "net spacing, dyadic"),
            opt("beta", AUTO, "growth exponent"),
            opt("samples", "200", "walks per candidate in the F_(2) check"),
        ],
        "tube" => vec![
            req("m", "tube scale"),
            req("m0", "number of cube pairs"),
            req("n", "lattice scale"),
            opt("cstar", "10", "C_*"),
            opt("beta", AUTO, "growth exponent"),
            opt("samples", "1000", "walks"),
        ],
        "vevents" => vec![
            req("m", "tube scale"),
            req("m0", "number of cube pairs"),
            req("n", "lattice scale"),
            opt("box_half", "2", "box half-side M in units of 2^-m"),
            opt("chat", "10", "Ĉ"),
            opt("beta", AUTO, "growth exponent"),
            opt("samples", "100", "walks"),
        ],
        "modulus" => vec![
            req("n", "lattice scale"),
            opt("beta", AUTO, "growth exponent"),
            opt("h", "auto", "Hölder exponent; auto means 1/β"),
            opt("samples", "100", "paths"),
        ],
        "annulus-scan" => vec![
            req("m", "scale of the move distance"),
            req("m0", "m0"),
            req("m1", "box spacing exponent"),
            req("n", "lattice scale"),
            opt("cstar", "10", "threshold ratio c_*"),
            opt("beta", AUTO, "growth exponent"),
            opt("samples", "100", "paths"),
        ],
        "oracle" => vec![
            opt("what", "green", "green, lerw-law, trees, es1 or gambler"),
            opt("r", "3", "ball radius (green, lerw-law, trees) or gambler height"),
            opt("x", "1", "gambler start height"),
        ],
        "selftest" => vec![opt("only", "all", "comma-separated criterion ids")],
        _ => return None,
    };
    Some(s)
}

/// Flag spelling of a parameter key.
pub fn flag(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

const GLOBAL: [&str; 2] = ["seed", "workers"];

impl ExperimentManifest {
    /// Checks `raw` against the schema of `sub` and fills in defaults.
    pub fn build(
        sub: &str,
        mut raw: BTreeMap<String, String>,
        format: Format,
        config: Option<String>,
        output: Option<String>,
    ) -> Result<Self, CliError> {
        let Some(spec) = schema(sub) else {
            return validation(format!("unknown subcommand `{sub}`"));
        };
        let seed = match raw.remove("seed") {
            Some(v) => v.parse().map_err(|_| CliError::Validation(format!("--seed: `{v}` is not a u64")))?,
            None => 0,
        };
        let workers: usize = match raw.remove("workers") {
            Some(v) => v.parse().map_err(|_| CliError::Validation(format!("--workers: `{v}` is not a count")))?,
            None => 1,
        };
        if workers == 0 {
            return validation("--workers must be at least 1");
        }
        let mut params = BTreeMap::new();
        for p in &spec {
            match (raw.remove(p.key), p.default) {
                (Some(v), _) => params.insert(p.key.to_string(), v),
                (None, Some(d)) => params.insert(p.key.to_string(), d.to_string()),
                (None, None) => return validation(format!("{sub}: missing required flag {}", flag(p.key))),
            };
        }
        if let Some(k) = raw.keys().find(|k| !GLOBAL.contains(&k.as_str())) {
            return validation(format!("{sub}: unknown parameter {}", flag(k)));
        }
        Ok(ExperimentManifest {
            subcommand: sub.to_string(),
            params,
            seed,
            workers,
            version: env!("CARGO_PKG_VERSION").to_string(),
            format,
            config,
            output,
        })
    }

    pub fn params(&self) -> Params<'_> {
        Params { map: &self.params }
    }

    /// Hex SHA-256 prefix of the subcommand, seed and parameters. Worker
    /// count and file paths do not enter.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.subcommand.as_bytes());
        h.update(self.seed.to_le_bytes());
        for (k, v) in &self.params {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Typed access; every error names the offending flag.
pub struct Params<'a> {
    map: &'a BTreeMap<String, String>,
}

fn bad<T>(key: &str, v: &str, what: &str) -> Result<T, CliError> {
    validation(format!("{}: `{v}` is not {what}", flag(key)))
}

impl Params<'_> {
    pub fn str(&self, key: &str) -> &str {
        self.map.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T, CliError> {
        let v = self.str(key);
        v.parse().or_else(|_| bad(key, v, what))
    }

    pub fn u8(&self, key: &str) -> Result<u8, CliError> {
        self.parse(key, "a small non-negative integer")
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parse(key, "a non-negative integer")
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let v = self.str(key);
        match parse_ratio(v) {
            Some(x) if x.is_finite() => Ok(x),
            _ => bad(key, v, "a number"),
        }
    }

    /// `auto` or a number.
    pub fn auto_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        if self.str(key) == AUTO {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    pub fn dyadic(&self, key: &str) -> Result<Dyadic, CliError> {
        let v = self.str(key);
        parse_dyadic(v).map_or_else(|| bad(key, v, "a dyadic rational such as 3, 0.25 or 3/8"), Ok)
    }

    pub fn dyadic_list(&self, key: &str) -> Result<Vec<Dyadic>, CliError> {
        let v = self.str(key);
        v.split(',').map(|x| parse_dyadic(x.trim()).map_or_else(|| bad(key, v, "a list of dyadic rationals"), Ok)).collect()
    }

    /// `a..b` (inclusive) or a comma list.
    pub fn u8_list(&self, key: &str) -> Result<Vec<u8>, CliError> {
        let v = self.str(key);
        let out: Option<Vec<u8>> = if let Some((a, b)) = v.split_once("..") {
            match (a.trim().parse::<u8>(), b.trim().trim_start_matches('=').parse::<u8>()) {
                (Ok(a), Ok(b)) if a <= b => Some((a..=b).collect()),
                _ => None,
            }
        } else {
            v.split(',').map(|x| x.trim().parse().ok()).collect()
        };
        out.map_or_else(|| bad(key, v, "a scale range such as 4..9 or a list 4,6,8"), Ok)
    }

    pub fn i64_list(&self, key: &str) -> Result<Vec<i64>, CliError> {
        let v = self.str(key);
        v.split(',').map(|x| x.trim().parse().or_else(|_| bad(key, v, "a list of integers"))).collect()
    }
}

fn parse_ratio(v: &str) -> Option<f64> {
    match v.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => v.trim().parse().ok(),
    }
}

fn parse_dyadic(v: &str) -> Option<Dyadic> {
    v.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(kv: &[(&str, &str)]) -> BTreeMap<String, String> {
        kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn missing_required_flag_is_named() {
        let e = ExperimentManifest::build("tube", raw(&[("m0", "2"), ("n", "12")]), Format::Jsonl, None, None).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().ends_with("--m"), "{e}");
    }

    #[test]
    fn defaults_and_unknown_keys() {
        let m = ExperimentManifest::build("beta", raw(&[("seed", "42")]), Format::Jsonl, None, None).unwrap();
        assert_eq!(m.seed, 42);
        assert_eq!(m.params["n"], "4..9");
        assert_eq!(m.params().u8_list("n").unwrap(), vec![4, 5, 6, 7, 8, 9]);
        assert!(ExperimentManifest::build("beta", raw(&[("bogus", "1")]), Format::Jsonl, None, None).is_err());
        assert!(ExperimentManifest::build("nope", raw(&[]), Format::Jsonl, None, None).is_err());
    }

    #[test]
    fn digest_ignores_workers() {
        let a = ExperimentManifest::build("beta", raw(&[("workers", "1")]), Format::Jsonl, None, None).unwrap();
        let b = ExperimentManifest::build("beta", raw(&[("workers", "8")]), Format::Jsonl, None, None).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = ExperimentManifest::build("beta", raw(&[("seed", "1")]), Format::Jsonl, None, None).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn dyadic_parsing() {
        assert_eq!(parse_dyadic("3/8"), Some(Dyadic::new(3, 3)));
        assert_eq!(parse_dyadic("0.25"), Some(Dyadic::new(1, 2)));
        assert_eq!(parse_dyadic("5"), Some(Dyadic::int(5)));
        assert_eq!(parse_dyadic("1/3"), None);
        assert_eq!(parse_dyadic("0.1"), None);
        assert_eq!(parse_dyadic("2^-3"), Some(Dyadic::new(1, 3)));
    }
}

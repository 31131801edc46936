//! Parameter files.
//!
//! A parameter file is a flat TOML table. Three key sets are recognized:
//!
//! | keys                    | model                                  |
//! |-------------------------|----------------------------------------|
//! | `N, R0, alpha, mu`      | Verhulst (or SIR with `model = "sir"`) |
//! | `a1, a2, b1, b2`        | Verhulst, four-rate form               |
//! | `beta, gamma, mu, N`    | SIR, rate form                         |
//!
//! `mu` is optional in the first set and defaults to 1. An optional
//! `model = "verhulst" | "sir"` key disambiguates the first set.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{legacy_to_standard, sir_params_from_rates, LegacyParams, SirParams, VerhulstParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelConfig {
    Verhulst(VerhulstParams),
    Sir(SirParams),
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ModelConfig> {
    let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;

    const KNOWN: [&str; 11] =
        ["model", "N", "R0", "alpha", "mu", "a1", "a2", "b1", "b2", "beta", "gamma"];
    if let Some(k) = table.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown key `{k}`")));
    }

    let num = |key: &str| -> Result<Option<f64>> {
        match table.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(Error::Config(format!("`{key}` must be a number, got {v}"))),
        }
    };
    let require = |key: &str| -> Result<f64> {
        num(key)?.ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    };
    let population = || -> Result<usize> {
        match table.get("N") {
            Some(toml::Value::Integer(i)) if *i >= 1 => Ok(*i as usize),
            Some(v) => Err(Error::Config(format!("`N` must be a positive integer, got {v}"))),
            None => Err(Error::Config("missing key `N`".into())),
        }
    };
    let model = match table.get("model") {
        None => None,
        Some(toml::Value::String(s)) if s == "verhulst" || s == "sir" => Some(s.as_str()),
        Some(v) => Err(Error::Config(format!("`model` must be \"verhulst\" or \"sir\", got {v}")))?,
    };

    let has = |k: &str| table.contains_key(k);
    if has("a1") || has("a2") || has("b1") || has("b2") {
        if model == Some("sir") {
            return Err(Error::Config("a1/a2/b1/b2 describe the Verhulst model".into()));
        }
        let l = LegacyParams {
            a1: require("a1")?,
            a2: require("a2")?,
            b1: require("b1")?,
            b2: require("b2")?,
        };
        return Ok(ModelConfig::Verhulst(legacy_to_standard(&l)?));
    }
    if has("beta") || has("gamma") {
        if model == Some("verhulst") {
            return Err(Error::Config("beta/gamma describe the SIR model".into()));
        }
        let p = sir_params_from_rates(require("beta")?, require("gamma")?, require("mu")?, population()?)?;
        return Ok(ModelConfig::Sir(p));
    }

    let n = population()?;
    let r0 = require("R0")?;
    let alpha = require("alpha")?;
    let mu = num("mu")?.unwrap_or(1.0);
    match model {
        Some("sir") => Ok(ModelConfig::Sir(SirParams::new(n, r0, alpha, mu)?)),
        _ => Ok(ModelConfig::Verhulst(VerhulstParams::new(n, r0, alpha, mu)?)),
    }
}

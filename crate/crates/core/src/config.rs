//! Run configuration: a TOML document with `[plan]`, `[agent]`, `[penalty]`
//! and `[env]` sections, layered as preset, then file, then `key=value`
//! overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::agent::AgentConfig;
use crate::error::{Error, Result};
use crate::gridworlds::{EnvKind, EnvParams};
use crate::harness::{ExperimentPlan, Variant};
use crate::penalty::{BaselineKind, PenaltyConfig, DISCOUNTED_GAMMA_R};

const SECTIONS: [&str; 4] = ["plan", "agent", "penalty", "env"];

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::config("preset", format!("`{s}` is not one of: desk, full"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub envs: Vec<EnvKind>,
    pub baselines: Vec<BaselineKind>,
    pub variants: Vec<Variant>,
    pub betas: Vec<f64>,
    pub seeds: usize,
    pub first_seed: u64,
    pub include_none: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub plan: PlanSection,
    pub agent: AgentConfig,
    /// Single-run settings for `train`; sweeps take `gamma` and the
    /// auxiliary reward settings from here.
    pub penalty: PenaltyConfig,
    pub env: EnvParams,
}

impl Config {
    pub fn preset(preset: Preset) -> Self {
        let plan = match preset {
            Preset::Desk => ExperimentPlan::desk(),
            Preset::Full => ExperimentPlan::full(),
        };
        Config {
            plan: PlanSection {
                envs: plan.envs,
                baselines: plan.baselines,
                variants: plan.variants,
                betas: plan.betas,
                seeds: plan.seeds,
                first_seed: plan.first_seed,
                include_none: plan.include_none,
            },
            agent: plan.agent,
            penalty: plan.penalty,
            env: plan.env,
        }
    }

    /// Preset values overlaid with the sections present in `text`.
    pub fn from_toml(preset: Preset, text: &str) -> Result<Self> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(error_key(&e), e.message()))?;
        let mut tree = Config::preset(preset).to_tree();
        for (section, body) in file {
            if !SECTIONS.contains(&section.as_str()) {
                return Err(Error::config(&section, format!("unknown section (expected one of: {})", SECTIONS.join(", "))));
            }
            let Value::Table(body) = body else {
                return Err(Error::config(&section, "expected a table"));
            };
            for (key, value) in body {
                set(&mut tree, &section, &key, value)?;
            }
        }
        Config::from_tree(tree, None)
    }

    pub fn load(preset: Preset, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml(preset, &text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    /// Applies one `key=value` override. Keys are `section.key`, or a bare
    /// key when it names exactly one field. `discounted` is shorthand for
    /// `penalty.gamma_r`. List values are comma separated.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "discounted" || key == "penalty.discounted" {
            let on: bool = value
                .parse()
                .map_err(|_| Error::config("discounted", format!("expected true or false, got `{value}`")))?;
            self.penalty.gamma_r = if on { DISCOUNTED_GAMMA_R } else { 1.0 };
            return Ok(());
        }
        let mut tree = self.to_tree();
        let (section, field) = resolve(&tree, key)?;
        let current = &tree[section.as_str()][field.as_str()];
        let parsed = match current {
            Value::Array(_) => Value::Array(value.split(',').map(str::trim).filter(|v| !v.is_empty()).map(literal).collect()),
            _ => literal(value),
        };
        set(&mut tree, &section, &field, parsed)?;
        *self = Config::from_tree(tree, Some(key))?;
        Ok(())
    }

    /// Parses and applies `key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "overrides take the form key=value"))?;
        self.set(key.trim(), value.trim())
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            envs: self.plan.envs.clone(),
            baselines: self.plan.baselines.clone(),
            variants: self.plan.variants.clone(),
            betas: self.plan.betas.clone(),
            seeds: self.plan.seeds,
            first_seed: self.plan.first_seed,
            include_none: self.plan.include_none,
            env: self.env,
            agent: self.agent,
            penalty: self.penalty,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan().validate()?;
        self.penalty.validate()
    }

    /// Every settable key as `section.key`.
    pub fn keys() -> Vec<String> {
        let tree = Config::preset(Preset::Desk).to_tree();
        let mut out = Vec::new();
        for section in SECTIONS {
            if let Some(Value::Table(t)) = tree.get(section) {
                out.extend(t.keys().map(|k| format!("{section}.{k}")));
            }
        }
        out.push("penalty.discounted".into());
        out
    }

    fn to_tree(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes to a table")
    }

    fn from_tree(tree: toml::Table, key: Option<&str>) -> Result<Self> {
        Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(key.map(str::to_string).unwrap_or_else(|| error_key(&e)), e.message()))
    }
}

impl Default for Config {
    fn default() -> Self {
        Config::preset(Preset::Desk)
    }
}

fn resolve(tree: &toml::Table, key: &str) -> Result<(String, String)> {
    if let Some((section, field)) = key.split_once('.') {
        let known = tree.get(section).and_then(Value::as_table).is_some_and(|t| t.contains_key(field));
        return if known {
            Ok((section.into(), field.into()))
        } else {
            Err(unknown_key(key))
        };
    }
    let hits: Vec<&str> = SECTIONS
        .into_iter()
        .filter(|s| tree.get(*s).and_then(Value::as_table).is_some_and(|t| t.contains_key(key)))
        .collect();
    match hits.as_slice() {
        [one] => Ok(((*one).into(), key.into())),
        [] => Err(unknown_key(key)),
        many => {
            let qualified: Vec<String> = many.iter().map(|s| format!("{s}.{key}")).collect();
            Err(Error::config(key, format!("ambiguous, use one of: {}", qualified.join(", "))))
        }
    }
}

fn unknown_key(key: &str) -> Error {
    Error::config(key, format!("unknown key (known keys: {})", Config::keys().join(", ")))
}

fn set(tree: &mut toml::Table, section: &str, key: &str, value: Value) -> Result<()> {
    let table = tree
        .get_mut(section)
        .and_then(Value::as_table_mut)
        .ok_or_else(|| Error::config(section, "unknown section"))?;
    if !table.contains_key(key) {
        return Err(unknown_key(&format!("{section}.{key}")));
    }
    table.insert(key.into(), value);
    Ok(())
}

/// A TOML literal when `raw` parses as one, otherwise a bare string.
fn literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.into()))
}

fn error_key(e: &toml::de::Error) -> String {
    let msg = e.message();
    msg.split('`').nth(1).map(str::to_string).unwrap_or_else(|| "config".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::Measure;

    #[test]
    fn toml_round_trip() {
        let cfg = Config::preset(Preset::Full);
        let back = Config::from_toml(Preset::Desk, &cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn file_overlays_preset() {
        let cfg = Config::from_toml(Preset::Full, "[plan]\nseeds = 3\nenvs = [\"box\"]\n[penalty]\nmeasure = \"au\"\n").unwrap();
        assert_eq!(cfg.plan.seeds, 3);
        assert_eq!(cfg.plan.envs, vec![EnvKind::Box]);
        assert_eq!(cfg.agent, AgentConfig::full());
        assert_eq!(cfg.penalty.measure, Measure::Au);
    }

    #[test]
    fn overrides() {
        let mut cfg = Config::default();
        cfg.apply_override("beta=3").unwrap();
        cfg.apply_override("baseline=stepwise").unwrap();
        cfg.apply_override("plan.envs=vase,box").unwrap();
        cfg.apply_override("variants=rr-u-abs").unwrap();
        cfg.apply_override("discounted=false").unwrap();
        cfg.apply_override("agent.gamma=0.9").unwrap();
        assert_eq!(cfg.penalty.beta, 3.0);
        assert_eq!(cfg.penalty.baseline, BaselineKind::Stepwise);
        assert_eq!(cfg.plan.envs, vec![EnvKind::Vase, EnvKind::Box]);
        assert_eq!(cfg.plan.variants, vec![Variant::parse("rr-u-abs").unwrap()]);
        assert_eq!(cfg.penalty.gamma_r, 1.0);
        assert_eq!(cfg.agent.gamma, 0.9);
        assert_eq!(cfg.penalty.gamma, 0.99);
    }

    #[test]
    fn errors_name_the_key() {
        let mut cfg = Config::default();
        for (assignment, key) in [
            ("gamma=0.5", "gamma"),
            ("nonsense=1", "nonsense"),
            ("measure=xyz", "measure"),
            ("seeds=many", "seeds"),
            ("beta", "beta"),
        ] {
            match cfg.apply_override(assignment) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{assignment}"),
                other => panic!("{assignment}: {other:?}"),
            }
        }
        match Config::from_toml(Preset::Desk, "[agent]\nalpah = 0.2\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "agent.alpah"),
            other => panic!("{other:?}"),
        }
        assert!(Config::from_toml(Preset::Desk, "[stuff]\n").is_err());
        assert!(Config::from_toml(Preset::Desk, "[plan]\nvariants = [\"rr-x\"]\n").is_err());
    }

    #[test]
    fn keys_cover_sections() {
        let keys = Config::keys();
        for k in ["plan.betas", "agent.alpha", "penalty.gamma_r", "env.horizon", "penalty.discounted"] {
            assert!(keys.iter().any(|x| x == k), "{k}");
        }
    }
}

//! Scenario presets and the TOML configuration they are built from.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codebook::CodebookParams;
use crate::error::{Error, Result};
use crate::explorer::ExploreConfig;
use crate::gridworld::GridConfig;
use crate::similarity::SimilarityParams;
use crate::spectral::SpectralParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Default,
    NoMotor,
    SweepNObj,
    SweepPObj,
    SweepPEnv,
    SweepPAbs,
    Linked,
    Identical,
    Rotation,
    SmallObjects,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::Default,
        Scenario::NoMotor,
        Scenario::SweepNObj,
        Scenario::SweepPObj,
        Scenario::SweepPEnv,
        Scenario::SweepPAbs,
        Scenario::Linked,
        Scenario::Identical,
        Scenario::Rotation,
        Scenario::SmallObjects,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Default => "default",
            Scenario::NoMotor => "no_motor",
            Scenario::SweepNObj => "sweep_n_obj",
            Scenario::SweepPObj => "sweep_p_obj",
            Scenario::SweepPEnv => "sweep_p_env",
            Scenario::SweepPAbs => "sweep_p_abs",
            Scenario::Linked => "linked",
            Scenario::Identical => "identical",
            Scenario::Rotation => "rotation",
            Scenario::SmallObjects => "small_objects",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scenario> {
        Scenario::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = Scenario::ALL.iter().map(|x| x.as_str()).collect();
            Error::Config(format!("unknown scenario {s:?} (expected one of {})", names.join(", ")))
        })
    }
}

/// A parameter and the values a sweep visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<String>,
}

/// Grid values used by the probability sweep presets.
pub const PROBABILITY_GRID: [&str; 6] = ["0", "0.1", "0.2", "0.4", "0.8", "1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Scenario,
    pub seeds: Vec<u64>,
    pub grid: GridConfig,
    pub explore: ExploreConfig,
    pub codebook: CodebookParams,
    pub similarity: SimilarityParams,
    pub spectral: SpectralParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: Scenario::Default,
            seeds: vec![1, 2, 3, 4, 5],
            grid: GridConfig::default(),
            explore: ExploreConfig::default(),
            codebook: CodebookParams::default(),
            similarity: SimilarityParams::default(),
            spectral: SpectralParams::default(),
            sweep: None,
        }
    }
}

const SECTIONS: [&str; 5] = ["grid", "explore", "codebook", "similarity", "spectral"];

impl ScenarioConfig {
    /// Default parameters with the named scenario's overrides applied.
    pub fn preset(name: Scenario) -> ScenarioConfig {
        let mut c = ScenarioConfig { name, ..ScenarioConfig::default() };
        let sweep =
            |param: &str, values: &[&str]| Some(SweepSpec { param: param.into(), values: values.iter().map(|v| v.to_string()).collect() });
        match name {
            Scenario::Default | Scenario::NoMotor => {}
            Scenario::SweepNObj => c.sweep = sweep("grid.n_obj", &["1", "2", "3", "4", "5", "6"]),
            Scenario::SweepPObj => c.sweep = sweep("grid.p_obj", &PROBABILITY_GRID),
            Scenario::SweepPEnv => c.sweep = sweep("grid.p_env", &PROBABILITY_GRID),
            Scenario::SweepPAbs => c.sweep = sweep("grid.p_abs", &PROBABILITY_GRID),
            Scenario::Linked => c.grid.linked = true,
            Scenario::Identical => c.grid.identical = true,
            Scenario::Rotation => c.grid.rotation_enabled = true,
            Scenario::SmallObjects => c.grid.small_objects = true,
        }
        c
    }

    /// Parse TOML on top of a preset. The preset is `name` if given, else the
    /// file's own `name`, else `default`; file values then override it.
    pub fn from_toml_str(text: &str, name: Option<Scenario>) -> Result<ScenarioConfig> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let file_name = match file.get("name") {
            Some(toml::Value::String(s)) => Some(s.parse::<Scenario>()?),
            Some(other) => return Err(Error::Config(format!("name must be a string, got {other}"))),
            None => None,
        };
        let name = name.or(file_name).unwrap_or_default();
        let mut merged = toml::Table::try_from(ScenarioConfig::preset(name)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, file);
        merged.insert("name".into(), toml::Value::String(name.as_str().into()));
        let cfg: ScenarioConfig = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path, name: Option<Scenario>) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ScenarioConfig::from_toml_str(&text, name).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.explore.validate()?;
        self.codebook.validate()?;
        self.similarity.validate()?;
        self.spectral.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config(format!("sweep over {} has no values", s.param)));
            }
            let mut probe = self.clone();
            for v in &s.values {
                probe.set_param(&s.param, v)?;
            }
        }
        Ok(())
    }

    /// Set one parameter by name, `section.field` or a bare field name that
    /// is unique across sections. The value is read as JSON when it parses,
    /// else as a bare string.
    pub fn set_param(&mut self, param: &str, value: &str) -> Result<()> {
        let (section, field) = resolve_param(param)?;
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let parsed = serde_json::from_str::<serde_json::Value>(value).unwrap_or_else(|_| serde_json::Value::String(value.into()));
        tree[section][field.as_str()] = parsed;
        let updated: ScenarioConfig =
            serde_json::from_value(tree).map_err(|e| Error::Config(format!("cannot set {section}.{field} = {value}: {e}")))?;
        updated.grid.validate()?;
        updated.explore.validate()?;
        updated.codebook.validate()?;
        updated.similarity.validate()?;
        updated.spectral.validate()?;
        *self = updated;
        Ok(())
    }

    /// Current value of a parameter, formatted as JSON.
    pub fn get_param(&self, param: &str) -> Result<String> {
        let (section, field) = resolve_param(param)?;
        let tree = serde_json::to_value(self).expect("config serializes");
        Ok(tree[section][field.as_str()].to_string())
    }
}

/// Section and field names of every settable parameter.
fn fields() -> Vec<(&'static str, String)> {
    let tree = serde_json::to_value(ScenarioConfig::default()).expect("config serializes");
    SECTIONS.iter().flat_map(|&s| tree[s].as_object().expect("section is a table").keys().map(move |k| (s, k.clone()))).collect()
}

fn resolve_param(param: &str) -> Result<(&'static str, String)> {
    let all = fields();
    let hits: Vec<&(&str, String)> = match param.split_once('.') {
        Some((s, f)) => all.iter().filter(|(sec, fld)| *sec == s && fld == f).collect(),
        None => all.iter().filter(|(_, fld)| fld == param).collect(),
    };
    match hits.as_slice() {
        [one] => Ok((one.0, one.1.clone())),
        [] => Err(Error::Config(format!("unknown parameter {param:?}"))),
        _ => Err(Error::Config(format!("parameter {param:?} is ambiguous; qualify it with a section"))),
    }
}

/// Recursive table merge; `over` wins on conflicts.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_scenario() {
        let c = ScenarioConfig::from_toml_str("", None).unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.explore.n_step, 30_000_000);
        assert_eq!(c.codebook.k, 250);
    }

    #[test]
    fn presets_touch_only_their_field() {
        let d = ScenarioConfig::default();
        assert!(ScenarioConfig::preset(Scenario::Linked).grid.linked);
        assert!(ScenarioConfig::preset(Scenario::Identical).grid.identical);
        assert!(ScenarioConfig::preset(Scenario::Rotation).grid.rotation_enabled);
        assert!(ScenarioConfig::preset(Scenario::SmallObjects).grid.small_objects);
        assert_eq!(ScenarioConfig::preset(Scenario::NoMotor).grid, d.grid);
        let s = ScenarioConfig::preset(Scenario::SweepPEnv).sweep.unwrap();
        assert_eq!(s.param, "grid.p_env");
        assert_eq!(s.values.len(), 6);
        for name in Scenario::ALL {
            ScenarioConfig::preset(name).validate().unwrap();
            assert_eq!(name.as_str().parse::<Scenario>().unwrap(), name);
        }
    }

    #[test]
    fn file_overrides_preset() {
        let text = "name = \"linked\"\nseeds = [9]\n[grid]\np_env = 0.0\n[explore]\nn_step = 1000\n";
        let c = ScenarioConfig::from_toml_str(text, None).unwrap();
        assert_eq!(c.name, Scenario::Linked);
        assert!(c.grid.linked);
        assert_eq!(c.grid.p_env, 0.0);
        assert_eq!(c.grid.n_obj, 2);
        assert_eq!(c.seeds, vec![9]);
        let forced = ScenarioConfig::from_toml_str(text, Some(Scenario::Rotation)).unwrap();
        assert!(forced.grid.rotation_enabled && !forced.grid.linked);
    }

    #[test]
    fn bad_files_are_config_errors() {
        for text in ["[grid]\nbogus = 1\n", "[grid]\np_env = 2.0\n", "name = \"nope\"\n", "[grid\n", "seeds = []\n"] {
            let e = ScenarioConfig::from_toml_str(text, None).unwrap_err();
            assert!(e.is_config(), "{text:?} -> {e}");
        }
    }

    #[test]
    fn toml_roundtrip() {
        let c = ScenarioConfig::preset(Scenario::SweepNObj);
        assert_eq!(ScenarioConfig::from_toml_str(&c.to_toml(), None).unwrap(), c);
    }

    #[test]
    fn set_param_by_short_and_dotted_name() {
        let mut c = ScenarioConfig::default();
        c.set_param("p_obj", "0.4").unwrap();
        c.set_param("grid.n_obj", "3").unwrap();
        c.set_param("knee", "verbatim").unwrap();
        assert_eq!(c.grid.p_obj, 0.4);
        assert_eq!(c.grid.n_obj, 3);
        assert_eq!(c.spectral.knee, crate::spectral::KneeConvention::Verbatim);
        assert_eq!(c.get_param("n_obj").unwrap(), "3");
        assert!(c.set_param("n_obj", "2.5").unwrap_err().is_config());
        assert!(c.set_param("p_env", "1.5").unwrap_err().is_config());
        assert!(c.set_param("nonexistent", "1").unwrap_err().is_config());
        c.set_param("codebook.max_iter", "50").unwrap();
        assert_eq!(c.codebook.max_iter, 50);
    }
}

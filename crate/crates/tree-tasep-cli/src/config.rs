//! Experiment configuration: a versioned TOML schema whose parse and
//! serialize are mutually inverse.
//!
//! The first line of every config file is the version header `version = 1`.
//! Unknown keys anywhere in the file are rejected, as are offspring laws
//! with weight on zero children. Command-line flags may override the seed,
//! replica count, output directory, and emission formats; the hash that
//! stamps every output file is taken over the effective configuration
//! after those overrides, minus the output section, so relocating the
//! artifacts never changes their provenance stamp.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tree_tasep::engine::StopRule;
use tree_tasep::gw_tree::OffspringLaw;
use tree_tasep::rate_field::{DecayClass, RateFamily, RateTable, SlowingSequence};

/// The only schema version this build reads.
pub const CONFIG_VERSION: u32 = 1;

fn default_tree_seed() -> u64 {
    1
}

fn default_replicas() -> u64 {
    1
}

fn default_max_events() -> u64 {
    10_000_000
}

fn default_delta() -> f64 {
    1.0
}

/// Offspring law selector.
///
/// `kind` is one of `regular` (degree `d`, meaning `d - 1` children per
/// vertex), `dirac` (exactly `k` children), or `weights` (explicit
/// `[count, weight]` pairs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<(u32, f64)>>,
}

impl LawConfig {
    /// Resolves to an offspring law, or explains which key is wrong.
    pub fn build(&self) -> Result<OffspringLaw, String> {
        match self.kind.as_str() {
            "regular" => {
                let d = self.d.ok_or("tree.law.d: required for kind = \"regular\"")?;
                OffspringLaw::regular(d).map_err(|e| format!("tree.law.d: {e}"))
            }
            "dirac" => {
                let k = self.k.ok_or("tree.law.k: required for kind = \"dirac\"")?;
                OffspringLaw::dirac(k).map_err(|e| format!("tree.law.k: {e}"))
            }
            "weights" => {
                let w = self
                    .weights
                    .as_ref()
                    .ok_or("tree.law.weights: required for kind = \"weights\"")?;
                OffspringLaw::from_weights(w).map_err(|e| format!("tree.law.weights: {e}"))
            }
            other => Err(format!(
                "tree.law.kind: unknown kind {other:?}; expected regular, dirac, or weights"
            )),
        }
    }
}

/// Tree section: the offspring law and the seed its growth draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub law: LawConfig,
    #[serde(default = "default_tree_seed")]
    pub seed: u64,
}

/// Rate-family selector.
///
/// `family` is one of `constant`, `exponential` (needs `d`), `slowed`
/// (needs `d` and either `ratio` or `g_table`), `polynomial` (needs `p`),
/// or `table` (needs `entries`, optionally `decay_class`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_table: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<(u32, u32, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_class: Option<String>,
}

impl RatesConfig {
    /// Resolves to a rate family, or explains which key is wrong.
    pub fn build(&self) -> Result<RateFamily, String> {
        let family = match self.family.as_str() {
            "constant" => RateFamily::Constant,
            "exponential" => RateFamily::ExponentialHomogeneous {
                d: self
                    .d
                    .ok_or("rates.d: required for family = \"exponential\"")?,
            },
            "slowed" => {
                let d = self.d.ok_or("rates.d: required for family = \"slowed\"")?;
                let g = match (&self.ratio, &self.g_table) {
                    (Some(r), None) => SlowingSequence::Geometric { ratio: *r },
                    (None, Some(t)) => SlowingSequence::Table(t.clone()),
                    _ => {
                        return Err(
                            "rates: family = \"slowed\" needs exactly one of ratio or g_table"
                                .into(),
                        )
                    }
                };
                RateFamily::Slowed { d, g }
            }
            "polynomial" => RateFamily::Polynomial {
                p: self
                    .p
                    .ok_or("rates.p: required for family = \"polynomial\"")?,
            },
            "table" => {
                let entries = self
                    .entries
                    .as_ref()
                    .ok_or("rates.entries: required for family = \"table\"")?;
                let table = RateTable::from_entries(entries.iter().copied())
                    .map_err(|e| format!("rates.entries: {e}"))?;
                let decay_class = match self.decay_class.as_deref() {
                    None => None,
                    Some("log") => Some(DecayClass::LogOrder),
                    Some("super-log") => Some(DecayClass::SuperLogOrder),
                    Some(other) => {
                        return Err(format!(
                            "rates.decay_class: unknown class {other:?}; expected log or super-log"
                        ))
                    }
                };
                RateFamily::CustomTable { table, decay_class }
            }
            other => Err(format!(
                "rates.family: unknown family {other:?}; expected constant, exponential, slowed, polynomial, or table"
            ))?,
        };
        family.validate().map_err(|e| format!("rates: {e}"))?;
        Ok(family)
    }
}

/// Stop-rule selector: `time` (needs `t`), `entered` (needs `count`),
/// `past-generation` or `disentangled` (need `count` and `generation`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<u64>,
}

impl StopConfig {
    /// Resolves to a stop rule, or explains which key is wrong.
    pub fn build(&self) -> Result<StopRule, String> {
        let need_count = || self.count.ok_or("run.stop.count: required");
        let need_gen = || self.generation.ok_or("run.stop.generation: required");
        match self.kind.as_str() {
            "time" => {
                let t = self.t.ok_or("run.stop.t: required for kind = \"time\"")?;
                if !(t >= 0.0) || !t.is_finite() {
                    return Err(format!("run.stop.t: must be non-negative and finite, got {t}"));
                }
                Ok(StopRule::TimeHorizon(t))
            }
            "entered" => Ok(StopRule::ParticlesEntered(need_count()?)),
            "past-generation" => Ok(StopRule::ParticlesPastGeneration {
                count: need_count()?,
                generation: need_gen()?,
            }),
            "disentangled" => Ok(StopRule::Disentangled {
                count: need_count()?,
                generation: need_gen()?,
            }),
            other => Err(format!(
                "run.stop.kind: unknown kind {other:?}; expected time, entered, past-generation, or disentangled"
            )),
        }
    }
}

/// Run section: reservoir rate, slack, dynamics seeds, and the stop rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: f64,
    /// Slack parameter for bound evaluations.
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    pub stop: StopConfig,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
}

/// Output section; both fields can be overridden from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema version; the header line of every config file.
    pub version: u32,
    /// When present, must match the invoked subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,
    pub tree: TreeConfig,
    pub rates: RatesConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Parses and validates a config from TOML text.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Semantic checks beyond the serde schema.
    pub fn validate(&self) -> Result<(), String> {
        if self.version != CONFIG_VERSION {
            return Err(format!(
                "version: expected {CONFIG_VERSION}, got {}; the header line must read `version = {CONFIG_VERSION}`",
                self.version
            ));
        }
        self.tree.law.build()?;
        self.rates.build()?;
        self.run.stop.build()?;
        if !(self.run.lambda > 0.0) || !self.run.lambda.is_finite() {
            return Err(format!(
                "run.lambda: must be positive and finite, got {}",
                self.run.lambda
            ));
        }
        if !(self.run.delta > 0.0) || !self.run.delta.is_finite() {
            return Err(format!(
                "run.delta: must be positive and finite, got {}",
                self.run.delta
            ));
        }
        if self.run.replicas == 0 {
            return Err("run.replicas: must be at least 1".into());
        }
        if let Some(formats) = &self.output.formats {
            for f in formats {
                if !matches!(f.as_str(), "csv" | "json" | "svg") {
                    return Err(format!(
                        "output.formats: unknown format {f:?}; expected csv, json, or svg"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Canonical TOML rendering; parsing it back yields an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical rendering, with the output section
    /// blanked: where artifacts land does not alter what was computed.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputConfig::default();
        let mut hasher = Sha256::new();
        hasher.update(canonical.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The resolved offspring law.
    pub fn law(&self) -> OffspringLaw {
        self.tree.law.build().expect("validated at parse time")
    }

    /// The resolved rate family.
    pub fn family(&self) -> RateFamily {
        self.rates.build().expect("validated at parse time")
    }

    /// The resolved stop rule.
    pub fn stop(&self) -> StopRule {
        self.run.stop.build().expect("validated at parse time")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1

[tree]
law = { kind = "dirac", k = 2 }

[rates]
family = "constant"

[run]
lambda = 1.0
seed = 1
stop = { kind = "time", t = 10.0 }
"#;

    #[test]
    fn minimal_config_is_accepted() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.run.replicas, 1);
        assert_eq!(cfg.run.max_events, 10_000_000);
        assert!(matches!(cfg.stop(), StopRule::TimeHorizon(t) if t == 10.0));
        assert_eq!(cfg.law().d_min(), 2);
    }

    #[test]
    fn zero_offspring_weight_is_rejected() {
        let text = MINIMAL.replace(
            "law = { kind = \"dirac\", k = 2 }",
            "law = { kind = \"weights\", weights = [[0, 0.1], [2, 0.9]] }",
        );
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.contains("no leaves"), "message was: {err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("seed = 1", "seed = 1\nwalltime = 30");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.contains("walltime"), "message was: {err}");
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn version_header_is_enforced() {
        let text = MINIMAL.replace("version = 1", "version = 2");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.contains("version"), "message was: {err}");
    }

    #[test]
    fn every_family_kind_parses() {
        for (snippet, ok) in [
            ("family = \"exponential\"\nd = 3", true),
            ("family = \"exponential\"", false),
            ("family = \"slowed\"\nd = 3\nratio = 0.25", true),
            ("family = \"slowed\"\nd = 3\ng_table = [1.0, 0.5]", true),
            ("family = \"slowed\"\nd = 3", false),
            ("family = \"polynomial\"\np = 1.5", true),
            (
                "family = \"table\"\nentries = [[0, 1, 0.5]]\ndecay_class = \"log\"",
                true,
            ),
            ("family = \"table\"", false),
            ("family = \"fancy\"", false),
        ] {
            let text = MINIMAL.replace("family = \"constant\"", snippet);
            let parsed = ExperimentConfig::from_toml(&text);
            assert_eq!(parsed.is_ok(), ok, "snippet {snippet:?} gave {parsed:?}");
        }
    }

    #[test]
    fn overrides_change_the_hash() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let before = cfg.hash();
        cfg.run.seed = 2;
        assert_ne!(before, cfg.hash());
    }

    #[test]
    fn relocating_the_output_keeps_the_hash() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let before = cfg.hash();
        cfg.output.dir = Some("elsewhere".into());
        cfg.output.formats = Some(vec!["json".into()]);
        assert_eq!(before, cfg.hash());
    }

    #[test]
    fn mismatched_subcommand_field_is_caught_by_callers() {
        let text = MINIMAL.replace("version = 1", "version = 1\nsubcommand = \"simulate\"");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.subcommand.as_deref(), Some("simulate"));
    }
}

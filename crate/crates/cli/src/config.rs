//! TOML experiment files.

use std::net::SocketAddr;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ppac_core::graph::{DirectedGraph, NodeId};
use ppac_core::paillier::DEFAULT_FRACTIONAL_BITS;
use ppac_core::sim::{AdversarySpec, AttackKind, ExperimentConfig, Mode, DEFAULT_KEY_BITS, DEFAULT_STOP_TOL};
use ppac_core::weights::WeightParams;
use serde::Deserialize;

pub const PRESETS: [(&str, &str); 3] = [
    ("k-sweep", include_str!("../presets/k-sweep.toml")),
    ("least-squares", include_str!("../presets/least-squares.toml")),
    ("network", include_str!("../presets/network.toml")),
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub graph: GraphSection,
    pub protocol: ProtocolSection,
    pub adversary: Option<AdversarySection>,
    #[serde(default)]
    pub sweep: SweepSection,
    pub network: Option<NetworkSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub nodes: usize,
    /// `[from, to]` pairs: `from` sends to `to`.
    pub links: Vec<[NodeId; 2]>,
}

fn default_stop_tol() -> f64 {
    DEFAULT_STOP_TOL
}
fn default_mode() -> Mode {
    Mode::Algorithm1
}
fn default_key_bits() -> u64 {
    DEFAULT_KEY_BITS
}
fn default_fractional_bits() -> u32 {
    DEFAULT_FRACTIONAL_BITS
}
fn default_range() -> f64 {
    10.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub x0: Vec<f64>,
    pub k: usize,
    pub epsilon: f64,
    #[serde(default = "default_range")]
    pub phase_a_range: f64,
    pub max_rounds: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_key_bits")]
    pub key_bits: u64,
    #[serde(default = "default_fractional_bits")]
    pub fractional_bits: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    pub members: Vec<NodeId>,
    pub target: Option<NodeId>,
    pub attack: Option<AttackKind>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub k_values: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub true_x0: Option<Vec<f64>>,
    pub other_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub addresses: Vec<SocketAddr>,
    #[serde(default)]
    pub plaintext: bool,
}

/// A parsed file plus the exact text it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub file: FileConfig,
    pub source: String,
    pub origin: String,
}

impl Loaded {
    pub fn from_path(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(source, path.display().to_string())
    }

    pub fn preset(name: &str) -> Result<Self> {
        let Some((_, text)) = PRESETS.iter().find(|(n, _)| *n == name) else {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            bail!("unknown preset {name:?}; available: {}", names.join(", "));
        };
        Self::parse(text.to_string(), format!("preset:{name}"))
    }

    fn parse(source: String, origin: String) -> Result<Self> {
        let file: FileConfig = toml::from_str(&source).with_context(|| format!("parsing {origin}"))?;
        Ok(Self { file, source, origin })
    }
}

impl FileConfig {
    pub fn graph(&self) -> Result<DirectedGraph> {
        let links = self.graph.links.iter().map(|[from, to]| (*from, *to));
        Ok(DirectedGraph::from_links(self.graph.nodes, links)?)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let p = &self.protocol;
        let mut cfg =
            ExperimentConfig::new(self.graph()?, p.x0.clone(), WeightParams::new(p.k, p.epsilon, p.phase_a_range));
        cfg.max_rounds = p.max_rounds;
        cfg.stop_tol = p.stop_tol;
        cfg.seed = p.seed;
        cfg.mode = p.mode;
        cfg.key_bits = p.key_bits;
        cfg.fractional_bits = p.fractional_bits;
        cfg.adversary = self.adversary.as_ref().map(|a| AdversarySpec {
            members: a.members.clone(),
            target: a.target,
            attack: a.attack,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (name, _) in PRESETS {
            let loaded = Loaded::preset(name).unwrap();
            loaded.file.experiment().unwrap();
        }
        assert!(Loaded::preset("nope").is_err());
    }

    #[test]
    fn defaults_and_rejections() {
        let text = r#"
            [graph]
            nodes = 2
            links = [[0, 1], [1, 0]]
            [protocol]
            x0 = [1.0, 2.0]
            k = 1
            epsilon = 0.1
            max_rounds = 10
        "#;
        let loaded = Loaded::parse(text.into(), "inline".into()).unwrap();
        let cfg = loaded.file.experiment().unwrap();
        assert_eq!(cfg.mode, Mode::Algorithm1);
        assert_eq!(cfg.fractional_bits, DEFAULT_FRACTIONAL_BITS);
        let typo = text.replace("epsilon", "epsilom");
        assert!(Loaded::parse(typo, "inline".into()).is_err());
        let bad_eps = text.replace("0.1", "0.6");
        assert!(Loaded::parse(bad_eps, "inline".into()).unwrap().file.experiment().is_err());
    }
}

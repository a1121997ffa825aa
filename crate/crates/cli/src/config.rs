//! Experiment configuration files.
//!
//! TOML with fixed sections; every key is optional and unknown keys are
//! rejected. Defaults reproduce the reference federated setting: 20
//! clients, 5 per round, one local epoch, batch 16, Adadelta at lr 0.005,
//! 100 rounds, 10% stratified test split.

use std::fmt;
use std::path::PathBuf;

use fedaug_core::federation::{Aggregator, Balancing, FederationConfig};
use fedaug_core::model::{Architecture, OptimizerKind};
use fedaug_core::partition::{PartitionMode, PartitionSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub partition: PartitionSection,
    pub federation: FederationSection,
    pub optimizer: OptimizerSection,
    pub model: ModelSection,
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// `FBDS` file; when absent a synthetic dataset is generated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub num_classes: usize,
    pub per_class: usize,
    pub height: usize,
    pub width: usize,
    pub noise_sigma: f64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionModeName {
    Iid,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSection {
    pub num_clients: usize,
    pub mode: PartitionModeName,
    /// Shared concentration for every client.
    pub alpha: f64,
    /// Per-client concentrations; overrides `alpha`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancingName {
    None,
    Augment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub rounds: usize,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub aggregator: Aggregator,
    pub balancing: BalancingName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    Adadelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerName,
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchName {
    Softmax,
    Mlp,
    TinyConv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub arch: ArchName,
    pub hidden: usize,
    pub filters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Pair the run with a centralized reference and report divergence.
    pub divergence: bool,
    /// Write every protocol message to `trace.jsonl`.
    pub protocol_trace: bool,
    /// Fill `wall_time_s`. Makes the metrics CSV differ between reruns.
    pub wall_time: bool,
    pub stability_window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            dataset: DatasetSection::default(),
            partition: PartitionSection::default(),
            federation: FederationSection::default(),
            optimizer: OptimizerSection::default(),
            model: ModelSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            path: None,
            num_classes: 4,
            per_class: 500,
            height: 16,
            width: 16,
            noise_sigma: 0.1,
            test_fraction: 0.1,
        }
    }
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self {
            num_clients: 20,
            mode: PartitionModeName::Iid,
            alpha: 1.0,
            alphas: None,
        }
    }
}

impl Default for FederationSection {
    fn default() -> Self {
        Self {
            rounds: 100,
            clients_per_round: 5,
            local_epochs: 1,
            batch_size: 16,
            aggregator: Aggregator::FedAvg,
            balancing: BalancingName::None,
        }
    }
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            kind: OptimizerName::Adadelta,
            lr: 0.005,
            rho: 0.9,
            eps: 1e-6,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            arch: ArchName::Softmax,
            hidden: 32,
            filters: 4,
        }
    }
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            divergence: false,
            protocol_trace: false,
            wall_time: false,
            stability_window: 20,
        }
    }
}

/// A config problem, with the 1-based line it was found on when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Line of `key` inside `[section]` (top level when `section` is empty).
fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn toml_line(text: &str, err: &toml::de::Error) -> Option<usize> {
    let span = err.span()?;
    Some(text[..span.start.min(text.len())].matches('\n').count() + 1)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: toml_line(text, &e),
            message: e.message().to_string(),
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    /// Canonical TOML with every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let fail = |section: &str, key: &str, message: String| ConfigError {
            line: line_of(text, section, key),
            message,
        };
        let d = &self.dataset;
        if d.path.is_none() {
            if d.num_classes < 2 {
                return Err(fail(
                    "dataset",
                    "num_classes",
                    "num_classes must be at least 2".into(),
                ));
            }
            if d.per_class < 1 {
                return Err(fail(
                    "dataset",
                    "per_class",
                    "per_class must be at least 1".into(),
                ));
            }
            if d.height == 0 || d.width == 0 {
                let key = if d.height == 0 { "height" } else { "width" };
                return Err(fail(
                    "dataset",
                    key,
                    "image dimensions must be positive".into(),
                ));
            }
            if !(d.noise_sigma >= 0.0 && d.noise_sigma.is_finite()) {
                return Err(fail(
                    "dataset",
                    "noise_sigma",
                    "noise_sigma must be >= 0".into(),
                ));
            }
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(fail(
                "dataset",
                "test_fraction",
                format!("test_fraction {} must be in (0, 1)", d.test_fraction),
            ));
        }
        let p = &self.partition;
        if p.num_clients < 1 {
            return Err(fail(
                "partition",
                "num_clients",
                "num_clients must be at least 1".into(),
            ));
        }
        if p.mode == PartitionModeName::Dirichlet {
            if let Some(alphas) = &p.alphas {
                if alphas.len() != p.num_clients {
                    return Err(fail(
                        "partition",
                        "alphas",
                        format!("{} alphas for {} clients", alphas.len(), p.num_clients),
                    ));
                }
                if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return Err(fail(
                        "partition",
                        "alphas",
                        "every alpha must be positive".into(),
                    ));
                }
            } else if !(p.alpha > 0.0 && p.alpha.is_finite()) {
                return Err(fail(
                    "partition",
                    "alpha",
                    format!("alpha {} must be positive", p.alpha),
                ));
            }
        }
        let f = &self.federation;
        if f.clients_per_round < 1 || f.clients_per_round > p.num_clients {
            return Err(fail(
                "federation",
                "clients_per_round",
                format!(
                    "clients_per_round {} must be between 1 and num_clients ({})",
                    f.clients_per_round, p.num_clients
                ),
            ));
        }
        if f.local_epochs < 1 {
            return Err(fail(
                "federation",
                "local_epochs",
                "local_epochs must be at least 1".into(),
            ));
        }
        if f.batch_size < 1 {
            return Err(fail(
                "federation",
                "batch_size",
                "batch_size must be at least 1".into(),
            ));
        }
        let o = &self.optimizer;
        if let Err(e) = self.optimizer_kind().validate() {
            let key = if o.lr.is_nan() || o.lr <= 0.0 {
                "lr"
            } else if !(0.0..1.0).contains(&o.rho) {
                "rho"
            } else {
                "eps"
            };
            return Err(fail("optimizer", key, e.to_string()));
        }
        let m = &self.model;
        if m.arch == ArchName::Mlp && m.hidden == 0 {
            return Err(fail("model", "hidden", "hidden must be at least 1".into()));
        }
        if m.arch == ArchName::TinyConv && m.filters == 0 {
            return Err(fail(
                "model",
                "filters",
                "filters must be at least 1".into(),
            ));
        }
        if self.report.stability_window < 2 {
            return Err(fail(
                "report",
                "stability_window",
                "stability_window must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        let p = &self.partition;
        match p.mode {
            PartitionModeName::Iid => PartitionSpec::iid(p.num_clients),
            PartitionModeName::Dirichlet => PartitionSpec {
                num_clients: p.num_clients,
                mode: PartitionMode::Dirichlet {
                    alphas: p
                        .alphas
                        .clone()
                        .unwrap_or_else(|| vec![p.alpha; p.num_clients]),
                },
            },
        }
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        let o = &self.optimizer;
        match o.kind {
            OptimizerName::Sgd => OptimizerKind::Sgd { lr: o.lr },
            OptimizerName::Adadelta => OptimizerKind::Adadelta {
                lr: o.lr,
                rho: o.rho,
                eps: o.eps,
            },
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self.model.arch {
            ArchName::Softmax => Architecture::Softmax,
            ArchName::Mlp => Architecture::Mlp {
                hidden: self.model.hidden,
            },
            ArchName::TinyConv => Architecture::TinyConv {
                filters: self.model.filters,
            },
        }
    }

    pub fn federation_config(&self) -> FederationConfig {
        let f = &self.federation;
        FederationConfig {
            num_rounds: f.rounds,
            clients_per_round: f.clients_per_round,
            local_epochs: f.local_epochs,
            batch_size: f.batch_size,
            aggregator: f.aggregator,
            balancing: match f.balancing {
                BalancingName::None => Balancing::None,
                BalancingName::Augment => Balancing::AugmentBalance,
            },
            optimizer: self.optimizer_kind(),
            arch: self.architecture(),
            master_seed: self.seed,
            track_divergence: self.report.divergence,
            record_wall_time: self.report.wall_time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_reference_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg.partition.num_clients, 20);
        assert_eq!(cfg.federation.clients_per_round, 5);
        assert_eq!(cfg.federation.local_epochs, 1);
        assert_eq!(cfg.federation.batch_size, 16);
        assert_eq!(cfg.federation.rounds, 100);
        assert_eq!(cfg.dataset.test_fraction, 0.1);
        assert_eq!(cfg.optimizer_kind(), OptimizerKind::adadelta(0.005));
        assert_eq!(cfg.federation.aggregator, Aggregator::FedAvg);
    }

    #[test]
    fn too_many_clients_per_round() {
        let err = ExperimentConfig::parse("[federation]\nclients_per_round = 25\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.message.contains("clients_per_round"), "{err}");
    }

    #[test]
    fn unknown_key_is_line_numbered() {
        let err = ExperimentConfig::parse("seed = 3\n\n[partition]\nnum_client = 5\n").unwrap_err();
        assert_eq!(err.line, Some(4), "{err}");
        assert!(err.to_string().starts_with("line 4:"));
    }

    #[test]
    fn type_mismatch_is_line_numbered() {
        let err = ExperimentConfig::parse("[federation]\nrounds = \"many\"\n").unwrap_err();
        assert_eq!(err.line, Some(2), "{err}");
        let err = ExperimentConfig::parse("[model]\narch = \"resnet\"\n").unwrap_err();
        assert_eq!(err.line, Some(2), "{err}");
    }

    #[test]
    fn dump_round_trips() {
        let text = "seed = 11\n[partition]\nmode = \"dirichlet\"\nalpha = 0.3\nnum_clients = 10\n\
                    [federation]\nbalancing = \"augment\"\naggregator = \"simple_mean\"\n\
                    [model]\narch = \"tiny_conv\"\nfilters = 2\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_toml(), cfg.to_toml());
        assert_eq!(cfg.architecture(), Architecture::TinyConv { filters: 2 });
        assert_eq!(cfg.federation_config().balancing, Balancing::AugmentBalance);
    }

    #[test]
    fn per_client_alphas() {
        let ok = ExperimentConfig::parse(
            "[partition]\nnum_clients = 2\nmode = \"dirichlet\"\nalphas = [0.5, 2.0]\n[federation]\nclients_per_round = 2\n",
        )
        .unwrap();
        assert_eq!(
            ok.partition_spec().mode,
            PartitionMode::Dirichlet {
                alphas: vec![0.5, 2.0]
            }
        );
        let err = ExperimentConfig::parse(
            "[partition]\nnum_clients = 3\nmode = \"dirichlet\"\nalphas = [0.5, 2.0]\n[federation]\nclients_per_round = 2\n",
        )
        .unwrap_err();
        assert_eq!(err.line, Some(4));
    }

    #[test]
    fn invalid_values() {
        for (text, line) in [
            ("[dataset]\ntest_fraction = 1.0\n", 2),
            ("[optimizer]\nlr = -1.0\n", 2),
            ("[federation]\nlocal_epochs = 0\n", 2),
            ("[partition]\nmode = \"dirichlet\"\nalpha = 0.0\n", 3),
        ] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.line, Some(line), "{text}: {err}");
        }
    }
}

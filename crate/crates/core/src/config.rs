//! Experiment configuration: TOML with dotted keys, e.g. `dims.n_t = 16`.
//! Every table rejects unknown keys. Missing keys take the defaults below.

use serde::{Deserialize, Serialize};

use crate::autonet::NetShape;
use crate::channel::{db_to_linear, thermal_noise_dbm, Cluster, EnvironmentModel};
use crate::codebook::CodebookKind;
use crate::datapipe::{DatasetDims, GenerateSpec};
use crate::error::{Error, Result};
use crate::oracle::{LinkBudget, DEFAULT_SEARCH_CAP};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimsConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub n_rf_tx: usize,
    pub n_rf_rx: usize,
    /// Defaults to `min(n_rf_tx, n_rf_rx)`.
    pub n_streams: Option<usize>,
    pub m_t: usize,
    pub m_r: usize,
    /// Codebook sizes; default to the antenna counts.
    pub n_tx_beams: Option<usize>,
    pub n_rx_beams: Option<usize>,
}

impl Default for DimsConfig {
    fn default() -> Self {
        Self { n_t: 16, n_r: 16, n_rf_tx: 2, n_rf_rx: 2, n_streams: None, m_t: 8, m_r: 8, n_tx_beams: None, n_rx_beams: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub num_paths: usize,
    pub cluster_aod_deg: Vec<f64>,
    pub cluster_aoa_deg: Vec<f64>,
    /// Mean per-path power of each cluster, dB.
    pub cluster_power_db: Vec<f64>,
    pub angular_spread_deg: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            num_paths: 3,
            cluster_aod_deg: vec![-40.0, -10.0, 15.0, 45.0],
            cluster_aoa_deg: vec![20.0, -35.0, 50.0, -5.0],
            cluster_power_db: vec![-88.0, -88.0, -88.0, -88.0],
            angular_spread_deg: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    /// Evaluation grid of transmit powers.
    pub p_t_dbm: Vec<f64>,
    /// Transmit power the training set is generated and labelled at.
    pub train_p_t_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    /// Overrides the thermal noise computed from bandwidth and noise figure.
    pub noise_dbm: Option<f64>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            p_t_dbm: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            train_p_t_dbm: 30.0,
            bandwidth_hz: 0.5e9,
            noise_figure_db: 5.0,
            noise_dbm: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_samples: usize,
    /// Share of samples used for training; the rest is the test set.
    pub train_fraction: f64,
    pub labels_on_noisy: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_samples: 20_000, train_fraction: 0.9, labels_on_noisy: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { hidden1: 256, hidden2: 256 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Exhaustive,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Upper-bound search used for the reference rate.
    pub oracle: OracleKind,
    pub search_cap: u64,
    /// Evaluate at most this many test samples (all when absent).
    pub max_samples: Option<usize>,
    /// Channels drawn by `oracle-bench`.
    pub bench_channels: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { oracle: OracleKind::Exhaustive, search_cap: DEFAULT_SEARCH_CAP as u64, max_samples: None, bench_channels: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub codebook: CodebookKind,
    pub precision: Precision,
    pub dims: DimsConfig,
    pub environment: EnvironmentConfig,
    pub link: LinkConfig,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            codebook: CodebookKind::Dft,
            precision: Precision::F64,
            dims: DimsConfig::default(),
            environment: EnvironmentConfig::default(),
            link: LinkConfig::default(),
            dataset: DatasetConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn field_err(field: &str, reason: impl Into<String>) -> Error {
    Error::config(field, reason)
}

impl ExperimentConfig {
    /// Parses and validates. Unknown keys and type errors name the offending key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let reason = e.message().to_string();
            let field = e
                .span()
                .and_then(|s| text.get(s))
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "<config>".into());
            Error::Config { field, reason }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_streams(&self) -> usize {
        self.dims.n_streams.unwrap_or(self.dims.n_rf_tx.min(self.dims.n_rf_rx))
    }

    pub fn noise_dbm(&self) -> f64 {
        self.link.noise_dbm.unwrap_or_else(|| thermal_noise_dbm(self.link.bandwidth_hz, self.link.noise_figure_db))
    }

    pub fn dataset_dims(&self) -> DatasetDims {
        DatasetDims {
            n_t: self.dims.n_t,
            n_r: self.dims.n_r,
            n_rf_tx: self.dims.n_rf_tx,
            n_rf_rx: self.dims.n_rf_rx,
            n_tx_beams: self.dims.n_tx_beams.unwrap_or(self.dims.n_t),
            n_rx_beams: self.dims.n_rx_beams.unwrap_or(self.dims.n_r),
            num_paths: self.environment.num_paths,
        }
    }

    pub fn net_shape(&self) -> NetShape {
        let d = self.dataset_dims();
        NetShape {
            n_t: d.n_t,
            n_r: d.n_r,
            m_t: self.dims.m_t,
            m_r: self.dims.m_r,
            n_tx_beams: d.n_tx_beams,
            n_rx_beams: d.n_rx_beams,
            hidden1: self.network.hidden1,
            hidden2: self.network.hidden2,
        }
    }

    pub fn environment_model(&self) -> EnvironmentModel {
        let e = &self.environment;
        let rad = std::f64::consts::PI / 180.0;
        EnvironmentModel {
            clusters: (0..e.cluster_aod_deg.len())
                .map(|i| Cluster {
                    center_aod: e.cluster_aod_deg[i] * rad,
                    center_aoa: e.cluster_aoa_deg[i] * rad,
                    angular_spread: e.angular_spread_deg * rad,
                    mean_power: db_to_linear(e.cluster_power_db[i]),
                })
                .collect(),
            num_paths: e.num_paths,
            seed: self.seed,
        }
    }

    pub fn link_budget(&self, p_t_dbm: f64) -> Result<LinkBudget<f64>> {
        LinkBudget::from_dbm(p_t_dbm, self.noise_dbm(), self.n_streams())
    }

    /// Per-entry variance of the channel noise at a given transmit power:
    /// receiver noise referred to the channel through the pilot power.
    pub fn channel_noise_power(&self, p_t_dbm: f64) -> f64 {
        db_to_linear(self.noise_dbm() - p_t_dbm)
    }

    pub fn generate_spec(&self) -> Result<GenerateSpec> {
        Ok(GenerateSpec {
            env: self.environment_model(),
            dims: self.dataset_dims(),
            codebook: self.codebook,
            link: self.link_budget(self.link.train_p_t_dbm)?,
            channel_noise_power: self.channel_noise_power(self.link.train_p_t_dbm),
            n_samples: self.dataset.n_samples,
            seed: self.seed,
            labels_on_noisy: self.dataset.labels_on_noisy,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        for (name, v) in [("n_t", d.n_t), ("n_r", d.n_r), ("n_rf_tx", d.n_rf_tx), ("n_rf_rx", d.n_rf_rx), ("m_t", d.m_t), ("m_r", d.m_r)] {
            if v == 0 {
                return Err(field_err(&format!("dims.{name}"), "must be positive"));
            }
        }
        if d.m_t > d.n_t {
            return Err(field_err("dims.m_t", format!("{} measurements exceed {} transmit antennas", d.m_t, d.n_t)));
        }
        if d.m_r > d.n_r {
            return Err(field_err("dims.m_r", format!("{} measurements exceed {} receive antennas", d.m_r, d.n_r)));
        }
        let ns = self.n_streams();
        if ns == 0 || ns > d.n_rf_tx.min(d.n_rf_rx) {
            return Err(field_err("dims.n_streams", "must lie in 1..=min(n_rf_tx, n_rf_rx)"));
        }
        self.dataset_dims().validate()?;
        let e = &self.environment;
        let k = e.cluster_aod_deg.len();
        if k == 0 {
            return Err(field_err("environment.cluster_aod_deg", "needs at least one cluster"));
        }
        if e.cluster_aoa_deg.len() != k {
            return Err(field_err("environment.cluster_aoa_deg", "length differs from cluster_aod_deg"));
        }
        if e.cluster_power_db.len() != k {
            return Err(field_err("environment.cluster_power_db", "length differs from cluster_aod_deg"));
        }
        for a in e.cluster_aod_deg.iter().chain(&e.cluster_aoa_deg) {
            if !(-90.0..90.0).contains(a) {
                return Err(field_err("environment.cluster_aod_deg", format!("angle {a} outside [-90, 90)")));
            }
        }
        if !(e.angular_spread_deg > 0.0) {
            return Err(field_err("environment.angular_spread_deg", "must be positive"));
        }
        if e.num_paths == 0 {
            return Err(field_err("environment.num_paths", "must be positive"));
        }
        if self.link.p_t_dbm.is_empty() {
            return Err(field_err("link.p_t_dbm", "power grid must not be empty"));
        }
        if self.link.p_t_dbm.iter().chain([&self.link.train_p_t_dbm]).any(|p| !p.is_finite()) {
            return Err(field_err("link.p_t_dbm", "powers must be finite"));
        }
        if !self.noise_dbm().is_finite() {
            return Err(field_err("link.noise_dbm", "must be finite"));
        }
        if self.dataset.n_samples == 0 {
            return Err(field_err("dataset.n_samples", "must be positive"));
        }
        if !(self.dataset.train_fraction > 0.0 && self.dataset.train_fraction < 1.0) {
            return Err(field_err("dataset.train_fraction", "must lie strictly between 0 and 1"));
        }
        if self.network.hidden1 == 0 || self.network.hidden2 == 0 {
            return Err(field_err("network.hidden1", "hidden widths must be positive"));
        }
        if self.eval.bench_channels == 0 {
            return Err(field_err("eval.bench_channels", "must be positive"));
        }
        if self.eval.max_samples == Some(0) {
            return Err(field_err("eval.max_samples", "must be positive"));
        }
        self.train.validate()
    }
}

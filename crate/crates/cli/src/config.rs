//! Pipeline configuration: a sectioned TOML file with one mandatory root
//! seed. Every stage derives its randomness from that seed, and every
//! stage output records a digest of the configuration slice that
//! determined it, so stale artifacts are detected instead of consumed.

use std::path::{Path, PathBuf};

use effconn::crossval::{FeatureKind, ModelKind, StandardizeScope};
use effconn::gcn::Aggregator;
use effconn::rcc::{EcMode, PeakMode, RccParams};
use effconn::reservoir::{InputActivation, RecurrentActivation, ReservoirConfig};
use effconn::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Estimator selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Rcc,
    Granger,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Rcc => "rcc",
            Method::Granger => "granger",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    /// Cohort manifest CSV; subject paths inside it are resolved
    /// relative to the manifest's directory.
    pub manifest: PathBuf,
    pub atlas: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirSection {
    pub n_units: usize,
    pub sparsity_in: f64,
    pub sparsity_rec: f64,
    pub input_scaling: f64,
    pub input_shift: f64,
    pub bias_scaling: f64,
    pub bias_shift: f64,
    pub spectral_radius: f64,
    pub leakage: f64,
}

impl Default for ReservoirSection {
    fn default() -> Self {
        let c = ReservoirConfig::default();
        Self {
            n_units: c.n_units,
            sparsity_in: c.sparsity_in,
            sparsity_rec: c.sparsity_rec,
            input_scaling: c.input_scaling,
            input_shift: c.input_shift,
            bias_scaling: c.bias_scaling,
            bias_shift: c.bias_shift,
            spectral_radius: c.spectral_radius,
            leakage: c.leakage,
        }
    }
}

impl ReservoirSection {
    pub fn to_core(&self) -> ReservoirConfig {
        ReservoirConfig {
            n_units: self.n_units,
            input_dim: 1,
            sparsity_in: self.sparsity_in,
            sparsity_rec: self.sparsity_rec,
            activation_in: InputActivation::Logistic,
            activation_rec: RecurrentActivation::Tanh,
            input_scaling: self.input_scaling,
            input_shift: self.input_shift,
            bias_scaling: self.bias_scaling,
            bias_shift: self.bias_shift,
            spectral_radius: self.spectral_radius,
            leakage: self.leakage,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RccSection {
    pub taus: Vec<i64>,
    pub n_reservoirs: usize,
    pub n_surrogates: usize,
    pub alpha: f64,
    pub train_fraction: f64,
    pub washout: usize,
    /// Lag whose EC matrix feeds the classifier; must be on the grid.
    pub ec_tau: i64,
    pub mode: EcMode,
}

impl Default for RccSection {
    fn default() -> Self {
        let p = RccParams::default();
        Self {
            taus: p.taus,
            n_reservoirs: p.n_reservoirs,
            n_surrogates: p.n_surrogates,
            alpha: p.alpha,
            train_fraction: p.train_fraction,
            washout: p.washout,
            ec_tau: -1,
            mode: EcMode::Unidirectional,
        }
    }
}

impl RccSection {
    pub fn to_core(&self) -> RccParams {
        RccParams {
            taus: self.taus.clone(),
            n_reservoirs: self.n_reservoirs,
            n_surrogates: self.n_surrogates,
            alpha: self.alpha,
            train_fraction: self.train_fraction,
            washout: self.washout,
            standardize_channels: true,
            peak_mode: PeakMode::SkillMax,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrangerSection {
    pub order: usize,
}

impl Default for GrangerSection {
    fn default() -> Self {
        Self { order: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    /// |z| threshold when binarizing standardized EC into a graph.
    pub threshold: f64,
    pub kind: FeatureKind,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            threshold: 2.0,
            kind: FeatureKind::Ltp,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub model: ModelKind,
    pub k_folds: usize,
    pub val_fraction: f64,
    pub standardize: StandardizeScope,
    pub decision_threshold: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: [usize; 2],
    pub aggregator: Aggregator,
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            model: ModelKind::Gcn,
            k_folds: 10,
            val_fraction: 0.1,
            standardize: StandardizeScope::Fold,
            decision_threshold: 0.5,
            epochs: 150,
            learning_rate: 0.005,
            hidden: [16, 16],
            aggregator: Aggregator::Mean,
            n_trees: 100,
            max_depth: 2,
            max_features: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub n_samples: usize,
    /// Absent means 0.25·√(#edges explained).
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub roi_mode: effconn::explain::RoiMode,
    pub pos_threshold: f64,
    pub neg_threshold: f64,
    pub max_edges: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        let p = effconn::explain::LimeParams::default();
        Self {
            n_samples: p.n_samples,
            kernel_width: p.kernel_width,
            ridge: p.ridge,
            roi_mode: p.roi_mode,
            pos_threshold: p.thresholds.0,
            neg_threshold: p.thresholds.1,
            max_edges: p.max_edges,
        }
    }
}

/// Synthetic-cohort generator settings; only `simulate` reads them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n_controls: usize,
    pub n_patients: usize,
    pub n_nodes: usize,
    pub t_samples: usize,
    pub transient: usize,
    pub growth: f64,
    /// Couplings (source, target, strength) present in both groups.
    pub shared: Vec<(usize, usize, f64)>,
    /// Couplings planted in patients only; the group difference.
    pub planted: Vec<(usize, usize, f64)>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n_controls: 10,
            n_patients: 10,
            n_nodes: 6,
            t_samples: 600,
            transient: 200,
            growth: 3.8,
            shared: Vec::new(),
            planted: vec![(0, 1, 0.1)],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsSection,
    #[serde(default)]
    pub reservoir: ReservoirSection,
    #[serde(default)]
    pub rcc: RccSection,
    #[serde(default)]
    pub granger: GrangerSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::argument(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: PipelineConfig = toml::from_str(&text).map_err(|e| {
            Error::argument(format!("config {}: {e}", path.display()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.reservoir.to_core().validate()?;
        self.rcc.to_core().validate()?;
        if !self.rcc.taus.contains(&self.rcc.ec_tau) {
            return Err(Error::argument(format!(
                "ec_tau {} is not on the lag grid {:?}",
                self.rcc.ec_tau, self.rcc.taus
            )));
        }
        if self.granger.order == 0 {
            return Err(Error::argument("granger order must be at least 1"));
        }
        if !(self.features.threshold > 0.0 && self.features.threshold.is_finite()) {
            return Err(Error::argument("feature threshold must be positive"));
        }
        if self.classifier.k_folds < 2 {
            return Err(Error::argument("k_folds must be at least 2"));
        }
        if !(0.0..0.5).contains(&self.classifier.val_fraction) {
            return Err(Error::argument("val_fraction must lie in [0, 0.5)"));
        }
        if self.explain.pos_threshold <= self.explain.neg_threshold {
            return Err(Error::argument(
                "explain pos_threshold must exceed neg_threshold",
            ));
        }
        let s = &self.simulate;
        for &(x, y, b) in s.shared.iter().chain(&s.planted) {
            if x >= s.n_nodes || y >= s.n_nodes || x == y {
                return Err(Error::argument(format!(
                    "coupling ({x}, {y}) is not a directed pair below {}",
                    s.n_nodes
                )));
            }
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::argument(format!(
                    "coupling strength {b} at ({x}, {y}) must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Digest of the whole configuration.
    pub fn digest(&self) -> String {
        digest_of(self)
    }

    /// Digest of the slice that determines EC matrices for `method`.
    /// Granger is deterministic given the order, so the seed only enters
    /// the reservoir path.
    pub fn ec_digest(&self, method: Method) -> String {
        match method {
            Method::Rcc => digest_of(&serde_json::json!({
                "method": "rcc",
                "seed": self.seed,
                "reservoir": self.reservoir,
                "rcc": self.rcc,
            })),
            Method::Granger => digest_of(&serde_json::json!({
                "method": "granger",
                "order": self.granger.order,
            })),
        }
    }

    /// Digest of the slice that determines classifier artifacts.
    pub fn classify_digest(&self, method: Method) -> String {
        digest_of(&serde_json::json!({
            "ec": self.ec_digest(method),
            "features": self.features,
            "classifier": self.classifier,
            "seed": self.seed,
        }))
    }
}

/// Canonical digest: JSON with sorted keys, hashed, first 16 hex chars.
/// Stable under section reordering in the TOML source.
fn digest_of(value: &impl Serialize) -> String {
    let canonical = serde_json::to_value(value)
        .and_then(|v| serde_json::to_string(&v))
        .expect("config serializes");
    let hash = Sha256::digest(canonical.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

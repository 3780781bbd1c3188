use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use stabex_core::cct::{SbsOptions, VerdictOptions};
use stabex_core::direct::Method;
use stabex_core::dynamics::Scheme;
use stabex_core::models::scenario::{ieee39_prepared, FaultScenario, IEEE39_FAULT_BUSES};
use stabex_core::models::{Losses, NetworkData, PreparedNetwork, Smib};

pub const CONFIG_ENV: &str = "STABEX_CONFIG";

/// Run configuration. The same JSON schema serves `--config` and
/// `STABEX_CONFIG`; command-line flags override file values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Builtin name or path to a network JSON document.
    pub system: String,
    pub method: Method,
    pub h: f64,
    /// Composition count; defaults to 9 for boundaries and 6 for CCT.
    pub iterations: Option<usize>,
    /// Defaults to rk2 for boundaries and rk3 for CCT.
    pub scheme: Option<Scheme>,
    pub faults: Option<Vec<usize>>,
    /// Loss treatment for network files given by path.
    pub losses: Losses,
    pub tolerances: Tolerances,
    pub output: PathBuf,
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: "ieee39-lossless".into(),
            method: Method::Bcu,
            h: 0.2,
            iterations: None,
            scheme: None,
            faults: None,
            losses: Losses::Keep,
            tolerances: Tolerances::default(),
            output: PathBuf::from("out"),
            seed: 0,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub sbs: f64,
    pub scan_limit: f64,
    pub verdict: VerdictOptions,
}

impl Default for Tolerances {
    fn default() -> Self {
        let s = SbsOptions::default();
        Self { sbs: s.tol, scan_limit: s.scan_limit, verdict: s.verdict }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("config {}: at '{}': {}", path.display(), e.path(), e.inner()))
    }

    /// `--config` wins over `STABEX_CONFIG`; neither means defaults.
    pub fn load(explicit: Option<&Path>) -> anyhow::Result<Self> {
        if let Some(p) = explicit {
            return Self::from_file(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::from_file(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            bail!("h must be positive");
        }
        if !(self.tolerances.sbs > 0.0) {
            bail!("tolerances.sbs must be positive");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        Ok(())
    }

    pub fn sbs_options(&self) -> SbsOptions {
        SbsOptions {
            tol: self.tolerances.sbs,
            scan_limit: self.tolerances.scan_limit,
            verdict: self.tolerances.verdict,
            ..SbsOptions::default()
        }
    }
}

/// Machine systems that fault scenarios can be built from.
pub enum MachineSource {
    Smib(Smib),
    Network { net: PreparedNetwork, losses: Losses, default_faults: Option<Vec<usize>> },
}

pub fn machine_source(cfg: &RunConfig) -> anyhow::Result<MachineSource> {
    Ok(match cfg.system.as_str() {
        "smib" => MachineSource::Smib(Smib::default()),
        "ieee39-lossless" => MachineSource::Network {
            net: ieee39_prepared(),
            losses: Losses::DropTransfer,
            default_faults: Some(IEEE39_FAULT_BUSES.to_vec()),
        },
        "ieee39-lossy" => MachineSource::Network {
            net: ieee39_prepared(),
            losses: Losses::Keep,
            default_faults: Some(IEEE39_FAULT_BUSES.to_vec()),
        },
        "three-machine" | "benchmark-3d" => {
            bail!("system '{}' has no fault scenarios; use `example {}`", cfg.system, cfg.system)
        }
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("system '{path}' is neither a builtin nor a readable file"))?;
            let net = NetworkData::from_json(&text)?;
            MachineSource::Network { net: PreparedNetwork::new(net)?, losses: cfg.losses, default_faults: None }
        }
    })
}

/// Fault scenarios for the configured system; errors here are usage errors.
pub fn scenarios(cfg: &RunConfig) -> anyhow::Result<Vec<FaultScenario>> {
    match machine_source(cfg)? {
        MachineSource::Smib(p) => Ok(vec![FaultScenario::smib(p)]),
        MachineSource::Network { net, losses, default_faults } => {
            let faults = match (&cfg.faults, default_faults) {
                (Some(f), _) => f.clone(),
                (None, Some(d)) => d,
                (None, None) => bail!("--faults is required for network files"),
            };
            faults
                .iter()
                .map(|&bus| FaultScenario::network_fault(&net, bus, losses).map_err(anyhow::Error::from))
                .collect()
        }
    }
}

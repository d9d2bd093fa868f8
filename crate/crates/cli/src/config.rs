use std::path::{Path, PathBuf};

use migranet_core::equilibrium::{EquilibriumOptions, Scenario, DEFAULT_TOP_SHARE};
use migranet_core::instruments::FirstStageForm;
use migranet_core::synth::{DgpConfig, ParameterSet};
use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 20_240_501;

/// Estimation specifications, one column each of the estimate grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecLabel {
    NoFe,
    DestFe,
    DestYearFe,
    Bct,
    DroughtIv,
    HeatIv,
    Survey,
}

impl SpecLabel {
    pub const ALL: [SpecLabel; 7] = [
        SpecLabel::NoFe,
        SpecLabel::DestFe,
        SpecLabel::DestYearFe,
        SpecLabel::Bct,
        SpecLabel::DroughtIv,
        SpecLabel::HeatIv,
        SpecLabel::Survey,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SpecLabel::NoFe => "no_fe",
            SpecLabel::DestFe => "dest_fe",
            SpecLabel::DestYearFe => "dest_year_fe",
            SpecLabel::Bct => "bct",
            SpecLabel::DroughtIv => "drought_iv",
            SpecLabel::HeatIv => "heat_iv",
            SpecLabel::Survey => "survey",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub dir: PathBuf,
    /// Long-run window for weather percentiles; all years before the
    /// panel when absent.
    #[serde(default)]
    pub weather_window: Option<(i32, i32)>,
}

/// Scalar overrides of the default parameter set.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterOverrides {
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub stay: Option<f64>,
    pub delta_v: Option<f64>,
    pub delta_vs: Option<f64>,
    pub delta_fn: Option<f64>,
    pub delta_vn: Option<f64>,
    pub delta_vsn: Option<f64>,
    pub phi: Option<f64>,
    pub psi: Option<f64>,
    pub theta: Option<f64>,
}

impl ParameterOverrides {
    pub fn apply(&self, p: &mut ParameterSet) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.beta, self.beta);
        set(&mut p.coef.gamma, self.gamma);
        set(&mut p.coef.stay, self.stay);
        set(&mut p.coef.delta_v, self.delta_v);
        set(&mut p.coef.delta_vs, self.delta_vs);
        set(&mut p.coef.delta_fn, self.delta_fn);
        set(&mut p.coef.delta_vn, self.delta_vn);
        set(&mut p.coef.delta_vsn, self.delta_vsn);
        set(&mut p.phi, self.phi);
        set(&mut p.psi, self.psi);
        set(&mut p.theta, self.theta);
    }
}

fn default_specs() -> Vec<SpecLabel> {
    SpecLabel::ALL.to_vec()
}

fn default_n_extra() -> usize {
    10
}

fn default_form() -> FirstStageForm {
    FirstStageForm::Full
}

fn default_respondents() -> usize {
    20_000
}

fn default_preferred() -> SpecLabel {
    SpecLabel::DestFe
}

fn default_scenarios() -> Vec<Scenario> {
    Scenario::ALL.iter().copied().filter(|&s| s != Scenario::Baseline).collect()
}

fn default_top_share() -> f64 {
    DEFAULT_TOP_SHARE
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    inputs: Option<Inputs>,
    #[serde(default)]
    dgp: Option<Value>,
    #[serde(default)]
    parameters: ParameterOverrides,
    #[serde(default = "default_specs")]
    specs: Vec<SpecLabel>,
    #[serde(default = "default_n_extra")]
    n_extra: usize,
    #[serde(default = "default_form")]
    first_stage: FirstStageForm,
    #[serde(default = "default_respondents")]
    survey_respondents: usize,
    #[serde(default = "default_preferred")]
    preferred: SpecLabel,
    #[serde(default)]
    equilibrium: EquilibriumOptions,
    #[serde(default = "default_scenarios")]
    scenarios: Vec<Scenario>,
    #[serde(default = "default_top_share")]
    top_share: f64,
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum Source {
    Inputs(Inputs),
    Dgp(DgpConfig),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub source: Source,
    pub parameters: ParameterOverrides,
    pub specs: Vec<SpecLabel>,
    pub n_extra: usize,
    pub first_stage: FirstStageForm,
    pub survey_respondents: usize,
    /// Specification (with distance-network interactions) behind the
    /// report tables.
    pub preferred: SpecLabel,
    pub equilibrium: EquilibriumOptions,
    pub scenarios: Vec<Scenario>,
    pub top_share: f64,
    pub out: Option<PathBuf>,
    /// Hex SHA-256 of the canonical (key-sorted, compact) document.
    pub hash: String,
}

impl RunConfig {
    pub fn stamp(&self) -> String {
        format!("config_sha256={} seed={}", self.hash, self.seed)
    }

    pub fn load(path: &Path, seed_flag: Option<u64>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, seed_flag)
    }

    pub fn parse(text: &str, seed_flag: Option<u64>) -> CliResult<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| CliError::config(format!("config is not valid JSON: {e}")))?;
        let hash = hex(&Sha256::digest(doc.to_string().as_bytes()));
        let raw: RawConfig = serde_json::from_value(doc).map_err(|e| CliError::config(format!("config: {e}")))?;

        let dgp_seed = match &raw.dgp {
            Some(Value::Object(m)) => match m.get("seed") {
                Some(v) => Some(v.as_u64().ok_or_else(|| CliError::config("dgp.seed must be a non-negative integer"))?),
                None => None,
            },
            Some(_) => return Err(CliError::config("dgp must be an object")),
            None => None,
        };
        let mut seed = match (raw.seed, dgp_seed) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::config(format!("seed {a} conflicts with dgp.seed {b}")));
            }
            (a, b) => a.or(b).unwrap_or(DEFAULT_SEED),
        };
        if let Some(s) = seed_flag {
            seed = s;
        }

        let source = match (raw.inputs, raw.dgp) {
            (Some(_), Some(_)) => return Err(CliError::config("config sets both `inputs` and `dgp`; give exactly one")),
            (None, None) => return Err(CliError::config("config needs one of `inputs` or `dgp`")),
            (Some(i), None) => Source::Inputs(i),
            (None, Some(mut v)) => {
                v.as_object_mut().expect("checked above").insert("seed".into(), Value::from(seed));
                let d: DgpConfig = serde_json::from_value(v).map_err(|e| CliError::config(format!("dgp: {e}")))?;
                d.validate().map_err(|e| CliError::config(format!("dgp: {e}")))?;
                Source::Dgp(d)
            }
        };
        if raw.specs.is_empty() {
            return Err(CliError::config("specs must not be empty"));
        }
        let mut specs = raw.specs;
        specs.sort_unstable();
        specs.dedup();
        if !matches!(raw.preferred, SpecLabel::DestFe | SpecLabel::DroughtIv | SpecLabel::HeatIv) {
            return Err(CliError::config(format!(
                "preferred must be dest_fe, drought_iv or heat_iv, got {}",
                raw.preferred.label()
            )));
        }
        let mut scenarios = raw.scenarios;
        scenarios.sort_unstable();
        scenarios.dedup();
        scenarios.retain(|&s| s != Scenario::Baseline);
        if !(raw.top_share > 0.0 && raw.top_share <= 1.0) {
            return Err(CliError::config(format!("top_share must lie in (0, 1], got {}", raw.top_share)));
        }
        let e = &raw.equilibrium;
        if !(e.damping > 0.0 && e.damping <= 1.0) || !(e.tolerance > 0.0) || e.max_iter == 0 || !(e.labor_floor > 0.0) {
            return Err(CliError::config(
                "equilibrium needs damping in (0, 1], tolerance > 0, max_iter > 0, labor_floor > 0",
            ));
        }
        Ok(RunConfig {
            seed,
            source,
            parameters: raw.parameters,
            specs,
            n_extra: raw.n_extra,
            first_stage: raw.first_stage,
            survey_respondents: raw.survey_respondents,
            preferred: raw.preferred,
            equilibrium: raw.equilibrium,
            scenarios,
            top_share: raw.top_share,
            out: raw.out,
            hash,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

//! Command implementations behind the `dpbarrier` binary. Each command returns
//! its output as a string so callers decide where it goes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use dpbarrier_core::accounting::{
    calibrate_sigma, effective_mu, epsilon_for_mu, ledger_delta, sequence_epsilon, AccountingError,
    CompositionLedger, EpsDelta, GaussianEvent,
};
use dpbarrier_core::privacy::{generate_masks, NoiseCorrectionState};
use dpbarrier_core::protocol::{
    resolve_noise, run_session, Deployment, ProtocolError, RunOptions, Scheduler, SessionConfig,
};
use dpbarrier_core::tensor::MlpModel;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible budget: {0}")]
    Infeasible(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<AccountingError> for CliError {
    fn from(e: AccountingError) -> Self {
        match e {
            AccountingError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            AccountingError::InvalidParameter(_) => CliError::Config(e.to_string()),
            AccountingError::Integration { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e.root() {
            ProtocolError::Config(_) => CliError::Config(e.to_string()),
            ProtocolError::Accounting(AccountingError::Infeasible { .. }) => {
                CliError::Infeasible(e.to_string())
            }
            ProtocolError::Accounting(AccountingError::InvalidParameter(_)) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn load_session_config(path: &Path, seed: Option<u64>) -> Result<SessionConfig, CliError> {
    let mut config = SessionConfig::from_json(&read(path)?)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub sigma_step: f64,
    pub sigma_effective: f64,
}

pub fn cmd_calibrate(
    iterations: u64,
    histogram_rounds: u64,
    sigma_g: f64,
    epsilon: f64,
    delta: f64,
    lambda: f64,
) -> Result<Calibration, CliError> {
    let sigma_step = calibrate_sigma(
        iterations,
        histogram_rounds,
        sigma_g,
        EpsDelta { epsilon, delta },
        lambda,
    )?;
    Ok(Calibration {
        sigma_step,
        sigma_effective: (1.0 - lambda) * sigma_step,
    })
}

/// Input of `account`: the events of a ledger and the points to query.
#[derive(Debug, Clone, Deserialize)]
pub struct AccountQuery {
    pub events: Vec<GaussianEvent>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccountAnswer {
    pub mu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_at_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_at_epsilon: Option<f64>,
}

pub fn cmd_account(query_json: &str) -> Result<AccountAnswer, CliError> {
    let query: AccountQuery = serde_json::from_str(query_json)
        .map_err(|e| CliError::Config(format!("ledger file: {e}")))?;
    if query.delta.is_none() && query.epsilon.is_none() {
        return Err(CliError::Config(
            "ledger file needs a delta or an epsilon to query".into(),
        ));
    }
    let ledger = query
        .events
        .iter()
        .map(|e| GaussianEvent::new(e.sensitivity, e.sigma, e.count))
        .collect::<Result<CompositionLedger, _>>()?;
    let mu = effective_mu(&ledger);
    let epsilon_at_delta = match query.delta {
        Some(d) if !(d > 0.0 && d < 1.0) => {
            return Err(CliError::Config("delta must lie in (0, 1)".into()))
        }
        Some(d) => Some(epsilon_for_mu(d, mu)),
        None => None,
    };
    let delta_at_epsilon = query
        .epsilon
        .map(|e| ledger_delta(e, &ledger))
        .transpose()?;
    Ok(AccountAnswer {
        mu,
        epsilon_at_delta,
        delta_at_epsilon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub session_id: String,
    pub config_digest: String,
    pub scheduler: String,
    pub seed: u64,
    pub stop_reason: String,
    pub iterations_completed: usize,
    /// `null` when no iteration ran or the session was not private.
    pub final_epsilon: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub sigma_effective: f64,
    pub sigma_step: f64,
}

pub const REPORT_FILE: &str = "report.csv";
pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Run a session and write the report, final model and manifest into `out_dir`.
pub fn cmd_train(
    config: &SessionConfig,
    out_dir: &Path,
    scheduler: Scheduler,
) -> Result<RunManifest, CliError> {
    let mut deployment = Deployment::prepare(config)?;
    let options = RunOptions {
        scheduler,
        ..Default::default()
    };
    let outcome = run_session(config, &mut deployment, &options)?;
    let manifest = RunManifest {
        session_id: config.session_id.clone(),
        config_digest: config.digest_hex(),
        scheduler: match scheduler {
            Scheduler::Sequential => "sequential".into(),
            Scheduler::Concurrent => "concurrent".into(),
        },
        seed: config.seed,
        stop_reason: outcome.report.stop_reason.to_string(),
        iterations_completed: outcome.report.records.len(),
        final_epsilon: outcome.report.final_epsilon().filter(|e| e.is_finite()),
        final_accuracy: outcome.report.final_accuracy(),
        sigma_effective: outcome.schedule.effective_sigma,
        sigma_step: outcome.schedule.step_sigma,
    };
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    write(&out_dir.join(REPORT_FILE), &outcome.report.to_csv())?;
    write(
        &out_dir.join(MODEL_FILE),
        &outcome.model.to_checkpoint_json(),
    )?;
    write(&out_dir.join(MANIFEST_FILE), &to_json(&manifest))?;
    Ok(manifest)
}

/// `ε` of `n` consecutive updates for each `λ`, all at the same effective
/// noise `sigma` (so each column uses per-step noise `sigma / (1 - λ)`).
pub fn cmd_seq_eps(
    n_max: u64,
    lambdas: &[f64],
    sigma: f64,
    delta: f64,
) -> Result<String, CliError> {
    if n_max == 0 || lambdas.is_empty() {
        return Err(CliError::Config(
            "need n_max >= 1 and at least one lambda".into(),
        ));
    }
    if !(sigma > 0.0) {
        return Err(CliError::Config("sigma must be > 0".into()));
    }
    let mut out = String::from("n");
    for l in lambdas {
        if !(0.0..1.0).contains(l) {
            return Err(CliError::Config(format!("lambda {l} outside [0, 1)")));
        }
        out.push_str(&format!(",lambda={l}"));
    }
    out.push('\n');
    for n in 1..=n_max {
        out.push_str(&n.to_string());
        for l in lambdas {
            let eps = sequence_epsilon(n, *l, sigma / (1.0 - l), delta)?;
            out.push_str(&format!(",{eps}"));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskDemo {
    pub clip_bound: f64,
    pub sigma_step: f64,
    pub blinding_std: f64,
    pub realized_noise: Vec<f64>,
    pub masks: Vec<Vec<f64>>,
    pub mask_sum: Vec<f64>,
    pub max_abs_sum_error: f64,
}

/// The masks the admin would hand out in the first iteration of `config`.
pub fn cmd_mask_demo(config: &SessionConfig) -> Result<MaskDemo, CliError> {
    config.validate()?;
    let schedule = resolve_noise(config)?;
    let dim = MlpModel::zeros(&config.model.layer_dims)
        .map_err(|e| CliError::Config(e.to_string()))?
        .param_count();
    let clip_bound = config.privacy.clip_bound;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let runtime = |e: dpbarrier_core::privacy::PrivacyError| CliError::Runtime(e.to_string());
    let mut state =
        NoiseCorrectionState::new(config.privacy.lambda, schedule.step_sigma).map_err(runtime)?;
    let noise = state
        .next_effective_noise(dim, clip_bound, &mut rng)
        .map_err(runtime)?;
    let blinding_std = config.privacy.blinding_factor * schedule.step_sigma * clip_bound;
    let set =
        generate_masks(config.num_workers, &noise, blinding_std, &mut rng).map_err(runtime)?;
    let sum = set.sum();
    Ok(MaskDemo {
        clip_bound,
        sigma_step: schedule.step_sigma,
        blinding_std,
        max_abs_sum_error: sum.max_abs_diff(&set.realized_noise),
        realized_noise: set.realized_noise.into_vec(),
        masks: set.masks.into_iter().map(|m| m.into_vec()).collect(),
        mask_sum: sum.into_vec(),
    })
}

/// Where a command's text output goes: a file when `--out` is given, stdout otherwise.
pub fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn render<T: Serialize>(value: &T) -> String {
    to_json(value)
}

use std::collections::{HashMap, VecDeque};
use std::sync::mpsc;
use std::sync::Mutex;

use super::assets::{encode_batch, AssetStore};
use super::components::{
    data_key_id, transport_key_id, Actor, Admin, DataHandler, ModelUpdater, TEST_KEY_ID,
};
use super::crypto::{seal_asset, SymmetricKey};
use super::envelope::{ComponentId, Envelope, MessageKind};
use super::kds::{attest, ComponentKind, Kds, KeyRecord, CODE_VERSION};
use super::plugin::PluginRegistry;
use super::report::TrainingReport;
use super::{ProtocolError, SessionConfig};
use crate::accounting::{calibrate_sigma, CompositionLedger};
use crate::privacy::per_step_sigma;
use crate::tensor::{Batch, MlpModel, ParameterVector};

/// `δ` at which `ε` is reported when the session has no budget.
pub const DEFAULT_REPORT_DELTA: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    /// Noise multiplier of each step after correction, `(1 - λ) · step_sigma`.
    pub effective_sigma: f64,
    pub step_sigma: f64,
}

impl NoiseSchedule {
    pub fn is_private(&self) -> bool {
        self.effective_sigma > 0.0
    }
}

pub fn resolve_noise(config: &SessionConfig) -> Result<NoiseSchedule, ProtocolError> {
    let p = &config.privacy;
    if config.calibrate_noise {
        let budget = config
            .budget
            .as_ref()
            .ok_or_else(|| ProtocolError::Config("calibrate_noise requires a budget".into()))?;
        let n_g = config.clipping_rounds(config.iterations);
        let step_sigma =
            calibrate_sigma(config.iterations, n_g, p.sigma_g, budget.target(), p.lambda)?;
        Ok(NoiseSchedule {
            effective_sigma: (1.0 - p.lambda) * step_sigma,
            step_sigma,
        })
    } else {
        Ok(NoiseSchedule {
            effective_sigma: p.sigma,
            step_sigma: per_step_sigma(p.sigma, p.lambda)?,
        })
    }
}

/// What the data owners and the model owner have set up before a session:
/// sealed assets in untrusted storage and key records in the KDS.
#[derive(Debug, Default)]
pub struct Deployment {
    pub kds: Kds,
    pub store: AssetStore,
}

impl Deployment {
    pub fn prepare(config: &SessionConfig) -> Result<Self, ProtocolError> {
        config.validate()?;
        let shards = config
            .datasets
            .iter()
            .map(|d| d.load())
            .collect::<Result<Vec<_>, _>>()?;
        let test = config.test_set.load()?;
        Self::prepare_with(config, shards, test)
    }

    pub fn prepare_with(
        config: &SessionConfig,
        shards: Vec<Batch>,
        test: Batch,
    ) -> Result<Self, ProtocolError> {
        config.validate()?;
        if shards.len() != config.num_workers {
            return Err(ProtocolError::Config(format!(
                "{} shards for {} workers",
                shards.len(),
                config.num_workers
            )));
        }
        let dims = &config.model.layer_dims;
        let (input, classes) = (dims[0], *dims.last().expect("validated"));
        for (name, b) in shards
            .iter()
            .map(|s| ("worker shard", s))
            .chain([("test set", &test)])
        {
            if b.input_dim() != input {
                return Err(ProtocolError::Config(format!(
                    "{name} has {} features, model expects {input}",
                    b.input_dim()
                )));
            }
            if b.labels().iter().any(|&y| y >= classes) {
                return Err(ProtocolError::Config(format!(
                    "{name} has labels outside 0..{classes}"
                )));
            }
        }
        let mut deployment = Self::default();
        let sid = &config.session_id;
        let handler = attest(ComponentKind::DataHandler, CODE_VERSION, config);
        for (i, shard) in shards.iter().enumerate() {
            let key = SymmetricKey::generate();
            let id = data_key_id(i as u32);
            deployment
                .store
                .put(id.clone(), seal_asset(&encode_batch(shard), &key));
            deployment
                .kds
                .register(KeyRecord::new(id, key, handler, sid.clone()))?;
        }
        let updater = attest(ComponentKind::ModelUpdater, CODE_VERSION, config);
        let key = SymmetricKey::generate();
        deployment
            .store
            .put(TEST_KEY_ID, seal_asset(&encode_batch(&test), &key));
        deployment
            .kds
            .register(KeyRecord::new(TEST_KEY_ID, key, updater, sid.clone()))?;

        let transport = SymmetricKey::generate();
        let admin = attest(ComponentKind::Admin, CODE_VERSION, config);
        let mut parties = vec![(ComponentId::Admin, admin), (ComponentId::Updater, updater)];
        parties.extend((0..config.num_workers as u32).map(|i| (ComponentId::Worker(i), handler)));
        for (id, m) in parties {
            deployment.kds.register(KeyRecord::new(
                transport_key_id(id),
                transport.clone(),
                m,
                sid.clone(),
            ))?;
        }
        Ok(deployment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    #[default]
    Sequential,
    /// One thread per component, connected by channels carrying wire bytes.
    Concurrent,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub scheduler: Scheduler,
    pub plugins: PluginRegistry,
    /// Keep per-iteration internals (model, noise, masks, aggregate) for inspection.
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditEntry {
    pub sender: ComponentId,
    pub recipient: ComponentId,
    pub kind: MessageKind,
    pub bytes: usize,
}

/// Whether the protocol permits `kind` from `sender` to `recipient`.
pub fn channel_allows(sender: ComponentId, recipient: ComponentId, kind: MessageKind) -> bool {
    use ComponentId::*;
    use MessageKind::*;
    match (sender, recipient) {
        (Worker(_), Updater) => kind == MaskedGradient,
        (Worker(_), Admin) => matches!(kind, Register | Histogram),
        (Admin, Worker(_)) => matches!(kind, IterationStart | ClipBound | Mask | Stop),
        (Admin, Updater) => kind == Stop,
        (Updater, Admin) => matches!(kind, Register | UpdateResult),
        _ => false,
    }
}

pub fn audit_violations(log: &[AuditEntry]) -> Vec<String> {
    log.iter()
        .filter(|e| !channel_allows(e.sender, e.recipient, e.kind))
        .map(|e| format!("{:?} from {} to {}", e.kind, e.sender, e.recipient))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iteration: u64,
    pub params_before: ParameterVector,
    pub clip_bound: f64,
    pub effective_noise: ParameterVector,
    pub masks: Vec<ParameterVector>,
    pub aggregate: ParameterVector,
}

#[derive(Debug)]
pub struct SessionOutcome {
    pub report: TrainingReport,
    pub model: MlpModel,
    pub ledger: CompositionLedger,
    pub schedule: NoiseSchedule,
    pub audit: Vec<AuditEntry>,
    pub trace: Vec<IterationTrace>,
}

fn wrap(actor: &dyn Actor, e: ProtocolError) -> ProtocolError {
    ProtocolError::Component {
        component: actor.id(),
        iteration: actor.iteration(),
        source: Box::new(e),
    }
}

fn audit_entry(env: &Envelope, bytes: usize) -> AuditEntry {
    AuditEntry {
        sender: env.sender,
        recipient: env.recipient,
        kind: env.kind,
        bytes,
    }
}

fn run_sequential(
    actors: &mut [&mut dyn Actor],
    audit: &mut Vec<AuditEntry>,
) -> Result<(), ProtocolError> {
    let index: HashMap<ComponentId, usize> = actors
        .iter()
        .enumerate()
        .map(|(i, a)| (a.id(), i))
        .collect();
    let mut queue: VecDeque<Vec<u8>> = VecDeque::new();
    let mut post = |envs: Vec<Envelope>, queue: &mut VecDeque<Vec<u8>>| {
        for env in envs {
            let bytes = env.to_bytes();
            audit.push(audit_entry(&env, bytes.len()));
            queue.push_back(bytes);
        }
    };
    for actor in actors.iter_mut() {
        let out = actor.start().map_err(|e| wrap(&**actor, e))?;
        post(out, &mut queue);
    }
    while let Some(bytes) = queue.pop_front() {
        let env = Envelope::from_bytes(&bytes)?;
        let target = *index
            .get(&env.recipient)
            .ok_or_else(|| ProtocolError::Stalled(format!("no component {}", env.recipient)))?;
        let actor = &mut actors[target];
        if actor.finished() {
            continue;
        }
        let out = actor.handle(&env).map_err(|e| wrap(&**actor, e))?;
        post(out, &mut queue);
    }
    if let Some(stuck) = actors.iter().find(|a| !a.finished()) {
        return Err(ProtocolError::Stalled(format!(
            "{} stopped receiving messages during iteration {}",
            stuck.id(),
            stuck.iteration()
        )));
    }
    Ok(())
}

fn run_concurrent(
    actors: &mut [&mut dyn Actor],
    audit: &mut Vec<AuditEntry>,
) -> Result<(), ProtocolError> {
    let shared = Mutex::new(Vec::new());
    let mut senders = HashMap::new();
    let mut receivers = Vec::new();
    for a in actors.iter() {
        let (tx, rx) = mpsc::channel::<Option<Vec<u8>>>();
        senders.insert(a.id(), tx);
        receivers.push(rx);
    }
    let results: Vec<Result<(), ProtocolError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = actors
            .iter_mut()
            .zip(receivers)
            .map(|(actor, rx)| {
                let senders = senders.clone();
                let shared = &shared;
                scope.spawn(move || {
                    let post = |envs: Vec<Envelope>| -> Result<(), ProtocolError> {
                        for env in envs {
                            let bytes = env.to_bytes();
                            shared
                                .lock()
                                .expect("audit lock")
                                .push(audit_entry(&env, bytes.len()));
                            let tx = senders.get(&env.recipient).ok_or_else(|| {
                                ProtocolError::Stalled(format!("no component {}", env.recipient))
                            })?;
                            // A peer that already finished has dropped its receiver.
                            let _ = tx.send(Some(bytes));
                        }
                        Ok(())
                    };
                    let mut run = || -> Result<(), ProtocolError> {
                        post(actor.start().map_err(|e| wrap(&**actor, e))?)?;
                        while !actor.finished() {
                            match rx.recv() {
                                Ok(Some(bytes)) => {
                                    let env = Envelope::from_bytes(&bytes)?;
                                    post(actor.handle(&env).map_err(|e| wrap(&**actor, e))?)?;
                                }
                                _ => return Err(ProtocolError::Aborted),
                            }
                        }
                        Ok(())
                    };
                    let result = run();
                    if result.is_err() {
                        for tx in senders.values() {
                            let _ = tx.send(None);
                        }
                    }
                    result
                })
            })
            .collect();
        drop(senders);
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(ProtocolError::Aborted)))
            .collect()
    });
    audit.extend(shared.into_inner().expect("audit lock"));
    let mut first_abort = None;
    for r in results {
        match r {
            Err(ProtocolError::Aborted) => first_abort = Some(ProtocolError::Aborted),
            Err(e) => return Err(e),
            Ok(()) => {}
        }
    }
    first_abort.map_or(Ok(()), Err)
}

/// Launch every component against `deployment`, run the session to a stop
/// condition, and collect the report.
pub fn run_session(
    config: &SessionConfig,
    deployment: &mut Deployment,
    options: &RunOptions,
) -> Result<SessionOutcome, ProtocolError> {
    config.validate()?;
    let mut admin = Admin::launch(config, &mut deployment.kds, options.trace)?;
    let mut updater = ModelUpdater::launch(
        config,
        &mut deployment.kds,
        &deployment.store,
        options.trace,
    )?;
    let mut workers = (0..config.num_workers as u32)
        .map(|i| {
            DataHandler::launch(
                i,
                config,
                &mut deployment.kds,
                &deployment.store,
                options.plugins.factory(i),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut audit = Vec::new();
    {
        let mut actors: Vec<&mut dyn Actor> = vec![&mut admin, &mut updater];
        actors.extend(workers.iter_mut().map(|w| w as &mut dyn Actor));
        match options.scheduler {
            Scheduler::Sequential => run_sequential(&mut actors, &mut audit)?,
            Scheduler::Concurrent => run_concurrent(&mut actors, &mut audit)?,
        }
    }

    let stop_reason = admin
        .stop_reason()
        .ok_or_else(|| ProtocolError::Stalled("admin finished without a stop reason".into()))?;
    let trace = admin
        .take_trace()
        .into_iter()
        .zip(updater.take_aggregates())
        .map(|(a, aggregate)| IterationTrace {
            iteration: a.iteration,
            params_before: a.params_before,
            clip_bound: a.clip_bound,
            effective_noise: a.effective_noise,
            masks: a.masks,
            aggregate,
        })
        .collect();
    Ok(SessionOutcome {
        report: TrainingReport {
            records: admin.records().to_vec(),
            stop_reason,
        },
        model: updater.model().clone(),
        ledger: admin.ledger().clone(),
        schedule: admin.schedule(),
        audit,
        trace,
    })
}

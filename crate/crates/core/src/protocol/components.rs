//! The three trusted components as message-driven state machines.
//!
//! Each component attests, fetches its keys from the KDS and opens its sealed
//! assets when launched. After that it only reacts to envelopes.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::assets::{decode_batch, AssetStore};
use super::crypto::open_asset;
use super::envelope::{ComponentId, Envelope, SecureChannel};
use super::kds::{attest, ComponentKind, Kds, CODE_VERSION};
use super::message::{Message, StopReason};
use super::plugin::{run_plugin, PluginFactory};
use super::report::IterationRecord;
use super::session::{resolve_noise, NoiseSchedule, DEFAULT_REPORT_DELTA};
use super::{ProtocolError, SessionConfig};
use crate::accounting::{
    budget_spent, effective_mu, epsilon_for_mu, CompositionLedger, GaussianEvent,
    HISTOGRAM_SENSITIVITY,
};
use crate::privacy::{
    aggregate_histograms, build_norm_histogram, clip_and_sum, generate_masks, select_clip_bound,
    NoiseCorrectionState, NormHistogram,
};
use crate::tensor::{Batch, MlpModel, ParameterVector, PerExampleGrads};

pub trait Actor: Send {
    fn id(&self) -> ComponentId;
    /// Iteration the component is working on, for error reports.
    fn iteration(&self) -> u64;
    fn start(&mut self) -> Result<Vec<Envelope>, ProtocolError>;
    fn handle(&mut self, envelope: &Envelope) -> Result<Vec<Envelope>, ProtocolError>;
    fn finished(&self) -> bool;
}

pub fn data_key_id(worker: u32) -> String {
    format!("data/worker-{worker}")
}

pub const TEST_KEY_ID: &str = "test/updater";

pub fn transport_key_id(component: ComponentId) -> String {
    format!("transport/{}", component.key_suffix())
}

fn fetch_key(
    kds: &mut Kds,
    key_id: &str,
    kind: ComponentKind,
    config: &SessionConfig,
) -> Result<super::crypto::SymmetricKey, ProtocolError> {
    kds.request(key_id, &attest(kind, CODE_VERSION, config))
        .map_err(|reason| ProtocolError::KeyDenied {
            key_id: key_id.to_string(),
            reason,
        })
}

fn sync(iteration: u64, message: impl Into<String>) -> ProtocolError {
    ProtocolError::Sync {
        iteration,
        message: message.into(),
    }
}

/// Contiguous batch of `batch_size` examples for `iteration`, wrapping around the shard.
pub fn batch_indices(shard_len: usize, batch_size: usize, iteration: u64) -> Vec<usize> {
    let start = ((iteration - 1) as u128 * batch_size as u128 % shard_len as u128) as usize;
    (0..batch_size).map(|k| (start + k) % shard_len).collect()
}

/// Clip each per-example gradient to `clip_bound`, sum, and add the mask.
pub fn masked_gradient(
    grads: &PerExampleGrads,
    clip_bound: f64,
    mask: &ParameterVector,
) -> Result<ParameterVector, ProtocolError> {
    Ok(clip_and_sum(grads, clip_bound)?.add(mask)?)
}

/// One data-handler step in a single call: plugin, validation, clip, sum, mask.
pub fn data_handler_step(
    worker: u32,
    factory: PluginFactory,
    model: &MlpModel,
    batch: &Batch,
    mask: &ParameterVector,
    clip_bound: f64,
) -> Result<ParameterVector, ProtocolError> {
    let grads = run_plugin(worker, factory, model, batch)?;
    masked_gradient(&grads, clip_bound, mask)
}

/// Sum one masked payload per worker (in worker order) and take the SGD step.
pub fn model_update_step(
    model: &MlpModel,
    payloads: &[(u32, ParameterVector)],
    num_workers: usize,
    learning_rate: f64,
    batch_total: usize,
    iteration: u64,
) -> Result<(MlpModel, ParameterVector), ProtocolError> {
    let mut by_worker: BTreeMap<u32, &ParameterVector> = BTreeMap::new();
    for (w, p) in payloads {
        if *w as usize >= num_workers {
            return Err(sync(iteration, format!("payload from unknown worker {w}")));
        }
        if by_worker.insert(*w, p).is_some() {
            return Err(sync(
                iteration,
                format!("duplicate payload from worker {w}"),
            ));
        }
    }
    if by_worker.len() != num_workers {
        let missing: Vec<u32> = (0..num_workers as u32)
            .filter(|w| !by_worker.contains_key(w))
            .collect();
        return Err(sync(
            iteration,
            format!("missing payloads from workers {missing:?}"),
        ));
    }
    let aggregate = ParameterVector::sum(by_worker.values().copied())?;
    let updated = model.apply_update(&aggregate, learning_rate, batch_total)?;
    Ok((updated, aggregate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdminTrace {
    pub iteration: u64,
    pub params_before: ParameterVector,
    pub clip_bound: f64,
    pub effective_noise: ParameterVector,
    pub masks: Vec<ParameterVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Registering,
    Histograms,
    Update,
    Done,
}

pub struct Admin {
    config: SessionConfig,
    channel: SecureChannel,
    rng: ChaCha20Rng,
    noise: NoiseCorrectionState,
    schedule: NoiseSchedule,
    ledger: CompositionLedger,
    params: ParameterVector,
    clip_bound: f64,
    iteration: u64,
    phase: Phase,
    registered: BTreeSet<ComponentId>,
    histograms: BTreeMap<u32, NormHistogram>,
    pending_events: Vec<GaussianEvent>,
    records: Vec<IterationRecord>,
    stop: Option<StopReason>,
    trace: Option<Vec<AdminTrace>>,
}

impl Admin {
    pub fn launch(
        config: &SessionConfig,
        kds: &mut Kds,
        trace: bool,
    ) -> Result<Self, ProtocolError> {
        let key = fetch_key(
            kds,
            &transport_key_id(ComponentId::Admin),
            ComponentKind::Admin,
            config,
        )?;
        let schedule = resolve_noise(config)?;
        let model = MlpModel::init(&config.model.layer_dims, config.model.init_seed)?;
        Ok(Self {
            config: config.clone(),
            channel: SecureChannel::new(ComponentId::Admin, key),
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            noise: NoiseCorrectionState::new(config.privacy.lambda, schedule.step_sigma)?,
            schedule,
            ledger: CompositionLedger::new(),
            params: model.flatten(),
            clip_bound: config.privacy.clip_bound,
            iteration: 0,
            phase: Phase::Registering,
            registered: BTreeSet::new(),
            histograms: BTreeMap::new(),
            pending_events: Vec::new(),
            records: Vec::new(),
            stop: None,
            trace: trace.then(Vec::new),
        })
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn ledger(&self) -> &CompositionLedger {
        &self.ledger
    }

    pub fn schedule(&self) -> NoiseSchedule {
        self.schedule
    }

    pub fn take_trace(&mut self) -> Vec<AdminTrace> {
        self.trace.take().unwrap_or_default()
    }

    fn workers(&self) -> impl Iterator<Item = ComponentId> {
        (0..self.config.num_workers as u32).map(ComponentId::Worker)
    }

    /// Accounting events that running iteration `t` would add.
    pub fn iteration_events(&self, t: u64) -> Result<Vec<GaussianEvent>, ProtocolError> {
        let mut events = vec![GaussianEvent::new(1.0, self.schedule.effective_sigma, 1)?];
        if self.config.is_clipping_round(t) {
            events.push(GaussianEvent::new(
                HISTOGRAM_SENSITIVITY,
                self.config.privacy.sigma_g,
                1,
            )?);
        }
        Ok(events)
    }

    fn would_exceed(&self, t: u64) -> Result<bool, ProtocolError> {
        let Some(budget) = &self.config.budget else {
            return Ok(false);
        };
        if !self.schedule.is_private() {
            return Ok(true);
        }
        let events = self.iteration_events(t)?;
        Ok(budget_spent(&self.ledger.merged_with(&events), budget).1)
    }

    fn current_epsilon(&self) -> f64 {
        if !self.schedule.is_private() {
            return f64::INFINITY;
        }
        match &self.config.budget {
            Some(b) => budget_spent(&self.ledger, b).0,
            None => epsilon_for_mu(DEFAULT_REPORT_DELTA, effective_mu(&self.ledger)),
        }
    }

    fn stop_session(&mut self, reason: StopReason) -> Vec<Envelope> {
        self.stop = Some(reason);
        self.phase = Phase::Done;
        let msg = Message::Stop { reason };
        let mut out: Vec<Envelope> = self
            .workers()
            .collect::<Vec<_>>()
            .into_iter()
            .map(|w| self.channel.seal(w, &msg))
            .collect();
        out.push(self.channel.seal(ComponentId::Updater, &msg));
        out
    }

    fn begin_iteration(&mut self) -> Result<Vec<Envelope>, ProtocolError> {
        let t = self.iteration + 1;
        if t > self.config.stop.max_iterations {
            return Ok(self.stop_session(StopReason::MaxIterations));
        }
        if self.would_exceed(t)? {
            return Ok(self.stop_session(StopReason::BudgetExhausted));
        }
        self.iteration = t;
        self.pending_events = if self.schedule.is_private() {
            self.iteration_events(t)?
        } else {
            Vec::new()
        };
        let clipping_round = self.config.is_clipping_round(t);
        let msg = Message::IterationStart {
            iteration: t,
            clipping_round,
            params: self.params.as_slice().to_vec(),
        };
        let workers: Vec<ComponentId> = self.workers().collect();
        let mut out: Vec<Envelope> = workers
            .iter()
            .map(|w| self.channel.seal(*w, &msg))
            .collect();
        if clipping_round {
            self.histograms.clear();
            self.phase = Phase::Histograms;
        } else {
            out.extend(self.send_masks()?);
        }
        Ok(out)
    }

    fn send_masks(&mut self) -> Result<Vec<Envelope>, ProtocolError> {
        let dim = self.params.dim();
        let noise = self
            .noise
            .next_effective_noise(dim, self.clip_bound, &mut self.rng)?;
        let blinding =
            self.config.privacy.blinding_factor * self.schedule.step_sigma * self.clip_bound;
        let masks = generate_masks(self.config.num_workers, &noise, blinding, &mut self.rng)?;
        if let Some(trace) = &mut self.trace {
            trace.push(AdminTrace {
                iteration: self.iteration,
                params_before: self.params.clone(),
                clip_bound: self.clip_bound,
                effective_noise: noise,
                masks: masks.masks.clone(),
            });
        }
        self.phase = Phase::Update;
        let t = self.iteration;
        Ok(masks
            .masks
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                self.channel.seal(
                    ComponentId::Worker(i as u32),
                    &Message::Mask {
                        iteration: t,
                        mask: m.into_vec(),
                    },
                )
            })
            .collect())
    }

    fn on_histogram(
        &mut self,
        worker: u32,
        hist: NormHistogram,
    ) -> Result<Vec<Envelope>, ProtocolError> {
        if self.histograms.insert(worker, hist).is_some() {
            return Err(sync(
                self.iteration,
                format!("duplicate histogram from worker {worker}"),
            ));
        }
        if self.histograms.len() < self.config.num_workers {
            return Ok(Vec::new());
        }
        let ordered: Vec<NormHistogram> =
            std::mem::take(&mut self.histograms).into_values().collect();
        let noisy = aggregate_histograms(&ordered, self.config.privacy.sigma_g, &mut self.rng)?;
        self.clip_bound = select_clip_bound(&noisy, self.config.privacy.target_unclipped_fraction);
        let msg = Message::ClipBound {
            iteration: self.iteration,
            bound: self.clip_bound,
        };
        let workers: Vec<ComponentId> = self.workers().collect();
        let mut out: Vec<Envelope> = workers
            .iter()
            .map(|w| self.channel.seal(*w, &msg))
            .collect();
        out.extend(self.send_masks()?);
        Ok(out)
    }

    fn on_update(
        &mut self,
        params: Vec<f64>,
        loss: f64,
        accuracy: f64,
    ) -> Result<Vec<Envelope>, ProtocolError> {
        let params = ParameterVector::new(params)?;
        if params.dim() != self.params.dim() {
            return Err(sync(
                self.iteration,
                "updated model has the wrong dimension",
            ));
        }
        self.params = params;
        for e in std::mem::take(&mut self.pending_events) {
            self.ledger.merge(e);
        }
        self.records.push(IterationRecord {
            iteration: self.iteration,
            loss,
            accuracy,
            clip_bound: self.clip_bound,
            epsilon: self.current_epsilon(),
        });
        if let Some(target) = self.config.stop.target_accuracy {
            if accuracy >= target {
                return Ok(self.stop_session(StopReason::TargetAccuracy));
            }
        }
        self.begin_iteration()
    }
}

impl Actor for Admin {
    fn id(&self) -> ComponentId {
        ComponentId::Admin
    }

    fn iteration(&self) -> u64 {
        self.iteration
    }

    fn start(&mut self) -> Result<Vec<Envelope>, ProtocolError> {
        Ok(Vec::new())
    }

    fn handle(&mut self, envelope: &Envelope) -> Result<Vec<Envelope>, ProtocolError> {
        let msg = self.channel.open(envelope)?;
        let from = envelope.sender;
        match (self.phase, msg) {
            (Phase::Registering, Message::Register { .. }) => {
                if from == ComponentId::Admin || !self.registered.insert(from) {
                    return Err(sync(0, format!("unexpected registration from {from}")));
                }
                if self.registered.len() == self.config.num_workers + 1 {
                    self.begin_iteration()
                } else {
                    Ok(Vec::new())
                }
            }
            (
                Phase::Histograms,
                Message::Histogram {
                    iteration,
                    counts,
                    total,
                },
            ) => {
                let ComponentId::Worker(w) = from else {
                    return Err(sync(iteration, format!("histogram from {from}")));
                };
                if iteration != self.iteration {
                    return Err(sync(
                        self.iteration,
                        format!("histogram for iteration {iteration}"),
                    ));
                }
                let hist = NormHistogram {
                    bin_edges: self.config.privacy.bin_edges_or_default(),
                    counts,
                    total: total as usize,
                };
                self.on_histogram(w, hist)
            }
            (
                Phase::Update,
                Message::UpdateResult {
                    iteration,
                    params,
                    loss,
                    accuracy,
                },
            ) if from == ComponentId::Updater => {
                if iteration != self.iteration {
                    return Err(sync(
                        self.iteration,
                        format!("update result for iteration {iteration}"),
                    ));
                }
                self.on_update(params, loss, accuracy)
            }
            (phase, msg) => Err(sync(
                self.iteration,
                format!(
                    "admin in phase {phase:?} cannot accept {:?} from {from}",
                    msg.kind()
                ),
            )),
        }
    }

    fn finished(&self) -> bool {
        self.phase == Phase::Done
    }
}

pub struct DataHandler {
    index: u32,
    config: SessionConfig,
    channel: SecureChannel,
    shard: Batch,
    factory: PluginFactory,
    bin_edges: Vec<f64>,
    clip_bound: f64,
    iteration: u64,
    pending: Option<(MlpModel, PerExampleGrads)>,
    done: bool,
}

impl DataHandler {
    pub fn launch(
        index: u32,
        config: &SessionConfig,
        kds: &mut Kds,
        store: &AssetStore,
        factory: PluginFactory,
    ) -> Result<Self, ProtocolError> {
        let me = ComponentId::Worker(index);
        let kind = ComponentKind::DataHandler;
        let data_key = fetch_key(kds, &data_key_id(index), kind, config)?;
        let transport = fetch_key(kds, &transport_key_id(me), kind, config)?;
        let shard = decode_batch(&open_asset(store.get(&data_key_id(index))?, &data_key)?)?;
        if shard.len() < config.batch_size {
            return Err(ProtocolError::Config(format!(
                "worker {index} holds {} examples, fewer than batch_size {}",
                shard.len(),
                config.batch_size
            )));
        }
        Ok(Self {
            index,
            config: config.clone(),
            channel: SecureChannel::new(me, transport),
            shard,
            factory,
            bin_edges: config.privacy.bin_edges_or_default(),
            clip_bound: config.privacy.clip_bound,
            iteration: 0,
            pending: None,
            done: false,
        })
    }

    pub fn shard(&self) -> &Batch {
        &self.shard
    }
}

impl Actor for DataHandler {
    fn id(&self) -> ComponentId {
        ComponentId::Worker(self.index)
    }

    fn iteration(&self) -> u64 {
        self.iteration
    }

    fn start(&mut self) -> Result<Vec<Envelope>, ProtocolError> {
        let msg = Message::Register {
            examples: self.shard.len() as u64,
        };
        Ok(vec![self.channel.seal(ComponentId::Admin, &msg)])
    }

    fn handle(&mut self, envelope: &Envelope) -> Result<Vec<Envelope>, ProtocolError> {
        if envelope.sender != ComponentId::Admin {
            return Err(sync(
                self.iteration,
                format!("worker got a message from {}", envelope.sender),
            ));
        }
        match self.channel.open(envelope)? {
            Message::IterationStart {
                iteration,
                clipping_round,
                params,
            } => {
                if iteration != self.iteration + 1 || self.pending.is_some() {
                    return Err(sync(
                        self.iteration,
                        format!("unexpected start of iteration {iteration}"),
                    ));
                }
                self.iteration = iteration;
                let params = ParameterVector::new(params)?;
                let model = MlpModel::unflatten(&self.config.model.layer_dims, &params)?;
                let indices = batch_indices(self.shard.len(), self.config.batch_size, iteration);
                let batch = self.shard.select(&indices)?;
                let grads = run_plugin(self.index, self.factory, &model, &batch)?;
                let mut out = Vec::new();
                if clipping_round {
                    let h = build_norm_histogram(&grads, &self.bin_edges)?;
                    let msg = Message::Histogram {
                        iteration,
                        counts: h.counts,
                        total: h.total as u64,
                    };
                    out.push(self.channel.seal(ComponentId::Admin, &msg));
                }
                self.pending = Some((model, grads));
                Ok(out)
            }
            Message::ClipBound { iteration, bound } => {
                if iteration != self.iteration || !(bound > 0.0) || !bound.is_finite() {
                    return Err(sync(
                        self.iteration,
                        format!("bad clip bound {bound} for {iteration}"),
                    ));
                }
                self.clip_bound = bound;
                Ok(Vec::new())
            }
            Message::Mask { iteration, mask } => {
                let Some((_, grads)) = self.pending.take().filter(|_| iteration == self.iteration)
                else {
                    return Err(sync(
                        self.iteration,
                        format!("mask for iteration {iteration} out of turn"),
                    ));
                };
                let mask = ParameterVector::new(mask)?;
                let payload = masked_gradient(&grads, self.clip_bound, &mask)?;
                let msg = Message::MaskedGradient {
                    iteration,
                    worker: self.index,
                    payload: payload.into_vec(),
                };
                Ok(vec![self.channel.seal(ComponentId::Updater, &msg)])
            }
            Message::Stop { .. } => {
                self.done = true;
                Ok(Vec::new())
            }
            other => Err(sync(
                self.iteration,
                format!("worker cannot accept {:?}", other.kind()),
            )),
        }
    }

    fn finished(&self) -> bool {
        self.done
    }
}

pub struct ModelUpdater {
    config: SessionConfig,
    channel: SecureChannel,
    model: MlpModel,
    test_set: Batch,
    completed: u64,
    payloads: Vec<(u32, ParameterVector)>,
    last_eval: (f64, f64),
    aggregates: Option<Vec<ParameterVector>>,
    done: bool,
}

impl ModelUpdater {
    pub fn launch(
        config: &SessionConfig,
        kds: &mut Kds,
        store: &AssetStore,
        trace: bool,
    ) -> Result<Self, ProtocolError> {
        let kind = ComponentKind::ModelUpdater;
        let test_key = fetch_key(kds, TEST_KEY_ID, kind, config)?;
        let transport = fetch_key(kds, &transport_key_id(ComponentId::Updater), kind, config)?;
        let test_set = decode_batch(&open_asset(store.get(TEST_KEY_ID)?, &test_key)?)?;
        let model = MlpModel::init(&config.model.layer_dims, config.model.init_seed)?;
        if test_set.input_dim() != model.input_dim() {
            return Err(ProtocolError::Config(format!(
                "test set has {} features, model expects {}",
                test_set.input_dim(),
                model.input_dim()
            )));
        }
        Ok(Self {
            config: config.clone(),
            channel: SecureChannel::new(ComponentId::Updater, transport),
            model,
            test_set,
            completed: 0,
            payloads: Vec::new(),
            last_eval: (f64::NAN, f64::NAN),
            aggregates: trace.then(Vec::new),
            done: false,
        })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn take_aggregates(&mut self) -> Vec<ParameterVector> {
        self.aggregates.take().unwrap_or_default()
    }
}

impl Actor for ModelUpdater {
    fn id(&self) -> ComponentId {
        ComponentId::Updater
    }

    fn iteration(&self) -> u64 {
        self.completed + 1
    }

    fn start(&mut self) -> Result<Vec<Envelope>, ProtocolError> {
        let msg = Message::Register {
            examples: self.test_set.len() as u64,
        };
        Ok(vec![self.channel.seal(ComponentId::Admin, &msg)])
    }

    fn handle(&mut self, envelope: &Envelope) -> Result<Vec<Envelope>, ProtocolError> {
        let t = self.completed + 1;
        match self.channel.open(envelope)? {
            Message::MaskedGradient {
                iteration,
                worker,
                payload,
            } => {
                if envelope.sender != ComponentId::Worker(worker) {
                    return Err(sync(
                        t,
                        format!("payload for worker {worker} sent by {}", envelope.sender),
                    ));
                }
                if iteration != t {
                    return Err(sync(
                        t,
                        format!("payload from worker {worker} for iteration {iteration}"),
                    ));
                }
                if self.payloads.iter().any(|(w, _)| *w == worker) {
                    return Err(sync(t, format!("duplicate payload from worker {worker}")));
                }
                self.payloads.push((worker, ParameterVector::new(payload)?));
                if self.payloads.len() < self.config.num_workers {
                    return Ok(Vec::new());
                }
                let payloads = std::mem::take(&mut self.payloads);
                let (model, aggregate) = model_update_step(
                    &self.model,
                    &payloads,
                    self.config.num_workers,
                    self.config.learning_rate,
                    self.config.num_workers * self.config.batch_size,
                    t,
                )?;
                self.model = model;
                if let Some(a) = &mut self.aggregates {
                    a.push(aggregate);
                }
                if t == 1 || t.is_multiple_of(self.config.eval_every) {
                    self.last_eval = self.model.evaluate(&self.test_set)?;
                }
                self.completed = t;
                let msg = Message::UpdateResult {
                    iteration: t,
                    params: self.model.flatten().into_vec(),
                    loss: self.last_eval.0,
                    accuracy: self.last_eval.1,
                };
                Ok(vec![self.channel.seal(ComponentId::Admin, &msg)])
            }
            Message::Stop { .. } if envelope.sender == ComponentId::Admin => {
                self.done = true;
                Ok(Vec::new())
            }
            other => Err(sync(
                t,
                format!(
                    "updater cannot accept {:?} from {}",
                    other.kind(),
                    envelope.sender
                ),
            )),
        }
    }

    fn finished(&self) -> bool {
        self.done
    }
}

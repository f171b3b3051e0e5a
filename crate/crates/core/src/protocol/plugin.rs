//! The narrow interface through which user gradient code runs inside a data handler.
//!
//! A plugin sees the current model, the batch and a scratch area. It gets a
//! fresh instance and a fresh scratch area every iteration, so nothing it
//! computes can survive between iterations, and the host validates its output
//! before anything leaves the data handler.

use std::collections::BTreeMap;

use super::ProtocolError;
use crate::tensor::{Batch, MlpModel, PerExampleGrads};

/// Per-iteration working memory handed to a plugin.
#[derive(Debug, Default)]
pub struct Scratch {
    slots: BTreeMap<String, Vec<f64>>,
}

impl Scratch {
    pub fn put(&mut self, name: &str, values: Vec<f64>) {
        self.slots.insert(name.to_string(), values);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.slots.get(name).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

pub trait GradientPlugin {
    fn per_example_gradients(
        &mut self,
        model: &MlpModel,
        batch: &Batch,
        scratch: &mut Scratch,
    ) -> Result<PerExampleGrads, String>;
}

pub type PluginFactory = fn() -> Box<dyn GradientPlugin>;

/// Exact per-example backpropagation.
#[derive(Debug, Default)]
pub struct BackpropPlugin;

impl GradientPlugin for BackpropPlugin {
    fn per_example_gradients(
        &mut self,
        model: &MlpModel,
        batch: &Batch,
        _scratch: &mut Scratch,
    ) -> Result<PerExampleGrads, String> {
        model
            .loss_and_grad_per_example(batch)
            .map(|(_, grads)| grads)
            .map_err(|e| e.to_string())
    }
}

pub fn backprop_factory() -> Box<dyn GradientPlugin> {
    Box::new(BackpropPlugin)
}

/// Which factory each worker uses; unset workers fall back to backprop.
#[derive(Debug, Clone, Default)]
pub struct PluginRegistry {
    factories: BTreeMap<u32, PluginFactory>,
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, worker: u32, factory: PluginFactory) {
        self.factories.insert(worker, factory);
    }

    pub fn factory(&self, worker: u32) -> PluginFactory {
        self.factories
            .get(&worker)
            .copied()
            .unwrap_or(backprop_factory)
    }
}

/// Run one plugin invocation and check its output against the model and batch.
pub fn run_plugin(
    worker: u32,
    factory: PluginFactory,
    model: &MlpModel,
    batch: &Batch,
) -> Result<PerExampleGrads, ProtocolError> {
    let violation = |message: String| ProtocolError::PluginViolation { worker, message };
    let mut plugin = factory();
    let mut scratch = Scratch::default();
    let grads = plugin
        .per_example_gradients(model, batch, &mut scratch)
        .map_err(|e| violation(format!("plugin failed: {e}")))?;
    if grads.len() != batch.len() {
        return Err(violation(format!(
            "returned {} gradients for a batch of {}",
            grads.len(),
            batch.len()
        )));
    }
    if grads.dim() != model.param_count() {
        return Err(violation(format!(
            "gradient dim {} but model has {} parameters",
            grads.dim(),
            model.param_count()
        )));
    }
    if grads
        .grads()
        .iter()
        .any(|g| g.as_slice().iter().any(|x| !x.is_finite()))
    {
        return Err(violation("non-finite gradient entry".into()));
    }
    Ok(grads)
}

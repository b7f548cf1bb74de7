//! Name → factory registries for the interchangeable strategies (fuel
//! estimators, length predictors, allocation policies).

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::gauge::{GaugeModel, RunOptions};
use crate::kv_alloc::PredictiveParams;

/// Everything a factory may need to build a strategy.
#[derive(Debug, Clone)]
pub struct StrategyContext {
    /// Lengths of the training split, for the static baselines.
    pub train_lengths: Vec<usize>,
    /// Directory holding `<method>_seed<seed>.fgnn` checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    pub seed: u64,
    pub run: RunOptions,
    pub alloc: PredictiveParams,
    /// Checkpoint-backed method the predictive allocation policy delegates to.
    pub predictor_method: String,
}

impl Default for StrategyContext {
    fn default() -> Self {
        Self {
            train_lengths: Vec::new(),
            checkpoint_dir: None,
            seed: 0,
            run: RunOptions::default(),
            alloc: PredictiveParams::default(),
            predictor_method: "gauge".to_owned(),
        }
    }
}

impl StrategyContext {
    pub fn checkpoint_path(&self, method: &str) -> Option<PathBuf> {
        self.checkpoint_dir
            .as_ref()
            .map(|d| d.join(checkpoint_file_name(method, self.seed)))
    }

    /// Loads the checkpoint for `method`, naming the method if it is absent.
    pub fn load_model(&self, method: &str) -> Result<GaugeModel> {
        let path = self
            .checkpoint_path(method)
            .unwrap_or_else(|| PathBuf::from(checkpoint_file_name(method, self.seed)));
        if !path.is_file() {
            return Err(Error::MissingCheckpoint {
                method: method.to_owned(),
                path,
            });
        }
        GaugeModel::load(&path)
    }
}

pub fn checkpoint_file_name(method: &str, seed: u64) -> String {
    format!("{method}_seed{seed}.fgnn")
}

type Factory<T> = Box<dyn Fn(&StrategyContext) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &'static str, factory: F) -> &mut Self
    where
        F: Fn(&StrategyContext) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.entries.insert(name, Box::new(factory));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(&self, name: &str, ctx: &StrategyContext) -> Result<Box<T>> {
        let factory = self.entries.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: self.kind,
            name: name.to_owned(),
            available: self.names().collect::<Vec<_>>().join(", "),
        })?;
        factory(ctx)
    }
}

impl<T: ?Sized> std::fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("entries", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}

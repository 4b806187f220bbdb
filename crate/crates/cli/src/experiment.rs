//! Train/test/validation plumbing shared by `evaluate` and the sweeps.

use sizegraph_core::eval::split;
use sizegraph_core::{Category, EventKind, InteractionEvent};

use crate::error::CliError;

/// A category's events split by order. Browse events are never held out:
/// they inform brand similarity but carry no sizes.
#[derive(Clone, Debug)]
pub struct Split {
    pub browse: Vec<InteractionEvent>,
    pub train: Vec<InteractionEvent>,
    pub test: Vec<InteractionEvent>,
}

impl Split {
    pub fn new(
        events: &[InteractionEvent],
        category: &Category,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self, CliError> {
        let (orders, browse): (Vec<_>, Vec<_>) = events
            .iter()
            .filter(|e| &e.category == category)
            .cloned()
            .partition(|e| e.kind == EventKind::Purchase);
        let (train, test) = split(&orders, test_fraction, seed).map_err(CliError::Invalid)?;
        Ok(Self {
            browse,
            train,
            test,
        })
    }

    /// Carve a validation set out of the train orders. The returned split's
    /// `test` is the validation set.
    pub fn validation(&self, fraction: f64, seed: u64) -> Result<Self, CliError> {
        let (train, test) =
            split(&self.train, fraction, seed.wrapping_add(1)).map_err(CliError::Invalid)?;
        Ok(Self {
            browse: self.browse.clone(),
            train,
            test,
        })
    }

    /// Everything a model may be fit on.
    pub fn model_events(&self) -> Vec<InteractionEvent> {
        let mut events = self.browse.clone();
        events.extend(self.train.iter().cloned());
        events
    }
}

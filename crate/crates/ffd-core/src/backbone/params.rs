//! Named parameter storage shared by the encoders, heads, and optimizer.

use std::collections::HashMap;

use ndarray::ArrayD;

use crate::tensor::{NodeId, Tape};

/// Index of a parameter in a [`ParamStore`].
pub type ParamId = usize;

/// Flat collection of named, mutable parameter tensors. Names are unique and
/// stable; ids are dense and usable as optimizer-state indices.
#[derive(Default)]
pub struct ParamStore {
    values: Vec<ArrayD<f64>>,
    names: Vec<String>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a new parameter; names must be unique.
    pub fn register(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<f64> {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.values[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &ArrayD<f64>)> {
        self.values
            .iter()
            .enumerate()
            .map(|(id, v)| (id, self.names[id].as_str(), v))
    }
}

/// Parameters bound onto a tape during one forward pass, so gradients can be
/// routed back to the store afterwards.
#[derive(Default)]
pub struct TapeBinding {
    pairs: Vec<(ParamId, NodeId)>,
}

impl TapeBinding {
    pub fn new() -> Self {
        Self::default()
    }

    /// Put a parameter's current value on the tape as a leaf and remember
    /// the pairing.
    pub fn bind(&mut self, tape: &mut Tape, store: &ParamStore, id: ParamId) -> NodeId {
        let node = tape.leaf(store.value(id).clone());
        self.pairs.push((id, node));
        node
    }

    pub fn pairs(&self) -> &[(ParamId, NodeId)] {
        &self.pairs
    }
}

use std::collections::BTreeMap;

use crate::{GraphError, Result, Tensor};

/// Handle to a tensor held by a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Learnable weight.
    Weight,
    /// Running statistic; never receives gradients.
    Buffer,
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    value: Tensor,
    kind: ParamKind,
    frozen: bool,
}

/// Owns every named tensor of a model.
///
/// Names are unique and hierarchical (`extractor.block0.speaker.in_proj.w`).
/// Frozen weights are still read by forward passes but are excluded from
/// [`ParamStore::trainable_ids`] and never receive gradients.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, name: &str, value: Tensor, kind: ParamKind) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(GraphError::Invalid(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.entries.len());
        self.entries.push(Entry { name: name.to_string(), value, kind, frozen: false });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_weight(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, ParamKind::Weight)
    }

    pub fn add_buffer(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, ParamKind::Buffer)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(GraphError::Shape(format!(
                "parameter `{}`: {:?} vs {:?}",
                entry.name,
                entry.value.shape(),
                value.shape()
            )));
        }
        entry.value = value;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.entries[id.0].kind
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.entries[id.0].frozen
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        let e = &self.entries[id.0];
        e.kind == ParamKind::Weight && !e.frozen
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entries[id.0].frozen = frozen;
    }

    /// Freezes every parameter whose name starts with `prefix`.
    pub fn freeze_prefix(&mut self, prefix: &str, frozen: bool) {
        for e in &mut self.entries {
            if e.name.starts_with(prefix) {
                e.frozen = frozen;
            }
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|&id| self.is_trainable(id)).collect()
    }

    /// Number of scalar weights (buffers excluded) under a name prefix.
    pub fn weight_count(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == ParamKind::Weight && e.name.starts_with(prefix))
            .map(|e| e.value.len())
            .sum()
    }

    /// Removes every entry whose name starts with `prefix`, renumbering ids.
    pub fn without_prefix(&self, prefix: &str) -> ParamStore {
        let mut out = ParamStore::new();
        for e in self.entries.iter().filter(|e| !e.name.starts_with(prefix)) {
            let id = out.insert(&e.name, e.value.clone(), e.kind).expect("names are unique in source store");
            out.entries[id.0].frozen = e.frozen;
        }
        out
    }
}

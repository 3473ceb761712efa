//! Name-keyed registries of interchangeable strategies.
//!
//! Table formats and neighbour metrics are both selected by name at runtime
//! (from a CLI flag or config key). Each family implements its own trait and
//! the registry stores boxed trait objects in registration order.

use crate::error::{Error, Result};

/// Anything that can be looked up by a stable, user-facing name.
pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: Vec<Box<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Registers a strategy, replacing any existing entry with the same name.
    pub fn register(&mut self, entry: Box<T>) {
        let name = entry.name();
        if let Some(slot) = self.entries.iter_mut().find(|e| e.name() == name) {
            *slot = entry;
        } else {
            self.entries.push(entry);
        }
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

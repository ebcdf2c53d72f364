//! Name-keyed factories for interchangeable strategies.
//!
//! Feature extractors, kernels and fusion rules are each a family of
//! implementations behind one trait. A [`Registry`] maps a config string
//! to a constructor so the variant is picked at runtime.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type Factory<T, C> = fn(&C) -> Result<Box<T>>;

pub struct Registry<T: ?Sized, C> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T, C>>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, factory: Factory<T, C>) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn create(&self, name: &str, config: &C) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(factory) => factory(config),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }
}

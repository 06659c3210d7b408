use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Name-keyed collection of interchangeable strategy objects.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Box<T>>,
}

impl<T: ?Sized> Registry<T> {
    /// `kind` names the strategy family in error messages.
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Adds or replaces the entry under `name`.
    pub fn register(&mut self, name: impl Into<String>, strategy: Box<T>) -> &mut Self {
        self.entries.insert(name.into(), strategy);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .get(name)
            .map(|b| &**b)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

impl<T: ?Sized> std::fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names())
            .finish()
    }
}

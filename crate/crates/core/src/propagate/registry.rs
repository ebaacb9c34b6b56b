use std::collections::BTreeMap;
use std::sync::Arc;

use super::strategies::{Exact, Hybrid, Propagator, Rk4};
use crate::error::PropagateError;

/// Propagation strategies by name.
#[derive(Debug, Clone)]
pub struct PropagatorRegistry {
    entries: BTreeMap<String, Arc<dyn Propagator>>,
}

impl PropagatorRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, p: Arc<dyn Propagator>) -> Option<Arc<dyn Propagator>> {
        self.entries.insert(p.name().to_string(), p)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Propagator>, PropagateError> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| PropagateError::UnknownPropagator(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

impl Default for PropagatorRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Hybrid));
        r.register(Arc::new(Exact));
        r.register(Arc::new(Rk4));
        r
    }
}

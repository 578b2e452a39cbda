use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::{gramian_fast, GramianBundle};
use crate::error::Result;
use crate::operator::OperatorSpec;

/// Gramian bundles keyed by the exact bit pattern of t. Readers share the
/// stored bundles; a miss computes outside the lock and inserts a copy.
#[derive(Debug)]
pub struct GramianCache {
    spec: OperatorSpec,
    map: RwLock<HashMap<u64, Arc<GramianBundle>>>,
}

impl GramianCache {
    pub fn new(spec: OperatorSpec) -> Self {
        Self { spec, map: RwLock::new(HashMap::new()) }
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn get(&self, t: f64) -> Result<Arc<GramianBundle>> {
        let key = t.to_bits();
        if let Some(b) = self.map.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(b));
        }
        let fresh = Arc::new(gramian_fast(&self.spec, t)?);
        let mut map = self.map.write().expect("cache lock");
        Ok(Arc::clone(map.entry(key).or_insert(fresh)))
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::examples::k2;

    #[test]
    fn hits_share_the_bundle() {
        let cache = GramianCache::new(k2());
        let a = cache.get(0.5).unwrap();
        let b = cache.get(0.5).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        cache.get(1.0).unwrap();
        assert_eq!(cache.len(), 2);
        assert!(cache.get(0.0).is_err());
        assert_eq!(cache.len(), 2);
    }
}

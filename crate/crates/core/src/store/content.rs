//! Content-addressed blob store for attachments.

use std::collections::BTreeMap;

use crate::hash::{digest_sha256, Hash256};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("no content stored under {0}")]
pub struct NotFound(pub Hash256);

/// Blobs keyed by their SHA-256. Puts are idempotent.
#[derive(Clone, Debug, Default)]
pub struct ContentStore {
    blobs: BTreeMap<Hash256, Vec<u8>>,
}

impl ContentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, data: &[u8]) -> Hash256 {
        let cid = digest_sha256(data);
        self.blobs.entry(cid).or_insert_with(|| data.to_vec());
        cid
    }

    pub fn get(&self, cid: &Hash256) -> Result<&[u8], NotFound> {
        self.blobs.get(cid).map(Vec::as_slice).ok_or(NotFound(*cid))
    }

    pub fn contains(&self, cid: &Hash256) -> bool {
        self.blobs.contains_key(cid)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Hash256, &Vec<u8>)> {
        self.blobs.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn idempotent_put_and_missing_get() {
        let mut s = ContentStore::new();
        let a = s.put(b"photo bytes");
        let b = s.put(b"photo bytes");
        assert_eq!(a, b);
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(&a).unwrap(), b"photo bytes");
        let random = digest_sha256(b"never stored");
        assert_eq!(s.get(&random), Err(NotFound(random)));
    }

    proptest! {
        #[test]
        fn keys_are_content_digests(blobs in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..64), 0..16)) {
            let mut s = ContentStore::new();
            for b in &blobs {
                let cid = s.put(b);
                prop_assert_eq!(s.get(&cid).unwrap(), b.as_slice());
            }
            for (k, v) in s.iter() {
                prop_assert_eq!(*k, digest_sha256(v));
            }
        }
    }
}

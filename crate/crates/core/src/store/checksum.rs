//! MD5 table and chunk checksums over canonical row encodings.

use std::ops::Bound;

use serde::{Deserialize, Serialize};

use super::{FinalStateDb, RowKey, StoreError, Table};
use crate::encoding::Fields;
use crate::hash::{Hash128, Md5Stream};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableChecksum {
    pub table: Table,
    pub chunk_index: u32,
    /// First and last key of the chunk (inclusive).
    pub row_key_range: (RowKey, RowKey),
    pub row_count: u32,
    pub digest: Hash128,
}

/// Half-open key interval `[lower, upper)` with optional open ends.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyRange {
    pub lower: Option<RowKey>,
    pub upper: Option<RowKey>,
}

impl KeyRange {
    pub fn all() -> Self {
        KeyRange {
            lower: None,
            upper: None,
        }
    }

    fn bounds(&self) -> (Bound<&RowKey>, Bound<&RowKey>) {
        (
            self.lower.as_ref().map_or(Bound::Unbounded, Bound::Included),
            self.upper.as_ref().map_or(Bound::Unbounded, Bound::Excluded),
        )
    }

    pub fn contains(&self, key: &RowKey) -> bool {
        self.lower.as_ref().map_or(true, |l| key >= l) && self.upper.as_ref().map_or(true, |u| key < u)
    }
}

impl FinalStateDb {
    /// MD5 of all canonical row encodings in key order; the empty table hashes the empty string.
    pub fn table_digest(&self, table: Table) -> Hash128 {
        self.range_checksum(table, &KeyRange::all()).1
    }

    pub fn table_digest_by_name(&self, table: &str) -> Result<Hash128, StoreError> {
        let t: Table = table
            .parse()
            .map_err(|_| StoreError::UnknownTable(table.to_owned()))?;
        Ok(self.table_digest(t))
    }

    /// Positional chunks of `chunk_size` rows in key order.
    pub fn chunk_checksums(
        &self,
        table: Table,
        chunk_size: usize,
    ) -> Result<Vec<TableChecksum>, StoreError> {
        if chunk_size == 0 {
            return Err(StoreError::BadChunkSize);
        }
        let rows: Vec<(&RowKey, &Fields)> = self.rows(table).iter().collect();
        Ok(rows
            .chunks(chunk_size)
            .enumerate()
            .map(|(i, chunk)| {
                let mut md5 = Md5Stream::new();
                for (_, row) in chunk {
                    md5.update(&row.encode());
                }
                TableChecksum {
                    table,
                    chunk_index: i as u32,
                    row_key_range: (chunk[0].0.clone(), chunk[chunk.len() - 1].0.clone()),
                    row_count: chunk.len() as u32,
                    digest: md5.finish(),
                }
            })
            .collect())
    }

    /// Row count and MD5 over the rows whose keys fall in `range`.
    pub fn range_checksum(&self, table: Table, range: &KeyRange) -> (u32, Hash128) {
        let mut md5 = Md5Stream::new();
        let mut n = 0u32;
        for (_, row) in self.rows(table).range::<RowKey, _>(range.bounds()) {
            md5.update(&row.encode());
            n += 1;
        }
        (n, md5.finish())
    }

    pub fn keys_in_range(&self, table: Table, range: &KeyRange) -> Vec<RowKey> {
        self.rows(table)
            .range::<RowKey, _>(range.bounds())
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn rows_in_range(&self, table: Table, range: &KeyRange) -> Vec<(RowKey, Fields)> {
        self.rows(table)
            .range::<RowKey, _>(range.bounds())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

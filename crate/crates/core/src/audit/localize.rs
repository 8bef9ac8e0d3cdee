//! Chunked checksum narrowing between a replica and a reference table.
//!
//! The first pass compares the reference's positional chunks. Each differing
//! range is split into halves by the reference's keys until the chunk size
//! reaches one, then rows in each remaining range are fetched and compared.
//! Ranges are half-open and the outermost ones are unbounded, so rows that
//! exist only on the replica are still caught.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::store::checksum::KeyRange;
use crate::store::schema::{RowKey, Table};
use crate::store::FinalStateDb;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum LocalizeError {
    #[error("tables are equal")]
    TablesEqual,
    #[error("chunk size must be positive")]
    BadChunkSize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Presence {
    Both,
    LocalOnly,
    ReferenceOnly,
}

impl Presence {
    pub fn as_str(&self) -> &'static str {
        match self {
            Presence::Both => "Both",
            Presence::LocalOnly => "LocalOnly",
            Presence::ReferenceOnly => "ReferenceOnly",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Localization {
    /// Differing keys in key order.
    pub keys: Vec<(RowKey, Presence)>,
    /// Chunk comparisons in the first pass.
    pub first_pass_exchanges: u32,
    /// Range comparisons and row fetches after the first pass.
    pub narrowing_exchanges: u32,
    /// Deepest narrowing level reached below the first pass, counting the row fetch.
    pub levels: u32,
}

/// Exact set of row keys where `local` and `reference` differ in `table`.
pub fn localize_divergence(
    local: &FinalStateDb,
    reference: &FinalStateDb,
    table: Table,
    chunk_size: usize,
) -> Result<Localization, LocalizeError> {
    if chunk_size == 0 {
        return Err(LocalizeError::BadChunkSize);
    }
    if local.table_digest(table) == reference.table_digest(table) {
        return Err(LocalizeError::TablesEqual);
    }
    let mut out = Localization {
        keys: Vec::new(),
        first_pass_exchanges: 0,
        narrowing_exchanges: 0,
        levels: 0,
    };
    let ref_keys: Vec<RowKey> = reference.rows(table).keys().cloned().collect();
    let first = split(&KeyRange::all(), &ref_keys, chunk_size);
    if first.is_empty() {
        // Reference table is empty: every local row is one-sided.
        out.first_pass_exchanges = 1;
        out.levels = 1;
        out.narrowing_exchanges = 1;
        fetch_and_compare(local, reference, table, &KeyRange::all(), &mut out.keys);
        return Ok(out);
    }
    let mut pending = Vec::new();
    for (range, keys) in first {
        out.first_pass_exchanges += 1;
        if local.range_checksum(table, &range) != reference.range_checksum(table, &range) {
            pending.push((range, keys));
        }
    }
    let mut size = chunk_size;
    let mut level = 0;
    while !pending.is_empty() {
        level += 1;
        if size == 1 {
            for (range, _) in &pending {
                out.narrowing_exchanges += 1;
                fetch_and_compare(local, reference, table, range, &mut out.keys);
            }
            break;
        }
        size = size.div_ceil(2);
        let mut next = Vec::new();
        for (range, keys) in &pending {
            for (sub, sub_keys) in split(range, keys, size) {
                out.narrowing_exchanges += 1;
                if local.range_checksum(table, &sub) != reference.range_checksum(table, &sub) {
                    next.push((sub, sub_keys));
                }
            }
        }
        pending = next;
    }
    out.levels = level;
    out.keys.sort();
    out.keys.dedup();
    Ok(out)
}

/// Partitions `range` into consecutive sub-ranges holding `size` of `keys`
/// each; the first keeps the range's lower bound and the last its upper bound.
fn split(range: &KeyRange, keys: &[RowKey], size: usize) -> Vec<(KeyRange, Vec<RowKey>)> {
    let chunks: Vec<&[RowKey]> = keys.chunks(size).collect();
    if chunks.is_empty() {
        return vec![(range.clone(), Vec::new())];
    }
    let n = chunks.len();
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let lower = if i == 0 { range.lower.clone() } else { Some(c[0].clone()) };
            let upper = if i + 1 == n {
                range.upper.clone()
            } else {
                Some(chunks[i + 1][0].clone())
            };
            (KeyRange { lower, upper }, c.to_vec())
        })
        .collect()
}

fn fetch_and_compare(
    local: &FinalStateDb,
    reference: &FinalStateDb,
    table: Table,
    range: &KeyRange,
    out: &mut Vec<(RowKey, Presence)>,
) {
    let l: BTreeMap<_, _> = local.rows_in_range(table, range).into_iter().collect();
    let r: BTreeMap<_, _> = reference.rows_in_range(table, range).into_iter().collect();
    for (k, row) in &l {
        match r.get(k) {
            None => out.push((k.clone(), Presence::LocalOnly)),
            Some(other) if other != row => out.push((k.clone(), Presence::Both)),
            Some(_) => {}
        }
    }
    for k in r.keys() {
        if !l.contains_key(k) {
            out.push((k.clone(), Presence::ReferenceOnly));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Fields;
    use proptest::prelude::*;

    fn grades(n: usize) -> FinalStateDb {
        let mut db = FinalStateDb::new();
        for i in 0..n {
            let row = Table::Grades.schema().complete(
                Fields::new()
                    .with("studentId", format!("S{i:05}"))
                    .with("courseId", "CS101")
                    .with("term", "2023-Fall")
                    .with("score", (i % 101) as u64)
                    .with("letter", "B"),
            );
            db.upsert(Table::Grades, row);
        }
        db
    }

    fn key(i: usize) -> RowKey {
        RowKey::new([format!("S{i:05}").as_str(), "CS101", "2023-Fall"])
    }

    /// Row-by-row comparison; the independent oracle.
    fn brute_force(a: &FinalStateDb, b: &FinalStateDb, t: Table) -> Vec<(RowKey, Presence)> {
        let mut out = Vec::new();
        fetch_and_compare(a, b, t, &KeyRange::all(), &mut out);
        out.sort();
        out
    }

    #[test]
    fn single_tamper_in_1000_rows_takes_at_most_seven_levels() {
        let reference = grades(1000);
        for target in [0usize, 1, 63, 64, 500, 998, 999] {
            let mut local = reference.clone();
            local.tamper_set_field(Table::Grades, &key(target), "score", "100").unwrap();
            let loc = localize_divergence(&local, &reference, Table::Grades, 64).unwrap();
            assert_eq!(loc.keys, vec![(key(target), Presence::Both)]);
            assert!(loc.levels <= 7, "levels {}", loc.levels);
            assert_eq!(loc.first_pass_exchanges, 16);
        }
    }

    #[test]
    fn deleted_row_is_reported_one_sided() {
        let reference = grades(300);
        let mut local = reference.clone();
        local.tamper_delete_row(Table::Grades, &key(150));
        let loc = localize_divergence(&local, &reference, Table::Grades, 64).unwrap();
        assert_eq!(loc.keys, vec![(key(150), Presence::ReferenceOnly)]);
    }

    #[test]
    fn extra_rows_beyond_reference_ends_are_found() {
        let reference = grades(100);
        let mut local = reference.clone();
        let mut extra = |id: &str| {
            let row = Table::Grades.schema().complete(
                Fields::new()
                    .with("studentId", id)
                    .with("courseId", "CS101")
                    .with("term", "2023-Fall")
                    .with("score", 1u64)
                    .with("letter", "F"),
            );
            local.upsert(Table::Grades, row);
        };
        extra("A0000");
        extra("Z9999");
        let loc = localize_divergence(&local, &reference, Table::Grades, 64).unwrap();
        assert_eq!(loc.keys, brute_force(&local, &reference, Table::Grades));
        assert_eq!(loc.keys.len(), 2);
        assert!(loc.keys.iter().all(|(_, p)| *p == Presence::LocalOnly));
    }

    #[test]
    fn three_scattered_tampers_give_three_keys() {
        let reference = grades(1000);
        let mut local = reference.clone();
        for i in [7, 420, 901] {
            local.tamper_set_field(Table::Grades, &key(i), "letter", "A+").unwrap();
        }
        let loc = localize_divergence(&local, &reference, Table::Grades, 64).unwrap();
        let keys: Vec<RowKey> = loc.keys.into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, vec![key(7), key(420), key(901)]);
    }

    #[test]
    fn equal_tables_violate_precondition() {
        let db = grades(10);
        assert_eq!(
            localize_divergence(&db, &db.clone(), Table::Grades, 64),
            Err(LocalizeError::TablesEqual)
        );
    }

    #[test]
    fn empty_reference_reports_every_local_row() {
        let local = grades(5);
        let loc = localize_divergence(&local, &FinalStateDb::new(), Table::Grades, 64).unwrap();
        assert_eq!(loc.keys.len(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn localization_matches_brute_force(
            n in 1usize..400,
            edits in proptest::collection::vec((0usize..400, 0u8..3), 1..6),
            chunk in 1usize..80,
        ) {
            let reference = grades(n);
            let mut local = reference.clone();
            for (i, kind) in edits {
                let k = key(i % n);
                match kind {
                    0 => { let _ = local.tamper_set_field(Table::Grades, &k, "score", "100"); }
                    1 => { local.tamper_delete_row(Table::Grades, &k); }
                    _ => { let _ = local.tamper_set_field(Table::Grades, &k, "letter", "Z"); }
                }
            }
            let expected = brute_force(&local, &reference, Table::Grades);
            match localize_divergence(&local, &reference, Table::Grades, chunk) {
                Ok(loc) => {
                    prop_assert_eq!(loc.keys, expected);
                    let bound = (chunk as f64).log2().ceil() as u32 + 1;
                    prop_assert!(loc.levels <= bound);
                }
                Err(LocalizeError::TablesEqual) => prop_assert!(expected.is_empty()),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}

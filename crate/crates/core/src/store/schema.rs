//! Fixed table schema of the final-state database.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoding::{Fields, Value};

/// Separator between key components in rendered row keys.
pub const ROW_KEY_SEPARATOR: char = '|';

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Table {
    Students,
    Staff,
    Courses,
    Grades,
    Attachments,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldType {
    Str,
    Int,
}

pub struct TableSchema {
    pub table: Table,
    pub key: &'static [&'static str],
    pub fields: &'static [(&'static str, FieldType)],
}

const STUDENTS: TableSchema = TableSchema {
    table: Table::Students,
    key: &["studentId"],
    fields: &[
        ("studentId", FieldType::Str),
        ("name", FieldType::Str),
        ("program", FieldType::Str),
        ("telephone", FieldType::Str),
        ("email", FieldType::Str),
        ("address", FieldType::Str),
        ("degreeAwarded", FieldType::Str),
    ],
};

const STAFF: TableSchema = TableSchema {
    table: Table::Staff,
    key: &["staffId"],
    fields: &[
        ("staffId", FieldType::Str),
        ("name", FieldType::Str),
        ("courses", FieldType::Str),
    ],
};

const COURSES: TableSchema = TableSchema {
    table: Table::Courses,
    key: &["courseId"],
    fields: &[
        ("courseId", FieldType::Str),
        ("title", FieldType::Str),
        ("term", FieldType::Str),
        ("ownerStaffId", FieldType::Str),
    ],
};

const GRADES: TableSchema = TableSchema {
    table: Table::Grades,
    key: &["studentId", "courseId", "term"],
    fields: &[
        ("studentId", FieldType::Str),
        ("courseId", FieldType::Str),
        ("term", FieldType::Str),
        ("score", FieldType::Int),
        ("letter", FieldType::Str),
        ("attachmentCid", FieldType::Str),
    ],
};

const ATTACHMENTS: TableSchema = TableSchema {
    table: Table::Attachments,
    key: &["cid"],
    fields: &[
        ("cid", FieldType::Str),
        ("size", FieldType::Int),
        ("mediaLabel", FieldType::Str),
    ],
};

impl Table {
    /// Fixed table order used by snapshots and audits.
    pub const ALL: [Table; 5] = [
        Table::Students,
        Table::Staff,
        Table::Courses,
        Table::Grades,
        Table::Attachments,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Table::Students => "students",
            Table::Staff => "staff",
            Table::Courses => "courses",
            Table::Grades => "grades",
            Table::Attachments => "attachments",
        }
    }

    pub fn schema(&self) -> &'static TableSchema {
        match self {
            Table::Students => &STUDENTS,
            Table::Staff => &STAFF,
            Table::Courses => &COURSES,
            Table::Grades => &GRADES,
            Table::Attachments => &ATTACHMENTS,
        }
    }

    pub(crate) fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Table {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Table::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown table `{s}`"))
    }
}

impl TableSchema {
    pub fn field_type(&self, field: &str) -> Option<FieldType> {
        self.fields.iter().find(|(n, _)| *n == field).map(|(_, t)| *t)
    }

    pub fn is_key_field(&self, field: &str) -> bool {
        self.key.contains(&field)
    }

    /// Parses a textual value for `field` into its typed form.
    pub fn parse_value(&self, field: &str, text: &str) -> Option<Value> {
        match self.field_type(field)? {
            FieldType::Str => Some(Value::Str(text.to_owned())),
            FieldType::Int => text.parse::<i128>().ok().map(Value::Int),
        }
    }

    pub fn key_of(&self, row: &Fields) -> RowKey {
        RowKey(
            self.key
                .iter()
                .map(|k| row.get(k).map(Value::render).unwrap_or_default())
                .collect(),
        )
    }

    /// A row with every schema field present; missing strings default to empty, ints to 0.
    pub fn complete(&self, mut row: Fields) -> Fields {
        for (name, ty) in self.fields {
            if !row.contains(name) {
                let v = match ty {
                    FieldType::Str => Value::Str(String::new()),
                    FieldType::Int => Value::Int(0),
                };
                row.insert(*name, v);
            }
        }
        row
    }

    /// Checks that a row carries exactly the schema fields with the right types.
    pub fn conforms(&self, row: &Fields) -> bool {
        row.len() == self.fields.len()
            && self.fields.iter().all(|(name, ty)| match (row.get(name), ty) {
                (Some(Value::Str(_)), FieldType::Str) => true,
                (Some(Value::Int(_)), FieldType::Int) => true,
                _ => false,
            })
    }
}

/// Primary key of a row, ordered component-wise.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RowKey(pub Vec<String>);

impl RowKey {
    pub fn new<I, S>(parts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RowKey(parts.into_iter().map(Into::into).collect())
    }

    pub fn single(part: impl Into<String>) -> Self {
        RowKey(vec![part.into()])
    }

    pub fn parse(s: &str) -> Self {
        RowKey(s.split(ROW_KEY_SEPARATOR).map(str::to_owned).collect())
    }

    pub fn render(&self) -> String {
        self.0.join(&ROW_KEY_SEPARATOR.to_string())
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for RowKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for RowKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(RowKey::parse(&String::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_names_round_trip() {
        for t in Table::ALL {
            assert_eq!(t.name().parse::<Table>().unwrap(), t);
            assert_eq!(t.schema().table, t);
            assert!(t.schema().key.iter().all(|k| t.schema().field_type(k).is_some()));
        }
        assert!("nope".parse::<Table>().is_err());
    }

    #[test]
    fn row_keys_order_component_wise() {
        let a = RowKey::new(["S1", "CS101", "2023-Fall"]);
        let b = RowKey::new(["S10", "AA", "2023-Fall"]);
        assert!(a < b);
        assert_eq!(RowKey::parse(&a.render()), a);
    }

    #[test]
    fn parse_typed_values() {
        let g = Table::Grades.schema();
        assert_eq!(g.parse_value("score", "91"), Some(Value::Int(91)));
        assert_eq!(g.parse_value("score", "x"), None);
        assert_eq!(g.parse_value("letter", "A"), Some(Value::Str("A".into())));
        assert_eq!(g.parse_value("bogus", "A"), None);
    }
}

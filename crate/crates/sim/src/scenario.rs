//! The scenario text format.
//!
//! ```text
//! scenario tamper-and-audit
//! config nodes=5
//! @0   student id=S1 name="Ada Lovelace" program=CS
//! @30  fault kind=tamper node=U1-n2 table=grades key="S1|CS101|2023-Fall" field=score value=12
//! @40  audit tables=grades
//! @40  expect audit table=grades divergent=U1-n2 rows="S1|CS101|2023-Fall" repairs=1
//! ```
//!
//! One step per line: `@<tick>`, a verb, then `key=value` arguments. Values
//! may be quoted; `#` starts a comment. Steps run in file order; a tick
//! earlier than the current clock runs immediately.

use std::collections::BTreeMap;
use std::str::FromStr;

use educhain_core::store::schema::{RowKey, Table};

use crate::fault::FaultKind;
use crate::SimError;

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// `config` overrides, applied over the configuration file.
    pub config: Vec<(String, String)>,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub line: usize,
    pub at: u64,
    /// The step as written, minus the tick; echoed in the run report.
    pub text: String,
    pub action: Action,
}

/// What a gateway call is expected to return: a status, or an error code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Status(u16),
    Code(String),
}

impl Outcome {
    pub fn ok() -> Self {
        Outcome::Status(200)
    }

    fn parse(text: &str) -> Self {
        match text.parse() {
            Ok(n) => Outcome::Status(n),
            Err(_) => Outcome::Code(text.to_owned()),
        }
    }

    pub fn matches(&self, status: u16, code: Option<&str>) -> bool {
        match self {
            Outcome::Status(s) => *s == status,
            Outcome::Code(c) => Some(c.as_str()) == code,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Status(s) => write!(f, "{s}"),
            Outcome::Code(c) => f.write_str(c),
        }
    }
}

/// Single-field change applied to a published credential before verifying it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Perturb {
    ScoreUp,
    ScoreDown,
    Name,
    Period,
}

impl FromStr for Perturb {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "score" | "score+1" => Ok(Perturb::ScoreUp),
            "score-1" => Ok(Perturb::ScoreDown),
            "name" => Ok(Perturb::Name),
            "period" => Ok(Perturb::Period),
            _ => Err(format!("unknown perturbation {s}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Student {
        uni: String,
        id: String,
        name: String,
        program: String,
        dept: Option<String>,
    },
    Staff {
        uni: String,
        id: String,
        name: String,
        dept: Option<String>,
    },
    Course {
        uni: String,
        id: String,
        title: String,
        term: String,
        owner: String,
        by: String,
        expect: Outcome,
    },
    /// `count` students `<prefix>000..` registered without login accounts.
    Cohort {
        uni: String,
        prefix: String,
        count: usize,
        program: String,
    },
    Grade {
        uni: String,
        student: String,
        course: String,
        term: String,
        score: u8,
        letter: Option<String>,
        by: String,
        expect: Outcome,
    },
    /// One seeded grade for every cohort member.
    GradeCohort {
        uni: String,
        prefix: String,
        count: usize,
        course: String,
        term: String,
        by: String,
    },
    Profile {
        uni: String,
        student: String,
        field: String,
        value: String,
        by: String,
        expect: Outcome,
    },
    Award {
        uni: String,
        student: String,
        period: String,
        by: String,
        expect: Outcome,
    },
    Export {
        uni: String,
        student: String,
        courses: Vec<String>,
        by: String,
        password: Option<String>,
        expect: Outcome,
    },
    /// Run ticks until messages, mempools and tips are quiet.
    Settle { max: u64 },
    ClosePeriod { uni: String, period: String },
    Verify {
        uni: String,
        student: String,
        period: String,
        perturb: Option<Perturb>,
        expect_verified: bool,
    },
    Transfer {
        host: String,
        home: String,
        student: String,
        scope: String,
        tamper: bool,
        expect_ok: bool,
    },
    Audit {
        uni: String,
        tables: Vec<Table>,
        by: String,
        round: Option<String>,
        expect: Outcome,
    },
    Fault(FaultKind),
    Expect(Expectation),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expectation {
    /// Every live node has the same tip, and its tables equal the replay of its chain.
    Consistent { uni: Option<String> },
    /// Every block on every node validates and links to its predecessor.
    ChainValid,
    /// Checks the latest audit report for `table`.
    Audit {
        table: Table,
        divergent: Option<Vec<String>>,
        rows: Option<Vec<String>>,
        repairs: Option<u32>,
        source: Option<String>,
        finding: Option<String>,
    },
    DigestsDiffer { uni: String, table: Table },
    Grade {
        uni: String,
        student: String,
        course: String,
        term: String,
        /// `None` expects the grade to be absent.
        score: Option<u8>,
        node: Option<String>,
    },
    RepairOnChain { uni: String, count: usize },
    Abstained { node: String },
    /// Every transaction accepted through a gateway is in every live node's chain.
    AllIncluded,
}

/// `key=value` arguments; every key must be consumed.
struct Args {
    map: BTreeMap<String, String>,
}

impl Args {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn req(&mut self, key: &str) -> Result<String, String> {
        self.take(key).ok_or_else(|| format!("missing {key}="))
    }

    fn or(&mut self, key: &str, default: &str) -> String {
        self.take(key).unwrap_or_else(|| default.to_owned())
    }

    fn num<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, String> {
        self.take(key)
            .map(|v| v.parse().map_err(|_| format!("bad number for {key}: {v}")))
            .transpose()
    }

    fn uni(&mut self) -> String {
        self.or("uni", "U1")
    }

    fn expect(&mut self) -> Outcome {
        self.take("expect").map_or_else(Outcome::ok, |v| Outcome::parse(&v))
    }

    fn list(&mut self, key: &str) -> Option<Vec<String>> {
        self.take(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect()
        })
    }

    fn table(&mut self, key: &str) -> Result<Table, String> {
        let t = self.req(key)?;
        t.parse().map_err(|_| format!("unknown table {t}"))
    }

    fn finish(self) -> Result<(), String> {
        match self.map.keys().next() {
            Some(k) => Err(format!("unexpected argument {k}=")),
            None => Ok(()),
        }
    }
}

pub fn parse(text: &str) -> Result<Scenario, SimError> {
    let mut scenario = Scenario {
        name: "unnamed".into(),
        config: Vec::new(),
        steps: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |m: String| SimError::Parse { line, message: m };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let words = shlex::split(trimmed).ok_or_else(|| err("unbalanced quotes".into()))?;
        let words: Vec<String> = words.into_iter().take_while(|w| !w.starts_with('#')).collect();
        let Some(first) = words.first() else { continue };
        match first.as_str() {
            "scenario" => {
                scenario.name = words.get(1).cloned().ok_or_else(|| err("missing name".into()))?;
            }
            "config" => {
                for w in &words[1..] {
                    let (k, v) = w.split_once('=').ok_or_else(|| err(format!("expected key=value, got {w}")))?;
                    scenario.config.push((k.to_owned(), v.to_owned()));
                }
            }
            tick if tick.starts_with('@') => {
                let at = tick[1..].parse().map_err(|_| err(format!("bad tick {tick}")))?;
                let rest = &words[1..];
                let action = parse_action(rest).map_err(err)?;
                let text = rest
                    .iter()
                    .map(|w| if w.contains(' ') || w.ends_with('=') { quote(w) } else { w.clone() })
                    .collect::<Vec<_>>()
                    .join(" ");
                scenario.steps.push(Step { line, at, text, action });
            }
            other => return Err(err(format!("expected @<tick>, scenario or config, got {other}"))),
        }
    }
    Ok(scenario)
}

fn quote(word: &str) -> String {
    match word.split_once('=') {
        Some((k, v)) => format!("{k}={v:?}"),
        None => format!("{word:?}"),
    }
}

fn parse_action(words: &[String]) -> Result<Action, String> {
    let verb = words.first().ok_or("missing verb")?.as_str();
    let mut positional = Vec::new();
    let mut map = BTreeMap::new();
    for w in &words[1..] {
        match w.split_once('=') {
            Some((k, v)) => {
                if map.insert(k.to_owned(), v.to_owned()).is_some() {
                    return Err(format!("duplicate argument {k}="));
                }
            }
            None => positional.push(w.clone()),
        }
    }
    if verb != "expect" && !positional.is_empty() {
        return Err(format!("unexpected word {}", positional[0]));
    }
    let mut a = Args { map };
    let action = match verb {
        "student" => Action::Student {
            uni: a.uni(),
            id: a.req("id")?,
            name: a.req("name")?,
            program: a.or("program", "CS"),
            dept: a.take("dept"),
        },
        "staff" => Action::Staff {
            uni: a.uni(),
            id: a.req("id")?,
            name: a.req("name")?,
            dept: a.take("dept"),
        },
        "course" => Action::Course {
            uni: a.uni(),
            id: a.req("id")?,
            title: a.req("title")?,
            term: a.req("term")?,
            owner: a.req("owner")?,
            by: a.or("by", "registrar"),
            expect: a.expect(),
        },
        "cohort" => Action::Cohort {
            uni: a.uni(),
            prefix: a.req("prefix")?,
            count: a.num("count")?.ok_or("missing count=")?,
            program: a.or("program", "CS"),
        },
        "grade" => Action::Grade {
            uni: a.uni(),
            student: a.req("student")?,
            course: a.req("course")?,
            term: a.req("term")?,
            score: a.num("score")?.ok_or("missing score=")?,
            letter: a.take("letter"),
            by: a.req("by")?,
            expect: a.expect(),
        },
        "grade-cohort" => Action::GradeCohort {
            uni: a.uni(),
            prefix: a.req("prefix")?,
            count: a.num("count")?.ok_or("missing count=")?,
            course: a.req("course")?,
            term: a.req("term")?,
            by: a.req("by")?,
        },
        "profile" => {
            let student = a.req("student")?;
            Action::Profile {
                uni: a.uni(),
                by: a.or("by", &student),
                student,
                field: a.req("field")?,
                value: a.req("value")?,
                expect: a.expect(),
            }
        }
        "award" => Action::Award {
            uni: a.uni(),
            student: a.req("student")?,
            period: a.req("period")?,
            by: a.or("by", "registrar"),
            expect: a.expect(),
        },
        "export" => {
            let student = a.req("student")?;
            Action::Export {
                uni: a.uni(),
                by: a.or("by", &student),
                student,
                courses: a.list("courses").ok_or("missing courses=")?,
                password: a.take("password"),
                expect: a.expect(),
            }
        }
        "settle" => Action::Settle {
            max: a.num("max")?.unwrap_or(5_000),
        },
        "close-period" => Action::ClosePeriod {
            uni: a.uni(),
            period: a.req("period")?,
        },
        "verify" => Action::Verify {
            uni: a.uni(),
            student: a.req("student")?,
            period: a.req("period")?,
            perturb: a.take("perturb").map(|p| p.parse()).transpose()?,
            expect_verified: match a.or("expect", "Verified").as_str() {
                "Verified" => true,
                "NotFound" => false,
                other => return Err(format!("verify expects Verified or NotFound, got {other}")),
            },
        },
        "transfer" => Action::Transfer {
            host: a.req("host")?,
            home: a.req("home")?,
            student: a.req("student")?,
            scope: a.req("scope")?,
            tamper: matches!(a.take("tamper").as_deref(), Some("true" | "yes" | "1")),
            expect_ok: match a.or("expect", "ok").as_str() {
                "ok" => true,
                "DigestMismatch" => false,
                other => return Err(format!("transfer expects ok or DigestMismatch, got {other}")),
            },
        },
        "audit" => {
            let tables = a
                .list("tables")
                .unwrap_or_else(|| Table::ALL.iter().map(|t| t.name().to_owned()).collect());
            Action::Audit {
                uni: a.uni(),
                tables: tables
                    .iter()
                    .map(|t| t.parse().map_err(|_| format!("unknown table {t}")))
                    .collect::<Result<_, _>>()?,
                by: a.or("by", "auditor"),
                round: a.take("round"),
                expect: a.expect(),
            }
        }
        "fault" => Action::Fault(parse_fault(&mut a)?),
        "expect" => {
            let kind = positional.first().ok_or("expect needs a subject")?;
            if positional.len() > 1 {
                return Err(format!("unexpected word {}", positional[1]));
            }
            Action::Expect(parse_expectation(kind, &mut a)?)
        }
        other => return Err(format!("unknown verb {other}")),
    };
    a.finish()?;
    Ok(action)
}

fn parse_fault(a: &mut Args) -> Result<FaultKind, String> {
    let kind = a.req("kind")?;
    let node = a.req("node")?;
    Ok(match kind.as_str() {
        "tamper" => FaultKind::TamperRow {
            node,
            table: a.table("table")?,
            row_key: RowKey::new(a.req("key")?.split('|')),
            field: a.req("field")?,
            new_value: a.req("value")?,
        },
        "drop" => FaultKind::DropMessages {
            node,
            fraction: a.num("fraction")?.ok_or("missing fraction=")?,
            window: a.num("window")?.ok_or("missing window=")?,
        },
        "crash" => FaultKind::CrashNode {
            node,
            window: a.num("window")?.ok_or("missing window=")?,
        },
        "lag" => FaultKind::LagNode {
            node,
            blocks: a.num("blocks")?.ok_or("missing blocks=")?,
        },
        other => return Err(format!("unknown fault kind {other}")),
    })
}

fn parse_expectation(kind: &str, a: &mut Args) -> Result<Expectation, String> {
    Ok(match kind {
        "consistent" => Expectation::Consistent { uni: a.take("uni") },
        "chain-valid" => Expectation::ChainValid,
        "audit" => Expectation::Audit {
            table: a.table("table")?,
            divergent: a.list("divergent"),
            rows: a.list("rows"),
            repairs: a.num("repairs")?,
            source: a.take("source"),
            finding: a.take("finding"),
        },
        "digests-differ" => Expectation::DigestsDiffer {
            uni: a.uni(),
            table: a.table("table")?,
        },
        "grade" => Expectation::Grade {
            uni: a.uni(),
            student: a.req("student")?,
            course: a.req("course")?,
            term: a.req("term")?,
            score: match a.req("score")?.as_str() {
                "none" => None,
                s => Some(s.parse().map_err(|_| format!("bad score {s}"))?),
            },
            node: a.take("node"),
        },
        "repair-on-chain" => Expectation::RepairOnChain {
            uni: a.uni(),
            count: a.num("count")?.unwrap_or(1),
        },
        "abstained" => Expectation::Abstained { node: a.req("node")? },
        "all-included" => Expectation::AllIncluded,
        other => return Err(format!("unknown expectation {other}")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_steps_quotes_and_comments() {
        let s = parse(
            "# intro\nscenario demo\nconfig nodes=3 seed=4\n\n@5 student id=S1 name=\"Ada L\"  # trailing\n@9 expect grade student=S1 course=C term=2023-Fall score=none\n",
        )
        .unwrap();
        assert_eq!(s.name, "demo");
        assert_eq!(s.config, vec![("nodes".into(), "3".into()), ("seed".into(), "4".into())]);
        assert_eq!(s.steps.len(), 2);
        assert_eq!(s.steps[0].at, 5);
        assert_eq!(s.steps[0].text, "student id=S1 name=\"Ada L\"");
        match &s.steps[0].action {
            Action::Student { name, uni, program, .. } => {
                assert_eq!((name.as_str(), uni.as_str(), program.as_str()), ("Ada L", "U1", "CS"))
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            s.steps[1].action,
            Action::Expect(Expectation::Grade { score: None, .. })
        ));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("scenario x\n@1 grade student=S1\n").unwrap_err();
        assert!(matches!(e, SimError::Parse { line: 2, .. }), "{e}");
        assert!(parse("@1 student id=S1 name=A colour=red").is_err());
        assert!(parse("@x settle").is_err());
        assert!(parse("@1 fault kind=melt node=U1-n0").is_err());
        assert!(parse("@1 audit tables=nope").is_err());
    }

    #[test]
    fn fault_and_outcome_forms() {
        let s = parse("@3 fault kind=tamper node=U1-n2 table=grades key=\"S1|CS101|2023-Fall\" field=score value=12\n@4 grade student=S1 course=C term=T score=1 by=S1 expect=Forbidden\n@4 audit tables=grades expect=409").unwrap();
        match &s.steps[0].action {
            Action::Fault(FaultKind::TamperRow { row_key, table, .. }) => {
                assert_eq!(row_key.to_string(), "S1|CS101|2023-Fall");
                assert_eq!(*table, Table::Grades);
            }
            other => panic!("{other:?}"),
        }
        match &s.steps[1].action {
            Action::Grade { expect, .. } => assert!(expect.matches(403, Some("Forbidden"))),
            other => panic!("{other:?}"),
        }
        match &s.steps[2].action {
            Action::Audit { expect, .. } => assert!(expect.matches(409, Some("RoundInProgress"))),
            other => panic!("{other:?}"),
        }
    }
}

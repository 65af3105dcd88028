//! Itemized check reports and their stable text rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skip => "skip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub statement: String,
    pub anchor: String,
    pub verdict: Verdict,
    /// Counterexample for a failure, reason for a skip, or a short note on a pass.
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub items: Vec<Item>,
    /// Wall time in milliseconds; kept out of the text rendering so output is reproducible.
    pub elapsed_ms: Option<u128>,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Report {
        Report {
            command: command.into(),
            items: Vec::new(),
            elapsed_ms: None,
        }
    }

    pub fn push(&mut self, id: &str, statement: &str, anchor: &str, ok: bool, witness: Option<String>) {
        self.items.push(Item {
            id: id.into(),
            statement: statement.into(),
            anchor: anchor.into(),
            verdict: Verdict::from_bool(ok),
            witness,
        });
    }

    pub fn skip(&mut self, id: &str, statement: &str, anchor: &str, reason: impl Into<String>) {
        self.items.push(Item {
            id: id.into(),
            statement: statement.into(),
            anchor: anchor.into(),
            verdict: Verdict::Skip,
            witness: Some(reason.into()),
        });
    }

    pub fn extend(&mut self, other: Report) {
        self.items.extend(other.items);
    }

    /// No item failed.
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> Vec<&Item> {
        self.items.iter().filter(|i| i.verdict == Verdict::Fail).collect()
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.id == id)
    }
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n'], " ")
}

/// Header line, then one tab-separated line per item:
/// `verdict id statement anchor [witness]`.
pub fn serialize_report(r: &Report) -> String {
    let mut out = String::new();
    writeln!(out, "# report {}", clean(&r.command)).unwrap();
    for it in &r.items {
        write!(
            out,
            "{}\t{}\t{}\t{}",
            it.verdict.as_str(),
            clean(&it.id),
            clean(&it.statement),
            clean(&it.anchor)
        )
        .unwrap();
        if let Some(w) = &it.witness {
            write!(out, "\t{}", clean(w)).unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let s = serialize_report(&Report::new("con"));
        assert_eq!(s, "# report con\n");
    }

    #[test]
    fn pass_and_fail_lines() {
        let mut r = Report::new("abelian");
        r.push("abelian", "theta is abelian", "centrality", true, None);
        let s = serialize_report(&r);
        assert_eq!(s.lines().nth(1).unwrap().split('\t').next(), Some("pass"));
        r.push("tc", "two-term", "centrality", false, Some("(0,1,0,0)".into()));
        let s = serialize_report(&r);
        let last = s.lines().last().unwrap();
        assert!(last.starts_with("fail\t") && last.ends_with("(0,1,0,0)"));
        assert!(!r.passed());
    }
}

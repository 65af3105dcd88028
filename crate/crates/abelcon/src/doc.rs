//! Text documents for algebras and generator configs (JSON), and the textual
//! forms of partitions accepted on the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::algebra::{Algebra, Operation};
use crate::congruence::principal_congruence;
use crate::error::{Error, Result};
use crate::genlab::GenConfig;
use crate::partition::Partition;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationDocument {
    pub name: String,
    pub arity: usize,
    pub table: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraDocument {
    pub size: usize,
    pub operations: Vec<OperationDocument>,
    /// Named partitions as sorted block lists.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, Vec<Vec<usize>>>,
    /// The generator config, for algebras written by the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<GenConfig>,
}

/// A validated algebra with its named partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeled {
    pub algebra: Algebra,
    pub labels: BTreeMap<String, Partition>,
    pub config: Option<GenConfig>,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
}

/// Parses and validates an algebra document. Nullary operations become
/// constant unary operations.
pub fn parse_algebra(text: &str) -> Result<Labeled> {
    let doc: AlgebraDocument = serde_json::from_str(text).map_err(json_error)?;
    let n = doc.size;
    if n == 0 {
        return Err(Error::Parse("size must be positive".into()));
    }
    let mut ops = Vec::with_capacity(doc.operations.len());
    for (i, o) in doc.operations.into_iter().enumerate() {
        let expected = n
            .checked_pow(o.arity as u32)
            .ok_or_else(|| Error::Parse(format!("operation {i} (`{}`): table too large", o.name)))?;
        if o.table.len() != expected {
            return Err(Error::Parse(format!(
                "operation {i} (`{}`): table has {} entries, expected {expected}",
                o.name,
                o.table.len()
            )));
        }
        if let Some(&bad) = o.table.iter().find(|&&v| v >= n) {
            return Err(Error::OutOfRange { element: bad, size: n });
        }
        if o.arity == 0 {
            let c = o.table[0];
            ops.push(Operation::from_fn(o.name, 1, n, |_| c));
        } else {
            ops.push(Operation::new(o.name, o.arity, n, o.table)?);
        }
    }
    let algebra = Algebra::new(n, ops)?;
    let mut labels = BTreeMap::new();
    for (name, blocks) in doc.labels {
        let p = blocks_partition(n, &blocks).map_err(|e| Error::Parse(format!("label `{name}`: {e}")))?;
        labels.insert(name, p);
    }
    Ok(Labeled {
        algebra,
        labels,
        config: doc.config,
    })
}

fn blocks_partition(n: usize, blocks: &[Vec<usize>]) -> Result<Partition> {
    Partition::from_blocks(n, blocks).map_err(|e| match e {
        Error::Precondition(m) => Error::Parse(m),
        other => other,
    })
}

pub fn serialize_algebra(a: &Algebra, labels: &BTreeMap<String, Partition>) -> String {
    serialize_document(&Labeled {
        algebra: a.clone(),
        labels: labels.clone(),
        config: None,
    })
}

/// One field per line and one operation per line, so tables stay readable.
pub fn serialize_document(doc: &Labeled) -> String {
    let (a, labels) = (&doc.algebra, &doc.labels);
    let mut out = String::new();
    writeln!(out, "{{\n  \"size\": {},\n  \"operations\": [", a.size()).unwrap();
    let ops = a.ops();
    for (i, o) in ops.iter().enumerate() {
        let doc = OperationDocument {
            name: o.name.clone(),
            arity: o.arity,
            table: o.table.clone(),
        };
        let sep = if i + 1 < ops.len() { "," } else { "" };
        writeln!(out, "    {}{sep}", serde_json::to_string(&doc).unwrap()).unwrap();
    }
    out.push_str("  ]");
    if !labels.is_empty() {
        out.push_str(",\n  \"labels\": {\n");
        let last = labels.len() - 1;
        for (i, (name, p)) in labels.iter().enumerate() {
            let sep = if i < last { "," } else { "" };
            writeln!(
                out,
                "    {}: {}{sep}",
                serde_json::to_string(name).unwrap(),
                serde_json::to_string(&p.blocks()).unwrap()
            )
            .unwrap();
        }
        out.push_str("  }");
    }
    if let Some(c) = &doc.config {
        write!(out, ",\n  \"config\": {}", serde_json::to_string(c).unwrap()).unwrap();
    }
    out.push_str("\n}\n");
    out
}

pub fn parse_config(text: &str) -> Result<GenConfig> {
    serde_json::from_str(text).map_err(json_error)
}

pub fn serialize_config(c: &GenConfig) -> String {
    let mut s = serde_json::to_string_pretty(c).unwrap();
    s.push('\n');
    s
}

/// A partition given as a label name, `zero`, `full`, `cg:a,b` (the principal
/// congruence), blocks separated by `|` (`0,2|1,3`), or a JSON block list.
/// Elements missing from the listed blocks become singletons.
pub fn parse_partition(spec: &str, a: &Algebra, labels: &BTreeMap<String, Partition>) -> Result<Partition> {
    let n = a.size();
    let spec = spec.trim();
    if let Some(p) = labels.get(spec) {
        return Ok(p.clone());
    }
    match spec {
        "zero" | "0" => return Ok(Partition::identity(n)),
        "full" | "1" => return Ok(Partition::full(n)),
        _ => {}
    }
    let numbers = |s: &str| -> Result<Vec<usize>> {
        s.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<usize>().map_err(|_| Error::Parse(format!("`{t}` is not an element"))))
            .collect()
    };
    if let Some(rest) = spec.strip_prefix("cg:") {
        let xs = numbers(rest)?;
        let [x, y] = xs[..] else {
            return Err(Error::Parse(format!("`{spec}`: cg needs two elements")));
        };
        return principal_congruence(a, x, y);
    }
    let blocks: Vec<Vec<usize>> = if spec.starts_with('[') {
        serde_json::from_str(spec).map_err(json_error)?
    } else if spec.chars().all(|c| c.is_ascii_digit() || ",| ".contains(c)) && !spec.is_empty() {
        spec.split('|').map(numbers).collect::<Result<_>>()?
    } else {
        return Err(Error::NotFound(format!("no partition named `{spec}`")));
    };
    let mut seen = vec![false; n];
    for &x in blocks.iter().flatten() {
        if x < n {
            seen[x] = true;
        }
    }
    let mut all = blocks;
    all.extend((0..n).filter(|&x| !seen[x]).map(|x| vec![x]));
    blocks_partition(n, &all)
}

/// `[[0,2],[1,3]]`.
pub fn format_partition(p: &Partition) -> String {
    serde_json::to_string(&p.blocks()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn round_trip_with_labels() {
        let g = fixtures::gen2();
        let labels: BTreeMap<String, Partition> = [("mu".to_string(), g.mu.clone()), ("alpha".to_string(), g.alpha.clone())].into();
        let text = serialize_algebra(&g.algebra, &labels);
        let back = parse_algebra(&text).unwrap();
        assert_eq!(back.algebra, g.algebra);
        assert_eq!(back.labels, labels);
        assert_eq!(serialize_algebra(&back.algebra, &back.labels), text);

        let with_config = Labeled {
            config: Some(g.config.clone()),
            ..back
        };
        let text = serialize_document(&with_config);
        assert_eq!(parse_algebra(&text).unwrap(), with_config);
    }

    #[test]
    fn z2_document() {
        let text = r#"{"size": 2, "operations": [{"name": "d", "arity": 3, "table": [0,1,1,0,1,0,0,1]}]}"#;
        let l = parse_algebra(text).unwrap();
        assert_eq!(l.algebra, fixtures::z2());
    }

    #[test]
    fn rejects_bad_documents() {
        let out = r#"{"size": 2, "operations": [{"name": "f", "arity": 1, "table": [0, 2]}]}"#;
        assert!(matches!(parse_algebra(out), Err(Error::OutOfRange { element: 2, size: 2 })));
        let short = r#"{"size": 2, "operations": [{"name": "f", "arity": 2, "table": [0, 1]}]}"#;
        assert!(matches!(parse_algebra(short), Err(Error::Parse(_))));
        let Err(Error::Parse(msg)) = parse_algebra("{\n  \"size\": 2,\n  oops") else {
            panic!("expected a parse error");
        };
        assert!(msg.starts_with("line 3"), "{msg}");
    }

    #[test]
    fn nullary_becomes_constant_unary() {
        let text = r#"{"size": 3, "operations": [{"name": "c", "arity": 0, "table": [2]}]}"#;
        let a = parse_algebra(text).unwrap().algebra;
        assert_eq!(a.ops()[0].arity, 1);
        assert_eq!(a.ops()[0].table, vec![2, 2, 2]);
    }

    #[test]
    fn partition_forms() {
        let z4 = fixtures::z4();
        let none = BTreeMap::new();
        let theta = fixtures::z4_theta();
        assert_eq!(parse_partition("0,2|1,3", &z4, &none).unwrap(), theta);
        assert_eq!(parse_partition("[[0,2],[1,3]]", &z4, &none).unwrap(), theta);
        assert_eq!(parse_partition("cg:0,2", &z4, &none).unwrap(), theta);
        assert_eq!(parse_partition("0,2", &z4, &none).unwrap(), Partition::from_blocks(4, &[vec![0, 2], vec![1], vec![3]]).unwrap());
        assert_eq!(parse_partition("full", &z4, &none).unwrap(), Partition::full(4));
        assert!(parse_partition("mu", &z4, &none).is_err());
        assert_eq!(format_partition(&theta), "[[0,2],[1,3]]");
    }

    #[test]
    fn config_round_trip() {
        let c = fixtures::gen2_config();
        assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c);
        let short = parse_config(r#"{"field": {"q": 2}, "dims": [1], "subspaces": [["full"]]}"#).unwrap();
        assert_eq!(short, fixtures::gen1_config());
    }
}

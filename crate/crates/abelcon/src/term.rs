//! Polynomial expressions over an algebra: variables `x0, x1, ...`, constants
//! written as bare element numbers, and applications of basic operations.

use std::fmt;

use crate::algebra::Algebra;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Var(usize),
    Const(usize),
    App(String, Vec<Term>),
}

impl Term {
    pub fn var(i: usize) -> Term {
        Term::Var(i)
    }

    pub fn app(name: &str, args: Vec<Term>) -> Term {
        Term::App(name.into(), args)
    }

    /// One more than the largest variable index.
    pub fn arity(&self) -> usize {
        match self {
            Term::Var(i) => i + 1,
            Term::Const(_) => 0,
            Term::App(_, args) => args.iter().map(Term::arity).max().unwrap_or(0),
        }
    }

    pub fn eval(&self, a: &Algebra, args: &[usize]) -> Result<usize> {
        match self {
            Term::Var(i) => args.get(*i).copied().ok_or_else(|| {
                Error::Precondition(format!("variable x{i} has no value"))
            }),
            Term::Const(c) => {
                if *c < a.size() {
                    Ok(*c)
                } else {
                    Err(Error::OutOfRange {
                        element: *c,
                        size: a.size(),
                    })
                }
            }
            Term::App(name, ts) => {
                let vals = ts.iter().map(|t| t.eval(a, args)).collect::<Result<Vec<_>>>()?;
                a.evaluate(name, &vals)
            }
        }
    }

    /// Checks operation names and arities against `a`.
    pub fn check(&self, a: &Algebra) -> Result<()> {
        match self {
            Term::Var(_) => Ok(()),
            Term::Const(c) if *c >= a.size() => Err(Error::OutOfRange {
                element: *c,
                size: a.size(),
            }),
            Term::Const(_) => Ok(()),
            Term::App(name, ts) => {
                let op = a.op(name)?;
                if op.arity != ts.len() {
                    return Err(Error::ArityMismatch {
                        name: name.clone(),
                        expected: op.arity,
                        got: ts.len(),
                    });
                }
                ts.iter().try_for_each(|t| t.check(a))
            }
        }
    }

    pub fn parse(s: &str) -> Result<Term> {
        let toks = tokenize(s)?;
        let mut pos = 0;
        let t = parse_term(&toks, &mut pos)?;
        if pos != toks.len() {
            return Err(Error::Parse(format!("trailing input in term `{s}`")));
        }
        Ok(t)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(i) => write!(f, "x{i}"),
            Term::Const(c) => write!(f, "{c}"),
            Term::App(name, ts) => {
                write!(f, "{name}(")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Open,
    Close,
    Comma,
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in s.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(Tok::Word(std::mem::take(&mut word)));
        }
        match ch {
            '(' => out.push(Tok::Open),
            ')' => out.push(Tok::Close),
            ',' => out.push(Tok::Comma),
            c if c.is_whitespace() => {}
            c => return Err(Error::Parse(format!("unexpected `{c}` in term"))),
        }
    }
    if !word.is_empty() {
        out.push(Tok::Word(word));
    }
    Ok(out)
}

fn parse_term(toks: &[Tok], pos: &mut usize) -> Result<Term> {
    let Some(Tok::Word(w)) = toks.get(*pos) else {
        return Err(Error::Parse("expected a name, variable or constant".into()));
    };
    *pos += 1;
    if toks.get(*pos) == Some(&Tok::Open) {
        *pos += 1;
        let mut args = Vec::new();
        if toks.get(*pos) == Some(&Tok::Close) {
            *pos += 1;
            return Ok(Term::App(w.clone(), args));
        }
        loop {
            args.push(parse_term(toks, pos)?);
            match toks.get(*pos) {
                Some(Tok::Comma) => *pos += 1,
                Some(Tok::Close) => {
                    *pos += 1;
                    return Ok(Term::App(w.clone(), args));
                }
                _ => return Err(Error::Parse("expected `,` or `)`".into())),
            }
        }
    }
    if let Ok(c) = w.parse::<usize>() {
        return Ok(Term::Const(c));
    }
    if let Some(rest) = w.strip_prefix('x') {
        if let Ok(i) = rest.parse::<usize>() {
            return Ok(Term::Var(i));
        }
    }
    match w.as_str() {
        "x" => Ok(Term::Var(0)),
        "y" => Ok(Term::Var(1)),
        "z" => Ok(Term::Var(2)),
        _ => Err(Error::Parse(format!("`{w}` is not a variable or constant"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parse_print_eval() {
        let t = Term::parse("p(x0, 0, x1)").unwrap();
        assert_eq!(t.to_string(), "p(x0,0,x1)");
        assert_eq!(t.arity(), 2);
        let z4 = fixtures::z4();
        assert_eq!(t.eval(&z4, &[3, 2]).unwrap(), 1);
        assert_eq!(Term::parse("p(x,y,z)").unwrap(), Term::parse("p(x0,x1,x2)").unwrap());
        assert!(Term::parse("p(x0,").is_err());
        assert!(Term::parse("q(x0)").unwrap().check(&z4).is_err());
        assert!(Term::parse("p(x0)").unwrap().check(&z4).is_err());
    }
}

//! Weak difference terms: verification, bounded search in the ternary clone,
//! the group on a class of an abelian congruence, affine decomposition of
//! polynomials, and checks of the laws such terms imply.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{
    generate_subuniverse, is_congruence, is_subuniverse, polynomial_seeds, power, Algebra, ElementMap, Operation,
};
use crate::centrality::centralizes;
use crate::closure::{close, Limits};
use crate::congruence::{congruence_lattice, principal_congruence, CongruenceLattice};
use crate::error::{internal, precondition, Error, Result};
use crate::partition::{Partition, Relation};
use crate::report::Report;
use crate::term::Term;

pub const DEFAULT_WDT_SEARCH_CAP: usize = 100_000;

/// Number of clone members examined when comparing weak difference terms.
const AGREEMENT_SAMPLE: usize = 2_000;
/// Above this many argument tuples the commutation check samples.
const COMMUTATION_EXHAUSTIVE: usize = 200_000;

/// Which algebras the weak difference condition is checked on: `A`, or `A`, `A^2` and `A^3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Base,
    Powers,
}

impl Scope {
    pub fn exponents(self) -> &'static [usize] {
        match self {
            Scope::Base => &[1],
            Scope::Powers => &[1, 2, 3],
        }
    }

    pub fn parse(s: &str) -> Result<Scope> {
        match s.trim() {
            "A" | "base" | "1" => Ok(Scope::Base),
            "A,A2,A3" | "powers" | "3" => Ok(Scope::Powers),
            other => Err(Error::Parse(format!("unknown scope `{other}` (use A or A,A2,A3)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WdtOrigin {
    /// Supplied as a table; the caller vouches that it is a term operation.
    TableAttested,
    /// Found in the clone; the term is recorded.
    TermDerived(String),
}

/// One pair `delta <= theta` examined in `A^power`. Abelianness of
/// `theta/delta` is only evaluated where the weak difference condition fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotientCheck {
    pub power: usize,
    pub delta: Partition,
    pub theta: Partition,
    pub eq4: bool,
    pub abelian: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WdtCertificate {
    pub d: Operation,
    pub scope: Scope,
    pub checked: Vec<QuotientCheck>,
    pub verdict: bool,
    pub witness: Option<String>,
    pub origin: WdtOrigin,
}

impl WdtCertificate {
    #[inline]
    pub fn apply(&self, x: usize, y: usize, z: usize) -> usize {
        let n = self.d.size();
        self.d.table[(x * n + y) * n + z]
    }

    pub fn table(&self) -> &[usize] {
        &self.d.table
    }

    /// Pairs shown abelian that were examined.
    pub fn abelian_pairs(&self) -> impl Iterator<Item = &QuotientCheck> {
        self.checked.iter().filter(|c| c.abelian == Some(true))
    }

    pub(crate) fn require_valid(&self, a: &Algebra) -> Result<()> {
        if !self.verdict {
            return Err(precondition("the weak difference term certificate is negative"));
        }
        if self.d.size() != a.size() {
            return Err(Error::SizeMismatch(self.d.size(), a.size()));
        }
        Ok(())
    }
}

/// `op` acting coordinatewise on `A^k`, encoded as [`power`] encodes.
fn power_op(op: &Operation, k: usize) -> Operation {
    let n = op.size();
    let nk = n.pow(k as u32);
    let mut coords = vec![vec![0usize; op.arity]; k];
    let mut buf = vec![0usize; op.arity];
    Operation::from_fn(op.name.clone(), op.arity, nk, |args| {
        for (j, &x) in args.iter().enumerate() {
            let mut r = x;
            for c in (0..k).rev() {
                coords[c][j] = r % n;
                r /= n;
            }
        }
        let mut out = 0;
        for c in coords.iter() {
            buf.copy_from_slice(c);
            out = out * n + op.apply(&buf);
        }
        out
    })
}

/// the weak difference condition checker over one algebra's congruence lattice, caching abelianness.
struct Eq4Checker<'a> {
    alg: &'a Algebra,
    lattice: CongruenceLattice,
    pairs: Vec<(usize, usize)>,
    abelian: Vec<Option<bool>>,
}

impl<'a> Eq4Checker<'a> {
    fn new(alg: &'a Algebra) -> Result<Eq4Checker<'a>> {
        let lattice = congruence_lattice(alg)?;
        let mut pairs = Vec::new();
        for t in 0..lattice.len() {
            for dl in 0..lattice.len() {
                if lattice.leq(dl, t) {
                    pairs.push((dl, t));
                }
            }
        }
        let abelian = vec![None; pairs.len()];
        Ok(Eq4Checker {
            alg,
            lattice,
            pairs,
            abelian,
        })
    }

    fn is_abelian(&mut self, k: usize) -> Result<bool> {
        if let Some(v) = self.abelian[k] {
            return Ok(v);
        }
        let (dl, t) = self.pairs[k];
        let v = centralizes(self.alg, self.lattice.get(t), self.lattice.get(t), self.lattice.get(dl))?.holds;
        self.abelian[k] = Some(v);
        Ok(v)
    }

    /// First failing instance of the weak difference condition for `d` on the pair, if any.
    fn eq4_failure(&self, d: &dyn Fn(usize, usize, usize) -> usize, k: usize) -> Option<String> {
        let (dl, t) = self.pairs[k];
        let delta = self.lattice.get(dl);
        let theta = self.lattice.get(t);
        for block in theta.blocks() {
            for &a in &block {
                for &b in &block {
                    let l = d(a, a, b);
                    if !delta.related(l, b) {
                        return Some(format!("d({a},{a},{b})={l} not related to {b} mod {delta} (theta={theta})"));
                    }
                    let r = d(b, a, a);
                    if !delta.related(r, b) {
                        return Some(format!("d({b},{a},{a})={r} not related to {b} mod {delta} (theta={theta})"));
                    }
                }
            }
        }
        None
    }

    /// Runs every pair; stops at the first abelian failure.
    fn check(
        &mut self,
        d: &dyn Fn(usize, usize, usize) -> usize,
        power: usize,
        log: &mut Option<&mut Vec<QuotientCheck>>,
    ) -> Result<Option<String>> {
        for k in 0..self.pairs.len() {
            let fail = self.eq4_failure(d, k);
            let abelian = if fail.is_some() { Some(self.is_abelian(k)?) } else { None };
            if let Some(log) = log.as_mut() {
                let (dl, t) = self.pairs[k];
                log.push(QuotientCheck {
                    power,
                    delta: self.lattice.get(dl).clone(),
                    theta: self.lattice.get(t).clone(),
                    eq4: fail.is_none(),
                    abelian,
                });
            }
            if abelian == Some(true) {
                let w = fail.unwrap();
                return Ok(Some(if power == 1 { w } else { format!("in A^{power}: {w}") }));
            }
        }
        Ok(None)
    }
}

fn idempotence_failure(d: &Operation) -> Option<String> {
    (0..d.size())
        .find(|&x| d.apply(&[x, x, x]) != x)
        .map(|x| format!("d({x},{x},{x})={} is not {x}", d.apply(&[x, x, x])))
}

fn ternary_op(a: &Algebra, d: &[usize]) -> Result<Operation> {
    let n = a.size();
    if d.len() != n * n * n {
        return Err(Error::TableLength {
            name: "d".into(),
            expected: n * n * n,
            got: d.len(),
        });
    }
    Operation::new("d", 3, n, d.to_vec())
}

/// Checks idempotence and the weak difference condition on every abelian quotient of every scoped algebra.
pub fn verify_wdt(a: &Algebra, d: &[usize], scope: Scope) -> Result<WdtCertificate> {
    let op = ternary_op(a, d)?;
    let mut cert = WdtCertificate {
        d: op.clone(),
        scope,
        checked: Vec::new(),
        verdict: false,
        witness: None,
        origin: WdtOrigin::TableAttested,
    };
    if let Some(w) = idempotence_failure(&op) {
        cert.witness = Some(w);
        return Ok(cert);
    }
    for &k in scope.exponents() {
        let (alg, dk) = if k == 1 {
            (a.clone(), op.clone())
        } else {
            (power(a, k)?, power_op(&op, k))
        };
        let mut checker = Eq4Checker::new(&alg)?;
        let f = |x: usize, y: usize, z: usize| dk.apply(&[x, y, z]);
        let mut log = Some(&mut cert.checked);
        if let Some(w) = checker.check(&f, k, &mut log)? {
            cert.witness = Some(w);
            return Ok(cert);
        }
    }
    cert.verdict = true;
    Ok(cert)
}

fn projection_seeds(n: usize) -> Vec<Vec<usize>> {
    let n3 = n * n * n;
    vec![
        (0..n3).map(|i| i / (n * n)).collect(),
        (0..n3).map(|i| (i / n) % n).collect(),
        (0..n3).map(|i| i % n).collect(),
    ]
}

fn table_idempotent(n: usize, t: &[u32]) -> bool {
    (0..n).all(|x| t[(x * n + x) * n + x] as usize == x)
}

/// Breadth-first search of the ternary clone for a table passing [`verify_wdt`]
/// with scope `A`.
pub fn search_wdt(a: &Algebra, cap: usize) -> Result<WdtCertificate> {
    let n = a.size();
    let mut checker = Eq4Checker::new(a)?;
    let mut found = None;
    let mut err = None;
    let cl = close(
        a,
        n * n * n,
        &projection_seeds(n),
        &Limits::new(cap, "wdt search cap").with_provenance(),
        &mut |i, t| {
            if !table_idempotent(n, t) {
                return false;
            }
            let f = |x: usize, y: usize, z: usize| t[(x * n + y) * n + z] as usize;
            match checker.check(&f, 1, &mut None) {
                Ok(None) => {
                    found = Some(i);
                    true
                }
                Ok(Some(_)) => false,
                Err(e) => {
                    err = Some(e);
                    true
                }
            }
        },
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    let Some(i) = found else {
        return Err(Error::NotFound(format!(
            "no weak difference term among the {} ternary term operations",
            cl.len()
        )));
    };
    let table: Vec<usize> = cl.get(i).iter().map(|&x| x as usize).collect();
    let names = ["x".to_string(), "y".to_string(), "z".to_string()];
    let mut cert = verify_wdt(a, &table, Scope::Base)?;
    if !cert.verdict {
        return Err(internal("search accepted a table that verification rejects"));
    }
    cert.origin = WdtOrigin::TermDerived(cl.term(a, i, &names));
    Ok(cert)
}

/// `(e/theta, +, e)` with `x + y = d(x,e,y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupOnClass {
    pub class: Vec<usize>,
    pub zero: usize,
    pos: BTreeMap<usize, usize>,
    add: Vec<usize>,
    neg: Vec<usize>,
}

impl GroupOnClass {
    /// Builds the group from `d` and asserts the abelian group axioms and
    /// `d(x,y,z) = x - y + z` on the class.
    pub fn from_d(d: &dyn Fn(usize, usize, usize) -> usize, class: &[usize], e: usize) -> Result<GroupOnClass> {
        let class: Vec<usize> = class.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let pos: BTreeMap<usize, usize> = class.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        if !pos.contains_key(&e) {
            return Err(precondition(format!("{e} is not in the class")));
        }
        let k = class.len();
        let mut add = vec![0; k * k];
        for (i, &x) in class.iter().enumerate() {
            for (j, &y) in class.iter().enumerate() {
                let s = d(x, e, y);
                let Some(&p) = pos.get(&s) else {
                    return Err(internal(format!("d({x},{e},{y})={s} leaves the class")));
                };
                add[i * k + j] = p;
            }
        }
        let mut neg = vec![0; k];
        for (i, &x) in class.iter().enumerate() {
            let s = d(e, x, e);
            let Some(&p) = pos.get(&s) else {
                return Err(internal(format!("d({e},{x},{e})={s} leaves the class")));
            };
            neg[i] = p;
        }
        let g = GroupOnClass {
            class,
            zero: e,
            pos,
            add,
            neg,
        };
        g.check_axioms(d)?;
        Ok(g)
    }

    fn check_axioms(&self, d: &dyn Fn(usize, usize, usize) -> usize) -> Result<()> {
        let c = &self.class;
        for &x in c {
            if self.add(x, self.zero) != x {
                return Err(internal(format!("{x} + 0 != {x}")));
            }
            if self.add(x, self.neg(x)) != self.zero {
                return Err(internal(format!("{x} + (-{x}) != 0")));
            }
            for &y in c {
                if self.add(x, y) != self.add(y, x) {
                    return Err(internal(format!("{x} + {y} != {y} + {x}")));
                }
                for &z in c {
                    if self.add(self.add(x, y), z) != self.add(x, self.add(y, z)) {
                        return Err(internal(format!("addition is not associative at ({x},{y},{z})")));
                    }
                    if d(x, y, z) != self.add(self.sub(x, y), z) {
                        return Err(internal(format!("d({x},{y},{z}) is not x-y+z")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.class.len()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.pos.contains_key(&x)
    }

    pub fn add(&self, x: usize, y: usize) -> usize {
        let k = self.class.len();
        self.class[self.add[self.pos[&x] * k + self.pos[&y]]]
    }

    pub fn neg(&self, x: usize) -> usize {
        self.class[self.neg[self.pos[&x]]]
    }

    pub fn sub(&self, x: usize, y: usize) -> usize {
        self.add(x, self.neg(y))
    }

    pub fn order(&self, x: usize) -> usize {
        let mut acc = x;
        let mut k = 1;
        while acc != self.zero {
            acc = self.add(acc, x);
            k += 1;
        }
        k
    }

    /// Least common multiple of element orders.
    pub fn exponent(&self) -> usize {
        self.class.iter().fold(1, |acc, &x| lcm(acc, self.order(x)))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn require_abelian(a: &Algebra, theta: &Partition) -> Result<()> {
    if theta.size() != a.size() {
        return Err(Error::SizeMismatch(theta.size(), a.size()));
    }
    if !is_congruence(a, theta) {
        return Err(Error::NotCongruence(theta.to_string()));
    }
    if !centralizes(a, theta, theta, &Partition::identity(a.size()))?.holds {
        return Err(precondition(format!("{theta} is not abelian")));
    }
    Ok(())
}

/// `Grp(theta,e)` built from a verified weak difference term.
pub fn class_group(a: &Algebra, cert: &WdtCertificate, theta: &Partition, e: usize) -> Result<GroupOnClass> {
    cert.require_valid(a)?;
    if e >= a.size() {
        return Err(Error::OutOfRange {
            element: e,
            size: a.size(),
        });
    }
    require_abelian(a, theta)?;
    GroupOnClass::from_d(&|x, y, z| cert.apply(x, y, z), &theta.block_of(e), e)
}

/// `f(a) = sum r_i(a_i) + f(e)` in `Grp(theta,e)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineDecomposition {
    pub base: Vec<usize>,
    pub zero: usize,
    /// `r_i` tabulated on the class of `e_i`, as `(x, r_i(x))`.
    pub maps: Vec<Vec<(usize, usize)>>,
    pub constant: usize,
}

impl AffineDecomposition {
    pub fn eval_map(&self, i: usize, x: usize) -> Option<usize> {
        self.maps[i].iter().find(|(a, _)| *a == x).map(|&(_, y)| y)
    }
}

type Nary<'a> = dyn Fn(&[usize]) -> usize + 'a;

/// The induction: `r_n(x) = d(f(e_1..e_{n-1},x), f(e), e)` and the earlier maps
/// come from `g(x_1..x_{n-1}) = f(x_1..x_{n-1},e_n)`.
fn affine_maps(
    f: &Nary,
    es: &[usize],
    e: usize,
    classes: &[Vec<usize>],
    d: &dyn Fn(usize, usize, usize) -> usize,
) -> Vec<Vec<(usize, usize)>> {
    let n = es.len();
    let fe = f(es);
    if n == 1 {
        return vec![classes[0].iter().map(|&x| (x, d(f(&[x]), fe, e))).collect()];
    }
    let en = es[n - 1];
    let g = |xs: &[usize]| {
        let mut v = xs.to_vec();
        v.push(en);
        f(&v)
    };
    let mut out = affine_maps(&g, &es[..n - 1], e, &classes[..n - 1], d);
    let mut args = es.to_vec();
    out.push(
        classes[n - 1]
            .iter()
            .map(|&x| {
                args[n - 1] = x;
                (x, d(f(&args), fe, e))
            })
            .collect(),
    );
    out
}

const AFFINE_CHECK_CAP: usize = 1_000_000;

pub fn affine_decompose(
    a: &Algebra,
    cert: &WdtCertificate,
    theta: &Partition,
    f: &Term,
    base: &[usize],
    e: usize,
) -> Result<AffineDecomposition> {
    cert.require_valid(a)?;
    f.check(a)?;
    if base.is_empty() || f.arity() > base.len() {
        return Err(precondition("one base point per variable is required"));
    }
    for &x in base.iter().chain([&e]) {
        if x >= a.size() {
            return Err(Error::OutOfRange {
                element: x,
                size: a.size(),
            });
        }
    }
    require_abelian(a, theta)?;
    let classes: Vec<Vec<usize>> = base.iter().map(|&x| theta.block_of(x)).collect();
    let total = classes.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len()));
    if total.map_or(true, |t| t > AFFINE_CHECK_CAP) {
        return Err(Error::CapExceeded {
            cap: "affine check cap",
            limit: AFFINE_CHECK_CAP,
        });
    }
    let eval = |xs: &[usize]| f.eval(a, xs).expect("term checked");
    let d = |x: usize, y: usize, z: usize| cert.apply(x, y, z);
    let target = Grp::new(&d, theta, e)?;

    let mut args: Vec<usize> = classes.iter().map(|c| c[0]).collect();
    let mut idx = vec![0usize; classes.len()];
    loop {
        let v = eval(&args);
        if !theta.related(v, e) {
            return Err(precondition(format!("f{args:?}={v} is not in the class of {e}")));
        }
        if !advance(&mut idx, &classes, &mut args) {
            break;
        }
    }

    let maps = affine_maps(&eval, base, e, &classes, &d);
    let constant = eval(base);
    let dec = AffineDecomposition {
        base: base.to_vec(),
        zero: e,
        maps,
        constant,
    };

    for (i, (&ei, cls)) in base.iter().zip(&classes).enumerate() {
        if dec.eval_map(i, ei) != Some(e) {
            return Err(internal(format!("r_{} does not send {ei} to {e}", i + 1)));
        }
        let source = Grp::new(&d, theta, ei)?;
        for &x in cls {
            for &y in cls {
                let lhs = dec.eval_map(i, source.g.add(x, y)).unwrap();
                let rhs = target.g.add(dec.eval_map(i, x).unwrap(), dec.eval_map(i, y).unwrap());
                if lhs != rhs {
                    return Err(internal(format!("r_{} is not additive at ({x},{y})", i + 1)));
                }
            }
        }
    }
    let mut args: Vec<usize> = classes.iter().map(|c| c[0]).collect();
    let mut idx = vec![0usize; classes.len()];
    loop {
        let mut sum = constant;
        for (i, &x) in args.iter().enumerate() {
            sum = target.g.add(sum, dec.eval_map(i, x).unwrap());
        }
        let v = eval(&args);
        if sum != v {
            return Err(internal(format!("decomposition gives {sum} but f{args:?}={v}")));
        }
        if !advance(&mut idx, &classes, &mut args) {
            break;
        }
    }
    Ok(dec)
}

struct Grp {
    g: GroupOnClass,
}

impl Grp {
    fn new(d: &dyn Fn(usize, usize, usize) -> usize, theta: &Partition, e: usize) -> Result<Grp> {
        Ok(Grp {
            g: GroupOnClass::from_d(d, &theta.block_of(e), e)?,
        })
    }
}

fn advance(idx: &mut [usize], classes: &[Vec<usize>], args: &mut [usize]) -> bool {
    for j in (0..idx.len()).rev() {
        idx[j] += 1;
        if idx[j] < classes[j].len() {
            args[j] = classes[j][idx[j]];
            return true;
        }
        idx[j] = 0;
        args[j] = classes[j][0];
    }
    false
}

/// A unary polynomial as a full table with a term over `x` and constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnaryWitness {
    pub function: Vec<usize>,
    pub term: String,
}

/// Whether `theta` is an atom of the congruence lattice.
pub fn is_minimal(a: &Algebra, theta: &Partition) -> Result<bool> {
    if theta.is_identity() {
        return Ok(false);
    }
    for (x, y) in theta.spanning_pairs() {
        if principal_congruence(a, x, y)? != *theta {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A unary polynomial sending `(a,b)` to `(a2,b2)` inside a minimal abelian congruence.
pub fn connecting_polynomial(
    a: &Algebra,
    theta: &Partition,
    from: (usize, usize),
    to: (usize, usize),
) -> Result<UnaryWitness> {
    let n = a.size();
    for x in [from.0, from.1, to.0, to.1] {
        if x >= n {
            return Err(Error::OutOfRange { element: x, size: n });
        }
    }
    if from.0 == from.1 {
        return Err(precondition("the source pair must have distinct entries"));
    }
    if !theta.related(from.0, from.1) || !theta.related(to.0, to.1) {
        return Err(precondition("both pairs must lie in theta"));
    }
    require_abelian(a, theta)?;
    if !is_minimal(a, theta)? {
        return Err(precondition(format!("{theta} is not a minimal congruence")));
    }
    let goal = [to.0 as u32, to.1 as u32];
    let mut hit = None;
    let cl = close(
        a,
        2,
        &polynomial_seeds(n, &[from.0, from.1]),
        &Limits::new(n * n + n + 1, "unary polynomial cap").with_provenance(),
        &mut |i, t| {
            if t == goal {
                hit = Some(i);
                true
            } else {
                false
            }
        },
    )?;
    let Some(i) = hit else {
        return Err(precondition(format!(
            "no unary polynomial sends {from:?} to {to:?}; the congruence is not minimal abelian in an algebra with a weak difference term"
        )));
    };
    let function = cl.replay(a, i, &|s| if s == 0 { (0..n).collect() } else { vec![s - 1; n] });
    let mut names = vec!["x".to_string()];
    names.extend((0..n).map(|c| c.to_string()));
    Ok(UnaryWitness {
        function,
        term: cl.term(a, i, &names),
    })
}

fn transversal_retraction(theta: &Partition, d: &BTreeSet<usize>) -> Result<Vec<usize>> {
    if !theta.is_transversal(d) {
        return Err(precondition("not a transversal of theta"));
    }
    let mut pi = vec![0; theta.size()];
    for x in 0..theta.size() {
        pi[x] = *d.iter().find(|&&y| theta.related(x, y)).unwrap();
    }
    Ok(pi)
}

/// `sigma(x) = d(x, pi_1(x), pi_2(x))`, an automorphism carrying `d1` onto `d2`.
pub fn transversal_automorphism(
    a: &Algebra,
    cert: &WdtCertificate,
    theta: &Partition,
    d1: &BTreeSet<usize>,
    d2: &BTreeSet<usize>,
) -> Result<ElementMap> {
    cert.require_valid(a)?;
    require_abelian(a, theta)?;
    for s in [d1, d2] {
        if !is_subuniverse(a, s) {
            return Err(precondition(format!("{s:?} is not a subuniverse")));
        }
    }
    let p1 = transversal_retraction(theta, d1)?;
    let p2 = transversal_retraction(theta, d2)?;
    let images = (0..a.size()).map(|x| cert.apply(x, p1[x], p2[x])).collect();
    let sigma = ElementMap::new(a.size(), images)?;
    if let Some((op, args)) = sigma.hom_failure(a, a) {
        return Err(internal(format!("sigma is not a homomorphism at {op}{args:?}")));
    }
    if !sigma.is_bijective() {
        return Err(internal("sigma is not a bijection"));
    }
    let image: BTreeSet<usize> = d1.iter().map(|&x| sigma.apply(x)).collect();
    if image != *d2 {
        return Err(internal("sigma does not carry the first transversal onto the second"));
    }
    if let Some(x) = (0..a.size()).find(|&x| !theta.related(x, sigma.apply(x))) {
        return Err(internal(format!("sigma moves {x} out of its class")));
    }
    Ok(sigma)
}

/// The nonzero abelian congruences, and those that are also atoms.
fn abelian_congruences(a: &Algebra, l: &CongruenceLattice) -> Result<(Vec<Partition>, Vec<Partition>)> {
    let zero = Partition::identity(a.size());
    let atoms: BTreeSet<usize> = l.atoms().into_iter().collect();
    let mut all = Vec::new();
    let mut minimal = Vec::new();
    for (i, th) in l.elements().iter().enumerate() {
        if th.is_identity() {
            continue;
        }
        if centralizes(a, th, th, &zero)?.holds {
            all.push(th.clone());
            if atoms.contains(&i) {
                minimal.push(th.clone());
            }
        }
    }
    Ok((all, minimal))
}

fn reflexive_subuniverse_law(a: &Algebra, abelian: &[Partition]) -> Result<(bool, String)> {
    let n = a.size();
    let mut checked = 0;
    for th in abelian {
        for (x, y) in th.pairs() {
            if x >= y {
                continue;
            }
            let mut seeds: Vec<Vec<usize>> = (0..n).map(|c| vec![c, c]).collect();
            seeds.push(vec![x, y]);
            let cl = close(a, 2, &seeds, &Limits::new(n * n + 1, "relation closure cap"), &mut |_, _| false)?;
            let rho = Relation::from_pairs(n, cl.iter().map(|t| (t[0] as usize, t[1] as usize)));
            checked += 1;
            if !rho.is_symmetric() || !rho.is_transitive() {
                return Ok((false, format!("Sg(0 with ({x},{y})) inside {th} is not a congruence")));
            }
        }
    }
    Ok((true, format!("{checked} generated relations")))
}

fn commutation_law(a: &Algebra, cert: &WdtCertificate, abelian: &[Partition]) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut checked = 0usize;
    for th in abelian {
        let mut triples = Vec::new();
        for b in th.blocks() {
            for &x in &b {
                for &y in &b {
                    for &z in &b {
                        triples.push([x, y, z]);
                    }
                }
            }
        }
        for op in a.ops() {
            let k = op.arity;
            let total = (triples.len() as u128).pow(k as u32);
            let exhaustive = total <= COMMUTATION_EXHAUSTIVE as u128;
            let rounds = if exhaustive { total as usize } else { COMMUTATION_EXHAUSTIVE };
            let mut pick = vec![0usize; k];
            let (mut xs, mut ys, mut zs, mut ds) = (vec![0; k], vec![0; k], vec![0; k], vec![0; k]);
            for r in 0..rounds {
                if exhaustive {
                    let mut rem = r;
                    for p in pick.iter_mut().rev() {
                        *p = rem % triples.len();
                        rem /= triples.len();
                    }
                } else {
                    for p in pick.iter_mut() {
                        *p = rng.gen_range(0..triples.len());
                    }
                }
                for (j, &p) in pick.iter().enumerate() {
                    let [x, y, z] = triples[p];
                    xs[j] = x;
                    ys[j] = y;
                    zs[j] = z;
                    ds[j] = cert.apply(x, y, z);
                }
                let lhs = cert.apply(op.apply(&xs), op.apply(&ys), op.apply(&zs));
                let rhs = op.apply(&ds);
                checked += 1;
                if lhs != rhs {
                    return (
                        false,
                        format!("d({0}{xs:?},{0}{ys:?},{0}{zs:?}) != {0}(d applied coordinatewise)", op.name),
                    );
                }
            }
        }
    }
    (true, format!("{checked} argument tuples"))
}

fn agreement_law(a: &Algebra, cert: &WdtCertificate, abelian: &[Partition]) -> Result<(bool, String)> {
    let n = a.size();
    let mut checker = Eq4Checker::new(a)?;
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    // d with its outer arguments swapped is again a weak difference term
    candidates.push(
        (0..n * n * n)
            .map(|i| cert.apply(i % n, (i / n) % n, i / (n * n)))
            .collect(),
    );
    let mut seen = 0;
    let res = close(
        a,
        n * n * n,
        &projection_seeds(n),
        &Limits::new(AGREEMENT_SAMPLE + 3, "wdt comparison cap"),
        &mut |_, t| {
            seen += 1;
            if table_idempotent(n, t) {
                candidates.push(t.iter().map(|&x| x as usize).collect());
            }
            seen >= AGREEMENT_SAMPLE
        },
    );
    match res {
        Ok(_) | Err(Error::CapExceeded { .. }) => {}
        Err(e) => return Err(e),
    }
    let mut passing = 0;
    for t in &candidates {
        let f = |x: usize, y: usize, z: usize| t[(x * n + y) * n + z];
        if checker.check(&f, 1, &mut None)?.is_some() {
            continue;
        }
        passing += 1;
        for th in abelian {
            for b in th.blocks() {
                for &x in &b {
                    for &y in &b {
                        for &z in &b {
                            if f(x, y, z) != cert.apply(x, y, z) {
                                return Ok((
                                    false,
                                    format!("two weak difference terms differ at ({x},{y},{z}) in a class of {th}"),
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((true, format!("{passing} passing tables compared")))
}

const TRANSVERSAL_CAP: usize = 100_000;

fn transversal_law(a: &Algebra, minimal: &[Partition]) -> Result<(bool, String)> {
    let full: BTreeSet<usize> = (0..a.size()).collect();
    let mut found = 0;
    for th in minimal {
        let blocks = th.blocks();
        let total = blocks.iter().try_fold(1usize, |acc, b| acc.checked_mul(b.len()));
        if total.map_or(true, |t| t > TRANSVERSAL_CAP) {
            return Err(Error::CapExceeded {
                cap: "transversal enumeration cap",
                limit: TRANSVERSAL_CAP,
            });
        }
        let mut args: Vec<usize> = blocks.iter().map(|b| b[0]).collect();
        let mut idx = vec![0; blocks.len()];
        loop {
            let s: BTreeSet<usize> = args.iter().copied().collect();
            if is_subuniverse(a, &s) {
                found += 1;
                for x in 0..a.size() {
                    if s.contains(&x) {
                        continue;
                    }
                    let mut seed: Vec<usize> = s.iter().copied().collect();
                    seed.push(x);
                    if generate_subuniverse(a, &seed)? != full {
                        return Ok((false, format!("{s:?} plus {x} does not generate A (theta={th})")));
                    }
                }
            }
            if !advance(&mut idx, &blocks, &mut args) {
                break;
            }
        }
    }
    Ok((true, format!("{found} subuniverse transversals")))
}

fn prime_power_law(a: &Algebra, cert: &WdtCertificate, minimal: &[Partition]) -> Result<(bool, String)> {
    let d = |x: usize, y: usize, z: usize| cert.apply(x, y, z);
    let mut notes = Vec::new();
    for th in minimal {
        let mut prime = None;
        let mut sizes = Vec::new();
        for x in 0..a.size() {
            let g = GroupOnClass::from_d(&d, &th.block_of(x), x)?;
            let ex = g.exponent();
            if x == th.rep(x) {
                sizes.push(g.size());
            }
            if ex == 1 {
                continue;
            }
            if !is_prime(ex) {
                return Ok((false, format!("group on the class of {x} has exponent {ex} (theta={th})")));
            }
            match prime {
                None => prime = Some(ex),
                Some(p) if p != ex => {
                    return Ok((false, format!("class exponents {p} and {ex} differ (theta={th})")));
                }
                _ => {}
            }
        }
        let p = prime.unwrap_or(1);
        if let Some(s) = sizes.iter().find(|&&s| !is_power_of(s, p)) {
            return Ok((false, format!("class of size {s} is not a power of {p}")));
        }
        let list: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
        notes.push(format!("p={p}; class sizes {}", list.join(",")));
    }
    Ok((true, notes.join("; ")))
}

pub(crate) fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|k| k * k <= n).all(|k| n % k != 0)
}

fn is_power_of(mut s: usize, p: usize) -> bool {
    if s == 1 {
        return true;
    }
    if p < 2 {
        return false;
    }
    while s % p == 0 {
        s /= p;
    }
    s == 1
}

/// Itemized checks of the laws a weak difference term implies.
pub fn check_wdt_laws(a: &Algebra, cert: &WdtCertificate) -> Result<Report> {
    cert.require_valid(a)?;
    let l = congruence_lattice(a)?;
    let (abelian, minimal) = abelian_congruences(a, &l)?;
    let mut r = Report::new("laws");

    let (ok, w) = reflexive_subuniverse_law(a, &abelian)?;
    r.push(
        "reflexive-subuniverse-congruence",
        "reflexive subuniverses of A^2 inside an abelian congruence are congruences",
        "maltsev-on-abelian-classes",
        ok,
        Some(w),
    );
    let (ok, w) = commutation_law(a, cert, &abelian);
    r.push(
        "polynomial-commutation",
        "d commutes with every basic operation on triples from abelian classes",
        "wdt-commutes-with-polynomials",
        ok,
        Some(w),
    );
    let (ok, w) = agreement_law(a, cert, &abelian)?;
    r.push(
        "wdt-agreement",
        "any two weak difference terms agree on every abelian class",
        "wdt-unique-on-abelian-classes",
        ok,
        Some(w),
    );
    let (ok, w) = transversal_law(a, &minimal)?;
    r.push(
        "transversal-maximality",
        "a subuniverse transversal of a minimal abelian congruence is a maximal proper subuniverse",
        "transversal-maximal",
        ok,
        Some(w),
    );
    let (ok, w) = prime_power_law(a, cert, &minimal)?;
    r.push(
        "prime-power-classes",
        "for minimal abelian theta some prime p makes every class group elementary abelian of size p^k",
        "elementary-abelian-classes",
        ok,
        Some(w),
    );
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn table(n: usize, f: impl Fn(usize, usize, usize) -> usize) -> Vec<usize> {
        (0..n * n * n).map(|i| f(i / (n * n), (i / n) % n, i % n)).collect()
    }

    #[test]
    fn verify_examples() {
        let z4 = fixtures::z4();
        let p = z4.op("p").unwrap().table.clone();
        assert!(verify_wdt(&z4, &p, Scope::Base).unwrap().verdict);
        let s2 = fixtures::s2();
        let c = verify_wdt(&s2, &table(2, |x, y, z| x & y & z), Scope::Base).unwrap();
        assert!(c.verdict);
        let c = verify_wdt(&fixtures::z2(), &table(2, |x, _, _| x), Scope::Base).unwrap();
        assert!(!c.verdict);
        assert!(c.witness.is_some());
        assert!(verify_wdt(&z4, &[0; 5], Scope::Base).is_err());
    }

    #[test]
    fn powers_scope_is_stronger() {
        let z2 = fixtures::z2();
        let d = z2.op("d").unwrap().table.clone();
        let c = verify_wdt(&z2, &d, Scope::Powers).unwrap();
        assert!(c.verdict);
        assert!(c.checked.iter().any(|q| q.power == 3));
    }

    #[test]
    fn search_examples() {
        let z4 = fixtures::z4();
        let c = search_wdt(&z4, DEFAULT_WDT_SEARCH_CAP).unwrap();
        let want = table(4, |x, y, z| (x + 4 - y + z) % 4);
        assert_eq!(c.table(), &want[..]);
        assert!(matches!(c.origin, WdtOrigin::TermDerived(_)));
        assert!(search_wdt(&fixtures::s2(), DEFAULT_WDT_SEARCH_CAP).unwrap().verdict);
        let unary = Algebra::from_tables(2, vec![("u", 1, vec![0, 1])]).unwrap();
        assert!(matches!(search_wdt(&unary, DEFAULT_WDT_SEARCH_CAP), Err(Error::NotFound(_))));
    }

    #[test]
    fn class_group_examples() {
        let z4 = fixtures::z4();
        let c = verify_wdt(&z4, &z4.op("p").unwrap().table.clone(), Scope::Base).unwrap();
        let th = fixtures::z4_theta();
        let g = class_group(&z4, &c, &th, 0).unwrap();
        assert_eq!(g.class, vec![0, 2]);
        assert_eq!(g.add(2, 2), 0);
        let g = class_group(&z4, &c, &th, 1).unwrap();
        assert_eq!((g.zero, g.add(3, 3), g.add(1, 3)), (1, 1, 3));
        assert!(class_group(&fixtures::s2(), &search_wdt(&fixtures::s2(), 1000).unwrap(), &Partition::full(2), 0).is_err());
    }

    #[test]
    fn affine_examples() {
        let z4 = fixtures::z4();
        let c = verify_wdt(&z4, &z4.op("p").unwrap().table.clone(), Scope::Base).unwrap();
        let th = fixtures::z4_theta();
        let f = Term::parse("p(x0,0,x1)").unwrap();
        let dec = affine_decompose(&z4, &c, &th, &f, &[0, 0], 0).unwrap();
        assert_eq!(dec.maps, vec![vec![(0, 0), (2, 2)], vec![(0, 0), (2, 2)]]);
        assert_eq!(dec.constant, 0);
        let id = Term::parse("x0").unwrap();
        let dec = affine_decompose(&z4, &c, &th, &id, &[2], 0).unwrap();
        assert_eq!(dec.constant, 2);
        assert_eq!(dec.maps[0], vec![(0, 2), (2, 0)]);
        // f does not land in one class
        assert!(affine_decompose(&z4, &c, &th, &Term::parse("p(x0,0,1)").unwrap(), &[0], 0).is_err());
    }

    #[test]
    fn connecting_examples() {
        let z4 = fixtures::z4();
        let th = fixtures::z4_theta();
        let w = connecting_polynomial(&z4, &th, (0, 2), (1, 3)).unwrap();
        // x+1 and 1-x both qualify; breadth-first order reaches 1-x first
        assert_eq!((w.function[0], w.function[2]), (1, 3));
        let all = crate::algebra::unary_polynomials(&z4, 100).unwrap();
        assert!(all.contains(&w.function));
        assert_eq!(w.function, vec![1, 0, 3, 2]);
        let w = connecting_polynomial(&z4, &th, (0, 2), (0, 2)).unwrap();
        assert_eq!((w.function[0], w.function[2]), (0, 2));
        let w = connecting_polynomial(&z4, &th, (0, 2), (3, 3)).unwrap();
        assert_eq!((w.function[0], w.function[2]), (3, 3));
        assert!(connecting_polynomial(&z4, &Partition::full(4), (0, 1), (1, 0)).is_err());
    }

    #[test]
    fn transversal_examples() {
        let z2 = fixtures::z2();
        let c = verify_wdt(&z2, &z2.op("d").unwrap().table.clone(), Scope::Base).unwrap();
        let one = Partition::full(2);
        let d1: BTreeSet<usize> = [0].into();
        let sigma = transversal_automorphism(&z2, &c, &one, &d1, &d1).unwrap();
        assert_eq!(sigma, ElementMap::identity(2));
        let d2: BTreeSet<usize> = [1].into();
        let sigma = transversal_automorphism(&z2, &c, &one, &d1, &d2).unwrap();
        assert_eq!(sigma.images(), &[1, 0]);
        // cosets of the subgroup are not transversals of the monolith of z4
        let z4 = fixtures::z4();
        let c4 = verify_wdt(&z4, &z4.op("p").unwrap().table.clone(), Scope::Base).unwrap();
        let bad: BTreeSet<usize> = [0, 2].into();
        assert!(transversal_automorphism(&z4, &c4, &fixtures::z4_theta(), &bad, &bad).is_err());
    }

    #[test]
    fn laws_on_z4() {
        let z4 = fixtures::z4();
        let c = verify_wdt(&z4, &z4.op("p").unwrap().table.clone(), Scope::Base).unwrap();
        let r = check_wdt_laws(&z4, &c).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.item("prime-power-classes").unwrap().witness.as_ref().unwrap().contains("p=2; class sizes 2,2"));
    }

    #[test]
    fn laws_on_trivial_algebra() {
        let one = Algebra::from_tables(1, vec![("d", 3, vec![0])]).unwrap();
        let c = verify_wdt(&one, &[0], Scope::Base).unwrap();
        assert!(check_wdt_laws(&one, &c).unwrap().passed());
    }
}

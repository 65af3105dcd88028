//! Finite algebras as operation tables, element maps, and the generic
//! constructions built on them: subuniverses, products, quotients, unary
//! polynomials and isomorphism search.

use std::collections::BTreeSet;

use crate::closure::{close, Limits};
use crate::error::{Error, Result};
use crate::partition::Partition;

pub const DEFAULT_CLOSURE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Operation {
    pub name: String,
    pub arity: usize,
    /// Row-major: the entry for `(x_1,..,x_k)` sits at `sum x_j * n^(k-j)`.
    pub table: Vec<usize>,
    n: usize,
}

impl Operation {
    pub fn new(name: impl Into<String>, arity: usize, n: usize, table: Vec<usize>) -> Result<Operation> {
        let name = name.into();
        let expected = n.pow(arity as u32);
        if table.len() != expected {
            return Err(Error::TableLength {
                name,
                expected,
                got: table.len(),
            });
        }
        if let Some(&bad) = table.iter().find(|&&v| v >= n) {
            return Err(Error::OutOfRange { element: bad, size: n });
        }
        Ok(Operation { name, arity, table, n })
    }

    /// Builds the table by evaluating `f` on every argument tuple.
    pub fn from_fn(name: impl Into<String>, arity: usize, n: usize, mut f: impl FnMut(&[usize]) -> usize) -> Operation {
        let mut table = Vec::with_capacity(n.pow(arity as u32));
        let mut args = vec![0usize; arity];
        for idx in 0..n.pow(arity as u32) {
            let mut r = idx;
            for j in (0..arity).rev() {
                args[j] = r % n;
                r /= n;
            }
            table.push(f(&args));
        }
        Operation {
            name: name.into(),
            arity,
            table,
            n,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn apply(&self, args: &[usize]) -> usize {
        let mut idx = 0;
        for &a in args {
            idx = idx * self.n + a;
        }
        self.table[idx]
    }

    /// Multipliers such that the table index of `args` is `sum args[j] * strides[j]`.
    pub fn strides(&self) -> Vec<usize> {
        (0..self.arity)
            .map(|j| self.n.pow((self.arity - 1 - j) as u32))
            .collect()
    }

    pub fn is_idempotent(&self) -> bool {
        (0..self.n).all(|x| self.apply(&vec![x; self.arity]) == x)
    }
}

/// A finite algebra on the universe `0..size`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Algebra {
    size: usize,
    ops: Vec<Operation>,
}

impl Algebra {
    /// Validates the tables; nullary operations become constant unary ones.
    pub fn new(size: usize, ops: Vec<Operation>) -> Result<Algebra> {
        if size == 0 {
            return Err(Error::Precondition("universe must be nonempty".into()));
        }
        let mut out = Vec::with_capacity(ops.len());
        for op in ops {
            if op.n != size {
                return Err(Error::SizeMismatch(op.n, size));
            }
            let op = Operation::new(op.name, op.arity, size, op.table)?;
            if op.arity == 0 {
                let c = op.table[0];
                out.push(Operation::from_fn(op.name, 1, size, |_| c));
            } else {
                out.push(op);
            }
        }
        Ok(Algebra { size, ops: out })
    }

    pub fn from_tables(size: usize, ops: Vec<(&str, usize, Vec<usize>)>) -> Result<Algebra> {
        let ops = ops
            .into_iter()
            .map(|(name, arity, table)| Operation::new(name, arity, size, table))
            .collect::<Result<Vec<_>>>()?;
        Algebra::new(size, ops)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn op(&self, name: &str) -> Result<&Operation> {
        self.ops
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| Error::UnknownOperation(name.to_string()))
    }

    pub fn signature(&self) -> Vec<(String, usize)> {
        self.ops.iter().map(|o| (o.name.clone(), o.arity)).collect()
    }

    pub fn same_signature(&self, other: &Algebra) -> bool {
        self.ops.len() == other.ops.len()
            && self
                .ops
                .iter()
                .zip(&other.ops)
                .all(|(a, b)| a.name == b.name && a.arity == b.arity)
    }

    pub fn is_idempotent(&self) -> bool {
        self.ops.iter().all(Operation::is_idempotent)
    }

    pub fn evaluate(&self, name: &str, args: &[usize]) -> Result<usize> {
        let op = self.op(name)?;
        if args.len() != op.arity {
            return Err(Error::ArityMismatch {
                name: name.to_string(),
                expected: op.arity,
                got: args.len(),
            });
        }
        if let Some(&bad) = args.iter().find(|&&a| a >= self.size) {
            return Err(Error::OutOfRange {
                element: bad,
                size: self.size,
            });
        }
        Ok(op.apply(args))
    }

    /// Same tables under new names, positionally.
    pub fn renamed(&self, names: &[&str]) -> Result<Algebra> {
        if names.len() != self.ops.len() {
            return Err(Error::SignatureMismatch);
        }
        let ops = self
            .ops
            .iter()
            .zip(names)
            .map(|(o, n)| Operation {
                name: n.to_string(),
                ..o.clone()
            })
            .collect();
        Ok(Algebra { size: self.size, ops })
    }

    /// The algebra with `op` appended (used to adjoin a term operation).
    pub fn with_op(&self, op: Operation) -> Result<Algebra> {
        let mut ops = self.ops.clone();
        ops.push(op);
        Algebra::new(self.size, ops)
    }

    /// Transports the tables along a bijection `h` onto the same universe.
    pub fn relabeled(&self, h: &ElementMap) -> Result<Algebra> {
        if h.source_size() != self.size || h.target_size() != self.size || !h.is_bijective() {
            return Err(Error::Precondition("relabeling must be a permutation".into()));
        }
        let inv = h.inverse().unwrap();
        let ops = self
            .ops
            .iter()
            .map(|o| {
                Operation::from_fn(o.name.clone(), o.arity, self.size, |args| {
                    let pre: Vec<usize> = args.iter().map(|&a| inv.apply(a)).collect();
                    h.apply(o.apply(&pre))
                })
            })
            .collect();
        Algebra::new(self.size, ops)
    }
}

/// A total map between finite universes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementMap {
    target: usize,
    images: Vec<usize>,
}

impl ElementMap {
    pub fn new(target: usize, images: Vec<usize>) -> Result<ElementMap> {
        if let Some(&bad) = images.iter().find(|&&v| v >= target) {
            return Err(Error::OutOfRange {
                element: bad,
                size: target,
            });
        }
        Ok(ElementMap { target, images })
    }

    pub fn identity(n: usize) -> ElementMap {
        ElementMap {
            target: n,
            images: (0..n).collect(),
        }
    }

    pub fn source_size(&self) -> usize {
        self.images.len()
    }

    pub fn target_size(&self) -> usize {
        self.target
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.images[x]
    }

    /// `other` after `self`.
    pub fn then(&self, other: &ElementMap) -> Result<ElementMap> {
        if self.target != other.source_size() {
            return Err(Error::SizeMismatch(self.target, other.source_size()));
        }
        Ok(ElementMap {
            target: other.target,
            images: self.images.iter().map(|&x| other.images[x]).collect(),
        })
    }

    pub fn is_injective(&self) -> bool {
        let set: BTreeSet<_> = self.images.iter().collect();
        set.len() == self.images.len()
    }

    pub fn is_surjective(&self) -> bool {
        let set: BTreeSet<_> = self.images.iter().collect();
        set.len() == self.target
    }

    pub fn is_bijective(&self) -> bool {
        self.images.len() == self.target && self.is_injective()
    }

    pub fn inverse(&self) -> Option<ElementMap> {
        if !self.is_bijective() {
            return None;
        }
        let mut inv = vec![0; self.target];
        for (x, &y) in self.images.iter().enumerate() {
            inv[y] = x;
        }
        Some(ElementMap {
            target: self.images.len(),
            images: inv,
        })
    }

    /// Whether the map commutes with every operation (signatures compared positionally).
    pub fn is_homomorphism(&self, a: &Algebra, b: &Algebra) -> bool {
        self.hom_failure(a, b).is_none()
    }

    /// First operation and argument tuple on which the map fails to commute.
    pub fn hom_failure(&self, a: &Algebra, b: &Algebra) -> Option<(String, Vec<usize>)> {
        if !a.same_signature(b) || self.images.len() != a.size() || self.target != b.size() {
            return Some(("<shape>".into(), vec![]));
        }
        for (oa, ob) in a.ops().iter().zip(b.ops()) {
            let mut args = vec![0usize; oa.arity];
            let mut mapped = vec![0usize; oa.arity];
            for idx in 0..oa.table.len() {
                let mut r = idx;
                for j in (0..oa.arity).rev() {
                    args[j] = r % a.size();
                    r /= a.size();
                    mapped[j] = self.images[args[j]];
                }
                if self.images[oa.table[idx]] != ob.apply(&mapped) {
                    return Some((oa.name.clone(), args.clone()));
                }
            }
        }
        None
    }

    pub fn is_isomorphism(&self, a: &Algebra, b: &Algebra) -> bool {
        self.is_bijective() && self.is_homomorphism(a, b)
    }
}

/// The least subuniverse containing `seed`.
pub fn generate_subuniverse(a: &Algebra, seed: &[usize]) -> Result<BTreeSet<usize>> {
    if let Some(&bad) = seed.iter().find(|&&x| x >= a.size()) {
        return Err(Error::OutOfRange {
            element: bad,
            size: a.size(),
        });
    }
    let sorted: BTreeSet<usize> = seed.iter().copied().collect();
    let seeds: Vec<Vec<usize>> = sorted.iter().map(|&x| vec![x]).collect();
    let cl = close(a, 1, &seeds, &Limits::new(DEFAULT_CLOSURE_CAP, "closure"), &mut |_, _| false)?;
    Ok(cl.iter().map(|t| t[0] as usize).collect())
}

pub fn is_subuniverse(a: &Algebra, set: &BTreeSet<usize>) -> bool {
    let seed: Vec<usize> = set.iter().copied().collect();
    generate_subuniverse(a, &seed).map_or(false, |s| s.len() == set.len())
}

/// Direct product with the pair encoding `(x,y) -> x*|B| + y`.
#[derive(Debug, Clone)]
pub struct Product {
    pub algebra: Algebra,
    pub left: usize,
    pub right: usize,
}

impl Product {
    pub fn encode(&self, x: usize, y: usize) -> usize {
        x * self.right + y
    }

    pub fn decode(&self, p: usize) -> (usize, usize) {
        (p / self.right, p % self.right)
    }
}

pub fn product(a: &Algebra, b: &Algebra) -> Result<Product> {
    if !a.same_signature(b) {
        return Err(Error::SignatureMismatch);
    }
    let nb = b.size();
    let n = a.size() * nb;
    let ops = a
        .ops()
        .iter()
        .zip(b.ops())
        .map(|(oa, ob)| {
            let mut xa = vec![0; oa.arity];
            let mut xb = vec![0; oa.arity];
            Operation::from_fn(oa.name.clone(), oa.arity, n, |args| {
                for (j, &p) in args.iter().enumerate() {
                    xa[j] = p / nb;
                    xb[j] = p % nb;
                }
                oa.apply(&xa) * nb + ob.apply(&xb)
            })
        })
        .collect();
    Ok(Product {
        algebra: Algebra::new(n, ops)?,
        left: a.size(),
        right: nb,
    })
}

/// `A^k` with mixed-radix encoding, first coordinate most significant.
pub fn power(a: &Algebra, k: usize) -> Result<Algebra> {
    let mut p = a.clone();
    for _ in 1..k {
        p = product(&p, a)?.algebra;
    }
    Ok(p)
}

/// Whether `theta` is compatible with every operation.
pub fn is_congruence(a: &Algebra, theta: &Partition) -> bool {
    crate::congruence::compatibility_failure(a, theta).is_none()
}

/// `A/theta` with blocks numbered by least representative, ascending.
pub fn quotient(a: &Algebra, theta: &Partition, check: bool) -> Result<(Algebra, ElementMap)> {
    if theta.size() != a.size() {
        return Err(Error::SizeMismatch(theta.size(), a.size()));
    }
    if check {
        if let Some(w) = crate::congruence::compatibility_failure(a, theta) {
            return Err(Error::NotCongruence(w));
        }
    }
    let cls = theta.class_index();
    let reps = theta.representatives();
    let m = reps.len();
    let ops = a
        .ops()
        .iter()
        .map(|o| {
            let mut lifted = vec![0; o.arity];
            Operation::from_fn(o.name.clone(), o.arity, m, |args| {
                for (j, &b) in args.iter().enumerate() {
                    lifted[j] = reps[b];
                }
                cls[o.apply(&lifted)]
            })
        })
        .collect();
    Ok((Algebra::new(m, ops)?, ElementMap::new(m, cls)?))
}

/// The unary polynomial functions, listed in generation order.
#[derive(Debug, Clone)]
pub struct UnaryPolynomials {
    pub functions: Vec<Vec<usize>>,
}

impl UnaryPolynomials {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn contains(&self, f: &[usize]) -> bool {
        self.functions.iter().any(|g| g == f)
    }
}

/// Seeds for unary polynomials restricted to `domain`: the identity, then constants.
pub(crate) fn polynomial_seeds(n: usize, domain: &[usize]) -> Vec<Vec<usize>> {
    let mut seeds = vec![domain.to_vec()];
    seeds.extend((0..n).map(|c| vec![c; domain.len()]));
    seeds
}

pub fn unary_polynomials(a: &Algebra, cap: usize) -> Result<UnaryPolynomials> {
    let domain: Vec<usize> = (0..a.size()).collect();
    let cl = close(
        a,
        a.size(),
        &polynomial_seeds(a.size(), &domain),
        &Limits::new(cap, "unary polynomial cap"),
        &mut |_, _| false,
    )?;
    Ok(UnaryPolynomials {
        functions: cl
            .iter()
            .map(|t| t.iter().map(|&x| x as usize).collect())
            .collect(),
    })
}

/// Per-element data preserved by isomorphisms.
fn element_invariants(a: &Algebra) -> Vec<Vec<usize>> {
    let n = a.size();
    let mut inv: Vec<Vec<usize>> = vec![Vec::new(); n];
    for op in a.ops() {
        if op.arity == 1 {
            let mut indeg = vec![0; n];
            for &y in &op.table {
                indeg[y] += 1;
            }
            for x in 0..n {
                inv[x].push(indeg[x]);
                inv[x].push((op.table[x] == x) as usize);
            }
        } else {
            for (x, v) in inv.iter_mut().enumerate() {
                v.push((op.apply(&vec![x; op.arity]) == x) as usize);
            }
        }
    }
    for (x, v) in inv.iter_mut().enumerate() {
        let sub = generate_subuniverse(a, &[x]).map(|s| s.len()).unwrap_or(0);
        v.push(sub);
    }
    inv
}

/// Backtracking isomorphism search; returns the first isomorphism in
/// ascending-candidate order, or `None` (also for differing signatures).
pub fn find_isomorphism(a: &Algebra, b: &Algebra) -> Result<Option<ElementMap>> {
    let n = a.size();
    if n != b.size() || !a.same_signature(b) {
        return Ok(None);
    }
    let ia = element_invariants(a);
    let ib = element_invariants(b);
    let mut sa = ia.clone();
    let mut sb = ib.clone();
    sa.sort();
    sb.sort();
    if sa != sb {
        return Ok(None);
    }
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|x| (0..n).filter(|&y| ia[x] == ib[y]).collect())
        .collect();
    let mut h: Vec<Option<usize>> = vec![None; n];
    let mut used = vec![false; n];
    if search_iso(a, b, &candidates, &mut h, &mut used) {
        let images = h.into_iter().map(|x| x.unwrap()).collect();
        let map = ElementMap::new(n, images)?;
        debug_assert!(map.is_isomorphism(a, b));
        return Ok(Some(map));
    }
    Ok(None)
}

/// Extends `h` by everything the operations force. Returns the newly set
/// elements, or `None` on a contradiction (after undoing its own changes).
fn propagate(
    a: &Algebra,
    b: &Algebra,
    candidates: &[Vec<usize>],
    h: &mut [Option<usize>],
    used: &mut [bool],
) -> Option<Vec<usize>> {
    let n = a.size();
    let mut added: Vec<usize> = Vec::new();
    let mut changed = true;
    while changed {
        changed = false;
        for (oa, ob) in a.ops().iter().zip(b.ops()) {
            let k = oa.arity;
            let assigned: Vec<usize> = (0..n).filter(|&x| h[x].is_some()).collect();
            if assigned.is_empty() {
                break;
            }
            let m = assigned.len();
            let mut pos = vec![0usize; k];
            let mut args = vec![0usize; k];
            let mut imgs = vec![0usize; k];
            loop {
                for j in 0..k {
                    args[j] = assigned[pos[j]];
                    imgs[j] = h[args[j]].unwrap();
                }
                let r = oa.apply(&args);
                let want = ob.apply(&imgs);
                match h[r] {
                    Some(v) if v != want => {
                        undo(h, used, &added);
                        return None;
                    }
                    Some(_) => {}
                    None => {
                        if used[want] || !candidates[r].contains(&want) {
                            undo(h, used, &added);
                            return None;
                        }
                        h[r] = Some(want);
                        used[want] = true;
                        added.push(r);
                        changed = true;
                    }
                }
                let mut j = k;
                let mut done = true;
                while j > 0 {
                    j -= 1;
                    pos[j] += 1;
                    if pos[j] < m {
                        done = false;
                        break;
                    }
                    pos[j] = 0;
                }
                if done {
                    break;
                }
            }
        }
    }
    Some(added)
}

fn undo(h: &mut [Option<usize>], used: &mut [bool], added: &[usize]) {
    for &x in added {
        used[h[x].unwrap()] = false;
        h[x] = None;
    }
}

fn search_iso(
    a: &Algebra,
    b: &Algebra,
    candidates: &[Vec<usize>],
    h: &mut [Option<usize>],
    used: &mut [bool],
) -> bool {
    let Some(x) = (0..a.size()).find(|&x| h[x].is_none()) else {
        return true;
    };
    for &y in &candidates[x] {
        if used[y] {
            continue;
        }
        h[x] = Some(y);
        used[y] = true;
        if let Some(added) = propagate(a, b, candidates, h, used) {
            if search_iso(a, b, candidates, h, used) {
                return true;
            }
            undo(h, used, &added);
        }
        h[x] = None;
        used[y] = false;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn evaluate_examples() {
        assert_eq!(fixtures::z4().evaluate("p", &[1, 2, 3]).unwrap(), 2);
        assert_eq!(fixtures::s2().evaluate("meet", &[0, 1]).unwrap(), 0);
        assert_eq!(fixtures::z2().evaluate("d", &[1, 1, 0]).unwrap(), 0);
        assert!(matches!(
            fixtures::z2().evaluate("q", &[0]),
            Err(Error::UnknownOperation(_))
        ));
        assert!(matches!(
            fixtures::z2().evaluate("d", &[0, 1]),
            Err(Error::ArityMismatch { .. })
        ));
        assert!(matches!(
            fixtures::z2().evaluate("d", &[0, 1, 2]),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn nullary_becomes_constant_unary() {
        let a = Algebra::from_tables(3, vec![("c", 0, vec![2])]).unwrap();
        assert_eq!(a.ops()[0].arity, 1);
        assert_eq!(a.ops()[0].table, vec![2, 2, 2]);
    }

    #[test]
    fn subuniverse_examples() {
        let z4 = fixtures::z4();
        assert_eq!(generate_subuniverse(&z4, &[0, 1]).unwrap(), (0..4).collect());
        assert_eq!(generate_subuniverse(&z4, &[0]).unwrap(), [0].into());
        assert_eq!(generate_subuniverse(&fixtures::s2(), &[0, 1]).unwrap(), [0, 1].into());
    }

    #[test]
    fn product_examples() {
        let p = product(&fixtures::z2(), &fixtures::z2()).unwrap();
        let d = p.algebra.op("d").unwrap();
        assert_eq!(d.apply(&[p.encode(1, 0), p.encode(0, 0), p.encode(0, 1)]), p.encode(1, 1));
        assert_eq!(product(&fixtures::z4(), &fixtures::z4()).unwrap().algebra.size(), 16);
        let s = product(&fixtures::s2(), &fixtures::s2()).unwrap();
        let m = s.algebra.op("meet").unwrap();
        assert_eq!(m.apply(&[s.encode(1, 0), s.encode(0, 1)]), s.encode(0, 0));
        assert!(matches!(
            product(&fixtures::z2(), &fixtures::s2()),
            Err(Error::SignatureMismatch)
        ));
    }

    #[test]
    fn quotient_examples() {
        let z4 = fixtures::z4();
        let theta = Partition::from_blocks(4, &[vec![0, 2], vec![1, 3]]).unwrap();
        let (q, nu) = quotient(&z4, &theta, true).unwrap();
        assert_eq!(nu.images(), &[0, 1, 0, 1]);
        let z2 = fixtures::z2().renamed(&["p"]).unwrap();
        assert!(find_isomorphism(&q, &z2).unwrap().is_some());
        let (same, _) = quotient(&z4, &Partition::identity(4), true).unwrap();
        assert_eq!(same, z4);
        let (one, _) = quotient(&z4, &Partition::full(4), true).unwrap();
        assert_eq!(one.size(), 1);
        let bad = Partition::from_blocks(4, &[vec![0, 1], vec![2], vec![3]]).unwrap();
        assert!(matches!(quotient(&z4, &bad, true), Err(Error::NotCongruence(_))));
    }

    #[test]
    fn unary_polynomial_counts() {
        let z2 = unary_polynomials(&fixtures::z2(), 1000).unwrap();
        assert_eq!(z2.len(), 4);
        assert!(z2.contains(&[1, 0]));
        assert_eq!(unary_polynomials(&fixtures::s2(), 1000).unwrap().len(), 3);
        let z4 = unary_polynomials(&fixtures::z4(), 1000).unwrap();
        // every affine map a*x + c, since p(x,c,x) = 2x - c
        assert_eq!(z4.len(), 16);
        for a in 0..4 {
            for c in 0..4 {
                assert!(z4.contains(&(0..4).map(|x| (a * x + c) % 4).collect::<Vec<_>>()));
            }
        }
        assert!(matches!(
            unary_polynomials(&fixtures::z4(), 5),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn isomorphism_examples() {
        let z2 = fixtures::z2();
        assert_eq!(find_isomorphism(&z2, &z2).unwrap(), Some(ElementMap::identity(2)));
        let z4 = fixtures::z4();
        let shift = ElementMap::new(4, vec![1, 2, 3, 0]).unwrap();
        let moved = z4.relabeled(&shift).unwrap();
        let h = find_isomorphism(&z4, &moved).unwrap().unwrap();
        assert!(h.is_isomorphism(&z4, &moved));
        let s2 = fixtures::s2();
        assert!(find_isomorphism(&z2, &s2).unwrap().is_none());
        let s2d = fixtures::s2_ternary();
        assert!(find_isomorphism(&z2, &s2d).unwrap().is_none());
    }
}

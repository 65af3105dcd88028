//! Equivalence relations on `0..n` in normalized form.

use std::collections::BTreeSet;
use std::fmt;

use crate::algebra::ElementMap;
use crate::error::{Error, Result};

/// Union-find used while building partitions.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true if two distinct blocks were merged.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }

    pub fn to_partition(&mut self) -> Partition {
        let n = self.parent.len();
        let mut least = vec![usize::MAX; n];
        let mut repr = vec![0; n];
        for x in 0..n {
            let r = self.find(x);
            if least[r] == usize::MAX {
                least[r] = x;
            }
            repr[x] = least[r];
        }
        Partition { repr }
    }
}

/// An equivalence relation stored as "least element of my block".
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    repr: Vec<usize>,
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<String> = self
            .blocks()
            .iter()
            .map(|b| {
                let items: Vec<String> = b.iter().map(|x| x.to_string()).collect();
                format!("{{{}}}", items.join(","))
            })
            .collect();
        write!(f, "{{{}}}", blocks.join(","))
    }
}

impl Partition {
    pub fn identity(n: usize) -> Partition {
        Partition { repr: (0..n).collect() }
    }

    pub fn full(n: usize) -> Partition {
        Partition { repr: vec![0; n] }
    }

    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Partition> {
        let mut seen = vec![false; n];
        let mut uf = UnionFind::new(n);
        for b in blocks {
            for &x in b {
                if x >= n {
                    return Err(Error::OutOfRange { element: x, size: n });
                }
                if seen[x] {
                    return Err(Error::Precondition(format!("element {x} listed twice")));
                }
                seen[x] = true;
                uf.union(b[0], x);
            }
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(Error::Precondition(format!("element {x} missing from blocks")));
        }
        Ok(uf.to_partition())
    }

    /// The equivalence relation generated by `pairs`.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Partition {
        let mut uf = UnionFind::new(n);
        for (a, b) in pairs {
            uf.union(a, b);
        }
        uf.to_partition()
    }

    /// Kernel of a map: `x ~ y` iff `f(x) = f(y)`.
    pub fn kernel(f: &ElementMap) -> Partition {
        Partition::kernel_of(f.images())
    }

    pub fn kernel_of(values: &[usize]) -> Partition {
        let mut first: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        let repr = values
            .iter()
            .enumerate()
            .map(|(x, v)| *first.entry(*v).or_insert(x))
            .collect();
        Partition { repr }
    }

    pub fn size(&self) -> usize {
        self.repr.len()
    }

    #[inline]
    pub fn rep(&self, x: usize) -> usize {
        self.repr[x]
    }

    #[inline]
    pub fn related(&self, a: usize, b: usize) -> bool {
        self.repr[a] == self.repr[b]
    }

    pub fn is_identity(&self) -> bool {
        self.repr.iter().enumerate().all(|(x, &r)| x == r)
    }

    pub fn is_full(&self) -> bool {
        self.repr.iter().all(|&r| r == 0)
    }

    pub fn num_blocks(&self) -> usize {
        self.repr.iter().enumerate().filter(|(x, &r)| *x == r).count()
    }

    /// Least element of each block, ascending.
    pub fn representatives(&self) -> Vec<usize> {
        (0..self.size()).filter(|&x| self.repr[x] == x).collect()
    }

    /// Block number of each element, blocks numbered by least element.
    pub fn class_index(&self) -> Vec<usize> {
        let mut num = vec![usize::MAX; self.size()];
        let mut next = 0;
        let mut out = vec![0; self.size()];
        for x in 0..self.size() {
            let r = self.repr[x];
            if num[r] == usize::MAX {
                num[r] = next;
                next += 1;
            }
            out[x] = num[r];
        }
        out
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let idx = self.class_index();
        let mut out = vec![Vec::new(); self.num_blocks()];
        for (x, &i) in idx.iter().enumerate() {
            out[i].push(x);
        }
        out
    }

    pub fn block_of(&self, x: usize) -> Vec<usize> {
        let r = self.repr[x];
        (0..self.size()).filter(|&y| self.repr[y] == r).collect()
    }

    /// All ordered pairs `(a,b)` with `a ~ b`, lexicographic.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let blocks = self.blocks();
        let idx = self.class_index();
        let mut out = Vec::new();
        for a in 0..self.size() {
            for &b in &blocks[idx[a]] {
                out.push((a, b));
            }
        }
        out
    }

    /// Pairs `(rep, x)` spanning each block.
    pub fn spanning_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.size())
            .filter(|&x| self.repr[x] != x)
            .map(|x| (self.repr[x], x))
            .collect()
    }

    pub fn leq(&self, other: &Partition) -> bool {
        self.size() == other.size() && (0..self.size()).all(|x| other.related(x, self.repr[x]))
    }

    pub fn lt(&self, other: &Partition) -> bool {
        self != other && self.leq(other)
    }

    pub fn join(&self, other: &Partition) -> Result<Partition> {
        if self.size() != other.size() {
            return Err(Error::SizeMismatch(self.size(), other.size()));
        }
        let mut uf = UnionFind::new(self.size());
        for x in 0..self.size() {
            uf.union(x, self.repr[x]);
            uf.union(x, other.repr[x]);
        }
        Ok(uf.to_partition())
    }

    /// Join of partitions on the same universe (panics on a size mismatch).
    pub fn vee(&self, other: &Partition) -> Partition {
        self.join(other).expect("partitions of different sizes")
    }

    /// Meet of partitions on the same universe (panics on a size mismatch).
    pub fn wedge(&self, other: &Partition) -> Partition {
        self.meet(other).expect("partitions of different sizes")
    }

    pub fn meet(&self, other: &Partition) -> Result<Partition> {
        if self.size() != other.size() {
            return Err(Error::SizeMismatch(self.size(), other.size()));
        }
        let mut first: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
        let repr = (0..self.size())
            .map(|x| *first.entry((self.repr[x], other.repr[x])).or_insert(x))
            .collect();
        Ok(Partition { repr })
    }

    /// `x ~ y` iff `f(x)` and `f(y)` are related by `self` (a partition of the target).
    pub fn preimage(&self, f: &ElementMap) -> Partition {
        let vals: Vec<usize> = f.images().iter().map(|&y| self.repr[y]).collect();
        Partition::kernel_of(&vals)
    }

    /// The relation `{(f x, f y) : x ~ y}` on the target; a partition when `f` is
    /// onto and its kernel lies below `self`.
    pub fn image(&self, f: &ElementMap) -> Partition {
        Partition::from_pairs(
            f.target_size(),
            (0..self.size()).map(|x| (f.apply(x), f.apply(self.repr[x]))),
        )
    }

    /// Restriction to the listed elements, renumbered by position.
    pub fn restrict(&self, elems: &[usize]) -> Partition {
        let vals: Vec<usize> = elems.iter().map(|&x| self.repr[x]).collect();
        Partition::kernel_of(&vals)
    }

    /// Whether `set` meets every block exactly once.
    pub fn is_transversal(&self, set: &BTreeSet<usize>) -> bool {
        let reps: BTreeSet<usize> = set.iter().map(|&x| self.repr[x]).collect();
        reps.len() == set.len() && reps.len() == self.num_blocks()
    }
}

/// A binary relation as a dense boolean matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    n: usize,
    bits: Vec<bool>,
}

impl Relation {
    pub fn empty(n: usize) -> Relation {
        Relation {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn from_partition(p: &Partition) -> Relation {
        let mut r = Relation::empty(p.size());
        for (a, b) in p.pairs() {
            r.insert(a, b);
        }
        r
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Relation {
        let mut r = Relation::empty(n);
        for (a, b) in pairs {
            r.insert(a, b);
        }
        r
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, a: usize, b: usize) {
        self.bits[a * self.n + b] = true;
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.n + b]
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|a| (0..self.n).map(move |b| (a, b)))
            .filter(|&(a, b)| self.contains(a, b))
            .collect()
    }

    pub fn compose(&self, other: &Relation) -> Relation {
        let n = self.n;
        let mut r = Relation::empty(n);
        for a in 0..n {
            for b in 0..n {
                if self.contains(a, b) {
                    for c in 0..n {
                        if other.contains(b, c) {
                            r.insert(a, c);
                        }
                    }
                }
            }
        }
        r
    }

    pub fn is_reflexive(&self) -> bool {
        (0..self.n).all(|a| self.contains(a, a))
    }

    pub fn is_symmetric(&self) -> bool {
        self.pairs().iter().all(|&(a, b)| self.contains(b, a))
    }

    pub fn is_transitive(&self) -> bool {
        self.compose(self).pairs().iter().all(|&(a, b)| self.contains(a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_form_is_unique() {
        let a = Partition::from_blocks(4, &[vec![2, 0], vec![3, 1]]).unwrap();
        let b = Partition::from_pairs(4, [(2, 0), (1, 3)]);
        assert_eq!(a, b);
        assert_eq!(a.blocks(), vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(a.to_string(), "{{0,2},{1,3}}");
    }

    #[test]
    fn join_meet_and_order() {
        let e1 = Partition::from_blocks(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let e2 = Partition::from_blocks(4, &[vec![0, 2], vec![1, 3]]).unwrap();
        assert_eq!(e1.join(&e2).unwrap(), Partition::full(4));
        assert_eq!(e1.meet(&e2).unwrap(), Partition::identity(4));
        assert_eq!(e1.join(&Partition::identity(4)).unwrap(), e1);
        assert!(Partition::identity(4).leq(&e1));
        assert!(!e1.leq(&e2));
        assert!(Partition::from_blocks(4, &[vec![0, 1]]).is_err());
    }

    #[test]
    fn preimage_and_image() {
        let f = ElementMap::new(2, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(Partition::kernel(&f).blocks(), vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(Partition::identity(2).preimage(&f), Partition::kernel(&f));
        assert_eq!(Partition::kernel(&f).image(&f), Partition::identity(2));
    }

    #[test]
    fn relation_composition() {
        let e1 = Relation::from_partition(&Partition::from_blocks(3, &[vec![0, 1], vec![2]]).unwrap());
        let e2 = Relation::from_partition(&Partition::from_blocks(3, &[vec![0], vec![1, 2]]).unwrap());
        assert!(e1.compose(&e2) != e2.compose(&e1));
        assert!(e1.is_transitive() && e1.is_symmetric() && e1.is_reflexive());
    }
}

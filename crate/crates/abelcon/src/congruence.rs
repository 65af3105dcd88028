//! Principal congruences, congruence lattices and the lattice predicates
//! used by the commutator-theoretic checks.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::algebra::Algebra;
use crate::error::{Error, Result};
use crate::partition::{Partition, Relation, UnionFind};

pub const DEFAULT_LATTICE_CAP: usize = 100_000;

/// The distinct basic translations of an algebra: one operation with all but
/// one argument fixed to constants.
#[derive(Debug, Clone)]
pub struct Translations {
    maps: Vec<Vec<u32>>,
}

impl Translations {
    pub fn new(a: &Algebra) -> Translations {
        let n = a.size();
        let mut seen: HashSet<Vec<u32>> = HashSet::new();
        let mut maps = Vec::new();
        let identity: Vec<u32> = (0..n as u32).collect();
        for op in a.ops() {
            let k = op.arity;
            let strides = op.strides();
            for slot in 0..k {
                let params = n.pow(k as u32 - 1);
                for p in 0..params {
                    // spread the parameter digits over the slots other than `slot`
                    let mut base = 0;
                    let mut r = p;
                    for j in (0..k).rev() {
                        if j == slot {
                            continue;
                        }
                        base += (r % n) * strides[j];
                        r /= n;
                    }
                    let t: Vec<u32> = (0..n)
                        .map(|x| op.table[base + x * strides[slot]] as u32)
                        .collect();
                    let constant = t.iter().all(|&v| v == t[0]);
                    if !constant && t != identity && seen.insert(t.clone()) {
                        maps.push(t);
                    }
                }
            }
        }
        Translations { maps }
    }

    pub fn maps(&self) -> &[Vec<u32>] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

/// The congruence generated by `pairs`.
pub fn congruence_generated(n: usize, tr: &Translations, pairs: &[(usize, usize)]) -> Partition {
    let mut uf = UnionFind::new(n);
    let mut work: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in pairs {
        if uf.union(a, b) {
            work.push((a, b));
        }
    }
    while let Some((u, v)) = work.pop() {
        for t in tr.maps() {
            let (tu, tv) = (t[u] as usize, t[v] as usize);
            if uf.union(tu, tv) {
                work.push((tu, tv));
            }
        }
    }
    uf.to_partition()
}

/// Cg(a,b).
pub fn principal_congruence(a: &Algebra, x: usize, y: usize) -> Result<Partition> {
    for &e in &[x, y] {
        if e >= a.size() {
            return Err(Error::OutOfRange {
                element: e,
                size: a.size(),
            });
        }
    }
    Ok(congruence_generated(a.size(), &Translations::new(a), &[(x, y)]))
}

/// A description of the first place `p` fails to be compatible, if any.
pub fn compatibility_failure(a: &Algebra, p: &Partition) -> Option<String> {
    compatibility_failure_with(&Translations::new(a), p)
}

pub fn compatibility_failure_with(tr: &Translations, p: &Partition) -> Option<String> {
    for (u, v) in p.spanning_pairs() {
        for t in tr.maps() {
            let (tu, tv) = (t[u] as usize, t[v] as usize);
            if !p.related(tu, tv) {
                return Some(format!("pair ({u},{v}) maps to unrelated ({tu},{tv})"));
            }
        }
    }
    None
}

/// Cg(a,b) for every pair `a < b`, indexed by `a*n + b`.
#[derive(Debug, Clone)]
pub struct PrincipalTable {
    n: usize,
    table: Vec<Option<Partition>>,
}

impl PrincipalTable {
    pub fn new(a: &Algebra) -> PrincipalTable {
        let n = a.size();
        let tr = Translations::new(a);
        let mut table = vec![None; n * n];
        for x in 0..n {
            for y in x + 1..n {
                table[x * n + y] = Some(congruence_generated(n, &tr, &[(x, y)]));
            }
        }
        PrincipalTable { n, table }
    }

    pub fn get(&self, x: usize, y: usize) -> Partition {
        let (x, y) = if x <= y { (x, y) } else { (y, x) };
        if x == y {
            return Partition::identity(self.n);
        }
        self.table[x * self.n + y].clone().unwrap()
    }

    /// Distinct principal congruences in first-occurrence order.
    pub fn distinct(&self) -> Vec<Partition> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for p in self.table.iter().flatten() {
            if seen.insert(p.clone()) {
                out.push(p.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct CongruenceLattice {
    elements: Vec<Partition>,
    index: HashMap<Partition, usize>,
    leq: Vec<Vec<bool>>,
    covers: Vec<(usize, usize)>,
}

/// All congruences: principal ones closed under joins.
pub fn congruence_lattice(a: &Algebra) -> Result<CongruenceLattice> {
    congruence_lattice_capped(a, DEFAULT_LATTICE_CAP)
}

pub fn congruence_lattice_capped(a: &Algebra, cap: usize) -> Result<CongruenceLattice> {
    let principals = PrincipalTable::new(a).distinct();
    let n = a.size();
    let mut elements = vec![Partition::identity(n)];
    let mut seen: HashSet<Partition> = elements.iter().cloned().collect();
    for p in &principals {
        if seen.insert(p.clone()) {
            elements.push(p.clone());
        }
    }
    let mut i = 0;
    while i < elements.len() {
        for p in &principals {
            let j = elements[i].vee(p);
            if seen.insert(j.clone()) {
                if elements.len() >= cap {
                    return Err(Error::CapExceeded {
                        cap: "lattice size cap",
                        limit: cap,
                    });
                }
                elements.push(j);
            }
        }
        i += 1;
    }
    Ok(CongruenceLattice::from_elements(elements))
}

impl CongruenceLattice {
    /// Builds the order data for a join-closed family containing 0 and 1.
    pub fn from_elements(mut elements: Vec<Partition>) -> CongruenceLattice {
        elements.sort_by(|x, y| y.num_blocks().cmp(&x.num_blocks()).then_with(|| x.cmp(y)));
        elements.dedup();
        let index: HashMap<Partition, usize> = elements.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let m = elements.len();
        let leq: Vec<Vec<bool>> = (0..m)
            .map(|i| (0..m).map(|j| elements[i].leq(&elements[j])).collect())
            .collect();
        // strict order implies strictly fewer blocks, hence a larger index
        let mut covers = Vec::new();
        for i in 0..m {
            let mut minimal: Vec<usize> = Vec::new();
            for j in i + 1..m {
                if leq[i][j] && !minimal.iter().any(|&k| leq[k][j]) {
                    minimal.push(j);
                    covers.push((i, j));
                }
            }
        }
        CongruenceLattice {
            elements,
            index,
            leq,
            covers,
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Partition] {
        &self.elements
    }

    pub fn get(&self, i: usize) -> &Partition {
        &self.elements[i]
    }

    pub fn index_of(&self, p: &Partition) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn contains(&self, p: &Partition) -> bool {
        self.index.contains_key(p)
    }

    pub fn bottom(&self) -> usize {
        0
    }

    pub fn top(&self) -> usize {
        self.elements.len() - 1
    }

    pub fn leq(&self, i: usize, j: usize) -> bool {
        self.leq[i][j]
    }

    pub fn join(&self, i: usize, j: usize) -> usize {
        self.index[&self.elements[i].vee(&self.elements[j])]
    }

    pub fn meet(&self, i: usize, j: usize) -> usize {
        self.index[&self.elements[i].wedge(&self.elements[j])]
    }

    pub fn join_table(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| (0..self.len()).map(|j| self.join(i, j)).collect()).collect()
    }

    pub fn meet_table(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| (0..self.len()).map(|j| self.meet(i, j)).collect()).collect()
    }

    pub fn covers(&self) -> &[(usize, usize)] {
        &self.covers
    }

    pub fn is_cover(&self, i: usize, j: usize) -> bool {
        self.covers.contains(&(i, j))
    }

    pub fn upper_covers(&self, i: usize) -> Vec<usize> {
        self.covers.iter().filter(|c| c.0 == i).map(|c| c.1).collect()
    }

    pub fn lower_covers(&self, j: usize) -> Vec<usize> {
        self.covers.iter().filter(|c| c.1 == j).map(|c| c.0).collect()
    }

    /// Elements of the interval `I[lo,hi]`.
    pub fn interval(&self, lo: usize, hi: usize) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.leq[lo][k] && self.leq[k][hi]).collect()
    }

    pub fn atoms(&self) -> Vec<usize> {
        self.upper_covers(self.bottom())
    }

    /// Lengths of all maximal chains of `I[lo,hi]` (as the set of distinct lengths).
    pub fn chain_lengths(&self, lo: usize, hi: usize) -> BTreeSet<usize> {
        let mut memo: HashMap<usize, BTreeSet<usize>> = HashMap::new();
        self.chain_lengths_from(lo, hi, &mut memo)
    }

    fn chain_lengths_from(&self, x: usize, hi: usize, memo: &mut HashMap<usize, BTreeSet<usize>>) -> BTreeSet<usize> {
        if x == hi {
            return [0].into();
        }
        if let Some(s) = memo.get(&x) {
            return s.clone();
        }
        let mut out = BTreeSet::new();
        for y in self.upper_covers(x) {
            if self.leq[y][hi] {
                for l in self.chain_lengths_from(y, hi, memo) {
                    out.insert(l + 1);
                }
            }
        }
        memo.insert(x, out.clone());
        out
    }

    /// `i^+`, the meet of all strict upper bounds, when it is strictly above `i`.
    pub fn plus(&self, i: usize) -> Option<usize> {
        if i == self.top() {
            return None;
        }
        let mut acc = self.top();
        for j in 0..self.len() {
            if j != i && self.leq[i][j] {
                acc = self.meet(acc, j);
            }
        }
        (acc != i).then_some(acc)
    }

    pub fn is_completely_meet_irreducible(&self, i: usize) -> bool {
        self.plus(i).is_some()
    }
}

#[derive(Debug, Clone)]
pub struct StructureReport {
    pub covers: Vec<(Partition, Partition)>,
    pub meet_irreducibles: Vec<Partition>,
    /// Each completely meet-irreducible element with its unique upper cover.
    pub completely_meet_irreducibles: Vec<(Partition, Partition)>,
    pub monolith: Option<Partition>,
    pub is_si: bool,
}

pub fn structure_report(l: &CongruenceLattice) -> StructureReport {
    let covers = l
        .covers()
        .iter()
        .map(|&(i, j)| (l.get(i).clone(), l.get(j).clone()))
        .collect();
    let meet_irreducibles = (0..l.len())
        .filter(|&i| i != l.top() && l.upper_covers(i).len() == 1)
        .map(|i| l.get(i).clone())
        .collect();
    let completely_meet_irreducibles = (0..l.len())
        .filter_map(|i| l.plus(i).map(|p| (l.get(i).clone(), l.get(p).clone())))
        .collect();
    let atoms = l.atoms();
    let monolith = (atoms.len() == 1).then(|| l.get(atoms[0]).clone());
    StructureReport {
        covers,
        meet_irreducibles,
        completely_meet_irreducibles,
        is_si: monolith.is_some(),
        monolith,
    }
}

/// `(alpha,beta)` is perspective up to `(gamma,delta)`: `beta ^ gamma = alpha` and
/// `beta v gamma = delta`.
pub fn check_perspectivity(
    l: &CongruenceLattice,
    low: (&Partition, &Partition),
    high: (&Partition, &Partition),
) -> Result<bool> {
    for p in [low.0, low.1, high.0, high.1] {
        if !l.contains(p) {
            return Err(Error::Precondition(format!("{p} is not in the lattice")));
        }
    }
    Ok(perspective(low, high))
}

/// The perspectivity test on bare partitions.
pub fn perspective(low: (&Partition, &Partition), high: (&Partition, &Partition)) -> bool {
    let (alpha, beta) = low;
    let (gamma, delta) = high;
    beta.wedge(gamma) == *alpha && beta.vee(gamma) == *delta
}

pub fn permutes(x: &Partition, y: &Partition) -> bool {
    let rx = Relation::from_partition(x);
    let ry = Relation::from_partition(y);
    rx.compose(&ry) == ry.compose(&rx)
}

#[derive(Debug, Clone)]
pub struct IntervalReport {
    pub modular: bool,
    pub permuting: bool,
    /// False when the quotient was not found to be abelian.
    pub precondition_verified: bool,
    pub witness: Option<String>,
}

impl IntervalReport {
    pub fn passed(&self) -> bool {
        self.modular && self.permuting
    }
}

/// Checks the modular law and permutability on `I[alpha,beta]`.
pub fn check_interval_modular_permuting(
    a: &Algebra,
    l: &CongruenceLattice,
    alpha: &Partition,
    beta: &Partition,
) -> Result<IntervalReport> {
    let (Some(lo), Some(hi)) = (l.index_of(alpha), l.index_of(beta)) else {
        return Err(Error::Precondition("interval ends must be congruences".into()));
    };
    if !l.leq(lo, hi) {
        return Err(Error::Precondition("alpha must lie below beta".into()));
    }
    let precondition_verified = crate::centrality::centralizes(a, beta, beta, alpha)?.holds;
    Ok(interval_modular_permuting(l, lo, hi, precondition_verified))
}

pub fn interval_modular_permuting(l: &CongruenceLattice, lo: usize, hi: usize, precondition_verified: bool) -> IntervalReport {
    let iv = l.interval(lo, hi);
    let mut witness = None;
    let mut permuting = true;
    'perm: for &x in &iv {
        for &y in &iv {
            if x < y && !permutes(l.get(x), l.get(y)) {
                permuting = false;
                witness = Some(format!("{} and {} do not permute", l.get(x), l.get(y)));
                break 'perm;
            }
        }
    }
    let mut modular = true;
    'modl: for &x in &iv {
        for &y in &iv {
            for &z in &iv {
                // x <= z implies x v (y ^ z) = (x v y) ^ z
                if l.leq(x, z) && l.join(x, l.meet(y, z)) != l.meet(l.join(x, y), z) {
                    modular = false;
                    witness.get_or_insert(format!(
                        "modular law fails for x={}, y={}, z={}",
                        l.get(x),
                        l.get(y),
                        l.get(z)
                    ));
                    break 'modl;
                }
            }
        }
    }
    IntervalReport {
        modular,
        permuting,
        precondition_verified,
        witness,
    }
}

/// Brute force: the congruences among all partitions of `0..n` (small `n` only).
pub fn all_congruences_brute_force(a: &Algebra) -> Vec<Partition> {
    let tr = Translations::new(a);
    all_partitions(a.size())
        .into_iter()
        .filter(|p| compatibility_failure_with(&tr, p).is_none())
        .collect()
}

/// Every partition of `0..n` via restricted growth strings.
pub fn all_partitions(n: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    fn rec(i: usize, max: usize, rgs: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if i == rgs.len() {
            out.push(Partition::kernel_of(rgs));
            return;
        }
        for v in 0..=max + 1 {
            rgs[i] = v;
            rec(i + 1, max.max(v), rgs, out);
        }
    }
    if n == 0 {
        return out;
    }
    rec(1, 0, &mut rgs, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn p(n: usize, b: &[&[usize]]) -> Partition {
        Partition::from_blocks(n, &b.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn principal_examples() {
        let z4 = fixtures::z4();
        assert_eq!(principal_congruence(&z4, 0, 2).unwrap(), p(4, &[&[0, 2], &[1, 3]]));
        assert_eq!(principal_congruence(&z4, 0, 1).unwrap(), Partition::full(4));
        assert_eq!(principal_congruence(&z4, 3, 3).unwrap(), Partition::identity(4));
    }

    #[test]
    fn lattice_examples() {
        let z4 = congruence_lattice(&fixtures::z4()).unwrap();
        assert_eq!(z4.len(), 3);
        assert_eq!(z4.get(1), &p(4, &[&[0, 2], &[1, 3]]));
        assert_eq!(congruence_lattice(&fixtures::s2()).unwrap().len(), 2);
        let sq = congruence_lattice(&fixtures::two_sq()).unwrap();
        assert_eq!(sq.len(), 5);
        assert!(sq.contains(&p(4, &[&[0, 3], &[1, 2]])));
    }

    #[test]
    fn structure_examples() {
        let r = structure_report(&congruence_lattice(&fixtures::z4()).unwrap());
        assert_eq!(r.monolith, Some(p(4, &[&[0, 2], &[1, 3]])));
        assert!(r.is_si);
        let r = structure_report(&congruence_lattice(&fixtures::two_sq()).unwrap());
        assert!(!r.is_si && r.monolith.is_none());
        let r = structure_report(&congruence_lattice(&fixtures::s2()).unwrap());
        assert_eq!(r.monolith, Some(Partition::full(2)));
    }

    #[test]
    fn perspectivity_examples() {
        let sq = congruence_lattice(&fixtures::two_sq()).unwrap();
        let (e1, e2) = fixtures::two_sq_kernels();
        let (zero, one) = (Partition::identity(4), Partition::full(4));
        assert!(check_perspectivity(&sq, (&zero, &e1), (&e2, &one)).unwrap());
        assert!(check_perspectivity(&sq, (&zero, &e1), (&zero, &e1)).unwrap());
        let z4 = congruence_lattice(&fixtures::z4()).unwrap();
        let th = p(4, &[&[0, 2], &[1, 3]]);
        let (zero, one) = (Partition::identity(4), Partition::full(4));
        assert!(!check_perspectivity(&z4, (&zero, &th), (&th, &one)).unwrap());
        let bad = p(4, &[&[0, 1], &[2], &[3]]);
        assert!(check_perspectivity(&z4, (&zero, &bad), (&th, &one)).is_err());
    }

    #[test]
    fn interval_examples() {
        for a in [fixtures::z4(), fixtures::two_sq()] {
            let l = congruence_lattice(&a).unwrap();
            let r = check_interval_modular_permuting(&a, &l, &Partition::identity(a.size()), &Partition::full(a.size())).unwrap();
            assert!(r.passed() && r.precondition_verified);
        }
        let s2 = fixtures::s2();
        let l = congruence_lattice(&s2).unwrap();
        let r = check_interval_modular_permuting(&s2, &l, &Partition::identity(2), &Partition::full(2)).unwrap();
        assert!(!r.precondition_verified);
    }

    #[test]
    fn partition_enumeration_counts() {
        // Bell numbers
        let counts: Vec<usize> = (1..=6).map(|n| all_partitions(n).len()).collect();
        assert_eq!(counts, vec![1, 2, 5, 15, 52, 203]);
    }
}

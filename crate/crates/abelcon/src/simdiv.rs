//! Division rings of abelian minimal congruences and their actions on classes,
//! the ring of tuples commuting with polynomial hom-sets, transfer along
//! perspectivities, the similarity relation, and similarity bridges.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap;

use crate::algebra::{
    find_isomorphism, is_congruence, is_subuniverse, polynomial_seeds, product, quotient, Algebra, ElementMap, Operation,
};
use crate::centrality::is_abelian;
use crate::closure::{close, Limits};
use crate::congruence::{compatibility_failure, perspective, PrincipalTable};
use crate::diffalg::{difference_algebra, lambda_embed, range_of_class, DiffAlgebra};
use crate::error::{internal, precondition, Error, Result};
use crate::partition::{Partition, Relation};
use crate::report::Report;
use crate::wdt::{class_group, is_minimal, transversal_automorphism, verify_wdt, GroupOnClass, Scope, WdtCertificate};

/// Default bound on search nodes, polynomial tables and transversals scanned.
pub const DEFAULT_SEARCH_CAP: usize = 1_000_000;

/// A finite ring on `0..size` given by tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingTables {
    pub size: usize,
    pub zero: usize,
    pub one: usize,
    pub add: Vec<usize>,
    pub neg: Vec<usize>,
    pub mul: Vec<usize>,
}

impl RingTables {
    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        self.add[a * self.size + b]
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a * self.size + b]
    }

    /// `(R; add, mul)`, with the same signature as `Field::as_algebra`.
    pub fn as_algebra(&self) -> Algebra {
        let q = self.size;
        Algebra::new(
            q,
            vec![
                Operation::from_fn("add", 2, q, |a| self.add(a[0], a[1])),
                Operation::from_fn("mul", 2, q, |a| self.mul(a[0], a[1])),
            ],
        )
        .expect("ring tables are in range")
    }

    pub fn axiom_failure(&self) -> Option<String> {
        let q = self.size;
        for a in 0..q {
            if self.add(a, self.zero) != a {
                return Some(format!("{a} + 0 != {a}"));
            }
            if self.add(a, self.neg[a]) != self.zero {
                return Some(format!("{a} + (-{a}) != 0"));
            }
            if self.mul(a, self.one) != a || self.mul(self.one, a) != a {
                return Some(format!("1 is not neutral for {a}"));
            }
            for b in 0..q {
                if self.add(a, b) != self.add(b, a) {
                    return Some(format!("{a} + {b} != {b} + {a}"));
                }
                for c in 0..q {
                    if self.add(self.add(a, b), c) != self.add(a, self.add(b, c)) {
                        return Some(format!("addition is not associative at ({a},{b},{c})"));
                    }
                    if self.mul(self.mul(a, b), c) != self.mul(a, self.mul(b, c)) {
                        return Some(format!("multiplication is not associative at ({a},{b},{c})"));
                    }
                    if self.mul(a, self.add(b, c)) != self.add(self.mul(a, b), self.mul(a, c)) {
                        return Some(format!("left distributivity fails at ({a},{b},{c})"));
                    }
                    if self.mul(self.add(a, b), c) != self.add(self.mul(a, c), self.mul(b, c)) {
                        return Some(format!("right distributivity fails at ({a},{b},{c})"));
                    }
                }
            }
        }
        None
    }

    /// A nonzero element with no two-sided inverse.
    pub fn non_invertible(&self) -> Option<usize> {
        (0..self.size)
            .filter(|&a| a != self.zero)
            .find(|&a| !(0..self.size).any(|b| self.mul(a, b) == self.one && self.mul(b, a) == self.one))
    }

    pub fn non_commuting(&self) -> Option<(usize, usize)> {
        (0..self.size)
            .flat_map(|a| (0..self.size).map(move |b| (a, b)))
            .find(|&(a, b)| self.mul(a, b) != self.mul(b, a))
    }

    pub fn is_division_ring(&self) -> bool {
        self.zero != self.one && self.axiom_failure().is_none() && self.non_invertible().is_none()
    }

    fn push_checks(&self, r: &mut Report, prefix: &str, anchor: &str) {
        let ax = self.axiom_failure();
        r.push(
            &format!("{prefix}-axioms"),
            "the tables form a unital ring",
            anchor,
            ax.is_none(),
            ax,
        );
        let inv = self.non_invertible();
        let ok = inv.is_none() && self.zero != self.one;
        r.push(
            &format!("{prefix}-division"),
            "0 != 1 and every nonzero element is invertible",
            anchor,
            ok,
            (!ok).then(|| inv.map_or("0 = 1".to_string(), |a| format!("{a} has no inverse"))),
        );
        let nc = self.non_commuting();
        r.push(
            &format!("{prefix}-commutative"),
            "multiplication is commutative, as in every finite division ring",
            anchor,
            nc.is_none(),
            nc.map(|(a, b)| format!("{a}*{b} != {b}*{a}")),
        );
    }
}

/// Why `map` is not a bijective unital ring homomorphism from `a` to `b`, if it is not.
pub fn ring_iso_failure(map: &[usize], a: &RingTables, b: &RingTables) -> Option<String> {
    if map.len() != a.size || a.size != b.size {
        return Some(format!("sizes {} and {} differ", a.size, b.size));
    }
    let image: BTreeSet<usize> = map.iter().copied().collect();
    if image.len() != map.len() || map.iter().any(|&y| y >= b.size) {
        return Some("not a bijection".into());
    }
    if map[a.one] != b.one {
        return Some("1 is not preserved".into());
    }
    for x in 0..a.size {
        for y in 0..a.size {
            if map[a.add(x, y)] != b.add(map[x], map[y]) {
                return Some(format!("sum of {x} and {y} is not preserved"));
            }
            if map[a.mul(x, y)] != b.mul(map[x], map[y]) {
                return Some(format!("product of {x} and {y} is not preserved"));
            }
        }
    }
    None
}

/// An isomorphism between two finite rings, if one exists.
pub fn ring_isomorphism(a: &RingTables, b: &RingTables) -> Result<Option<ElementMap>> {
    find_isomorphism(&a.as_algebra(), &b.as_algebra())
}

/// Ring tables on a set of self-maps; multiplication is composition.
fn tables_from_maps(
    maps: &[Vec<usize>],
    add: &dyn Fn(&[usize], &[usize]) -> Vec<usize>,
    neg: &dyn Fn(&[usize]) -> Vec<usize>,
    zero: &[usize],
) -> Result<RingTables> {
    let index: FxHashMap<&[usize], usize> = maps.iter().enumerate().map(|(i, m)| (m.as_slice(), i)).collect();
    let look = |m: &[usize], what: &str| {
        index
            .get(m)
            .copied()
            .ok_or_else(|| internal(format!("the {what} is not in the carrier")))
    };
    let q = maps.len();
    let id: Vec<usize> = (0..zero.len()).collect();
    let zero_i = look(zero, "zero map")?;
    let one_i = look(&id, "identity map")?;
    let mut at = vec![0; q * q];
    let mut mt = vec![0; q * q];
    for (i, f) in maps.iter().enumerate() {
        for (j, g) in maps.iter().enumerate() {
            at[i * q + j] = look(&add(f, g), "sum of two elements")?;
            let comp: Vec<usize> = g.iter().map(|&x| f[x]).collect();
            mt[i * q + j] = look(&comp, "composite of two elements")?;
        }
    }
    let nt = maps
        .iter()
        .map(|f| look(&neg(f), "negative of an element"))
        .collect::<Result<Vec<_>>>()?;
    Ok(RingTables {
        size: q,
        zero: zero_i,
        one: one_i,
        add: at,
        neg: nt,
        mul: mt,
    })
}

fn next_index(idx: &mut [usize], m: usize) -> bool {
    for j in (0..idx.len()).rev() {
        idx[j] += 1;
        if idx[j] < m {
            return true;
        }
        idx[j] = 0;
    }
    false
}

/// Extends a partial map by everything the operations force; `None` (with
/// the extension undone) on a contradiction.
fn propagate_hom(a: &Algebra, ok: &[Vec<bool>], h: &mut [Option<usize>]) -> Option<Vec<usize>> {
    let n = a.size();
    let mut added = Vec::new();
    loop {
        let assigned: Vec<usize> = (0..n).filter(|&x| h[x].is_some()).collect();
        let m = assigned.len();
        let mut changed = false;
        for op in a.ops() {
            let k = op.arity;
            if k == 0 || m == 0 {
                continue;
            }
            let mut idx = vec![0usize; k];
            let mut args = vec![0usize; k];
            let mut imgs = vec![0usize; k];
            loop {
                for j in 0..k {
                    args[j] = assigned[idx[j]];
                    imgs[j] = h[args[j]].unwrap();
                }
                let y = op.apply(&args);
                let z = op.apply(&imgs);
                let clash = match h[y] {
                    Some(w) => w != z,
                    None if ok[y][z] => {
                        h[y] = Some(z);
                        added.push(y);
                        changed = true;
                        false
                    }
                    None => true,
                };
                if clash {
                    for &x in &added {
                        h[x] = None;
                    }
                    return None;
                }
                if !next_index(&mut idx, m) {
                    break;
                }
            }
        }
        if !changed {
            return Some(added);
        }
    }
}

fn search_endo(
    a: &Algebra,
    allowed: &[Vec<usize>],
    ok: &[Vec<bool>],
    h: &mut Vec<Option<usize>>,
    out: &mut Vec<Vec<usize>>,
    nodes: &mut usize,
    cap: usize,
) -> Result<()> {
    *nodes += 1;
    if *nodes > cap {
        return Err(Error::CapExceeded {
            cap: "endomorphism search cap",
            limit: cap,
        });
    }
    let Some(x) = h.iter().position(|v| v.is_none()) else {
        out.push(h.iter().map(|v| v.unwrap()).collect());
        return Ok(());
    };
    for &c in &allowed[x] {
        h[x] = Some(c);
        if let Some(added) = propagate_hom(a, ok, h) {
            search_endo(a, allowed, ok, h, out, nodes, cap)?;
            for &y in &added {
                h[y] = None;
            }
        }
        h[x] = None;
    }
    Ok(())
}

/// Endomorphisms `h` of `a` with `h(x)` in `allowed[x]`, in lexicographic order.
pub fn restricted_endomorphisms(a: &Algebra, allowed: &[Vec<usize>], cap: usize) -> Result<Vec<Vec<usize>>> {
    let n = a.size();
    if allowed.len() != n {
        return Err(Error::SizeMismatch(allowed.len(), n));
    }
    let mut ok = vec![vec![false; n]; n];
    for (x, cands) in allowed.iter().enumerate() {
        for &y in cands {
            if y >= n {
                return Err(Error::OutOfRange { element: y, size: n });
            }
            ok[x][y] = true;
        }
    }
    let mut out = Vec::new();
    if allowed.iter().any(|c| c.is_empty()) {
        return Ok(out);
    }
    let mut h: Vec<Option<usize>> = allowed
        .iter()
        .map(|c| (c.len() == 1).then(|| c[0]))
        .collect();
    if propagate_hom(a, &ok, &mut h).is_none() {
        return Ok(out);
    }
    let mut nodes = 0;
    search_endo(a, allowed, &ok, &mut h, &mut out, &mut nodes, cap)?;
    Ok(out)
}

/// `0(x)`: the member of `t` in the class of `x`.
fn retraction(phi: &Partition, t: &BTreeSet<usize>) -> Vec<usize> {
    let cls = phi.class_index();
    let mut by_class = vec![usize::MAX; phi.num_blocks()];
    for &e in t {
        by_class[cls[e]] = e;
    }
    cls.iter().map(|&c| by_class[c]).collect()
}

/// `F_{D,phi,T}`: endomorphisms of D fixing T pointwise and preserving phi.
#[derive(Debug, Clone)]
pub struct EndoRing {
    pub algebra: Algebra,
    pub phi: Partition,
    pub transversal: BTreeSet<usize>,
    /// The weak difference term on D used for addition.
    pub cert: WdtCertificate,
    /// Endomorphism tables in lexicographic order; ring element `i` is `carrier[i]`.
    pub carrier: Vec<Vec<usize>>,
    pub tables: RingTables,
    pub checks: Report,
}

impl EndoRing {
    pub fn size(&self) -> usize {
        self.carrier.len()
    }

    pub fn index_of(&self, map: &[usize]) -> Option<usize> {
        self.carrier.binary_search_by(|m| m.as_slice().cmp(map)).ok()
    }
}

pub fn division_ring(
    d: &Algebra,
    phi: &Partition,
    t: &BTreeSet<usize>,
    cert: &WdtCertificate,
    cap: usize,
) -> Result<EndoRing> {
    cert.require_valid(d)?;
    if phi.size() != d.size() {
        return Err(Error::SizeMismatch(phi.size(), d.size()));
    }
    if !is_congruence(d, phi) {
        return Err(Error::NotCongruence(phi.to_string()));
    }
    if !is_minimal(d, phi)? {
        return Err(precondition(format!("{phi} is not a minimal congruence")));
    }
    if !is_abelian(d, phi, None)?.holds {
        return Err(precondition(format!("{phi} is not abelian")));
    }
    if t.iter().any(|&x| x >= d.size()) || !phi.is_transversal(t) {
        return Err(precondition(format!("{t:?} is not a transversal of {phi}")));
    }
    if !is_subuniverse(d, t) {
        return Err(precondition(format!("{t:?} is not a subuniverse")));
    }
    let n = d.size();
    let zero = retraction(phi, t);
    let allowed: Vec<Vec<usize>> = (0..n)
        .map(|x| if t.contains(&x) { vec![x] } else { phi.block_of(x) })
        .collect();
    let carrier = restricted_endomorphisms(d, &allowed, cap)?;
    let add = |f: &[usize], g: &[usize]| (0..n).map(|x| cert.apply(f[x], zero[x], g[x])).collect();
    let neg = |f: &[usize]| (0..n).map(|x| cert.apply(zero[x], f[x], zero[x])).collect();
    let tables = tables_from_maps(&carrier, &add, &neg, &zero)?;

    let anchor = "division-ring";
    let mut checks = Report::new("division-ring");
    let bad = carrier.iter().position(|f| {
        let hom = ElementMap::new(n, f.clone()).map_or(false, |m| m.is_homomorphism(d, d));
        !hom || t.iter().any(|&e| f[e] != e) || phi.pairs().iter().any(|&(x, y)| !phi.related(f[x], f[y]))
    });
    checks.push(
        "ring-carrier",
        "every element is an endomorphism fixing T and preserving phi",
        anchor,
        bad.is_none(),
        bad.map(|i| format!("{:?}", carrier[i])),
    );
    let mut additive = None;
    for &e in t {
        let g = GroupOnClass::from_d(&|x, y, z| cert.apply(x, y, z), &phi.block_of(e), e)?;
        for f in &carrier {
            for &x in &g.class {
                for &y in &g.class {
                    if additive.is_none() && f[g.add(x, y)] != g.add(f[x], f[y]) {
                        additive = Some(format!("{f:?} at {x}+{y}"));
                    }
                }
            }
        }
    }
    checks.push(
        "ring-class-endomorphisms",
        "each element restricts to an endomorphism of every class group",
        anchor,
        additive.is_none(),
        additive,
    );
    tables.push_checks(&mut checks, "ring", anchor);
    Ok(EndoRing {
        algebra: d.clone(),
        phi: phi.clone(),
        transversal: t.clone(),
        cert: cert.clone(),
        carrier,
        tables,
        checks,
    })
}

/// The weak difference term of A acting on D(A,theta), verified there.
pub fn difference_certificate(da: &DiffAlgebra) -> Result<WdtCertificate> {
    let cert = verify_wdt(&da.algebra, &da.d_operation().table, Scope::Base)?;
    if !cert.verdict {
        return Err(internal(format!(
            "d is not a weak difference term of the difference algebra: {}",
            cert.witness.clone().unwrap_or_default()
        )));
    }
    Ok(cert)
}

/// `F_theta = F_{D, phi, D°}`.
pub fn field_of(da: &DiffAlgebra, cap: usize) -> Result<EndoRing> {
    let cert = difference_certificate(da)?;
    let t: BTreeSet<usize> = da.transversal.iter().copied().collect();
    division_ring(&da.algebra, &da.phi, &t, &cert, cap)
}

/// `lambda . a = (lambda_e^{-1} o lambda o lambda_e)(a)` on the class of `e`.
#[derive(Debug, Clone)]
pub struct VectorAction {
    pub e: usize,
    pub class: Vec<usize>,
    /// `table[l][p]` is `l . class[p]`.
    pub table: Vec<Vec<usize>>,
    pub dimension: usize,
    pub checks: Report,
}

impl VectorAction {
    pub fn act(&self, lambda: usize, a: usize) -> Option<usize> {
        let p = self.class.iter().position(|&x| x == a)?;
        Some(self.table[lambda][p])
    }
}

pub fn canonical_action(da: &DiffAlgebra, field: &EndoRing, e: usize) -> Result<VectorAction> {
    let n = da.base.size();
    if e >= n {
        return Err(Error::OutOfRange { element: e, size: n });
    }
    if !is_minimal(&da.base, &da.theta)? {
        return Err(precondition(format!("{} is not a minimal congruence", da.theta)));
    }
    let dt: BTreeSet<usize> = da.transversal.iter().copied().collect();
    if field.algebra != da.algebra || field.phi != da.phi || field.transversal != dt {
        return Err(precondition("the ring is not the division ring of this difference algebra"));
    }
    let anchor = "vector-action";
    let mut checks = Report::new("vector-action");

    for block in da.theta.blocks() {
        let ran = range_of_class(da, &block)?;
        for f in &field.carrier {
            if let Some(&q) = ran.elements.iter().find(|&&q| !ran.elements.contains(&f[q])) {
                return Err(internal(format!(
                    "the range of {block:?} is not closed under {f:?} at {q}"
                )));
            }
        }
    }
    checks.push(
        "ranges-are-subspaces",
        "every range is closed under every ring element",
        anchor,
        true,
        None,
    );

    let lam = lambda_embed(da, e)?;
    let class = lam.class.clone();
    let inv: BTreeMap<usize, usize> = lam.images.iter().zip(&class).map(|(&q, &x)| (q, x)).collect();
    let mut table = Vec::with_capacity(field.size());
    for f in &field.carrier {
        let row = lam
            .images
            .iter()
            .map(|&q| {
                inv.get(&f[q])
                    .copied()
                    .ok_or_else(|| internal(format!("{} leaves the range of lambda_{e}", f[q])))
            })
            .collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    let grp = class_group(&da.base, &da.cert, &da.theta, e)?;
    let pos = |x: usize| class.iter().position(|&c| c == x).unwrap();
    let act = |l: usize, x: usize| table[l][pos(x)];
    let rt = &field.tables;
    let mut bad = None;
    for l in 0..field.size() {
        for &a in &class {
            if bad.is_some() {
                break;
            }
            if l == rt.one && act(l, a) != a {
                bad = Some(format!("1 . {a} != {a}"));
            }
            for m in 0..field.size() {
                if act(rt.add(l, m), a) != grp.add(act(l, a), act(m, a)) {
                    bad = Some(format!("({l}+{m}) . {a} differs"));
                }
                if act(rt.mul(l, m), a) != act(l, act(m, a)) {
                    bad = Some(format!("({l}{m}) . {a} differs"));
                }
            }
            for &b in &class {
                if act(l, grp.add(a, b)) != grp.add(act(l, a), act(l, b)) {
                    bad = Some(format!("{l} . ({a}+{b}) differs"));
                }
            }
        }
    }
    checks.push(
        "vector-space-axioms",
        "the action makes the class group a left vector space",
        anchor,
        bad.is_none(),
        bad,
    );
    checks.push(
        "lambda-linear",
        "lambda_e is an additive embedding into the derived group",
        anchor,
        lam.injective && lam.homomorphism,
        lam.witness.clone(),
    );

    let mut span: BTreeSet<usize> = [e].into();
    let mut dimension = 0;
    while span.len() < class.len() {
        let a = *class.iter().find(|x| !span.contains(x)).unwrap();
        span = span
            .iter()
            .flat_map(|&s| (0..field.size()).map(move |l| (s, l)))
            .map(|(s, l)| grp.add(s, act(l, a)))
            .collect();
        dimension += 1;
    }
    let expected = field.size().checked_pow(dimension as u32);
    checks.push(
        "class-size-power",
        "|class| = |F|^dim",
        anchor,
        expected == Some(class.len()),
        Some(format!("|class| = {}, |F| = {}, dim = {dimension}", class.len(), field.size())),
    );
    Ok(VectorAction {
        e,
        class,
        table,
        dimension,
        checks,
    })
}

/// The ring of tuples `(lambda_i)` of class-group endomorphisms commuting with
/// every restricted polynomial `C_j -> C_i` fixing the transversal.
#[derive(Debug, Clone)]
pub struct FreeseData {
    pub theta: Partition,
    pub classes: Vec<Vec<usize>>,
    /// `transversal[i]` is `e_i`, the chosen member of `classes[i]`.
    pub transversal: Vec<usize>,
    /// `hom_sets[i][j]`: maps `C_j -> C_i`, tabulated along `classes[j]`.
    pub hom_sets: Vec<Vec<Vec<Vec<usize>>>>,
    /// Ring elements as self-maps of A acting as `lambda_i` on `C_i`.
    pub elements: Vec<Vec<usize>>,
    pub tables: RingTables,
    pub field: EndoRing,
    /// `phi[l]` is the element matching field element `l`.
    pub phi: Vec<usize>,
    pub checks: Report,
}

/// The endomorphisms of a finite abelian group, tabulated along `g.class`.
fn group_endomorphisms(g: &GroupOnClass) -> Vec<Vec<usize>> {
    let class = &g.class;
    let k = class.len();
    let pos: BTreeMap<usize, usize> = class.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut gens = Vec::new();
    let mut span: BTreeSet<usize> = [g.zero].into();
    while span.len() < k {
        let a = *class.iter().find(|x| !span.contains(x)).unwrap();
        gens.push(a);
        loop {
            let before = span.len();
            let cur: Vec<usize> = span.iter().copied().collect();
            span.extend(cur.iter().map(|&x| g.add(x, a)));
            if span.len() == before {
                break;
            }
        }
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; gens.len()];
    loop {
        let imgs: Vec<usize> = idx.iter().map(|&i| class[i]).collect();
        let mut map: Vec<Option<usize>> = vec![None; k];
        map[pos[&g.zero]] = Some(g.zero);
        let mut queue = vec![g.zero];
        let mut consistent = true;
        while let Some(x) = queue.pop() {
            let fx = map[pos[&x]].unwrap();
            for (gi, &gen) in gens.iter().enumerate() {
                let y = g.add(x, gen);
                let v = g.add(fx, imgs[gi]);
                match map[pos[&y]] {
                    None => {
                        map[pos[&y]] = Some(v);
                        queue.push(y);
                    }
                    Some(w) if w != v => consistent = false,
                    _ => {}
                }
            }
        }
        if consistent {
            let f: Vec<usize> = map.into_iter().map(|v| v.unwrap()).collect();
            let additive = (0..k).all(|i| (0..k).all(|j| f[pos[&g.add(class[i], class[j])]] == g.add(f[i], f[j])));
            if additive {
                out.push(f);
            }
        }
        if !next_index(&mut idx, k) {
            break;
        }
    }
    out.sort();
    out
}

pub fn freese_ring(
    a: &Algebra,
    theta: &Partition,
    t: &BTreeSet<usize>,
    cert: &WdtCertificate,
    cap: usize,
) -> Result<FreeseData> {
    cert.require_valid(a)?;
    let n = a.size();
    if !is_abelian(a, theta, None)?.holds {
        return Err(precondition(format!("{theta} is not abelian")));
    }
    if !is_minimal(a, theta)? {
        return Err(precondition(format!("{theta} is not a minimal congruence")));
    }
    if t.iter().any(|&x| x >= n) || !theta.is_transversal(t) {
        return Err(precondition(format!("{t:?} is not a transversal of {theta}")));
    }
    let classes = theta.blocks();
    let cls = theta.class_index();
    let transversal: Vec<usize> = classes
        .iter()
        .map(|c| *c.iter().find(|x| t.contains(x)).unwrap())
        .collect();
    let mut pos = vec![0usize; n];
    for c in &classes {
        for (p, &x) in c.iter().enumerate() {
            pos[x] = p;
        }
    }
    let groups = classes
        .iter()
        .zip(&transversal)
        .map(|(_, &e)| class_group(a, cert, theta, e))
        .collect::<Result<Vec<_>>>()?;
    let m = classes.len();
    let anchor = "freese-ring";
    let mut checks = Report::new("freese-ring");

    let mut hom_sets: Vec<Vec<Vec<Vec<usize>>>> = vec![vec![Vec::new(); m]; m];
    for (j, cj) in classes.iter().enumerate() {
        let cl = close(
            a,
            cj.len(),
            &polynomial_seeds(n, cj),
            &Limits::new(cap, "unary polynomial cap"),
            &mut |_, _| false,
        )?;
        let ej = pos[transversal[j]];
        for f in cl.iter() {
            let i = cls[f[ej] as usize];
            if f[ej] as usize == transversal[i] {
                hom_sets[i][j].push(f.iter().map(|&x| x as usize).collect());
            }
        }
    }
    let mut not_hom = None;
    for i in 0..m {
        for j in 0..m {
            for r in &hom_sets[i][j] {
                let (gi, gj) = (&groups[i], &groups[j]);
                for &x in &classes[j] {
                    for &y in &classes[j] {
                        if not_hom.is_none() && r[pos[gj.add(x, y)]] != gi.add(r[pos[x]], r[pos[y]]) {
                            not_hom = Some(format!("{r:?} from class {j} to class {i} at {x}+{y}"));
                        }
                    }
                }
            }
        }
    }
    checks.push(
        "hom-sets-additive",
        "every restricted polynomial fixing the transversal is a group homomorphism",
        anchor,
        not_hom.is_none(),
        not_hom,
    );

    let k = (0..m)
        .find(|&i| classes[i].len() > 1)
        .ok_or_else(|| precondition("theta is the zero congruence"))?;
    let mut elements = Vec::new();
    for lk in group_endomorphisms(&groups[k]) {
        let mut lam: Vec<Option<usize>> = vec![None; n];
        for (p, &x) in classes[k].iter().enumerate() {
            lam[x] = Some(lk[p]);
        }
        let mut consistent = true;
        for i in 0..m {
            if classes[i].len() == 1 {
                lam[transversal[i]] = Some(transversal[i]);
                continue;
            }
            for r in &hom_sets[i][k] {
                for (p, &x) in classes[k].iter().enumerate() {
                    let b = r[p];
                    let v = r[pos[lk[p]]];
                    let _ = x;
                    match lam[b] {
                        None => lam[b] = Some(v),
                        Some(w) if w != v => consistent = false,
                        _ => {}
                    }
                }
            }
        }
        if !consistent {
            continue;
        }
        if let Some(x) = (0..n).find(|&x| lam[x].is_none()) {
            return Err(internal(format!(
                "{x} is not reached from class {k}; theta is not minimal"
            )));
        }
        let f: Vec<usize> = lam.into_iter().map(|v| v.unwrap()).collect();
        let commutes = (0..m).all(|i| {
            (0..m).all(|j| {
                hom_sets[i][j]
                    .iter()
                    .all(|r| classes[j].iter().enumerate().all(|(p, &x)| f[r[p]] == r[pos[f[x]]]))
            })
        });
        let additive = (0..m).all(|i| {
            let g = &groups[i];
            classes[i]
                .iter()
                .all(|&x| classes[i].iter().all(|&y| f[g.add(x, y)] == g.add(f[x], f[y])))
        });
        if commutes && additive {
            elements.push(f);
        }
    }
    elements.sort();
    let zero: Vec<usize> = (0..n).map(|x| transversal[cls[x]]).collect();
    let add = |f: &[usize], g: &[usize]| (0..n).map(|x| cert.apply(f[x], zero[x], g[x])).collect();
    let neg = |f: &[usize]| (0..n).map(|x| cert.apply(zero[x], f[x], zero[x])).collect();
    let tables = tables_from_maps(&elements, &add, &neg, &zero)?;
    tables.push_checks(&mut checks, "freese", anchor);

    let da = difference_algebra(a, theta, cert)?;
    let field = field_of(&da, cap)?;
    checks.push(
        "freese-size",
        "the ring has as many elements as F_theta",
        anchor,
        elements.len() == field.size(),
        Some(format!("{} and {}", elements.len(), field.size())),
    );
    let inv: Vec<BTreeMap<usize, usize>> = (0..m)
        .map(|i| {
            classes[i]
                .iter()
                .map(|&b| (da.class_of(b, transversal[i]).unwrap(), b))
                .collect()
        })
        .collect();
    let index: FxHashMap<&[usize], usize> = elements.iter().enumerate().map(|(i, f)| (f.as_slice(), i)).collect();
    let mut phi = Vec::with_capacity(field.size());
    let mut outside = None;
    for l in &field.carrier {
        let img = (0..n)
            .map(|x| {
                let i = cls[x];
                let q = l[da.class_of(x, transversal[i]).unwrap()];
                inv[i]
                    .get(&q)
                    .copied()
                    .ok_or_else(|| internal(format!("{q} is outside the range of lambda_{}", transversal[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        match index.get(img.as_slice()) {
            Some(&i) => phi.push(i),
            None => {
                outside.get_or_insert(format!("{img:?}"));
                phi.push(usize::MAX);
            }
        }
    }
    let failure = outside
        .map(|w| format!("Phi({w}) is not in the ring"))
        .or_else(|| ring_iso_failure(&phi, &field.tables, &tables));
    checks.push(
        "freese-phi-isomorphism",
        "Phi(lambda) = (lambda_i) is a ring isomorphism from F_theta",
        anchor,
        failure.is_none(),
        failure,
    );
    Ok(FreeseData {
        theta: theta.clone(),
        classes,
        transversal,
        hom_sets,
        elements,
        tables,
        field,
        phi,
        checks,
    })
}

/// The monolith of a subdirectly irreducible algebra.
pub fn monolith(a: &Algebra) -> Result<Partition> {
    let n = a.size();
    let mut m = Partition::full(n);
    for p in PrincipalTable::new(a).distinct() {
        if !p.is_identity() {
            m = m.wedge(&p);
        }
    }
    if n < 2 || m.is_identity() {
        return Err(precondition("the algebra is not subdirectly irreducible"));
    }
    Ok(m)
}

/// `D(A)`: A itself for a nonabelian monolith, `D(A, mu)` otherwise.
#[derive(Debug, Clone)]
pub struct DiffOf {
    pub algebra: Algebra,
    pub monolith: Partition,
    pub abelian: bool,
    pub diff: Option<DiffAlgebra>,
}

impl DiffOf {
    /// A weak difference term certificate for `D(A)`.
    pub fn certificate(&self, base: &WdtCertificate) -> Result<WdtCertificate> {
        match &self.diff {
            Some(da) => difference_certificate(da),
            None => Ok(base.clone()),
        }
    }
}

pub fn diff_of(a: &Algebra, cert: &WdtCertificate) -> Result<DiffOf> {
    let mu = monolith(a)?;
    if is_abelian(a, &mu, None)?.holds {
        let da = difference_algebra(a, &mu, cert)?;
        Ok(DiffOf {
            algebra: da.algebra.clone(),
            monolith: mu,
            abelian: true,
            diff: Some(da),
        })
    } else {
        Ok(DiffOf {
            algebra: a.clone(),
            monolith: mu,
            abelian: false,
            diff: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Similarity {
    pub similar: bool,
    /// An isomorphism `D(A) -> D(B)`.
    pub iso: Option<ElementMap>,
    pub left: DiffOf,
    pub right: DiffOf,
}

pub fn is_similar(a: &Algebra, ca: &WdtCertificate, b: &Algebra, cb: &WdtCertificate) -> Result<Similarity> {
    if !a.same_signature(b) {
        return Err(Error::SignatureMismatch);
    }
    let left = diff_of(a, ca)?;
    let right = diff_of(b, cb)?;
    let iso = find_isomorphism(&left.algebra, &right.algebra)?;
    Ok(Similarity {
        similar: iso.is_some(),
        iso,
        left,
        right,
    })
}

/// A set of tuples `(a1, a2, b1, b2)` in `A x A x B x B`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bridge {
    pub tuples: BTreeSet<[usize; 4]>,
}

impl Bridge {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// `{(a,b) : (a,a,b,b) in T}`.
    pub fn trace(&self) -> Vec<(usize, usize)> {
        self.tuples
            .iter()
            .filter(|t| t[0] == t[1] && t[2] == t[3])
            .map(|t| (t[0], t[2]))
            .collect()
    }
}

fn closure_failure(a: &Algebra, b: &Algebra, tuples: &[[usize; 4]], set: &BTreeSet<[usize; 4]>) -> Option<String> {
    let m = tuples.len();
    if m == 0 {
        return None;
    }
    for (oa, ob) in a.ops().iter().zip(b.ops()) {
        let k = oa.arity;
        let mut idx = vec![0usize; k];
        let mut col = vec![0usize; k];
        loop {
            let mut out = [0usize; 4];
            for (c, slot) in out.iter_mut().enumerate() {
                for j in 0..k {
                    col[j] = tuples[idx[j]][c];
                }
                *slot = if c < 2 { oa.apply(&col) } else { ob.apply(&col) };
            }
            if !set.contains(&out) {
                let args: Vec<[usize; 4]> = idx.iter().map(|&i| tuples[i]).collect();
                return Some(format!("{}{args:?} = {out:?}", oa.name));
            }
            if !next_index(&mut idx, m) {
                break;
            }
        }
    }
    None
}

/// The subalgebra on a closed set, elements renumbered by position in `elems`.
fn subalgebra(a: &Algebra, elems: &[usize]) -> Result<Algebra> {
    let pos: BTreeMap<usize, usize> = elems.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let ops = a
        .ops()
        .iter()
        .map(|o| {
            let mut args = vec![0; o.arity];
            Operation::from_fn(o.name.clone(), o.arity, elems.len(), |xs| {
                for (j, &x) in xs.iter().enumerate() {
                    args[j] = elems[x];
                }
                pos[&o.apply(&args)]
            })
        })
        .collect();
    Algebra::new(elems.len(), ops)
}

/// Checks the bridge axioms, the trace and kernel, the perspectivities through the
/// kernel, and the forced shape when a monolith is nonabelian.
pub fn bridge_verify(a: &Algebra, b: &Algebra, t: &Bridge) -> Result<Report> {
    if !a.same_signature(b) {
        return Err(Error::SignatureMismatch);
    }
    for x in &t.tuples {
        for (c, &v) in x.iter().enumerate() {
            let size = if c < 2 { a.size() } else { b.size() };
            if v >= size {
                return Err(Error::OutOfRange { element: v, size });
            }
        }
    }
    let mu = monolith(a)?;
    let kappa = monolith(b)?;
    let anchor = "similarity-bridge";
    let mut r = Report::new("bridge");
    let tuples: Vec<[usize; 4]> = t.tuples.iter().copied().collect();

    let sub = closure_failure(a, b, &tuples, &t.tuples);
    r.push(
        "bridge-subuniverse",
        "T is a subuniverse of A x A x B x B",
        anchor,
        sub.is_none(),
        sub,
    );

    let p12: BTreeSet<(usize, usize)> = tuples.iter().map(|x| (x[0], x[1])).collect();
    let p34: BTreeSet<(usize, usize)> = tuples.iter().map(|x| (x[2], x[3])).collect();
    let mu_set: BTreeSet<(usize, usize)> = mu.pairs().into_iter().collect();
    let kappa_set: BTreeSet<(usize, usize)> = kappa.pairs().into_iter().collect();
    let b1 = p12 == mu_set && p34 == kappa_set;
    r.push(
        "bridge-projections",
        "pr12(T) is the monolith of A and pr34(T) the monolith of B",
        anchor,
        b1,
        (!b1).then(|| {
            let w12 = mu_set.symmetric_difference(&p12).next().copied();
            let w34 = kappa_set.symmetric_difference(&p34).next().copied();
            format!("first mismatch in pr12 {w12:?}, in pr34 {w34:?}")
        }),
    );
    let b2 = tuples.iter().find(|x| (x[0] == x[1]) != (x[2] == x[3]));
    r.push(
        "bridge-diagonal",
        "a1 = a2 iff b1 = b2",
        anchor,
        b2.is_none(),
        b2.map(|x| format!("{x:?}")),
    );
    let b3 = tuples.iter().find(|x| {
        !t.tuples.contains(&[x[0], x[0], x[2], x[2]]) || !t.tuples.contains(&[x[1], x[1], x[3], x[3]])
    });
    r.push(
        "bridge-reflexive",
        "(ai, ai, bi, bi) lies in T for every member",
        anchor,
        b3.is_none(),
        b3.map(|x| format!("{x:?}")),
    );

    let trace = t.trace();
    let trace_set: BTreeSet<(usize, usize)> = trace.iter().copied().collect();
    let p13: BTreeSet<(usize, usize)> = tuples.iter().map(|x| (x[0], x[2])).collect();
    let p24: BTreeSet<(usize, usize)> = tuples.iter().map(|x| (x[1], x[3])).collect();
    let firsts: BTreeSet<usize> = trace.iter().map(|p| p.0).collect();
    let seconds: BTreeSet<usize> = trace.iter().map(|p| p.1).collect();
    let tr_ok = p13 == trace_set && p24 == trace_set && firsts.len() == a.size() && seconds.len() == b.size();
    r.push(
        "bridge-trace",
        "tr(T) = pr13(T) = pr24(T) is subdirect in A x B",
        anchor,
        tr_ok,
        (!tr_ok).then(|| format!("|tr| = {}, |pr13| = {}, |pr24| = {}", trace.len(), p13.len(), p24.len())),
    );

    let prod = product(a, b)?;
    let codes: BTreeSet<usize> = trace.iter().map(|&(x, y)| prod.encode(x, y)).collect();
    let later = [
        ("bridge-symmetric", "T is closed under (a1,a2,b1,b2) -> (a2,a1,b2,b1)"),
        ("bridge-transitive", "(a1,a2,b1,b2) and (a2,a3,b2,b3) in T give (a1,a3,b1,b3) in T"),
        ("bridge-kernel-congruence", "ker(T) is a congruence of the trace algebra"),
        ("bridge-perspectivity", "(delta_i, delta_i+) is perspective down to (0, ker T) for i = 1, 2"),
    ];
    if trace.is_empty() || !is_subuniverse(&prod.algebra, &codes) || b3.is_some() {
        for (id, st) in later {
            r.skip(id, st, anchor, "the trace is not a subalgebra or T lacks diagonal tuples");
        }
    } else {
        let elems: Vec<usize> = codes.iter().copied().collect();
        let c_alg = subalgebra(&prod.algebra, &elems)?;
        let cpos: BTreeMap<(usize, usize), usize> = elems
            .iter()
            .enumerate()
            .map(|(i, &code)| (prod.decode(code), i))
            .collect();
        let m = elems.len();
        let kernel = Relation::from_pairs(
            m,
            tuples.iter().map(|x| (cpos[&(x[0], x[2])], cpos[&(x[1], x[3])])),
        );
        let sym = kernel.is_symmetric();
        let trans = kernel.is_transitive();
        r.push(later[0].0, later[0].1, anchor, sym, None);
        r.push(later[1].0, later[1].1, anchor, trans, None);
        if sym && trans && kernel.is_reflexive() {
            let tau = Partition::from_pairs(m, kernel.pairs());
            let comp = compatibility_failure(&c_alg, &tau);
            r.push(later[2].0, later[2].1, anchor, comp.is_none(), comp);
            let pa: Vec<usize> = elems.iter().map(|&c| prod.decode(c).0).collect();
            let pb: Vec<usize> = elems.iter().map(|&c| prod.decode(c).1).collect();
            let mu_cls = mu.class_index();
            let kappa_cls = kappa.class_index();
            let d1 = Partition::kernel_of(&pa);
            let d1p = Partition::kernel_of(&pa.iter().map(|&x| mu_cls[x]).collect::<Vec<_>>());
            let d2 = Partition::kernel_of(&pb);
            let d2p = Partition::kernel_of(&pb.iter().map(|&y| kappa_cls[y]).collect::<Vec<_>>());
            let zero = Partition::identity(m);
            let ok1 = perspective((&zero, &tau), (&d1, &d1p));
            let ok2 = perspective((&zero, &tau), (&d2, &d2p));
            r.push(
                later[3].0,
                later[3].1,
                anchor,
                ok1 && ok2,
                (!(ok1 && ok2)).then(|| format!("first {ok1}, second {ok2}")),
            );
        } else {
            r.skip(later[2].0, later[2].1, anchor, "the kernel is not an equivalence");
            r.skip(later[3].0, later[3].1, anchor, "the kernel is not an equivalence");
        }
    }

    let statement = "with a nonabelian monolith the trace is the graph of an isomorphism h and T = {(a,b,h(a),h(b))}";
    let a_ab = is_abelian(a, &mu, None)?.holds;
    let b_ab = is_abelian(b, &kappa, None)?.holds;
    if a_ab && b_ab {
        r.skip("bridge-nonabelian-shape", statement, anchor, "both monoliths are abelian");
    } else {
        let mut h = vec![usize::MAX; a.size()];
        let mut functional = true;
        for &(x, y) in &trace {
            if h[x] != usize::MAX && h[x] != y {
                functional = false;
            }
            h[x] = y;
        }
        let witness;
        let ok = if functional && h.iter().all(|&y| y != usize::MAX) && a.size() == b.size() {
            let map = ElementMap::new(b.size(), h.clone())?;
            let forced: BTreeSet<[usize; 4]> = mu.pairs().into_iter().map(|(x, y)| [x, y, h[x], h[y]]).collect();
            let iso = map.is_isomorphism(a, b);
            witness = (!iso || forced != t.tuples).then(|| format!("isomorphism {iso}, forced shape {}", forced == t.tuples));
            iso && forced == t.tuples
        } else {
            witness = Some("the trace is not the graph of a bijection".into());
            false
        };
        r.push("bridge-nonabelian-shape", statement, anchor, ok, witness);
    }
    Ok(r)
}

/// `T_D(A) = {(a, b, (a,e)/Delta, (b,e)/Delta)}` over triples in one class.
pub fn canonical_bridge(da: &DiffAlgebra) -> Bridge {
    let mut tuples = BTreeSet::new();
    for block in da.theta.blocks() {
        for &a in &block {
            for &b in &block {
                for &e in &block {
                    tuples.insert([a, b, da.class_of(a, e).unwrap(), da.class_of(b, e).unwrap()]);
                }
            }
        }
    }
    Bridge { tuples }
}

fn identity_shape_bridge(mu: &Partition, h: &ElementMap) -> Bridge {
    Bridge {
        tuples: mu
            .pairs()
            .into_iter()
            .map(|(x, y)| [x, y, h.apply(x), h.apply(y)])
            .collect(),
    }
}

/// Adjusts an isomorphism of difference algebras so that it carries the
/// canonical transversal onto the canonical transversal.
fn normalize_iso(psi: &ElementMap, left: &DiffAlgebra, right: &DiffAlgebra, right_cert: &WdtCertificate) -> Result<ElementMap> {
    if !psi.is_isomorphism(&left.algebra, &right.algebra) {
        return Err(precondition("the map is not an isomorphism of the difference algebras"));
    }
    if left.phi.image(psi) != right.phi {
        return Err(internal("the isomorphism does not carry the monolith onto the monolith"));
    }
    let image: BTreeSet<usize> = left.transversal.iter().map(|&z| psi.apply(z)).collect();
    let target: BTreeSet<usize> = right.transversal.iter().copied().collect();
    if image == target {
        return Ok(psi.clone());
    }
    let sigma = transversal_automorphism(&right.algebra, right_cert, &right.phi, &image, &target)?;
    psi.then(&sigma)
}

/// The bridge `{(a1,a2,b1,b2) : lambda((a1,a2)/Delta_A) = (b1,b2)/Delta_B}` for an
/// isomorphism `D(A) -> D(B)`, or `{(a,b,h(a),h(b))}` for nonabelian monoliths.
pub fn bridge_from_iso(left: &DiffOf, right: &DiffOf, right_cert: &WdtCertificate, iso: &ElementMap) -> Result<Bridge> {
    if left.abelian != right.abelian {
        return Err(precondition("one monolith is abelian and the other is not"));
    }
    let (Some(da), Some(db)) = (&left.diff, &right.diff) else {
        if !iso.is_isomorphism(&left.algebra, &right.algebra) {
            return Err(precondition("the map is not an isomorphism"));
        }
        return Ok(identity_shape_bridge(&left.monolith, iso));
    };
    let cert_db = difference_certificate(db)?;
    let _ = right_cert;
    let lambda = normalize_iso(iso, da, db, &cert_db)?;
    let mut by_class: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (b1, b2) in right.monolith.pairs() {
        by_class.entry(db.class_of(b1, b2).unwrap()).or_default().push((b1, b2));
    }
    let mut tuples = BTreeSet::new();
    for (a1, a2) in left.monolith.pairs() {
        let q = lambda.apply(da.class_of(a1, a2).unwrap());
        for &(b1, b2) in by_class.get(&q).map(|v| v.as_slice()).unwrap_or(&[]) {
            tuples.insert([a1, a2, b1, b2]);
        }
    }
    Ok(Bridge { tuples })
}

pub enum BridgeMode<'a> {
    /// `T_D(A)`, from A to `D(A)`; for a nonabelian monolith `D(A) = A` and the bridge is the identity bridge.
    CanonicalToD,
    /// From an isomorphism `D(A) -> D(B)`, searched for when not given.
    FromIso {
        target: &'a Algebra,
        target_cert: &'a WdtCertificate,
        iso: Option<&'a ElementMap>,
    },
}

#[derive(Debug, Clone)]
pub struct Constructed {
    pub target: Algebra,
    pub bridge: Bridge,
    pub verification: Report,
}

pub fn bridge_construct(a: &Algebra, cert: &WdtCertificate, mode: BridgeMode) -> Result<Constructed> {
    let (target, bridge) = match mode {
        BridgeMode::CanonicalToD => {
            let left = diff_of(a, cert)?;
            match &left.diff {
                Some(da) => (da.algebra.clone(), canonical_bridge(da)),
                None => (a.clone(), identity_shape_bridge(&left.monolith, &ElementMap::identity(a.size()))),
            }
        }
        BridgeMode::FromIso {
            target,
            target_cert,
            iso,
        } => {
            let sim = is_similar(a, cert, target, target_cert)?;
            let iso = match iso {
                Some(i) => i.clone(),
                None => sim
                    .iso
                    .clone()
                    .ok_or_else(|| Error::NotFound("the algebras are not similar".into()))?,
            };
            let bridge = bridge_from_iso(&sim.left, &sim.right, target_cert, &iso)?;
            (target.clone(), bridge)
        }
    };
    let verification = bridge_verify(a, &target, &bridge)?;
    Ok(Constructed {
        target,
        bridge,
        verification,
    })
}

/// A transversal of `theta` that is a subuniverse, scanning at most `cap` candidates.
pub fn subuniverse_transversal(a: &Algebra, theta: &Partition, cap: usize) -> Result<Option<BTreeSet<usize>>> {
    let blocks = theta.blocks();
    let mut idx = vec![0usize; blocks.len()];
    let mut seen = 0usize;
    loop {
        seen += 1;
        if seen > cap {
            return Err(Error::CapExceeded {
                cap: "transversal scan cap",
                limit: cap,
            });
        }
        let set: BTreeSet<usize> = idx.iter().zip(&blocks).map(|(&i, b)| b[i]).collect();
        if is_subuniverse(a, &set) {
            return Ok(Some(set));
        }
        let mut j = blocks.len();
        loop {
            if j == 0 {
                return Ok(None);
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < blocks[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// `x -> (x, pi(x))/Delta`, an isomorphism `A -> D(A)` when `(0:theta) = theta`
/// and some transversal of theta is a subuniverse; `None` when either fails.
pub fn fixpoint_isomorphism(da: &DiffAlgebra, cap: usize) -> Result<Option<ElementMap>> {
    if da.alpha != da.theta {
        return Ok(None);
    }
    let Some(t) = subuniverse_transversal(&da.base, &da.theta, cap)? else {
        return Ok(None);
    };
    let pi = retraction(&da.theta, &t);
    let images = (0..da.base.size()).map(|x| da.class_of(x, pi[x]).unwrap()).collect();
    let map = ElementMap::new(da.size(), images)?;
    if !map.is_isomorphism(&da.base, &da.algebra) {
        return Err(internal("x -> (x, pi(x))/Delta is not an isomorphism"));
    }
    Ok(Some(map))
}

/// A field isomorphism `F_low -> F_up` by conjugation with an isomorphism of the
/// underlying difference algebras, adjusted to match the canonical transversals.
pub fn conjugate_field(psi: &ElementMap, low: &EndoRing, up: &EndoRing) -> Result<(Vec<usize>, Option<String>)> {
    if !psi.is_isomorphism(&low.algebra, &up.algebra) {
        return Err(precondition("the map is not an isomorphism"));
    }
    if low.phi.image(psi) != up.phi {
        return Err(internal("the isomorphism does not carry phi onto phi"));
    }
    let image: BTreeSet<usize> = low.transversal.iter().map(|&z| psi.apply(z)).collect();
    let psi2 = if image == up.transversal {
        psi.clone()
    } else {
        let sigma = transversal_automorphism(&up.algebra, &up.cert, &up.phi, &image, &up.transversal)?;
        psi.then(&sigma)?
    };
    let inv = psi2.inverse().expect("isomorphisms are bijective");
    let mut map = Vec::with_capacity(low.size());
    for f in &low.carrier {
        let g: Vec<usize> = (0..up.algebra.size())
            .map(|y| psi2.apply(f[inv.apply(y)]))
            .collect();
        match up.index_of(&g) {
            Some(i) => map.push(i),
            None => return Ok((map, Some(format!("the conjugate of {f:?} is not in the target ring")))),
        }
    }
    let failure = ring_iso_failure(&map, &low.tables, &up.tables);
    Ok((map, failure))
}

/// The quotient `A/gamma` with the weak difference term carried over and verified.
pub fn quotient_certificate(
    a: &Algebra,
    cert: &WdtCertificate,
    gamma: &Partition,
) -> Result<(Algebra, ElementMap, WdtCertificate)> {
    cert.require_valid(a)?;
    let (q, nu) = quotient(a, gamma, true)?;
    let single = Algebra::new(a.size(), vec![cert.d.clone()])?;
    if let Some(w) = compatibility_failure(&single, gamma) {
        return Err(precondition(format!("d does not preserve {gamma}: {w}")));
    }
    let (dq, _) = quotient(&single, gamma, false)?;
    let qc = verify_wdt(&q, &dq.ops()[0].table, Scope::Base)?;
    if !qc.verdict {
        return Err(precondition(format!(
            "d is not a weak difference term of the quotient: {}",
            qc.witness.unwrap_or_default()
        )));
    }
    Ok((q, nu, qc))
}

#[derive(Debug, Clone)]
pub struct PerspectiveIso {
    pub lower: DiffAlgebra,
    pub upper: DiffAlgebra,
    /// `(a/gamma, b/gamma)/Delta -> (a/delta, b/delta)/Delta`.
    pub iso: ElementMap,
    pub lower_field: EndoRing,
    pub upper_field: EndoRing,
    pub field_iso: Vec<usize>,
    pub checks: Report,
}

/// For `(gamma, theta)` perspective up to `(delta, eps)` with abelian cover quotients.
pub fn perspective_diff_iso(
    a: &Algebra,
    low: (&Partition, &Partition),
    high: (&Partition, &Partition),
    cert: &WdtCertificate,
    cap: usize,
) -> Result<PerspectiveIso> {
    let (gamma, theta) = low;
    let (delta, eps) = high;
    for p in [gamma, theta, delta, eps] {
        if p.size() != a.size() {
            return Err(Error::SizeMismatch(p.size(), a.size()));
        }
        if !is_congruence(a, p) {
            return Err(Error::NotCongruence(p.to_string()));
        }
    }
    if !perspective(low, high) {
        return Err(precondition("theta ^ delta != gamma or theta v delta != eps"));
    }
    let (qg, nug, cg) = quotient_certificate(a, cert, gamma)?;
    let (qd, nud, cd) = quotient_certificate(a, cert, delta)?;
    let theta_q = theta.image(&nug);
    let eps_q = eps.image(&nud);
    if !is_minimal(&qg, &theta_q)? {
        return Err(precondition("theta does not cover gamma"));
    }
    if !is_minimal(&qd, &eps_q)? {
        return Err(precondition("eps does not cover delta"));
    }
    let lower = difference_algebra(&qg, &theta_q, &cg)?;
    let upper = difference_algebra(&qd, &eps_q, &cd)?;

    let anchor = "perspectivity-transfer";
    let mut checks = Report::new("perspectivity");
    let mut images: Vec<Option<usize>> = vec![None; lower.size()];
    for (x, y) in theta.pairs() {
        let s = lower.class_of(nug.apply(x), nug.apply(y)).unwrap();
        let t = upper
            .class_of(nud.apply(x), nud.apply(y))
            .ok_or_else(|| internal(format!("({x},{y}) leaves eps")))?;
        match images[s] {
            None => images[s] = Some(t),
            Some(u) if u != t => {
                return Err(internal(format!(
                    "the rule is not well defined: ({x},{y}) goes to {t}, an equivalent pair to {u}"
                )))
            }
            _ => {}
        }
    }
    checks.push(
        "perspective-well-defined",
        "equivalent pairs have equivalent images",
        anchor,
        true,
        None,
    );
    let images = images
        .into_iter()
        .map(|v| v.ok_or_else(|| internal("a class of the lower difference algebra has no preimage")))
        .collect::<Result<Vec<_>>>()?;
    let iso = ElementMap::new(upper.size(), images)?;
    let is_iso = iso.is_isomorphism(&lower.algebra, &upper.algebra);
    checks.push(
        "perspective-isomorphism",
        "the rule is an isomorphism of difference algebras",
        anchor,
        is_iso,
        (!is_iso).then(|| format!("{:?}", iso.images())),
    );
    let lower_field = field_of(&lower, cap)?;
    let upper_field = field_of(&upper, cap)?;
    let (field_iso, failure) = if is_iso {
        conjugate_field(&iso, &lower_field, &upper_field)?
    } else {
        (Vec::new(), Some("no isomorphism to conjugate by".into()))
    };
    checks.push(
        "perspective-field-iso",
        "conjugation gives a ring isomorphism of the division rings",
        anchor,
        failure.is_none(),
        failure,
    );
    Ok(PerspectiveIso {
        lower,
        upper,
        iso,
        lower_field,
        upper_field,
        field_iso,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::genlab::{build_field, FieldSpec};
    use crate::wdt::search_wdt;

    fn cert(a: &Algebra) -> WdtCertificate {
        search_wdt(a, 100_000).unwrap()
    }

    fn gf(q: usize) -> RingTables {
        let f = build_field(&FieldSpec { q, modulus: None }).unwrap();
        RingTables {
            size: q,
            zero: 0,
            one: 1,
            add: (0..q * q).map(|i| f.add(i / q, i % q)).collect(),
            neg: (0..q).map(|x| f.neg(x)).collect(),
            mul: (0..q * q).map(|i| f.mul(i / q, i % q)).collect(),
        }
    }

    #[test]
    fn z4_field_and_action() {
        let a = fixtures::z4();
        let c = cert(&a);
        let da = difference_algebra(&a, &fixtures::z4_theta(), &c).unwrap();
        let f = field_of(&da, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(f.size(), 2);
        assert!(f.checks.passed(), "{:?}", f.checks.failures());
        assert!(ring_isomorphism(&f.tables, &gf(2)).unwrap().is_some());
        let act = canonical_action(&da, &f, 0).unwrap();
        assert_eq!(act.class, vec![0, 2]);
        assert_eq!(act.dimension, 1);
        assert!(act.checks.passed());
    }

    #[test]
    fn affine_line_over_gf3() {
        let z3 = Algebra::new(3, vec![Operation::from_fn("d", 3, 3, |a| (a[0] + 3 - a[1] + a[2]) % 3)]).unwrap();
        let c = cert(&z3);
        let t: BTreeSet<usize> = [0].into();
        let f = division_ring(&z3, &Partition::full(3), &t, &c, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(f.size(), 3);
        assert!(f.checks.passed());
        assert!(ring_isomorphism(&f.tables, &gf(3)).unwrap().is_some());
    }

    #[test]
    fn division_ring_rejects_non_transversal() {
        let a = fixtures::z2();
        let c = cert(&a);
        let t: BTreeSet<usize> = [0, 1].into();
        assert!(matches!(
            division_ring(&a, &Partition::full(2), &t, &c, DEFAULT_SEARCH_CAP),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn freese_small() {
        let z2 = fixtures::z2();
        let fd = freese_ring(&z2, &Partition::full(2), &[0].into(), &cert(&z2), DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(fd.elements.len(), 2);
        assert!(fd.checks.passed(), "{:?}", fd.checks.failures());

        let z4 = fixtures::z4();
        let fd = freese_ring(&z4, &fixtures::z4_theta(), &[0, 1].into(), &cert(&z4), DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(fd.elements.len(), 2);
        assert!(fd.checks.passed(), "{:?}", fd.checks.failures());
        // R_00 on {0,2}: identity and the zero map.
        assert_eq!(fd.hom_sets[0][0].len(), 2);
    }

    #[test]
    fn restricted_polynomials_match_full_clone() {
        let z4 = fixtures::z4();
        let full = crate::algebra::unary_polynomials(&z4, DEFAULT_SEARCH_CAP).unwrap();
        let fd = freese_ring(&z4, &fixtures::z4_theta(), &[0, 1].into(), &cert(&z4), DEFAULT_SEARCH_CAP).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let cj = &fd.classes[j];
                let expect: BTreeSet<Vec<usize>> = full
                    .functions
                    .iter()
                    .filter(|f| f[fd.transversal[j]] == fd.transversal[i])
                    .map(|f| cj.iter().map(|&x| f[x]).collect())
                    .collect();
                let got: BTreeSet<Vec<usize>> = fd.hom_sets[i][j].iter().cloned().collect();
                assert_eq!(got, expect);
            }
        }
    }

    #[test]
    fn diff_of_examples() {
        let s2 = fixtures::s2();
        let d = diff_of(&s2, &cert(&s2)).unwrap();
        assert!(!d.abelian);
        assert_eq!(d.algebra, s2);
        let z4 = fixtures::z4();
        let d = diff_of(&z4, &cert(&z4)).unwrap();
        assert!(d.abelian);
        assert_eq!(d.algebra.size(), 2);
    }

    #[test]
    fn similarity_examples() {
        let z4 = fixtures::z4();
        let cz4 = cert(&z4);
        let dz4 = diff_of(&z4, &cz4).unwrap();
        let cd = dz4.certificate(&cz4).unwrap();
        let s = is_similar(&z4, &cz4, &dz4.algebra, &cd).unwrap();
        assert!(s.similar);

        let z2 = fixtures::z2();
        let s2 = fixtures::s2_ternary();
        let s = is_similar(&z2, &cert(&z2), &s2, &cert(&s2)).unwrap();
        assert!(!s.similar);
    }

    #[test]
    fn z4_bridges() {
        let z4 = fixtures::z4();
        let c = cert(&z4);
        let built = bridge_construct(&z4, &c, BridgeMode::CanonicalToD).unwrap();
        assert!(built.verification.passed(), "{:?}", built.verification.failures());
        let cd = verify_wdt(&built.target, &diff_of(&z4, &c).unwrap().diff.unwrap().d_operation().table, Scope::Base)
            .unwrap();
        let from_iso = bridge_construct(
            &z4,
            &c,
            BridgeMode::FromIso {
                target: &built.target,
                target_cert: &cd,
                iso: None,
            },
        )
        .unwrap();
        assert!(from_iso.verification.passed(), "{:?}", from_iso.verification.failures());
    }

    #[test]
    fn identity_bridge_and_negative() {
        let s2 = fixtures::s2();
        let c = cert(&s2);
        let built = bridge_construct(&s2, &c, BridgeMode::CanonicalToD).unwrap();
        assert!(built.verification.passed(), "{:?}", built.verification.failures());
        assert_eq!(built.bridge.trace(), vec![(0, 0), (1, 1)]);
        assert_eq!(
            built.verification.item("bridge-nonabelian-shape").unwrap().verdict,
            crate::report::Verdict::Pass
        );

        let mut broken = built.bridge.clone();
        broken.tuples.remove(&[1, 1, 1, 1]);
        let r = bridge_verify(&s2, &s2, &broken).unwrap();
        assert_eq!(r.item("bridge-reflexive").unwrap().verdict, crate::report::Verdict::Fail);
    }

    #[test]
    fn two_square_perspectivity() {
        let a = fixtures::two_sq();
        let (e1, e2) = fixtures::two_sq_kernels();
        let zero = Partition::identity(4);
        let one = Partition::full(4);
        let p = perspective_diff_iso(&a, (&zero, &e1), (&e2, &one), &cert(&a), DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(p.lower.size(), 2);
        assert_eq!(p.upper.size(), 2);
        assert!(p.checks.passed(), "{:?}", p.checks.failures());
        assert_eq!(p.lower_field.size(), 2);

        let same = perspective_diff_iso(&a, (&zero, &e1), (&zero, &e1), &cert(&a), DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(same.iso, ElementMap::identity(same.lower.size()));
    }

    #[test]
    fn fixpoint_of_difference_algebra() {
        let z4 = fixtures::z4();
        let c = cert(&z4);
        let d = diff_of(&z4, &c).unwrap();
        let cd = d.certificate(&c).unwrap();
        let dd = diff_of(&d.algebra, &cd).unwrap();
        let fast = fixpoint_isomorphism(dd.diff.as_ref().unwrap(), DEFAULT_SEARCH_CAP).unwrap();
        assert!(fast.is_some());
        assert!(find_isomorphism(&d.algebra, &dd.algebra).unwrap().is_some());
    }
}

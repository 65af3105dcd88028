//! Matrices, the centrality relation C(phi,theta;delta), centralizers,
//! abelianness and the two-term condition.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{quotient, Algebra, ElementMap, DEFAULT_CLOSURE_CAP};
use crate::closure::{close, Limits};
use crate::congruence::{congruence_lattice, CongruenceLattice, PrincipalTable};
use crate::error::{internal, precondition, Result};
use crate::partition::{Partition, Relation};
use crate::report::Report;
use crate::wdt::WdtCertificate;

/// A 2x2 matrix `(a1,a2,a3,a4)`: columns `(a1,a2)`, `(a3,a4)`; rows `(a1,a3)`, `(a2,a4)`.
pub type Matrix = [usize; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixRole {
    Generators,
    Closure,
    HorizontalDelta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixSet {
    pub role: MatrixRole,
    pub size: usize,
    pub matrices: BTreeSet<Matrix>,
}

impl MatrixSet {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn contains(&self, m: &Matrix) -> bool {
        self.matrices.contains(m)
    }
}

/// Anything that supplies a set of pairs: partitions and tolerances.
pub trait PairSource {
    fn pair_list(&self) -> Vec<(usize, usize)>;
}

impl PairSource for Partition {
    fn pair_list(&self) -> Vec<(usize, usize)> {
        self.pairs()
    }
}

impl PairSource for Relation {
    fn pair_list(&self) -> Vec<(usize, usize)> {
        self.pairs()
    }
}

/// `X(theta,phi)`: `(c,d,c,d)` for `(c,d)` in theta and `(a,a,b,b)` for `(a,b)` in phi.
pub fn generators(theta: &dyn PairSource, phi: &dyn PairSource) -> Vec<Matrix> {
    let mut set = BTreeSet::new();
    for (c, d) in theta.pair_list() {
        set.insert([c, d, c, d]);
    }
    for (a, b) in phi.pair_list() {
        set.insert([a, a, b, b]);
    }
    set.into_iter().collect()
}

fn matrix_closure(
    a: &Algebra,
    theta: &dyn PairSource,
    phi: &dyn PairSource,
    observe: &mut dyn FnMut(&[u32]) -> bool,
) -> Result<(Vec<Matrix>, bool)> {
    let seeds: Vec<Vec<usize>> = generators(theta, phi).iter().map(|m| m.to_vec()).collect();
    let cl = close(
        a,
        4,
        &seeds,
        &Limits::new(DEFAULT_CLOSURE_CAP, "matrix closure cap"),
        &mut |_, t| observe(t),
    )?;
    let ms = cl
        .iter()
        .map(|t| [t[0] as usize, t[1] as usize, t[2] as usize, t[3] as usize])
        .collect();
    Ok((ms, cl.stopped))
}

/// `M(theta,phi)`: the subuniverse of `A^4` generated by `X(theta,phi)`.
pub fn generate_matrices(a: &Algebra, theta: &dyn PairSource, phi: &dyn PairSource) -> Result<MatrixSet> {
    let (ms, _) = matrix_closure(a, theta, phi, &mut |_| false)?;
    Ok(MatrixSet {
        role: MatrixRole::Closure,
        size: a.size(),
        matrices: ms.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub holds: bool,
    /// A matrix of `M(phi,theta)` with one row in delta and the other not.
    pub witness: Option<Matrix>,
}

/// Largest universe on which `centralizes` also runs the full two-way matrix check.
const CROSS_CHECK_SIZE: usize = 4;

/// The term condition for one principal congruence at a time, evaluated in
/// `A/delta` (only delta-classes of entries matter).
///
/// For a pair `(x,y)` the matrices are the closure of `(x,y,x,y)` and
/// `(c,c,d,d)` for `(c,d)` in theta; C(Cg(x,y),theta;delta) holds exactly when
/// none of them has one row in delta and the other not.
struct TermCondition<'a> {
    base: &'a Algebra,
    quotient: Option<(Algebra, ElementMap)>,
    /// Images of theta-pairs, each with a preimage in theta.
    theta_pairs: Vec<((usize, usize), (usize, usize))>,
}

impl<'a> TermCondition<'a> {
    fn new(a: &'a Algebra, theta: &Partition, delta: &Partition) -> Result<TermCondition<'a>> {
        if delta.is_identity() {
            let theta_pairs = theta.pairs().into_iter().map(|p| (p, p)).collect();
            return Ok(TermCondition {
                base: a,
                quotient: None,
                theta_pairs,
            });
        }
        let (q, nu) = quotient(a, delta, false)?;
        let mut images: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        for (c, d) in theta.pairs() {
            images.entry((nu.apply(c), nu.apply(d))).or_insert((c, d));
        }
        Ok(TermCondition {
            base: a,
            quotient: Some((q, nu)),
            theta_pairs: images.into_iter().collect(),
        })
    }

    /// A failing matrix of A for C(Cg(x,y),theta;delta), if any.
    fn failure(&self, x: usize, y: usize) -> Result<Option<Matrix>> {
        let (alg, img) = match &self.quotient {
            Some((q, nu)) => (q, (nu.apply(x), nu.apply(y))),
            None => (self.base, (x, y)),
        };
        let mut seeds = vec![vec![img.0, img.1, img.0, img.1]];
        let mut lifts = vec![vec![x, y, x, y]];
        for &((c, d), (c0, d0)) in &self.theta_pairs {
            seeds.push(vec![c, c, d, d]);
            lifts.push(vec![c0, c0, d0, d0]);
        }
        let mut limits = Limits::new(DEFAULT_CLOSURE_CAP, "matrix closure cap");
        if self.quotient.is_some() {
            limits = limits.with_provenance();
        }
        let mut last = None;
        let cl = close(alg, 4, &seeds, &limits, &mut |i, t| {
            let bad = (t[0] == t[2]) != (t[1] == t[3]);
            if bad {
                last = Some(i);
            }
            bad
        })?;
        let Some(i) = last else {
            return Ok(None);
        };
        let m = if self.quotient.is_some() {
            cl.replay(self.base, i, &|s| lifts[s].clone())
        } else {
            cl.get(i).iter().map(|&v| v as usize).collect()
        };
        Ok(Some([m[0], m[1], m[2], m[3]]))
    }
}

fn first_failure(tc: &TermCondition, phi: &Partition) -> Result<Option<Matrix>> {
    for (x, y) in phi.spanning_pairs() {
        if let Some(w) = tc.failure(x, y)? {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

/// C(phi,theta;delta). Evaluated one spanning pair of phi at a time; on small
/// universes the rows of `M(phi,theta)` and the columns of `M(theta,phi)` are
/// checked as well and all three must agree.
pub fn centralizes(a: &Algebra, phi: &Partition, theta: &Partition, delta: &Partition) -> Result<Verdict> {
    let tc = TermCondition::new(a, theta, delta)?;
    let witness = first_failure(&tc, phi)?;
    if let Some(m) = witness {
        if delta.related(m[0], m[2]) == delta.related(m[1], m[3]) {
            return Err(internal(format!("lifted matrix {m:?} does not witness a failure")));
        }
    }
    let holds = witness.is_none();
    if a.size() <= CROSS_CHECK_SIZE {
        let (_, rows_fail) = matrix_closure(a, phi, theta, &mut |t| {
            delta.related(t[0] as usize, t[2] as usize) != delta.related(t[1] as usize, t[3] as usize)
        })?;
        let (_, cols_fail) = matrix_closure(a, theta, phi, &mut |t| {
            delta.related(t[0] as usize, t[1] as usize) != delta.related(t[2] as usize, t[3] as usize)
        })?;
        if rows_fail != cols_fail || rows_fail == holds {
            return Err(internal(format!(
                "centrality evaluations disagree for phi={phi}, theta={theta}, delta={delta}"
            )));
        }
    }
    Ok(Verdict { holds, witness })
}

/// `(delta:theta)`, the largest phi with C(phi,theta;delta).
pub fn centralizer(a: &Algebra, delta: &Partition, theta: &Partition) -> Result<Partition> {
    centralizer_with(a, &PrincipalTable::new(a), delta, theta)
}

pub fn centralizer_with(a: &Algebra, pt: &PrincipalTable, delta: &Partition, theta: &Partition) -> Result<Partition> {
    let n = a.size();
    let tc = TermCondition::new(a, theta, delta)?;
    let mut acc = Partition::identity(n);
    for x in 0..n {
        for y in x + 1..n {
            if !acc.related(x, y) && tc.failure(x, y)?.is_none() {
                acc = acc.vee(&pt.get(x, y));
            }
        }
    }
    if !centralizes(a, &acc, theta, delta)?.holds {
        return Err(internal(format!("computed centralizer {acc} does not centralize {theta} mod {delta}")));
    }
    Ok(acc)
}

/// C(theta,theta;delta); `delta` defaults to 0 and must lie below theta.
pub fn is_abelian(a: &Algebra, theta: &Partition, delta: Option<&Partition>) -> Result<Verdict> {
    let zero = Partition::identity(a.size());
    let delta = delta.unwrap_or(&zero);
    if !delta.leq(theta) {
        return Err(precondition(format!("{delta} is not below {theta}")));
    }
    centralizes(a, theta, theta, delta)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoTerm {
    pub holds: bool,
    pub witness: Option<(Matrix, Matrix)>,
}

/// Two (theta,theta)-matrices agreeing in three entries agree in the fourth.
pub fn two_term_condition(a: &Algebra, theta: &Partition) -> Result<TwoTerm> {
    let ms = generate_matrices(a, theta, theta)?;
    for hole in 0..4 {
        let mut seen: HashMap<[usize; 3], Matrix> = HashMap::new();
        for m in &ms.matrices {
            let mut key = [0; 3];
            let mut j = 0;
            for (i, &v) in m.iter().enumerate() {
                if i != hole {
                    key[j] = v;
                    j += 1;
                }
            }
            if let Some(prev) = seen.get(&key) {
                if prev[hole] != m[hole] {
                    return Ok(TwoTerm {
                        holds: false,
                        witness: Some((*prev, *m)),
                    });
                }
            } else {
                seen.insert(key, *m);
            }
        }
    }
    Ok(TwoTerm {
        holds: true,
        witness: None,
    })
}

/// Sampling controls for the law harness.
#[derive(Debug, Clone, Copy)]
pub struct LawParams {
    /// Largest number of hypothesis tuples checked per law; above it a fixed-seed sample is used.
    pub sample_limit: usize,
    pub seed: u64,
}

impl Default for LawParams {
    fn default() -> Self {
        LawParams {
            sample_limit: 400,
            seed: 0,
        }
    }
}

fn sample<T>(mut items: Vec<T>, params: &LawParams) -> (Vec<T>, bool) {
    if items.len() <= params.sample_limit {
        return (items, false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    items.shuffle(&mut rng);
    items.truncate(params.sample_limit);
    (items, true)
}

struct LawCache<'a> {
    a: &'a Algebra,
    l: &'a CongruenceLattice,
    pt: PrincipalTable,
    centralizers: HashMap<(usize, usize), Partition>,
    abelian: HashMap<(usize, usize), bool>,
}

impl<'a> LawCache<'a> {
    /// `(delta:theta)` for lattice indices.
    fn centralizer(&mut self, delta: usize, theta: usize) -> Result<Partition> {
        if let Some(p) = self.centralizers.get(&(delta, theta)) {
            return Ok(p.clone());
        }
        let p = centralizer_with(self.a, &self.pt, self.l.get(delta), self.l.get(theta))?;
        self.centralizers.insert((delta, theta), p.clone());
        Ok(p)
    }

    /// `theta` abelian modulo `delta`.
    fn abelian_mod(&mut self, theta: usize, delta: usize) -> Result<bool> {
        if let Some(&v) = self.abelian.get(&(theta, delta)) {
            return Ok(v);
        }
        let t = self.l.get(theta);
        let v = centralizes(self.a, t, t, self.l.get(delta))?.holds;
        self.abelian.insert((theta, delta), v);
        Ok(v)
    }
}

fn note(checked: usize, sampled: bool) -> String {
    if sampled {
        format!("{checked} sampled instances")
    } else {
        format!("{checked} instances")
    }
}

/// `delta o theta o delta` as a relation.
fn relational_product(delta: &Partition, theta: &Partition) -> Relation {
    let d = Relation::from_partition(delta);
    d.compose(&Relation::from_partition(theta)).compose(&d)
}

/// Itemized checks of the centralizer laws. The items that need a weak
/// difference term are skipped without a valid certificate.
pub fn check_centrality_laws(a: &Algebra, cert: Option<&WdtCertificate>, params: &LawParams) -> Result<Report> {
    let l = congruence_lattice(a)?;
    let m = l.len();
    let mut cache = LawCache {
        a,
        l: &l,
        pt: PrincipalTable::new(a),
        centralizers: HashMap::new(),
        abelian: HashMap::new(),
    };
    let mut r = Report::new("laws");

    // centralizers pass to quotients
    let mut triples = Vec::new();
    for t in 0..m {
        for dl in 0..m {
            if !l.leq(dl, t) {
                continue;
            }
            for dp in 0..m {
                if l.leq(dp, dl) {
                    triples.push((dp, dl, t));
                }
            }
        }
    }
    let (triples, sampled) = sample(triples, params);
    let mut failure = None;
    for &(dp, dl, t) in &triples {
        let (q, nu) = quotient(a, l.get(dp), false)?;
        let qd = l.get(dl).image(&nu);
        let qt = l.get(t).image(&nu);
        let inside = centralizer(&q, &qd, &qt)?.preimage(&nu);
        let outside = cache.centralizer(dl, t)?;
        if inside != outside {
            failure = Some(format!(
                "delta'={}, delta={}, theta={}: quotient gives {inside}, direct gives {outside}",
                l.get(dp),
                l.get(dl),
                l.get(t)
            ));
            break;
        }
    }
    r.push(
        "quotient-centralizer",
        "(delta/delta' : theta/delta') = (delta:theta)/delta' for delta' <= delta <= theta",
        "centralizer-of-quotient",
        failure.is_none(),
        failure.or(Some(note(triples.len(), sampled))),
    );

    // preimages of centralizers under the natural maps onto quotients
    let mut cases = Vec::new();
    for k in 0..m {
        let (b, f) = quotient(a, l.get(k), false)?;
        let lb = congruence_lattice(&b)?;
        for mu in 0..lb.len() {
            for lam in 0..lb.len() {
                if lb.leq(lam, mu) {
                    cases.push((k, lb.get(lam).clone(), lb.get(mu).clone(), b.clone(), f.clone()));
                }
            }
        }
    }
    let (cases, sampled) = sample(cases, params);
    let mut failure = None;
    for (k, lam, mu, b, f) in &cases {
        let left = centralizer(b, lam, mu)?.preimage(f);
        let right = centralizer(a, &lam.preimage(f), &mu.preimage(f))?;
        if left != right {
            failure = Some(format!(
                "kernel {}, lambda={lam}, mu={mu}: {left} vs {right}",
                l.get(*k)
            ));
            break;
        }
    }
    r.push(
        "preimage-centralizer",
        "f^-1((lambda:mu)) = (f^-1(lambda) : f^-1(mu)) for surjective f",
        "centralizer-under-surjection",
        failure.is_none(),
        failure.or(Some(note(cases.len(), sampled))),
    );

    let valid = cert.map_or(false, |c| c.verdict && c.d.size() == a.size());
    let need = "needs a verified weak difference term";
    if !valid {
        r.skip("join-as-product", "C(theta,theta;delta) implies theta v delta = delta o theta o delta, abelian over delta", "join-of-abelian-over", need);
        r.skip("perspective-abelian-transfer", "for perspective quotients, one is abelian iff the other is", "abelian-under-perspectivity", need);
        r.skip("perspective-annihilator", "for (sigma,tau) perspective up to (delta,eps): (delta:eps) = (sigma:tau) when eps/delta is abelian or a cover", "annihilator-under-perspectivity", need);
        return Ok(r);
    }

    let mut pairs = Vec::new();
    for t in 0..m {
        for dl in 0..m {
            pairs.push((t, dl));
        }
    }
    let (pairs, sampled) = sample(pairs, params);

    let mut failure = None;
    let mut applicable = 0;
    for &(t, dl) in &pairs {
        let th = l.get(t);
        let de = l.get(dl);
        if !centralizes(a, th, th, de)?.holds {
            continue;
        }
        applicable += 1;
        let j = l.join(t, dl);
        let prod = relational_product(de, th);
        if prod != Relation::from_partition(l.get(j)) {
            failure = Some(format!("theta={th}, delta={de}: join differs from delta o theta o delta"));
            break;
        }
        if !cache.abelian_mod(j, dl)? {
            failure = Some(format!("theta={th}, delta={de}: the join is not abelian over delta"));
            break;
        }
    }
    r.push(
        "join-as-product",
        "C(theta,theta;delta) implies theta v delta = delta o theta o delta, abelian over delta",
        "join-of-abelian-over",
        failure.is_none(),
        failure.or(Some(format!("{applicable} of {}", note(pairs.len(), sampled)))),
    );

    // (sigma,tau) = (tau ^ delta, tau) perspective up to (delta, tau v delta)
    let mut transfer_fail = None;
    let mut ann_fail = None;
    let mut ann_applicable = 0;
    for &(t, dl) in &pairs {
        let s = l.meet(t, dl);
        let e = l.join(t, dl);
        let low = cache.abelian_mod(t, s)?;
        let high = cache.abelian_mod(e, dl)?;
        if transfer_fail.is_none() && low != high {
            transfer_fail = Some(format!(
                "tau={}, delta={}: abelian below is {low}, above is {high}",
                l.get(t),
                l.get(dl)
            ));
        }
        if ann_fail.is_some() {
            continue;
        }
        let cover = l.is_cover(dl, e);
        if !high && !cover {
            continue;
        }
        ann_applicable += 1;
        if high && relational_product(l.get(dl), l.get(t)) != Relation::from_partition(l.get(e)) {
            ann_fail = Some(format!("tau={}, delta={}: eps differs from delta o tau o delta", l.get(t), l.get(dl)));
            continue;
        }
        let above = cache.centralizer(dl, e)?;
        let below = cache.centralizer(s, t)?;
        if above != below {
            ann_fail = Some(format!(
                "tau={}, delta={}: (delta:eps)={above} but (sigma:tau)={below}",
                l.get(t),
                l.get(dl)
            ));
        }
    }
    r.push(
        "perspective-abelian-transfer",
        "for perspective quotients, one is abelian iff the other is",
        "abelian-under-perspectivity",
        transfer_fail.is_none(),
        transfer_fail.or(Some(note(pairs.len(), sampled))),
    );
    r.push(
        "perspective-annihilator",
        "for (sigma,tau) perspective up to (delta,eps): (delta:eps) = (sigma:tau) when eps/delta is abelian or a cover",
        "annihilator-under-perspectivity",
        ann_fail.is_none(),
        ann_fail.or(Some(format!("{ann_applicable} of {}", note(pairs.len(), sampled)))),
    );
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn matrix_examples() {
        let z2 = fixtures::z2();
        let one = Partition::full(2);
        let m = generate_matrices(&z2, &one, &one).unwrap();
        assert_eq!(m.len(), 8);
        assert!(m.matrices.iter().all(|x| x[0] ^ x[1] ^ x[2] ^ x[3] == 0));
        let zero = Partition::identity(4);
        let m = generate_matrices(&fixtures::z4(), &zero, &zero).unwrap();
        assert!(m.matrices.iter().all(|x| x.iter().all(|&v| v == x[0])));
        let s2 = fixtures::s2();
        let m = generate_matrices(&s2, &Partition::full(2), &Partition::full(2)).unwrap();
        // meet of (0,1,0,1) and (1,1,0,0) has columns (0,1),(0,0)
        assert!(m.contains(&[0, 1, 0, 0]));
    }

    #[test]
    fn centralizes_examples() {
        let one2 = Partition::full(2);
        let zero2 = Partition::identity(2);
        assert!(centralizes(&fixtures::z2(), &one2, &one2, &zero2).unwrap().holds);
        let v = centralizes(&fixtures::s2(), &one2, &one2, &zero2).unwrap();
        assert!(!v.holds);
        let w = v.witness.unwrap();
        assert!(zero2.related(w[0], w[2]) != zero2.related(w[1], w[3]));
        let z4 = fixtures::z4();
        let th = fixtures::z4_theta();
        assert!(centralizes(&z4, &Partition::identity(4), &th, &Partition::identity(4)).unwrap().holds);
    }

    #[test]
    fn centralizer_examples() {
        let z4 = fixtures::z4();
        let th = fixtures::z4_theta();
        assert_eq!(centralizer(&z4, &Partition::identity(4), &th).unwrap(), Partition::full(4));
        let s2 = fixtures::s2();
        assert_eq!(
            centralizer(&s2, &Partition::identity(2), &Partition::full(2)).unwrap(),
            Partition::identity(2)
        );
        assert_eq!(centralizer(&z4, &Partition::full(4), &th).unwrap(), Partition::full(4));
    }

    #[test]
    fn abelian_and_two_term_examples() {
        let z4 = fixtures::z4();
        assert!(is_abelian(&z4, &fixtures::z4_theta(), None).unwrap().holds);
        assert!(!is_abelian(&fixtures::s2(), &Partition::full(2), None).unwrap().holds);
        assert!(is_abelian(&z4, &Partition::identity(4), None).unwrap().holds);
        assert!(is_abelian(&z4, &Partition::identity(4), Some(&fixtures::z4_theta())).is_err());
        assert!(two_term_condition(&fixtures::z2(), &Partition::full(2)).unwrap().holds);
        let t = two_term_condition(&fixtures::s2(), &Partition::full(2)).unwrap();
        assert!(!t.holds && t.witness.is_some());
        assert!(two_term_condition(&z4, &Partition::identity(4)).unwrap().holds);
    }

    #[test]
    fn centrality_laws_on_fixtures() {
        use crate::wdt::{verify_wdt, Scope};
        let z4 = fixtures::z4();
        let c = verify_wdt(&z4, &z4.op("p").unwrap().table.clone(), Scope::Base).unwrap();
        let r = check_centrality_laws(&z4, Some(&c), &LawParams::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.items.len(), 5);
        let sq = fixtures::two_sq();
        let c = verify_wdt(&sq, &sq.op("d").unwrap().table.clone(), Scope::Base).unwrap();
        let r = check_centrality_laws(&sq, Some(&c), &LawParams::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        let one = Algebra::from_tables(1, vec![("d", 3, vec![0])]).unwrap();
        assert!(check_centrality_laws(&one, None, &LawParams::default()).unwrap().passed());
    }

    #[test]
    fn two_sq_perspective_annihilators() {
        let sq = fixtures::two_sq();
        let (e1, e2) = fixtures::two_sq_kernels();
        let zero = Partition::identity(4);
        let one = Partition::full(4);
        assert_eq!(centralizer(&sq, &zero, &e1).unwrap(), one);
        assert_eq!(centralizer(&sq, &e2, &one).unwrap(), one);
    }
}

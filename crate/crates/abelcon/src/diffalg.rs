//! Pair algebras `A(theta)`, the congruences `Delta_{theta,phi}`, difference
//! algebras, the embeddings `lambda_e`, ranges of classes and the arrow relation.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use crate::algebra::{is_congruence, is_subuniverse, quotient, Algebra, ElementMap, Operation};
use crate::centrality::{centralizer, centralizes, generate_matrices, is_abelian};
use crate::congruence::{
    compatibility_failure, congruence_generated, congruence_lattice, interval_modular_permuting, perspective,
    Translations,
};
use crate::error::{internal, precondition, Error, Result};
use crate::partition::Partition;
use crate::report::Report;
use crate::wdt::{class_group, is_minimal, GroupOnClass, WdtCertificate};

/// `theta` viewed as a subalgebra of `A^2`, pairs listed lexicographically.
#[derive(Debug, Clone)]
pub struct PairAlgebra {
    pub base: Algebra,
    pub theta: Partition,
    pub pairs: Vec<(usize, usize)>,
    pub algebra: Algebra,
    pub pr1: ElementMap,
    pub pr2: ElementMap,
    pub eta1: Partition,
    pub eta2: Partition,
    index: Vec<Option<usize>>,
}

pub fn pair_algebra(a: &Algebra, theta: &Partition) -> Result<PairAlgebra> {
    let n = a.size();
    if theta.size() != n {
        return Err(Error::SizeMismatch(theta.size(), n));
    }
    if !is_congruence(a, theta) {
        return Err(Error::NotCongruence(theta.to_string()));
    }
    let pairs = theta.pairs();
    let mut index = vec![None; n * n];
    for (i, &(x, y)) in pairs.iter().enumerate() {
        index[x * n + y] = Some(i);
    }
    let m = pairs.len();
    let ops = a
        .ops()
        .iter()
        .map(|o| coordinatewise(o, &pairs, &index, n))
        .collect::<Result<Vec<_>>>()?;
    let algebra = Algebra::new(m, ops)?;
    let pr1 = ElementMap::new(n, pairs.iter().map(|p| p.0).collect())?;
    let pr2 = ElementMap::new(n, pairs.iter().map(|p| p.1).collect())?;
    let eta1 = Partition::kernel(&pr1);
    let eta2 = Partition::kernel(&pr2);
    Ok(PairAlgebra {
        base: a.clone(),
        theta: theta.clone(),
        pairs,
        algebra,
        pr1,
        pr2,
        eta1,
        eta2,
        index,
    })
}

fn coordinatewise(o: &Operation, pairs: &[(usize, usize)], index: &[Option<usize>], n: usize) -> Result<Operation> {
    let mut left = vec![0; o.arity];
    let mut right = vec![0; o.arity];
    let mut escaped = None;
    let op = Operation::from_fn(o.name.clone(), o.arity, pairs.len(), |args| {
        for (j, &p) in args.iter().enumerate() {
            left[j] = pairs[p].0;
            right[j] = pairs[p].1;
        }
        let (x, y) = (o.apply(&left), o.apply(&right));
        match index[x * n + y] {
            Some(i) => i,
            None => {
                escaped.get_or_insert((x, y));
                0
            }
        }
    });
    match escaped {
        Some((x, y)) => Err(internal(format!("`{}` leaves theta at ({x},{y})", o.name))),
        None => Ok(op),
    }
}

impl PairAlgebra {
    pub fn size(&self) -> usize {
        self.pairs.len()
    }

    pub fn index_of(&self, a: usize, b: usize) -> Option<usize> {
        let n = self.base.size();
        if a >= n || b >= n {
            return None;
        }
        self.index[a * n + b]
    }

    pub fn pair(&self, i: usize) -> (usize, usize) {
        self.pairs[i]
    }

    /// `alpha-bar` for `alpha >= theta`, computed from first and from second
    /// coordinates; the two must agree.
    pub fn lift(&self, alpha: &Partition) -> Result<Partition> {
        if !self.theta.leq(alpha) {
            return Err(precondition(format!("{alpha} is not above {}", self.theta)));
        }
        let cls = alpha.class_index();
        let first = Partition::kernel_of(&self.pairs.iter().map(|p| cls[p.0]).collect::<Vec<_>>());
        let second = Partition::kernel_of(&self.pairs.iter().map(|p| cls[p.1]).collect::<Vec<_>>());
        if first != second {
            return Err(internal(format!("lift of {alpha} depends on the coordinate")));
        }
        Ok(first)
    }

    /// An operation of `A` applied coordinatewise to pairs of `theta`.
    pub fn lift_operation(&self, o: &Operation) -> Result<Operation> {
        coordinatewise(o, &self.pairs, &self.index, self.base.size())
    }
}

/// `Delta_{theta,phi}` on the pair universe.
#[derive(Debug, Clone)]
pub struct DeltaCongruence {
    pub phi: Partition,
    pub delta: Partition,
    /// Number of generating pairs `((a,a),(b,b))`.
    pub generators: usize,
    /// Size of `M(theta,phi)`.
    pub matrices: usize,
    pub checks: Report,
}

impl DeltaCongruence {
    /// Whether `((a,b),(c,d))` lies in Delta.
    pub fn related(&self, p: &PairAlgebra, ab: (usize, usize), cd: (usize, usize)) -> bool {
        match (p.index_of(ab.0, ab.1), p.index_of(cd.0, cd.1)) {
            (Some(i), Some(j)) => self.delta.related(i, j),
            _ => false,
        }
    }
}

/// Delta as the congruence generated by diagonal pairs and as the transitive
/// closure of `M(theta,phi)`; the two must agree. With a verified weak
/// difference term and abelian theta, vertical transitivity and
/// `Delta_h(theta,theta) = M(theta,theta)` are checked as well.
pub fn delta_congruence(p: &PairAlgebra, phi: &Partition, cert: Option<&WdtCertificate>) -> Result<DeltaCongruence> {
    let a = &p.base;
    if phi.size() != a.size() {
        return Err(Error::SizeMismatch(phi.size(), a.size()));
    }
    if !is_congruence(a, phi) {
        return Err(Error::NotCongruence(phi.to_string()));
    }
    let gens: Vec<(usize, usize)> = phi
        .pairs()
        .into_iter()
        .map(|(x, y)| (p.index_of(x, x).unwrap(), p.index_of(y, y).unwrap()))
        .collect();
    let generated = congruence_generated(p.size(), &Translations::new(&p.algebra), &gens);

    let ms = generate_matrices(a, &p.theta, phi)?;
    let closure = matrices_as_partition(p, &ms.matrices)?;
    if closure != generated {
        return Err(internal(format!(
            "Delta by generation ({generated}) differs from the closure of M ({closure})"
        )));
    }

    let mut checks = Report::new("delta");
    let related = generated.pairs();
    let swapped = related.iter().find(|&&(i, j)| {
        let ((x, y), (u, v)) = (p.pair(i), p.pair(j));
        !generated.related(p.index_of(y, x).unwrap(), p.index_of(v, u).unwrap())
    });
    checks.push(
        "delta-vertical-symmetry",
        "swapping the rows of a Delta-matrix stays in Delta",
        "pair-congruence",
        swapped.is_none(),
        swapped.map(|&(i, j)| format!("{:?} ~ {:?}", p.pair(i), p.pair(j))),
    );

    let usable = match cert {
        Some(c) if c.verdict => Some(is_abelian(a, &p.theta, None)?.holds),
        _ => None,
    };
    match usable {
        Some(true) => {
            let w = vertical_transitivity_failure(p, &generated, &related);
            checks.push(
                "delta-vertical-transitivity",
                "stacking two Delta-matrices along a shared row stays in Delta",
                "pair-congruence",
                w.is_none(),
                w,
            );
            let mtt = if phi == &p.theta {
                ms.matrices.clone()
            } else {
                generate_matrices(a, &p.theta, &p.theta)?.matrices
            };
            let closed = matrices_as_partition(p, &mtt)?;
            let ok = closed.pairs().len() == mtt.len();
            checks.push(
                "delta-theta-theta",
                "Delta_h(theta,theta) equals M(theta,theta)",
                "pair-congruence",
                ok,
                (!ok).then(|| format!("|M| = {}, |Delta_h| = {}", mtt.len(), closed.pairs().len())),
            );
        }
        Some(false) => {
            for id in ["delta-vertical-transitivity", "delta-theta-theta"] {
                checks.skip(id, "needs abelian theta", "pair-congruence", "theta is not abelian");
            }
        }
        None => {
            for id in ["delta-vertical-transitivity", "delta-theta-theta"] {
                checks.skip(
                    id,
                    "needs a verified weak difference term",
                    "pair-congruence",
                    "no verified weak difference term",
                );
            }
        }
    }

    Ok(DeltaCongruence {
        phi: phi.clone(),
        delta: generated,
        generators: gens.len(),
        matrices: ms.len(),
        checks,
    })
}

fn matrices_as_partition(p: &PairAlgebra, ms: &BTreeSet<[usize; 4]>) -> Result<Partition> {
    let mut edges = Vec::with_capacity(ms.len());
    for m in ms {
        let (Some(i), Some(j)) = (p.index_of(m[0], m[1]), p.index_of(m[2], m[3])) else {
            return Err(internal(format!("matrix {m:?} has a column outside theta")));
        };
        edges.push((i, j));
    }
    Ok(Partition::from_pairs(p.size(), edges))
}

fn vertical_transitivity_failure(p: &PairAlgebra, delta: &Partition, related: &[(usize, usize)]) -> Option<String> {
    // index Delta-matrices by their top row (a,c)
    let mut by_top: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for &(i, j) in related {
        let ((a, b), (c, d)) = (p.pair(i), p.pair(j));
        by_top.entry((a, c)).or_default().push((b, d));
    }
    for (&(a, c), bottoms) in &by_top {
        for &(b, d) in bottoms {
            for &(r, s) in by_top.get(&(b, d)).map(Vec::as_slice).unwrap_or(&[]) {
                let ok = match (p.index_of(a, r), p.index_of(c, s)) {
                    (Some(i), Some(j)) => delta.related(i, j),
                    _ => false,
                };
                if !ok {
                    return Some(format!("rows ({a},{c}), ({b},{d}), ({r},{s})"));
                }
            }
        }
    }
    None
}

/// `D(A,theta) = A(theta)/Delta_{theta,alpha}` with `alpha = (0:theta)`.
#[derive(Debug, Clone)]
pub struct DiffAlgebra {
    pub base: Algebra,
    pub theta: Partition,
    pub alpha: Partition,
    pub pairs: PairAlgebra,
    pub delta: DeltaCongruence,
    /// The difference algebra; elements are Delta-classes numbered by least pair.
    pub algebra: Algebra,
    pub nu: ElementMap,
    /// The derived congruence `alpha-bar / Delta`.
    pub phi: Partition,
    /// `0_E` for each alpha-class E, in alpha-class order.
    pub transversal: Vec<usize>,
    /// `A/alpha -> D/phi`, both numbered by least representative.
    pub class_iso: ElementMap,
    pub cert: WdtCertificate,
    pub checks: Report,
    d: Operation,
}

pub fn difference_algebra(a: &Algebra, theta: &Partition, cert: &WdtCertificate) -> Result<DiffAlgebra> {
    cert.require_valid(a)?;
    let p = pair_algebra(a, theta)?;
    if !is_abelian(a, theta, None)?.holds {
        return Err(precondition(format!("{theta} is not abelian")));
    }
    let n = a.size();
    let alpha = centralizer(a, &Partition::identity(n), theta)?;
    let delta = delta_congruence(&p, &alpha, Some(cert))?;
    let (d_alg, nu) = quotient(&p.algebra, &delta.delta, false)?;

    let d_pairs = p.lift_operation(&cert.d)?;
    let single = Algebra::new(p.size(), vec![d_pairs])?;
    if let Some(w) = compatibility_failure(&single, &delta.delta) {
        return Err(precondition(format!("d does not preserve Delta: {w}")));
    }
    let (dq, _) = quotient(&single, &delta.delta, false)?;
    let d = dq.ops()[0].clone();

    let alpha_bar = p.lift(&alpha)?;
    let phi = alpha_bar.image(&nu);
    let reps = alpha.representatives();
    let transversal: Vec<usize> = reps.iter().map(|&c| nu.apply(p.index_of(c, c).unwrap())).collect();
    let phi_cls = phi.class_index();
    let class_iso = ElementMap::new(phi.num_blocks(), transversal.iter().map(|&z| phi_cls[z]).collect())?;

    let mut da = DiffAlgebra {
        base: a.clone(),
        theta: theta.clone(),
        alpha,
        pairs: p,
        delta,
        algebra: d_alg,
        nu,
        phi,
        transversal,
        class_iso,
        cert: cert.clone(),
        checks: Report::new("difference-algebra"),
        d,
    };
    da.checks = da.structure_checks()?;
    Ok(da)
}

impl DiffAlgebra {
    pub fn size(&self) -> usize {
        self.algebra.size()
    }

    /// `(a,b)/Delta`.
    pub fn class_of(&self, a: usize, b: usize) -> Option<usize> {
        self.pairs.index_of(a, b).map(|i| self.nu.apply(i))
    }

    /// `0_{e/alpha}`.
    pub fn zero_of(&self, e: usize) -> usize {
        self.class_of(e, e).expect("diagonal pairs lie in theta")
    }

    /// The weak difference term acting on D.
    pub fn d(&self, x: usize, y: usize, z: usize) -> usize {
        self.d.apply(&[x, y, z])
    }

    pub fn d_operation(&self) -> &Operation {
        &self.d
    }

    /// `Grp_D(phi, 0_E)` for the alpha-class of `e`.
    pub fn derived_group(&self, e: usize) -> Result<GroupOnClass> {
        let z = self.zero_of(e);
        GroupOnClass::from_d(&|x, y, w| self.d(x, y, w), &self.phi.block_of(z), z)
    }

    fn structure_checks(&self) -> Result<Report> {
        let anchor = "difference-algebra";
        let mut r = Report::new("difference-algebra");
        let dn = self.size();
        let zero = Partition::identity(dn);

        let ab = is_abelian(&self.algebra, &self.phi, None)?;
        r.push(
            "derived-abelian",
            "the derived congruence is abelian",
            anchor,
            ab.holds,
            ab.witness.map(|m| format!("{m:?}")),
        );
        let ann = centralizer(&self.algebra, &zero, &self.phi)?;
        r.push(
            "derived-self-annihilator",
            "(0:phi) = phi in D",
            anchor,
            ann == self.phi,
            (ann != self.phi).then(|| format!("(0:phi) = {ann}")),
        );

        let set: BTreeSet<usize> = self.transversal.iter().copied().collect();
        let tr = self.phi.is_transversal(&set) && set.len() == self.transversal.len();
        let sub = is_subuniverse(&self.algebra, &set);
        r.push(
            "canonical-transversal",
            "the zeros 0_E form a transversal of phi and a subuniverse of D",
            anchor,
            tr && sub,
            (!(tr && sub)).then(|| format!("transversal {tr}, subuniverse {sub}")),
        );

        let bad = self
            .pairs
            .pairs
            .iter()
            .enumerate()
            .find(|&(i, &(x, y))| set.contains(&self.nu.apply(i)) != (x == y));
        r.push(
            "transversal-preimage",
            "the preimage of the canonical transversal is the diagonal",
            anchor,
            bad.is_none(),
            bad.map(|(_, &(x, y))| format!("({x},{y})")),
        );

        let (a_q, a_nu) = quotient(&self.base, &self.alpha, false)?;
        let (d_q, _) = quotient(&self.algebra, &self.phi, false)?;
        let iso = self.class_iso.is_isomorphism(&a_q, &d_q);
        let phi_cls = self.phi.class_index();
        let compatible = self
            .pairs
            .pairs
            .iter()
            .enumerate()
            .all(|(i, &(x, _))| phi_cls[self.nu.apply(i)] == self.class_iso.apply(a_nu.apply(x)));
        r.push(
            "class-isomorphism",
            "A/alpha is isomorphic to D/phi via a/alpha -> ((a,a)/Delta)/phi",
            anchor,
            iso && compatible,
            (!(iso && compatible)).then(|| format!("isomorphism {iso}, compatible {compatible}")),
        );

        if is_minimal(&self.base, &self.theta)? {
            let lat = congruence_lattice(&self.algebra)?;
            let atoms: Vec<&Partition> = lat.atoms().into_iter().map(|i| lat.get(i)).collect();
            let ok = atoms.len() == 1 && *atoms[0] == self.phi;
            r.push(
                "difference-monolith",
                "D is subdirectly irreducible with monolith phi",
                anchor,
                ok,
                (!ok).then(|| format!("atoms {atoms:?}")),
            );
        } else {
            r.skip(
                "difference-monolith",
                "D is subdirectly irreducible with monolith phi",
                anchor,
                "theta is not minimal",
            );
        }
        Ok(r)
    }
}

/// `d(x,x,y) = y` everywhere on A.
pub fn is_difference_term(d: &WdtCertificate, n: usize) -> bool {
    (0..n).all(|x| (0..n).all(|y| d.apply(x, x, y) == y))
}

/// `lambda_e(x) = (x,e)/Delta` on `e/theta`.
#[derive(Debug, Clone)]
pub struct LambdaEmbedding {
    pub e: usize,
    pub class: Vec<usize>,
    pub images: Vec<usize>,
    pub injective: bool,
    pub homomorphism: bool,
    /// `lambda_e(d(x,y,z)) = lambda_e(x) - lambda_e(y) + lambda_e(z)`.
    pub preserves_d: bool,
    /// Whether d satisfies `d(x,x,y) = y` on A.
    pub difference_term: bool,
    pub onto: bool,
    pub witness: Option<String>,
}

impl LambdaEmbedding {
    pub fn apply(&self, x: usize) -> Option<usize> {
        self.class.iter().position(|&c| c == x).map(|i| self.images[i])
    }

    /// Injective homomorphism, and onto when d is a difference term.
    pub fn holds(&self) -> bool {
        self.injective && self.homomorphism && self.preserves_d && (!self.difference_term || self.onto)
    }
}

pub fn lambda_embed(da: &DiffAlgebra, e: usize) -> Result<LambdaEmbedding> {
    let n = da.base.size();
    if e >= n {
        return Err(Error::OutOfRange { element: e, size: n });
    }
    let class = da.theta.block_of(e);
    let images: Vec<usize> = class.iter().map(|&x| da.class_of(x, e).unwrap()).collect();
    let grp_a = class_group(&da.base, &da.cert, &da.theta, e)?;
    let grp_d = da.derived_group(e)?;
    let lam = |x: usize| images[class.iter().position(|&c| c == x).unwrap()];
    let mut witness = None;

    let injective = images.iter().collect::<BTreeSet<_>>().len() == images.len();
    if !injective {
        witness = Some("two elements share an image".to_string());
    }
    let mut homomorphism = images.iter().all(|&z| grp_d.contains(z));
    if !homomorphism {
        witness.get_or_insert("an image leaves the derived group".into());
    }
    let mut preserves_d = true;
    for &x in &class {
        for &y in &class {
            if homomorphism && lam(grp_a.add(x, y)) != grp_d.add(lam(x), lam(y)) {
                homomorphism = false;
                witness.get_or_insert(format!("lambda({x}+{y}) differs"));
            }
            for &z in &class {
                if homomorphism
                    && preserves_d
                    && lam(da.cert.apply(x, y, z)) != grp_d.add(grp_d.sub(lam(x), lam(y)), lam(z))
                {
                    preserves_d = false;
                    witness.get_or_insert(format!("lambda(d({x},{y},{z})) differs"));
                }
            }
        }
    }
    let difference_term = is_difference_term(&da.cert, n);
    let onto = images.len() == grp_d.size();
    if difference_term && !onto {
        witness.get_or_insert(format!("image has {} of {} elements", images.len(), grp_d.size()));
    }
    Ok(LambdaEmbedding {
        e,
        class,
        images,
        injective,
        homomorphism,
        preserves_d,
        difference_term,
        onto,
        witness,
    })
}

/// `ran(C) = C^2/Delta` inside `Grp_D(phi, 0_E)`.
#[derive(Debug, Clone)]
pub struct RangeSubgroup {
    pub class: Vec<usize>,
    pub zero: usize,
    pub elements: BTreeSet<usize>,
    /// Equals `ran(lambda_e)` for every e in the class.
    pub matches_lambda: bool,
    pub is_subgroup: bool,
}

pub fn range_of_class(da: &DiffAlgebra, class: &[usize]) -> Result<RangeSubgroup> {
    let Some(&e0) = class.first() else {
        return Err(precondition("empty class"));
    };
    let block = da.theta.block_of(e0);
    let mut sorted = class.to_vec();
    sorted.sort_unstable();
    if sorted != block {
        return Err(precondition(format!("{class:?} is not a theta-class")));
    }
    let elements: BTreeSet<usize> = block
        .iter()
        .flat_map(|&a| block.iter().map(move |&b| (a, b)))
        .map(|(a, b)| da.class_of(a, b).unwrap())
        .collect();
    let mut matches_lambda = true;
    for &e in &block {
        let ran: BTreeSet<usize> = block.iter().map(|&x| da.class_of(x, e).unwrap()).collect();
        matches_lambda &= ran == elements;
    }
    let g = da.derived_group(e0)?;
    let is_subgroup = elements.iter().all(|&x| g.contains(x))
        && elements.contains(&g.zero)
        && elements.iter().all(|&x| elements.iter().all(|&y| elements.contains(&g.sub(x, y))));
    Ok(RangeSubgroup {
        class: block,
        zero: g.zero,
        elements,
        matches_lambda,
        is_subgroup,
    })
}

/// A basic positive translation: `d(x,e,e')` or `d(e,e',x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Translation {
    Left(usize, usize),
    Right(usize, usize),
}

impl Translation {
    pub fn apply(&self, cert: &WdtCertificate, x: usize) -> usize {
        match *self {
            Translation::Left(e, f) => cert.apply(x, e, f),
            Translation::Right(e, f) => cert.apply(e, f, x),
        }
    }
}

impl fmt::Display for Translation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Translation::Left(e, g) => write!(f, "d(x,{e},{g})"),
            Translation::Right(e, g) => write!(f, "d({e},{g},x)"),
        }
    }
}

pub fn apply_chain(cert: &WdtCertificate, chain: &[Translation], x: usize) -> usize {
    chain.iter().fold(x, |acc, t| t.apply(cert, acc))
}

pub fn chain_to_string(chain: &[Translation]) -> String {
    if chain.is_empty() {
        return "x".into();
    }
    chain.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" then ")
}

/// The arrow relation on the theta-classes inside one alpha-class.
#[derive(Debug, Clone)]
pub struct ArrowGraph {
    pub alpha_class: Vec<usize>,
    /// Theta-classes in E, ordered by least element.
    pub nodes: Vec<Vec<usize>>,
    /// Reachability closure; each entry stores a witness chain, applied left to right.
    pub edges: BTreeMap<(usize, usize), Vec<Translation>>,
    pub checks: Report,
}

impl ArrowGraph {
    pub fn reaches(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&(i, j))
    }

    pub fn node_of(&self, x: usize) -> Option<usize> {
        self.nodes.iter().position(|c| c.contains(&x))
    }
}

/// The arrow graph of the alpha-class of `e`, with witnesses built from `cert`.
pub fn arrow_graph(da: &DiffAlgebra, e: usize, cert: &WdtCertificate) -> Result<ArrowGraph> {
    let a = &da.base;
    cert.require_valid(a)?;
    if e >= a.size() {
        return Err(Error::OutOfRange {
            element: e,
            size: a.size(),
        });
    }
    let big = da.alpha.block_of(e);
    let mut nodes: Vec<Vec<usize>> = Vec::new();
    for &x in &big {
        if !nodes.iter().any(|c| c.contains(&x)) {
            nodes.push(da.theta.block_of(x));
        }
    }
    let node_of = |x: usize| nodes.iter().position(|c| c.contains(&x));

    let mut basics = Vec::new();
    for &u in &big {
        for &v in &big {
            basics.push(Translation::Left(u, v));
            basics.push(Translation::Right(u, v));
        }
    }
    // one step: each basic translation sends a whole class into one class
    let k = nodes.len();
    let mut step: Vec<Vec<(usize, Translation)>> = vec![Vec::new(); k];
    for (i, c) in nodes.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for t in &basics {
            let img: BTreeSet<Option<usize>> = c.iter().map(|&x| node_of(t.apply(cert, x))).collect();
            if img.len() != 1 {
                return Err(internal(format!("{t} splits a theta-class")));
            }
            let Some(j) = img.into_iter().next().unwrap() else {
                return Err(internal(format!("{t} leaves the alpha-class")));
            };
            if seen.insert(j) {
                step[i].push((j, *t));
            }
        }
    }
    let mut edges = BTreeMap::new();
    for s in 0..k {
        let mut chains: BTreeMap<usize, Vec<Translation>> = BTreeMap::new();
        chains.insert(s, Vec::new());
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            for &(j, t) in &step[i] {
                if !chains.contains_key(&j) {
                    let mut ch = chains[&i].clone();
                    ch.push(t);
                    chains.insert(j, ch);
                    queue.push_back(j);
                }
            }
        }
        for (j, ch) in chains {
            edges.insert((s, j), ch);
        }
    }
    let mut g = ArrowGraph {
        alpha_class: big,
        nodes,
        edges,
        checks: Report::new("arrow"),
    };
    g.checks = arrow_checks(da, &g, cert)?;
    Ok(g)
}

fn arrow_checks(da: &DiffAlgebra, g: &ArrowGraph, cert: &WdtCertificate) -> Result<Report> {
    let anchor = "arrow-relation";
    let mut r = Report::new("arrow");
    let ranges = g
        .nodes
        .iter()
        .map(|c| range_of_class(da, c))
        .collect::<Result<Vec<_>>>()?;

    let mut fail = None;
    for (&(i, j), chain) in &g.edges {
        let (c, c2) = (&g.nodes[i], &g.nodes[j]);
        if !c.iter().all(|&x| c2.contains(&apply_chain(cert, chain, x))) {
            fail = Some(format!("{} does not map class {i} into class {j}", chain_to_string(chain)));
            break;
        }
        if !ranges[i].elements.is_subset(&ranges[j].elements) {
            fail = Some(format!("ran of class {i} is not inside ran of class {j}"));
            break;
        }
        let moved = c.iter().find_map(|&x| {
            c.iter()
                .find(|&&y| {
                    let (fx, fy) = (apply_chain(cert, chain, x), apply_chain(cert, chain, y));
                    !da.delta.related(&da.pairs, (fx, fy), (x, y))
                })
                .map(|&y| (x, y))
        });
        if let Some((x, y)) = moved {
            fail = Some(format!("({x},{y}) moves off its Delta-class under {}", chain_to_string(chain)));
            break;
        }
    }
    r.push(
        "arrow-range-inclusion",
        "an arrow C -> C' gives ran(C) inside ran(C') and preserves pairs modulo Delta",
        anchor,
        fail.is_none(),
        fail,
    );

    let k = g.nodes.len();
    let lonely = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .find(|&(i, j)| !(0..k).any(|l| g.reaches(i, l) && g.reaches(j, l)));
    r.push(
        "arrow-upper-bound",
        "any two classes have a common arrow target",
        anchor,
        lonely.is_none(),
        lonely.map(|(i, j)| format!("classes {i} and {j}")),
    );

    let mut pointed = None;
    'outer: for (&(i, j), chain) in &g.edges {
        for &e in &g.nodes[i] {
            for &e2 in &g.nodes[j] {
                let mut ch = chain.clone();
                ch.push(Translation::Left(apply_chain(cert, chain, e), e2));
                let ok = apply_chain(cert, &ch, e) == e2
                    && g.nodes[i].iter().all(|&x| g.nodes[j].contains(&apply_chain(cert, &ch, x)));
                if !ok {
                    pointed = Some(format!("no pointed witness from {e} to {e2}"));
                    break 'outer;
                }
            }
        }
    }
    r.push(
        "arrow-pointed-witness",
        "an arrow has a witness sending any chosen e to any chosen e'",
        anchor,
        pointed.is_none(),
        pointed,
    );

    if is_difference_term(cert, da.base.size()) {
        let missing = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .find(|&(i, j)| !g.reaches(i, j));
        r.push(
            "arrow-complete",
            "with a difference term every class reaches every class",
            anchor,
            missing.is_none(),
            missing.map(|(i, j)| format!("class {i} does not reach class {j}")),
        );
    } else {
        r.skip(
            "arrow-complete",
            "with a difference term every class reaches every class",
            anchor,
            "d(x,x,y) = y fails",
        );
    }
    Ok(r)
}

/// Folds same-id items from several reports into one item each: the first
/// failure wins, otherwise a pass, otherwise the first skip.
fn fold_reports(out: &mut Report, parts: Vec<Report>) {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, crate::report::Item> = BTreeMap::new();
    use crate::report::Verdict;
    for part in parts {
        for it in part.items {
            match by_id.get(&it.id) {
                None => {
                    order.push(it.id.clone());
                    by_id.insert(it.id.clone(), it);
                }
                Some(prev) => {
                    let replace = match (prev.verdict, it.verdict) {
                        (Verdict::Fail, _) => false,
                        (_, Verdict::Fail) => true,
                        (Verdict::Skip, Verdict::Pass) => true,
                        _ => false,
                    };
                    if replace {
                        by_id.insert(it.id.clone(), it);
                    }
                }
            }
        }
    }
    for id in order {
        out.items.push(by_id.remove(&id).unwrap());
    }
}

/// The full check suite for a difference algebra.
pub fn verify_diffalg_theorems(da: &DiffAlgebra) -> Result<Report> {
    let anchor = "difference-algebra";
    let a = &da.base;
    let n = a.size();
    let p = &da.pairs;
    let mut r = Report::new("diffalg");
    r.extend(da.delta.checks.clone());
    r.extend(da.checks.clone());

    // diagonal classes
    let mut diag_fail = None;
    for x in 0..n {
        let cls = da.zero_of(x);
        let got: BTreeSet<(usize, usize)> = p
            .pairs
            .iter()
            .enumerate()
            .filter(|&(i, _)| da.nu.apply(i) == cls)
            .map(|(_, &q)| q)
            .collect();
        let want: BTreeSet<(usize, usize)> = da.alpha.block_of(x).into_iter().map(|y| (y, y)).collect();
        if got != want {
            diag_fail = Some(format!("(x,x)/Delta for x={x} is {got:?}"));
            break;
        }
    }
    r.push(
        "diagonal-classes",
        "(a,a)/Delta = {(b,b) : (a,b) in alpha}",
        anchor,
        diag_fail.is_none(),
        diag_fail,
    );

    let lat = congruence_lattice(&p.algebra)?;
    let m = p.size();
    let alpha_bar = p.lift(&da.alpha)?;
    let theta_bar = p.lift(&da.theta)?;
    let delta = &da.delta.delta;
    let zero = Partition::identity(m);
    let eps = theta_bar.wedge(delta);
    let idx = |q: &Partition| {
        lat.index_of(q)
            .ok_or_else(|| internal(format!("{q} is missing from Con(A(theta))")))
    };
    let (i_zero, i_theta, i_delta, i_alpha) = (idx(&zero)?, idx(&theta_bar)?, idx(delta)?, idx(&alpha_bar)?);
    let (i_eta1, i_eta2, i_eps) = (idx(&p.eta1)?, idx(&p.eta2)?, idx(&eps)?);

    let nonzero = !da.theta.is_identity();
    if nonzero {
        let ann = centralizer(&p.algebra, delta, &alpha_bar)?;
        let ok = delta.lt(&alpha_bar) && ann == alpha_bar;
        r.push(
            "lift-annihilator",
            "Delta < alpha-bar and (Delta : alpha-bar) = alpha-bar",
            anchor,
            ok,
            (!ok).then(|| format!("(Delta:alpha-bar) = {ann}")),
        );

        let tb_ab = lift_is_abelian(p, &theta_bar)?;
        let iv = interval_modular_permuting(&lat, i_zero, i_theta, tb_ab);
        r.push(
            "lift-abelian-interval",
            "theta-bar is abelian and I[0,theta-bar] is modular with permuting members",
            anchor,
            tb_ab && iv.passed(),
            if tb_ab { iv.witness } else { Some("theta-bar is not abelian".into()) },
        );

        let five = [i_zero, i_eta1, i_eta2, i_eps, i_theta];
        let m3 = is_m3(&lat, five);
        r.push(
            "m3-sublattice",
            "{0, eta1, eta2, epsilon, theta-bar} is a sublattice isomorphic to M3",
            anchor,
            m3,
            (!m3).then(|| format!("{:?}", five.map(|i| lat.get(i).to_string()))),
        );

        let up = [
            ("epsilon", &eps, &theta_bar),
            ("0", &zero, &p.eta1),
            ("0", &zero, &p.eta2),
        ];
        let bad = up
            .iter()
            .position(|(_, lo, hi)| !perspective((lo, hi), (delta, &alpha_bar)));
        r.push(
            "transpose-up",
            "(epsilon,theta-bar), (0,eta1), (0,eta2) each transpose up to (Delta,alpha-bar)",
            anchor,
            bad.is_none(),
            bad.map(|i| format!("pair {} fails", i + 1)),
        );

        if is_minimal(a, &da.theta)? {
            let lengths = lat.chain_lengths(i_zero, i_theta);
            let cover = lat.is_cover(i_delta, i_alpha);
            let cmi = lat.is_completely_meet_irreducible(i_delta);
            let ok = lengths == BTreeSet::from([2]) && cover && cmi;
            r.push(
                "minimal-height-two",
                "I[0,theta-bar] has height 2, Delta is covered by alpha-bar and is completely meet-irreducible",
                anchor,
                ok,
                (!ok).then(|| format!("chain lengths {lengths:?}, cover {cover}, irreducible {cmi}")),
            );
        } else {
            r.skip(
                "minimal-height-two",
                "I[0,theta-bar] has height 2 when theta is minimal",
                anchor,
                "theta is not minimal",
            );
        }
    } else {
        for id in [
            "lift-annihilator",
            "lift-abelian-interval",
            "m3-sublattice",
            "transpose-up",
            "minimal-height-two",
        ] {
            r.skip(id, "needs nonzero theta", anchor, "theta is zero");
        }
    }

    let mut shift = None;
    'shift: for block in da.theta.blocks() {
        for &x in &block {
            for &y in &block {
                for &e in &block {
                    if !da.delta.related(p, (x, y), (da.cert.apply(x, y, e), e)) {
                        shift = Some(format!("a={x}, b={y}, e={e}"));
                        break 'shift;
                    }
                }
            }
        }
    }
    r.push(
        "difference-shift",
        "(a,b) is Delta-related to (d(a,b,e),e) inside a theta-class",
        "ranges",
        shift.is_none(),
        shift,
    );

    let lambdas = (0..n).map(|e| lambda_embed(da, e)).collect::<Result<Vec<_>>>()?;
    let bad = lambdas.iter().find(|l| !l.holds());
    r.push(
        "lambda-embedding",
        "lambda_e embeds Grp(theta,e) into the derived group, onto when d is a difference term",
        "ranges",
        bad.is_none(),
        bad.map(|l| format!("e={}: {}", l.e, l.witness.clone().unwrap_or_default())),
    );

    let mut range_fail = None;
    let mut directed_fail = None;
    let mut max_fail = None;
    let mut arrow_reports = Vec::new();
    for e in da.alpha.representatives() {
        let classes: Vec<Vec<usize>> = {
            let mut seen = Vec::<Vec<usize>>::new();
            for x in da.alpha.block_of(e) {
                let b = da.theta.block_of(x);
                if !seen.contains(&b) {
                    seen.push(b);
                }
            }
            seen
        };
        let ranges = classes
            .iter()
            .map(|c| range_of_class(da, c))
            .collect::<Result<Vec<_>>>()?;
        if let Some(rg) = ranges.iter().find(|rg| !(rg.matches_lambda && rg.is_subgroup)) {
            range_fail.get_or_insert(format!("class {:?}", rg.class));
        }
        let full: BTreeSet<usize> = da.phi.block_of(da.zero_of(e)).into_iter().collect();
        let union: BTreeSet<usize> = ranges.iter().flat_map(|rg| rg.elements.iter().copied()).collect();
        let directed = ranges.iter().all(|r1| {
            ranges.iter().all(|r2| {
                ranges
                    .iter()
                    .any(|r3| r1.elements.is_subset(&r3.elements) && r2.elements.is_subset(&r3.elements))
            })
        });
        if !(directed && union == full) {
            directed_fail.get_or_insert(format!("alpha-class of {e}: directed {directed}, covers {}", union == full));
        }
        if !ranges.iter().any(|rg| rg.elements == full) {
            max_fail.get_or_insert(format!("alpha-class of {e}"));
        }
        arrow_reports.push(arrow_graph(da, e, &da.cert)?.checks);
    }
    r.push(
        "range-subgroup",
        "C^2/Delta is a subgroup equal to ran(lambda_e) for each e in C",
        "ranges",
        range_fail.is_none(),
        range_fail,
    );
    r.push(
        "ranges-directed",
        "the ranges in an alpha-class form a directed family covering the derived group",
        "ranges",
        directed_fail.is_none(),
        directed_fail,
    );
    r.push(
        "range-maximum",
        "some class in each alpha-class has the whole derived group as range",
        "ranges",
        max_fail.is_none(),
        max_fail,
    );
    fold_reports(&mut r, arrow_reports);

    let stmt = "every theta-class has size 1 or the maximal size q";
    let guard = if !a.is_idempotent() {
        Some("not idempotent")
    } else if !is_minimal(a, &da.theta)? {
        Some("theta is not minimal")
    } else if !da.alpha.is_full() {
        Some("(0:theta) is not the full congruence")
    } else {
        None
    };
    match guard {
        Some(why) => r.skip("idempotent-class-sizes", stmt, "class-sizes", why),
        None => {
            let sizes: BTreeSet<usize> = da.theta.blocks().iter().map(Vec::len).collect();
            let q = *sizes.iter().max().unwrap();
            let ok = sizes.iter().all(|&s| s == 1 || s == q);
            r.push(
                "idempotent-class-sizes",
                stmt,
                "class-sizes",
                ok,
                Some(format!("sizes {sizes:?}")),
            );
        }
    }
    Ok(r)
}

/// `theta-bar` abelian in `A(theta)`. Centrality modulo eta1 and modulo eta2
/// (both computed in quotients isomorphic to A) with `eta1 ^ eta2 = 0` already
/// forces it; the direct matrix closure runs only when that shortcut fails.
pub fn lift_is_abelian(p: &PairAlgebra, theta_bar: &Partition) -> Result<bool> {
    let via_kernels = p.eta1.wedge(&p.eta2).is_identity()
        && centralizes(&p.algebra, theta_bar, theta_bar, &p.eta1)?.holds
        && centralizes(&p.algebra, theta_bar, theta_bar, &p.eta2)?.holds;
    if via_kernels {
        return Ok(true);
    }
    Ok(is_abelian(&p.algebra, theta_bar, None)?.holds)
}

/// Five distinct lattice elements `[0, a, b, c, 1]` forming M3.
fn is_m3(lat: &crate::congruence::CongruenceLattice, five: [usize; 5]) -> bool {
    if five.iter().collect::<HashSet<_>>().len() != 5 {
        return false;
    }
    let (bot, top) = (five[0], five[4]);
    let mid = &five[1..4];
    mid.iter().all(|&x| {
        mid.iter()
            .all(|&y| x == y || (lat.meet(x, y) == bot && lat.join(x, y) == top))
    }) && mid.iter().all(|&x| lat.leq(bot, x) && lat.leq(x, top))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::wdt::{verify_wdt, Scope};

    fn z4_cert() -> WdtCertificate {
        let z4 = fixtures::z4();
        verify_wdt(&z4, &z4.op("p").unwrap().table, Scope::Base).unwrap()
    }

    #[test]
    fn pair_algebra_sizes() {
        let z4 = fixtures::z4();
        let p = pair_algebra(&z4, &fixtures::z4_theta()).unwrap();
        assert_eq!(p.size(), 8);
        assert_eq!(p.pairs[0], (0, 0));
        assert_eq!(p.pairs[1], (0, 2));
        let d = pair_algebra(&z4, &Partition::identity(4)).unwrap();
        assert_eq!(d.size(), 4);
        let z2 = fixtures::z2();
        assert_eq!(pair_algebra(&z2, &Partition::full(2)).unwrap().size(), 4);
        assert_eq!(p.eta1.num_blocks(), 4);
        assert!(p.eta1.wedge(&p.eta2).is_identity());
        assert_eq!(p.lift(&Partition::full(4)).unwrap(), Partition::full(8));
    }

    #[test]
    fn delta_examples() {
        let z2 = fixtures::z2();
        let p = pair_algebra(&z2, &Partition::full(2)).unwrap();
        let dc = delta_congruence(&p, &Partition::full(2), None).unwrap();
        let i = |a, b| p.index_of(a, b).unwrap();
        assert!(dc.delta.related(i(0, 0), i(1, 1)));
        assert!(dc.delta.related(i(0, 1), i(1, 0)));
        assert_eq!(dc.delta.num_blocks(), 2);

        let z4 = fixtures::z4();
        let p = pair_algebra(&z4, &fixtures::z4_theta()).unwrap();
        let cert = z4_cert();
        let dc = delta_congruence(&p, &Partition::full(4), Some(&cert)).unwrap();
        assert_eq!(dc.delta.blocks().iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4]);
        assert!(dc.checks.passed());
        let dc0 = delta_congruence(&p, &Partition::identity(4), None).unwrap();
        assert!(dc0.delta.is_identity());
    }

    #[test]
    fn z4_difference_algebra() {
        let z4 = fixtures::z4();
        let cert = z4_cert();
        let da = difference_algebra(&z4, &fixtures::z4_theta(), &cert).unwrap();
        assert_eq!(da.size(), 2);
        assert!(da.phi.is_full());
        assert_eq!(da.transversal.len(), 1);
        assert!(da.checks.passed(), "{:?}", da.checks.failures());
        let lam = lambda_embed(&da, 0).unwrap();
        assert!(lam.holds() && lam.onto);
        let rep = verify_diffalg_theorems(&da).unwrap();
        assert!(rep.passed(), "{:?}", rep.failures());
        assert_eq!(rep.item("m3-sublattice").unwrap().verdict, crate::report::Verdict::Pass);
        let g = arrow_graph(&da, 0, &cert).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 4);
    }

    #[test]
    fn rejects_non_abelian() {
        let s2 = fixtures::s2_ternary();
        let cert = crate::wdt::search_wdt(&s2, 10_000);
        if let Ok(cert) = cert {
            assert!(difference_algebra(&s2, &Partition::full(2), &cert).is_err());
        }
    }

    #[test]
    fn gen1_and_gen2() {
        let g1 = fixtures::gen1();
        let c1 = verify_wdt(&g1.algebra, &g1.algebra.op("d").unwrap().table, Scope::Base).unwrap();
        let da1 = difference_algebra(&g1.algebra, &g1.mu, &c1).unwrap();
        assert_eq!(da1.size(), 2);

        let g2 = fixtures::gen2();
        let c2 = verify_wdt(&g2.algebra, &g2.algebra.op("d").unwrap().table, Scope::Base).unwrap();
        assert!(c2.verdict);
        let da = difference_algebra(&g2.algebra, &g2.mu, &c2).unwrap();
        assert_eq!(da.size(), 6);
        let mut sizes: Vec<usize> = da.phi.blocks().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 4]);
        let rep = verify_diffalg_theorems(&da).unwrap();
        assert!(rep.passed(), "{:?}", rep.failures());
        assert_eq!(rep.item("idempotent-class-sizes").unwrap().verdict, crate::report::Verdict::Skip);
    }
}

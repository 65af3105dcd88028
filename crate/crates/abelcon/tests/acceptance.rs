//! The acceptance suite: eight criteria, each timed against its budget and
//! printed as one pass/fail line. Exits nonzero if any criterion fails.

use std::collections::{BTreeSet, HashSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use abelcon::algebra::{find_isomorphism, Algebra};
use abelcon::diffalg::{difference_algebra, pair_algebra, range_of_class};
use abelcon::fixtures;
use abelcon::genlab::{verify_claims, Generated};
use abelcon::partition::Partition;
use abelcon::random::{law_sweep, random_algebras, RandomShape, SWEEP_WDT_CAP};
use abelcon::simdiv::{
    bridge_construct, diff_of, field_of, freese_ring, is_similar, monolith, perspective_diff_iso, ring_isomorphism,
    BridgeMode, RingTables, DEFAULT_SEARCH_CAP,
};
use abelcon::wdt::{class_group, search_wdt, WdtCertificate, DEFAULT_WDT_SEARCH_CAP};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn cert(a: &Algebra) -> Result<WdtCertificate, String> {
    let c = search_wdt(a, DEFAULT_WDT_SEARCH_CAP).map_err(err)?;
    ensure(c.verdict, || "no weak difference term found".into())?;
    Ok(c)
}

// ---------- independent oracles ----------

/// Every partition of `0..n`, by restricted growth strings.
fn partitions(n: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    fn rec(i: usize, max: usize, rgs: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if i == rgs.len() {
            out.push(Partition::kernel_of(rgs));
            return;
        }
        for b in 0..=max + 1 {
            rgs[i] = b;
            rec(i + 1, max.max(b), rgs, out);
        }
    }
    if n == 0 {
        return out;
    }
    rec(1, 0, &mut rgs, &mut out);
    out
}

/// Direct check that every operation preserves `p`, argument by argument.
fn compatible(a: &Algebra, p: &Partition) -> bool {
    let n = a.size();
    a.ops().iter().all(|o| {
        let k = o.arity;
        (0..n.pow(k as u32)).all(|idx| {
            let mut args: Vec<usize> = (0..k).map(|j| idx / n.pow((k - 1 - j) as u32) % n).collect();
            let base = o.apply(&args);
            (0..k).all(|j| {
                let keep = args[j];
                let ok = (0..n).filter(|&y| p.related(keep, y)).all(|y| {
                    args[j] = y;
                    p.related(base, o.apply(&args))
                });
                args[j] = keep;
                ok
            })
        })
    })
}

fn congruences(a: &Algebra) -> Vec<Partition> {
    partitions(a.size()).into_iter().filter(|p| compatible(a, p)).collect()
}

/// The subuniverse of `A^4` generated by `seeds`, by a plain worklist.
fn closure4(a: &Algebra, seeds: &[[usize; 4]]) -> Vec<[usize; 4]> {
    let mut set: HashSet<[usize; 4]> = seeds.iter().copied().collect();
    let mut all: Vec<[usize; 4]> = set.iter().copied().collect();
    let mut done = 0;
    loop {
        let before = all.len();
        for o in a.ops() {
            let k = o.arity;
            let total = all.len().pow(k as u32);
            for idx in 0..total {
                let picks: Vec<usize> = (0..k).map(|j| idx / all.len().pow((k - 1 - j) as u32) % all.len()).collect();
                if picks.iter().all(|&i| i < done) {
                    continue;
                }
                let mut t = [0; 4];
                for (c, slot) in t.iter_mut().enumerate() {
                    let args: Vec<usize> = picks.iter().map(|&i| all[i][c]).collect();
                    *slot = o.apply(&args);
                }
                if set.insert(t) {
                    all.push(t);
                }
            }
        }
        done = before;
        if all.len() == before {
            return all;
        }
    }
}

/// C(phi,theta;delta) read off the rows of the closure of `(x,y,x,y)`, `(c,c,d,d)`.
fn centralizes_naive(a: &Algebra, phi: &Partition, theta: &Partition, delta: &Partition) -> bool {
    let mut seeds: Vec<[usize; 4]> = phi.pairs().into_iter().map(|(x, y)| [x, y, x, y]).collect();
    seeds.extend(theta.pairs().into_iter().map(|(c, d)| [c, c, d, d]));
    closure4(a, &seeds)
        .iter()
        .all(|m| delta.related(m[0], m[2]) == delta.related(m[1], m[3]))
}

fn two_term_naive(a: &Algebra, theta: &Partition) -> bool {
    let mut seeds: Vec<[usize; 4]> = theta.pairs().into_iter().map(|(x, y)| [x, y, x, y]).collect();
    seeds.extend(theta.pairs().into_iter().map(|(c, d)| [c, c, d, d]));
    let ms = closure4(a, &seeds);
    ms.iter().all(|m| {
        ms.iter().all(|m2| {
            let diff: Vec<usize> = (0..4).filter(|&i| m[i] != m2[i]).collect();
            diff.len() != 1
        })
    })
}

/// The lengths of maximal chains from `lo` to `hi` in a list of partitions.
fn chain_lengths(cons: &[Partition], lo: &Partition, hi: &Partition) -> BTreeSet<usize> {
    if lo == hi {
        return [0].into();
    }
    let covers = cons.iter().filter(|c| {
        lo.lt(c) && c.leq(hi) && !cons.iter().any(|m| lo.lt(m) && m.lt(c))
    });
    covers.flat_map(|c| chain_lengths(cons, c, hi).into_iter().map(|l| l + 1)).collect()
}

// ---------- criteria ----------

fn m3_shape() -> Outcome {
    let z4 = fixtures::z4();
    let theta = fixtures::z4_theta();
    let da = difference_algebra(&z4, &theta, &cert(&z4)?).map_err(err)?;
    let p = pair_algebra(&z4, &theta).map_err(err)?;
    let m = p.size();
    let cons = congruences(&p.algebra);
    let zero = Partition::identity(m);
    let theta_bar = p.lift(&theta).map_err(err)?;
    ensure(p.pairs.len() == 8, || format!("A(theta) has {} elements", p.pairs.len()))?;
    let delta = &da.delta.delta;
    let eps = theta_bar.wedge(delta);
    let five = [&zero, &p.eta1, &p.eta2, &eps, &theta_bar];
    ensure(five.iter().all(|x| cons.contains(x)), || "a member of the five is not a congruence".into())?;
    let atoms = [&p.eta1, &p.eta2, &eps];
    for (i, x) in atoms.iter().enumerate() {
        ensure(zero.lt(x) && Partition::lt(x, &theta_bar), || format!("atom {i} is not strictly between 0 and theta-bar"))?;
        for (j, y) in atoms.iter().enumerate() {
            if i != j {
                // joins of congruences are joins of partitions
                ensure(x.wedge(y) == zero && x.vee(y) == theta_bar, || format!("atoms {i} and {j} do not meet to 0 and join to top"))?;
            }
        }
    }
    let lengths = chain_lengths(&cons, &zero, &theta_bar);
    ensure(lengths == BTreeSet::from([2]), || format!("chain lengths in I[0,theta-bar]: {lengths:?}"))?;
    let alpha_bar = p.lift(&da.alpha).map_err(err)?;
    ensure(delta.lt(&alpha_bar), || "Delta is not below alpha-bar".into())?;
    ensure(!cons.iter().any(|c| delta.lt(c) && c.lt(&alpha_bar)), || "alpha-bar does not cover Delta".into())?;
    let above: Vec<&Partition> = cons.iter().filter(|c| delta.lt(c)).collect();
    let meet = above.iter().fold(Partition::full(m), |acc, c| acc.wedge(c));
    ensure(meet != *delta, || "Delta is the meet of the congruences above it".into())?;
    ensure(meet == alpha_bar, || format!("the congruences above Delta meet to {meet}"))?;
    Ok(format!("|Con(A(theta))| = {}", cons.len()))
}

fn is_prime_power(x: usize, p: usize) -> bool {
    let mut x = x;
    while x > 1 && x % p == 0 {
        x /= p;
    }
    x == 1
}

fn class_size_law() -> Outcome {
    let cases: Vec<(&str, Algebra, Partition, usize)> = {
        let g = [("gen1", fixtures::gen1()), ("gen2", fixtures::gen2()), ("gen3", fixtures::gen3())];
        let mut v = vec![("z4", fixtures::z4(), fixtures::z4_theta(), 2)];
        v.extend(g.into_iter().map(|(name, g)| (name, g.algebra, g.mu, g.field.p)));
        v
    };
    let mut classes = 0;
    for (name, a, theta, p) in cases {
        let mono = monolith(&a).map_err(err)?;
        ensure(mono == theta, || format!("{name}: monolith {mono}"))?;
        let c = cert(&a)?;
        for e in theta.representatives() {
            let g = class_group(&a, &c, &theta, e).map_err(err)?;
            ensure(is_prime_power(g.size(), p), || format!("{name}: class of {e} has size {}", g.size()))?;
            let exp = g.exponent();
            ensure(exp == p || g.size() == 1, || format!("{name}: class of {e} has exponent {exp}"))?;
            classes += 1;
        }
    }
    Ok(format!("{classes} classes"))
}

fn mu_classes_in(g: &Generated, alpha_class: &[usize]) -> Vec<Vec<usize>> {
    g.mu.blocks().into_iter().filter(|b| alpha_class.contains(&b[0])).collect()
}

fn non_uniform_ranges() -> Outcome {
    let g = fixtures::gen2();
    let a = &g.algebra;
    let da = difference_algebra(a, &g.mu, &cert(a)?).map_err(err)?;
    let mut found = false;
    for c in g.alpha.blocks() {
        let sizes: BTreeSet<usize> = mu_classes_in(&g, &c).iter().map(Vec::len).collect();
        found |= sizes.contains(&4) && sizes.contains(&2);
    }
    ensure(found, || "no alpha-class holds mu-classes of sizes 4 and 2".into())?;

    // h: (x, 0)/Delta -> sigma(x) for x in the base sort of each alpha-class
    let mut h = vec![None; da.size()];
    for ell in 0..g.config.dims.len() {
        let base = g.sort_index(ell, 0).unwrap();
        let z = g.zero(base);
        for x in g.members(base) {
            let q = da.class_of(x, z).ok_or("a base pair leaves mu")?;
            ensure(h[q].is_none(), || format!("two base elements share class {q}"))?;
            h[q] = Some((ell, g.sigma[x]));
        }
    }
    ensure(h.iter().all(Option::is_some), || "h is not onto D(A, mu)".into())?;
    let h: Vec<(usize, usize)> = h.into_iter().map(Option::unwrap).collect();

    for (si, s) in g.sorts.iter().enumerate() {
        let ran = range_of_class(&da, &g.members(si)).map_err(err)?;
        let image: BTreeSet<(usize, usize)> = ran.elements.iter().map(|&q| h[q]).collect();
        let want: BTreeSet<(usize, usize)> = g.w_elements(s.ell, s.i).into_iter().map(|w| (s.ell, w)).collect();
        ensure(image == want, || format!("V^{}_{}: range {image:?}, subspace {want:?}", s.ell, s.i))?;
    }

    for c in g.alpha.blocks() {
        let classes = mu_classes_in(&g, &c);
        let ranges: Vec<BTreeSet<usize>> = classes
            .iter()
            .map(|k| range_of_class(&da, k).map(|r| r.elements))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let directed = ranges
            .iter()
            .all(|r1| ranges.iter().all(|r2| ranges.iter().any(|r3| r1.is_subset(r3) && r2.is_subset(r3))));
        ensure(directed, || format!("ranges in alpha-class {c:?} are not directed"))?;
        let union: BTreeSet<usize> = ranges.iter().flatten().copied().collect();
        let full: BTreeSet<usize> = da.phi.block_of(da.zero_of(c[0])).into_iter().collect();
        ensure(union == full, || format!("ranges in alpha-class {c:?} cover {union:?}, not {full:?}"))?;
    }
    Ok(format!("{} sorts", g.sorts.len()))
}

fn gf2() -> RingTables {
    RingTables {
        size: 2,
        zero: 0,
        one: 1,
        add: vec![0, 1, 1, 0],
        neg: vec![0, 1],
        mul: vec![0, 0, 0, 1],
    }
}

fn division_rings_agree() -> Outcome {
    let g1 = fixtures::gen1();
    let g2 = fixtures::gen2();
    let cases = [
        ("z2", fixtures::z2(), Partition::full(2)),
        ("z4", fixtures::z4(), fixtures::z4_theta()),
        ("gen1", g1.algebra.clone(), g1.mu.clone()),
        ("gen2", g2.algebra.clone(), g2.mu.clone()),
    ];
    let mut sizes = Vec::new();
    for (name, a, theta) in &cases {
        let c = cert(a)?;
        let t: BTreeSet<usize> = theta.blocks().iter().map(|b| b[0]).collect();
        let fd = freese_ring(a, theta, &t, &c, DEFAULT_SEARCH_CAP).map_err(err)?;
        ensure(fd.checks.passed(), || format!("{name}: {:?}", fd.checks.failures()))?;
        ensure(fd.checks.item("freese-phi-isomorphism").is_some(), || format!("{name}: Phi was not checked"))?;
        let da = difference_algebra(a, theta, &c).map_err(err)?;
        let field = field_of(&da, DEFAULT_SEARCH_CAP).map_err(err)?;
        ensure(field.checks.passed(), || format!("{name}: {:?}", field.checks.failures()))?;
        ensure(fd.tables.size == field.size(), || format!("{name}: |D| = {}, |F_theta| = {}", fd.tables.size, field.size()))?;
        ensure(ring_isomorphism(&fd.tables, &field.tables).map_err(err)?.is_some(), || format!("{name}: rings are not isomorphic"))?;
        if *name == "gen2" {
            ensure(ring_isomorphism(&field.tables, &gf2()).map_err(err)?.is_some(), || "gen2: F_mu is not GF(2)".into())?;
        }
        sizes.push(format!("{name} {}", field.size()));
    }
    Ok(sizes.join(", "))
}

fn similarity_round_trip() -> Outcome {
    for (name, a) in [("z4", fixtures::z4()), ("gen2", fixtures::gen2().algebra)] {
        let c = cert(&a)?;
        let canon = bridge_construct(&a, &c, BridgeMode::CanonicalToD).map_err(err)?;
        ensure(canon.verification.passed(), || format!("{name}: canonical bridge {:?}", canon.verification.failures()))?;
        let d = diff_of(&a, &c).map_err(err)?;
        let dc = d.certificate(&c).map_err(err)?;
        let sim = is_similar(&a, &c, &d.algebra, &dc).map_err(err)?;
        ensure(sim.similar, || format!("{name}: A is not similar to D(A)"))?;
        let iso = sim.iso.as_ref().unwrap();
        let from = bridge_construct(
            &a,
            &c,
            BridgeMode::FromIso {
                target: &d.algebra,
                target_cert: &dc,
                iso: Some(iso),
            },
        )
        .map_err(err)?;
        ensure(from.verification.passed(), || format!("{name}: from-iso bridge {:?}", from.verification.failures()))?;
        let dd = diff_of(&d.algebra, &dc).map_err(err)?;
        ensure(find_isomorphism(&dd.algebra, &d.algebra).map_err(err)?.is_some(), || format!("{name}: D(D(A)) is not D(A)"))?;
    }
    Ok("z4, gen2".into())
}

fn perspectivity_transfer() -> Outcome {
    let a = fixtures::two_sq();
    let (eta1, eta2) = fixtures::two_sq_kernels();
    let (zero, one) = (Partition::identity(4), Partition::full(4));
    let p = perspective_diff_iso(&a, (&zero, &eta1), (&eta2, &one), &cert(&a)?, DEFAULT_SEARCH_CAP).map_err(err)?;
    ensure(p.checks.passed(), || format!("{:?}", p.checks.failures()))?;
    ensure(p.iso.is_isomorphism(&p.lower.algebra, &p.upper.algebra), || "not an isomorphism".into())?;
    let (lf, uf) = (&p.lower_field.tables, &p.upper_field.tables);
    let m = &p.field_iso;
    let hom = m.len() == lf.size
        && (0..lf.size).all(|x| {
            (0..lf.size).all(|y| m[lf.add(x, y)] == uf.add(m[x], m[y]) && m[lf.mul(x, y)] == uf.mul(m[x], m[y]))
        });
    let bij = m.iter().collect::<BTreeSet<_>>().len() == uf.size && lf.size == uf.size;
    ensure(hom && bij, || format!("field map {m:?} is not a ring isomorphism"))?;
    Ok(format!("|D| = {}, |F| = {}", p.lower.size(), lf.size))
}

const SWEEP_SEED: u64 = 20240917;
const SWEEP_COUNT: usize = 200;

fn law_sweeps() -> Outcome {
    let shape = RandomShape::default();
    let r = law_sweep(SWEEP_SEED, SWEEP_COUNT, &shape).map_err(err)?;
    ensure(r.passed(), || format!("{:?}", r.failures()))?;
    ensure(r.items.len() == 4, || format!("{} sweep items", r.items.len()))?;

    let mut checked = 0;
    for (idx, a) in random_algebras(SWEEP_SEED, SWEEP_COUNT, &shape).iter().enumerate() {
        let n = a.size();
        let cons = congruences(a);
        for theta in &cons {
            for delta in &cons {
                let join = cons
                    .iter()
                    .filter(|phi| centralizes_naive(a, phi, theta, delta))
                    .fold(Partition::identity(n), |acc, p| acc.vee(p));
                let got = abelcon::centrality::centralizer(a, delta, theta).map_err(err)?;
                ensure(got == join, || format!("algebra {idx}: ({delta}:{theta}) = {got}, oracle {join}"))?;
                checked += 1;
            }
        }
        if search_wdt(a, SWEEP_WDT_CAP).is_ok_and(|c| c.verdict) {
            let zero = Partition::identity(n);
            for theta in &cons {
                let ab = centralizes_naive(a, theta, theta, &zero);
                let tt = two_term_naive(a, theta);
                ensure(ab == tt, || format!("algebra {idx}, theta {theta}: abelian {ab}, two-term {tt}"))?;
            }
        }
        for x in 0..n {
            for y in 0..n {
                let least = cons
                    .iter()
                    .filter(|p| p.related(x, y))
                    .fold(Partition::full(n), |acc, p| acc.wedge(p));
                let got = abelcon::congruence::principal_congruence(a, x, y).map_err(err)?;
                ensure(got == least, || format!("algebra {idx}: Cg({x},{y}) = {got}, oracle {least}"))?;
            }
        }
    }
    Ok(format!("{SWEEP_COUNT} algebras, {checked} centralizers"))
}

fn generated_claims() -> Outcome {
    let gens: [(&str, Generated); 3] = [("gen1", fixtures::gen1()), ("gen2", fixtures::gen2()), ("gen3", fixtures::gen3())];
    for (name, g) in &gens {
        let r = verify_claims(g, DEFAULT_SEARCH_CAP).map_err(err)?;
        ensure(r.passed(), || format!("{name}: {:?}", r.failures()))?;
        ensure(r.items.len() == 8, || format!("{name}: {} items", r.items.len()))?;
        ensure(r.item("claim-minimal-reflexive").is_some(), || format!("{name}: minimality not checked"))?;
        ensure(!r.items.iter().any(|i| i.verdict == abelcon::report::Verdict::Skip), || format!("{name}: skipped items"))?;
    }
    Ok("gen1, gen2, gen3".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 8] = [
        ("m3-shape", 1, m3_shape),
        ("class-size-law", 10, class_size_law),
        ("non-uniform-ranges", 60, non_uniform_ranges),
        ("division-rings-agree", 120, division_rings_agree),
        ("similarity-round-trip", 60, similarity_round_trip),
        ("perspectivity-transfer", 5, perspectivity_transfer),
        ("law-sweeps", 300, law_sweeps),
        ("generated-claims", 180, generated_claims),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(note) if took > Duration::from_secs(*budget) => Err(format!("{note}; over the {budget} s budget")),
            other => other,
        };
        let (tag, note) = match &outcome {
            Ok(note) => ("PASS", note),
            Err(why) => ("FAIL", why),
        };
        println!("{tag} {}. {name} ({:.2} s, budget {budget} s): {note}", i + 1, took.as_secs_f64());
        failed += usize::from(outcome.is_err());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

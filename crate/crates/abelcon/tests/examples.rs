//! Worked examples on the small fixtures, with expected values computed by hand.

use std::collections::BTreeSet;

use abelcon::algebra::{find_isomorphism, generate_subuniverse, quotient, unary_polynomials, Algebra, ElementMap};
use abelcon::centrality::{centralizer, is_abelian, two_term_condition};
use abelcon::congruence::{congruence_lattice, perspective, principal_congruence};
use abelcon::diffalg::{difference_algebra, pair_algebra, range_of_class};
use abelcon::fixtures;
use abelcon::genlab::{build_field, FieldSpec};
use abelcon::partition::Partition;
use abelcon::simdiv::{
    bridge_construct, canonical_action, diff_of, field_of, freese_ring, is_similar, monolith, perspective_diff_iso,
    BridgeMode, DEFAULT_SEARCH_CAP,
};
use abelcon::wdt::{class_group, search_wdt, transversal_automorphism, verify_wdt, Scope, WdtCertificate};

fn cert(a: &Algebra) -> WdtCertificate {
    search_wdt(a, 100_000).unwrap()
}

fn part(n: usize, blocks: &[&[usize]]) -> Partition {
    Partition::from_blocks(n, &blocks.iter().map(|b| b.to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn z4_arithmetic_and_subuniverses() {
    let z4 = fixtures::z4();
    // 1 - 2 + 3 = 2
    assert_eq!(z4.evaluate("p", &[1, 2, 3]).unwrap(), 2);
    assert_eq!(generate_subuniverse(&z4, &[0, 1]).unwrap(), BTreeSet::from([0, 1, 2, 3]));
    assert_eq!(generate_subuniverse(&z4, &[0, 2]).unwrap(), BTreeSet::from([0, 2]));
}

#[test]
fn z4_mod_two_is_z2() {
    let (q, _) = quotient(&fixtures::z4(), &fixtures::z4_theta(), true).unwrap();
    let z2 = fixtures::z2().renamed(&["p"]).unwrap();
    assert!(find_isomorphism(&q, &z2).unwrap().is_some());
}

#[test]
fn unary_polynomial_counts() {
    // xor3 with constants gives x, x+1, 0, 1
    assert_eq!(unary_polynomials(&fixtures::z2(), 10_000).unwrap().len(), 4);
    // x, x ^ 0 = 0, x ^ 1 = x and the constants: {x, 0, 1}
    assert_eq!(unary_polynomials(&fixtures::s2(), 10_000).unwrap().len(), 3);
    // k x + c for every k, c in Z4, since p(x,x,c) = c and p(x,c,x) = 2x - c
    assert_eq!(unary_polynomials(&fixtures::z4(), 10_000).unwrap().len(), 16);
}

#[test]
fn relabeled_z4_is_found() {
    let z4 = fixtures::z4();
    let shift = ElementMap::new(4, vec![1, 2, 3, 0]).unwrap();
    let moved = z4.relabeled(&shift).unwrap();
    let iso = find_isomorphism(&moved, &z4).unwrap().unwrap();
    assert!(iso.is_isomorphism(&moved, &z4));
    // Z4 has automorphisms besides the inverse shift, so only check it is one.
    assert!(shift.then(&iso).unwrap().is_isomorphism(&z4, &z4));
}

#[test]
fn principal_congruences_of_z4() {
    let z4 = fixtures::z4();
    assert_eq!(principal_congruence(&z4, 0, 2).unwrap(), fixtures::z4_theta());
    assert_eq!(principal_congruence(&z4, 0, 1).unwrap(), Partition::full(4));
}

#[test]
fn lattice_sizes() {
    assert_eq!(congruence_lattice(&fixtures::z4()).unwrap().len(), 3);
    assert_eq!(congruence_lattice(&fixtures::s2()).unwrap().len(), 2);
    let l = congruence_lattice(&fixtures::two_sq()).unwrap();
    // 0, 1 and the three subgroups of order two
    assert_eq!(l.len(), 5);
    assert_eq!(l.atoms().len(), 3);
    assert!(l.contains(&part(4, &[&[0, 3], &[1, 2]])));
}

#[test]
fn monoliths() {
    assert_eq!(monolith(&fixtures::z4()).unwrap(), fixtures::z4_theta());
    assert_eq!(monolith(&fixtures::s2()).unwrap(), Partition::full(2));
    assert!(monolith(&fixtures::two_sq()).is_err());
}

#[test]
fn two_square_perspectivity() {
    let (e1, e2) = fixtures::two_sq_kernels();
    assert!(perspective((&Partition::identity(4), &e1), (&e2, &Partition::full(4))));
    let a = fixtures::two_sq();
    assert_eq!(centralizer(&a, &Partition::identity(4), &e1).unwrap(), Partition::full(4));
    assert_eq!(centralizer(&a, &e2, &Partition::full(4)).unwrap(), Partition::full(4));
}

#[test]
fn centrality_on_two_elements() {
    let (z2, s2) = (fixtures::z2(), fixtures::s2());
    assert!(is_abelian(&z2, &Partition::full(2), None).unwrap().holds);
    let v = is_abelian(&s2, &Partition::full(2), None).unwrap();
    assert!(!v.holds);
    let m = v.witness.unwrap();
    // one row equal, the other not
    assert_ne!(m[0] == m[2], m[1] == m[3]);
    assert_eq!(centralizer(&s2, &Partition::identity(2), &Partition::full(2)).unwrap(), Partition::identity(2));
    assert_eq!(centralizer(&fixtures::z4(), &Partition::identity(4), &fixtures::z4_theta()).unwrap(), Partition::full(4));
    assert!(two_term_condition(&z2, &Partition::full(2)).unwrap().holds);
    assert!(!two_term_condition(&s2, &Partition::full(2)).unwrap().holds);
}

#[test]
fn weak_difference_terms() {
    let z4 = fixtures::z4();
    assert!(verify_wdt(&z4, &z4.op("p").unwrap().table, Scope::Base).unwrap().verdict);
    let meet3: Vec<usize> = (0..8).map(|i| (i >> 2) & (i >> 1) & i & 1).collect();
    assert!(verify_wdt(&fixtures::s2(), &meet3, Scope::Base).unwrap().verdict);
    assert_eq!(cert(&z4).d.table, z4.op("p").unwrap().table);
    let unary = Algebra::from_tables(2, vec![("f", 1, vec![0, 1])]).unwrap();
    assert!(search_wdt(&unary, 1000).is_err());
}

#[test]
fn z4_class_groups() {
    let z4 = fixtures::z4();
    let c = cert(&z4);
    let g = class_group(&z4, &c, &fixtures::z4_theta(), 1).unwrap();
    assert_eq!((g.class.clone(), g.zero, g.exponent()), (vec![1, 3], 1, 2));
    assert_eq!(g.add(3, 3), 1);
}

#[test]
fn z4_difference_algebra() {
    let z4 = fixtures::z4();
    let theta = fixtures::z4_theta();
    assert_eq!(pair_algebra(&z4, &theta).unwrap().size(), 8);
    let da = difference_algebra(&z4, &theta, &cert(&z4)).unwrap();
    assert_eq!(da.size(), 2);
    assert!(da.phi.is_full());
    assert_eq!(da.transversal.len(), 1);
    // (a,b) and (c,d) are identified when a - b = c - d
    assert_eq!(da.delta.delta.num_blocks(), 2);
    assert!(da.delta.delta.blocks().iter().all(|b| b.len() == 4));
    let field = field_of(&da, DEFAULT_SEARCH_CAP).unwrap();
    assert_eq!(field.size(), 2);
    assert_eq!(canonical_action(&da, &field, 0).unwrap().dimension, 1);
    let sw = transversal_automorphism(&da.algebra, &field.cert, &Partition::full(2), &[0].into(), &[1].into()).unwrap();
    assert_eq!(sw.images(), &[1, 0]);
}

#[test]
fn z2_delta_classes_are_differences() {
    let z2 = fixtures::z2();
    let da = difference_algebra(&z2, &Partition::full(2), &cert(&z2)).unwrap();
    let p = &da.pairs;
    let class_of = |a, b| da.nu.apply(p.index_of(a, b).unwrap());
    assert_eq!(class_of(0, 0), class_of(1, 1));
    assert_eq!(class_of(0, 1), class_of(1, 0));
    assert_ne!(class_of(0, 0), class_of(0, 1));
}

#[test]
fn generated_difference_algebras() {
    let g1 = fixtures::gen1();
    assert_eq!((g1.algebra.size(), g1.algebra.ops().len()), (4, 5));
    let da = difference_algebra(&g1.algebra, &g1.mu, &cert(&g1.algebra)).unwrap();
    assert_eq!(da.size(), 2);

    let g2 = fixtures::gen2();
    assert_eq!(g2.algebra.size(), 8);
    let c2 = cert(&g2.algebra);
    let da = difference_algebra(&g2.algebra, &g2.mu, &c2).unwrap();
    assert_eq!(da.size(), 6);
    let mut sizes: Vec<usize> = da.phi.blocks().iter().map(Vec::len).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![2, 4]);
    let top = g2.sort_index(0, 0).unwrap();
    let side = g2.sort_index(0, 1).unwrap();
    assert_eq!(range_of_class(&da, &g2.members(top)).unwrap().elements.len(), 4);
    assert_eq!(range_of_class(&da, &g2.members(side)).unwrap().elements.len(), 2);
    let field = field_of(&da, DEFAULT_SEARCH_CAP).unwrap();
    assert_eq!(field.size(), 2);
    assert_eq!(canonical_action(&da, &field, g2.zero(top)).unwrap().dimension, 2);
    let zeros: BTreeSet<usize> = g2.mu.blocks().iter().map(|b| b[0]).collect();
    let fr = freese_ring(&g2.algebra, &g2.mu, &zeros, &c2, DEFAULT_SEARCH_CAP).unwrap();
    assert!(fr.checks.passed());
    assert_eq!(fr.tables.size, 2);

    let g3 = fixtures::gen3();
    assert!(g3.mu.blocks().iter().all(|b| b.len() == 3));
}

#[test]
fn fields() {
    let f4 = build_field(&FieldSpec { q: 4, modulus: Some(vec![1, 1, 1]) }).unwrap();
    // x = 2, x + 1 = 3
    assert_eq!(f4.mul(2, 3), 1);
    let f9 = build_field(&FieldSpec { q: 9, modulus: Some(vec![1, 0, 1]) }).unwrap();
    assert_eq!((f9.p, f9.k), (3, 2));
}

#[test]
fn difference_of_examples() {
    let s2 = fixtures::s2();
    let meet3: Vec<usize> = (0..8).map(|i| (i >> 2) & (i >> 1) & i & 1).collect();
    let d = diff_of(&s2, &verify_wdt(&s2, &meet3, Scope::Base).unwrap()).unwrap();
    assert!(!d.abelian);
    assert_eq!(d.algebra, s2);
    let z4 = fixtures::z4();
    assert_eq!(diff_of(&z4, &cert(&z4)).unwrap().algebra.size(), 2);
    let g2 = fixtures::gen2();
    assert_eq!(diff_of(&g2.algebra, &cert(&g2.algebra)).unwrap().algebra.size(), 6);
}

#[test]
fn similarity_verdicts() {
    let z4 = fixtures::z4().renamed(&["d"]).unwrap();
    let z2 = fixtures::z2();
    assert!(is_similar(&z4, &cert(&z4), &z2, &cert(&z2)).unwrap().similar);
    let s2 = fixtures::s2_ternary();
    assert!(!is_similar(&s2, &cert(&s2), &z2, &cert(&z2)).unwrap().similar);
}

#[test]
fn semilattice_bridge_is_the_diagonal() {
    let s2 = fixtures::s2();
    let meet3: Vec<usize> = (0..8).map(|i| (i >> 2) & (i >> 1) & i & 1).collect();
    let c = verify_wdt(&s2, &meet3, Scope::Base).unwrap();
    let built = bridge_construct(&s2, &c, BridgeMode::CanonicalToD).unwrap();
    assert!(built.verification.passed());
    assert_eq!(built.bridge.trace(), vec![(0, 0), (1, 1)]);
}

#[test]
fn canonical_bridges_verify() {
    for a in [fixtures::z4(), fixtures::gen2().algebra] {
        let built = bridge_construct(&a, &cert(&a), BridgeMode::CanonicalToD).unwrap();
        assert!(built.verification.passed(), "{:?}", built.verification.failures());
    }
}

#[test]
fn two_square_transfer() {
    let a = fixtures::two_sq();
    let (e1, e2) = fixtures::two_sq_kernels();
    let (zero, one) = (Partition::identity(4), Partition::full(4));
    let p = perspective_diff_iso(&a, (&zero, &e1), (&e2, &one), &cert(&a), DEFAULT_SEARCH_CAP).unwrap();
    assert!(p.checks.passed());
    assert_eq!((p.lower.size(), p.upper.size()), (2, 2));
    assert_eq!((p.lower_field.size(), p.upper_field.size()), (2, 2));
}

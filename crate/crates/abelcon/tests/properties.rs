use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use abelcon::algebra::{find_isomorphism, generate_subuniverse, is_congruence, Algebra, ElementMap};
use abelcon::centrality::{centralizer, centralizes};
use abelcon::congruence::{congruence_lattice, principal_congruence};
use abelcon::doc::{parse_algebra, serialize_algebra};
use abelcon::fixtures;
use abelcon::partition::Partition;
use abelcon::random::{random_algebra, RandomShape};
use abelcon::simdiv::is_similar;
use abelcon::wdt::search_wdt;

fn small_algebra() -> impl Strategy<Value = Algebra> {
    any::<u64>().prop_map(|seed| random_algebra(&mut ChaCha8Rng::seed_from_u64(seed), &RandomShape::default()))
}

fn partition(n: usize) -> impl Strategy<Value = Partition> {
    proptest::collection::vec(0..n, n).prop_map(|labels| Partition::kernel_of(&labels))
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn subset(n: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(any::<bool>(), n).prop_map(|bits| (0..bits.len()).filter(|&i| bits[i]).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subuniverse_closure_is_a_closure_operator(
        (a, x, y) in small_algebra().prop_flat_map(|a| {
            let n = a.size();
            (Just(a), subset(n), subset(n))
        })
    ) {
        let gx = generate_subuniverse(&a, &x).unwrap();
        prop_assert!(x.iter().all(|e| gx.contains(e)));
        let again: Vec<usize> = gx.iter().copied().collect();
        prop_assert_eq!(generate_subuniverse(&a, &again).unwrap(), gx.clone());
        let union: Vec<usize> = x.iter().chain(&y).copied().collect();
        let gu = generate_subuniverse(&a, &union).unwrap();
        prop_assert!(gx.is_subset(&gu));
    }

    #[test]
    fn documents_round_trip(a in small_algebra()) {
        let text = serialize_algebra(&a, &Default::default());
        let back = parse_algebra(&text).unwrap();
        prop_assert_eq!(&back.algebra, &a);
        prop_assert_eq!(serialize_algebra(&back.algebra, &back.labels), text);
    }

    #[test]
    fn relabelings_are_found(
        (a, perm) in small_algebra().prop_flat_map(|a| {
            let n = a.size();
            (Just(a), permutation(n))
        })
    ) {
        let h = ElementMap::new(a.size(), perm).unwrap();
        let b = a.relabeled(&h).unwrap();
        prop_assert!(h.is_isomorphism(&a, &b));
        let found = find_isomorphism(&a, &b).unwrap();
        prop_assert!(found.is_some_and(|f| f.is_isomorphism(&a, &b)));
    }

    #[test]
    fn partition_lattice_laws(
        (x, y, z) in (1usize..7).prop_flat_map(|n| (partition(n), partition(n), partition(n)))
    ) {
        let n = x.size();
        prop_assert_eq!(x.wedge(&y), y.wedge(&x));
        prop_assert_eq!(x.vee(&y), y.vee(&x));
        prop_assert_eq!(x.wedge(&y.wedge(&z)), x.wedge(&y).wedge(&z));
        prop_assert_eq!(x.vee(&y.vee(&z)), x.vee(&y).vee(&z));
        prop_assert_eq!(x.vee(&x.wedge(&y)), x.clone());
        prop_assert_eq!(x.wedge(&x.vee(&y)), x.clone());
        prop_assert!(x.wedge(&y).leq(&x) && x.leq(&x.vee(&y)));
        prop_assert_eq!(x.leq(&y), x.wedge(&y) == x);
        prop_assert!(Partition::identity(n).leq(&x) && x.leq(&Partition::full(n)));
    }

    #[test]
    fn congruence_lattice_is_closed(a in small_algebra()) {
        let l = congruence_lattice(&a).unwrap();
        for x in l.elements() {
            prop_assert!(is_congruence(&a, x));
            for y in l.elements() {
                prop_assert!(l.contains(&x.wedge(y)));
                prop_assert!(l.contains(&x.vee(y)));
            }
        }
    }

    #[test]
    fn principal_congruence_is_least(
        (a, x, y) in small_algebra().prop_flat_map(|a| {
            let n = a.size();
            (Just(a), 0..n, 0..n)
        })
    ) {
        let cg = principal_congruence(&a, x, y).unwrap();
        prop_assert!(cg.related(x, y) && is_congruence(&a, &cg));
        for c in congruence_lattice(&a).unwrap().elements() {
            if c.related(x, y) {
                prop_assert!(cg.leq(c));
            }
        }
    }

    #[test]
    fn centralizer_is_monotone_in_delta(a in small_algebra()) {
        let l = congruence_lattice(&a).unwrap();
        let els = l.elements();
        for theta in els {
            for d1 in els {
                let c1 = centralizer(&a, d1, theta).unwrap();
                prop_assert!(centralizes(&a, &c1, theta, d1).unwrap().holds);
                for d2 in els.iter().filter(|d2| d1.leq(d2)) {
                    prop_assert!(c1.leq(&centralizer(&a, d2, theta).unwrap()));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn similarity_is_an_equivalence_on_relabelings(p in permutation(4), q in permutation(4)) {
        let z4 = fixtures::z4();
        let a = z4.relabeled(&ElementMap::new(4, p).unwrap()).unwrap();
        let b = z4.relabeled(&ElementMap::new(4, q).unwrap()).unwrap();
        let (ca, cb, cz) = (search_wdt(&a, 10_000).unwrap(), search_wdt(&b, 10_000).unwrap(), search_wdt(&z4, 10_000).unwrap());
        prop_assert!(is_similar(&a, &ca, &a, &ca).unwrap().similar);
        let ab = is_similar(&a, &ca, &b, &cb).unwrap().similar;
        prop_assert_eq!(ab, is_similar(&b, &cb, &a, &ca).unwrap().similar);
        prop_assert!(ab);
        let az = is_similar(&a, &ca, &z4, &cz).unwrap().similar;
        let zb = is_similar(&z4, &cz, &b, &cb).unwrap().similar;
        prop_assert!(!(az && zb) || ab);
    }

    #[test]
    fn relabeling_preserves_the_congruence_count(p in permutation(4)) {
        let a = fixtures::two_sq();
        let b = a.relabeled(&ElementMap::new(4, p).unwrap()).unwrap();
        let sizes = |x: &Algebra| -> BTreeSet<usize> {
            congruence_lattice(x).unwrap().elements().iter().map(Partition::num_blocks).collect()
        };
        prop_assert_eq!(congruence_lattice(&a).unwrap().len(), congruence_lattice(&b).unwrap().len());
        prop_assert_eq!(sizes(&a), sizes(&b));
    }
}

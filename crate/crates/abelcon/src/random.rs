//! Seeded random small algebras and the law sweep over them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{Algebra, Operation};
use crate::centrality::{centralizer, centralizes, is_abelian, two_term_condition};
use crate::congruence::{all_congruences_brute_force, principal_congruence};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::report::Report;
use crate::wdt::search_wdt;

/// Ternary clone size at which the sweep gives up looking for a weak
/// difference term. Some binary algebras on three elements have clones far
/// larger than this, and closing them dominates the whole sweep.
pub const SWEEP_WDT_CAP: usize = 4096;

#[derive(Debug, Clone, Copy)]
pub struct RandomShape {
    pub max_size: usize,
    pub max_ops: usize,
    pub max_arity: usize,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            max_size: 4,
            max_ops: 2,
            max_arity: 2,
        }
    }
}

/// Size in `2..=max_size`, `1..=max_ops` operations of arity `1..=max_arity`, uniform tables.
pub fn random_algebra(rng: &mut impl Rng, shape: &RandomShape) -> Algebra {
    let n = rng.gen_range(2..=shape.max_size.max(2));
    let k = rng.gen_range(1..=shape.max_ops.max(1));
    let ops = (0..k)
        .map(|i| {
            let arity = rng.gen_range(1..=shape.max_arity.max(1));
            let table = (0..n.pow(arity as u32)).map(|_| rng.gen_range(0..n)).collect();
            Operation::new(format!("f{i}"), arity, n, table).expect("tables are in range")
        })
        .collect();
    Algebra::new(n, ops).expect("operations have the right size")
}

pub fn random_algebras(seed: u64, count: usize, shape: &RandomShape) -> Vec<Algebra> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_algebra(&mut rng, shape)).collect()
}

#[derive(Default)]
struct Tally {
    instances: usize,
    first_failure: Option<String>,
}

impl Tally {
    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.instances += 1;
        if !ok && self.first_failure.is_none() {
            self.first_failure = Some(what());
        }
    }

    fn push(self, r: &mut Report, id: &str, statement: &str) {
        let ok = self.first_failure.is_none();
        let witness = self
            .first_failure
            .unwrap_or_else(|| format!("{} instances", self.instances));
        r.push(id, statement, "law-sweep", ok, Some(witness));
    }
}

/// Centrality and congruence computations against brute-force oracles on
/// `count` random algebras drawn from `seed`.
pub fn law_sweep(seed: u64, count: usize, shape: &RandomShape) -> Result<Report> {
    let mut conditions = Tally::default();
    let mut cent = Tally::default();
    let mut abel = Tally::default();
    let mut principal = Tally::default();
    let mut with_wdt = 0;
    for (idx, a) in random_algebras(seed, count, shape).iter().enumerate() {
        let n = a.size();
        let cons = all_congruences_brute_force(a);
        for theta in &cons {
            for delta in &cons {
                let mut best: Option<Partition> = None;
                for phi in &cons {
                    match centralizes(a, phi, theta, delta) {
                        Ok(v) => {
                            conditions.record(true, String::new);
                            if v.holds && best.as_ref().map_or(true, |b| b.leq(phi)) {
                                best = Some(phi.clone());
                            }
                        }
                        Err(Error::Internal(m)) => conditions.record(false, || format!("algebra {idx}: {m}")),
                        Err(e) => return Err(e),
                    }
                }
                // The satisfying congruences are closed under joins, so the
                // largest one is the join of all of them.
                let join = cons
                    .iter()
                    .filter(|phi| centralizes(a, phi, theta, delta).map_or(false, |v| v.holds))
                    .fold(Partition::identity(n), |acc, p| acc.vee(p));
                let got = centralizer(a, delta, theta)?;
                cent.record(best.as_ref() == Some(&got) && got == join, || {
                    format!("algebra {idx}: ({delta}:{theta}) = {got}, oracle {best:?}")
                });
            }
        }
        if let Ok(c) = search_wdt(a, SWEEP_WDT_CAP) {
            if c.verdict {
                with_wdt += 1;
                for theta in &cons {
                    let ab = is_abelian(a, theta, None)?.holds;
                    let tt = two_term_condition(a, theta)?.holds;
                    abel.record(ab == tt, || format!("algebra {idx}, theta {theta}: abelian {ab}, two-term {tt}"));
                }
            }
        }
        for x in 0..n {
            for y in 0..n {
                let got = principal_congruence(a, x, y)?;
                let least = cons
                    .iter()
                    .filter(|p| p.related(x, y))
                    .fold(Partition::full(n), |acc, p| acc.wedge(p));
                principal.record(got == least, || format!("algebra {idx}: Cg({x},{y}) = {got}, oracle {least}"));
            }
        }
    }
    let mut r = Report::new(format!("laws --seed {seed}"));
    conditions.push(
        &mut r,
        "sweep-conditions-agree",
        "the row and column forms of the term condition agree",
    );
    cent.push(
        &mut r,
        "sweep-centralizer",
        "the centralizer is the largest congruence satisfying the term condition",
    );
    abel.push(
        &mut r,
        "sweep-abelian-two-term",
        "with a weak difference term, abelian congruences are exactly those with the two-term condition",
    );
    if let Some(it) = r.items.last_mut() {
        if let Some(w) = it.witness.as_mut() {
            w.push_str(&format!(" over {with_wdt} algebras with a weak difference term"));
        }
    }
    principal.push(
        &mut r,
        "sweep-principal",
        "Cg(x,y) is the least congruence relating x and y",
    );
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_shape() {
        let shape = RandomShape::default();
        let a = random_algebras(7, 20, &shape);
        assert_eq!(a, random_algebras(7, 20, &shape));
        assert!(a.iter().all(|x| (2..=4).contains(&x.size()) && (1..=2).contains(&x.ops().len())));
        assert!(a.iter().all(|x| x.ops().iter().all(|o| (1..=2).contains(&o.arity))));
    }

    #[test]
    fn small_sweep_passes() {
        let r = law_sweep(1, 10, &RandomShape::default()).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
        assert_eq!(r.items.len(), 4);
    }
}

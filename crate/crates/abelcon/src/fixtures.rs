//! Small named algebras shared by tests, the acceptance suite and the CLI.

use crate::algebra::{product, Algebra, Operation};
use crate::genlab::{self, GenConfig, Generated};
use crate::partition::Partition;

/// `({0,1}; d(x,y,z) = x xor y xor z)`.
pub fn z2() -> Algebra {
    Algebra::new(2, vec![Operation::from_fn("d", 3, 2, |a| a[0] ^ a[1] ^ a[2])]).unwrap()
}

/// `({0,1,2,3}; p(x,y,z) = x - y + z mod 4)`.
pub fn z4() -> Algebra {
    Algebra::new(4, vec![Operation::from_fn("p", 3, 4, |a| (a[0] + 4 - a[1] + a[2]) % 4)]).unwrap()
}

/// The two-element meet semilattice.
pub fn s2() -> Algebra {
    Algebra::new(2, vec![Operation::from_fn("meet", 2, 2, |a| a[0] & a[1])]).unwrap()
}

/// The two-element semilattice presented by the ternary meet `d = x^y^z`,
/// so that its signature matches [`z2`].
pub fn s2_ternary() -> Algebra {
    Algebra::new(2, vec![Operation::from_fn("d", 3, 2, |a| a[0] & a[1] & a[2])]).unwrap()
}

/// `z2 x z2`.
pub fn two_sq() -> Algebra {
    product(&z2(), &z2()).unwrap().algebra
}

/// The kernels of the two projections of [`two_sq`].
pub fn two_sq_kernels() -> (Partition, Partition) {
    let first = Partition::kernel_of(&[0, 0, 1, 1]);
    let second = Partition::kernel_of(&[0, 1, 0, 1]);
    (first, second)
}

/// `{{0,2},{1,3}}`, the monolith of [`z4`].
pub fn z4_theta() -> Partition {
    Partition::kernel_of(&[0, 1, 0, 1])
}

pub fn gen1_config() -> GenConfig {
    GenConfig::simple(2, vec![1], vec![vec![None]])
}

pub fn gen2_config() -> GenConfig {
    GenConfig::simple(2, vec![2, 1], vec![vec![Some(vec![vec![1, 0]])], vec![]])
}

pub fn gen3_config() -> GenConfig {
    GenConfig::simple(3, vec![1], vec![vec![None]])
}

pub fn gen1() -> Generated {
    genlab::generate_example(&gen1_config()).expect("gen1 builds")
}

pub fn gen2() -> Generated {
    genlab::generate_example(&gen2_config()).expect("gen2 builds")
}

pub fn gen3() -> Generated {
    genlab::generate_example(&gen3_config()).expect("gen3 builds")
}

//! Finite fields, semilattice-over-Maltsev operations, and the generator of
//! subdirectly irreducible algebras with a prescribed abelian monolith,
//! centralizer classes, range subspaces and field.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::algebra::{find_isomorphism, Algebra, Operation};
use crate::centrality::{centralizer, is_abelian};
use crate::closure::{close, Limits};
use crate::diffalg::{difference_algebra, range_of_class};
use crate::error::{internal, precondition, Error, Result};
use crate::partition::Partition;
use crate::report::Report;
use crate::simdiv;
use crate::wdt::{is_prime, verify_wdt, Scope};

pub const DEFAULT_OP_CAP: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub q: usize,
    /// Coefficients from the constant term up, leading 1 included; required for
    /// non-prime `q` without a built-in default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<Vec<usize>>,
}

/// `GF(p^k)` with elements `sum c_i p^i` standing for `sum c_i x^i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub p: usize,
    pub k: usize,
    pub q: usize,
    pub modulus: Vec<usize>,
    add: Vec<usize>,
    mul: Vec<usize>,
    neg: Vec<usize>,
    inv: Vec<usize>,
}

fn default_modulus(q: usize) -> Option<Vec<usize>> {
    match q {
        4 => Some(vec![1, 1, 1]),
        8 => Some(vec![1, 1, 0, 1]),
        9 => Some(vec![1, 0, 1]),
        _ => None,
    }
}

fn prime_power(q: usize) -> Option<(usize, usize)> {
    let p = (2..=q).find(|d| q % d == 0)?;
    let mut r = q;
    let mut k = 0;
    while r % p == 0 {
        r /= p;
        k += 1;
    }
    (r == 1).then_some((p, k))
}

fn digits(x: usize, p: usize, k: usize) -> Vec<usize> {
    let mut v = vec![0; k];
    let mut r = x;
    for c in v.iter_mut() {
        *c = r % p;
        r /= p;
    }
    v
}

fn undigits(v: &[usize], p: usize) -> usize {
    v.iter().rev().fold(0, |acc, &c| acc * p + c)
}

pub fn build_field(spec: &FieldSpec) -> Result<Field> {
    let q = spec.q;
    let Some((p, k)) = prime_power(q) else {
        return Err(precondition(format!("{q} is not a prime power")));
    };
    if !is_prime(p) {
        return Err(internal("smallest divisor is not prime"));
    }
    let modulus = if k == 1 {
        spec.modulus.clone().unwrap_or_else(|| vec![0, 1])
    } else {
        spec.modulus
            .clone()
            .or_else(|| default_modulus(q))
            .ok_or_else(|| precondition(format!("GF({q}) needs a modulus polynomial")))?
    };
    if modulus.len() != k + 1 || modulus[k] != 1 || modulus.iter().any(|&c| c >= p) {
        return Err(precondition(format!(
            "modulus must be monic of degree {k} with coefficients below {p}"
        )));
    }
    if (2..=3).contains(&k) {
        // a reducible polynomial of degree 2 or 3 has a root
        for r in 0..p {
            let v = modulus.iter().rev().fold(0, |acc, &c| (acc * r + c) % p);
            if v == 0 {
                return Err(precondition(format!("modulus is reducible (root {r})")));
            }
        }
    }
    let mut add = vec![0; q * q];
    let mut mul = vec![0; q * q];
    for a in 0..q {
        let da = digits(a, p, k);
        for b in 0..q {
            let db = digits(b, p, k);
            let s: Vec<usize> = da.iter().zip(&db).map(|(x, y)| (x + y) % p).collect();
            add[a * q + b] = undigits(&s, p);
            let mut prod = vec![0; 2 * k];
            for (i, x) in da.iter().enumerate() {
                for (j, y) in db.iter().enumerate() {
                    prod[i + j] = (prod[i + j] + x * y) % p;
                }
            }
            for deg in (k..2 * k).rev() {
                let c = prod[deg];
                if c == 0 {
                    continue;
                }
                for (j, &m) in modulus.iter().enumerate() {
                    let pos = deg - k + j;
                    prod[pos] = (prod[pos] + p * p - c * m % p) % p;
                }
            }
            mul[a * q + b] = undigits(&prod[..k], p);
        }
    }
    let neg: Vec<usize> = (0..q).map(|a| (0..q).find(|&b| add[a * q + b] == 0).unwrap()).collect();
    let mut inv = vec![0; q];
    for a in 1..q {
        match (1..q).find(|&b| mul[a * q + b] == 1) {
            Some(b) => inv[a] = b,
            None => return Err(precondition(format!("modulus is reducible ({a} has no inverse)"))),
        }
    }
    let f = Field {
        p,
        k,
        q,
        modulus,
        add,
        mul,
        neg,
        inv,
    };
    f.check_axioms()?;
    Ok(f)
}

impl Field {
    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        self.add[a * self.q + b]
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a * self.q + b]
    }

    pub fn neg(&self, a: usize) -> usize {
        self.neg[a]
    }

    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.add(a, self.neg(b))
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: usize) -> Option<usize> {
        (a != 0).then(|| self.inv[a])
    }

    fn check_axioms(&self) -> Result<()> {
        let q = self.q;
        for a in 0..q {
            for b in 0..q {
                if self.add(a, b) != self.add(b, a) || self.mul(a, b) != self.mul(b, a) {
                    return Err(internal("field operations are not commutative"));
                }
                for c in 0..q {
                    if self.add(self.add(a, b), c) != self.add(a, self.add(b, c))
                        || self.mul(self.mul(a, b), c) != self.mul(a, self.mul(b, c))
                        || self.mul(a, self.add(b, c)) != self.add(self.mul(a, b), self.mul(a, c))
                    {
                        return Err(internal(format!("field axioms fail at ({a},{b},{c})")));
                    }
                }
            }
            if self.add(a, 0) != a || self.mul(a, 1) != a {
                return Err(internal("field identities fail"));
            }
        }
        Ok(())
    }

    /// The ring of the field as an algebra with `+` and `*`, for isomorphism tests.
    pub fn as_algebra(&self) -> Algebra {
        let q = self.q;
        Algebra::new(
            q,
            vec![
                Operation::from_fn("add", 2, q, |a| self.add(a[0], a[1])),
                Operation::from_fn("mul", 2, q, |a| self.mul(a[0], a[1])),
            ],
        )
        .expect("field tables are valid")
    }
}

/// Row-reduced rank of a list of vectors.
fn rank(f: &Field, rows: &[Vec<usize>]) -> usize {
    let mut m: Vec<Vec<usize>> = rows.to_vec();
    let cols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..cols {
        let Some(piv) = (r..m.len()).find(|&i| m[i][c] != 0) else {
            continue;
        };
        m.swap(r, piv);
        let iv = f.inv(m[r][c]).unwrap();
        for x in m[r].iter_mut() {
            *x = f.mul(*x, iv);
        }
        for i in 0..m.len() {
            if i != r && m[i][c] != 0 {
                let factor = m[i][c];
                for j in 0..cols {
                    let t = f.mul(factor, m[r][j]);
                    m[i][j] = f.sub(m[i][j], t);
                }
            }
        }
        r += 1;
    }
    r
}

/// The data of a semilattice-over-Maltsev operation.
#[derive(Debug, Clone)]
pub struct SomData {
    /// `meet[s][t]` on sort indices.
    pub meet: Vec<Vec<usize>>,
    /// Elements of each sort, in universe numbering.
    pub members: Vec<Vec<usize>>,
    /// `f_(s,t)` for `s > t`, as images of `members[s]` (identity maps are implied).
    pub connect: BTreeMap<(usize, usize), Vec<usize>>,
    /// `m_s` as a table over positions in `members[s]`.
    pub maltsev: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct SemilatticeOverMaltsev {
    pub meet: Vec<Vec<usize>>,
    pub sort_of: Vec<usize>,
    pub d: Operation,
}

fn check_semilattice(meet: &[Vec<usize>]) -> Result<()> {
    let s = meet.len();
    for a in 0..s {
        if meet[a].len() != s {
            return Err(precondition("meet table is not square"));
        }
        if meet[a][a] != a {
            return Err(precondition(format!("meet is not idempotent at {a}")));
        }
        for b in 0..s {
            if meet[a][b] >= s || meet[a][b] != meet[b][a] {
                return Err(precondition(format!("meet is not commutative at ({a},{b})")));
            }
            for c in 0..s {
                if meet[meet[a][b]][c] != meet[a][meet[b][c]] {
                    return Err(precondition(format!("meet is not associative at ({a},{b},{c})")));
                }
            }
        }
    }
    Ok(())
}

/// Builds `d(a,b,c) = m_t(f(a), f(b), f(c))` with `t` the meet of the sorts,
/// then asserts idempotence and the identity families the construction satisfies.
pub fn build_som(data: &SomData) -> Result<SemilatticeOverMaltsev> {
    check_semilattice(&data.meet)?;
    let sorts = data.meet.len();
    if data.members.len() != sorts || data.maltsev.len() != sorts {
        return Err(precondition("one member list and Maltsev table per sort is required"));
    }
    let n: usize = data.members.iter().map(Vec::len).sum();
    let mut sort_of = vec![usize::MAX; n];
    let mut pos = vec![0; n];
    for (s, ms) in data.members.iter().enumerate() {
        if ms.is_empty() {
            return Err(precondition(format!("sort {s} is empty")));
        }
        for (i, &x) in ms.iter().enumerate() {
            if x >= n || sort_of[x] != usize::MAX {
                return Err(precondition(format!("element {x} is out of range or in two sorts")));
            }
            sort_of[x] = s;
            pos[x] = i;
        }
    }
    let mut maps: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for s in 0..sorts {
        for t in 0..sorts {
            if data.meet[s][t] != t {
                continue;
            }
            let img = if s == t {
                data.members[s].clone()
            } else {
                data.connect
                    .get(&(s, t))
                    .cloned()
                    .ok_or_else(|| precondition(format!("no connecting map from sort {s} to sort {t}")))?
            };
            if img.len() != data.members[s].len() || img.iter().any(|&y| y >= n || sort_of[y] != t) {
                return Err(precondition(format!("connecting map from {s} to {t} does not land in sort {t}")));
            }
            maps.insert((s, t), img);
        }
    }
    for (s, m) in data.maltsev.iter().enumerate() {
        let k = data.members[s].len();
        if m.len() != k * k * k || m.iter().any(|&v| v >= k) {
            return Err(precondition(format!("Maltsev table of sort {s} is malformed")));
        }
        for x in 0..k {
            for y in 0..k {
                if m[(x * k + x) * k + y] != y || m[(x * k + y) * k + y] != x {
                    return Err(precondition(format!("operation on sort {s} is not Maltsev")));
                }
            }
        }
    }
    let d = Operation::from_fn("d", 3, n, |args| {
        let t = data.meet[data.meet[sort_of[args[0]]][sort_of[args[1]]]][sort_of[args[2]]];
        let k = data.members[t].len();
        let local: Vec<usize> = args
            .iter()
            .map(|&x| pos[maps[&(sort_of[x], t)][pos[x]]])
            .collect();
        data.members[t][data.maltsev[t][(local[0] * k + local[1]) * k + local[2]]]
    });
    let som = SemilatticeOverMaltsev {
        meet: data.meet.clone(),
        sort_of,
        d,
    };
    check_som_identities(&som.d)?;
    Ok(som)
}

/// Idempotence and the identities (5)-(7) a semilattice-over-Maltsev operation satisfies.
pub fn check_som_identities(d: &Operation) -> Result<()> {
    let n = d.size();
    let dd = |x: usize, y: usize, z: usize| d.table[(x * n + y) * n + z];
    if let Some(x) = (0..n).find(|&x| dd(x, x, x) != x) {
        return Err(internal(format!("d is not idempotent at {x}")));
    }
    type Ternary<'a> = &'a dyn Fn(usize, usize, usize) -> usize;
    let f: [fn(Ternary, usize, usize, usize) -> usize; 4] = [
        |_, x, _, _| x,
        |d, x, y, _| d(x, y, y),
        |_, _, _, z| z,
        |d, _, y, z| d(y, y, z),
    ];
    let g: [fn(Ternary, usize, usize, usize) -> usize; 4] = [
        |d, x, _, z| d(x, z, z),
        |d, x, y, z| d(d(x, y, y), z, z),
        |d, x, _, z| d(x, x, z),
        |d, x, y, z| d(x, x, d(y, y, z)),
    ];
    for x in 0..n {
        for y in 0..n {
            let xyy = dd(x, y, y);
            let xxy = dd(x, x, y);
            if dd(xyy, x, x) != xyy || dd(xyy, y, y) != xyy {
                return Err(internal(format!("d(x,y,y) identities fail at ({x},{y})")));
            }
            if dd(x, x, xxy) != xxy || dd(y, y, xxy) != xxy {
                return Err(internal(format!("d(x,x,y) identities fail at ({x},{y})")));
            }
            for i in 0..4 {
                if f[i](&dd, x, y, x) != g[i](&dd, x, y, x) {
                    return Err(internal(format!("f{i}(x,y,x) != g{i}(x,y,x) at ({x},{y})")));
                }
            }
            let pairs_xyy = [
                (x, f[0](&dd, x, y, y)),
                (f[2](&dd, x, y, y), f[3](&dd, x, y, y)),
                (f[1](&dd, x, y, y), g[1](&dd, x, y, y)),
                (g[3](&dd, x, y, y), g[2](&dd, x, y, y)),
                (g[0](&dd, x, y, y), xyy),
            ];
            let pairs_xxy = [
                (f[2](&dd, x, x, y), y),
                (f[1](&dd, x, x, y), f[0](&dd, x, x, y)),
                (g[3](&dd, x, x, y), f[3](&dd, x, x, y)),
                (g[0](&dd, x, x, y), g[1](&dd, x, x, y)),
                (xxy, g[2](&dd, x, x, y)),
            ];
            for (k, (l, r)) in pairs_xyy.iter().chain(&pairs_xxy).enumerate() {
                if l != r {
                    return Err(internal(format!("linking identity {k} fails at ({x},{y})")));
                }
            }
        }
    }
    Ok(())
}

/// A subspace `W` of `V^0_l`: everything, or the span of independent rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Subspace {
    Named(String),
    Basis(Vec<Vec<usize>>),
}

impl Subspace {
    pub fn full() -> Subspace {
        Subspace::Named("full".into())
    }
}

fn default_op_cap() -> usize {
    DEFAULT_OP_CAP
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub field: FieldSpec,
    /// `dim V^0_l` for `l = 0..=m`.
    pub dims: Vec<usize>,
    /// For each `l`, the subspaces `W^l_1 .. W^l_{n_l}` (the full `W^l_0` is implicit).
    #[serde(default)]
    pub subspaces: Vec<Vec<Subspace>>,
    /// Optional `g_l : V^0_0 -> V^0_l` as matrices (rows = target coordinates), by `l`.
    #[serde(default)]
    pub g_maps: BTreeMap<usize, Vec<Vec<usize>>>,
    /// Optional `h_l : V^0_l -> V^0_0`.
    #[serde(default)]
    pub h_maps: BTreeMap<usize, Vec<Vec<usize>>>,
    /// The nonzero element `1` of `V^0_0`, as coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one: Option<Vec<usize>>,
    #[serde(default = "default_op_cap")]
    pub op_cap: usize,
}

impl GenConfig {
    /// `None` stands for a full subspace.
    pub fn simple(q: usize, dims: Vec<usize>, subspaces: Vec<Vec<Option<Vec<Vec<usize>>>>>) -> GenConfig {
        let mut subspaces: Vec<Vec<Subspace>> = subspaces
            .into_iter()
            .map(|ws| {
                ws.into_iter()
                    .map(|w| w.map_or_else(Subspace::full, Subspace::Basis))
                    .collect()
            })
            .collect();
        subspaces.resize(dims.len(), Vec::new());
        GenConfig {
            field: FieldSpec { q, modulus: None },
            dims,
            subspaces,
            g_maps: BTreeMap::new(),
            h_maps: BTreeMap::new(),
            one: None,
            op_cap: DEFAULT_OP_CAP,
        }
    }
}

/// One space `V^l_i`: its index, dimension and position in the universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sort {
    pub ell: usize,
    pub i: usize,
    pub dim: usize,
    pub offset: usize,
    pub size: usize,
    /// Basis of `W^l_i` inside `V^0_l`; `sigma^l_i` sends coordinates to their combination.
    pub basis: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub algebra: Algebra,
    pub mu: Partition,
    pub alpha: Partition,
    pub field: Field,
    pub config: GenConfig,
    pub sorts: Vec<Sort>,
    /// `sigma_l(a)` for each element, as an element of `V^0_l`.
    pub sigma: Vec<usize>,
    pub som: SemilatticeOverMaltsev,
    pub op_count: usize,
}

impl Generated {
    pub fn sort_of(&self, a: usize) -> usize {
        self.som.sort_of[a]
    }

    /// Sort index of `V^l_i`.
    pub fn sort_index(&self, ell: usize, i: usize) -> Option<usize> {
        self.sorts.iter().position(|s| s.ell == ell && s.i == i)
    }

    pub fn coords(&self, a: usize) -> Vec<usize> {
        let s = &self.sorts[self.sort_of(a)];
        vec_coords(a - s.offset, self.field.q, s.dim)
    }

    pub fn element(&self, sort: usize, coords: &[usize]) -> usize {
        self.sorts[sort].offset + vec_index(coords, self.field.q)
    }

    pub fn zero(&self, sort: usize) -> usize {
        self.sorts[sort].offset
    }

    pub fn members(&self, sort: usize) -> Vec<usize> {
        let s = &self.sorts[sort];
        (s.offset..s.offset + s.size).collect()
    }

    /// The `alpha`-class `C_l`.
    pub fn c_class(&self, ell: usize) -> Vec<usize> {
        (0..self.algebra.size()).filter(|&a| self.sorts[self.sort_of(a)].ell == ell).collect()
    }

    /// The elements of `W^l_i` inside `V^0_l`.
    pub fn w_elements(&self, ell: usize, i: usize) -> Vec<usize> {
        let s = self.sort_index(ell, i).unwrap();
        let mut w: Vec<usize> = self.members(s).into_iter().map(|a| self.sigma[a]).collect();
        w.sort_unstable();
        w
    }
}

/// First coordinate most significant.
fn vec_coords(mut idx: usize, q: usize, dim: usize) -> Vec<usize> {
    let mut v = vec![0; dim];
    for c in v.iter_mut().rev() {
        *c = idx % q;
        idx /= q;
    }
    v
}

fn vec_index(v: &[usize], q: usize) -> usize {
    v.iter().fold(0, |acc, &c| acc * q + c)
}

fn apply_matrix(f: &Field, m: &[Vec<usize>], v: &[usize]) -> Vec<usize> {
    m.iter()
        .map(|row| row.iter().zip(v).fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b))))
        .collect()
}

/// All nonzero `rows x cols` matrices, row-major digits in ascending order.
fn nonzero_matrices(q: usize, rows: usize, cols: usize) -> impl Iterator<Item = Vec<Vec<usize>>> {
    let cells = rows * cols;
    let total = q.pow(cells as u32);
    (1..total).map(move |idx| {
        let flat = vec_coords(idx, q, cells);
        flat.chunks(cols.max(1)).map(|c| c.to_vec()).take(rows).collect()
    })
}

fn check_matrix(f: &Field, m: &[Vec<usize>], rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols || r.iter().any(|&x| x >= f.q)) {
        return Err(precondition(format!("{what} must be a {rows}x{cols} matrix over GF({})", f.q)));
    }
    if m.iter().all(|r| r.iter().all(|&x| x == 0)) {
        return Err(precondition(format!("{what} must be nonconstant")));
    }
    Ok(())
}

fn first_basis_map(rows: usize, cols: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; cols]; rows];
    m[0][0] = 1;
    m
}

/// The number of basic operations the config produces.
pub fn operation_count(config: &GenConfig) -> Result<usize> {
    let q = config.field.q;
    let dims = &config.dims;
    let mut count = 1usize;
    let mut sorts = 0usize;
    for (ell, &d0) in dims.iter().enumerate() {
        let mut target_dims = vec![d0];
        for w in config.subspaces.get(ell).into_iter().flatten() {
            target_dims.push(match w {
                Subspace::Named(_) => d0,
                Subspace::Basis(rows) => rows.len(),
            });
        }
        sorts += target_dims.len();
        for t in target_dims {
            let maps = q
                .checked_pow((d0 * t) as u32)
                .ok_or(Error::CapExceeded {
                    cap: "operation cap",
                    limit: config.op_cap,
                })?;
            count = count.saturating_add(maps - 1);
        }
        if ell >= 1 {
            count += 1;
            if d0 > 0 {
                count += 2;
            }
        }
    }
    Ok(count + sorts)
}

pub fn generate_example(config: &GenConfig) -> Result<Generated> {
    let field = build_field(&config.field)?;
    let q = field.q;
    let dims = &config.dims;
    if dims.is_empty() || dims[0] == 0 {
        return Err(precondition("dim V^0_0 must be positive"));
    }
    if config.subspaces.len() > dims.len() {
        return Err(precondition("subspaces are listed for more classes than dims"));
    }
    let op_count = operation_count(config)?;
    if op_count > config.op_cap {
        return Err(Error::CapExceeded {
            cap: "operation cap",
            limit: config.op_cap,
        });
    }

    let mut sorts: Vec<Sort> = Vec::new();
    let mut offset = 0;
    for (ell, &d0) in dims.iter().enumerate() {
        let identity: Vec<Vec<usize>> = (0..d0)
            .map(|r| (0..d0).map(|c| (r == c) as usize).collect())
            .collect();
        let mut bases = vec![identity.clone()];
        for w in config.subspaces.get(ell).into_iter().flatten() {
            let basis = match w {
                Subspace::Named(s) if s == "full" => identity.clone(),
                Subspace::Named(s) => return Err(precondition(format!("unknown subspace `{s}`"))),
                Subspace::Basis(rows) => {
                    if rows.iter().any(|r| r.len() != d0 || r.iter().any(|&x| x >= q)) {
                        return Err(precondition(format!("basis rows of a subspace of V^0_{ell} need {d0} coordinates")));
                    }
                    if rank(&field, rows) != rows.len() {
                        return Err(precondition(format!("basis rows of a subspace of V^0_{ell} are dependent")));
                    }
                    rows.clone()
                }
            };
            bases.push(basis);
        }
        for (i, basis) in bases.into_iter().enumerate() {
            let dim = basis.len();
            let size = q.pow(dim as u32);
            sorts.push(Sort {
                ell,
                i,
                dim,
                offset,
                size,
                basis,
            });
            offset += size;
        }
    }
    let n = offset;
    let nsorts = sorts.len();
    let sort_of: Vec<usize> = (0..n)
        .map(|a| sorts.iter().position(|s| a >= s.offset && a < s.offset + s.size).unwrap())
        .collect();
    let zero0 = |ell: usize| sorts.iter().find(|s| s.ell == ell && s.i == 0).unwrap().offset;
    let coords = |a: usize| {
        let s = &sorts[sort_of[a]];
        vec_coords(a - s.offset, q, s.dim)
    };
    // sigma_l(a): combination of the W basis by the coordinates of a
    let sigma: Vec<usize> = (0..n)
        .map(|a| {
            let s = &sorts[sort_of[a]];
            let c = coords(a);
            let d0 = dims[s.ell];
            let mut v = vec![0; d0];
            for (coef, row) in c.iter().zip(&s.basis) {
                for (j, &x) in row.iter().enumerate() {
                    v[j] = field.add(v[j], field.mul(*coef, x));
                }
            }
            zero0(s.ell) + vec_index(&v, q)
        })
        .collect();

    let meet: Vec<Vec<usize>> = (0..nsorts)
        .map(|a| {
            (0..nsorts)
                .map(|b| {
                    let (sa, sb) = (&sorts[a], &sorts[b]);
                    if a == b {
                        a
                    } else if sa.ell == sb.ell {
                        sorts.iter().position(|s| s.ell == sa.ell && s.i == 0).unwrap()
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let members: Vec<Vec<usize>> = sorts.iter().map(|s| (s.offset..s.offset + s.size).collect()).collect();
    let mut connect = BTreeMap::new();
    for (si, s) in sorts.iter().enumerate() {
        let base = sorts.iter().position(|t| t.ell == s.ell && t.i == 0).unwrap();
        if s.i != 0 {
            connect.insert((si, base), members[si].iter().map(|&a| sigma[a]).collect::<Vec<_>>());
        }
        if si != 0 && s.ell == 0 && s.i != 0 {
            connect.insert((si, 0), members[si].iter().map(|&a| sigma[a]).collect());
        } else if s.ell != 0 {
            connect.insert((si, 0), vec![0; s.size]);
        }
    }
    let maltsev: Vec<Vec<usize>> = sorts
        .iter()
        .map(|s| {
            let k = s.size;
            let mut t = vec![0; k * k * k];
            for x in 0..k {
                let vx = vec_coords(x, q, s.dim);
                for y in 0..k {
                    let vy = vec_coords(y, q, s.dim);
                    for z in 0..k {
                        let vz = vec_coords(z, q, s.dim);
                        let r: Vec<usize> = (0..s.dim)
                            .map(|c| field.add(field.sub(vx[c], vy[c]), vz[c]))
                            .collect();
                        t[(x * k + y) * k + z] = vec_index(&r, q);
                    }
                }
            }
            t
        })
        .collect();
    let som = build_som(&SomData {
        meet,
        members,
        connect,
        maltsev,
    })?;

    let ell_of = |a: usize| sorts[sort_of[a]].ell;
    let mut ops = vec![som.d.clone()];
    // F^l_{i,g}(a) = g(sigma_l(a)) on C_l, else the zero of V^k_0 for a in C_k
    for s in &sorts {
        let d0 = dims[s.ell];
        for (gi, g) in nonzero_matrices(q, s.dim, d0).enumerate() {
            let table = (0..n)
                .map(|a| {
                    if ell_of(a) == s.ell {
                        let v = vec_coords(sigma[a] - zero0(s.ell), q, d0);
                        s.offset + vec_index(&apply_matrix(&field, &g, &v), q)
                    } else {
                        zero0(ell_of(a))
                    }
                })
                .collect();
            ops.push(Operation::new(format!("F_{}_{}_{}", s.ell, s.i, gi), 1, n, table)?);
        }
    }
    for ell in 1..dims.len() {
        let d0 = dims[ell];
        if d0 == 0 {
            continue;
        }
        let g = config.g_maps.get(&ell).cloned().unwrap_or_else(|| first_basis_map(d0, dims[0]));
        check_matrix(&field, &g, d0, dims[0], &format!("g_{ell}"))?;
        let h = config.h_maps.get(&ell).cloned().unwrap_or_else(|| first_basis_map(dims[0], d0));
        check_matrix(&field, &h, dims[0], d0, &format!("h_{ell}"))?;
        let gt = (0..n)
            .map(|a| {
                if ell_of(a) == 0 {
                    let v = vec_coords(sigma[a] - zero0(0), q, dims[0]);
                    zero0(ell) + vec_index(&apply_matrix(&field, &g, &v), q)
                } else {
                    zero0(ell_of(a))
                }
            })
            .collect();
        ops.push(Operation::new(format!("G_{ell}"), 1, n, gt)?);
        let ht = (0..n)
            .map(|a| {
                if ell_of(a) == ell {
                    let v = vec_coords(sigma[a] - zero0(ell), q, d0);
                    zero0(0) + vec_index(&apply_matrix(&field, &h, &v), q)
                } else {
                    zero0(ell_of(a))
                }
            })
            .collect();
        ops.push(Operation::new(format!("Gp_{ell}"), 1, n, ht)?);
    }
    let one_coords = config.one.clone().unwrap_or_else(|| {
        let mut v = vec![0; dims[0]];
        v[0] = 1;
        v
    });
    if one_coords.len() != dims[0] || one_coords.iter().any(|&c| c >= q) || one_coords.iter().all(|&c| c == 0) {
        return Err(precondition("`one` must be a nonzero vector of V^0_0"));
    }
    let one = vec_index(&one_coords, q);
    for (si, s) in sorts.iter().enumerate() {
        let table = (0..n * n)
            .map(|idx| {
                let (a, b) = (idx / n, idx % n);
                if sort_of[a] == si && sort_of[b] == si {
                    one
                } else {
                    0
                }
            })
            .collect();
        ops.push(Operation::new(format!("H_{}_{}", s.ell, s.i), 2, n, table)?);
    }
    for ell in 1..dims.len() {
        let table = (0..n * n)
            .map(|idx| {
                let (a, b) = (idx / n, idx % n);
                if ell_of(a) == ell {
                    b
                } else {
                    zero0(ell_of(b))
                }
            })
            .collect();
        ops.push(Operation::new(format!("K_{ell}"), 2, n, table)?);
    }
    if ops.len() != op_count {
        return Err(internal(format!("built {} operations, expected {op_count}", ops.len())));
    }
    let algebra = Algebra::new(n, ops)?;
    let mu = Partition::kernel_of(&sort_of);
    let alpha = Partition::kernel_of(&(0..n).map(ell_of).collect::<Vec<_>>());
    Ok(Generated {
        algebra,
        mu,
        alpha,
        field,
        config: config.clone(),
        sorts,
        sigma,
        som,
        op_count,
    })
}

/// Checks the generated algebra against everything the construction promises:
/// the weak difference term, the monolith and its minimality among reflexive
/// subuniverses of A^2, the centralizer, the closed form of Delta, the bijection
/// of D(A, mu) onto the base spaces, the ranges, and the field.
pub fn verify_claims(g: &Generated, cap: usize) -> Result<Report> {
    let a = &g.algebra;
    let n = a.size();
    let anchor = "generated-example";
    let mut r = Report::new("verify-claims");

    let cert = verify_wdt(a, &a.ops()[0].table, Scope::Base)?;
    r.push(
        "claim-wdt",
        "d is a weak difference term of A",
        anchor,
        cert.verdict,
        cert.witness.clone(),
    );

    let mono = simdiv::monolith(a);
    let mono_ok = matches!(&mono, Ok(m) if *m == g.mu);
    let mu_abelian = is_abelian(a, &g.mu, None)?;
    r.push(
        "claim-monolith",
        "A is subdirectly irreducible with abelian monolith mu",
        anchor,
        mono_ok && mu_abelian.holds,
        match (&mono, mu_abelian.holds) {
            (Err(e), _) => Some(e.to_string()),
            (Ok(m), true) if *m != g.mu => Some(format!("monolith {m}")),
            (Ok(_), false) => Some(format!("mu is not abelian: {:?}", mu_abelian.witness)),
            _ => None,
        },
    );

    let mu_pairs: BTreeSet<(usize, usize)> = g.mu.pairs().into_iter().collect();
    let diag: Vec<Vec<usize>> = (0..n).map(|x| vec![x, x]).collect();
    let mut minimal_fail = None;
    'pairs: for c in 0..n {
        for c2 in 0..n {
            if c == c2 {
                continue;
            }
            let mut seeds = diag.clone();
            seeds.push(vec![c, c2]);
            let cl = close(a, 2, &seeds, &Limits::new(cap, "reflexive subuniverse cap"), &mut |_, _| false)?;
            let got: BTreeSet<(usize, usize)> = cl.iter().map(|t| (t[0] as usize, t[1] as usize)).collect();
            let ok = if g.mu.related(c, c2) {
                got == mu_pairs
            } else {
                mu_pairs.is_subset(&got)
            };
            if !ok {
                minimal_fail = Some(format!("the reflexive subuniverse generated by ({c},{c2})"));
                break 'pairs;
            }
        }
    }
    r.push(
        "claim-minimal-reflexive",
        "mu is the unique minimal reflexive subuniverse of A^2 properly containing 0",
        anchor,
        minimal_fail.is_none(),
        minimal_fail,
    );

    let cent = centralizer(a, &Partition::identity(n), &g.mu)?;
    r.push(
        "claim-centralizer",
        "(0:mu) = alpha",
        anchor,
        cent == g.alpha,
        (cent != g.alpha).then(|| format!("(0:mu) = {cent}")),
    );

    let dependent = [
        ("claim-delta", "Delta is given by equal differences of sigma-images"),
        ("claim-bijection", "(a, 0)/Delta -> a is a bijection of D(A, mu) onto B sending the derived congruence to the base spaces"),
        ("claim-ranges", "h maps the range of each mu-class onto its configured subspace"),
        ("claim-field", "F_mu is isomorphic to the configured field"),
    ];
    if !cert.verdict || !mu_abelian.holds {
        for (id, st) in dependent {
            r.skip(id, st, anchor, "needs a valid weak difference term and an abelian mu");
        }
        return Ok(r);
    }
    let da = difference_algebra(a, &g.mu, &cert)?;
    let ell_of = |x: usize| g.sorts[g.sort_of(x)].ell;
    let diff = |x: usize, y: usize| -> Vec<usize> {
        let (cx, cy) = (g.coords(g.sigma[x]), g.coords(g.sigma[y]));
        cx.iter().zip(&cy).map(|(&u, &v)| g.field.sub(u, v)).collect()
    };
    let pairs = &da.pairs.pairs;
    let mut delta_fail = None;
    'delta: for (i, &(x, y)) in pairs.iter().enumerate() {
        for (j, &(x2, y2)) in pairs.iter().enumerate() {
            let want = ell_of(x) == ell_of(x2) && diff(x, y) == diff(x2, y2);
            if da.delta.delta.related(i, j) != want {
                delta_fail = Some(format!("(({x},{y}),({x2},{y2})): expected related = {want}"));
                break 'delta;
            }
        }
    }
    r.push(dependent[0].0, dependent[0].1, anchor, delta_fail.is_none(), delta_fail);

    let mut h = vec![usize::MAX; da.size()];
    let mut hits = 0;
    for ell in 0..g.config.dims.len() {
        let base = g.sort_index(ell, 0).unwrap();
        let z = g.zero(base);
        for x in g.members(base) {
            let q = da.class_of(x, z).unwrap();
            if h[q] == usize::MAX {
                hits += 1;
            }
            h[q] = x;
        }
    }
    let bijective = hits == da.size() && h.iter().all(|&x| x != usize::MAX);
    let sends_phi = bijective
        && (0..da.size()).all(|p| (0..da.size()).all(|q| da.phi.related(p, q) == (ell_of(h[p]) == ell_of(h[q]))));
    r.push(
        dependent[1].0,
        dependent[1].1,
        anchor,
        bijective && sends_phi,
        (!(bijective && sends_phi)).then(|| format!("bijective {bijective}, |D| = {}, |B| = {hits}", da.size())),
    );

    if bijective {
        let mut range_fail = None;
        for (si, s) in g.sorts.iter().enumerate() {
            let ran = range_of_class(&da, &g.members(si))?;
            let image: BTreeSet<usize> = ran.elements.iter().map(|&q| h[q]).collect();
            let want: BTreeSet<usize> = g.w_elements(s.ell, s.i).into_iter().collect();
            if image != want {
                range_fail.get_or_insert(format!("V^{}_{}: range {image:?}, subspace {want:?}", s.ell, s.i));
            }
        }
        r.push(dependent[2].0, dependent[2].1, anchor, range_fail.is_none(), range_fail);
    } else {
        r.skip(dependent[2].0, dependent[2].1, anchor, "no bijection onto B");
    }

    let field = simdiv::field_of(&da, cap)?;
    let iso = find_isomorphism(&field.tables.as_algebra(), &g.field.as_algebra())?;
    r.push(
        dependent[3].0,
        dependent[3].1,
        anchor,
        iso.is_some() && field.checks.passed(),
        Some(format!("|F_mu| = {}, q = {}", field.size(), g.field.q)),
    );
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fields() {
        let f2 = build_field(&FieldSpec { q: 2, modulus: None }).unwrap();
        assert_eq!((f2.add(1, 1), f2.mul(1, 1)), (0, 1));
        let f4 = build_field(&FieldSpec { q: 4, modulus: None }).unwrap();
        // x = 2, x+1 = 3
        assert_eq!(f4.mul(2, 3), 1);
        let f9 = build_field(&FieldSpec { q: 9, modulus: None }).unwrap();
        assert_eq!((f9.p, f9.k), (3, 2));
        // x^2 = -1
        assert_eq!(f9.mul(3, 3), 2);
        for q in [2, 3, 4, 5, 7, 8, 9] {
            assert!(build_field(&FieldSpec { q, modulus: None }).is_ok());
        }
        assert!(build_field(&FieldSpec { q: 6, modulus: None }).is_err());
        assert!(build_field(&FieldSpec { q: 4, modulus: Some(vec![1, 0, 1]) }).is_err());
        assert!(build_field(&FieldSpec { q: 16, modulus: None }).is_err());
    }

    #[test]
    fn som_single_sort_is_the_maltsev_operation() {
        let z4 = fixtures::z4();
        let data = SomData {
            meet: vec![vec![0]],
            members: vec![(0..4).collect()],
            connect: BTreeMap::new(),
            maltsev: vec![z4.op("p").unwrap().table.clone()],
        };
        let som = build_som(&data).unwrap();
        assert_eq!(som.d.table, z4.op("p").unwrap().table);
    }

    #[test]
    fn som_two_sorts_mix_into_the_lower_sort() {
        // V_s = {0,1} above V_t = {2,3}, f_(s,t) = identity on GF(2)
        let xor = (0..8).map(|i| (i >> 2 ^ i >> 1 ^ i) & 1).collect::<Vec<_>>();
        let data = SomData {
            meet: vec![vec![0, 1], vec![1, 1]],
            members: vec![vec![0, 1], vec![2, 3]],
            connect: [((0, 1), vec![2, 3])].into(),
            maltsev: vec![xor.clone(), xor],
        };
        let som = build_som(&data).unwrap();
        assert_eq!(som.d.apply(&[1, 0, 3]), 2);
        assert_eq!(som.d.apply(&[0, 1, 1]), 0);
    }

    #[test]
    fn generated_sizes() {
        let g1 = fixtures::gen1();
        assert_eq!(g1.algebra.size(), 4);
        assert_eq!(g1.algebra.ops().len(), 5);
        let g2 = fixtures::gen2();
        assert_eq!(g2.algebra.size(), 8);
        let count = |p: &str| g2.algebra.ops().iter().filter(|o| o.name.starts_with(p)).count();
        assert_eq!(count("F_0_0_"), 15);
        assert_eq!(count("F_0_1_"), 3);
        assert_eq!(count("F_1_0_"), 1);
        assert_eq!((count("G_"), count("Gp_"), count("H_"), count("K_")), (1, 1, 3, 1));
        assert_eq!(g2.op_count, 26);
        let mut sizes: Vec<usize> = g2.mu.blocks().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 4]);
        assert_eq!(g2.alpha.num_blocks(), 2);
        assert_eq!(fixtures::gen3().algebra.size(), 6);
        let line = generate_example(&GenConfig::simple(3, vec![1], vec![])).unwrap();
        assert_eq!(line.algebra.size(), 3);
    }

    #[test]
    fn generated_d_is_affine_on_mu_classes() {
        let g2 = fixtures::gen2();
        let d = g2.algebra.op("d").unwrap();
        for b in g2.mu.blocks() {
            for &x in &b {
                for &y in &b {
                    for &z in &b {
                        let want: Vec<usize> = (0..g2.coords(x).len())
                            .map(|c| g2.field.add(g2.field.sub(g2.coords(x)[c], g2.coords(y)[c]), g2.coords(z)[c]))
                            .collect();
                        assert_eq!(d.apply(&[x, y, z]), g2.element(g2.sort_of(x), &want));
                    }
                }
            }
        }
    }

    #[test]
    fn generator_rejects_bad_configs() {
        assert!(generate_example(&GenConfig::simple(2, vec![0], vec![])).is_err());
        let mut c = GenConfig::simple(2, vec![3, 3], vec![]);
        c.op_cap = 256;
        assert!(matches!(generate_example(&c), Err(Error::CapExceeded { .. })));
        let dep = GenConfig::simple(2, vec![2], vec![vec![Some(vec![vec![1, 0], vec![1, 0]])]]);
        assert!(generate_example(&dep).is_err());
    }

    #[test]
    fn claims_hold_for_small_configs() {
        for g in [fixtures::gen1(), fixtures::gen3()] {
            let r = verify_claims(&g, 1_000_000).unwrap();
            assert!(r.passed(), "{:?}", r.failures());
            assert_eq!(r.items.len(), 8);
        }
    }
}

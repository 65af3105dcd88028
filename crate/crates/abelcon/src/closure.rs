//! Closure of a set of tuples under the basic operations applied coordinatewise.
//!
//! Subuniverses, matrix sets, polynomial clones and relational powers are all
//! instances: a tuple of width `w` is an element of `A^w`.

use rustc_hash::FxHashMap;

use crate::algebra::Algebra;
use crate::error::{Error, Result};

/// How an element entered the closure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Seed(usize),
    Op { op: usize, args: Vec<u32> },
}

enum Index {
    Dense { base: usize, slots: Vec<u32> },
    Code { base: u64, map: FxHashMap<u64, u32> },
    Slice(FxHashMap<Box<[u32]>, u32>),
}

impl Index {
    fn new(n: usize, width: usize) -> Index {
        if let Some(total) = n.checked_pow(width as u32).filter(|&t| t <= DENSE_LIMIT) {
            return Index::Dense {
                base: n,
                slots: vec![u32::MAX; total],
            };
        }
        let fits = (n as u128)
            .checked_pow(width as u32)
            .map_or(false, |v| v <= u64::MAX as u128);
        if fits {
            Index::Code {
                base: n as u64,
                map: FxHashMap::default(),
            }
        } else {
            Index::Slice(FxHashMap::default())
        }
    }

    fn get(&self, t: &[u32]) -> Option<u32> {
        match self {
            Index::Dense { base, slots } => {
                let v = slots[dense_code(*base, t)];
                (v != u32::MAX).then_some(v)
            }
            Index::Code { base, map } => map.get(&encode(*base, t)).copied(),
            Index::Slice(map) => map.get(t).copied(),
        }
    }

    fn insert(&mut self, t: &[u32], i: u32) {
        match self {
            Index::Dense { base, slots } => {
                slots[dense_code(*base, t)] = i;
            }
            Index::Code { base, map } => {
                map.insert(encode(*base, t), i);
            }
            Index::Slice(map) => {
                map.insert(t.into(), i);
            }
        }
    }
}

/// Tuple spaces up to this size get a flat lookup table.
const DENSE_LIMIT: usize = 1 << 22;

fn dense_code(base: usize, t: &[u32]) -> usize {
    t.iter().fold(0usize, |acc, &x| acc * base + x as usize)
}

fn encode(base: u64, t: &[u32]) -> u64 {
    t.iter().fold(0u64, |acc, &x| acc * base + x as u64)
}

pub struct Limits {
    pub cap: usize,
    pub cap_name: &'static str,
    pub provenance: bool,
}

impl Limits {
    pub fn new(cap: usize, cap_name: &'static str) -> Limits {
        Limits {
            cap,
            cap_name,
            provenance: false,
        }
    }

    pub fn with_provenance(mut self) -> Limits {
        self.provenance = true;
        self
    }
}

pub struct Closure {
    width: usize,
    data: Vec<u32>,
    index: Index,
    origins: Option<Vec<Origin>>,
    /// Set when the observer asked to stop early.
    pub stopped: bool,
}

impl Closure {
    pub fn len(&self) -> usize {
        self.data.len() / self.width.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.data.chunks(self.width.max(1))
    }

    pub fn position(&self, t: &[u32]) -> Option<usize> {
        self.index.get(t).map(|i| i as usize)
    }

    pub fn contains(&self, t: &[u32]) -> bool {
        self.index.get(t).is_some()
    }

    pub fn origin(&self, i: usize) -> Option<&Origin> {
        self.origins.as_ref().map(|o| &o[i])
    }

    /// Re-evaluates element `i` with the seeds replaced by other values of any width.
    /// Requires provenance.
    pub fn replay(&self, alg: &Algebra, i: usize, seed: &dyn Fn(usize) -> Vec<usize>) -> Vec<usize> {
        let origins = self.origins.as_ref().expect("replay needs provenance");
        let mut memo: FxHashMap<usize, Vec<usize>> = FxHashMap::default();
        let mut stack = vec![i];
        while let Some(&top) = stack.last() {
            if memo.contains_key(&top) {
                stack.pop();
                continue;
            }
            match &origins[top] {
                Origin::Seed(s) => {
                    memo.insert(top, seed(*s));
                    stack.pop();
                }
                Origin::Op { op, args } => {
                    let missing: Vec<usize> = args
                        .iter()
                        .map(|&a| a as usize)
                        .filter(|a| !memo.contains_key(a))
                        .collect();
                    if missing.is_empty() {
                        let cols: Vec<&Vec<usize>> = args.iter().map(|&a| &memo[&(a as usize)]).collect();
                        let w = cols.first().map_or(0, |c| c.len());
                        let o = &alg.ops()[*op];
                        let mut buf = vec![0usize; args.len()];
                        let out: Vec<usize> = (0..w)
                            .map(|c| {
                                for (j, col) in cols.iter().enumerate() {
                                    buf[j] = col[c];
                                }
                                o.apply(&buf)
                            })
                            .collect();
                        memo.insert(top, out);
                        stack.pop();
                    } else {
                        stack.extend(missing);
                    }
                }
            }
        }
        memo.remove(&i).unwrap()
    }

    /// Renders element `i` as a term over the given seed names. Requires provenance.
    pub fn term(&self, alg: &Algebra, i: usize, seed_names: &[String]) -> String {
        let origins = self.origins.as_ref().expect("term needs provenance");
        match &origins[i] {
            Origin::Seed(s) => seed_names[*s].clone(),
            Origin::Op { op, args } => {
                let inner: Vec<String> = args
                    .iter()
                    .map(|&a| self.term(alg, a as usize, seed_names))
                    .collect();
                format!("{}({})", alg.ops()[*op].name, inner.join(","))
            }
        }
    }
}

/// Closes `seeds` (each of length `width`) under all operations of `alg`.
///
/// Elements are processed in insertion order and each argument tuple is tried
/// exactly once, when its largest index is processed; insertion order is
/// therefore breadth-first by term depth. `observe` sees each new element and
/// may return `true` to stop.
pub fn close(
    alg: &Algebra,
    width: usize,
    seeds: &[Vec<usize>],
    limits: &Limits,
    observe: &mut dyn FnMut(usize, &[u32]) -> bool,
) -> Result<Closure> {
    let n = alg.size();
    let mut cl = Closure {
        width,
        data: Vec::new(),
        index: Index::new(n, width),
        origins: if limits.provenance { Some(Vec::new()) } else { None },
        stopped: false,
    };
    let mut tmp: Vec<u32> = vec![0; width];
    for (s, seed) in seeds.iter().enumerate() {
        debug_assert_eq!(seed.len(), width);
        for (c, &x) in seed.iter().enumerate() {
            tmp[c] = x as u32;
        }
        if push(&mut cl, &tmp, Origin::Seed(s), limits)? {
            let i = cl.len() - 1;
            if observe(i, cl.get(i)) {
                cl.stopped = true;
                return Ok(cl);
            }
        }
    }

    let ops = alg.ops();
    let mut out: Vec<u32> = vec![0; width];
    let mut i = 0;
    while i < cl.len() {
        for (oi, op) in ops.iter().enumerate() {
            let k = op.arity;
            if k == 0 {
                continue;
            }
            let strides = op.strides();
            let mut args = vec![0usize; k];
            for p in 0..k {
                if p > 0 && i == 0 {
                    break;
                }
                // positions before p range over [0,i), p is i, after p over [0,i]
                let hi: Vec<usize> = (0..k)
                    .map(|j| if j < p { i } else if j == p { 1 } else { i + 1 })
                    .collect();
                if (0..k).any(|j| j != p && hi[j] == 0) {
                    continue;
                }
                for a in args.iter_mut() {
                    *a = 0;
                }
                args[p] = i;
                'combo: loop {
                    for c in 0..width {
                        let mut idx = 0usize;
                        for j in 0..k {
                            idx += cl.data[args[j] * width + c] as usize * strides[j];
                        }
                        out[c] = op.table[idx] as u32;
                    }
                    if cl.index.get(&out).is_none() {
                        let origin = if limits.provenance {
                            Origin::Op {
                                op: oi,
                                args: args.iter().map(|&a| a as u32).collect(),
                            }
                        } else {
                            Origin::Seed(usize::MAX)
                        };
                        push(&mut cl, &out, origin, limits)?;
                        let ni = cl.len() - 1;
                        if observe(ni, cl.get(ni)) {
                            cl.stopped = true;
                            return Ok(cl);
                        }
                    }
                    let mut j = k;
                    loop {
                        if j == 0 {
                            break 'combo;
                        }
                        j -= 1;
                        if j == p {
                            continue;
                        }
                        args[j] += 1;
                        if args[j] < hi[j] {
                            break;
                        }
                        args[j] = 0;
                    }
                }
            }
        }
        i += 1;
    }
    Ok(cl)
}

fn push(cl: &mut Closure, t: &[u32], origin: Origin, limits: &Limits) -> Result<bool> {
    if cl.index.get(t).is_some() {
        return Ok(false);
    }
    if cl.len() >= limits.cap {
        return Err(Error::CapExceeded {
            cap: limits.cap_name,
            limit: limits.cap,
        });
    }
    let i = cl.len() as u32;
    cl.data.extend_from_slice(t);
    cl.index.insert(t, i);
    if let Some(o) = cl.origins.as_mut() {
        o.push(origin);
    }
    Ok(true)
}

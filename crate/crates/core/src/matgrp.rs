//! Matrices over Z/2^N and finite subgroups of GL(2, Z/2^N).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring2::{inv_odd, mask, reduce_i64, Residue};

/// Highest level a [`Mat2`] can carry.
pub const MAX_LEVEL: u32 = 16;

/// Closures stop with [`Error::TooLarge`] past this many elements.
pub const MAX_GROUP_ORDER: usize = 1 << 23;

/// Environment variable holding the worker count for conjugacy searches.
pub const THREADS_ENV: &str = "TWOADIC_THREADS";

/// Integer 2x2 matrix as written, row-major.
pub type IntMat = [[i64; 2]; 2];

fn check_level(level: u32) -> Result<u8> {
    if level == 0 || level > MAX_LEVEL {
        Err(Error::BadLevel(level))
    } else {
        Ok(level as u8)
    }
}

/// A 2x2 matrix over Z/2^level, stored row-major as `[a b; c d]`.
///
/// Matrices act on column vectors, so `e1` maps to `(a, c)` and `e2` to `(b, d)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mat2 {
    level: u8,
    a: u32,
    b: u32,
    c: u32,
    d: u32,
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{} {}; {} {}] mod 2^{}",
            self.a, self.b, self.c, self.d, self.level
        )
    }
}

impl Mat2 {
    pub fn new(level: u32, a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        let l = check_level(level)?;
        Ok(Mat2 {
            level: l,
            a: reduce_i64(a, level) as u32,
            b: reduce_i64(b, level) as u32,
            c: reduce_i64(c, level) as u32,
            d: reduce_i64(d, level) as u32,
        })
    }

    pub fn from_int(m: &IntMat, level: u32) -> Result<Self> {
        Self::new(level, m[0][0], m[0][1], m[1][0], m[1][1])
    }

    #[inline]
    fn raw(level: u8, a: u64, b: u64, c: u64, d: u64) -> Self {
        let m = mask(level as u32);
        Mat2 {
            level,
            a: (a & m) as u32,
            b: (b & m) as u32,
            c: (c & m) as u32,
            d: (d & m) as u32,
        }
    }

    pub fn identity(level: u32) -> Result<Self> {
        Self::new(level, 1, 0, 0, 1)
    }

    pub fn scalar(alpha: i64, level: u32) -> Result<Self> {
        Self::new(level, alpha, 0, 0, alpha)
    }

    pub fn level(&self) -> u32 {
        self.level as u32
    }

    /// Entries `(a, b, c, d)` as canonical representatives.
    pub fn entries(&self) -> (u32, u32, u32, u32) {
        (self.a, self.b, self.c, self.d)
    }

    pub fn entry_residues(&self) -> [Residue; 4] {
        let l = self.level();
        [self.a, self.b, self.c, self.d].map(|x| Residue::new(x as i64, l).expect("valid level"))
    }

    pub fn to_int(&self) -> IntMat {
        [
            [self.a as i64, self.b as i64],
            [self.c as i64, self.d as i64],
        ]
    }

    #[inline]
    pub fn det(&self) -> u32 {
        let m = mask(self.level as u32);
        ((self.a as u64 * self.d as u64).wrapping_sub(self.b as u64 * self.c as u64) & m) as u32
    }

    #[inline]
    pub fn trace(&self) -> u32 {
        ((self.a as u64 + self.d as u64) & mask(self.level as u32)) as u32
    }

    #[inline]
    pub fn is_invertible(&self) -> bool {
        self.det() & 1 == 1
    }

    pub fn is_identity(&self) -> bool {
        self.a == 1 && self.b == 0 && self.c == 0 && self.d == 1
    }

    #[inline]
    pub fn mul(&self, o: &Mat2) -> Mat2 {
        debug_assert_eq!(self.level, o.level);
        let (a, b, c, d) = (self.a as u64, self.b as u64, self.c as u64, self.d as u64);
        let (e, f, g, h) = (o.a as u64, o.b as u64, o.c as u64, o.d as u64);
        Mat2::raw(
            self.level,
            a * e + b * g,
            a * f + b * h,
            c * e + d * g,
            c * f + d * h,
        )
    }

    #[inline]
    pub fn inv(&self) -> Option<Mat2> {
        let det = self.det() as u64;
        if det & 1 == 0 {
            return None;
        }
        let l = self.level as u32;
        let di = inv_odd(det, l);
        let m = mask(l);
        Some(Mat2::raw(
            self.level,
            self.d as u64 * di,
            ((self.b as u64).wrapping_neg() & m) * di,
            ((self.c as u64).wrapping_neg() & m) * di,
            self.a as u64 * di,
        ))
    }

    pub fn pow(&self, mut e: u64) -> Mat2 {
        let mut base = *self;
        let mut acc = Mat2::raw(self.level, 1, 0, 0, 1);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative order of an invertible matrix (always 2^k or 3 * 2^k).
    pub fn order(&self) -> u64 {
        fn two_part(m: Mat2) -> Option<u64> {
            let mut x = m;
            let mut k = 1u64;
            for _ in 0..48 {
                if x.is_identity() {
                    return Some(k);
                }
                x = x.mul(&x);
                k *= 2;
            }
            None
        }
        if self.is_identity() {
            return 1;
        }
        match two_part(*self) {
            Some(k) => k,
            None => 3 * two_part(self.pow(3)).expect("element order divides 3 * 2^k"),
        }
    }

    /// `g * self * g^-1`.
    pub fn conj_by(&self, g: &Mat2) -> Mat2 {
        g.mul(self).mul(&g.inv().expect("conjugator is invertible"))
    }

    pub fn reduce(&self, n: u32) -> Result<Mat2> {
        if n == 0 || n > self.level as u32 {
            return Err(Error::BadLevel(n));
        }
        Ok(Mat2::raw(
            n as u8,
            self.a as u64,
            self.b as u64,
            self.c as u64,
            self.d as u64,
        ))
    }

    /// Same representatives read at a higher level.
    pub fn lift(&self, n: u32) -> Result<Mat2> {
        let l = check_level(n)?;
        Ok(Mat2 { level: l, ..*self })
    }

    pub fn apply(&self, v: &Vec2) -> Vec2 {
        debug_assert_eq!(self.level, v.level);
        let (x, y) = (v.x as u64, v.y as u64);
        Vec2::raw(
            self.level,
            self.a as u64 * x + self.b as u64 * y,
            self.c as u64 * x + self.d as u64 * y,
        )
    }

    /// Matrix with columns `p` and `q`.
    pub fn from_columns(p: &Vec2, q: &Vec2) -> Mat2 {
        Mat2::raw(p.level, p.x as u64, q.x as u64, p.y as u64, q.y as u64)
    }
}

impl Serialize for Mat2 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_int().serialize(s)
    }
}

/// A vector in (Z/2^level)^2.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Vec2 {
    level: u8,
    x: u32,
    y: u32,
}

impl fmt::Debug for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}) mod 2^{}", self.x, self.y, self.level)
    }
}

impl Vec2 {
    pub fn new(level: u32, x: i64, y: i64) -> Result<Self> {
        let l = check_level(level)?;
        Ok(Vec2 {
            level: l,
            x: reduce_i64(x, level) as u32,
            y: reduce_i64(y, level) as u32,
        })
    }

    #[inline]
    fn raw(level: u8, x: u64, y: u64) -> Self {
        let m = mask(level as u32);
        Vec2 {
            level,
            x: (x & m) as u32,
            y: (y & m) as u32,
        }
    }

    pub fn level(&self) -> u32 {
        self.level as u32
    }

    pub fn coords(&self) -> (u32, u32) {
        (self.x, self.y)
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0 && self.y == 0
    }

    /// Exponent k of the order 2^k of the vector.
    pub fn order_exp(&self) -> u32 {
        let v = |t: u32| {
            if t == 0 {
                self.level as u32
            } else {
                t.trailing_zeros()
            }
        };
        self.level as u32 - v(self.x).min(v(self.y))
    }

    pub fn scale(&self, s: u64) -> Vec2 {
        Vec2::raw(self.level, self.x as u64 * s, self.y as u64 * s)
    }

    pub fn add(&self, o: &Vec2) -> Vec2 {
        Vec2::raw(
            self.level,
            self.x as u64 + o.x as u64,
            self.y as u64 + o.y as u64,
        )
    }

    pub fn reduce(&self, n: u32) -> Result<Vec2> {
        if n == 0 || n > self.level as u32 {
            return Err(Error::BadLevel(n));
        }
        Ok(Vec2::raw(n as u8, self.x as u64, self.y as u64))
    }

    pub fn lift(&self, n: u32) -> Result<Vec2> {
        let l = check_level(n)?;
        Ok(Vec2 { level: l, ..*self })
    }

    /// Whether `w` lies in the cyclic subgroup generated by `self`.
    pub fn spans(&self, w: &Vec2) -> bool {
        if self.is_zero() {
            return w.is_zero();
        }
        let l = self.level as u32;
        let e = l - self.order_exp();
        let (vi, wi) = if self.x != 0 && self.x.trailing_zeros() == e {
            (self.x, w.x)
        } else {
            (self.y, w.y)
        };
        if wi != 0 && wi.trailing_zeros() < e {
            return false;
        }
        let k = l - e;
        let u = inv_odd((vi >> e) as u64, k.max(1));
        let t = ((wi >> e) as u64 * u) & mask(k);
        self.scale(t) == *w
    }
}

/// Invariant-factor type `(2^a, 2^b)`, `a <= b`, of a subgroup of (Z/2^N)^2 given by its elements.
pub fn module_type(elements: &[Vec2]) -> (u64, u64) {
    let order = elements.len() as u64;
    let max_exp = elements.iter().map(|v| v.order_exp()).max().unwrap_or(0);
    let log = order.trailing_zeros();
    let b = 1u64 << max_exp;
    let a = 1u64 << (log - max_exp);
    (a, b)
}

/// A finite subgroup of GL(2, Z/2^N) with its element set materialized.
#[derive(Clone)]
pub struct FiniteMatGroup {
    level: u8,
    generators: Vec<Mat2>,
    elements: Vec<Mat2>,
    set: FxHashSet<Mat2>,
}

impl fmt::Debug for FiniteMatGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteMatGroup")
            .field("level", &self.level)
            .field("order", &self.order())
            .field("generators", &self.generators)
            .finish()
    }
}

impl PartialEq for FiniteMatGroup {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level && self.elements == other.elements
    }
}

impl Eq for FiniteMatGroup {}

/// Subgroup of GL(2, Z/2^level) generated by `gens`.
pub fn closure(gens: &[Mat2], level: u32) -> Result<FiniteMatGroup> {
    let l = check_level(level)?;
    for g in gens {
        if g.level != l {
            return Err(Error::LevelMismatch(g.level, l));
        }
        if !g.is_invertible() {
            return Err(Error::NotInvertible(*g));
        }
    }
    let id = Mat2::raw(l, 1, 0, 0, 1);
    let mut gs: Vec<Mat2> = Vec::new();
    for g in gens {
        if !gs.contains(g) {
            gs.push(*g);
        }
    }
    let mut set = FxHashSet::default();
    set.insert(id);
    let mut elements = vec![id];
    let mut i = 0;
    while i < elements.len() {
        let e = elements[i];
        for g in &gs {
            let p = e.mul(g);
            if set.insert(p) {
                elements.push(p);
                if elements.len() > MAX_GROUP_ORDER {
                    return Err(Error::TooLarge(format!(
                        "closure at level {level} exceeds {MAX_GROUP_ORDER} elements"
                    )));
                }
            }
        }
        i += 1;
    }
    elements.sort_unstable();
    Ok(FiniteMatGroup {
        level: l,
        generators: gens.to_vec(),
        elements,
        set,
    })
}

/// Closure of integer generators reduced to `level`.
pub fn closure_int(gens: &[IntMat], level: u32) -> Result<FiniteMatGroup> {
    let ms = gens
        .iter()
        .map(|m| Mat2::from_int(m, level))
        .collect::<Result<Vec<_>>>()?;
    closure(&ms, level)
}

impl FiniteMatGroup {
    /// Group from a known element set and generators; the caller guarantees consistency.
    pub(crate) fn from_parts(level: u8, generators: Vec<Mat2>, mut elements: Vec<Mat2>) -> Self {
        elements.sort_unstable();
        elements.dedup();
        let set = elements.iter().copied().collect();
        FiniteMatGroup {
            level,
            generators,
            elements,
            set,
        }
    }

    /// Group from a set of elements known to be closed, with a greedily chosen generating set.
    pub fn from_elements(level: u32, elements: Vec<Mat2>) -> Result<Self> {
        let l = check_level(level)?;
        let mut sorted = elements;
        sorted.sort_unstable();
        sorted.dedup();
        let mut gens = Vec::new();
        let mut cur = closure(&[], level)?;
        for e in &sorted {
            if cur.order() == sorted.len() {
                break;
            }
            if !cur.contains(e) {
                gens.push(*e);
                cur = closure(&gens, level)?;
            }
        }
        if cur.elements != sorted {
            return Err(Error::InvalidCharacter(
                "element set is not closed under multiplication".into(),
            ));
        }
        Ok(FiniteMatGroup::from_parts(l, gens, sorted))
    }

    pub fn trivial(level: u32) -> Result<Self> {
        closure(&[], level)
    }

    pub fn level(&self) -> u32 {
        self.level as u32
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn generators(&self) -> &[Mat2] {
        &self.generators
    }

    /// Elements in ascending `(a, b, c, d)` order.
    pub fn elements(&self) -> &[Mat2] {
        &self.elements
    }

    pub fn contains(&self, m: &Mat2) -> bool {
        self.set.contains(m)
    }

    pub fn identity(&self) -> Mat2 {
        Mat2::raw(self.level, 1, 0, 0, 1)
    }

    pub fn minus_id(&self) -> Mat2 {
        Mat2::raw(self.level, u64::MAX, 0, 0, u64::MAX)
    }

    pub fn contains_scalar(&self, alpha: i64) -> Result<bool> {
        if alpha % 2 == 0 {
            return Err(Error::EvenScalar(alpha));
        }
        Ok(self.contains(&Mat2::scalar(alpha, self.level())?))
    }

    pub fn contains_minus_id(&self) -> bool {
        self.contains(&self.minus_id())
    }

    pub fn is_subgroup_of(&self, other: &FiniteMatGroup) -> bool {
        self.level == other.level && self.elements.iter().all(|e| other.contains(e))
    }

    /// Image of the group modulo 2^n.
    pub fn reduce_group(&self, n: u32) -> Result<FiniteMatGroup> {
        if n == 0 || n > self.level() {
            return Err(Error::BadLevel(n));
        }
        if n == self.level() {
            return Ok(self.clone());
        }
        let gens = self
            .generators
            .iter()
            .map(|g| g.reduce(n))
            .collect::<Result<Vec<_>>>()?;
        let elements = self
            .elements
            .iter()
            .map(|g| g.reduce(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(FiniteMatGroup::from_parts(n as u8, gens, elements))
    }

    /// `<G, extra>`.
    pub fn join(&self, extra: &[Mat2]) -> Result<FiniteMatGroup> {
        let mut gens = self.generators.clone();
        gens.extend_from_slice(extra);
        closure(&gens, self.level())
    }

    pub fn join_minus_id(&self) -> Result<FiniteMatGroup> {
        if self.contains_minus_id() {
            return Ok(self.clone());
        }
        self.join(&[self.minus_id()])
    }

    /// `g G g^-1`.
    pub fn conjugate_by(&self, g: &Mat2) -> Result<FiniteMatGroup> {
        let gi = g.inv().ok_or(Error::NotInvertible(*g))?;
        let c = |h: &Mat2| g.mul(h).mul(&gi);
        Ok(FiniteMatGroup::from_parts(
            self.level,
            self.generators.iter().map(c).collect(),
            self.elements.iter().map(c).collect(),
        ))
    }

    pub fn det_image(&self) -> BTreeSet<u32> {
        self.elements.iter().map(|g| g.det()).collect()
    }

    pub fn det_surjective(&self) -> bool {
        self.det_image().len() == 1usize << (self.level - 1)
    }

    /// Vectors fixed by every element, in ascending order.
    pub fn fixed_submodule(&self) -> Vec<Vec2> {
        let n = 1u64 << self.level;
        let mut out = Vec::new();
        for x in 0..n {
            for y in 0..n {
                let v = Vec2::raw(self.level, x, y);
                if self.generators.iter().all(|g| g.apply(&v) == v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Invariant-factor type of the fixed submodule.
    pub fn fixed_type(&self) -> (u64, u64) {
        module_type(&self.fixed_submodule())
    }

    /// Multiset of `(trace, det, element order)` over all elements.
    pub fn class_signature(&self) -> BTreeMap<(u32, u32, u64), usize> {
        let mut m = BTreeMap::new();
        for g in &self.elements {
            *m.entry((g.trace(), g.det(), g.order())).or_insert(0) += 1;
        }
        m
    }

    pub fn to_json(&self, name: Option<&str>) -> GroupJson {
        GroupJson {
            name: name.map(str::to_string),
            level: self.level(),
            generators: self.generators.iter().map(|g| g.to_int()).collect(),
        }
    }
}

/// Serialized group: `{"name": ?, "level": N, "generators": [[[a,b],[c,d]], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub level: u32,
    pub generators: Vec<IntMat>,
}

impl GroupJson {
    pub fn to_group(&self) -> Result<FiniteMatGroup> {
        closure_int(&self.generators, self.level)
    }
}

pub fn thread_pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let n = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .unwrap_or(1);
        if n <= 1 {
            None
        } else {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()
        }
    })
    .as_ref()
}

/// First `x` in the fixed enumeration of GL(2, Z/2^level) (identity, then ascending
/// `(a, b, c, d)`) satisfying `pred`.
pub fn first_in_gl2<F>(level: u32, pred: F) -> Result<Option<Mat2>>
where
    F: Fn(&Mat2) -> bool + Sync,
{
    let l = check_level(level)?;
    let id = Mat2::raw(l, 1, 0, 0, 1);
    if pred(&id) {
        return Ok(Some(id));
    }
    let n = 1u64 << level;
    let scan = |a: u64| -> Option<Mat2> {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    if (a * d).wrapping_sub(b * c) & 1 == 0 {
                        continue;
                    }
                    let x = Mat2::raw(l, a, b, c, d);
                    if pred(&x) {
                        return Some(x);
                    }
                }
            }
        }
        None
    };
    Ok(match thread_pool() {
        Some(p) => p.install(|| (0..n).into_par_iter().find_map_first(scan)),
        None => (0..n).find_map(scan),
    })
}

fn maps_into(x: &Mat2, gens: &[Mat2], target: &FiniteMatGroup) -> bool {
    let xi = match x.inv() {
        Some(xi) => xi,
        None => return false,
    };
    gens.iter().all(|h| target.contains(&x.mul(h).mul(&xi)))
}

/// Invariants that conjugate groups share.
pub fn conjugacy_invariants_match(g1: &FiniteMatGroup, g2: &FiniteMatGroup) -> bool {
    g1.level == g2.level
        && g1.order() == g2.order()
        && g1.det_image() == g2.det_image()
        && g1.class_signature() == g2.class_signature()
        && g1.fixed_type() == g2.fixed_type()
}

/// Returns `g` with `g G1 g^-1 = G2`, the first one in the fixed enumeration order.
pub fn is_conjugate(g1: &FiniteMatGroup, g2: &FiniteMatGroup) -> Result<Option<Mat2>> {
    if g1.level != g2.level {
        return Err(Error::LevelMismatch(g1.level, g2.level));
    }
    if !conjugacy_invariants_match(g1, g2) {
        return Ok(None);
    }
    let gens = g1.generators.clone();
    first_in_gl2(g1.level(), |x| maps_into(x, &gens, g2))
}

/// Returns `g` with `g G1 g^-1` contained in `G2`.
pub fn conjugate_into(g1: &FiniteMatGroup, g2: &FiniteMatGroup) -> Result<Option<Mat2>> {
    if g1.level != g2.level {
        return Err(Error::LevelMismatch(g1.level, g2.level));
    }
    if !g2.order().is_multiple_of(g1.order()) {
        return Ok(None);
    }
    let s1 = g1.class_signature();
    let s2 = g2.class_signature();
    if s1.iter().any(|(k, &n)| s2.get(k).copied().unwrap_or(0) < n) {
        return Ok(None);
    }
    let gens = g1.generators.clone();
    first_in_gl2(g1.level(), |x| maps_into(x, &gens, g2))
}

/// The subgroup generated by all squares (it contains all commutators).
pub fn frattini2(g: &FiniteMatGroup) -> Result<FiniteMatGroup> {
    let mut squares: Vec<Mat2> = g.elements.iter().map(|x| x.mul(x)).collect();
    squares.sort_unstable();
    squares.dedup();
    let mut gens = Vec::new();
    let mut cur = closure(&[], g.level())?;
    for s in squares {
        if !cur.contains(&s) {
            gens.push(s);
            cur = closure(&gens, g.level())?;
        }
    }
    Ok(cur)
}

/// The elementary abelian quotient `G / <g^2>` with coordinates for every element.
pub struct Exp2Quotient {
    pub phi: FiniteMatGroup,
    /// Coset representatives forming a basis of the quotient.
    pub basis: Vec<Mat2>,
    coords: FxHashMap<Mat2, u64>,
}

impl Exp2Quotient {
    pub fn new(g: &FiniteMatGroup) -> Result<Self> {
        let phi = frattini2(g)?;
        let mut basis: Vec<Mat2> = Vec::new();
        // coset representative -> coordinate vector, for the span built so far
        let mut coords: FxHashMap<Mat2, u64> = FxHashMap::default();
        for p in phi.elements() {
            coords.insert(*p, 0);
        }
        let candidates = g.generators.iter().chain(g.elements.iter());
        for x in candidates {
            if coords.contains_key(x) {
                continue;
            }
            let bit = 1u64 << basis.len();
            basis.push(*x);
            let existing: Vec<(Mat2, u64)> = coords.iter().map(|(k, v)| (*k, *v)).collect();
            for (e, v) in existing {
                coords.insert(e.mul(x), v | bit);
            }
            if coords.len() == g.order() {
                break;
            }
        }
        debug_assert_eq!(coords.len(), g.order());
        Ok(Exp2Quotient { phi, basis, coords })
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn coord(&self, x: &Mat2) -> u64 {
        self.coords[x]
    }
}

/// A homomorphism `G -> {+1, -1}`.
#[derive(Clone, Debug)]
pub struct Character {
    level: u8,
    /// Sign on each generator of the group it was built for.
    signs: Vec<i8>,
    negative: FxHashSet<Mat2>,
}

impl Character {
    /// Extends generator signs to the whole group, failing if that is not a homomorphism.
    pub fn from_generator_signs(g: &FiniteMatGroup, signs: &[i8]) -> Result<Self> {
        if signs.len() != g.generators.len() {
            return Err(Error::InvalidCharacter(format!(
                "{} signs for {} generators",
                signs.len(),
                g.generators.len()
            )));
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidCharacter("signs must be +1 or -1".into()));
        }
        let mut value: FxHashMap<Mat2, i8> = FxHashMap::default();
        let id = g.identity();
        value.insert(id, 1);
        let mut queue = VecDeque::from([id]);
        while let Some(e) = queue.pop_front() {
            let s = value[&e];
            for (gen, gs) in g.generators.iter().zip(signs) {
                let p = e.mul(gen);
                let want = s * gs;
                match value.get(&p) {
                    Some(&have) if have != want => {
                        return Err(Error::InvalidCharacter(format!(
                            "sign of {p} is forced to both +1 and -1"
                        )))
                    }
                    Some(_) => {}
                    None => {
                        value.insert(p, want);
                        queue.push_back(p);
                    }
                }
            }
        }
        let negative = value
            .into_iter()
            .filter(|(_, s)| *s < 0)
            .map(|(m, _)| m)
            .collect();
        Ok(Character {
            level: g.level,
            signs: signs.to_vec(),
            negative,
        })
    }

    pub fn trivial(g: &FiniteMatGroup) -> Self {
        Character {
            level: g.level,
            signs: vec![1; g.generators.len()],
            negative: FxHashSet::default(),
        }
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn is_trivial(&self) -> bool {
        self.negative.is_empty()
    }

    pub fn value(&self, x: &Mat2) -> i8 {
        if self.negative.contains(x) {
            -1
        } else {
            1
        }
    }
}

/// All characters of `G` (including the trivial one), one per functional on `G / <g^2>`.
pub fn characters(g: &FiniteMatGroup) -> Result<Vec<Character>> {
    let q = Exp2Quotient::new(g)?;
    let r = q.rank();
    let mut out = Vec::with_capacity(1 << r);
    for lambda in 0u64..(1u64 << r) {
        let negative: FxHashSet<Mat2> = g
            .elements
            .iter()
            .filter(|x| (q.coord(x) & lambda).count_ones() % 2 == 1)
            .copied()
            .collect();
        let signs = g
            .generators
            .iter()
            .map(|x| if negative.contains(x) { -1 } else { 1 })
            .collect();
        out.push(Character {
            level: g.level,
            signs,
            negative,
        });
    }
    Ok(out)
}

/// Every index-2 subgroup, as kernels of the nonzero functionals on `G / <g^2>`.
pub fn index2_subgroups(g: &FiniteMatGroup) -> Result<Vec<FiniteMatGroup>> {
    let q = Exp2Quotient::new(g)?;
    let r = q.rank();
    let mut out = Vec::new();
    for lambda in 1u64..(1u64 << r) {
        let elements: Vec<Mat2> = g
            .elements
            .iter()
            .filter(|x| (q.coord(x) & lambda).count_ones() % 2 == 0)
            .copied()
            .collect();
        let mut gens: Vec<Mat2> = q.phi.generators().to_vec();
        let pivot = (0..r).find(|i| lambda >> i & 1 == 1).expect("lambda != 0");
        for (i, b) in q.basis.iter().enumerate() {
            if lambda >> i & 1 == 0 {
                gens.push(*b);
            } else if i != pivot {
                gens.push(q.basis[pivot].mul(b));
            }
        }
        out.push(FiniteMatGroup::from_parts(g.level, gens, elements));
    }
    Ok(out)
}

/// `{chi(g) g : g in G}`.
pub fn twist_by_character(g: &FiniteMatGroup, chi: &Character) -> Result<FiniteMatGroup> {
    if chi.level != g.level || chi.signs.len() != g.generators.len() {
        return Err(Error::InvalidCharacter(
            "character belongs to another group".into(),
        ));
    }
    let m1 = g.minus_id();
    let tw = |x: &Mat2| if chi.value(x) < 0 { x.mul(&m1) } else { *x };
    for (x, s) in g.generators.iter().zip(&chi.signs) {
        if chi.value(x) != *s {
            return Err(Error::InvalidCharacter(format!("sign mismatch on {x}")));
        }
    }
    Ok(FiniteMatGroup::from_parts(
        g.level,
        g.generators.iter().map(tw).collect(),
        g.elements.iter().map(tw).collect(),
    ))
}

/// Quadratic twists of `G` up to conjugacy: `<G, -Id>` and its index-2 subgroups without `-Id`.
pub fn twist_class_group(g: &FiniteMatGroup) -> Result<Vec<FiniteMatGroup>> {
    if g.order() == 1 {
        return Ok(vec![g.clone()]);
    }
    let h = g.join_minus_id()?;
    let mut out = vec![h.clone()];
    for k in index2_subgroups(&h)? {
        if k.contains_minus_id() {
            continue;
        }
        let mut seen = false;
        for o in out.iter().skip(1) {
            if is_conjugate(&k, o)?.is_some() {
                seen = true;
                break;
            }
        }
        if !seen {
            out.push(k);
        }
    }
    Ok(out)
}

pub fn twist_class(spec: &ImageSpec, level: u32) -> Result<Vec<FiniteMatGroup>> {
    twist_class_group(&spec.at_level(level)?)
}

/// Group in which an image is measured when deciding stability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ambient {
    #[default]
    Gl2,
    Normalizer {
        delta: i64,
        phi: i64,
    },
}

impl Ambient {
    /// `|A(2^(k+1))| / |A(2^k)|`.
    pub fn level_ratio(&self, k: u32) -> u64 {
        match self {
            Ambient::Gl2 => 16,
            Ambient::Normalizer { delta, phi } => {
                let lo = crate::cmcat::normalizer_order(*delta, *phi, k);
                let hi = crate::cmcat::normalizer_order(*delta, *phi, k + 1);
                hi / lo
            }
        }
    }
}

/// A profinite image candidate: integer generators plus a declared stable level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub int_generators: Vec<IntMat>,
    #[serde(default = "default_stable_level")]
    pub stable_level: u32,
    #[serde(default)]
    pub ambient: Ambient,
}

fn default_stable_level() -> u32 {
    3
}

impl ImageSpec {
    pub fn new(name: Option<&str>, int_generators: Vec<IntMat>) -> Self {
        ImageSpec {
            name: name.map(str::to_string),
            int_generators,
            stable_level: 3,
            ambient: Ambient::Gl2,
        }
    }

    pub fn with_ambient(mut self, ambient: Ambient) -> Self {
        self.ambient = ambient;
        self
    }

    pub fn at_level(&self, level: u32) -> Result<FiniteMatGroup> {
        closure_int(&self.int_generators, level)
    }
}

/// Whether the image one level up is the full preimage of its reduction inside the ambient group.
pub fn is_stable_level(spec: &ImageSpec, k: u32) -> Result<bool> {
    let lo = spec.at_level(k)?.order() as u64;
    let hi = spec.at_level(k + 1)?.order() as u64;
    Ok(hi == spec.ambient.level_ratio(k) * lo)
}

/// The same test measured against all of GL(2).
pub fn is_stable_level_gl2(spec: &ImageSpec, k: u32) -> Result<bool> {
    let lo = spec.at_level(k)?.order() as u64;
    let hi = spec.at_level(k + 1)?.order() as u64;
    Ok(hi == 16 * lo)
}

/// `|GL(2, Z/2^level)|`.
pub fn gl2_order(level: u32) -> u64 {
    6 * 16u64.pow(level - 1)
}

/// Generators of GL(2, Z/2^level).
pub fn gl2_generators(level: u32) -> Result<Vec<Mat2>> {
    let mut gens = vec![Mat2::new(level, 0, 1, 1, 0)?, Mat2::new(level, 1, 1, 0, 1)?];
    if level >= 2 {
        gens.push(Mat2::new(level, 3, 0, 0, 1)?);
        gens.push(Mat2::new(level, 5, 0, 0, 1)?);
    }
    Ok(gens)
}

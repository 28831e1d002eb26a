//! Torsion, rational cyclic subgroups, isogeny pushforward and 2-power isogeny graphs.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matgrp::{
    closure, is_conjugate, is_stable_level, is_stable_level_gl2, module_type, FiniteMatGroup,
    ImageSpec, Mat2, Vec2,
};
use crate::ring2::inv_odd;

/// `Z/n1 x Z/n2` with `n1 | n2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TorsionType {
    pub n1: u64,
    pub n2: u64,
}

/// 2-primary torsion structures that occur over Q.
pub const MAZUR_2_PRIMARY: [(u64, u64); 7] =
    [(1, 1), (1, 2), (1, 4), (1, 8), (2, 2), (2, 4), (2, 8)];

impl TorsionType {
    pub fn new(n1: u64, n2: u64) -> Self {
        TorsionType { n1, n2 }
    }

    pub fn in_mazur_list(&self) -> bool {
        MAZUR_2_PRIMARY.contains(&(self.n1, self.n2))
    }

    /// 2-part of a printed torsion group such as `[6]` or `[2, 2]`.
    pub fn two_part_of(printed: &[u64]) -> Option<Self> {
        let parts: Vec<u64> = printed
            .iter()
            .map(|&n| if n == 0 { 0 } else { 1 << n.trailing_zeros() })
            .collect();
        match parts.as_slice() {
            [] => Some(TorsionType::new(1, 1)),
            [a] => Some(TorsionType::new(1, *a)),
            [a, b] if b % a == 0 => Some(TorsionType::new(*a, *b)),
            _ => None,
        }
    }
}

impl fmt::Display for TorsionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n1, self.n2)
    }
}

impl Serialize for TorsionType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.n1, self.n2].serialize(s)
    }
}

impl<'de> Deserialize<'de> for TorsionType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [n1, n2] = <[u64; 2]>::deserialize(d)?;
        Ok(TorsionType { n1, n2 })
    }
}

/// Vectors fixed by the whole group and the type of the module they form.
pub fn fixed_submodule(g: &FiniteMatGroup) -> (TorsionType, Vec<Vec2>) {
    let v = g.fixed_submodule();
    let (a, b) = module_type(&v);
    (TorsionType::new(a, b), v)
}

/// Rational 2-power torsion, certified by agreement with the image one level down.
pub fn torsion_from_image(g: &FiniteMatGroup) -> Result<TorsionType> {
    if g.level() < 2 {
        return Err(Error::NotStabilized(
            "torsion needs level at least 2".into(),
        ));
    }
    let (t, _) = fixed_submodule(g);
    let (lower, _) = fixed_submodule(&g.reduce_group(g.level() - 1)?);
    if t != lower {
        return Err(Error::NotStabilized(format!(
            "fixed points {t} at level {} but {lower} at level {}",
            g.level(),
            g.level() - 1
        )));
    }
    Ok(t)
}

/// A cyclic subgroup of order 2^order_exp stable under the group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RationalCyclic {
    pub level: u32,
    pub generator: Vec2,
    pub order_exp: u32,
}

impl RationalCyclic {
    pub fn new(generator: Vec2) -> Self {
        RationalCyclic {
            level: generator.level(),
            generator,
            order_exp: generator.order_exp(),
        }
    }

    pub fn order(&self) -> u64 {
        1 << self.order_exp
    }

    pub fn is_stable_under(&self, g: &FiniteMatGroup) -> bool {
        g.generators()
            .iter()
            .all(|h| self.generator.spans(&h.apply(&self.generator)))
    }
}

/// Normalized generators of the cyclic subgroups of order exactly 2^j in (Z/2^j)^2.
fn cyclic_reps(j: u32) -> Vec<Vec2> {
    let n = 1i64 << j;
    let mut out: Vec<Vec2> = (0..n).map(|y| Vec2::new(j, 1, y).unwrap()).collect();
    out.extend((0..n).step_by(2).map(|x| Vec2::new(j, x, 1).unwrap()));
    out.sort();
    out
}

fn stable_cyclic(g: &FiniteMatGroup, max_exp: u32) -> Result<Vec<RationalCyclic>> {
    let level = g.level();
    let mut out = vec![RationalCyclic::new(Vec2::new(level, 0, 0)?)];
    for j in 1..=max_exp.min(level) {
        let gj = g.reduce_group(j)?;
        for rep in cyclic_reps(j) {
            if gj.generators().iter().all(|h| rep.spans(&h.apply(&rep))) {
                let (x, y) = rep.coords();
                let s = 1i64 << (level - j);
                out.push(RationalCyclic::new(Vec2::new(
                    level,
                    x as i64 * s,
                    y as i64 * s,
                )?));
            }
        }
    }
    Ok(out)
}

/// Stable cyclic subgroups of order at most 2^max_exp, the trivial one first.
pub fn rational_cyclic_subgroups(g: &FiniteMatGroup, max_exp: u32) -> Result<Vec<RationalCyclic>> {
    if max_exp >= g.level() {
        return Err(Error::NotStabilized(format!(
            "order 2^{max_exp} needs level above {}",
            g.level()
        )));
    }
    let here = stable_cyclic(g, max_exp)?;
    let below = stable_cyclic(&g.reduce_group(g.level() - 1)?, max_exp)?;
    if here.len() != below.len() {
        return Err(Error::NotStabilized(format!(
            "{} subgroups at level {} but {} one level down",
            here.len(),
            g.level(),
            below.len()
        )));
    }
    Ok(here)
}

/// Number of stable cyclic 2-power subgroups of the group (trivial included).
pub fn c2_count_group(g: &FiniteMatGroup) -> Result<usize> {
    let n = g.level();
    if n < 2 {
        return Err(Error::NotStabilized("C2 needs level at least 2".into()));
    }
    let here = stable_cyclic(g, n)?.len();
    let below = stable_cyclic(&g.reduce_group(n - 1)?, n - 1)?.len();
    if here != below {
        return Err(Error::NotStabilized(format!(
            "a stable cyclic subgroup of order 2^{n} exists; raise the level"
        )));
    }
    if here > 8 {
        return Err(Error::KenkuViolation(here));
    }
    Ok(here)
}

pub fn c2_count(spec: &ImageSpec, level: u32) -> Result<usize> {
    if level < spec.stable_level + 2 {
        return Err(Error::NotStabilized(format!(
            "C2 needs level at least {}",
            spec.stable_level + 2
        )));
    }
    c2_count_group(&spec.at_level(level)?)
}

fn check_stable(g: &FiniteMatGroup, k: &RationalCyclic) -> Result<()> {
    if k.level != g.level() {
        return Err(Error::LevelMismatch(k.level as u8, g.level() as u8));
    }
    if !k.is_stable_under(g) {
        return Err(Error::NotStable(format!(
            "<{}> is moved by the group",
            k.generator
        )));
    }
    Ok(())
}

/// Basis `{P, Q}` (as the columns of the returned matrix) with `2^m Q` generating `K`.
pub fn adapt_basis(g: &FiniteMatGroup, k: &RationalCyclic) -> Result<Mat2> {
    check_stable(g, k)?;
    let level = g.level();
    let r = k.order_exp;
    if r == 0 {
        return Ok(g.identity());
    }
    let m = level - r;
    let (x, y) = k.generator.coords();
    let (x, y) = ((x >> m) as u64, (y >> m) as u64);
    let q = if x & 1 == 1 {
        let u = inv_odd(x, r);
        Vec2::new(level, 1, ((y * u) & ((1 << r) - 1)) as i64)?
    } else {
        let u = inv_odd(y, r);
        Vec2::new(level, ((x * u) & ((1 << r) - 1)) as i64, 1)?
    };
    let n = 1i64 << level;
    for px in 0..n {
        for py in 0..n {
            let p = Vec2::new(level, px, py)?;
            let b = Mat2::from_columns(&p, &q);
            if b.is_invertible() {
                return Ok(b);
            }
        }
    }
    unreachable!("a vector with a unit coordinate always has a completion")
}

/// Whether `b` is an admissible adapted basis for `(G, K)`.
pub fn is_adapted_basis(g: &FiniteMatGroup, k: &RationalCyclic, b: &Mat2) -> bool {
    let r = k.order_exp;
    let m = g.level() - r;
    let bi = match b.inv() {
        Some(bi) => bi,
        None => return false,
    };
    let (_, qx, _, qy) = b.entries();
    let q = Vec2::new(g.level(), qx as i64, qy as i64).unwrap();
    let q2 = q.scale(1 << m);
    if !(q2.spans(&k.generator) && k.generator.spans(&q2)) {
        return false;
    }
    let mask = (1u32 << r) - 1;
    g.generators()
        .iter()
        .all(|h| bi.mul(h).mul(b).entries().1 & mask == 0)
}

/// Image of `G` on `E/K` in the basis induced by `b`.
pub fn pushforward_with_basis(
    g: &FiniteMatGroup,
    k: &RationalCyclic,
    b: &Mat2,
) -> Result<FiniteMatGroup> {
    check_stable(g, k)?;
    let level = g.level();
    let r = k.order_exp;
    if level <= r {
        return Err(Error::LevelExhausted(format!(
            "kernel of order 2^{r} leaves nothing of level {level}"
        )));
    }
    if !is_adapted_basis(g, k, b) {
        return Err(Error::NotStable(format!(
            "{b} is not adapted to <{}>",
            k.generator
        )));
    }
    let m = level - r;
    let bi = b.inv().expect("adapted basis is invertible");
    let gens = g
        .generators()
        .iter()
        .map(|h| {
            let (a, bb, c, d) = bi.mul(h).mul(b).entries();
            Mat2::new(m, a as i64, (bb >> r) as i64, (c as i64) << r, d as i64)
        })
        .collect::<Result<Vec<_>>>()?;
    closure(&gens, m)
}

/// Image of `G` (level m + r) on the quotient by `K` (order 2^r), at level m.
pub fn pushforward(g: &FiniteMatGroup, k: &RationalCyclic) -> Result<FiniteMatGroup> {
    check_stable(g, k)?;
    if g.level() <= k.order_exp {
        return Err(Error::LevelExhausted(format!(
            "kernel of order 2^{} leaves nothing of level {}",
            k.order_exp,
            g.level()
        )));
    }
    let b = adapt_basis(g, k)?;
    pushforward_with_basis(g, k, &b)
}

/// Kernel of the dual isogeny on the target of a pushforward of degree 2^r, at level m.
pub fn dual_kernel(m: u32, r: u32) -> Result<RationalCyclic> {
    if r > m {
        return Err(Error::LevelExhausted(format!(
            "dual kernel of order 2^{r} needs level {r}"
        )));
    }
    Ok(RationalCyclic::new(Vec2::new(m, 1i64 << (m - r), 0)?))
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub id: usize,
    pub group: FiniteMatGroup,
    pub torsion: TorsionType,
    pub parent: Option<usize>,
    /// Kernel in the parent's coordinates that produced this vertex.
    pub kernel: Option<RationalCyclic>,
}

impl Vertex {
    pub fn level(&self) -> u32 {
        self.group.level()
    }
}

/// The 2-power isogeny graph of an image, built by pushing along rational lines.
#[derive(Debug, Clone)]
pub struct IsoGraph2 {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<(usize, usize)>,
    pub root: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Shape {
    #[serde(rename = "L1")]
    L1,
    #[serde(rename = "L2(2)")]
    L2,
    #[serde(rename = "L3(4)")]
    L3,
    #[serde(rename = "T4")]
    T4,
    #[serde(rename = "T6")]
    T6,
    #[serde(rename = "T8")]
    T8,
    #[serde(rename = "UNRECOGNIZED")]
    Unrecognized,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Shape::L1 => "L1",
            Shape::L2 => "L2(2)",
            Shape::L3 => "L3(4)",
            Shape::T4 => "T4",
            Shape::T6 => "T6",
            Shape::T8 => "T8",
            Shape::Unrecognized => "UNRECOGNIZED",
        };
        f.write_str(s)
    }
}

/// Smallest working level accepted by [`isogeny_graph2`].
pub const GRAPH_MIN_LEVEL: u32 = 5;

/// Lowest level at which a vertex may still be labelled.
pub const VERTEX_MIN_LEVEL: u32 = 3;

pub fn isogeny_graph2(spec: &ImageSpec, working_level: u32) -> Result<IsoGraph2> {
    if working_level < GRAPH_MIN_LEVEL {
        return Err(Error::LevelExhausted(format!(
            "graph construction needs level at least {GRAPH_MIN_LEVEL}"
        )));
    }
    isogeny_graph2_group(&spec.at_level(working_level)?)
}

/// Breadth-first search from `root` along stable lines, never stepping back along a dual.
pub fn isogeny_graph2_group(root: &FiniteMatGroup) -> Result<IsoGraph2> {
    let mut vertices = vec![Vertex {
        id: 0,
        group: root.clone(),
        torsion: torsion_from_image(root)?,
        parent: None,
        kernel: None,
    }];
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        let g = vertices[v].group.clone();
        let back = match vertices[v].parent {
            Some(_) => Some(dual_kernel(g.level(), 1)?),
            None => None,
        };
        for k in rational_cyclic_subgroups(&g, 1)? {
            if k.order_exp != 1 || Some(k) == back {
                continue;
            }
            if g.level() <= VERTEX_MIN_LEVEL {
                return Err(Error::LevelExhausted(format!(
                    "vertex {v} at level {} has a further 2-isogeny",
                    g.level()
                )));
            }
            let w = pushforward(&g, &k)?;
            let id = vertices.len();
            if id >= 8 {
                return Err(Error::KenkuViolation(id + 1));
            }
            vertices.push(Vertex {
                id,
                torsion: torsion_from_image(&w)?,
                group: w,
                parent: Some(v),
                kernel: Some(k),
            });
            edges.push((v, id));
            queue.push_back(id);
        }
    }
    Ok(IsoGraph2 {
        vertices,
        edges,
        root: 0,
    })
}

impl IsoGraph2 {
    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|(a, b)| *a == v || *b == v)
            .count()
    }

    pub fn torsion_multiset(&self) -> Vec<TorsionType> {
        let mut t: Vec<TorsionType> = self.vertices.iter().map(|v| v.torsion).collect();
        t.sort();
        t
    }

    /// Pairs of vertices whose images are conjugate at their common level.
    pub fn conjugate_pairs(&self) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        for i in 0..self.vertices.len() {
            for j in i + 1..self.vertices.len() {
                let n = self.vertices[i].level().min(self.vertices[j].level());
                let a = self.vertices[i].group.reduce_group(n)?;
                let b = self.vertices[j].group.reduce_group(n)?;
                if is_conjugate(&a, &b)?.is_some() {
                    out.push((i, j));
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "shape": classify_shape(self).to_string(),
            "root": self.root,
            "vertices": self.vertices.iter().map(|v| serde_json::json!({
                "id": v.id,
                "level": v.level(),
                "order": v.group.order(),
                "torsion": v.torsion,
                "minus_id": v.group.contains_minus_id(),
                "generators": v.group.to_json(None).generators,
            })).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|(a, b)| serde_json::json!([a, b, 2])).collect::<Vec<_>>(),
        })
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph isogeny {\n");
        for v in &self.vertices {
            s.push_str(&format!(
                "  {} [label=\"{}: {}\"];\n",
                v.id, v.id, v.torsion
            ));
        }
        for (a, b) in &self.edges {
            s.push_str(&format!("  {a} -- {b} [label=\"2\"];\n"));
        }
        s.push_str("}\n");
        s
    }
}

pub fn classify_shape(graph: &IsoGraph2) -> Shape {
    let n = graph.vertices.len();
    if graph.edges.len() + 1 != n {
        return Shape::Unrecognized;
    }
    let mut deg: Vec<usize> = (0..n).map(|v| graph.degree(v)).collect();
    deg.sort_unstable();
    match n {
        1 => Shape::L1,
        2 => Shape::L2,
        3 if deg == [1, 1, 2] => Shape::L3,
        4 if deg == [1, 1, 1, 3] => Shape::T4,
        6 if deg == [1, 1, 1, 1, 3, 3] => Shape::T6,
        8 if deg == [1, 1, 1, 1, 1, 3, 3, 3] => Shape::T8,
        _ => Shape::Unrecognized,
    }
}

/// Summary of an image at one level.
#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub name: Option<String>,
    pub level: u32,
    pub order: usize,
    pub level_stable: bool,
    pub level_stable_gl2: bool,
    pub minus_id: bool,
    pub det_surjective: bool,
    pub torsion: Option<TorsionType>,
    pub c2_count: Option<usize>,
    pub cyclic_subgroups: Vec<CyclicJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CyclicJson {
    pub order: u64,
    pub generator: [u32; 2],
}

pub fn analyze(spec: &ImageSpec, level: u32) -> Result<Analysis> {
    let g = spec.at_level(level)?;
    let k = spec.stable_level;
    let cyclic = if level >= 2 {
        stable_cyclic(&g, level - 1)?
            .into_iter()
            .map(|c| CyclicJson {
                order: c.order(),
                generator: {
                    let (x, y) = c.generator.coords();
                    [x, y]
                },
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Analysis {
        name: spec.name.clone(),
        level,
        order: g.order(),
        level_stable: is_stable_level(spec, k)?,
        level_stable_gl2: is_stable_level_gl2(spec, k)?,
        minus_id: g.contains_minus_id(),
        det_surjective: g.det_surjective(),
        torsion: torsion_from_image(&g).ok(),
        c2_count: c2_count_group(&g).ok(),
        cyclic_subgroups: cyclic,
    })
}

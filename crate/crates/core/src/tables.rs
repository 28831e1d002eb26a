//! Fixture schema for CM isogeny-torsion tables and a row-by-row verifier.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmcat::{normalizer_cartan, CMOrder, Catalog};
use crate::error::{Error, Result};
use crate::galimg::{
    c2_count, pushforward, rational_cyclic_subgroups, torsion_from_image, TorsionType,
};
use crate::matgrp::{
    conjugate_into, index2_subgroups, is_conjugate, is_stable_level, FiniteMatGroup, ImageSpec,
    IntMat,
};

/// Shape of the full isogeny graph as printed, odd edges included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphType {
    L4,
    L2(u64),
    T4,
    R4(u64),
}

impl GraphType {
    pub fn vertex_count(&self) -> usize {
        match self {
            GraphType::L2(_) => 2,
            _ => 4,
        }
    }
}

impl fmt::Display for GraphType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphType::L4 => write!(f, "L4"),
            GraphType::L2(p) => write!(f, "L2({p})"),
            GraphType::T4 => write!(f, "T4"),
            GraphType::R4(n) => write!(f, "R4({n})"),
        }
    }
}

impl std::str::FromStr for GraphType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::SchemaError(format!("unknown graph type `{s}`"));
        let arg = |prefix: &str| -> Result<u64> {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|r| r.parse().ok())
                .ok_or_else(bad)
        };
        match s {
            "L4" => Ok(GraphType::L4),
            "T4" => Ok(GraphType::T4),
            _ if s.starts_with("L2(") => Ok(GraphType::L2(arg("L2(")?)),
            _ if s.starts_with("R4(") => Ok(GraphType::R4(arg("R4(")?)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for GraphType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GraphType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A vertex group: a registry name or inline generators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupRef {
    Name(String),
    Inline { generators: Vec<IntMat> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexSpec {
    pub id: String,
    pub group: GroupRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cm: Option<CMOrder>,
    #[serde(default)]
    pub j_invariant: String,
    #[serde(default)]
    pub lmfdb: String,
    /// Claimed membership of -Id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minus_id: Option<bool>,
    /// Claimed: every index-2 subgroup contains -Id.
    #[serde(default)]
    pub twist_rigid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OddEdge {
    pub u: String,
    pub v: String,
    pub degree: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub row_id: String,
    pub graph_type: GraphType,
    /// Full torsion groups as printed, e.g. `[[6], [6], [2], [2]]`.
    pub torsion_config: Vec<Vec<u64>>,
    /// A second printed ordering of the same configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torsion_config_alt: Option<Vec<Vec<u64>>>,
    pub vertices: Vec<VertexSpec>,
    #[serde(default)]
    pub edges_2: Vec<[String; 2]>,
    #[serde(default)]
    pub edges_odd: Vec<OddEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub version: u32,
    pub rows: Vec<TableRow>,
}

/// A row whose vertex groups have been resolved to image specs.
#[derive(Debug, Clone)]
pub struct ResolvedRow {
    pub row: TableRow,
    pub specs: Vec<ImageSpec>,
    /// Printed 2-edges as vertex indices.
    pub edges: Vec<(usize, usize)>,
}

fn line_of(text: &str, row_id: &str) -> Option<usize> {
    let needle = format!("\"{row_id}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}

fn resolve_row(row: TableRow, catalog: &Catalog) -> Result<ResolvedRow> {
    if row.vertices.len() != row.graph_type.vertex_count() {
        return Err(Error::SchemaError(format!(
            "{} has {} vertices",
            row.graph_type,
            row.vertices.len()
        )));
    }
    if row.torsion_config.len() != row.vertices.len() {
        return Err(Error::SchemaError(format!(
            "torsion_config has {} entries for {} vertices",
            row.torsion_config.len(),
            row.vertices.len()
        )));
    }
    if let Some(alt) = &row.torsion_config_alt {
        if alt.len() != row.vertices.len() {
            return Err(Error::SchemaError(
                "torsion_config_alt has wrong length".into(),
            ));
        }
    }
    for t in row
        .torsion_config
        .iter()
        .chain(row.torsion_config_alt.iter().flatten())
    {
        if TorsionType::two_part_of(t).is_none() {
            return Err(Error::SchemaError(format!("bad torsion group {t:?}")));
        }
    }
    let ids: Vec<&str> = row.vertices.iter().map(|v| v.id.as_str()).collect();
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(Error::SchemaError("duplicate vertex id".into()));
    }
    let index = |id: &str| -> Result<usize> {
        ids.iter()
            .position(|&x| x == id)
            .ok_or_else(|| Error::SchemaError(format!("edge names unknown vertex `{id}`")))
    };
    let mut edges = Vec::new();
    for [u, v] in &row.edges_2 {
        let (a, b) = (index(u)?, index(v)?);
        if a == b {
            return Err(Error::SchemaError(format!("loop at `{u}`")));
        }
        edges.push((a, b));
    }
    for e in &row.edges_odd {
        index(&e.u)?;
        index(&e.v)?;
        if e.degree % 2 == 0 {
            return Err(Error::SchemaError(format!(
                "odd edge of degree {}",
                e.degree
            )));
        }
    }
    let mut specs = Vec::new();
    for v in &row.vertices {
        let ambient = v.cm.and_then(|c| c.params().ok()).map(|p| p.ambient());
        let spec = match &v.group {
            GroupRef::Name(n) => catalog.get(n)?.spec(),
            GroupRef::Inline { generators } => {
                if generators.is_empty() {
                    return Err(Error::SchemaError(format!(
                        "vertex `{}` has no generators",
                        v.id
                    )));
                }
                ImageSpec::new(
                    Some(&format!("{}.{}", row.row_id, v.id)),
                    generators.clone(),
                )
            }
        };
        let spec = match ambient {
            Some(a) => spec.with_ambient(a),
            None => spec,
        };
        specs.push(spec);
    }
    Ok(ResolvedRow { row, specs, edges })
}

/// Parses fixture text and resolves every group reference against `catalog`.
pub fn parse_fixture(text: &str, catalog: &Catalog) -> Result<Vec<ResolvedRow>> {
    let fx: Fixture = serde_json::from_str(text).map_err(|e| Error::ParseError(e.to_string()))?;
    if fx.version != 1 {
        return Err(Error::SchemaError(format!(
            "unsupported version {}",
            fx.version
        )));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in fx.rows.into_iter().enumerate() {
        let id = row.row_id.clone();
        let at = match line_of(text, &id) {
            Some(l) => format!("row {i} `{id}` (line {l})"),
            None => format!("row {i} `{id}`"),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::SchemaError(format!("{at}: duplicate row_id")));
        }
        out.push(resolve_row(row, catalog).map_err(|e| match e {
            Error::SchemaError(m) => Error::SchemaError(format!("{at}: {m}")),
            other => other,
        })?);
    }
    Ok(out)
}

pub fn load_fixture(path: &Path) -> Result<Vec<ResolvedRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_fixture(&text, Catalog::builtin())
}

/// The fixture shipped with the crate.
pub fn builtin_fixture() -> Result<Vec<ResolvedRow>> {
    parse_fixture(include_str!("../data/tables_ab.json"), Catalog::builtin())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowReport {
    pub row_id: String,
    pub checks: Vec<CheckResult>,
    pub overall: bool,
}

impl RowReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub level: u32,
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    /// Distinct (graph type, printed torsion configuration) pairs.
    pub graph_torsion_types: usize,
    pub rows: Vec<RowReport>,
}

impl Summary {
    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Fixed-width text table, one line per row.
    pub fn to_table(&self) -> String {
        const NAMES: [&str; 7] = [
            "TORSION", "EDGES", "DET", "CM", "MINUSID", "STABLE", "KENKU",
        ];
        let mut s = format!("{:<16}", "row");
        for n in NAMES {
            s.push_str(&format!(" {n:<8}"));
        }
        s.push_str(" overall\n");
        for r in &self.rows {
            s.push_str(&format!("{:<16}", r.row_id));
            for n in NAMES {
                let mark = match r.check(n) {
                    Some(c) if c.pass => "pass",
                    Some(_) => "FAIL",
                    None => "-",
                };
                s.push_str(&format!(" {mark:<8}"));
            }
            s.push_str(if r.overall { " pass\n" } else { " FAIL\n" });
        }
        s.push_str(&format!(
            "{}/{} rows pass at level {} ({} graph-torsion types)\n",
            self.passed, self.total, self.level, self.graph_torsion_types
        ));
        s
    }
}

fn result(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((pass, detail)) => CheckResult { name, pass, detail },
        Err(e) => CheckResult {
            name,
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn fmt_types(ts: &[TorsionType]) -> String {
    ts.iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Permutations of `0..n` preserving the edge set.
pub fn graph_automorphisms(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let set: BTreeSet<(usize, usize)> = edges.iter().map(|&(a, b)| key(a, b)).collect();
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |p| {
        if set.iter().all(|&(a, b)| set.contains(&key(p[a], p[b]))) {
            out.push(p.to_vec());
        }
    });
    out
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

fn check_torsion(r: &ResolvedRow, groups: &[FiniteMatGroup]) -> Result<(bool, String)> {
    let computed = groups
        .iter()
        .map(torsion_from_image)
        .collect::<Result<Vec<_>>>()?;
    let autos = graph_automorphisms(groups.len(), &r.edges);
    let mut orderings = vec![("printed", &r.row.torsion_config)];
    if let Some(alt) = &r.row.torsion_config_alt {
        orderings.push(("alternate", alt));
    }
    let mut matched = Vec::new();
    for (label, config) in &orderings {
        let printed: Vec<TorsionType> = config
            .iter()
            .map(|t| TorsionType::two_part_of(t).expect("validated at load"))
            .collect();
        if let Some(p) = autos
            .iter()
            .find(|p| (0..computed.len()).all(|i| computed[i] == printed[p[i]]))
        {
            let how = if p.iter().enumerate().all(|(i, &j)| i == j) {
                "as listed".to_string()
            } else {
                format!("via vertex permutation {p:?}")
            };
            matched.push(format!("{label} ordering matched {how}"));
        }
    }
    let odd: Vec<u64> = r
        .row
        .torsion_config
        .iter()
        .map(|t| t.iter().map(|&n| n >> n.trailing_zeros()).product())
        .collect();
    let mut detail = format!("computed {}", fmt_types(&computed));
    if matched.is_empty() {
        detail.push_str("; no printed ordering matches");
    } else {
        detail.push_str(&format!("; {}", matched.join("; ")));
    }
    if odd.iter().any(|&o| o > 1) {
        detail.push_str(&format!("; odd parts {odd:?} unchecked"));
    }
    Ok((!matched.is_empty(), detail))
}

fn check_edges(r: &ResolvedRow, groups: &[FiniteMatGroup]) -> Result<(bool, String)> {
    let ids: Vec<&str> = r.row.vertices.iter().map(|v| v.id.as_str()).collect();
    let mut pass = true;
    let mut notes = Vec::new();
    let mut kernels = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let ks: Vec<_> = rational_cyclic_subgroups(g, 1)?
            .into_iter()
            .filter(|k| k.order_exp == 1)
            .collect();
        let deg = r.edges.iter().filter(|&&(a, b)| a == i || b == i).count();
        if ks.len() != deg {
            pass = false;
            notes.push(format!(
                "{} has {} rational 2-lines but 2-degree {deg}",
                ids[i],
                ks.len()
            ));
        }
        kernels.push(ks);
    }
    for &(a, b) in &r.edges {
        for (u, v) in [(a, b), (b, a)] {
            let target = groups[v].reduce_group(groups[v].level() - 1)?;
            let mut hit = None;
            for k in &kernels[u] {
                let w = pushforward(&groups[u], k)?;
                if is_conjugate(&w, &target)?.is_some() {
                    hit = Some(k.generator.coords());
                    break;
                }
            }
            match hit {
                Some((x, y)) => {
                    let same = if r.specs[u].int_generators == r.specs[v].int_generators {
                        " (same group)"
                    } else {
                        ""
                    };
                    notes.push(format!("{}->{} via ({x},{y}){same}", ids[u], ids[v]));
                }
                None => {
                    pass = false;
                    notes.push(format!("{}->{} not realized by any 2-line", ids[u], ids[v]));
                }
            }
        }
    }
    if r.edges.is_empty() && pass {
        notes.push("no 2-edges and no rational 2-lines".into());
    }
    Ok((pass, notes.join("; ")))
}

fn check_det(r: &ResolvedRow, groups: &[FiniteMatGroup]) -> (bool, String) {
    let bad: Vec<&str> = groups
        .iter()
        .zip(&r.row.vertices)
        .filter(|(g, _)| !g.det_surjective())
        .map(|(_, v)| v.id.as_str())
        .collect();
    if bad.is_empty() {
        (true, "det surjective at every vertex".into())
    } else {
        (false, format!("det not surjective at {}", bad.join(", ")))
    }
}

fn check_cm(r: &ResolvedRow, groups: &[FiniteMatGroup]) -> Result<(bool, String)> {
    let mut pass = true;
    let mut notes = Vec::new();
    for (v, g) in r.row.vertices.iter().zip(groups) {
        let Some(cm) = v.cm else { continue };
        let p = cm.params()?;
        let n = normalizer_cartan(&p, g.level())?;
        if conjugate_into(g, &n)?.is_none() {
            pass = false;
            notes.push(format!("{} not conjugate into {}", v.id, p.label()));
            continue;
        }
        let index = (n.order() / g.order()) as u64;
        let units = p.unit_group_order();
        let d = p.disc();
        let exact = !matches!((p.disc_k, p.conductor), (-3, 1) | (-4, 1)) && d % 8 != 0;
        let ok = units % index == 0 && (!exact || index == 1);
        pass &= ok;
        notes.push(format!(
            "{} index {index} in {}{}",
            v.id,
            p.label(),
            if exact { " (must be 1)" } else { "" }
        ));
    }
    if notes.is_empty() {
        notes.push("no CM data".into());
    }
    Ok((pass, notes.join("; ")))
}

fn check_minus_id(r: &ResolvedRow, groups: &[FiniteMatGroup]) -> Result<(bool, String)> {
    let mut pass = true;
    let mut notes = Vec::new();
    let has: Vec<bool> = groups.iter().map(|g| g.contains_minus_id()).collect();
    if has.iter().any(|&h| h != has[0]) {
        pass = false;
        notes.push("-Id membership differs along the class".into());
    }
    for ((v, g), &h) in r.row.vertices.iter().zip(groups).zip(&has) {
        if let Some(claim) = v.minus_id {
            if claim != h {
                pass = false;
                notes.push(format!("{} claims -Id {claim}, computed {h}", v.id));
            }
        }
        if v.twist_rigid {
            let subs = index2_subgroups(g)?;
            let loose = subs.iter().filter(|s| !s.contains_minus_id()).count();
            if loose > 0 {
                pass = false;
                notes.push(format!(
                    "{} has {loose} index-2 subgroups without -Id",
                    v.id
                ));
            } else {
                notes.push(format!(
                    "{}: all {} index-2 subgroups contain -Id",
                    v.id,
                    subs.len()
                ));
            }
        }
    }
    if pass {
        notes.insert(
            0,
            format!("-Id {}", if has[0] { "present" } else { "absent" }),
        );
    }
    Ok((pass, notes.join("; ")))
}

fn check_stable(r: &ResolvedRow) -> Result<(bool, String)> {
    let mut bad = Vec::new();
    for (v, s) in r.row.vertices.iter().zip(&r.specs) {
        for k in [3, 4] {
            if !is_stable_level(s, k)? {
                bad.push(format!("{} at k={k}", v.id));
            }
        }
    }
    if bad.is_empty() {
        Ok((true, "stable at k=3 and k=4".into()))
    } else {
        Ok((false, format!("not stable: {}", bad.join(", "))))
    }
}

fn check_kenku(r: &ResolvedRow, level: u32) -> Result<(bool, String)> {
    let counts = r
        .specs
        .iter()
        .map(|s| c2_count(s, level))
        .collect::<Result<Vec<_>>>()?;
    let pass = counts.iter().all(|&c| c <= 8);
    Ok((pass, format!("c2 counts {counts:?}")))
}

/// Smallest level accepted by [`verify_row`].
pub const VERIFY_MIN_LEVEL: u32 = 5;

pub fn verify_row(r: &ResolvedRow, level: u32) -> RowReport {
    let mut checks = Vec::new();
    let groups = if level < VERIFY_MIN_LEVEL {
        Err(Error::LevelExhausted(format!(
            "verification needs level at least {VERIFY_MIN_LEVEL}"
        )))
    } else {
        r.specs
            .iter()
            .map(|s| s.at_level(level))
            .collect::<Result<Vec<_>>>()
    };
    match groups {
        Ok(gs) => {
            checks.push(result("TORSION", check_torsion(r, &gs)));
            checks.push(result("EDGES", check_edges(r, &gs)));
            let (pass, detail) = check_det(r, &gs);
            checks.push(CheckResult {
                name: "DET",
                pass,
                detail,
            });
            checks.push(result("CM", check_cm(r, &gs)));
            checks.push(result("MINUSID", check_minus_id(r, &gs)));
            checks.push(result("STABLE", check_stable(r)));
            checks.push(result("KENKU", check_kenku(r, level)));
        }
        Err(e) => checks.push(CheckResult {
            name: "GROUPS",
            pass: false,
            detail: e.to_string(),
        }),
    }
    let overall = checks.iter().all(|c| c.pass);
    RowReport {
        row_id: r.row.row_id.clone(),
        checks,
        overall,
    }
}

/// Verifies every row; the report keeps fixture order.
pub fn verify_all(rows: &[ResolvedRow], level: u32) -> Summary {
    let reports: Vec<RowReport> = match crate::matgrp::thread_pool() {
        Some(p) => p.install(|| rows.par_iter().map(|r| verify_row(r, level)).collect()),
        None => rows.iter().map(|r| verify_row(r, level)).collect(),
    };
    let passed = reports.iter().filter(|r| r.overall).count();
    let types: BTreeSet<(String, Vec<Vec<u64>>)> = rows
        .iter()
        .map(|r| (r.row.graph_type.to_string(), r.row.torsion_config.clone()))
        .collect();
    Summary {
        level,
        total: reports.len(),
        passed,
        failed: reports.len() - passed,
        graph_torsion_types: types.len(),
        rows: reports,
    }
}

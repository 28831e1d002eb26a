//! CM parameters, Cartan subgroups and their normalizers, and the named-group registry.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matgrp::{Ambient, FiniteMatGroup, ImageSpec, IntMat, Mat2};
use crate::ring2::reduce_i64;

/// `(Delta_K, f, delta, phi)` for an order of conductor `f` in an imaginary quadratic field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CMParams {
    pub disc_k: i64,
    pub conductor: i64,
    pub delta: i64,
    pub phi: i64,
}

/// Short form used in fixtures: `{"disc_k": -7, "conductor": 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CMOrder {
    pub disc_k: i64,
    pub conductor: i64,
}

impl CMOrder {
    pub fn params(&self) -> Result<CMParams> {
        cm_params(self.disc_k, self.conductor)
    }
}

pub fn cm_params(disc_k: i64, conductor: i64) -> Result<CMParams> {
    if disc_k >= 0 || !matches!(disc_k.rem_euclid(4), 0 | 1) || conductor < 1 {
        return Err(Error::InvalidDiscriminant(disc_k));
    }
    let d = disc_k * conductor * conductor;
    let (delta, phi) = if d.rem_euclid(4) == 0 {
        (d / 4, 0)
    } else {
        ((disc_k - 1) / 4 * conductor * conductor, conductor)
    };
    Ok(CMParams {
        disc_k,
        conductor,
        delta,
        phi,
    })
}

impl CMParams {
    /// Parameters given directly by `(delta, phi)`, with no field attached.
    pub fn from_delta_phi(delta: i64, phi: i64) -> Self {
        CMParams {
            disc_k: phi * phi + 4 * delta,
            conductor: 0,
            delta,
            phi,
        }
    }

    pub fn ambient(&self) -> Ambient {
        Ambient::Normalizer {
            delta: self.delta,
            phi: self.phi,
        }
    }

    /// `|O_{K,f}^x|`.
    pub fn unit_group_order(&self) -> u64 {
        match (self.disc_k, self.conductor) {
            (-3, 1) => 6,
            (-4, 1) => 4,
            _ => 2,
        }
    }

    pub fn disc(&self) -> i64 {
        self.disc_k * self.conductor * self.conductor
    }

    pub fn label(&self) -> String {
        format!("N_{{{},{}}}", self.delta, self.phi)
    }
}

fn cartan_matrix(delta: i64, phi: i64, a: u64, b: u64, level: u32) -> Mat2 {
    let a = a as i64;
    let b = b as i64;
    Mat2::new(level, a + b * phi, b, delta * b, a).expect("valid level")
}

fn norm_is_odd(delta: i64, phi: i64, a: u64, b: u64) -> bool {
    let (a, b) = ((a & 1) as i64, (b & 1) as i64);
    (a * a + a * b * phi - delta * b * b).rem_euclid(2) == 1
}

/// The matrices `[a + b phi, b; delta b, a]` with odd determinant, enumerated directly.
pub fn cartan(params: &CMParams, level: u32) -> Result<FiniteMatGroup> {
    let n = 1u64 << level;
    let mut els = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if norm_is_odd(params.delta, params.phi, a, b) {
                els.push(cartan_matrix(params.delta, params.phi, a, b, level));
            }
        }
    }
    FiniteMatGroup::from_elements(level, els)
}

/// The matrix `[-1 0; phi 1]` adjoined to the Cartan group.
pub fn normalizer_element(params: &CMParams, level: u32) -> Result<Mat2> {
    Mat2::new(level, -1, 0, params.phi, 1)
}

/// `<C_{delta,phi}(2^N), [-1 0; phi 1]>`.
pub fn normalizer_cartan(params: &CMParams, level: u32) -> Result<FiniteMatGroup> {
    let c = cartan(params, level)?;
    let w = normalizer_element(params, level)?;
    let mut els = c.elements().to_vec();
    if !c.contains(&w) {
        els.extend(c.elements().iter().map(|x| x.mul(&w)));
    }
    FiniteMatGroup::from_elements(level, els)
}

/// Number of pairs `(a, b)` mod 2^N with `a^2 + ab phi - delta b^2` odd, by exhaustive count.
pub fn cartan_unit_count(params: &CMParams, level: u32) -> Result<u64> {
    if level == 0 {
        return Err(Error::BadLevel(0));
    }
    let n = 1u64 << level;
    let delta = reduce_i64(params.delta, level);
    let phi = reduce_i64(params.phi, level);
    let mut count = 0;
    for a in 0..n {
        for b in 0..n {
            let v = a
                .wrapping_mul(a)
                .wrapping_add(a.wrapping_mul(b).wrapping_mul(phi))
                .wrapping_sub(delta.wrapping_mul(b).wrapping_mul(b));
            if v & 1 == 1 {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// `|N_{delta,phi}(2^N)|` in closed form: the norm's parity depends only on `(a, b)` mod 2.
pub fn normalizer_order(delta: i64, phi: i64, level: u32) -> u64 {
    let odd = (0..2)
        .flat_map(|a| (0..2).map(move |b| (a, b)))
        .filter(|&(a, b)| norm_is_odd(delta, phi, a, b))
        .count() as u64;
    let cartan = odd << (2 * (level - 1));
    if level == 1 && phi.rem_euclid(2) == 0 {
        cartan
    } else {
        2 * cartan
    }
}

/// What a registry entry stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    /// A 2-adic image over Q.
    Image,
    /// A group occurring inside a proof: an image over a larger field, or a variant as printed.
    Auxiliary,
    /// A single named matrix.
    Element,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub kind: EntryKind,
    pub generators: Vec<IntMat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cm: Option<CMOrder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient: Option<(i64, i64)>,
    pub provenance: String,
}

impl CatalogEntry {
    pub fn cm_params(&self) -> Option<CMParams> {
        self.cm.and_then(|c| c.params().ok())
    }

    pub fn ambient(&self) -> Ambient {
        if let Some((delta, phi)) = self.ambient {
            return Ambient::Normalizer { delta, phi };
        }
        self.cm_params().map(|p| p.ambient()).unwrap_or_default()
    }

    pub fn spec(&self) -> ImageSpec {
        ImageSpec::new(Some(&self.name), self.generators.clone()).with_ambient(self.ambient())
    }

    pub fn at_level(&self, level: u32) -> Result<FiniteMatGroup> {
        self.spec().at_level(level)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Catalog {
    pub version: u32,
    pub entries: Vec<CatalogEntry>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

const BUILTIN: &str = include_str!("../data/catalog.json");

impl Catalog {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut c: Catalog =
            serde_json::from_str(text).map_err(|e| Error::ParseError(e.to_string()))?;
        for (i, e) in c.entries.iter().enumerate() {
            if c.index.insert(e.name.clone(), i).is_some() {
                return Err(Error::SchemaError(format!("duplicate name `{}`", e.name)));
            }
        }
        Ok(c)
    }

    /// The registry shipped with the crate.
    pub fn builtin() -> &'static Catalog {
        static CAT: OnceLock<Catalog> = OnceLock::new();
        CAT.get_or_init(|| Catalog::from_json(BUILTIN).expect("builtin catalog parses"))
    }

    pub fn get(&self, name: &str) -> Result<&CatalogEntry> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Distinct CM parameter sets attached to entries.
    pub fn cm_params(&self) -> Vec<CMParams> {
        let mut out: Vec<CMParams> = Vec::new();
        for e in &self.entries {
            if let Some(p) = e.cm_params() {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }
}

/// Closure of a registered group at `level`.
pub fn catalog(name: &str, level: u32) -> Result<FiniteMatGroup> {
    Catalog::builtin().get(name)?.at_level(level)
}

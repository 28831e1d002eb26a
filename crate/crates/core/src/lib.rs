//! 2-adic images of CM isogeny-torsion graphs at finite level.
//!
//! Matrix groups over Z/2^N, Cartan normalizers, the isogeny pushforward of an image
//! along a rational cyclic kernel, quadratic twists, torsion and isogeny-graph
//! extraction, and a fixture-driven verifier for the classification tables.

pub mod cmcat;
pub mod error;
pub mod galimg;
pub mod matgrp;
pub mod ring2;
pub mod tables;

pub use cmcat::{
    cartan, cartan_unit_count, catalog, cm_params, normalizer_cartan, CMParams, Catalog,
    CatalogEntry,
};
pub use error::{Error, Result};
pub use galimg::{
    analyze, c2_count, classify_shape, isogeny_graph2, pushforward, rational_cyclic_subgroups,
    torsion_from_image, IsoGraph2, RationalCyclic, Shape, TorsionType,
};
pub use matgrp::{
    closure, index2_subgroups, is_conjugate, is_stable_level, twist_by_character, twist_class,
    Character, FiniteMatGroup, ImageSpec, Mat2, Vec2,
};
pub use num_bigint::BigInt;
pub use ring2::{hensel_solve, hensel_step, val2, IntPoly, Residue};
pub use tables::{
    builtin_fixture, load_fixture, parse_fixture, verify_all, verify_row, ResolvedRow, RowReport,
    Summary, TableRow,
};

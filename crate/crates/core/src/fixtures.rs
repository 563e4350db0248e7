//! Bundled test systems.

use crate::case::{apply_fuel_assignment, parse_case, table_one_mapping, Dialect, FuelTable, GridCase};

/// MATPOWER source of the 30-bus system.
pub const CASE30_MATPOWER: &str = include_str!("../fixtures/case30.m");

/// Two buses, one line of 5 MW, a cheap dirty unit and an expensive clean one.
pub fn case2() -> GridCase {
    parse_case(include_str!("../fixtures/case2.toml"), Dialect::Native).expect("bundled case2")
}

/// Native source of the 30-bus system: the MATPOWER data with the Table I
/// fuel mix, K = 5 market zones and k = 4 LMCE clusters.
pub const CASE30_NATIVE: &str = include_str!("../fixtures/case30.toml");

/// Native source of the three-area system used for Jacobian clustering.
pub const CASE14_TIGHT_NATIVE: &str = include_str!("../fixtures/case14_tight.toml");

/// Two bundled load profiles of the three-area system. In the first every
/// tie line is congested; in the second area C imports below its tie limit.
pub const CASE14_TIGHT_PATTERNS: [[f64; 6]; 2] = [
    [15.0, 15.0, 14.0, 16.0, 12.0, 18.0],
    [15.0, 15.0, 14.0, 16.0, 8.0, 9.0],
];

/// The 30-bus system with zones and clusters.
pub fn case30() -> GridCase {
    parse_case(CASE30_NATIVE, Dialect::Native).expect("bundled case30")
}

/// The 30-bus system as parsed from MATPOWER with Table I fuels, without
/// zones or clusters.
pub fn case30_matpower() -> GridCase {
    let c = parse_case(CASE30_MATPOWER, Dialect::MatpowerSubset).expect("bundled case30");
    apply_fuel_assignment(&c, &FuelTable::default(), &table_one_mapping()).expect("table one")
}

pub fn case14_tight() -> GridCase {
    parse_case(CASE14_TIGHT_NATIVE, Dialect::Native).expect("bundled case14_tight")
}

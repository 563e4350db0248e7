//! Grid case data: buses, lines, generators, loads and the optional zone and
//! cluster annotations used by the neural metrics.
//!
//! Two text dialects are understood. The MATPOWER subset reads the numeric
//! matrices of a `.m` case file (`mpc.baseMVA`, `mpc.bus`, `mpc.gen`,
//! `mpc.branch`, `mpc.gencost`). The native dialect is TOML and carries the
//! fuel, zone and cluster annotations that MATPOWER has no place for; it
//! round-trips exactly through [`serialize_case`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

mod matpower;

pub use matpower::parse_matpower;

/// Errors raised while reading or validating a case.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{entity}: {message}")]
    Semantic { entity: String, message: String },
    #[error("no generators")]
    NoGenerators,
    #[error("unknown fuel {0}")]
    UnknownFuel(String),
    #[error("no generator at bus {0}")]
    NoGeneratorAtBus(usize),
}

impl CaseError {
    fn semantic(entity: impl Into<String>, message: impl Into<String>) -> Self {
        CaseError::Semantic {
            entity: entity.into(),
            message: message.into(),
        }
    }
}

/// Text dialect accepted by [`parse_case`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    MatpowerSubset,
    Native,
}

/// Fuel category of a generator.
///
/// The three categories with built-in emission factors are `CCGT`, `PEL` and
/// `ANT`; anything else is carried by name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Fuel {
    /// Gas combined cycle.
    Ccgt,
    /// Distillate fuel oil.
    Pel,
    /// Anthracite coal.
    Ant,
    Other(String),
}

impl Fuel {
    pub fn name(&self) -> &str {
        match self {
            Fuel::Ccgt => "CCGT",
            Fuel::Pel => "PEL",
            Fuel::Ant => "ANT",
            Fuel::Other(s) => s,
        }
    }

    /// Built-in emission factor in tCO2e/MWh, for the three standard categories.
    pub fn default_factor(&self) -> Option<f64> {
        match self {
            Fuel::Ccgt => Some(0.3625),
            Fuel::Pel => Some(0.7018),
            Fuel::Ant => Some(0.9143),
            Fuel::Other(_) => None,
        }
    }
}

impl From<String> for Fuel {
    fn from(s: String) -> Self {
        match s.to_ascii_uppercase().as_str() {
            "CCGT" => Fuel::Ccgt,
            "PEL" => Fuel::Pel,
            "ANT" => Fuel::Ant,
            _ => Fuel::Other(s),
        }
    }
}

impl From<&str> for Fuel {
    fn from(s: &str) -> Self {
        Fuel::from(s.to_string())
    }
}

impl From<Fuel> for String {
    fn from(f: Fuel) -> Self {
        f.name().to_string()
    }
}

impl fmt::Display for Fuel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fuel → emission factor (tCO2e/MWh).
#[derive(Debug, Clone, PartialEq)]
pub struct FuelTable(BTreeMap<Fuel, f64>);

impl Default for FuelTable {
    fn default() -> Self {
        let mut map = BTreeMap::new();
        for fuel in [Fuel::Ccgt, Fuel::Pel, Fuel::Ant] {
            let factor = fuel.default_factor().unwrap();
            map.insert(fuel, factor);
        }
        FuelTable(map)
    }
}

impl FuelTable {
    pub fn get(&self, fuel: &Fuel) -> Option<f64> {
        self.0.get(fuel).copied()
    }

    pub fn insert(&mut self, fuel: Fuel, factor: f64) {
        self.0.insert(fuel, factor);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    #[serde(default = "default_zone")]
    pub zone_id: usize,
}

fn default_zone() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series reactance, p.u.
    pub reactance: f64,
    /// Thermal limit in MW; `inf` when unconstrained.
    pub flow_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    /// $/MWh
    pub cost_linear: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub fuel: Fuel,
    /// tCO2e/MWh
    pub emission_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    pub nominal_mw: f64,
}

/// An exhaustive, non-overlapping assignment of load indices to groups.
///
/// Used both for market zones and for LMCE-similarity clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub count: usize,
    pub assignment: Vec<usize>,
}

/// Load → market zone.
pub type ZoneMap = Partition;

impl Partition {
    /// Checks that every group index is below `count` and every group is used.
    pub fn new(count: usize, assignment: Vec<usize>) -> Result<Self, CaseError> {
        let p = Partition { count, assignment };
        p.validate()?;
        Ok(p)
    }

    /// A single group holding `n` items.
    pub fn single(n: usize) -> Self {
        Partition {
            count: 1,
            assignment: vec![0; n],
        }
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        if self.count == 0 {
            return Err(CaseError::semantic("partition", "group count is zero"));
        }
        let mut used = vec![false; self.count];
        for (i, &g) in self.assignment.iter().enumerate() {
            if g >= self.count {
                return Err(CaseError::semantic(
                    format!("load {i}"),
                    format!("group {g} out of range 0..{}", self.count),
                ));
            }
            used[g] = true;
        }
        if let Some(g) = used.iter().position(|u| !u) {
            return Err(CaseError::semantic(format!("group {g}"), "group is empty"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn same_group(&self, i: usize, j: usize) -> bool {
        self.assignment[i] == self.assignment[j]
    }

    /// Indices in group `k`, ascending.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == k)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &g in &self.assignment {
            sizes[g] += 1;
        }
        sizes
    }

    /// The `count × len` binary indicator matrix, row-major.
    pub fn indicator(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.assignment.len()]; self.count];
        for (i, &g) in self.assignment.iter().enumerate() {
            m[g][i] = 1;
        }
        m
    }

    /// Groups as sorted member lists, themselves sorted by first member. Two
    /// partitions that differ only by group labels compare equal here.
    pub fn canonical_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = (0..self.count).map(|k| self.members(k)).collect();
        groups.sort();
        groups
    }
}

/// A DC grid case with linear generator costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub slack_bus: usize,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zones: Option<ZoneMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Partition>,
}

impl GridCase {
    pub fn n_loads(&self) -> usize {
        self.loads.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn nominal_loads(&self) -> Vec<f64> {
        self.loads.iter().map(|l| l.nominal_mw).collect()
    }

    pub fn emission_factors(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.emission_factor).collect()
    }

    /// Position of bus `id` in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Index of the first load sitting at bus `id`.
    pub fn load_index_at_bus(&self, id: usize) -> Option<usize> {
        self.loads.iter().position(|l| l.bus == id)
    }

    /// Checks every structural invariant, naming the offending entity.
    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0) {
            return Err(CaseError::semantic("base_mva", "must be positive"));
        }
        let mut ids = BTreeSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(CaseError::semantic(format!("bus {}", b.id), "duplicate bus id"));
            }
        }
        if !ids.contains(&self.slack_bus) {
            return Err(CaseError::semantic(
                format!("slack bus {}", self.slack_bus),
                "not in bus list",
            ));
        }
        for (k, l) in self.lines.iter().enumerate() {
            let entity = format!("line {k} ({}-{})", l.from_bus, l.to_bus);
            for end in [l.from_bus, l.to_bus] {
                if !ids.contains(&end) {
                    return Err(CaseError::semantic(entity, format!("dangling endpoint bus {end}")));
                }
            }
            if l.from_bus == l.to_bus {
                return Err(CaseError::semantic(entity, "self loop"));
            }
            if !(l.reactance > 0.0) || !l.reactance.is_finite() {
                return Err(CaseError::semantic(entity, "reactance must be positive"));
            }
            if !(l.flow_limit > 0.0) {
                return Err(CaseError::semantic(entity, "flow limit must be positive"));
            }
        }
        if self.generators.is_empty() {
            return Err(CaseError::NoGenerators);
        }
        for (k, g) in self.generators.iter().enumerate() {
            let entity = format!("generator {k} (bus {})", g.bus);
            if !ids.contains(&g.bus) {
                return Err(CaseError::semantic(entity, "bus does not exist"));
            }
            if !g.cost_linear.is_finite() {
                return Err(CaseError::semantic(entity, "cost must be finite"));
            }
            if !g.g_min.is_finite() || !g.g_max.is_finite() {
                return Err(CaseError::semantic(entity, "limits must be finite"));
            }
            if g.g_min < 0.0 || g.g_max < 0.0 {
                return Err(CaseError::semantic(entity, "negative limit"));
            }
            if g.g_min > g.g_max {
                return Err(CaseError::semantic(entity, "g_min exceeds g_max"));
            }
            if !(g.emission_factor >= 0.0) || !g.emission_factor.is_finite() {
                return Err(CaseError::semantic(entity, "emission factor must be non-negative"));
            }
            if let Some(f) = g.fuel.default_factor() {
                if (f - g.emission_factor).abs() > 1e-12 {
                    return Err(CaseError::semantic(
                        entity,
                        format!(
                            "emission factor {} inconsistent with fuel {} ({f})",
                            g.emission_factor, g.fuel
                        ),
                    ));
                }
            }
        }
        for (k, l) in self.loads.iter().enumerate() {
            let entity = format!("load {k} (bus {})", l.bus);
            if !ids.contains(&l.bus) {
                return Err(CaseError::semantic(entity, "bus does not exist"));
            }
            if !(l.nominal_mw >= 0.0) || !l.nominal_mw.is_finite() {
                return Err(CaseError::semantic(entity, "negative or non-finite load"));
            }
        }
        for (name, part) in [("zones", &self.zones), ("clusters", &self.clusters)] {
            if let Some(p) = part {
                if p.assignment.len() != self.loads.len() {
                    return Err(CaseError::semantic(
                        name,
                        format!(
                            "assignment covers {} loads, case has {}",
                            p.assignment.len(),
                            self.loads.len()
                        ),
                    ));
                }
                p.validate()
                    .map_err(|e| CaseError::semantic(name, e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// A non-fatal note produced while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parses and validates a case.
pub fn parse_case(text: &str, dialect: Dialect) -> Result<GridCase, CaseError> {
    parse_case_with_warnings(text, dialect).map(|(c, _)| c)
}

/// Like [`parse_case`], also returning warnings about ignored input.
pub fn parse_case_with_warnings(
    text: &str,
    dialect: Dialect,
) -> Result<(GridCase, Vec<Warning>), CaseError> {
    let (case, warnings) = match dialect {
        Dialect::MatpowerSubset => parse_matpower(text)?,
        Dialect::Native => (parse_native(text)?, Vec::new()),
    };
    case.validate()?;
    Ok((case, warnings))
}

fn parse_native(text: &str) -> Result<GridCase, CaseError> {
    toml::from_str::<GridCase>(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((0, 0));
        CaseError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

/// Renders a case in the native dialect.
pub fn serialize_case(case: &GridCase) -> String {
    toml::to_string(case).expect("grid case is always representable as TOML")
}

/// Stable short digest of a case, used to tag derived artifacts.
pub fn case_hash(case: &GridCase) -> String {
    short_digest(serialize_case(case).as_bytes())
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn short_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Reassigns fuels (and their table factors) to every generator at the
/// mapped buses.
pub fn apply_fuel_assignment(
    case: &GridCase,
    table: &FuelTable,
    mapping: &BTreeMap<usize, Fuel>,
) -> Result<GridCase, CaseError> {
    let mut out = case.clone();
    for (&bus, fuel) in mapping {
        let factor = table
            .get(fuel)
            .ok_or_else(|| CaseError::UnknownFuel(fuel.name().to_string()))?;
        let mut found = false;
        for g in out.generators.iter_mut().filter(|g| g.bus == bus) {
            g.fuel = fuel.clone();
            g.emission_factor = factor;
            found = true;
        }
        if !found {
            return Err(CaseError::NoGeneratorAtBus(bus));
        }
    }
    Ok(out)
}

/// The generator fuel mapping used for the 30-bus studies.
pub fn table_one_mapping() -> BTreeMap<usize, Fuel> {
    BTreeMap::from([
        (1, Fuel::Ccgt),
        (2, Fuel::Pel),
        (13, Fuel::Pel),
        (22, Fuel::Ant),
        (23, Fuel::Ant),
        (27, Fuel::Ant),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn two_bus_fixture_shape() {
        let c = fixtures::case2();
        assert_eq!(c.buses.len(), 2);
        assert_eq!(c.lines.len(), 1);
        assert_eq!(c.lines[0].flow_limit, 5.0);
        assert_eq!(c.generators.len(), 2);
    }

    #[test]
    fn empty_generator_section_is_rejected() {
        let mut c = fixtures::case2();
        c.generators.clear();
        let text = serialize_case(&c);
        assert_eq!(parse_case(&text, Dialect::Native), Err(CaseError::NoGenerators));
    }

    #[test]
    fn case30_with_table_one_fuels() {
        let c = fixtures::case30();
        let buses: BTreeSet<usize> = c.generators.iter().map(|g| g.bus).collect();
        assert_eq!(buses, BTreeSet::from([1, 2, 13, 22, 23, 27]));
        assert_eq!(c.n_loads(), 20);
        let g1 = c.generators.iter().find(|g| g.bus == 1).unwrap();
        assert_eq!(g1.emission_factor, 0.3625);
    }

    #[test]
    fn fuel_assignment_identity_and_errors() {
        let c = fixtures::case30();
        let same = apply_fuel_assignment(&c, &FuelTable::default(), &BTreeMap::new()).unwrap();
        assert_eq!(same, c);
        let bad = BTreeMap::from([(99, Fuel::Ant)]);
        assert_eq!(
            apply_fuel_assignment(&c, &FuelTable::default(), &bad),
            Err(CaseError::NoGeneratorAtBus(99))
        );
        let unknown = BTreeMap::from([(1, Fuel::from("lignite"))]);
        assert_eq!(
            apply_fuel_assignment(&c, &FuelTable::default(), &unknown),
            Err(CaseError::UnknownFuel("lignite".into()))
        );
    }

    #[test]
    fn native_round_trip_for_bundled_cases() {
        for c in [fixtures::case2(), fixtures::case14_tight(), fixtures::case30()] {
            let text = serialize_case(&c);
            assert_eq!(parse_case(&text, Dialect::Native).unwrap(), c);
        }
        let c = fixtures::case30();
        let back = parse_case(&serialize_case(&c), Dialect::Native).unwrap();
        assert_eq!(back.zones, c.zones);
        assert!(back.zones.is_some());
    }

    #[test]
    fn dangling_line_names_the_line() {
        let mut c = fixtures::case2();
        c.lines[0].to_bus = 7;
        let err = parse_case(&serialize_case(&c), Dialect::Native).unwrap_err();
        match err {
            CaseError::Semantic { entity, .. } => assert!(entity.starts_with("line 0")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_limit_names_generator() {
        let mut c = fixtures::case2();
        c.generators[1].g_max = -1.0;
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("generator 1"), "{err}");
    }

    #[test]
    fn inconsistent_fuel_factor_rejected() {
        let mut c = fixtures::case30();
        c.generators[0].emission_factor = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn native_syntax_error_has_position() {
        let err = parse_case("base_mva = 100\nslack_bus = = 1\n", Dialect::Native).unwrap_err();
        match err {
            CaseError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partition_indicator_and_validation() {
        let p = Partition::new(2, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(p.indicator(), vec![vec![1, 0, 0, 1], vec![0, 1, 1, 0]]);
        assert_eq!(p.canonical_groups(), vec![vec![0, 3], vec![1, 2]]);
        assert!(Partition::new(3, vec![0, 1, 1]).is_err());
    }
}

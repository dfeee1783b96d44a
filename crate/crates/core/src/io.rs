//! JSON persistence for sets and measures, CSV point ingestion and CSV
//! profile export.
//!
//! Set files hold `{"d", "max_depth", "levels"}` with one list of codes per
//! level; measure files add `"mass"` as a `"p/q"` string to every code plus
//! the leaf model. Either may carry the construction that produced it, so
//! symbolic counts survive a save/load cycle.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constructions::{Example1Plan, PropeqPlan};
use crate::dyadic::DyadicCode;
use crate::error::{DimError, Result};
use crate::exact;
use crate::measure::{DyadicMeasureTree, LeafModel};
use crate::set::{DigitIfsCounts, DyadicSetTree, SymbolicCounts};
use crate::Rational;

/// Provenance of a stored set, enough to rebuild its symbolic counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Construction {
    Example1 { plan: Example1Plan },
    Propeq { plan: PropeqPlan },
    Ifs { dim: usize, g: u32, patterns: Vec<Vec<u64>> },
    Points { snap_depth: u32, count: usize },
}

impl Construction {
    pub fn counts(&self) -> Option<SymbolicCounts> {
        match self {
            Construction::Example1 { plan } => Some(plan.counts()),
            Construction::Propeq { plan } => Some(plan.counts_formula()),
            Construction::Ifs { dim, g, patterns } => DigitIfsCounts::new(*dim, *g, patterns)
                .ok()
                .map(SymbolicCounts::new),
            Construction::Points { .. } => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SetFile {
    d: usize,
    max_depth: u32,
    levels: Vec<Vec<DyadicCode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    construction: Option<Construction>,
}

#[derive(Serialize, Deserialize)]
struct MassEntry {
    level: u32,
    index: Vec<u64>,
    mass: String,
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    d: usize,
    max_depth: u32,
    leaf_model: LeafModel,
    levels: Vec<Vec<MassEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    construction: Option<Construction>,
}

/// A loaded artifact of either kind.
#[derive(Clone, Debug)]
pub enum Artifact {
    Set(DyadicSetTree, Option<Construction>),
    Measure(DyadicMeasureTree, Option<Construction>),
}

impl Artifact {
    pub fn construction(&self) -> Option<&Construction> {
        match self {
            Artifact::Set(_, c) | Artifact::Measure(_, c) => c.as_ref(),
        }
    }

    pub fn support(&self) -> &DyadicSetTree {
        match self {
            Artifact::Set(s, _) => s,
            Artifact::Measure(m, _) => m.support(),
        }
    }
}

fn set_levels(tree: &DyadicSetTree) -> Vec<Vec<DyadicCode>> {
    (0..=tree.max_depth()).map(|n| tree.codes(n)).collect()
}

fn levels_to_keys(d: usize, levels: &[Vec<DyadicCode>]) -> Result<Vec<Vec<u128>>> {
    levels
        .iter()
        .enumerate()
        .map(|(n, codes)| {
            codes
                .iter()
                .map(|c| {
                    if c.level() as usize != n || c.dim() != d {
                        return Err(DimError::invalid(format!(
                            "code {c:?} listed at level {n} of a {d}-dimensional set"
                        )));
                    }
                    Ok(c.key())
                })
                .collect()
        })
        .collect()
}

pub fn set_to_json(tree: &DyadicSetTree, construction: Option<&Construction>) -> Result<String> {
    let file = SetFile {
        d: tree.dim(),
        max_depth: tree.max_depth(),
        levels: set_levels(tree),
        construction: construction.cloned(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn set_from_json(text: &str) -> Result<(DyadicSetTree, Option<Construction>)> {
    let file: SetFile = serde_json::from_str(text)?;
    if file.levels.len() != file.max_depth as usize + 1 {
        return Err(DimError::invalid("max_depth does not match the number of levels"));
    }
    let tree = DyadicSetTree::from_levels(file.d, levels_to_keys(file.d, &file.levels)?)?;
    Ok((tree, file.construction))
}

pub fn measure_to_json(mu: &DyadicMeasureTree, construction: Option<&Construction>) -> Result<String> {
    let tree = mu.support();
    let levels = (0..=tree.max_depth())
        .map(|n| {
            tree.codes(n)
                .into_iter()
                .zip(mu.masses(n))
                .map(|(c, m)| MassEntry {
                    level: c.level(),
                    index: c.index().to_vec(),
                    mass: exact::format_rational(m),
                })
                .collect()
        })
        .collect();
    let file = MeasureFile {
        d: tree.dim(),
        max_depth: tree.max_depth(),
        leaf_model: mu.leaf_model().clone(),
        levels,
        construction: construction.cloned(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Rebuilds from the leaf masses and rejects files whose interior masses
/// disagree with the leaf sums.
pub fn measure_from_json(text: &str) -> Result<(DyadicMeasureTree, Option<Construction>)> {
    let file: MeasureFile = serde_json::from_str(text)?;
    if file.levels.len() != file.max_depth as usize + 1 {
        return Err(DimError::invalid("max_depth does not match the number of levels"));
    }
    let mut code_levels = Vec::with_capacity(file.levels.len());
    let mut mass_levels: Vec<Vec<Rational>> = Vec::with_capacity(file.levels.len());
    for level in &file.levels {
        let mut codes = Vec::with_capacity(level.len());
        let mut masses = Vec::with_capacity(level.len());
        for e in level {
            codes.push(DyadicCode::new(e.level, e.index.clone())?);
            masses.push(exact::parse_rational(&e.mass)?);
        }
        code_levels.push(codes);
        mass_levels.push(masses);
    }
    let keys = levels_to_keys(file.d, &code_levels)?;
    // masses are listed in file order; sort with the keys
    let mut leaf: Vec<(u128, Rational)> = keys
        .last()
        .unwrap()
        .iter()
        .copied()
        .zip(mass_levels.last().unwrap().iter().cloned())
        .collect();
    leaf.sort_by_key(|p| p.0);
    let tree = DyadicSetTree::from_levels(file.d, keys.clone())?;
    let leaf_model = match file.leaf_model {
        LeafModel::AtomAtPoint(points) => {
            let mut paired: Vec<(u128, _)> = keys.last().unwrap().iter().copied().zip(points).collect();
            paired.sort_by_key(|p| p.0);
            LeafModel::AtomAtPoint(paired.into_iter().map(|p| p.1).collect())
        }
        other => other,
    };
    let mu = DyadicMeasureTree::from_leaf_masses(
        tree,
        leaf.into_iter().map(|p| p.1).collect(),
        leaf_model,
    )?;
    for (n, (level_keys, masses)) in keys.iter().zip(&mass_levels).enumerate() {
        for (key, mass) in level_keys.iter().zip(masses) {
            let i = mu.support().position(n as u32, *key).unwrap();
            if &mu.masses(n as u32)[i] != mass {
                return Err(DimError::invalid(format!(
                    "mass of level-{n} cube {key} is not the sum of its children"
                )));
            }
        }
    }
    Ok((mu, file.construction))
}

/// Loads a set or measure file, telling them apart by the leaf model field.
pub fn read_artifact(path: &Path) -> Result<Artifact> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("leaf_model").is_some() {
        let (mu, c) = measure_from_json(&text)?;
        Ok(Artifact::Measure(mu, c))
    } else {
        let (set, c) = set_from_json(&text)?;
        Ok(Artifact::Set(set, c))
    }
}

pub fn write_set(path: &Path, tree: &DyadicSetTree, construction: Option<&Construction>) -> Result<()> {
    fs::write(path, set_to_json(tree, construction)?)?;
    Ok(())
}

pub fn write_measure(
    path: &Path,
    mu: &DyadicMeasureTree,
    construction: Option<&Construction>,
) -> Result<()> {
    fs::write(path, measure_to_json(mu, construction)?)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// One point per row, `d` numeric columns; a non-numeric first row is
/// treated as a header. Every row must have the same width.
pub fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse).collect();
        match parsed {
            Ok(p) => {
                if let Some(first) = points.first() {
                    let first: &Vec<f64> = first;
                    if first.len() != p.len() {
                        return Err(DimError::invalid(format!(
                            "row {} has {} columns, expected {}",
                            row + 1,
                            p.len(),
                            first.len()
                        )));
                    }
                }
                points.push(p);
            }
            Err(_) if row == 0 => continue,
            Err(e) => {
                return Err(DimError::invalid(format!("row {}: {e}", row + 1)));
            }
        }
    }
    if points.is_empty() {
        return Err(DimError::invalid("no points in CSV input"));
    }
    Ok(points)
}

/// Writes rows under the given header.
pub fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: &[[f64; N]]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row.iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

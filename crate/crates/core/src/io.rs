//! JSON file formats for measures, operator fields, Haar systems and shifts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haar::{HaarFunction, HaarSystem};
use crate::lattice::{Cube, DyadicLattice, Measure};
use crate::opalgebra::{Mat, OperatorField};
use crate::shift::{HaarShift, Symbol};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub d: u32,
    #[serde(rename = "K")]
    pub depth: u32,
    pub leaf_mass: Vec<f64>,
}

/// Leaves are row-major `n × n` matrices of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub d: u32,
    #[serde(rename = "K")]
    pub depth: u32,
    pub n: usize,
    pub leaves: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    #[serde(rename = "Q")]
    pub cube: (u32, u64),
    pub coeffs: Vec<f64>,
    #[serde(default)]
    pub zero: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub d: u32,
    #[serde(rename = "K")]
    pub depth: u32,
    pub cancellative: bool,
    pub functions: Vec<FunctionFile>,
    /// Measure the system is adapted to, for standalone validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolFile {
    #[serde(rename = "Q")]
    pub q: (u32, u64),
    #[serde(rename = "R")]
    pub r: (u32, u64),
    #[serde(rename = "S")]
    pub s: (u32, u64),
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// `"canonical"`, `"indicators"`, or an inline system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Named(String),
    Inline(Box<SystemFile>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftFile {
    pub r: u32,
    pub s: u32,
    pub symbols: Vec<SymbolFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<SystemRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<SystemRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureFile>,
}

fn format_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(format_err)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("file types serialize")
}

fn cube(lattice: &DyadicLattice, (level, index): (u32, u64)) -> Result<Cube> {
    let c = Cube::new(level, index);
    lattice.check(c)?;
    Ok(c)
}

impl MeasureFile {
    pub fn from_measure(measure: &Measure) -> Self {
        MeasureFile {
            d: measure.lattice().dim(),
            depth: measure.lattice().depth(),
            leaf_mass: measure.leaf_masses().to_vec(),
        }
    }

    pub fn to_measure(&self) -> Result<Measure> {
        Measure::new(DyadicLattice::new(self.d, self.depth)?, self.leaf_mass.clone())
    }
}

impl FieldFile {
    pub fn from_field(field: &OperatorField) -> Self {
        let n = field.n();
        FieldFile {
            d: field.lattice().dim(),
            depth: field.lattice().depth(),
            n,
            leaves: field
                .leaves()
                .iter()
                .map(|m| {
                    (0..n * n)
                        .map(|k| {
                            let z = m[(k / n, k % n)];
                            [z.re, z.im]
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn to_field(&self) -> Result<OperatorField> {
        let lattice = DyadicLattice::new(self.d, self.depth)?;
        let n = self.n;
        let mut leaves = Vec::with_capacity(self.leaves.len());
        for (i, entries) in self.leaves.iter().enumerate() {
            if entries.len() != n * n {
                return Err(Error::ShapeMismatch(format!(
                    "leaf {i} has {} entries, expected {}",
                    entries.len(),
                    n * n
                )));
            }
            leaves.push(Mat::from_fn(n, n, |a, b| {
                let [re, im] = entries[a * n + b];
                Complex64::new(re, im)
            }));
        }
        OperatorField::new(lattice, n, leaves)
    }
}

impl SystemFile {
    pub fn from_system(system: &HaarSystem) -> Self {
        let lattice = system.lattice();
        SystemFile {
            d: lattice.dim(),
            depth: lattice.depth(),
            cancellative: system.is_cancellative(),
            functions: system
                .functions()
                .iter()
                .map(|h| FunctionFile {
                    cube: (h.cube.level, h.cube.index),
                    coeffs: h.coeffs.clone(),
                    zero: h.zero,
                })
                .collect(),
            measure: None,
        }
    }

    pub fn to_system(&self) -> Result<HaarSystem> {
        let lattice = DyadicLattice::new(self.d, self.depth)?;
        let functions = self
            .functions
            .iter()
            .map(|h| {
                Ok(HaarFunction {
                    cube: cube(&lattice, h.cube)?,
                    coeffs: h.coeffs.clone(),
                    zero: h.zero,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        HaarSystem::new(lattice, self.cancellative, functions)
    }
}

impl SystemRef {
    pub fn resolve(&self, measure: &Measure) -> Result<HaarSystem> {
        let system = match self {
            SystemRef::Named(name) => match name.as_str() {
                "canonical" => HaarSystem::canonical(measure),
                "indicators" => HaarSystem::normalized_indicators(measure),
                other => return Err(Error::UnknownPreset(other.to_string())),
            },
            SystemRef::Inline(file) => file.to_system()?,
        };
        if system.lattice() != measure.lattice() {
            return Err(Error::ShapeMismatch("Haar system and measure lattices differ".into()));
        }
        Ok(system)
    }
}

impl ShiftFile {
    pub fn from_shift(shift: &HaarShift) -> Self {
        let pair = |c: Cube| (c.level, c.index);
        ShiftFile {
            r: shift.r(),
            s: shift.s(),
            symbols: shift
                .symbols()
                .iter()
                .map(|sym| SymbolFile {
                    q: pair(sym.q),
                    r: pair(sym.r),
                    s: pair(sym.s),
                    re: sym.alpha.re,
                    im: sym.alpha.im,
                })
                .collect(),
            phi: Some(SystemRef::Inline(Box::new(SystemFile::from_system(shift.phi())))),
            psi: Some(SystemRef::Inline(Box::new(SystemFile::from_system(shift.psi())))),
            measure: None,
        }
    }

    /// Builds the shift over `measure`; absent systems default to canonical.
    pub fn to_shift(&self, measure: &Measure) -> Result<HaarShift> {
        let lattice = measure.lattice();
        let canonical = SystemRef::Named("canonical".into());
        let phi = self.phi.as_ref().unwrap_or(&canonical).resolve(measure)?;
        let psi = self.psi.as_ref().unwrap_or(&canonical).resolve(measure)?;
        let symbols = self
            .symbols
            .iter()
            .map(|s| {
                Ok(Symbol {
                    q: cube(lattice, s.q)?,
                    r: cube(lattice, s.r)?,
                    s: cube(lattice, s.s)?,
                    alpha: Complex64::new(s.re, s.im),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        HaarShift::new(self.r, self.s, phi, psi, symbols)
    }
}

//! Generalized Haar systems adapted to a measure: one function per non-leaf
//! cube, supported on the cube and constant on its children.
//!
//! Leaf cubes carry the zero function; a step function at leaf resolution
//! cannot be split further.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Cube, DyadicLattice, Measure};
use crate::opalgebra::{average, Mat, OperatorField};

/// Tolerance used by the system validator for mean-zero and unit-norm checks.
pub const HAAR_TOL: f64 = 1e-10;

/// Gram-Schmidt vectors below this `L_2(μ)` norm are dropped.
const GRAM_SCHMIDT_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct HaarFunction {
    pub cube: Cube,
    /// Value on each child of `cube`, in child order.
    pub coeffs: Vec<f64>,
    pub zero: bool,
}

impl HaarFunction {
    pub fn zero(cube: Cube, branching: usize) -> Self {
        HaarFunction {
            cube,
            coeffs: vec![0.0; branching],
            zero: true,
        }
    }

    /// Value at a leaf (0 outside the cube).
    pub fn value_at(&self, lattice: &DyadicLattice, leaf: usize) -> f64 {
        if self.zero || !lattice.leaf_range(self.cube).contains(&leaf) {
            return 0.0;
        }
        let child = lattice.cube_of_leaf(leaf, self.cube.level + 1);
        self.coeffs[lattice.child_position(child)]
    }

    /// `∫ φ dμ`.
    pub fn integral(&self, measure: &Measure) -> f64 {
        self.weighted(measure, |c| c)
    }

    pub fn l2_norm_squared(&self, measure: &Measure) -> f64 {
        self.weighted(measure, |c| c * c)
    }

    /// `‖φ‖_{L_1(μ)}`.
    pub fn l1_norm(&self, measure: &Measure) -> f64 {
        self.weighted(measure, f64::abs)
    }

    /// μ-essential supremum of `|φ|`: children of zero mass are ignored.
    pub fn sup_norm(&self, measure: &Measure) -> f64 {
        if self.zero {
            return 0.0;
        }
        let lattice = measure.lattice();
        lattice
            .children(self.cube)
            .zip(&self.coeffs)
            .filter(|(child, _)| measure.mass(*child) > 0.0)
            .map(|(_, c)| c.abs())
            .fold(0.0, f64::max)
    }

    fn weighted(&self, measure: &Measure, g: impl Fn(f64) -> f64) -> f64 {
        if self.zero {
            return 0.0;
        }
        measure
            .lattice()
            .children(self.cube)
            .zip(&self.coeffs)
            .map(|(child, &c)| g(c) * measure.mass(child))
            .sum()
    }
}

/// One function per non-leaf cube, indexed by cube id.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarSystem {
    lattice: DyadicLattice,
    cancellative: bool,
    functions: Vec<HaarFunction>,
}

impl HaarSystem {
    /// `functions` must list exactly the non-leaf cubes in level order.
    pub fn new(
        lattice: DyadicLattice,
        cancellative: bool,
        functions: Vec<HaarFunction>,
    ) -> Result<Self> {
        let expected = lattice.num_cubes() - lattice.num_leaves();
        if functions.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} Haar functions for {expected} non-leaf cubes",
                functions.len()
            )));
        }
        for (id, h) in functions.iter().enumerate() {
            if h.cube != lattice.cube_from_id(id) || h.coeffs.len() != lattice.branching() {
                return Err(Error::ShapeMismatch(format!(
                    "Haar function {id} is attached to {:?} with {} coefficients",
                    h.cube,
                    h.coeffs.len()
                )));
            }
        }
        Ok(HaarSystem {
            lattice,
            cancellative,
            functions,
        })
    }

    /// Builds a system from a per-cube constructor.
    pub fn from_fn(
        lattice: DyadicLattice,
        cancellative: bool,
        mut build: impl FnMut(Cube) -> HaarFunction,
    ) -> Self {
        let functions = lattice.inner_cubes().map(&mut build).collect();
        HaarSystem {
            lattice,
            cancellative,
            functions,
        }
    }

    /// The canonical cancellative system of [`canonical_haar`].
    pub fn canonical(measure: &Measure) -> Self {
        Self::from_fn(*measure.lattice(), true, |q| canonical_haar(measure, q))
    }

    /// Non-cancellative system of normalized indicators `1_Q / √μ(Q)`.
    pub fn normalized_indicators(measure: &Measure) -> Self {
        let lattice = *measure.lattice();
        Self::from_fn(lattice, false, |q| {
            let mass = measure.mass(q);
            if mass > 0.0 {
                HaarFunction {
                    cube: q,
                    coeffs: vec![mass.sqrt().recip(); lattice.branching()],
                    zero: false,
                }
            } else {
                HaarFunction::zero(q, lattice.branching())
            }
        })
    }

    pub fn lattice(&self) -> &DyadicLattice {
        &self.lattice
    }

    pub fn is_cancellative(&self) -> bool {
        self.cancellative
    }

    pub fn functions(&self) -> &[HaarFunction] {
        &self.functions
    }

    /// The function attached to `cube`, or `None` for leaf cubes.
    pub fn get(&self, cube: Cube) -> Option<&HaarFunction> {
        if self.lattice.is_leaf(cube) {
            None
        } else {
            self.functions.get(self.lattice.cube_id(cube))
        }
    }
}

/// Deterministic Haar function on `cube`: `A` is the first child of positive
/// mass, `B` the union of the other children, and the function takes the two
/// values that make it mean zero with unit `L_2(μ)` norm.
pub fn canonical_haar(measure: &Measure, cube: Cube) -> HaarFunction {
    let lattice = measure.lattice();
    let branching = lattice.branching();
    let masses = measure.child_masses(cube);
    let Some(first) = masses.iter().position(|&m| m > 0.0) else {
        return HaarFunction::zero(cube, branching);
    };
    let m_a = masses[first];
    let m_b: f64 = masses.iter().enumerate().filter(|&(j, _)| j != first).map(|(_, m)| m).sum();
    let m = m_a + m_b;
    if m <= 0.0 || m_b <= 0.0 {
        return HaarFunction::zero(cube, branching);
    }
    let on_a = (m_b / (m_a * m)).sqrt();
    let on_b = -(m_a / (m_b * m)).sqrt();
    let coeffs = (0..branching)
        .map(|j| if j == first { on_a } else { on_b })
        .collect();
    HaarFunction {
        cube,
        coeffs,
        zero: false,
    }
}

/// Orthonormal basis of the mean-zero step functions on the children of `cube`.
pub fn difference_basis(measure: &Measure, cube: Cube) -> Vec<HaarFunction> {
    let lattice = measure.lattice();
    let masses = measure.child_masses(cube);
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let ip = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(&masses).map(|((x, y), m)| x * y * m).sum()
    };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..lattice.branching() {
        // 1_{child_j} - μ(child_j)/μ(Q) · 1_Q
        let mut v: Vec<f64> = (0..lattice.branching())
            .map(|i| f64::from(u8::from(i == j)) - masses[j] / total)
            .collect();
        for _ in 0..2 {
            for e in &basis {
                let proj = ip(&v, e);
                v.iter_mut().zip(e).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = ip(&v, &v).sqrt();
        if norm < GRAM_SCHMIDT_FLOOR {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
        .into_iter()
        .map(|coeffs| HaarFunction {
            cube,
            coeffs,
            zero: false,
        })
        .collect()
}

/// `⟨f, φ⟩ = ∫ f φ dμ`, an `n × n` matrix.
pub fn pair(f: &OperatorField, phi: &HaarFunction, measure: &Measure) -> Mat {
    let n = f.n();
    let mut acc = Mat::zeros(n, n);
    if phi.zero {
        return acc;
    }
    let lattice = measure.lattice();
    for (child, &c) in lattice.children(phi.cube).zip(&phi.coeffs) {
        if c == 0.0 {
            continue;
        }
        for leaf in lattice.leaf_range(child) {
            let w = measure.leaf_mass(leaf) * c;
            if w != 0.0 {
                acc += f.leaf(leaf) * Complex64::new(w, 0.0);
            }
        }
    }
    acc
}

/// Reconstruction `⟨f⟩_root + Σ_Q Σ_h ⟨f, h⟩ h` over the full difference bases.
pub fn haar_expansion(f: &OperatorField, measure: &Measure) -> OperatorField {
    let lattice = *f.lattice();
    let mut recon = OperatorField::constant(lattice, &average(f, measure, Cube::ROOT));
    for q in lattice.inner_cubes() {
        for e in difference_basis(measure, q) {
            let coeff = pair(f, &e, measure);
            for leaf in lattice.leaf_range(q) {
                let v = e.value_at(&lattice, leaf);
                if v != 0.0 {
                    recon.leaves_mut()[leaf] += &coeff * Complex64::new(v, 0.0);
                }
            }
        }
    }
    recon
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubeCheck {
    pub cube: Cube,
    pub mass: f64,
    pub zero: bool,
    /// Coefficient count matches the number of children; support and
    /// constancy on children then hold by construction.
    pub support_ok: bool,
    pub constancy_ok: bool,
    /// `|∫ φ dμ|`; `None` when the system is non-cancellative.
    pub mean_residual: Option<f64>,
    pub mean_ok: bool,
    /// `|‖φ‖² − 1|`, or 0 for zero functions.
    pub norm_residual: f64,
    pub norm_ok: bool,
    /// Zero function on a cube of positive mass whose difference space is trivial.
    pub degenerate_warning: bool,
}

impl CubeCheck {
    pub fn passed(&self) -> bool {
        self.support_ok && self.constancy_ok && self.mean_ok && self.norm_ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemReport {
    pub cancellative: bool,
    pub cubes: Vec<CubeCheck>,
    /// Largest `|∫ φ_Q φ_{Q'} dμ − δ_{QQ'}|` over non-zero members (cancellative systems only).
    pub gram_residual: Option<f64>,
    pub failures: usize,
    pub warnings: usize,
}

impl SystemReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.gram_residual.is_none_or(|r| r <= 1e-9)
    }
}

pub fn validate_system(system: &HaarSystem, measure: &Measure) -> SystemReport {
    let lattice = measure.lattice();
    let cubes: Vec<CubeCheck> = system
        .functions()
        .iter()
        .map(|h| {
            let mass = measure.mass(h.cube);
            let shape_ok = h.coeffs.len() == lattice.branching()
                && h.coeffs.iter().all(|c| c.is_finite());
            let scale = h.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
            let mean_residual = system.cancellative.then(|| h.integral(measure).abs());
            let mean_ok = mean_residual.is_none_or(|r| r <= HAAR_TOL * scale * mass);
            let positive_children = measure.child_masses(h.cube).iter().filter(|&&m| m > 0.0).count();
            let (norm_residual, norm_ok, degenerate_warning) = if h.zero {
                // a zero member is admissible on null cubes, and on cubes without
                // room for a unit-norm function of the required kind
                let trivial = if system.cancellative {
                    positive_children <= 1
                } else {
                    positive_children == 0
                };
                (0.0, mass == 0.0 || trivial, mass > 0.0 && trivial)
            } else {
                let r = (h.l2_norm_squared(measure) - 1.0).abs();
                (r, r <= HAAR_TOL, false)
            };
            CubeCheck {
                cube: h.cube,
                mass,
                zero: h.zero,
                support_ok: shape_ok,
                constancy_ok: shape_ok,
                mean_residual,
                mean_ok,
                norm_residual,
                norm_ok,
                degenerate_warning,
            }
        })
        .collect();
    let gram_residual = system.cancellative.then(|| gram_residual(system, measure));
    let failures = cubes.iter().filter(|c| !c.passed()).count();
    let warnings = cubes.iter().filter(|c| c.degenerate_warning).count();
    SystemReport {
        cancellative: system.cancellative,
        cubes,
        gram_residual,
        failures,
        warnings,
    }
}

/// Largest deviation of the Gram matrix of the non-zero members from the identity,
/// evaluated by leaf quadrature.
pub fn gram_residual(system: &HaarSystem, measure: &Measure) -> f64 {
    let lattice = measure.lattice();
    let members: Vec<&HaarFunction> = system
        .functions()
        .iter()
        .filter(|h| !h.zero && measure.mass(h.cube) > 0.0)
        .collect();
    let values: Vec<Vec<f64>> = members
        .iter()
        .map(|h| {
            (0..lattice.num_leaves())
                .map(|leaf| h.value_at(lattice, leaf))
                .collect()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (i, a) in values.iter().enumerate() {
        for (j, b) in values.iter().enumerate().skip(i) {
            // disjoint supports are orthogonal without quadrature
            let (p, q) = (members[i].cube, members[j].cube);
            if !lattice.is_subcube(q, p) && !lattice.is_subcube(p, q) {
                continue;
            }
            let g: f64 = a
                .iter()
                .zip(b)
                .enumerate()
                .map(|(leaf, (x, y))| x * y * measure.leaf_mass(leaf))
                .sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

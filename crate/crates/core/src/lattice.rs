//! Finite dyadic lattices and measures given by leaf masses.
//!
//! A lattice has one root cube at level 0 and is refined `depth` times; every
//! non-leaf cube splits into `2^dim` children. Cubes are addressed by
//! `(level, index)` where the index is the root-to-cube path read as base
//! `2^dim` digits, each digit being the lexicographic position of the child
//! inside its parent (the bits of the digit are the per-axis half choices,
//! first axis most significant). With this addressing the leaves below a cube
//! form a contiguous index range, and for `dim = 1` the leaf order is the
//! left-to-right spatial order.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on `dim * depth`, i.e. at most `2^24` leaves.
pub const MAX_LEAF_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cube {
    pub level: u32,
    pub index: u64,
}

impl Cube {
    pub const ROOT: Cube = Cube { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Self {
        Cube { level, index }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicLattice {
    dim: u32,
    depth: u32,
}

impl DyadicLattice {
    /// Builds the lattice of dimension `dim` refined down to level `depth`.
    pub fn new(dim: u32, depth: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        match dim.checked_mul(depth) {
            Some(bits) if bits <= MAX_LEAF_BITS => Ok(DyadicLattice { dim, depth }),
            _ => Err(Error::LatticeTooLarge {
                dim,
                depth,
                max_bits: MAX_LEAF_BITS,
            }),
        }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Number of children of a non-leaf cube.
    pub fn branching(&self) -> usize {
        1 << self.dim
    }

    pub fn cubes_at(&self, level: u32) -> usize {
        1 << (self.dim * level)
    }

    pub fn num_leaves(&self) -> usize {
        self.cubes_at(self.depth)
    }

    pub fn num_cubes(&self) -> usize {
        (0..=self.depth).map(|k| self.cubes_at(k)).sum()
    }

    pub fn root(&self) -> Cube {
        Cube::ROOT
    }

    pub fn contains_cube(&self, cube: Cube) -> bool {
        cube.level <= self.depth && (cube.index as usize) < self.cubes_at(cube.level)
    }

    pub fn check(&self, cube: Cube) -> Result<()> {
        if self.contains_cube(cube) {
            Ok(())
        } else {
            Err(Error::CubeOutOfRange(cube))
        }
    }

    pub fn is_leaf(&self, cube: Cube) -> bool {
        cube.level == self.depth
    }

    /// Flat id in level order; ids of level `k` start at `level_offset(k)`.
    pub fn cube_id(&self, cube: Cube) -> usize {
        self.level_offset(cube.level) + cube.index as usize
    }

    pub fn level_offset(&self, level: u32) -> usize {
        (0..level).map(|k| self.cubes_at(k)).sum()
    }

    pub fn cube_from_id(&self, id: usize) -> Cube {
        let mut rest = id;
        for level in 0..=self.depth {
            let count = self.cubes_at(level);
            if rest < count {
                return Cube::new(level, rest as u64);
            }
            rest -= count;
        }
        panic!("cube id {id} out of range");
    }

    pub fn level_cubes(&self, level: u32) -> impl Iterator<Item = Cube> {
        (0..self.cubes_at(level) as u64).map(move |i| Cube::new(level, i))
    }

    /// All cubes, coarsest level first.
    pub fn cubes(&self) -> impl Iterator<Item = Cube> + '_ {
        (0..=self.depth).flat_map(move |k| self.level_cubes(k))
    }

    /// All non-leaf cubes, coarsest level first.
    pub fn inner_cubes(&self) -> impl Iterator<Item = Cube> + '_ {
        (0..self.depth).flat_map(move |k| self.level_cubes(k))
    }

    pub fn parent(&self, cube: Cube) -> Option<Cube> {
        (cube.level > 0).then(|| Cube::new(cube.level - 1, cube.index >> self.dim))
    }

    /// The ancestor `generations` levels above `cube` (`cube` itself for 0).
    pub fn ancestor(&self, cube: Cube, generations: u32) -> Option<Cube> {
        (generations <= cube.level).then(|| {
            Cube::new(
                cube.level - generations,
                cube.index >> (self.dim * generations),
            )
        })
    }

    /// Position of `cube` among the children of its parent.
    pub fn child_position(&self, cube: Cube) -> usize {
        (cube.index & ((1u64 << self.dim) - 1)) as usize
    }

    pub fn child(&self, cube: Cube, position: usize) -> Cube {
        debug_assert!(position < self.branching());
        Cube::new(cube.level + 1, (cube.index << self.dim) | position as u64)
    }

    pub fn children(&self, cube: Cube) -> impl Iterator<Item = Cube> + '_ {
        let last = if self.is_leaf(cube) { 0 } else { self.branching() };
        (0..last).map(move |j| self.child(cube, j))
    }

    /// The `2^{r d}` cubes `r` levels below `cube` that partition it, in index order.
    pub fn descendants(&self, cube: Cube, generations: u32) -> Result<Vec<Cube>> {
        self.check(cube)?;
        if cube.level + generations > self.depth {
            return Err(Error::BeyondLeafLevel {
                cube,
                generations,
                depth: self.depth,
            });
        }
        let shift = self.dim * generations;
        let first = cube.index << shift;
        Ok((first..first + (1u64 << shift))
            .map(|i| Cube::new(cube.level + generations, i))
            .collect())
    }

    /// Every cube of the subtree rooted at `cube`, including `cube` itself.
    pub fn subtree(&self, cube: Cube) -> impl Iterator<Item = Cube> + '_ {
        (cube.level..=self.depth).flat_map(move |k| {
            let shift = self.dim * (k - cube.level);
            let first = cube.index << shift;
            (first..first + (1u64 << shift)).map(move |i| Cube::new(k, i))
        })
    }

    /// Leaf indices below `cube`.
    pub fn leaf_range(&self, cube: Cube) -> Range<usize> {
        let shift = self.dim * (self.depth - cube.level);
        let first = (cube.index << shift) as usize;
        first..first + (1usize << shift)
    }

    /// The level-`level` cube containing leaf `leaf`.
    pub fn cube_of_leaf(&self, leaf: usize, level: u32) -> Cube {
        Cube::new(level, (leaf >> (self.dim * (self.depth - level))) as u64)
    }

    /// Whether `inner` is a (not necessarily proper) dyadic subcube of `outer`.
    pub fn is_subcube(&self, inner: Cube, outer: Cube) -> bool {
        inner.level >= outer.level
            && (inner.index >> (self.dim * (inner.level - outer.level))) == outer.index
    }

    /// Integer coordinates of the cube's lower corner in units of its side length.
    pub fn coordinates(&self, cube: Cube) -> Vec<u64> {
        let mut coords = vec![0u64; self.dim as usize];
        for step in 0..cube.level {
            let digit = cube.index >> (self.dim * (cube.level - 1 - step));
            for (axis, c) in coords.iter_mut().enumerate() {
                let bit = (digit >> (self.dim as usize - 1 - axis)) & 1;
                *c = (*c << 1) | bit;
            }
        }
        coords
    }
}

/// A nonnegative measure on the root cube, given by the masses of the leaves.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    lattice: DyadicLattice,
    leaf_mass: Vec<f64>,
    cube_mass: Vec<f64>,
}

impl Measure {
    /// Wraps leaf masses; only the length is checked here, see [`validate_measure`].
    pub fn new(lattice: DyadicLattice, leaf_mass: Vec<f64>) -> Result<Self> {
        if leaf_mass.len() != lattice.num_leaves() {
            return Err(Error::ShapeMismatch(format!(
                "{} leaf masses for a lattice with {} leaves",
                leaf_mass.len(),
                lattice.num_leaves()
            )));
        }
        let mut cube_mass = vec![0.0; lattice.num_cubes()];
        let leaf_offset = lattice.level_offset(lattice.depth());
        cube_mass[leaf_offset..].copy_from_slice(&leaf_mass);
        for level in (0..lattice.depth()).rev() {
            for cube in lattice.level_cubes(level) {
                let total = lattice
                    .children(cube)
                    .map(|c| cube_mass[lattice.cube_id(c)])
                    .sum();
                cube_mass[lattice.cube_id(cube)] = total;
            }
        }
        Ok(Measure {
            lattice,
            leaf_mass,
            cube_mass,
        })
    }

    pub fn uniform(lattice: DyadicLattice) -> Self {
        let n = lattice.num_leaves();
        Measure::new(lattice, vec![1.0 / n as f64; n]).expect("length matches")
    }

    pub fn lattice(&self) -> &DyadicLattice {
        &self.lattice
    }

    pub fn leaf_masses(&self) -> &[f64] {
        &self.leaf_mass
    }

    pub fn leaf_mass(&self, leaf: usize) -> f64 {
        self.leaf_mass[leaf]
    }

    /// `μ(Q)`.
    pub fn mass(&self, cube: Cube) -> f64 {
        self.cube_mass[self.lattice.cube_id(cube)]
    }

    pub fn total(&self) -> f64 {
        self.mass(Cube::ROOT)
    }

    pub fn child_masses(&self, cube: Cube) -> Vec<f64> {
        self.lattice.children(cube).map(|c| self.mass(c)).collect()
    }
}

/// `μ(Q)`, additive over children.
pub fn cube_mass(measure: &Measure, cube: Cube) -> Result<f64> {
    measure.lattice().check(cube)?;
    Ok(measure.mass(cube))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MeasureIssue {
    NegativeMass { leaf: usize, mass: f64 },
    NonFinite { leaf: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureReport {
    pub valid: bool,
    pub issues: Vec<MeasureIssue>,
    pub total_mass: f64,
    /// `max μ(Q̂)/μ(Q)` over positive-mass cubes below the root; 0 when there are none.
    pub max_doubling_ratio: f64,
    /// The same maximum restricted to cubes of each level `1..=depth`.
    pub doubling_ratio_by_level: Vec<f64>,
}

pub fn validate_measure(measure: &Measure) -> MeasureReport {
    let mut issues = Vec::new();
    for (leaf, &m) in measure.leaf_masses().iter().enumerate() {
        if !m.is_finite() {
            issues.push(MeasureIssue::NonFinite { leaf });
        } else if m < 0.0 {
            issues.push(MeasureIssue::NegativeMass { leaf, mass: m });
        }
    }
    let lattice = measure.lattice();
    let doubling_ratio_by_level: Vec<f64> = (1..=lattice.depth())
        .map(|level| {
            lattice
                .level_cubes(level)
                .filter(|&c| measure.mass(c) > 0.0)
                .map(|c| measure.mass(lattice.parent(c).unwrap()) / measure.mass(c))
                .fold(0.0, f64::max)
        })
        .collect();
    MeasureReport {
        valid: issues.is_empty(),
        issues,
        total_mass: measure.total(),
        max_doubling_ratio: doubling_ratio_by_level.iter().copied().fold(0.0, f64::max),
        doubling_ratio_by_level,
    }
}

//! Matrix-valued step functions on a dyadic lattice: the algebra
//! `L_∞(μ) ⊗ M_n` at leaf resolution, with its trace, `L_p` norms, dyadic
//! conditional expectations and spectral calculus.

use std::ops::{Add, AddAssign, Mul, Sub, SubAssign};

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Cube, DyadicLattice, Measure};

pub type Mat = DMatrix<Complex64>;

/// Relative slack on the spectral cut `λ`; eigenvalues up to `λ(1 + tol)` count as `≤ λ`.
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-12;

/// Frobenius residual allowed for `H = H*` before a matrix is rejected.
pub const HERMITIAN_TOL: f64 = 1e-10;

const EIGEN_MAX_ITER: usize = 10_000;

/// One `n × n` complex matrix per leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorField {
    lattice: DyadicLattice,
    n: usize,
    leaves: Vec<Mat>,
}

impl OperatorField {
    pub fn new(lattice: DyadicLattice, n: usize, leaves: Vec<Mat>) -> Result<Self> {
        if leaves.len() != lattice.num_leaves() {
            return Err(Error::ShapeMismatch(format!(
                "{} leaf values for {} leaves",
                leaves.len(),
                lattice.num_leaves()
            )));
        }
        if let Some(bad) = leaves.iter().position(|m| m.shape() != (n, n)) {
            return Err(Error::ShapeMismatch(format!(
                "leaf {bad} has shape {:?}, expected {n}x{n}",
                leaves[bad].shape()
            )));
        }
        Ok(OperatorField { lattice, n, leaves })
    }

    pub fn zeros(lattice: DyadicLattice, n: usize) -> Self {
        Self::constant(lattice, &Mat::zeros(n, n))
    }

    pub fn identity(lattice: DyadicLattice, n: usize) -> Self {
        Self::constant(lattice, &Mat::identity(n, n))
    }

    pub fn constant(lattice: DyadicLattice, value: &Mat) -> Self {
        OperatorField {
            lattice,
            n: value.nrows(),
            leaves: vec![value.clone(); lattice.num_leaves()],
        }
    }

    pub fn from_fn(lattice: DyadicLattice, n: usize, mut f: impl FnMut(usize) -> Mat) -> Self {
        let leaves = (0..lattice.num_leaves()).map(&mut f).collect();
        OperatorField { lattice, n, leaves }
    }

    /// An `n = 1` field from real leaf values.
    pub fn scalar(lattice: DyadicLattice, values: &[f64]) -> Result<Self> {
        let leaves = values
            .iter()
            .map(|&v| Mat::from_element(1, 1, Complex64::new(v, 0.0)))
            .collect();
        Self::new(lattice, 1, leaves)
    }

    /// `1_Q ⊗ 1_M`.
    pub fn indicator(lattice: DyadicLattice, n: usize, cube: Cube) -> Self {
        let range = lattice.leaf_range(cube);
        Self::from_fn(lattice, n, |leaf| {
            if range.contains(&leaf) {
                Mat::identity(n, n)
            } else {
                Mat::zeros(n, n)
            }
        })
    }

    /// The field equal to `value(Q)` on each cube `Q` of the given level.
    pub fn piecewise(
        lattice: DyadicLattice,
        n: usize,
        level: u32,
        mut value: impl FnMut(Cube) -> Mat,
    ) -> Self {
        let mut leaves = Vec::with_capacity(lattice.num_leaves());
        for cube in lattice.level_cubes(level) {
            let v = value(cube);
            for _ in lattice.leaf_range(cube) {
                leaves.push(v.clone());
            }
        }
        OperatorField { lattice, n, leaves }
    }

    pub fn lattice(&self) -> &DyadicLattice {
        &self.lattice
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn leaf(&self, leaf: usize) -> &Mat {
        &self.leaves[leaf]
    }

    pub fn leaves(&self) -> &[Mat] {
        &self.leaves
    }

    pub fn leaves_mut(&mut self) -> &mut [Mat] {
        &mut self.leaves
    }

    pub fn into_leaves(self) -> Vec<Mat> {
        self.leaves
    }

    pub fn map(&self, f: impl FnMut(&Mat) -> Mat) -> Self {
        OperatorField {
            lattice: self.lattice,
            n: self.n,
            leaves: self.leaves.iter().map(f).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(&Mat, &Mat) -> Mat) -> Self {
        self.assert_compatible(other);
        OperatorField {
            lattice: self.lattice,
            n: self.n,
            leaves: self
                .leaves
                .iter()
                .zip(&other.leaves)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.lattice != other.lattice || self.n != other.n {
            return Err(Error::ShapeMismatch(format!(
                "fields over {:?}/n={} and {:?}/n={}",
                self.lattice, self.n, other.lattice, other.n
            )));
        }
        Ok(())
    }

    fn assert_compatible(&self, other: &Self) {
        if let Err(e) = self.check_compatible(other) {
            panic!("{e}");
        }
    }

    pub fn check_measure(&self, measure: &Measure) -> Result<()> {
        if &self.lattice != measure.lattice() {
            return Err(Error::ShapeMismatch(
                "field and measure live on different lattices".into(),
            ));
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        self.map(|m| m.adjoint())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|m| m * c)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    /// Pointwise `a · self · b`.
    pub fn sandwich(&self, a: &Self, b: &Self) -> Self {
        self.assert_compatible(a);
        self.assert_compatible(b);
        OperatorField {
            lattice: self.lattice,
            n: self.n,
            leaves: (0..self.leaves.len())
                .map(|i| &a.leaves[i] * &self.leaves[i] * &b.leaves[i])
                .collect(),
        }
    }

    /// Zeroes the leaves of zero mass.
    pub fn on_support(&self, measure: &Measure) -> Self {
        let mut out = self.clone();
        for (leaf, m) in out.leaves.iter_mut().enumerate() {
            if measure.leaf_mass(leaf) <= 0.0 {
                m.fill(Complex64::new(0.0, 0.0));
            }
        }
        out
    }

    /// Largest per-leaf Frobenius norm of `self - self*`.
    pub fn hermitian_residual(&self) -> f64 {
        self.leaves
            .iter()
            .map(|m| (m - m.adjoint()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        self.leaves.iter().all(|m| {
            (m - m.adjoint()).norm() <= HERMITIAN_TOL * m.norm().max(1.0)
        })
    }

    /// Smallest eigenvalue over all leaves (the field must be Hermitian).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut lowest = f64::INFINITY;
        for m in &self.leaves {
            lowest = lowest.min(min_eigenvalue(m)?);
        }
        Ok(lowest)
    }

    /// Fails with `NotPositive` at the first leaf whose lowest eigenvalue is below `-tol`.
    pub fn check_positive(&self, tol: f64) -> Result<()> {
        for (leaf, m) in self.leaves.iter().enumerate() {
            let lowest = min_eigenvalue(m).map_err(|e| match e {
                Error::NotHermitian { .. } => Error::NotPositive {
                    leaf,
                    min_eigenvalue: f64::NAN,
                },
                e => e,
            })?;
            if lowest < -tol * m.norm().max(1.0) {
                return Err(Error::NotPositive {
                    leaf,
                    min_eigenvalue: lowest,
                });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.leaves
            .iter()
            .all(|m| m.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

impl Add for &OperatorField {
    type Output = OperatorField;
    fn add(self, rhs: &OperatorField) -> OperatorField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &OperatorField {
    type Output = OperatorField;
    fn sub(self, rhs: &OperatorField) -> OperatorField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Pointwise product.
impl Mul for &OperatorField {
    type Output = OperatorField;
    fn mul(self, rhs: &OperatorField) -> OperatorField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl AddAssign<&OperatorField> for OperatorField {
    fn add_assign(&mut self, rhs: &OperatorField) {
        self.assert_compatible(rhs);
        for (a, b) in self.leaves.iter_mut().zip(&rhs.leaves) {
            *a += b;
        }
    }
}

impl SubAssign<&OperatorField> for OperatorField {
    fn sub_assign(&mut self, rhs: &OperatorField) {
        self.assert_compatible(rhs);
        for (a, b) in self.leaves.iter_mut().zip(&rhs.leaves) {
            *a -= b;
        }
    }
}

/// `∫_Q f dμ`.
pub fn integral_over(f: &OperatorField, measure: &Measure, cube: Cube) -> Mat {
    let mut acc = Mat::zeros(f.n(), f.n());
    for leaf in f.lattice().leaf_range(cube) {
        let m = measure.leaf_mass(leaf);
        if m != 0.0 {
            acc += f.leaf(leaf) * Complex64::new(m, 0.0);
        }
    }
    acc
}

/// `⟨f⟩_Q = μ(Q)^{-1} ∫_Q f dμ`, and the zero matrix on null cubes.
pub fn average(f: &OperatorField, measure: &Measure, cube: Cube) -> Mat {
    let mass = measure.mass(cube);
    if mass <= 0.0 {
        return Mat::zeros(f.n(), f.n());
    }
    integral_over(f, measure, cube) / Complex64::new(mass, 0.0)
}

/// Averages of `f` on every cube of one level, in index order.
pub fn level_averages(f: &OperatorField, measure: &Measure, level: u32) -> Vec<Mat> {
    f.lattice()
        .level_cubes(level)
        .map(|c| average(f, measure, c))
        .collect()
}

fn check_level(lattice: &DyadicLattice, level: u32) -> Result<()> {
    if level > lattice.depth() {
        Err(Error::LevelOutOfRange {
            level,
            depth: lattice.depth(),
        })
    } else {
        Ok(())
    }
}

/// `E_k f = Σ_{Q ∈ D_k} ⟨f⟩_Q 1_Q`.
pub fn cond_exp(f: &OperatorField, measure: &Measure, level: u32) -> Result<OperatorField> {
    f.check_measure(measure)?;
    check_level(f.lattice(), level)?;
    let averages = level_averages(f, measure, level);
    Ok(OperatorField::piecewise(
        *f.lattice(),
        f.n(),
        level,
        |c| averages[c.index as usize].clone(),
    ))
}

/// `D_k f = E_k f − E_{k−1} f` for `k ≥ 1`.
pub fn mart_diff(f: &OperatorField, measure: &Measure, level: u32) -> Result<OperatorField> {
    if level == 0 {
        return Err(Error::NoParentLevel);
    }
    let fine = cond_exp(f, measure, level)?;
    let coarse = cond_exp(f, measure, level - 1)?;
    Ok(&fine - &coarse)
}

/// `τ(f) = Σ_leaf μ(leaf) Tr f(leaf)`.
pub fn trace_tau(f: &OperatorField, measure: &Measure) -> Complex64 {
    f.leaves()
        .iter()
        .enumerate()
        .map(|(leaf, m)| m.trace() * measure.leaf_mass(leaf))
        .sum()
}

/// The `L_2(𝒜)` inner product `τ(f* g)`.
pub fn inner(f: &OperatorField, g: &OperatorField, measure: &Measure) -> Complex64 {
    f.leaves()
        .iter()
        .zip(g.leaves())
        .enumerate()
        .map(|(leaf, (a, b))| a.dotc(b) * measure.leaf_mass(leaf))
        .sum()
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    match SVD::try_new(m.clone(), false, false, f64::EPSILON, EIGEN_MAX_ITER) {
        Some(svd) => svd.singular_values.iter().copied().collect(),
        // Fall back to the eigenvalues of m*m, which is always Hermitian PSD.
        None => hermitian_eigen(&(m.adjoint() * m))
            .map(|(vals, _)| vals.into_iter().map(|v| v.max(0.0).sqrt()).collect())
            .unwrap_or_else(|_| vec![f64::NAN; m.nrows()]),
    }
}

pub fn operator_norm(m: &Mat) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

pub fn schatten_norm(m: &Mat, p: f64) -> f64 {
    if p == 2.0 {
        return m.norm();
    }
    if p.is_infinite() {
        return operator_norm(m);
    }
    singular_values(m)
        .into_iter()
        .map(|s| s.powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// `‖f‖_{L_p(𝒜)}`: Schatten-`p` per leaf integrated against `μ`; `p = ∞` is
/// the largest operator norm over positive-mass leaves.
pub fn lp_norm(f: &OperatorField, p: f64, measure: &Measure) -> f64 {
    assert!(p >= 1.0, "lp_norm needs p >= 1, got {p}");
    let weighted = f
        .leaves()
        .iter()
        .enumerate()
        .filter(|(leaf, _)| measure.leaf_mass(*leaf) > 0.0);
    if p.is_infinite() {
        return weighted.map(|(_, m)| operator_norm(m)).fold(0.0, f64::max);
    }
    let total: f64 = weighted
        .map(|(leaf, m)| {
            let mass = measure.leaf_mass(leaf);
            if p == 2.0 {
                mass * m.norm_squared()
            } else if p == 1.0 {
                mass * singular_values(m).iter().sum::<f64>()
            } else {
                mass * schatten_norm(m, p).powf(p)
            }
        })
        .sum();
    total.powf(1.0 / p)
}

/// `τ(1_{(λ,∞)}(|f|))`: mass-weighted count of singular values strictly above `λ`.
pub fn distribution(f: &OperatorField, lambda: f64, measure: &Measure) -> f64 {
    f.leaves()
        .iter()
        .enumerate()
        .filter(|(leaf, _)| measure.leaf_mass(*leaf) > 0.0)
        .map(|(leaf, m)| {
            let count = singular_values(m).iter().filter(|&&s| s > lambda).count();
            measure.leaf_mass(leaf) * count as f64
        })
        .sum()
}

/// Same as [`distribution`] evaluated on many thresholds with one SVD per leaf.
pub fn distribution_curve(f: &OperatorField, lambdas: &[f64], measure: &Measure) -> Vec<f64> {
    let mut out = vec![0.0; lambdas.len()];
    for (leaf, m) in f.leaves().iter().enumerate() {
        let mass = measure.leaf_mass(leaf);
        if mass <= 0.0 {
            continue;
        }
        let svals = singular_values(m);
        for (slot, &lambda) in out.iter_mut().zip(lambdas) {
            *slot += mass * svals.iter().filter(|&&s| s > lambda).count() as f64;
        }
    }
    out
}

pub fn hermitian_residual(m: &Mat) -> f64 {
    (m - m.adjoint()).norm()
}

fn check_hermitian(m: &Mat) -> Result<()> {
    let residual = hermitian_residual(m);
    if residual > HERMITIAN_TOL * m.norm().max(1.0) || !residual.is_finite() {
        Err(Error::NotHermitian { residual })
    } else {
        Ok(())
    }
}

/// Eigenvalues (ascending) and matching orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    check_hermitian(m)?;
    let dim = m.nrows();
    if dim == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig =
        SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

pub fn min_eigenvalue(m: &Mat) -> Result<f64> {
    Ok(hermitian_eigen(m)?.0.first().copied().unwrap_or(0.0))
}

pub fn max_eigenvalue(m: &Mat) -> Result<f64> {
    Ok(hermitian_eigen(m)?.0.last().copied().unwrap_or(0.0))
}

/// Orthonormal basis (as columns) of the range of a projection.
pub fn range_basis(projection: &Mat) -> Result<Mat> {
    let (values, vectors) = hermitian_eigen(projection)?;
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.5).collect();
    Ok(Mat::from_fn(projection.nrows(), keep.len(), |r, c| {
        vectors[(r, keep[c])]
    }))
}

/// Orthonormal basis of the subspace of `range(basis)` spanned by the
/// eigenvectors of `basis* H basis` with eigenvalue `≤ λ(1 + tol)`.
///
/// `basis` has orthonormal columns; the result is expressed in the ambient space.
pub fn compressed_spectral_basis(h: &Mat, basis: &Mat, lambda: f64, tol: f64) -> Result<Mat> {
    check_hermitian(h)?;
    let dim = basis.ncols();
    if dim == 0 {
        return Ok(Mat::zeros(h.nrows(), 0));
    }
    let block = basis.adjoint() * h * basis;
    let (values, vectors) = hermitian_eigen(&((&block + block.adjoint()) * Complex64::new(0.5, 0.0)))?;
    let cut = lambda * (1.0 + tol);
    let keep: Vec<usize> = (0..dim).filter(|&i| values[i] <= cut).collect();
    let selected = Mat::from_fn(dim, keep.len(), |r, c| vectors[(r, keep[c])]);
    Ok(basis * selected)
}

pub fn projection_from_basis(basis: &Mat) -> Mat {
    basis * basis.adjoint()
}

/// Projection onto the span of eigenvectors of `H` inside `range(within)`
/// with eigenvalue in `[0, λ(1 + tol)]`, computed in the compressed block.
pub fn spectral_projection(h: &Mat, lambda: f64, within: &Mat, tol: f64) -> Result<Mat> {
    check_hermitian(within)?;
    let basis = range_basis(within)?;
    let kept = compressed_spectral_basis(h, &basis, lambda, tol)?;
    Ok(projection_from_basis(&kept))
}

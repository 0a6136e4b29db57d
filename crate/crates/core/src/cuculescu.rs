//! Cuculescu's construction: the decreasing stopping projections `q_k`
//! attached to a positive matrix-valued martingale and a height `λ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Cube, DyadicLattice, Measure};
use crate::opalgebra::{
    average, compressed_spectral_basis, level_averages, lp_norm, max_eigenvalue, min_eigenvalue,
    operator_norm, projection_from_basis, trace_tau, Mat, OperatorField, DEFAULT_SPECTRAL_TOL,
};
use crate::report::CheckRow;

/// Positivity slack for input fields, relative to each leaf's Frobenius norm.
pub const POSITIVITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CuculescuResult {
    lambda: f64,
    lattice: DyadicLattice,
    n: usize,
    /// Orthonormal basis of `range(q_Q)` per cube id.
    bases: Vec<Mat>,
    /// `q_Q` per cube id.
    projections: Vec<Mat>,
}

impl CuculescuResult {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lattice(&self) -> &DyadicLattice {
        &self.lattice
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `q_Q`.
    pub fn q_cube(&self, cube: Cube) -> &Mat {
        &self.projections[self.lattice.cube_id(cube)]
    }

    pub fn q_basis(&self, cube: Cube) -> &Mat {
        &self.bases[self.lattice.cube_id(cube)]
    }

    /// `p_Q = q_{Q̂} − q_Q`; zero at the root.
    pub fn p_cube(&self, cube: Cube) -> Mat {
        match self.lattice.parent(cube) {
            Some(parent) => self.q_cube(parent) - self.q_cube(cube),
            None => Mat::zeros(self.n, self.n),
        }
    }

    /// `q_k = Σ_{Q ∈ D_k} q_Q ⊗ 1_Q`.
    pub fn q_level(&self, level: u32) -> OperatorField {
        OperatorField::piecewise(self.lattice, self.n, level, |c| self.q_cube(c).clone())
    }

    /// `p_k = q_{k−1} − q_k` for `k ≥ 1`.
    pub fn p_level(&self, level: u32) -> OperatorField {
        assert!(level >= 1, "p_k starts at k = 1");
        OperatorField::piecewise(self.lattice, self.n, level, |c| self.p_cube(c))
    }

    /// `q = q_K`.
    pub fn q_terminal(&self) -> OperatorField {
        self.q_level(self.lattice.depth())
    }

    /// Number of cubes `Q` (below the root) with `p_Q ≠ 0`, i.e. where some
    /// direction stops.
    pub fn stopping_cubes(&self) -> Vec<Cube> {
        self.lattice
            .cubes()
            .skip(1)
            .filter(|&c| self.q_basis(c).ncols() < self.q_basis(self.lattice.parent(c).unwrap()).ncols())
            .collect()
    }
}

/// Smallest admissible height: the operator norm of the root average.
pub fn minimal_lambda(f: &OperatorField, measure: &Measure) -> f64 {
    operator_norm(&average(f, measure, Cube::ROOT))
}

pub fn cuculescu(f: &OperatorField, measure: &Measure, lambda: f64) -> Result<CuculescuResult> {
    cuculescu_with_tol(f, measure, lambda, DEFAULT_SPECTRAL_TOL)
}

pub fn cuculescu_with_tol(
    f: &OperatorField,
    measure: &Measure,
    lambda: f64,
    tol: f64,
) -> Result<CuculescuResult> {
    f.check_measure(measure)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    f.check_positive(POSITIVITY_TOL)?;
    let root_norm = minimal_lambda(f, measure);
    if root_norm > lambda * (1.0 + tol) {
        return Err(Error::LambdaTooSmall {
            lambda,
            min_lambda: root_norm,
        });
    }

    let lattice = *f.lattice();
    let n = f.n();
    let mut bases = Vec::with_capacity(lattice.num_cubes());
    bases.push(Mat::identity(n, n));
    for level in 1..=lattice.depth() {
        let averages = level_averages(f, measure, level);
        for cube in lattice.level_cubes(level) {
            let parent_basis = &bases[lattice.cube_id(lattice.parent(cube).unwrap())];
            let basis = if measure.mass(cube) > 0.0 {
                let parent_q = projection_from_basis(parent_basis);
                let compressed = &parent_q * &averages[cube.index as usize] * &parent_q;
                compressed_spectral_basis(&compressed, parent_basis, lambda, tol)?
            } else {
                parent_basis.clone()
            };
            bases.push(basis);
        }
    }
    let projections = bases.iter().map(projection_from_basis).collect();
    Ok(CuculescuResult {
        lambda,
        lattice,
        n,
        bases,
        projections,
    })
}

/// Verifies the stopping projections against `(f, μ, λ)`; every row is
/// normalized so that it passes at `≤ tol` (or ratio `≤ 1 + tol` for the trace bound).
pub fn verify_cuculescu(
    res: &CuculescuResult,
    f: &OperatorField,
    measure: &Measure,
    tol: f64,
) -> Result<Vec<CheckRow>> {
    let lattice = *res.lattice();
    let lambda = res.lambda();
    let n = res.n();
    let mut projection = 0.0f64;
    let mut order_floor = 0.0f64;
    let mut commutation = 0.0f64;
    let mut upper = f64::NEG_INFINITY;
    let mut lower = 0.0f64;

    for cube in lattice.cubes() {
        let q = res.q_cube(cube);
        projection = projection.max((q * q - q).norm()).max((q - q.adjoint()).norm());
        let avg = average(f, measure, cube);
        let scaled = |m: &Mat| m * Complex64::new(lambda, 0.0);
        // (c) q_Q ⟨f⟩_Q q_Q ≤ λ q_Q
        upper = upper.max(max_eigenvalue(&(q * &avg * q - scaled(q)))? / lambda);
        if let Some(parent) = lattice.parent(cube) {
            let qp = res.q_cube(parent);
            order_floor = order_floor.min(min_eigenvalue(&(qp - q))?);
            let h = qp * &avg * qp;
            let scale = lambda.max(operator_norm(&h));
            commutation = commutation.max((q * &h - &h * q).norm() / scale);
            let p = qp - q;
            lower = lower.min(min_eigenvalue(&(&p * &avg * &p - scaled(&p)))? / lambda);
        }
    }

    // (d) ‖q f_k q‖ ≤ λ for every k, on positive-mass leaves
    let q = res.q_terminal();
    let mut terminal = 0.0f64;
    for level in 0..=lattice.depth() {
        let averages = level_averages(f, measure, level);
        for leaf in 0..lattice.num_leaves() {
            if measure.leaf_mass(leaf) <= 0.0 {
                continue;
            }
            let qx = q.leaf(leaf);
            let cube = lattice.cube_of_leaf(leaf, level);
            terminal = terminal.max(operator_norm(&(qx * &averages[cube.index as usize] * qx)));
        }
    }
    let one_minus_q = &OperatorField::identity(lattice, n) - &q;
    let stopped_trace = trace_tau(&one_minus_q, measure).re;
    let f_l1 = lp_norm(f, 1.0, measure);

    // p_k pairwise disjoint, Σ p_k = 1 − q, and p_k f_k p_k ≥ λ p_k from level fields
    let p_fields: Vec<OperatorField> = (1..=lattice.depth()).map(|k| res.p_level(k)).collect();
    let mut disjoint = 0.0f64;
    let mut partition = 0.0f64;
    let mut level_lower = 0.0f64;
    for leaf in 0..lattice.num_leaves() {
        let mut sum = Mat::zeros(n, n);
        for (i, pi) in p_fields.iter().enumerate() {
            sum += pi.leaf(leaf);
            for pj in &p_fields[i + 1..] {
                disjoint = disjoint.max((pi.leaf(leaf) * pj.leaf(leaf)).norm());
            }
        }
        partition = partition.max((sum - one_minus_q.leaf(leaf)).norm());
    }
    for (i, pk) in p_fields.iter().enumerate() {
        let fk = crate::opalgebra::cond_exp(f, measure, i as u32 + 1)?;
        for leaf in 0..lattice.num_leaves() {
            if measure.leaf_mass(leaf) <= 0.0 {
                continue;
            }
            let p = pk.leaf(leaf);
            let gap = p * fk.leaf(leaf) * p - p * Complex64::new(lambda, 0.0);
            level_lower = level_lower.min(min_eigenvalue(&gap)? / lambda);
        }
    }

    Ok(vec![
        CheckRow::residual("cuc.a.projection", projection, tol),
        CheckRow::residual("cuc.monotone", -order_floor, tol),
        CheckRow::residual("cuc.b.commutation", commutation, tol),
        CheckRow::residual("cuc.c.upper", upper.max(0.0), tol),
        CheckRow::residual("cuc.d.terminal_norm", (terminal / lambda - 1.0).max(0.0), tol),
        CheckRow::bound("cuc.d.trace", lambda * stopped_trace, f_l1, tol),
        CheckRow::residual("cuc.p.disjoint", disjoint, tol),
        CheckRow::residual("cuc.p.partition", partition, tol),
        CheckRow::residual("cuc.p_cube.lower", -lower, tol),
        CheckRow::residual("cuc.p_level.lower", -level_lower, tol),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::all_pass;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn constant_below_lambda_never_stops() {
        let lattice = DyadicLattice::new(1, 3).unwrap();
        let mu = Measure::uniform(lattice);
        let f = OperatorField::identity(lattice, 2).scale_real(0.8);
        let res = cuculescu(&f, &mu, 1.0).unwrap();
        for cube in lattice.cubes() {
            assert!((res.q_cube(cube) - Mat::identity(2, 2)).norm() < 1e-14);
        }
        for k in 1..=3 {
            assert!(res.p_level(k).leaves().iter().all(|p| p.norm() < 1e-14));
        }
        assert!(all_pass(&verify_cuculescu(&res, &f, &mu, 1e-12).unwrap()));
    }

    #[test]
    fn scalar_spike() {
        let lattice = DyadicLattice::new(1, 2).unwrap();
        let mu = Measure::uniform(lattice);
        let f = OperatorField::scalar(lattice, &[4.0, 0.0, 0.0, 0.0]).unwrap();
        let res = cuculescu(&f, &mu, 1.5).unwrap();
        let q: Vec<f64> = res.q_terminal().leaves().iter().map(|m| m[(0, 0)].re).collect();
        assert_eq!(q, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(res.stopping_cubes(), vec![Cube::new(1, 0)]);
        let stopped = trace_tau(&(&OperatorField::identity(lattice, 1) - &res.q_terminal()), &mu);
        assert!((stopped - c(0.5)).norm() < 1e-15);
        assert!(stopped.re <= lp_norm(&f, 1.0, &mu) / 1.5);
        let rows = verify_cuculescu(&res, &f, &mu, 1e-12).unwrap();
        assert!(all_pass(&rows), "{rows:#?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let lattice = DyadicLattice::new(1, 1).unwrap();
        let mu = Measure::uniform(lattice);
        let f = OperatorField::scalar(lattice, &[3.0, 1.0]).unwrap();
        assert_eq!(
            cuculescu(&f, &mu, 1.0).unwrap_err(),
            Error::LambdaTooSmall {
                lambda: 1.0,
                min_lambda: 2.0
            }
        );
        assert!((minimal_lambda(&f, &mu) - 2.0).abs() < 1e-15);
        let g = OperatorField::scalar(lattice, &[3.0, -1.0]).unwrap();
        assert!(matches!(cuculescu(&g, &mu, 5.0), Err(Error::NotPositive { leaf: 1, .. })));
    }

    #[test]
    fn null_cubes_inherit_parent_projection() {
        let lattice = DyadicLattice::new(1, 2).unwrap();
        let mu = Measure::new(lattice, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let f = OperatorField::scalar(lattice, &[1.0, 7.0, 7.0, 7.0]).unwrap();
        let res = cuculescu(&f, &mu, 1.0).unwrap();
        for cube in lattice.cubes() {
            assert!((res.q_cube(cube)[(0, 0)].re - 1.0).abs() < 1e-15);
        }
    }
}

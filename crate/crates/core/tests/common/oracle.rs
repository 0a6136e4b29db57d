//! Brute-force reference implementations, written without the library's
//! tree helpers, used to cross-check the optimized code.
#![allow(dead_code)]

use nalgebra::DMatrix;
use ncdyadic::haar::HaarSystem;
use ncdyadic::lattice::{Cube, DyadicLattice, Measure};
use ncdyadic::opalgebra::{Mat, OperatorField};
use ncdyadic::shift::HaarShift;
use num_complex::Complex64;

/// Leaves under cube `(level, index)`, from the index arithmetic alone.
pub fn leaves_of(lattice: &DyadicLattice, level: u32, index: u64) -> std::ops::Range<usize> {
    let span = 1usize << ((lattice.depth() - level) * lattice.dim());
    let start = index as usize * span;
    start..start + span
}

fn mass(mu: &Measure, level: u32, index: u64) -> f64 {
    leaves_of(mu.lattice(), level, index).map(|i| mu.leaf_mass(i)).sum()
}

/// `E_k` of a scalar leaf vector.
pub fn scalar_cond_exp(values: &[f64], mu: &Measure, level: u32) -> Vec<f64> {
    let lattice = mu.lattice();
    let mut out = vec![0.0; values.len()];
    for index in 0..(1u64 << (level * lattice.dim())) {
        let m = mass(mu, level, index);
        if m > 0.0 {
            let range = leaves_of(lattice, level, index);
            let avg = range.clone().map(|i| mu.leaf_mass(i) * values[i]).sum::<f64>() / m;
            for i in range {
                out[i] = avg;
            }
        }
    }
    out
}

/// Classical stopping time: `alive[k][leaf]` is 1 while no cube of level
/// `≤ k` containing the leaf has average above `λ` (null cubes never stop).
pub struct ScalarStopping {
    pub alive: Vec<Vec<f64>>,
    pub stopping: Vec<(u32, u64)>,
}

pub fn scalar_stopping(values: &[f64], mu: &Measure, lambda: f64) -> ScalarStopping {
    let lattice = mu.lattice();
    let depth = lattice.depth();
    let mut alive = vec![vec![1.0; values.len()]];
    let mut stopping = Vec::new();
    for level in 1..=depth {
        let mut next = alive[level as usize - 1].clone();
        let averages = scalar_cond_exp(values, mu, level);
        for index in 0..(1u64 << (level * lattice.dim())) {
            let range = leaves_of(lattice, level, index);
            let first = range.start;
            if next[first] == 1.0 && mass(mu, level, index) > 0.0 && averages[first] > lambda {
                stopping.push((level, index));
                for i in range {
                    next[i] = 0.0;
                }
            }
        }
        alive.push(next);
    }
    ScalarStopping { alive, stopping }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add_into(acc: &mut [f64], b: &[f64]) {
    for (x, y) in acc.iter_mut().zip(b) {
        *x += y;
    }
}

/// Scalar six-term decomposition evaluated straight from the defining sums.
pub struct ScalarCZ {
    pub g_diag: Vec<f64>,
    pub g_off: Vec<f64>,
    pub b_diag: Vec<f64>,
    pub b_off: Vec<f64>,
    pub beta_diag: Vec<f64>,
    pub beta_off: Vec<f64>,
    pub b_k: Vec<Vec<f64>>,
    pub beta_k: Vec<Vec<f64>>,
    /// `(k, h, g_{k,h}, b_{k,h}, β_{k,h})`.
    pub off: Vec<(u32, u32, Vec<f64>, Vec<f64>, Vec<f64>)>,
}

pub fn scalar_cz(values: &[f64], mu: &Measure, lambda: f64) -> ScalarCZ {
    let depth = mu.lattice().depth();
    let leaves = values.len();
    let stop = scalar_stopping(values, mu, lambda);
    let q = |k: u32| stop.alive[k as usize].clone();
    let p = |k: u32| sub(&stop.alive[k as usize - 1], &stop.alive[k as usize]);
    let fl = |k: u32| scalar_cond_exp(values, mu, k);
    let e = |v: &[f64], k: u32| scalar_cond_exp(v, mu, k);
    let d = |v: &[f64], k: u32| sub(&e(v, k), &e(v, k - 1));
    let qk = q(depth);

    let mut g_diag = mul(&mul(&qk, values), &qk);
    let mut b_k = Vec::new();
    let mut beta_k = Vec::new();
    for k in 1..=depth {
        let pk = p(k);
        let pfp = mul(&mul(&pk, &fl(k)), &pk);
        add_into(&mut g_diag, &e(&pfp, k - 1));
        b_k.push(mul(&mul(&pk, &sub(values, &fl(k))), &pk));
        beta_k.push(d(&pfp, k));
    }
    let mut off = Vec::new();
    for k in 1..depth {
        for h in 1..=depth - k {
            let j = k + h;
            let (pk, pj, qj, fj) = (p(k), p(j), q(j), fl(j));
            let two = |a: &[f64], x: &[f64], b: &[f64]| {
                let mut t = mul(&mul(a, x), b);
                add_into(&mut t, &mul(&mul(b, x), a));
                t
            };
            off.push((
                k,
                h,
                d(&two(&pk, &fj, &qj), j),
                two(&pk, &sub(values, &fj), &pj),
                d(&two(&pk, &fj, &pj), j),
            ));
        }
    }
    let total = |parts: Vec<&Vec<f64>>| {
        let mut acc = vec![0.0; leaves];
        for x in parts {
            add_into(&mut acc, x);
        }
        acc
    };
    ScalarCZ {
        g_off: total(off.iter().map(|o| &o.2).collect()),
        b_off: total(off.iter().map(|o| &o.3).collect()),
        beta_off: total(off.iter().map(|o| &o.4).collect()),
        b_diag: total(b_k.iter().collect()),
        beta_diag: total(beta_k.iter().collect()),
        g_diag,
        b_k,
        beta_k,
        off,
    }
}

pub fn scalar_lp(values: &[f64], mu: &Measure, p: f64) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| mu.leaf_mass(i) * v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn haar_value(system: &HaarSystem, lattice: &DyadicLattice, cube: Cube, leaf: usize) -> f64 {
    system.get(cube).map_or(0.0, |h| h.value_at(lattice, leaf))
}

/// `Σ_{symbols} Σ_x Σ_y α f(y) φ_R(y) μ(y) ψ_S(x)` by explicit loops.
pub fn triple_loop_shift(shift: &HaarShift, f: &OperatorField, mu: &Measure) -> OperatorField {
    let lattice = *mu.lattice();
    let n = f.n();
    let mut out = vec![Mat::zeros(n, n); lattice.num_leaves()];
    for sym in shift.symbols() {
        let mut coeff = Mat::zeros(n, n);
        for y in 0..lattice.num_leaves() {
            let w = mu.leaf_mass(y) * haar_value(shift.phi(), &lattice, sym.r, y);
            if w != 0.0 {
                coeff += f.leaf(y) * Complex64::new(w, 0.0);
            }
        }
        for (x, slot) in out.iter_mut().enumerate() {
            let v = haar_value(shift.psi(), &lattice, sym.s, x);
            if v != 0.0 {
                *slot += &coeff * (sym.alpha * v);
            }
        }
    }
    OperatorField::new(lattice, n, out).unwrap()
}

/// `‖Ш‖_{L_2(μ)}` from the SVD of the weighted scalar matrix.
pub fn dense_norm(shift: &HaarShift, mu: &Measure) -> f64 {
    let lattice = *mu.lattice();
    let support: Vec<usize> = (0..lattice.num_leaves()).filter(|&i| mu.leaf_mass(i) > 0.0).collect();
    let m = support.len();
    let mut a = DMatrix::<Complex64>::zeros(m, m);
    for (col, &j) in support.iter().enumerate() {
        let mut e = vec![0.0; lattice.num_leaves()];
        e[j] = 1.0;
        let image = triple_loop_shift(shift, &OperatorField::scalar(lattice, &e).unwrap(), mu);
        for (row, &i) in support.iter().enumerate() {
            a[(row, col)] = image.leaf(i)[(0, 0)] * (mu.leaf_mass(i).sqrt() / mu.leaf_mass(j).sqrt());
        }
    }
    if m == 0 {
        return 0.0;
    }
    a.singular_values().max()
}

/// `max_λ λ μ(|g| > λ) / ‖f‖_1` for scalar data.
pub fn scalar_weak_ratio(image: &[f64], f_l1: f64, mu: &Measure, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&lambda| {
            let level: f64 = image
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > lambda)
                .map(|(i, _)| mu.leaf_mass(i))
                .sum();
            lambda * level / f_l1
        })
        .fold(0.0, f64::max)
}

pub fn scalar_values(f: &OperatorField) -> Vec<f64> {
    f.leaves().iter().map(|m| m[(0, 0)].re).collect()
}

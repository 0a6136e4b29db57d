//! Six-term Calderón–Zygmund decomposition of a positive matrix-valued
//! function at height `λ`, with its quantitative estimates and the
//! structural identities behind them.

use std::collections::BTreeMap;

use crate::cuculescu::{cuculescu, CuculescuResult};
use crate::error::Result;
use crate::lattice::{Cube, Measure};
use crate::opalgebra::{cond_exp, integral_over, lp_norm, mart_diff, OperatorField};
use crate::report::CheckRow;

/// Relative slack allowed on the estimate constants.
pub const ESTIMATE_SLACK: f64 = 1e-8;
/// Tolerance for identities, relative to `‖f‖₂` (or `‖f‖₁` for integrals).
pub const IDENTITY_TOL: f64 = 1e-9;
pub const MEAN_ZERO_TOL: f64 = 1e-10;

/// Doubly indexed terms keyed by `(k, h)` with `k, h ≥ 1`, `k + h ≤ K`.
pub type Family = BTreeMap<(u32, u32), OperatorField>;

#[derive(Clone, Debug)]
pub struct CZParts {
    pub f: OperatorField,
    pub measure: Measure,
    pub lambda: f64,
    pub cuculescu: CuculescuResult,
    /// `f_k` for `k = 0..=K`.
    pub f_levels: Vec<OperatorField>,
    /// `q_k` for `k = 0..=K`.
    pub q_levels: Vec<OperatorField>,
    /// `p_k` for `k = 0..=K`; entry 0 is zero.
    pub p_levels: Vec<OperatorField>,
    pub g_diag: OperatorField,
    pub g_off: OperatorField,
    /// `g_off` from its defining three-term expression.
    pub g_off_direct: OperatorField,
    pub b_diag: OperatorField,
    pub b_off: OperatorField,
    pub beta_diag: OperatorField,
    pub beta_off: OperatorField,
    /// `b_k` for `k = 1..=K` (index `k − 1`).
    pub b_k: Vec<OperatorField>,
    /// `β_k` for `k = 1..=K` (index `k − 1`).
    pub beta_k: Vec<OperatorField>,
    pub g_kh: Family,
    pub b_kh: Family,
    pub beta_kh: Family,
}

impl CZParts {
    pub fn depth(&self) -> u32 {
        self.f.lattice().depth()
    }

    pub fn terms(&self) -> [(&'static str, &OperatorField); 6] {
        [
            ("g_diag", &self.g_diag),
            ("g_off", &self.g_off),
            ("b_diag", &self.b_diag),
            ("b_off", &self.b_off),
            ("beta_diag", &self.beta_diag),
            ("beta_off", &self.beta_off),
        ]
    }

    fn f_scale(&self, p: f64) -> f64 {
        let norm = lp_norm(&self.f, p, &self.measure);
        if norm > 0.0 {
            norm
        } else {
            1.0
        }
    }

    fn rel_l2(&self, field: &OperatorField) -> f64 {
        lp_norm(field, 2.0, &self.measure) / self.f_scale(2.0)
    }
}

fn sum_fields<'a>(
    zero: OperatorField,
    fields: impl IntoIterator<Item = &'a OperatorField>,
) -> OperatorField {
    fields.into_iter().fold(zero, |mut acc, x| {
        acc += x;
        acc
    })
}

fn hermitian_pair(f: &OperatorField, a: &OperatorField, b: &OperatorField) -> OperatorField {
    &f.sandwich(a, b) + &f.sandwich(b, a)
}

pub fn cz_decompose(f: &OperatorField, measure: &Measure, lambda: f64) -> Result<CZParts> {
    let cuc = cuculescu(f, measure, lambda)?;
    cz_from_cuculescu(f, measure, cuc)
}

pub fn cz_from_cuculescu(
    f: &OperatorField,
    measure: &Measure,
    cuc: CuculescuResult,
) -> Result<CZParts> {
    let lattice = *f.lattice();
    let n = f.n();
    let depth = lattice.depth();
    let zero = || OperatorField::zeros(lattice, n);
    let one = OperatorField::identity(lattice, n);

    let f_levels = (0..=depth)
        .map(|k| cond_exp(f, measure, k))
        .collect::<Result<Vec<_>>>()?;
    let q_levels: Vec<_> = (0..=depth).map(|k| cuc.q_level(k)).collect();
    let p_levels: Vec<_> = std::iter::once(zero())
        .chain((1..=depth).map(|k| cuc.p_level(k)))
        .collect();
    let q = &q_levels[depth as usize];
    let fl = |k: u32| &f_levels[k as usize];
    let ql = |k: u32| &q_levels[k as usize];
    let pl = |k: u32| &p_levels[k as usize];

    let mut g_diag = f.sandwich(q, q);
    let mut b_k = Vec::with_capacity(depth as usize);
    let mut beta_k = Vec::with_capacity(depth as usize);
    for k in 1..=depth {
        let pfp = fl(k).sandwich(pl(k), pl(k));
        g_diag += &cond_exp(&pfp, measure, k - 1)?;
        b_k.push((f - fl(k)).sandwich(pl(k), pl(k)));
        beta_k.push(mart_diff(&pfp, measure, k)?);
    }

    let mut g_kh = Family::new();
    let mut b_kh = Family::new();
    let mut beta_kh = Family::new();
    for k in 1..depth {
        for h in 1..=depth - k {
            let j = k + h;
            g_kh.insert((k, h), mart_diff(&hermitian_pair(fl(j), pl(k), ql(j)), measure, j)?);
            b_kh.insert((k, h), hermitian_pair(&(f - fl(j)), pl(k), pl(j)));
            beta_kh.insert((k, h), mart_diff(&hermitian_pair(fl(j), pl(k), pl(j)), measure, j)?);
        }
    }

    let stopped = &one - q;
    let mut g_off_direct = hermitian_pair(f, &stopped, q);
    for i in 1..=depth {
        for j in 1..=depth {
            if i != j {
                let top = i.max(j);
                g_off_direct += &cond_exp(&fl(top).sandwich(pl(i), pl(j)), measure, top - 1)?;
            }
        }
    }

    Ok(CZParts {
        g_off: sum_fields(zero(), g_kh.values()),
        b_diag: sum_fields(zero(), &b_k),
        b_off: sum_fields(zero(), b_kh.values()),
        beta_diag: sum_fields(zero(), &beta_k),
        beta_off: sum_fields(zero(), beta_kh.values()),
        f: f.clone(),
        measure: measure.clone(),
        lambda: cuc.lambda(),
        cuculescu: cuc,
        f_levels,
        q_levels,
        p_levels,
        g_diag,
        g_off_direct,
        b_k,
        beta_k,
        g_kh,
        b_kh,
        beta_kh,
    })
}

/// Sum of the six terms together with `‖f − Σ‖₂ / ‖f‖₂`.
pub fn cz_reconstruct(parts: &CZParts) -> (OperatorField, f64) {
    let zero = OperatorField::zeros(*parts.f.lattice(), parts.f.n());
    let total = sum_fields(zero, parts.terms().map(|(_, t)| t));
    let residual = parts.rel_l2(&(&parts.f - &total));
    (total, residual)
}

fn worst_over_h(
    parts: &CZParts,
    family: &Family,
    p: f64,
    rhs_for_h: impl Fn(u32) -> f64,
) -> (f64, f64) {
    let mut worst = (0.0, rhs_for_h(1));
    let mut worst_ratio = -1.0;
    for h in 1..parts.depth() {
        let lhs: f64 = family
            .iter()
            .filter(|((_, hh), _)| *hh == h)
            .map(|(_, x)| lp_norm(x, p, &parts.measure).powf(if p == 2.0 { 2.0 } else { 1.0 }))
            .sum();
        let rhs = rhs_for_h(h);
        let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst = (lhs, rhs);
        }
    }
    worst
}

fn max_entry_ratio(parts: &CZParts, field: &OperatorField) -> f64 {
    let integral = integral_over(field, &parts.measure, Cube::ROOT);
    integral.iter().map(|z| z.norm()).fold(0.0, f64::max) / parts.f_scale(1.0)
}

/// The six estimates with their constants, followed by the accompanying
/// identities (trace preservation, mean zero, martingale differences).
pub fn cz_estimates(parts: &CZParts) -> Result<Vec<CheckRow>> {
    let mu = &parts.measure;
    let lambda = parts.lambda;
    let f1 = lp_norm(&parts.f, 1.0, mu);
    let l1 = |x: &OperatorField| lp_norm(x, 1.0, mu);

    let g2 = lp_norm(&parts.g_diag, 2.0, mu).powi(2);
    let b_sum: f64 = parts.b_k.iter().map(l1).sum();
    let beta_sum: f64 = parts.beta_k.iter().map(l1).sum();
    let (d_lhs, d_rhs) = worst_over_h(parts, &parts.g_kh, 2.0, |_| 16.0 * lambda * f1);
    let (e_lhs, e_rhs) = worst_over_h(parts, &parts.b_kh, 1.0, |h| 8.0 * (h as f64 + 1.0) * f1);
    let (f_lhs, f_rhs) = worst_over_h(parts, &parts.beta_kh, 1.0, |h| 8.0 * (h as f64 + 1.0) * f1);

    let mut rows = vec![
        CheckRow::bound("czd.a.g_diag_l2", g2, 39.0 * lambda * f1, ESTIMATE_SLACK),
        CheckRow::equality("czd.a.g_diag_l1", l1(&parts.g_diag), f1.max(f64::MIN_POSITIVE), IDENTITY_TOL),
        CheckRow::bound("czd.b.b_diag_l1", b_sum, 2.0 * f1, ESTIMATE_SLACK),
        CheckRow::bound("czd.c.beta_diag_l1", beta_sum, 2.0 * f1, ESTIMATE_SLACK),
        CheckRow::bound("czd.d.g_off_l2", d_lhs, d_rhs, ESTIMATE_SLACK),
        CheckRow::bound("czd.e.b_off_l1", e_lhs, e_rhs, ESTIMATE_SLACK),
        CheckRow::bound("czd.f.beta_off_l1", f_lhs, f_rhs, ESTIMATE_SLACK),
    ];

    let mean_b = parts
        .b_k
        .iter()
        .chain(parts.b_kh.values())
        .map(|x| max_entry_ratio(parts, x))
        .fold(max_entry_ratio(parts, &parts.b_diag), f64::max);
    rows.push(CheckRow::residual("czd.mean_zero.b", mean_b, MEAN_ZERO_TOL));

    let mut beta_md = 0.0f64;
    for (i, beta) in parts.beta_k.iter().enumerate() {
        let k = i as u32 + 1;
        let projected = mart_diff(&parts.beta_diag, mu, k)?;
        beta_md = beta_md.max(parts.rel_l2(&(beta - &projected)));
        beta_md = beta_md.max(parts.rel_l2(&cond_exp(beta, mu, k - 1)?));
    }
    rows.push(CheckRow::residual("czd.md.beta_k", beta_md, IDENTITY_TOL));

    let mut off_md = 0.0f64;
    for ((k, h), g) in &parts.g_kh {
        off_md = off_md.max(parts.rel_l2(&(g - &mart_diff(g, mu, k + h)?)));
    }
    for ((k, h), beta) in &parts.beta_kh {
        off_md = off_md.max(parts.rel_l2(&(beta - &mart_diff(beta, mu, k + h)?)));
    }
    rows.push(CheckRow::residual("czd.md.off_diag", off_md, IDENTITY_TOL));

    rows.push(CheckRow::residual(
        "czd.g_off.direct",
        parts.rel_l2(&(&parts.g_off - &parts.g_off_direct)),
        IDENTITY_TOL,
    ));
    let (_, recon) = cz_reconstruct(parts);
    rows.push(CheckRow::residual("czd.reconstruction", recon, IDENTITY_TOL));
    let herm = parts
        .terms()
        .iter()
        .map(|(_, t)| parts.rel_l2(&(*t - &t.adjoint())))
        .fold(0.0, f64::max);
    rows.push(CheckRow::residual("czd.self_adjoint", herm, IDENTITY_TOL));
    Ok(rows)
}

/// Block sum `S(a, b) = Σ_{j=a}^{b} p_{k+j}` (zero when `a > b`).
fn block(parts: &CZParts, k: u32, a: u32, b: u32) -> OperatorField {
    let zero = OperatorField::zeros(*parts.f.lattice(), parts.f.n());
    sum_fields(zero, (a..=b).map(|j| &parts.p_levels[(k + j) as usize]))
}

pub fn structural_identities(parts: &CZParts) -> Result<Vec<CheckRow>> {
    let mu = &parts.measure;
    let depth = parts.depth();
    let lattice = *parts.f.lattice();
    let one = OperatorField::identity(lattice, parts.f.n());
    let fl = |k: u32| &parts.f_levels[k as usize];
    let ql = |k: u32| &parts.q_levels[k as usize];
    let pl = |k: u32| &parts.p_levels[k as usize];
    let q = ql(depth);

    // p_i f_{i∧j} p_j = 0 for i ≠ j, with p_∞ = q
    let mut nullav = 0.0f64;
    for i in 1..=depth {
        for j in 1..=depth {
            if i != j {
                nullav = nullav.max(parts.rel_l2(&fl(i.min(j)).sandwich(pl(i), pl(j))));
            }
        }
        nullav = nullav.max(parts.rel_l2(&fl(i).sandwich(pl(i), q)));
        nullav = nullav.max(parts.rel_l2(&fl(i).sandwich(q, pl(i))));
    }

    let g_off = &parts.g_off_direct;
    let mut dkgoff = 0.0f64;
    for j in 1..=depth {
        let before = &one - ql(j - 1);
        let closed = hermitian_pair(fl(j), &before, ql(j));
        let lhs = mart_diff(g_off, mu, j)?;
        dkgoff = dkgoff.max(parts.rel_l2(&(&lhs - &mart_diff(&closed, mu, j)?)));
    }
    let below_root = parts.rel_l2(&cond_exp(g_off, mu, 0)?);

    let f = &parts.f;
    let mut box_terms = 0.0f64;
    let mut dm_vanish = 0.0f64;
    for k in 1..depth {
        for h in 1..=depth - k {
            let lhs = hermitian_pair(f, pl(k), pl(k + h));
            let s = |a: u32, b: u32| block(parts, k, a, b);
            let (s0h, s0m, s1h, s1m) = (s(0, h), s(0, h - 1), s(1, h), s(1, h - 1));
            let mut rhs = f.sandwich(&s0h, &s0h);
            rhs -= &f.sandwich(&s0m, &s0m);
            rhs -= &f.sandwich(&s1h, &s1h);
            rhs += &f.sandwich(&s1m, &s1m);
            box_terms = box_terms.max(parts.rel_l2(&(&lhs - &rhs)));

            let top = k + h;
            let df = mart_diff(f, mu, top)?;
            let dm_lhs = hermitian_pair(&df, pl(k), ql(top - 1));
            let dm_rhs = mart_diff(&hermitian_pair(f, pl(k), ql(top - 1)), mu, top)?;
            dm_vanish = dm_vanish.max(parts.rel_l2(&(&dm_lhs - &dm_rhs)));
        }
    }

    Ok(vec![
        CheckRow::residual("id.nullav", nullav, IDENTITY_TOL),
        CheckRow::residual("id.dkgoff", dkgoff, IDENTITY_TOL),
        CheckRow::residual("id.dkgoff.below_root", below_root, IDENTITY_TOL),
        CheckRow::residual("id.box_four_term", box_terms, IDENTITY_TOL),
        CheckRow::residual("id.dm_vanish", dm_vanish, IDENTITY_TOL),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DyadicLattice;
    use crate::opalgebra::Mat;
    use crate::report::{all_pass, failures};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(lattice: DyadicLattice, n: usize, rng: &mut ChaCha8Rng) -> OperatorField {
        OperatorField::from_fn(lattice, n, |_| {
            let a = Mat::from_fn(n, n, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let scale = rng.random_range(0.0..1.0f64).powi(6) * 20.0;
            a.adjoint() * a * Complex64::new(scale, 0.0)
        })
    }

    #[test]
    fn below_height_is_all_good() {
        let lattice = DyadicLattice::new(1, 3).unwrap();
        let mu = Measure::uniform(lattice);
        let f = OperatorField::identity(lattice, 2).scale_real(0.5);
        let parts = cz_decompose(&f, &mu, 1.0).unwrap();
        assert!((&parts.g_diag - &f).leaves().iter().all(|m| m.norm() < 1e-14));
        for (name, t) in parts.terms().into_iter().skip(1) {
            assert!(t.leaves().iter().all(|m| m.norm() < 1e-14), "{name}");
        }
    }

    #[test]
    fn zero_input_has_zero_parts() {
        let lattice = DyadicLattice::new(1, 3).unwrap();
        let mu = Measure::uniform(lattice);
        let f = OperatorField::zeros(lattice, 3);
        let parts = cz_decompose(&f, &mu, 1.0).unwrap();
        for (_, t) in parts.terms() {
            assert!(t.leaves().iter().all(|m| m.norm() == 0.0));
        }
        assert_eq!(cz_reconstruct(&parts).1, 0.0);
    }

    #[test]
    fn random_instances_verify() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut stopped = 0;
        for trial in 0..12 {
            let depth = 2 + trial % 4;
            let n = 1 + trial as usize % 3;
            let lattice = DyadicLattice::new(1, depth).unwrap();
            let masses: Vec<f64> = (0..lattice.num_leaves())
                .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.01..1.0) })
                .collect();
            let mu = Measure::new(lattice, masses).unwrap();
            let f = random_psd(lattice, n, &mut rng);
            let lambda = crate::cuculescu::minimal_lambda(&f, &mu) * rng.random_range(1.0..3.0);
            let parts = cz_decompose(&f, &mu, lambda).unwrap();
            stopped += !parts.cuculescu.stopping_cubes().is_empty() as usize;
            let mut rows = cz_estimates(&parts).unwrap();
            rows.extend(structural_identities(&parts).unwrap());
            assert!(all_pass(&rows), "trial {trial}: {:#?}", failures(&rows));
        }
        assert!(stopped >= 6, "only {stopped} instances stopped");
    }
}

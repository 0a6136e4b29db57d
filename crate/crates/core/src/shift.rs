//! Haar shift operators with scalar symbols, their localizations, and the
//! quantities that control weak-type (1,1) behaviour.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haar::{HaarFunction, HaarSystem};
use crate::lattice::{Cube, DyadicLattice, Measure};
use crate::opalgebra::{distribution_curve, inner, lp_norm, Mat, OperatorField};

pub const POWER_TOL: f64 = 1e-6;
pub const POWER_MAX_ITER: usize = 20_000;
const POWER_SEED: u64 = 0x5eed_0f5a;

/// Default λ-grid: 64 log-spaced points over `[1e-4, 1e2]` times the mean
/// trace norm of the image on its support.
pub const GRID_POINTS: usize = 64;
pub const GRID_LOW: f64 = 1e-4;
pub const GRID_HIGH: f64 = 1e2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Symbol {
    pub q: Cube,
    pub r: Cube,
    pub s: Cube,
    pub alpha: Complex64,
}

#[derive(Clone, Debug)]
pub struct HaarShift {
    r: u32,
    s: u32,
    phi: HaarSystem,
    psi: HaarSystem,
    symbols: Vec<Symbol>,
}

impl HaarShift {
    pub fn new(r: u32, s: u32, phi: HaarSystem, psi: HaarSystem, symbols: Vec<Symbol>) -> Result<Self> {
        let lattice = *phi.lattice();
        if *psi.lattice() != lattice {
            return Err(Error::ShapeMismatch("input and output systems live on different lattices".into()));
        }
        for sym in &symbols {
            lattice.check(sym.q)?;
            if sym.q.level + r.max(s) > lattice.depth() {
                return Err(Error::BeyondLeafLevel {
                    cube: sym.q,
                    generations: r.max(s),
                    depth: lattice.depth(),
                });
            }
            let in_q = |c: Cube, gens: u32| c.level == sym.q.level + gens && lattice.is_subcube(c, sym.q);
            if !in_q(sym.r, r) || !in_q(sym.s, s) {
                return Err(Error::InvalidParameter(format!(
                    "symbol at {:?} pairs {:?} and {:?}, outside the ({r},{s}) descendants",
                    sym.q, sym.r, sym.s
                )));
            }
            if !(sym.alpha.re.is_finite() && sym.alpha.im.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite symbol at {:?}", sym.q)));
            }
        }
        Ok(HaarShift { r, s, phi, psi, symbols })
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn phi(&self) -> &HaarSystem {
        &self.phi
    }

    pub fn psi(&self) -> &HaarSystem {
        &self.psi
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn lattice(&self) -> &DyadicLattice {
        self.phi.lattice()
    }

    pub fn sup_symbol(&self) -> f64 {
        self.symbols.iter().map(|s| s.alpha.norm()).fold(0.0, f64::max)
    }

    /// The `L_2(μ)` adjoint: complexities, systems and roles swap and the
    /// symbols are conjugated.
    pub fn adjoint(&self) -> HaarShift {
        HaarShift {
            r: self.s,
            s: self.r,
            phi: self.psi.clone(),
            psi: self.phi.clone(),
            symbols: self
                .symbols
                .iter()
                .map(|sym| Symbol {
                    q: sym.q,
                    r: sym.s,
                    s: sym.r,
                    alpha: sym.alpha.conj(),
                })
                .collect(),
        }
    }

    pub fn with_symbols(&self, symbols: Vec<Symbol>) -> Result<HaarShift> {
        HaarShift::new(self.r, self.s, self.phi.clone(), self.psi.clone(), symbols)
    }
}

/// `∫_Q f dμ` for every cube, indexed by cube id.
fn cube_integrals(f: &OperatorField, measure: &Measure) -> Vec<Mat> {
    let lattice = f.lattice();
    let n = f.n();
    let mut out = vec![Mat::zeros(n, n); lattice.num_cubes()];
    let leaf_offset = lattice.level_offset(lattice.depth());
    for leaf in 0..lattice.num_leaves() {
        let w = measure.leaf_mass(leaf);
        if w != 0.0 {
            out[leaf_offset + leaf] = f.leaf(leaf) * Complex64::new(w, 0.0);
        }
    }
    for level in (0..lattice.depth()).rev() {
        for cube in lattice.level_cubes(level) {
            let id = lattice.cube_id(cube);
            for child in lattice.children(cube) {
                let child_integral = out[lattice.cube_id(child)].clone();
                out[id] += child_integral;
            }
        }
    }
    out
}

fn live(h: Option<&HaarFunction>) -> Option<&HaarFunction> {
    h.filter(|h| !h.zero)
}

fn apply_symbols<'a>(
    shift: &HaarShift,
    symbols: impl Iterator<Item = &'a Symbol>,
    f: &OperatorField,
    measure: &Measure,
) -> OperatorField {
    let lattice = *shift.lattice();
    let n = f.n();
    let integrals = cube_integrals(f, measure);
    let mut coeff_cache: Vec<Option<Mat>> = vec![None; lattice.num_cubes()];
    let mut added = vec![Mat::zeros(n, n); lattice.num_cubes()];
    for sym in symbols {
        let (Some(phi), Some(psi)) = (live(shift.phi.get(sym.r)), live(shift.psi.get(sym.s))) else {
            continue;
        };
        if sym.alpha == Complex64::new(0.0, 0.0) {
            continue;
        }
        let coeff = coeff_cache[lattice.cube_id(sym.r)].get_or_insert_with(|| {
            let mut acc = Mat::zeros(n, n);
            for (child, &c) in lattice.children(sym.r).zip(&phi.coeffs) {
                if c != 0.0 {
                    acc += &integrals[lattice.cube_id(child)] * Complex64::new(c, 0.0);
                }
            }
            acc
        });
        let scaled = &*coeff * sym.alpha;
        for (child, &c) in lattice.children(sym.s).zip(&psi.coeffs) {
            if c != 0.0 {
                added[lattice.cube_id(child)] += &scaled * Complex64::new(c, 0.0);
            }
        }
    }
    for level in 1..=lattice.depth() {
        for cube in lattice.level_cubes(level) {
            let parent = lattice.parent(cube).unwrap();
            let inherited = added[lattice.cube_id(parent)].clone();
            added[lattice.cube_id(cube)] += inherited;
        }
    }
    let offset = lattice.level_offset(lattice.depth());
    added.drain(..offset);
    OperatorField::new(lattice, n, added).expect("leaf count matches lattice")
}

/// `Ш f = Σ_Q Σ_{R,S} α ⟨f, φ_R⟩ ψ_S`.
pub fn apply_shift(shift: &HaarShift, f: &OperatorField, measure: &Measure) -> OperatorField {
    apply_symbols(shift, shift.symbols.iter(), f, measure)
}

/// The same sum restricted to `Q ⊆ Q₀`; the output is supported in `Q₀`.
pub fn apply_local(shift: &HaarShift, q0: Cube, f: &OperatorField, measure: &Measure) -> OperatorField {
    let lattice = *shift.lattice();
    apply_symbols(
        shift,
        shift.symbols.iter().filter(|sym| lattice.is_subcube(sym.q, q0)),
        f,
        measure,
    )
}

/// `sup_Q ‖φ_R‖_∞ ‖ψ_S‖_1` over `R ∈ 𝒟_r(Q)`, `S ∈ 𝒟_s(Q)`.
pub fn xi(phi: &HaarSystem, psi: &HaarSystem, r: u32, s: u32, measure: &Measure) -> f64 {
    let lattice = *measure.lattice();
    let depth = lattice.depth();
    let sup_phi: Vec<f64> = lattice
        .cubes()
        .map(|c| live(phi.get(c)).map_or(0.0, |h| h.sup_norm(measure)))
        .collect();
    let l1_psi: Vec<f64> = lattice
        .cubes()
        .map(|c| live(psi.get(c)).map_or(0.0, |h| h.l1_norm(measure)))
        .collect();
    let widest = |values: &[f64], q: Cube, gens: u32| {
        let first = q.index << (gens * lattice.dim());
        let start = lattice.level_offset(q.level + gens) + first as usize;
        values[start..start + (1usize << (gens * lattice.dim()))]
            .iter()
            .copied()
            .fold(0.0, f64::max)
    };
    let mut best = 0.0f64;
    for level in 0..=depth.saturating_sub(r.max(s)) {
        if level + r.max(s) > depth {
            break;
        }
        for q in lattice.level_cubes(level) {
            let a = widest(&sup_phi, q, r);
            if a > 0.0 {
                best = best.max(a * widest(&l1_psi, q, s));
            }
        }
    }
    best
}

pub fn shift_xi(shift: &HaarShift, measure: &Measure) -> f64 {
    xi(&shift.phi, &shift.psi, shift.r, shift.s, measure)
}

/// `max_{μ(Q₀) > 0} μ(Q₀)^{-1} ∫ ‖Ш^{Q₀}(1_{Q₀})‖² dμ`.
pub fn testing_constant(shift: &HaarShift, measure: &Measure) -> f64 {
    testing_constant_n(shift, measure, 1)
}

/// Testing constant evaluated on `1_{Q₀} ⊗ I_n` with the operator norm; with
/// scalar symbols it does not depend on `n`.
pub fn testing_constant_n(shift: &HaarShift, measure: &Measure, n: usize) -> f64 {
    let lattice = *shift.lattice();
    let mut best = 0.0f64;
    for q0 in lattice.cubes() {
        let mass = measure.mass(q0);
        if mass <= 0.0 {
            continue;
        }
        let image = apply_local(shift, q0, &OperatorField::indicator(lattice, n, q0), measure);
        let energy: f64 = lattice
            .leaf_range(q0)
            .map(|leaf| {
                let w = measure.leaf_mass(leaf);
                if w > 0.0 {
                    w * crate::opalgebra::operator_norm(image.leaf(leaf)).powi(2)
                } else {
                    0.0
                }
            })
            .sum();
        best = best.max(energy / mass);
    }
    best
}

#[derive(Clone, Copy, Debug)]
pub struct PowerOptions {
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            seed: POWER_SEED,
            tol: POWER_TOL,
            max_iter: POWER_MAX_ITER,
        }
    }
}

/// `‖Ш‖` on `L_2(𝒜)` with `n × n` matrices, by power iteration on `Ш*Ш`.
pub fn l2_operator_norm(shift: &HaarShift, measure: &Measure, n: usize) -> Result<f64> {
    l2_operator_norm_with(shift, measure, n, PowerOptions::default())
}

pub fn l2_operator_norm_with(
    shift: &HaarShift,
    measure: &Measure,
    n: usize,
    opts: PowerOptions,
) -> Result<f64> {
    let lattice = *shift.lattice();
    if shift.sup_symbol() == 0.0 || measure.total() <= 0.0 {
        return Ok(0.0);
    }
    let adjoint = shift.adjoint();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = OperatorField::from_fn(lattice, n, |_| {
        Mat::from_fn(n, n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    })
    .on_support(measure);
    let normalize = |x: &OperatorField| {
        let norm = inner(x, x, measure).re.sqrt();
        (norm > 0.0).then(|| x.scale_real(norm.recip()))
    };
    let Some(mut unit) = normalize(&x) else {
        return Ok(0.0);
    };
    let mut estimate = 0.0f64;
    for _ in 0..opts.max_iter {
        let image = apply_shift(shift, &unit, measure);
        let next = inner(&image, &image, measure).re;
        x = apply_shift(&adjoint, &image, measure).on_support(measure);
        let converged = (next - estimate).abs() <= opts.tol * next.abs();
        estimate = next;
        if converged {
            return Ok(estimate.max(0.0).sqrt());
        }
        match normalize(&x) {
            Some(u) => unit = u,
            None => return Ok(estimate.max(0.0).sqrt()),
        }
    }
    Err(Error::PowerIterationStalled {
        iterations: opts.max_iter,
        estimate: estimate.max(0.0).sqrt(),
    })
}

/// Log-spaced λ-grid scaled by `‖g‖_1 / μ(supp g)`; empty when `g = 0`.
pub fn default_lambda_grid(image: &OperatorField, measure: &Measure) -> Vec<f64> {
    let support: f64 = (0..measure.lattice().num_leaves())
        .filter(|&i| measure.leaf_mass(i) > 0.0 && image.leaf(i).norm() > 0.0)
        .map(|i| measure.leaf_mass(i))
        .sum();
    if support <= 0.0 {
        return Vec::new();
    }
    let base = lp_norm(image, 1.0, measure) / support;
    let (lo, hi) = ((GRID_LOW * base).ln(), (GRID_HIGH * base).ln());
    (0..GRID_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).exp())
        .collect()
}

/// `max_λ λ · τ(1_{(λ,∞)}(|Ш f|)) / ‖f‖_1` over the grid.
pub fn weak_type_ratio(
    shift: &HaarShift,
    f: &OperatorField,
    measure: &Measure,
    grid: Option<&[f64]>,
) -> Result<f64> {
    let (ratio, _) = weak_type_profile(shift, f, measure, grid)?;
    Ok(ratio)
}

/// The weak-type ratio together with `(λ, λ·distribution/‖f‖_1)` per grid point.
pub fn weak_type_profile(
    shift: &HaarShift,
    f: &OperatorField,
    measure: &Measure,
    grid: Option<&[f64]>,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let f1 = lp_norm(f, 1.0, measure);
    if f1 == 0.0 {
        return Err(Error::ZeroInput);
    }
    let image = apply_shift(shift, f, measure);
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_lambda_grid(&image, measure);
            &owned
        }
    };
    let profile: Vec<(f64, f64)> = grid
        .iter()
        .zip(distribution_curve(&image, grid, measure))
        .map(|(&lambda, level)| (lambda, lambda * level / f1))
        .collect();
    let ratio = profile.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok((ratio, profile))
}

/// Explicit weak-type constant assembled from the operator and measure:
/// the contribution of each part of the decomposition at height `λ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProofConstant {
    pub sup_symbol: f64,
    pub xi: f64,
    pub testing: f64,
    pub l2_norm: f64,
    pub terms: Vec<(String, f64)>,
    pub total: f64,
}

pub fn proof_constant(shift: &HaarShift, measure: &Measure, n: usize) -> Result<ProofConstant> {
    let l2_norm = l2_operator_norm(shift, measure, n)?;
    Ok(assemble_proof_constant(
        shift.r,
        shift.s,
        shift.lattice().dim(),
        shift.sup_symbol(),
        shift_xi(shift, measure),
        testing_constant(shift, measure),
        l2_norm,
    ))
}

/// Six terms at `λ/6`; each non-`g_Δ` term split into four compressions at
/// `λ/24`, three of which are controlled by `τ(1 − q)`.
pub fn assemble_proof_constant(
    r: u32,
    s: u32,
    dim: u32,
    sup_symbol: f64,
    xi: f64,
    testing: f64,
    l2_norm: f64,
) -> ProofConstant {
    let rf = r as f64;
    let scale = 2f64.powi(((r + s) * dim) as i32);
    let s_xi = sup_symbol * xi;
    let n2 = l2_norm * l2_norm;
    let beta_factor = (2.0 * rf + 1.0).max(rf + 2.0);
    let off_bad = rf * (rf - 1.0) * (rf + 3.0) * 4.0 * scale * s_xi;
    let terms = vec![
        ("g_diag".to_string(), 36.0 * 39.0 * n2),
        ("outside_q".to_string(), 5.0 * 12.0),
        ("b_diag".to_string(), 24.0 * rf * 2.0 * scale * s_xi),
        ("beta_diag".to_string(), 24.0 * (beta_factor * 2.0 * scale * s_xi + testing.sqrt())),
        ("g_off".to_string(), 576.0 * 16.0 * rf * rf * n2),
        ("b_off".to_string(), 24.0 * off_bad),
        ("beta_off".to_string(), 24.0 * off_bad),
    ];
    let total = terms.iter().map(|t| t.1).sum();
    ProofConstant {
        sup_symbol,
        xi,
        testing,
        l2_norm,
        terms,
        total,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftParams {
    /// Symbol magnitude (or bound, for random symbols).
    pub alpha: Option<f64>,
    /// Draw symbols at random with this seed; complex in the disk of radius
    /// `alpha`, or in `[0, alpha]` for positive operators.
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureParams {
    /// Fraction of each parent's mass given to its first child.
    pub delta: Option<f64>,
    /// Mass fraction leaking away from the concentration path.
    pub epsilon: Option<f64>,
    /// Leaf carrying the point mass.
    pub leaf: Option<usize>,
    /// Upper/lower ratio of child weights in the random doubling family.
    pub spread: Option<f64>,
    pub seed: Option<u64>,
}

pub const SHIFT_PRESETS: [&str; 5] = ["multiplier", "dyadic_hilbert", "dyadic_hilbert_adjoint", "paraproduct", "positive_dyadic"];
pub const MEASURE_PRESETS: [&str; 5] = ["uniform", "dyadic_doubling_random", "left_loaded", "near_point_mass", "random"];

pub fn preset_shift(name: &str, measure: &Measure, params: &ShiftParams) -> Result<HaarShift> {
    let lattice = *measure.lattice();
    let alpha = params.alpha.unwrap_or(1.0);
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("symbol magnitude {alpha}")));
    }
    let mut rng = params.seed.map(ChaCha8Rng::seed_from_u64);
    let positive = name == "positive_dyadic";
    let mut draw = |sign: f64| -> Complex64 {
        match rng.as_mut() {
            None => Complex64::new(sign * alpha, 0.0),
            Some(rng) if positive => Complex64::new(alpha * rng.random::<f64>(), 0.0),
            Some(rng) => {
                let radius = alpha * rng.random::<f64>().sqrt();
                Complex64::from_polar(radius, rng.random_range(0.0..std::f64::consts::TAU))
            }
        }
    };
    let diagonal = |max_level: u32, draw: &mut dyn FnMut(f64) -> Complex64| -> Vec<Symbol> {
        lattice
            .cubes()
            .take_while(|c| c.level <= max_level)
            .map(|q| Symbol { q, r: q, s: q, alpha: draw(1.0) })
            .collect()
    };
    let inner_top = lattice.depth().checked_sub(1);
    match name {
        "multiplier" | "paraproduct" | "positive_dyadic" => {
            let symbols = inner_top.map_or_else(Vec::new, |top| diagonal(top, &mut draw));
            let (phi, psi) = match name {
                "multiplier" => (HaarSystem::canonical(measure), HaarSystem::canonical(measure)),
                "paraproduct" => (HaarSystem::canonical(measure), HaarSystem::normalized_indicators(measure)),
                _ => (
                    HaarSystem::normalized_indicators(measure),
                    HaarSystem::normalized_indicators(measure),
                ),
            };
            HaarShift::new(0, 0, phi, psi, symbols)
        }
        "dyadic_hilbert" | "dyadic_hilbert_adjoint" | "adjoint" => {
            let mut symbols = Vec::new();
            if let Some(top) = lattice.depth().checked_sub(2) {
                for q in lattice.cubes().take_while(|c| c.level <= top) {
                    for (j, s) in lattice.children(q).enumerate() {
                        let sign = if j == 0 { 1.0 } else { -1.0 };
                        symbols.push(Symbol { q, r: q, s, alpha: draw(sign) });
                    }
                }
            }
            let canonical = HaarSystem::canonical(measure);
            let shift = HaarShift::new(0, 1, canonical.clone(), canonical, symbols)?;
            Ok(if name == "dyadic_hilbert" { shift } else { shift.adjoint() })
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

pub fn preset_measure(name: &str, lattice: DyadicLattice, params: &MeasureParams) -> Result<Measure> {
    let branching = lattice.branching();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(0));
    let fraction = |value: Option<f64>, default: f64, what: &str| -> Result<f64> {
        let v = value.unwrap_or(default);
        if v > 0.0 && v < 1.0 {
            Ok(v)
        } else {
            Err(Error::InvalidParameter(format!("{what} must lie in (0, 1), got {v}")))
        }
    };
    match name {
        "uniform" => Ok(Measure::uniform(lattice)),
        "random" => {
            let masses: Vec<f64> = (0..lattice.num_leaves()).map(|_| 1.0 - rng.random::<f64>()).collect();
            normalized(lattice, masses)
        }
        "left_loaded" => {
            let delta = fraction(params.delta, 0.25, "delta")?;
            let rest = (1.0 - delta) / (branching - 1) as f64;
            split_down(lattice, |_, _| {
                let mut w = vec![rest; branching];
                w[0] = delta;
                w
            })
        }
        "dyadic_doubling_random" => {
            let spread = params.spread.unwrap_or(2.0);
            if !(spread >= 1.0 && spread.is_finite()) {
                return Err(Error::InvalidParameter(format!("spread must be at least 1, got {spread}")));
            }
            split_down(lattice, |_, _| {
                let w: Vec<f64> = (0..branching)
                    .map(|_| if spread > 1.0 { rng.random_range(1.0..spread) } else { 1.0 })
                    .collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(|x| x / total).collect()
            })
        }
        "near_point_mass" => {
            let epsilon = fraction(params.epsilon, 1e-3, "epsilon")?;
            let target = params.leaf.unwrap_or(0);
            if target >= lattice.num_leaves() {
                return Err(Error::InvalidParameter(format!("leaf {target} out of range")));
            }
            let leaf_cube = Cube::new(lattice.depth(), target as u64);
            split_down(lattice, |lat, cube| {
                if !lat.is_subcube(leaf_cube, cube) {
                    return vec![1.0 / branching as f64; branching];
                }
                let towards = lat.child_position(lat.ancestor(leaf_cube, lattice.depth() - cube.level - 1).unwrap());
                let mut w = vec![epsilon / (branching - 1) as f64; branching];
                w[towards] = 1.0 - epsilon;
                w
            })
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

fn normalized(lattice: DyadicLattice, masses: Vec<f64>) -> Result<Measure> {
    let total: f64 = masses.iter().sum();
    Measure::new(lattice, masses.into_iter().map(|m| m / total).collect())
}

/// Total mass 1 split top-down by per-cube child fractions.
fn split_down(
    lattice: DyadicLattice,
    mut fractions: impl FnMut(&DyadicLattice, Cube) -> Vec<f64>,
) -> Result<Measure> {
    let mut mass = vec![0.0; lattice.num_cubes()];
    mass[0] = 1.0;
    for cube in lattice.inner_cubes() {
        let w = fractions(&lattice, cube);
        let parent = mass[lattice.cube_id(cube)];
        for (child, wj) in lattice.children(cube).zip(w) {
            mass[lattice.cube_id(child)] = parent * wj;
        }
    }
    let offset = lattice.level_offset(lattice.depth());
    Measure::new(lattice, mass.split_off(offset))
}

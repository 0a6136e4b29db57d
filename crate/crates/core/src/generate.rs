//! Seeded generators of positive, compactly supported matrix fields.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Cube, Measure};
use crate::opalgebra::{lp_norm, Mat, OperatorField};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// `A*A` per leaf with log-normal amplitudes.
    #[default]
    Psd,
    /// A single positive-mass leaf carries `A*A`, every other leaf is zero.
    Spike,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub seed: u64,
    pub n: usize,
    #[serde(default)]
    pub recipe: Recipe,
    /// Columns of `A`; defaults to `n`.
    #[serde(default)]
    pub rank: Option<usize>,
    /// Standard deviation of the log-amplitude; larger means spikier.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Probability that a leaf inside the support is nonzero.
    #[serde(default)]
    pub density: Option<f64>,
    /// Support cube `[level, index]`; the root by default.
    #[serde(default)]
    pub support: Option<(u32, u64)>,
    /// Leaf carrying the spike; drawn from the seed when absent.
    #[serde(default)]
    pub leaf: Option<usize>,
    /// Rescale so that `‖f‖_1 = 1`.
    #[serde(default)]
    pub normalize: bool,
}

impl FieldSpec {
    pub fn psd(seed: u64, n: usize) -> Self {
        FieldSpec {
            seed,
            n,
            recipe: Recipe::Psd,
            rank: None,
            sigma: None,
            density: None,
            support: None,
            leaf: None,
            normalize: false,
        }
    }

    pub fn spike(seed: u64, n: usize) -> Self {
        FieldSpec {
            recipe: Recipe::Spike,
            ..FieldSpec::psd(seed, n)
        }
    }
}

pub const DEFAULT_SIGMA: f64 = 1.5;

fn gram(rng: &mut ChaCha8Rng, n: usize, rank: usize, amplitude: f64) -> Mat {
    let a = Mat::from_fn(rank, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let g = a.adjoint() * a * Complex64::new(amplitude / rank as f64, 0.0);
    // exact Hermitian symmetry
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn generate_field(spec: &FieldSpec, measure: &Measure) -> Result<OperatorField> {
    let lattice = *measure.lattice();
    let n = spec.n;
    if n == 0 {
        return Err(Error::InvalidParameter("matrix size must be positive".into()));
    }
    let rank = spec.rank.unwrap_or(n);
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be positive".into()));
    }
    let sigma = spec.sigma.unwrap_or(DEFAULT_SIGMA);
    let density = spec.density.unwrap_or(1.0);
    if !(sigma >= 0.0 && sigma.is_finite()) || !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidParameter(format!("sigma {sigma}, density {density}")));
    }
    let support = spec.support.map_or(Cube::ROOT, |(k, i)| Cube::new(k, i));
    lattice.check(support)?;
    let range = lattice.leaf_range(support);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut leaves = vec![Mat::zeros(n, n); lattice.num_leaves()];
    match spec.recipe {
        Recipe::Psd => {
            for leaf in range {
                let on = rng.random::<f64>() < density;
                let log_amp: f64 = rng.sample(StandardNormal);
                if on {
                    leaves[leaf] = gram(&mut rng, n, rank, (sigma * log_amp).exp());
                }
            }
        }
        Recipe::Spike => {
            let leaf = match spec.leaf {
                Some(leaf) if range.contains(&leaf) => leaf,
                Some(leaf) => {
                    return Err(Error::InvalidParameter(format!("spike leaf {leaf} outside the support")))
                }
                None => {
                    let candidates: Vec<usize> = range.filter(|&i| measure.leaf_mass(i) > 0.0).collect();
                    if candidates.is_empty() {
                        return Err(Error::ZeroInput);
                    }
                    candidates[rng.random_range(0..candidates.len())]
                }
            };
            let mass = measure.leaf_mass(leaf);
            let amplitude = if mass > 0.0 { 1.0 / mass } else { 1.0 };
            leaves[leaf] = gram(&mut rng, n, rank, amplitude);
        }
    }
    let mut field = OperatorField::new(lattice, n, leaves)?;
    if spec.normalize {
        let norm = lp_norm(&field, 1.0, measure);
        if norm > 0.0 {
            field = field.scale_real(norm.recip());
        }
    }
    Ok(field)
}

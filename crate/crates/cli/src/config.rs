//! Experiment configuration: a single JSON document describing the lattice,
//! measure, input fields, operator, heights and suite.

use std::path::{Path, PathBuf};

use ncdyadic::generate::{FieldSpec, Recipe};
use ncdyadic::shift::{MeasureParams, ShiftParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Haar,
    Cuculescu,
    Czd,
    Shift,
    WtScan,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Haar => "haar",
            Suite::Cuculescu => "cuculescu",
            Suite::Czd => "czd",
            Suite::Shift => "shift",
            Suite::WtScan => "wt-scan",
        }
    }
}

/// A value or a list of values cycled over instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    #[serde(default = "one")]
    pub d: u32,
    #[serde(rename = "K")]
    pub depth: OneOrMany<u32>,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSpec {
    File {
        file: PathBuf,
    },
    Preset {
        preset: String,
        #[serde(default)]
        params: MeasureParams,
        /// Expands into one measure per value of `delta`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        deltas: Option<Vec<f64>>,
    },
}

impl MeasureSpec {
    /// Expands `deltas` lists into individual presets.
    pub fn expand(&self) -> Vec<MeasureSpec> {
        match self {
            MeasureSpec::Preset {
                preset,
                params,
                deltas: Some(deltas),
            } => deltas
                .iter()
                .map(|&delta| MeasureSpec::Preset {
                    preset: preset.clone(),
                    params: MeasureParams {
                        delta: Some(delta),
                        ..params.clone()
                    },
                    deltas: None,
                })
                .collect(),
            other => vec![other.clone()],
        }
    }

    pub fn label(&self) -> String {
        match self {
            MeasureSpec::File { file } => file.display().to_string(),
            MeasureSpec::Preset { preset, params, .. } => match (params.delta, params.epsilon) {
                (Some(delta), _) if preset == "left_loaded" => format!("{preset}(delta={delta})"),
                (_, Some(eps)) if preset == "near_point_mass" => format!("{preset}(epsilon={eps})"),
                _ => preset.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldConfig {
    File {
        file: PathBuf,
    },
    Generated {
        n: OneOrMany<usize>,
        #[serde(default)]
        recipe: Recipe,
        #[serde(default)]
        rank: Option<usize>,
        #[serde(default)]
        sigma: Option<OneOrMany<f64>>,
        #[serde(default)]
        density: Option<f64>,
        #[serde(default)]
        support: Option<(u32, u64)>,
        /// Additional spike inputs per case (shift suites).
        #[serde(default)]
        spikes: usize,
    },
}

impl FieldConfig {
    pub fn sizes(&self) -> Vec<usize> {
        match self {
            FieldConfig::File { .. } => vec![0],
            FieldConfig::Generated { n, .. } => n.to_vec(),
        }
    }

    pub fn spikes(&self) -> usize {
        match self {
            FieldConfig::File { .. } => 0,
            FieldConfig::Generated { spikes, .. } => *spikes,
        }
    }

    /// Generator spec for one instance; sigma lists are cycled by `pick`.
    pub fn spec(&self, seed: u64, n: usize, pick: usize) -> Option<FieldSpec> {
        match self {
            FieldConfig::File { .. } => None,
            FieldConfig::Generated {
                recipe,
                rank,
                sigma,
                density,
                support,
                ..
            } => Some(FieldSpec {
                seed,
                n,
                recipe: *recipe,
                rank: *rank,
                sigma: sigma.as_ref().map(|s| {
                    let values = s.to_vec();
                    values[pick % values.len()]
                }),
                density: *density,
                support: *support,
                leaf: None,
                normalize: false,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    File {
        file: PathBuf,
    },
    Preset {
        preset: String,
        #[serde(default)]
        params: ShiftParams,
    },
}

impl OperatorSpec {
    pub fn label(&self) -> String {
        match self {
            OperatorSpec::File { file } => file.display().to_string(),
            OperatorSpec::Preset { preset, .. } => preset.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSpec {
    /// The minimal admissible height, the operator norm of the root average.
    Auto,
    Value(f64),
    /// A multiple of the minimal height.
    Factor(f64),
    /// A log-uniform random multiple in `[lo, hi]`, drawn per instance.
    FactorRange([f64; 2]),
    /// Several multiples, evaluated on every instance.
    Sweep(Vec<f64>),
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Factor(2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub seed: u64,
    pub lattice: LatticeSpec,
    pub measure: OneOrMany<MeasureSpec>,
    pub field: FieldConfig,
    #[serde(default)]
    pub operator: Option<OneOrMany<OperatorSpec>>,
    #[serde(default)]
    pub lambda: LambdaSpec,
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Tolerance handed to the projection verifier.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Shift cases with a larger `Ξ` are reported but not asserted.
    #[serde(default)]
    pub xi_max: Option<f64>,
    /// Matrix size used for the `L_2` operator norm.
    #[serde(default = "default_norm_n")]
    pub norm_n: usize,
    pub output: PathBuf,
}

fn default_instances() -> usize {
    1
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_norm_n() -> usize {
    1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = crate::error::read(path)?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.check()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        if let OneOrMany::One(MeasureSpec::File { file }) = &mut self.measure {
            fix(file);
        }
        if let OneOrMany::Many(specs) = &mut self.measure {
            for spec in specs {
                if let MeasureSpec::File { file } = spec {
                    fix(file);
                }
            }
        }
        if let FieldConfig::File { file } = &mut self.field {
            fix(file);
        }
        if let Some(ops) = &mut self.operator {
            let list: Vec<&mut OperatorSpec> = match ops {
                OneOrMany::One(op) => vec![op],
                OneOrMany::Many(ops) => ops.iter_mut().collect(),
            };
            for op in list {
                if let OperatorSpec::File { file } = op {
                    fix(file);
                }
            }
        }
    }

    /// Structural checks that do not need any computation.
    pub fn check(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.depths().is_empty() || self.field.sizes().is_empty() || self.measures().is_empty() {
            return bad("lattice depths, field sizes and measures must be non-empty".into());
        }
        if self.instances == 0 {
            return bad("instances must be positive".into());
        }
        if matches!(self.suite, Suite::Shift | Suite::WtScan) && self.operators().is_empty() {
            return bad(format!("suite {} needs an operator", self.suite.name()));
        }
        match &self.lambda {
            LambdaSpec::Value(v) | LambdaSpec::Factor(v) if !(*v > 0.0) => bad(format!("lambda {v} must be positive")),
            LambdaSpec::FactorRange([lo, hi]) if !(*lo > 0.0 && hi >= lo) => {
                bad(format!("factor range [{lo}, {hi}] is empty"))
            }
            LambdaSpec::Sweep(list) if list.is_empty() || list.iter().any(|v| !(*v > 0.0)) => {
                bad("lambda sweep needs positive factors".into())
            }
            _ => {
                for path in self.referenced_files() {
                    if !path.exists() {
                        return bad(format!("referenced file {} does not exist", path.display()));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn referenced_files(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for m in self.measure.to_vec() {
            if let MeasureSpec::File { file } = m {
                out.push(file);
            }
        }
        if let FieldConfig::File { file } = &self.field {
            out.push(file.clone());
        }
        for op in self.operators() {
            if let OperatorSpec::File { file } = op {
                out.push(file);
            }
        }
        out
    }

    pub fn depths(&self) -> Vec<u32> {
        self.lattice.depth.to_vec()
    }

    pub fn measures(&self) -> Vec<MeasureSpec> {
        self.measure.to_vec().iter().flat_map(MeasureSpec::expand).collect()
    }

    pub fn operators(&self) -> Vec<OperatorSpec> {
        self.operator.as_ref().map(OneOrMany::to_vec).unwrap_or_default()
    }
}

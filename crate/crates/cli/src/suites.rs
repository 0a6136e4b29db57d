//! Suite drivers. Each instance is built from its own random stream, so the
//! results do not depend on scheduling; rows are assembled in instance order.

use std::collections::BTreeMap;

use ncdyadic::cuculescu::{cuculescu, minimal_lambda, verify_cuculescu};
use ncdyadic::czd::{cz_decompose, cz_estimates, structural_identities};
use ncdyadic::generate::{generate_field, FieldSpec, Recipe};
use ncdyadic::haar::{gram_residual, haar_expansion, validate_system, HaarSystem};
use ncdyadic::io::{self, FieldFile, MeasureFile, ShiftFile};
use ncdyadic::lattice::{DyadicLattice, Measure};
use ncdyadic::opalgebra::{lp_norm, OperatorField};
use ncdyadic::shift::{
    preset_measure, preset_shift, proof_constant, weak_type_ratio, HaarShift, MeasureParams, ProofConstant,
};
use ncdyadic::CheckRow;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, FieldConfig, LambdaSpec, MeasureSpec, OperatorSpec, Suite};
use crate::error::{read, CliError};
use crate::output::{sha256_hex, Cell, InstanceRecord, SuiteOutput, Table};

/// Slack on the weak-type comparison against the assembled constant.
pub const WEAK_TYPE_SLACK: f64 = 1e-8;
pub const HAAR_RESIDUAL_TOL: f64 = 1e-9;

struct Draw {
    measure_seed: u64,
    field_seed: u64,
    lambda_u: f64,
}

fn draw(seed: u64, stream: u64) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Draw {
        measure_seed: rng.random(),
        field_seed: rng.random(),
        lambda_u: rng.random(),
    }
}

pub fn measure_digest(measure: &Measure) -> String {
    sha256_hex(io::to_json(&MeasureFile::from_measure(measure)).as_bytes())
}

pub fn field_digest(field: &OperatorField) -> String {
    sha256_hex(io::to_json(&FieldFile::from_field(field)).as_bytes())
}

pub fn operator_digest(shift: &HaarShift) -> String {
    sha256_hex(io::to_json(&ShiftFile::from_shift(shift)).as_bytes())
}

pub fn build_measure(spec: &MeasureSpec, dim: u32, depth: u32, seed: u64) -> Result<Measure, CliError> {
    match spec {
        MeasureSpec::File { file } => Ok(io::parse::<MeasureFile>(&read(file)?)?.to_measure()?),
        MeasureSpec::Preset { preset, params, .. } => {
            let params = MeasureParams {
                seed: params.seed.or(Some(seed)),
                ..params.clone()
            };
            Ok(preset_measure(preset, DyadicLattice::new(dim, depth)?, &params)?)
        }
    }
}

pub fn build_operator(spec: &OperatorSpec, measure: &Measure) -> Result<HaarShift, CliError> {
    match spec {
        OperatorSpec::File { file } => Ok(io::parse::<ShiftFile>(&read(file)?)?.to_shift(measure)?),
        OperatorSpec::Preset { preset, params } => Ok(preset_shift(preset, measure, params)?),
    }
}

/// Input kinds beyond the configured recipe.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Input {
    Configured,
    Spike(Option<usize>),
}

fn build_field(
    config: &FieldConfig,
    measure: &Measure,
    n: usize,
    seed: u64,
    pick: usize,
    input: Input,
) -> Result<OperatorField, CliError> {
    let field = match (config, input) {
        (FieldConfig::File { file }, Input::Configured) => {
            let f = io::parse::<FieldFile>(&read(file)?)?.to_field()?;
            f.check_measure(measure)?;
            f
        }
        (_, Input::Spike(leaf)) => {
            let base = config.spec(seed, n.max(1), pick).unwrap_or_else(|| FieldSpec::psd(seed, n.max(1)));
            let spec = FieldSpec {
                recipe: Recipe::Spike,
                leaf,
                support: None,
                ..base
            };
            generate_field(&spec, measure)?
        }
        (FieldConfig::Generated { .. }, Input::Configured) => {
            generate_field(&config.spec(seed, n, pick).expect("generated spec"), measure)?
        }
    };
    Ok(field)
}

struct Instance {
    index: usize,
    measure_label: String,
    measure: Measure,
    field: OperatorField,
    draw: Draw,
    measure_digest: String,
    field_digest: String,
    kind: &'static str,
}

impl Instance {
    fn depth(&self) -> u32 {
        self.measure.lattice().depth()
    }

    fn n(&self) -> usize {
        self.field.n()
    }

    fn seeds(&self) -> serde_json::Value {
        json!({ "measure": self.draw.measure_seed, "field": self.draw.field_seed })
    }

    fn digests(&self) -> serde_json::Value {
        json!({ "measure": self.measure_digest, "field": self.field_digest })
    }

    fn record(&self, label: String, checks: Vec<CheckRow>) -> InstanceRecord {
        InstanceRecord {
            instance: self.index,
            label,
            seeds: self.seeds(),
            digests: self.digests(),
            checks,
        }
    }
}

fn build_instance(config: &ExperimentConfig, index: usize, input: Input) -> Result<Instance, CliError> {
    let depths = config.depths();
    let sizes = config.field.sizes();
    let measures = config.measures();
    let (a, b) = (depths.len(), sizes.len());
    let depth = depths[index % a];
    let n = sizes[(index / a) % b];
    let spec = &measures[(index / (a * b)) % measures.len()];
    let draw = draw(config.seed, index as u64);
    let measure = build_measure(spec, config.lattice.d, depth, draw.measure_seed)?;
    let field = build_field(&config.field, &measure, n, draw.field_seed, index, input)?;
    Ok(Instance {
        index,
        measure_label: spec.label(),
        measure_digest: measure_digest(&measure),
        field_digest: field_digest(&field),
        measure,
        field,
        draw,
        kind: match input {
            Input::Configured => "random",
            Input::Spike(_) => "spike",
        },
    })
}

/// Heights for one instance, from the configured λ mode.
fn lambdas(spec: &LambdaSpec, inst: &Instance) -> Result<Vec<f64>, CliError> {
    let base = minimal_lambda(&inst.field, &inst.measure);
    if !(base > 0.0) {
        return Err(ncdyadic::Error::ZeroInput.into());
    }
    Ok(match spec {
        LambdaSpec::Auto => vec![base],
        LambdaSpec::Value(v) => vec![*v],
        LambdaSpec::Factor(c) => vec![c * base],
        LambdaSpec::FactorRange([lo, hi]) => vec![lo * (hi / lo).powf(inst.draw.lambda_u) * base],
        LambdaSpec::Sweep(factors) => factors.iter().map(|c| c * base).collect(),
    })
}

/// Inputs of one instance as the suites see them: random fields first,
/// then the configured number of spikes.
pub struct Materialized {
    pub measure: Measure,
    pub field: OperatorField,
    pub lambdas: Vec<f64>,
}

fn input_for(config: &ExperimentConfig, index: usize) -> Input {
    if index < config.instances {
        Input::Configured
    } else {
        Input::Spike(None)
    }
}

pub fn materialize(config: &ExperimentConfig, index: usize) -> Result<Materialized, CliError> {
    let inst = build_instance(config, index, input_for(config, index))?;
    let lambdas = lambdas(&config.lambda, &inst).unwrap_or_default();
    Ok(Materialized {
        measure: inst.measure,
        field: inst.field,
        lambdas,
    })
}

/// One result list per instance, one entry per height.
type PerInstance<T> = Vec<Result<Vec<T>, CliError>>;

fn collect<T: Send>(items: Vec<Result<T, CliError>>) -> Result<Vec<T>, CliError> {
    items.into_iter().collect()
}

pub fn run_suite(config: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    match config.suite {
        Suite::Haar => haar_suite(config),
        Suite::Cuculescu => cuculescu_suite(config),
        Suite::Czd => czd_suite(config),
        Suite::Shift => shift_suite(config),
        Suite::WtScan => wt_scan_suite(config),
    }
}

fn instances(config: &ExperimentConfig) -> Result<Vec<Instance>, CliError> {
    collect(
        (0..config.instances)
            .into_par_iter()
            .map(|i| build_instance(config, i, Input::Configured))
            .collect(),
    )
}

fn haar_suite(config: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let mut table = Table::new(&[
        "instance",
        "d",
        "K",
        "n",
        "measure",
        "measure_seed",
        "field_seed",
        "measure_digest",
        "functions",
        "failures",
        "warnings",
        "gram_residual",
        "indicator_failures",
        "expansion_residual",
        "pass",
    ]);
    let insts = instances(config)?;
    let results: Vec<_> = insts
        .par_iter()
        .map(|inst| {
            let mu = &inst.measure;
            let system = HaarSystem::canonical(mu);
            let report = validate_system(&system, mu);
            let gram = gram_residual(&system, mu);
            let indicators = validate_system(&HaarSystem::normalized_indicators(mu), mu);
            let f = &inst.field;
            let scale = lp_norm(f, 2.0, mu);
            let diff = (&haar_expansion(f, mu) - f).on_support(mu);
            let expansion = if scale > 0.0 { lp_norm(&diff, 2.0, mu) / scale } else { 0.0 };
            let checks = vec![
                CheckRow::residual("haar.canonical.failures", report.failures as f64, 0.0),
                CheckRow::residual("haar.gram", gram, HAAR_RESIDUAL_TOL),
                CheckRow::residual("haar.indicators.failures", indicators.failures as f64, 0.0),
                CheckRow::residual("haar.expansion", expansion, HAAR_RESIDUAL_TOL),
            ];
            (system.functions().len(), report, gram, indicators.failures, expansion, checks)
        })
        .collect();
    let mut records = Vec::new();
    for (inst, (functions, report, gram, ind_failures, expansion, checks)) in insts.iter().zip(results) {
        let pass = checks.iter().all(|c| c.pass);
        table.push(vec![
            inst.index.into(),
            inst.measure.lattice().dim().into(),
            inst.depth().into(),
            inst.n().into(),
            inst.measure_label.clone().into(),
            inst.draw.measure_seed.into(),
            inst.draw.field_seed.into(),
            inst.measure_digest.clone().into(),
            functions.into(),
            report.failures.into(),
            report.warnings.into(),
            gram.into(),
            ind_failures.into(),
            expansion.into(),
            pass.into(),
        ]);
        records.push(inst.record(format!("instance {}", inst.index), checks));
    }
    Ok(SuiteOutput { table, instances: records })
}

fn cuculescu_suite(config: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let mut table = Table::new(&[
        "instance",
        "K",
        "n",
        "measure",
        "lambda",
        "measure_seed",
        "field_seed",
        "measure_digest",
        "field_digest",
        "stopping_cubes",
        "check",
        "lhs",
        "rhs",
        "ratio",
        "pass",
    ]);
    let insts = instances(config)?;
    let results: PerInstance<(f64, usize, Vec<CheckRow>)> = insts
        .par_iter()
        .map(|inst| {
            lambdas(&config.lambda, inst)?
                .into_iter()
                .map(|lambda| {
                    let res = cuculescu(&inst.field, &inst.measure, lambda)?;
                    let rows = verify_cuculescu(&res, &inst.field, &inst.measure, config.tolerance)?;
                    Ok((lambda, res.stopping_cubes().len(), rows))
                })
                .collect()
        })
        .collect();
    let mut records = Vec::new();
    for (inst, per_lambda) in insts.iter().zip(collect(results)?) {
        for (lambda, stopping, rows) in per_lambda {
            for row in &rows {
                table.push(vec![
                    inst.index.into(),
                    inst.depth().into(),
                    inst.n().into(),
                    inst.measure_label.clone().into(),
                    lambda.into(),
                    inst.draw.measure_seed.into(),
                    inst.draw.field_seed.into(),
                    inst.measure_digest.clone().into(),
                    inst.field_digest.clone().into(),
                    stopping.into(),
                    row.id.clone().into(),
                    row.lhs.into(),
                    row.rhs.into(),
                    row.ratio.into(),
                    row.pass.into(),
                ]);
            }
            records.push(inst.record(format!("instance {} lambda {lambda}", inst.index), rows));
        }
    }
    Ok(SuiteOutput { table, instances: records })
}

const CZD_ESTIMATES: [&str; 6] = [
    "czd.a.g_diag_l2",
    "czd.b.b_diag_l1",
    "czd.c.beta_diag_l1",
    "czd.d.g_off_l2",
    "czd.e.b_off_l1",
    "czd.f.beta_off_l1",
];

fn czd_suite(config: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let mut table = Table::new(&[
        "instance",
        "K",
        "n",
        "measure",
        "lambda",
        "measure_seed",
        "field_seed",
        "measure_digest",
        "field_digest",
        "ratio_g_diag",
        "ratio_b_diag",
        "ratio_beta_diag",
        "ratio_g_off",
        "ratio_b_off",
        "ratio_beta_off",
        "g_diag_l1_residual",
        "reconstruction_residual",
        "max_identity_residual",
        "pass",
    ]);
    let insts = instances(config)?;
    let results: PerInstance<(f64, Vec<CheckRow>)> = insts
        .par_iter()
        .map(|inst| {
            lambdas(&config.lambda, inst)?
                .into_iter()
                .map(|lambda| {
                    let parts = cz_decompose(&inst.field, &inst.measure, lambda)?;
                    let mut rows = cz_estimates(&parts)?;
                    rows.extend(structural_identities(&parts)?);
                    Ok((lambda, rows))
                })
                .collect()
        })
        .collect();
    let mut records = Vec::new();
    for (inst, per_lambda) in insts.iter().zip(collect(results)?) {
        for (lambda, rows) in per_lambda {
            let find = |id: &str| rows.iter().find(|r| r.id == id).expect("estimate row");
            let mut row: Vec<Cell> = vec![
                inst.index.into(),
                inst.depth().into(),
                inst.n().into(),
                inst.measure_label.clone().into(),
                lambda.into(),
                inst.draw.measure_seed.into(),
                inst.draw.field_seed.into(),
                inst.measure_digest.clone().into(),
                inst.field_digest.clone().into(),
            ];
            row.extend(CZD_ESTIMATES.iter().map(|id| Cell::from(find(id).ratio)));
            let l1 = find("czd.a.g_diag_l1");
            row.push(((l1.lhs - l1.rhs).abs() / l1.rhs).into());
            row.push(find("czd.reconstruction").lhs.into());
            let identities = rows
                .iter()
                .filter(|r| r.id.starts_with("id."))
                .map(|r| r.lhs)
                .fold(0.0, f64::max);
            row.push(identities.into());
            row.push(rows.iter().all(|r| r.pass).into());
            table.push(row);
            records.push(inst.record(format!("instance {} lambda {lambda}", inst.index), rows));
        }
    }
    Ok(SuiteOutput { table, instances: records })
}

/// Operator-level constants, shared by all inputs on the same measure.
struct OperatorCase {
    shift: HaarShift,
    digest: String,
    constant: ProofConstant,
}

fn operator_cases(
    config: &ExperimentConfig,
    measures: &[(&Measure, &str)],
) -> Result<BTreeMap<(usize, String), OperatorCase>, CliError> {
    let ops = config.operators();
    let mut keys: BTreeMap<(usize, String), &Measure> = BTreeMap::new();
    for (op, _) in ops.iter().enumerate() {
        for (mu, digest) in measures {
            keys.entry((op, digest.to_string())).or_insert(mu);
        }
    }
    let keys: Vec<_> = keys.into_iter().collect();
    let cases: Vec<Result<_, CliError>> = keys
        .par_iter()
        .map(|((op, digest), mu)| {
            let shift = build_operator(&ops[*op], mu)?;
            let constant = proof_constant(&shift, mu, config.norm_n)?;
            Ok((
                (*op, digest.clone()),
                OperatorCase {
                    digest: operator_digest(&shift),
                    shift,
                    constant,
                },
            ))
        })
        .collect();
    Ok(collect(cases)?.into_iter().collect())
}

fn shift_suite(config: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let mut table = Table::new(&[
        "instance",
        "input",
        "K",
        "n",
        "measure",
        "operator",
        "measure_seed",
        "field_seed",
        "measure_digest",
        "field_digest",
        "operator_digest",
        "sup_symbol",
        "Xi",
        "testing_C",
        "l2_norm",
        "C_proof",
        "wt_ratio",
        "eligible",
        "pass",
    ]);
    let total = config.instances + config.field.spikes();
    let insts = collect(
        (0..total)
            .into_par_iter()
            .map(|i| build_instance(config, i, input_for(config, i)))
            .collect(),
    )?;
    let measures: Vec<(&Measure, &str)> = insts.iter().map(|i| (&i.measure, i.measure_digest.as_str())).collect();
    let cases = operator_cases(config, &measures)?;
    let ops = config.operators();
    let xi_max = config.xi_max.unwrap_or(f64::INFINITY);

    let jobs: Vec<(usize, usize)> = (0..insts.len()).flat_map(|i| (0..ops.len()).map(move |o| (i, o))).collect();
    let ratios: Vec<Result<f64, CliError>> = jobs
        .par_iter()
        .map(|&(i, o)| {
            let inst = &insts[i];
            let case = &cases[&(o, inst.measure_digest.clone())];
            Ok(weak_type_ratio(&case.shift, &inst.field, &inst.measure, None)?)
        })
        .collect();
    let ratios = collect(ratios)?;

    let mut records = Vec::new();
    for (&(i, o), wt) in jobs.iter().zip(ratios) {
        let inst = &insts[i];
        let case = &cases[&(o, inst.measure_digest.clone())];
        let c = &case.constant;
        let eligible = c.xi <= xi_max && c.testing.is_finite();
        let check = CheckRow::bound("shift.weak_type", wt, c.total, WEAK_TYPE_SLACK);
        let pass = !eligible || check.pass;
        table.push(vec![
            inst.index.into(),
            inst.kind.into(),
            inst.depth().into(),
            inst.n().into(),
            inst.measure_label.clone().into(),
            ops[o].label().into(),
            inst.draw.measure_seed.into(),
            inst.draw.field_seed.into(),
            inst.measure_digest.clone().into(),
            inst.field_digest.clone().into(),
            case.digest.clone().into(),
            c.sup_symbol.into(),
            c.xi.into(),
            c.testing.into(),
            c.l2_norm.into(),
            c.total.into(),
            wt.into(),
            eligible.into(),
            pass.into(),
        ]);
        let mut record = inst.record(
            format!("instance {} operator {}", inst.index, ops[o].label()),
            if eligible { vec![check] } else { Vec::new() },
        );
        record.digests["operator"] = json!(case.digest);
        records.push(record);
    }
    Ok(SuiteOutput { table, instances: records })
}

fn wt_scan_suite(config: &ExperimentConfig) -> Result<SuiteOutput, CliError> {
    let mut table = Table::new(&[
        "K",
        "measure",
        "delta",
        "operator",
        "measure_seed",
        "measure_digest",
        "operator_digest",
        "sup_symbol",
        "Xi",
        "testing_C",
        "inputs",
        "wt_ratio",
        "worst_input",
    ]);
    let ops = config.operators();
    let measure_specs = config.measures();
    let sizes = config.field.sizes();
    let mut scan = Vec::new();
    for depth in config.depths() {
        for spec in &measure_specs {
            scan.push((depth, spec));
        }
    }
    let built: Vec<Result<(u64, Measure), CliError>> = scan
        .par_iter()
        .enumerate()
        .map(|(c, (depth, spec))| {
            let seed = draw(config.seed, c as u64).measure_seed;
            Ok((seed, build_measure(spec, config.lattice.d, *depth, seed)?))
        })
        .collect();
    let built = collect(built)?;
    let digests: Vec<String> = built.iter().map(|(_, m)| measure_digest(m)).collect();
    let measures: Vec<(&Measure, &str)> = built.iter().zip(&digests).map(|((_, m), d)| (m, d.as_str())).collect();
    let cases = operator_cases(config, &measures)?;

    let jobs: Vec<(usize, usize)> = (0..scan.len()).flat_map(|m| (0..ops.len()).map(move |o| (m, o))).collect();
    let results: Vec<Result<(usize, f64, String), CliError>> = jobs
        .par_iter()
        .map(|&(m, o)| {
            let mu = &built[m].1;
            let case = &cases[&(o, digests[m].clone())];
            let positive: Vec<usize> = (0..mu.lattice().num_leaves()).filter(|&i| mu.leaf_mass(i) > 0.0).collect();
            let mut inputs: Vec<(String, Input)> = Vec::new();
            if let (Some(&first), Some(&last)) = (positive.first(), positive.last()) {
                inputs.push((format!("spike@{first}"), Input::Spike(Some(first))));
                inputs.push((format!("spike@{last}"), Input::Spike(Some(last))));
            }
            for s in 0..config.field.spikes() {
                inputs.push((format!("spike#{s}"), Input::Spike(None)));
            }
            for r in 0..config.instances {
                inputs.push((format!("random#{r}"), Input::Configured));
            }
            let mut worst = (0.0f64, String::new());
            for (j, (name, input)) in inputs.iter().enumerate() {
                let stream = ((m * ops.len() + o) as u64) << 32 | j as u64;
                let seed = draw(config.seed, stream).field_seed;
                let f = build_field(&config.field, mu, sizes[j % sizes.len()], seed, j, *input)?;
                if lp_norm(&f, 1.0, mu) == 0.0 {
                    continue;
                }
                let wt = weak_type_ratio(&case.shift, &f, mu, None)?;
                if wt > worst.0 || worst.1.is_empty() {
                    worst = (wt, name.clone());
                }
            }
            Ok((inputs.len(), worst.0, worst.1))
        })
        .collect();

    let mut records = Vec::new();
    for (&(m, o), result) in jobs.iter().zip(collect(results)?) {
        let (count, wt, worst) = result;
        let (depth, spec) = scan[m];
        let case = &cases[&(o, digests[m].clone())];
        let delta = match spec {
            MeasureSpec::Preset { params, .. } => params.delta.map_or(Cell::from(""), Cell::from),
            MeasureSpec::File { .. } => Cell::from(""),
        };
        table.push(vec![
            depth.into(),
            spec.label().into(),
            delta,
            ops[o].label().into(),
            built[m].0.into(),
            digests[m].clone().into(),
            case.digest.clone().into(),
            case.constant.sup_symbol.into(),
            case.constant.xi.into(),
            case.constant.testing.into(),
            count.into(),
            wt.into(),
            worst.into(),
        ]);
        records.push(InstanceRecord {
            instance: m,
            label: format!("{} {}", spec.label(), ops[o].label()),
            seeds: json!({ "measure": built[m].0 }),
            digests: json!({ "measure": digests[m], "operator": case.digest }),
            checks: Vec::new(),
        });
    }
    Ok(SuiteOutput { table, instances: records })
}

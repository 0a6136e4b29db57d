//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! on any failure.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ncdyadic::cuculescu::cuculescu;
use ncdyadic::haar::HaarSystem;
use ncdyadic::lattice::{DyadicLattice, Measure};
use ncdyadic::opalgebra::lp_norm;
use ncdyadic::shift::{
    apply_shift, default_lambda_grid, preset_measure, preset_shift, xi, MeasureParams, ShiftParams, SHIFT_PRESETS,
};
use ncdyadic_cli::config::ExperimentConfig;
use ncdyadic_cli::output::ReportFile;
use ncdyadic_cli::suites::{build_operator, materialize};
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(value: Value, out: &Path) -> ExperimentConfig {
    let mut value = value;
    value["output"] = json!(out);
    let config = ExperimentConfig::parse(&value.to_string()).expect("config parses");
    config.check().expect("config is valid");
    config
}

fn run(config: &ExperimentConfig) -> (ReportFile, f64) {
    let clock = Instant::now();
    let report = ncdyadic_cli::run(config, None).expect("suite runs");
    (report, clock.elapsed().as_secs_f64())
}

fn checks<'a>(report: &'a ReportFile, prefix: &'a str) -> impl Iterator<Item = &'a ncdyadic::CheckRow> + 'a {
    report
        .instances
        .iter()
        .flat_map(|r| &r.checks)
        .filter(move |c| c.id.starts_with(prefix))
}

fn max_lhs(report: &ReportFile, prefix: &str) -> f64 {
    checks(report, prefix).map(|c| c.lhs).fold(0.0, f64::max)
}

fn instance_config(suite: &str, seed: u64) -> Value {
    json!({
        "suite": suite,
        "seed": seed,
        "lattice": { "d": 1, "K": [4, 6, 8] },
        "measure": [
            { "preset": "random" },
            { "preset": "left_loaded", "params": { "delta": 0.015625 } },
            { "preset": "dyadic_doubling_random", "params": { "spread": 4.0 } },
            { "preset": "left_loaded", "params": { "delta": 0.25 } },
            { "preset": "near_point_mass", "params": { "epsilon": 0.01 } }
        ],
        "field": { "n": [1, 2, 4, 8], "sigma": [0.5, 1.5, 3.0], "density": 0.8 },
        "lambda": { "factor_range": [1.0, 16.0] },
        "instances": 200,
        "tolerance": 1e-8,
        "output": ""
    })
}

fn criterion_1_and_3(dir: &Path) -> (Outcome, Outcome) {
    let cfg = config(instance_config("czd", 2024), &dir.join("czd"));
    let (report, secs) = run(&cfg);
    let estimates: Vec<_> = checks(&report, "czd.").collect();
    let worst_ratio = estimates
        .iter()
        .filter(|c| ["czd.a.g_diag_l2", "czd.b.", "czd.c.", "czd.d.", "czd.e.", "czd.f."].iter().any(|p| c.id.starts_with(p)))
        .map(|c| c.ratio)
        .fold(0.0, f64::max);
    let l1 = checks(&report, "czd.a.g_diag_l1")
        .map(|c| (c.lhs - c.rhs).abs() / c.rhs)
        .fold(0.0, f64::max);
    let recon = max_lhs(&report, "czd.reconstruction");
    let estimates_ok = estimates.iter().all(|c| c.pass);
    let rows = report.summary.rows;
    let c1 = outcome(
        estimates_ok && rows == 200 && worst_ratio <= 1.0 + 1e-8 && l1 <= 1e-9 && recon <= 1e-9 && secs <= 60.0,
        format!(
            "{rows} instances, max ratio {worst_ratio:.4}, g_diag L1 rel {l1:.2e}, reconstruction {recon:.2e}, {secs:.1}s"
        ),
    );
    let ids: Vec<_> = checks(&report, "id.").collect();
    let worst_id = ids.iter().map(|c| c.lhs).fold(0.0, f64::max);
    let c3 = outcome(
        !ids.is_empty() && ids.iter().all(|c| c.pass) && worst_id <= 1e-9,
        format!("{} identity rows, max residual {worst_id:.2e}", ids.len()),
    );
    (c1, c3)
}

fn criterion_2(dir: &Path) -> Outcome {
    let cfg = config(instance_config("cuculescu", 2024), &dir.join("cuculescu"));
    let (report, secs) = run(&cfg);
    let rows: Vec<_> = checks(&report, "cuc.").collect();
    let props_ok = !rows.is_empty() && rows.iter().all(|c| c.pass);
    let mut scalar = 0;
    let mut mismatches = 0;
    for index in 0..cfg.instances {
        let inst = materialize(&cfg, index).expect("instance");
        if inst.field.n() != 1 {
            continue;
        }
        for &lambda in &inst.lambdas {
            scalar += 1;
            let res = cuculescu(&inst.field, &inst.measure, lambda).expect("projections");
            let mut found: Vec<(u32, u64)> = res.stopping_cubes().iter().map(|c| (c.level, c.index)).collect();
            let values = oracle::scalar_values(&inst.field);
            let mut expect = oracle::scalar_stopping(&values, &inst.measure, lambda).stopping;
            found.sort();
            expect.sort();
            mismatches += (found != expect) as usize;
        }
    }
    outcome(
        props_ok && scalar > 0 && mismatches == 0,
        format!(
            "{} property rows at tol 1e-8, {scalar} scalar instances, {mismatches} stopping-set mismatches, {secs:.1}s",
            rows.len()
        ),
    )
}

fn criterion_4(dir: &Path) -> Outcome {
    let mut value = instance_config("haar", 404);
    value["instances"] = json!(100);
    value["lattice"]["K"] = json!([3, 5, 7, 8]);
    let cfg = config(value, &dir.join("haar"));
    let (report, _) = run(&cfg);
    let failures = checks(&report, "haar.canonical.failures").filter(|c| !c.pass).count();
    let gram = max_lhs(&report, "haar.gram");
    let expansion = max_lhs(&report, "haar.expansion");
    outcome(
        report.summary.rows == 100 && report.summary.pass && failures == 0 && gram <= 1e-9 && expansion <= 1e-9,
        format!("100 measures, {failures} failing systems, Gram {gram:.2e}, expansion {expansion:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let lattice = DyadicLattice::new(1, 8).unwrap();
    let uniform = Measure::uniform(lattice);
    let h = HaarSystem::canonical(&uniform);
    let mut closed = 0.0f64;
    for r in 0..=3 {
        for s in 0..=3 {
            let expect = 2f64.powf((r as f64 - s as f64) / 2.0);
            closed = closed.max((xi(&h, &h, r, s, &uniform) - expect).abs());
        }
    }
    let mut monotone = true;
    let mut series = Vec::new();
    for (r, s) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 1)] {
        let values: Vec<f64> = (1..=8)
            .map(|k| {
                let params = MeasureParams { delta: Some(2f64.powi(-k)), ..Default::default() };
                let mu = preset_measure("left_loaded", lattice, &params).unwrap();
                let h = HaarSystem::canonical(&mu);
                xi(&h, &h, r, s, &mu)
            })
            .collect();
        // δ = 1/2 is the uniform measure; the increase is strict from there on
        monotone &= values.windows(2).all(|w| w[1] > w[0]);
        series.push(format!("({r},{s}) {:.3}..{:.3}", values[0], values[7]));
    }
    outcome(
        closed <= 1e-12 && monotone,
        format!("closed-form error {closed:.1e}; left_loaded Xi {}", series.join(", ")),
    )
}

fn shift_config() -> Value {
    json!({
        "suite": "shift",
        "seed": 606,
        "lattice": { "d": 1, "K": [4, 5, 7] },
        "measure": [
            { "preset": "uniform" },
            { "preset": "left_loaded", "params": { "delta": 0.25 } },
            { "preset": "dyadic_doubling_random", "params": { "seed": 5, "spread": 1.5 } },
            { "preset": "random", "params": { "seed": 8 } },
            { "preset": "left_loaded", "params": { "delta": 0.01 } }
        ],
        "field": { "n": [1, 2], "sigma": [1.0, 3.0], "density": 0.7, "spikes": 10 },
        "operator": [
            { "preset": "multiplier", "params": { "alpha": 1.0, "seed": 1 } },
            { "preset": "dyadic_hilbert" },
            { "preset": "adjoint", "params": { "alpha": 1.0, "seed": 3 } },
            { "preset": "paraproduct", "params": { "alpha": 1.0, "seed": 2 } }
        ],
        "xi_max": 4.0,
        "instances": 200,
        "output": ""
    })
}

fn criterion_6(dir: &Path) -> Outcome {
    let cfg = config(shift_config(), &dir.join("shift"));
    let (report, secs) = run(&cfg);
    let ops = cfg.operators();
    let mut eligible_per_op = vec![0usize; ops.len()];
    let mut worst = 0.0f64;
    let mut max_dev = 0.0f64;
    let mut compared = 0;
    for row in &report.rows {
        let op = ops.iter().position(|o| o.label() == row["operator"].as_str().unwrap()).unwrap();
        if row["eligible"].as_bool().unwrap() {
            eligible_per_op[op] += 1;
            worst = worst.max(row["wt_ratio"].as_f64().unwrap() / row["C_proof"].as_f64().unwrap());
        }
        if row["n"].as_u64() != Some(1) {
            continue;
        }
        let inst = materialize(&cfg, row["instance"].as_u64().unwrap() as usize).unwrap();
        let shift = build_operator(&ops[op], &inst.measure).unwrap();
        let image = oracle::triple_loop_shift(&shift, &inst.field, &inst.measure);
        let abs: Vec<f64> = image.leaves().iter().map(|m| m[(0, 0)].norm()).collect();
        let f1 = oracle::scalar_lp(&oracle::scalar_values(&inst.field), &inst.measure, 1.0);
        let grid = default_lambda_grid(&image, &inst.measure);
        let expect = oracle::scalar_weak_ratio(&abs, f1, &inst.measure, &grid);
        let ours = row["wt_ratio"].as_f64().unwrap();
        max_dev = max_dev.max((ours - expect).abs() / expect.max(1e-300));
        compared += 1;
    }
    let spikes = report.rows.iter().filter(|r| r["input"] == "spike").count() / ops.len();
    let randoms = report.rows.iter().filter(|r| r["input"] == "random").count() / ops.len();
    outcome(
        report.summary.pass
            && eligible_per_op.iter().all(|&e| e > 0)
            && randoms == 200
            && spikes == 10
            && compared > 0
            && max_dev <= 1e-8
            && secs <= 120.0,
        format!(
            "{randoms} random + {spikes} spikes, eligible per operator {eligible_per_op:?}, max wt/C_proof {worst:.2e}, \
             scalar deviation {max_dev:.1e} over {compared}, {secs:.1}s"
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = config(shift_config(), Path::new("/nonexistent"));
    let mut worst = 0.0f64;
    let mut cases = 0;
    for index in 0..cfg.instances + cfg.field.spikes() {
        let inst = materialize(&cfg, index).unwrap();
        if inst.measure.lattice().depth() > 5 || inst.field.n() > 2 {
            continue;
        }
        for name in SHIFT_PRESETS {
            let params = ShiftParams { seed: Some(index as u64), alpha: Some(1.0) };
            let shift = preset_shift(name, &inst.measure, &params).unwrap();
            for candidate in [shift.adjoint(), shift] {
                let mu = &inst.measure;
                let ours = apply_shift(&candidate, &inst.field, mu).on_support(mu);
                let theirs = oracle::triple_loop_shift(&candidate, &inst.field, mu).on_support(mu);
                let scale = lp_norm(&theirs, 2.0, mu).max(lp_norm(&inst.field, 2.0, mu));
                worst = worst.max(lp_norm(&(&ours - &theirs), 2.0, mu) / scale);
                cases += 1;
            }
        }
    }
    outcome(worst <= 1e-10 && cases > 0, format!("{cases} operator/input pairs, max relative error {worst:.2e}"))
}

fn criterion_8(dir: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_ncdyadic");
    let small = |mut v: Value, instances: usize| {
        v["instances"] = json!(instances);
        v
    };
    let wt = json!({
        "suite": "wt-scan",
        "seed": 3,
        "lattice": { "d": 1, "K": 6 },
        "measure": { "preset": "left_loaded", "deltas": [0.5, 0.125, 0.015625] },
        "field": { "n": 1, "spikes": 4 },
        "operator": [{ "preset": "dyadic_hilbert" }, { "preset": "multiplier", "params": { "seed": 4 } }],
        "instances": 3,
        "output": ""
    });
    let suites = [
        ("haar", small(instance_config("haar", 8), 12)),
        ("cuculescu", small(instance_config("cuculescu", 8), 12)),
        ("czd", small(instance_config("czd", 8), 12)),
        ("shift", small(shift_config(), 12)),
        ("wt-scan", wt),
    ];
    let mut identical = 0;
    let mut notes = Vec::new();
    for (name, value) in suites {
        let mut csvs = Vec::new();
        for (run, threads) in [(0, "1"), (1, "3")] {
            let out = dir.join(format!("det_{name}_{run}"));
            let mut v = value.clone();
            v["output"] = json!(out);
            let path = dir.join(format!("det_{name}_{run}.json"));
            std::fs::write(&path, v.to_string()).unwrap();
            let status = Command::new(bin)
                .args(["run", path.to_str().unwrap()])
                .env("NCDYADIC_THREADS", threads)
                .output()
                .unwrap();
            if !status.status.success() {
                notes.push(format!("{name} exited with {:?}", status.status.code()));
            }
            csvs.push(std::fs::read(out.join("report.csv")).unwrap_or_default());
        }
        if !csvs[0].is_empty() && csvs[0] == csvs[1] {
            identical += 1;
        } else {
            notes.push(format!("{name} differs"));
        }
    }
    outcome(
        identical == 5 && notes.is_empty(),
        format!("{identical}/5 suites byte-identical across runs and thread counts {}", notes.join("; ")),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let clock = Instant::now();
    let (c1, c3) = criterion_1_and_3(dir.path());
    let results = [
        ("1", c1),
        ("2", criterion_2(dir.path())),
        ("3", c3),
        ("4", criterion_4(dir.path())),
        ("5", criterion_5()),
        ("6", criterion_6(dir.path())),
        ("7", criterion_7()),
        ("8", criterion_8(dir.path())),
    ];
    let mut failed = 0;
    for (id, o) in &results {
        println!("{} criterion {id}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {}/{} passed in {:.1}s", results.len() - failed, results.len(), clock.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.
//!
//! Criterion 9 uses the CSV named by `PSC_EXPERIMENTAL_CSV` when set;
//! otherwise it runs on a generated measurement-style file.

// `ensure!(a < b)` must fail on NaN, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use psc_core::electrochem::transfer_coefficients;
use psc_core::estimation::{rmse, DEFAULT_K_BOUNDS};
use psc_core::sensitivity::elasticity;
use psc_core::{
    bv_residual, exchange_current_density, fit_dataset, integrate_growth, run_sweep,
    segment_regimes, solve_operating_point, standard_cell_potential, validate, ExperimentalDataset,
    FittedRateProfile, GrowthState, KSource, ModelParameters, OperatingProblem, Record,
    SweepParameter, SweepSpec, Tolerances,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "standard cell potential",
            budget: Duration::from_secs(1),
            run: c1_cell_potential,
        },
        Criterion {
            id: 2,
            name: "exchange current density",
            budget: Duration::from_secs(1),
            run: c2_exchange_current,
        },
        Criterion {
            id: 3,
            name: "root solve vs bisection oracle",
            budget: Duration::from_secs(10),
            run: c3_root_oracle,
        },
        Criterion {
            id: 4,
            name: "growth ODE accuracy and mass balance",
            budget: Duration::from_secs(1),
            run: c4_growth,
        },
        Criterion {
            id: 5,
            name: "estimation round trip",
            budget: Duration::from_secs(5),
            run: c5_round_trip,
        },
        Criterion {
            id: 6,
            name: "regime segmentation",
            budget: Duration::from_secs(1),
            run: c6_segmentation,
        },
        Criterion {
            id: 7,
            name: "sensitivity directions",
            budget: Duration::from_secs(5),
            run: c7_sensitivity,
        },
        Criterion {
            id: 8,
            name: "deterministic outputs",
            budget: Duration::from_secs(10),
            run: c8_determinism,
        },
        Criterion {
            id: 9,
            name: "end-to-end on experimental CSV",
            budget: Duration::from_secs(30),
            run: c9_end_to_end,
        },
    ];
    // Keep panics from individual checks as FAIL lines, not backtraces.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!(
                "{detail}; took {:.2} s, budget {} s",
                elapsed.as_secs_f64(),
                c.budget.as_secs()
            )),
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "criterion {}: PASS  {} ({detail}; {:.2} s)",
                c.id,
                c.name,
                elapsed.as_secs_f64()
            ),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {} ({detail})", c.id, c.name);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn c1_cell_potential() -> Check {
    let e0 = standard_cell_potential();
    ensure!(e0 == 1.241, "E0 = {e0:?}");
    ensure!(ModelParameters::default().e0 == 1.241, "default E0 differs");
    Ok(format!("E0 = {e0:?} V"))
}

fn c2_exchange_current() -> Check {
    // 40-digit evaluation of the closed form at K = 1, x = 12.2.
    let reference = 167_044.700_638_559_38;
    let j0 = exchange_current_density(1.0, 12.2, &ModelParameters::default());
    let vs_reference = ((j0 - reference) / reference).abs();
    let vs_nominal = ((j0 - 1.6704e5) / 1.6704e5).abs();
    ensure!(vs_reference < 1e-3 && vs_nominal < 1e-3, "j0 = {j0}");
    Ok(format!("j0 = {j0:.6e} A/m2, rel err {vs_reference:.1e}"))
}

fn bisection_oracle(problem: &OperatingProblem) -> f64 {
    let mut lo = 0.0_f64;
    let mut hi = problem.current_upper_bound();
    if bv_residual(lo, problem) <= 0.0 {
        return 0.0;
    }
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bv_residual(mid, problem) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c3_root_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let params = ModelParameters::default();
    let mut worst = 0.0_f64;
    for case in 0..1000 {
        let k = 10f64.powf(rng.gen_range(-8.0..=2.0));
        let r_ext = 10f64.powf(rng.gen_range(1.0..=7.0));
        let x = rng.gen_range(1.0..=1e5);
        let problem = OperatingProblem::new(r_ext, k, x, params).map_err(|e| e.to_string())?;
        let upper = problem.current_upper_bound();
        let mut prev = f64::INFINITY;
        for s in 0..100 {
            let f = bv_residual(upper * s as f64 / 99.0, &problem);
            ensure!(
                f < prev,
                "case {case}: residual not decreasing at grid point {s}"
            );
            prev = f;
        }
        let solved = solve_operating_point(&problem)
            .map_err(|e| e.to_string())?
            .i;
        let oracle = bisection_oracle(&problem);
        let rel = ((solved - oracle) / oracle).abs();
        ensure!(
            rel < 1e-10,
            "case {case} (K={k:e}, r={r_ext:e}, x={x}): rel err {rel:e}"
        );
        worst = worst.max(rel);
    }
    Ok(format!("1000 cases, worst rel err {worst:.1e}"))
}

fn c4_growth() -> Check {
    let p = ModelParameters::default();
    let tol = Tolerances {
        rel: 1e-10,
        abs: 1e-10,
    };
    let end = integrate_growth(GrowthState::initial(&p), 3600.0, &p, tol)
        .map_err(|e| e.to_string())?
        .last();
    let k1 = p.mu_max * p.n0 / (p.k_n + p.n0);
    let closed = p.x0 * ((k1 - p.k2) * 3600.0).exp();
    let rel = ((end.x - closed) / closed).abs();
    let rel_nominal = ((end.x - 14.325) / 14.325).abs();
    ensure!(rel < 1e-3 && rel_nominal < 1e-3, "x(3600) = {}", end.x);

    let no_decay = ModelParameters { k2: 0.0, ..p };
    let mut worst = 0.0_f64;
    for t_end in [3600.0, 86_400.0, 1e6] {
        let traj = integrate_growth(
            GrowthState::initial(&no_decay),
            t_end,
            &no_decay,
            Tolerances::default(),
        )
        .map_err(|e| e.to_string())?;
        for s in &traj.states {
            let gap =
                (no_decay.y_xn * (no_decay.n0 - s.n) - (s.x - no_decay.x0)).abs() / s.x.max(1.0);
            worst = worst.max(gap);
        }
    }
    ensure!(worst < 1e-7, "mass balance gap {worst:e}");
    Ok(format!(
        "x(3600) = {:.6} g/m3, mass-balance gap {worst:.1e}",
        end.x
    ))
}

fn c5_round_trip() -> Check {
    let p = ModelParameters::default();
    let points: Vec<(f64, f64, f64)> = geometric(100.0, 1e6, 18)
        .into_iter()
        .map(|r| {
            let (v, i) = forward(r, generating_k(r), p.x0, &p);
            (r, v, i)
        })
        .collect();
    let records = points
        .iter()
        .map(|&(r_ext, v_exp, i_exp)| Record {
            r_ext,
            v_exp,
            i_exp,
            split: psc_core::Split::Train,
        })
        .collect();
    let data = ExperimentalDataset::new(records).map_err(|e| e.to_string())?;
    let report = fit_dataset(&data, &p, 0.0, DEFAULT_K_BOUNDS).map_err(|e| e.to_string())?;
    ensure!(
        report.profile.entries.len() == 18,
        "profile has {} entries",
        report.profile.entries.len()
    );
    let mut worst_k = 0.0_f64;
    for e in &report.profile.entries {
        let truth = generating_k(e.r_ext);
        worst_k = worst_k.max(((e.k - truth) / truth).abs());
    }
    ensure!(worst_k < 1e-5, "K rel err {worst_k:e}");
    let train = report.train_rmse.unwrap_or(f64::NAN);
    ensure!(train < 1e-9, "train RMSE {train:e}");

    let split_data = synthetic_dataset(32);
    let fit = fit_dataset(&split_data, &p, 0.0, DEFAULT_K_BOUNDS).map_err(|e| e.to_string())?;
    let val = validate(&split_data, &fit.profile, &p, 0.0).map_err(|e| e.to_string())?;
    let test = val.test_rmse.unwrap_or(f64::NAN);
    ensure!(
        val.residuals.len() == 14,
        "{} test records",
        val.residuals.len()
    );
    ensure!(test < 1e-6, "test RMSE {test:e}");
    ensure!(
        (rmse(report.total_sse(), 18) - train).abs() <= 1e-12 * train.max(1e-300),
        "RMSE inconsistent"
    );
    Ok(format!(
        "K rel err {worst_k:.1e}, train RMSE {train:.1e}, test RMSE {test:.1e}"
    ))
}

fn c6_segmentation() -> Check {
    let loads = geometric(10.0, 1e6, 18);
    let knot = 8;
    let pairs: Vec<(f64, f64)> = loads
        .iter()
        .map(|&r| {
            (
                r,
                2e-4 * (-1.5 * (r.ln() - loads[knot].ln()).max(0.0)).exp(),
            )
        })
        .collect();
    let profile = FittedRateProfile::from_pairs(&pairs).map_err(|e| e.to_string())?;
    let split = segment_regimes(&profile).map_err(|e| e.to_string())?;
    ensure!(
        split.breakpoint_index == knot,
        "breakpoint at entry {}",
        split.breakpoint_index + 1
    );
    ensure!(
        split.slope_low.abs() < 1e-6,
        "low slope {}",
        split.slope_low
    );
    ensure!(
        (split.slope_high + 1.5).abs() < 1e-6,
        "high slope {}",
        split.slope_high
    );
    Ok(format!(
        "breakpoint at entry {} of 18, slopes {:.2e} / {:.9}",
        split.breakpoint_index + 1,
        split.slope_low,
        split.slope_high
    ))
}

fn c7_sensitivity() -> Check {
    let base = ModelParameters::default();
    let loads = geometric(100.0, 1e6, 32);
    let curves = |parameter: SweepParameter, values: Vec<f64>| {
        run_sweep(
            &SweepSpec {
                parameter,
                values,
                loads: loads.clone(),
                k_source: KSource::Constant(1e-4),
            },
            &base,
            0.0,
        )
        .map_err(|e| e.to_string())
    };

    let area = curves(
        SweepParameter::ElectrodeArea,
        vec![base.a_e, 2.0 * base.a_e],
    )?;
    for (a, b) in area[0].1.iter().zip(&area[1].1) {
        ensure!(b.i > a.i, "doubling A_E did not raise i at {} ohm", a.r_ext);
    }

    let j_ratio = exchange_current_density(
        1e-4,
        base.x0,
        &ModelParameters {
            l0: 2.0 * base.l0,
            ..base
        },
    ) / exchange_current_density(1e-4, base.x0, &base);
    ensure!((j_ratio - 1.003472).abs() < 1e-6, "j0 ratio {j_ratio}");
    ensure!(
        (j_ratio - 2f64.powf(0.005)).abs() < 1e-12,
        "j0 ratio {j_ratio}"
    );
    let light = curves(SweepParameter::LightIntensity, vec![base.l0, 2.0 * base.l0])?;
    let mut max_change = 0.0_f64;
    for (a, b) in light[0].1.iter().zip(&light[1].1) {
        max_change = max_change.max(((b.i - a.i) / a.i).abs());
    }
    ensure!(max_change < 0.01, "doubling L0 changed i by {max_change:e}");

    let (c1, _) = transfer_coefficients(&base);
    ensure!(c1 > 0.0, "c1 {c1}");
    let mut detail = Vec::new();
    for param in [
        SweepParameter::InitialCells,
        SweepParameter::IlluminatedArea,
    ] {
        let e = elasticity(&base, param, 0.01, |p| {
            Ok(exchange_current_density(1e-4, p.x0, p))
        })
        .map_err(|e| e.to_string())?;
        ensure!((e - base.alpha).abs() < 1e-8, "{param} elasticity {e}");
        detail.push(format!("{param} {e:.9}"));
    }
    Ok(format!(
        "L0 j0 ratio {j_ratio:.7}, max L0 current change {max_change:.1e}, elasticities {}",
        detail.join(", ")
    ))
}

fn expect_ok(args: &[&str]) -> Result<(), String> {
    let out = psc(args);
    ensure!(
        out.status.code() == Some(0),
        "`psc {}` failed: {}",
        args.join(" "),
        stderr(&out)
    );
    Ok(())
}

/// Manifest minus the wall-clock duration and the output directory argument.
fn stable_manifest(dir: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).map_err(|e| e.to_string())?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let obj = value.as_object_mut().ok_or("manifest is not an object")?;
    obj.remove("duration_s");
    obj.remove("args");
    Ok(value)
}

fn c8_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = write_dataset(dir.path(), "data.csv", &synthetic_dataset(32));
    let data = path_str(&data).to_string();
    let mut runs = Vec::new();
    for (run, workers) in [(0, "1"), (1, "4")] {
        let root = dir.path().join(format!("run{run}"));
        let fit = root.join("fit");
        let val = root.join("validate");
        let sweep = root.join("sweep");
        let profile = fit.join("k_profile.csv");
        expect_ok(&[
            "fit",
            "--data",
            &data,
            "--dwell",
            "600",
            "--out",
            path_str(&fit),
        ])?;
        expect_ok(&[
            "validate",
            "--data",
            &data,
            "--profile",
            path_str(&profile),
            "--dwell",
            "600",
            "--out",
            path_str(&val),
        ])?;
        expect_ok(&[
            "sweep",
            "--param",
            "A_E",
            "--values",
            "2.42e-4,4.84e-4,9.68e-4,1.936e-3",
            "--profile",
            path_str(&profile),
            "--dwell",
            "600",
            "--workers",
            workers,
            "--out",
            path_str(&sweep),
        ])?;
        let mut files = Vec::new();
        for d in [&fit, &val, &sweep] {
            files.extend(snapshot_dir(d, &["manifest.json"]));
        }
        // The profile is passed by path inside each run's own tree.
        let manifests = [
            stable_manifest(&fit)?,
            stable_manifest(&val)?,
            stable_manifest(&sweep)?,
        ];
        runs.push((files, manifests));
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure!(
        a.0.len() == b.0.len(),
        "file counts differ: {} vs {}",
        a.0.len(),
        b.0.len()
    );
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.0.iter().zip(&b.0) {
        ensure!(name_a == name_b, "file sets differ: {name_a} vs {name_b}");
        ensure!(bytes_a == bytes_b, "{name_a} differs between runs");
    }
    ensure!(a.1[0] == b.1[0], "fit manifests differ");
    for m in [&a.1[0], &b.1[0]] {
        ensure!(
            m["outputs"].as_array().map_or(0, |o| o.len()) == 4,
            "fit manifest outputs"
        );
    }
    Ok(format!(
        "{} output files byte-identical across runs (1 vs 4 sweep workers)",
        a.0.len()
    ))
}

/// A measurement-style dataset: activation-limited cell, 1% multiplicative
/// voltage noise, current from Ohm's law, six significant digits, no split
/// column.
fn measurement_style_csv() -> String {
    let p = ModelParameters::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0009);
    let mut out = String::from("r_ext_ohm,v_volt,i_amp\n");
    for r in geometric(100.0, 1e6, 32) {
        let k = 3e-8 * (r / 1000.0).powf(-0.3);
        let (v, _) = forward(r, k, p.x0, &p);
        let v = v * (1.0 + 0.01 * rng.gen_range(-1.0..1.0));
        out.push_str(&format!("{r:.6e},{v:.6e},{:.6e}\n", v / r));
    }
    out
}

fn c9_end_to_end() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (data, origin) = match std::env::var("PSC_EXPERIMENTAL_CSV") {
        Ok(path) => (std::path::PathBuf::from(path), "user CSV"),
        Err(_) => {
            let path = dir.path().join("measured.csv");
            std::fs::write(&path, measurement_style_csv()).map_err(|e| e.to_string())?;
            (path, "generated CSV")
        }
    };
    let fit = dir.path().join("fit");
    let val = dir.path().join("validate");
    let out = psc(&["fit", "--data", path_str(&data), "--out", path_str(&fit)]);
    ensure!(out.status.code() == Some(0), "fit failed: {}", stderr(&out));
    let fit_stdout = stdout(&out);
    ensure!(fit_stdout.contains("train RMSE:"), "no train RMSE printed");
    let regimes = std::fs::read_to_string(fit.join("regimes.txt")).map_err(|e| e.to_string())?;
    ensure!(
        regimes.starts_with("breakpoint_r_ext"),
        "regime summary missing"
    );
    let report = read_rows(&fit.join("fit_report.csv"));
    ensure!(
        !report.is_empty() && report.iter().all(|r| r[1] >= 0.0),
        "per-point K missing"
    );

    let profile = fit.join("k_profile.csv");
    let out = psc(&[
        "validate",
        "--data",
        path_str(&data),
        "--profile",
        path_str(&profile),
        "--out",
        path_str(&val),
    ]);
    ensure!(
        out.status.code() == Some(0),
        "validate failed: {}",
        stderr(&out)
    );
    let predictions = read_rows(&val.join("predictions.csv"));
    ensure!(!predictions.is_empty(), "no predictions");
    for row in &predictions {
        ensure!(
            row[3] >= 0.0 && row[3] < 1.241,
            "predicted v = {} at {} ohm",
            row[3],
            row[0]
        );
    }

    // Every fitted point evaluated through the forward model also respects the bound.
    let sim = dir.path().join("simulate");
    expect_ok(&[
        "simulate",
        "--profile",
        path_str(&profile),
        "--loads",
        "log:10:1e7:64",
        "--out",
        path_str(&sim),
    ])?;
    for row in read_rows(&sim.join("polarization.csv")) {
        ensure!(
            row[2] >= 0.0 && row[2] < 1.241,
            "simulated v = {} at {} ohm",
            row[2],
            row[0]
        );
    }
    let rmse_text = |s: &str, label: &str| {
        s.lines()
            .find_map(|l| l.strip_prefix(label))
            .map(str::trim)
            .unwrap_or("?")
            .to_string()
    };
    Ok(format!(
        "{origin}: {} K values, train RMSE {}, test RMSE {}, {}",
        report.len(),
        rmse_text(&fit_stdout, "train RMSE:"),
        rmse_text(&stdout(&out), "test RMSE:"),
        regimes.lines().nth(1).unwrap_or("").trim()
    ))
}

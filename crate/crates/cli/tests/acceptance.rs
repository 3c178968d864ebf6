//! Acceptance criteria, one verdict line each. Runs without the libtest
//! harness so every line reaches stdout under a plain `cargo test`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::{DateTime, Duration as Hours, TimeZone, Utc};
use driftwatch_cli::pipeline::{collocate_stage, correction_inputs, flag_stage, gam_with_correction_refit, op_series, profiles};
use driftwatch_core::correction::{fit_correction, loso_cross_validate, CorrectionModelSpec};
use driftwatch_core::degradation::{
    cumulative_exceedances, flag_rate_by_op_hour, forward_cumulative_mean, DegradationPolicy,
};
use driftwatch_core::flagging::{sweep_percentiles, SweepConfig};
use driftwatch_core::ingest::{aggregate_hourly, qc_filter, set_deploy_starts, HourlyConfig, HourlyRecord, RawRecord, SensorMeta};
use driftwatch_core::stats::ols;
use driftwatch_core::synthfleet::{bernoulli_flag_series, generate, FlagRateProcess, Injection, InjectionMode, ScenarioConfig, SynthFleet};
use driftwatch_core::trend::pspline::PenalizedSystem;
use driftwatch_core::trend::{
    fit_pspline_gam, interaction_trend, linear_trend, BootstrapConfig, GamConfig, InteractionRow, Outcome, PsplineBasis,
    TrendOptions, TrendPoint,
};
use driftwatch_core::{CollocationPair, CorrectionRow, FittedCorrection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 6, 1, 0, 0, 0).unwrap()
}

struct Collocated {
    hourly: Vec<HourlyRecord>,
    sensors: Vec<SensorMeta>,
    pairs: Vec<CollocationPair>,
}

fn collocated(fleet: SynthFleet) -> Collocated {
    let (kept, _) = qc_filter(fleet.raw);
    let mut sensors = fleet.sensors;
    set_deploy_starts(&mut sensors, &kept);
    let hourly = aggregate_hourly(&kept, &HourlyConfig::default());
    let pairs = collocate_stage(&sensors, &fleet.monitors, &hourly, fleet.reference, 50.0);
    Collocated { hourly, sensors, pairs }
}

fn divergence(sensors: Option<Vec<usize>>, onset_hour: u32, fraction: f64) -> Injection {
    Injection {
        mode: InjectionMode::ChannelDivergence,
        sensors,
        onset_hour,
        end_hour: None,
        magnitude: 1.0,
        fraction,
    }
}

fn death(sensors: Vec<usize>, onset_hour: u32) -> Injection {
    Injection {
        mode: InjectionMode::ChannelDeath,
        sensors: Some(sensors),
        onset_hour,
        end_hour: None,
        magnitude: 0.0,
        fraction: 1.0,
    }
}

fn planted_percentile() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, q) in [0.05, 0.10, 0.15].into_iter().enumerate() {
        let start = Instant::now();
        let fleet = generate(&ScenarioConfig {
            n_sensors: 20,
            hours: 5000,
            injections: vec![divergence(None, 0, q)],
            seed: 101 + k as u64,
            ..Default::default()
        })
        .unwrap();
        let sweep = sweep_percentiles(&collocated(fleet).pairs, &SweepConfig::default()).unwrap();
        let elapsed = start.elapsed();
        let hit = (sweep.selected_x - (1.0 - q)).abs() <= 0.02 + 1e-9;
        ok &= hit && elapsed < Duration::from_secs(60);
        parts.push(format!("q={q}: x={:.2} in {:.1}s", sweep.selected_x, elapsed.as_secs_f64()));
    }
    verdict(ok, parts.join("; "))
}

fn classifier_exactness() -> Verdict {
    let mut agree = 0;
    let mut total = 0;
    let mut nested = true;
    let mut positives = 0;
    for seed in 1..=5u64 {
        let fleet = generate(&ScenarioConfig {
            n_sensors: 14,
            hours: 3000,
            injections: vec![
                death(vec![0, 1, 2], 2700),
                death(vec![3, 4, 5], 2970),
                divergence(Some(vec![6, 7, 8]), 2200, 0.5),
                divergence(Some(vec![9, 10, 11]), 1000, 0.1),
            ],
            seed,
            ..Default::default()
        })
        .unwrap();
        let labels = fleet.labels.clone();
        let c = collocated(fleet);
        let flagged = flag_stage(c.hourly, 0.85, 5.0).unwrap();
        let series = op_series(&c.sensors, &flagged);
        for p in profiles(&series, DegradationPolicy::default()) {
            let truth = labels.sensors[&p.sensor_id].permanently_degraded;
            total += 1;
            agree += (truth == p.permanently_degraded) as usize;
            positives += truth as usize;
            let (d3, d4, d5) = (p.degraded_at(0.3, 100), p.degraded_at(0.4, 100), p.degraded_at(0.5, 100));
            nested &= (!d5 || d4) && (!d4 || d3) && d4 == p.permanently_degraded;
        }
    }
    let pass = agree == total && total == 5 * 14 && positives == 5 * 6 && nested;
    verdict(
        pass,
        format!("{agree}/{total} verdicts agree ({positives} labeled degraded); nesting holds: {nested}"),
    )
}

fn forward_mean_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=500);
        let p: f64 = rng.random();
        let flags: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < p).collect();
        let fast = forward_cumulative_mean(&flags);
        let brute: Vec<f64> = (0..n)
            .map(|i| flags[i..].iter().map(|f| *f as u8 as f64).sum::<f64>() / (n - i) as f64)
            .collect();
        mismatches += (fast != brute) as usize;
    }
    verdict(mismatches == 0, format!("{mismatches} of 1000 series differ"))
}

const PLANTED: [f64; 3] = [5.92, 0.57, -0.091];

fn planted_rows(rng: &mut ChaCha8Rng, n_sensors: usize, per_sensor: usize, sigma: f64) -> Vec<CorrectionRow> {
    let pm = LogNormal::new(15f64.ln(), 0.7).unwrap();
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rows = Vec::with_capacity(n_sensors * per_sensor);
    for s in 0..n_sensors {
        for h in 0..per_sensor {
            let pm25 = pm.sample(rng);
            let rh = rng.random_range(15.0..95.0);
            rows.push(CorrectionRow {
                sensor_id: format!("s{s:02}"),
                hour: t0() + Hours::hours(h as i64),
                pm25,
                rh,
                temp: rng.random_range(0.0..35.0),
                pm25_ref: PLANTED[0] + PLANTED[1] * pm25 + PLANTED[2] * rh + noise.sample(rng),
            });
        }
    }
    rows
}

fn correction_recovery() -> Verdict {
    let spec = CorrectionModelSpec::new(2).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for sigma in [0.1, 2.0] {
        let mut within = [0usize; 3];
        let mut worst_mean = 0.0f64;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = planted_rows(&mut rng, 5, 200, sigma);
            let fit = fit_correction(&rows, &spec).unwrap();
            for j in 0..3 {
                within[j] += ((fit.coefficients[j] - PLANTED[j]).abs() <= 4.0 * fit.std_errors[j]) as usize;
            }
            let errs: Vec<f64> = rows.iter().map(|r| fit.predict(r).unwrap() - r.pm25_ref).collect();
            let scale = rows.iter().map(|r| r.pm25_ref.abs()).sum::<f64>() / rows.len() as f64;
            let rel = (errs.iter().sum::<f64>() / errs.len() as f64).abs() / scale;
            worst_mean = worst_mean.max(rel);
        }
        ok &= within.iter().all(|w| *w >= 95) && worst_mean <= 1e-8;
        parts.push(format!("sigma={sigma}: within 4 SE {within:?}/100, max |mean err| {worst_mean:.1e}"));
    }
    let frozen = FittedCorrection::frozen()
        .predict(&CorrectionRow {
            sensor_id: "x".into(),
            hour: t0(),
            pm25: 10.0,
            rh: 50.0,
            temp: 20.0,
            pm25_ref: 0.0,
        })
        .unwrap();
    ok &= (frozen - 7.07).abs() < 1e-12;
    parts.push(format!("frozen(10, 50) = {frozen:.12}"));
    verdict(ok, parts.join("; "))
}

fn loso_contract() -> Verdict {
    let spec = CorrectionModelSpec::new(2).unwrap();
    let k = 6;
    let mut exact_k = true;
    let mut ordered = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let rows = planted_rows(&mut rng, k, 150, 2.0);
        let train = fit_correction(&rows, &spec).unwrap().training.unwrap();
        let loso = loso_cross_validate(&rows, &spec).unwrap();
        exact_k &= loso.n_fits == k && loso.folds.len() == k && loso.predictions.len() == rows.len();
        ordered += (loso.pooled.unwrap().rmse >= train.rmse) as usize;
    }
    verdict(
        exact_k && ordered >= 90,
        format!("k fits every run: {exact_k}; LOSO RMSE >= training RMSE in {ordered}/100"),
    )
}

fn trend_recovery() -> Verdict {
    let process = FlagRateProcess {
        base: 0.02,
        slope_per_year: 0.0093,
        magnitude: 2.0,
    };
    let planted = 100.0 * process.slope_per_year;
    let mut covered = 0;
    let mut exact = true;
    for seed in 0..100u64 {
        let series = bernoulli_flag_series(&process, 200, 2 * 8760, 5000 + seed);
        let points: Vec<TrendPoint> = flag_rate_by_op_hour(series.iter().map(Vec::as_slice))
            .iter()
            .map(|r| TrendPoint::new(r.op_hour as f64, r.pct_flagged))
            .collect();
        let fit = linear_trend(Outcome::PctFlagged, "all", &points, &TrendOptions::default()).unwrap();
        covered += (fit.ci_lower_per_year <= planted && planted <= fit.ci_upper_per_year) as usize;
        exact &= fit.slope_per_year == fit.slope_per_hour * 8760.0;
    }
    verdict(
        covered >= 90 && exact,
        format!("CI covers {planted:.2} %/yr in {covered}/100; per-year = per-hour x 8760: {exact}"),
    )
}

fn interaction_recovery() -> Verdict {
    let beta = -9.0e-4;
    let mut within = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let pm = LogNormal::new(20f64.ln(), 1.0).unwrap();
        let noise = Normal::new(0.0, 2.0).unwrap();
        let mut rows = Vec::new();
        for s in 0..30 {
            let conc: Vec<(i64, f64)> = (0..1000).map(|h| (h, pm.sample(&mut rng))).collect();
            let exposure = cumulative_exceedances(&format!("s{s}"), &conc, &[50.0]);
            for (i, &(h, _)) in conc.iter().enumerate() {
                let (hour, count) = (h as f64, exposure.counts[0][i] as f64);
                rows.push(InteractionRow {
                    op_hour: hour,
                    count,
                    y: 1.0 + 2e-3 * hour + 0.05 * count + beta * hour * count + noise.sample(&mut rng),
                });
            }
        }
        let (b, se) = interaction_trend(Outcome::CorrectionError, 50.0, &rows).unwrap().interaction();
        within += ((b - beta).abs() <= 4.0 * se) as usize;
    }
    verdict(within >= 95, format!("hour x count within 4 SE in {within}/100"))
}

fn gam_properties() -> Verdict {
    let cfg = GamConfig::default();
    let mut parts = Vec::new();

    let x: Vec<f64> = (0..2000).map(|h| h as f64).collect();
    let line = |v: f64| 3.0 + 0.01 * v;
    let y: Vec<f64> = x.iter().map(|v| line(*v)).collect();
    let fit = fit_pspline_gam(&x, &y, &cfg).unwrap();
    let scale = fit.grid.iter().map(|g| line(*g).abs()).fold(0.0, f64::max);
    let dev = fit.grid.iter().zip(&fit.curve).map(|(g, c)| (c - line(*g)).abs()).fold(0.0, f64::max);
    let linear_ok = dev <= 1e-6 * scale && fit.edf <= 2.5;
    parts.push(format!("linear: rel dev {:.1e}, df {:.3}", dev / scale, fit.edf));

    let sigma = 0.2;
    let truth = |v: f64| (2.0 * std::f64::consts::PI * v / 2500.0).sin();
    let mut worst = 0.0f64;
    let mut sine_data = (Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let x: Vec<f64> = (0..2000).map(|_| rng.random_range(0.0..5000.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| truth(*v) + noise.sample(&mut rng)).collect();
        let fit = fit_pspline_gam(&x, &y, &cfg).unwrap();
        let dev = fit.grid.iter().zip(&fit.curve).map(|(g, c)| (c - truth(*g)).abs()).fold(0.0, f64::max);
        worst = worst.max(dev);
        if seed == 0 {
            sine_data = (x, y);
        }
    }
    let sine_ok = worst <= 3.0 * sigma;
    parts.push(format!("sine: max dev {worst:.3} vs 3 sigma {:.2}", 3.0 * sigma));

    let (x, y) = sine_data;
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let basis = PsplineBasis::new(cfg.k, lo, hi).unwrap();
    let system = PenalizedSystem::new(basis.clone(), &x, &y).unwrap();
    let mut trace_gap = 0.0f64;
    for lambda in std::iter::once(0.0).chain(cfg.lambda_grid()) {
        let edf = system.solve(lambda).unwrap().edf;
        let lev = system.leverage_sum(lambda).unwrap();
        trace_gap = trace_gap.max((edf - lev).abs() / lev.abs());
    }
    let trace_ok = trace_gap <= 1e-8;
    parts.push(format!("hat trace routes differ by {trace_gap:.1e}"));

    let dense = basis.dense(&x);
    let names: Vec<String> = (0..cfg.k).map(|j| format!("b{j}")).collect();
    let unpenalized = ols(&y, &dense, &names).unwrap();
    let penalized = system.solve(0.0).unwrap();
    let cscale = unpenalized.coefficients.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let cgap = unpenalized
        .coefficients
        .iter()
        .zip(penalized.coefficients.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / cscale;
    let zero_ok = cgap <= 1e-8;
    parts.push(format!("lambda=0 vs least squares {cgap:.1e}"));

    verdict(linear_ok && sine_ok && trace_ok && zero_ok, parts.join("; "))
}

fn bootstrap_determinism() -> Verdict {
    let fleet = generate(&ScenarioConfig {
        n_sensors: 50,
        hours: 2000,
        injections: vec![Injection {
            mode: InjectionMode::DriftSlope,
            sensors: Some((0..25).collect()),
            onset_hour: 200,
            end_hour: None,
            magnitude: 0.3,
            fraction: 1.0,
        }],
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let c = collocated(fleet);
    let flagged = flag_stage(c.hourly, 0.85, 5.0).unwrap();
    let series = op_series(&c.sensors, &flagged);
    let rows = correction_inputs(&c.pairs, &flagged, &series.starts);
    let spec = CorrectionModelSpec::new(2).unwrap();
    let boot = BootstrapConfig {
        replicates: 100,
        m: None,
        seed: 20_240_601,
    };
    let gam = GamConfig::default();
    let run = || gam_with_correction_refit(Outcome::CorrectionError, &rows, &spec, 20, &gam, &boot).unwrap();

    let start = Instant::now();
    let first = run();
    let elapsed = start.elapsed();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let second = pool.install(run);
    let a = serde_json::to_vec(&first.bands).unwrap();
    let b = serde_json::to_vec(&second.bands).unwrap();
    let bands = first.bands.as_ref().unwrap();
    let ordered = bands.lower.iter().zip(&bands.upper).all(|(l, u)| l <= u);
    let pass = a == b && ordered && bands.n_ok == 100 && elapsed < Duration::from_secs(300);
    verdict(
        pass,
        format!(
            "identical bytes: {}; ordered: {ordered}; {} replicates over {} rows in {:.1}s",
            a == b,
            bands.n_ok,
            rows.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn raw(h: i64, minute: i64, a: Option<f64>, b: Option<f64>, temp: Option<f64>, rh: Option<f64>) -> RawRecord {
    RawRecord {
        sensor_id: "qc-a".into(),
        timestamp: t0() + Hours::hours(h) + Hours::minutes(minute),
        pm25_cf1_a: a,
        pm25_cf1_b: b,
        pm25_atm_a: None,
        pm25_atm_b: None,
        rh,
        temp,
    }
}

fn qc_conformance() -> Verdict {
    let s = Some;
    let records = vec![
        // Temperature bounds: two survive, too few for an hour.
        raw(0, 0, s(10.0), s(12.0), s(-50.0), s(50.0)),
        raw(0, 15, s(10.0), s(12.0), s(-49.9), s(50.0)),
        raw(0, 30, s(10.0), s(12.0), s(100.0), s(50.0)),
        raw(0, 45, s(10.0), s(12.0), s(99.9), s(50.0)),
        // RH bound and the both-channel range rule at 1500.
        raw(1, 0, s(20.0), s(22.0), s(20.0), s(99.0)),
        raw(1, 15, s(20.0), s(22.0), s(20.0), s(99.5)),
        raw(1, 30, s(1500.0), s(1500.0), s(20.0), s(50.0)),
        raw(1, 45, s(1500.0), s(100.0), s(20.0), s(50.0)),
        // Single-channel excursions survive; one channel-A reading is not enough.
        raw(2, 0, s(1600.0), s(1550.0), s(20.0), s(50.0)),
        raw(2, 15, s(1600.0), s(100.0), s(20.0), s(50.0)),
        raw(2, 30, s(1500.5), s(1600.0), s(20.0), s(50.0)),
        raw(2, 45, None, s(30.0), s(20.0), s(50.0)),
        // Missing fields.
        raw(3, 0, None, None, s(20.0), s(50.0)),
        raw(3, 15, s(5.0), s(6.0), None, s(50.0)),
        raw(3, 30, s(5.0), s(6.0), s(20.0), None),
        raw(3, 45, None, None, None, None),
        // Four complete records.
        raw(4, 0, s(2.0), s(4.0), s(10.0), s(40.0)),
        raw(4, 15, s(4.0), s(6.0), s(12.0), s(42.0)),
        raw(4, 30, s(6.0), s(8.0), s(14.0), s(44.0)),
        raw(4, 45, s(8.0), s(10.0), s(16.0), s(46.0)),
        // Three channel-A readings, one of them without channel B.
        raw(5, 0, s(7.0), s(7.0), s(20.0), s(50.0)),
        raw(5, 15, s(9.0), s(9.0), s(20.0), s(50.0)),
        raw(5, 30, None, s(9.0), s(20.0), s(50.0)),
        raw(5, 45, s(11.0), None, s(20.0), s(50.0)),
        // Attribution goes to the first failing rule.
        raw(6, 0, s(1600.0), s(1600.0), s(-60.0), s(50.0)),
        raw(6, 15, s(1600.0), s(1600.0), s(20.0), s(99.5)),
        raw(6, 30, s(10.0), s(10.0), s(-50.0), s(100.0)),
    ];
    let expected_kept = [1, 3, 4, 6, 7, 9, 11, 16, 17, 18, 19, 20, 21, 22, 23];
    let (kept, report) = qc_filter(records.clone());
    let kept_ok = kept == expected_kept.iter().map(|i| records[*i].clone()).collect::<Vec<_>>();
    let counts = [
        report.missing_pm,
        report.missing_met,
        report.both_over_1500,
        report.temp_out_of_range,
        report.rh_over_99,
        report.retained,
    ];
    let counts_ok = counts == [2, 2, 4, 3, 1, 15] && report.input == 27;
    let partition_ok = report.rejected() + report.retained == report.input;

    // (hour, n, A mean, B mean, RH mean, T mean)
    let expected: [(i64, u32, f64, f64, f64, f64); 3] = [
        (1, 3, 3020.0 / 3.0, 1622.0 / 3.0, 199.0 / 3.0, 20.0),
        (4, 4, 5.0, 7.0, 43.0, 13.0),
        (5, 3, 9.0, 25.0 / 3.0, 50.0, 20.0),
    ];
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let hourly = aggregate_hourly(&kept, &HourlyConfig::default());
    let hourly_ok = hourly.len() == expected.len()
        && hourly.iter().zip(&expected).all(|(r, e)| {
            let b = r.pm25_cf1_b.unwrap_or(f64::NAN);
            r.hour == t0() + Hours::hours(e.0)
                && r.n_subhourly == e.1
                && close(r.pm25_cf1_a, e.2)
                && close(b, e.3)
                && close(r.pm25_cf1_mean, (e.2 + e.3) / 2.0)
                && close(r.rh_mean, e.4)
                && close(r.temp_mean, e.5)
        });
    let reversed: Vec<RawRecord> = kept.iter().rev().cloned().collect();
    let order_ok = aggregate_hourly(&reversed, &HourlyConfig::default()) == hourly;
    let (again, second) = qc_filter(kept.clone());
    let idempotent = again == kept && second.rejected() == 0;

    let pass = kept_ok && counts_ok && partition_ok && hourly_ok && order_ok && idempotent;
    verdict(
        pass,
        format!(
            "retained set exact: {kept_ok}; counts {counts:?}; partition: {partition_ok}; hourly: {hourly_ok}; \
             order-free: {order_ok}; idempotent: {idempotent}"
        ),
    )
}

fn driftwatch(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_driftwatch"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn end_to_end_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let p = |s: &str| d.join(s).to_string_lossy().into_owned();
    std::fs::write(
        d.join("scenario.json"),
        r#"{"n_sensors": 8, "hours": 800, "indoor_every": 4, "seed": 11,
            "injections": [{"mode": "channel_divergence", "sensors": [0, 5], "onset_hour": 500, "fraction": 0.6, "magnitude": 1.0}]}"#,
    )
    .unwrap();
    driftwatch(&["synth", "--scenario", &p("scenario.json"), "--out", &p("fleet")]);
    driftwatch(&["synth", "--scenario", &p("scenario.json"), "--out", &p("fleet2")]);
    std::fs::write(
        d.join("config.json"),
        r#"{"inputs": {"raw": "fleet/raw.csv", "sensors": "fleet/sensors.csv",
                       "monitors": "fleet/monitors.csv", "reference": "fleet/reference.csv"},
            "bootstrap": {"replicates": 30, "seed": 5}}"#,
    )
    .unwrap();
    driftwatch(&["report", "--config", &p("config.json"), "--out", &p("r1")]);
    driftwatch(&["--threads", "1", "report", "--config", &p("config.json"), "--out", &p("r2")]);
    let (r1, r2) = (tree(&d.join("r1")), tree(&d.join("r2")));
    let fleet_same = tree(&d.join("fleet")) == tree(&d.join("fleet2"));
    let pass = r1 == r2 && r1.len() == 11 && r1.contains_key("manifest.json") && fleet_same;
    verdict(
        pass,
        format!("{} report files byte-identical: {}; synth output identical: {fleet_same}", r1.len(), r1 == r2),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("planted-percentile recovery", planted_percentile),
        ("degradation classifier exactness", classifier_exactness),
        ("forward-mean oracle", forward_mean_oracle),
        ("correction recovery", correction_recovery),
        ("LOSO contract", loso_contract),
        ("trend recovery", trend_recovery),
        ("interaction recovery", interaction_recovery),
        ("GAM properties", gam_properties),
        ("bootstrap determinism", bootstrap_determinism),
        ("QC/aggregation conformance", qc_conformance),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += !v.pass as usize;
        println!(
            "criterion {:>2} {:<34} {} ({:.1}s) {}",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary so the lines always reach stdout.
//!
//! Reference values are computed here by independent direct-summation
//! oracles, never by the functions under test.

use std::io::Write;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use windval_core::bias::{apply_correction, correction_factor};
use windval_core::cleaning::{
    attrition, clean_series, enforce_min_length, remove_cf_above_one, remove_constant_runs, remove_zero_runs,
    AttritionReport, CleaningConfig, MaskReason, ObservedSeries,
};
use windval_core::config::RunConfig;
use windval_core::fleet::{Commissioning, FleetRecord};
use windval_core::pipeline::{cmd_clean, cmd_report, cmd_simulate, cmd_validate, CleanOptions};
use windval_core::power::{simulate_location, SimulationOptions};
use windval_core::reanalysis::{Grid, LatLon};
use windval_core::stats::{mbe, medians_differ, notch_interval, pearson, rmse, variance};
use windval_core::synth::{synthetic_wind_field, write_fixture, FixtureOptions};
use windval_core::time::TimeAxis;
use windval_core::wind_math::{extrapolate_to_hub, hellmann_exponent, HeightPair, ShearFlag};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    let d = Normal::new(0.0, scale).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

fn oracle_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn oracle_var(x: &[f64]) -> f64 {
    let m = oracle_mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

fn r(a: &[f64], b: &[f64]) -> f64 {
    pearson(a, b, None).unwrap().expect("defined correlation")
}

fn correlation_example_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let n = 1000;
    let noise = normals(&mut rng, n, 0.1);
    let x1 = normals(&mut rng, n, 1.0);
    let y1 = normals(&mut rng, n, 1.0);
    let x2: Vec<f64> = x1.iter().zip(&noise).map(|(x, z)| -x + z).collect();
    let y2: Vec<f64> = y1.iter().zip(&noise).map(|(y, z)| -y + z).collect();
    let (a, b) = (0.5, 0.5);
    let x: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
    let y: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
    let r11 = r(&x1, &y1);
    let rxy = r(&x, &y);
    let var_x = variance(&x).unwrap();
    let var_x1 = variance(&x1).unwrap();
    let elapsed = t.elapsed();
    check(r11.abs() < 0.1, format!("|r(x1,y1)| = {}", r11.abs()))?;
    check((rxy - 1.0).abs() <= 1e-9, format!("r(x,y) = {rxy}"))?;
    check(var_x < 0.01 * var_x1, format!("var(x) = {var_x}, var(x1) = {var_x1}"))?;
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!(
        "r(x1,y1)={r11:.4} r(x,y)={rxy:.12} var(x)/var(x1)={:.5} in {elapsed:?}",
        var_x / var_x1
    ))
}

fn correlation_example_2() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 1000;
    let x1 = normals(&mut rng, n, 1.0);
    let z = normals(&mut rng, n, 0.1);
    let x2: Vec<f64> = x1.iter().zip(&z).map(|(x, z)| -x + z).collect();
    let y1: Vec<f64> = x1.iter().map(|x| 3.0 * x).collect();
    let y2: Vec<f64> = x1.iter().map(|x| -x).collect();
    let x: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| 0.5 * p + 0.5 * q).collect();
    let y: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| 0.5 * p + 0.5 * q).collect();
    let r11 = r(&x1, &y1);
    let rxy = r(&x, &y);
    let ratio = oracle_var(&z) / oracle_var(&x1);
    let elapsed = t.elapsed();
    check((r11 - 1.0).abs() <= 1e-12, format!("r(x1,y1) = {r11}"))?;
    check(rxy.abs() < 0.1, format!("|r(x,y)| = {}", rxy.abs()))?;
    check((ratio - 0.01).abs() < 0.002, format!("var(z)/var(x1) = {ratio}"))?;
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!(
        "r(x1,y1)={r11} r(x,y)={rxy:.4} var(z)/var(x1)={ratio:.4} in {elapsed:?}"
    ))
}

fn wind_math_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut clamps = 0;
    for _ in 0..10_000 {
        let v_lo: f64 = rng.gen_range(0.5..=30.0);
        let v_hi: f64 = rng.gen_range(0.5..=30.0);
        // a height ratio of at least 60 keeps every exponent inside [-1, 1]
        let h_lo: f64 = rng.gen_range(0.5..=2.0);
        let h_hi = h_lo * rng.gen_range(60.0..=200.0);
        let heights = HeightPair::new(h_lo, h_hi).unwrap();
        let shear = hellmann_exponent(v_lo, v_hi, heights);
        if shear.flag != ShearFlag::Computed {
            clamps += 1;
        }
        let back = extrapolate_to_hub(v_lo, h_lo, shear.alpha, h_hi).unwrap();
        worst = worst.max(((back - v_hi) / v_hi).abs());
    }
    check(clamps == 0, format!("{clamps} clamp or fallback events"))?;
    check(worst <= 1e-9, format!("worst relative error {worst:e}"))?;
    Ok(format!("10000 draws, worst relative error {worst:.2e}, 0 clamp events"))
}

fn bias_mean_restoration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let len = 500;
    let reference: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..20.0)).collect();
    let (mut worst_mean, mut worst_r) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let series: Vec<f64> = (0..len).map(|_| rng.gen_range(0.1..25.0)).collect();
        let gwa_mean = rng.gen_range(3.0..12.0);
        let cf = correction_factor(gwa_mean, &series).map_err(|e| e.to_string())?;
        let corrected = apply_correction(&series, &cf);
        worst_mean = worst_mean.max(((oracle_mean(&corrected) - gwa_mean) / gwa_mean).abs());
        worst_r = worst_r.max((r(&corrected, &reference) - r(&series, &reference)).abs());
    }
    check(worst_mean <= 1e-9, format!("worst mean error {worst_mean:e}"))?;
    check(worst_r <= 1e-12, format!("worst correlation change {worst_r:e}"))?;
    Ok(format!(
        "1000 series, mean error {worst_mean:.2e}, correlation change {worst_r:.2e}"
    ))
}

struct NaiveMetrics {
    r: Option<f64>,
    rmse: f64,
    mbe: f64,
    err_var: f64,
}

/// Single-pass textbook sums over the unmasked pairs.
fn naive(sim: &[f64], obs: &[f64], masked: &[bool]) -> NaiveMetrics {
    let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab, mut se, mut see) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..sim.len() {
        if masked[i] {
            continue;
        }
        let (a, b) = (sim[i], obs[i]);
        n += 1.0;
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
        se += a - b;
        see += (a - b) * (a - b);
    }
    let den = ((n * saa - sa * sa) * (n * sbb - sb * sb)).sqrt();
    let mbe = se / n;
    NaiveMetrics {
        r: (n >= 2.0 && den > 0.0).then(|| (n * sab - sa * sb) / den),
        rmse: (see / n).sqrt(),
        mbe,
        err_var: see / n - mbe * mbe,
    }
}

fn statistics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut worst_decomp) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let len = rng.gen_range(5..300);
        let obs: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sim: Vec<f64> = obs
            .iter()
            .map(|o| (o + rng.gen_range(-0.3..0.3f64)).clamp(0.0, 1.0))
            .collect();
        let mut masked: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.2)).collect();
        masked[0] = false;
        masked[1] = false;
        let o = naive(&sim, &obs, &masked);
        let p = pearson(&sim, &obs, Some(&masked)).unwrap();
        let e = rmse(&sim, &obs, Some(&masked)).unwrap();
        let m = mbe(&sim, &obs, Some(&masked)).unwrap();
        match (p, o.r) {
            (Some(p), Some(q)) => worst = worst.max((p - q).abs()),
            (None, None) => {}
            other => return Err(format!("definedness differs: {other:?}")),
        }
        worst = worst.max((e - o.rmse).abs()).max((m - o.mbe).abs());
        let lhs = e * e;
        worst_decomp = worst_decomp.max((lhs - (m * m + o.err_var)).abs() / lhs);
    }
    check(worst <= 1e-12, format!("worst oracle difference {worst:e}"))?;
    check(
        worst_decomp <= 1e-9,
        format!("worst decomposition error {worst_decomp:e}"),
    )?;
    Ok(format!(
        "1000 masked pairs, oracle difference {worst:.2e}, decomposition {worst_decomp:.2e}"
    ))
}

fn hourly(values: Vec<f64>) -> ObservedSeries {
    let t0 = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
    ObservedSeries::new("s", TimeAxis::hourly(t0, values.len()), values).unwrap()
}

fn cleaning_attrition() -> Outcome {
    const N: usize = 70;
    const LEN: usize = 2 * 8760 + 30 * 24;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let constant: Vec<usize> = (0..50).collect();
    let zero: Vec<usize> = (20..48).collect();
    let cf: Vec<usize> = (0..59).collect();
    let short: Vec<usize> = (53..70).collect();
    let cap = vec![1000.0; LEN];
    let mut outcomes = Vec::new();
    for k in 0..N {
        let mut v: Vec<f64> = (0..LEN)
            .map(|_| (rng.gen_range(1.0..900.0f64) * 1000.0).round() / 1000.0)
            .collect();
        if constant.contains(&k) {
            v[1000..1030].fill(432.1);
        }
        if zero.contains(&k) {
            v[3000..3200].fill(0.0);
        }
        if cf.contains(&k) {
            v[5000..5003].fill(1500.0);
        }
        if short.contains(&k) {
            v[8000..8800].fill(f64::NAN);
        }
        outcomes.push(clean_series(hourly(v), &cap, &CleaningConfig::default()).map_err(|e| e.to_string())?);
    }
    let mut report = AttritionReport::default();
    attrition(&mut report, &outcomes);
    let hits = |step: &str| report.row(step).and_then(|r| r.applies_to);
    let counts = [
        hits("constant_run"),
        hits("zero_run"),
        hits("cf_above_one"),
        hits("min_length"),
    ];
    check(
        counts == [Some(50), Some(28), Some(59), Some(17)],
        format!("rule counts {counts:?}"),
    )?;
    check(hits("edge_zeros") == Some(0), "unexpected edge-zero hits")?;
    check(
        report.remaining() == Some(53),
        format!("survivors {:?}", report.remaining()),
    )?;
    for (k, o) in outcomes.iter().enumerate() {
        let log = o.series.removal_log();
        let expect = |set: &[usize], n: usize| if set.contains(&k) { n } else { 0 };
        let got = |r: MaskReason| log.get(&r).copied().unwrap_or(0);
        check(
            got(MaskReason::ConstantRun) == expect(&constant, 30),
            format!("series {k}: constant steps"),
        )?;
        check(
            got(MaskReason::ZeroRun) == expect(&zero, 200),
            format!("series {k}: zero steps"),
        )?;
        check(
            got(MaskReason::CfAboveOne) == expect(&cf, 3),
            format!("series {k}: cf steps"),
        )?;
        check(
            log.values().sum::<usize>() == o.series.masked_count(),
            format!("series {k}: log not exhaustive"),
        )?;
    }
    Ok("70 series, rule hits 50/28/59/17, 53 survivors".into())
}

fn boundary_behavior() -> Outcome {
    let pad = |run: Vec<f64>| {
        let mut v = vec![5.0, 6.0];
        v.extend(run);
        v.extend([5.0, 6.0]);
        hourly(v)
    };
    let masked_by = |mut s: ObservedSeries, f: &dyn Fn(&mut ObservedSeries) -> usize| f(&mut s);
    check(
        masked_by(pad(vec![3.3; 24]), &|s| remove_constant_runs(s, 24.0)) == 0,
        "24 h constant run masked",
    )?;
    check(
        masked_by(pad(vec![3.3; 25]), &|s| remove_constant_runs(s, 24.0)) == 25,
        "25 h constant run kept",
    )?;
    check(
        masked_by(pad(vec![0.0; 180]), &|s| remove_zero_runs(s, 180.0)) == 0,
        "180 h zero run masked",
    )?;
    check(
        masked_by(pad(vec![0.0; 181]), &|s| remove_zero_runs(s, 180.0)) == 181,
        "181 h zero run kept",
    )?;
    let mut s = hourly(vec![1000.0, 1001.0]);
    remove_cf_above_one(&mut s, &[1000.0, 1000.0]).map_err(|e| e.to_string())?;
    check(
        s.mask == vec![None, Some(MaskReason::CfAboveOne)],
        "CF 1.0 / 1.001 boundary",
    )?;
    check(!enforce_min_length(&hourly(vec![1.0; 17_519]), 2.0), "17519 h kept")?;
    check(enforce_min_length(&hourly(vec![1.0; 17_520]), 2.0), "17520 h dropped")?;
    Ok("24/25 h, 180/181 h, CF 1.0/1.001, 17519/17520 h".into())
}

fn capacity_factor_bound() -> Outcome {
    let grid = Grid::new(-6.0, 0.5, -37.0, 0.625, 3, 3).unwrap();
    let t0 = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let axis = TimeAxis::hourly(t0, 8760);
    let field =
        synthetic_wind_field(&grid, axis, HeightPair::new(10.0, 100.0).unwrap(), 8).map_err(|e| e.to_string())?;
    let park = |id: &str, i: usize, comm: Commissioning| FleetRecord {
        id: id.into(),
        name: id.into(),
        location: LatLon::new(grid.lat_center(i), grid.lon_center(i)),
        capacity_kw: Some(30_000.0),
        hub_height_m: Some(100.0),
        rotor_diameter_m: Some(120.0),
        commissioning: Some(comm),
        state: "RN".into(),
        country: "BR".into(),
    };
    let parks = [
        park(
            "day",
            0,
            Commissioning::day(NaiveDate::from_ymd_opt(2019, 3, 10).unwrap()),
        ),
        park("month", 1, Commissioning::month(2019, 6).unwrap()),
        park("year", 2, Commissioning::year(2019).unwrap()),
    ];
    let opts = SimulationOptions {
        dataset_tag: "fixture".into(),
    };
    let mut mid = 0.0;
    for p in &parks {
        let g = simulate_location(p, &field, None, &opts).map_err(|e| e.to_string())?;
        let comm = p.commissioning.unwrap().date.and_hms_opt(0, 0, 0).unwrap().and_utc();
        for t in 0..axis.len {
            let (pw, cap) = (g.power_kw[t], g.installed_kw[t]);
            check(
                pw >= 0.0 && pw <= cap,
                format!("{}: step {t} power {pw} above installed {cap}", p.id),
            )?;
            if cap > 0.0 {
                let cf = pw / cap;
                check((0.0..=1.0).contains(&cf), format!("{}: CF {cf} at step {t}", p.id))?;
            }
            if axis.at(t) < comm {
                check(pw == 0.0, format!("{}: output before commissioning at step {t}", p.id))?;
            }
        }
        if p.id == "year" {
            mid = g.installed_kw[axis.len / 2];
        }
    }
    let nameplate = 30_000.0;
    let step = nameplate / 8760.0;
    check(
        (mid - 0.5 * nameplate).abs() <= step,
        format!("mid-year installed {mid}"),
    )?;
    Ok(format!(
        "3 parks x 8760 h within [0, 1]; mid-year installed {mid} kW of {nameplate}"
    ))
}

fn notch_significance() -> Outcome {
    let n = notch_interval(&[1.0, 2.0, 3.0, 4.0, 5.0]).map_err(|e| e.to_string())?;
    let half = 1.57 * 2.0 / 5f64.sqrt();
    check(
        (n.lo - (3.0 - half)).abs() <= 1e-12 && (n.hi - (3.0 + half)).abs() <= 1e-12,
        format!("{n:?}"),
    )?;
    check(
        (n.lo - 1.596).abs() < 5e-4 && (n.hi - 4.404).abs() < 5e-4,
        format!("{n:?}"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0)).collect();
    let b: Vec<f64> = (0..20).map(|_| rng.gen_range(2.0..3.0)).collect();
    check(!medians_differ(&a, &a).unwrap(), "identical samples differ")?;
    check(medians_differ(&a, &b).unwrap(), "disjoint samples do not differ")?;
    Ok(format!(
        "notch ({:.4}, {:.4}); identical -> false, disjoint n=20 -> true",
        n.lo, n.hi
    ))
}

fn tree_bytes(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let err = |e: windval_core::Error| e.to_string();
    let t = Instant::now();
    let paths = write_fixture(tmp.path(), &FixtureOptions::default()).map_err(err)?;
    let cfg = RunConfig::load(&paths.config).map_err(err)?;
    cmd_simulate(&cfg, 1).map_err(err)?;
    let sim_dir = cfg.output_dir.join("sim");
    let first = tree_bytes(&sim_dir);
    let manifest = std::fs::read(cfg.output_dir.join("manifest.json")).map_err(|e| e.to_string())?;
    cmd_clean(&cfg, 8, CleanOptions::default()).map_err(err)?;
    cmd_validate(&cfg, 8).map_err(err)?;
    cmd_report(&cfg).map_err(err)?;
    let end_to_end = t.elapsed();
    cmd_simulate(&cfg, 8).map_err(err)?;
    check(
        tree_bytes(&sim_dir) == first,
        "simulated series differ between 1 and 8 workers",
    )?;
    cmd_simulate(&cfg, 1).map_err(err)?;
    check(tree_bytes(&sim_dir) == first, "simulated series differ between runs")?;
    let again = std::fs::read(cfg.output_dir.join("manifest.json")).map_err(|e| e.to_string())?;
    check(again == manifest, "manifest differs between runs")?;
    check(
        end_to_end < Duration::from_secs(60),
        format!("end-to-end run took {end_to_end:?}"),
    )?;
    Ok(format!(
        "{} files identical across runs and 1/8 workers; end-to-end {end_to_end:.2?}",
        first.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("correlation example 1", correlation_example_1),
        ("correlation example 2", correlation_example_2),
        ("wind-math round trip", wind_math_round_trip),
        ("bias-correction mean restoration", bias_mean_restoration),
        ("statistics oracle", statistics_oracle),
        ("cleaning attrition fixture", cleaning_attrition),
        ("cleaning boundary behavior", boundary_behavior),
        ("capacity-factor bound", capacity_factor_bound),
        ("notch significance", notch_significance),
        ("determinism", determinism),
    ];
    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => writeln!(out, "PASS  {name}: {detail}").unwrap(),
            Err(why) => {
                failed += 1;
                writeln!(out, "FAIL  {name}: {why}").unwrap();
            }
        }
    }
    writeln!(out, "acceptance: {} passed, {failed} failed", criteria.len() - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}

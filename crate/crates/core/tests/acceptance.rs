//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.
//!
//! Run with `cargo test -p nrstream-core --test acceptance -- --nocapture` to
//! see the lines.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

use nrstream_core::config::{ModeKind, ScenarioConfig};
use nrstream_core::controller::{QualityLadder, RateController};
use nrstream_core::gnb::Reply;
use nrstream_core::metrics::{compare_reports, compute_report, detect_freezes, FreezeParams, MetricsReport, SessionTimeline};
use nrstream_core::nr_rate::{max_data_rate, standard_scaling_factors, CarrierConfig, CellConfig, McsTableId};
use nrstream_core::streaming::run_session;

// Pinned tolerances.
const RATE_TOL_MBPS: f64 = 0.001;
const ORACLE_REL_TOL: f64 = 1e-12;
const PERCENT_TOL_PP: f64 = 0.1;
const STALL_TOL_TICKS: f64 = 2.0;
const TOP_RESIDENCY: (f64, f64) = (0.60, 0.90);
const EXACT_MS: f64 = 1e-9;
const RANDOM_CASES: u32 = 1000;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn testbed() -> PathBuf {
    root().join("scenarios/testbed.json")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nrstream"))
}

struct Outcome {
    id: u8,
    pass: bool,
}

fn criterion(id: u8, name: &str, budget: Duration, check: impl FnOnce() -> Result<String, String>) -> Outcome {
    let start = Instant::now();
    let result = check();
    let elapsed = start.elapsed();
    let (mut pass, mut detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if elapsed > budget {
        pass = false;
        detail = format!("{detail}; over budget {:.1} s", budget.as_secs_f64());
    }
    println!(
        "criterion {id} [{name}]: {} ({detail}; {:.3} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    Outcome { id, pass }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn c1_rate_reproduction() -> Result<String, String> {
    let mut got = Vec::new();
    for (mcs, expected) in [(27, 158.796), (0, 5.025)] {
        let out = bin()
            .args(["rate", "--config"])
            .arg(testbed())
            .args(["--mcs", &mcs.to_string()])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || format!("rate --mcs {mcs} exited {:?}", out.status))?;
        let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
        let value: f64 = text.parse().map_err(|_| format!("unparseable output {text:?}"))?;
        ensure((value - expected).abs() <= RATE_TOL_MBPS, || {
            format!("mcs {mcs}: {value} vs {expected} +/- {RATE_TOL_MBPS}")
        })?;
        got.push(text);
    }
    Ok(format!("MCS 27 -> {} Mbps, MCS 0 -> {} Mbps", got[0], got[1]))
}

// ---------------------------------------------------------------- 2

/// Independent reading of the bundled tables: `(q_m, R x 1024)` by index.
fn oracle_mcs(file: &str) -> Vec<(u32, BigRational)> {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(file)).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split(',').collect();
            assert_eq!(cols[0].parse::<usize>().unwrap(), i);
            let r = cols[2].trim();
            let r = match r.split_once('.') {
                Some((a, b)) => BigRational::new(
                    BigInt::from(format!("{a}{b}").parse::<i64>().unwrap()),
                    BigInt::from(10i64.pow(b.len() as u32)),
                ),
                None => BigRational::from_integer(BigInt::from(r.parse::<i64>().unwrap())),
            };
            (cols[1].parse().unwrap(), r)
        })
        .collect()
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Rate in Mbps, straight from the formula with v = f = 1, OH = 0.14, no TDD split.
fn oracle_rate(q_m: u32, r_x1024: &BigRational, n_prb: u32, mu: u32) -> BigRational {
    let r = r_x1024 / BigInt::from(1024);
    let ts = ratio(1, 1000) / BigInt::from(14 * (1u32 << mu));
    let re_per_s = BigRational::from_integer(BigInt::from(n_prb * 12)) / ts;
    ratio(1, 1_000_000) * BigInt::from(q_m) * r * re_per_s * (ratio(1, 1) - ratio(14, 100))
}

fn c2_oracle() -> Result<String, String> {
    // (bandwidth MHz, scs kHz, N_PRB, mu)
    let pairs = [(5, 15, 25, 0), (20, 15, 106, 0), (40, 30, 106, 1), (100, 30, 273, 1), (10, 60, 11, 2), (100, 60, 135, 2)];
    let tables = [
        (McsTableId::Qam64, "mcs_qam64.csv"),
        (McsTableId::Qam256, "mcs_qam256.csv"),
        (McsTableId::Qam64LowSe, "mcs_qam64_lowse.csv"),
    ];
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (table, file) in tables {
        let entries = oracle_mcs(file);
        for &(bw, scs, n_prb, mu) in &pairs {
            let carrier = CarrierConfig::new(bw, scs, table).map_err(|e| e.to_string())?;
            ensure(carrier.n_prb == n_prb && carrier.numerology_mu == mu, || {
                format!("{bw} MHz / {scs} kHz resolved to N_PRB {} mu {}", carrier.n_prb, carrier.numerology_mu)
            })?;
            for (index, (q_m, r)) in entries.iter().enumerate() {
                let got = max_data_rate(&[(carrier.clone(), index as u32)]).map_err(|e| e.to_string())?;
                let want = oracle_rate(*q_m, r, n_prb, mu);
                let rel = ((got.exact() - &want).abs() / &want).to_f64().unwrap();
                worst = worst.max(rel);
                ensure(rel <= ORACLE_REL_TOL, || {
                    format!("{} idx {index} {bw}/{scs}: rel error {rel:e}", table.name())
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} evaluations, worst relative error {worst:e}"))
}

// ---------------------------------------------------------------- 3

fn c3_monotonicity() -> Result<String, String> {
    let pairs: Vec<(u32, u32)> = nrstream_core::nr_rate::TableSet::embedded()
        .prb_entries()
        .map(|(bw, scs, _)| (bw, scs))
        .collect();
    let factors = standard_scaling_factors();
    let strategy = (
        prop::sample::select(McsTableId::ALL.to_vec()),
        prop::sample::select(pairs),
        1u32..=8,
        0usize..4,
        1u32..=4,
        1i64..=10,
    );
    let mut runner = TestRunner::new(PropConfig {
        cases: RANDOM_CASES,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let inversions = std::cell::RefCell::new(std::collections::BTreeSet::new());
    let result = runner.run(&strategy, |(table, (bw, scs), layers, f_idx, carriers, tdd_tenths)| {
        let base = CarrierConfig::new(bw, scs, table)
            .unwrap()
            .with_tdd_dl_fraction(ratio(tdd_tenths, 10));
        let max = table.max_index();
        let rate = |c: &CarrierConfig, i: u32| c.rate(i).unwrap();
        let tuned = base
            .clone()
            .with_layers(layers)
            .with_scaling_factor(factors[f_idx].clone());
        let mut prev = BigRational::zero();
        for i in 0..=max {
            let r = rate(&tuned, i);
            if r < prev {
                inversions.borrow_mut().insert((table.name(), i - 1, i));
            }
            prev = r;
        }
        for i in [0, max / 2, max] {
            let one = rate(&base, i);
            prop_assert_eq!(rate(&base.clone().with_layers(layers), i), &one * BigInt::from(layers));
            prop_assert_eq!(
                rate(&base.clone().with_scaling_factor(factors[f_idx].clone()), i),
                &one * &factors[f_idx]
            );
            let cell = CellConfig {
                carriers: vec![base.clone(); carriers as usize],
            };
            prop_assert_eq!(cell.estimate(i).unwrap().exact().clone(), &one * BigInt::from(carriers));
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    // The 64QAM table in the standard itself has one spectral-efficiency
    // inversion (index 16 is 4 x 658/1024, index 17 is 6 x 438/1024).
    let allowed: std::collections::BTreeSet<_> = [("QAM64", 16, 17)].into_iter().collect();
    let inversions = inversions.into_inner();
    ensure(inversions.iter().all(|x| allowed.contains(x)), || {
        format!("unexpected rate inversions {inversions:?}")
    })?;
    Ok(format!(
        "{RANDOM_CASES} configs; non-decreasing in MCS except the standard's own QAM64 16->17 inversion; linear in layers, carriers, scaling factor"
    ))
}

// ---------------------------------------------------------------- 4

fn c4_controller() -> Result<String, String> {
    let config = ScenarioConfig::load(&testbed()).map_err(|e| e.to_string())?;
    let run = |mode| {
        let controller = config.controller(Some(mode), None).unwrap();
        run_session(config.channel_scenario().unwrap(), controller, &config.stream_params()).unwrap()
    };
    let adaptive = run(ModeKind::Adaptive);
    let path: Vec<String> = std::iter::once(adaptive.timeline.switches.first().map(|s| s.from_profile.clone()))
        .flatten()
        .chain(adaptive.timeline.switches.iter().map(|s| s.to_profile.clone()))
        .collect();
    ensure(path == ["Q3", "Q2", "Q1", "Q3"], || format!("adaptive switch path {path:?}"))?;
    let fixed = run(ModeKind::Fixed);
    ensure(fixed.timeline.switches.is_empty(), || {
        format!("fixed run switched {} times", fixed.timeline.switches.len())
    })?;

    let mut runner = TestRunner::new(PropConfig {
        cases: RANDOM_CASES,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let stream = prop::collection::vec((0.0f64..60.0, 0.05f64..2.0), 1..200);
    let switches_seen = std::cell::Cell::new(0usize);
    runner
        .run(&stream, |samples| {
            let mut ctl = RateController::adaptive(QualityLadder::default()).unwrap();
            let mut t = 0.0;
            let mut last: Option<f64> = None;
            for (estimate, dt) in samples {
                if ctl.step(estimate, t).unwrap().is_switch() {
                    if let Some(prev) = last {
                        prop_assert!(t - prev >= 3.0, "switches at {prev} and {t}");
                    }
                    last = Some(t);
                    switches_seen.set(switches_seen.get() + 1);
                }
                t += dt;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "adaptive Q3->Q2->Q1->Q3, fixed 0 switches; {RANDOM_CASES} random streams, {} switches all >= 3 s apart",
        switches_seen.get()
    ))
}

// ---------------------------------------------------------------- 5

fn c5_reduction() -> Result<String, String> {
    let baseline = MetricsReport::from_totals(4, 4760.0, 140.0);
    let candidate = MetricsReport::from_totals(6, 3930.0, 140.0);
    let s = compare_reports(&baseline, &candidate, 277.0, 3).map_err(|e| e.to_string())?;
    let plain = s.freeze_time_reduction_pct.ok_or("undefined reduction")?;
    let stall_free = s.stall_free_reduction_pct.ok_or("undefined stall-free reduction")?;
    ensure((plain - 17.4).abs() <= PERCENT_TOL_PP, || format!("reduction {plain}"))?;
    ensure((stall_free - 34.9).abs() <= PERCENT_TOL_PP, || format!("stall-free reduction {stall_free}"))?;
    ensure(s.stall_free_f_tot_ms == 3099.0, || format!("stall-free total {}", s.stall_free_f_tot_ms))?;
    Ok(format!("{plain:.2}% and {stall_free:.2}% (hypothetical total {} ms)", s.stall_free_f_tot_ms))
}

// ---------------------------------------------------------------- 6

fn c6_end_to_end() -> Result<String, String> {
    let config = ScenarioConfig::load(&testbed()).map_err(|e| e.to_string())?;
    let report = |mode, stall: f64| {
        let controller = config.controller(Some(mode), None).unwrap();
        let mut params = config.stream_params();
        params.switch_stall_ms = stall;
        let out = run_session(config.channel_scenario().unwrap(), controller, &params).unwrap();
        compute_report(&out.timeline, &config.freeze_params())
    };
    let adaptive = report(ModeKind::Adaptive, 277.0);
    let fixed = report(ModeKind::Fixed, 277.0);
    let no_stall = report(ModeKind::Adaptive, 0.0);
    ensure(adaptive.f_tot_ms < fixed.f_tot_ms, || {
        format!("adaptive F_tot {} >= fixed {}", adaptive.f_tot_ms, fixed.f_tot_ms)
    })?;
    let top = adaptive.residency.get("Q3").copied().unwrap_or(0.0);
    ensure(top >= TOP_RESIDENCY.0 && top <= TOP_RESIDENCY.1, || format!("Q3 residency {top}"))?;
    let delta = adaptive.f_tot_ms - no_stall.f_tot_ms;
    let expected = adaptive.s_nb as f64 * 277.0;
    let tol = STALL_TOL_TICKS * config.stream.tick_ms as f64;
    ensure(adaptive.s_nb == 3, || format!("{} switches", adaptive.s_nb))?;
    ensure((delta - expected).abs() <= tol, || {
        format!("stall delta {delta:.3} ms vs {expected} +/- {tol} ms")
    })?;
    Ok(format!(
        "F_tot adaptive {:.1} ms < fixed {:.1} ms; Q3 residency {top:.4}; stall delta {delta:.2} ms vs {expected} ms",
        adaptive.f_tot_ms, fixed.f_tot_ms
    ))
}

// ---------------------------------------------------------------- 7

fn planted(gaps_ms: &[(usize, f64)], frames: usize) -> SessionTimeline {
    let interval = 1.0 / 60.0;
    let mut t = 0.0;
    let mut displays = Vec::new();
    for k in 0..frames {
        t += interval;
        if let Some((_, extra)) = gaps_ms.iter().find(|(at, _)| *at == k) {
            t += extra / 1000.0;
        }
        displays.push((k as u64, t));
    }
    SessionTimeline {
        duration_s: t,
        frame_displays: displays,
        ..SessionTimeline::default()
    }
}

fn c7_freeze_detector() -> Result<String, String> {
    let params = FreezeParams::default();
    let plants = [(10, 277.0), (100, 1000.0), (200, 50.0), (300, 100.0), (400, 150.5), (500, 99.9)];
    let timeline = planted(&plants, 600);
    let events = detect_freezes(&timeline, &params).events;
    let want: Vec<f64> = [277.0, 1000.0, 150.5].to_vec();
    ensure(events.len() == want.len(), || format!("{} freezes detected", events.len()))?;
    for (e, w) in events.iter().zip(&want) {
        ensure((e.duration_ms - w).abs() < 1e-6, || format!("freeze {} vs {w}", e.duration_ms))?;
    }

    // exact on a dyadic grid: 1/64 s frames, gaps of whole 1/64 s steps
    let grid = FreezeParams {
        nominal_fps: 64.0,
        freeze_excess_threshold_ms: 100.0,
    };
    let mut t = 0.0;
    let mut frames = Vec::new();
    for k in 0..256u64 {
        t += if k == 40 { 17.0 / 64.0 } else { 1.0 / 64.0 };
        frames.push((k, t));
    }
    let dyadic = SessionTimeline {
        duration_s: t,
        frame_displays: frames,
        ..SessionTimeline::default()
    };
    let exact = detect_freezes(&dyadic, &grid).events;
    ensure(exact.len() == 1 && (exact[0].duration_ms - 250.0).abs() < EXACT_MS, || {
        format!("dyadic plant detected as {exact:?}")
    })?;

    let mut runner = TestRunner::new(PropConfig {
        cases: RANDOM_CASES,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (prop::collection::vec(1.0f64..600.0, 1..120), 0.0f64..400.0, 0.0f64..400.0);
    runner
        .run(&strategy, |(gaps, a, b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let mut t = 0.0;
            let frames = gaps
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    t += g / 1000.0;
                    (k as u64, t)
                })
                .collect();
            let tl = SessionTimeline {
                duration_s: t,
                frame_displays: frames,
                ..SessionTimeline::default()
            };
            let at = |th| {
                compute_report(
                    &tl,
                    &FreezeParams {
                        nominal_fps: 60.0,
                        freeze_excess_threshold_ms: th,
                    },
                )
            };
            let (r_lo, r_hi) = (at(lo), at(hi));
            prop_assert!(r_lo.f_nb >= r_hi.f_nb);
            prop_assert!(r_lo.f_tot_ms >= r_hi.f_tot_ms);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "planted gaps detected exactly ({} of {}); threshold monotone over {RANDOM_CASES} timelines",
        want.len(),
        plants.len()
    ))
}

// ---------------------------------------------------------------- 8

struct Reap(Child);

impl Drop for Reap {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn c8_wire_loop() -> Result<String, String> {
    let mut server = Reap(
        bin()
            .args(["serve-gnb", "--config"])
            .arg(testbed())
            .args(["--bind", "127.0.0.1:0", "--clock", "virtual"])
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?,
    );
    let mut url = String::new();
    BufReader::new(server.0.stdout.take().unwrap())
        .read_line(&mut url)
        .map_err(|e| e.to_string())?;
    let url = url.trim().to_string();
    ensure(url.starts_with("ws://"), || format!("server printed {url:?}"))?;

    // bad frames get error replies and the connection stays usable
    let (mut ws, _) = tungstenite::connect(url.as_str()).map_err(|e| e.to_string())?;
    let mut ask = |text: &str| -> Result<Reply, String> {
        ws.send(tungstenite::Message::text(text.to_string()))
            .map_err(|e| e.to_string())?;
        loop {
            if let tungstenite::Message::Text(t) = ws.read().map_err(|e| e.to_string())? {
                return serde_json::from_str(t.as_str()).map_err(|e| e.to_string());
            }
        }
    };
    for bad in ["{not json", r#"{"message":"bogus","msg_id":1}"#, r#"{"message":"stats"}"#] {
        ensure(matches!(ask(bad)?, Reply::Error(_)), || format!("no error reply for {bad}"))?;
    }
    ensure(matches!(ask(r#"{"message":"stats","msg_id":2}"#)?, Reply::Stats(_)), || {
        "connection unusable after bad frames".to_string()
    })?;
    let _ = ws.close(None);

    let out = bin()
        .args(["monitor", "--url", &url, "--config"])
        .arg(testbed())
        .args(["--duration", "60"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("monitor exited {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr))
    })?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    ensure(rows.len() == 60, || format!("{} rows", rows.len()))?;
    let cell = CellConfig::testbed();
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        let mcs: u32 = cols[1].parse().map_err(|_| format!("bad row {row}"))?;
        let local = cell.estimate(mcs).map_err(|e| e.to_string())?.render();
        ensure(cols[2] == local, || format!("row {row}: {} vs local {local}", cols[2]))?;
    }
    Ok(format!("60 samples over {url}, all estimates identical to local rendering; 3 bad frames answered"))
}

// ---------------------------------------------------------------- 9

fn c9_determinism() -> Result<String, String> {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(testbed())
            .arg("--out")
            .arg(dir.path())
            .stdout(Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("simulate exited {status:?}"))?;
    }
    let mut bytes = 0;
    for file in ["timeline.json", "report.json", "series.csv", "monitor.csv"] {
        let a = std::fs::read(dirs[0].path().join(file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(file)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{file} differs between runs"))?;
        bytes += a.len();
    }
    Ok(format!("timeline, report, series and monitor log byte-identical ({bytes} bytes)"))
}

fn main() {
    let outcomes = [
        criterion(1, "rate reproduction", Duration::from_secs(1), c1_rate_reproduction),
        criterion(2, "oracle equivalence", Duration::from_secs(5), c2_oracle),
        criterion(3, "monotonicity", Duration::from_secs(5), c3_monotonicity),
        criterion(4, "controller behaviour", Duration::from_secs(10), c4_controller),
        criterion(5, "freeze-reduction arithmetic", Duration::from_secs(1), c5_reduction),
        criterion(6, "end-to-end simulation", Duration::from_secs(10), c6_end_to_end),
        criterion(7, "freeze detector", Duration::from_secs(5), c7_freeze_detector),
        criterion(8, "wire loop", Duration::from_secs(10), c8_wire_loop),
        criterion(9, "determinism", Duration::from_secs(10), c9_determinism),
    ];
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("acceptance: {}/{} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

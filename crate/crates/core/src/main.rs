use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{mpsc, Arc};

use clap::{Parser, Subcommand};
use log::info;

use nrstream_core::config::{ModeKind, ScenarioConfig};
use nrstream_core::gnb::{run_service, ClockMode, GnbService, ScenarioClock};
use nrstream_core::metrics::{compare_reports, compute_report, MetricsReport};
use nrstream_core::monitor::{run_monitor_loop, Monitor, MonitorRow, ProfileCommand, WsTelemetry, DEFAULT_POLL_TIMEOUT};
use nrstream_core::nr_rate::decimal::render;
use nrstream_core::nr_rate::{CellConfig, McsTableId, TableSet};
use nrstream_core::streaming::run_session;
use nrstream_core::{Error, Result};

#[derive(Parser)]
#[command(name = "nrstream", version, about = "NR rate estimation and rate-adaptive streaming simulation")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Peak downlink rate in Mbps for one MCS index or a range.
    Rate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "mcs_range", required_unless_present = "mcs_range")]
        mcs: Option<u32>,
        /// Inclusive range, e.g. `0..27`.
        #[arg(long, value_parser = parse_range)]
        mcs_range: Option<(u32, u32)>,
    },
    /// Dump an MCS table with the rate of each index.
    McsTable {
        #[arg(long)]
        table: String,
        /// Cell to evaluate rates with; the testbed cell when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a streaming session and write series.csv, monitor.csv, timeline.json and report.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeKind>,
        /// Profile for fixed mode.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        switch_stall_ms: Option<f64>,
        #[arg(long, env = "NRSTREAM_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Compare two report.json files (baseline first).
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        #[arg(long, default_value_t = 277.0)]
        stall_ms: f64,
        /// Stalls to remove for the hypothetical; the candidate's switch count when absent.
        #[arg(long)]
        stall_count: Option<u32>,
    },
    /// Serve simulated gNB telemetry over WebSocket.
    ServeGnb {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "NRSTREAM_BIND", default_value = "127.0.0.1:8765")]
        bind: String,
        #[arg(long, value_enum, default_value = "real")]
        clock: ClockMode,
    },
    /// Poll a gNB service and run the rate controller against it.
    Monitor {
        #[arg(long)]
        url: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        /// Also write the log rows to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_range(s: &str) -> std::result::Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: u32 = a.trim().parse().map_err(|_| format!("bad start {a:?}"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad end {b:?}"))?;
    if a > b {
        return Err(format!("empty range {s}"));
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Rate { config, mcs, mcs_range } => cmd_rate(&config, mcs, mcs_range),
        Command::McsTable { table, config } => cmd_mcs_table(&table, config.as_deref()),
        Command::Simulate {
            config,
            mode,
            profile,
            switch_stall_ms,
            out,
        } => cmd_simulate(&config, mode, profile.as_deref(), switch_stall_ms, &out),
        Command::Compare {
            baseline,
            candidate,
            stall_ms,
            stall_count,
        } => cmd_compare(&baseline, &candidate, stall_ms, stall_count),
        Command::ServeGnb { config, bind, clock } => cmd_serve(&config, &bind, clock),
        Command::Monitor {
            url,
            config,
            duration,
            out,
        } => cmd_monitor(&url, &config, duration, out.as_deref()),
    }
}

fn cmd_rate(config: &Path, mcs: Option<u32>, range: Option<(u32, u32)>) -> Result<()> {
    let config = ScenarioConfig::load(config)?;
    let mut stdout = std::io::stdout().lock();
    match (mcs, range) {
        (Some(index), _) => writeln!(stdout, "{}", config.cell.estimate(index)?.render()),
        (None, Some((a, b))) => {
            let rows = (a..=b)
                .map(|i| config.cell.estimate(i).map(|e| format!("{i},{}", e.render())))
                .collect::<Result<Vec<_>>>()?;
            writeln!(stdout, "mcs,rate_mbps\n{}", rows.join("\n"))
        }
        (None, None) => return Err(Error::invalid("one of --mcs or --mcs-range is required")),
    }
    .map_err(|e| Error::io("<stdout>", e))
}

fn cmd_mcs_table(table: &str, config: Option<&Path>) -> Result<()> {
    let table: McsTableId = table.parse()?;
    let mut cell = match config {
        Some(path) => ScenarioConfig::load(path)?.cell,
        None => CellConfig::testbed(),
    };
    for carrier in &mut cell.carriers {
        carrier.mcs_table = table;
    }
    let mut out = String::from("mcs,q_m,code_rate_x1024,spectral_efficiency,rate_mbps\n");
    for (index, entry) in TableSet::embedded().mcs_table(table).iter().enumerate() {
        out.push_str(&format!(
            "{index},{},{},{},{}\n",
            entry.q_m,
            render(&entry.code_rate_x1024(), 1),
            render(&entry.spectral_efficiency(), 4),
            cell.estimate(index as u32)?.render()
        ));
    }
    let _ = std::io::stdout().write_all(out.as_bytes());
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn cmd_simulate(
    config_path: &Path,
    mode: Option<ModeKind>,
    profile: Option<&str>,
    switch_stall_ms: Option<f64>,
    out: &Path,
) -> Result<()> {
    let config = ScenarioConfig::load(config_path)?;
    let scenario = config.channel_scenario()?;
    let controller = config.controller(mode, profile)?;
    let mut params = config.stream_params();
    if let Some(stall) = switch_stall_ms {
        params.switch_stall_ms = stall;
    }
    let session = run_session(scenario, controller, &params)?;
    let report = compute_report(&session.timeline, &config.freeze_params());

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("series.csv"), &session.series_csv())?;
    let mut log = format!("{}\n", MonitorRow::HEADER);
    for row in &session.monitor_log {
        log.push_str(&row.to_csv());
        log.push('\n');
    }
    write_file(&out.join("monitor.csv"), &log)?;
    write_file(&out.join("timeline.json"), &serde_json::to_string_pretty(&session.timeline)?)?;
    let report_json = serde_json::to_string_pretty(&report)?;
    write_file(&out.join("report.json"), &report_json)?;
    info!("wrote {}", out.display());
    let _ = writeln!(std::io::stdout(), "{report_json}");
    Ok(())
}

fn load_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn cmd_compare(baseline: &Path, candidate: &Path, stall_ms: f64, stall_count: Option<u32>) -> Result<()> {
    let (a, b) = (load_report(baseline)?, load_report(candidate)?);
    let count = stall_count.unwrap_or(b.s_nb as u32);
    let summary = compare_reports(&a, &b, stall_ms, count)?;
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_serve(config: &Path, bind: &str, clock: ClockMode) -> Result<()> {
    let config = ScenarioConfig::load(config)?;
    let service = Arc::new(GnbService::new(config.channel_scenario()?, ScenarioClock::new(clock)));
    let handle = run_service(service, bind)?;
    let mut stdout = std::io::stdout();
    writeln!(stdout, "{}", handle.url())
        .and_then(|_| stdout.flush())
        .map_err(|e| Error::io("<stdout>", e))?;
    handle.wait_until_finished();
    Ok(())
}

fn cmd_monitor(url: &str, config: &Path, duration: f64, out: Option<&Path>) -> Result<()> {
    let config = ScenarioConfig::load(config)?;
    let controller = config.controller(None, None)?;
    let period = controller.state().sampling_period_s;
    let source = WsTelemetry::connect(url, DEFAULT_POLL_TIMEOUT)?;
    let (tx, rx) = mpsc::channel::<ProfileCommand>();
    let renderer = std::thread::spawn(move || {
        for cmd in rx {
            info!("renderer: switch to {} (t = {} s)", cmd.target, cmd.issued_at_s);
        }
    });
    let mut monitor = Monitor::new(source, config.cell.clone(), controller, tx);
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{}", MonitorRow::HEADER);
    let result = run_monitor_loop(&mut monitor, period, duration, &mut |row| {
        let _ = writeln!(stdout, "{}", row.to_csv());
        let _ = stdout.flush();
    });
    monitor.into_source().close();
    let _ = renderer.join();
    let rows = result?;
    if let Some(path) = out {
        let mut text = format!("{}\n", MonitorRow::HEADER);
        for row in &rows {
            text.push_str(&row.to_csv());
            text.push('\n');
        }
        write_file(path, &text)?;
    }
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use microgrid_svc::harness::{
    compare_runs, emit_outputs, expand, run_scenario, run_sweep, HarnessError, Profile, RunFailure,
    RunRecord, ScenarioConfig, SweepParam,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_MONITOR: u8 = 4;
const EXIT_CONTROLLER: u8 = 5;
const EXIT_IO: u8 = 6;

#[derive(Parser)]
#[command(
    name = "svc",
    version,
    about = "Microgrid secondary voltage control scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    /// Skip the per-figure data files.
    #[arg(long, global = true)]
    no_figures: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Ci,
    Showcase,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run { config: PathBuf },
    /// Run the cartesian product of parameter overrides in parallel.
    Sweep {
        config: PathBuf,
        /// `dotted.path=v1,v2,...`; repeat for more dimensions.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
    },
    /// Run two scenarios on the same grid and tabulate their metrics.
    Compare { a: PathBuf, b: PathBuf },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
}

fn exit_for(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Config(_) | HarnessError::Mismatch(_) => EXIT_CONFIG,
        HarnessError::Calibration(_) => EXIT_DIVERGED,
        HarnessError::Io(_) => EXIT_IO,
    }
}

fn exit_for_failure(f: &RunFailure) -> u8 {
    match f {
        RunFailure::Diverged { .. } => EXIT_DIVERGED,
        RunFailure::MonitorViolation { .. } => EXIT_MONITOR,
        RunFailure::Controller { .. } => EXIT_CONTROLLER,
    }
}

impl Cli {
    fn load(&self, path: &Path) -> Result<ScenarioConfig, HarnessError> {
        let mut cfg = ScenarioConfig::load(path)?;
        if let Some(p) = self.profile {
            match p {
                ProfileArg::Ci => Profile::Ci,
                ProfileArg::Showcase => Profile::Showcase,
            }
            .apply(&mut cfg);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn emit(&self, rec: &RunRecord, dir: &Path) -> Result<(), HarnessError> {
        let files = emit_outputs(rec, dir, !self.no_figures)?;
        log::info!("wrote {} files to {}", files.len(), dir.display());
        Ok(())
    }
}

fn report(rec: &RunRecord) {
    let s = &rec.summary;
    let worst = |v: &Option<Vec<f64>>| {
        v.as_ref()
            .map(|v| format!("{:.4} V", v.iter().copied().fold(0.0, f64::max)))
            .unwrap_or_else(|| "-".into())
    };
    let secs = |v: Option<f64>| v.map(|x| format!("{x:.3} s")).unwrap_or_else(|| "-".into());
    println!(
        "{} / {}: {} rows, rho {:.4e} V",
        s.context.controller, s.context.plant, s.rows, s.context.rho_v
    );
    println!("  pre-SVC error (worst)   {}", worst(&s.pre_svc_error_v));
    println!("  post-SVC error (worst)  {}", worst(&s.post_svc_error_v));
    println!(
        "  settle / recovery       {} / {}",
        secs(s.settle_time_s),
        secs(s.recovery_time_s)
    );
    println!("  terminal error (worst)  {}", worst(&s.terminal_error_v));
    println!("  switches {}  verdict {:?}", s.switch_count, s.verdict);
}

fn run(cli: &Cli) -> Result<u8, HarnessError> {
    match &cli.command {
        Command::Validate { config } => {
            let cfg = cli.load(config)?;
            println!(
                "{}: ok ({} channels, {} rows)",
                config.display(),
                cfg.channels()?,
                cfg.timing.rows()
            );
            Ok(0)
        }
        Command::Run { config } => {
            let rec = run_scenario(&cli.load(config)?)?;
            cli.emit(&rec, &cli.out)?;
            report(&rec);
            Ok(match &rec.failure {
                Some(f) => {
                    eprintln!("error: {f}");
                    exit_for_failure(f)
                }
                None => 0,
            })
        }
        Command::Compare { a, b } => {
            let (ca, cb) = (cli.load(a)?, cli.load(b)?);
            let (ra, rb, cmp) = compare_runs(&ca, &cb)?;
            cli.emit(&ra, &cli.out.join("a"))?;
            cli.emit(&rb, &cli.out.join("b"))?;
            let path = cli.out.join("comparison.json");
            let text = serde_json::to_string_pretty(&cmp).expect("comparison serializes");
            fs::write(&path, text + "\n")
                .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            print!("{}", cmp.render());
            Ok(0)
        }
        Command::Sweep { config, params } => {
            let base = cli.load(config)?;
            let params = params
                .iter()
                .map(|p| SweepParam::parse(p))
                .collect::<Result<Vec<_>, _>>()?;
            let points = expand(&base, &params)?;
            log::info!("sweeping {} points", points.len());
            let results = run_sweep(&points);
            let table = cli.out.join("sweep.csv");
            fs::create_dir_all(&cli.out).map_err(|e| HarnessError::Io(e.to_string()))?;
            let mut w = csv::Writer::from_path(&table).map_err(|e| HarnessError::Io(e.to_string()))?;
            let mut header = vec!["index".to_string()];
            header.extend(params.iter().map(|p| p.path.clone()));
            header.extend(
                [
                    "verdict",
                    "terminal_worst_fraction",
                    "recovery_time_s",
                    "switch_count",
                    "failure",
                ]
                .map(String::from),
            );
            w.write_record(&header)
                .map_err(|e| HarnessError::Io(e.to_string()))?;
            let mut code = 0;
            for (p, res) in points.iter().zip(&results) {
                let mut row = vec![p.index.to_string()];
                row.extend(p.assignment.iter().map(|(_, v)| match v {
                    toml::Value::String(s) => s.clone(),
                    v => v.to_string(),
                }));
                match res {
                    Ok(rec) => {
                        cli.emit(rec, &cli.out.join(format!("point-{:03}", p.index)))?;
                        let s = &rec.summary;
                        let verdict = serde_json::to_value(s.verdict).expect("verdict serializes");
                        row.extend([
                            verdict.as_str().unwrap_or_default().to_string(),
                            s.terminal_worst_fraction
                                .map(|v| v.to_string())
                                .unwrap_or_default(),
                            s.recovery_time_s.map(|v| v.to_string()).unwrap_or_default(),
                            s.switch_count.to_string(),
                            rec.failure.as_ref().map(|f| f.to_string()).unwrap_or_default(),
                        ]);
                        if let (0, Some(f)) = (code, &rec.failure) {
                            code = exit_for_failure(f);
                        }
                    }
                    Err(e) => {
                        row.extend(["", "", "", ""].map(String::from));
                        row.push(e.to_string());
                        if code == 0 {
                            code = exit_for(e);
                        }
                    }
                }
                w.write_record(&row)
                    .map_err(|e| HarnessError::Io(e.to_string()))?;
            }
            w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
            println!("{} points, table in {}", points.len(), table.display());
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

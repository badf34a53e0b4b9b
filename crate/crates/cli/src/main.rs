use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gpact_core::attestation::AttestationMode;
use gpact_core::check::{check_write, CheckConfig};
use gpact_core::config::SimConfig;
use gpact_core::engine::EngineKind;
use gpact_core::scenarios::{
    execute, run_livelock, table4, verify_post_state, Fault, ScenarioConfig, ScenarioKind,
    TABLE4_COLUMNS,
};

#[derive(Parser)]
#[command(name = "gpact", version, about = "Atomic crosschain call simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    /// `scenario,mode,engine,periods,outcome,txCounts`
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and verify the final state.
    Run(RunArgs),
    /// Measure every latency cell against the published figures.
    Table4 {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Exhaustively explore orderings of the two-chain write.
    Check {
        #[arg(long, value_parser = parse_mode, default_value = "direct")]
        mode: AttestationMode,
        #[arg(long, default_value_t = 3)]
        timeout: u64,
        #[arg(long, default_value_t = 10)]
        max_moves: usize,
        #[arg(long, default_value_t = 2)]
        max_attempts: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<ScenarioKind>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<AttestationMode>,
    #[arg(long, value_parser = parse_engine)]
    engine: Option<EngineKind>,
    /// crash:<point>, fail-segment:<path> or byzantine:<k>; repeatable.
    #[arg(long = "fault", value_parser = parse_fault)]
    faults: Vec<Fault>,
    /// Timeout in block periods after the start block.
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Livelock rounds.
    #[arg(long)]
    retries: Option<u32>,
    /// Run without the recovery agent.
    #[arg(long)]
    no_agent: bool,
    /// Accept byzantine counts at or above the threshold.
    #[arg(long)]
    allow_unsafe_byzantine: bool,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<AttestationMode, String> {
    s.parse()
}

fn parse_engine(s: &str) -> Result<EngineKind, String> {
    s.parse()
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    s.parse()
}

impl RunArgs {
    fn scenario_config(&self) -> Result<ScenarioConfig> {
        let base = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        let mut cfg = base.scenario_config()?;
        if let Some(k) = self.scenario {
            cfg.kind = k;
            if self.config.is_none() {
                cfg.chains.clear();
            }
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(e) = self.engine {
            cfg.engine = e;
        }
        cfg.faults.extend(self.faults.iter().cloned());
        if let Some(t) = self.timeout {
            cfg.timeout_periods = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.retries {
            cfg.retries = r;
        }
        if self.no_agent {
            cfg.agents = false;
        }
        if self.allow_unsafe_byzantine {
            cfg.allow_unsafe_byzantine = true;
        }
        Ok(cfg)
    }
}

fn run(args: RunArgs) -> Result<bool> {
    let cfg = args.scenario_config()?;
    if cfg.kind == ScenarioKind::Livelock {
        let r = run_livelock(&cfg)?;
        for round in &r.rounds {
            for rep in [&round.first, &round.second] {
                match args.report {
                    ReportFormat::Machine => println!("{}", rep.machine_line()),
                    ReportFormat::Text => println!("round {}\n{rep}", round.round),
                }
            }
        }
        if args.report == ReportFormat::Text {
            println!(
                "every round aborted: {}; storage unchanged: {}; lock residue: {}",
                r.every_round_aborted(),
                r.storage_unchanged(),
                r.lock_residue.len()
            );
        }
        return Ok(r.storage_unchanged() && r.lock_residue.is_empty());
    }
    let run = execute(&cfg)?;
    match args.report {
        ReportFormat::Machine => println!("{}", run.report.machine_line()),
        ReportFormat::Text => print!("{}", run.report),
    }
    if !run.report.terminated {
        eprintln!(
            "run did not settle within {} periods",
            gpact_core::scenarios::max_period(&cfg)
        );
        return Ok(false);
    }
    match verify_post_state(&run) {
        Ok(()) => Ok(true),
        Err(e) => {
            eprintln!("post-state check failed: {e}");
            Ok(false)
        }
    }
}

fn print_table4(seed: u64) -> Result<bool> {
    let cells = table4(seed)?;
    let header: Vec<String> = TABLE4_COLUMNS
        .iter()
        .map(|(e, m)| format!("{e}-{m}"))
        .collect();
    println!(
        "{:<8} {}",
        "",
        header
            .iter()
            .map(|h| format!("{h:>18}"))
            .collect::<String>()
    );
    for row in cells.chunks(4) {
        let line: String = row
            .iter()
            .map(|c| {
                let verdict = if c.pass() { "PASS" } else { "FAIL" };
                format!("{:>18}", format!("{}/{} {verdict}", c.measured, c.expected))
            })
            .collect();
        println!("{:<8} {line}", row[0].scenario.to_string());
    }
    let failed = cells.iter().filter(|c| !c.pass()).count();
    println!("{} of {} cells match", cells.len() - failed, cells.len());
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Table4 { seed } => print_table4(seed),
        Command::Check {
            mode,
            timeout,
            max_moves,
            max_attempts,
            seed,
        } => check(CheckConfig {
            mode,
            timeout_periods: timeout,
            max_moves,
            max_attempts,
            seed,
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn check(cfg: CheckConfig) -> Result<bool> {
    if cfg.max_moves == 0 {
        bail!("--max-moves must be positive");
    }
    let r = check_write(&cfg).context("setting up the write scenario")?;
    print!("{r}");
    Ok(r.ok())
}

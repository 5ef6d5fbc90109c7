//! Command-line front end: solve swap-game scenarios, sweep parameters to
//! CSV and cross-check the solver against forward simulation.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use swap_game::baseline;
use swap_game::collateral::{self, CollateralScenario};
use swap_game::flexible;
use swap_game::montecarlo::{self, SimConfig, VariantScenario};
use swap_game::{
    AgentParams, Error as GameError, Interval, IntervalSet, MarketModel, Scenario, SwapTimeline,
};

const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SELF_CHECK: u8 = 3;

#[derive(Parser)]
#[command(
    name = "swapgame",
    about = "Solver and simulator for HTLC atomic-swap stage games",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report thresholds, feasible ranges and the success rate.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep one parameter and emit a CSV row per grid point.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// "path=start:stop:count" or "path=v1,v2,..." (e.g. swap.p_star=1.5:2.5:50)
        #[arg(long)]
        sweep: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the solved success rate against a forward Monte Carlo run.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Replications; overrides the scenario file's sim section.
        #[arg(long)]
        n: Option<u64>,
        /// Master seed; overrides the scenario file's sim section.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Parser)]
struct CommonArgs {
    /// Scenario JSON; built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Variant::Baseline)]
    variant: Variant,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    Baseline,
    Collateral,
    Flexible,
}

// ---------------------------------------------------------------------------
// Scenario file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    market: MarketSection,
    alice: AgentSection,
    bob: AgentSection,
    chain: ChainSection,
    swap: SwapSection,
    #[serde(default)]
    collateral: Option<CollateralSection>,
    #[serde(default)]
    sim: Option<SimSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketSection {
    mu: f64,
    sigma: f64,
    p0: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSection {
    alpha: f64,
    r: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainSection {
    tau_a: f64,
    tau_b: f64,
    eps_b: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwapSection {
    p_star: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct CollateralSection {
    q: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    n: u64,
    seed: u64,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            market: MarketSection {
                mu: 0.002,
                sigma: 0.1,
                p0: 2.0,
            },
            alice: AgentSection {
                alpha: 0.3,
                r: 0.01,
            },
            bob: AgentSection {
                alpha: 0.3,
                r: 0.01,
            },
            chain: ChainSection {
                tau_a: 3.0,
                tau_b: 4.0,
                eps_b: 1.0,
            },
            swap: SwapSection { p_star: 2.0 },
            collateral: None,
            sim: None,
        }
    }
}

impl ScenarioFile {
    fn load(path: &PathBuf) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::input(format!(
                "malformed scenario {} (line {}, column {}): {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }

    fn scenario(&self) -> Result<Scenario, CliError> {
        let build = || -> Result<Scenario, GameError> {
            Scenario::new(
                MarketModel::new(self.market.mu, self.market.sigma, self.market.p0)?,
                AgentParams::new(self.alice.alpha, self.alice.r)?,
                AgentParams::new(self.bob.alpha, self.bob.r)?,
                SwapTimeline::new(self.chain.tau_a, self.chain.tau_b, self.chain.eps_b)?,
                self.swap.p_star,
            )
        };
        build().map_err(|e| CliError::input(format!("invalid scenario: {e}")))
    }

    fn collateral_scenario(&self) -> Result<CollateralScenario, CliError> {
        let q = self.collateral.map_or(0.0, |c| c.q);
        CollateralScenario::new(self.scenario()?, q)
            .map_err(|e| CliError::input(format!("invalid scenario: {e}")))
    }

    fn set_path(&mut self, path: &str, value: f64) -> Result<(), CliError> {
        match path {
            "market.mu" => self.market.mu = value,
            "market.sigma" => self.market.sigma = value,
            "market.p0" => self.market.p0 = value,
            "alice.alpha" => self.alice.alpha = value,
            "alice.r" => self.alice.r = value,
            "bob.alpha" => self.bob.alpha = value,
            "bob.r" => self.bob.r = value,
            "chain.tau_a" => self.chain.tau_a = value,
            "chain.tau_b" => self.chain.tau_b = value,
            "chain.eps_b" => self.chain.eps_b = value,
            "swap.p_star" => self.swap.p_star = value,
            "collateral.q" => {
                self.collateral = Some(CollateralSection { q: value });
            }
            other => {
                return Err(CliError::input(format!(
                    "unknown sweep parameter path: {other}"
                )))
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_INPUT,
        }
    }

    fn infeasible(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_INFEASIBLE,
        }
    }

    fn from_game(e: GameError) -> Self {
        match e {
            GameError::NotInitiated { p_star } => CliError::infeasible(format!(
                "not initiated: exchange rate {p_star} lies outside the feasible range"
            )),
            other => CliError {
                message: other.to_string(),
                code: EXIT_INPUT,
            },
        }
    }
}

fn fmt9(x: f64) -> String {
    format!("{:.8e}", x)
}

fn fmt_interval(iv: &Option<Interval>) -> String {
    match iv {
        Some(iv) => format!("[{}, {}]", fmt9(iv.lo()), fmt9(iv.hi())),
        None => "none".to_string(),
    }
}

fn fmt_set(set: &IntervalSet) -> String {
    if set.is_empty() {
        return "none".to_string();
    }
    set.intervals()
        .iter()
        .map(|iv| format!("[{}, {}]", fmt9(iv.lo()), fmt9(iv.hi())))
        .collect::<Vec<_>>()
        .join(" u ")
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

fn cmd_solve(file: &ScenarioFile, variant: Variant, out: &mut impl Write) -> Result<(), CliError> {
    match variant {
        Variant::Baseline => {
            let s = file.scenario()?;
            let policy = baseline::solve(&s).map_err(CliError::from_game)?;
            let sr = baseline::success_rate(&s).map_err(CliError::from_game)?;
            writeln!(out, "variant: baseline").unwrap();
            writeln!(out, "p_star: {}", fmt9(s.p_star())).unwrap();
            writeln!(out, "threshold_t3: {}", fmt9(policy.p3_lower)).unwrap();
            writeln!(out, "p2_range: {}", fmt_interval(&policy.p2_range)).unwrap();
            writeln!(out, "pstar_range: {}", fmt_interval(&policy.pstar_range)).unwrap();
            writeln!(out, "success_rate: {}", fmt9(sr)).unwrap();
        }
        Variant::Collateral => {
            let cs = file.collateral_scenario()?;
            let policy = collateral::solve(&cs).map_err(CliError::from_game)?;
            let sr = collateral::success_rate_collateral(&cs).map_err(CliError::from_game)?;
            writeln!(out, "variant: collateral").unwrap();
            writeln!(out, "p_star: {}", fmt9(cs.base.p_star())).unwrap();
            writeln!(out, "q: {}", fmt9(cs.q())).unwrap();
            writeln!(out, "threshold_t3: {}", fmt9(policy.p3_lower)).unwrap();
            writeln!(out, "p2_set: {}", fmt_set(&policy.p2_set)).unwrap();
            writeln!(
                out,
                "pstar_set: {}",
                fmt_set(policy.pstar_set.as_ref().expect("solved"))
            )
            .unwrap();
            writeln!(out, "success_rate: {}", fmt9(sr)).unwrap();
        }
        Variant::Flexible => {
            let s = file.scenario()?;
            let ps = s.p_star();
            let excess =
                flexible::alice_excess_utility_t1_flexible(ps, &s).map_err(CliError::from_game)?;
            if excess < 0.0 {
                return Err(CliError::infeasible(format!(
                    "not initiated: committing {ps} Token_a has negative excess utility {excess:.6}"
                )));
            }
            let sr = flexible::success_rate_flexible(ps, &s).map_err(CliError::from_game)?;
            writeln!(out, "variant: flexible").unwrap();
            writeln!(out, "p_star: {}", fmt9(ps)).unwrap();
            writeln!(
                out,
                "threshold_t3_unit_lock: {}",
                fmt9(baseline::threshold_t3(&s))
            )
            .unwrap();
            writeln!(out, "alice_excess_utility: {}", fmt9(excess)).unwrap();
            writeln!(out, "success_rate: {}", fmt9(sr)).unwrap();
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

const CSV_HEADER: &str = "swept_value,feasible,sr,threshold_t3,p2_lo,p2_hi,pstar_lo,pstar_hi";

struct SweepSpec {
    path: String,
    values: Vec<f64>,
}

fn parse_sweep(spec: &str) -> Result<SweepSpec, CliError> {
    let (path, rhs) = spec.split_once('=').ok_or_else(|| {
        CliError::input("sweep must look like path=start:stop:count or path=v1,v2,...")
    })?;
    let path = path.trim().to_string();
    let rhs = rhs.trim();
    let parse = |v: &str| -> Result<f64, CliError> {
        v.trim()
            .parse::<f64>()
            .map_err(|_| CliError::input(format!("bad sweep value: {v}")))
    };
    let values = if rhs.contains(':') {
        let parts: Vec<&str> = rhs.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::input("grid sweep must be start:stop:count"));
        }
        let start = parse(parts[0])?;
        let stop = parse(parts[1])?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("bad grid count: {}", parts[2])))?;
        if count < 2 {
            return Err(CliError::input("grid sweep needs count >= 2"));
        }
        (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect()
    } else {
        rhs.split(',').map(parse).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(CliError::input("sweep produced no values"));
    }
    Ok(SweepSpec { path, values })
}

struct SweepRow {
    swept_value: f64,
    feasible: bool,
    sr: Option<f64>,
    threshold_t3: f64,
    p2: Option<Interval>,
    pstar: Option<Interval>,
}

impl SweepRow {
    fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt9).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt9(self.swept_value),
            self.feasible,
            opt(self.sr),
            fmt9(self.threshold_t3),
            opt(self.p2.map(|iv| iv.lo())),
            opt(self.p2.map(|iv| iv.hi())),
            opt(self.pstar.map(|iv| iv.lo())),
            opt(self.pstar.map(|iv| iv.hi())),
        )
    }
}

fn sweep_row(
    file: &ScenarioFile,
    variant: Variant,
    value: f64,
    shared_pstar: Option<Option<Interval>>,
) -> Result<SweepRow, CliError> {
    match variant {
        Variant::Baseline => {
            let s = file.scenario()?;
            let u = baseline::utilities_t1(s.p1(), &s).map_err(CliError::from_game)?;
            let pstar = match shared_pstar {
                Some(r) => r,
                None => baseline::feasible_range_pstar(&s).map_err(CliError::from_game)?,
            };
            Ok(SweepRow {
                swept_value: value,
                feasible: u.alice_cont > u.alice_stop,
                sr: Some(baseline::conditional_success_rate(&s).map_err(CliError::from_game)?),
                threshold_t3: baseline::threshold_t3(&s),
                p2: baseline::feasible_range_t2(&s).map_err(CliError::from_game)?,
                pstar,
            })
        }
        Variant::Collateral => {
            let cs = file.collateral_scenario()?;
            let u = collateral::utilities_t1_collateral(cs.base.p1(), &cs)
                .map_err(CliError::from_game)?;
            let feasible =
                u.alice_cont > u.alice_stop && (cs.q() == 0.0 || u.bob_cont > u.bob_stop);
            let pstar = match shared_pstar {
                Some(r) => r,
                None => collateral::feasible_set_pstar_collateral(&cs)
                    .map_err(CliError::from_game)?
                    .hull(),
            };
            Ok(SweepRow {
                swept_value: value,
                feasible,
                sr: Some(
                    collateral::conditional_success_rate_collateral(&cs)
                        .map_err(CliError::from_game)?,
                ),
                threshold_t3: collateral::threshold_t3_collateral(&cs),
                p2: collateral::feasible_set_t2_collateral(&cs)
                    .map_err(CliError::from_game)?
                    .hull(),
                pstar,
            })
        }
        Variant::Flexible => {
            let s = file.scenario()?;
            let ps = s.p_star();
            let excess =
                flexible::alice_excess_utility_t1_flexible(ps, &s).map_err(CliError::from_game)?;
            Ok(SweepRow {
                swept_value: value,
                feasible: excess >= 0.0,
                sr: Some(flexible::success_rate_flexible(ps, &s).map_err(CliError::from_game)?),
                threshold_t3: baseline::threshold_t3(&s),
                p2: None,
                pstar: None,
            })
        }
    }
}

fn cmd_sweep(
    file: &ScenarioFile,
    variant: Variant,
    spec: &SweepSpec,
    out: &mut impl Write,
) -> Result<(), CliError> {
    // Validate the path eagerly so unknown paths fail before any work.
    {
        let mut probe = file.clone();
        probe.set_path(&spec.path, spec.values[0])?;
    }
    // The viable-rate window does not depend on the scenario's own rate, so
    // rate sweeps share one scan.
    let shared_pstar = if spec.path == "swap.p_star" {
        match variant {
            Variant::Baseline => Some(
                baseline::feasible_range_pstar(&file.scenario()?).map_err(CliError::from_game)?,
            ),
            Variant::Collateral => Some(
                collateral::feasible_set_pstar_collateral(&file.collateral_scenario()?)
                    .map_err(CliError::from_game)?
                    .hull(),
            ),
            Variant::Flexible => None,
        }
    } else {
        None
    };
    let rows = spec
        .values
        .par_iter()
        .map(|&v| {
            let mut varied = file.clone();
            varied.set_path(&spec.path, v)?;
            sweep_row(&varied, variant, v, shared_pstar)
        })
        .collect::<Result<Vec<_>, _>>()?;
    writeln!(out, "{CSV_HEADER}").unwrap();
    for row in rows {
        writeln!(out, "{}", row.to_csv()).unwrap();
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(
    file: &ScenarioFile,
    variant: Variant,
    n: Option<u64>,
    seed: Option<u64>,
    out: &mut impl Write,
) -> Result<u8, CliError> {
    let n = n.or(file.sim.map(|s| s.n)).unwrap_or(1_000_000);
    let seed = seed.or(file.sim.map(|s| s.seed)).unwrap_or(42);
    let cfg = SimConfig::new(n, seed).map_err(CliError::from_game)?;

    let s = file.scenario()?;
    let cs = file.collateral_scenario()?;
    let (label, quad, estimate) = match variant {
        Variant::Baseline => (
            "baseline",
            baseline::success_rate(&s).map_err(CliError::from_game)?,
            montecarlo::estimate_success_rate(VariantScenario::Baseline(&s), &cfg)
                .map_err(CliError::from_game)?,
        ),
        Variant::Collateral => (
            "collateral",
            collateral::success_rate_collateral(&cs).map_err(CliError::from_game)?,
            montecarlo::estimate_success_rate(VariantScenario::Collateral(&cs), &cfg)
                .map_err(CliError::from_game)?,
        ),
        Variant::Flexible => (
            "flexible",
            flexible::success_rate_flexible(s.p_star(), &s).map_err(CliError::from_game)?,
            montecarlo::estimate_success_rate(VariantScenario::Flexible(&s), &cfg)
                .map_err(CliError::from_game)?,
        ),
    };
    let z = if estimate.std_error > 0.0 {
        (estimate.mean - quad) / estimate.std_error
    } else if (estimate.mean - quad).abs() < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };
    writeln!(out, "variant: {label}").unwrap();
    writeln!(out, "n: {n}").unwrap();
    writeln!(out, "seed: {seed}").unwrap();
    writeln!(out, "sr_quadrature: {}", fmt9(quad)).unwrap();
    writeln!(out, "sr_monte_carlo: {}", fmt9(estimate.mean)).unwrap();
    writeln!(out, "std_error: {}", fmt9(estimate.std_error)).unwrap();
    writeln!(out, "z_score: {}", fmt9(z)).unwrap();
    if z.abs() > 4.0 {
        writeln!(out, "self_check: FAIL").unwrap();
        return Ok(EXIT_SELF_CHECK);
    }
    writeln!(out, "self_check: ok").unwrap();
    Ok(0)
}

// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<u8, CliError> {
    let load = |common: &CommonArgs| -> Result<ScenarioFile, CliError> {
        match &common.scenario {
            Some(path) => ScenarioFile::load(path),
            None => Ok(ScenarioFile::default()),
        }
    };
    match cli.command {
        Command::Solve { common } => {
            let file = load(&common)?;
            let mut stdout = std::io::stdout().lock();
            cmd_solve(&file, common.variant, &mut stdout)?;
            Ok(0)
        }
        Command::Sweep { common, sweep, out } => {
            let file = load(&common)?;
            let spec = parse_sweep(&sweep)?;
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    cmd_sweep(&file, common.variant, &spec, &mut buf)?;
                    fs::write(&path, buf).map_err(|e| {
                        CliError::input(format!("cannot write {}: {e}", path.display()))
                    })?;
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    cmd_sweep(&file, common.variant, &spec, &mut stdout)?;
                }
            }
            Ok(0)
        }
        Command::Simulate { common, n, seed } => {
            let file = load(&common)?;
            let mut stdout = std::io::stdout().lock();
            cmd_simulate(&file, common.variant, n, seed, &mut stdout)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(EXIT_INPUT);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

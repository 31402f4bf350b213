//! Command-line front end.
//!
//! Every command writes its report into the output directory (`--out-dir`,
//! or `DIQPQ_OUT_DIR`, default `.`) under a fixed file name, and echoes JSON
//! reports to stdout. Exit status: 0 success, 1 invalid configuration or I/O
//! failure, 2 protocol abort, 3 failed self-check.

pub mod angle;
pub mod output;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use crate::analytics::{
    all_cells, conditional_table, figure1_curve, strategy_success_probability, uniform_theta_grid,
    write_curve_csv, ProtocolAngles,
};
use crate::bits::Bits;
use crate::bounds::{chernoff_delta, BoundsParams, BoundsReport};
use crate::chsh::{run_local_test, test_set_size};
use crate::qpq::{run_full_protocol, run_keygen, AliceStrategy, KeyGenSummary, ProtocolConfig, ProtocolOutcome};
use crate::quantum::SourceModel;
use crate::rng::StreamKey;
use crate::verify::{run_verification, VerifyConfig};
use angle::{parse_angle, parse_pairs};
use output::{to_json, write_atomic, Report, Versioned, SCHEMA_VERSION};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_ABORTED: u8 = 2;
pub const EXIT_VERIFY_FAILED: u8 = 3;

pub const DEFAULT_PAIRS: &str = "pi/4:3pi/4,3pi/16:13pi/16,9pi/32:23pi/32";

#[derive(Debug, Parser)]
#[command(name = "diqpq", version, about = "Device-independent quantum private query simulator")]
pub struct Cli {
    /// Directory receiving report files.
    #[arg(long, global = true, env = "DIQPQ_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,

    /// Cap on worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Local CHSH test campaign.
    Chsh(ChshArgs),
    /// Key generation with an honest or biased Alice.
    Qpq(QpqArgs),
    /// Biased-basis attack sweep against skewed and balanced sources.
    Attack(AttackArgs),
    /// Full protocol: certification, key generation, dilution, one query.
    Protocol(ProtocolArgs),
    /// Win probability against θ for (ψ₁, ψ₂) pairs.
    Figure1(Figure1Args),
    /// The sixteen conditional probabilities of the CHSH test.
    Table1(Table1Args),
    /// Finite-sample deviations δ and ν.
    Bounds(BoundsArgs),
    /// Run the simulation-versus-closed-form self-check suite.
    Verify(VerifyArgs),
}

fn angle_arg(s: &str) -> Result<f64, String> {
    parse_angle(s)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AngleArgs {
    /// Source angle θ in [0, π/2].
    #[arg(long, value_parser = angle_arg, default_value = "pi/2")]
    pub theta: f64,
    /// First CHSH basis angle ψ₁ in [0, π].
    #[arg(long, value_parser = angle_arg, default_value = "pi/4")]
    pub psi1: f64,
    /// Second CHSH basis angle ψ₂ in [0, π].
    #[arg(long, value_parser = angle_arg, default_value = "3pi/4")]
    pub psi2: f64,
}

impl AngleArgs {
    fn angles(&self) -> crate::Result<ProtocolAngles> {
        ProtocolAngles::new(self.theta, self.psi1, self.psi2)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SourceArgs {
    /// Source skew ε: |α|² = 1/2 + ε.
    #[arg(long = "source-epsilon", default_value_t = 0.0, allow_negative_numbers = true)]
    pub source_epsilon: f64,
    /// θ actually emitted by the source, if different from --theta.
    #[arg(long, value_parser = angle_arg)]
    pub source_theta: Option<f64>,
}

impl SourceArgs {
    fn source(&self, theta: f64) -> crate::Result<SourceModel> {
        SourceModel::new(self.source_theta.unwrap_or(theta), self.source_epsilon)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChshArgs {
    #[command(flatten)]
    pub angles: AngleArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 1_000_000)]
    pub rounds: usize,
    #[arg(long)]
    pub seed: u64,
    /// Slack below the threshold tolerated before aborting.
    #[arg(long, conflicts_with = "eps_chsh")]
    pub slack: Option<f64>,
    /// Derive the slack as the Chernoff deviation at this failure probability.
    #[arg(long)]
    pub eps_chsh: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QpqArgs {
    /// Source angle θ in [0, π/2].
    #[arg(long, value_parser = angle_arg, default_value = "pi/2")]
    pub theta: f64,
    #[arg(long = "source-epsilon", default_value_t = 0.0, allow_negative_numbers = true)]
    pub source_epsilon: f64,
    /// Alice's basis bias: she uses {φ₁} with probability 1/2 + bias.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub bias: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub rounds: usize,
    /// Independent per-pair loss probability in transit.
    #[arg(long, default_value_t = 0.0)]
    pub loss: f64,
    /// Dilution factor.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    /// Include the raw and final key strings in the report.
    #[arg(long)]
    pub emit_keys: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AttackArgs {
    #[arg(long, value_parser = angle_arg, default_value = "pi/2")]
    pub theta: f64,
    /// Comma-separated bias values, used both as source skew and basis bias.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.25, 0.4], allow_negative_numbers = true)]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub rounds: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProtocolArgs {
    #[command(flatten)]
    pub angles: AngleArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub bias: f64,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 0.0)]
    pub loss: f64,
    /// CHSH failure probability defining the abort slack δ.
    #[arg(long, default_value_t = 1e-6)]
    pub eps_chsh: f64,
    /// Explicit abort slack, overriding --eps-chsh (0 = no slack).
    #[arg(long)]
    pub slack: Option<f64>,
    /// Database file of '0'/'1' characters; random if absent.
    #[arg(long)]
    pub database: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Figure1Args {
    /// Comma-separated psi1:psi2 pairs.
    #[arg(long, default_value = DEFAULT_PAIRS)]
    pub pairs: String,
    /// Number of uniform θ points on [0, π/2].
    #[arg(long, default_value_t = crate::analytics::DEFAULT_GRID_POINTS)]
    pub grid: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Table1Args {
    #[command(flatten)]
    pub angles: AngleArgs,
    /// Also estimate each entry from this many simulated rounds.
    #[arg(long, requires = "seed")]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub eps_chsh: f64,
    #[arg(long)]
    pub eps_qpq: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = VerifyConfig::default().rounds)]
    pub rounds: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = VerifyConfig::default().sigmas)]
    pub sigmas: f64,
}

/// Files written by a command and the exit status to report.
#[derive(Debug)]
pub struct Execution {
    pub files: Vec<PathBuf>,
    pub exit_code: u8,
    pub stdout: Option<String>,
}

impl Execution {
    fn ok(files: Vec<PathBuf>, stdout: Option<String>) -> Self {
        Execution { files, exit_code: EXIT_OK, stdout }
    }
}

fn write_json<P: Serialize, B: Serialize>(
    cli: &Cli,
    command: &str,
    parameters: P,
    body: B,
) -> Result<(PathBuf, String)> {
    let report = Report { schema_version: SCHEMA_VERSION, command, parameters, body };
    let bytes = to_json(&report)?;
    let path = write_atomic(&cli.out_dir, &format!("{command}.json"), &bytes)?;
    Ok((path, String::from_utf8(bytes)?))
}

pub fn execute(cli: &Cli) -> Result<Execution> {
    if let Some(threads) = cli.threads {
        anyhow::ensure!(threads >= 1, "--threads must be at least 1");
        // Ignore failure: the global pool may already exist when called twice in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match &cli.command {
        Command::Chsh(args) => chsh(cli, args),
        Command::Qpq(args) => qpq(cli, args),
        Command::Attack(args) => attack(cli, args),
        Command::Protocol(args) => protocol(cli, args),
        Command::Figure1(args) => figure1(cli, args),
        Command::Table1(args) => table1(cli, args),
        Command::Bounds(args) => bounds(cli, args),
        Command::Verify(args) => verify(cli, args),
    }
}

fn chsh(cli: &Cli, args: &ChshArgs) -> Result<Execution> {
    let angles = args.angles.angles()?;
    let source = args.source.source(args.angles.theta)?;
    anyhow::ensure!(args.rounds >= 1, "--rounds must be at least 1");
    let slack = match (args.slack, args.eps_chsh) {
        (Some(s), _) => s,
        // all rounds are test rounds: γn = rounds
        (None, Some(eps)) => chernoff_delta(&BoundsParams::new(0.5, 2 * args.rounds as u64, eps, 0.5)?),
        (None, None) => 0.0,
    };
    let result = run_local_test(args.rounds, &source, &angles, slack, &StreamKey::new(args.seed))?;
    let (path, text) = write_json(cli, "chsh", args, &result)?;
    Ok(Execution::ok(vec![path], Some(text)))
}

#[derive(Serialize)]
struct QpqBody {
    keygen: KeyGenSummary,
    expected_success_rate: f64,
    final_key_length: usize,
    alice_known_final_bits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_key: Option<Bits>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_key: Option<Bits>,
}

fn qpq(cli: &Cli, args: &QpqArgs) -> Result<Execution> {
    anyhow::ensure!(args.k >= 1, "--k must be at least 1");
    let source = SourceModel::new(args.theta, args.source_epsilon)?;
    let strategy = AliceStrategy::biased(args.bias)?;
    let result = run_keygen(args.rounds, args.loss, &source, &strategy, &StreamKey::new(args.seed))?;
    let diluted = if result.len() >= args.k {
        Some(result.dilute(args.k)?)
    } else {
        None
    };
    let body = QpqBody {
        keygen: result.summary(),
        expected_success_rate: strategy_success_probability(args.theta, args.source_epsilon, args.bias),
        final_key_length: diluted.as_ref().map_or(0, |d| d.len()),
        alice_known_final_bits: diluted.as_ref().map_or(0, |d| d.known_positions().len()),
        raw_key: args.emit_keys.then(|| result.bob_raw_key.clone()),
        final_key: if args.emit_keys { diluted.map(|d| d.bob_key) } else { None },
    };
    let (path, text) = write_json(cli, "qpq", args, &body)?;
    Ok(Execution::ok(vec![path], Some(text)))
}

fn attack(cli: &Cli, args: &AttackArgs) -> Result<Execution> {
    anyhow::ensure!(!args.epsilons.is_empty(), "--epsilons is empty");
    let root = StreamKey::new(args.seed);
    let honest = SourceModel::honest(args.theta)?;
    let mut csv = String::from(
        "epsilon,theta,rounds,skewed_source_rate,skewed_source_expected,honest_source_rate,honest_source_expected\n",
    );
    for (i, &eps) in args.epsilons.iter().enumerate() {
        let strategy = AliceStrategy::biased(eps)?;
        let skewed = SourceModel::new(args.theta, eps)?;
        let on_skewed = run_keygen(args.rounds, 0.0, &skewed, &strategy, &root.child(2 * i as u64))?;
        let on_honest = run_keygen(args.rounds, 0.0, &honest, &strategy, &root.child(2 * i as u64 + 1))?;
        csv.push_str(&format!(
            "{eps},{:.6},{},{:.6},{:.6},{:.6},{:.6}\n",
            args.theta,
            args.rounds,
            on_skewed.success_rate(),
            strategy_success_probability(args.theta, eps, eps),
            on_honest.success_rate(),
            strategy_success_probability(args.theta, 0.0, eps),
        ));
    }
    let path = write_atomic(&cli.out_dir, "attack.csv", csv.as_bytes())?;
    Ok(Execution::ok(vec![path], None))
}

fn protocol(cli: &Cli, args: &ProtocolArgs) -> Result<Execution> {
    let angles = args.angles.angles()?;
    let source = args.source.source(args.angles.theta)?;
    let strategy = AliceStrategy::biased(args.bias)?;
    anyhow::ensure!(args.n >= 2, "--n must be at least 2");
    anyhow::ensure!(args.k >= 1, "--k must be at least 1");
    let slack = match args.slack {
        Some(s) => s,
        None => chernoff_delta(&BoundsParams::new(args.gamma, args.n as u64, args.eps_chsh, 0.5)?),
    };
    let config = ProtocolConfig {
        n: args.n,
        gamma: args.gamma,
        source,
        angles,
        strategy,
        k: args.k,
        loss_probability: args.loss,
        slack_delta: slack,
    };
    let root = StreamKey::new(args.seed);
    let database = match &args.database {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Bits::parse_lines(&text)?
        }
        None => {
            let len = config.max_final_key_length()?;
            let len = if args.loss > 0.0 {
                // leave room for the expected loss, four standard deviations deep
                let kept = (args.n - test_set_size(args.n, args.gamma)) as f64;
                let mean = kept * (1.0 - args.loss);
                let sd = (kept * args.loss * (1.0 - args.loss)).sqrt();
                (((mean - 4.0 * sd).max(0.0)) as usize / args.k).max(1)
            } else {
                len
            };
            let mut rng = root.child(100).rng();
            (0..len).map(|_| rng.random_bool(0.5)).collect()
        }
    };
    let outcome = run_full_protocol(&config, &database, &root)?;
    let aborted = outcome.is_aborted();
    let (path, text) = write_json(cli, "protocol", args, ProtocolBody { slack_delta: slack, outcome })?;
    Ok(Execution {
        files: vec![path],
        exit_code: if aborted { EXIT_ABORTED } else { EXIT_OK },
        stdout: Some(text),
    })
}

#[derive(Serialize)]
struct ProtocolBody {
    slack_delta: f64,
    outcome: ProtocolOutcome,
}

fn figure1(cli: &Cli, args: &Figure1Args) -> Result<Execution> {
    let pairs = parse_pairs(&args.pairs).map_err(anyhow::Error::msg)?;
    anyhow::ensure!(!pairs.is_empty(), "--pairs is empty");
    let grid = uniform_theta_grid(args.grid);
    let mut files = Vec::new();
    let mut index = String::from("file,psi1,psi2\n");
    for (i, &(psi1, psi2)) in pairs.iter().enumerate() {
        let curve = figure1_curve(psi1, psi2, &grid)?;
        let mut buf = Vec::new();
        write_curve_csv(&curve, &mut buf)?;
        let name = format!("figure1_{i}.csv");
        files.push(write_atomic(&cli.out_dir, &name, &buf)?);
        index.push_str(&format!("{name},{psi1:.12},{psi2:.12}\n"));
    }
    files.push(write_atomic(&cli.out_dir, "figure1_index.csv", index.as_bytes())?);
    Ok(Execution::ok(files, None))
}

fn table1(cli: &Cli, args: &Table1Args) -> Result<Execution> {
    let angles = args.angles.angles()?;
    let table = conditional_table(&angles);
    let mut buf = Vec::new();
    match (args.rounds, args.seed) {
        (Some(rounds), Some(seed)) => {
            anyhow::ensure!(rounds >= 1, "--rounds must be at least 1");
            let source = SourceModel::honest(angles.theta())?;
            let r = run_local_test(rounds, &source, &angles, 0.0, &StreamKey::new(seed))?;
            buf.extend_from_slice(b"x,y,a,b,probability,empirical,sigma\n");
            for (x, y, a, b) in all_cells() {
                let p = table.get(x, y, a, b);
                let m = r.input_count(x, y) as f64;
                buf.extend_from_slice(
                    format!(
                        "{},{},{},{},{:.12},{:.12},{:.12}\n",
                        x as u8,
                        y as u8,
                        a as u8,
                        b as u8,
                        p,
                        r.conditional_frequency(x, y, a, b).unwrap_or(f64::NAN),
                        (p * (1.0 - p) / m).sqrt()
                    )
                    .as_bytes(),
                );
            }
        }
        _ => table.write_csv(&mut buf)?,
    }
    let path = write_atomic(&cli.out_dir, "table1.csv", &buf)?;
    Ok(Execution::ok(vec![path], None))
}

fn bounds(cli: &Cli, args: &BoundsArgs) -> Result<Execution> {
    let params = BoundsParams::new(args.gamma, args.n, args.eps_chsh, args.eps_qpq)?;
    // the report carries its own parameters
    let bytes = to_json(&Versioned { schema_version: SCHEMA_VERSION, body: BoundsReport::new(&params) })?;
    let path = write_atomic(&cli.out_dir, "bounds.json", &bytes)?;
    Ok(Execution::ok(vec![path], Some(String::from_utf8(bytes)?)))
}

fn verify(cli: &Cli, args: &VerifyArgs) -> Result<Execution> {
    anyhow::ensure!(args.rounds >= 1, "--rounds must be at least 1");
    anyhow::ensure!(args.sigmas > 0.0, "--sigmas must be positive");
    let report = run_verification(&VerifyConfig { rounds: args.rounds, seed: args.seed, sigmas: args.sigmas })?;
    let passed = report.passed;
    let (path, text) = write_json(cli, "verify", args, &report)?;
    Ok(Execution {
        files: vec![path],
        exit_code: if passed { EXIT_OK } else { EXIT_VERIFY_FAILED },
        stdout: Some(text),
    })
}

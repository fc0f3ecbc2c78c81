//! Batch front-end: constructs character families, runs the certificate and
//! sweep machinery, and emits versioned JSON/CSV reports.
//!
//! Exit status: 0 when the requested verdict holds (a degenerate certificate
//! counts as holding), 1 on a verified counterexample (e.g. an independence
//! failure with a witness), 2 on a configuration or capacity error. Nothing
//! is written on status 2.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cubelab::designs::{
    bch_family, greedy_family, random_family, rademacher_family, verify_independence,
    CharacterFamily, FieldSpec, IndependenceCheck,
};
use cubelab::hypercube::{character, CoordinateSet};
use cubelab::lambda::{lambda_constant, SignSearchMode, EXACT_SIGN_THRESHOLD};
use cubelab::lemma::{optimality_instance, verify_lemma};
use cubelab::operators::L1Operator;
use cubelab::separation::{coverage_experiment, Strategy};

const SCHEMA_VERSION: &str = "1.0";
const SEED_ENV: &str = "CUBELAB_SEED";
const DEFAULT_MAX_BITS: usize = 24;
const HEURISTIC_RESTARTS: usize = 64;

#[derive(Parser)]
#[command(name = "cubelab", about = "Hypercube character systems and L1 operator laboratory")]
struct Cli {
    /// Key=value config file; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed (overrides the CUBELAB_SEED environment variable).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap; defaults to all available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Report destination; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Cap on exact sign enumeration.
    #[arg(long = "exact-threshold", global = true)]
    exact_threshold: Option<usize>,
    /// Cap on joint cube bits.
    #[arg(long = "max-bits", global = true)]
    max_bits: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a character family and optionally certify its independence.
    Construct(ConstructArgs),
    /// Measure the L_q/L_2 equivalence constant of a family.
    Lambda(LambdaArgs),
    /// Certificates for the lower-bound lemma and its optimality.
    Lemma {
        #[command(subcommand)]
        sub: LemmaCmd,
    },
    /// Coverage-operator sweep with distances, survivors, and exponent fit.
    Separate(SeparateArgs),
}

#[derive(Args)]
struct ConstructArgs {
    /// BCH family from GF(2^m): pass `m=<m> k=<k>`.
    #[arg(long, num_args = 1..=2, value_name = "KEY=VAL")]
    bch: Option<Vec<String>>,
    /// Rademacher (singleton) family: pass `n=<n>`.
    #[arg(long, num_args = 1, value_name = "KEY=VAL")]
    rademacher: Option<Vec<String>>,
    /// Seeded random family: pass `n=<n> count=<N>`.
    #[arg(long, num_args = 1..=2, value_name = "KEY=VAL")]
    random: Option<Vec<String>>,
    /// Greedy lexicographic family: pass `n=<n> count=<N> t=<t>`.
    #[arg(long, num_args = 1..=3, value_name = "KEY=VAL")]
    greedy: Option<Vec<String>>,
    /// Certify independence at this order; failure exits with status 1.
    #[arg(long)]
    verify: Option<usize>,
}

#[derive(Args)]
struct LambdaArgs {
    /// Family file (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    q: f64,
    /// Random coefficient draws beyond the deterministic probes.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Subcommand)]
enum LemmaCmd {
    /// Evaluate the full inequality chain for an operator and a family.
    Verify(LemmaVerifyArgs),
    /// Synthesize the matched-exponent instance and report the ratio.
    Optimality(OptimalityArgs),
}

#[derive(Args)]
struct LemmaVerifyArgs {
    /// Operator file then family file (JSON).
    #[arg(long, num_args = 2, value_name = "FILE")]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    q: f64,
}

#[derive(Args)]
struct OptimalityArgs {
    #[arg(long)]
    q: u32,
    #[arg(long = "N")]
    n_vectors: usize,
    #[arg(long)]
    p: f64,
}

#[derive(Args)]
struct SeparateArgs {
    #[arg(long)]
    p: u32,
    #[arg(long)]
    q: u32,
    /// Block sizes, comma separated (e.g. 8,12,16).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// orthogonal_map or random (random uses the run seed).
    #[arg(long, default_value = "orthogonal_map")]
    strategy: String,
}

struct CliError(String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn parse_kv(pairs: &[String]) -> CliResult<HashMap<String, String>> {
    let mut map = HashMap::new();
    for p in pairs {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError(format!("expected key=value, got '{p}'")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn kv_usize(map: &HashMap<String, String>, key: &str) -> CliResult<usize> {
    map.get(key)
        .ok_or_else(|| CliError(format!("missing parameter '{key}'")))?
        .parse()
        .map_err(|e| CliError(format!("parameter '{key}': {e}")))
}

fn read_config(path: &PathBuf) -> CliResult<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError(format!("{}:{}: expected key=value", path.display(), lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

struct Globals {
    seed: u64,
    out: Option<PathBuf>,
    format: Format,
    exact_threshold: usize,
    max_bits: usize,
}

fn run(cli: Cli) -> CliResult<u8> {
    let config = match &cli.config {
        Some(path) => read_config(path)?,
        None => HashMap::new(),
    };
    let cfg_parse = |key: &str| -> CliResult<Option<u64>> {
        match config.get(key) {
            Some(v) => Ok(Some(
                v.parse::<u64>()
                    .map_err(|e| CliError(format!("config '{key}': {e}")))?,
            )),
            None => Ok(None),
        }
    };
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.parse::<u64>()
                .map_err(|e| CliError(format!("{SEED_ENV}: {e}")))?,
        ),
        Err(_) => None,
    };
    let seed = cli.seed.or(cfg_parse("seed")?).or(env_seed).unwrap_or(0);
    let workers = cli
        .workers
        .or(cfg_parse("workers")?.map(|v| v as usize));
    let out = cli
        .out
        .clone()
        .or_else(|| config.get("out").map(PathBuf::from));
    let format = match cli.format {
        Some(f) => f,
        None => match config.get("format").map(String::as_str) {
            Some("json") | None => Format::Json,
            Some("csv") => Format::Csv,
            Some(other) => return Err(CliError(format!("config 'format': unknown '{other}'"))),
        },
    };
    let exact_threshold = cli
        .exact_threshold
        .or(cfg_parse("exact_threshold")?.map(|v| v as usize))
        .unwrap_or(EXACT_SIGN_THRESHOLD);
    let max_bits = cli
        .max_bits
        .or(cfg_parse("max_bits")?.map(|v| v as usize))
        .unwrap_or(DEFAULT_MAX_BITS);
    if max_bits > DEFAULT_MAX_BITS {
        return Err(CliError(format!("max_bits {max_bits} exceeds the {DEFAULT_MAX_BITS}-bit cap")));
    }
    #[cfg(feature = "parallel")]
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError("workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;

    let globals = Globals { seed, out, format, exact_threshold, max_bits };
    let command = match cli.command {
        Some(c) => c,
        None => command_from_config(&config)?,
    };
    match command {
        Command::Construct(args) => cmd_construct(&globals, &args),
        Command::Lambda(args) => cmd_lambda(&globals, &args),
        Command::Lemma { sub: LemmaCmd::Verify(args) } => cmd_lemma_verify(&globals, &args),
        Command::Lemma { sub: LemmaCmd::Optimality(args) } => cmd_optimality(&globals, &args),
        Command::Separate(args) => cmd_separate(&globals, &args),
    }
}

// a config file can carry the whole run: command=... plus the per-command keys
fn command_from_config(config: &HashMap<String, String>) -> CliResult<Command> {
    let get = |k: &str| config.get(k).cloned();
    let kv_list = |keys: &[&str]| -> Vec<String> {
        keys.iter()
            .filter_map(|&k| get(k).map(|v| format!("{k}={v}")))
            .collect()
    };
    match get("command").as_deref() {
        Some("construct") => {
            let family = get("family").unwrap_or_default();
            let mut args = ConstructArgs {
                bch: None,
                rademacher: None,
                random: None,
                greedy: None,
                verify: match get("verify") {
                    Some(v) => Some(v.parse().map_err(|e| CliError(format!("config 'verify': {e}")))?),
                    None => None,
                },
            };
            match family.as_str() {
                "bch" => args.bch = Some(kv_list(&["m", "k"])),
                "rademacher" => args.rademacher = Some(kv_list(&["n"])),
                "random" => args.random = Some(kv_list(&["n", "count"])),
                "greedy" => args.greedy = Some(kv_list(&["n", "count", "t"])),
                other => return Err(CliError(format!("config 'family': unknown '{other}'"))),
            }
            Ok(Command::Construct(args))
        }
        Some("lambda") => Ok(Command::Lambda(LambdaArgs {
            input: PathBuf::from(
                get("input").ok_or_else(|| CliError("config: missing 'input'".into()))?,
            ),
            q: get("q")
                .ok_or_else(|| CliError("config: missing 'q'".into()))?
                .parse()
                .map_err(|e| CliError(format!("config 'q': {e}")))?,
            samples: match get("samples") {
                Some(v) => v.parse().map_err(|e| CliError(format!("config 'samples': {e}")))?,
                None => 200,
            },
        })),
        Some("lemma") | Some("lemma_verify") => Ok(Command::Lemma {
            sub: LemmaCmd::Verify(LemmaVerifyArgs {
                input: vec![
                    PathBuf::from(
                        get("operator")
                            .ok_or_else(|| CliError("config: missing 'operator'".into()))?,
                    ),
                    PathBuf::from(
                        get("family").ok_or_else(|| CliError("config: missing 'family'".into()))?,
                    ),
                ],
                q: match get("q") {
                    Some(v) => v.parse().map_err(|e| CliError(format!("config 'q': {e}")))?,
                    None => 4.0,
                },
            }),
        }),
        Some("optimality") => Ok(Command::Lemma {
            sub: LemmaCmd::Optimality(OptimalityArgs {
                q: get("q")
                    .ok_or_else(|| CliError("config: missing 'q'".into()))?
                    .parse()
                    .map_err(|e| CliError(format!("config 'q': {e}")))?,
                n_vectors: get("N")
                    .ok_or_else(|| CliError("config: missing 'N'".into()))?
                    .parse()
                    .map_err(|e| CliError(format!("config 'N': {e}")))?,
                p: get("p")
                    .ok_or_else(|| CliError("config: missing 'p'".into()))?
                    .parse()
                    .map_err(|e| CliError(format!("config 'p': {e}")))?,
            }),
        }),
        Some("separate") => Ok(Command::Separate(SeparateArgs {
            p: get("p")
                .ok_or_else(|| CliError("config: missing 'p'".into()))?
                .parse()
                .map_err(|e| CliError(format!("config 'p': {e}")))?,
            q: get("q")
                .ok_or_else(|| CliError("config: missing 'q'".into()))?
                .parse()
                .map_err(|e| CliError(format!("config 'q': {e}")))?,
            n: get("n")
                .ok_or_else(|| CliError("config: missing 'n'".into()))?
                .split(',')
                .map(|v| v.trim().parse().map_err(|e| CliError(format!("config 'n': {e}"))))
                .collect::<CliResult<Vec<usize>>>()?,
            epsilon: match get("epsilon") {
                Some(v) => v.parse().map_err(|e| CliError(format!("config 'epsilon': {e}")))?,
                None => 0.1,
            },
            strategy: get("strategy").unwrap_or_else(|| "orthogonal_map".into()),
        })),
        Some(other) => Err(CliError(format!("config 'command': unknown '{other}'"))),
        None => Err(CliError("no subcommand given and no 'command' in config".into())),
    }
}

fn emit(globals: &Globals, text: &str) -> CliResult<()> {
    match &globals.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(globals: &Globals, command: &str, report: serde_json::Value) -> CliResult<()> {
    if globals.format == Format::Csv {
        return Err(CliError(format!("command '{command}' has no CSV form; use --format json")));
    }
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "report": report,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(globals, &text)
}

fn cmd_construct(globals: &Globals, args: &ConstructArgs) -> CliResult<u8> {
    let picked = [
        args.bch.is_some(),
        args.rademacher.is_some(),
        args.random.is_some(),
        args.greedy.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if picked != 1 {
        return Err(CliError(
            "pick exactly one of --bch, --rademacher, --random, --greedy".into(),
        ));
    }
    let family: CharacterFamily = if let Some(spec) = &args.bch {
        let kv = parse_kv(spec)?;
        let m = kv_usize(&kv, "m")?;
        let k = kv_usize(&kv, "k")?;
        if m.saturating_mul(k) > globals.max_bits {
            return Err(CliError(format!("k*m = {} exceeds max_bits {}", m * k, globals.max_bits)));
        }
        bch_family(&FieldSpec::default_for(m)?, k)?
    } else if let Some(spec) = &args.rademacher {
        let kv = parse_kv(spec)?;
        rademacher_family(kv_usize(&kv, "n")?)?
    } else if let Some(spec) = &args.random {
        let kv = parse_kv(spec)?;
        random_family(kv_usize(&kv, "n")?, kv_usize(&kv, "count")?, globals.seed)?
    } else {
        let spec = args.greedy.as_ref().unwrap();
        let kv = parse_kv(spec)?;
        greedy_family(kv_usize(&kv, "n")?, kv_usize(&kv, "count")?, kv_usize(&kv, "t")?)?
    };
    let (check, status) = match args.verify {
        Some(t) => match verify_independence(&family, t)? {
            IndependenceCheck::Pass => (Some(IndependenceCheck::Pass), 0u8),
            fail => (Some(fail), 1u8),
        },
        None => (None, 0u8),
    };
    emit_json(
        globals,
        "construct",
        serde_json::json!({
            "family": family,
            "independence": check,
        }),
    )?;
    Ok(status)
}

/// Reads a JSON value from a bare file or from a wrapped report document
/// (descending into "report" and then an optional inner key).
fn load_json<T: serde::de::DeserializeOwned>(path: &PathBuf, inner: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    if let Some(report) = value.get_mut("report") {
        let mut report = report.take();
        value = match report.get_mut(inner) {
            Some(v) => v.take(),
            None => report,
        };
    }
    serde_json::from_value(value).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

fn cmd_lambda(globals: &Globals, args: &LambdaArgs) -> CliResult<u8> {
    let family: CharacterFamily = load_json(&args.input, "family")?;
    let report = lambda_constant(&family, args.q, args.samples, globals.seed)?;
    emit_json(globals, "lambda", serde_json::to_value(&report)?)?;
    Ok(0)
}

fn cmd_lemma_verify(globals: &Globals, args: &LemmaVerifyArgs) -> CliResult<u8> {
    let operator: L1Operator = load_json(&args.input[0], "operator")?;
    let family: CharacterFamily = load_json(&args.input[1], "family")?;
    let vectors: Vec<_> = family
        .masks()
        .iter()
        .map(|&m| character(family.n(), CoordinateSet(m)))
        .collect::<Result<_, _>>()?;
    let mode = if family.len() <= globals.exact_threshold {
        SignSearchMode::Exact
    } else {
        SignSearchMode::Heuristic { seed: globals.seed, restarts: HEURISTIC_RESTARTS }
    };
    let cert = verify_lemma(&operator, &vectors, args.q, mode)?;
    emit_json(globals, "lemma verify", serde_json::to_value(&cert)?)?;
    Ok(0)
}

fn cmd_optimality(globals: &Globals, args: &OptimalityArgs) -> CliResult<u8> {
    let report = optimality_instance(args.q, args.n_vectors, args.p)?;
    emit_json(globals, "lemma optimality", serde_json::to_value(&report)?)?;
    Ok(0)
}

fn cmd_separate(globals: &Globals, args: &SeparateArgs) -> CliResult<u8> {
    for &n in &args.n {
        if n > globals.max_bits {
            return Err(CliError(format!("block size {n} exceeds max_bits {}", globals.max_bits)));
        }
    }
    let strategy = match args.strategy.as_str() {
        "orthogonal_map" => Strategy::OrthogonalMap,
        "random" => Strategy::Random { seed: globals.seed },
        other => return Err(CliError(format!("unknown strategy '{other}'"))),
    };
    let report = coverage_experiment(args.p, args.q, &args.n, args.epsilon, strategy)?;
    match globals.format {
        Format::Json => emit_json(globals, "separate", serde_json::to_value(&report)?)?,
        Format::Csv => {
            let mut text = format!("# cubelab-report schema_version={SCHEMA_VERSION}\n");
            text.push_str(&report.to_csv());
            emit(globals, &text)?;
        }
    }
    Ok(0)
}

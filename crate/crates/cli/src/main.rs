use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use ppid::bench::{self, BenchOptions};
use ppid::config::{Config, FileConfig};
use ppid::exit;
use ppid_core::corpus;
use ppid_core::encoding::{parse_record_line, Field, Fingercode, QuantizationConfig, UserId};
use ppid_core::he::bfv::BfvBackend;
use ppid_core::he::{Decryptor, Evaluator};
use ppid_core::protocol::net::{self, enroll, run_query};
use ppid_core::protocol::{
    CapabilityRegistry, CsParty, KeyDir, Role, SpParty, StoredRecord, TpsParty, TpsStore, Verdict,
};
use ppid_core::queries::{PlainQuery, QueryKind, Status};
use ppid_core::setup::generate_feasible;

#[derive(Parser)]
#[command(name = "ppid", version, about = "Privacy-preserving identity verification over encrypted records")]
struct Cli {
    /// Configuration file (also read from PPID_CONFIG).
    #[arg(long, global = true, env = "PPID_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override the configuration file.
#[derive(Args)]
struct Overrides {
    /// Security level in bits: 128, 192 or 256.
    #[arg(long, global = true)]
    security: Option<u16>,
    /// Biometric threshold on the squared distance.
    #[arg(long, global = true)]
    beta: Option<u64>,
    #[arg(long, global = true)]
    tps_address: Option<String>,
    #[arg(long, global = true)]
    cs_address: Option<String>,
    #[arg(long, global = true)]
    store_path: Option<PathBuf>,
    #[arg(long, global = true)]
    key_dir: Option<PathBuf>,
    /// Central server copy of every enrollment (off unless set).
    #[arg(long, global = true)]
    backup_path: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate keys into the key directory (central server).
    Keygen {
        /// Deterministic key generation, for tests only.
        #[arg(long)]
        insecure_seed: Option<u64>,
    },
    /// Write random enrollment records as JSON lines.
    GenRecords {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encrypt records and send them to the third-party server (central server).
    Enroll {
        /// JSON lines, one record each.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the third-party server.
    ServeTps,
    /// Run the central server.
    ServeCs,
    /// Ask one question as a service provider. Exits 0 on PASS, 1 on FAIL, 2 on error.
    Query {
        #[arg(long)]
        user_id: UserId,
        /// name, gender, pincode, phone, email, dob-after or biometric.
        #[arg(long)]
        kind: QueryKind,
        /// Field value, or the date for dob-after (YYYY-MM-DD).
        #[arg(long)]
        value: Option<String>,
        /// dob-after: require the date to be at least this many years after the birth date.
        #[arg(long, default_value_t = 0)]
        years: u32,
        /// biometric: JSON array of 640 raw values in [0, 255].
        #[arg(long)]
        fingercode: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
    },
    /// Time every query kind in process, single-threaded.
    Bench {
        #[arg(long, default_value_t = bench::MIN_ITERATIONS)]
        iterations: usize,
        /// Also write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the capability registry a role starts with, as JSON.
    Capabilities {
        #[arg(long)]
        role: RoleArg,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RoleArg {
    Cs,
    Tps,
    Sp,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Cs => Role::Cs,
            RoleArg::Tps => Role::Tps,
            RoleArg::Sp => Role::Sp,
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let file = match &cli.config {
        Some(path) => FileConfig::read(path)?,
        None => FileConfig::default(),
    };
    let o = &cli.overrides;
    let flags = FileConfig {
        security: o.security,
        beta: o.beta,
        tps_address: o.tps_address.clone(),
        cs_address: o.cs_address.clone(),
        store_path: o.store_path.clone(),
        key_dir: o.key_dir.clone(),
        backup_path: o.backup_path.clone(),
    };
    Ok(Config::resolve(file.overlay(flags))?)
}

/// Announces the role's capabilities on stdout before doing anything else.
fn startup(role: Role) -> CapabilityRegistry {
    let reg = CapabilityRegistry::for_role(role);
    println!("capabilities {}", serde_json::to_string(&reg).expect("serializable"));
    let _ = std::io::stdout().flush();
    reg
}

fn cmd_keygen(cfg: &Config, seed: Option<u64>) -> Result<()> {
    let reg = startup(Role::Cs);
    let dir = KeyDir::new(&cfg.key_dir);
    let setup = match seed {
        Some(s) => {
            log::warn!("deterministic key generation from a fixed seed; never use these keys");
            generate_feasible(cfg.security, &cfg.query, &mut ChaCha20Rng::seed_from_u64(s))?
        }
        None => generate_feasible(cfg.security, &cfg.query, &mut rand::rng())?,
    };
    dir.write(&reg, &setup.keys, &setup.info)?;
    if let Some(reason) = &setup.info.fallback_reason {
        println!("fallback: {reason}");
    }
    println!(
        "wrote {} keys to {} (date-query noise margin {} bits)",
        setup.info.security,
        cfg.key_dir.display(),
        setup.margin_bits
    );
    Ok(())
}

fn cmd_gen_records(count: usize, seed: u64, out: &PathBuf, cfg: &Config) -> Result<()> {
    let quant = QuantizationConfig::new(ppid_core::he::PLAIN_MODULUS, cfg.query.beta());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..count {
        let r = corpus::random_record(&mut rng, &quant);
        text += &serde_json::to_string(&corpus::record_json(&r, &quant))?;
        text.push('\n');
    }
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn quantization(cfg: &Config) -> QuantizationConfig {
    QuantizationConfig::new(ppid_core::he::PLAIN_MODULUS, cfg.query.beta())
}

fn cmd_enroll(cfg: &Config, input: &PathBuf) -> Result<()> {
    let reg = startup(Role::Cs);
    let keys = KeyDir::new(&cfg.key_dir);
    let cs = CsParty::new(
        Evaluator::new(BfvBackend::new(keys.public_keys(&reg)?)),
        Decryptor::new(keys.secret_key(&reg)?),
        cfg.query,
    );
    let backup = cfg.backup_path.as_ref().map(TpsStore::open).transpose()?;
    let quant = quantization(cfg);
    let file = fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let mut enrolled = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record_line(&line, &quant).with_context(|| format!("{}:{}", input.display(), n + 1))?;
        let frame = cs.enroll_frame(&record)?;
        enroll(&cfg.tps_address, &frame, Duration::from_secs(60))
            .with_context(|| format!("enrolling {} at {}", record.user_id, cfg.tps_address))?;
        if let Some(store) = &backup {
            store.put(
                &record.user_id,
                &StoredRecord {
                    demo: frame.payloads[0].clone(),
                    bio: frame.payloads[1].clone(),
                },
            )?;
        }
        enrolled += 1;
    }
    println!("enrolled {enrolled} records");
    Ok(())
}

fn resolve_addr(addr: &str) -> Result<std::net::SocketAddr> {
    addr.to_socket_addrs()?
        .next()
        .with_context(|| format!("{addr} does not resolve"))
}

fn cmd_serve_tps(cfg: &Config) -> Result<()> {
    let reg = startup(Role::Tps);
    let keys = KeyDir::new(&cfg.key_dir);
    let ev = Evaluator::new(BfvBackend::new(keys.evaluation_keys(&reg)?));
    let store = TpsStore::open(&cfg.store_path)?;
    let tps = Arc::new(TpsParty::new(ev, store, cfg.query));
    let listener = TcpListener::bind(&cfg.tps_address).with_context(|| format!("binding {}", cfg.tps_address))?;
    let handle = net::spawn_tps(listener, tps, resolve_addr(&cfg.cs_address)?)?;
    println!("listening {}", handle.addr());
    let _ = std::io::stdout().flush();
    handle.join();
    Ok(())
}

fn cmd_serve_cs(cfg: &Config) -> Result<()> {
    let reg = startup(Role::Cs);
    let keys = KeyDir::new(&cfg.key_dir);
    let cs = Arc::new(CsParty::new(
        Evaluator::new(BfvBackend::new(keys.public_keys(&reg)?)),
        Decryptor::new(keys.secret_key(&reg)?),
        cfg.query,
    ));
    let listener = TcpListener::bind(&cfg.cs_address).with_context(|| format!("binding {}", cfg.cs_address))?;
    let handle = net::spawn_cs(listener, cs)?;
    println!("listening {}", handle.addr());
    let _ = std::io::stdout().flush();
    handle.join();
    Ok(())
}

fn plain_query(
    kind: QueryKind,
    value: Option<String>,
    years: u32,
    fingercode: Option<PathBuf>,
    quant: &QuantizationConfig,
) -> Result<PlainQuery> {
    Ok(match kind {
        QueryKind::BiometricMatch => {
            let path = fingercode.context("biometric queries need --fingercode")?;
            let raw: Vec<f64> = serde_json::from_slice(&fs::read(&path)?)
                .with_context(|| format!("{} is not a JSON array of numbers", path.display()))?;
            PlainQuery::Biometric(Fingercode::quantize(&raw, quant)?)
        }
        QueryKind::DobAfter => {
            let text = value.context("dob-after needs --value YYYY-MM-DD")?;
            let date = NaiveDate::parse_from_str(&text, "%Y-%m-%d").with_context(|| format!("bad date {text:?}"))?;
            if years == 0 {
                PlainQuery::DobAfter(date)
            } else {
                PlainQuery::DobAfterOffset(date, years)
            }
        }
        _ => {
            let field: Field = kind.field().expect("field kind");
            PlainQuery::Field(field, value.with_context(|| format!("{kind} needs --value"))?)
        }
    })
}

fn cmd_query(cfg: &Config, args: QueryArgs) -> Result<Verdict> {
    let reg = startup(Role::Sp);
    let keys = KeyDir::new(&cfg.key_dir);
    let sp = SpParty::new(Evaluator::new(BfvBackend::new(keys.public_keys(&reg)?)));
    let query = plain_query(args.kind, args.value, args.years, args.fingercode, &quantization(cfg))?;
    let query_id: u64 = rand::rng().random();
    let frame = sp.query_frame(query_id, args.user_id, &query)?;
    let verdict = run_query(
        &cfg.cs_address,
        &cfg.tps_address,
        &frame,
        Duration::from_secs(args.timeout_secs),
    )?;
    Ok(verdict)
}

struct QueryArgs {
    user_id: UserId,
    kind: QueryKind,
    value: Option<String>,
    years: u32,
    fingercode: Option<PathBuf>,
    timeout_secs: u64,
}

fn cmd_bench(cfg: &Config, iterations: usize, json: Option<PathBuf>, seed: u64) -> Result<()> {
    let report = bench::run(&BenchOptions {
        iterations,
        security: cfg.security,
        query: cfg.query,
        seed,
    })?;
    print!("{}", report.to_text());
    if let Some(path) = json {
        fs::write(&path, serde_json::to_vec_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    if !report.verdicts_correct {
        bail!("benchmark verdicts disagree with the plaintext oracle");
    }
    Ok(())
}

enum Outcome {
    Done,
    Verdict(Verdict),
}

fn dispatch(cfg: &Config, command: Command) -> Result<Outcome> {
    match command {
        Command::Keygen { insecure_seed } => cmd_keygen(cfg, insecure_seed)?,
        Command::GenRecords { count, seed, out } => cmd_gen_records(count, seed, &out, cfg)?,
        Command::Enroll { input } => cmd_enroll(cfg, &input)?,
        Command::ServeTps => cmd_serve_tps(cfg)?,
        Command::ServeCs => cmd_serve_cs(cfg)?,
        Command::Bench { iterations, json, seed } => cmd_bench(cfg, iterations, json, seed)?,
        Command::Capabilities { role } => {
            let reg = CapabilityRegistry::for_role(role.into());
            println!("{}", serde_json::to_string_pretty(&reg)?);
        }
        Command::Query { user_id, kind, value, years, fingercode, timeout_secs } => {
            let args = QueryArgs { user_id, kind, value, years, fingercode, timeout_secs };
            return Ok(Outcome::Verdict(cmd_query(cfg, args)?));
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let is_query = matches!(cli.command, Command::Query { .. });
    let result = load_config(&cli).and_then(|cfg| dispatch(&cfg, cli.command));
    let code = match result {
        Ok(Outcome::Done) => exit::OK,
        Ok(Outcome::Verdict(v)) => {
            println!("{} {} {} {}", v.status, v.kind, v.user_id, v.reason.as_str());
            if v.status == Status::Pass {
                exit::OK
            } else {
                exit::FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_query {
                exit::ERROR
            } else {
                ppid::exit_code(&e)
            }
        }
    };
    ExitCode::from(code as u8)
}

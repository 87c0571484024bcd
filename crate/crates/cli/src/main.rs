//! `fedpop`: run setup, a training round, proofs of participation, and the
//! benchmark grid from the command line.
//!
//! Exit codes: 0 accept/success, 10 reject, 2 usage or parse error, 3 round failure.

mod store;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fedpop_core::bench::{run_grid, write_csv, GridConfig};
use fedpop_core::protocol::{
    generate_phase, prove_phase, setup_phase, Blinding, ClientKeyMaterial, ClientParty, FlServer, GlobalToken,
    ProofBundle, ServerKeyMaterial, ServiceProvider, SetupConfig,
};
use fedpop_core::sim::{sample_dropout, Transport};
use fedpop_core::trainer::{Trainer, TrainerSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use store::{client_file, ensure_absent, read_json, round_dir, write_json, ModelFile, StoreConfig};

const EXIT_REJECT: u8 = 10;
const EXIT_USAGE: u8 = 2;
const EXIT_ROUND_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "fedpop", version, about = "Federated learning with proofs of participation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deal keys for one round and write a key store.
    Setup {
        #[arg(long)]
        n: u32,
        /// Tolerated dropouts; the signing threshold is n - ndrop.
        #[arg(long)]
        ndrop: u32,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        round: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one training round over a key store.
    Generate {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        dropout_rate: f64,
        #[arg(long, value_enum, default_value_t = TrainerArg::Synthetic)]
        trainer: TrainerArg,
        /// Derive K from the signers' verifying shares.
        #[arg(long)]
        alt_witness: bool,
        /// Must match the round the store was dealt for.
        #[arg(long)]
        round: Option<u64>,
    },
    /// Prove participation to an in-process service provider.
    Prove {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        token: PathBuf,
        /// Revealed model; defaults to model.json next to the token.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        blind_seed: Option<u64>,
    },
    /// Time the scenario grid and write CSV.
    Bench {
        #[arg(long)]
        grid_file: Option<PathBuf>,
        #[arg(long)]
        reps: Option<u32>,
        /// Output path; stdout if omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainerArg {
    Synthetic,
    Linear,
}

enum Outcome {
    Success,
    Reject,
    RoundFailure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Setup {
            n,
            ndrop,
            dim,
            seed,
            round,
            out,
        } => setup(n, ndrop, dim, seed, round, &out),
        Command::Generate {
            store,
            dropout_rate,
            trainer,
            alt_witness,
            round,
        } => generate(&store, dropout_rate, trainer, alt_witness, round),
        Command::Prove {
            bundle,
            token,
            model,
            blind_seed,
        } => prove(&bundle, &token, model.as_deref(), blind_seed),
        Command::Bench { grid_file, reps, csv } => bench(grid_file.as_deref(), reps, csv.as_deref()),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Reject) => ExitCode::from(EXIT_REJECT),
        Ok(Outcome::RoundFailure) => ExitCode::from(EXIT_ROUND_FAILURE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn setup(n: u32, ndrop: u32, dim: usize, seed: u64, round: u64, out: &Path) -> Result<Outcome> {
    let config = SetupConfig::new(n, ndrop, dim);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (clients, server) = setup_phase(&config, round, &mut rng)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let store_config = StoreConfig {
        n,
        ndrop,
        t: config.threshold(),
        dim,
        seed,
        round,
    };
    write_json(&out.join("config.json"), &store_config)?;
    write_json(&out.join("server.json"), &server)?;
    for keys in &clients {
        write_json(&client_file(out, keys.index()), keys)?;
    }
    println!("wrote {} client files and server.json to {} (t = {})", n, out.display(), store_config.t);
    Ok(Outcome::Success)
}

fn generate(
    store: &Path,
    dropout_rate: f64,
    trainer: TrainerArg,
    alt_witness: bool,
    round: Option<u64>,
) -> Result<Outcome> {
    if !(0.0..=1.0).contains(&dropout_rate) {
        bail!("--dropout-rate must be in [0, 1], got {dropout_rate}");
    }
    let config: StoreConfig = read_json(&store.join("config.json"))?;
    if let Some(l) = round {
        if l != config.round {
            bail!("store was dealt for round {}, not {l}; run setup again for a new round", config.round);
        }
    }
    let dir = round_dir(store, config.round);
    ensure_absent(&dir).context("keys are single-use; run setup again for a new round")?;

    let server_keys: ServerKeyMaterial = read_json(&store.join("server.json"))?;
    let spec = match trainer {
        TrainerArg::Synthetic => TrainerSpec::synthetic(config.dim, config.seed),
        TrainerArg::Linear => TrainerSpec::linear(config.dim, config.seed),
    };
    let trainer: Arc<dyn Trainer> = spec.build().into();
    let mut clients = Vec::with_capacity(config.n as usize);
    for i in 1..=config.n {
        let keys: ClientKeyMaterial = read_json(&client_file(store, i))?;
        let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        clients.push(ClientParty::new(keys, trainer.clone(), seed).with_alt_witness(alt_witness));
    }
    let mut server = FlServer::new(server_keys, vec![0.0; config.dim], config.seed).with_alt_witness(alt_witness);
    let schedule = sample_dropout(dropout_rate, config.n, config.seed);
    let outcome = generate_phase(&mut server, &mut clients, &schedule, &mut Transport::fifo())?;

    fs::create_dir_all(dir.join("bundles"))?;
    fs::write(dir.join("transcript.jsonl"), outcome.transcript.to_json_lines())?;
    let output = match outcome.result {
        Ok(output) => output,
        Err(failure) => {
            eprintln!("round {} failed: {failure}", config.round);
            return Ok(Outcome::RoundFailure);
        }
    };
    write_json(&dir.join("token.json"), &output.token)?;
    write_json(&dir.join("model.json"), &ModelFile::new(config.round, &output.model)?)?;
    for (i, bundle) in &outcome.bundles {
        write_json(&dir.join("bundles").join(format!("client-{i}.json")), bundle)?;
    }
    println!(
        "round {}: {} dropped, {} signers, {} bundles in {}",
        config.round,
        schedule.len(),
        output.signers.len(),
        outcome.bundles.len(),
        dir.display()
    );
    Ok(Outcome::Success)
}

fn prove(bundle: &Path, token: &Path, model: Option<&Path>, blind_seed: Option<u64>) -> Result<Outcome> {
    let bundle: ProofBundle = read_json(bundle)?;
    let token_value: GlobalToken = read_json(token)?;
    let model_path = match model {
        Some(p) => p.to_path_buf(),
        None => token.parent().unwrap_or(Path::new(".")).join("model.json"),
    };
    let model: ModelFile = read_json(&model_path)?;
    let mut sp = ServiceProvider::new();
    sp.accept_digest(model.digest()?, token_value);
    let seed = blind_seed.unwrap_or_else(rand::random);
    let result = prove_phase(&bundle, &sp, Blinding::Seeded(seed))?;
    let accepted = result.client && result.sp;
    println!("decision: {}", if accepted { "accept" } else { "reject" });
    println!("bytes sp->client: {}", result.bytes_sp_to_client);
    println!("bytes client->sp: {}", result.bytes_client_to_sp);
    Ok(if accepted { Outcome::Success } else { Outcome::Reject })
}

fn bench(grid_file: Option<&Path>, reps: Option<u32>, csv: Option<&Path>) -> Result<Outcome> {
    let mut grid = match grid_file {
        Some(p) => read_json(p)?,
        None => GridConfig::default(),
    };
    if let Some(r) = reps {
        grid.reps = r;
    }
    if grid.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let records = run_grid(&grid, |record, errors| {
        eprintln!("n={} ndrop={} t={} sa_agg={:.4}s", record.n, record.ndrop, record.t, record.sa_agg_s);
        for e in errors {
            eprintln!("  rep failed: {e}");
        }
    });
    match csv {
        Some(path) => write_csv(&records, fs::File::create(path)?)?,
        None => write_csv(&records, io::stdout().lock())?,
    }
    Ok(Outcome::Success)
}

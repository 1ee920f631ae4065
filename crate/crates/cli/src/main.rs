//! `ppac`: run simulations, attack experiments, invariant suites and
//! networked nodes from a TOML description.

mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ppac_core::adversary::{attack_colluding_full_neighborhood, attack_pushsum_baseline, attack_sole_neighbor};
use ppac_core::par::Execution;
use ppac_core::sim::{
    least_squares_trials, run_experiment, write_trials_csv, AttackKind, AttackTrial, ExperimentConfig, Mode,
};
use ppac_core::verify::run_suite;
use ppac_net::{run_node, NodeConfig, Transport};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use config::Loaded;

#[derive(Parser)]
#[command(name = "ppac", version, about = "Privacy-preserving push-sum average consensus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocol in-process and write the error series.
    Simulate(Common),
    /// Run an inference attack against the configured target.
    Attack(Common),
    /// Run the invariant suite on the configured experiment.
    Verify(Common),
    /// Run one networked node.
    Node {
        #[command(flatten)]
        common: Common,
        /// This node's id.
        #[arg(long)]
        id: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment (k-sweep, least-squares, network).
    #[arg(long)]
    preset: Option<String>,
    /// Override the seed from the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the protocol mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Algorithm0,
    Algorithm1,
    #[value(name = "algorithm2-simulated", alias = "algorithm2")]
    Algorithm2,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Algorithm0 => Mode::Algorithm0,
            ModeArg::Algorithm1 => Mode::Algorithm1,
            ModeArg::Algorithm2 => Mode::Algorithm2,
        }
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    config_origin: String,
    config_sha256: String,
    seed: u64,
    mode: &'static str,
    outputs: Vec<String>,
    summary: serde_json::Value,
}

struct Session {
    loaded: Loaded,
    experiment: ExperimentConfig,
    out_dir: PathBuf,
    outputs: Vec<String>,
}

impl Session {
    fn open(common: &Common) -> Result<Self> {
        let loaded = match (&common.config, &common.preset) {
            (Some(path), _) => Loaded::from_path(path)?,
            (None, Some(name)) => Loaded::preset(name)?,
            (None, None) => bail!("either --config or --preset is required"),
        };
        let mut experiment = loaded.file.experiment()?;
        if let Some(seed) = common.seed {
            experiment.seed = seed;
        }
        if let Some(mode) = common.mode {
            experiment.mode = mode.into();
        }
        fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
        Ok(Self { loaded, experiment, out_dir: common.out_dir.clone(), outputs: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir.join(name);
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }

    fn finish(mut self, command: &'static str, manifest_name: &str, summary: serde_json::Value) -> Result<()> {
        let manifest = RunManifest {
            command,
            config_origin: self.loaded.origin.clone(),
            config_sha256: hex::encode(Sha256::digest(self.loaded.source.as_bytes())),
            seed: self.experiment.seed,
            mode: self.experiment.mode.name(),
            outputs: self.outputs.clone(),
            summary,
        };
        let out = self.create(manifest_name)?;
        serde_json::to_writer_pretty(out, &manifest)?;
        println!("wrote {}", self.out_dir.join(manifest_name).display());
        Ok(())
    }
}

fn simulate(common: &Common) -> Result<()> {
    let mut session = Session::open(common)?;
    let base = session.experiment.clone();
    let sweep = session.loaded.file.sweep.k_values.clone();
    let ks = sweep.clone().unwrap_or_else(|| vec![base.params.big_k]);
    let mut runs = Vec::new();
    for k in ks {
        let mut cfg = base.clone();
        cfg.params.big_k = k;
        cfg.validate()?;
        let out = run_experiment(&cfg)?;
        let name = if sweep.is_some() { format!("metrics_k{k}.csv") } else { "metrics.csv".to_string() };
        out.metrics.write_csv(session.create(&name)?)?;
        let final_pi = out.metrics.pis.last().cloned().unwrap_or_default();
        println!(
            "K={k}: {} rounds, e = {:.3e}, alpha = {}",
            out.metrics.errors.len() - 1,
            out.metrics.final_error(),
            out.metrics.alpha
        );
        runs.push(json!({
            "k": k,
            "rounds": out.metrics.errors.len() - 1,
            "final_error": out.metrics.final_error(),
            "final_pi": final_pi,
            "alpha": out.metrics.alpha,
            "mean_encryption_latency_us": out.mean_encryption_latency().map(|d| d.as_secs_f64() * 1e6),
        }));
    }
    session.finish("simulate", "manifest.json", json!({ "runs": runs }))
}

fn attack(common: &Common) -> Result<()> {
    let mut session = Session::open(common)?;
    let cfg = session.experiment.clone();
    let adv = cfg.adversary.clone().ok_or_else(|| anyhow!("attack needs an [adversary] section"))?;
    let sweep = session.loaded.file.sweep.clone();
    let kind = adv.attack.unwrap_or(AttackKind::LeastSquares);
    let mut rows: Vec<AttackTrial> = Vec::new();
    let summary = match kind {
        AttackKind::LeastSquares => {
            let target = adv.target.ok_or_else(|| anyhow!("least-squares attack needs a target"))?;
            let truths = sweep.true_x0.unwrap_or_else(|| vec![cfg.x0[target]]);
            let trials = sweep.trials.unwrap_or(1);
            let [lo, hi] = sweep.other_range.unwrap_or([0.0, 50.0]);
            let mut stats = Vec::new();
            for truth in truths {
                let batch = least_squares_trials(
                    &cfg,
                    &adv.members,
                    target,
                    truth,
                    cfg.max_rounds,
                    trials,
                    (lo, hi),
                    Execution::Parallel,
                )?;
                let est: Vec<f64> = batch.iter().map(|t| t.estimate).collect();
                let (mean, sd) = mean_sd(&est);
                let negative = est.iter().filter(|e| **e < 0.0).count();
                println!("true x0 = {truth}: {trials} trials, mean {mean:.3}, sd {sd:.3}, {negative} negative");
                stats.push(json!({ "true_x0": truth, "trials": trials, "mean": mean, "sd": sd, "negative": negative }));
                rows.extend(batch);
            }
            json!({ "attack": "least-squares", "m": cfg.max_rounds, "estimates": stats })
        }
        AttackKind::Baseline => {
            let mut base = cfg.clone();
            base.mode = Mode::Algorithm0;
            let view = run_experiment(&base)?.view.expect("adversary configured");
            let leaked = attack_pushsum_baseline(&view)?;
            for (&node, &estimate) in &leaked {
                println!("node {node}: recovered {estimate}");
                rows.push(AttackTrial { trial: node, seed: base.seed, true_x0: base.x0[node], estimate });
            }
            json!({ "attack": "baseline", "recovered": leaked })
        }
        AttackKind::SoleNeighbor | AttackKind::Colluding => {
            let target = adv.target.ok_or_else(|| anyhow!("attack needs a target"))?;
            let view = run_experiment(&cfg)?.view.expect("adversary configured");
            let estimate = if kind == AttackKind::SoleNeighbor {
                attack_sole_neighbor(&view, target)?
            } else {
                attack_colluding_full_neighborhood(&view, target)?
            };
            println!("node {target}: recovered {estimate} (true {})", cfg.x0[target]);
            rows.push(AttackTrial { trial: 0, seed: cfg.seed, true_x0: cfg.x0[target], estimate });
            json!({ "attack": kind, "target": target, "estimate": estimate, "true_x0": cfg.x0[target] })
        }
    };
    write_trials_csv(&rows, session.create("attack_trials.csv")?)?;
    session.finish("attack", "manifest.json", summary)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn verify(common: &Common) -> Result<bool> {
    let session = Session::open(common)?;
    let results = run_suite(&session.experiment, None)?;
    for r in &results {
        println!("{:<22} {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    let ok = results.iter().all(|r| r.passed);
    session.finish("verify", "verify.json", json!({ "passed": ok, "checks": results }))?;
    Ok(ok)
}

fn node(common: &Common, id: usize) -> Result<()> {
    let mut session = Session::open(common)?;
    let cfg = session.experiment.clone();
    let network = session.loaded.file.network.clone().ok_or_else(|| anyhow!("node needs a [network] section"))?;
    let transport = match (cfg.mode, network.plaintext) {
        (Mode::Algorithm0, _) => bail!("networked nodes run the randomized protocol only"),
        (Mode::Algorithm1, _) | (_, true) => Transport::Plain,
        (Mode::Algorithm2, false) => Transport::Encrypted,
    };
    let addr = *network.addresses.get(id).ok_or_else(|| anyhow!("no address for node {id}"))?;
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    let mut node_cfg = NodeConfig::new(id, cfg.graph.clone(), network.addresses.clone(), cfg.x0[id], cfg.params);
    node_cfg.rounds = cfg.max_rounds;
    node_cfg.seed = cfg.seed;
    node_cfg.transport = transport;
    node_cfg.key_bits = cfg.key_bits;
    node_cfg.fractional_bits = cfg.fractional_bits;
    let report = run_node(&node_cfg, listener)?;

    let mut wtr = csv::Writer::from_writer(session.create(&format!("node_{id}.csv"))?);
    wtr.write_record(["round", "s", "w", "pi"])?;
    for st in &report.states {
        wtr.write_record([st.round.to_string(), st.s.to_string(), st.w.to_string(), st.pi.to_string()])?;
    }
    wtr.flush()?;
    let last = report.states.last().expect("initial state");
    let latency_ms = report.mean_encryption_latency().map(|d| d.as_secs_f64() * 1e3);
    println!("node {id}: pi = {} after {} rounds, mean encryption latency {latency_ms:?} ms", last.pi, last.round);
    session.finish(
        "node",
        &format!("node_{id}.json"),
        json!({
            "id": id,
            "final_pi": last.pi,
            "rounds": last.round,
            "encryptions": report.encryption_latencies.len(),
            "mean_encryption_latency_ms": latency_ms,
            "keys_known": report.keys_known,
        }),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c).map(|_| true),
        Command::Attack(c) => attack(c).map(|_| true),
        Command::Verify(c) => verify(c),
        Command::Node { common, id } => node(common, *id).map(|_| true),
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

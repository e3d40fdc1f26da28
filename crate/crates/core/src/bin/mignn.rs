use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mignn::harness::commands::{self, Report};
use mignn::harness::sweep::{parse_values, SweepParam};
use mignn::harness::RunConfig;
use mignn::{kv, Error, Result};

#[derive(Parser)]
#[command(name = "mignn", version, about = "Meta-inductive node classification on unseen graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train (or train --method) and evaluate over seeds.
    Train(Common),
    /// Score a saved checkpoint on the test partition.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run one baseline (--method) or all of them next to MI-GNN.
    Baseline(Common),
    /// MI-GNN against task_only, graph_only and finetune_agf.
    Ablate(Common),
    /// One MI-GNN run per value of lambda or steps.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
    /// Accuracy by similarity group for transduct, induct and MI-GNN.
    Casestudy(Common),
    /// Gradient checks of every primitive, encoder and the episode objective.
    Selftest {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    data: Option<String>,
    /// tud, jsonl or synth.
    #[arg(long)]
    format: Option<String>,
    /// Collection name (tud file prefix).
    #[arg(long)]
    name: Option<String>,
    /// sgc, gcn or sage.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// `0..10` or `1,4,9`.
    #[arg(long)]
    seeds: Option<String>,
    /// on or off.
    #[arg(long = "second-order")]
    second_order: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// key = value file; its entries override flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let flags = [
            ("data", &self.data),
            ("format", &self.format),
            ("name", &self.name),
            ("arch", &self.arch),
            ("method", &self.method),
            ("alpha", &self.alpha),
            ("steps", &self.steps),
            ("lambda", &self.lambda),
            ("batch", &self.batch),
            ("max_epochs", &self.epochs),
            ("seeds", &self.seeds),
            ("second_order", &self.second_order),
            ("out", &self.out),
        ];
        let mut rc = RunConfig::default();
        for (k, v) in flags {
            if let Some(v) = v {
                rc.apply(k, v)?;
            }
        }
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Load { path: path.clone(), msg: e.to_string() })?;
            rc.apply_all(&kv::parse(&text)?)?;
        }
        Ok(rc)
    }
}

fn print_report(r: &Report) {
    for b in &r.blocks {
        let mut label = b.method.clone();
        if let (Some(p), Some(v)) = (&b.param, &b.value) {
            label = format!("{p}={v} {label}");
        }
        if let Some(g) = &b.group {
            label = format!("{g} {label}");
        }
        println!(
            "{label}: accuracy {:.2} ± {:.2}, micro-F1 {:.2} ± {:.2} ({} seeds, {:.1}s)",
            100.0 * b.accuracy.mean,
            100.0 * b.accuracy.half_width,
            100.0 * b.micro_f1.mean,
            100.0 * b.micro_f1.half_width,
            b.per_seed.len(),
            b.runtime_secs
        );
    }
    for f in &r.files {
        println!("wrote {}", f.display());
    }
}

fn run(cmd: Command) -> Result<bool> {
    let report = match cmd {
        Command::Train(c) => commands::train(&c.run_config()?)?,
        Command::Baseline(c) => commands::baseline(&c.run_config()?)?,
        Command::Ablate(c) => commands::ablate(&c.run_config()?)?,
        Command::Casestudy(c) => commands::casestudy(&c.run_config()?)?,
        Command::Eval { common, checkpoint } => commands::eval(&common.run_config()?, &checkpoint)?,
        Command::Sweep { common, param, values } => {
            let param: SweepParam = param.parse()?;
            commands::sweep_cmd(&common.run_config()?, param, &parse_values(&values))?
        }
        Command::Selftest { instances, seed } => {
            let (results, secs) = commands::selftest(instances, seed)?;
            for r in &results {
                println!(
                    "{} {}: worst relative error {:.3e} (tolerance {:.0e}, {} instances)",
                    if r.passed() { "PASS" } else { "FAIL" },
                    r.name,
                    r.worst,
                    r.tolerance,
                    r.instances
                );
            }
            println!("{} checks in {secs:.1}s", results.len());
            return Ok(results.iter().all(|r| r.passed()));
        }
    };
    print_report(&report);
    Ok(true)
}

fn error_line(kind: &str, message: &str) -> String {
    format!("error kind={kind} message={}", serde_json::to_string(message).expect("string serializes"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", error_line("selftest", "gradient check failed"));
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}

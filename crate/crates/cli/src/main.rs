//! `locspike` command-line driver.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use locspike::kv::KvFile;
use locspike::Error;

use commands::Sources;

#[derive(Parser, Debug)]
#[command(name = "locspike", version, about = "Spiking tactile classification toolkit")]
struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

/// Options every subcommand accepts.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write checkpoint, metrics and resolved config.
    Train {
        #[command(flatten)]
        common: Common,
        /// Architecture, e.g. hybrid-srm-fc or hybrid-lif-gnn.
        #[arg(long)]
        model: Option<String>,
        /// Preset name (synth.toy, synth.late) or dataset directory/manifest.
        #[arg(long)]
        data: Option<String>,
        /// Output directory; defaults to runs/<model>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Model class count; must agree with the dataset.
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Report accuracy of a checkpoint on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<String>,
        /// Also write the CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Streaming inference: per-step scores and accuracy curves.
    Stream {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit every k-th step (the final step is always emitted).
        #[arg(long)]
        every: Option<usize>,
        /// Sigmoid time weighting for SRM checkpoints.
        #[arg(long)]
        psi: Option<f64>,
        /// Linear time weighting for LIF checkpoints.
        #[arg(long)]
        zeta: Option<f64>,
    },
    /// Count additions and multiplications per sample.
    CountOps {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<String>,
        /// Also write the CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a per-layer breakdown CSV here.
        #[arg(long)]
        layers: Option<PathBuf>,
        /// Count a membrane update for every neuron at every step.
        #[arg(long)]
        strict: bool,
        /// Count one addition per SRM synaptic event instead of per kernel step.
        #[arg(long)]
        per_event: bool,
    },
    /// Print the edge list of a spatial or temporal graph.
    Graph {
        #[command(flatten)]
        common: Common,
        /// Coordinate file of `index x y` lines.
        #[arg(long)]
        coords: Option<PathBuf>,
        /// Default layout with this many taxels.
        #[arg(long)]
        taxels: Option<usize>,
        /// Temporal graph over this many steps.
        #[arg(long)]
        temporal: Option<usize>,
        /// Temporal graph mode: sparse or dense.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset directory.
    GenSynth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Named preset (synth.toy, synth.late); overrides the shape options.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        name: Option<String>,
        /// disjoint or late-timing.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        taxels: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        rate_hi: Option<f64>,
        #[arg(long)]
        rate_lo: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Collects the flags that were given into key/value form.
#[derive(Default)]
struct Flags(KvFile);

impl Flags {
    fn opt(mut self, key: &str, v: Option<impl ToString>) -> Self {
        if let Some(v) = v {
            self.0.set(key, v.to_string());
        }
        self
    }

    fn path(self, key: &str, v: Option<PathBuf>) -> Self {
        self.opt(key, v.map(|p| p.display().to_string()))
    }

    fn switch(self, key: &str, on: bool, value: &str) -> Self {
        self.opt(key, on.then_some(value))
    }

    fn sources(self, common: Common) -> Sources {
        Sources {
            config: common.config,
            sets: common.sets,
            flags: self.0,
        }
    }
}

fn run(command: Command) -> locspike::Result<()> {
    match command {
        Command::Train {
            common,
            model,
            data,
            out,
            epochs,
            rounds,
            seed,
            lr,
            batch_size,
            classes,
        } => commands::cmd_train(
            &Flags::default()
                .opt("model", model)
                .opt("data", data)
                .path("out", out)
                .opt("epochs", epochs)
                .opt("rounds", rounds)
                .opt("seed", seed)
                .opt("lr", lr)
                .opt("batch_size", batch_size)
                .opt("n_classes", classes)
                .sources(common),
        ),
        Command::Eval {
            common,
            checkpoint,
            data,
            out,
        } => commands::cmd_eval(
            &Flags::default()
                .path("checkpoint", checkpoint)
                .opt("data", data)
                .path("out", out)
                .sources(common),
        ),
        Command::Stream {
            common,
            checkpoint,
            data,
            out,
            every,
            psi,
            zeta,
        } => commands::cmd_stream(
            &Flags::default()
                .path("checkpoint", checkpoint)
                .opt("data", data)
                .path("out", out)
                .opt("every", every)
                .opt("psi", psi)
                .opt("zeta", zeta)
                .sources(common),
        ),
        Command::CountOps {
            common,
            checkpoint,
            data,
            out,
            layers,
            strict,
            per_event,
        } => commands::cmd_count_ops(
            &Flags::default()
                .path("checkpoint", checkpoint)
                .opt("data", data)
                .path("out", out)
                .path("layers", layers)
                .switch("strict", strict, "true")
                .switch("kernel_window", per_event, "false")
                .sources(common),
        ),
        Command::Graph {
            common,
            coords,
            taxels,
            temporal,
            mode,
            out,
        } => commands::cmd_graph(
            &Flags::default()
                .path("coords", coords)
                .opt("taxels", taxels)
                .opt("temporal", temporal)
                .opt("mode", mode)
                .path("out", out)
                .sources(common),
        ),
        Command::GenSynth {
            common,
            out,
            preset,
            name,
            task,
            taxels,
            steps,
            classes,
            per_class,
            rate_hi,
            rate_lo,
            seed,
        } => commands::cmd_gen_synth(
            &Flags::default()
                .path("out", out)
                .opt("preset", preset)
                .opt("name", name)
                .opt("task", task)
                .opt("n_taxels", taxels)
                .opt("n_steps", steps)
                .opt("n_classes", classes)
                .opt("samples_per_class", per_class)
                .opt("rate_hi", rate_hi)
                .opt("rate_lo", rate_lo)
                .opt("seed", seed)
                .sources(common),
        ),
    }
}

/// 2 for configuration problems, 3 for data and file problems.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Malformed { .. } | Error::Dataset(_) | Error::Checkpoint(_) | Error::Graph(_) => 3,
        Error::Contract(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;

use clap::Parser;

use levyheat::cli::{run, Stage};

/// Heat kernels for SDEs driven by (tempered) stable Levy processes:
/// runs one pipeline stage of a declarative configuration and writes
/// CSV/JSON artifacts.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Pipeline stage to execute.
    #[arg(long, value_enum, default_value = "all")]
    stage: Stage,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks the hardware parallelism.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() {
    let args = Args::parse();
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .expect("thread pool is built once at startup");
    }
    let code = run(&args.config, args.stage, args.out.as_deref(), args.seed);
    std::process::exit(code);
}

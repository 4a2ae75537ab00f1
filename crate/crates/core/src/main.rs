use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use backjump::harness::run::{self, apply_config_file, format_summary};
use backjump::harness::{Algorithm, ExperimentConfig};
use backjump::learn::Head;
use backjump::problem::DomainKind;
use backjump::search::HeuristicSpec;
use backjump::{Error, Result};

#[derive(Parser)]
#[command(name = "backjump", version, about = "Backjumping search for task and motion planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the test problem set.
    Gen(Common),
    /// Solve training problems with backtracking and write IL and PF labels.
    Collect(Common),
    /// Train a learned heuristic on the collected labels.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        head: HeadArg,
    },
    /// Run the configured solver and heuristic on the test problems.
    Solve(Common),
    /// Score jump predictions against labeled dead ends.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Labeled dead ends; `il.jsonl` in the run directory by default.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// False-negative ratio of sampling versus samples per level.
    Fnstudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "10,30,50,70,90")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
    },
    /// Rebuild summary.csv from results.jsonl and print it.
    Report {
        #[arg(long, default_value = "run")]
        run_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Il,
    Pf,
}

/// Flags mirroring the experiment configuration. Keys in `--config` take
/// precedence over flags.
#[derive(Args)]
struct Common {
    #[arg(long, default_value = "run")]
    run_dir: PathBuf,
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    domain: Option<DomainKind>,
    #[arg(long)]
    n_objects: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Samples per level.
    #[arg(long = "samples", short = 'N')]
    n_per_level: Option<usize>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// fixed<j>, root, oracle, il, or pf.
    #[arg(long)]
    heuristic: Option<HeuristicSpec>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_nodes: Option<u64>,
    #[arg(long)]
    time_limit_ms: Option<u64>,
    #[arg(long)]
    max_epochs: Option<u64>,
    #[arg(long)]
    model: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        macro_rules! set {
            ($flag:ident => $field:ident) => {
                if let Some(v) = &self.$flag {
                    c.$field = v.clone();
                }
            };
            ($flag:ident => some $field:ident) => {
                if let Some(v) = &self.$flag {
                    c.$field = Some(v.clone());
                }
            };
        }
        set!(domain => domain);
        set!(n_objects => n_objects);
        set!(n_train => n_problems_train);
        set!(n_test => n_problems_test);
        set!(n_per_level => n_per_level);
        set!(algorithm => algorithm);
        set!(heuristic => heuristic);
        set!(seed => seed);
        set!(max_nodes => some max_nodes);
        set!(time_limit_ms => some time_limit_ms);
        set!(max_epochs => some max_epochs);
        set!(model => some model_path);
        if c.algorithm == Algorithm::Backtrack && self.heuristic.is_none() {
            c.heuristic = HeuristicSpec::Fixed(1);
        }
        if let Some(path) = &self.config {
            c = apply_config_file(&c, path)?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn head(h: HeadArg) -> Head {
    match h {
        HeadArg::Il => Head::Il,
        HeadArg::Pf => Head::Pf,
    }
}

fn print_csv(path: &Path) -> Result<()> {
    print!("{}", std::fs::read_to_string(path)?);
    Ok(())
}

/// Exit status 3 when every problem ran out of budget.
fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = c.config()?;
            let problems = run::cmd_gen(&cfg, &c.run_dir)?;
            println!("{} {} problems with {} objects in {}", problems.len(), cfg.domain, cfg.n_objects, c.run_dir.display());
        }
        Command::Collect(c) => {
            let cfg = c.config()?;
            let (il, pf) = run::cmd_collect(&cfg, &c.run_dir)?;
            println!("{il} IL labels, {pf} PF labels");
        }
        Command::Train { common, head: h } => {
            let cfg = common.config()?;
            let params = run::cmd_train(&cfg, &common.run_dir, head(h))?;
            println!("trained {} parameters, final loss {:.5}", params.n_params(), params.train_loss.unwrap_or(f64::NAN));
        }
        Command::Solve(c) => {
            let cfg = c.config()?;
            let rows = run::cmd_solve(&cfg, &c.run_dir)?;
            print!("{}", format_summary(&run::cmd_report(&c.run_dir)?));
            if !rows.is_empty() && rows.iter().all(|r| r.outcome != "solved") {
                return Ok(3);
            }
        }
        Command::Eval { common, labels } => {
            let cfg = common.config()?;
            run::cmd_eval(&cfg, &common.run_dir, labels.as_deref())?;
            print_csv(&common.run_dir.join(run::PREDICTIONS))?;
        }
        Command::Fnstudy { common, sizes, trials } => {
            let cfg = common.config()?;
            run::cmd_fnstudy(&cfg, &common.run_dir, &sizes, trials)?;
            print_csv(&common.run_dir.join(run::FNSTUDY))?;
        }
        Command::Report { run_dir } => print!("{}", format_summary(&run::cmd_report(&run_dir)?)),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}

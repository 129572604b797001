use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use minmax_paging::fractional::CertifyOptions;
use minmax_paging::harness::{
    bench_csv, certify_report, duel_report, frac_report, round_report, run_bench, run_report, BenchSuite,
    ExperimentReport, Generator, RoundingMode, DEFAULT_SLACK,
};
use minmax_paging::rounding::default_beta;
use minmax_paging::{FractionalRecord, Objective, PagingError, PolicySpec, RequestTrace, Result, SolverParams};

#[derive(Parser)]
#[command(name = "minmax-paging", version, about = "Min-max paging experiments")]
struct Cli {
    /// Seed for randomized generators and rounding.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Absolute tolerance for the dual-slack and x lower-bound checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an adversarial or random trace.
    Gen(GenArgs),
    /// Serve a trace with an online policy.
    Run {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "lru")]
        policy: String,
        /// Write the schedule here.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Solve the fractional problem and certify the solution.
    Frac {
        #[arg(long)]
        trace: PathBuf,
        /// `l1`, `lq:<q>` or `minmax`.
        #[arg(long, default_value = "minmax")]
        objective: String,
        #[arg(long)]
        max_step: Option<f64>,
        #[arg(long)]
        eps_start: Option<f64>,
        /// Write the solution dump here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Round a fractional solution dump.
    Round {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Det)]
        mode: Mode,
        /// Scaling factor for randomized rounding (default `4 ln(nk)`).
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Play an adversary against a policy and compare with the offline cost.
    Duel {
        #[command(flatten)]
        gen: GenArgs,
        /// Number of seeds, starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
    },
    /// Re-check the certificate of a fractional solution dump.
    Certify {
        #[arg(long)]
        dump: PathBuf,
    },
    /// Run a benchmark suite and emit CSV.
    Bench {
        #[arg(long)]
        suite: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Det,
    Rand,
    Discretize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Adv {
    Cruel,
    DetLayered,
    RandLayered,
    RandUniform,
    IntroLru,
    IntroGreedy,
    Uniform,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    adv: Adv,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Layers (layered generators) or groups (intro-lru).
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Page count for uniform traces.
    #[arg(long = "n-pages")]
    n_pages: Option<usize>,
    /// Per-phase fault target or request budget.
    #[arg(long = "N", default_value_t = 100)]
    n_target: u64,
    /// Policy driving adaptive generators (or played in a duel).
    #[arg(long, default_value = "lru")]
    vs: String,
    /// Layered metadata sidecar (JSON).
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Trace length for cruel and uniform traces.
    #[arg(long, default_value_t = 100)]
    len: usize,
    /// Repetitions for intro-greedy.
    #[arg(long, default_value_t = 1)]
    reps: usize,
}

impl GenArgs {
    fn generator(&self) -> Result<Generator> {
        Ok(match self.adv {
            Adv::Cruel => Generator::Cruel {
                k: self.k,
                len: self.len,
            },
            Adv::DetLayered => Generator::DetLayered {
                k: self.k,
                m: self.m,
                n_target: self.n_target,
            },
            Adv::RandLayered => {
                if self.k != 2 {
                    return Err(PagingError::Unsupported(format!(
                        "rand-layered is defined for k = 2, got k = {}",
                        self.k
                    )));
                }
                Generator::RandLayered {
                    m: self.m,
                    n_target: self.n_target,
                }
            }
            Adv::RandUniform => Generator::RandUniform {
                k: self.k,
                m: self.m,
                n_target: self.n_target,
            },
            Adv::IntroLru => Generator::IntroLru { k: self.k, m: self.m },
            Adv::IntroGreedy => Generator::IntroGreedy {
                n_target: self.n_target,
                reps: self.reps,
            },
            Adv::Uniform => Generator::Uniform {
                k: self.k,
                n: self.n_pages.unwrap_or(2 * self.k),
                len: self.len,
            },
        })
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit(cli: &Cli, report: &ExperimentReport) -> Result<bool> {
    let text = match cli.format {
        Format::Json => report.to_json()? + "\n",
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    };
    write_output(cli.out.as_deref(), &text)?;
    Ok(report.pass())
}

fn certify_options(cli: &Cli) -> CertifyOptions {
    let mut opts = CertifyOptions::default();
    if let Some(tol) = cli.tol {
        opts.slack_tol = tol;
        opts.xlb_tol = tol;
    }
    opts
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Gen(args) => {
            let gen = args.generator()?;
            let spec: PolicySpec = args.vs.parse()?;
            let mut policy = spec.build(gen.k(), gen.pages()?)?;
            let generated = gen.generate(policy.as_mut(), cli.seed)?;
            if generated.requests.is_empty() {
                eprintln!("warning: the configuration yields an empty trace");
                write_output(cli.out.as_deref(), "")?;
            } else {
                write_output(cli.out.as_deref(), &generated.trace()?.to_text())?;
            }
            match (&generated.meta, &args.meta) {
                (Some(meta), Some(path)) => meta.write_to(path)?,
                (Some(_), None) => eprintln!("warning: layered trace generated without --meta; offline costs need it"),
                (None, Some(_)) => eprintln!("warning: {} traces carry no metadata", gen.name()),
                (None, None) => {}
            }
            Ok(true)
        }
        Command::Run {
            trace,
            policy,
            schedule,
        } => {
            let trace = RequestTrace::read_from(trace)?;
            let (report, sched) = run_report(&trace, policy.parse()?)?;
            if let Some(path) = schedule {
                std::fs::write(path, sched.to_text(&trace))?;
            }
            emit(cli, &report)
        }
        Command::Frac {
            trace,
            objective,
            max_step,
            eps_start,
            dump,
        } => {
            let trace = RequestTrace::read_from(trace)?;
            let obj = Objective::parse(objective, trace.pages())?;
            let mut params = SolverParams::new(trace.k(), obj.q()).with_horizon(trace.len());
            if let Some(step) = max_step {
                params = params.with_max_step(*step);
            }
            if let Some(eps) = eps_start {
                params.eps_start = *eps;
            }
            params.validate()?;
            let (report, rec) = frac_report(&trace, obj, params, &certify_options(cli))?;
            if let Some(path) = dump {
                rec.write_to(path)?;
            }
            emit(cli, &report)
        }
        Command::Round {
            dump,
            mode,
            beta,
            schedule,
        } => {
            let rec = FractionalRecord::read_from(dump)?;
            let mode = match mode {
                Mode::Det => RoundingMode::Deterministic,
                Mode::Rand => RoundingMode::Randomized {
                    beta: beta.unwrap_or_else(|| default_beta(rec.header.pages, rec.header.k)),
                    seed: cli.seed,
                },
                Mode::Discretize => RoundingMode::Discretize,
            };
            let (report, sched) = round_report(&rec, mode)?;
            if let (Some(path), Some(sched)) = (schedule, sched) {
                let trace = RequestTrace::new(rec.header.k, rec.header.pages, rec.requests())?;
                std::fs::write(path, sched.to_text(&trace))?;
            }
            emit(cli, &report)
        }
        Command::Duel { gen, seeds, slack } => {
            let generator = gen.generator()?;
            let seeds: Vec<u64> = (0..*seeds).map(|i| cli.seed + i).collect();
            let report = duel_report(&generator, gen.vs.parse()?, &seeds, *slack)?;
            emit(cli, &report)
        }
        Command::Certify { dump } => {
            let rec = FractionalRecord::read_from(dump)?;
            emit(cli, &certify_report(&rec, &certify_options(cli))?)
        }
        Command::Bench { suite } => {
            let text = std::fs::read_to_string(suite)?;
            let rows = run_bench(&BenchSuite::parse(&text)?)?;
            let out = match cli.format {
                Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
                _ => bench_csv(&rows),
            };
            write_output(cli.out.as_deref(), &out)?;
            Ok(rows.iter().all(|r| r.pass))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

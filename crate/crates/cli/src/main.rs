//! `layered-cftp`: run the exact samplers, coupler statistics and the
//! acceptance suite from the command line.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use layered_cftp::autogamma::{run_autogamma, GammaField};
use layered_cftp::autonormal::{run_truncated_cftp, ExactSampler, InteractionGraph};
use layered_cftp::coupler::{
    exponential_coupler, gamma_scale_coupler, normal_coupler, normal_min_width, Sign,
};
use layered_cftp::output::{render_field, write_atomic};
use layered_cftp::replicate::replicate;
use layered_cftp::toy::{
    run_forward_coalescence_only, run_forward_doubling_variant, run_fresh_coins_variant,
    run_toy_cftp,
};
use layered_cftp::validation::{run_all, run_criterion};
use layered_cftp::{Error, RunDiagnostics, StreamPath};

const EXIT_PARAMETER: u8 = 1;
const EXIT_NO_COALESCENCE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "layered-cftp", version, about = "Exact sampling by coupling from the past")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Master seed; replication i uses a seed derived from it.
    #[arg(long, global = true, env = "PERFECT_SAMPLER_SEED", default_value_t = 2026)]
    seed: u64,

    /// Number of independent samples (each command has its own default).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    samples: Option<u64>,

    /// Write the main output here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Worker threads for independent replications (default: all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reflecting random walk on {0, ..., n}: exact sampler or a biased variant.
    Toy {
        #[arg(long)]
        n: u32,
        #[arg(long, value_enum, default_value_t = Variant::Correct)]
        variant: Variant,
    },
    /// Exact draws from an autogamma field (a field file, or `pumps`).
    Autogamma {
        #[arg(long)]
        model: String,
    },
    /// Draws from an autonormal field (a graph file, or `gridN` for an N x N torus).
    Autonormal {
        #[arg(long)]
        model: String,
        /// Exact sampler without truncation (the default).
        #[arg(long, conflicts_with = "truncated")]
        exact: bool,
        /// Monotone CFTP from the box [-B, B] instead.
        #[arg(long, value_name = "B")]
        truncated: Option<f64>,
        /// Also render the first sample as a W x H greyscale image.
        #[arg(long, value_name = "WxH")]
        render: Option<String>,
        /// Where to write the image.
        #[arg(long, value_name = "PATH", default_value = "field.pgm")]
        pgm: PathBuf,
    },
    /// Step widths and image counts of a coupler against their expected values.
    CouplerStats {
        #[arg(long, value_enum)]
        dist: Dist,
        /// sigma (normal), mean (exp) or shape (gamma).
        #[arg(long, default_value_t = 1.0)]
        param: f64,
        /// Interval `a,b` whose images are counted.
        #[arg(long, value_name = "a,b")]
        interval: Option<String>,
    },
    /// Run the acceptance suite; exits with 3 if anything fails.
    Validate {
        /// Run only this criterion (1 to 14).
        #[arg(long)]
        criterion: Option<u8>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Variant {
    Correct,
    Fresh,
    Forward,
    CoalesceOnly,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Dist {
    Normal,
    Exp,
    Gamma,
}

/// Why the program stops early.
enum Failure {
    Run(Error),
    Validation(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome = Result<String, Failure>;

fn bad(msg: impl Into<String>) -> Failure {
    Failure::Run(Error::Parameter(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARAMETER } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.common.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(EXIT_PARAMETER);
        }
    };
    let result = pool.install(|| run(&cli)).and_then(|text| {
        match &cli.common.output {
            Some(path) => write_atomic(path, text.as_bytes())?,
            None => print!("{text}"),
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(n)) => {
            eprintln!("validation failed: {n} criteria did not pass");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NonCoalescence { .. } => EXIT_NO_COALESCENCE,
                _ => EXIT_PARAMETER,
            })
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    match &cli.command {
        Command::Toy { n, variant } => toy(c, *n, *variant),
        Command::Autogamma { model } => autogamma(c, model),
        Command::Autonormal {
            model,
            exact: _,
            truncated,
            render,
            pgm,
        } => autonormal(c, model, *truncated, render.as_deref(), pgm),
        Command::CouplerStats {
            dist,
            param,
            interval,
        } => coupler_stats(c, *dist, *param, interval.as_deref()),
        Command::Validate { criterion } => validate(c, *criterion),
    }
}

fn toy(c: &Common, n: u32, variant: Variant) -> Outcome {
    let runs = c.samples.unwrap_or(10_000);
    let xs = replicate(runs, c.seed, |s| match variant {
        Variant::Correct => Ok(run_toy_cftp(n, s)?.0),
        Variant::Fresh => run_fresh_coins_variant(n, s),
        Variant::Forward => run_forward_doubling_variant(n, s),
        Variant::CoalesceOnly => run_forward_coalescence_only(n, s),
    })?;
    let mut counts = vec![0u64; n as usize + 1];
    let mut out = String::from("state\n");
    for &x in &xs {
        counts[x as usize] += 1;
        let _ = writeln!(out, "{x}");
    }
    eprintln!("state,count,frequency");
    for (x, k) in counts.iter().enumerate() {
        eprintln!("{x},{k},{:.6}", *k as f64 / runs as f64);
    }
    Ok(out)
}

fn csv_rows(rows: &[Vec<f64>]) -> String {
    let width = rows.first().map_or(0, Vec::len);
    let header: Vec<String> = (0..width).map(|i| format!("x{i}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn report_cftp(diags: &[RunDiagnostics]) {
    let n = diags.len() as f64;
    let t: f64 = diags.iter().map(|d| d.t_star.unwrap_or(0) as f64).sum::<f64>() / n;
    let max = diags.iter().filter_map(|d| d.t_star).max().unwrap_or(0);
    let work: f64 = diags.iter().map(|d| d.total_updates as f64).sum::<f64>() / n;
    eprintln!("samples: {}, mean T*: {t:.3}, max T*: {max}, mean updates: {work:.1}", diags.len());
}

fn autogamma(c: &Common, model: &str) -> Outcome {
    let field = if model == "pumps" {
        GammaField::pumps()
    } else {
        GammaField::load(model.as_ref())?
    };
    let runs = replicate(c.samples.unwrap_or(1_000), c.seed, |s| run_autogamma(&field, s))?;
    report_cftp(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(csv_rows(&runs.into_iter().map(|r| r.0).collect::<Vec<_>>()))
}

fn parse_size(spec: &str) -> Result<(usize, usize), Failure> {
    let (w, h) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| bad(format!("image size must look like 50x50, got {spec:?}")))?;
    let w = w.trim().parse().map_err(|_| bad(format!("bad image width {w:?}")))?;
    let h = h.trim().parse().map_err(|_| bad(format!("bad image height {h:?}")))?;
    Ok((w, h))
}

fn autonormal(
    c: &Common,
    model: &str,
    truncated: Option<f64>,
    render: Option<&str>,
    pgm: &std::path::Path,
) -> Outcome {
    let graph = match InteractionGraph::builtin(model) {
        Some(g) => g,
        None => InteractionGraph::load(model.as_ref())?,
    };
    let size = render.map(parse_size).transpose()?;
    if let Some((w, h)) = size {
        if w * h != graph.len() {
            return Err(bad(format!("{w}x{h} image does not match {} sites", graph.len())));
        }
    }
    let runs = c.samples.unwrap_or(10);
    let rows = match truncated {
        Some(b) => {
            let r = replicate(runs, c.seed, |s| run_truncated_cftp(&graph, s, b))?;
            report_cftp(&r.iter().map(|x| x.1).collect::<Vec<_>>());
            r.into_iter().map(|x| x.0).collect::<Vec<_>>()
        }
        None => {
            let sampler = ExactSampler::new(&graph)?;
            let r = replicate(runs, c.seed, |s| sampler.sample(s))?;
            let mean = r.iter().map(|x| x.maps_back as f64).sum::<f64>() / r.len() as f64;
            eprintln!("samples: {}, mean composite maps T: {mean:.3}", r.len());
            r.into_iter().map(|x| x.state).collect()
        }
    };
    if let Some((w, h)) = size {
        render_field(&rows[0], w, h, pgm)?;
        eprintln!("wrote {}", pgm.display());
    }
    Ok(csv_rows(&rows))
}

fn coupler_stats(c: &Common, dist: Dist, p: f64, interval: Option<&str>) -> Outcome {
    let maps = c.samples.unwrap_or(1_000_000);
    let (a, b) = match interval {
        Some(s) => {
            let (a, b) = s
                .split_once(',')
                .ok_or_else(|| bad(format!("interval must look like a,b, got {s:?}")))?;
            let a: f64 = a.trim().parse().map_err(|_| bad(format!("bad interval start {a:?}")))?;
            let b: f64 = b.trim().parse().map_err(|_| bad(format!("bad interval end {b:?}")))?;
            (a, b)
        }
        None => match dist {
            Dist::Normal => (0.0, (2.0 * std::f64::consts::PI).sqrt() * p),
            Dist::Exp => (0.0, p),
            Dist::Gamma => (1.0, std::f64::consts::E),
        },
    };
    let ordered = a <= b && (dist != Dist::Gamma || a > 0.0);
    if !ordered {
        return Err(bad(format!("bad interval [{a}, {b}] for {dist:?}")));
    }
    let base = StreamPath::new(c.seed);
    let (mut min_w, mut sum_w, mut images) = (f64::INFINITY, 0.0, 0u64);
    for k in 0..maps {
        let at = base.with_step(k);
        let (w, count) = match dist {
            Dist::Normal => {
                let m = normal_coupler(p, at)?;
                (m.width(), m.image_count(a, b)?)
            }
            Dist::Exp => {
                let m = exponential_coupler(p, at, Sign::Plus)?;
                (m.width(), m.image_count(a, b)?)
            }
            Dist::Gamma => {
                let m = gamma_scale_coupler(p, at)?;
                (m.log_width(), m.image_count(a, b)?)
            }
        };
        min_w = min_w.min(w);
        sum_w += w;
        images += count;
    }
    let (expected, floor) = match dist {
        Dist::Normal => (1.0 + (b - a) / ((2.0 * std::f64::consts::PI).sqrt() * p), normal_min_width(p)),
        Dist::Exp => (1.0 + (b - a) / p, 0.0),
        Dist::Gamma => (1.0 + p * (b / a).ln(), 0.0),
    };
    let mut out = String::from("statistic,value\n");
    for (k, v) in [
        ("maps", maps as f64),
        ("interval_start", a),
        ("interval_end", b),
        ("min_width", min_w),
        ("width_floor", floor),
        ("mean_width", sum_w / maps as f64),
        ("mean_images", images as f64 / maps as f64),
        ("expected_images", expected),
    ] {
        let _ = writeln!(out, "{k},{v}");
    }
    Ok(out)
}

fn validate(c: &Common, criterion: Option<u8>) -> Outcome {
    let outcomes = match criterion {
        Some(id) => vec![run_criterion(id, c.seed)?],
        None => run_all(c.seed),
    };
    let mut out = String::new();
    for o in &outcomes {
        let _ = writeln!(out, "{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        eprint!("{out}");
        return Err(Failure::Validation(failed));
    }
    Ok(out)
}

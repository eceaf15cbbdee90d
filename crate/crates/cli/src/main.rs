//! Command-line front door: linearizability testing, construction of the
//! linearizing transformation, forward-oracle generation of test data, and
//! round-trip verification, over JSON requests and reports.
//!
//! Exit codes: 0 linearizable / success, 1 not linearizable, 2 error.

use clap::{Args, Parser, Subcommand};
use linearize4::lintest::Verdict;
use linearize4::pipeline::{
    run_construct, run_oracle, run_test, run_verify, AnalysisRequest, OracleRequest, Report,
    VerifyRequest,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "linearize4",
    about = "Decide and construct point linearizations of fourth-order ODEs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Input request file (JSON). With --batch, a directory of requests.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Use a bundled fixture (example1..example4) instead of --input.
    #[arg(long)]
    fixture: Option<String>,
    /// Write the report here instead of stdout. With --batch, a directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Process every .json request in the --input directory.
    #[arg(long)]
    batch: bool,
    /// Override the sample seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the sample box as x_lo,x_hi,y_lo,y_hi.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    r#box: Option<Vec<f64>>,
    /// Override the number of sample points.
    #[arg(long)]
    points: Option<usize>,
    /// Pass threshold on the relative residual (float mode).
    #[arg(long)]
    tol: Option<f64>,
    /// Bind or override a parameter, e.g. --param a=3 (repeatable).
    #[arg(long, value_name = "NAME=VALUE")]
    param: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the linearization test and report per-condition residuals.
    Test(CommonOpts),
    /// Test, then construct the transformation and the linear target.
    Construct(CommonOpts),
    /// Generate a coefficient table from a known transformation.
    Oracle {
        /// t = phi(x) or phi(x, y)
        #[arg(long)]
        phi: String,
        /// u = psi(x, y)
        #[arg(long)]
        psi: String,
        #[arg(long, default_value = "0")]
        alpha: String,
        #[arg(long, default_value = "0")]
        beta: String,
        /// Bind a parameter, e.g. --param a=3 (repeatable).
        #[arg(long, value_name = "NAME=VALUE")]
        param: Vec<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Verify that a given transformation maps the equation to the target.
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        phi: String,
        #[arg(long)]
        psi: String,
        #[arg(long, default_value = "0")]
        alpha: String,
        #[arg(long, default_value = "0")]
        beta: String,
        /// Number of solution traces.
        #[arg(long, default_value_t = 5)]
        traces: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
    }
}

fn parse_params(items: &[String]) -> Result<Vec<(String, f64)>, String> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| format!("--param expects NAME=VALUE, got `{}`", s))?;
            let value: f64 = v
                .parse()
                .map_err(|_| format!("--param {}: `{}` is not a number", k, v))?;
            Ok((k.to_string(), value))
        })
        .collect()
}

fn load_request(opts: &CommonOpts, path: Option<&Path>) -> Result<AnalysisRequest, String> {
    let text = if let Some(p) = path {
        std::fs::read_to_string(p).map_err(|e| format!("{}: {}", p.display(), e))?
    } else if let Some(name) = &opts.fixture {
        fixture_text(name)?
    } else if let Some(p) = &opts.input {
        std::fs::read_to_string(p).map_err(|e| format!("{}: {}", p.display(), e))?
    } else {
        return Err("provide --input FILE or --fixture NAME".into());
    };
    let mut req = AnalysisRequest::from_json(&text).map_err(|e| e.to_string())?;
    apply_overrides(&mut req, opts)?;
    Ok(req)
}

fn fixture_text(name: &str) -> Result<String, String> {
    let text = match name {
        "example1" => linearize4::fixtures::EXAMPLE1,
        "example2" => linearize4::fixtures::EXAMPLE2,
        "example3" => linearize4::fixtures::EXAMPLE3,
        "example4" => linearize4::fixtures::EXAMPLE4,
        other => {
            return Err(format!(
                "unknown fixture `{}` (available: example1..example4)",
                other
            ))
        }
    };
    Ok(text.to_string())
}

fn apply_overrides(req: &mut AnalysisRequest, opts: &CommonOpts) -> Result<(), String> {
    use linearize4::pipeline::SamplePlanSpec;
    let spec = req.sample_plan.get_or_insert_with(SamplePlanSpec::default);
    if let Some(seed) = opts.seed {
        spec.seed = Some(seed);
    }
    if let Some(b) = &opts.r#box {
        spec.bounds = Some([b[0], b[1], b[2], b[3]]);
    }
    if let Some(p) = opts.points {
        spec.points = Some(p);
    }
    for (k, v) in parse_params(&opts.param)? {
        req.parameters.insert(k, v);
    }
    Ok(())
}

fn emit(report: &Report, out: Option<&Path>) -> Result<(), String> {
    let json = report.to_json();
    match out {
        Some(p) => std::fs::write(p, json + "\n").map_err(|e| format!("{}: {}", p.display(), e)),
        None => {
            println!("{}", json);
            Ok(())
        }
    }
}

fn verdict_code(report: &Report) -> ExitCode {
    match report.verdict {
        Verdict::Linearizable => ExitCode::SUCCESS,
        Verdict::NotLinearizable => ExitCode::from(1),
    }
}

fn run_single(
    opts: &CommonOpts,
    path: Option<&Path>,
    out: Option<&Path>,
    construct: bool,
) -> Result<ExitCode, String> {
    let req = load_request(opts, path)?;
    let report = if construct {
        run_construct(&req, opts.tol)
    } else {
        run_test(&req, opts.tol)
    }
    .map_err(|e| e.to_string())?;
    emit(&report, out)?;
    Ok(verdict_code(&report))
}

fn run_batch(opts: &CommonOpts, construct: bool) -> Result<ExitCode, String> {
    let dir = opts
        .input
        .as_ref()
        .ok_or("--batch needs --input DIRECTORY")?;
    let out_dir = opts.out.clone().unwrap_or_else(|| dir.clone());
    std::fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {}", dir.display(), e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && !p
                    .file_stem()
                    .is_some_and(|s| s.to_string_lossy().ends_with(".report"))
        })
        .collect();
    entries.sort();
    let mut worst = ExitCode::SUCCESS;
    for path in entries {
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        let out = out_dir.join(format!("{}.report.json", stem));
        eprintln!("[{}]", path.display());
        match run_single(opts, Some(&path), Some(&out), construct) {
            Ok(code) => {
                if code != ExitCode::SUCCESS {
                    worst = code;
                }
            }
            Err(e) => {
                eprintln!("  failed: {}", e);
                worst = ExitCode::from(2);
            }
        }
    }
    Ok(worst)
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Test(opts) => {
            if opts.batch {
                run_batch(&opts, false)
            } else {
                run_single(&opts, None, opts.out.as_deref(), false)
            }
        }
        Command::Construct(opts) => {
            if opts.batch {
                run_batch(&opts, true)
            } else {
                run_single(&opts, None, opts.out.as_deref(), true)
            }
        }
        Command::Oracle {
            phi,
            psi,
            alpha,
            beta,
            param,
            out,
        } => {
            let parameters = parse_params(&param)?.into_iter().collect();
            let json = run_oracle(&OracleRequest {
                phi,
                psi,
                alpha,
                beta,
                parameters,
            })
            .map_err(|e| e.to_string())?;
            match out {
                Some(p) => std::fs::write(&p, json + "\n")
                    .map_err(|e| format!("{}: {}", p.display(), e))?,
                None => println!("{}", json),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            common,
            phi,
            psi,
            alpha,
            beta,
            traces,
        } => {
            let equation = load_request(&common, None)?;
            let report = run_verify(&VerifyRequest {
                equation,
                phi,
                psi,
                alpha,
                beta,
                traces,
            })
            .map_err(|e| e.to_string())?;
            emit(&report, common.out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ltbf::arith::Arith;
use ltbf::channel::{generate_drop, noncoherent_interference_covariance};
use ltbf::harness::checks::{self, Outcome};
use ltbf::harness::complexity::verify_complexity;
use ltbf::harness::{emit, run_sweep, SweepSpec};
use ltbf::inversion::{Method, Scaling};
use ltbf::ltbf::{CovarianceSet, LtbfDesign};

#[derive(Parser)]
#[command(name = "ltbf", version, about = "Long-term beamforming simulator with interference nulling and finite-precision inversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write CSV results.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// `path.to.key=value`, repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Restrict the sweep to these methods, e.g. `cg:4` or `poly:6`.
        #[arg(long = "method")]
        methods: Vec<Method>,
        /// Restrict the sweep to these precisions, e.g. `q15.16`.
        #[arg(long = "precision")]
        precisions: Vec<Arith>,
        #[arg(long)]
        scaling: Option<Scaling>,
        /// Run the trend, ordering and complexity checks; exit nonzero on failure.
        #[arg(long)]
        check: bool,
    },
    /// Print eigenvalue spectra of one drop's covariances as CSV.
    DumpDrop {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        drop: u64,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Also write the drop's channels in binary blob form.
        #[arg(long)]
        blob: Option<PathBuf>,
    },
    /// Fit measured multiply-add counts to the cost models.
    VerifyComplexity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn simulate(spec: SweepSpec, out: PathBuf, workers: usize, check: bool) -> ltbf::error::Result<bool> {
    let res = run_sweep(&spec, workers)?;
    let files = emit::write_all(&res, &out)?;
    eprintln!("{} records, {} files written to {}", res.records.len(), files.len(), out.display());
    if !check {
        return Ok(true);
    }
    let (results, report) = checks::all_checks(&spec, &res, workers)?;
    let mut text = String::new();
    for r in &results {
        let _ = writeln!(text, "{r}");
    }
    print!("{text}");
    std::fs::write(out.join("checks.txt"), &text)?;
    std::fs::write(out.join("complexity.csv"), report.to_string())?;
    Ok(results.iter().all(|r| r.outcome != Outcome::Fail))
}

fn dump_drop(spec: &SweepSpec, index: u64, blob: Option<PathBuf>) -> ltbf::error::Result<()> {
    let drop = generate_drop(&spec.scenario, index)?;
    if let Some(path) = blob {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        drop.write_blobs(&mut f)?;
    }
    let mut out = String::from("matrix,index,eigenvalue\n");
    let mut push = |name: &str, values: &[f64]| {
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(out, "{name},{i},{v:.12e}");
        }
    };
    for ue in 0..drop.n_ue() {
        push(&format!("q_ue{ue}"), &drop.srs_covariance(ue)?.eigen()?.values);
    }
    if drop.interferer.is_some() {
        push("q_interferer", &noncoherent_interference_covariance(&drop, spec.null_frames())?.eigen()?.values);
    }
    let covs = CovarianceSet::from_drop(&drop, spec.null_frames())?;
    push("q", &covs.q.eigen()?.values);
    if drop.interferer.is_some() {
        for n in spec.nulling_settings().into_iter().filter(|n| n.enabled) {
            let design = LtbfDesign::new(&covs, &n)?;
            push(&format!("r_v_q{}", design.nulling.rank), &design.target.eigen()?.values);
        }
    }
    print!("{out}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> ltbf::error::Result<bool> {
        match cli.command {
            Command::Simulate { config, overrides, out, workers, methods, precisions, scaling, check } => {
                let mut spec = SweepSpec::load(&config, &overrides)?;
                spec.restrict(&methods, &precisions, scaling);
                spec.validate()?;
                simulate(spec, out, workers, check)
            }
            Command::DumpDrop { config, drop, overrides, blob } => {
                dump_drop(&SweepSpec::load(&config, &overrides)?, drop, blob)?;
                Ok(true)
            }
            Command::VerifyComplexity { config, overrides } => {
                let spec = SweepSpec::load(&config, &overrides)?;
                let report = verify_complexity(&spec.scenario)?;
                print!("{report}");
                Ok(report.passed())
            }
        }
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

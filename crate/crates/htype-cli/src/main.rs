use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use htype::report::{self, Report, YamabeConfig};
use htype::{CliffordModule, HTypeGroup, HtypeError};

#[derive(Parser)]
#[command(name = "htype", version, about = "Numerics for groups of Heisenberg type")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Construct a Clifford module and write it as a group file.
    Gen {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        mult: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the construction report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Verify the Clifford relations of a group file.
    Verify {
        group: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify the module as Iwasawa type or not, with a witness.
    Iwasawa {
        group: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate the extremal profile and check the Yamabe PDE residual.
    SolutionCheck {
        group: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the spherical inversion: involution and norm identity.
    Invert {
        group: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure horizontal leakage of the inversion.
    Leakage {
        group: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the two-chart sphere transition (Iwasawa-type groups only).
    SphereCheck {
        group: PathBuf,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the tensor-subspace dimensions and projector diagnostics.
    Projectors {
        group: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate the conformal constant from the curvature formula.
    Curvature {
        group: PathBuf,
        #[arg(long, default_value_t = 25)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize the Yamabe quotient on a periodic grid.
    Yamabe {
        group: PathBuf,
        /// Resolution per coordinate, comma separated; a single value applies
        /// to every axis.
        #[arg(long, value_delimiter = ',', default_value = "16")]
        grid: Vec<usize>,
        /// Periods per coordinate, comma separated; a single value applies to
        /// every axis.
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        periods: Vec<f64>,
        /// Conformal constant; calibrated from the curvature formula when
        /// omitted.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        stencil_order: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV convergence log path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load_group(path: &PathBuf) -> Result<HTypeGroup, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read group file {}: {e}", path.display()))?;
    let module: CliffordModule = serde_json::from_str(&text)
        .map_err(|e| format!("malformed group file {}: {e}", path.display()))?;
    HTypeGroup::from_module(module).map_err(|e| format!("invalid module: {e}"))
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<ExitCode, String> {
    let json = report.to_json().map_err(|e| e.to_string())?;
    match out {
        Some(path) => std::fs::write(path, json.as_bytes())
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn verification_exit(err: HtypeError) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        HtypeError::Schema(_) | HtypeError::Json(_) | HtypeError::InvalidParameter(_) => {
            ExitCode::from(2)
        }
        _ => ExitCode::FAILURE,
    }
}

fn run() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Gen { k, mult, out, report: report_path } => {
            let (module, report) = match report::gen_report(k, mult) {
                Ok(v) => v,
                Err(e) => return verification_exit(e),
            };
            let module_json = match serde_json::to_string_pretty(&module) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            if let Err(e) = std::fs::write(&out, module_json.as_bytes()) {
                eprintln!("error: cannot write {}: {e}", out.display());
                return ExitCode::from(2);
            }
            match emit(&report, report_path.as_ref()) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Cmd::Verify { group, tolerance, out } => with_group(&group, |g| {
            Ok(report::verify_report(g.module(), tolerance))
        }, out),
        Cmd::Iwasawa { group, tolerance, out } => with_group(&group, |g| {
            Ok(report::iwasawa_report(g.module(), tolerance))
        }, out),
        Cmd::SolutionCheck { group, samples, seed, out } => with_group(&group, |g| {
            report::solution_check_report(g, samples, seed)
        }, out),
        Cmd::Invert { group, samples, seed, out } => with_group(&group, |g| {
            report::invert_report(g, samples, seed)
        }, out),
        Cmd::Leakage { group, samples, seed, out } => with_group(&group, |g| {
            report::leakage_report(g, samples, seed)
        }, out),
        Cmd::SphereCheck { group, samples, seed, out } => with_group(&group, |g| {
            report::sphere_check_report(g, samples, seed)
        }, out),
        Cmd::Projectors { group, out } => with_group(&group, |g| {
            report::projectors_report(g.module())
        }, out),
        Cmd::Curvature { group, samples, seed, out } => with_group(&group, |g| {
            report::curvature_report(g, samples, seed)
        }, out),
        Cmd::Yamabe {
            group,
            grid,
            periods,
            c,
            max_iters,
            tol,
            seed,
            stencil_order,
            out,
            csv,
        } => {
            let g = match load_group(&group) {
                Ok(g) => g,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let dim = g.dim();
            let resolution = broadcast(&grid, dim);
            let periods = broadcast(&periods, dim);
            let (resolution, periods) = match (resolution, periods) {
                (Some(r), Some(p)) => (r, p),
                _ => {
                    eprintln!("error: --grid and --periods need 1 or {dim} values");
                    return ExitCode::from(2);
                }
            };
            let c = match c {
                Some(v) => v,
                None => match report::curvature_report(&g, 25, 3) {
                    Ok(r) => r.payload["c_conformal"].as_f64().unwrap_or(f64::NAN),
                    Err(e) => return verification_exit(e),
                },
            };
            let cfg = YamabeConfig {
                resolution,
                periods,
                c,
                seed,
                max_iters,
                tol,
                stencil_order,
            };
            let report = match report::yamabe_report(&g, &cfg) {
                Ok(r) => r,
                Err(e) => return verification_exit(e),
            };
            if let Some(csv_path) = csv {
                let result: htype::YamabeResult =
                    match serde_json::from_value(report.payload.clone()) {
                        Ok(r) => r,
                        Err(e) => {
                            eprintln!("error: {e}");
                            return ExitCode::FAILURE;
                        }
                    };
                if let Err(e) = std::fs::write(&csv_path, report::yamabe_csv(&result)) {
                    eprintln!("error: cannot write {}: {e}", csv_path.display());
                    return ExitCode::from(2);
                }
            }
            match emit(&report, out.as_ref()) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}

fn broadcast<T: Clone>(values: &[T], dim: usize) -> Option<Vec<T>> {
    match values.len() {
        1 => Some(vec![values[0].clone(); dim]),
        n if n == dim => Some(values.to_vec()),
        _ => None,
    }
}

fn with_group(
    path: &PathBuf,
    f: impl FnOnce(&HTypeGroup) -> htype::Result<Report>,
    out: Option<PathBuf>,
) -> ExitCode {
    let g = match load_group(path) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match f(&g) {
        Ok(r) => r,
        Err(e) => return verification_exit(e),
    };
    match emit(&report, out.as_ref()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    run()
}

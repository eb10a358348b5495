use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use symred::catalog::{self, FamilyId, Instantiation};
use symred::detsys::{classical_determining, nonclassical_determining, HeatPDE};
use symred::odesolve::{
    solve_ivp, Ivp, LinearOde, OdeError, DEFAULT_ATOL, DEFAULT_EXCLUSION, DEFAULT_RTOL,
};
use symred::preset::{self, boundary_svg, sample_boundary, ExamplePreset, RunOptions};
use symred::reduction::{reduce_profile, singular_points, ReducedODE};
use symred::symkernel::{parse, ParseError};

/// Equivalence transformations and reductions of -div(E grad w) = 1.
#[derive(Parser)]
#[command(name = "symred", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemKind {
    Classical,
    Nonclassical,
}

#[derive(Subcommand)]
enum Command {
    /// Print a determining system, one equation per line.
    Detsys {
        kind: SystemKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a catalog family against the determining systems.
    Verify {
        #[arg(long)]
        family: FamilyId,
        /// Body of mu in w.
        #[arg(long)]
        mu: Option<String>,
        /// Value of k.
        #[arg(long, allow_negative_numbers = true)]
        k: Option<String>,
        /// Body in t of the family's auxiliary function.
        #[arg(long)]
        aux: Option<String>,
    },
    /// Reduce along d/dy - 2y d/dw and print the ODE as JSON.
    Reduce {
        #[arg(long, conflicts_with = "w")]
        example: Option<u8>,
        /// Profile W(x) of w = -y^2 + W(x).
        #[arg(long = "W", id = "w")]
        w: Option<String>,
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        interval: Option<Vec<f64>>,
    },
    /// Solve the reduced ODE and print x,E0,residual as CSV.
    Solve {
        #[arg(long, conflicts_with = "w")]
        example: Option<u8>,
        #[arg(long = "W", id = "w")]
        w: Option<String>,
        /// Anchor as `x=<value> E=<value>`.
        #[arg(long, num_args = 2, allow_hyphen_values = true)]
        anchor: Option<Vec<String>>,
        /// Preset branch used when no anchor is given.
        #[arg(long, default_value_t = 1)]
        branch: usize,
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        interval: Option<Vec<f64>>,
        #[arg(long)]
        exclusion: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline for an example (1 to 4, or `all`).
    Example {
        id: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sample a preset's boundary curve and print x,y as CSV.
    Boundary {
        id: u8,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

/// Relative tolerance, overridable with SYMRED_TOL.
fn tolerances() -> Result<(f64, f64)> {
    match std::env::var("SYMRED_TOL") {
        Ok(v) => {
            let rtol: f64 = v
                .parse()
                .with_context(|| format!("SYMRED_TOL={v} is not a number"))?;
            if !(rtol > 0.0) {
                bail!("SYMRED_TOL must be positive");
            }
            Ok((rtol, rtol * DEFAULT_ATOL / DEFAULT_RTOL))
        }
        Err(_) => Ok((DEFAULT_RTOL, DEFAULT_ATOL)),
    }
}

fn emit(out: Option<&PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
        }
        None => match std::io::stdout().write_all(body.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn preset(id: u8) -> Result<ExamplePreset> {
    Ok(ExamplePreset::get(id)?)
}

/// ODE and interval from either `--example` or `--W`.
fn ode_source(
    example: Option<u8>,
    w: Option<&str>,
    interval: Option<&[f64]>,
) -> Result<(ReducedODE, (f64, f64))> {
    let interval = interval.map(|v| (v[0], v[1]));
    match (example, w) {
        (Some(id), _) => {
            let p = preset(id)?;
            Ok((preset::reduce_preset(&p)?.0, interval.unwrap_or(p.interval)))
        }
        (None, Some(w)) => {
            let profile = parse(w)?;
            let interval = interval.ok_or_else(|| Usage("--W needs --interval".into()))?;
            Ok((reduce_profile(&profile)?, interval))
        }
        (None, None) => Err(Usage("give --example or --W".into()).into()),
    }
}

/// Invalid combination of arguments; exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn parse_anchor(parts: &[String]) -> Result<(f64, f64)> {
    let mut x = None;
    let mut e = None;
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Usage(format!("anchor part `{part}` is not key=value")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Usage(format!("anchor value `{v}` is not a number")))?;
        match k {
            "x" => x = Some(v),
            "E" | "E0" => e = Some(v),
            _ => return Err(Usage(format!("unknown anchor key `{k}`")).into()),
        }
    }
    match (x, e) {
        (Some(x), Some(e)) => Ok((x, e)),
        _ => Err(Usage("anchor needs x=<value> E=<value>".into()).into()),
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Detsys { kind, out } => {
            let pde = HeatPDE::new();
            let sys = match kind {
                SystemKind::Classical => classical_determining(&pde)?,
                SystemKind::Nonclassical => nonclassical_determining(&pde)?,
            };
            emit(out.as_ref(), &sys.to_string())?;
            Ok(0)
        }
        Command::Verify { family, mu, k, aux } => {
            let insts = match Instantiation::custom(mu.as_deref(), k.as_deref(), aux.as_deref())? {
                Some(inst) => vec![inst],
                None => catalog::instantiations(family),
            };
            let mut reports = Vec::new();
            let mut pass = true;
            for inst in &insts {
                let report = catalog::verify_family(family, inst)?;
                pass &= report.pass;
                reports.push(report);
            }
            let body = serde_json::to_string_pretty(
                &json!({"family": family, "pass": pass, "reports": reports}),
            )?;
            emit(None, &(body + "\n"))?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Reduce {
            example,
            w,
            interval,
        } => {
            let (ode, interval) = ode_source(example, w.as_deref(), interval.as_deref())?;
            let sing = singular_points(&ode, interval);
            let out = json!({
                "example": example,
                "c1": ode.c1.to_string(),
                "c0": ode.c0.to_string(),
                "r": ode.r.to_string(),
                "raw": ode.raw.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "interval": [interval.0, interval.1],
                "singular_points": sing,
            });
            emit(None, &(serde_json::to_string_pretty(&out)? + "\n"))?;
            Ok(0)
        }
        Command::Solve {
            example,
            w,
            anchor,
            branch,
            interval,
            exclusion,
            out,
        } => {
            let (ode, mut iv) = ode_source(example, w.as_deref(), interval.as_deref())?;
            let mut excl = DEFAULT_EXCLUSION;
            let (x0, e0) = match (&anchor, example) {
                (Some(parts), _) => parse_anchor(parts)?,
                (None, Some(id)) => {
                    let p = preset(id)?;
                    let b = p.branches.get(branch.wrapping_sub(1)).ok_or_else(|| {
                        Usage(format!("example {id} has {} branches", p.branches.len()))
                    })?;
                    if interval.is_none() {
                        iv = b.interval;
                    }
                    excl = b.exclusion;
                    b.anchor
                }
                (None, None) => return Err(Usage("--W needs --anchor".into()).into()),
            };
            let (rtol, atol) = tolerances()?;
            let ivp = Ivp::new(LinearOde::from_reduced(&ode), x0, e0, iv)
                .with_tolerances(rtol, atol)
                .with_exclusion(exclusion.unwrap_or(excl));
            let curve = solve_ivp(&ivp)?;
            emit(out.as_ref(), &curve.to_csv())?;
            eprintln!(
                "span [{}, {}], {} steps, max residual {:e}",
                curve.span.0, curve.span.1, curve.steps, curve.max_residual
            );
            Ok(0)
        }
        Command::Example { id, out } => {
            let (rtol, atol) = tolerances()?;
            let opts = RunOptions {
                rtol,
                atol,
                out_dir: Some(out),
            };
            let runs = if id == "all" {
                preset::run_all(&opts)
            } else {
                let n: u8 = id
                    .parse()
                    .map_err(|_| Usage(format!("example id `{id}` is not 1 to 4 or all")))?;
                vec![preset::run_example(n, &opts)]
            };
            let mut code = 0;
            let mut text = String::new();
            for run in runs {
                let run = run?;
                let r = &run.report;
                let verdict = |pass: bool| if pass { "pass" } else { "FAIL" };
                text.push_str(&format!("example {}: {}\n", run.preset.id, verdict(r.pass)));
                for s in &r.stages {
                    text.push_str(&format!("  {:<16} {}\n", s.name, verdict(s.pass)));
                }
                for o in &r.outputs {
                    text.push_str(&format!("  wrote {o}\n"));
                }
                code = code.max(r.exit_code());
            }
            emit(None, &text)?;
            Ok(code)
        }
        Command::Boundary { id, n, svg } => {
            let p = preset(id)?;
            let pts = sample_boundary(&p, n)?;
            let mut csv = String::from("x,y\n");
            for (x, y) in &pts {
                csv.push_str(&format!("{x:.15e},{y:.15e}\n"));
            }
            emit(None, &csv)?;
            if let Some(path) = svg {
                std::fs::write(&path, boundary_svg(&p, &pts))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(0)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() || cause.is::<ParseError>() {
            return 2;
        }
        if cause.is::<OdeError>() {
            return 3;
        }
        if let Some(
            catalog::CatalogError::Params { .. } | catalog::CatalogError::UnknownFamily(_),
        ) = cause.downcast_ref()
        {
            return 2;
        }
        if let Some(p) = cause.downcast_ref::<preset::PresetError>() {
            return match p {
                preset::PresetError::UnknownExample(_) | preset::PresetError::GridTooSmall => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_parsing() {
        let parts = |a: &str, b: &str| vec![a.to_string(), b.to_string()];
        assert_eq!(parse_anchor(&parts("x=-1", "E=0.2")).unwrap(), (-1.0, 0.2));
        assert_eq!(parse_anchor(&parts("E0=3", "x=2")).unwrap(), (2.0, 3.0));
        assert!(parse_anchor(&parts("x=1", "y=2")).is_err());
        assert!(parse_anchor(&parts("x=1", "x=2")).is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Usage("bad".into()).into()), 2);
        assert_eq!(
            exit_code(&anyhow::Error::new(OdeError::Singular(0.0)).context("solving")),
            3
        );
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
    }
}

//! The four worked examples: boundary curves, data, anchors and the
//! end-to-end pipeline that reduces, solves and compares them.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::odesolve::{
    compare, solve_ivp, ClosedForm, ClosedFormKind, Ivp, LinearOde, OdeError, SolutionCurve,
    DEFAULT_ATOL, DEFAULT_RTOL,
};
use crate::plot::{emit_svg, Series};
use crate::reduction::{
    invariant_data, quadratic_generator, reduce_to_ode, singular_points, ReducedODE,
    ReductionError, SingularPoint,
};
use crate::symkernel::{eval_numeric, is_zero, parse, Expr, KernelError};

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown example {0}; expected 1 to 4")]
    UnknownExample(u8),
    #[error("boundary curve is empty on the interval")]
    EmptyCurve,
    #[error("grid needs at least 2 points")]
    GridTooSmall,
    #[error("data does not vanish on the boundary: |w| = {0:e} at a sample")]
    NotDirichlet(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One solution branch between singular points.
#[derive(Clone, Debug, Serialize)]
pub struct Branch {
    pub anchor: (f64, f64),
    pub interval: (f64, f64),
    pub exclusion: f64,
    pub reference: ClosedForm,
    /// Constant of the closed form the anchor value comes from, if the
    /// anchor is derived rather than given.
    pub constant: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExamplePreset {
    pub id: u8,
    pub name: &'static str,
    /// Boundary `{P(x, y) = 0}`.
    pub boundary: Expr,
    /// Profile `W(x)`; the data is `w = -y^2 + W(x)`.
    pub profile: Expr,
    pub data: Expr,
    /// `data * multiplier + boundary = 0` identically.
    pub multiplier: Expr,
    pub interval: (f64, f64),
    /// Expected ODE `c1, c0, r`.
    pub expected: [&'static str; 3],
    pub expected_singular: Vec<f64>,
    pub branches: Vec<Branch>,
}

fn p(s: &str) -> Expr {
    parse(s).expect("preset expressions parse")
}

/// Right end of the Example 4 interval, the positive root of
/// `-8a^4 + a^2 + 2 = 0`.
pub fn example4_end() -> f64 {
    (1.0 + 65f64.sqrt()).sqrt() / 4.0
}

fn branch(
    anchor: (f64, f64),
    interval: (f64, f64),
    exclusion: f64,
    kind: ClosedFormKind,
) -> Branch {
    Branch {
        anchor,
        interval,
        exclusion,
        reference: ClosedForm::new(kind, anchor.0),
        constant: None,
    }
}

/// Branch anchored on a closed form with a given constant.
fn branch_at_constant(
    x: f64,
    c: f64,
    interval: (f64, f64),
    exclusion: f64,
    kind: ClosedFormKind,
) -> Branch {
    let reference = ClosedForm::new(kind, x);
    let e = reference.eval(x, c).expect("anchor lies inside the branch");
    Branch {
        anchor: (x, e),
        interval,
        exclusion,
        reference,
        constant: Some(c),
    }
}

impl ExamplePreset {
    pub fn get(id: u8) -> Result<ExamplePreset, PresetError> {
        use ClosedFormKind::*;
        let preset = match id {
            1 => {
                let iv = (-1.0, 1.0);
                ExamplePreset {
                    id,
                    name: "Newton's egg",
                    boundary: p("y^2 - (x^2-1)*(x-3)"),
                    profile: p("(x^2-1)*(x-3)"),
                    data: p("-y^2 + (x^2-1)*(x-3)"),
                    multiplier: Expr::one(),
                    interval: iv,
                    expected: ["3*x^2 - 6*x - 1", "6*x - 8", "-1"],
                    expected_singular: vec![1.0 - 2.0 / 3f64.sqrt()],
                    branches: vec![
                        branch((-1.0, 0.2), iv, 1e-2, Example1),
                        branch((1.0, 0.2), iv, 1e-2, Example1),
                    ],
                }
            }
            2 => {
                let iv = (1.0, 3.0);
                ExamplePreset {
                    id,
                    name: "Granville's egg",
                    boundary: p("x^2*y^2 - (x-3)*(1-x)"),
                    profile: p("(x-3)*(1-x)/x^2"),
                    data: p("-y^2 + (x-3)*(1-x)/x^2"),
                    multiplier: p("x^2"),
                    interval: iv,
                    expected: ["4*x^2 - 6*x", "2*x^4 - 8*x + 18", "x^4"],
                    expected_singular: vec![1.5],
                    branches: vec![
                        branch((1.0, 0.2), iv, 1e-2, Example2),
                        branch((3.0, 0.6), iv, 1e-2, Example2),
                    ],
                }
            }
            3 => {
                let iv = (-1.0, 1.0);
                ExamplePreset {
                    id,
                    name: "generalized Lame curve",
                    boundary: p("x^4 + y^2 - 1"),
                    profile: p("1 - x^4"),
                    data: p("1 - x^4 - y^2"),
                    multiplier: Expr::one(),
                    interval: iv,
                    expected: ["4*x^3", "12*x^2 + 2", "1"],
                    expected_singular: vec![0.0],
                    branches: vec![
                        branch((-1.0, 0.25), iv, 0.2, Example3),
                        branch((1.0, 0.25), iv, 0.2, Example3),
                    ],
                }
            }
            4 => {
                let a = example4_end();
                let iv = (-a, a);
                // C1 = C2 = 0 in the printed constants: C = pi/2 outside,
                // C = 0 inside.
                ExamplePreset {
                    id,
                    name: "rounded-corner rectangle",
                    boundary: p("y^2 + 8*x^4 - x^2 - 2"),
                    profile: p("2 + x^2 - 8*x^4"),
                    data: p("2 + x^2 - 8*x^4 - y^2"),
                    multiplier: Expr::one(),
                    interval: iv,
                    expected: ["32*x^3 - 2*x", "96*x^2", "1"],
                    expected_singular: vec![-0.25, 0.0, 0.25],
                    branches: vec![
                        branch_at_constant(-a, PI / 2.0, iv, 1e-2, Example4Outer),
                        branch_at_constant(-0.125, 0.0, iv, 1e-2, Example4Inner),
                        branch_at_constant(0.125, 0.0, iv, 1e-2, Example4Inner),
                        branch_at_constant(a, PI / 2.0, iv, 1e-2, Example4Outer),
                    ],
                }
            }
            _ => return Err(PresetError::UnknownExample(id)),
        };
        Ok(preset)
    }

    pub fn all() -> Vec<ExamplePreset> {
        (1..=4)
            .map(|i| ExamplePreset::get(i).expect("ids 1 to 4 exist"))
            .collect()
    }

    /// `y^2` on the boundary as a function of `x`.
    pub fn y_squared(&self, x: f64) -> Result<f64, KernelError> {
        let vars: HashMap<String, f64> = [("x".to_string(), x)].into();
        eval_numeric(&self.profile, &vars)
    }

    pub fn w_at(&self, x: f64, y: f64) -> Result<f64, KernelError> {
        let vars: HashMap<String, f64> = [("x".to_string(), x), ("y".to_string(), y)].into();
        eval_numeric(&self.data, &vars)
    }

    /// `data * multiplier + boundary` vanishes identically.
    pub fn dirichlet_symbolic(&self) -> Result<bool, KernelError> {
        is_zero(&(self.data.clone() * self.multiplier.clone() + self.boundary.clone()))
    }
}

/// Upper and lower boundary points on a uniform `x` grid, checked against
/// the data.
pub fn sample_boundary(preset: &ExamplePreset, n: usize) -> Result<Vec<(f64, f64)>, PresetError> {
    if n < 2 {
        return Err(PresetError::GridTooSmall);
    }
    let (a, b) = preset.interval;
    let mut upper = Vec::new();
    for i in 0..n {
        let x = if i + 1 == n {
            b
        } else {
            a + (b - a) * i as f64 / (n - 1) as f64
        };
        let mut y2 = preset.y_squared(x)?;
        if y2 < 0.0 && y2 > -1e-12 {
            y2 = 0.0;
        }
        if y2 >= 0.0 {
            upper.push((x, y2.sqrt()));
        }
    }
    if upper.is_empty() {
        return Err(PresetError::EmptyCurve);
    }
    let mut pts = upper.clone();
    pts.extend(
        upper
            .iter()
            .rev()
            .filter(|(_, y)| *y > 0.0)
            .map(|&(x, y)| (x, -y)),
    );
    for &(x, y) in &pts {
        let w = preset.w_at(x, y)?;
        if !(w.abs() < 1e-12) {
            return Err(PresetError::NotDirichlet(w.abs()));
        }
    }
    Ok(pts)
}

/// Tolerances and output location for a run.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub rtol: f64,
    pub atol: f64,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            out_dir: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Symbolic,
    Numeric,
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub kind: StageKind,
    pub pass: bool,
    pub detail: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub subcommand: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub pass: bool,
    pub stages: Vec<Stage>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(subcommand: &str) -> Self {
        RunReport {
            subcommand: subcommand.to_string(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            pass: true,
            stages: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, name: &str, kind: StageKind, pass: bool, detail: Value) {
        self.pass &= pass;
        self.stages.push(Stage {
            name: name.to_string(),
            kind,
            pass,
            detail,
        });
    }

    /// 0 all pass, 1 verification failure, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else if self
            .stages
            .iter()
            .any(|s| !s.pass && s.kind == StageKind::Numeric)
        {
            3
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Everything except timings, for reproducibility checks.
    pub fn symbolic_json(&self) -> String {
        let stages: Vec<&Stage> = self
            .stages
            .iter()
            .filter(|s| s.kind == StageKind::Symbolic)
            .collect();
        serde_json::to_string_pretty(&stages).expect("stages serialize")
    }
}

/// A solved branch with its comparison against the closed form.
#[derive(Clone, Debug)]
pub struct BranchRun {
    pub branch: Branch,
    pub curve: SolutionCurve,
}

#[derive(Clone, Debug)]
pub struct ExampleRun {
    pub preset: ExamplePreset,
    pub report: RunReport,
    pub ode: Option<ReducedODE>,
    pub singular: Vec<SingularPoint>,
    pub boundary: Vec<(f64, f64)>,
    pub branches: Vec<BranchRun>,
}

/// Reduced ODE of a preset, compared with the expected coefficients.
pub fn reduce_preset(preset: &ExamplePreset) -> Result<(ReducedODE, bool), PresetError> {
    let ode = reduce_to_ode(&invariant_data(&quadratic_generator(), &preset.profile)?)?;
    let got = [&ode.c1, &ode.c0, &ode.r];
    let mut matches = true;
    for (g, e) in got.iter().zip(preset.expected) {
        matches &= is_zero(&((*g).clone() - p(e)))?;
    }
    Ok((ode, matches))
}

fn solve_branch(
    ode: &ReducedODE,
    b: &Branch,
    opts: &RunOptions,
) -> Result<SolutionCurve, OdeError> {
    let ivp = Ivp::new(
        LinearOde::from_reduced(ode),
        b.anchor.0,
        b.anchor.1,
        b.interval,
    )
    .with_tolerances(opts.rtol, opts.atol)
    .with_exclusion(b.exclusion);
    let mut curve = solve_ivp(&ivp)?;
    curve.comparison = Some(compare(&curve, &b.reference)?);
    Ok(curve)
}

/// Grid size for boundary sampling; gives at least 1000 points per curve.
pub const BOUNDARY_GRID: usize = 600;

/// Relative deviation allowed between the numeric and closed-form curves.
pub const COMPARISON_TOL: f64 = 1e-6;
/// Term-relative ODE residual allowed along a numeric curve.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Full pipeline for one preset.
pub fn run_example(id: u8, opts: &RunOptions) -> Result<ExampleRun, PresetError> {
    let preset = ExamplePreset::get(id)?;
    let mut report = RunReport::new("example");
    report.inputs.insert("id".into(), id.to_string());
    report
        .inputs
        .insert("rtol".into(), format!("{:e}", opts.rtol));
    report
        .inputs
        .insert("atol".into(), format!("{:e}", opts.atol));
    let mut run = ExampleRun {
        preset: preset.clone(),
        report,
        ode: None,
        singular: Vec::new(),
        boundary: Vec::new(),
        branches: Vec::new(),
    };
    let t = Instant::now();
    let sym = preset.dirichlet_symbolic();
    let boundary = sample_boundary(&preset, BOUNDARY_GRID);
    let dirichlet_ok = matches!(sym, Ok(true)) && boundary.is_ok();
    run.report.push(
        "dirichlet",
        StageKind::Symbolic,
        dirichlet_ok,
        json!({
            "boundary": preset.boundary.to_string(),
            "data": preset.data.to_string(),
            "symbolic": matches!(sym, Ok(true)),
            "samples": boundary.as_ref().map(Vec::len).unwrap_or(0),
            "error": boundary.as_ref().err().map(ToString::to_string),
        }),
    );
    run.boundary = boundary.unwrap_or_default();
    run.report
        .timings_ms
        .insert("dirichlet".into(), t.elapsed().as_secs_f64() * 1e3);

    let t = Instant::now();
    let ode = match reduce_preset(&preset) {
        Ok((ode, matches)) => {
            run.report.push(
                "reduce",
                StageKind::Symbolic,
                matches,
                json!({"c1": ode.c1.to_string(), "c0": ode.c0.to_string(), "r": ode.r.to_string(), "expected": preset.expected}),
            );
            ode
        }
        Err(e) => {
            run.report.push(
                "reduce",
                StageKind::Symbolic,
                false,
                json!({"error": e.to_string()}),
            );
            return Ok(run);
        }
    };
    run.report
        .timings_ms
        .insert("reduce".into(), t.elapsed().as_secs_f64() * 1e3);

    let singular = singular_points(&ode, preset.interval);
    let found: Vec<f64> = singular.iter().map(|s| s.value).collect();
    let singular_ok = found.len() == preset.expected_singular.len()
        && found
            .iter()
            .zip(&preset.expected_singular)
            .all(|(a, b)| (a - b).abs() < 1e-10);
    run.report.push(
        "singular_points",
        StageKind::Symbolic,
        singular_ok,
        json!({
            "values": found,
            "exact": singular.iter().map(|s| s.exact.clone()).collect::<Vec<_>>(),
        }),
    );
    run.singular = singular;
    run.ode = Some(ode.clone());

    let t = Instant::now();
    let mut numeric = Vec::new();
    let mut numeric_ok = true;
    for (k, b) in preset.branches.iter().enumerate() {
        match solve_branch(&ode, b, opts) {
            Ok(curve) => {
                let cmp = curve.comparison.clone().expect("comparison attached");
                // a branch must lie strictly between consecutive singular points
                let split = found
                    .iter()
                    .all(|s| !(curve.span.0 < *s && *s < curve.span.1));
                let ok = cmp.max_rel_error < COMPARISON_TOL
                    && curve.max_residual < RESIDUAL_TOL
                    && split;
                numeric_ok &= ok;
                numeric.push(json!({
                    "branch": k,
                    "anchor": [b.anchor.0, b.anchor.1],
                    "span": [curve.span.0, curve.span.1],
                    "max_residual": curve.max_residual,
                    "max_rel_error": cmp.max_rel_error,
                    "fitted_constant": cmp.fitted_constant,
                    "pass": ok,
                }));
                run.branches.push(BranchRun {
                    branch: b.clone(),
                    curve,
                });
            }
            Err(e) => {
                numeric_ok = false;
                numeric.push(json!({"branch": k, "error": e.to_string(), "pass": false}));
            }
        }
    }
    run.report.push(
        "solve",
        StageKind::Numeric,
        numeric_ok,
        Value::Array(numeric),
    );
    run.report
        .timings_ms
        .insert("solve".into(), t.elapsed().as_secs_f64() * 1e3);

    if let Some(dir) = &opts.out_dir {
        write_artifacts(&mut run, dir)?;
    }
    Ok(run)
}

/// Boundary plot of a preset.
pub fn boundary_svg(preset: &ExamplePreset, points: &[(f64, f64)]) -> String {
    emit_svg(
        &format!("Example {}: {}", preset.id, preset.name),
        &[Series::new(&preset.boundary.to_string(), points.to_vec()).closed()],
    )
}

/// Parameter curves, one polyline per branch.
pub fn parameter_svg(run: &ExampleRun) -> String {
    let series: Vec<Series> = run
        .branches
        .iter()
        .enumerate()
        .map(|(k, b)| {
            Series::new(
                &format!(
                    "E0, branch {} (E({}) = {:.4})",
                    k + 1,
                    fmt_x(b.branch.anchor.0),
                    b.branch.anchor.1
                ),
                b.curve.samples.iter().map(|s| (s.x, s.e)).collect(),
            )
        })
        .collect();
    emit_svg(
        &format!("Example {}: parameter E0(x)", run.preset.id),
        &series,
    )
}

fn fmt_x(x: f64) -> String {
    format!("{x:.4}")
        .trim_end_matches('0')
        .trim_end_matches('.')
        .to_string()
}

fn write_artifacts(run: &mut ExampleRun, dir: &Path) -> Result<(), PresetError> {
    std::fs::create_dir_all(dir)?;
    let id = run.preset.id;
    let mut outputs = Vec::new();
    let mut write = |name: String, body: &str| -> Result<(), PresetError> {
        let path = dir.join(&name);
        std::fs::write(&path, body)?;
        outputs.push(path.display().to_string());
        Ok(())
    };
    write(
        format!("example{id}_boundary.svg"),
        &boundary_svg(&run.preset, &run.boundary),
    )?;
    write(format!("example{id}_parameter.svg"), &parameter_svg(run))?;
    for (k, b) in run.branches.iter().enumerate() {
        write(
            format!("example{id}_branch{}.csv", k + 1),
            &b.curve.to_csv(),
        )?;
    }
    let report_path = dir.join(format!("example{id}.json"));
    outputs.push(report_path.display().to_string());
    run.report.outputs = outputs;
    std::fs::write(report_path, run.report.to_json())?;
    Ok(())
}

/// All four presets in parallel worker threads.
pub fn run_all(opts: &RunOptions) -> Vec<Result<ExampleRun, PresetError>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = (1..=4)
            .map(|id| s.spawn(move || run_example(id, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_holds_for_every_preset() {
        for preset in ExamplePreset::all() {
            assert!(
                preset.dirichlet_symbolic().unwrap(),
                "example {}",
                preset.id
            );
            let pts = sample_boundary(&preset, 500).unwrap();
            assert!(pts.len() >= 500);
        }
    }

    #[test]
    fn boundary_samples() {
        let e1 = ExamplePreset::get(1).unwrap();
        let pts = sample_boundary(&e1, 101).unwrap();
        assert_eq!(pts.len(), 200);
        let e3 = ExamplePreset::get(3).unwrap();
        let pts = sample_boundary(&e3, 3).unwrap();
        assert_eq!(pts, vec![(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0), (0.0, -1.0)]);
        let e4 = ExamplePreset::get(4).unwrap();
        let a = example4_end();
        assert!((-8.0 * a.powi(4) + a * a + 2.0).abs() < 1e-12);
        let pts = sample_boundary(&e4, 11).unwrap();
        assert_eq!(pts[0], (-a, 0.0));
        assert_eq!(pts[10], (a, 0.0));
        assert!(matches!(
            sample_boundary(&e4, 1),
            Err(PresetError::GridTooSmall)
        ));
        assert!(matches!(
            ExamplePreset::get(5),
            Err(PresetError::UnknownExample(5))
        ));
    }

    #[test]
    fn every_example_passes_end_to_end() {
        for run in run_all(&RunOptions::default()) {
            let run = run.unwrap();
            assert!(run.report.pass, "{}", run.report.to_json());
            assert_eq!(run.report.exit_code(), 0);
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let a = run_example(4, &RunOptions::default()).unwrap();
        let b = run_example(4, &RunOptions::default()).unwrap();
        assert_eq!(a.report.symbolic_json(), b.report.symbolic_json());
        assert_eq!(parameter_svg(&a), parameter_svg(&b));
        assert_eq!(a.branches.len(), 4);
    }

    #[test]
    fn artifacts_are_written() {
        let dir = std::env::temp_dir().join(format!("symred-artifacts-{}", std::process::id()));
        let opts = RunOptions {
            out_dir: Some(dir.clone()),
            ..RunOptions::default()
        };
        let run = run_example(1, &opts).unwrap();
        assert_eq!(run.report.outputs.len(), 5);
        let csv = std::fs::read_to_string(dir.join("example1_branch1.csv")).unwrap();
        assert!(csv.starts_with("x,E0,residual\n"));
        let json: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("example1.json")).unwrap())
                .unwrap();
        assert_eq!(json["pass"], Value::Bool(true));
        std::fs::remove_dir_all(dir).unwrap();
    }
}

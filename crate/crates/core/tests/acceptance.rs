//! Acceptance report: one line per criterion, with timings.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use symred::catalog::{
    self, check_abel_reduction, check_conservation_forms, check_general_reduction,
    check_monge_ampere_chain, check_separation, AbelCase, FamilyId,
};
use symred::detsys::{
    classical_determining, isc_eliminate, nonclassical_determining, HeatPDE,
    InvariantSurfaceConditions,
};
use symred::jetprolong::VectorField;
use symred::odesolve::{ClosedForm, ClosedFormKind, LinearOde, DEFAULT_ATOL, DEFAULT_RTOL};
use symred::preset::{
    example4_end, run_example, sample_boundary, ExamplePreset, ExampleRun, RunOptions,
};
use symred::reduction::reduce_profile;
use symred::symkernel::{is_zero_with, parse, Expr, PrimMode, RatFn};

struct Outcome {
    pass: bool,
    detail: String,
    /// Failure that matches a recorded discrepancy.
    known: bool,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
            known: false,
        }
    }
}

type Check = fn() -> Result<Outcome, String>;

fn p(s: &str) -> Expr {
    parse(s).unwrap()
}

fn zero(e: &Expr) -> Result<bool, String> {
    is_zero_with(e, PrimMode::Opaque).map_err(|e| e.to_string())
}

fn all_zero(r: &[RatFn]) -> bool {
    r.iter().all(RatFn::is_zero)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Coefficients of the reduced equation written out by hand.
fn coefficients() -> Result<Outcome, String> {
    let red =
        isc_eliminate(&HeatPDE::new(), &InvariantSurfaceConditions::general()).map_err(err)?;
    let d = |f: &str, o: &str| format!("D({f},x,y,w,E,{o})");
    let (xi, phi, psi) = ("xi(x,y,w,E)", "phi(x,y,w,E)", "psi(x,y,w,E)");
    let (xi_x, xi_y, xi_w, xi_e) = (
        d("xi", "1,0,0,0"),
        d("xi", "0,1,0,0"),
        d("xi", "0,0,1,0"),
        d("xi", "0,0,0,1"),
    );
    let (phi_x, phi_y, phi_w, phi_e) = (
        d("phi", "1,0,0,0"),
        d("phi", "0,1,0,0"),
        d("phi", "0,0,1,0"),
        d("phi", "0,0,0,1"),
    );
    let want = [
        format!("E*({xi}^2+1)"),
        format!("2*E*{xi}*{xi_w}"),
        format!("{xi}^2 + 2*E*{xi}*{xi_e} + 1"),
        format!(
            "-{xi}*{psi} + E*({xi}*{xi_x} - {xi_y} - {phi}*{xi_w} - {psi}*{xi_e} - 2*{xi}*{phi_w})"
        ),
        format!("-{xi}*({phi} + 2*E*{phi_e})"),
        format!("{phi}*{psi} + 1 - E*({xi}*{phi_x} - {phi_y} - {phi}*{phi_w} - {psi}*{phi_e})"),
    ];
    let mut bad = Vec::new();
    for (i, (got, w)) in red.a.iter().zip(&want).enumerate() {
        if !zero(&(got.clone() - p(w)))? {
            bad.push(format!("A{}", i + 1));
        }
    }
    Ok(Outcome::new(
        bad.is_empty(),
        if bad.is_empty() {
            "A1..A6 exact".into()
        } else {
            format!("mismatch {bad:?}")
        },
    ))
}

fn classical_family() -> Result<Outcome, String> {
    let sys = classical_determining(&HeatPDE::new()).map_err(err)?;
    let vf = VectorField::new(
        p("k1 - k3*y + k4*x"),
        p("k2 + k3*x + k4*y"),
        p("mu(w)"),
        p("E*(2*k4 - D(mu,w,1))"),
    );
    let r = sys.residual_field(&vf).map_err(err)?;
    Ok(Outcome::new(
        all_zero(&r),
        format!(
            "{} equations, all residuals zero: {}",
            r.len(),
            all_zero(&r)
        ),
    ))
}

fn structural_forcing() -> Result<Outcome, String> {
    let sys = nonclassical_determining(&HeatPDE::new()).map_err(err)?;
    let mut pass = true;
    let mut notes = Vec::new();
    for xi in ["w", "E", "w*x"] {
        let r = sys
            .residual_field(&VectorField::new(p(xi), p("1"), p("0"), p("0")))
            .map_err(err)?;
        let forced = !all_zero(&r);
        pass &= forced;
        if !forced {
            notes.push(format!("xi = {xi} not rejected"));
        }
    }
    let general = check_general_reduction().map_err(err)?;
    pass &= general;
    if !general {
        notes.push("general A, G form fails".into());
    }
    let mut count = 0;
    for id in &FamilyId::ALL[2..] {
        let insts = catalog::instantiations(*id);
        pass &= !insts.is_empty();
        for inst in insts {
            let rep = catalog::verify_family(*id, &inst).map_err(err)?;
            count += 1;
            if !rep.pass {
                pass = false;
                notes.push(format!("{id} [{}]", inst.label));
            }
        }
    }
    let detail = if notes.is_empty() {
        format!("3 forced rejections, general form, {count} instantiations of F1..F9")
    } else {
        notes.join("; ")
    };
    Ok(Outcome::new(pass, detail))
}

fn transformations() -> Result<Outcome, String> {
    let ma = check_monge_ampere_chain().map_err(err)?;
    let abel_g = check_abel_reduction(AbelCase::G).map_err(err)?;
    let abel_q = check_abel_reduction(AbelCase::Q).map_err(err)?;
    let sep = check_separation().map_err(err)?;
    let cons = check_conservation_forms().map_err(err)?;
    let others = ma.t_equation
        && ma.legendre
        && !ma.negative_control
        && abel_g
        && abel_q
        && sep
        && cons.holds();
    let pass = others && ma.shift;
    let mut detail = format!(
        "T-equation {}, Legendre {}, shift {}, Abel {}/{}, separation {}, conservation {}/{}/{}",
        ma.t_equation,
        ma.legendre,
        ma.shift,
        abel_g,
        abel_q,
        sep,
        cons.g_first,
        cons.h_equation,
        cons.s_equation
    );
    // the shift identity holds with right side -1/(4 (a^2+b^2)^2), not -1/(a^2+b^2)^2
    let known = others && !ma.shift && ma.shift_quarter;
    if known {
        detail.push_str("; shift holds only with the constant 1/4");
    }
    Ok(Outcome {
        pass,
        detail,
        known,
    })
}

fn example(id: u8) -> Result<ExampleRun, String> {
    let opts = RunOptions {
        rtol: DEFAULT_RTOL,
        atol: DEFAULT_ATOL,
        out_dir: None,
    };
    run_example(id, &opts).map_err(err)
}

fn stage_summary(run: &ExampleRun) -> (bool, String) {
    let failed: Vec<&str> = run
        .report
        .stages
        .iter()
        .filter(|s| !s.pass)
        .map(|s| s.name.as_str())
        .collect();
    let worst = run
        .branches
        .iter()
        .filter_map(|b| b.curve.comparison.as_ref().map(|c| c.max_rel_error))
        .fold(0.0, f64::max);
    let text = if failed.is_empty() {
        format!("example {}: max rel error {worst:.1e}", run.preset.id)
    } else {
        format!("example {}: failed {failed:?}", run.preset.id)
    };
    (run.report.pass, text)
}

fn example_one() -> Result<Outcome, String> {
    let run = example(1)?;
    let ode = run.ode.as_ref().ok_or("no reduced equation")?;
    let exact = zero(&(ode.c1.clone() - p("3*x^2 - 6*x - 1")))?
        && zero(&(ode.c0.clone() - p("6*x - 8")))?
        && zero(&(ode.r.clone() + p("1")))?;
    let x0 = 1.0 - 2.0 / 3f64.sqrt();
    let singular = run.singular.len() == 1 && (run.singular[0].value - x0).abs() < 1e-10;
    // the branch anchored at E(-1) = 0.2 covers [-1, x0 - 1e-2]
    let left = run
        .branches
        .iter()
        .find(|b| b.branch.anchor == (-1.0, 0.2))
        .ok_or("no left branch")?;
    let span_ok = left.curve.span.0 <= -1.0 && (left.curve.span.1 - (x0 - 1e-2)).abs() < 1e-12;
    let err_left = left
        .curve
        .comparison
        .as_ref()
        .map_or(f64::INFINITY, |c| c.max_rel_error);
    let (stages, summary) = stage_summary(&run);
    let pass = exact && singular && span_ok && err_left < 1e-6 && stages;
    Ok(Outcome::new(
        pass,
        format!("ODE exact {exact}, singular point {singular}, left branch rel error {err_left:.1e}; {summary}"),
    ))
}

/// Largest residual of a closed form on a grid over `[a, b]`.
fn closed_residual(
    ode: &LinearOde,
    form: &ClosedForm,
    c: f64,
    a: f64,
    b: f64,
) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let x = a + (b - a) * f64::from(i) / 200.0;
        let e = form.eval(x, c).map_err(err)?;
        let de = form.derivative(x, c).map_err(err)?;
        worst = worst.max(ode.residual(x, e, de));
    }
    Ok(worst)
}

fn examples_two_to_four() -> Result<Outcome, String> {
    let mut pass = true;
    let mut notes = Vec::new();
    for id in 2..=4 {
        let (ok, text) = stage_summary(&example(id)?);
        pass &= ok;
        notes.push(text);
    }
    let ode3 = LinearOde::from_reduced(&reduce_profile(&p("1 - x^4")).map_err(err)?);
    let f3 = ClosedForm::new(ClosedFormKind::Example3, 1.0);
    let r3 = closed_residual(&ode3, &f3, 0.3, 0.2, 1.0)?
        .max(closed_residual(&ode3, &f3, -1.2, -1.0, -0.2)?);
    pass &= r3 < 1e-9;
    notes.push(format!("example 3 closed form residual {r3:.1e}"));

    let ode4 = LinearOde::from_reduced(&reduce_profile(&p("2 + x^2 - 8*x^4")).map_err(err)?);
    let a = example4_end();
    let ours = ClosedForm::new(ClosedFormKind::Example4Outer, a);
    let printed = ClosedForm::new(ClosedFormKind::PrintedExample4Outer, a);
    let shift = [0.3, 0.5, a]
        .iter()
        .map(|&x| {
            Ok((printed.eval(x, 0.0).map_err(err)? - ours.eval(x, PI / 2.0).map_err(err)?).abs())
        })
        .collect::<Result<Vec<f64>, String>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let inner = ClosedForm::new(ClosedFormKind::Example4Inner, 0.125);
    let printed_inner = ClosedForm::new(ClosedFormKind::PrintedExample4Inner, 0.125);
    let r_outer = closed_residual(&ode4, &ours, 0.0, 0.3, a)?;
    let r_inner = closed_residual(&ode4, &inner, 0.0, 0.02, 0.23)?;
    let r_printed_inner = closed_residual(&ode4, &printed_inner, 0.0, 0.02, 0.23)?;
    let reading = shift < 1e-12 && r_outer < 1e-9 && r_inner < 1e-9 && r_printed_inner > 1e-2;
    pass &= reading;
    notes.push(format!(
        "example 4 reading: outer residual {r_outer:.1e}, inner {r_inner:.1e}, literal inner {r_printed_inner:.1e}"
    ));
    Ok(Outcome::new(pass, notes.join("; ")))
}

fn dirichlet() -> Result<Outcome, String> {
    let mut pass = true;
    let mut notes = Vec::new();
    for preset in ExamplePreset::all() {
        let symbolic = preset.dirichlet_symbolic().map_err(err)?;
        let pts = sample_boundary(&preset, 600).map_err(err)?;
        let mut worst: f64 = 0.0;
        for (x, y) in &pts {
            worst = worst.max(preset.w_at(*x, *y).map_err(err)?.abs());
        }
        let ok = symbolic && pts.len() >= 1000 && worst < 1e-12;
        pass &= ok;
        notes.push(format!(
            "{}: {} points, max |w| {worst:.1e}",
            preset.id,
            pts.len()
        ));
    }
    Ok(Outcome::new(pass, notes.join("; ")))
}

fn properties() -> Result<Outcome, String> {
    let mut failed = Vec::new();
    for (name, suite) in common::SUITES {
        if let Err(e) = suite() {
            failed.push(format!("{name}: {e}"));
        }
    }
    let pass = failed.is_empty();
    let detail = if pass {
        format!("{} suites x {} cases", common::SUITES.len(), common::CASES)
    } else {
        failed.join("; ")
    };
    Ok(Outcome::new(pass, detail))
}

const CRITERIA: [(&str, Check, u64); 8] = [
    ("coefficient reproduction", coefficients, 5),
    ("classical family", classical_family, 10),
    ("structural forcing", structural_forcing, 60),
    ("transformation identities", transformations, 30),
    ("example 1", example_one, 5),
    ("examples 2 to 4", examples_two_to_four, 15),
    ("dirichlet property", dirichlet, 5),
    ("property suites", properties, 60),
];

fn main() -> ExitCode {
    let mut passed = 0;
    let mut unexpected = 0;
    for (i, (name, check, budget)) in CRITERIA.iter().enumerate() {
        let t = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let elapsed = t.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let pass = outcome.pass && in_time;
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {verdict} {name} ({:.2} s of {budget} s) {}",
            i + 1,
            elapsed.as_secs_f64(),
            outcome.detail
        );
        if pass {
            passed += 1;
        } else if !(outcome.known && in_time) {
            unexpected += 1;
        }
    }
    println!("{passed}/{} criteria pass", CRITERIA.len());
    // a failure that matches a recorded discrepancy is reported, not fatal
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

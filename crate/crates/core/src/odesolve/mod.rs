//! Numerical integration of the reduced linear ODEs and closed-form
//! references.

pub mod closed;
pub mod special;

use serde::Serialize;
use thiserror::Error;

use crate::reduction::{polynomial_roots, ReducedODE, UniPoly};

pub use closed::{compare, compare_with, ClosedForm, ClosedFormKind, Comparison};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular point {0} inside the integration interval")]
    Singular(f64),
    #[error("step size underflow at x = {0}")]
    StepUnderflow(f64),
    #[error("{0}")]
    Kernel(#[from] crate::symkernel::KernelError),
}

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;
pub const DEFAULT_EXCLUSION: f64 = 1e-3;
pub const GRID_POINTS: usize = 512;

/// `c1 E' + c0 E = r` with polynomial coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOde {
    pub c1: UniPoly,
    pub c0: UniPoly,
    pub r: UniPoly,
}

impl LinearOde {
    pub fn new(c1: UniPoly, c0: UniPoly, r: UniPoly) -> Self {
        LinearOde { c1, c0, r }
    }

    pub fn from_reduced(ode: &ReducedODE) -> Self {
        let [c1, c0, r] = ode.poly.clone();
        LinearOde { c1, c0, r }
    }

    /// `E'` from the equation.
    pub fn rhs(&self, x: f64, e: f64) -> f64 {
        (self.r.eval_f64(x) - self.c0.eval_f64(x) * e) / self.c1.eval_f64(x)
    }

    /// Equation residual relative to the size of its terms,
    /// `|c1 E' + c0 E - r| / (1 + |c1 E'| + |c0 E| + |r|)`.
    pub fn residual(&self, x: f64, e: f64, de: f64) -> f64 {
        let (a, b, r) = (
            self.c1.eval_f64(x) * de,
            self.c0.eval_f64(x) * e,
            self.r.eval_f64(x),
        );
        (a + b - r).abs() / (1.0 + a.abs() + b.abs() + r.abs())
    }

    pub fn singular_points(&self, interval: (f64, f64)) -> Vec<f64> {
        polynomial_roots(&self.c1, interval)
            .into_iter()
            .map(|s| s.value)
            .collect()
    }
}

/// Initial value problem on an interval containing the anchor.
#[derive(Clone, Debug)]
pub struct Ivp {
    pub ode: LinearOde,
    pub x0: f64,
    pub e0: f64,
    pub interval: (f64, f64),
    pub rtol: f64,
    pub atol: f64,
    pub exclusion: f64,
}

impl Ivp {
    pub fn new(ode: LinearOde, x0: f64, e0: f64, interval: (f64, f64)) -> Self {
        Ivp {
            ode,
            x0,
            e0,
            interval,
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            exclusion: DEFAULT_EXCLUSION,
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_exclusion(mut self, exclusion: f64) -> Self {
        self.exclusion = exclusion;
        self
    }

    /// Sub-interval around the anchor that stays clear of singular points.
    pub fn span(&self) -> Result<(f64, f64), OdeError> {
        let (a, b) = (
            self.interval.0.min(self.interval.1),
            self.interval.0.max(self.interval.1),
        );
        if !(a <= self.x0 && self.x0 <= b) {
            return Err(OdeError::Domain(format!(
                "anchor {} outside [{a}, {b}]",
                self.x0
            )));
        }
        let sing = self
            .ode
            .singular_points((a - self.exclusion, b + self.exclusion));
        let (mut lo, mut hi) = (a, b);
        for s in sing {
            if (s - self.x0).abs() <= self.exclusion {
                return Err(OdeError::Singular(s));
            }
            if s < self.x0 {
                lo = lo.max(s + self.exclusion);
            } else {
                hi = hi.min(s - self.exclusion);
            }
        }
        Ok((lo, hi))
    }
}

/// One grid sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub x: f64,
    pub e: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionCurve {
    pub anchor: (f64, f64),
    pub span: (f64, f64),
    pub samples: Vec<Sample>,
    pub max_residual: f64,
    pub steps: usize,
    pub comparison: Option<Comparison>,
}

impl SolutionCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,E0,residual\n");
        for s in &self.samples {
            out.push_str(&format!("{:.15e},{:.15e},{:.3e}\n", s.x, s.e, s.residual));
        }
        out
    }

    /// Value at a grid point, if present.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| (s.x - x).abs() <= 1e-14 * (1.0 + x.abs()))
            .map(|s| s.e)
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension of one accepted step.
struct Dense {
    x: f64,
    h: f64,
    r: [f64; 5],
}

impl Dense {
    /// Value and `d/dx` at `x`.
    fn eval(&self, x: f64) -> (f64, f64) {
        let t = (x - self.x) / self.h;
        let t1 = 1.0 - t;
        let [r1, r2, r3, r4, r5] = self.r;
        let p = r4 + t1 * r5;
        let q = r3 + t * p;
        let s = r2 + t1 * q;
        let y = r1 + t * s;
        let dp = -r5;
        let dq = p + t * dp;
        let ds = -q + t1 * dq;
        let dy = s + t * ds;
        (y, dy / self.h)
    }
}

/// Integrate from `(x0, y0)` to `end`, sampling `grid` (ordered from `x0`
/// toward `end`) from the dense output.
fn integrate(ivp: &Ivp, end: f64, grid: &[f64]) -> Result<(Vec<Sample>, usize), OdeError> {
    let f = |x: f64, y: f64| ivp.ode.rhs(x, y);
    let dir = if end >= ivp.x0 { 1.0 } else { -1.0 };
    let span = (end - ivp.x0).abs();
    let mut out = Vec::with_capacity(grid.len());
    if span == 0.0 {
        for &g in grid {
            out.push(sample(ivp, g, ivp.e0, f(g, ivp.e0)));
        }
        return Ok((out, 0));
    }
    let (mut x, mut y) = (ivp.x0, ivp.e0);
    let mut k1 = f(x, y);
    let mut h = dir * initial_step(ivp, x, y, k1, span);
    let mut next = 0;
    let mut steps = 0;
    while next < grid.len() && (grid[next] - x) * dir <= 0.0 {
        out.push(sample(ivp, grid[next], y, k1));
        next += 1;
    }
    let mut facold = 1e-4f64;
    let mut reject = false;
    loop {
        if (x - end) * dir >= 0.0 {
            break;
        }
        if (x + h - end) * dir > 0.0 {
            h = end - x;
        }
        if h.abs() < 1e-14 * x.abs().max(1.0) {
            return Err(OdeError::StepUnderflow(x));
        }
        let k2 = f(x + C2 * h, y + h * A21 * k1);
        let k3 = f(x + C3 * h, y + h * (A31 * k1 + A32 * k2));
        let k4 = f(x + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(
            x + C5 * h,
            y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4),
        );
        let k6 = f(
            x + h,
            y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
        );
        let y1 = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(x + h, y1);
        let err_est = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let sc = ivp.atol + ivp.rtol * y.abs().max(y1.abs());
        let err = (err_est / sc).abs();
        if !err.is_finite() || !y1.is_finite() {
            h *= 0.2;
            reject = true;
            continue;
        }
        // PI step-size control
        let fac11 = err.powf(0.2 - 0.04 * 0.75);
        let fac = (fac11 / facold.powf(0.04) / 0.9).clamp(0.1, 5.0);
        let hnew = h / fac;
        if err <= 1.0 {
            steps += 1;
            facold = err.max(1e-4);
            let ydiff = y1 - y;
            let bspl = h * k1 - ydiff;
            let dense = Dense {
                x,
                h,
                r: [
                    y,
                    ydiff,
                    bspl,
                    ydiff - h * k7 - bspl,
                    h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7),
                ],
            };
            let xn = x + h;
            while next < grid.len() && (grid[next] - xn) * dir <= 0.0 {
                let (v, dv) = dense.eval(grid[next]);
                out.push(sample(ivp, grid[next], v, dv));
                next += 1;
            }
            x = xn;
            y = y1;
            k1 = k7;
            let hn = if reject {
                hnew.abs().min(h.abs()) * dir
            } else {
                hnew
            };
            h = hn;
            reject = false;
        } else {
            h /= (fac11 / 0.9).min(5.0);
            reject = true;
        }
    }
    while next < grid.len() {
        out.push(sample(ivp, grid[next], y, k1));
        next += 1;
    }
    Ok((out, steps))
}

fn sample(ivp: &Ivp, x: f64, e: f64, de: f64) -> Sample {
    Sample {
        x,
        e,
        residual: ivp.ode.residual(x, e, de),
    }
}

fn initial_step(ivp: &Ivp, x: f64, y: f64, k1: f64, span: f64) -> f64 {
    let sc = ivp.atol + ivp.rtol * y.abs();
    let d0 = y.abs() / sc;
    let d1 = k1.abs() / sc;
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1 = y + h0 * k1;
    let dir = if ivp.interval.1 >= x { 1.0 } else { -1.0 };
    let d2 = ((ivp.ode.rhs(x + dir * h0, y1) - k1) / sc).abs() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

fn uniform(from: f64, to: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                to
            } else {
                from + (to - from) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Adaptive Dormand-Prince 5(4) with dense output, integrated from the
/// anchor to both ends of the clear span and sampled on a uniform grid per
/// side.
pub fn solve_ivp(ivp: &Ivp) -> Result<SolutionCurve, OdeError> {
    let (lo, hi) = ivp.span()?;
    let mut samples = Vec::new();
    let mut steps = 0;
    if ivp.x0 > lo {
        let (mut left, n) = integrate(ivp, lo, &uniform(ivp.x0, lo, GRID_POINTS))?;
        left.reverse();
        left.pop(); // anchor comes from the right side
        samples.extend(left);
        steps += n;
    }
    let right_grid = if hi > ivp.x0 {
        uniform(ivp.x0, hi, GRID_POINTS)
    } else {
        vec![ivp.x0]
    };
    let (right, n) = integrate(ivp, hi, &right_grid)?;
    samples.extend(right);
    steps += n;
    let max_residual = samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    Ok(SolutionCurve {
        anchor: (ivp.x0, ivp.e0),
        span: (lo, hi),
        samples,
        max_residual,
        steps,
        comparison: None,
    })
}

/// Value at a single point, stepping exactly onto it.
pub fn solve_to(ivp: &Ivp, x: f64) -> Result<f64, OdeError> {
    let (s, _) = integrate(ivp, x, &[x])?;
    Ok(s[0].e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::reduce_profile;
    use crate::symkernel::parse;

    fn ode(w: &str) -> LinearOde {
        LinearOde::from_reduced(&reduce_profile(&parse(w).unwrap()).unwrap())
    }

    fn linear(c1: &[i64], c0: &[i64], r: &[i64]) -> LinearOde {
        LinearOde::new(
            UniPoly::from_ints("x", c1),
            UniPoly::from_ints("x", c0),
            UniPoly::from_ints("x", r),
        )
    }

    #[test]
    fn constant_solution() {
        let c = solve_ivp(&Ivp::new(linear(&[1], &[], &[]), 0.0, 1.0, (-1.0, 2.0))).unwrap();
        assert!(c.samples.iter().all(|s| (s.e - 1.0).abs() < 1e-14));
        assert_eq!(c.samples.len(), 2 * GRID_POINTS - 1);
    }

    #[test]
    fn particular_solution_of_linear_profile() {
        let c = solve_ivp(&Ivp::new(ode("x"), 0.0, 0.5, (-1.0, 1.0))).unwrap();
        assert!(c.samples.iter().all(|s| (s.e - 0.5).abs() < 1e-14));
    }

    #[test]
    fn exponential_against_exact() {
        // E' - 2E = -1, E(0) = 1: E = 1/2 + e^{2x}/2
        let c = solve_ivp(&Ivp::new(linear(&[1], &[-2], &[-1]), 0.0, 1.0, (-1.0, 1.0))).unwrap();
        for s in &c.samples {
            let exact = 0.5 + 0.5 * (2.0 * s.x).exp();
            assert!(
                (s.e - exact).abs() <= 1e-9 * exact,
                "{} {} {}",
                s.x,
                s.e,
                exact
            );
        }
        assert!(c.max_residual < 1e-8, "{}", c.max_residual);
    }

    #[test]
    fn stops_before_singular_points() {
        let ivp = Ivp::new(ode("(x^2-1)*(x-3)"), -1.0, 0.2, (-1.0, 1.0));
        let c = solve_ivp(&ivp).unwrap();
        let x0 = 1.0 - 2.0 / 3f64.sqrt();
        assert!((c.span.1 - (x0 - 1e-3)).abs() < 1e-12);
        assert!(c.max_residual < 1e-7, "{}", c.max_residual);
        let bad = Ivp::new(ode("(x^2-1)*(x-3)"), x0, 0.2, (-1.0, 1.0));
        assert!(matches!(solve_ivp(&bad), Err(OdeError::Singular(_))));
    }

    #[test]
    fn two_sided_consistency() {
        let o = ode("(x^2-1)*(x-3)");
        let fwd = Ivp::new(o.clone(), -1.0, 0.2, (-1.0, -0.3));
        let e_end = solve_to(&fwd, -0.3).unwrap();
        let back = Ivp::new(o, -0.3, e_end, (-1.0, -0.3));
        let e_start = solve_to(&back, -1.0).unwrap();
        assert!(
            (e_start - 0.2).abs() <= 10.0 * DEFAULT_RTOL * 0.2 + 1e-12,
            "{e_start}"
        );
    }

    #[test]
    fn superposition() {
        let o = ode("1 - x^4");
        let run = |v: f64| solve_ivp(&Ivp::new(o.clone(), 1.0, v, (0.3, 1.0))).unwrap();
        let (a, b, ab, zero) = (run(0.25), run(0.7), run(0.95), run(0.0));
        for i in 0..a.samples.len() {
            let lhs = a.samples[i].e + b.samples[i].e - ab.samples[i].e;
            let scale = 1.0 + ab.samples[i].e.abs();
            assert!((lhs - zero.samples[i].e).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn convergence_under_tolerance() {
        let o = linear(&[1], &[-2], &[-1]);
        let dev = |rtol: f64| {
            let c = solve_ivp(
                &Ivp::new(o.clone(), 0.0, 1.0, (0.0, 1.0)).with_tolerances(rtol, rtol * 1e-2),
            )
            .unwrap();
            c.samples
                .iter()
                .map(|s| (s.e - 0.5 - 0.5 * (2.0 * s.x).exp()).abs())
                .fold(0.0, f64::max)
        };
        let devs: Vec<f64> = [1e-4, 1e-6, 1e-8, 1e-10].iter().map(|&t| dev(t)).collect();
        for w in devs.windows(2) {
            assert!(w[1] <= w[0] * 1.5 + 1e-13, "{devs:?}");
        }
        assert!(devs[3] < devs[0] * 1e-3, "{devs:?}");
    }

    #[test]
    fn csv_header() {
        let c = solve_ivp(&Ivp::new(linear(&[1], &[], &[]), 0.0, 1.0, (0.0, 1.0))).unwrap();
        assert!(c.to_csv().starts_with("x,E0,residual\n"));
    }
}

//! Dormand-Prince 5(4) integrator with dense output and event location.

use nalgebra as na;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_max: 0.01, max_steps: 200_000 }
    }
}

/// Zero-crossing event `g(t, x) = 0` approached from above (`g` going from
/// positive to non-positive). Crossings rejected by `accept` are skipped.
pub struct Event<'a, const N: usize> {
    pub g: &'a dyn Fn(f64, &na::SVector<f64, N>) -> f64,
    pub accept: &'a dyn Fn(f64, &na::SVector<f64, N>) -> bool,
    /// Tolerance on `|g|` after polishing.
    pub tolerance: f64,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct Segment<const N: usize> {
    pub t0: f64,
    pub h: f64,
    r: [na::SVector<f64, N>; 5],
}

impl<const N: usize> Segment<N> {
    pub fn eval(&self, t: f64) -> na::SVector<f64, N> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.r;
        r1 + (r2 + (r3 + (r4 + r5 * s1) * s) * s1) * s
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

#[derive(Debug, Clone)]
pub struct Solution<const N: usize> {
    pub segments: Vec<Segment<N>>,
    pub t: f64,
    pub x: na::SVector<f64, N>,
    /// Whether integration stopped on an accepted event.
    pub event: bool,
}

impl<const N: usize> Solution<N> {
    /// Dense-output state at `t` within the integrated range.
    pub fn eval(&self, t: f64) -> na::SVector<f64, N> {
        if t >= self.t {
            return self.x;
        }
        let i = self.segments.partition_point(|s| s.t1() < t).min(self.segments.len().saturating_sub(1));
        match self.segments.get(i) {
            Some(s) => s.eval(t),
            None => self.x,
        }
    }

    pub fn t0(&self) -> f64 {
        self.segments.first().map_or(self.t, |s| s.t0)
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

struct Stage<const N: usize> {
    x1: na::SVector<f64, N>,
    k: [na::SVector<f64, N>; 7],
}

fn rk_step<const N: usize, F>(f: &mut F, t: f64, x: &na::SVector<f64, N>, k1: &na::SVector<f64, N>, h: f64) -> Result<Stage<N>>
where
    F: FnMut(f64, &na::SVector<f64, N>) -> Result<na::SVector<f64, N>>,
{
    let mut k = [*k1; 7];
    for i in 1..7 {
        let mut xi = *x;
        for (j, kj) in k.iter().enumerate().take(i) {
            if A[i][j] != 0.0 {
                xi += kj * (h * A[i][j]);
            }
        }
        k[i] = f(t + C[i] * h, &xi)?;
    }
    let mut x1 = *x;
    for (j, kj) in k.iter().enumerate().take(6) {
        if A[6][j] != 0.0 {
            x1 += kj * (h * A[6][j]);
        }
    }
    Ok(Stage { x1, k })
}

fn dense<const N: usize>(t0: f64, h: f64, x0: &na::SVector<f64, N>, s: &Stage<N>) -> Segment<N> {
    let r2 = s.x1 - x0;
    let r3 = s.k[0] * h - r2;
    let r4 = r2 - s.k[6] * h - r3;
    let mut r5 = na::SVector::<f64, N>::zeros();
    for (dj, kj) in D.iter().zip(s.k.iter()) {
        r5 += kj * (h * dj);
    }
    Segment { t0, h, r: [*x0, r2, r3, r4, r5] }
}

fn all_finite<const N: usize>(x: &na::SVector<f64, N>) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Integrates `ẋ = f(t, x)` from `t0` until `t_end` or an accepted event.
/// `observer` sees every accepted step and may abort with an error.
pub fn integrate<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    x0: na::SVector<f64, N>,
    t_end: f64,
    opts: &OdeOptions,
    event: Option<&Event<N>>,
    mut observer: O,
) -> Result<Solution<N>>
where
    F: FnMut(f64, &na::SVector<f64, N>) -> Result<na::SVector<f64, N>>,
    O: FnMut(f64, &na::SVector<f64, N>) -> Result<()>,
{
    let mut t = t0;
    let mut x = x0;
    let mut k1 = f(t, &x)?;
    let mut h = initial_step(&mut f, t, &x, &k1, opts)?;
    let mut segments = Vec::new();
    let mut g_prev = event.map(|e| (e.g)(t, &x));
    observer(t, &x)?;
    for _ in 0..opts.max_steps {
        if t >= t_end {
            return Ok(Solution { segments, t, x, event: false });
        }
        h = h.min(t_end - t).min(opts.h_max);
        let stage = rk_step(&mut f, t, &x, &k1, h)?;
        let mut err = 0.0;
        for i in 0..N {
            let e: f64 = E.iter().zip(stage.k.iter()).map(|(c, k)| c * k[i]).sum::<f64>() * h;
            let sc = opts.atol + opts.rtol * x[i].abs().max(stage.x1[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() || !all_finite(&stage.x1) {
            h *= 0.25;
            if h < 1e-14 {
                return Err(Error::IntegratorFailure(format!("non-finite state at t = {t}")));
            }
            continue;
        }
        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            if h < 1e-14 {
                return Err(Error::IntegratorFailure(format!("step size underflow at t = {t}")));
            }
            continue;
        }
        let seg = dense(t, h, &x, &stage);
        let (t_new, x_new) = (t + h, stage.x1);
        if let (Some(ev), Some(g0)) = (event, g_prev) {
            let g1 = (ev.g)(t_new, &x_new);
            if g0 > 0.0 && g1 <= 0.0 {
                let (te, xe) = locate(&mut f, ev, &seg, &x, &k1, g0, g1)?;
                if (ev.accept)(te, &xe) {
                    if te > t {
                        let s = rk_step(&mut f, t, &x, &k1, te - t)?;
                        segments.push(dense(t, te - t, &x, &s));
                    }
                    observer(te, &xe)?;
                    return Ok(Solution { segments, t: te, x: xe, event: true });
                }
            }
            g_prev = Some(g1);
        }
        segments.push(seg);
        t = t_new;
        x = x_new;
        k1 = stage.k[6];
        observer(t, &x)?;
        h *= (0.9 * err.max(1e-10).powf(-0.2)).min(5.0);
    }
    Err(Error::IntegratorFailure(format!("exceeded {} steps", opts.max_steps)))
}

fn initial_step<const N: usize, F>(f: &mut F, t: f64, x: &na::SVector<f64, N>, k1: &na::SVector<f64, N>, opts: &OdeOptions) -> Result<f64>
where
    F: FnMut(f64, &na::SVector<f64, N>) -> Result<na::SVector<f64, N>>,
{
    let sc = x.map(|v| opts.atol + opts.rtol * v.abs());
    let d0 = x.component_div(&sc).norm() / (N as f64).sqrt();
    let d1 = k1.component_div(&sc).norm() / (N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let x1 = x + k1 * h0;
    let k2 = f(t + h0, &x1)?;
    let d2 = (k2 - k1).component_div(&sc).norm() / (N as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(opts.h_max))
}

/// Root of the event inside one step: Illinois iteration on the dense
/// output, then secant polishing with exact Runge-Kutta steps.
fn locate<const N: usize, F>(
    f: &mut F,
    ev: &Event<N>,
    seg: &Segment<N>,
    x0: &na::SVector<f64, N>,
    k1: &na::SVector<f64, N>,
    g0: f64,
    g1: f64,
) -> Result<(f64, na::SVector<f64, N>)>
where
    F: FnMut(f64, &na::SVector<f64, N>) -> Result<na::SVector<f64, N>>,
{
    let (mut a, mut b) = (seg.t0, seg.t1());
    let (mut ga, mut gb) = (g0, g1);
    let mut side = 0;
    for _ in 0..100 {
        if (b - a).abs() < 1e-15 * (1.0 + b.abs()) {
            break;
        }
        let c = (a * gb - b * ga) / (gb - ga);
        let gc = (ev.g)(c, &seg.eval(c));
        if gc == 0.0 {
            a = c;
            b = c;
            break;
        }
        if gc > 0.0 {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        }
    }
    let mut t = if ga.abs() < gb.abs() { a } else { b };
    let exact = |f: &mut F, t: f64| -> Result<na::SVector<f64, N>> {
        if t == seg.t0 {
            return Ok(*x0);
        }
        Ok(rk_step(f, seg.t0, x0, k1, t - seg.t0)?.x1)
    };
    let mut x = exact(f, t)?;
    let mut g = (ev.g)(t, &x);
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..6 {
        if g.abs() <= ev.tolerance {
            break;
        }
        let slope = match prev {
            Some((tp, gp)) if tp != t => (g - gp) / (t - tp),
            _ => {
                let dt = 1e-7 * seg.h.abs().max(1e-9);
                let tt = t - dt;
                ((ev.g)(t, &x) - (ev.g)(tt, &exact(f, tt)?)) / dt
            }
        };
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        prev = Some((t, g));
        t -= g / slope;
        x = exact(f, t)?;
        g = (ev.g)(t, &x);
    }
    Ok((t, x))
}

//! Type-II maximum likelihood for the squared-exponential kernel.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{squared_distance, GpError, Kernel, Point, DEFAULT_NUGGET};

/// Box constraints on `(s, l)`; both lower limits must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub signal: [f64; 2],
    pub length_scale: [f64; 2],
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            signal: [0.1, 10.0],
            length_scale: [0.5, 20.0],
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<(), GpError> {
        for (name, [lo, hi]) in [("signal", self.signal), ("length_scale", self.length_scale)] {
            if !(lo > 0.0 && lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(GpError::InvalidBounds(format!(
                    "{name} bounds [{lo}, {hi}] must satisfy 0 < lo <= hi"
                )));
            }
        }
        Ok(())
    }

    fn log_box(&self) -> [[f64; 2]; 2] {
        [
            [self.signal[0].ln(), self.signal[1].ln()],
            [self.length_scale[0].ln(), self.length_scale[1].ln()],
        ]
    }

    pub fn clamp(&self, k: Kernel) -> Kernel {
        Kernel {
            signal: k.signal.clamp(self.signal[0], self.signal[1]),
            length_scale: k.length_scale.clamp(self.length_scale[0], self.length_scale[1]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub nugget: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            tolerance: 1e-7,
            max_iterations: 200,
            nugget: DEFAULT_NUGGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub kernel: Kernel,
    pub log_likelihood: f64,
    /// No start improved on the initial parameters.
    pub degenerate: bool,
}

/// Log marginal likelihood of `values` under a zero-mean GP, and its gradient
/// with respect to `(ln s, ln l)`.
pub fn log_marginal_likelihood(
    points: &[Point],
    values: &[f64],
    kernel: Kernel,
    nugget: f64,
) -> Result<(f64, [f64; 2]), GpError> {
    let n = points.len();
    let d2 = DMatrix::from_fn(n, n, |i, j| squared_distance(&points[i], &points[j]));
    let (ll, grad) = lml_with_distances(&d2, values, kernel, nugget, true)?;
    Ok((ll, grad.expect("gradient requested")))
}

fn lml_with_distances(
    d2: &DMatrix<f64>,
    values: &[f64],
    kernel: Kernel,
    nugget: f64,
    with_gradient: bool,
) -> Result<(f64, Option<[f64; 2]>), GpError> {
    let n = values.len();
    let var = kernel.variance();
    let l2 = kernel.length_scale * kernel.length_scale;
    let corr = d2.map(|d| (-d / (2.0 * l2)).exp());
    let mut cov = &corr * var;
    for i in 0..n {
        cov[(i, i)] += nugget * var;
    }
    let chol = Cholesky::new(cov).ok_or(GpError::IllConditioned)?;
    let z = DVector::from_column_slice(values);
    let alpha = chol.solve(&z);
    let fit = z.dot(&alpha);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let ll = -0.5 * fit - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();
    if !with_gradient {
        return Ok((ll, None));
    }

    // dK/d ln s = 2K, so the signal component needs no inverse
    let grad_signal = fit - n as f64;

    // dK/d ln l = s² R ∘ D² / l²
    let inv = chol.inverse();
    let mut quad = 0.0;
    let mut trace = 0.0;
    for j in 0..n {
        for i in 0..j {
            let dk = var * corr[(i, j)] * d2[(i, j)] / l2;
            quad += alpha[i] * dk * alpha[j];
            trace += inv[(i, j)] * dk;
        }
    }
    // dK has a zero diagonal and is symmetric
    let grad_length = quad - trace;
    Ok((ll, Some([grad_signal, grad_length])))
}

/// Maximizes the log marginal likelihood by multi-start projected BFGS in
/// log-parameter space.
///
/// Starts are laid out on a Latin grid over the log box. If no start beats
/// the (clamped) initial parameters, those are returned with
/// `degenerate = true`.
pub fn fit_hyperparams(
    measurements: &[(Point, f64)],
    init: Kernel,
    bounds: &Bounds,
    options: &FitOptions,
) -> Result<FitResult, GpError> {
    bounds.validate()?;
    init.validate()?;
    let distinct: HashSet<(u64, u64)> = measurements
        .iter()
        .map(|(p, _)| (p[0].to_bits(), p[1].to_bits()))
        .collect();
    if distinct.len() < 2 {
        return Err(GpError::TooFewMeasurements {
            needed: 2,
            got: distinct.len(),
        });
    }
    let n = measurements.len();
    let d2 = DMatrix::from_fn(n, n, |i, j| {
        squared_distance(&measurements[i].0, &measurements[j].0)
    });
    let values: Vec<f64> = measurements.iter().map(|(_, v)| *v).collect();
    let eval = |theta: [f64; 2], grad: bool| {
        lml_with_distances(&d2, &values, Kernel::from_log(theta), options.nugget, grad)
    };

    let init = bounds.clamp(init);
    let init_ll = eval(init.to_log(), false).map(|(ll, _)| ll).unwrap_or(f64::NEG_INFINITY);
    let boxes = bounds.log_box();
    let starts = options.starts.max(1);

    let mut best: Option<([f64; 2], f64)> = None;
    for i in 0..starts {
        let us = (i as f64 + 0.5) / starts as f64;
        let ul = (((i * 5 + 3) % starts) as f64 + 0.5) / starts as f64;
        let theta0 = [
            boxes[0][0] + us * (boxes[0][1] - boxes[0][0]),
            boxes[1][0] + ul * (boxes[1][1] - boxes[1][0]),
        ];
        if let Some((theta, ll)) = ascend(&eval, theta0, &boxes, options) {
            if best.map_or(true, |(_, b)| ll > b) {
                best = Some((theta, ll));
            }
        }
    }

    match best {
        Some((theta, ll)) if ll > init_ll => Ok(FitResult {
            kernel: Kernel::from_log(theta),
            log_likelihood: ll,
            degenerate: false,
        }),
        _ => Ok(FitResult {
            kernel: init,
            log_likelihood: init_ll,
            degenerate: true,
        }),
    }
}

fn project(theta: [f64; 2], boxes: &[[f64; 2]; 2]) -> [f64; 2] {
    [
        theta[0].clamp(boxes[0][0], boxes[0][1]),
        theta[1].clamp(boxes[1][0], boxes[1][1]),
    ]
}

fn ascend<F>(
    eval: &F,
    theta0: [f64; 2],
    boxes: &[[f64; 2]; 2],
    options: &FitOptions,
) -> Option<([f64; 2], f64)>
where
    F: Fn([f64; 2], bool) -> Result<(f64, Option<[f64; 2]>), GpError>,
{
    let mut x = project(theta0, boxes);
    let (mut f, g) = eval(x, true).ok()?;
    let mut g = g?;
    // inverse Hessian of -ll; the first step is at most one unit in log space
    let identity = |scale: f64| [[scale, 0.0], [0.0, scale]];
    let unit = |g: [f64; 2]| 1.0 / g[0].hypot(g[1]).max(1.0);
    let mut h = identity(unit(g));
    for _ in 0..options.max_iterations {
        // coordinates pinned at a bound with the gradient pointing outward stay put
        let free = [0, 1].map(|i| {
            !((x[i] <= boxes[i][0] && g[i] < 0.0) || (x[i] >= boxes[i][1] && g[i] > 0.0))
        });
        let mut d = if free == [true, true] {
            [h[0][0] * g[0] + h[0][1] * g[1], h[1][0] * g[0] + h[1][1] * g[1]]
        } else {
            [0, 1].map(|i| if free[i] { h[i][i] * g[i] } else { 0.0 })
        };
        if d[0] * g[0] + d[1] * g[1] <= 0.0 {
            h = identity(unit(g));
            d = [0, 1].map(|i| if free[i] { h[i][i] * g[i] } else { 0.0 });
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = project([x[0] + t * d[0], x[1] + t * d[1]], boxes);
            if cand == x {
                break;
            }
            let expected = g[0] * (cand[0] - x[0]) + g[1] * (cand[1] - x[1]);
            if let Ok((fc, _)) = eval(cand, false) {
                if fc >= f + 1e-4 * expected && fc.is_finite() {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let Ok((_, Some(gn))) = eval(xn, true) else { break };
        let gain = fnew - f;

        let s = [xn[0] - x[0], xn[1] - x[1]];
        let y = [g[0] - gn[0], g[1] - gn[1]];
        let sy = s[0] * y[0] + s[1] * y[1];
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy = [h[0][0] * y[0] + h[0][1] * y[1], h[1][0] * y[0] + h[1][1] * y[1]];
            let yhy = y[0] * hy[0] + y[1] * hy[1];
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        x = xn;
        f = fnew;
        g = gn;
        if gain < options.tolerance {
            break;
        }
    }
    Some((x, f))
}

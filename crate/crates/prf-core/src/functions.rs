//! Regression targets: values, derivatives, exact cell averages and the
//! smoothness constants used by the theoretical bounds.
//!
//! The C2 constant is the best constant in the first-order Taylor remainder
//! bound `|s(t) - s(x) - grad s(x).(t-x)| <= C2 ||t-x||_2^2`, obtained as
//! half the sup-norm of the Hessian form; C3 is the analogous second-order
//! constant. The absolute-value target is not differentiable at 1/2, so it
//! carries no C2/C3 and the bound evaluators refuse it.

use crate::error::{Error, Result};
use crate::geometry::Cell;
use crate::quad::{gl16, gl16_2d, gl16_composite};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionFn {
    /// `sin(2 pi x)` on `[0,1)`.
    Sinusoidal,
    /// `|x - 1/2|` on `[0,1)`; the kink acts like an interior border point.
    #[serde(rename = "abs")]
    AbsoluteValue,
    /// `sum_j x_j` on `[0,1)^d`.
    Sum { dim: usize },
    /// `(1/10) [10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 10 x4 + 5 x5]`.
    Friedman1 { dim: usize },
}

impl RegressionFn {
    /// Parse the CLI name: `sinusoidal | abs | sum | friedman1`.
    pub fn from_name(name: &str, dim: usize) -> Result<Self> {
        let f = match name {
            "sinusoidal" => RegressionFn::Sinusoidal,
            "abs" => RegressionFn::AbsoluteValue,
            "sum" => RegressionFn::Sum { dim },
            "friedman1" => RegressionFn::Friedman1 { dim },
            other => {
                return Err(Error::Parameter(format!(
                    "unknown function '{other}'; valid choices: sinusoidal, abs, sum, friedman1"
                )))
            }
        };
        f.validate()?;
        Ok(f)
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegressionFn::Sinusoidal => "sinusoidal",
            RegressionFn::AbsoluteValue => "abs",
            RegressionFn::Sum { .. } => "sum",
            RegressionFn::Friedman1 { .. } => "friedman1",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RegressionFn::Sinusoidal | RegressionFn::AbsoluteValue => Ok(()),
            RegressionFn::Sum { dim } if *dim >= 1 => Ok(()),
            RegressionFn::Sum { .. } => Err(Error::Parameter("sum needs d >= 1".into())),
            RegressionFn::Friedman1 { dim } if *dim >= 5 => Ok(()),
            RegressionFn::Friedman1 { .. } => Err(Error::Parameter("friedman1 needs d >= 5".into())),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RegressionFn::Sinusoidal | RegressionFn::AbsoluteValue => 1,
            RegressionFn::Sum { dim } | RegressionFn::Friedman1 { dim } => *dim,
        }
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        Ok(match self {
            RegressionFn::Sinusoidal => (2.0 * PI * x[0]).sin(),
            RegressionFn::AbsoluteValue => (x[0] - 0.5).abs(),
            RegressionFn::Sum { .. } => x.iter().sum(),
            RegressionFn::Friedman1 { .. } => {
                (PI * x[0] * x[1]).sin() + 2.0 * (x[2] - 0.5).powi(2) + x[3] + 0.5 * x[4]
            }
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        Ok(match self {
            RegressionFn::Sinusoidal => vec![2.0 * PI * (2.0 * PI * x[0]).cos()],
            RegressionFn::AbsoluteValue => {
                if x[0] == 0.5 {
                    return Err(Error::NotDifferentiable("abs"));
                }
                vec![if x[0] > 0.5 { 1.0 } else { -1.0 }]
            }
            RegressionFn::Sum { dim } => vec![1.0; *dim],
            RegressionFn::Friedman1 { dim } => {
                let theta = PI * x[0] * x[1];
                let mut g = vec![0.0; *dim];
                g[0] = PI * x[1] * theta.cos();
                g[1] = PI * x[0] * theta.cos();
                g[2] = 4.0 * (x[2] - 0.5);
                g[3] = 1.0;
                g[4] = 0.5;
                g
            }
        })
    }

    /// Hessian matrix (row major), symmetric by construction.
    pub fn second_derivs(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_x(x)?;
        let d = self.dim();
        let mut h = vec![vec![0.0; d]; d];
        match self {
            RegressionFn::Sinusoidal => {
                h[0][0] = -4.0 * PI * PI * (2.0 * PI * x[0]).sin();
            }
            RegressionFn::AbsoluteValue => {
                if x[0] == 0.5 {
                    return Err(Error::NotDifferentiable("abs"));
                }
                // 0 away from the kink.
            }
            RegressionFn::Sum { .. } => {}
            RegressionFn::Friedman1 { .. } => {
                let theta = PI * x[0] * x[1];
                let (s, c) = theta.sin_cos();
                h[0][0] = -PI * PI * x[1] * x[1] * s;
                h[1][1] = -PI * PI * x[0] * x[0] * s;
                h[0][1] = PI * c - PI * PI * x[0] * x[1] * s;
                h[1][0] = h[0][1];
                h[2][2] = 4.0;
            }
        }
        Ok(h)
    }

    /// Exact or quadrature-exact cell average `(1/|cell|) int_cell s`.
    pub fn cell_average(&self, cell: &Cell) -> Result<f64> {
        if cell.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: cell.dim() });
        }
        let (lo, up) = (cell.lower(), cell.upper());
        Ok(match self {
            RegressionFn::Sinusoidal => sin_average(lo[0], up[0]),
            RegressionFn::AbsoluteValue => abs_average(lo[0], up[0]),
            RegressionFn::Sum { .. } => lo.iter().zip(up).map(|(&a, &b)| 0.5 * (a + b)).sum(),
            RegressionFn::Friedman1 { .. } => {
                let area = (up[0] - lo[0]) * (up[1] - lo[1]);
                let sin_avg =
                    gl16_2d(lo[0], up[0], lo[1], up[1], |a, b| (PI * a * b).sin()) / area;
                let q_avg = ((up[2] - 0.5).powi(3) - (lo[2] - 0.5).powi(3)) / (3.0 * (up[2] - lo[2]));
                sin_avg + 2.0 * q_avg + 0.5 * (lo[3] + up[3]) + 0.25 * (lo[4] + up[4])
            }
        })
    }

    /// `||s||_inf` over the cube.
    pub fn sup_norm(&self) -> f64 {
        match self {
            RegressionFn::Sinusoidal => 1.0,
            RegressionFn::AbsoluteValue => 0.5,
            RegressionFn::Sum { dim } => *dim as f64,
            RegressionFn::Friedman1 { .. } => 3.0,
        }
    }

    /// `||s'||_inf` for one-dimensional targets.
    pub fn sup_norm_deriv(&self) -> Result<f64> {
        match self {
            RegressionFn::Sinusoidal => Ok(2.0 * PI),
            RegressionFn::AbsoluteValue => Ok(1.0),
            RegressionFn::Sum { dim: 1 } => Ok(1.0),
            _ => Err(Error::Unsupported("||s'||_inf is one-dimensional".into())),
        }
    }

    /// `||s''||_inf` for one-dimensional twice-differentiable targets.
    pub fn sup_norm_second(&self) -> Result<f64> {
        match self {
            RegressionFn::Sinusoidal => Ok(4.0 * PI * PI),
            RegressionFn::Sum { dim: 1 } => Ok(0.0),
            _ => Err(Error::Unsupported("||s''||_inf is for 1-d C^2 targets".into())),
        }
    }

    /// Lipschitz constant w.r.t. the L2 norm, `sup_x ||grad s(x)||_2`.
    pub fn grad_sup_norm(&self) -> f64 {
        match self {
            RegressionFn::Sinusoidal => 2.0 * PI,
            RegressionFn::AbsoluteValue => 1.0,
            RegressionFn::Sum { dim } => (*dim as f64).sqrt(),
            RegressionFn::Friedman1 { .. } => *friedman1_consts().grad_sup,
        }
    }

    /// First-order Taylor remainder constant; `None` when (H2a) fails.
    pub fn c2(&self) -> Option<f64> {
        match self {
            RegressionFn::Sinusoidal => Some(2.0 * PI * PI),
            RegressionFn::AbsoluteValue => None,
            RegressionFn::Sum { .. } => Some(0.0),
            RegressionFn::Friedman1 { .. } => Some(*friedman1_consts().c2),
        }
    }

    /// Second-order Taylor remainder constant; `None` when (H3a) fails or
    /// is not worked out.
    pub fn c3(&self) -> Option<f64> {
        match self {
            RegressionFn::Sinusoidal => Some(8.0 * PI * PI * PI / 6.0),
            RegressionFn::Sum { .. } => Some(0.0),
            RegressionFn::AbsoluteValue | RegressionFn::Friedman1 { .. } => None,
        }
    }

    /// `int_0^1 (s')^2` for one-dimensional targets.
    pub fn integral_sq_deriv(&self) -> Result<f64> {
        match self {
            RegressionFn::Sinusoidal => Ok(2.0 * PI * PI),
            RegressionFn::AbsoluteValue => Ok(1.0),
            RegressionFn::Sum { dim: 1 } => Ok(1.0),
            _ => Err(Error::Unsupported("int (s')^2 is one-dimensional".into())),
        }
    }

    /// `int_0^1 (s'')^2` for one-dimensional C^2 targets.
    pub fn integral_sq_second(&self) -> Result<f64> {
        match self {
            RegressionFn::Sinusoidal => Ok(8.0 * PI.powi(4)),
            RegressionFn::Sum { dim: 1 } => Ok(0.0),
            _ => Err(Error::BoundsUnavailable(format!(
                "int (s'')^2 unavailable for {}",
                self.name()
            ))),
        }
    }

    /// Integral over restriction `[eps, 1-eps]` of `(s'')^2` (1-d, C^2).
    pub fn integral_sq_second_interior(&self, eps: f64) -> Result<f64> {
        match self {
            RegressionFn::Sinusoidal => Ok(gl16_composite(eps, 1.0 - eps, 16, |x| {
                (4.0 * PI * PI * (2.0 * PI * x).sin()).powi(2)
            })),
            RegressionFn::Sum { dim: 1 } => Ok(0.0),
            _ => Err(Error::BoundsUnavailable(format!(
                "int (s'')^2 unavailable for {}",
                self.name()
            ))),
        }
    }

    /// `int (grad s(x) . (1-2x))^2 dx` over the cube.
    pub fn integral_grad_dot_sq(&self) -> Result<f64> {
        match self {
            RegressionFn::Sinusoidal => Ok(gl16_composite(0.0, 1.0, 8, |x| {
                (2.0 * PI * (2.0 * PI * x).cos() * (1.0 - 2.0 * x)).powi(2)
            })),
            RegressionFn::AbsoluteValue => Ok(1.0 / 3.0),
            RegressionFn::Sum { dim } => Ok(*dim as f64 / 3.0),
            RegressionFn::Friedman1 { .. } => {
                // The x4/x5 terms are centred and independent of the rest:
                // E[(a12 + g3 + (1-2x4) + (1-2x5)/2)^2]
                //   = E[a12^2] + 2 E[a12] E[g3] + E[g3^2] + 1/3 + 1/12
                // with g3 = -8 (x3-1/2)^2, E[g3] = -2/3, E[g3^2] = 4/5.
                let a12 = |a: f64, b: f64| {
                    PI * (PI * a * b).cos() * (b * (1.0 - 2.0 * a) + a * (1.0 - 2.0 * b))
                };
                let e_a12 = gl16_2d(0.0, 1.0, 0.0, 1.0, a12);
                let e_a12_sq = gl16_2d(0.0, 1.0, 0.0, 1.0, |a, b| a12(a, b).powi(2));
                Ok(e_a12_sq + 2.0 * e_a12 * (-2.0 / 3.0) + 0.8 + 1.0 / 3.0 + 1.0 / 12.0)
            }
        }
    }

    /// `sum_i int (d_i s)^2 x_i (1 - x_i) dx` over the cube.
    pub fn integral_vtree_weight(&self) -> Result<f64> {
        match self {
            RegressionFn::Sinusoidal => Ok(gl16_composite(0.0, 1.0, 8, |x| {
                (2.0 * PI * (2.0 * PI * x).cos()).powi(2) * x * (1.0 - x)
            })),
            RegressionFn::AbsoluteValue => Ok(1.0 / 6.0),
            RegressionFn::Sum { dim } => Ok(*dim as f64 / 6.0),
            RegressionFn::Friedman1 { .. } => {
                let t1 = gl16_2d(0.0, 1.0, 0.0, 1.0, |a, b| {
                    (PI * b * (PI * a * b).cos()).powi(2) * a * (1.0 - a)
                });
                let t2 = gl16_2d(0.0, 1.0, 0.0, 1.0, |a, b| {
                    (PI * a * (PI * a * b).cos()).powi(2) * b * (1.0 - b)
                });
                let t3 = gl16(0.0, 1.0, |x| 16.0 * (x - 0.5).powi(2) * x * (1.0 - x));
                Ok(t1 + t2 + t3 + 1.0 / 6.0 + 0.25 / 6.0)
            }
        }
    }

    /// `int (grad s.(1-2x) + sum_i d2_i s(x) x_i(1-x_i))^2 dx`, the exact
    /// leading constant of the infinite-forest bias of balanced recursive
    /// partitions for three-times-differentiable targets.
    pub fn integral_bprf_h3_center(&self) -> Result<f64> {
        match self {
            RegressionFn::Sinusoidal => Ok(gl16_composite(0.0, 1.0, 8, |x| {
                let g = 2.0 * PI * (2.0 * PI * x).cos() * (1.0 - 2.0 * x);
                let h = -4.0 * PI * PI * (2.0 * PI * x).sin() * x * (1.0 - x);
                (g + h).powi(2)
            })),
            RegressionFn::Sum { dim } => Ok(*dim as f64 / 3.0),
            _ => Err(Error::BoundsUnavailable(format!(
                "C3-based center unavailable for {}",
                self.name()
            ))),
        }
    }

    /// `max_i sup_x (d_i s(x))^2`.
    pub fn sup_grad_component_sq(&self) -> f64 {
        match self {
            RegressionFn::Sinusoidal => 4.0 * PI * PI,
            RegressionFn::AbsoluteValue => 1.0,
            RegressionFn::Sum { .. } => 1.0,
            RegressionFn::Friedman1 { .. } => *friedman1_consts().grad_comp_sq,
        }
    }

    /// `max_{i != j} sup_x |d2 s / dx_i dx_j|`.
    pub fn sup_cross_second(&self) -> f64 {
        match self {
            RegressionFn::Friedman1 { .. } => *friedman1_consts().cross_second,
            _ => 0.0,
        }
    }

    /// `max_{i,j} sup_x |d2 s / dx_i dx_j|` including the diagonal; only
    /// worked out where the C3-based bounds need it.
    pub fn sup_hessian_entry_abs(&self) -> Option<f64> {
        match self {
            RegressionFn::Sinusoidal => Some(4.0 * PI * PI),
            RegressionFn::Sum { .. } => Some(0.0),
            _ => None,
        }
    }
}

fn sin_average(a: f64, b: f64) -> f64 {
    ((2.0 * PI * a).cos() - (2.0 * PI * b).cos()) / (2.0 * PI * (b - a))
}

fn abs_average(a: f64, b: f64) -> f64 {
    // Antiderivative of |t - 1/2| is sign(t-1/2) (t-1/2)^2 / 2.
    let anti = |t: f64| {
        let u = t - 0.5;
        0.5 * u * u * u.signum()
    };
    (anti(b) - anti(a)) / (b - a)
}

/// Numerically evaluated sup-norm constants of the Friedman1 target.
struct Friedman1Consts {
    c2: OnceLock<f64>,
    grad_sup: OnceLock<f64>,
    grad_comp_sq: OnceLock<f64>,
    cross_second: OnceLock<f64>,
}

struct Friedman1Values {
    c2: &'static f64,
    grad_sup: &'static f64,
    grad_comp_sq: &'static f64,
    cross_second: &'static f64,
}

static FRIEDMAN1: Friedman1Consts = Friedman1Consts {
    c2: OnceLock::new(),
    grad_sup: OnceLock::new(),
    grad_comp_sq: OnceLock::new(),
    cross_second: OnceLock::new(),
};

fn friedman1_consts() -> Friedman1Values {
    Friedman1Values {
        c2: FRIEDMAN1.c2.get_or_init(|| 0.5 * scan_max_2d(hessian_form_norm)),
        grad_sup: FRIEDMAN1.grad_sup.get_or_init(|| {
            // Component blocks are independent: (x1,x2) block scanned, the
            // x3 part peaks at the edge with slope 2, then 1 and 1/2.
            (scan_max_2d(|a, b| {
                let c = (PI * a * b).cos();
                (PI * b * c).powi(2) + (PI * a * c).powi(2)
            }) + 4.0
                + 1.0
                + 0.25)
                .sqrt()
        }),
        grad_comp_sq: FRIEDMAN1.grad_comp_sq.get_or_init(|| {
            scan_max_2d(|a, b| {
                let c = (PI * a * b).cos();
                (PI * b * c).powi(2).max((PI * a * c).powi(2))
            })
            .max(4.0)
        }),
        cross_second: FRIEDMAN1.cross_second.get_or_init(|| {
            scan_max_2d(|a, b| {
                let t = PI * a * b;
                (PI * t.cos() - PI * PI * a * b * t.sin()).abs()
            })
        }),
    }
}

/// Largest absolute eigenvalue of the Hessian at (x1, x2); the x3 block
/// contributes the constant 4.
fn hessian_form_norm(a: f64, b: f64) -> f64 {
    let t = PI * a * b;
    let (s, c) = t.sin_cos();
    let h11 = -PI * PI * b * b * s;
    let h22 = -PI * PI * a * a * s;
    let h12 = PI * c - PI * PI * a * b * s;
    let mean = 0.5 * (h11 + h22);
    let disc = (0.5 * (h11 - h22)).hypot(h12);
    (mean + disc).abs().max((mean - disc).abs()).max(4.0)
}

/// Coarse grid scan over the unit square followed by one local refinement.
fn scan_max_2d<F: Fn(f64, f64) -> f64>(f: F) -> f64 {
    let n = 600;
    let mut best = f64::MIN;
    let mut at = (0.0, 0.0);
    for i in 0..=n {
        for j in 0..=n {
            let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
            let v = f(a, b);
            if v > best {
                best = v;
                at = (a, b);
            }
        }
    }
    let h = 1.5 / n as f64;
    let m = 200;
    for i in 0..=m {
        for j in 0..=m {
            let a = (at.0 - h + 2.0 * h * i as f64 / m as f64).clamp(0.0, 1.0);
            let b = (at.1 - h + 2.0 * h * j as f64 / m as f64).clamp(0.0, 1.0);
            best = best.max(f(a, b));
        }
    }
    best
}

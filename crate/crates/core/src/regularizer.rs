//! Regularizers in the generalized `½‖σ(T(μ, u))‖²` form.
//!
//! Each instance supplies the penalty, its gradient in `u`, the linearization
//! of that gradient used by the sensitivity recursion, and the partial
//! derivatives of the gradient with respect to each learned parameter. All
//! pairings here are plain Euclidean sums over pixels; quadrature weights are
//! absorbed into `λ` so that `grad_term` is exactly the gradient the solver
//! steps along.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fraclap::{stencil, SpectralLaplacian};
use crate::grid::{Grid, Image};

/// Lower bound on `λ`.
pub const EPS_LAMBDA: f64 = 1e-15;
/// Distance of the admissible exponents from 0 and 1.
pub const EPS_S: f64 = 1e-15;

/// Default smoothing parameter of the total variation.
pub const DEFAULT_XI: f64 = 1e-5;

/// Regularization parameters `μ`: the strength `λ` and, when it is learned,
/// the fractional exponent `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegParams {
    pub lambda: f64,
    pub s: Option<f64>,
}

impl RegParams {
    pub fn lambda(lambda: f64) -> Self {
        Self { lambda, s: None }
    }

    pub fn lambda_s(lambda: f64, s: f64) -> Self {
        Self {
            lambda,
            s: Some(s),
        }
    }

    pub fn dim(&self) -> usize {
        1 + usize::from(self.s.is_some())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.lambda];
        v.extend(self.s);
        v
    }

    /// Same layout as `self`, new values.
    pub fn with_values(&self, values: &[f64]) -> Self {
        Self {
            lambda: values[0],
            s: self.s.map(|_| values[1]),
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.lambda.is_finite()
            && self.lambda >= EPS_LAMBDA
            && self.s.map_or(true, |s| (EPS_S..=1.0 - EPS_S).contains(&s))
    }

    /// Projection onto `[ε₁, ∞) × [ε₂, 1 − ε₂]`.
    pub fn project(&self) -> Self {
        Self {
            lambda: self.lambda.max(EPS_LAMBDA),
            s: self.s.map(|s| s.clamp(EPS_S, 1.0 - EPS_S)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegKind {
    None,
    Tv,
    Fractional,
}

impl RegKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegKind::None => "none",
            RegKind::Tv => "tv",
            RegKind::Fractional => "frac",
        }
    }
}

impl std::str::FromStr for RegKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RegKind::None),
            "tv" => Ok(RegKind::Tv),
            "frac" | "fractional" => Ok(RegKind::Fractional),
            other => Err(Error::Domain(format!("unknown regularizer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Regularizer {
    None,
    Tv {
        grid: Grid,
        xi: f64,
    },
    /// `½ λ ⟨A^s u, u⟩`. With `fixed_s` set, `μ = λ` and the exponent is
    /// frozen; otherwise `μ = (λ, s)`.
    Fractional {
        laplacian: Arc<SpectralLaplacian>,
        fixed_s: Option<f64>,
    },
}

impl Regularizer {
    pub fn tv(grid: Grid, xi: f64) -> Result<Self> {
        if !(xi > 0.0) {
            return Err(Error::Domain(format!("TV smoothing must be positive, got {xi}")));
        }
        Ok(Regularizer::Tv { grid, xi })
    }

    pub fn fractional(grid: Grid) -> Self {
        Regularizer::Fractional {
            laplacian: Arc::new(SpectralLaplacian::build(grid)),
            fixed_s: None,
        }
    }

    pub fn fractional_fixed_s(grid: Grid, s: f64) -> Result<Self> {
        if !(EPS_S..=1.0 - EPS_S).contains(&s) {
            return Err(Error::Domain(format!("fixed exponent {s} is not admissible")));
        }
        Ok(Regularizer::Fractional {
            laplacian: Arc::new(SpectralLaplacian::build(grid)),
            fixed_s: Some(s),
        })
    }

    pub fn kind(&self) -> RegKind {
        match self {
            Regularizer::None => RegKind::None,
            Regularizer::Tv { .. } => RegKind::Tv,
            Regularizer::Fractional { .. } => RegKind::Fractional,
        }
    }

    /// Whether `μ` carries the exponent for this instance.
    pub fn learns_s(&self) -> bool {
        matches!(self, Regularizer::Fractional { fixed_s: None, .. })
    }

    /// Checks that `mu` has the right layout and lies in the admissible set.
    pub fn validate(&self, mu: &RegParams) -> Result<()> {
        if !mu.is_admissible() {
            return Err(Error::Domain(format!("inadmissible parameters {mu:?}")));
        }
        if mu.s.is_some() != self.learns_s() {
            return Err(Error::Domain(format!(
                "parameters {mu:?} do not match regularizer {}",
                self.kind().name()
            )));
        }
        Ok(())
    }

    fn exponent(&self, mu: &RegParams) -> f64 {
        match self {
            Regularizer::Fractional { fixed_s, .. } => fixed_s.or(mu.s).expect("validated"),
            _ => unreachable!("only the fractional regularizer has an exponent"),
        }
    }

    pub fn penalty_value(&self, mu: &RegParams, u: &Image) -> Result<f64> {
        self.validate(mu)?;
        match self {
            Regularizer::None => Ok(0.0),
            Regularizer::Tv { grid, xi } => {
                check_grid(*grid, u)?;
                let mut total = 0.0;
                for_each_cell(*grid, u.values(), |gx, gy| {
                    total += (gx * gx + gy * gy + xi * xi).sqrt();
                });
                Ok(mu.lambda * total)
            }
            Regularizer::Fractional { laplacian, .. } => {
                let au = laplacian.apply_power(self.exponent(mu), u)?;
                Ok(0.5 * mu.lambda * au.dot(u)?)
            }
        }
    }

    /// Penalty and gradient from one pass.
    pub fn value_and_grad(&self, mu: &RegParams, u: &Image) -> Result<(f64, Image)> {
        self.validate(mu)?;
        match self {
            Regularizer::None => Ok((0.0, Image::zeros(u.grid()))),
            Regularizer::Tv { grid, xi } => {
                check_grid(*grid, u)?;
                let (total, g) = tv_value_and_neg_div(*grid, *xi, u.values());
                Ok((mu.lambda * total, g.scale(mu.lambda)))
            }
            Regularizer::Fractional { laplacian, .. } => {
                let g = laplacian
                    .apply_power(self.exponent(mu), u)?
                    .scale(mu.lambda);
                let value = 0.5 * g.dot(u)?;
                Ok((value, g))
            }
        }
    }

    /// [`Self::grad_term_dmu`] when `grad = grad_term(mu, u)` is already known.
    pub(crate) fn dmu_given_grad(&self, mu: &RegParams, u: &Image, grad: &Image) -> Result<Vec<Image>> {
        match self {
            Regularizer::Fractional { fixed_s: Some(_), .. } => Ok(vec![grad.scale(1.0 / mu.lambda)]),
            Regularizer::Tv { .. } => Ok(vec![grad.scale(0.5 / mu.lambda)]),
            _ => self.grad_term_dmu(mu, u),
        }
    }

    /// Gradient of [`Self::penalty_value`] in `u`.
    pub fn grad_term(&self, mu: &RegParams, u: &Image) -> Result<Image> {
        self.validate(mu)?;
        match self {
            Regularizer::None => Ok(Image::zeros(u.grid())),
            Regularizer::Tv { grid, xi } => {
                check_grid(*grid, u)?;
                Ok(tv_neg_div(*grid, *xi, u.values()).scale(mu.lambda))
            }
            Regularizer::Fractional { laplacian, .. } => Ok(laplacian
                .apply_power(self.exponent(mu), u)?
                .scale(mu.lambda)),
        }
    }

    /// The regularizer's block of `∂u_j/∂u_{j-1}` applied to `v`. For TV this
    /// is the Laplacian stand-in `λ A v`, not the exact Hessian.
    pub fn grad_term_jvp(&self, mu: &RegParams, _u: &Image, v: &Image) -> Result<Image> {
        self.validate(mu)?;
        match self {
            Regularizer::None => Ok(Image::zeros(v.grid())),
            Regularizer::Tv { grid, .. } => {
                check_grid(*grid, v)?;
                let mut out = vec![0.0; grid.len()];
                stencil(*grid, v.values(), &mut out);
                Ok(Image::from_vec(*grid, out)?.scale(mu.lambda))
            }
            Regularizer::Fractional { laplacian, .. } => Ok(laplacian
                .apply_power(self.exponent(mu), v)?
                .scale(mu.lambda)),
        }
    }

    /// Upper bound on the norm of the operator used by [`Self::grad_term_jvp`].
    /// For TV that is the stand-in `λA`, whose spectrum lies below `8λ/h²`.
    pub fn curvature_bound(&self, mu: &RegParams) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::Tv { grid, .. } => 8.0 * mu.lambda / (grid.h() * grid.h()),
            Regularizer::Fractional { laplacian, .. } => {
                mu.lambda * laplacian.max_eigenvalue().powf(self.exponent(mu))
            }
        }
    }

    /// Partial derivatives of the gradient term with respect to each
    /// component of `μ`. Empty for the unregularized model.
    pub fn grad_term_dmu(&self, mu: &RegParams, u: &Image) -> Result<Vec<Image>> {
        Ok(self.grad_and_dmu(mu, u)?.1)
    }

    /// `grad_term` and `grad_term_dmu` together, sharing the expensive applies.
    pub fn grad_and_dmu(&self, mu: &RegParams, u: &Image) -> Result<(Image, Vec<Image>)> {
        self.validate(mu)?;
        match self {
            Regularizer::None => Ok((Image::zeros(u.grid()), Vec::new())),
            Regularizer::Tv { grid, xi } => {
                check_grid(*grid, u)?;
                let base = tv_neg_div(*grid, *xi, u.values());
                // The λ-sensitivity carries the factor ½ of the TV update formula.
                let dlambda = base.scale(0.5);
                Ok((base.scale(mu.lambda), vec![dlambda]))
            }
            Regularizer::Fractional { laplacian, fixed_s } => {
                let s = self.exponent(mu);
                if fixed_s.is_some() {
                    let au = laplacian.apply_power(s, u)?;
                    Ok((au.scale(mu.lambda), vec![au]))
                } else {
                    let (au, dau) = laplacian.apply_power_with_derivative(s, u)?;
                    Ok((au.scale(mu.lambda), vec![au, dau.scale(mu.lambda)]))
                }
            }
        }
    }
}

fn check_grid(grid: Grid, u: &Image) -> Result<()> {
    if u.grid() == grid {
        Ok(())
    } else {
        Err(Error::Dimension {
            what: "regularizer grid",
            expected: grid.n(),
            actual: u.grid().n(),
        })
    }
}

/// Visits the discrete gradient `(gx, gy)` on each of the `(n+1)²` cells.
///
/// Cell `(a, b)`, `a, b ∈ 0..=n`, holds the backward differences into padded
/// node `(a, b)` with zero Dirichlet padding, so every edge of the padded
/// grid appears exactly once and `∇ᵀ∇` is the five-point Dirichlet stencil.
fn for_each_cell(grid: Grid, u: &[f64], mut visit: impl FnMut(f64, f64)) {
    let n = grid.n();
    let inv_h = 1.0 / grid.h();
    let at = |a: usize, b: usize| -> f64 {
        if a < n && b < n {
            u[a * n + b]
        } else {
            0.0
        }
    };
    for a in 0..=n {
        for b in 0..=n {
            let here = at(a, b);
            let left = if b > 0 { at(a, b - 1) } else { 0.0 };
            let up = if a > 0 { at(a - 1, b) } else { 0.0 };
            visit((here - left) * inv_h, (here - up) * inv_h);
        }
    }
}

/// `-div(∇u / √(|∇u|² + ξ²))`, the exact gradient of `Σ √(|∇u|² + ξ²)`.
fn tv_neg_div(grid: Grid, xi: f64, u: &[f64]) -> Image {
    tv_value_and_neg_div(grid, xi, u).1
}

fn tv_value_and_neg_div(grid: Grid, xi: f64, u: &[f64]) -> (f64, Image) {
    let m = grid.n() + 1;
    let mut qx = Vec::with_capacity(m * m);
    let mut qy = Vec::with_capacity(m * m);
    let mut total = 0.0;
    for_each_cell(grid, u, |gx, gy| {
        let norm = (gx * gx + gy * gy + xi * xi).sqrt();
        total += norm;
        qx.push(gx / norm);
        qy.push(gy / norm);
    });
    let inv_h = 1.0 / grid.h();
    let div = Image::from_fn(grid, |a, b| {
        let k = a * m + b;
        inv_h * ((qx[k] - qx[k + 1]) + (qy[k] - qy[k + m]))
    });
    (total, div)
}

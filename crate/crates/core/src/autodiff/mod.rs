//! Derivatives of the network: input jets, parameter gradients of
//! residual scalars, and the finite-difference cross-check.
//!
//! Input derivatives come from forward Taylor propagation (x carried to
//! order 3, t to order 1, everything the three equations need).
//! Parameter gradients come from one reverse sweep over the same Taylor
//! forward pass, seeded with the partials of the scalar of interest with
//! respect to the output jet's coefficients. See [`taylor`] for the
//! algebra and [`net`] for the sweeps.

pub mod net;
pub mod taylor;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParameterVector};
use crate::pde::{CollocationPoint, DerivBundle, PdeSpec, WallSide};
use crate::reduce;
use net::{backward_into, forward_into, NetWorkspace};
use taylor::{Scalar, Tay};

/// Network value with its input derivatives at one point. Only the
/// requested orders are populated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub u: f64,
    pub du_dx: Option<f64>,
    pub d2u_dx2: Option<f64>,
    pub d3u_dx3: Option<f64>,
    pub du_dt: Option<f64>,
}

/// Requested derivative orders: x up to 3, t up to 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DerivativeRequest {
    x_order: u8,
    t_order: u8,
}

impl DerivativeRequest {
    pub fn new(x_order: u8, t_order: u8) -> Result<Self> {
        if x_order > 3 || t_order > 1 {
            return Err(Error::InvalidDerivativeRequest { x_order, t_order });
        }
        Ok(Self { x_order, t_order })
    }

    /// The orders a PDE kind's residual needs.
    pub fn for_pde(spec: &PdeSpec) -> Self {
        Self {
            x_order: spec.kind.x_order(),
            t_order: 1,
        }
    }

    pub fn x_order(&self) -> u8 {
        self.x_order
    }

    pub fn t_order(&self) -> u8 {
        self.t_order
    }
}

fn jet_from_tay<const NX: usize, const NT: usize>(
    model: &ModelSpec,
    entries: &[f64],
    x: f64,
    t: f64,
) -> Jet {
    let mut ws = NetWorkspace::<Tay<NX, NT>>::new(model);
    let u = forward_into(model, entries, Tay::var_x(x), Tay::var_t(t), &mut ws);
    Jet {
        u: u.val(),
        du_dx: (NX > 1).then(|| u.deriv(1, 0)),
        d2u_dx2: (NX > 2).then(|| u.deriv(2, 0)),
        d3u_dx3: (NX > 3).then(|| u.deriv(3, 0)),
        du_dt: (NT > 1).then(|| u.deriv(0, 1)),
    }
}

/// Evaluate the network and the requested input derivatives at `(x, t)`.
/// The value lane agrees bit-for-bit with [`crate::model::forward`].
pub fn eval_jet(
    params: &ParameterVector,
    x: f64,
    t: f64,
    req: DerivativeRequest,
) -> Result<Jet> {
    let model = params.spec();
    let e = params.entries();
    let jet = match (req.x_order, req.t_order) {
        (0, 0) => jet_from_tay::<1, 1>(model, e, x, t),
        (1, 0) => jet_from_tay::<2, 1>(model, e, x, t),
        (2, 0) => jet_from_tay::<3, 1>(model, e, x, t),
        (3, 0) => jet_from_tay::<4, 1>(model, e, x, t),
        (0, 1) => jet_from_tay::<1, 2>(model, e, x, t),
        (1, 1) => jet_from_tay::<2, 2>(model, e, x, t),
        (2, 1) => jet_from_tay::<3, 2>(model, e, x, t),
        (3, 1) => jet_from_tay::<4, 2>(model, e, x, t),
        _ => return Err(Error::InvalidDerivativeRequest {
            x_order: req.x_order,
            t_order: req.t_order,
        }),
    };
    let finite = jet.u.is_finite()
        && [jet.du_dx, jet.d2u_dx2, jet.d3u_dx3, jet.du_dt]
            .iter()
            .all(|d| d.map_or(true, f64::is_finite));
    if !finite {
        return Err(Error::NonFinite {
            context: format!("jet at ({x}, {t})"),
        });
    }
    Ok(jet)
}

/// Value and x-slope at a wall, for periodic boundary residuals. The t
/// direction is inert here (no t-derivative needed), so this runs on the
/// cheapest jet that carries a slope.
pub(crate) fn wall_jet(params: &ParameterVector, x: f64, t: f64) -> (f64, f64) {
    let model = params.spec();
    let mut ws = NetWorkspace::<Tay<2, 1>>::new(model);
    let u = forward_into(model, params.entries(), Tay::var_x(x), Tay::var_t(t), &mut ws);
    (u.val(), u.deriv(1, 0))
}

fn bundle_from<const NX: usize, const NT: usize>(u: Tay<NX, NT>) -> DerivBundle {
    DerivBundle {
        u: u.val(),
        u_x: if NX > 1 { u.deriv(1, 0) } else { 0.0 },
        u_xx: if NX > 2 { u.deriv(2, 0) } else { 0.0 },
        u_xxx: if NX > 3 { u.deriv(3, 0) } else { 0.0 },
        u_t: if NT > 1 { u.deriv(0, 1) } else { 0.0 },
    }
}

fn batch_residuals<const NX: usize, const NT: usize>(
    spec: &PdeSpec,
    params: &ParameterVector,
    pts: &[CollocationPoint],
) -> Result<Vec<f64>> {
    let model = params.spec();
    let e = params.entries();
    pts.par_iter()
        .map_init(
            || NetWorkspace::<Tay<NX, NT>>::new(model),
            |ws, p| {
                let u = forward_into(model, e, Tay::var_x(p.x), Tay::var_t(p.t), ws);
                let d = bundle_from(u);
                Ok(spec.residual_from_derivs(&d, p.x))
            },
        )
        .collect()
}

/// Interior residual values at every point, in input order.
pub fn interior_residuals(
    spec: &PdeSpec,
    params: &ParameterVector,
    pts: &[CollocationPoint],
) -> Result<Vec<f64>> {
    match spec.kind.x_order() {
        3 => batch_residuals::<4, 2>(spec, params, pts),
        _ => batch_residuals::<3, 2>(spec, params, pts),
    }
}

/// One interior point's residual R plus the parameter gradient of either
/// R (raw) or R² (squared), accumulated into `grad`.
fn interior_point_grad<const NX: usize, const NT: usize>(
    spec: &PdeSpec,
    model: &ModelSpec,
    e: &[f64],
    x: f64,
    t: f64,
    squared: bool,
    ws: &mut NetWorkspace<Tay<NX, NT>>,
    grad: &mut [f64],
) -> f64 {
    let u = forward_into(model, e, Tay::var_x(x), Tay::var_t(t), ws);
    let d = bundle_from(u);
    let r = spec.residual_from_derivs(&d, x);
    let p = spec.residual_partials(&d);
    let scale = if squared { 2.0 * r } else { 1.0 };
    // Reverse-sweep seed: the scalar's partials with respect to the output
    // jet's coefficients, stored coefficient-reversed (entry [NX-1-i][NT-1-l]
    // holds the partial for coefficient [i][l]). A derivative value of
    // order (i, l) is i! l! times its coefficient, hence the 2 and 6.
    let mut seed = Tay::<NX, NT>::zero();
    seed.c[NX - 1][NT - 1] = p.du * scale;
    if NX > 1 {
        seed.c[NX - 2][NT - 1] = p.du_x * scale;
    }
    if NX > 2 {
        seed.c[NX - 3][NT - 1] = 2.0 * p.du_xx * scale;
    }
    if NX > 3 {
        seed.c[NX - 4][NT - 1] = 6.0 * p.du_xxx * scale;
    }
    if NT > 1 {
        seed.c[NX - 1][NT - 2] = p.du_t * scale;
    }
    backward_into(model, e, ws, seed, grad);
    r
}

fn batch_sample_grads<const NX: usize, const NT: usize>(
    spec: &PdeSpec,
    params: &ParameterVector,
    batch: &[CollocationPoint],
    squared: bool,
) -> Vec<Vec<f64>> {
    let model = params.spec();
    let e = params.entries();
    let np = params.len();
    batch
        .par_iter()
        .map_init(
            || NetWorkspace::<Tay<NX, NT>>::new(model),
            |ws, p| {
                let mut row = vec![0.0; np];
                interior_point_grad(spec, model, e, p.x, p.t, squared, ws, &mut row);
                row
            },
        )
        .collect()
}

/// Per-sample parameter gradients over an interior mini-batch, one row per
/// point in input order.
pub(crate) fn interior_sample_grads(
    spec: &PdeSpec,
    params: &ParameterVector,
    batch: &[CollocationPoint],
    squared: bool,
) -> Vec<Vec<f64>> {
    match spec.kind.x_order() {
        3 => batch_sample_grads::<4, 2>(spec, params, batch, squared),
        _ => batch_sample_grads::<3, 2>(spec, params, batch, squared),
    }
}

/// Gradient of one squared IC residual, accumulated into `grad`; returns
/// the residual.
fn ic_point_grad(
    spec: &PdeSpec,
    model: &ModelSpec,
    e: &[f64],
    x: f64,
    ws: &mut NetWorkspace<f64>,
    grad: &mut [f64],
) -> f64 {
    let u = forward_into(model, e, x, 0.0, ws);
    let r = u - spec.ic_value(x);
    backward_into(model, e, ws, 2.0 * r, grad);
    r
}

/// Gradient of one squared BC term, accumulated into `grad`; returns the
/// squared term value.
fn bc_point_sq_grad(
    spec: &PdeSpec,
    model: &ModelSpec,
    e: &[f64],
    t: f64,
    side: WallSide,
    ws: &mut NetWorkspace<Tay<2, 1>>,
    grad: &mut [f64],
) -> f64 {
    match spec.bc {
        crate::pde::BcKind::Dirichlet => {
            let x = match side {
                WallSide::Lower => spec.domain.x_min,
                WallSide::Upper => spec.domain.x_max,
            };
            let u = forward_into(model, e, Tay::<2, 1>::var_x(x), Tay::var_t(t), ws);
            let r = u.val() - spec.bc_value;
            // d(r^2)/d(value coefficient) = 2r; slope coefficient unused.
            let mut seed = Tay::<2, 1>::zero();
            seed.c[1][0] = 2.0 * r;
            backward_into(model, e, ws, seed, grad);
            r * r
        }
        crate::pde::BcKind::Periodic => {
            // s = (u_lo - u_hi)^2 + (u'_lo - u'_hi)^2; one sweep per wall
            // with opposite seeds.
            let lo = forward_into(
                model,
                e,
                Tay::<2, 1>::var_x(spec.domain.x_min),
                Tay::var_t(t),
                ws,
            );
            let (u_lo, ux_lo) = (lo.val(), lo.deriv(1, 0));
            let mut ws_hi = NetWorkspace::<Tay<2, 1>>::new(model);
            let hi = forward_into(
                model,
                e,
                Tay::<2, 1>::var_x(spec.domain.x_max),
                Tay::var_t(t),
                &mut ws_hi,
            );
            let (u_hi, ux_hi) = (hi.val(), hi.deriv(1, 0));
            let rv = u_lo - u_hi;
            let rs = ux_lo - ux_hi;
            let mut seed = Tay::<2, 1>::zero();
            seed.c[1][0] = 2.0 * rv; // value coefficient partial
            seed.c[0][0] = 2.0 * rs; // slope coefficient partial
            backward_into(model, e, ws, seed, grad);
            backward_into(model, e, &mut ws_hi, seed.neg(), grad);
            rv * rv + rs * rs
        }
    }
}

/// Mean parameter gradient of the IC plus BC loss terms (each family's
/// mean of squared-residual gradients, summed): the auxiliary stream that
/// joins the first moment when training on the total loss.
pub(crate) fn aux_loss_grad(
    spec: &PdeSpec,
    params: &ParameterVector,
    initial: &[CollocationPoint],
    boundary: &[CollocationPoint],
) -> Vec<f64> {
    let model = params.spec();
    let e = params.entries();
    let np = params.len();
    let ic_rows: Vec<Vec<f64>> = initial
        .par_iter()
        .map_init(
            || NetWorkspace::<f64>::new(model),
            |ws, p| {
                let mut row = vec![0.0; np];
                ic_point_grad(spec, model, e, p.x, ws, &mut row);
                row
            },
        )
        .collect();
    let bc_rows: Vec<Vec<f64>> = boundary
        .par_iter()
        .map_init(
            || NetWorkspace::<Tay<2, 1>>::new(model),
            |ws, p| {
                let side = if p.x == spec.domain.x_min {
                    WallSide::Lower
                } else {
                    WallSide::Upper
                };
                let mut row = vec![0.0; np];
                bc_point_sq_grad(spec, model, e, p.t, side, ws, &mut row);
                row
            },
        )
        .collect();
    let ic_mean = reduce::rows_mean(&ic_rows, np);
    let bc_mean = reduce::rows_mean(&bc_rows, np);
    ic_mean.iter().zip(&bc_mean).map(|(a, b)| a + b).collect()
}

/// Flat gradient over parameters; finite by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "gradient vector".into(),
            });
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, o: &GradientVector) -> f64 {
        reduce::pairwise_dot(&self.0, &o.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Which scalar a gradient is taken of. IC and BC scalars are squared
/// (they only enter the loss squared); the interior residual comes in
/// both raw and squared forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarExpr {
    InteriorRaw,
    InteriorSquared,
    IcSquared,
    BcSquared,
}

fn side_of(spec: &PdeSpec, x: f64) -> WallSide {
    if (x - spec.domain.x_min).abs() <= (x - spec.domain.x_max).abs() {
        WallSide::Lower
    } else {
        WallSide::Upper
    }
}

/// Parameter gradient of one residual scalar at one collocation point.
pub fn scalar_param_grad(
    params: &ParameterVector,
    point: &CollocationPoint,
    expr: ScalarExpr,
    spec: &PdeSpec,
) -> Result<GradientVector> {
    let model = params.spec();
    let e = params.entries();
    let mut grad = vec![0.0; params.len()];
    match expr {
        ScalarExpr::InteriorRaw | ScalarExpr::InteriorSquared => {
            let squared = expr == ScalarExpr::InteriorSquared;
            match spec.kind.x_order() {
                3 => {
                    let mut ws = NetWorkspace::<Tay<4, 2>>::new(model);
                    interior_point_grad(spec, model, e, point.x, point.t, squared, &mut ws, &mut grad);
                }
                _ => {
                    let mut ws = NetWorkspace::<Tay<3, 2>>::new(model);
                    interior_point_grad(spec, model, e, point.x, point.t, squared, &mut ws, &mut grad);
                }
            }
        }
        ScalarExpr::IcSquared => {
            let mut ws = NetWorkspace::<f64>::new(model);
            ic_point_grad(spec, model, e, point.x, &mut ws, &mut grad);
        }
        ScalarExpr::BcSquared => {
            let mut ws = NetWorkspace::<Tay<2, 1>>::new(model);
            bc_point_sq_grad(spec, model, e, point.t, side_of(spec, point.x), &mut ws, &mut grad);
        }
    }
    GradientVector::new(grad)
}

/// The scalar value that `scalar_param_grad` differentiates, evaluated
/// directly: the function the finite-difference check probes.
pub fn scalar_value(
    params: &ParameterVector,
    point: &CollocationPoint,
    expr: ScalarExpr,
    spec: &PdeSpec,
) -> Result<f64> {
    match expr {
        ScalarExpr::InteriorRaw | ScalarExpr::InteriorSquared => {
            let jet = eval_jet(params, point.x, point.t, DerivativeRequest::for_pde(spec))?;
            let r = crate::pde::interior_residual(spec, &jet, point.x)?;
            Ok(if expr == ScalarExpr::InteriorRaw { r } else { r * r })
        }
        ScalarExpr::IcSquared => {
            let r = crate::pde::ic_residual(spec, params, point.x);
            Ok(r * r)
        }
        ScalarExpr::BcSquared => {
            Ok(crate::pde::bc_residual(spec, params, point.t, side_of(spec, point.x)).squared())
        }
    }
}

/// Cross-check `scalar_param_grad` against central finite differences over
/// every parameter. Returns the worst relative discrepancy among entries
/// whose magnitude (analytic or differenced) exceeds 1e-4 times the probed
/// value's scale; smaller entries sit below the attainable resolution of
/// the difference quotient, whose absolute noise is about ulp(f) / step.
pub fn grad_check(
    params: &ParameterVector,
    point: &CollocationPoint,
    expr: ScalarExpr,
    spec: &PdeSpec,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidStep(step));
    }
    let analytic = scalar_param_grad(params, point, expr, spec)?;
    let floor = 1e-4 * scalar_value(params, point, expr, spec)?.abs().max(1.0);
    let mut probe = params.clone();
    let mut max_err: f64 = 0.0;
    for i in 0..probe.len() {
        let orig = probe.entries()[i];
        probe.entries_mut()[i] = orig + step;
        let up = scalar_value(&probe, point, expr, spec)?;
        probe.entries_mut()[i] = orig - step;
        let dn = scalar_value(&probe, point, expr, spec)?;
        probe.entries_mut()[i] = orig;
        let fd = (up - dn) / (2.0 * step);
        let a = analytic.entries()[i];
        let denom = a.abs().max(fd.abs());
        if denom > floor {
            max_err = max_err.max((a - fd).abs() / denom);
        }
    }
    Ok(max_err)
}

//! Time-stepping schemes for the three benchmarks.
//!
//! All solvers march with internal substeps chosen from their stability
//! bounds (so the requested output grid never forces an unstable step),
//! deposit samples at the output nodes, and guard against blow-up with a
//! |u| <= 10 bound far above every benchmark's amplitude.

use super::{scheme_id, Grid, SolutionField};
use crate::error::{Error, Result};
use crate::pde::{BcKind, PdeKind, PdeSpec};

const DIVERGENCE_BOUND: f64 = 10.0;
const MAX_SUBSTEPS_PER_INTERVAL: usize = 5_000_000;

fn base_metadata(spec: &PdeSpec, substeps_total: usize) -> Vec<(String, String)> {
    vec![
        ("pde".into(), spec.kind.name().into()),
        ("coeff".into(), format!("{:.16e}", spec.kind.coefficient())),
        ("ic".into(), spec.ic_string()),
        ("bc".into(), spec.bc_string().into()),
        ("forcing".into(), spec.forcing_string()),
        ("scheme".into(), scheme_id(&spec.kind).into()),
        ("spec_hash".into(), spec.content_hash()),
        ("substeps".into(), substeps_total.to_string()),
    ]
}

fn check_state(u: &[f64], kind: &str, k: usize) -> Result<()> {
    for &v in u {
        if !v.is_finite() || v.abs() > DIVERGENCE_BOUND {
            return Err(Error::Instability(format!(
                "{kind} solve left the trust region at output step {k}: u = {v}"
            )));
        }
    }
    Ok(())
}

/// Godunov flux for f(u) = u²/2 between reconstructed states.
fn godunov_flux(ul: f64, ur: f64) -> f64 {
    if ul <= ur {
        // Rarefaction: minimum of f over [ul, ur].
        if ul > 0.0 {
            0.5 * ul * ul
        } else if ur < 0.0 {
            0.5 * ur * ur
        } else {
            0.0
        }
    } else {
        // Shock: maximum of the endpoint values.
        let m = ul.abs().max(ur.abs());
        0.5 * m * m
    }
}

/// -d/dx of the upwind flux with second-order (central-slope) node
/// reconstruction; walls held fixed, so their tendency is zero.
fn burgers_advect_rhs(u: &[f64], dx: f64, flux: &mut [f64], out: &mut [f64]) {
    let n = u.len();
    for j in 0..n - 1 {
        let sl = if j == 0 { 0.0 } else { 0.5 * (u[j + 1] - u[j - 1]) };
        let sr = if j + 1 == n - 1 {
            0.0
        } else {
            0.5 * (u[j + 2] - u[j])
        };
        flux[j] = godunov_flux(u[j] + 0.5 * sl, u[j + 1] - 0.5 * sr);
    }
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        out[i] = -(flux[i] - flux[i - 1]) / dx;
    }
}

/// Crank-Nicolson half of a Strang step for u_t = diff_coeff * u_xx with
/// fixed walls: (I - beta D2) u' = (I + beta D2) u. `beta` already folds
/// in the half step. Constant-coefficient Thomas solve over the interior.
fn cn_dirichlet(u: &mut [f64], beta: f64, wall: f64, rhs: &mut [f64], cp: &mut [f64]) {
    let n = u.len();
    let a = -beta;
    let b = 1.0 + 2.0 * beta;
    let c = -beta;
    for i in 1..n - 1 {
        rhs[i] = (1.0 - 2.0 * beta) * u[i] + beta * (u[i - 1] + u[i + 1]);
    }
    rhs[1] += beta * wall;
    rhs[n - 2] += beta * wall;
    cp[1] = c / b;
    rhs[1] /= b;
    for i in 2..n - 1 {
        let den = b - a * cp[i - 1];
        cp[i] = c / den;
        rhs[i] = (rhs[i] - a * rhs[i - 1]) / den;
    }
    u[n - 2] = rhs[n - 2];
    for i in (1..n - 2).rev() {
        u[i] = rhs[i] - cp[i] * u[i + 1];
    }
    u[0] = wall;
    u[n - 1] = wall;
}

/// Thomas solve with constant off-diagonals and a per-row diagonal
/// (the cyclic reduction below perturbs the two corner rows).
fn thomas_vardiag(a: f64, diag: &[f64], c: f64, rhs: &mut [f64], cp: &mut [f64]) {
    let n = diag.len();
    cp[0] = c / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let den = diag[i] - a * cp[i - 1];
        cp[i] = c / den;
        rhs[i] = (rhs[i] - a * rhs[i - 1]) / den;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= cp[i] * rhs[i + 1];
    }
}

/// Scratch space for the periodic Crank-Nicolson solve.
struct CyclicCn {
    diag: Vec<f64>,
    rhs: Vec<f64>,
    w: Vec<f64>,
    cp: Vec<f64>,
}

impl CyclicCn {
    fn new(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            rhs: vec![0.0; n],
            w: vec![0.0; n],
            cp: vec![0.0; n],
        }
    }

    /// Periodic Crank-Nicolson step via Sherman-Morrison: fold the two
    /// corner entries into a rank-one update of a plain tridiagonal system.
    fn step(&mut self, u: &mut [f64], beta: f64) {
        let n = u.len();
        let b = 1.0 + 2.0 * beta;
        let off = -beta;
        for i in 0..n {
            let um = u[(i + n - 1) % n];
            let up = u[(i + 1) % n];
            self.rhs[i] = (1.0 - 2.0 * beta) * u[i] + beta * (um + up);
        }
        let gamma = -b;
        self.diag.fill(b);
        self.diag[0] = b - gamma;
        self.diag[n - 1] = b - off * off / gamma;
        self.w.fill(0.0);
        self.w[0] = gamma;
        self.w[n - 1] = off;
        thomas_vardiag(off, &self.diag, off, &mut self.rhs, &mut self.cp);
        thomas_vardiag(off, &self.diag, off, &mut self.w, &mut self.cp);
        let vz = self.rhs[0] + (off / gamma) * self.rhs[n - 1];
        let vw = self.w[0] + (off / gamma) * self.w[n - 1];
        let factor = vz / (1.0 + vw);
        for i in 0..n {
            u[i] = self.rhs[i] - factor * self.w[i];
        }
    }
}

/// Viscous Burgers with Dirichlet walls: Strang splitting of
/// Crank-Nicolson diffusion around a second-order explicit conservative
/// upwind advection step (SSP-RK2 in time).
pub fn solve_burgers(spec: &PdeSpec, grid: &Grid) -> Result<SolutionField> {
    spec.validate()?;
    let PdeKind::Burgers { nu } = spec.kind else {
        return Err(Error::InvalidArgument(
            "solve_burgers needs a Burgers spec".into(),
        ));
    };
    if spec.bc != BcKind::Dirichlet {
        return Err(Error::InvalidArgument(
            "the Burgers scheme implements Dirichlet walls only".into(),
        ));
    }
    let nx = grid.nx();
    let dx = grid.dx();
    let dt_out = grid.dt();
    let mut u: Vec<f64> = (0..nx).map(|i| spec.ic_value(grid.x(i))).collect();
    u[0] = spec.bc_value;
    u[nx - 1] = spec.bc_value;

    // Walls are fixed and the forcing is zero on the benchmarks, so the
    // initial amplitude bounds the advective speed for the whole run.
    let umax = u
        .iter()
        .fold(spec.bc_value.abs(), |m, v| m.max(v.abs()))
        .max(1e-12);
    let m = ((dt_out * umax / (0.4 * dx)).ceil() as usize).clamp(1, MAX_SUBSTEPS_PER_INTERVAL);
    let dt = dt_out / m as f64;
    let beta = nu * dt / (4.0 * dx * dx);

    let mut field = SolutionField::zeros(*grid);
    for i in 0..nx {
        field.set(i, 0, u[i]);
    }
    let mut rhs = vec![0.0; nx];
    let mut cp = vec![0.0; nx];
    let mut flux = vec![0.0; nx - 1];
    let mut tend = vec![0.0; nx];
    let mut stage = vec![0.0; nx];
    for k in 1..grid.nt() {
        for _ in 0..m {
            cn_dirichlet(&mut u, beta, spec.bc_value, &mut rhs, &mut cp);
            // SSP-RK2 advection over the full substep.
            burgers_advect_rhs(&u, dx, &mut flux, &mut tend);
            for i in 0..nx {
                stage[i] = u[i] + dt * tend[i];
            }
            stage[0] = spec.bc_value;
            stage[nx - 1] = spec.bc_value;
            burgers_advect_rhs(&stage, dx, &mut flux, &mut tend);
            for i in 0..nx {
                u[i] = 0.5 * (u[i] + stage[i] + dt * tend[i]);
            }
            u[0] = spec.bc_value;
            u[nx - 1] = spec.bc_value;
            cn_dirichlet(&mut u, beta, spec.bc_value, &mut rhs, &mut cp);
        }
        check_state(&u, "burgers", k)?;
        for i in 0..nx {
            field.set(i, k, u[i]);
        }
    }
    field.metadata = base_metadata(spec, m * (grid.nt() - 1));
    Ok(field)
}

/// Allen-Cahn with periodic wrap: Strang splitting of periodic
/// Crank-Nicolson diffusion around an explicit Heun step of the reaction
/// 5(u - u³).
pub fn solve_allen_cahn(spec: &PdeSpec, grid: &Grid) -> Result<SolutionField> {
    spec.validate()?;
    let PdeKind::AllenCahn { eps } = spec.kind else {
        return Err(Error::InvalidArgument(
            "solve_allen_cahn needs an Allen-Cahn spec".into(),
        ));
    };
    if spec.bc != BcKind::Periodic {
        return Err(Error::InvalidArgument(
            "the Allen-Cahn scheme implements periodic wrap only".into(),
        ));
    }
    let nx = grid.nx();
    let n = nx - 1; // internal periodic nodes; the right wall duplicates node 0
    if n < 3 {
        return Err(Error::InvalidArgument("periodic grid too small".into()));
    }
    let dx = grid.dx();
    let dt_out = grid.dt();
    let mut u: Vec<f64> = (0..n).map(|i| spec.ic_value(grid.x(i))).collect();

    // The reaction keeps |u| near max(1, |g|_max); headroom of 1.2 covers
    // the transient. Substeps bound dt * |f'(u)| well under 0.5.
    let umax = u.iter().fold(1.0_f64, |m, v| m.max(v.abs())) * 1.2;
    let fprime = 5.0 * (3.0 * umax * umax + 1.0);
    let m = ((dt_out * fprime / 0.5).ceil() as usize).clamp(1, MAX_SUBSTEPS_PER_INTERVAL);
    let dt = dt_out / m as f64;
    let beta = eps * dt / (4.0 * dx * dx);

    let mut field = SolutionField::zeros(*grid);
    let mut cn = CyclicCn::new(n);
    let mut k1 = vec![0.0; n];
    let write_row = |field: &mut SolutionField, u: &[f64], k: usize| {
        for (i, &v) in u.iter().enumerate() {
            field.set(i, k, v);
        }
        field.set(nx - 1, k, u[0]);
    };
    write_row(&mut field, &u, 0);
    let react = |v: f64| 5.0 * (v - v * v * v);
    for k in 1..grid.nt() {
        for _ in 0..m {
            cn.step(&mut u, beta);
            for i in 0..n {
                k1[i] = react(u[i]);
            }
            for i in 0..n {
                let u1 = u[i] + dt * k1[i];
                u[i] += 0.5 * dt * (k1[i] + react(u1));
            }
            cn.step(&mut u, beta);
        }
        check_state(&u, "allen-cahn", k)?;
        write_row(&mut field, &u, k);
    }
    field.metadata = base_metadata(spec, m * (grid.nt() - 1));
    Ok(field)
}

/// Largest magnitudes of the discrete first/third-derivative symbols,
/// computed once by scanning wavenumbers: the dispersive stability bound
/// needs max_theta |s(theta)|.
fn stencil_maxima() -> (f64, f64) {
    let mut s1max: f64 = 0.0;
    let mut s3max: f64 = 0.0;
    let samples = 4096;
    for j in 0..=samples {
        let th = std::f64::consts::PI * j as f64 / samples as f64;
        let s1 = (16.0 * th.sin() - 2.0 * (2.0 * th).sin()) / 12.0;
        let s3 = (-13.0 * th.sin() + 8.0 * (2.0 * th).sin() - (3.0 * th).sin()) / 4.0;
        s1max = s1max.max(s1.abs());
        s3max = s3max.max(s3.abs());
    }
    (s1max, s3max)
}

/// du/dt for KdV: -(u²/2)_x - mu u_xxx with fourth-order central
/// differences on a periodic ring. Inputs are copied into padded buffers
/// so the stencil loop has no wraparound branches.
struct KdvRhs {
    up: Vec<f64>,
    wp: Vec<f64>,
}

impl KdvRhs {
    fn new(n: usize) -> Self {
        Self {
            up: vec![0.0; n + 6],
            wp: vec![0.0; n + 6],
        }
    }

    fn eval(&mut self, u: &[f64], dx: f64, mu: f64, out: &mut [f64]) {
        let n = u.len();
        self.up[3..3 + n].copy_from_slice(u);
        for j in 0..3 {
            self.up[j] = u[n - 3 + j];
            self.up[3 + n + j] = u[j];
        }
        for i in 0..n + 6 {
            self.wp[i] = 0.5 * self.up[i] * self.up[i];
        }
        let c1 = 1.0 / (12.0 * dx);
        let c3 = mu / (8.0 * dx * dx * dx);
        let up = &self.up;
        let wp = &self.wp;
        for i in 0..n {
            let adv = c1 * (8.0 * (wp[i + 4] - wp[i + 2]) - (wp[i + 5] - wp[i + 1]));
            let disp = c3
                * (-13.0 * (up[i + 4] - up[i + 2]) + 8.0 * (up[i + 5] - up[i + 1])
                    - (up[i + 6] - up[i]));
            out[i] = -adv - disp;
        }
    }
}

/// KdV with periodic wrap: classic RK4 over fourth-order central stencils,
/// substepped to satisfy the dispersive stability bound (RK4's imaginary
/// stability interval is 2*sqrt(2); we run at 2.5 with the advective
/// speed folded in with headroom).
pub fn solve_kdv(spec: &PdeSpec, grid: &Grid) -> Result<SolutionField> {
    spec.validate()?;
    let PdeKind::Kdv { mu } = spec.kind else {
        return Err(Error::InvalidArgument("solve_kdv needs a KdV spec".into()));
    };
    if spec.bc != BcKind::Periodic {
        return Err(Error::InvalidArgument(
            "the KdV scheme implements periodic wrap only".into(),
        ));
    }
    let nx = grid.nx();
    let n = nx - 1;
    if n < 7 {
        return Err(Error::InvalidArgument(
            "KdV stencils need at least 7 periodic nodes".into(),
        ));
    }
    let dx = grid.dx();
    let dt_out = grid.dt();
    let (s1max, s3max) = stencil_maxima();
    let mut u: Vec<f64> = (0..n).map(|i| spec.ic_value(grid.x(i))).collect();

    let mut field = SolutionField::zeros(*grid);
    let write_row = |field: &mut SolutionField, u: &[f64], k: usize| {
        for (i, &v) in u.iter().enumerate() {
            field.set(i, k, v);
        }
        field.set(nx - 1, k, u[0]);
    };
    write_row(&mut field, &u, 0);

    let mut rhs = KdvRhs::new(n);
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut substeps_total = 0usize;
    for k in 1..grid.nt() {
        // Refresh the advective speed bound each output interval; solitons
        // steepen the profile, so allow half again the current amplitude.
        let umax = u.iter().fold(1e-12_f64, |m, v| m.max(v.abs()));
        let lambda = mu * s3max / (dx * dx * dx) + 1.5 * umax * s1max / dx;
        let m = ((dt_out * lambda / 2.5).ceil() as usize).max(1);
        if m > MAX_SUBSTEPS_PER_INTERVAL {
            return Err(Error::Instability(format!(
                "KdV stability bound demands {m} substeps per output interval at dx = {dx}"
            )));
        }
        let dt = dt_out / m as f64;
        for _ in 0..m {
            rhs.eval(&u, dx, mu, &mut k1);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k1[i];
            }
            rhs.eval(&tmp, dx, mu, &mut k2);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k2[i];
            }
            rhs.eval(&tmp, dx, mu, &mut k3);
            for i in 0..n {
                tmp[i] = u[i] + dt * k3[i];
            }
            rhs.eval(&tmp, dx, mu, &mut k4);
            for i in 0..n {
                u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        substeps_total += m;
        check_state(&u, "kdv", k)?;
        write_row(&mut field, &u, k);
    }
    field.metadata = base_metadata(spec, substeps_total);
    Ok(field)
}

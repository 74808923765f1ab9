//! Finite-difference ground truth.
//!
//! Each benchmark gets a classical scheme solved on a fine uniform grid;
//! validity rests on self-convergence under refinement plus analytic
//! oracles (the KdV soliton), not on matching any particular published
//! solver. Solvers march internally with whatever substep count their
//! stability bounds demand and emit samples on the requested output grid.

mod solvers;

pub use solvers::{solve_allen_cahn, solve_burgers, solve_kdv};

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ParameterVector;
use crate::pde::{Domain, PdeKind, PdeSpec};

const FIELD_MAGIC: &str = "PINNFIELD v1";

/// Uniform space-time grid: `nx` nodes across x including both walls,
/// `nt` nodes across t including 0 and t_max.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    nt: usize,
    domain: Domain,
}

impl Grid {
    pub fn new(nx: usize, nt: usize, domain: Domain) -> Result<Self> {
        if nx < 2 || nt < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 nodes per axis, got {nx}x{nt}"
            )));
        }
        Ok(Self { nx, nt, domain })
    }

    /// Square grid with `cells` intervals per axis (`cells`+1 nodes).
    pub fn square(cells: usize, domain: Domain) -> Result<Self> {
        Self::new(cells + 1, cells + 1, domain)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dx(&self) -> f64 {
        self.domain.x_extent() / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.domain.t_max / (self.nt - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.domain.x_min + i as f64 * self.dx()
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

/// u sampled on a grid; `values[i * nt + k]` is u(x_i, t_k). Metadata is
/// ordered key=value pairs echoed into the on-disk format.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionField {
    grid: Grid,
    values: Vec<f64>,
    pub metadata: Vec<(String, String)>,
}

impl SolutionField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.nx * grid.nt],
            metadata: Vec::new(),
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut field = Self::zeros(grid);
        for i in 0..grid.nx {
            for k in 0..grid.nt {
                field.values[i * grid.nt + k] = f(grid.x(i), grid.t(k));
            }
        }
        field
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.grid.nt + k]
    }

    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.values[i * self.grid.nt + k] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Time slice at index k, over all x nodes.
    pub fn time_slice(&self, k: usize) -> Vec<f64> {
        (0..self.grid.nx).map(|i| self.get(i, k)).collect()
    }

    /// Discrete mass dx * sum(u) at time index k over one period (the
    /// duplicate right-wall node is excluded).
    pub fn periodic_mass(&self, k: usize) -> f64 {
        let slice: Vec<f64> = (0..self.grid.nx - 1).map(|i| self.get(i, k)).collect();
        crate::reduce::pairwise_sum(&slice) * self.grid.dx()
    }

    fn encode_values(&self) -> String {
        let mut body = String::with_capacity(self.values.len() * 25);
        for i in 0..self.grid.nx {
            for k in 0..self.grid.nt {
                if k > 0 {
                    body.push(',');
                }
                body.push_str(&format!("{:.16e}", self.get(i, k)));
            }
            body.push('\n');
        }
        body
    }

    /// Write the field: magic, metadata (grid keys first, then caller
    /// metadata, then a content hash of the value block), then nx rows of
    /// nt comma-separated values. Byte-stable round trip.
    pub fn write(&self, path: &Path) -> Result<()> {
        let body = self.encode_values();
        let mut hasher = Sha256::new();
        hasher.update(body.as_bytes());
        let digest = hasher.finalize();
        let values_sha: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();

        let mut out = String::new();
        out.push_str(FIELD_MAGIC);
        out.push('\n');
        let d = self.grid.domain;
        out.push_str(&format!("nx={}\n", self.grid.nx));
        out.push_str(&format!("nt={}\n", self.grid.nt));
        out.push_str(&format!("x_min={:.16e}\n", d.x_min));
        out.push_str(&format!("x_max={:.16e}\n", d.x_max));
        out.push_str(&format!("t_max={:.16e}\n", d.t_max));
        for (k, v) in &self.metadata {
            out.push_str(&format!("{k}={v}\n"));
        }
        out.push_str(&format!("values_sha={values_sha}\n"));
        out.push_str("values\n");
        out.push_str(&body);
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Read a field back, verifying dimensions and the stored value hash.
    pub fn read(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: path.display().to_string(),
            reason,
        };
        let f = std::fs::File::open(path)?;
        let mut lines = BufReader::new(f).lines();
        let magic = lines.next().ok_or_else(|| bad("empty file".into()))??;
        if magic != FIELD_MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let mut meta: Vec<(String, String)> = Vec::new();
        let mut values_sha = None;
        for line in lines.by_ref() {
            let line = line?;
            if line == "values" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
            if k == "values_sha" {
                values_sha = Some(v.to_string());
            } else {
                meta.push((k.to_string(), v.to_string()));
            }
        }
        let take = |key: &str| -> Result<String> {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| bad(format!("missing {key}")))
        };
        let nx: usize = take("nx")?.parse().map_err(|e| bad(format!("nx: {e}")))?;
        let nt: usize = take("nt")?.parse().map_err(|e| bad(format!("nt: {e}")))?;
        let domain = Domain {
            x_min: take("x_min")?.parse().map_err(|e| bad(format!("x_min: {e}")))?,
            x_max: take("x_max")?.parse().map_err(|e| bad(format!("x_max: {e}")))?,
            t_max: take("t_max")?.parse().map_err(|e| bad(format!("t_max: {e}")))?,
        };
        let grid = Grid::new(nx, nt, domain)?;
        let mut body = String::new();
        let mut values = Vec::with_capacity(nx * nt);
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            body.push_str(&line);
            body.push('\n');
            for tok in line.split(',') {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|e| bad(format!("bad value {tok:?}: {e}")))?,
                );
            }
        }
        if values.len() != nx * nt {
            return Err(bad(format!(
                "expected {} values, found {}",
                nx * nt,
                values.len()
            )));
        }
        if let Some(stored) = values_sha {
            let mut hasher = Sha256::new();
            hasher.update(body.as_bytes());
            let digest = hasher.finalize();
            let actual: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
            if actual != stored {
                return Err(Error::Verification(format!(
                    "field {} content hash mismatch: stored {stored}, recomputed {actual}",
                    path.display()
                )));
            }
        }
        // Strip the grid keys we consumed; keep caller metadata.
        meta.retain(|(k, _)| !matches!(k.as_str(), "nx" | "nt" | "x_min" | "x_max" | "t_max"));
        Ok(Self {
            grid,
            values,
            metadata: meta,
        })
    }
}

/// Restrict a fine field onto a coarser grid by nodal injection. Requires
/// identical domain bounds and interval counts that divide evenly, so
/// coarse nodes coincide exactly with fine nodes.
pub fn restrict(field: &SolutionField, coarse: &Grid) -> Result<SolutionField> {
    let fine = field.grid;
    if fine.domain != coarse.domain {
        return Err(Error::GridMismatch(format!(
            "domains differ: {:?} vs {:?}",
            fine.domain, coarse.domain
        )));
    }
    let (fi, ci) = (fine.nx - 1, coarse.nx - 1);
    let (fk, ck) = (fine.nt - 1, coarse.nt - 1);
    if fi % ci != 0 || fk % ck != 0 {
        return Err(Error::GridMismatch(format!(
            "grids do not nest: {}x{} onto {}x{}",
            fine.nx, fine.nt, coarse.nx, coarse.nt
        )));
    }
    let (si, sk) = (fi / ci, fk / ck);
    let mut out = SolutionField::zeros(*coarse);
    for i in 0..coarse.nx {
        for k in 0..coarse.nt {
            out.set(i, k, field.get(i * si, k * sk));
        }
    }
    out.metadata = field.metadata.clone();
    out.metadata
        .push(("restricted_from".into(), format!("{}x{}", fine.nx, fine.nt)));
    Ok(out)
}

/// Sample the network on a grid.
pub fn evaluate_on_grid(params: &ParameterVector, grid: &Grid) -> SolutionField {
    let nt = grid.nt;
    let rows: Vec<Vec<f64>> = (0..grid.nx)
        .into_par_iter()
        .map(|i| {
            let x = grid.x(i);
            (0..nt)
                .map(|k| crate::model::forward(params, x, grid.t(k)))
                .collect()
        })
        .collect();
    let mut field = SolutionField::zeros(*grid);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            field.set(i, k, v);
        }
    }
    field
}

/// Analytic single-soliton solution of u_t + u u_x + mu u_xxx = 0:
/// u = 3c sech²(sqrt(c/(4 mu)) (x - c t - x0)). Verified against the
/// equation by the closed-form jet test below before any use as an oracle.
pub fn kdv_soliton(x: f64, t: f64, c: f64, mu: f64, x0: f64) -> f64 {
    assert!(c > 0.0 && mu > 0.0, "soliton needs c > 0 and mu > 0");
    let kappa = (c / (4.0 * mu)).sqrt();
    let z = kappa * (x - c * t - x0);
    // cosh overflows to +inf for huge |z|; 1/inf = 0 is the right limit.
    let s = 1.0 / z.cosh();
    3.0 * c * s * s
}

/// Identifier of the scheme used per equation kind, recorded in metadata
/// and cache keys.
pub fn scheme_id(kind: &PdeKind) -> &'static str {
    match kind {
        PdeKind::Burgers { .. } => "strang-cn-upwind2",
        PdeKind::AllenCahn { .. } => "strang-cn-rk2",
        PdeKind::Kdv { .. } => "rk4-central4",
    }
}

/// Dispatch to the solver for the spec's kind.
pub fn solve(spec: &PdeSpec, grid: &Grid) -> Result<SolutionField> {
    match spec.kind {
        PdeKind::Burgers { .. } => solve_burgers(spec, grid),
        PdeKind::AllenCahn { .. } => solve_allen_cahn(spec, grid),
        PdeKind::Kdv { .. } => solve_kdv(spec, grid),
    }
}

/// Successive-refinement self-comparison: solve at each cell count, then
/// for each adjacent pair report Rel-L² between the fine solve restricted
/// onto the coarse grid and the coarse solve.
pub struct ConvergenceReport {
    /// Rel-L² between adjacent resolutions, coarsest pair first.
    pub diffs: Vec<f64>,
    /// log2(diffs[i] / diffs[i+1]), the observed order between pairs.
    pub orders: Vec<f64>,
}

pub fn self_convergence(spec: &PdeSpec, cells: &[usize]) -> Result<ConvergenceReport> {
    if cells.len() < 2 {
        return Err(Error::InvalidArgument(
            "self-convergence needs at least two resolutions".into(),
        ));
    }
    let mut fields = Vec::with_capacity(cells.len());
    for &c in cells {
        fields.push(solve(spec, &Grid::square(c, spec.domain)?)?);
    }
    let mut diffs = Vec::new();
    for pair in fields.windows(2) {
        let coarse = &pair[0];
        let fine_on_coarse = restrict(&pair[1], coarse.grid())?;
        diffs.push(crate::metrics::rel_l2(&fine_on_coarse, coarse)?);
    }
    let orders = diffs
        .windows(2)
        .map(|d| (d[0] / d[1]).log2())
        .collect();
    Ok(ConvergenceReport { diffs, orders })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::taylor::{Scalar, Tay};
    use approx::assert_relative_eq;

    #[test]
    fn soliton_satisfies_kdv_through_closed_form_jets() {
        // Push the closed-form expression through Taylor arithmetic and
        // substitute the derivatives into the residual directly; this
        // verifies the soliton formula independently of any solver.
        let (c, mu, x0) = (0.8_f64, 0.0022, -0.3);
        let kappa = (c / (4.0 * mu)).sqrt();
        let spec = PdeSpec::kdv_default();
        let spec = PdeSpec {
            kind: PdeKind::Kdv { mu },
            ..spec
        };
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = 2.0 * crate::model::unit_open(&mut rng) - 1.0;
            let t = crate::model::unit_open(&mut rng);
            let xj = Tay::<4, 2>::var_x(x);
            let tj = Tay::<4, 2>::var_t(t);
            let z = xj
                .sub(tj.scale(c))
                .add(Tay::from_const(-x0))
                .scale(kappa);
            let u = z.cosh().powi(2).recip().unwrap().scale(3.0 * c);
            let d = crate::pde::DerivBundle {
                u: u.deriv(0, 0),
                u_x: u.deriv(1, 0),
                u_xx: 0.0,
                u_xxx: u.deriv(3, 0),
                u_t: u.deriv(0, 1),
            };
            worst = worst.max(spec.residual_from_derivs(&d, x).abs());
        }
        assert!(worst < 1e-10, "soliton residual {worst}");
    }

    #[test]
    fn soliton_peak_and_symmetry() {
        let (c, mu, x0) = (0.5, 0.0022, 0.1);
        let peak = kdv_soliton(x0 + c * 0.3, 0.3, c, mu, x0);
        assert_relative_eq!(peak, 3.0 * c, max_relative = 1e-14);
        for dx in [0.05, 0.2, 0.4] {
            let center = x0 + c * 0.3;
            assert_relative_eq!(
                kdv_soliton(center + dx, 0.3, c, mu, x0),
                kdv_soliton(center - dx, 0.3, c, mu, x0),
                max_relative = 1e-12
            );
        }
        // Far tails underflow cleanly instead of producing NaN.
        assert_eq!(kdv_soliton(1e6, 0.0, c, mu, x0), 0.0);
    }

    #[test]
    fn field_io_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::square(8, Domain::UNIT).unwrap();
        let mut field = SolutionField::from_fn(grid, |x, t| (x * 2.1 + t).sin());
        field.metadata.push(("pde".into(), "burgers".into()));
        let p1 = dir.path().join("a.field");
        let p2 = dir.path().join("b.field");
        field.write(&p1).unwrap();
        let loaded = SolutionField::read(&p1).unwrap();
        assert_eq!(loaded.values(), field.values());
        assert_eq!(loaded.grid(), field.grid());
        loaded.write(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn field_read_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::square(4, Domain::UNIT).unwrap();
        let field = SolutionField::from_fn(grid, |x, t| x + t);
        let p = dir.path().join("f.field");
        field.write(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let tampered = text.replace("values\n", "values\n9.9e0,");
        // Corrupting the body breaks either the shape or the hash.
        std::fs::write(&p, tampered).unwrap();
        assert!(SolutionField::read(&p).is_err());
    }

    #[test]
    fn restriction_injects_nested_nodes() {
        let fine = Grid::square(16, Domain::UNIT).unwrap();
        let coarse = Grid::square(4, Domain::UNIT).unwrap();
        let field = SolutionField::from_fn(fine, |x, t| x * x + 3.0 * t);
        let r = restrict(&field, &coarse).unwrap();
        for i in 0..coarse.nx() {
            for k in 0..coarse.nt() {
                assert_eq!(r.get(i, k), field.get(i * 4, k * 4));
            }
        }
        let incompatible = Grid::square(7, Domain::UNIT).unwrap();
        assert!(restrict(&field, &incompatible).is_err());
    }

    #[test]
    fn evaluate_on_grid_matches_forward_pointwise() {
        let spec = crate::model::ModelSpec::new(vec![2, 6, 1]).unwrap();
        let params = crate::model::init_params(&spec, 42);
        let grid = Grid::square(5, Domain::UNIT).unwrap();
        let field = evaluate_on_grid(&params, &grid);
        for i in 0..grid.nx() {
            for k in 0..grid.nt() {
                assert_eq!(
                    field.get(i, k),
                    crate::model::forward(&params, grid.x(i), grid.t(k))
                );
            }
        }
    }
}

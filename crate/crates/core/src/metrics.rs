//! Quantitative evaluation: error norms against reference fields,
//! loss-curve bookkeeping and smoothness, and gradient-alignment
//! diagnostics for the two conflict regimes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::GradientVector;
use crate::error::{Error, Result};
use crate::reduce;
use crate::refsolve::SolutionField;

/// Relative L² error: sqrt(Σ(pred − exact)² / Σ exact²) over every node
/// of the shared grid.
pub fn rel_l2(pred: &SolutionField, exact: &SolutionField) -> Result<f64> {
    if pred.grid() != exact.grid() {
        return Err(Error::GridMismatch(format!(
            "rel_l2 needs matching grids, got {}x{} vs {}x{}",
            pred.grid().nx(),
            pred.grid().nt(),
            exact.grid().nx(),
            exact.grid().nt()
        )));
    }
    let diffs: Vec<f64> = pred
        .values()
        .iter()
        .zip(exact.values())
        .map(|(p, e)| p - e)
        .collect();
    let num = reduce::pairwise_dot(&diffs, &diffs);
    let den = reduce::pairwise_dot(exact.values(), exact.values());
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((num / den).sqrt())
}

/// Element-wise |pred − exact| on the shared grid.
pub fn abs_error_field(pred: &SolutionField, exact: &SolutionField) -> Result<SolutionField> {
    if pred.grid() != exact.grid() {
        return Err(Error::GridMismatch(
            "abs_error_field needs matching grids".into(),
        ));
    }
    let grid = *pred.grid();
    let mut out = SolutionField::zeros(grid);
    for i in 0..grid.nx() {
        for k in 0..grid.nt() {
            out.set(i, k, (pred.get(i, k) - exact.get(i, k)).abs());
        }
    }
    Ok(out)
}

/// One training epoch's loss components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub total: f64,
    pub ic: f64,
    pub bc: f64,
    pub pde: f64,
}

/// Per-epoch loss curve for one run, tagged with the optimizer and seed
/// that produced it. The CSV interchange format carries only the curve;
/// identity lives in the run record.
#[derive(Clone, Debug, PartialEq)]
pub struct LossHistory {
    pub optimizer_id: String,
    pub seed: u64,
    records: Vec<LossRecord>,
}

impl LossHistory {
    pub fn new(optimizer_id: impl Into<String>, seed: u64) -> Self {
        Self {
            optimizer_id: optimizer_id.into(),
            seed,
            records: Vec::new(),
        }
    }

    /// Append a record, enforcing strictly increasing epochs and
    /// non-negative finite components.
    pub fn push(&mut self, rec: LossRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.epoch <= last.epoch {
                return Err(Error::History(format!(
                    "epochs must increase strictly: {} after {}",
                    rec.epoch, last.epoch
                )));
            }
        }
        for (name, v) in [
            ("total", rec.total),
            ("ic", rec.ic),
            ("bc", rec.bc),
            ("pde", rec.pde),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::History(format!(
                    "loss component {name} = {v} at epoch {} is not a finite non-negative value",
                    rec.epoch
                )));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[LossRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&LossRecord> {
        self.records.last()
    }

    /// Write `epoch,total,ic,bc,pde` rows. The header is written even
    /// when the curve is empty (an aborted or zero-epoch run).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.records.is_empty() {
            w.write_record(["epoch", "total", "ic", "bc", "pde"])?;
        }
        for rec in &self.records {
            w.serialize(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a curve written by `write_csv`. Identity fields are left
    /// blank; the caller restores them from the run record if needed.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut hist = Self::new("", 0);
        for rec in r.deserialize() {
            let rec: LossRecord = rec.map_err(|e| Error::Format {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            hist.push(rec)?;
        }
        Ok(hist)
    }
}

/// Mean |log L(e+1) − log L(e)| of the total loss over the trailing
/// `window` fraction of the curve (0 < window ≤ 1; 0.5 looks at the last
/// half, where converged behavior is what matters). Lower is smoother.
/// The window must hold at least 10 records and every loss in it must be
/// strictly positive for the log to exist.
pub fn loss_smoothness(history: &LossHistory, window: f64) -> Result<f64> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothness window must lie in (0, 1], got {window}"
        )));
    }
    let n = history.len();
    let count = ((n as f64) * window).ceil() as usize;
    if count < 10 {
        return Err(Error::History(format!(
            "smoothness window holds {count} of {n} records; need at least 10"
        )));
    }
    let tail = &history.records()[n - count..];
    for rec in tail {
        if rec.total <= 0.0 {
            return Err(Error::History(format!(
                "loss {} at epoch {} is not positive; log-smoothness undefined",
                rec.total, rec.epoch
            )));
        }
    }
    let steps: Vec<f64> = tail
        .windows(2)
        .map(|w| (w[1].total.ln() - w[0].total.ln()).abs())
        .collect();
    Ok(reduce::pairwise_mean(&steps))
}

/// Cosine similarity and magnitude ratio ‖gA‖ / ‖gB‖ between two
/// gradients of equal dimension.
pub fn gradient_alignment(ga: &GradientVector, gb: &GradientVector) -> Result<(f64, f64)> {
    if ga.entries().len() != gb.entries().len() {
        return Err(Error::InvalidArgument(format!(
            "gradient dimensions differ: {} vs {}",
            ga.entries().len(),
            gb.entries().len()
        )));
    }
    let na = ga.norm();
    let nb = gb.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((ga.dot(gb) / (na * nb), na / nb))
}

/// Diagnostic thresholds for the two conflict regimes. These are
/// conventions of this tool, not measured constants: regime I is
/// near-parallel with badly mismatched scales, regime II is opposed with
/// comparable scales.
#[derive(Clone, Copy, Debug)]
pub struct ConflictThresholds {
    /// Minimum cosine for type I (default 0.9).
    pub type1_cos: f64,
    /// Ratio beyond which (or beneath whose reciprocal) type I fires
    /// (default 10).
    pub type1_ratio: f64,
    /// Maximum cosine for type II (default −0.5).
    pub type2_cos: f64,
    /// Ratio band [1/r, r] within which type II fires (default 3).
    pub type2_ratio: f64,
}

impl Default for ConflictThresholds {
    fn default() -> Self {
        Self {
            type1_cos: 0.9,
            type1_ratio: 10.0,
            type2_cos: -0.5,
            type2_ratio: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConflictClass {
    /// Aligned directions, magnitudes an order apart.
    TypeI,
    /// Opposing directions, comparable magnitudes.
    TypeII,
    /// Neither regime.
    None,
}

impl ConflictThresholds {
    pub fn classify(&self, cosine: f64, ratio: f64) -> ConflictClass {
        if cosine > self.type1_cos
            && (ratio > self.type1_ratio || ratio < 1.0 / self.type1_ratio)
        {
            ConflictClass::TypeI
        } else if cosine < self.type2_cos
            && ratio <= self.type2_ratio
            && ratio >= 1.0 / self.type2_ratio
        {
            ConflictClass::TypeII
        } else {
            ConflictClass::None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::Domain;
    use crate::refsolve::Grid;
    use approx::assert_relative_eq;

    fn sample_field(f: impl FnMut(f64, f64) -> f64) -> SolutionField {
        let grid = Grid::square(8, Domain::UNIT).unwrap();
        SolutionField::from_fn(grid, f)
    }

    #[test]
    fn rel_l2_hand_cases() {
        let exact = sample_field(|x, t| x + t + 0.5);
        assert_eq!(rel_l2(&exact, &exact).unwrap(), 0.0);
        let double = sample_field(|x, t| 2.0 * (x + t + 0.5));
        assert_relative_eq!(rel_l2(&double, &exact).unwrap(), 1.0, max_relative = 1e-15);
        let zero = sample_field(|_, _| 0.0);
        assert_relative_eq!(rel_l2(&zero, &exact).unwrap(), 1.0, max_relative = 1e-15);
        assert!(matches!(
            rel_l2(&exact, &zero),
            Err(Error::ZeroDenominator)
        ));
        let other = SolutionField::zeros(Grid::square(4, Domain::UNIT).unwrap());
        assert!(matches!(
            rel_l2(&exact, &other),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn rel_l2_error_scales_linearly() {
        let exact = sample_field(|x, t| (x * 3.0 + t).cos() + 2.0);
        let perturbed = |k: f64| sample_field(|x, t| (x * 3.0 + t).cos() + 2.0 + k * (x - t));
        let e1 = rel_l2(&perturbed(1.0), &exact).unwrap();
        let e3 = rel_l2(&perturbed(3.0), &exact).unwrap();
        assert_relative_eq!(e3 / e1, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn abs_error_field_is_symmetric_and_zero_on_match() {
        let a = sample_field(|x, t| x * t);
        let b = sample_field(|x, t| x * t + (x - 0.3) * 0.2);
        let ab = abs_error_field(&a, &b).unwrap();
        let ba = abs_error_field(&b, &a).unwrap();
        assert_eq!(ab.values(), ba.values());
        assert!(ab.values().iter().all(|&v| v >= 0.0));
        let same = abs_error_field(&a, &a).unwrap();
        assert!(same.values().iter().all(|&v| v == 0.0));
        let max_norm = a
            .values()
            .iter()
            .zip(b.values())
            .fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
        assert_eq!(ab.max_abs(), max_norm);
    }

    fn history_from(losses: &[f64]) -> LossHistory {
        let mut h = LossHistory::new("adam", 0);
        for (e, &l) in losses.iter().enumerate() {
            h.push(LossRecord {
                epoch: e,
                total: l,
                ic: l / 3.0,
                bc: l / 3.0,
                pde: l / 3.0,
            })
            .unwrap();
        }
        h
    }

    #[test]
    fn history_rejects_bad_records() {
        let mut h = history_from(&[1.0, 0.5]);
        assert!(h
            .push(LossRecord {
                epoch: 1,
                total: 0.2,
                ic: 0.1,
                bc: 0.05,
                pde: 0.05
            })
            .is_err());
        assert!(h
            .push(LossRecord {
                epoch: 5,
                total: -0.2,
                ic: 0.1,
                bc: 0.05,
                pde: 0.05
            })
            .is_err());
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn history_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let h = history_from(&[1.0, 0.5, 0.25, 0.125]);
        h.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,total,ic,bc,pde\n"));
        let back = LossHistory::read_csv(&path).unwrap();
        assert_eq!(back.records(), h.records());
    }

    #[test]
    fn smoothness_of_constant_curve_is_zero() {
        let h = history_from(&[0.7; 40]);
        assert_eq!(loss_smoothness(&h, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn smoothness_of_geometric_decay_is_log_ratio() {
        let r: f64 = 0.93;
        let losses: Vec<f64> = (0..60).map(|e| 5.0 * r.powi(e)).collect();
        let h = history_from(&losses);
        assert_relative_eq!(
            loss_smoothness(&h, 0.5).unwrap(),
            r.ln().abs(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn noise_strictly_increases_smoothness_metric() {
        let r: f64 = 0.97;
        let smooth: Vec<f64> = (0..80).map(|e| 2.0 * r.powi(e)).collect();
        let noisy: Vec<f64> = smooth
            .iter()
            .enumerate()
            .map(|(e, &l)| if e % 2 == 0 { l * 1.5 } else { l * 0.5 })
            .collect();
        let ms = loss_smoothness(&history_from(&smooth), 0.5).unwrap();
        let mn = loss_smoothness(&history_from(&noisy), 0.5).unwrap();
        assert!(
            mn > ms,
            "noisy curve scored {mn}, smooth curve scored {ms}"
        );
    }

    #[test]
    fn smoothness_is_scale_invariant() {
        let losses: Vec<f64> = (0..40).map(|e| 1.0 / (1.0 + e as f64)).collect();
        let scaled: Vec<f64> = losses.iter().map(|l| l * 731.0).collect();
        let a = loss_smoothness(&history_from(&losses), 0.5).unwrap();
        let b = loss_smoothness(&history_from(&scaled), 0.5).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn smoothness_preconditions() {
        let h = history_from(&[1.0; 12]);
        // 0.5 of 12 records is 6, too few.
        assert!(matches!(
            loss_smoothness(&h, 0.5),
            Err(Error::History(_))
        ));
        assert!(loss_smoothness(&h, 1.0).is_ok());
        let mut z = LossHistory::new("adam", 0);
        for e in 0..12 {
            z.push(LossRecord {
                epoch: e,
                total: 0.0,
                ic: 0.0,
                bc: 0.0,
                pde: 0.0,
            })
            .unwrap();
        }
        assert!(matches!(
            loss_smoothness(&z, 1.0),
            Err(Error::History(_))
        ));
    }

    #[test]
    fn alignment_hand_cases() {
        let g = GradientVector::new(vec![3.0, -4.0]).unwrap();
        let (cos, ratio) = gradient_alignment(&g, &g).unwrap();
        assert_relative_eq!(cos, 1.0, max_relative = 1e-15);
        assert_relative_eq!(ratio, 1.0, max_relative = 1e-15);

        let neg = GradientVector::new(vec![-3.0, 4.0]).unwrap();
        let (cos, ratio) = gradient_alignment(&g, &neg).unwrap();
        assert_relative_eq!(cos, -1.0, max_relative = 1e-15);
        assert_relative_eq!(ratio, 1.0, max_relative = 1e-15);

        let ten = GradientVector::new(vec![30.0, -40.0]).unwrap();
        let (cos, ratio) = gradient_alignment(&ten, &g).unwrap();
        assert_relative_eq!(cos, 1.0, max_relative = 1e-15);
        assert_relative_eq!(ratio, 10.0, max_relative = 1e-15);
    }

    #[test]
    fn alignment_cosine_ignores_positive_scaling() {
        let a = GradientVector::new(vec![1.0, 2.0, -0.5]).unwrap();
        let b = GradientVector::new(vec![-0.3, 1.1, 0.9]).unwrap();
        let scaled = GradientVector::new(vec![-0.3 * 7.0, 1.1 * 7.0, 0.9 * 7.0]).unwrap();
        let (c1, r1) = gradient_alignment(&a, &b).unwrap();
        let (c2, r2) = gradient_alignment(&a, &scaled).unwrap();
        assert_relative_eq!(c1, c2, max_relative = 1e-12);
        assert_relative_eq!(r1 / r2, 7.0, max_relative = 1e-12);
    }

    #[test]
    fn alignment_rejects_zero_vectors() {
        let g = GradientVector::new(vec![1.0, 0.0]).unwrap();
        let z = GradientVector::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            gradient_alignment(&g, &z),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn conflict_classification_follows_thresholds() {
        let th = ConflictThresholds::default();
        assert_eq!(th.classify(0.95, 20.0), ConflictClass::TypeI);
        assert_eq!(th.classify(0.95, 0.02), ConflictClass::TypeI);
        assert_eq!(th.classify(0.95, 2.0), ConflictClass::None);
        assert_eq!(th.classify(-0.8, 1.5), ConflictClass::TypeII);
        assert_eq!(th.classify(-0.8, 0.5), ConflictClass::TypeII);
        assert_eq!(th.classify(-0.8, 10.0), ConflictClass::None);
        assert_eq!(th.classify(0.2, 1.0), ConflictClass::None);
    }
}

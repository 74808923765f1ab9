//! Parameter-update rules: baseline Adam and the PDE-aware optimizer.
//!
//! The PDE-aware rule maintains a first moment of the mean gradient like
//! Adam, but its second moment averages the *per-sample* element-wise
//! squared gradients over the mini-batch rather than squaring the mean:
//!
//! ```text
//! m <- b1 m + (1 - b1) gbar
//! v <- b2 v + (1 - b2) (1/B) sum_i g_i (.)^2
//! w <- w - eta * m / (sqrt(v) + eps)
//! ```
//!
//! On coordinates where samples disagree, the second moment sees the full
//! dispersion (E[g²] = ḡ² + Var[g]), so conflicted coordinates take
//! smaller steps while coherent ones keep the plain Adam magnitude. There
//! is no bias correction in this rule; the Adam baseline keeps its
//! textbook correction.

use crate::autodiff::GradientVector;
use crate::error::{Error, Result};
use crate::pde::{CollocationSet, PdeSpec};
use crate::model::ParameterVector;
use crate::reduce;

/// Learning rate and moment decay rates shared by both rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Hyper {
    /// Textbook Adam defaults.
    pub fn adam_default() -> Self {
        Self {
            eta: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// PDE-aware defaults: the grid-search winner.
    pub fn pde_aware_default() -> Self {
        Self {
            eta: 1e-3,
            beta1: 0.99,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon >= 0.0
            && [self.eta, self.beta1, self.beta2, self.epsilon]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad hyperparameters {self:?}")))
        }
    }
}

/// Which gradients feed the first moment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientSource {
    /// Literal algorithm: the mean per-sample PDE gradient only.
    PdeOnly,
    /// Default: the mean PDE gradient plus the mean IC/BC loss gradient.
    /// The second moment stays PDE-only either way.
    TotalLoss,
}

/// What the per-sample scalar is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerSampleForm {
    /// g_i = grad of R(x_i)², the per-sample loss (default).
    SquaredResidual,
    /// g_i = grad of R(x_i), the literal residual gradient.
    RawResidual,
}

/// Baseline Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step_count: u64,
    hyper: Hyper,
}

impl AdamState {
    pub fn new(dim: usize, hyper: Hyper) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step_count: 0,
            hyper,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update; returns the parameter delta to add.
    pub fn step(&mut self, grad: &GradientVector) -> Result<Vec<f64>> {
        if grad.len() != self.m.len() {
            return Err(Error::ParamCountMismatch {
                expected: self.m.len(),
                got: grad.len(),
            });
        }
        let Hyper {
            eta,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        self.step_count += 1;
        let c1 = 1.0 - beta1.powi(self.step_count as i32);
        let c2 = 1.0 - beta2.powi(self.step_count as i32);
        let g = grad.entries();
        let mut delta = vec![0.0; g.len()];
        for j in 0..g.len() {
            self.m[j] = beta1 * self.m[j] + (1.0 - beta1) * g[j];
            self.v[j] = beta2 * self.v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = self.m[j] / c1;
            let v_hat = self.v[j] / c2;
            delta[j] = -eta * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(delta)
    }
}

/// Per-sample gradients of one mini-batch, reduced once at construction.
#[derive(Clone, Debug)]
pub struct PerSampleGradients {
    grads: Vec<Vec<f64>>,
    mean: Vec<f64>,
    mean_square: Vec<f64>,
    aux_mean: Option<Vec<f64>>,
}

impl PerSampleGradients {
    pub fn new(grads: Vec<Vec<f64>>, aux_mean: Option<Vec<f64>>) -> Result<Self> {
        let b = grads.len();
        if b == 0 {
            return Err(Error::InvalidArgument("empty mini-batch".into()));
        }
        let dim = grads[0].len();
        if grads.iter().any(|g| g.len() != dim)
            || aux_mean.as_ref().is_some_and(|a| a.len() != dim)
        {
            return Err(Error::ParamCountMismatch {
                expected: dim,
                got: grads
                    .iter()
                    .map(Vec::len)
                    .find(|&l| l != dim)
                    .unwrap_or_else(|| aux_mean.as_ref().unwrap().len()),
            });
        }
        let mean = reduce::rows_mean(&grads, dim);
        let mean_square = reduce::rows_mean_map(&grads, dim, |x| x * x);
        let finite = mean.iter().all(|v| v.is_finite())
            && mean_square.iter().all(|v| v.is_finite())
            && aux_mean
                .as_ref()
                .map_or(true, |a| a.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite {
                context: "per-sample gradient batch".into(),
            });
        }
        Ok(Self {
            grads,
            mean,
            mean_square,
            aux_mean,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.grads.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn grads(&self) -> &[Vec<f64>] {
        &self.grads
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_square(&self) -> &[f64] {
        &self.mean_square
    }

    pub fn aux_mean(&self) -> Option<&[f64]> {
        self.aux_mean.as_deref()
    }
}

/// The PDE-aware optimizer state.
#[derive(Clone, Debug)]
pub struct PdeAwareState {
    m: Vec<f64>,
    v: Vec<f64>,
    hyper: Hyper,
    gradient_source: GradientSource,
    per_sample_form: PerSampleForm,
}

impl PdeAwareState {
    pub fn new(
        dim: usize,
        hyper: Hyper,
        gradient_source: GradientSource,
        per_sample_form: PerSampleForm,
    ) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            hyper,
            gradient_source,
            per_sample_form,
        })
    }

    pub fn gradient_source(&self) -> GradientSource {
        self.gradient_source
    }

    pub fn per_sample_form(&self) -> PerSampleForm {
        self.per_sample_form
    }

    /// One update from a mini-batch of per-sample gradients; returns the
    /// parameter delta. No bias correction.
    pub fn step(&mut self, psg: &PerSampleGradients) -> Result<Vec<f64>> {
        if psg.dim() != self.m.len() {
            return Err(Error::ParamCountMismatch {
                expected: self.m.len(),
                got: psg.dim(),
            });
        }
        if self.gradient_source == GradientSource::TotalLoss && psg.aux_mean().is_none() {
            return Err(Error::InvalidArgument(
                "gradient_source=total_loss requires aux_mean in the batch".into(),
            ));
        }
        let Hyper {
            eta,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        let mean = psg.mean();
        let ms = psg.mean_square();
        let aux = psg.aux_mean();
        let mut delta = vec![0.0; self.m.len()];
        for j in 0..self.m.len() {
            let g = match (self.gradient_source, aux) {
                (GradientSource::TotalLoss, Some(a)) => mean[j] + a[j],
                _ => mean[j],
            };
            self.m[j] = beta1 * self.m[j] + (1.0 - beta1) * g;
            self.v[j] = beta2 * self.v[j] + (1.0 - beta2) * ms[j];
            delta[j] = -eta * self.m[j] / (self.v[j].sqrt() + epsilon);
        }
        Ok(delta)
    }
}

/// Assembly configuration, normally taken from the optimizer config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssembleConfig {
    pub gradient_source: GradientSource,
    pub per_sample_form: PerSampleForm,
}

/// Compute per-sample PDE gradients for an interior mini-batch, plus the
/// IC/BC mean gradient when the configuration trains on the total loss.
/// `colloc` supplies the IC/BC point families.
pub fn assemble_per_sample_gradients(
    spec: &PdeSpec,
    params: &ParameterVector,
    batch: &[crate::pde::CollocationPoint],
    colloc: &CollocationSet,
    cfg: AssembleConfig,
) -> Result<PerSampleGradients> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty mini-batch".into()));
    }
    let squared = cfg.per_sample_form == PerSampleForm::SquaredResidual;
    let grads = crate::autodiff::interior_sample_grads(spec, params, batch, squared);
    let aux = match cfg.gradient_source {
        GradientSource::TotalLoss => Some(crate::autodiff::aux_loss_grad(
            spec,
            params,
            &colloc.initial,
            &colloc.boundary,
        )),
        GradientSource::PdeOnly => None,
    };
    PerSampleGradients::new(grads, aux)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gv(v: &[f64]) -> GradientVector {
        GradientVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn adam_first_step_hand_value() {
        // g=[1], eta=0.1, eps=0: bias correction makes m_hat = v_hat = 1,
        // so the first step is exactly -eta.
        let hyper = Hyper {
            eta: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 0.0,
        };
        let mut st = AdamState::new(1, hyper).unwrap();
        let d = st.step(&gv(&[1.0])).unwrap();
        assert!((d[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_sign_times_eta() {
        let hyper = Hyper {
            epsilon: 0.0,
            ..Hyper::adam_default()
        };
        let mut st = AdamState::new(3, hyper).unwrap();
        let d = st.step(&gv(&[0.3, -7.0, 1e-4])).unwrap();
        for (dj, g) in d.iter().zip([0.3_f64, -7.0, 1e-4]) {
            assert!((dj + hyper.eta * g.signum()).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_zero_delta() {
        let mut st = AdamState::new(2, Hyper::adam_default()).unwrap();
        let d = st.step(&gv(&[0.0, 0.0])).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn pde_aware_hand_values() {
        // B=2, g1=g2=[1], zero state, beta1=beta2=0, eta=0.1, eps=0:
        // m=[1], v=[1], delta=[-0.1].
        let hyper = Hyper {
            eta: 0.1,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
        };
        let mut st = PdeAwareState::new(
            1,
            hyper,
            GradientSource::PdeOnly,
            PerSampleForm::SquaredResidual,
        )
        .unwrap();
        let psg = PerSampleGradients::new(vec![vec![1.0], vec![1.0]], None).unwrap();
        let d = st.step(&psg).unwrap();
        assert!((d[0] + 0.1).abs() < 1e-15);

        // Perfectly conflicting samples: mean 0, variance 1: no step.
        let mut st = PdeAwareState::new(
            1,
            hyper,
            GradientSource::PdeOnly,
            PerSampleForm::SquaredResidual,
        )
        .unwrap();
        let psg = PerSampleGradients::new(vec![vec![1.0], vec![-1.0]], None).unwrap();
        let d = st.step(&psg).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((st.v[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dispersion_damps_steps_monotonically() {
        // Fixed mean, growing per-sample spread: |delta| must not grow.
        let hyper = Hyper::pde_aware_default();
        let mean = [0.5, -1.0, 2.0];
        let mut last: Option<Vec<f64>> = None;
        for spread in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let g1: Vec<f64> = mean.iter().map(|m| m + spread).collect();
            let g2: Vec<f64> = mean.iter().map(|m| m - spread).collect();
            let psg = PerSampleGradients::new(vec![g1, g2], None).unwrap();
            let mut st = PdeAwareState::new(
                3,
                hyper,
                GradientSource::PdeOnly,
                PerSampleForm::SquaredResidual,
            )
            .unwrap();
            let d = st.step(&psg).unwrap();
            if let Some(prev) = &last {
                for (now, before) in d.iter().zip(prev) {
                    assert!(
                        now.abs() <= before.abs(),
                        "spread {spread}: |{now}| > |{before}|"
                    );
                }
            }
            last = Some(d);
        }
    }

    #[test]
    fn identical_samples_match_uncorrected_adam() {
        // Coherent batch: mean_square = g (.)^2, so the rule collapses to
        // Adam without bias correction.
        let hyper = Hyper::pde_aware_default();
        let g = vec![0.4, -0.7];
        let mut st = PdeAwareState::new(
            2,
            hyper,
            GradientSource::PdeOnly,
            PerSampleForm::SquaredResidual,
        )
        .unwrap();
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        for _ in 0..20 {
            let psg =
                PerSampleGradients::new(vec![g.clone(), g.clone(), g.clone()], None).unwrap();
            let d = st.step(&psg).unwrap();
            for j in 0..2 {
                m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
                v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
                let want = -hyper.eta * m[j] / (v[j].sqrt() + hyper.epsilon);
                assert!((d[j] - want).abs() <= 1e-15 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn step_is_bounded_by_eta_m_over_eps() {
        let hyper = Hyper::pde_aware_default();
        let mut st = PdeAwareState::new(
            2,
            hyper,
            GradientSource::PdeOnly,
            PerSampleForm::SquaredResidual,
        )
        .unwrap();
        let psg = PerSampleGradients::new(vec![vec![3.0, -0.2], vec![-1.0, 0.4]], None).unwrap();
        let d = st.step(&psg).unwrap();
        for (dj, mj) in d.iter().zip(&st.m) {
            assert!(dj.abs() <= hyper.eta * mj.abs() / hyper.epsilon * (1.0 + 1e-12));
        }
    }

    #[test]
    fn total_loss_source_requires_aux() {
        let mut st = PdeAwareState::new(
            1,
            Hyper::pde_aware_default(),
            GradientSource::TotalLoss,
            PerSampleForm::SquaredResidual,
        )
        .unwrap();
        let psg = PerSampleGradients::new(vec![vec![1.0]], None).unwrap();
        assert!(st.step(&psg).is_err());
        let psg = PerSampleGradients::new(vec![vec![1.0]], Some(vec![0.5])).unwrap();
        let d = st.step(&psg).unwrap();
        // m = (1-beta1) * (1 + 0.5)
        let want_m = (1.0 - 0.99) * 1.5;
        assert!((st.m[0] - want_m).abs() < 1e-15);
        assert!(d[0] < 0.0);
    }

    #[test]
    fn psg_rejects_bad_batches() {
        assert!(PerSampleGradients::new(vec![], None).is_err());
        assert!(PerSampleGradients::new(vec![vec![1.0], vec![1.0, 2.0]], None).is_err());
        assert!(PerSampleGradients::new(vec![vec![f64::NAN]], None).is_err());
    }

    #[test]
    fn psg_mean_square_dominates_squared_mean() {
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..7)
                .map(|_| {
                    (0..5)
                        .map(|_| 4.0 * crate::model::unit_open(&mut rng) - 2.0)
                        .collect()
                })
                .collect();
            let psg = PerSampleGradients::new(rows, None).unwrap();
            for (ms, m) in psg.mean_square().iter().zip(psg.mean()) {
                assert!(*ms >= m * m - 1e-14, "Jensen violated: {ms} < {}", m * m);
            }
        }
    }
}

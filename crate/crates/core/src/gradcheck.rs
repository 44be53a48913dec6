//! Finite-difference verification of tape gradients.
//!
//! The check perturbs every parameter entry in turn and compares the
//! central difference `(f(p+h) - f(p-h)) / 2h` against the analytic
//! gradient from one backward pass. It is the independent oracle the rest
//! of the differentiation code is judged against, so it deliberately shares
//! nothing with the backward implementation. Run it in wide precision;
//! central differences are unreliable in 32-bit floats.

use alloc::string::String;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::param::ParamSet;
use crate::real::Real;
use crate::sample::Window;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Half-width of the central difference.
    pub step: f64,
    /// Maximum tolerated relative error.
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// The single worst parameter entry found by a check.
#[derive(Debug, Clone)]
pub struct GradCheckWorst {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Number of scalar entries compared.
    pub checks: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub worst: Option<GradCheckWorst>,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

/// Relative error with an absolute fallback: when both values vanish the
/// difference itself is reported, so a zero function checks out at 0.
fn rel_err(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs());
    if denom < 1e-12 {
        (a - n).abs()
    } else {
        (a - n).abs() / denom
    }
}

/// Compares the tape gradient of `f` against central finite differences for
/// every entry of every parameter in `params`. `f` must rebuild the same
/// scalar loss on each call; it is invoked `2 x entries + 1` times.
pub fn grad_check<F, Loss>(
    params: &mut ParamSet<F>,
    cfg: &GradCheckConfig,
    mut f: Loss,
) -> Result<GradCheckReport>
where
    F: Real,
    Loss: FnMut(&ParamSet<F>, &mut Tape<F>) -> Result<Var>,
{
    let eval = |params: &ParamSet<F>, f: &mut Loss| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(params, &mut tape)?;
        let v = tape.value(loss);
        if !v.is_scalar() {
            return Err(Error::Data("grad check loss must be scalar".into()));
        }
        let out = v.scalar_value().as_f64();
        if !out.is_finite() {
            return Err(Error::NonFinite("grad check loss".into()));
        }
        Ok(out)
    };

    // One analytic pass; the gradients are snapshotted before perturbation
    // because re-running f must not disturb them.
    params.zero_grads();
    let mut tape = Tape::new();
    let loss = f(params, &mut tape)?;
    if !tape.value(loss).is_scalar() {
        return Err(Error::Data("grad check loss must be scalar".into()));
    }
    if !tape.value(loss).all_finite() {
        return Err(Error::NonFinite("grad check loss".into()));
    }
    tape.backward(loss, params)?;
    let analytic: Vec<Tensor<f64>> = params.ids().map(|id| params.grad(id).to_f64()).collect();

    let h = cfg.step;
    let mut checks = 0;
    let mut max_rel_err = 0.0f64;
    let mut worst = None;

    for id in params.ids().collect::<Vec<_>>() {
        for k in 0..params.value(id).numel() {
            let original = params.value(id).data()[k];
            params.value_mut(id).data_mut()[k] = original + F::of(h);
            let plus = eval(params, &mut f)?;
            params.value_mut(id).data_mut()[k] = original - F::of(h);
            let minus = eval(params, &mut f)?;
            params.value_mut(id).data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[id.0].data()[k];
            let err = rel_err(a, numeric);
            checks += 1;
            if err >= max_rel_err {
                max_rel_err = err;
                worst = Some(GradCheckWorst {
                    param: params.name(id).to_string(),
                    index: k,
                    analytic: a,
                    numeric,
                    rel_err: err,
                });
            }
        }
    }

    Ok(GradCheckReport {
        checks,
        max_rel_err,
        tolerance: cfg.tolerance,
        worst,
    })
}

/// Runs the check on every parameter of a whole model; the loss is the
/// training loss of one window, rebuilt at each probe against a perturbed
/// copy of the parameters. The model's original values are restored before
/// returning.
pub fn grad_check_model<F: Real>(
    model: &mut Model<F>,
    window: &Window<F>,
    label: usize,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut probe = model.params().clone();
    let result = grad_check(&mut probe, cfg, |p, tape| {
        for id in p.ids().collect::<Vec<_>>() {
            *model.params_mut().value_mut(id) = p.value(id).clone();
        }
        let (loss, _probs) = model.training_loss(tape, window, label, None)?;
        Ok(loss)
    });
    // The last probe leaves its perturbation in the model (probes restore
    // only the probe set); copy the clean values back.
    for id in probe.ids().collect::<Vec<_>>() {
        *model.params_mut().value_mut(id) = probe.value(id).clone();
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arch, ModelConfig};
    use crate::sample::FeatureMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn square_function_matches_analytic_derivative() {
        let mut params = ParamSet::<f64>::new();
        let x = params.register("x", Tensor::scalar(3.0)).unwrap();
        let report = grad_check(&mut params, &GradCheckConfig::default(), |p, t| {
            let xv = t.param(p, x);
            t.mul(xv, xv)
        })
        .unwrap();
        assert!(report.pass(), "max rel err {}", report.max_rel_err);
        // d(x^2)/dx at 3 is 6; the central difference of a quadratic is
        // exact up to rounding.
        let w = report.worst.unwrap();
        assert!((w.analytic - 6.0).abs() < 1e-12);
        assert!((w.numeric - 6.0).abs() < 1e-9);
    }

    #[test]
    fn zero_function_reports_zero_error() {
        let mut params = ParamSet::<f64>::new();
        let x = params
            .register("x", Tensor::vector(vec![1.0, -2.0]))
            .unwrap();
        let report = grad_check(&mut params, &GradCheckConfig::default(), |p, t| {
            let xv = t.param(p, x);
            let zero = t.scale(xv, 0.0);
            Ok(t.sum(zero))
        })
        .unwrap();
        assert_eq!(report.max_rel_err, 0.0);
        assert_eq!(report.checks, 2);
    }

    #[test]
    fn matmul_sum_matches_finite_differences() {
        let mut params = ParamSet::<f64>::new();
        // Fixed pseudo-random entries; values only need to be generic.
        let a_data: Vec<f64> = (0..9).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect();
        let b_data: Vec<f64> = (0..9).map(|i| ((i * 5 + 1) % 13) as f64 / 13.0 - 0.5).collect();
        let a = params
            .register("a", Tensor::matrix(3, 3, a_data).unwrap())
            .unwrap();
        let b = params
            .register("b", Tensor::matrix(3, 3, b_data).unwrap())
            .unwrap();
        let cfg = GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-6,
        };
        let report = grad_check(&mut params, &cfg, |p, t| {
            let av = t.param(p, a);
            let bv = t.param(p, b);
            let c = t.matmul(av, bv)?;
            Ok(t.sum(c))
        })
        .unwrap();
        assert!(report.pass(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn activations_match_finite_differences() {
        let mut params = ParamSet::<f64>::new();
        let x = params
            .register("x", Tensor::vector(vec![1.0, -0.3, 0.7]))
            .unwrap();
        let cfg = GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-8,
        };
        let report = grad_check(&mut params, &cfg, |p, t| {
            let xv = t.param(p, x);
            let s = t.sigmoid(xv);
            let th = t.tanh(s);
            Ok(t.sum(th))
        })
        .unwrap();
        assert!(report.pass(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn softmax_nll_chain_matches_finite_differences() {
        let mut params = ParamSet::<f64>::new();
        let x = params
            .register("logits", Tensor::vector(vec![0.2, -1.0, 0.5, 0.05]))
            .unwrap();
        let report = grad_check(&mut params, &GradCheckConfig::default(), |p, t| {
            let xv = t.param(p, x);
            let probs = t.softmax(xv)?;
            t.nll(probs, 2)
        })
        .unwrap();
        assert!(report.pass(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn vecmat_and_concat_match_finite_differences() {
        let mut params = ParamSet::<f64>::new();
        let w = params
            .register("w", Tensor::vector(vec![0.1, 0.9, -0.4]))
            .unwrap();
        let m = params
            .register(
                "m",
                Tensor::matrix(3, 2, vec![0.5, -0.2, 1.5, 0.3, -0.7, 0.9]).unwrap(),
            )
            .unwrap();
        let report = grad_check(&mut params, &GradCheckConfig::default(), |p, t| {
            let wv = t.param(p, w);
            let mv = t.param(p, m);
            let y = t.vecmat(wv, mv)?;
            let both = t.concat(&[y, wv])?;
            let sq = t.mul(both, both)?;
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(report.pass(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn whole_model_loss_matches_finite_differences() {
        let mut config = ModelConfig::new(Arch::Coupled, 2, 2, 2);
        config.hidden = 3;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut model = Model::<f64>::new(config, &mut rng).unwrap();

        let mut frame = || {
            let data: Vec<f64> = (0..4 * 2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            FeatureMap::new(2, 2, Tensor::new(vec![4, 2], data).unwrap()).unwrap()
        };
        let window = Window {
            subject1: (0..2).map(|_| frame()).collect(),
            subject2: (0..2).map(|_| frame()).collect(),
            global: (0..2).map(|_| frame()).collect(),
        };
        let snapshot = model.params().clone();

        let report =
            grad_check_model(&mut model, &window, 1, &GradCheckConfig::default()).unwrap();
        assert!(report.pass(), "max rel err {}", report.max_rel_err);
        assert!(report.checks > 50);
        // The probe restores every value it touched.
        for (id, p) in model.params().iter() {
            assert_eq!(p.value(), snapshot.value(id), "{}", p.name());
        }
    }
}

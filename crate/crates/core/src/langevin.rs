//! Langevin sampling of parameters from the synthetic set's energy:
//! `θ ← θ − (α/2)∇E(θ) + β√α·η`, `η ~ N(0, I)`.

use rand_distr::{Distribution, StandardNormal};

use crate::coreset::SyntheticSet;
use crate::energy::{energy_eval, EnergySpec};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, ParamVector};
use crate::scalar::Scalar;
use crate::seed::rng_from;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_STEPS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct LangevinConfig {
    pub alpha: f64,
    pub steps: usize,
    /// β; 1 is the plain Langevin update, 0 turns it into gradient descent.
    pub noise_temperature: f64,
    pub seed: u64,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        LangevinConfig {
            alpha: DEFAULT_ALPHA,
            steps: DEFAULT_STEPS,
            noise_temperature: 1.0,
            seed: 0,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::contract(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.steps == 0 {
            return Err(Error::contract("langevin steps must be at least 1"));
        }
        if !(self.noise_temperature.is_finite() && self.noise_temperature >= 0.0) {
            return Err(Error::contract(format!(
                "noise temperature must be non-negative, got {}",
                self.noise_temperature
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chain<T> {
    pub theta: Vec<T>,
    /// Energy before the first update and after each update.
    pub trace: Vec<f64>,
}

/// Runs `cfg.steps` updates from `theta0`.
///
/// `energy(θ, want_grad)` returns `E(θ)` and, when asked, `∇E(θ)`. With
/// β = 0 no noise is drawn, so the chain is exactly gradient descent at
/// rate α/2.
pub fn langevin_chain<T: Scalar>(
    theta0: &[T],
    cfg: &LangevinConfig,
    mut energy: impl FnMut(&[T], bool) -> Result<(T, Vec<T>)>,
) -> Result<Chain<T>> {
    cfg.validate()?;
    let half_alpha = T::of(cfg.alpha / 2.0);
    let noise = T::of(cfg.noise_temperature * cfg.alpha.sqrt());
    let mut rng = rng_from(cfg.seed);
    let mut theta = theta0.to_vec();
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let want_grad = step < cfg.steps;
        let fail = |theta: &[T]| Error::Sampler {
            step,
            last_finite: theta.iter().map(|v| v.as_f64()).collect(),
        };
        let (e, grad) = match energy(&theta, want_grad) {
            Ok(out) => out,
            Err(err) if err.is_numeric() => return Err(fail(&theta)),
            Err(err) => return Err(err),
        };
        if !e.is_finite() {
            return Err(fail(&theta));
        }
        trace.push(e.as_f64());
        if !want_grad {
            break;
        }
        if grad.len() != theta.len() {
            return Err(Error::Shape {
                op: "langevin(grad)",
                lhs: vec![theta.len()],
                rhs: vec![grad.len()],
            });
        }
        let mut next: Vec<T> = theta.iter().zip(&grad).map(|(&t, &g)| t - half_alpha * g).collect();
        if cfg.noise_temperature > 0.0 {
            for v in &mut next {
                let eta: f64 = StandardNormal.sample(&mut rng);
                *v += noise * T::of(eta);
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(fail(&theta));
        }
        theta = next;
    }
    Ok(Chain { theta, trace })
}

/// Samples θ⁻ by a Langevin chain on `E(·, D̃)` from `theta0`, using the
/// full synthetic set for every gradient.
pub fn langevin_sample<T: Scalar>(
    theta0: &ParamVector<T>,
    espec: &EnergySpec,
    mspec: &ModelSpec,
    dset: &SyntheticSet<T>,
    cfg: &LangevinConfig,
) -> Result<(ParamVector<T>, Vec<f64>)> {
    if theta0.spec() != mspec {
        return Err(Error::contract("langevin start does not match the model spec"));
    }
    let labels = dset.label_indices()?;
    let chain = langevin_chain(theta0.values(), cfg, |theta, want_grad| {
        let p = ParamVector::new(mspec, theta.to_vec())?;
        let eval = energy_eval(espec, mspec, &p, dset.inputs(), &labels, want_grad, false)?;
        Ok((eval.value, eval.grad_params.unwrap_or_default()))
    })?;
    Ok((ParamVector::new(mspec, chain.theta)?, chain.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coreset::{init_coreset, InitStrategy};
    use crate::data::gen_blobs;
    use crate::models::init_params;

    fn quadratic(theta: &[f64], _: bool) -> Result<(f64, Vec<f64>)> {
        Ok((0.5 * theta.iter().map(|v| v * v).sum::<f64>(), theta.to_vec()))
    }

    fn cfg(alpha: f64, steps: usize, beta: f64, seed: u64) -> LangevinConfig {
        LangevinConfig {
            alpha,
            steps,
            noise_temperature: beta,
            seed,
        }
    }

    #[test]
    fn quadratic_step_is_closed_form() {
        let c = langevin_chain(&[1.0; 4], &cfg(0.2, 1, 0.0, 0), quadratic).unwrap();
        assert_eq!(c.theta, vec![0.9; 4]);
        assert_eq!(c.trace, vec![2.0, 0.5 * 4.0 * 0.81]);
    }

    #[test]
    fn trace_has_one_entry_per_state() {
        let c = langevin_chain(&[1.0; 3], &cfg(0.1, 7, 1.0, 3), quadratic).unwrap();
        assert_eq!(c.trace.len(), 8);
    }

    #[test]
    fn noiseless_chain_is_gradient_descent_bit_for_bit() {
        let d = gen_blobs::<f64>(20, 3, 2, 0.5, 1).unwrap();
        let set = init_coreset(&d, 2, InitStrategy::Real, 0).unwrap();
        let spec = ModelSpec::mlp(2, &[6], 3);
        let energy = EnergySpec::CrossEntropy;
        let theta0: ParamVector<f64> = init_params(&spec, 4);
        let (theta, _) = langevin_sample(&theta0, &energy, &spec, &set, &cfg(0.05, 5, 0.0, 9)).unwrap();
        let mut manual = theta0.clone();
        for _ in 0..5 {
            let g = crate::energy::energy_grad_params(&energy, &spec, &manual, &set).unwrap();
            for (p, g) in manual.values_mut().iter_mut().zip(g) {
                *p -= 0.025 * g;
            }
        }
        assert_eq!(theta, manual);
    }

    #[test]
    fn small_steps_without_noise_never_raise_the_energy() {
        let d = gen_blobs::<f64>(20, 3, 2, 0.5, 1).unwrap();
        let set = init_coreset(&d, 2, InitStrategy::Real, 0).unwrap();
        let spec = ModelSpec::mlp(2, &[6], 3);
        let theta0: ParamVector<f64> = init_params(&spec, 4);
        let energy = EnergySpec::CrossEntropy;
        // largest α from a halving line search whose first step decreases E
        let mut alpha = 1.0;
        loop {
            let (_, trace) = langevin_sample(&theta0, &energy, &spec, &set, &cfg(alpha, 1, 0.0, 0)).unwrap();
            if trace[1] < trace[0] {
                break;
            }
            alpha /= 2.0;
        }
        let (_, trace) = langevin_sample(&theta0, &energy, &spec, &set, &cfg(alpha / 4.0, 25, 0.0, 0)).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");
    }

    #[test]
    fn seeded_chains_repeat() {
        let a = langevin_chain(&[1.0; 5], &cfg(0.1, 1, 1.0, 11), quadratic).unwrap();
        let b = langevin_chain(&[1.0; 5], &cfg(0.1, 1, 1.0, 11), quadratic).unwrap();
        let c = langevin_chain(&[1.0; 5], &cfg(0.1, 1, 1.0, 12), quadratic).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.theta, c.theta);
    }

    #[test]
    fn injected_noise_has_variance_alpha() {
        let alpha = 0.04;
        let frozen = vec![0.3; 100];
        let mut samples = Vec::new();
        for seed in 0..1000 {
            let c = langevin_chain(&[0.0; 100], &cfg(alpha, 1, 1.0, seed), |_, _| Ok((0.0, frozen.clone()))).unwrap();
            samples.extend(c.theta.iter().map(|v| v + alpha / 2.0 * 0.3));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / alpha - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn blow_up_reports_step_and_last_finite_point() {
        let err = langevin_chain(&[1.0], &cfg(1.0, 10, 0.0, 0), |t, _| {
            Ok((t[0], vec![-f64::MAX]))
        })
        .unwrap_err();
        match err {
            Error::Sampler { step, last_finite } => {
                assert_eq!(step, 2);
                assert_eq!(last_finite, vec![f64::MAX]);
            }
            other => panic!("{other:?}"),
        }
        let err = langevin_chain(&[1.0], &cfg(1.0, 3, 0.0, 0), |_, _| Ok((f64::NAN, vec![0.0]))).unwrap_err();
        assert!(matches!(err, Error::Sampler { step: 0, .. }));
    }

    #[test]
    fn invalid_configs_rejected() {
        for c in [cfg(0.0, 1, 0.0, 0), cfg(0.1, 0, 0.0, 0), cfg(0.1, 1, -1.0, 0)] {
            assert!(matches!(langevin_chain(&[1.0], &c, quadratic).unwrap_err(), Error::Contract(_)));
        }
    }

    #[test]
    fn mismatched_start_rejected() {
        let d = gen_blobs::<f64>(20, 3, 2, 0.5, 1).unwrap();
        let set = init_coreset(&d, 2, InitStrategy::Real, 0).unwrap();
        let theta0: ParamVector<f64> = init_params(&ModelSpec::mlp(2, &[5], 3), 0);
        let err = langevin_sample(&theta0, &EnergySpec::CrossEntropy, &ModelSpec::mlp(2, &[6], 3), &set, &cfg(0.1, 1, 0.0, 0));
        assert!(matches!(err.unwrap_err(), Error::Contract(_)));
    }
}

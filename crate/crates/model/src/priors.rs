//! Prior densities, constrained/unconstrained transforms, and
//! method-of-moments propagation of initial-condition priors between
//! fitting periods.
//!
//! Sampling runs in a fully unconstrained space: each (0,1) parameter is
//! logit-transformed and each positive parameter log-transformed, with the
//! change-of-variables Jacobian added to the target density. Overdispersion
//! parameters carry their priors on the inverse-square-root scale, so the
//! implied density on the natural scale includes that Jacobian too.

use crate::compartments::CompartmentState;
use crate::error::ModelError;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.8378770664093453;

/// Support of a single model parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    /// Open unit interval (0,1).
    Unit,
    /// Positive half-line.
    Positive,
}

/// Prior distribution family with hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PriorFamily {
    Beta { alpha: f64, beta: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// Normal truncated to the positive half-line.
    TruncatedNormal { mean: f64, sd: f64 },
    /// Exponential prior placed on the inverse square root of the parameter,
    /// i.e. `1/sqrt(x) ~ Exponential(rate)`, with the change-of-variables
    /// Jacobian folded into the density on `x`.
    ExpInvSqrt { rate: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl PriorFamily {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = match self {
            PriorFamily::Beta { alpha, beta } => *alpha > 0.0 && *beta > 0.0,
            PriorFamily::LogNormal { sigma, .. } => *sigma > 0.0,
            PriorFamily::TruncatedNormal { sd, .. } => *sd > 0.0,
            PriorFamily::ExpInvSqrt { rate } => *rate > 0.0,
            PriorFamily::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidPrior(format!("bad hyperparameters: {self:?}")))
        }
    }

    /// Whether the family can serve as a prior for a parameter with the
    /// given support.
    pub fn compatible_with(&self, support: Support) -> bool {
        match (self, support) {
            (PriorFamily::Beta { .. }, Support::Unit) => true,
            (PriorFamily::Beta { .. }, Support::Positive) => false,
            (PriorFamily::LogNormal { .. }, Support::Positive) => true,
            (PriorFamily::TruncatedNormal { .. }, Support::Positive) => true,
            (PriorFamily::ExpInvSqrt { .. }, Support::Positive) => true,
            (PriorFamily::Uniform { lo, hi }, Support::Unit) => *lo >= 0.0 && *hi <= 1.0,
            (PriorFamily::Uniform { lo, .. }, Support::Positive) => *lo >= 0.0,
            _ => false,
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            PriorFamily::Beta { alpha, beta } => {
                if x <= 0.0 || x >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln() - ln_beta(alpha, beta)
            }
            PriorFamily::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (x.ln() - mu) / sigma;
                -x.ln() - sigma.ln() - 0.5 * LN_2PI - 0.5 * z * z
            }
            PriorFamily::TruncatedNormal { mean, sd } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (x - mean) / sd;
                let norm = Normal::new(0.0, 1.0).unwrap();
                -0.5 * z * z - sd.ln() - 0.5 * LN_2PI - norm.cdf(mean / sd).ln()
            }
            PriorFamily::ExpInvSqrt { rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                // u = x^(-1/2); p(x) = rate e^(-rate u) |du/dx|
                rate.ln() - rate / x.sqrt() - 2.0f64.ln() - 1.5 * x.ln()
            }
            PriorFamily::Uniform { lo, hi } => {
                if x <= lo || x >= hi {
                    f64::NEG_INFINITY
                } else {
                    -(hi - lo).ln()
                }
            }
        }
    }

    /// Derivative of [`Self::log_density`] with respect to `x`, valid inside
    /// the support.
    pub fn dlog_density(&self, x: f64) -> f64 {
        match *self {
            PriorFamily::Beta { alpha, beta } => (alpha - 1.0) / x - (beta - 1.0) / (1.0 - x),
            PriorFamily::LogNormal { mu, sigma } => {
                -(1.0 + (x.ln() - mu) / (sigma * sigma)) / x
            }
            PriorFamily::TruncatedNormal { mean, sd } => -(x - mean) / (sd * sd),
            PriorFamily::ExpInvSqrt { rate } => 0.5 * rate * x.powf(-1.5) - 1.5 / x,
            PriorFamily::Uniform { .. } => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorFamily::Beta { alpha, beta } => {
                rand_distr::Beta::new(alpha, beta).unwrap().sample(rng)
            }
            PriorFamily::LogNormal { mu, sigma } => {
                rand_distr::LogNormal::new(mu, sigma).unwrap().sample(rng)
            }
            PriorFamily::TruncatedNormal { mean, sd } => {
                let norm = rand_distr::Normal::new(mean, sd).unwrap();
                loop {
                    let x = norm.sample(rng);
                    if x > 0.0 {
                        return x;
                    }
                }
            }
            PriorFamily::ExpInvSqrt { rate } => {
                let exp = rand_distr::Exp::new(rate).unwrap();
                loop {
                    let u: f64 = exp.sample(rng);
                    let x = 1.0 / (u * u);
                    if x.is_finite() && x > 0.0 {
                        return x;
                    }
                }
            }
            PriorFamily::Uniform { lo, hi } => rng.gen_range(lo..hi),
        }
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// One named prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub name: String,
    #[serde(flatten)]
    pub family: PriorFamily,
}

/// Ordered prior assignment, one entry per free model parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub entries: Vec<PriorEntry>,
}

impl PriorSpec {
    pub fn new(entries: Vec<PriorEntry>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn family(&self, name: &str) -> Option<&PriorFamily> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.family)
    }

    /// Replace the prior for a named parameter, checking the family against
    /// the parameter's support.
    pub fn set(&mut self, name: &str, family: PriorFamily, support: Support) -> Result<(), ModelError> {
        family.validate()?;
        if !family.compatible_with(support) {
            return Err(ModelError::InvalidPrior(format!(
                "prior {family:?} incompatible with support {support:?} of `{name}`"
            )));
        }
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => {
                e.family = family;
                Ok(())
            }
            None => Err(ModelError::InvalidPrior(format!("unknown parameter `{name}`"))),
        }
    }

    /// Sum of independent log prior densities at a constrained point.
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.entries.len());
        let mut lp = 0.0;
        for (e, &x) in self.entries.iter().zip(theta) {
            lp += e.family.log_density(x);
            if lp == f64::NEG_INFINITY {
                break;
            }
        }
        lp
    }

    /// Log prior and its gradient with respect to the constrained
    /// parameters.
    pub fn log_prior_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut lp = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for (i, (e, &x)) in self.entries.iter().zip(theta).enumerate() {
            let v = e.family.log_density(x);
            lp += v;
            if lp == f64::NEG_INFINITY {
                return (f64::NEG_INFINITY, vec![0.0; theta.len()]);
            }
            grad[i] = e.family.dlog_density(x);
        }
        (lp, grad)
    }

    /// Independent draw from every prior, in entry order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.entries.iter().map(|e| e.family.sample(rng)).collect()
    }
}

/// The thirteen free parameters of the test-aware model, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    /// Initial susceptible fraction.
    pub s0: f64,
    /// Fraction of initially infected who are infectious.
    pub i_tilde0: f64,
    /// Fraction of initially infectious who are early-stage.
    pub ie_tilde0: f64,
    /// Basic reproduction number.
    pub r0: f64,
    /// Mean latent period, weeks.
    pub inv_gamma: f64,
    /// Mean early infectious period, weeks.
    pub inv_nu_e: f64,
    /// Mean progressed infectious period, weeks.
    pub inv_nu_p: f64,
    /// Infection fatality probability.
    pub eta: f64,
    /// Mean death detection probability.
    pub rho: f64,
    /// Death-count overdispersion.
    pub phi: f64,
    /// Positivity log-odds intercept.
    pub alpha0: f64,
    /// Positivity log-odds slope.
    pub alpha1: f64,
    /// Positivity overdispersion.
    pub kappa: f64,
}

pub const TEST_AWARE_NAMES: [&str; 13] = [
    "S0",
    "I_tilde0",
    "Ie_tilde0",
    "R0",
    "inv_gamma",
    "inv_nu_e",
    "inv_nu_p",
    "eta",
    "rho",
    "phi",
    "alpha0",
    "alpha1",
    "kappa",
];

pub const NO_TESTS_NAMES: [&str; 12] = [
    "S0",
    "I_tilde0",
    "Ie_tilde0",
    "R0",
    "inv_gamma",
    "inv_nu_e",
    "inv_nu_p",
    "eta",
    "rho",
    "phi",
    "rho_c",
    "phi_c",
];

pub const TEST_AWARE_SUPPORTS: [Support; 13] = [
    Support::Unit,
    Support::Unit,
    Support::Unit,
    Support::Positive,
    Support::Positive,
    Support::Positive,
    Support::Positive,
    Support::Unit,
    Support::Unit,
    Support::Positive,
    Support::Positive,
    Support::Unit,
    Support::Positive,
];

pub const NO_TESTS_SUPPORTS: [Support; 12] = [
    Support::Unit,
    Support::Unit,
    Support::Unit,
    Support::Positive,
    Support::Positive,
    Support::Positive,
    Support::Positive,
    Support::Unit,
    Support::Unit,
    Support::Positive,
    Support::Unit,
    Support::Positive,
];

impl ParamVector {
    pub fn to_array(&self) -> [f64; 13] {
        [
            self.s0,
            self.i_tilde0,
            self.ie_tilde0,
            self.r0,
            self.inv_gamma,
            self.inv_nu_e,
            self.inv_nu_p,
            self.eta,
            self.rho,
            self.phi,
            self.alpha0,
            self.alpha1,
            self.kappa,
        ]
    }

    pub fn from_array(x: &[f64]) -> Self {
        assert_eq!(x.len(), 13);
        Self {
            s0: x[0],
            i_tilde0: x[1],
            ie_tilde0: x[2],
            r0: x[3],
            inv_gamma: x[4],
            inv_nu_e: x[5],
            inv_nu_p: x[6],
            eta: x[7],
            rho: x[8],
            phi: x[9],
            alpha0: x[10],
            alpha1: x[11],
            kappa: x[12],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, (&x, support)) in self
            .to_array()
            .iter()
            .zip(TEST_AWARE_SUPPORTS.iter())
            .enumerate()
        {
            let ok = match support {
                Support::Unit => x > 0.0 && x < 1.0,
                Support::Positive => x > 0.0 && x.is_finite(),
            };
            if !ok {
                return Err(ModelError::InvalidParam {
                    name: "theta",
                    reason: format!("{} = {x} outside support", TEST_AWARE_NAMES[i]),
                });
            }
        }
        Ok(())
    }
}

/// Default priors for the thirteen test-aware parameters.
pub fn default_test_aware_priors() -> PriorSpec {
    let f = |name: &str, family: PriorFamily| PriorEntry { name: name.to_string(), family };
    PriorSpec::new(vec![
        f("S0", PriorFamily::Beta { alpha: 983.0, beta: 2.7 }),
        f("I_tilde0", PriorFamily::Beta { alpha: 41.3, beta: 17.26 }),
        f("Ie_tilde0", PriorFamily::Beta { alpha: 24.43, beta: 27.02 }),
        f("R0", PriorFamily::LogNormal { mu: -0.25, sigma: 0.7 }),
        f("inv_gamma", PriorFamily::LogNormal { mu: 0.0, sigma: 0.22 }),
        f("inv_nu_e", PriorFamily::LogNormal { mu: 0.0, sigma: 0.22 }),
        f("inv_nu_p", PriorFamily::LogNormal { mu: 0.0, sigma: 0.22 }),
        f("eta", PriorFamily::Beta { alpha: 1.5, beta: 200.0 }),
        f("rho", PriorFamily::Beta { alpha: 8.0, beta: 2.0 }),
        f("phi", PriorFamily::ExpInvSqrt { rate: 1.0 }),
        f("alpha0", PriorFamily::TruncatedNormal { mean: 4.0, sd: 2.0 }),
        f("alpha1", PriorFamily::Beta { alpha: 3.0, beta: 1.0 }),
        f("kappa", PriorFamily::ExpInvSqrt { rate: 1.0 }),
    ])
}

/// Default priors for the twelve parameters of the model without tests.
pub fn default_no_tests_priors() -> PriorSpec {
    let mut spec = default_test_aware_priors();
    spec.entries.truncate(10);
    spec.entries.push(PriorEntry {
        name: "rho_c".to_string(),
        family: PriorFamily::Beta { alpha: 5.62, beta: 42.57 },
    });
    spec.entries.push(PriorEntry {
        name: "phi_c".to_string(),
        family: PriorFamily::ExpInvSqrt { rate: 1.0 },
    });
    spec
}

// ---------------------------------------------------------------------------
// Constrained <-> unconstrained transforms
// ---------------------------------------------------------------------------

/// Elementwise bijection between a parameter's support and the real line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    /// (0,1) <-> R via log-odds.
    Logit,
    /// (0,inf) <-> R via logarithm.
    Log,
}

impl Transform {
    pub fn for_support(s: Support) -> Self {
        match s {
            Support::Unit => Transform::Logit,
            Support::Positive => Transform::Log,
        }
    }

    pub fn to_unconstrained(&self, x: f64) -> f64 {
        match self {
            Transform::Logit => (x / (1.0 - x)).ln(),
            Transform::Log => x.ln(),
        }
    }

    pub fn from_unconstrained(&self, z: f64) -> f64 {
        match self {
            Transform::Logit => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Transform::Log => z.exp(),
        }
    }

    /// `log |d theta / d z|` evaluated at the constrained value.
    pub fn log_jacobian(&self, theta: f64) -> f64 {
        match self {
            Transform::Logit => theta.ln() + (1.0 - theta).ln(),
            Transform::Log => theta.ln(),
        }
    }

    /// `d theta / d z` at the constrained value.
    pub fn dtheta_dz(&self, theta: f64) -> f64 {
        match self {
            Transform::Logit => theta * (1.0 - theta),
            Transform::Log => theta,
        }
    }

    /// `d/dz log |d theta / d z|` at the constrained value.
    pub fn dlog_jacobian_dz(&self, theta: f64) -> f64 {
        match self {
            Transform::Logit => 1.0 - 2.0 * theta,
            Transform::Log => 1.0,
        }
    }
}

/// Map a constrained parameter vector to the unconstrained sampling space.
pub fn to_unconstrained(theta: &[f64], transforms: &[Transform]) -> Vec<f64> {
    theta
        .iter()
        .zip(transforms)
        .map(|(&x, t)| t.to_unconstrained(x))
        .collect()
}

/// Map an unconstrained point back to the constrained space, returning the
/// parameters and the log-absolute-determinant of `d theta / d z`.
pub fn from_unconstrained(z: &[f64], transforms: &[Transform]) -> (Vec<f64>, f64) {
    let mut theta = Vec::with_capacity(z.len());
    let mut log_jac = 0.0;
    for (&zi, t) in z.iter().zip(transforms) {
        let x = t.from_unconstrained(zi);
        log_jac += t.log_jacobian(x);
        theta.push(x);
    }
    (theta, log_jac)
}

// ---------------------------------------------------------------------------
// Method-of-moments propagation of initial-condition priors
// ---------------------------------------------------------------------------

/// Beta hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaHyper {
    pub alpha: f64,
    pub beta: f64,
}

/// Beta hyperparameters for the three initial-condition parameters of the
/// next fitting period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagatedInitPriors {
    pub s0: BetaHyper,
    pub i_tilde0: BetaHyper,
    pub ie_tilde0: BetaHyper,
}

/// Fit a Beta distribution to samples by matching mean and variance:
/// `alpha = m (m(1-m)/v - 1)`, `beta = (1-m) (m(1-m)/v - 1)`.
pub fn beta_moment_fit(samples: &[f64]) -> Result<BetaHyper, ModelError> {
    if samples.len() < 2 {
        return Err(ModelError::InvalidParam {
            name: "samples",
            reason: "need at least two samples for a moment fit".into(),
        });
    }
    let n = samples.len() as f64;
    let m = samples.iter().sum::<f64>() / n;
    let v = samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    if !(m > 0.0 && m < 1.0) {
        return Err(ModelError::InvalidParam {
            name: "samples",
            reason: format!("sample mean {m} outside (0,1)"),
        });
    }
    let bound = m * (1.0 - m);
    if v >= bound {
        return Err(ModelError::MomentInfeasible { variance: v, bound });
    }
    if v <= 0.0 {
        return Err(ModelError::InvalidParam {
            name: "samples",
            reason: "zero sample variance; no Beta moment fit exists".into(),
        });
    }
    let c = bound / v - 1.0;
    Ok(BetaHyper { alpha: m * c, beta: (1.0 - m) * c })
}

/// Propagate posterior compartment states at a chosen time into Beta priors
/// for the next period's initial-condition parameters. The next period
/// renormalizes to the population still at risk, so the functionals are
/// `S/(S+E+Ie+Ip)`, `(Ie+Ip)/(E+Ie+Ip)`, and `Ie/(Ie+Ip)` per draw.
pub fn propagate_initial_priors(
    states_at_time: &[CompartmentState],
) -> Result<PropagatedInitPriors, ModelError> {
    let mut s0 = Vec::with_capacity(states_at_time.len());
    let mut i_tilde = Vec::with_capacity(states_at_time.len());
    let mut ie_tilde = Vec::with_capacity(states_at_time.len());
    for x in states_at_time {
        let at_risk = x.s + x.e + x.i_e + x.i_p;
        let infected = x.e + x.i_e + x.i_p;
        let infectious = x.i_e + x.i_p;
        if at_risk <= 0.0 || infected <= 0.0 || infectious <= 0.0 {
            return Err(ModelError::InvalidParam {
                name: "state",
                reason: format!("degenerate compartments for propagation: {x:?}"),
            });
        }
        s0.push(x.s / at_risk);
        i_tilde.push(infectious / infected);
        ie_tilde.push(x.i_e / infectious);
    }
    Ok(PropagatedInitPriors {
        s0: beta_moment_fit(&s0)?,
        i_tilde0: beta_moment_fit(&i_tilde)?,
        ie_tilde0: beta_moment_fit(&ie_tilde)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn r0_prior_analytic_summaries() {
        // Log-normal(-0.25, 0.7): median exp(-0.25), 90% interval
        // exp(-0.25 -/+ 1.6449 * 0.7).
        let med = (-0.25f64).exp();
        assert!((med - 0.779).abs() < 1e-3);
        let lo = (-0.25 - 1.6448536269514722 * 0.7f64).exp();
        let hi = (-0.25 + 1.6448536269514722 * 0.7f64).exp();
        assert!((lo - 0.246).abs() < 1e-3);
        assert!((hi - 2.463).abs() < 1e-3);
    }

    #[test]
    fn s0_prior_mean_scale() {
        // Beta(983, 2.7) mean = 983/985.7, i.e. one minus
        // 2.7/985.7 ~ 2.7e-3, on the scale of the quoted median.
        let mean = 983.0 / 985.7;
        assert!((1.0 - mean - 2.7393e-3).abs() < 1e-6);
    }

    #[test]
    fn flat_priors_are_constant_over_support() {
        let mut spec = default_test_aware_priors();
        for (i, support) in TEST_AWARE_SUPPORTS.iter().enumerate() {
            let name = TEST_AWARE_NAMES[i].to_string();
            let fam = match support {
                Support::Unit => PriorFamily::Beta { alpha: 1.0, beta: 1.0 },
                Support::Positive => PriorFamily::Uniform { lo: 0.0, hi: 50.0 },
            };
            spec.set(&name, fam, *support).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = spec.sample(&mut rng);
        let b = spec.sample(&mut rng);
        assert!((spec.log_prior(&a) - spec.log_prior(&b)).abs() < 1e-12);
    }

    #[test]
    fn out_of_support_is_rejected() {
        let spec = default_test_aware_priors();
        let mut theta: Vec<f64> = spec.sample(&mut ChaCha8Rng::seed_from_u64(1));
        theta[0] = 1.2;
        assert_eq!(spec.log_prior(&theta), f64::NEG_INFINITY);
    }

    #[test]
    fn override_checks_support() {
        let mut spec = default_test_aware_priors();
        let err = spec.set(
            "S0",
            PriorFamily::LogNormal { mu: 0.0, sigma: 1.0 },
            Support::Unit,
        );
        assert!(err.is_err());
        spec.set(
            "R0",
            PriorFamily::LogNormal { mu: 2.5f64.ln(), sigma: 0.5 },
            Support::Positive,
        )
        .unwrap();
        assert!(matches!(
            spec.family("R0"),
            Some(PriorFamily::LogNormal { .. })
        ));
    }

    #[test]
    fn transforms_round_trip() {
        let transforms: Vec<Transform> = TEST_AWARE_SUPPORTS
            .iter()
            .map(|s| Transform::for_support(*s))
            .collect();
        let spec = default_test_aware_priors();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let theta = spec.sample(&mut rng);
            let z = to_unconstrained(&theta, &transforms);
            let (back, _) = from_unconstrained(&z, &transforms);
            for (a, b) in theta.iter().zip(&back) {
                let scale = a.abs().max(1.0);
                assert!((a - b).abs() / scale < 1e-12, "round trip {a} -> {b}");
            }
        }
    }

    #[test]
    fn zero_vector_anchor() {
        let transforms = [Transform::Logit, Transform::Log];
        let (theta, _) = from_unconstrained(&[0.0, 0.0], &transforms);
        assert_eq!(theta[0], 0.5);
        assert_eq!(theta[1], 1.0);
    }

    #[test]
    fn log_prior_gradient_matches_finite_differences() {
        let spec = default_test_aware_priors();
        let transforms: Vec<Transform> = TEST_AWARE_SUPPORTS
            .iter()
            .map(|s| Transform::for_support(*s))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Log prior in z-space including the Jacobian term.
        let f = |z: &[f64]| {
            let (theta, lj) = from_unconstrained(z, &transforms);
            spec.log_prior(&theta) + lj
        };
        for _ in 0..20 {
            let theta = spec.sample(&mut rng);
            let z = to_unconstrained(&theta, &transforms);
            let (lp, grad_theta) = spec.log_prior_grad(&theta);
            assert!(lp.is_finite());
            for i in 0..z.len() {
                let x = theta[i];
                let t = transforms[i];
                let analytic = grad_theta[i] * t.dtheta_dz(x) + t.dlog_jacobian_dz(x);
                let h = 1e-6 * z[i].abs().max(1.0);
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (f(&zp) - f(&zm)) / (2.0 * h);
                let denom = analytic.abs().max(1e-10);
                assert!(
                    ((analytic - fd) / denom).abs() < 1e-5,
                    "param {i}: analytic {analytic}, fd {fd}"
                );
            }
        }
    }

    #[test]
    fn prior_sampling_medians_smoke() {
        // Coarse Monte Carlo check on a few analytic medians; the full
        // quantile comparison lives in the acceptance suite.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let fam = PriorFamily::ExpInvSqrt { rate: 1.0 };
        let mut draws: Vec<f64> = (0..n).map(|_| 1.0 / fam.sample(&mut rng).sqrt()).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = draws[n / 2];
        assert!((med - std::f64::consts::LN_2).abs() < 5e-3, "median {med}");

        let fam = PriorFamily::TruncatedNormal { mean: 4.0, sd: 2.0 };
        let mut draws: Vec<f64> = (0..n).map(|_| fam.sample(&mut rng)).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((draws[n / 2] - 4.057).abs() < 2e-2);
    }

    #[test]
    fn moment_fit_uniform_samples() {
        // Exact uniform moments: m = 1/2, v = 1/12 -> Beta(1,1).
        // Construct samples with those exact moments.
        let n = 10_000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let fit = beta_moment_fit(&samples).unwrap();
        assert!((fit.alpha - 1.0).abs() < 2e-3, "alpha {}", fit.alpha);
        assert!((fit.beta - 1.0).abs() < 2e-3, "beta {}", fit.beta);
    }

    #[test]
    fn moment_fit_arithmetic() {
        // m = 0.71 with v chosen so m(1-m)/v - 1 = 58.56.
        let m: f64 = 0.71;
        let c: f64 = 58.56;
        let v = m * (1.0 - m) / (c + 1.0);
        let sd = v.sqrt();
        // Two-point sample with exactly mean m and variance v.
        let fit = beta_moment_fit(&[m - sd, m + sd]).unwrap();
        assert!((fit.alpha - m * c).abs() < 1e-9);
        assert!((fit.alpha - 41.58).abs() < 5e-3);
        assert!((fit.beta - (1.0 - m) * c).abs() < 1e-9);
    }

    #[test]
    fn moment_fit_concentrates_as_variance_vanishes() {
        let m = 0.3;
        let mut prev_alpha = 0.0;
        for k in 1..5 {
            let sd = 10f64.powi(-k);
            let fit = beta_moment_fit(&[m - sd, m + sd]).unwrap();
            assert!(fit.alpha > prev_alpha);
            let mean = fit.alpha / (fit.alpha + fit.beta);
            assert!((mean - m).abs() < 1e-9);
            prev_alpha = fit.alpha;
        }
    }

    #[test]
    fn moment_fit_infeasible_variance() {
        // Bernoulli-like samples have v >= m(1-m).
        let samples = [0.001, 0.999, 0.001, 0.999];
        let err = beta_moment_fit(&samples).unwrap_err();
        assert!(err.to_string().contains("cap the variance"));
    }

    #[test]
    fn propagation_from_states() {
        let states: Vec<CompartmentState> = (0..100)
            .map(|i| {
                let wiggle = 1e-4 * (i as f64 / 100.0 - 0.5);
                let s = 0.95 + wiggle;
                let e = 0.02 - wiggle;
                let i_e = 0.012;
                let i_p = 0.008;
                let r = 1.0 - s - e - i_e - i_p;
                CompartmentState { s, e, i_e, i_p, r, d: 0.0 }
            })
            .collect();
        let p = propagate_initial_priors(&states).unwrap();
        let mean_s0 = p.s0.alpha / (p.s0.alpha + p.s0.beta);
        assert!((mean_s0 - 0.95 / 0.99).abs() < 1e-3);
        let mean_ie = p.ie_tilde0.alpha / (p.ie_tilde0.alpha + p.ie_tilde0.beta);
        assert!((mean_ie - 0.6).abs() < 1e-6);
    }
}

//! Emission models linking latent cumulative transitions to observed deaths
//! and cases, and the joint log-likelihood with analytic gradients.
//!
//! Deaths in a bin follow a negative binomial (mean/overdispersion form)
//! whose mean is the detected fraction of latent deaths. Cases follow a
//! beta-binomial in the number of tests, with a mean positivity whose
//! log-odds is linear in the log-odds of the latent incidence increment, so
//! that rising test volume alone does not masquerade as rising incidence.
//! A companion negative-binomial case model that ignores test counts is
//! provided for the comparison study.
//!
//! All probability mass functions are evaluated in log-gamma space so that
//! counts of order 1e4 and overdispersions sampled on an inverse-square-root
//! scale stay finite.

use crate::error::ModelError;
use crate::ode::{Trajectory, FIT_SENS, IDX_N_IEIP, IDX_N_IPD};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

/// Default floor applied to the latent incidence increment before its
/// log-odds transform. Sampler trajectories can transiently reach parameter
/// regions where an increment underflows to zero; flooring keeps the
/// likelihood finite there and the event is counted instead of fatal.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Aligned binned surveillance counts: tests, cases (positive tests), and
/// deaths per interval.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveillanceSeries {
    /// Bin width in weeks.
    pub bin_width: f64,
    pub tests: Vec<u64>,
    pub cases: Vec<u64>,
    pub deaths: Vec<u64>,
}

impl SurveillanceSeries {
    pub fn new(
        bin_width: f64,
        tests: Vec<u64>,
        cases: Vec<u64>,
        deaths: Vec<u64>,
    ) -> Result<Self, ModelError> {
        let s = Self { bin_width, tests, cases, deaths };
        s.validate()?;
        Ok(s)
    }

    /// Number of observation intervals.
    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.bin_width > 0.0) || !self.bin_width.is_finite() {
            return Err(ModelError::InvalidSeries(format!(
                "bin width must be positive, got {}",
                self.bin_width
            )));
        }
        if self.cases.len() != self.tests.len() || self.deaths.len() != self.tests.len() {
            return Err(ModelError::InvalidSeries(format!(
                "length mismatch: tests {}, cases {}, deaths {}",
                self.tests.len(),
                self.cases.len(),
                self.deaths.len()
            )));
        }
        for (l, (y, t)) in self.cases.iter().zip(self.tests.iter()).enumerate() {
            if y > t {
                return Err(ModelError::InvalidSeries(format!(
                    "bin {l}: cases {y} exceed tests {t}"
                )));
            }
        }
        Ok(())
    }

    /// Bin endpoints `t0, t1, ..., tL` starting at `t0`.
    pub fn bin_endpoints(&self, t0: f64) -> Vec<f64> {
        (0..=self.len())
            .map(|l| t0 + l as f64 * self.bin_width)
            .collect()
    }

    /// Truncate to the first `n_bins` intervals.
    pub fn truncated(&self, n_bins: usize) -> Self {
        Self {
            bin_width: self.bin_width,
            tests: self.tests[..n_bins].to_vec(),
            cases: self.cases[..n_bins].to_vec(),
            deaths: self.deaths[..n_bins].to_vec(),
        }
    }
}

/// Observation-model parameters for the test-aware case model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationParams {
    /// Mean death detection probability, in [0,1].
    pub rho: f64,
    /// Death-count overdispersion, > 0.
    pub phi: f64,
    /// Intercept of the positivity log-odds, > 0.
    pub alpha0: f64,
    /// Slope of the positivity log-odds, in (0,1).
    pub alpha1: f64,
    /// Positivity overdispersion, > 0.
    pub kappa: f64,
    /// Population size, persons.
    pub pop_size: f64,
}

impl ObservationParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            ("rho", self.rho >= 0.0 && self.rho <= 1.0, "must be in [0,1]"),
            ("phi", self.phi > 0.0, "must be > 0"),
            ("alpha0", self.alpha0 > 0.0, "must be > 0"),
            ("alpha1", self.alpha1 > 0.0 && self.alpha1 < 1.0, "must be in (0,1)"),
            ("kappa", self.kappa > 0.0, "must be > 0"),
            ("pop_size", self.pop_size > 0.0, "must be > 0"),
        ];
        for (name, ok, what) in checks {
            if !ok {
                return Err(ModelError::InvalidParam {
                    name: "observation",
                    reason: format!("{name} {what}"),
                });
            }
        }
        Ok(())
    }
}

/// Case-model parameters for the variant that ignores test counts: mean
/// case detection rate and case-count overdispersion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoTestsParams {
    pub rho_c: f64,
    pub phi_c: f64,
}

/// Negative binomial log-pmf in mean/overdispersion form:
/// mean `mu`, variance `mu (1 + mu/phi)`.
///
/// `mu = 0` concentrates at zero: log-pmf is 0 at `m = 0` and `-inf`
/// otherwise. Stable for `mu` from 1e-12 up to 1e7 and beyond.
pub fn nb_log_pmf(m: u64, mu: f64, phi: f64) -> f64 {
    if mu == 0.0 {
        return if m == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let mf = m as f64;
    ln_gamma(mf + phi) - ln_gamma(phi) - ln_gamma(mf + 1.0)
        + phi * (phi.ln() - (phi + mu).ln())
        + mf * (mu.ln() - (phi + mu).ln())
}

/// Negative binomial log-pmf with partial derivatives in `mu` and `phi`.
pub fn nb_log_pmf_grad(m: u64, mu: f64, phi: f64) -> (f64, f64, f64) {
    let lp = nb_log_pmf(m, mu, phi);
    if !lp.is_finite() {
        return (lp, 0.0, 0.0);
    }
    let mf = m as f64;
    let d_mu = if m == 0 {
        -phi / (phi + mu)
    } else {
        mf / mu - (mf + phi) / (phi + mu)
    };
    let d_phi = digamma(mf + phi) - digamma(phi) + (phi.ln() - (phi + mu).ln())
        + (mu - mf) / (phi + mu);
    (lp, d_mu, d_phi)
}

/// Log-probability of observing `m` deaths in a bin whose latent death
/// fraction increment is `delta_n_ipd`.
pub fn death_log_pmf(m: u64, delta_n_ipd: f64, obs: &ObservationParams) -> Result<f64, ModelError> {
    if delta_n_ipd < 0.0 {
        return Err(ModelError::NegativeIncrement { bin: 0, value: delta_n_ipd });
    }
    let mu = obs.rho * obs.pop_size * delta_n_ipd;
    Ok(nb_log_pmf(m, mu, obs.phi))
}

#[inline]
fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean test positivity for a latent incidence increment, with an explicit
/// floor. Returns the positivity and whether the floor was applied.
pub fn mean_positivity_floored(
    delta_n_ieip: f64,
    alpha0: f64,
    alpha1: f64,
    floor: f64,
) -> (f64, bool) {
    let floored = !(delta_n_ieip > floor);
    let dn = if floored { floor } else { delta_n_ieip };
    (logistic(alpha0 + alpha1 * logit(dn)), floored)
}

/// Mean test positivity: `logistic(alpha0 + alpha1 * logit(delta_n_ieip))`,
/// strictly increasing in the incidence increment. Increments at or below
/// [`POSITIVITY_FLOOR`] are clamped to it.
pub fn mean_positivity(delta_n_ieip: f64, alpha0: f64, alpha1: f64) -> f64 {
    mean_positivity_floored(delta_n_ieip, alpha0, alpha1, POSITIVITY_FLOOR).0
}

/// Beta-binomial log-pmf with `t` trials and shape parameters `a`, `b`.
pub fn beta_binomial_log_pmf(y: u64, t: u64, a: f64, b: f64) -> f64 {
    let (yf, tf) = (y as f64, t as f64);
    let ln_choose = ln_gamma(tf + 1.0) - ln_gamma(yf + 1.0) - ln_gamma(tf - yf + 1.0);
    ln_choose + ln_beta(yf + a, tf - yf + b) - ln_beta(a, b)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Beta-binomial log-pmf with partial derivatives in the shapes `a`, `b`.
fn beta_binomial_log_pmf_grad(y: u64, t: u64, a: f64, b: f64) -> (f64, f64, f64) {
    let lp = beta_binomial_log_pmf(y, t, a, b);
    let (yf, tf) = (y as f64, t as f64);
    let dab = digamma(a + b) - digamma(tf + a + b);
    let d_a = digamma(yf + a) - digamma(a) + dab;
    let d_b = digamma(tf - yf + b) - digamma(b) + dab;
    (lp, d_a, d_b)
}

/// Log-probability of `y` positive tests out of `t`, given mean positivity
/// `mu_c` and overdispersion `kappa` (shapes `kappa mu_c`, `kappa (1-mu_c)`).
pub fn case_log_pmf(y: u64, t: u64, mu_c: f64, kappa: f64) -> Result<f64, ModelError> {
    if y > t {
        return Err(ModelError::InvalidSeries(format!(
            "cases {y} exceed tests {t}"
        )));
    }
    if !(mu_c > 0.0 && mu_c < 1.0) {
        return Err(ModelError::InvalidParam {
            name: "mu_c",
            reason: format!("mean positivity must be in (0,1), got {mu_c}"),
        });
    }
    if !(kappa > 0.0) {
        return Err(ModelError::InvalidParam {
            name: "kappa",
            reason: format!("must be > 0, got {kappa}"),
        });
    }
    if t == 0 {
        return Ok(0.0);
    }
    Ok(beta_binomial_log_pmf(y, t, kappa * mu_c, kappa * (1.0 - mu_c)))
}

/// Log-probability of `y` cases under the model that ignores test counts:
/// negative binomial with mean `rho_c * pop * delta_n_ieip`.
pub fn no_tests_case_log_pmf(
    y: u64,
    delta_n_ieip: f64,
    p: &NoTestsParams,
    pop_size: f64,
) -> Result<f64, ModelError> {
    if delta_n_ieip < 0.0 {
        return Err(ModelError::NegativeIncrement { bin: 0, value: delta_n_ieip });
    }
    Ok(nb_log_pmf(y, p.rho_c * pop_size * delta_n_ieip, p.phi_c))
}

/// Joint log-likelihood value plus the count of bins where the incidence
/// increment had to be floored before the positivity transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub floored_bins: usize,
}

/// Per-bin increments of the cumulative transitions feeding the likelihood,
/// extracted from a trajectory whose grid carries the bin endpoints.
struct BinIncrements {
    d_ipd: Vec<f64>,
    d_ieip: Vec<f64>,
}

fn bin_increments(data: &SurveillanceSeries, traj: &Trajectory) -> Result<BinIncrements, ModelError> {
    let n_bins = data.len();
    if traj.len() < n_bins + 1 {
        return Err(ModelError::GridMismatch(format!(
            "trajectory has {} points, need {} bin endpoints",
            traj.len(),
            n_bins + 1
        )));
    }
    let tol = 1e-9;
    for l in 0..n_bins {
        let dt = traj.times[l + 1] - traj.times[l];
        if (dt - data.bin_width).abs() > tol {
            return Err(ModelError::GridMismatch(format!(
                "grid spacing {dt} at bin {l} does not match bin width {}",
                data.bin_width
            )));
        }
    }
    let mut d_ipd = Vec::with_capacity(n_bins);
    let mut d_ieip = Vec::with_capacity(n_bins);
    for l in 0..n_bins {
        let a = &traj.cumulative[l];
        let b = &traj.cumulative[l + 1];
        d_ipd.push(checked_increment(b.ip_to_d - a.ip_to_d, l)?);
        d_ieip.push(checked_increment(b.ie_to_ip - a.ie_to_ip, l)?);
    }
    Ok(BinIncrements { d_ipd, d_ieip })
}

/// Cumulative transitions are non-decreasing, so a materially negative
/// increment means the trajectory was produced incorrectly; rounding-level
/// negatives are clamped to zero.
fn checked_increment(dn: f64, bin: usize) -> Result<f64, ModelError> {
    if dn < -1e-9 {
        return Err(ModelError::NegativeIncrement { bin, value: dn });
    }
    Ok(dn.max(0.0))
}

/// Joint log-likelihood of deaths and cases given a solved trajectory.
///
/// The trajectory grid must contain the bin endpoints `t0..tL` as its first
/// `L + 1` points.
pub fn log_likelihood(
    data: &SurveillanceSeries,
    traj: &Trajectory,
    obs: &ObservationParams,
    floor: f64,
) -> Result<LogLikelihood, ModelError> {
    let inc = bin_increments(data, traj)?;
    let mut value = 0.0;
    let mut floored = 0;
    for l in 0..data.len() {
        let mu_d = obs.rho * obs.pop_size * inc.d_ipd[l];
        value += nb_log_pmf(data.deaths[l], mu_d, obs.phi);
        if data.tests[l] > 0 {
            let (mu_c, was_floored) =
                mean_positivity_floored(inc.d_ieip[l], obs.alpha0, obs.alpha1, floor);
            if was_floored {
                floored += 1;
            }
            value += beta_binomial_log_pmf(
                data.cases[l],
                data.tests[l],
                obs.kappa * mu_c,
                obs.kappa * (1.0 - mu_c),
            );
        }
        if value == f64::NEG_INFINITY {
            break;
        }
    }
    Ok(LogLikelihood { value, floored_bins: floored })
}

/// Canonical order of the thirteen free parameters of the test-aware model.
/// The first eight are the ODE parameters, matching [`FIT_SENS`].
pub const TEST_AWARE_DIM: usize = 13;
/// Canonical dimension of the model without test counts (the three
/// positivity parameters are replaced by `rho_c`, `phi_c`).
pub const NO_TESTS_DIM: usize = 12;

const IDX_RHO: usize = 8;
const IDX_PHI: usize = 9;
const IDX_ALPHA0: usize = 10;
const IDX_ALPHA1: usize = 11;
const IDX_KAPPA: usize = 12;
const IDX_RHO_C: usize = 10;
const IDX_PHI_C: usize = 11;

fn require_fit_sens(traj: &Trajectory) -> Result<(), ModelError> {
    if traj.sens_params.as_slice() != FIT_SENS.as_slice() {
        return Err(ModelError::MissingSensitivities(
            "the eight fitting parameters (solve with FIT_SENS)".into(),
        ));
    }
    Ok(())
}

/// Gradient of [`log_likelihood`] over all thirteen parameters in canonical
/// order. The trajectory must carry sensitivities for [`FIT_SENS`].
pub fn log_likelihood_gradient(
    data: &SurveillanceSeries,
    traj: &Trajectory,
    obs: &ObservationParams,
    floor: f64,
) -> Result<(LogLikelihood, Vec<f64>), ModelError> {
    require_fit_sens(traj)?;
    let inc = bin_increments(data, traj)?;
    let n_ode = FIT_SENS.len();
    let mut value = 0.0;
    let mut floored = 0;
    let mut grad = vec![0.0; TEST_AWARE_DIM];

    for l in 0..data.len() {
        // Deaths: negative binomial in rho * N * dN_IpD.
        let dn_d = inc.d_ipd[l];
        let mu_d = obs.rho * obs.pop_size * dn_d;
        let (lp_d, d_mu, d_phi) = nb_log_pmf_grad(data.deaths[l], mu_d, obs.phi);
        value += lp_d;
        if !lp_d.is_finite() {
            return Ok((
                LogLikelihood { value: f64::NEG_INFINITY, floored_bins: floored },
                vec![0.0; TEST_AWARE_DIM],
            ));
        }
        grad[IDX_RHO] += d_mu * obs.pop_size * dn_d;
        grad[IDX_PHI] += d_phi;
        for j in 0..n_ode {
            let ds = traj.sensitivity(l + 1, j)[IDX_N_IPD] - traj.sensitivity(l, j)[IDX_N_IPD];
            grad[j] += d_mu * obs.rho * obs.pop_size * ds;
        }

        // Cases: beta-binomial in the tests with positivity tied to dN_IeIp.
        if data.tests[l] == 0 {
            continue;
        }
        let (mu_c, was_floored) =
            mean_positivity_floored(inc.d_ieip[l], obs.alpha0, obs.alpha1, floor);
        if was_floored {
            floored += 1;
        }
        let a = obs.kappa * mu_c;
        let b = obs.kappa * (1.0 - mu_c);
        let (lp_c, d_a, d_b) = beta_binomial_log_pmf_grad(data.cases[l], data.tests[l], a, b);
        value += lp_c;
        if !lp_c.is_finite() {
            return Ok((
                LogLikelihood { value: f64::NEG_INFINITY, floored_bins: floored },
                vec![0.0; TEST_AWARE_DIM],
            ));
        }
        let d_mu_c = obs.kappa * (d_a - d_b);
        grad[IDX_KAPPA] += mu_c * d_a + (1.0 - mu_c) * d_b;
        let dmc_dlogodds = mu_c * (1.0 - mu_c);
        grad[IDX_ALPHA0] += d_mu_c * dmc_dlogodds;
        let dn_c = inc.d_ieip[l].max(floor);
        grad[IDX_ALPHA1] += d_mu_c * dmc_dlogodds * logit(dn_c);
        if !was_floored {
            // d mu_c / d dN: clamped bins contribute no incidence gradient.
            let d_dn = d_mu_c * dmc_dlogodds * obs.alpha1 / (dn_c * (1.0 - dn_c));
            for j in 0..n_ode {
                let ds =
                    traj.sensitivity(l + 1, j)[IDX_N_IEIP] - traj.sensitivity(l, j)[IDX_N_IEIP];
                grad[j] += d_dn * ds;
            }
        }
    }
    Ok((LogLikelihood { value, floored_bins: floored }, grad))
}

/// Joint log-likelihood for the model without test counts: deaths as in the
/// test-aware model, cases as a negative binomial in `rho_c * N * dN_IeIp`.
pub fn log_likelihood_no_tests(
    data: &SurveillanceSeries,
    traj: &Trajectory,
    rho: f64,
    phi: f64,
    cases: &NoTestsParams,
    pop_size: f64,
) -> Result<LogLikelihood, ModelError> {
    let inc = bin_increments(data, traj)?;
    let mut value = 0.0;
    for l in 0..data.len() {
        value += nb_log_pmf(data.deaths[l], rho * pop_size * inc.d_ipd[l], phi);
        value += nb_log_pmf(data.cases[l], cases.rho_c * pop_size * inc.d_ieip[l], cases.phi_c);
        if value == f64::NEG_INFINITY {
            break;
        }
    }
    Ok(LogLikelihood { value, floored_bins: 0 })
}

/// Gradient of [`log_likelihood_no_tests`] over the twelve parameters in
/// canonical order (eight ODE parameters, then `rho`, `phi`, `rho_c`,
/// `phi_c`).
pub fn log_likelihood_no_tests_gradient(
    data: &SurveillanceSeries,
    traj: &Trajectory,
    rho: f64,
    phi: f64,
    cases: &NoTestsParams,
    pop_size: f64,
) -> Result<(LogLikelihood, Vec<f64>), ModelError> {
    require_fit_sens(traj)?;
    let inc = bin_increments(data, traj)?;
    let n_ode = FIT_SENS.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; NO_TESTS_DIM];

    for l in 0..data.len() {
        for (count, dn, idx_n, rate, disp, idx_rate, idx_disp) in [
            (data.deaths[l], inc.d_ipd[l], IDX_N_IPD, rho, phi, IDX_RHO, IDX_PHI),
            (
                data.cases[l],
                inc.d_ieip[l],
                IDX_N_IEIP,
                cases.rho_c,
                cases.phi_c,
                IDX_RHO_C,
                IDX_PHI_C,
            ),
        ] {
            let mu = rate * pop_size * dn;
            let (lp, d_mu, d_phi) = nb_log_pmf_grad(count, mu, disp);
            value += lp;
            if !lp.is_finite() {
                return Ok((
                    LogLikelihood { value: f64::NEG_INFINITY, floored_bins: 0 },
                    vec![0.0; NO_TESTS_DIM],
                ));
            }
            grad[idx_rate] += d_mu * pop_size * dn;
            grad[idx_disp] += d_phi;
            for j in 0..n_ode {
                let ds = traj.sensitivity(l + 1, j)[idx_n] - traj.sensitivity(l, j)[idx_n];
                grad[j] += d_mu * rate * pop_size * ds;
            }
        }
    }
    Ok((LogLikelihood { value, floored_bins: 0 }, grad))
}

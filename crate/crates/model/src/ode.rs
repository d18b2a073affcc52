//! Fixed-step integration of the transmission ODEs with optional forward
//! parameter sensitivities.
//!
//! The integrated system tracks the six prevalence compartments together
//! with the five cumulative transition fractions, eleven equations total.
//! Sensitivities are propagated by augmenting the system with
//! `d/dt (dx/dtheta) = (df/dx) (dx/dtheta) + df/dtheta` and integrating the
//! augmented state with the same classical 4th-order Runge-Kutta scheme.
//! Because the step sequence is deterministic and shared, the integrated
//! sensitivities are exactly the derivatives of the discretized trajectory,
//! which is what gradient-based sampling differentiates.

use crate::compartments::{
    initial_state, CompartmentState, CumulativeTransitions, InitParams, RateParams,
};
use crate::error::ModelError;

/// Number of integrated components: S, E, I_e, I_p, R, D and the five
/// cumulative transitions.
pub const N_COMPONENTS: usize = 11;

pub const IDX_S: usize = 0;
pub const IDX_E: usize = 1;
pub const IDX_IE: usize = 2;
pub const IDX_IP: usize = 3;
pub const IDX_R: usize = 4;
pub const IDX_D: usize = 5;
pub const IDX_N_SE: usize = 6;
pub const IDX_N_EIE: usize = 7;
pub const IDX_N_IEIP: usize = 8;
pub const IDX_N_IPR: usize = 9;
pub const IDX_N_IPD: usize = 10;

/// Parameters a solve can carry sensitivities for.
///
/// The natural-rate variants (`Beta`, `Gamma`, `NuE`, `NuP`) differentiate
/// with respect to the raw ODE rates. The duration/reproduction variants
/// (`R0`, `InvGamma`, `InvNuE`, `InvNuP`) differentiate in the fitting
/// parameterization, where the infection rate is a function of `R0` and the
/// mean stage durations; e.g. `InvNuE` perturbs `1/nu_e` holding `R0` (not
/// `beta`) fixed. Initial-condition variants differentiate with respect to
/// the initial-fraction parameterization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensParam {
    Beta,
    Gamma,
    NuE,
    NuP,
    Eta,
    R0,
    InvGamma,
    InvNuE,
    InvNuP,
    S0,
    ITilde0,
    IeTilde0,
}

impl SensParam {
    pub fn label(&self) -> &'static str {
        match self {
            SensParam::Beta => "beta",
            SensParam::Gamma => "gamma",
            SensParam::NuE => "nu_e",
            SensParam::NuP => "nu_p",
            SensParam::Eta => "eta",
            SensParam::R0 => "R0",
            SensParam::InvGamma => "inv_gamma",
            SensParam::InvNuE => "inv_nu_e",
            SensParam::InvNuP => "inv_nu_p",
            SensParam::S0 => "S0",
            SensParam::ITilde0 => "I_tilde0",
            SensParam::IeTilde0 => "Ie_tilde0",
        }
    }
}

/// Sensitivity set used when fitting: the eight parameters that enter the
/// ODE in the sampling parameterization, in canonical parameter order.
pub const FIT_SENS: [SensParam; 8] = [
    SensParam::S0,
    SensParam::ITilde0,
    SensParam::IeTilde0,
    SensParam::R0,
    SensParam::InvGamma,
    SensParam::InvNuE,
    SensParam::InvNuP,
    SensParam::Eta,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Upper bound on the internal substep, in weeks.
    pub max_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_step: 0.01 }
    }
}

/// Time-gridded solution, with compartment fractions and cumulative
/// transitions at every grid point, plus optional sensitivities.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CompartmentState>,
    pub cumulative: Vec<CumulativeTransitions>,
    pub sens_params: Vec<SensParam>,
    /// Flattened as `[point][param][component]`.
    sens: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn has_sensitivities(&self) -> bool {
        !self.sens_params.is_empty()
    }

    /// Sensitivity of all eleven components with respect to
    /// `sens_params[param]` at one grid point.
    pub fn sensitivity(&self, point: usize, param: usize) -> &[f64] {
        let k = self.sens_params.len();
        let base = (point * k + param) * N_COMPONENTS;
        &self.sens[base..base + N_COMPONENTS]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.times.is_empty() {
            return Err(ModelError::InvalidGrid("empty trajectory".into()));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(ModelError::InvalidGrid(format!(
                    "grid not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        let slack = 1e-10;
        for (i, x) in self.states.iter().enumerate() {
            x.validate()?;
            self.cumulative[i].validate_ordering()?;
            if i > 0 {
                let prev = self.cumulative[i - 1].as_array();
                let cur = self.cumulative[i].as_array();
                for c in 0..5 {
                    if cur[c] < prev[c] - slack {
                        return Err(ModelError::InvalidParam {
                            name: "cumulative_transitions",
                            reason: format!(
                                "component {c} decreases between grid points {} and {i}",
                                i - 1
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Solve the transmission ODEs on `grid` (strictly increasing, in weeks)
/// starting from `init` at `grid[0]`.
pub fn solve(
    init: &InitParams,
    rates: &RateParams,
    grid: &[f64],
    opts: &SolveOptions,
) -> Result<Trajectory, ModelError> {
    integrate(init, rates, grid, &[], opts)
}

/// As [`solve`], additionally propagating forward sensitivities with respect
/// to each parameter in `wrt`.
pub fn solve_with_sensitivities(
    init: &InitParams,
    rates: &RateParams,
    grid: &[f64],
    wrt: &[SensParam],
    opts: &SolveOptions,
) -> Result<Trajectory, ModelError> {
    integrate(init, rates, grid, wrt, opts)
}

struct Rhs<'a> {
    p: &'a RateParams,
    wrt: &'a [SensParam],
    /// `1 / (1/nu_e + delta/nu_p)`, the factor mapping R0 to beta.
    beta_per_r0: f64,
}

impl Rhs<'_> {
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let p = self.p;
        let (s, e, i_e, i_p) = (y[IDX_S], y[IDX_E], y[IDX_IE], y[IDX_IP]);
        // force of infection without beta, reused by the R0-family partials
        let foi = (i_e + p.delta * i_p) * s;
        let l1 = p.beta * foi;
        let l2 = p.gamma * e;
        let l3 = p.nu_e * i_e;
        let l4 = (1.0 - p.eta) * p.nu_p * i_p;
        let l5 = p.eta * p.nu_p * i_p;
        write_flows(&mut dy[..N_COMPONENTS], l1, l2, l3, l4, l5);

        for (k, param) in self.wrt.iter().enumerate() {
            let sv = &y[N_COMPONENTS * (1 + k)..N_COMPONENTS * (2 + k)];
            // Jacobian-vector product of the rate vector.
            let mut d1 = p.beta * (i_e + p.delta * i_p) * sv[IDX_S]
                + p.beta * s * sv[IDX_IE]
                + p.beta * p.delta * s * sv[IDX_IP];
            let mut d2 = p.gamma * sv[IDX_E];
            let mut d3 = p.nu_e * sv[IDX_IE];
            let mut d4 = (1.0 - p.eta) * p.nu_p * sv[IDX_IP];
            let mut d5 = p.eta * p.nu_p * sv[IDX_IP];
            // Direct partials of the rates with respect to the parameter.
            match param {
                SensParam::Beta => d1 += foi,
                SensParam::Gamma => d2 += e,
                SensParam::NuE => d3 += i_e,
                SensParam::NuP => {
                    d4 += (1.0 - p.eta) * i_p;
                    d5 += p.eta * i_p;
                }
                SensParam::Eta => {
                    d4 += -p.nu_p * i_p;
                    d5 += p.nu_p * i_p;
                }
                SensParam::R0 => d1 += self.beta_per_r0 * foi,
                SensParam::InvGamma => d2 += -p.gamma * p.gamma * e,
                SensParam::InvNuE => {
                    d1 += -p.beta * self.beta_per_r0 * foi;
                    d3 += -p.nu_e * p.nu_e * i_e;
                }
                SensParam::InvNuP => {
                    d1 += -p.delta * p.beta * self.beta_per_r0 * foi;
                    d4 += -(1.0 - p.eta) * p.nu_p * p.nu_p * i_p;
                    d5 += -p.eta * p.nu_p * p.nu_p * i_p;
                }
                SensParam::S0 | SensParam::ITilde0 | SensParam::IeTilde0 => {}
            }
            let dst = &mut dy[N_COMPONENTS * (1 + k)..N_COMPONENTS * (2 + k)];
            write_flows(dst, d1, d2, d3, d4, d5);
        }
    }
}

#[inline]
fn write_flows(dst: &mut [f64], l1: f64, l2: f64, l3: f64, l4: f64, l5: f64) {
    dst[IDX_S] = -l1;
    dst[IDX_E] = l1 - l2;
    dst[IDX_IE] = l2 - l3;
    dst[IDX_IP] = l3 - l4 - l5;
    dst[IDX_R] = l4;
    dst[IDX_D] = l5;
    dst[IDX_N_SE] = l1;
    dst[IDX_N_EIE] = l2;
    dst[IDX_N_IEIP] = l3;
    dst[IDX_N_IPR] = l4;
    dst[IDX_N_IPD] = l5;
}

/// Initial condition of the sensitivity column for `param`.
fn sensitivity_init(param: SensParam, init: &InitParams) -> [f64; N_COMPONENTS] {
    let mut s = [0.0; N_COMPONENTS];
    let infected = 1.0 - init.s0;
    match param {
        SensParam::S0 => {
            s[IDX_S] = 1.0;
            s[IDX_E] = -(1.0 - init.i_tilde0);
            s[IDX_IE] = -init.ie_tilde0 * init.i_tilde0;
            s[IDX_IP] = -(1.0 - init.ie_tilde0) * init.i_tilde0;
        }
        SensParam::ITilde0 => {
            s[IDX_E] = -infected;
            s[IDX_IE] = init.ie_tilde0 * infected;
            s[IDX_IP] = (1.0 - init.ie_tilde0) * infected;
        }
        SensParam::IeTilde0 => {
            s[IDX_IE] = init.i_tilde0 * infected;
            s[IDX_IP] = -init.i_tilde0 * infected;
        }
        _ => {}
    }
    s
}

fn integrate(
    init: &InitParams,
    rates: &RateParams,
    grid: &[f64],
    wrt: &[SensParam],
    opts: &SolveOptions,
) -> Result<Trajectory, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::InvalidGrid("grid must contain at least t0".into()));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(ModelError::InvalidGrid(format!(
                "grid not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
    }
    if !(opts.max_step > 0.0) || !opts.max_step.is_finite() {
        return Err(ModelError::InvalidGrid(format!(
            "max_step must be positive and finite, got {}",
            opts.max_step
        )));
    }

    let x0 = initial_state(init)?;
    let k = wrt.len();
    let n = N_COMPONENTS * (1 + k);

    let mut y = vec![0.0; n];
    y[..6].copy_from_slice(&x0.as_array());
    for (j, param) in wrt.iter().enumerate() {
        let s0 = sensitivity_init(*param, init);
        y[N_COMPONENTS * (1 + j)..N_COMPONENTS * (2 + j)].copy_from_slice(&s0);
    }

    let rhs = Rhs {
        p: rates,
        wrt,
        beta_per_r0: 1.0 / (1.0 / rates.nu_e + rates.delta / rates.nu_p),
    };

    let n_points = grid.len();
    let mut traj = Trajectory {
        times: grid.to_vec(),
        states: Vec::with_capacity(n_points),
        cumulative: Vec::with_capacity(n_points),
        sens_params: wrt.to_vec(),
        sens: Vec::with_capacity(n_points * k * N_COMPONENTS),
    };
    record_point(&mut traj, &y, k, grid[0])?;

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for seg in 0..n_points - 1 {
        let (t_start, t_end) = (grid[seg], grid[seg + 1]);
        let dt = t_end - t_start;
        let n_sub = (dt / opts.max_step).ceil().max(1.0) as usize;
        let h = dt / n_sub as f64;
        for _ in 0..n_sub {
            rhs.eval(&y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            rhs.eval(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            rhs.eval(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            rhs.eval(&tmp, &mut k4);
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        record_point(&mut traj, &y, k, t_end)?;
    }

    Ok(traj)
}

fn record_point(traj: &mut Trajectory, y: &[f64], k: usize, t: f64) -> Result<(), ModelError> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteState { t });
    }
    traj.states.push(CompartmentState {
        s: y[IDX_S],
        e: y[IDX_E],
        i_e: y[IDX_IE],
        i_p: y[IDX_IP],
        r: y[IDX_R],
        d: y[IDX_D],
    });
    traj.cumulative.push(CumulativeTransitions {
        s_to_e: y[IDX_N_SE],
        e_to_ie: y[IDX_N_EIE],
        ie_to_ip: y[IDX_N_IEIP],
        ip_to_r: y[IDX_N_IPR],
        ip_to_d: y[IDX_N_IPD],
    });
    traj.sens
        .extend_from_slice(&y[N_COMPONENTS..N_COMPONENTS * (1 + k)]);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sim_truth() -> (InitParams, RateParams) {
        let init = InitParams {
            s0: 1.0 - 3.1e-3,
            i_tilde0: 0.69,
            ie_tilde0: 0.44,
        };
        let rates = RateParams {
            beta: 0.92 / 1.728,
            delta: 0.8,
            gamma: 1.0 / 0.97,
            nu_e: 1.0 / 0.96,
            nu_p: 1.0 / 0.96,
            eta: 0.0092,
        };
        (init, rates)
    }

    fn bin_grid(n_bins: usize) -> Vec<f64> {
        (0..=n_bins).map(|i| i as f64 * 3.0 / 7.0).collect()
    }

    #[test]
    fn no_transmission_keeps_susceptibles_constant() {
        let (init, mut rates) = sim_truth();
        rates.beta = 0.0;
        let traj = solve(&init, &rates, &bin_grid(12), &SolveOptions::default()).unwrap();
        for (x, n) in traj.states.iter().zip(traj.cumulative.iter()) {
            assert!((x.s - init.s0).abs() < 1e-14);
            assert_eq!(n.s_to_e, 0.0);
        }
    }

    #[test]
    fn conservation_and_monotonicity() {
        let (init, rates) = sim_truth();
        let traj = solve(&init, &rates, &bin_grid(12), &SolveOptions::default()).unwrap();
        traj.validate().unwrap();
        for x in &traj.states {
            assert!((x.sum() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn death_proportional_to_recovery_outflow() {
        let (init, rates) = sim_truth();
        let traj = solve(&init, &rates, &bin_grid(12), &SolveOptions::default()).unwrap();
        let ratio = rates.eta / (1.0 - rates.eta);
        for (x, n) in traj.states.iter().zip(traj.cumulative.iter()) {
            assert!((x.d - ratio * n.ip_to_r).abs() < 1e-8);
        }
    }

    #[test]
    fn flow_balance_identities() {
        let (init, rates) = sim_truth();
        let x0 = initial_state(&init).unwrap();
        let traj = solve(&init, &rates, &bin_grid(12), &SolveOptions::default()).unwrap();
        for (x, n) in traj.states.iter().zip(traj.cumulative.iter()) {
            assert!((x.e - (x0.e + n.s_to_e - n.e_to_ie)).abs() < 1e-8);
            assert!((x.i_e - (x0.i_e + n.e_to_ie - n.ie_to_ip)).abs() < 1e-8);
            assert!((x.i_p - (x0.i_p + n.ie_to_ip - n.ip_to_r - n.ip_to_d)).abs() < 1e-8);
            assert!((x.r - n.ip_to_r).abs() < 1e-8);
            assert!((x.d - n.ip_to_d).abs() < 1e-8);
        }
    }

    #[test]
    fn substep_halving_is_converged() {
        let (init, rates) = sim_truth();
        let grid = bin_grid(12);
        let a = solve(&init, &rates, &grid, &SolveOptions { max_step: 0.01 }).unwrap();
        let b = solve(&init, &rates, &grid, &SolveOptions { max_step: 0.005 }).unwrap();
        let mut sup = 0.0f64;
        for i in 0..grid.len() {
            let (xa, xb) = (a.states[i].as_array(), b.states[i].as_array());
            let (na, nb) = (a.cumulative[i].as_array(), b.cumulative[i].as_array());
            for c in 0..6 {
                sup = sup.max((xa[c] - xb[c]).abs());
            }
            for c in 0..5 {
                sup = sup.max((na[c] - nb[c]).abs());
            }
        }
        assert!(sup < 1e-8, "halving the substep moved the solution by {sup:e}");
    }

    #[test]
    fn beta_sensitivity_vanishes_without_infectious_seed() {
        // All initially infected still latent: dS/dbeta stays 0 only if the
        // epidemic never starts, so also set beta = 0.
        let init = InitParams {
            s0: 0.999,
            i_tilde0: 1e-12,
            ie_tilde0: 0.5,
        };
        let mut rates = sim_truth().1;
        rates.beta = 0.0;
        let traj = solve_with_sensitivities(
            &init,
            &rates,
            &bin_grid(12),
            &[SensParam::Beta],
            &SolveOptions::default(),
        )
        .unwrap();
        for point in 0..traj.len() {
            let s = traj.sensitivity(point, 0);
            assert!(s[IDX_S].abs() < 1e-12, "dS/dbeta = {} at {point}", s[IDX_S]);
        }
    }

    #[test]
    fn sensitivities_conserve_total_mass() {
        let (init, rates) = sim_truth();
        let traj = solve_with_sensitivities(
            &init,
            &rates,
            &bin_grid(12),
            &FIT_SENS,
            &SolveOptions::default(),
        )
        .unwrap();
        for point in 0..traj.len() {
            for param in 0..FIT_SENS.len() {
                let s = traj.sensitivity(point, param);
                let total: f64 = s[..6].iter().sum();
                assert!(
                    total.abs() < 1e-8,
                    "d(sum X)/d{} = {total:e} at point {point}",
                    FIT_SENS[param].label()
                );
            }
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let (init, rates) = sim_truth();
        assert!(solve(&init, &rates, &[], &SolveOptions::default()).is_err());
        assert!(solve(&init, &rates, &[0.0, 0.0], &SolveOptions::default()).is_err());
        assert!(solve(&init, &rates, &[0.0, -1.0], &SolveOptions::default()).is_err());
        assert!(solve(&init, &rates, &[0.0, 1.0], &SolveOptions { max_step: 0.0 }).is_err());
    }
}

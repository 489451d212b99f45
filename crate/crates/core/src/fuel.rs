//! Fuel burn dynamics, fuel-based priorities, dispatch and starvation penalty.
//!
//! Burn follows `dphi/dt = -(rho + lambda * phi)`, so a heavier (fuller)
//! vehicle burns faster. In `Simple` mode every move or hold costs one unit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FuelMode {
    Simple,
    #[default]
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuelParameters {
    pub rho: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub tank: f64,
    pub penalty_fixed: f64,
    /// Extra hops added to the distance used by the variable part of the
    /// starvation penalty. Zero is the plain definition.
    pub penalty_extra_hops: u32,
    pub mode: FuelMode,
}

impl Default for FuelParameters {
    fn default() -> Self {
        FuelParameters {
            rho: 1.0,
            lambda: 0.02,
            epsilon: 1.0,
            tank: 5.0,
            penalty_fixed: 2.0,
            penalty_extra_hops: 0,
            mode: FuelMode::Ode,
        }
    }
}

impl FuelParameters {
    /// Unit-cost fuel model with the given tank.
    pub fn simple(tank: f64) -> Self {
        FuelParameters { mode: FuelMode::Simple, tank, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.rho > 0.0) {
            return bad("rho must be > 0");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be >= 0");
        }
        if !(self.tank > 0.0) {
            return bad("tank must be > 0");
        }
        if !(self.penalty_fixed >= 0.0) {
            return bad("penalty_fixed must be >= 0");
        }
        Ok(())
    }

    /// Fuel left after flying for `t` time units, clamped at zero.
    pub fn fuel_at(&self, phi0: f64, t: f64) -> f64 {
        let phi = match self.mode {
            FuelMode::Simple => phi0 - t,
            FuelMode::Ode if self.lambda == 0.0 => phi0 - self.rho * t,
            FuelMode::Ode => {
                let k = self.rho / self.lambda;
                (phi0 + k) * (-self.lambda * t).exp() - k
            }
        };
        phi.max(0.0)
    }

    /// Fuel consumed by one unit-time step starting with `phi`.
    pub fn step_burn(&self, phi: f64) -> f64 {
        phi - self.fuel_at(phi, 1.0)
    }

    /// Unclamped burn of one step, i.e. the fuel a step would need.
    pub fn step_need(&self, phi: f64) -> f64 {
        match self.mode {
            FuelMode::Simple => 1.0,
            FuelMode::Ode if self.lambda == 0.0 => self.rho,
            FuelMode::Ode => {
                let k = self.rho / self.lambda;
                (phi + k) * (1.0 - (-self.lambda).exp())
            }
        }
    }

    /// Minimum initial fuel that lasts exactly `t_min` time units.
    pub fn min_fuel(&self, t_min: f64) -> f64 {
        match self.mode {
            FuelMode::Simple => t_min,
            FuelMode::Ode if self.lambda == 0.0 => self.rho * t_min,
            FuelMode::Ode => self.rho / self.lambda * (self.lambda * t_min).exp_m1(),
        }
    }

    pub fn min_fuel_hops(&self, hops: u32) -> f64 {
        self.min_fuel(f64::from(hops))
    }

    /// Priority from spare fuel: `w = (max(0, phi - phi*) / (tank - phi*))^eps`.
    pub fn priority_from_fuel(&self, phi: f64, phi_star: f64) -> Result<f64> {
        self.check_star(phi_star)?;
        let spare = (phi - phi_star).max(0.0) / (self.tank - phi_star);
        Ok(spare.powf(self.epsilon).clamp(0.0, 1.0))
    }

    /// Initial fuel for a dispatch priority `w0` (inverse of the priority rule at eps = 1).
    pub fn dispatch_fuel(&self, w0: f64, phi_star0: f64) -> Result<f64> {
        self.check_star(phi_star0)?;
        let w = w0.clamp(0.0, 1.0);
        let frac = if self.epsilon == 1.0 || w == 0.0 { w } else { w.powf(1.0 / self.epsilon) };
        Ok((phi_star0 + frac * (self.tank - phi_star0)).min(self.tank))
    }

    /// Penalty charged when a vehicle starves `hops` away from its destination.
    pub fn starvation_penalty(&self, hops: u32) -> f64 {
        self.penalty_fixed + self.min_fuel_hops(hops + self.penalty_extra_hops)
    }

    fn check_star(&self, phi_star: f64) -> Result<()> {
        if phi_star >= self.tank || phi_star < 0.0 {
            Err(Error::MissionInfeasible { phi_star, tank: self.tank })
        } else {
            Ok(())
        }
    }
}

/// Physical inputs behind `lambda` and `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreguetInputs {
    pub m_min: f64,
    pub g: f64,
    pub sfc: f64,
    pub lift_drag: f64,
}

/// Maps Breguet quantities to `(lambda, rho)`, with `rho` as a positive magnitude.
pub fn breguet_params(b: &BreguetInputs) -> Result<(f64, f64)> {
    if [b.m_min, b.g, b.sfc, b.lift_drag].iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidParameter("Breguet inputs must be strictly positive".into()));
    }
    let lambda = b.g * b.sfc / b.lift_drag;
    Ok((lambda, b.m_min * lambda))
}

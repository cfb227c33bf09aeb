//! Universal lower bound on the time-average on-demand AoCSI.

use crate::error::{Error, Result};

/// Inputs of [`theta_lower_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Clipped mean arrival rate.
    pub lambda: f64,
    pub request_prob: f64,
    pub channel_success: f64,
    pub max_aocsi: u32,
}

/// Smallest channel success probability for which the bound holds,
/// `1 / (max_aocsi - 1/2)`.
pub fn admissible_channel_success(max_aocsi: u32) -> f64 {
    1.0 / (max_aocsi as f64 - 0.5)
}

/// Extra age accumulated over an `x`-slot block that starts with a
/// successful update.
pub fn chi0(x: f64, max_aocsi: u32) -> Result<f64> {
    if !(x >= 1.0) {
        return Err(Error::Parameter(format!("chi0 needs x >= 1 (got {x})")));
    }
    let dl = max_aocsi as f64;
    Ok(if x <= dl {
        x * x + x - 2.0
    } else {
        2.0 * dl * x - dl * dl + dl - 2.0
    })
}

/// Convex, continuously differentiable minorant of [`chi0`].
pub fn chi1(x: f64, max_aocsi: u32) -> f64 {
    let dl = max_aocsi as f64;
    if x <= dl - 0.5 {
        x * x + x - 2.0
    } else {
        2.0 * dl * x - dl * dl + dl - 2.25
    }
}

/// Arrival rate separating the two branches of the bound.
pub fn lambda0(request_prob: f64, channel_success: f64, max_aocsi: u32) -> Result<f64> {
    let denom = (max_aocsi as f64 - 0.5) * channel_success + 1.0 / request_prob - 1.0;
    if !(denom > 0.0) {
        return Err(Error::Parameter(format!("lambda0 denominator {denom} is not positive")));
    }
    Ok(1.0 / denom)
}

fn check(inputs: &BoundInputs) -> Result<()> {
    let BoundInputs { lambda, request_prob: eta, channel_success: xi, max_aocsi } = *inputs;
    if max_aocsi < 2 {
        return Err(Error::Parameter("max_aocsi must be at least 2".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Parameter(format!("request_prob {eta} must be in (0, 1]")));
    }
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::Parameter(format!("channel_success {xi} must be in (0, 1]")));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Parameter(format!("lambda {lambda} must be nonnegative")));
    }
    let threshold = admissible_channel_success(max_aocsi);
    if xi < threshold {
        return Err(Error::Admissibility { xi, threshold });
    }
    Ok(())
}

/// Branch used when `lambda >= lambda0`.
pub fn theta_high_rate(inputs: &BoundInputs) -> f64 {
    let BoundInputs { lambda, request_prob: eta, channel_success: xi, .. } = *inputs;
    let m = lambda.min(eta);
    eta / 2.0 + eta / (2.0 * xi * m) - (1.0 - eta) / xi * (1.0 - m / (2.0 * eta))
}

/// Branch used when `lambda < lambda0`.
pub fn theta_low_rate(inputs: &BoundInputs) -> f64 {
    let BoundInputs { lambda, request_prob: eta, channel_success: xi, max_aocsi } = *inputs;
    let dl = max_aocsi as f64;
    eta * (dl - lambda * xi / 2.0 * (dl - 0.5).powi(2))
        - lambda * (1.0 - eta) * (dl - 1.0 / (2.0 * xi) - 0.5)
}

/// Lower bound `Theta(lambda, eta, xi)` valid for every policy.
pub fn theta_lower_bound(inputs: &BoundInputs) -> Result<f64> {
    check(inputs)?;
    let l0 = lambda0(inputs.request_prob, inputs.channel_success, inputs.max_aocsi)?;
    Ok(if inputs.lambda >= l0 {
        theta_high_rate(inputs)
    } else {
        theta_low_rate(inputs)
    })
}

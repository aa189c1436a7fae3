//! Effective gains, SINRs and achievable rates under equal-gain combining.

use crate::channel::EffectiveChannel;
use crate::{Error, Result};

/// Per-user link quality for one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// `g_k = || p_k H~ h~_k ||^2`.
    pub gains: Vec<f64>,
    pub sinrs: Vec<f64>,
    /// `log2(1 + sinr)`, bits/s/Hz.
    pub rates: Vec<f64>,
    /// Weakest user; ties go to the lowest index.
    pub min_index: usize,
    pub min_rate: f64,
}

impl RateReport {
    /// Builds the report from precomputed gains.
    ///
    /// The SINR denominator is formed as `(sigma2 + sum) - g_k`, which is
    /// monotone in `g_k` under rounding, so the SINR ordering reproduces the
    /// gain ordering bit for bit.
    pub fn from_gains(gains: Vec<f64>, sigma2: f64) -> Self {
        let total = sigma2 + gains.iter().sum::<f64>();
        let sinrs: Vec<f64> = gains.iter().map(|g| g / (total - g)).collect();
        let rates: Vec<f64> = sinrs.iter().map(|s| (1.0 + s).log2()).collect();
        let min_index = argmin(&rates);
        let min_rate = rates[min_index];
        Self {
            gains,
            sinrs,
            rates,
            min_index,
            min_rate,
        }
    }

    pub fn min_gain(&self) -> f64 {
        self.gains.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Index of the smallest entry, lowest index on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// `|| p_k H~ h~_k ||^2`.
pub fn effective_gain(channel: &EffectiveChannel, k: usize, power: f64) -> Result<f64> {
    let link = channel.user_links.get(k).ok_or(Error::UserIndex {
        index: k,
        users: channel.users(),
    })?;
    Ok(power * power * (&channel.relay_bs_scaled * link).norm_squared())
}

/// Gains of all users.
pub fn gains(channel: &EffectiveChannel, powers: &[f64]) -> Vec<f64> {
    channel
        .user_links
        .iter()
        .zip(powers)
        .map(|(h, p)| p * p * (&channel.relay_bs_scaled * h).norm_squared())
        .collect()
}

/// `g_k / (sigma2 + sum_{i != k} g_i)`.
pub fn sinr(channel: &EffectiveChannel, k: usize, powers: &[f64], sigma2: f64) -> Result<f64> {
    if k >= channel.users() {
        return Err(Error::UserIndex {
            index: k,
            users: channel.users(),
        });
    }
    Ok(RateReport::from_gains(gains(channel, powers), sigma2).sinrs[k])
}

pub fn rate_report(channel: &EffectiveChannel, powers: &[f64], sigma2: f64) -> RateReport {
    RateReport::from_gains(gains(channel, powers), sigma2)
}

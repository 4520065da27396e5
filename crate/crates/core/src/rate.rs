//! Closed-form per-user rate bounds for ZF reception with channel-inversion
//! power control, and the sum-rate objective built on the lower bound.
//!
//! Every function accepts real-valued antenna and user counts so the same
//! formulas serve the relaxed allocator and the closed-form analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{users_per_sector, CellConfig, SectorView, ZoneProfile};

fn positive_part(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `log2(1 + B γ0 (N_b − Q_b + 1)⁺)`.
pub fn rate_upper(antennas: f64, users: f64, sectors: f64, snr0: f64) -> f64 {
    (1.0 + sectors * snr0 * positive_part(antennas - users + 1.0)).log2()
}

/// `log2(1 + B γ0 (N_b − Q_b)⁺)`. This is the design rate everywhere else.
pub fn rate_lower(antennas: f64, users: f64, sectors: f64, snr0: f64) -> f64 {
    (1.0 + sectors * snr0 * positive_part(antennas - users)).log2()
}

/// Sum of `Q_b · rate_lower` over sectors. Empty sectors contribute zero.
pub fn sum_rate(antennas: &[f64], users: &[f64], snr0: f64) -> f64 {
    let sectors = users.len() as f64;
    antennas
        .iter()
        .zip(users)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&n, &q)| q * rate_lower(n, q, sectors, snr0))
        .sum()
}

/// Antennas sector `b` needs so that its users reach `min_rate`:
/// `Q_b + (2^r̄ − 1) / (B γ0)`.
pub fn min_antennas(users: f64, min_rate: f64, sectors: f64, snr0: f64) -> f64 {
    users + (min_rate.exp2() - 1.0) / (sectors * snr0)
}

/// Largest common minimum rate any allocation can guarantee:
/// `log2(1 + γ0 (N − K))`, or 0 when `N ≤ K`.
pub fn max_min_rate(total_antennas: f64, total_users: f64, snr0: f64) -> f64 {
    rate_lower(total_antennas, total_users, 1.0, snr0)
}

/// Fails when `min_rate` exceeds [`max_min_rate`].
pub fn check_min_rate(total_antennas: f64, total_users: f64, snr0: f64, min_rate: f64) -> Result<()> {
    let bound = max_min_rate(total_antennas, total_users, snr0);
    if min_rate > 0.0 && total_users >= total_antennas {
        return Err(Error::infeasible(
            format!(
                "{total_users} users need more than the {total_antennas} antennas available \
                 to guarantee any positive rate"
            ),
            Some(total_users - total_antennas),
        ));
    }
    // Tolerance keeps r̄ = r̄_max itself feasible despite rounding in log2.
    if min_rate > bound * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::infeasible(
            format!(
                "minimum rate {min_rate} bps/Hz exceeds the largest guaranteeable rate \
                 log2(1 + γ0 (N − K)) = {bound:.6} bps/Hz"
            ),
            None,
        ));
    }
    Ok(())
}

/// Per-sector and total rates of one allocation at one rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rotation_index: u32,
    pub antennas: Vec<f64>,
    pub users: Vec<f64>,
    /// Per-user lower-bound rate of each sector.
    pub rate_lower: Vec<f64>,
    /// Per-user upper-bound rate of each sector.
    pub rate_upper: Vec<f64>,
    /// `Q_b · rate_lower` per sector.
    pub sector_sum: Vec<f64>,
    pub total: f64,
}

/// Evaluates the sum-rate objective for allocation `antennas` at `view`.
pub fn total_sum_rate(
    antennas: &[f64],
    profile: &ZoneProfile,
    view: &SectorView,
    cfg: &CellConfig,
) -> Result<RateReport> {
    let users = users_per_sector(profile, view)?;
    if antennas.len() != users.len() {
        return Err(Error::domain(format!(
            "allocation has {} entries for {} sectors",
            antennas.len(),
            users.len()
        )));
    }
    if antennas.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
        return Err(Error::domain("antenna counts must be finite and nonnegative"));
    }
    Ok(rate_report(view.rotation_index(), antennas, &users, cfg.snr0()))
}

pub(crate) fn rate_report(rotation_index: u32, antennas: &[f64], users: &[f64], snr0: f64) -> RateReport {
    let sectors = users.len() as f64;
    let lower: Vec<f64> = antennas
        .iter()
        .zip(users)
        .map(|(&n, &q)| rate_lower(n, q, sectors, snr0))
        .collect();
    let upper = antennas
        .iter()
        .zip(users)
        .map(|(&n, &q)| rate_upper(n, q, sectors, snr0))
        .collect();
    let sector_sum: Vec<f64> = lower
        .iter()
        .zip(users)
        .map(|(&r, &q)| if q > 0.0 { q * r } else { 0.0 })
        .collect();
    let total = sector_sum.iter().sum();
    RateReport {
        rotation_index,
        antennas: antennas.to_vec(),
        users: users.to_vec(),
        rate_lower: lower,
        rate_upper: upper,
        sector_sum,
        total,
    }
}

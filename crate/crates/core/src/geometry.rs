//! Angular cell geometry: zones, sectors, the common rotation index, and the
//! per-zone user distribution.
//!
//! The cell is cut into `Z` equal azimuth zones numbered counter-clockwise
//! from 1, with zone 1 starting at azimuth 0. `B` sectors of `c = Z / B`
//! zones each tile the circle; the rotation index `z0 ∈ {1..c}` names the
//! first zone of sector 1.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plain parameter bag for [`CellConfig::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub total_antennas: u32,
    pub sectors: u32,
    pub zones: u32,
    /// Cell radius `D` in meters.
    pub cell_radius: f64,
    /// Radius of the antenna track in meters. Carried for bookkeeping only.
    pub track_radius: f64,
    /// Normalized transmit SNR `P0 / δ²`, linear.
    pub snr0: f64,
    /// Per-user minimum rate in bps/Hz.
    pub min_rate: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        CellParams {
            total_antennas: 90,
            sectors: 3,
            zones: 30,
            cell_radius: 100.0,
            track_radius: 0.0,
            snr0: 1.0,
            min_rate: 0.0,
        }
    }
}

/// Validated global scenario parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellConfig {
    params: CellParams,
}

impl CellConfig {
    pub fn new(params: CellParams) -> Result<Self> {
        let p = &params;
        if p.total_antennas == 0 {
            return Err(Error::domain("total antenna count must be at least 1"));
        }
        if p.sectors == 0 {
            return Err(Error::domain("sector count must be at least 1"));
        }
        if p.zones == 0 || !p.zones.is_multiple_of(p.sectors) {
            return Err(Error::domain(format!(
                "zone count {} must be a positive multiple of the sector count {}",
                p.zones, p.sectors
            )));
        }
        if !(p.cell_radius.is_finite() && p.cell_radius > 0.0) {
            return Err(Error::domain("cell radius must be finite and positive"));
        }
        if !(p.track_radius.is_finite() && p.track_radius >= 0.0) {
            return Err(Error::domain("track radius must be finite and nonnegative"));
        }
        if !(p.snr0.is_finite() && p.snr0 > 0.0) {
            return Err(Error::domain("snr0 must be finite and positive"));
        }
        if !(p.min_rate.is_finite() && p.min_rate >= 0.0) {
            return Err(Error::domain("minimum rate must be finite and nonnegative"));
        }
        Ok(CellConfig { params })
    }

    pub fn params(&self) -> CellParams {
        self.params
    }

    pub fn total_antennas(&self) -> u32 {
        self.params.total_antennas
    }

    pub fn sectors(&self) -> u32 {
        self.params.sectors
    }

    pub fn zones(&self) -> u32 {
        self.params.zones
    }

    /// Zones per sector, `c = Z / B`. Also the number of distinct rotations.
    pub fn zones_per_sector(&self) -> u32 {
        self.params.zones / self.params.sectors
    }

    pub fn cell_radius(&self) -> f64 {
        self.params.cell_radius
    }

    pub fn track_radius(&self) -> f64 {
        self.params.track_radius
    }

    pub fn snr0(&self) -> f64 {
        self.params.snr0
    }

    pub fn min_rate(&self) -> f64 {
        self.params.min_rate
    }

    /// Same configuration with a different sector count.
    pub fn with_sectors(&self, sectors: u32) -> Result<Self> {
        CellConfig::new(CellParams {
            sectors,
            ..self.params
        })
    }

    pub fn with_total_antennas(&self, total_antennas: u32) -> Result<Self> {
        CellConfig::new(CellParams {
            total_antennas,
            ..self.params
        })
    }

    pub fn with_min_rate(&self, min_rate: f64) -> Result<Self> {
        CellConfig::new(CellParams {
            min_rate,
            ..self.params
        })
    }
}

/// Expected user count per zone, `K_z`, for zones `1..=Z` (stored 0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneProfile {
    expected_users: Vec<f64>,
}

impl ZoneProfile {
    pub fn from_counts(expected_users: Vec<f64>) -> Result<Self> {
        if expected_users.is_empty() {
            return Err(Error::domain("zone profile needs at least one zone"));
        }
        if let Some(bad) = expected_users.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
            return Err(Error::domain(format!(
                "zone user counts must be finite and nonnegative, got {bad}"
            )));
        }
        let total: f64 = expected_users.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("zone profile has no users"));
        }
        Ok(ZoneProfile { expected_users })
    }

    /// Builds `K_z = ½ ψ D² λ_z` from areal densities.
    pub fn from_densities(densities: &[f64], cell_radius: f64) -> Result<Self> {
        if !(cell_radius.is_finite() && cell_radius > 0.0) {
            return Err(Error::domain("cell radius must be finite and positive"));
        }
        let psi = 2.0 * PI / densities.len().max(1) as f64;
        let counts = densities
            .iter()
            .map(|lambda| 0.5 * psi * cell_radius * cell_radius * lambda)
            .collect();
        ZoneProfile::from_counts(counts)
    }

    /// Same expected count in every zone.
    pub fn uniform(zones: u32, per_zone: f64) -> Result<Self> {
        ZoneProfile::from_counts(vec![per_zone; zones as usize])
    }

    pub fn zones(&self) -> u32 {
        self.expected_users.len() as u32
    }

    pub fn counts(&self) -> &[f64] {
        &self.expected_users
    }

    /// `K_z` for a 1-based zone index.
    pub fn count(&self, zone: u32) -> f64 {
        self.expected_users[(zone - 1) as usize]
    }

    pub fn total_users(&self) -> f64 {
        self.expected_users.iter().sum()
    }

    /// Angular width of one zone, `ψ = 2π / Z`.
    pub fn zone_width(&self) -> f64 {
        2.0 * PI / self.expected_users.len() as f64
    }

    /// Per-zone areal density `λ_z = 2 K_z / (ψ D²)`.
    pub fn densities(&self, cell_radius: f64) -> Vec<f64> {
        let psi = self.zone_width();
        self.expected_users
            .iter()
            .map(|k| 2.0 * k / (psi * cell_radius * cell_radius))
            .collect()
    }

    /// Fails if any zone is empty (the `K_z ≥ 1` modelling assumption).
    pub fn check_zones_occupied(&self) -> Result<()> {
        match self.expected_users.iter().position(|k| *k < 1.0) {
            Some(z) => Err(Error::domain(format!(
                "zone {} has {} expected users, fewer than one",
                z + 1,
                self.expected_users[z]
            ))),
            None => Ok(()),
        }
    }

    /// Fails unless every sector holds at least one user for every rotation.
    pub fn check_sectors_occupied(&self, cfg: &CellConfig) -> Result<()> {
        for z0 in 1..=cfg.zones_per_sector() {
            let view = build_sector_view(cfg, z0)?;
            let q = users_per_sector(self, &view)?;
            if let Some(b) = q.iter().position(|q| *q < 1.0) {
                return Err(Error::domain(format!(
                    "sector {} holds {} expected users at rotation {z0}",
                    b + 1,
                    q[b]
                )));
            }
        }
        Ok(())
    }
}

/// Zone membership of every sector for one rotation index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorView {
    rotation_index: u32,
    zone_sets: Vec<Vec<u32>>,
}

impl SectorView {
    pub fn rotation_index(&self) -> u32 {
        self.rotation_index
    }

    pub fn sectors(&self) -> usize {
        self.zone_sets.len()
    }

    pub fn zones(&self) -> u32 {
        self.zone_sets.iter().map(|s| s.len() as u32).sum()
    }

    /// 1-based zone indices of each sector, counter-clockwise.
    pub fn zone_sets(&self) -> &[Vec<u32>] {
        &self.zone_sets
    }
}

/// 1-based wrap of an arbitrary positive zone number into `1..=zones`.
pub fn wrap_zone(raw: u32, zones: u32) -> u32 {
    (raw - 1) % zones + 1
}

/// Sector view for rotation `z0 ∈ {1..c}`.
pub fn build_sector_view(cfg: &CellConfig, z0: u32) -> Result<SectorView> {
    let c = cfg.zones_per_sector();
    if z0 < 1 || z0 > c {
        return Err(Error::domain(format!(
            "rotation index {z0} outside 1..={c}"
        )));
    }
    Ok(rotated_view(cfg, z0))
}

/// Sector view whose first sector starts at any zone number `first_zone ≥ 1`.
/// Used to probe the rotation periodicity beyond `1..=c`.
///
/// # Panics
///
/// Panics if `first_zone` is 0.
pub fn rotated_view(cfg: &CellConfig, first_zone: u32) -> SectorView {
    assert!(first_zone >= 1, "zone numbers are 1-based");
    let c = cfg.zones_per_sector();
    let z = cfg.zones();
    let zone_sets = (0..cfg.sectors())
        .map(|b| {
            (0..c)
                .map(|i| wrap_zone(first_zone + b * c + i, z))
                .collect()
        })
        .collect();
    SectorView {
        rotation_index: first_zone,
        zone_sets,
    }
}

/// Expected users per sector, `Q_b = Σ_{z ∈ Z_b} K_z`.
pub fn users_per_sector(profile: &ZoneProfile, view: &SectorView) -> Result<Vec<f64>> {
    if profile.zones() != view.zones() {
        return Err(Error::domain(format!(
            "profile has {} zones but the sector view covers {}",
            profile.zones(),
            view.zones()
        )));
    }
    Ok(view
        .zone_sets
        .iter()
        .map(|set| set.iter().map(|&z| profile.count(z)).sum())
        .collect())
}

/// How many users each zone receives when sampling a realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Exactly `round(K_z)` users per zone.
    #[default]
    FixedCount,
    /// Poisson-distributed count with mean `K_z`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserPosition {
    /// Distance from the base station, `0..=D`.
    pub radius: f64,
    /// Azimuth in `[0, 2π)`.
    pub azimuth: f64,
    /// 1-based home zone.
    pub zone: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRealization {
    pub users: Vec<UserPosition>,
    pub seed: u64,
}

impl UserRealization {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Number of sampled users per zone.
    pub fn zone_counts(&self, zones: u32) -> Vec<usize> {
        let mut counts = vec![0; zones as usize];
        for u in &self.users {
            counts[(u.zone - 1) as usize] += 1;
        }
        counts
    }
}

/// Drops users uniformly over each zone's annular sector.
pub fn sample_users(
    profile: &ZoneProfile,
    cfg: &CellConfig,
    seed: u64,
    mode: SamplingMode,
) -> Result<UserRealization> {
    if profile.zones() != cfg.zones() {
        return Err(Error::domain(format!(
            "profile has {} zones, configuration expects {}",
            profile.zones(),
            cfg.zones()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = profile.zone_width();
    let radius = cfg.cell_radius();
    let mut users = Vec::new();
    for (idx, &mean) in profile.counts().iter().enumerate() {
        let count = match mode {
            SamplingMode::FixedCount => mean.round() as u64,
            SamplingMode::Poisson if mean > 0.0 => {
                let dist = Poisson::new(mean).map_err(|e| Error::domain(e.to_string()))?;
                dist.sample(&mut rng) as u64
            }
            SamplingMode::Poisson => 0,
        };
        let zone = idx as u32 + 1;
        for _ in 0..count {
            let r = radius * rng.random::<f64>().sqrt();
            // random() is in [0, 1) so the azimuth never reaches the next zone.
            let azimuth = (idx as f64 + rng.random::<f64>()) * psi;
            users.push(UserPosition {
                radius: r,
                azimuth,
                zone,
            });
        }
    }
    Ok(UserRealization { users, seed })
}

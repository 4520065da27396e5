use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CellConfig, CellParams, SamplingMode, ZoneProfile};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Linear power ratio for a value in dB.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// A complete, file-backed experiment description. SNR is kept in dB as
/// written so that a load/save cycle reproduces the file exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(rename = "N")]
    pub total_antennas: u32,
    #[serde(rename = "B")]
    pub sectors: u32,
    #[serde(rename = "Z")]
    pub zones: u32,
    #[serde(rename = "D")]
    pub cell_radius: f64,
    #[serde(rename = "d", default)]
    pub track_radius: f64,
    #[serde(rename = "gamma0_db")]
    pub snr0_db: f64,
    pub min_rate: f64,
    /// Expected users per zone, zone 1 first.
    #[serde(rename = "zones")]
    pub zone_users: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub sampling: SamplingMode,
    /// Reject profiles with a zone holding fewer than one expected user.
    #[serde(default)]
    pub require_occupied_zones: bool,
    /// Reject profiles where some rotation leaves a sector with fewer than
    /// one expected user.
    #[serde(default)]
    pub require_occupied_sectors: bool,
    #[serde(default)]
    pub notes: String,
}

/// Clustered profile: a dense block of zones plus one user in every other
/// zone outside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub first_zone: u32,
    pub last_zone: u32,
    pub users_per_cluster_zone: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            first_zone: 16,
            last_zone: 25,
            users_per_cluster_zone: 4.0,
        }
    }
}

impl Scenario {
    fn paper_cell(name: &str, zone_users: Vec<f64>, notes: &str) -> Self {
        Scenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: name.to_string(),
            total_antennas: 90,
            sectors: 3,
            zones: 30,
            cell_radius: 100.0,
            track_radius: 0.0,
            snr0_db: 0.0,
            min_rate: 5.0,
            zone_users,
            seed: 1,
            sampling: SamplingMode::FixedCount,
            require_occupied_zones: false,
            require_occupied_sectors: false,
            notes: notes.to_string(),
        }
    }

    /// Quasi-uniform profile: three users per zone in zones 16 to 25, one
    /// elsewhere, 50 in total.
    pub fn quasi_uniform() -> Self {
        let users = (1..=30)
            .map(|z| if (16..=25).contains(&z) { 3.0 } else { 1.0 })
            .collect();
        Scenario::paper_cell("dist1", users, "quasi-uniform: 3 users/zone in zones 16-25, 1 elsewhere")
    }

    /// Clustered profile over 30 zones.
    pub fn clustered(params: ClusterParams) -> Result<Self> {
        let ClusterParams {
            first_zone,
            last_zone,
            users_per_cluster_zone,
        } = params;
        if !(1 <= first_zone && first_zone <= last_zone && last_zone <= 30) {
            return Err(Error::domain(format!(
                "cluster zones {first_zone}..={last_zone} must lie within 1..=30"
            )));
        }
        if !(users_per_cluster_zone.is_finite() && users_per_cluster_zone >= 0.0) {
            return Err(Error::domain("cluster weight must be finite and nonnegative"));
        }
        let users = (1..=30u32)
            .map(|z| {
                if (first_zone..=last_zone).contains(&z) {
                    users_per_cluster_zone
                } else if z % 2 == 1 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Scenario::paper_cell(
            "dist2",
            users,
            &format!(
                "clustered: {users_per_cluster_zone} users/zone in zones {first_zone}-{last_zone}, \
                 1 user in each odd zone outside"
            ),
        ))
    }

    pub fn snr0(&self) -> f64 {
        db_to_linear(self.snr0_db)
    }

    pub fn config(&self) -> Result<CellConfig> {
        if !self.snr0_db.is_finite() {
            return Err(Error::domain("gamma0_db must be finite"));
        }
        CellConfig::new(CellParams {
            total_antennas: self.total_antennas,
            sectors: self.sectors,
            zones: self.zones,
            cell_radius: self.cell_radius,
            track_radius: self.track_radius,
            snr0: self.snr0(),
            min_rate: self.min_rate,
        })
    }

    pub fn profile(&self) -> Result<ZoneProfile> {
        if self.zone_users.len() != self.zones as usize {
            return Err(Error::domain(format!(
                "zones has {} entries for {} zones",
                self.zone_users.len(),
                self.zones
            )));
        }
        ZoneProfile::from_counts(self.zone_users.clone())
    }

    /// Checks the version and every derived invariant.
    pub fn validate(&self) -> Result<(CellConfig, ZoneProfile)> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: self.schema_version,
                expected: SCENARIO_SCHEMA_VERSION,
            });
        }
        let (cfg, profile) = (self.config()?, self.profile()?);
        if self.require_occupied_zones {
            profile.check_zones_occupied()?;
        }
        if self.require_occupied_sectors {
            profile.check_sectors_occupied(&cfg)?;
        }
        Ok((cfg, profile))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("scenario serializes");
        out.push('\n');
        out
    }
}

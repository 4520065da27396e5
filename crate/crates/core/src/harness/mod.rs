//! Scenario files, experiment sweeps and the command-line front end.

mod cli;
mod scenario;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::Plan;

pub use cli::{cli_main, run};
pub use scenario::{db_to_linear, ClusterParams, Scenario, SCENARIO_SCHEMA_VERSION};
pub use sweep::{
    default_bound_grid, sweep_antennas, sweep_rotation, sweep_sectors, validate_bounds, Axis,
    BoundPoint, BoundReport, BoundRow, SweepResult, SweepRow, SWEEP_HEADER, SWEEP_SCHEMA_VERSION,
};

/// Identifies the producing build in every emitted table.
pub const BUILD_ID: &str = concat!("flexsector-", env!("CARGO_PKG_VERSION"));

pub const PLAN_SCHEMA_VERSION: u32 = 1;

/// A plan as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub schema_version: u32,
    pub scenario: String,
    pub build: String,
    pub plan: Plan,
}

impl PlanDocument {
    pub fn new(scenario: &Scenario, plan: Plan) -> Self {
        PlanDocument {
            schema_version: PLAN_SCHEMA_VERSION,
            scenario: scenario.name.clone(),
            build: BUILD_ID.to_string(),
            plan,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PlanDocument = serde_json::from_str(text)?;
        if doc.schema_version != PLAN_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: doc.schema_version,
                expected: PLAN_SCHEMA_VERSION,
            });
        }
        let p = &doc.plan;
        if p.antennas.len() != p.sectors as usize || p.report.users.len() != p.sectors as usize {
            return Err(Error::Parse(format!(
                "plan for {} sectors carries {} allocations",
                p.sectors,
                p.antennas.len()
            )));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("plan serializes");
        out.push('\n');
        out
    }
}

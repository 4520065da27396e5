use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{derive_seed, ZfSamples};
use crate::error::{Error, Result};
use crate::planner::{plan, plan_at_rotation, OnInfeasible, Plan, Policy};
use crate::rate::{rate_lower, rate_upper};

use super::scenario::{db_to_linear, Scenario};
use super::BUILD_ID;

pub const SWEEP_SCHEMA_VERSION: u32 = 1;
pub const SWEEP_HEADER: [&str; 6] = ["axis", "policy", "R_bps_hz", "feasible", "z0_star", "n_vector"];
const SWEEP_TAG: &str = "# flexsector-sweep";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "z0")]
    Rotation,
    #[serde(rename = "N")]
    Antennas,
    #[serde(rename = "B")]
    Sectors,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Rotation => "z0",
            Axis::Antennas => "N",
            Axis::Sectors => "B",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "z0" => Ok(Axis::Rotation),
            "N" => Ok(Axis::Antennas),
            "B" => Ok(Axis::Sectors),
            _ => Err(Error::Parse(format!("unknown sweep axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: u64,
    pub policy: Policy,
    pub sum_rate: f64,
    pub feasible: bool,
    pub rotation_index: u32,
    pub antennas: Vec<u64>,
}

impl SweepRow {
    fn from_plan(axis_value: u64, p: &Plan) -> Self {
        SweepRow {
            axis_value,
            policy: p.policy,
            sum_rate: p.sum_rate(),
            feasible: p.feasible,
            rotation_index: p.rotation_index,
            antennas: p.antennas.clone(),
        }
    }
}

/// One table of results along a single axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: Axis,
    pub seed: u64,
    pub build: String,
    /// Extra `key=value` pairs carried in the preamble, such as the fixed
    /// sector count of a rotation sweep.
    pub context: BTreeMap<String, String>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    fn new(axis: Axis, scenario: &Scenario, mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by_key(|a| (a.axis_value, a.policy));
        let mut context = BTreeMap::new();
        context.insert("scenario".to_string(), token(&scenario.name));
        SweepResult {
            axis,
            seed: scenario.seed,
            build: BUILD_ID.to_string(),
            context,
            rows,
        }
    }

    pub fn rows_for(&self, policy: Policy) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.policy == policy)
    }

    /// Largest sum rate in the table for `policy`.
    pub fn best(&self, policy: Policy) -> Option<&SweepRow> {
        self.rows_for(policy)
            .fold(None, |best: Option<&SweepRow>, r| match best {
                Some(b) if b.sum_rate >= r.sum_rate => Some(b),
                _ => Some(r),
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{SWEEP_TAG} schema_version={SWEEP_SCHEMA_VERSION} axis={} seed={} build={}",
            self.axis.as_str(),
            self.seed,
            self.build
        );
        for (k, v) in &self.context {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_HEADER).expect("in-memory write");
        for r in &self.rows {
            let n: Vec<String> = r.antennas.iter().map(u64::to_string).collect();
            w.write_record([
                r.axis_value.to_string(),
                r.policy.to_string(),
                r.sum_rate.to_string(),
                r.feasible.to_string(),
                r.rotation_index.to_string(),
                n.join(";"),
            ])
            .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii"));
        out
    }

    /// Parses one or more concatenated tables.
    pub fn parse_tables(text: &str) -> Result<Vec<SweepResult>> {
        let mut tables = Vec::new();
        let mut block: Option<(&str, String)> = None;
        for line in text.lines() {
            if line.starts_with('#') {
                if let Some((pre, body)) = block.take() {
                    tables.push(parse_table(pre, &body)?);
                }
                block = Some((line, String::new()));
            } else if let Some((_, body)) = block.as_mut() {
                body.push_str(line);
                body.push('\n');
            } else if !line.trim().is_empty() {
                return Err(Error::Parse("table data before preamble".into()));
            }
        }
        if let Some((pre, body)) = block {
            tables.push(parse_table(pre, &body)?);
        }
        if tables.is_empty() {
            return Err(Error::Parse("no sweep table found".into()));
        }
        Ok(tables)
    }
}

fn token(s: &str) -> String {
    let t: String = s
        .chars()
        .map(|c| if c.is_whitespace() || c == '=' { '_' } else { c })
        .collect();
    if t.is_empty() {
        "_".to_string()
    } else {
        t
    }
}

fn parse_preamble(line: &str) -> Result<BTreeMap<String, String>> {
    let rest = line
        .strip_prefix(SWEEP_TAG)
        .ok_or_else(|| Error::Parse(format!("preamble must start with `{SWEEP_TAG}`")))?;
    let mut fields = BTreeMap::new();
    for pair in rest.split_whitespace() {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("malformed preamble field `{pair}`")))?;
        if fields.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Parse(format!("duplicate preamble field `{k}`")));
        }
    }
    Ok(fields)
}

fn field<T: std::str::FromStr>(value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("invalid {what} `{value}`")))
}

fn parse_table(preamble: &str, body: &str) -> Result<SweepResult> {
    let mut fields = parse_preamble(preamble)?;
    let version: u32 = field(
        &fields
            .remove("schema_version")
            .ok_or_else(|| Error::Parse("missing schema_version".into()))?,
        "schema_version",
    )?;
    if version != SWEEP_SCHEMA_VERSION {
        return Err(Error::Schema {
            found: version,
            expected: SWEEP_SCHEMA_VERSION,
        });
    }
    let axis = Axis::parse(&fields.remove("axis").ok_or_else(|| Error::Parse("missing axis".into()))?)?;
    let seed = field(&fields.remove("seed").ok_or_else(|| Error::Parse("missing seed".into()))?, "seed")?;
    let build = fields.remove("build").ok_or_else(|| Error::Parse("missing build".into()))?;

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(Error::Parse(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let antennas = match &record[5] {
            "" => Vec::new(),
            s => s.split(';').map(|n| field(n, "antenna count")).collect::<Result<_>>()?,
        };
        let sum_rate: f64 = field(&record[2], "sum rate")?;
        if !sum_rate.is_finite() {
            return Err(Error::Parse(format!("non-finite sum rate `{}`", &record[2])));
        }
        let row = SweepRow {
            axis_value: field(&record[0], "axis value")?,
            policy: record[1].parse().map_err(|_| Error::Parse(format!("unknown policy `{}`", &record[1])))?,
            sum_rate,
            feasible: field(&record[3], "feasibility flag")?,
            rotation_index: field(&record[4], "rotation index")?,
            antennas,
        };
        if let Some(prev) = rows.last() {
            if (prev.axis_value, prev.policy) >= (row.axis_value, row.policy) {
                return Err(Error::Parse("rows must be sorted and unique per (axis, policy)".into()));
            }
        }
        rows.push(row);
    }
    Ok(SweepResult {
        axis,
        seed,
        build,
        context: fields,
        rows,
    })
}

/// Flexible-policy sum rate at every rotation index for `sectors` sectors.
pub fn sweep_rotation(scenario: &Scenario, sectors: u32) -> Result<SweepResult> {
    let (cfg, profile) = scenario.validate()?;
    let cfg = cfg.with_sectors(sectors)?;
    let rows = (1..=cfg.zones_per_sector())
        .into_par_iter()
        .map(|z0| {
            plan_at_rotation(Policy::Flexible, &cfg, &profile, z0, OnInfeasible::Relax)
                .map(|p| SweepRow::from_plan(z0 as u64, &p))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = SweepResult::new(Axis::Rotation, scenario, rows);
    out.context.insert("sectors".to_string(), sectors.to_string());
    Ok(out)
}

/// Every policy at every antenna budget.
pub fn sweep_antennas(scenario: &Scenario, policies: &[Policy], budgets: &[u32]) -> Result<SweepResult> {
    let (cfg, profile) = scenario.validate()?;
    let points: Vec<(u32, Policy)> = budgets
        .iter()
        .flat_map(|&n| policies.iter().map(move |&p| (n, p)))
        .collect();
    let rows = points
        .into_par_iter()
        .map(|(n, p)| {
            let cfg = cfg.with_total_antennas(n)?;
            plan(p, &cfg, &profile, OnInfeasible::Relax).map(|pl| SweepRow::from_plan(n as u64, &pl))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::new(Axis::Antennas, scenario, rows))
}

/// Every policy at every sector count. Sector counts must divide the zone count.
pub fn sweep_sectors(scenario: &Scenario, policies: &[Policy], sectors: &[u32]) -> Result<SweepResult> {
    let (cfg, profile) = scenario.validate()?;
    let points: Vec<(u32, Policy)> = sectors
        .iter()
        .flat_map(|&b| policies.iter().map(move |&p| (b, p)))
        .collect();
    let rows = points
        .into_par_iter()
        .map(|(b, p)| {
            let cfg = cfg.with_sectors(b)?;
            plan(p, &cfg, &profile, OnInfeasible::Relax).map(|pl| SweepRow::from_plan(b as u64, &pl))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::new(Axis::Sectors, scenario, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub antennas: usize,
    pub users: usize,
    pub sectors: u32,
    pub snr0_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub point: BoundPoint,
    pub lower: f64,
    pub estimate: f64,
    pub std_err: f64,
    pub upper: f64,
    /// Sample mean of the inverse-Gram corner element.
    pub inverse_mean: f64,
    pub inverse_std_err: f64,
    /// `lower − 3σ ≤ estimate ≤ upper + 3σ`.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<BoundRow>,
}

pub const BOUNDS_HEADER: [&str; 10] = [
    "antennas", "users", "sectors", "snr0_db", "lower", "estimate", "std_err", "upper",
    "inverse_mean", "pass",
];

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# flexsector-bounds schema_version={SWEEP_SCHEMA_VERSION} trials={} seed={} build={BUILD_ID}\n",
            self.trials, self.seed
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(BOUNDS_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.point.antennas.to_string(),
                r.point.users.to_string(),
                r.point.sectors.to_string(),
                r.point.snr0_db.to_string(),
                r.lower.to_string(),
                r.estimate.to_string(),
                r.std_err.to_string(),
                r.upper.to_string(),
                r.inverse_mean.to_string(),
                r.pass.to_string(),
            ])
            .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii"));
        out
    }
}

/// Sector sizes × sector counts × SNRs of the standard bound check.
pub fn default_bound_grid() -> Vec<BoundPoint> {
    let mut grid = Vec::new();
    for (antennas, users) in [(10, 5), (20, 10), (40, 20), (60, 50), (90, 50)] {
        for sectors in [1, 3] {
            for snr0_db in [0.0, 10.0] {
                grid.push(BoundPoint {
                    antennas,
                    users,
                    sectors,
                    snr0_db,
                });
            }
        }
    }
    grid
}

/// Monte-Carlo ergodic rate of ZF user 1 against the closed-form bounds.
/// One batch of fading draws per `(antennas, users)` pair serves every
/// sector count and SNR at that size.
pub fn validate_bounds(grid: &[BoundPoint], trials: usize, seed: u64) -> Result<BoundReport> {
    let mut batches: BTreeMap<(usize, usize), ZfSamples> = BTreeMap::new();
    for p in grid {
        if !p.snr0_db.is_finite() {
            return Err(Error::domain("snr0_db must be finite"));
        }
        if p.sectors == 0 {
            return Err(Error::domain("sector count must be at least 1"));
        }
        let key = (p.antennas, p.users);
        if let std::collections::btree_map::Entry::Vacant(e) = batches.entry(key) {
            let stream = derive_seed(seed, ((p.antennas as u64) << 32) | p.users as u64);
            e.insert(ZfSamples::draw(p.antennas, p.users, trials, stream)?);
        }
    }
    let rows = grid
        .iter()
        .map(|p| {
            let samples = &batches[&(p.antennas, p.users)];
            let snr0 = db_to_linear(p.snr0_db);
            let (n, q, b) = (p.antennas as f64, p.users as f64, p.sectors as f64);
            let est = samples.rate(p.sectors, snr0);
            let inv = samples.inverse_mean();
            let lower = rate_lower(n, q, b, snr0);
            let upper = rate_upper(n, q, b, snr0);
            let margin = 3.0 * est.std_err;
            BoundRow {
                point: *p,
                lower,
                estimate: est.mean,
                std_err: est.std_err,
                upper,
                inverse_mean: inv.mean,
                inverse_std_err: inv.std_err,
                pass: lower - margin <= est.mean && est.mean <= upper + margin,
            }
        })
        .collect();
    Ok(BoundReport { trials, seed, rows })
}

//! Joint choice of the common rotation index and the antenna split, plus the
//! three benchmark architectures it is compared against.
//!
//! | policy          | rotation        | antennas            |
//! |-----------------|-----------------|---------------------|
//! | `flexible`      | searched        | optimized per `z0`  |
//! | `alloc-only`    | fixed at 1      | optimized           |
//! | `rotation-only` | searched        | equal split         |
//! | `fixed`         | fixed at 1      | equal split         |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocator::{allocate, AllocationProblem};
use crate::error::{Error, Result};
use crate::geometry::{build_sector_view, users_per_sector, CellConfig, ZoneProfile};
use crate::rate::{check_min_rate, rate_report, RateReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Flexible,
    AllocOnly,
    RotationOnly,
    Fixed,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Flexible,
        Policy::AllocOnly,
        Policy::RotationOnly,
        Policy::Fixed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Flexible => "flexible",
            Policy::AllocOnly => "alloc-only",
            Policy::RotationOnly => "rotation-only",
            Policy::Fixed => "fixed",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown policy `{s}`")))
    }
}

/// What to do when the minimum-rate constraint cannot be met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnInfeasible {
    /// Return an [`Error::Infeasible`].
    #[default]
    Reject,
    /// Drop the minimum rate (keeping `N_b ≥ Q_b` where possible) and return
    /// a plan flagged infeasible.
    Relax,
}

/// Sum rate recorded for one rotation index during a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationSample {
    pub rotation_index: u32,
    pub sum_rate: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub policy: Policy,
    pub sectors: u32,
    pub rotation_index: u32,
    pub antennas: Vec<u64>,
    /// Whether every constraint (budget, per-sector minimum rate) holds.
    pub feasible: bool,
    pub report: RateReport,
    /// Relaxed-allocation sum rate at the chosen rotation, for optimized policies.
    pub continuous_sum_rate: Option<f64>,
    /// Sum rate per rotation index visited.
    pub trace: Vec<RotationSample>,
}

impl Plan {
    pub fn sum_rate(&self) -> f64 {
        self.report.total
    }
}

struct Outcome {
    users: Vec<f64>,
    antennas: Vec<u64>,
    feasible: bool,
    continuous: Option<f64>,
    sum_rate: f64,
}

fn sector_users(cfg: &CellConfig, profile: &ZoneProfile, z0: u32) -> Result<Vec<f64>> {
    users_per_sector(profile, &build_sector_view(cfg, z0)?)
}

/// `N / B` per sector with the remainder going to the lowest indices.
pub fn equal_split(total: u64, sectors: usize) -> Vec<u64> {
    let base = total / sectors as u64;
    let extra = (total % sectors as u64) as usize;
    (0..sectors)
        .map(|b| base + u64::from(b < extra))
        .collect()
}

fn evaluate_split(cfg: &CellConfig, users: Vec<f64>, antennas: Vec<u64>) -> Result<Outcome> {
    let problem = AllocationProblem::new(
        users.clone(),
        cfg.total_antennas() as f64,
        cfg.min_rate(),
        cfg.snr0(),
    )?;
    let lower = problem.integer_minima();
    let feasible = antennas
        .iter()
        .zip(&lower)
        .zip(&users)
        .all(|((&n, &l), &q)| q == 0.0 || n >= l);
    let real: Vec<f64> = antennas.iter().map(|&n| n as f64).collect();
    Ok(Outcome {
        sum_rate: problem.objective(&real),
        users,
        antennas,
        feasible,
        continuous: None,
    })
}

fn optimize_split(cfg: &CellConfig, users: Vec<f64>, mode: OnInfeasible) -> Result<Outcome> {
    let budget = cfg.total_antennas() as f64;
    let problem = AllocationProblem::new(users.clone(), budget, cfg.min_rate(), cfg.snr0())?;
    match allocate(&problem) {
        Ok((cont, int)) => Ok(Outcome {
            sum_rate: int.sum_rate,
            feasible: int.is_feasible(),
            antennas: int.antennas,
            continuous: Some(problem.objective(&cont.antennas)),
            users,
        }),
        Err(err @ Error::Infeasible { .. }) => match mode {
            OnInfeasible::Reject => Err(err),
            OnInfeasible::Relax => {
                let relaxed = AllocationProblem::new(users.clone(), budget, 0.0, cfg.snr0())?;
                match allocate(&relaxed) {
                    Ok((cont, int)) => Ok(Outcome {
                        sum_rate: int.sum_rate,
                        feasible: false,
                        antennas: int.antennas,
                        continuous: Some(relaxed.objective(&cont.antennas)),
                        users,
                    }),
                    Err(Error::Infeasible { .. }) => {
                        let split = equal_split(cfg.total_antennas() as u64, users.len());
                        let mut out = evaluate_split(cfg, users, split)?;
                        out.feasible = false;
                        Ok(out)
                    }
                    Err(e) => Err(e),
                }
            }
        },
        Err(e) => Err(e),
    }
}

fn precheck(cfg: &CellConfig, profile: &ZoneProfile, mode: OnInfeasible) -> Result<()> {
    if profile.zones() != cfg.zones() {
        return Err(Error::domain(format!(
            "profile has {} zones, configuration expects {}",
            profile.zones(),
            cfg.zones()
        )));
    }
    match check_min_rate(
        cfg.total_antennas() as f64,
        profile.total_users(),
        cfg.snr0(),
        cfg.min_rate(),
    ) {
        Err(e) if mode == OnInfeasible::Reject => Err(e),
        _ => Ok(()),
    }
}

/// Picks the best sample: feasible entries first, then largest rate, then
/// smallest rotation index.
fn pick(outcomes: &[(u32, Outcome)]) -> Option<usize> {
    let any_feasible = outcomes.iter().any(|(_, o)| o.feasible);
    let mut best: Option<usize> = None;
    for (i, (_, o)) in outcomes.iter().enumerate() {
        if any_feasible && !o.feasible {
            continue;
        }
        if best.is_none_or(|j| o.sum_rate > outcomes[j].1.sum_rate) {
            best = Some(i);
        }
    }
    best
}

fn finish(policy: Policy, cfg: &CellConfig, outcomes: Vec<(u32, Outcome)>, chosen: usize) -> Plan {
    let trace = outcomes
        .iter()
        .map(|(z0, o)| RotationSample {
            rotation_index: *z0,
            sum_rate: o.sum_rate,
            feasible: o.feasible,
        })
        .collect();
    let (z0, o) = outcomes.into_iter().nth(chosen).expect("chosen index in range");
    let real: Vec<f64> = o.antennas.iter().map(|&n| n as f64).collect();
    Plan {
        policy,
        sectors: cfg.sectors(),
        rotation_index: z0,
        report: rate_report(z0, &real, &o.users, cfg.snr0()),
        antennas: o.antennas,
        feasible: o.feasible,
        continuous_sum_rate: o.continuous,
        trace,
    }
}

fn search(
    policy: Policy,
    cfg: &CellConfig,
    profile: &ZoneProfile,
    rotations: &[u32],
    mode: OnInfeasible,
) -> Result<Plan> {
    precheck(cfg, profile, mode)?;
    let mut outcomes = Vec::with_capacity(rotations.len());
    let mut last_err = None;
    for &z0 in rotations {
        let users = sector_users(cfg, profile, z0)?;
        let outcome = match policy {
            Policy::Flexible | Policy::AllocOnly => optimize_split(cfg, users, mode),
            Policy::RotationOnly | Policy::Fixed => {
                let split = equal_split(cfg.total_antennas() as u64, users.len());
                evaluate_split(cfg, users, split)
            }
        };
        match outcome {
            Ok(o) => outcomes.push((z0, o)),
            Err(e @ Error::Infeasible { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    let chosen = pick(&outcomes);
    let chosen = chosen.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::infeasible("no rotation index admits a feasible allocation", None))
    })?;
    if mode == OnInfeasible::Reject
        && matches!(policy, Policy::Flexible | Policy::AllocOnly)
        && !outcomes[chosen].1.feasible
    {
        return Err(Error::infeasible(
            "no rotation index admits a feasible integer allocation",
            None,
        ));
    }
    Ok(finish(policy, cfg, outcomes, chosen))
}

fn all_rotations(cfg: &CellConfig) -> Vec<u32> {
    (1..=cfg.zones_per_sector()).collect()
}

/// Searches every rotation index, optimizing the allocation at each.
pub fn optimize_flexible(cfg: &CellConfig, profile: &ZoneProfile, mode: OnInfeasible) -> Result<Plan> {
    search(Policy::Flexible, cfg, profile, &all_rotations(cfg), mode)
}

/// Optimized allocation with the rotation frozen at `z0 = 1`.
pub fn plan_alloc_only(cfg: &CellConfig, profile: &ZoneProfile, mode: OnInfeasible) -> Result<Plan> {
    search(Policy::AllocOnly, cfg, profile, &[1], mode)
}

/// Equal antenna split with the rotation searched.
pub fn plan_rotation_only(cfg: &CellConfig, profile: &ZoneProfile, mode: OnInfeasible) -> Result<Plan> {
    search(Policy::RotationOnly, cfg, profile, &all_rotations(cfg), mode)
}

/// Equal antenna split at `z0 = 1`.
pub fn plan_fixed(cfg: &CellConfig, profile: &ZoneProfile, mode: OnInfeasible) -> Result<Plan> {
    search(Policy::Fixed, cfg, profile, &[1], mode)
}

pub fn plan(policy: Policy, cfg: &CellConfig, profile: &ZoneProfile, mode: OnInfeasible) -> Result<Plan> {
    match policy {
        Policy::Flexible => optimize_flexible(cfg, profile, mode),
        Policy::AllocOnly => plan_alloc_only(cfg, profile, mode),
        Policy::RotationOnly => plan_rotation_only(cfg, profile, mode),
        Policy::Fixed => plan_fixed(cfg, profile, mode),
    }
}

/// Evaluates `policy` with the rotation pinned to `z0`. The optimized
/// policies coincide here, as do the equal-split ones.
pub fn plan_at_rotation(
    policy: Policy,
    cfg: &CellConfig,
    profile: &ZoneProfile,
    z0: u32,
    mode: OnInfeasible,
) -> Result<Plan> {
    build_sector_view(cfg, z0)?;
    search(policy, cfg, profile, &[z0], mode)
}

/// Flexible-policy sum rate for an arbitrary first zone `first_zone ≥ 1`,
/// including values past `c`. Used to check the rotation period.
pub fn flexible_rate_at(cfg: &CellConfig, profile: &ZoneProfile, first_zone: u32) -> Result<f64> {
    let users = users_per_sector(profile, &crate::geometry::rotated_view(cfg, first_zone))?;
    Ok(optimize_split(cfg, users, OnInfeasible::Relax)?.sum_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CellParams;

    fn cfg(sectors: u32, min_rate: f64) -> CellConfig {
        CellConfig::new(CellParams {
            sectors,
            min_rate,
            ..CellParams::default()
        })
        .unwrap()
    }

    fn distribution_one() -> ZoneProfile {
        ZoneProfile::from_counts(
            (1..=30)
                .map(|z| if (16..=25).contains(&z) { 3.0 } else { 1.0 })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.as_str().parse::<Policy>().unwrap(), p);
        }
        assert!("bogus".parse::<Policy>().is_err());
    }

    #[test]
    fn equal_split_remainder_goes_first() {
        assert_eq!(equal_split(90, 3), vec![30, 30, 30]);
        assert_eq!(equal_split(10, 4), vec![3, 3, 2, 2]);
    }

    #[test]
    fn flexible_prefers_unbalanced_rotation() {
        let plan = optimize_flexible(&cfg(3, 0.0), &distribution_one(), OnInfeasible::Reject).unwrap();
        assert_eq!(plan.rotation_index, 6);
        assert_eq!(plan.report.users, vec![10.0, 30.0, 10.0]);
        assert!((plan.continuous_sum_rate.unwrap() - 278.58).abs() < 0.01);
        let at_one = plan.trace.iter().find(|s| s.rotation_index == 1).unwrap();
        assert!(at_one.sum_rate < plan.sum_rate());
        assert!(plan.feasible);
        assert_eq!(plan.antennas.iter().sum::<u64>(), 90);
    }

    #[test]
    fn chosen_rotation_tops_the_trace() {
        for b in [2, 3, 5, 6] {
            let plan = optimize_flexible(&cfg(b, 5.0), &distribution_one(), OnInfeasible::Relax).unwrap();
            let best = plan
                .trace
                .iter()
                .filter(|s| s.feasible)
                .map(|s| s.sum_rate)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(plan.sum_rate(), best);
        }
    }

    #[test]
    fn uniform_profile_has_flat_trace() {
        let profile = ZoneProfile::uniform(30, 1.0).unwrap();
        let plan = optimize_flexible(&cfg(3, 0.0), &profile, OnInfeasible::Reject).unwrap();
        assert_eq!(plan.rotation_index, 1);
        assert!(plan.trace.iter().all(|s| s.sum_rate == plan.trace[0].sum_rate));
        let alloc = plan_alloc_only(&cfg(3, 0.0), &profile, OnInfeasible::Reject).unwrap();
        assert_eq!(alloc.sum_rate(), plan.sum_rate());
    }

    #[test]
    fn single_sector_gets_everything() {
        let c = CellConfig::new(CellParams {
            sectors: 1,
            ..CellParams::default()
        })
        .unwrap();
        let plan = optimize_flexible(&c, &distribution_one(), OnInfeasible::Reject).unwrap();
        assert_eq!(plan.antennas, vec![90]);
        assert!((plan.sum_rate() - 50.0 * 41f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn alloc_only_matches_flexible_trace_at_one() {
        let c = cfg(3, 5.0);
        let flex = optimize_flexible(&c, &distribution_one(), OnInfeasible::Reject).unwrap();
        let alloc = plan_alloc_only(&c, &distribution_one(), OnInfeasible::Reject).unwrap();
        assert_eq!(alloc.rotation_index, 1);
        assert_eq!(alloc.sum_rate(), flex.trace[0].sum_rate);
        assert!(alloc.sum_rate() <= flex.sum_rate());
    }

    #[test]
    fn rotation_only_uniform_value() {
        let profile = ZoneProfile::uniform(30, 50.0 / 30.0).unwrap();
        let plan = plan_rotation_only(&cfg(3, 0.0), &profile, OnInfeasible::Reject).unwrap();
        assert_eq!(plan.antennas, vec![30, 30, 30]);
        let expected = 50.0 * (1.0f64 + 3.0 * (30.0 - 50.0 / 3.0)).log2();
        assert!((plan.sum_rate() - expected).abs() < 1e-9);
    }

    #[test]
    fn rotation_only_distribution_one() {
        let plan = plan_rotation_only(&cfg(3, 0.0), &distribution_one(), OnInfeasible::Reject).unwrap();
        assert_eq!(plan.antennas, vec![30, 30, 30]);
        // Brute-force sweep over z0 for the equal split.
        let best = (1..=10)
            .map(|z0| {
                let q = sector_users(&cfg(3, 0.0), &distribution_one(), z0).unwrap();
                q.iter().map(|&q| q * (1.0 + 3.0 * (30.0 - q).max(0.0)).log2()).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((plan.sum_rate() - best).abs() < 1e-9);
    }

    #[test]
    fn overloaded_sector_is_flagged_not_fatal() {
        let mut counts = vec![0.5; 30];
        counts[0] = 40.0;
        let profile = ZoneProfile::from_counts(counts).unwrap();
        let c = cfg(3, 0.0).with_total_antennas(60).unwrap();
        let plan = plan_rotation_only(&c, &profile, OnInfeasible::Reject).unwrap();
        assert!(!plan.feasible);
        assert!(plan.report.rate_lower.contains(&0.0));
        let fixed = plan_fixed(&c, &profile, OnInfeasible::Reject).unwrap();
        assert!(!fixed.feasible);
    }

    #[test]
    fn min_rate_above_bound_is_rejected() {
        let c = cfg(3, 5.5);
        let err = optimize_flexible(&c, &distribution_one(), OnInfeasible::Reject).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
        let relaxed = optimize_flexible(&c, &distribution_one(), OnInfeasible::Relax).unwrap();
        assert!(!relaxed.feasible);
    }

    #[test]
    fn fixed_distribution_one_value() {
        let plan = plan_fixed(&cfg(3, 5.0), &distribution_one(), OnInfeasible::Reject).unwrap();
        let expected = 10.0 * 61f64.log2() + 40.0 * 31f64.log2();
        assert!((plan.sum_rate() - expected).abs() < 1e-9);
        // 30 antennas cannot give 20 users 5 bps/Hz at B = 3.
        assert!(!plan.feasible);
    }

    #[test]
    fn rotation_period_is_c() {
        let c = cfg(5, 5.0);
        let profile = distribution_one();
        for z0 in 1..=6 {
            let a = flexible_rate_at(&c, &profile, z0).unwrap();
            let b = flexible_rate_at(&c, &profile, z0 + 6).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }
}

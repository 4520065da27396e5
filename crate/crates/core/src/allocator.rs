//! Per-rotation antenna allocation.
//!
//! The relaxed problem maximizes `Σ_b Q_b log2(1 + B γ0 (N_b − Q_b))` subject
//! to `Σ_b N_b ≤ N` and `N_b ≥ N_{b,min}`. Its optimum has the water-filling
//! form
//!
//! ```text
//! N_b* = max{ Q_b (1 + 1/(ν ln 2)) − 1/(B γ0), N_{b,min} }
//! ```
//!
//! with the dual variable `ν` fixed by `Σ_b N_b* = N`. The left-hand side is
//! strictly decreasing in `ν`, so a bracketing bisection finds it. Integer
//! allocations are obtained by flooring, repairing the per-sector minima, and
//! handing out leftover antennas greedily by marginal gain.
//!
//! Sectors with no users get no antennas and carry no minimum.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::{min_antennas, rate_lower, sum_rate};

/// Default refusal threshold for [`exhaustive_alloc`], in compositions.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Budget residual the continuous solver aims for.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

// Slack used when comparing computed minima against integers, so that
// 20.000000000000004 antennas is not rounded up to 21.
const INTEGER_SLACK: f64 = 1e-9;

/// One allocation instance: per-sector expected users and the shared budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    users: Vec<f64>,
    budget: f64,
    min_rate: f64,
    snr0: f64,
}

impl AllocationProblem {
    pub fn new(users: Vec<f64>, budget: f64, min_rate: f64, snr0: f64) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::domain("allocation needs at least one sector"));
        }
        if users.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::domain("sector user counts must be finite and nonnegative"));
        }
        if users.iter().all(|q| *q == 0.0) {
            return Err(Error::domain("no sector has any users"));
        }
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::domain("antenna budget must be finite and nonnegative"));
        }
        if !(min_rate.is_finite() && min_rate >= 0.0) {
            return Err(Error::domain("minimum rate must be finite and nonnegative"));
        }
        if !(snr0.is_finite() && snr0 > 0.0) {
            return Err(Error::domain("snr0 must be finite and positive"));
        }
        Ok(AllocationProblem {
            users,
            budget,
            min_rate,
            snr0,
        })
    }

    pub fn users(&self) -> &[f64] {
        &self.users
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn min_rate(&self) -> f64 {
        self.min_rate
    }

    pub fn snr0(&self) -> f64 {
        self.snr0
    }

    pub fn sectors(&self) -> usize {
        self.users.len()
    }

    pub fn total_users(&self) -> f64 {
        self.users.iter().sum()
    }

    fn is_active(&self, b: usize) -> bool {
        self.users[b] > 0.0
    }

    fn inv_gain(&self) -> f64 {
        1.0 / (self.sectors() as f64 * self.snr0)
    }

    /// `N_{b,min}` per sector; zero for empty sectors.
    pub fn minima(&self) -> Vec<f64> {
        let b = self.sectors() as f64;
        self.users
            .iter()
            .map(|&q| {
                if q > 0.0 {
                    min_antennas(q, self.min_rate, b, self.snr0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Smallest integer antenna count each sector accepts.
    pub fn integer_minima(&self) -> Vec<u64> {
        self.minima()
            .iter()
            .map(|&m| (m - INTEGER_SLACK).ceil().max(0.0) as u64)
            .collect()
    }

    /// Relaxed objective at a real allocation.
    pub fn objective(&self, antennas: &[f64]) -> f64 {
        sum_rate(antennas, &self.users, self.snr0)
    }

    /// Water-filling level of sector `b` for a given `ν`, before clamping.
    fn water_level(&self, b: usize, nu: f64) -> f64 {
        self.users[b] * (1.0 + 1.0 / (nu * LN_2)) - self.inv_gain()
    }

    /// Left side of the budget equation, `Σ_b max{water level, N_{b,min}}`.
    fn allocated(&self, nu: f64, minima: &[f64]) -> f64 {
        (0..self.sectors())
            .filter(|&b| self.is_active(b))
            .map(|b| self.water_level(b, nu).max(minima[b]))
            .sum()
    }

    fn check_feasible(&self, minima: &[f64]) -> Result<()> {
        let need: f64 = minima.iter().sum();
        if need > self.budget + BUDGET_TOLERANCE {
            return Err(Error::infeasible(
                format!(
                    "sector minima need {need:.6} antennas but only {} are available; \
                     the minimum rate exceeds log2(1 + γ0 (N − K))",
                    self.budget
                ),
                Some(need - self.budget),
            ));
        }
        Ok(())
    }
}

/// Optimum of the relaxed allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousAllocation {
    pub antennas: Vec<f64>,
    /// Dual variable of the budget constraint.
    pub nu: f64,
    /// Sectors pinned at their minimum, `N_b* = N_{b,min}`.
    pub binding: Vec<bool>,
    /// `|Σ_b N_b* − N|`.
    pub residual: f64,
}

/// Bisection for the dual variable `ν`, stopping once the budget residual is
/// within `tol`.
pub fn bisect_nu(problem: &AllocationProblem, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::domain("bisection tolerance must be positive"));
    }
    let minima = problem.minima();
    problem.check_feasible(&minima)?;
    let budget = problem.budget;
    let k = problem.total_users();

    let mut lo = k / ((budget + 1.0 / problem.snr0) * LN_2) * 1e-3;
    let mut hi = k / LN_2 * 1e3;
    let mut doublings = 0;
    while problem.allocated(lo, &minima) < budget {
        lo *= 0.5;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numerical("could not bracket ν from below".into()));
        }
    }
    doublings = 0;
    while problem.allocated(hi, &minima) > budget + tol {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numerical("could not bracket ν from above".into()));
        }
    }

    let mut mid = (lo * hi).sqrt();
    for _ in 0..4000 {
        mid = (lo * hi).sqrt();
        let excess = problem.allocated(mid, &minima) - budget;
        if excess.abs() <= tol {
            return Ok(mid);
        }
        if excess > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let excess = problem.allocated(mid, &minima) - budget;
    if excess.abs() <= tol.max(budget * 1e-13) {
        Ok(mid)
    } else {
        Err(Error::Numerical(format!(
            "bisection stalled with budget residual {excess:e}"
        )))
    }
}

/// Solves the relaxed problem.
///
/// After bisection the binding set is known, and on the free sectors the
/// budget equation is linear in `1/(ν ln 2)`, so `ν` is recomputed exactly
/// from it whenever that keeps the binding set unchanged.
pub fn solve_continuous(problem: &AllocationProblem) -> Result<ContinuousAllocation> {
    let minima = problem.minima();
    let nu_bisect = bisect_nu(problem, BUDGET_TOLERANCE)?;
    let sectors = problem.sectors();
    let free: Vec<bool> = (0..sectors)
        .map(|b| problem.is_active(b) && problem.water_level(b, nu_bisect) > minima[b])
        .collect();

    let nu = polish_nu(problem, &minima, &free).unwrap_or(nu_bisect);
    let nu = if free.iter().any(|&f| f) {
        nu
    } else {
        // Everything sits at its minimum; report the smallest ν satisfying
        // the dual feasibility condition of every sector.
        (0..sectors)
            .filter(|&b| problem.is_active(b))
            .map(|b| problem.users[b] / (LN_2 * (minima[b] - problem.users[b] + problem.inv_gain())))
            .fold(0.0, f64::max)
    };

    let antennas: Vec<f64> = (0..sectors)
        .map(|b| match (problem.is_active(b), free[b]) {
            (false, _) => 0.0,
            (true, true) => problem.water_level(b, nu),
            (true, false) => minima[b],
        })
        .collect();
    let residual = (antennas.iter().sum::<f64>() - problem.budget).abs();
    let binding = (0..sectors)
        .map(|b| problem.is_active(b) && !free[b])
        .collect();
    Ok(ContinuousAllocation {
        antennas,
        nu,
        binding,
        residual,
    })
}

fn polish_nu(problem: &AllocationProblem, minima: &[f64], free: &[bool]) -> Option<f64> {
    let mut pinned = 0.0;
    let mut free_users = 0.0;
    let mut free_count = 0.0;
    for b in 0..problem.sectors() {
        if !problem.is_active(b) {
            continue;
        }
        if free[b] {
            free_users += problem.users[b];
            free_count += 1.0;
        } else {
            pinned += minima[b];
        }
    }
    if free_count == 0.0 {
        return None;
    }
    // Σ_free [Q_b (1 + t) − 1/(Bγ0)] + pinned = N, solved for t = 1/(ν ln 2).
    let t = (problem.budget - pinned - free_users + free_count * problem.inv_gain()) / free_users;
    if !(t > 0.0 && t.is_finite()) {
        return None;
    }
    let nu = 1.0 / (t * LN_2);
    let consistent = (0..problem.sectors())
        .filter(|&b| problem.is_active(b))
        .all(|b| (problem.water_level(b, nu) > minima[b]) == free[b]);
    consistent.then_some(nu)
}

/// An integer allocation and how it fares against the constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegerAllocation {
    pub antennas: Vec<u64>,
    pub sum_rate: f64,
    /// `Σ_b n_b ≤ N`.
    pub within_budget: bool,
    /// Per sector, whether `n_b ≥ ⌈N_{b,min}⌉` (always true for empty sectors).
    pub meets_minimum: Vec<bool>,
}

impl IntegerAllocation {
    fn evaluate(problem: &AllocationProblem, antennas: Vec<u64>) -> Self {
        let lower = problem.integer_minima();
        let real: Vec<f64> = antennas.iter().map(|&n| n as f64).collect();
        let total: u64 = antennas.iter().sum();
        IntegerAllocation {
            sum_rate: problem.objective(&real),
            within_budget: total as f64 <= problem.budget + INTEGER_SLACK,
            meets_minimum: antennas
                .iter()
                .zip(&lower)
                .enumerate()
                .map(|(b, (&n, &l))| !problem.is_active(b) || n >= l)
                .collect(),
            antennas,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.within_budget && self.meets_minimum.iter().all(|&ok| ok)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.antennas.iter().map(|&n| n as f64).collect()
    }
}

fn integer_budget(problem: &AllocationProblem) -> u64 {
    (problem.budget + INTEGER_SLACK).floor() as u64
}

fn marginal_gain(problem: &AllocationProblem, b: usize, from: u64) -> f64 {
    let q = problem.users[b];
    let sectors = problem.sectors() as f64;
    q * (rate_lower(from as f64 + 1.0, q, sectors, problem.snr0)
        - rate_lower(from as f64, q, sectors, problem.snr0))
}

/// Maps a relaxed optimum to integers.
///
/// Floors every entry, lifts sectors below `⌈N_{b,min}⌉`, sheds antennas from
/// sectors above their minimum where that loses the least rate if the lift
/// overshot the budget, then spends what remains one antenna at a time on the
/// largest marginal gain. Ties go to the lowest sector index.
pub fn round_allocation(
    cont: &ContinuousAllocation,
    problem: &AllocationProblem,
) -> Result<IntegerAllocation> {
    if cont.antennas.len() != problem.sectors() {
        return Err(Error::domain("continuous allocation does not match the problem size"));
    }
    let lower = problem.integer_minima();
    let budget = integer_budget(problem);
    let active: Vec<usize> = (0..problem.sectors()).filter(|&b| problem.is_active(b)).collect();

    let mut n: Vec<u64> = cont
        .antennas
        .iter()
        .enumerate()
        .map(|(b, &x)| {
            if problem.is_active(b) {
                ((x + INTEGER_SLACK).floor().max(0.0) as u64).max(lower[b])
            } else {
                0
            }
        })
        .collect();

    let mut total: u64 = n.iter().sum();
    while total > budget {
        let shed = active
            .iter()
            .copied()
            .filter(|&b| n[b] > lower[b])
            .map(|b| (b, marginal_gain(problem, b, n[b] - 1)))
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        match shed {
            Some((b, _)) => {
                n[b] -= 1;
                total -= 1;
            }
            None => {
                let need: u64 = lower.iter().sum();
                return Err(Error::infeasible(
                    format!(
                        "integer minima need {need} antennas but only {budget} are available"
                    ),
                    Some(need as f64 - problem.budget),
                ));
            }
        }
    }
    while total < budget {
        let best = active
            .iter()
            .copied()
            .map(|b| (b, marginal_gain(problem, b, n[b])))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .expect("problem has an occupied sector");
        n[best.0] += 1;
        total += 1;
    }
    Ok(IntegerAllocation::evaluate(problem, n))
}

/// Relaxed solve followed by rounding.
pub fn allocate(problem: &AllocationProblem) -> Result<(ContinuousAllocation, IntegerAllocation)> {
    let cont = solve_continuous(problem)?;
    let int = round_allocation(&cont, problem)?;
    Ok((cont, int))
}

/// Number of ways to split `budget` antennas over `sectors` sectors,
/// `C(budget + sectors − 1, sectors − 1)`, saturating at `u64::MAX`.
pub fn composition_count(budget: u64, sectors: usize) -> u64 {
    let k = sectors.saturating_sub(1) as u128;
    let n = budget as u128 + k;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Exact integer optimum by enumerating every split of the whole budget.
///
/// Refuses when the number of splits exceeds `cap`. Among equal sum rates the
/// lexicographically smallest allocation wins.
pub fn exhaustive_alloc(problem: &AllocationProblem, cap: u64) -> Result<IntegerAllocation> {
    let budget = integer_budget(problem);
    let sectors = problem.sectors();
    let count = composition_count(budget, sectors);
    if count > cap {
        return Err(Error::Refused(format!(
            "{count} candidate allocations exceed the enumeration cap of {cap}"
        )));
    }
    let lower: Vec<u64> = problem
        .integer_minima()
        .iter()
        .enumerate()
        .map(|(b, &l)| if problem.is_active(b) { l } else { 0 })
        .collect();
    let need: u64 = lower.iter().sum();
    if need > budget {
        return Err(Error::infeasible(
            format!("integer minima need {need} antennas but only {budget} are available"),
            Some(need as f64 - problem.budget),
        ));
    }
    // suffix_need[b] = antennas the sectors after b must still receive.
    let mut suffix_need = vec![0u64; sectors + 1];
    for b in (0..sectors).rev() {
        suffix_need[b] = suffix_need[b + 1] + lower[b];
    }

    let mut best: Option<(f64, Vec<u64>)> = None;
    let mut current = vec![0u64; sectors];
    enumerate(problem, &lower, &suffix_need, 0, budget, &mut current, &mut best);
    let (_, antennas) = best.expect("at least one feasible split exists");
    Ok(IntegerAllocation::evaluate(problem, antennas))
}

fn enumerate(
    problem: &AllocationProblem,
    lower: &[u64],
    suffix_need: &[u64],
    b: usize,
    remaining: u64,
    current: &mut Vec<u64>,
    best: &mut Option<(f64, Vec<u64>)>,
) {
    let sectors = current.len();
    if b + 1 == sectors {
        current[b] = remaining;
        let real: Vec<f64> = current.iter().map(|&n| n as f64).collect();
        let value = problem.objective(&real);
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            *best = Some((value, current.clone()));
        }
        return;
    }
    for n in lower[b]..=remaining - suffix_need[b + 1] {
        current[b] = n;
        enumerate(problem, lower, suffix_need, b + 1, remaining - n, current, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(q: &[f64], n: f64, r: f64, g: f64) -> AllocationProblem {
        AllocationProblem::new(q.to_vec(), n, r, g).unwrap()
    }

    fn assert_vec_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn interior_solution_matches_closed_form() {
        let p = problem(&[10.0, 20.0, 20.0], 90.0, 0.0, 1.0);
        let sol = solve_continuous(&p).unwrap();
        // ν = K / ((N − K + 1/γ0) ln 2), N_b = Q_b/K (N + 1/γ0) − 1/(Bγ0).
        let nu = 50.0 / (41.0 * LN_2);
        assert!((sol.nu - nu).abs() / nu < 1e-9);
        assert!((sol.nu - 1.75938).abs() < 1e-5);
        let expected: Vec<f64> = [10.0, 20.0, 20.0]
            .iter()
            .map(|q| q / 50.0 * 91.0 - 1.0 / 3.0)
            .collect();
        assert_vec_close(&sol.antennas, &expected, 1e-9);
        assert!(sol.residual <= 1e-9);
        assert!(sol.binding.iter().all(|&b| !b));
    }

    #[test]
    fn minimum_rate_binds_smallest_sector() {
        let p = problem(&[10.0, 20.0, 20.0], 90.0, 5.0, 1.0);
        let sol = solve_continuous(&p).unwrap();
        assert_eq!(sol.binding, vec![true, false, false]);
        let first = 10.0 + 31.0 / 3.0;
        let rest = (90.0 - first) / 2.0;
        assert_vec_close(&sol.antennas, &[first, rest, rest], 1e-9);
        assert_vec_close(&sol.antennas, &[20.3333, 34.8333, 34.8333], 1e-4);
    }

    #[test]
    fn uniform_users_split_evenly() {
        let p = problem(&[50.0 / 3.0; 3], 90.0, 0.0, 1.0);
        let sol = solve_continuous(&p).unwrap();
        assert_vec_close(&sol.antennas, &[30.0; 3], 1e-9);
    }

    #[test]
    fn two_sector_hand_example() {
        let p = problem(&[1.0, 2.0], 6.0, 0.0, 1.0);
        let sol = solve_continuous(&p).unwrap();
        assert_vec_close(&sol.antennas, &[11.0 / 6.0, 25.0 / 6.0], 1e-9);
    }

    #[test]
    fn bisection_refines_consistently() {
        let p = problem(&[7.0, 3.0, 12.0, 1.0], 60.0, 2.0, 2.0);
        let coarse = bisect_nu(&p, 1e-6).unwrap();
        let fine = bisect_nu(&p, 1e-12).unwrap();
        assert!((coarse - fine).abs() / fine < 1e-5);
        assert!(matches!(bisect_nu(&p, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn infeasible_budget_reports_deficit() {
        let p = problem(&[10.0, 20.0, 20.0], 80.0, 5.0, 1.0);
        match solve_continuous(&p) {
            Err(Error::Infeasible { deficit: Some(d), .. }) => assert!((d - 1.0).abs() < 1e-9),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn forced_allocation_when_minima_exhaust_budget() {
        // (2^2 − 1)/(2·1.5) = 1, so the minima (11, 5) use up the whole budget.
        let p = problem(&[10.0, 4.0], 16.0, 2.0, 1.5);
        let sol = solve_continuous(&p).unwrap();
        assert!(sol.binding.iter().all(|&b| b));
        assert_vec_close(&sol.antennas, &[11.0, 5.0], 1e-9);
        let ex = exhaustive_alloc(&p, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(ex.antennas, vec![11, 5]);
    }

    #[test]
    fn empty_sector_gets_nothing() {
        let p = problem(&[0.0, 10.0, 5.0], 40.0, 3.0, 1.0);
        let sol = solve_continuous(&p).unwrap();
        assert_eq!(sol.antennas[0], 0.0);
        assert!(!sol.binding[0]);
        assert!((sol.antennas.iter().sum::<f64>() - 40.0).abs() < 1e-9);
        let int = round_allocation(&sol, &p).unwrap();
        assert_eq!(int.antennas[0], 0);
        assert_eq!(int.antennas.iter().sum::<u64>(), 40);
        assert!(int.is_feasible());
    }

    #[test]
    fn rounding_repairs_violated_minimum() {
        let p = problem(&[10.0, 20.0, 20.0], 90.0, 5.0, 1.0);
        let cont = solve_continuous(&p).unwrap();
        let int = round_allocation(&cont, &p).unwrap();
        assert_eq!(int.antennas, vec![21, 35, 34]);
        assert!(int.is_feasible());
    }

    #[test]
    fn rounding_keeps_integral_solution() {
        let p = problem(&[10.0, 10.0, 10.0], 60.0, 0.0, 1.0);
        let cont = solve_continuous(&p).unwrap();
        let int = round_allocation(&cont, &p).unwrap();
        assert_eq!(int.antennas, vec![20, 20, 20]);
    }

    #[test]
    fn rounding_two_sector_example_is_optimal() {
        let p = problem(&[1.0, 2.0], 6.0, 0.0, 1.0);
        let (_, int) = allocate(&p).unwrap();
        assert_eq!(int.antennas, vec![2, 4]);
        let ex = exhaustive_alloc(&p, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(ex.antennas, vec![2, 4]);
        let expected = 3f64.log2() + 2.0 * 5f64.log2();
        assert!((ex.sum_rate - expected).abs() < 1e-12);
        assert!((ex.sum_rate - 6.2288).abs() < 1e-4);
    }

    #[test]
    fn exhaustive_two_sector_landscape() {
        // The other splits from the hand enumeration.
        let p = problem(&[1.0, 2.0], 6.0, 0.0, 1.0);
        for (n, r) in [([1.0, 5.0], 5.615), ([3.0, 3.0], 5.492), ([4.0, 2.0], 2.807)] {
            assert!((p.objective(&n) - r).abs() < 1e-3);
        }
    }

    #[test]
    fn exhaustive_single_sector() {
        let p = problem(&[50.0], 90.0, 0.0, 1.0);
        let ex = exhaustive_alloc(&p, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(ex.antennas, vec![90]);
        assert!((ex.sum_rate - 50.0 * 41f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn exhaustive_refuses_large_instances() {
        let p = problem(&[10.0; 6], 120.0, 0.0, 1.0);
        assert!(matches!(exhaustive_alloc(&p, 1000), Err(Error::Refused(_))));
        assert_eq!(composition_count(6, 2), 7);
        assert_eq!(composition_count(10, 1), 1);
        assert_eq!(composition_count(24, 4), 2925);
    }
}

//! Closed-form results for the regime where no minimum-rate constraint binds:
//! the allocation becomes affine in the sector loads, which makes the best and
//! worst user placements and the value of extra sectors explicit.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn xlog2x(x: f64, scale: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (scale * x).log2()
    }
}

fn check_dims(total_users: f64, total_antennas: f64, sectors: u32, snr0: f64) -> Result<()> {
    if sectors == 0 {
        return Err(Error::domain("need at least one sector"));
    }
    if !(snr0.is_finite() && snr0 > 0.0) {
        return Err(Error::domain(format!("snr0 must be positive, got {snr0}")));
    }
    if !(total_users.is_finite() && total_users > 0.0) {
        return Err(Error::domain(format!("user count must be positive, got {total_users}")));
    }
    if !(total_antennas > total_users) {
        return Err(Error::domain(format!(
            "closed forms need more antennas ({total_antennas}) than users ({total_users})"
        )));
    }
    Ok(())
}

fn loads_total(loads: &[f64]) -> Result<f64> {
    if loads.is_empty() {
        return Err(Error::domain("empty load vector"));
    }
    if loads.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
        return Err(Error::domain("sector loads must be finite and nonnegative"));
    }
    Ok(loads.iter().sum())
}

/// Per-user SNR scale of the interior solution: `B γ0 (N − K + 1/γ0) / K`.
/// Sector `b` then gets rate `log2(scale · Q_b)`.
pub fn interior_scale(total_users: f64, total_antennas: f64, sectors: u32, snr0: f64) -> f64 {
    sectors as f64 * snr0 * (total_antennas - total_users + 1.0 / snr0) / total_users
}

/// Minimum rate up to which the interior solution holds for a profile whose
/// lightest occupied sector carries `lightest_load` users.
pub fn regime_threshold(
    total_users: f64,
    total_antennas: f64,
    sectors: u32,
    snr0: f64,
    lightest_load: f64,
) -> Result<f64> {
    check_dims(total_users, total_antennas, sectors, snr0)?;
    if !(lightest_load > 0.0) {
        return Err(Error::domain("lightest load must be positive"));
    }
    Ok(
        (sectors as f64 * lightest_load * ((total_antennas - total_users) * snr0 + 1.0)
            / total_users)
            .log2(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeInfo {
    pub threshold: f64,
    /// True when `min_rate ≤ threshold`, i.e. no sector sits at its minimum.
    pub interior: bool,
    pub nu: f64,
    pub allocation: Vec<f64>,
    pub scale: f64,
}

/// Classifies `loads` against `min_rate` and returns the interior solution.
/// Every sector must be occupied.
pub fn regime(loads: &[f64], total_antennas: f64, snr0: f64, min_rate: f64) -> Result<RegimeInfo> {
    let (nu, allocation) = closed_form_allocation(loads, total_antennas, snr0)?;
    let k = loads.iter().sum::<f64>();
    let sectors = loads.len() as u32;
    let lightest = loads.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = regime_threshold(k, total_antennas, sectors, snr0, lightest)?;
    Ok(RegimeInfo {
        threshold,
        interior: min_rate <= threshold,
        nu,
        allocation,
        scale: interior_scale(k, total_antennas, sectors, snr0),
    })
}

/// Water level and allocation of the unconstrained optimum:
/// `ν = K / ((N − K + 1/γ0) ln 2)` and `N_b = (Q_b/K)(N + 1/γ0) − 1/(B γ0)`.
pub fn closed_form_allocation(loads: &[f64], total_antennas: f64, snr0: f64) -> Result<(f64, Vec<f64>)> {
    let k = loads_total(loads)?;
    let sectors = loads.len() as u32;
    check_dims(k, total_antennas, sectors, snr0)?;
    if loads.contains(&0.0) {
        return Err(Error::domain("closed-form allocation needs every sector occupied"));
    }
    let nu = k / ((total_antennas - k + 1.0 / snr0) * std::f64::consts::LN_2);
    let offset = 1.0 / (sectors as f64 * snr0);
    let alloc = loads
        .iter()
        .map(|&q| q / k * (total_antennas + 1.0 / snr0) - offset)
        .collect();
    Ok((nu, alloc))
}

/// Sum rate of the unconstrained optimum, `Σ Q_b log2(scale · Q_b)` with
/// empty sectors contributing zero.
pub fn sum_rate_interior(loads: &[f64], total_antennas: f64, snr0: f64) -> Result<f64> {
    let k = loads_total(loads)?;
    let sectors = loads.len() as u32;
    check_dims(k, total_antennas, sectors, snr0)?;
    let scale = interior_scale(k, total_antennas, sectors, snr0);
    Ok(loads.iter().map(|&q| xlog2x(q, scale)).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalResult {
    /// Best placement with every sector occupied: `(K − B + 1, 1, …, 1)`.
    pub best_occupied: Vec<f64>,
    pub best_occupied_antennas: Vec<f64>,
    /// Best placement overall: all users in the first sector.
    pub best_any: Vec<f64>,
    /// All antennas follow the users.
    pub best_any_antennas: Vec<f64>,
    /// Worst placement: `K / B` per sector.
    pub worst: Vec<f64>,
    pub worst_antennas: Vec<f64>,
    pub max_sum_rate: f64,
    pub min_sum_rate: f64,
    pub gap_per_user: f64,
    pub asymptotic_gap: f64,
}

pub fn extremal_distributions(
    total_users: u64,
    sectors: u32,
    total_antennas: f64,
    snr0: f64,
) -> Result<ExtremalResult> {
    let k = total_users as f64;
    check_dims(k, total_antennas, sectors, snr0)?;
    let b = sectors as usize;
    let best_occupied: Vec<f64> = if total_users >= sectors as u64 {
        std::iter::once(k - (b as f64) + 1.0)
            .chain(std::iter::repeat_n(1.0, b - 1))
            .collect()
    } else {
        Vec::new()
    };
    let best_occupied_antennas = if best_occupied.is_empty() {
        Vec::new()
    } else {
        closed_form_allocation(&best_occupied, total_antennas, snr0)?.1
    };
    let mut best_any = vec![0.0; b];
    best_any[0] = k;
    let mut best_any_antennas = vec![0.0; b];
    best_any_antennas[0] = total_antennas;
    let worst = vec![k / b as f64; b];
    let worst_antennas = vec![total_antennas / b as f64; b];
    let (gap_per_user, asymptotic_gap) = per_user_gap(sectors, total_antennas, k, snr0)?;
    Ok(ExtremalResult {
        best_occupied,
        best_occupied_antennas,
        best_any,
        best_any_antennas,
        worst,
        worst_antennas,
        max_sum_rate: k * (1.0 + sectors as f64 * snr0 * (total_antennas - k)).log2(),
        min_sum_rate: k * (1.0 + snr0 * (total_antennas - k)).log2(),
        gap_per_user,
        asymptotic_gap,
    })
}

/// Per-user rate gap between the best and worst placements, and its limit
/// `log2 B` as `N → ∞`.
pub fn per_user_gap(sectors: u32, total_antennas: f64, total_users: f64, snr0: f64) -> Result<(f64, f64)> {
    check_dims(total_users, total_antennas, sectors, snr0)?;
    let spare = snr0 * (total_antennas - total_users);
    let finite = ((1.0 + sectors as f64 * spare) / (1.0 + spare)).log2();
    Ok((finite, (sectors as f64).log2()))
}

/// All vectors of `parts` positive integers summing to `total`, in
/// lexicographic order.
pub fn positive_compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    fn walk(rest: u64, slots: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if slots == 1 {
            prefix.push(rest);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 1..=rest.saturating_sub(slots as u64 - 1) {
            prefix.push(first);
            walk(rest - first, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 && total >= parts as u64 {
        walk(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitComparison {
    pub coarse: f64,
    pub fine: f64,
    /// `Equal` when every sector splits evenly, `Less` otherwise.
    #[serde(with = "ordering_serde")]
    pub ordering: Ordering,
}

mod ordering_serde {
    use std::cmp::Ordering;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(o: &Ordering, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(*o as i8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ordering, D::Error> {
        Ok(i8::deserialize(d)?.cmp(&0))
    }
}

/// Compares `B0` sectors against `2·B0` sectors where sector `i` of the coarse
/// layout is split into fine sectors `2i` and `2i + 1`.
pub fn sector_split_compare(
    coarse: &[f64],
    fine: &[f64],
    total_antennas: f64,
    snr0: f64,
) -> Result<SplitComparison> {
    if fine.len() != 2 * coarse.len() {
        return Err(Error::domain(format!(
            "fine layout has {} sectors, expected {}",
            fine.len(),
            2 * coarse.len()
        )));
    }
    for (i, (&c, pair)) in coarse.iter().zip(fine.chunks_exact(2)).enumerate() {
        let merged = pair[0] + pair[1];
        if (merged - c).abs() > 1e-9 * c.abs().max(1.0) {
            return Err(Error::domain(format!(
                "fine sectors {} and {} hold {merged} users, coarse sector {} holds {c}",
                2 * i + 1,
                2 * i + 2,
                i + 1
            )));
        }
    }
    let coarse_rate = sum_rate_interior(coarse, total_antennas, snr0)?;
    let fine_rate = sum_rate_interior(fine, total_antennas, snr0)?;
    let even = fine.chunks_exact(2).all(|p| p[0] == p[1]);
    Ok(SplitComparison {
        coarse: coarse_rate,
        fine: fine_rate,
        ordering: if even { Ordering::Equal } else { Ordering::Less },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{solve_continuous, AllocationProblem};
    use crate::rate::sum_rate;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn threshold_values() {
        let r0 = regime_threshold(50.0, 90.0, 3, 1.0, 10.0).unwrap();
        assert!(close(r0, 24.6f64.log2(), 1e-12));
        assert!(close(r0, 4.6205, 1e-4));
        let single = regime_threshold(50.0, 90.0, 1, 1.0, 50.0).unwrap();
        assert!(close(single, 41f64.log2(), 1e-12));
        assert!(regime_threshold(50.0, 90.0, 3, 1e12, 10.0).unwrap() > 30.0);
        assert!(regime_threshold(50.0, 50.0, 3, 1.0, 10.0).is_err());
    }

    #[test]
    fn regime_flags_binding_minimum() {
        let info = regime(&[10.0, 20.0, 20.0], 90.0, 1.0, 5.0).unwrap();
        assert!(!info.interior);
        assert!(regime(&[10.0, 20.0, 20.0], 90.0, 1.0, 4.6).unwrap().interior);
        assert!(close(info.scale, 2.46, 1e-12));
    }

    #[test]
    fn closed_form_distribution_one() {
        let (nu, n) = closed_form_allocation(&[10.0, 20.0, 20.0], 90.0, 1.0).unwrap();
        assert!(close(nu, 50.0 / (41.0 * std::f64::consts::LN_2), 1e-12));
        assert!(close(nu, 1.75938, 1e-5));
        assert!(close(n[0], 17.8667, 1e-4));
        assert!(close(n[1], 36.0667, 1e-4));
        assert!(close(n.iter().sum::<f64>(), 90.0, 1e-12));
        let (_, even) = closed_form_allocation(&[7.0; 4], 90.0, 1.0).unwrap();
        assert!(even.iter().all(|&x| close(x, 22.5, 1e-12)));
        assert!(closed_form_allocation(&[0.0, 5.0], 90.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_matches_bisection() {
        let q = vec![10.0, 20.0, 20.0];
        let (nu, n) = closed_form_allocation(&q, 90.0, 1.0).unwrap();
        let sol = solve_continuous(&AllocationProblem::new(q, 90.0, 0.0, 1.0).unwrap()).unwrap();
        assert!(close(sol.nu, nu, 1e-9));
        for (a, b) in sol.antennas.iter().zip(&n) {
            assert!(close(*a, *b, 1e-9));
        }
    }

    #[test]
    fn interior_sum_rates() {
        assert!(close(sum_rate_interior(&[10.0, 30.0, 10.0], 90.0, 1.0).unwrap(), 278.58, 0.01));
        assert!(close(sum_rate_interior(&[10.0, 20.0, 20.0], 90.0, 1.0).unwrap(), 271.03, 0.01));
        let uniform = sum_rate_interior(&[50.0 / 3.0; 3], 90.0, 1.0).unwrap();
        assert!(close(uniform, 50.0 * 41f64.log2(), 1e-9));
        assert!(sum_rate_interior(&[0.0, 5.0], 90.0, 1.0).unwrap().is_finite());
    }

    #[test]
    fn extremal_paper_setup() {
        let ext = extremal_distributions(50, 3, 90.0, 1.0).unwrap();
        assert!(close(ext.max_sum_rate, 50.0 * 121f64.log2(), 1e-9));
        assert!(close(ext.max_sum_rate, 345.95, 0.01));
        assert!(close(ext.min_sum_rate, 50.0 * 41f64.log2(), 1e-9));
        assert!(close(ext.min_sum_rate, 267.88, 0.01));
        assert_eq!(ext.best_occupied, vec![48.0, 1.0, 1.0]);
        assert_eq!(ext.best_any, vec![50.0, 0.0, 0.0]);
        assert_eq!(ext.best_any_antennas, vec![90.0, 0.0, 0.0]);
        assert!(close(ext.best_occupied_antennas.iter().sum::<f64>(), 90.0, 1e-9));
        // Placing every user in one sector with all antennas reaches the maximum.
        assert!(close(sum_rate(&ext.best_any_antennas, &ext.best_any, 1.0), ext.max_sum_rate, 1e-9));
        assert!(close(sum_rate(&ext.worst_antennas, &ext.worst, 1.0), ext.min_sum_rate, 1e-9));
    }

    #[test]
    fn single_sector_has_no_spread() {
        let ext = extremal_distributions(50, 1, 90.0, 1.0).unwrap();
        assert_eq!(ext.max_sum_rate, ext.min_sum_rate);
        assert_eq!(ext.gap_per_user, 0.0);
    }

    #[test]
    fn small_enumeration_matches_hand_values() {
        let all = positive_compositions(6, 3);
        assert_eq!(all.len(), 10);
        let rate = |q: &Vec<u64>| {
            let q: Vec<f64> = q.iter().map(|&x| x as f64).collect();
            sum_rate_interior(&q, 12.0, 1.0).unwrap()
        };
        let best = all.iter().max_by(|a, b| rate(a).total_cmp(&rate(b))).unwrap();
        let worst = all.iter().min_by(|a, b| rate(a).total_cmp(&rate(b))).unwrap();
        assert_eq!(rate(best), rate(&vec![4, 1, 1]));
        assert_eq!(worst, &vec![2, 2, 2]);
        assert!(close(rate(best), 18.844, 1e-3));
        assert!(close(rate(worst), 6.0 * 7f64.log2(), 1e-12));
        assert!(close(interior_scale(6.0, 12.0, 3, 1.0), 3.5, 1e-12));
    }

    #[test]
    fn compositions_edge_cases() {
        assert!(positive_compositions(2, 3).is_empty());
        assert_eq!(positive_compositions(3, 1), vec![vec![3]]);
        assert_eq!(positive_compositions(4, 2), vec![vec![1, 3], vec![2, 2], vec![3, 1]]);
    }

    #[test]
    fn gap_values() {
        let (gap, limit) = per_user_gap(3, 1e5, 50.0, 1.0).unwrap();
        assert!((gap - limit).abs() < 1e-4);
        assert!(close(gap, 1.584953, 1e-6));
        assert_eq!(per_user_gap(1, 90.0, 50.0, 1.0).unwrap().0, 0.0);
        let mut prev = 0.0;
        for n in (51..2000).step_by(7) {
            let g = per_user_gap(6, n as f64, 50.0, 1.0).unwrap().0;
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn split_examples() {
        let even = sector_split_compare(&[20.0, 30.0], &[10.0, 10.0, 15.0, 15.0], 90.0, 1.0).unwrap();
        assert_eq!(even.ordering, Ordering::Equal);
        assert!(close(even.coarse, even.fine, 1e-9));
        for fine in [[5.0, 15.0, 15.0, 15.0], [10.0, 10.0, 20.0, 10.0]] {
            let cmp = sector_split_compare(&[20.0, 30.0], &fine, 90.0, 1.0).unwrap();
            assert_eq!(cmp.ordering, Ordering::Less);
            assert!(cmp.coarse < cmp.fine);
        }
        assert!(sector_split_compare(&[20.0, 30.0], &[10.0, 11.0, 15.0, 15.0], 90.0, 1.0).is_err());
        assert!(sector_split_compare(&[20.0, 30.0], &[20.0, 30.0], 90.0, 1.0).is_err());
        let json = serde_json::to_string(&even).unwrap();
        assert_eq!(serde_json::from_str::<SplitComparison>(&json).unwrap(), even);
    }

    proptest! {
        #[test]
        fn closed_form_spends_budget(
            q in proptest::collection::vec(0.5f64..30.0, 1..7), extra in 0.5f64..100.0,
            g in 0.05f64..20.0
        ) {
            let n = q.iter().sum::<f64>() + extra;
            let (_, alloc) = closed_form_allocation(&q, n, g).unwrap();
            prop_assert!((alloc.iter().sum::<f64>() - n).abs() <= 1e-9 * n);
        }

        #[test]
        fn interior_rates_respect_extremes(
            q in proptest::collection::vec(1u64..20, 1..6), extra in 1u64..80, g in 0.1f64..10.0
        ) {
            let k: u64 = q.iter().sum();
            let n = (k + extra) as f64;
            let qf: Vec<f64> = q.iter().map(|&x| x as f64).collect();
            let info = regime(&qf, n, g, 0.0).unwrap();
            prop_assume!(info.interior);
            let r = sum_rate_interior(&qf, n, g).unwrap();
            let ext = extremal_distributions(k, q.len() as u32, n, g).unwrap();
            prop_assert!(r >= ext.min_sum_rate - 1e-9 * ext.min_sum_rate);
            prop_assert!(r <= ext.max_sum_rate + 1e-9 * ext.max_sum_rate);
            prop_assert!((sum_rate(&info.allocation, &qf, g) - r).abs() <= 1e-9 * r.max(1.0));
        }

        #[test]
        fn spreading_load_raises_interior_rate(
            base in 2.0f64..30.0, b in 2usize..6, i in 0usize..6, j in 0usize..6,
            frac in 0.0f64..1.0
        ) {
            let (i, j) = (i % b, j % b);
            prop_assume!(i != j);
            let uniform = vec![base; b];
            let mut spread = uniform.clone();
            let shift = frac * (base - 0.1);
            spread[i] -= shift;
            spread[j] += shift;
            let n = base * b as f64 + 20.0;
            let lo = sum_rate_interior(&uniform, n, 1.0).unwrap();
            let hi = sum_rate_interior(&spread, n, 1.0).unwrap();
            prop_assert!(lo <= hi + 1e-9 * hi);
        }
    }
}

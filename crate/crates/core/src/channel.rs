//! Directional Rayleigh channels, zero-forcing combining, and Monte-Carlo
//! estimates of the per-user ergodic rate in one sector.
//!
//! Users apply channel-inversion power control `P_k = P0 / ζ_k`, so the
//! effective channel seen by the receiver is `√(B P0) · g_k` regardless of the
//! path gain `ζ_k`. The ZF post-combining SNR of user `k` is then
//! `B γ0 / [(Gᴴ G)⁻¹]_{kk}`.
//!
//! Trials draw from independent ChaCha streams keyed by `(seed, trial)` and
//! are reduced with a fixed pairwise tree, so estimates do not depend on how
//! many threads ran them.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::UserRealization;

/// Pivots below this fraction of the largest Gram diagonal count as rank loss.
pub const RANK_TOLERANCE: f64 = 1e-10;

// Redraw budget per trial before declaring the dimensions hopeless.
const MAX_REDRAWS: usize = 64;

/// Gain of an ideal sector antenna of beamwidth `2π / sectors` at azimuth
/// offset `phi` from its boresight.
pub fn antenna_gain(phi: f64, sectors: u32) -> f64 {
    let width = 2.0 * PI / sectors as f64;
    if (-width / 2.0..=width / 2.0).contains(&phi) {
        2.0 * PI / width
    } else {
        0.0
    }
}

/// Distance-dependent average power gain `ζ = (max(r, r_min) / D)^(−α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub exponent: f64,
    pub min_distance: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        PathLoss {
            exponent: 3.5,
            min_distance: 1.0,
        }
    }
}

impl PathLoss {
    pub fn gain(&self, distance: f64, cell_radius: f64) -> f64 {
        (distance.max(self.min_distance) / cell_radius).powf(-self.exponent)
    }

    pub fn gains(&self, users: &UserRealization, cell_radius: f64) -> Vec<f64> {
        users
            .users
            .iter()
            .map(|u| self.gain(u.radius, cell_radius))
            .collect()
    }
}

/// SplitMix64 finalizer over `(seed, index)`; gives every trial its own stream.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `rows × cols` matrix of i.i.d. CN(0, 1) entries.
pub fn draw_fading<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

fn cholesky(h: &DMatrix<Complex64>) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    if h.nrows() < h.ncols() {
        return Err(Error::infeasible(
            format!(
                "zero forcing needs at least as many antennas ({}) as users ({})",
                h.nrows(),
                h.ncols()
            ),
            Some((h.ncols() - h.nrows()) as f64),
        ));
    }
    let gram = h.ad_mul(h);
    let max_diag = gram.diagonal().iter().map(|d| d.re).fold(0.0, f64::max);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("Gram matrix is not positive definite".into()))?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|d| d.norm_sqr()).fold(f64::INFINITY, f64::min);
    if !(min_pivot > RANK_TOLERANCE * max_diag) {
        return Err(Error::Numerical("channel matrix is numerically rank deficient".into()));
    }
    Ok(chol)
}

/// Unit-norm ZF combiners: columns of `H (Hᴴ H)⁻¹`, each normalized.
pub fn zf_combiners(h: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let chol = cholesky(h)?;
    let mut w = h * chol.inverse();
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        col /= Complex64::new(norm, 0.0);
    }
    Ok(w)
}

/// Diagonal of `(Hᴴ H)⁻¹`.
pub fn inverse_gram_diagonal(h: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let inv = cholesky(h)?.inverse();
    Ok(inv.diagonal().iter().map(|d| d.re).collect())
}

/// Post-ZF SNR `γ0 / [(Hᴴ H)⁻¹]_{kk}` of every user.
///
/// `h` is the effective channel after power control, scaled by `1/√P0`; for
/// channel inversion that is `√B · G`.
pub fn per_user_snr(h: &DMatrix<Complex64>, snr0: f64) -> Result<Vec<f64>> {
    Ok(inverse_gram_diagonal(h)?
        .into_iter()
        .map(|d| snr0 / d)
        .collect())
}

/// The same SNR through the combiners, `γ0 |w_kᴴ h_k|²`.
pub fn per_user_snr_from_combiners(h: &DMatrix<Complex64>, snr0: f64) -> Result<Vec<f64>> {
    let w = zf_combiners(h)?;
    Ok((0..h.ncols())
        .map(|k| snr0 * w.column(k).dotc(&h.column(k)).norm_sqr())
        .collect())
}

/// One sector's channel realization with its power-control bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    /// Small-scale fading `G`, `N_b × Q_b`.
    pub fading: DMatrix<Complex64>,
    /// Directional antenna gain `B`.
    pub sector_gain: f64,
    /// Average power gain `ζ_k` per user.
    pub path_gains: Vec<f64>,
    pub noise_power: f64,
    pub common_power: f64,
}

impl ChannelDraw {
    /// Draws fading for `antennas` receive antennas and one column per entry
    /// of `path_gains`, redrawing rank-deficient matrices.
    pub fn sample<R: Rng + ?Sized>(
        antennas: usize,
        sectors: u32,
        path_gains: Vec<f64>,
        noise_power: f64,
        common_power: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let users = path_gains.len();
        if antennas < users {
            return Err(Error::infeasible(
                format!("zero forcing needs at least as many antennas ({antennas}) as users ({users})"),
                Some((users - antennas) as f64),
            ));
        }
        if path_gains.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(Error::domain("path gains must be finite and positive"));
        }
        for _ in 0..MAX_REDRAWS {
            let draw = ChannelDraw {
                fading: draw_fading(antennas, users, rng),
                sector_gain: sectors as f64,
                path_gains: path_gains.clone(),
                noise_power,
                common_power,
            };
            if cholesky(&draw.effective_channel()).is_ok() {
                return Ok(draw);
            }
        }
        Err(Error::Numerical("could not draw a full-rank channel".into()))
    }

    /// `H` with columns `√(B ζ_k) g_k`.
    pub fn effective_channel(&self) -> DMatrix<Complex64> {
        let mut h = self.fading.clone();
        for (k, mut col) in h.column_iter_mut().enumerate() {
            col *= Complex64::new((self.sector_gain * self.path_gains[k]).sqrt(), 0.0);
        }
        h
    }

    /// Channel-inversion transmit powers `P0 / ζ_k`.
    pub fn tx_powers(&self) -> Vec<f64> {
        self.path_gains.iter().map(|z| self.common_power / z).collect()
    }

    /// Received SNR per user, `P_k / ([(Hᴴ H)⁻¹]_{kk} δ²)`, computed on the
    /// physical channel with the path gains still in it.
    pub fn snr(&self) -> Result<Vec<f64>> {
        let diag = inverse_gram_diagonal(&self.effective_channel())?;
        Ok(diag
            .iter()
            .zip(self.tx_powers())
            .map(|(d, p)| p / (d * self.noise_power))
            .collect())
    }
}

/// Mean of a batch of i.i.d. samples with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        if n == 0 {
            return McEstimate {
                mean: f64::NAN,
                std_err: f64::NAN,
                trials: 0,
                seed,
            };
        }
        let mean = pairwise_sum(samples) / n as f64;
        let std_err = if n > 1 {
            let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        McEstimate {
            mean,
            std_err,
            trials: n,
            seed,
        }
    }
}

/// Fixed-shape pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

const LANES: usize = 4;

/// `[(Gᴴ G)⁻¹]_{11}` via a Cholesky factor of the Gram matrix with column 1
/// ordered last: the inverse's corner element is then `1 / L_{QQ}²`.
///
/// Returns `None` when a pivot falls below [`RANK_TOLERANCE`].
pub fn inverse_gram_first(g: &DMatrix<Complex64>) -> Option<f64> {
    let rows = g.nrows();
    let cols = g.ncols();
    debug_assert!(rows >= cols && cols >= 1);
    let data = g.as_slice();
    // Column order: users 2..Q, then user 1. Split into re/im planes.
    let mut re = vec![0.0; rows * cols];
    let mut im = vec![0.0; rows * cols];
    for j in 0..cols {
        let src = (j + 1) % cols;
        for r in 0..rows {
            let z = data[src * rows + r];
            re[j * rows + r] = z.re;
            im[j * rows + r] = z.im;
        }
    }

    // Lower triangle of the Gram matrix, row-major, lower[i*cols + j], j ≤ i.
    let mut lre = vec![0.0; cols * cols];
    let mut lim = vec![0.0; cols * cols];
    let mut max_diag = 0.0f64;
    for i in 0..cols {
        let (ar, ai) = (&re[i * rows..(i + 1) * rows], &im[i * rows..(i + 1) * rows]);
        for j in 0..=i {
            let (br, bi) = (&re[j * rows..(j + 1) * rows], &im[j * rows..(j + 1) * rows]);
            // A_ij = Σ conj(g_i) g_j over the rows, in four independent lanes.
            let (mut sr, mut si) = ([0.0; LANES], [0.0; LANES]);
            let split = rows - rows % LANES;
            for (((xr, xi), yr), yi) in ar[..split]
                .chunks_exact(LANES)
                .zip(ai[..split].chunks_exact(LANES))
                .zip(br[..split].chunks_exact(LANES))
                .zip(bi[..split].chunks_exact(LANES))
            {
                for l in 0..LANES {
                    sr[l] += xr[l] * yr[l] + xi[l] * yi[l];
                    si[l] += xr[l] * yi[l] - xi[l] * yr[l];
                }
            }
            for r in split..rows {
                sr[0] += ar[r] * br[r] + ai[r] * bi[r];
                si[0] += ar[r] * bi[r] - ai[r] * br[r];
            }
            let (sr0, sr1, si0, si1) = (sr[0] + sr[2], sr[1] + sr[3], si[0] + si[2], si[1] + si[3]);
            lre[i * cols + j] = sr0 + sr1;
            lim[i * cols + j] = si0 + si1;
        }
        max_diag = max_diag.max(lre[i * cols + i]);
    }

    // In-place Cholesky, A = L Lᴴ.
    let mut last_pivot = 0.0;
    for j in 0..cols {
        let mut d = lre[j * cols + j];
        for k in 0..j {
            d -= lre[j * cols + k] * lre[j * cols + k] + lim[j * cols + k] * lim[j * cols + k];
        }
        if !(d > RANK_TOLERANCE * max_diag) {
            return None;
        }
        let ljj = d.sqrt();
        lre[j * cols + j] = ljj;
        lim[j * cols + j] = 0.0;
        last_pivot = d;
        for i in (j + 1)..cols {
            // L_ij = (A_ij − Σ_k L_ik conj(L_jk)) / L_jj
            let (mut sr, mut si) = (lre[i * cols + j], lim[i * cols + j]);
            for k in 0..j {
                let (xr, xi) = (lre[i * cols + k], lim[i * cols + k]);
                let (yr, yi) = (lre[j * cols + k], lim[j * cols + k]);
                sr -= xr * yr + xi * yi;
                si -= xi * yr - xr * yi;
            }
            lre[i * cols + j] = sr / ljj;
            lim[i * cols + j] = si / ljj;
        }
    }
    Some(1.0 / last_pivot)
}

/// Samples of `[(Gᴴ G)⁻¹]_{11}` over independent fading draws.
///
/// Every statistic of user 1's ZF performance is a function of this one
/// number, so one batch serves any `(B, γ0)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfSamples {
    pub antennas: usize,
    pub users: usize,
    pub seed: u64,
    inverse_diag: Vec<f64>,
}

impl ZfSamples {
    pub fn draw(antennas: usize, users: usize, trials: usize, seed: u64) -> Result<Self> {
        if users == 0 {
            return Err(Error::domain("a sector needs at least one user"));
        }
        if antennas < users {
            return Err(Error::infeasible(
                format!("zero forcing needs at least as many antennas ({antennas}) as users ({users})"),
                Some((users - antennas) as f64),
            ));
        }
        if trials == 0 {
            return Err(Error::domain("at least one trial is required"));
        }
        let inverse_diag = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t));
                for _ in 0..MAX_REDRAWS {
                    let g = draw_fading(antennas, users, &mut rng);
                    if let Some(x) = inverse_gram_first(&g) {
                        return Ok(x);
                    }
                }
                Err(Error::Numerical(format!(
                    "trial {t}: {MAX_REDRAWS} consecutive rank-deficient draws"
                )))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(ZfSamples {
            antennas,
            users,
            seed,
            inverse_diag,
        })
    }

    pub fn trials(&self) -> usize {
        self.inverse_diag.len()
    }

    pub fn inverse_diag(&self) -> &[f64] {
        &self.inverse_diag
    }

    /// `E[log2(1 + B γ0 / [(Gᴴ G)⁻¹]_{11})]`.
    pub fn rate(&self, sectors: u32, snr0: f64) -> McEstimate {
        let gain = sectors as f64 * snr0;
        let rates: Vec<f64> = self
            .inverse_diag
            .iter()
            .map(|x| (1.0 + gain / x).log2())
            .collect();
        McEstimate::from_samples(&rates, self.seed)
    }

    /// `E[[(Gᴴ G)⁻¹]_{11}]`, which should approach `1 / (N_b − Q_b)`.
    pub fn inverse_mean(&self) -> McEstimate {
        McEstimate::from_samples(&self.inverse_diag, self.seed)
    }

    /// `E[|w_1ᴴ h_1|²]` for `h = √B g`, which should approach `B (N_b − Q_b + 1)`.
    pub fn combiner_gain(&self, sectors: u32) -> McEstimate {
        let b = sectors as f64;
        let gains: Vec<f64> = self.inverse_diag.iter().map(|x| b / x).collect();
        McEstimate::from_samples(&gains, self.seed)
    }
}

/// Monte-Carlo estimate of one user's ergodic rate in a sector with
/// `antennas` antennas and `users` users.
pub fn mc_ergodic_rate(
    antennas: usize,
    users: usize,
    sectors: u32,
    snr0: f64,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    if !(snr0.is_finite() && snr0 >= 0.0) {
        return Err(Error::domain("snr0 must be finite and nonnegative"));
    }
    Ok(ZfSamples::draw(antennas, users, trials, seed)?.rate(sectors, snr0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn antenna_gain_pattern() {
        for phi in [-PI, -1.0, 0.0, 2.0, PI] {
            assert_eq!(antenna_gain(phi, 1), 1.0);
        }
        assert!((antenna_gain(0.0, 3) - 3.0).abs() < 1e-12);
        assert_eq!(antenna_gain(2.0 * PI / 3.0, 3), 0.0);
        assert!((antenna_gain(PI / 3.0 - 1e-12, 3) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_user_combiner_is_matched_filter() {
        let h = draw_fading(6, 1, &mut rng(1));
        let w = zf_combiners(&h).unwrap();
        let mf = &h / Complex64::new(h.norm(), 0.0);
        assert!((w - mf).norm() < 1e-12);
    }

    #[test]
    fn orthonormal_columns_are_their_own_combiners() {
        let mut h = DMatrix::<Complex64>::zeros(4, 2);
        h[(0, 0)] = Complex64::new(1.0, 0.0);
        h[(2, 1)] = Complex64::new(0.0, 1.0);
        let w = zf_combiners(&h).unwrap();
        assert!((w - &h).norm() < 1e-12);
    }

    #[test]
    fn combiners_null_other_users() {
        for seed in 0..50 {
            let h = draw_fading(4, 2, &mut rng(seed));
            let w = zf_combiners(&h).unwrap();
            for k in 0..2 {
                assert!((w.column(k).norm() - 1.0).abs() < 1e-12);
                for j in 0..2 {
                    if j != k {
                        let leak = w.column(k).dotc(&h.column(j)).norm();
                        assert!(leak <= 1e-8 * h.column(j).norm());
                    }
                }
            }
        }
    }

    #[test]
    fn too_few_antennas_is_infeasible() {
        let h = draw_fading(2, 3, &mut rng(0));
        assert!(matches!(zf_combiners(&h), Err(Error::Infeasible { .. })));
        assert!(matches!(
            mc_ergodic_rate(2, 3, 1, 1.0, 10, 0),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn rank_deficient_channel_is_flagged() {
        let col = draw_fading(5, 1, &mut rng(3));
        let h = DMatrix::from_columns(&[col.column(0), col.column(0)]);
        assert!(matches!(zf_combiners(&h), Err(Error::Numerical(_))));
        assert!(inverse_gram_first(&h).is_none());
    }

    #[test]
    fn scalar_channel_snr() {
        let h = DMatrix::from_element(1, 1, Complex64::new(3f64.sqrt(), 0.0));
        let snr = per_user_snr(&h, 2.0).unwrap();
        assert!((snr[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn snr_expressions_agree() {
        for seed in 0..30 {
            let h = draw_fading(12, 7, &mut rng(seed)) * Complex64::new(3f64.sqrt(), 0.0);
            let a = per_user_snr(&h, 1.7).unwrap();
            let b = per_user_snr_from_combiners(&h, 1.7).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!(*x > 0.0);
                assert!((x - y).abs() <= 1e-9 * x);
            }
        }
    }

    #[test]
    fn fast_kernel_matches_dense_inverse() {
        for (n, q, seed) in [(1, 1, 0), (4, 2, 1), (10, 5, 2), (40, 20, 3), (33, 33, 4), (90, 50, 5)] {
            let g = draw_fading(n, q, &mut rng(seed));
            let dense = inverse_gram_diagonal(&g).unwrap()[0];
            let fast = inverse_gram_first(&g).unwrap();
            assert!((dense - fast).abs() <= 1e-9 * dense, "{n}x{q}: {dense} vs {fast}");
        }
    }

    #[test]
    fn channel_inversion_cancels_path_gains() {
        let zetas = vec![1.0, 1e-3, 0.25, 40.0];
        let draw = ChannelDraw::sample(8, 3, zetas, 0.5, 2.0, &mut rng(11)).unwrap();
        let physical = draw.snr().unwrap();
        let normalized = draw.fading.clone() * Complex64::new(3f64.sqrt(), 0.0);
        let expected = per_user_snr(&normalized, 2.0 / 0.5).unwrap();
        for (x, y) in physical.iter().zip(&expected) {
            assert!((x - y).abs() <= 1e-9 * y);
        }

        let scaled = ChannelDraw {
            path_gains: draw.path_gains.iter().map(|z| z * 10.0).collect(),
            ..draw.clone()
        };
        for (x, y) in scaled.snr().unwrap().iter().zip(&physical) {
            assert!((x - y).abs() <= 1e-9 * y);
        }
    }

    #[test]
    fn estimate_is_deterministic_across_thread_counts() {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let quad = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = single.install(|| mc_ergodic_rate(8, 4, 3, 1.0, 2000, 99).unwrap());
        let b = quad.install(|| mc_ergodic_rate(8, 4, 3, 1.0, 2000, 99).unwrap());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
        assert_eq!(a.trials, 2000);
    }

    #[test]
    fn zero_snr_gives_zero_rate() {
        let est = mc_ergodic_rate(5, 5, 1, 0.0, 100, 1).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn standard_error_definition() {
        let est = McEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 0);
        assert!((est.mean - 2.5).abs() < 1e-15);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((est.std_err - sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn seeds_are_distinct_per_trial() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|t| derive_seed(7, t)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}

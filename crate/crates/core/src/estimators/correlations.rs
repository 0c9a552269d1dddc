//! Pure-state two-point functions `⟨Z_0 Z_r⟩`, `⟨X_0 X_r⟩` (translation
//! averaged) and power-law fits of their decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jastrow::JastrowModel;
use crate::model::{mean_and_error, site_mask};
use crate::sampler::{linear_fit, SamplePool};

/// Correlator value at distance `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlator {
    pub r: usize,
    pub value: f64,
    pub std_error: f64,
}

fn check_rmax(pool: &SamplePool, rmax: usize) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if rmax == 0 || rmax >= pool.sites() {
        return Err(Error::BadRequest(format!("rmax must lie in 1..{} (got {rmax})", pool.sites())));
    }
    Ok(())
}

#[inline]
fn rotate(bits: u64, r: usize, len: usize) -> u64 {
    if r.is_multiple_of(len) {
        return bits;
    }
    ((bits << r) | (bits >> (len - r))) & site_mask(len)
}

/// `(1/L) Σ_j ⟨Z_j Z_{j+r}⟩` for `r = 1..=rmax`.
pub fn correlator_zz(pool: &SamplePool, rmax: usize) -> Result<Vec<Correlator>> {
    check_rmax(pool, rmax)?;
    let l = pool.sites();
    (1..=rmax)
        .map(|r| {
            let blocks = pool.block_means(|b| {
                let differ = (b ^ rotate(b, r, l)).count_ones() as f64;
                (l as f64 - 2.0 * differ) / l as f64
            });
            let (value, std_error) = mean_and_error(&blocks);
            Ok(Correlator { r, value, std_error })
        })
        .collect()
}

/// `(1/L) Σ_j ⟨X_j X_{j+r}⟩` for `r = 1..=rmax`, from the amplitude ratio
/// of the hop that exchanges the occupations of `j` and `j + r`.
pub fn correlator_xx(pool: &SamplePool, model: &JastrowModel, rmax: usize) -> Result<Vec<Correlator>> {
    check_rmax(pool, rmax)?;
    let l = pool.sites();
    if model.sites() != l {
        return Err(Error::LengthMismatch { expected: model.sites(), got: l });
    }
    // One pass over the pool computes every distance at once.
    let per_block: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..pool.n_groups())
            .into_par_iter()
            .map(|g| {
                let grp = pool.group(g);
                let mut acc = vec![0.0; rmax];
                for &b in grp {
                    let pot = model.site_potential(b);
                    for (ri, slot) in acc.iter_mut().enumerate() {
                        let r = ri + 1;
                        let mut s = 0.0;
                        for j in 1..=l {
                            let k = (j - 1 + r) % l + 1;
                            let oj = (b >> (j - 1)) & 1;
                            let ok = (b >> (k - 1)) & 1;
                            if oj != ok {
                                let (from, to) = if oj == 1 { (j, k) } else { (k, j) };
                                s += pot.swap_ratio(model, from, to);
                            }
                        }
                        *slot += s / l as f64;
                    }
                }
                acc.iter().map(|x| x / grp.len() as f64).collect()
            })
            .collect()
    };
    Ok((1..=rmax)
        .map(|r| {
            let blocks: Vec<f64> = per_block.iter().map(|v| v[r - 1]).collect();
            let (value, std_error) = mean_and_error(&blocks);
            Correlator { r, value, std_error }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Decay exponent `η` in `|C(r)| ≈ A d(r)^{-η}`.
    pub exponent: f64,
    pub prefactor: f64,
    pub stderr: f64,
    pub n_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Multiply values by `(-1)^r` before taking magnitudes.
    pub staggered: bool,
    pub r_min: usize,
    /// Upper end of the window (inclusive); defaults to the largest `r`.
    pub r_max: Option<usize>,
    /// Ring length: use the chord distance `(L/π) sin(π r / L)` instead of `r`.
    pub chord_length: Option<usize>,
    /// With error bars, points with `|value| < significance · σ` are dropped.
    pub significance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            staggered: false,
            r_min: 2,
            r_max: None,
            chord_length: None,
            significance: 3.0,
        }
    }
}

impl FitOptions {
    /// Ring data of length `L`: chord distance over `r ∈ [2, L/2]`.
    pub fn ring(len: usize, staggered: bool) -> Self {
        Self {
            staggered,
            r_max: Some(len / 2),
            chord_length: Some(len),
            ..Self::default()
        }
    }
}

/// Least-squares fit of `ln|v|` against `ln r` over `r ≥ 2`.
pub fn fit_power_law(r: &[usize], values: &[f64], staggered: bool) -> Result<PowerLawFit> {
    fit_power_law_with(r, values, None, FitOptions { staggered, ..FitOptions::default() })
}

/// Weighted fit; with `errors` the weights are `(|v|/σ)²`.
pub fn fit_power_law_with(r: &[usize], values: &[f64], errors: Option<&[f64]>, opts: FitOptions) -> Result<PowerLawFit> {
    let r_max = opts.r_max.unwrap_or(usize::MAX);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (i, (&ri, &vi)) in r.iter().zip(values).enumerate() {
        if ri < opts.r_min || ri > r_max {
            continue;
        }
        let v = if opts.staggered && ri % 2 == 1 { -vi } else { vi };
        let mag = v.abs();
        let sigma = errors.map(|e| e[i]).unwrap_or(0.0);
        if sigma > 0.0 {
            if mag < opts.significance * sigma {
                continue;
            }
        } else if mag == 0.0 || !mag.is_finite() {
            return Err(Error::NonPositiveValues(ri));
        }
        let d = match opts.chord_length {
            Some(len) => len as f64 / std::f64::consts::PI * (std::f64::consts::PI * ri as f64 / len as f64).sin(),
            None => ri as f64,
        };
        xs.push(d.ln());
        ys.push(mag.ln());
        ws.push(if sigma > 0.0 { (mag / sigma).powi(2) } else { 1.0 });
    }
    if xs.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: xs.len() });
    }
    let weighted = errors.is_some() && ws.iter().any(|&w| w != 1.0);
    let (slope, intercept) = linear_fit(&xs, &ys, Some(&ws));
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let ssr: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - slope * x - intercept).powi(2))
            .sum();
        (ssr / (xs.len() - 2) as f64 / sxx).sqrt()
    };
    Ok(PowerLawFit {
        exponent: -slope,
        prefactor: intercept.exp(),
        stderr,
        n_points: xs.len(),
    })
}

/// Which bosonization form `fit_luttinger` uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LuttingerForm {
    /// `a d^{-2} + b (-1)^r d^{-2/α}`.
    Zz,
    /// `a (-1)^r d^{-α/2} + b d^{-(2/α + α/2)}`.
    Xx,
}

impl LuttingerForm {
    fn basis(self, alpha: f64, r: usize, d: f64) -> [f64; 2] {
        let sign = if r % 2 == 1 { -1.0 } else { 1.0 };
        match self {
            Self::Zz => [d.powi(-2), sign * d.powf(-2.0 / alpha)],
            Self::Xx => [sign * d.powf(-alpha / 2.0), d.powf(-(2.0 / alpha + alpha / 2.0))],
        }
    }
}

/// Effective `α` of a two-point function, amplitudes free.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuttingerFit {
    pub alpha: f64,
    pub stderr: f64,
    pub amplitudes: [f64; 2],
    pub chi2: f64,
    pub n_points: usize,
}

impl LuttingerFit {
    /// Exponent of the leading staggered term.
    pub fn staggered_exponent(&self, form: LuttingerForm) -> f64 {
        match form {
            LuttingerForm::Zz => 2.0 / self.alpha,
            LuttingerForm::Xx => self.alpha / 2.0,
        }
    }
}

const ALPHA_RANGE: (f64, f64) = (0.1, 50.0);

/// Fit the bosonization form with `α` as a nonlinear parameter and both
/// amplitudes solved by (weighted) linear least squares at each trial `α`.
/// `opts.staggered` and `opts.significance` are ignored: the form carries its
/// own signs and every point enters.
pub fn fit_luttinger(r: &[usize], values: &[f64], errors: Option<&[f64]>, form: LuttingerForm, opts: FitOptions) -> Result<LuttingerFit> {
    let r_max = opts.r_max.unwrap_or(usize::MAX);
    let mut pts = Vec::new();
    for (i, (&ri, &vi)) in r.iter().zip(values).enumerate() {
        if ri < opts.r_min.max(1) || ri > r_max {
            continue;
        }
        let d = match opts.chord_length {
            Some(len) => len as f64 / std::f64::consts::PI * (std::f64::consts::PI * ri as f64 / len as f64).sin(),
            None => ri as f64,
        };
        let sigma = errors.map(|e| e[i]).unwrap_or(0.0);
        let w = if sigma > 0.0 { sigma.powi(-2) } else { 1.0 };
        pts.push((ri, d, vi, w));
    }
    if pts.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: pts.len() });
    }
    let solve = |alpha: f64| -> (f64, [f64; 2]) {
        let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(ri, d, v, w) in &pts {
            let [f1, f2] = form.basis(alpha, ri, d);
            s11 += w * f1 * f1;
            s12 += w * f1 * f2;
            s22 += w * f2 * f2;
            t1 += w * f1 * v;
            t2 += w * f2 * v;
        }
        let det = s11 * s22 - s12 * s12;
        let amp = if det.abs() > 1e-14 * s11 * s22 {
            [(t1 * s22 - t2 * s12) / det, (s11 * t2 - s12 * t1) / det]
        } else {
            [t1 / s11, 0.0]
        };
        let chi2 = pts
            .iter()
            .map(|&(ri, d, v, w)| {
                let [f1, f2] = form.basis(alpha, ri, d);
                w * (v - amp[0] * f1 - amp[1] * f2).powi(2)
            })
            .sum();
        (chi2, amp)
    };
    // Coarse scan in ln α, then golden-section refinement around the best node.
    let (lo, hi) = (ALPHA_RANGE.0.ln(), ALPHA_RANGE.1.ln());
    let nodes = 400;
    let grid: Vec<f64> = (0..=nodes).map(|i| lo + (hi - lo) * i as f64 / nodes as f64).collect();
    let best = (0..=nodes)
        .min_by(|&a, &b| solve(grid[a].exp()).0.total_cmp(&solve(grid[b].exp()).0))
        .unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(nodes)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (x1, x2) = (b - g * (b - a), a + g * (b - a));
        if solve(x1.exp()).0 < solve(x2.exp()).0 {
            b = x2;
        } else {
            a = x1;
        }
    }
    let alpha = ((a + b) / 2.0).exp();
    let (chi2, amplitudes) = solve(alpha);
    // Curvature of χ² in α; Δχ² = 1 with true weights, rescaled by the
    // residual variance otherwise.
    let h = 1e-4 * alpha;
    let curv = (solve(alpha + h).0 - 2.0 * chi2 + solve(alpha - h).0) / (h * h);
    let dof = (pts.len() - 3) as f64;
    let scale = if errors.is_some() { 1.0 } else { chi2 / dof };
    let stderr = if curv > 0.0 { (2.0 * scale / curv).sqrt() } else { f64::INFINITY };
    Ok(LuttingerFit { alpha, stderr, amplitudes, chi2, n_points: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sector_configurations;

    fn flat_pool(len: usize) -> SamplePool {
        let all: Vec<u64> = sector_configurations(len, len / 2).iter().map(|c| c.bits()).collect();
        SamplePool::from_samples(len, all, 1, 1).unwrap()
    }

    #[test]
    fn uniform_four_sites() {
        let pool = flat_pool(4);
        let model = JastrowModel::half_filled(4, 0.0).unwrap();
        for c in correlator_zz(&pool, 3).unwrap() {
            assert!((c.value + 1.0 / 3.0).abs() < 1e-12, "{c:?}");
        }
        let xx = correlator_xx(&pool, &model, 3).unwrap();
        // Exact ⟨X_j X_{j+2}⟩ = 2/3, i.e. twice the one-way hopping ⟨σ⁺_j σ⁻_{j+2}⟩ = 1/3.
        assert!((xx[1].value - 2.0 / 3.0).abs() < 1e-12);
        assert!((xx[0].value + 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_power_law() {
        let r: Vec<usize> = (1..=20).collect();
        let v: Vec<f64> = r.iter().map(|&x| 0.7 * (x as f64).powf(-1.5)).collect();
        let fit = fit_power_law(&r, &v, false).unwrap();
        assert!((fit.exponent - 1.5).abs() < 1e-9);
        assert!((fit.prefactor - 0.7).abs() < 1e-9);
        let stag: Vec<f64> = r.iter().zip(&v).map(|(&x, y)| if x % 2 == 1 { -y } else { *y }).collect();
        assert!((fit_power_law(&r, &stag, true).unwrap().exponent - 1.5).abs() < 1e-9);
    }

    #[test]
    fn chord_distance_recovers_ring_law() {
        let len = 30;
        let r: Vec<usize> = (1..=15).collect();
        let chord = |x: usize| len as f64 / std::f64::consts::PI * (std::f64::consts::PI * x as f64 / len as f64).sin();
        let v: Vec<f64> = r.iter().map(|&x| chord(x).powi(-2)).collect();
        let fit = fit_power_law_with(&r, &v, None, FitOptions::ring(len, false)).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-9);
    }

    #[test]
    fn luttinger_form_recovers_alpha() {
        let len = 30;
        let r: Vec<usize> = (1..=15).collect();
        let opts = FitOptions { r_min: 1, ..FitOptions::ring(len, false) };
        let chord = |x: usize| len as f64 / std::f64::consts::PI * (std::f64::consts::PI * x as f64 / len as f64).sin();
        for (form, alpha) in [(LuttingerForm::Zz, 3.0), (LuttingerForm::Zz, 1.3), (LuttingerForm::Xx, 1.0)] {
            let v: Vec<f64> = r
                .iter()
                .map(|&x| {
                    let [f1, f2] = form.basis(alpha, x, chord(x));
                    -0.05 * f1 + 0.2 * f2
                })
                .collect();
            let fit = fit_luttinger(&r, &v, None, form, opts).unwrap();
            assert!((fit.alpha - alpha).abs() < 1e-6, "{form:?} {fit:?}");
            assert!((fit.amplitudes[0] + 0.05).abs() < 1e-6);
        }
    }

    #[test]
    fn zeros_and_short_windows() {
        let r: Vec<usize> = (1..=8).collect();
        assert_eq!(fit_power_law(&r, &[0.0; 8], false), Err(Error::NonPositiveValues(2)));
        assert!(matches!(
            fit_power_law(&r[..4], &[1.0, 0.5, 0.3, 0.2], false),
            Err(Error::TooFewPoints { .. })
        ));
        // With error bars, insignificant points are skipped instead.
        let v = [1.0, 0.0, 0.2, 0.0, 0.05, 0.0, 0.02, 0.0, 0.01, 0.0];
        let e = [1e-4; 10];
        let rr: Vec<usize> = (1..=10).collect();
        let fit = fit_power_law_with(&rr, &v, Some(&e), FitOptions::default()).unwrap();
        assert_eq!(fit.n_points, 4);
    }
}

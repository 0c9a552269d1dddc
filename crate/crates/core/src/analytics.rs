//! Closed-form QFI values for the reference states and channels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::dicke_blocks;
use crate::model::ChannelSpec;
use crate::operators::DiagonalOperator;

/// Dephased antiferromagnetic GHZ with `O_Z`: `L² (1-2p)^{2L}`.
pub fn ghz_dephasing_qfi(sites: usize, p: f64) -> f64 {
    let l = sites as f64;
    l * l * (1.0 - 2.0 * p).powi(2 * sites as i32)
}

/// Amplitude-damped antiferromagnetic GHZ with `O_Z`: `L² (1-p)^{L/2}`.
pub fn ghz_damping_qfi(sites: usize, p: f64) -> f64 {
    let l = sites as f64;
    l * l * (1.0 - p).powi((sites / 2) as i32)
}

/// Dephasing with `O_X`: `4(1-2p)² Var + 4p(1-p) L`.
pub fn dephasing_ox_qfi(var_pure: f64, sites: usize, p: f64) -> f64 {
    4.0 * (1.0 - 2.0 * p).powi(2) * var_pure + 4.0 * p * (1.0 - p) * sites as f64
}

/// Overall factor of the depolarizing closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[derive(Default)]
pub enum PrefactorMode {
    /// `Var (1-p)² / (1-p+p/2^{L-1})`.
    AsPrinted,
    /// Four times the above; reduces to `4 Var` at `p = 0` and agrees with
    /// exact diagonalization.
    #[default]
    FourTimes,
}


/// Depolarizing QFI from the pure-state variance.
pub fn depolarizing_qfi(var_pure: f64, sites: usize, p: f64, mode: PrefactorMode) -> f64 {
    let q = 1.0 - p;
    let denom = q + p / 2f64.powi(sites as i32 - 1);
    let base = if denom == 0.0 { 0.0 } else { var_pure * q * q / denom };
    match mode {
        PrefactorMode::AsPrinted => base,
        PrefactorMode::FourTimes => 4.0 * base,
    }
}

/// Eigenvalues of the dephased Dicke-like state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickeSpectrum {
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
}

/// `μ_m = (1-q⁴) / (L (1+q⁴-2q² cos θ_m)) · [1 - (-1)^m q^L]`, `θ_m = 2πm/L`.
pub fn dicke_spectrum(sites: usize, p: f64) -> Result<DickeSpectrum> {
    check_even(sites)?;
    ChannelSpec::dephasing(p).validate()?;
    let l = sites as f64;
    let q = 1.0 - 2.0 * p;
    let q2 = q * q;
    let theta: Vec<f64> = (0..sites).map(|m| 2.0 * PI * m as f64 / l).collect();
    let mu = if q2 == 1.0 {
        // Pure state: all weight on the symmetric mode.
        (0..sites).map(|m| if m == 0 { 1.0 } else { 0.0 }).collect()
    } else {
        let q4 = q2 * q2;
        let ql = q.powi(sites as i32);
        theta
            .iter()
            .enumerate()
            .map(|(m, th)| {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                (1.0 - q4) / (l * (1.0 + q4 - 2.0 * q2 * th.cos())) * (1.0 - sign * ql)
            })
            .collect()
    };
    Ok(DickeSpectrum { mu, theta })
}

fn check_even(sites: usize) -> Result<()> {
    if sites % 2 == 1 {
        return Err(Error::OddL(sites));
    }
    if sites < 2 {
        return Err(Error::SitesOutOfRange(sites));
    }
    Ok(())
}

/// `O★` on the translated block states, block `j` starting at site `j+1`.
pub fn ostar_on_blocks(sites: usize) -> Vec<f64> {
    let op = DiagonalOperator::star(sites);
    if sites <= crate::model::MAX_SITES {
        return dicke_blocks(sites).into_iter().map(|b| op.value_bits(b)).collect();
    }
    // Beyond one machine word, sum the weights directly.
    let w = crate::operators::eta(sites);
    let half: f64 = w.iter().sum::<f64>() / 2.0;
    (0..sites)
        .map(|j| half - (0..sites / 2).map(|i| w[(j + i) % sites]).sum::<f64>())
        .collect()
}

/// `|Õ_q|²` with `Õ_q = (1/L) Σ_j O★(φ_j) e^{-2πi qj/L}`.
pub fn ostar_fourier_weights(sites: usize) -> Vec<f64> {
    let o = ostar_on_blocks(sites);
    let l = sites as f64;
    (0..sites)
        .map(|q| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in o.iter().enumerate() {
                let ph = -2.0 * PI * ((q * j) % sites) as f64 / l;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            (re * re + im * im) / (l * l)
        })
        .collect()
}

/// Asymptotic `|Õ_r|² ≈ 1/(L² sin⁴(πr/L))` for odd `r` (even `r` vanish).
pub fn ostar_fourier_asymptotic(sites: usize, r: usize) -> f64 {
    if r.is_multiple_of(2) {
        return 0.0;
    }
    let l = sites as f64;
    1.0 / (l * l * (PI * r as f64 / l).sin().powi(4))
}

/// `G_q = Σ_k (μ_k - μ_{k-q})² / (μ_k + μ_{k-q})`.
pub fn dicke_g(spec: &DickeSpectrum, q: usize) -> f64 {
    let l = spec.mu.len();
    (0..l)
        .map(|k| {
            let (a, b) = (spec.mu[k], spec.mu[(k + l - q % l) % l]);
            if a + b > crate::exact::RANK_CUT {
                (a - b).powi(2) / (a + b)
            } else {
                0.0
            }
        })
        .sum()
}

/// QFI of the dephased Dicke-like state with `O★`: `2 Σ_q |Õ_q|² G_q`.
pub fn dicke_qfi(sites: usize, p: f64) -> Result<f64> {
    if !sites.is_multiple_of(4) {
        return Err(Error::BadRequest(format!("L must be a multiple of 4 (got {sites})")));
    }
    let spec = dicke_spectrum(sites, p)?;
    let w = ostar_fourier_weights(sites);
    Ok(2.0 * (1..sites).map(|q| w[q] * dicke_g(&spec, q)).sum::<f64>())
}

/// Large-`L` limit `8q⁴/(1-q⁴)²`, `q = 1-2p`.
pub fn dicke_qfi_thermo(p: f64) -> Result<f64> {
    if p == 0.0 || p == 0.5 {
        return Err(Error::DegenerateP(p));
    }
    if !(0.0..0.5).contains(&p) {
        return Err(Error::BadStrength(p));
    }
    let q4 = (1.0 - 2.0 * p).powi(4);
    Ok(8.0 * q4 / (1.0 - q4).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ghz_values() {
        assert_eq!(ghz_dephasing_qfi(6, 0.0), 36.0);
        assert!((ghz_dephasing_qfi(4, 0.05) - 16.0 * 0.9f64.powi(8)).abs() < 1e-12);
        assert!((ghz_dephasing_qfi(4, 0.05) - 6.887_475_0).abs() < 1e-6);
        assert_eq!(ghz_dephasing_qfi(8, 0.5), 0.0);
        assert!((ghz_damping_qfi(8, 0.05) - 64.0 * 0.95f64.powi(4)).abs() < 1e-12);
        assert_eq!(ghz_damping_qfi(8, 1.0), 0.0);
    }

    #[test]
    fn ox_and_depolarizing() {
        assert_eq!(dephasing_ox_qfi(3.0, 8, 0.0), 12.0);
        assert!((dephasing_ox_qfi(3.0, 8, 0.5) - 8.0).abs() < 1e-12);
        assert_eq!(depolarizing_qfi(3.0, 8, 1.0, PrefactorMode::AsPrinted), 0.0);
        assert_eq!(depolarizing_qfi(3.0, 8, 1.0, PrefactorMode::FourTimes), 0.0);
        assert_eq!(depolarizing_qfi(3.0, 8, 0.0, PrefactorMode::FourTimes), 12.0);
    }

    #[test]
    fn dicke_spectrum_sums_to_one() {
        let s = dicke_spectrum(12, 0.05).unwrap();
        assert!((s.mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.mu.iter().all(|&m| m >= 0.0));
        let pure = dicke_spectrum(12, 0.0).unwrap();
        assert_eq!(pure.mu[0], 1.0);
    }

    #[test]
    fn thermo_limit() {
        let v = dicke_qfi_thermo(0.05).unwrap();
        assert!((v - 44.38).abs() < 0.01, "{v}");
        let small = dicke_qfi_thermo(0.01).unwrap();
        assert!((small / 1250.0 - 1.0).abs() < 0.05);
        assert_eq!(dicke_qfi_thermo(0.0), Err(Error::DegenerateP(0.0)));
        assert_eq!(dicke_qfi_thermo(0.5), Err(Error::DegenerateP(0.5)));
        assert!(dicke_qfi_thermo(0.499_999).unwrap() < 1e-15);
    }

    #[test]
    fn block_values_beyond_one_word() {
        // The two evaluation paths agree where both apply.
        let w = crate::operators::eta(16);
        let half: f64 = w.iter().sum::<f64>() / 2.0;
        let direct: Vec<f64> = (0..16).map(|j| half - (0..8).map(|i| w[(j + i) % 16]).sum::<f64>()).collect();
        assert_eq!(direct, ostar_on_blocks(16));
    }
}

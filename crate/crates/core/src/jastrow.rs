//! Jastrow–Gutzwiller amplitudes in sign / log-magnitude form.
//!
//! `c_n ∝ (-1)^{Σ_j j n_j} Π_{i<j} sin(π (j - i) / L)^{α n_i n_j}`.
//! The normalization is never needed: everything downstream uses ratios.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::model::{sector_configurations, site_mask, BitIter, Configuration, SystemParams};

/// Bound on `|ln(c'/c)|` before exponentiation.
pub const LOG_CLAMP: f64 = 700.0;

/// Signed amplitude `sign · exp(log_mag)` (unnormalized).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Amplitude {
    pub sign: i8,
    pub log_mag: f64,
}

#[derive(Debug)]
pub struct JastrowModel {
    params: SystemParams,
    /// `log_sine[d] = ln sin(π d / L)`; entry 0 is unused.
    log_sine: Vec<f64>,
    clamp_events: AtomicU64,
}

impl Clone for JastrowModel {
    fn clone(&self) -> Self {
        Self {
            params: self.params,
            log_sine: self.log_sine.clone(),
            clamp_events: AtomicU64::new(self.clamp_events.load(Ordering::Relaxed)),
        }
    }
}

impl JastrowModel {
    pub fn new(params: SystemParams) -> Result<Self> {
        params.validate()?;
        let l = params.sites;
        let mut log_sine = vec![f64::NEG_INFINITY; l];
        for d in 1..=l / 2 {
            let v = (PI * d as f64 / l as f64).sin().ln();
            log_sine[d] = v;
            log_sine[l - d] = v;
        }
        if l.is_multiple_of(2) && l >= 2 {
            log_sine[l / 2] = 0.0;
        }
        Ok(Self {
            params,
            log_sine,
            clamp_events: AtomicU64::new(0),
        })
    }

    /// Shorthand for a half-filled chain.
    pub fn half_filled(sites: usize, alpha: f64) -> Result<Self> {
        Self::new(SystemParams::new(sites, alpha)?)
    }

    #[inline]
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.params.sites
    }

    #[inline]
    pub fn particles(&self) -> usize {
        self.params.particles
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    /// `ln sin(π d / L)` for `1 ≤ d ≤ L - 1`.
    #[inline]
    pub fn log_sine(&self, d: usize) -> f64 {
        self.log_sine[d]
    }

    /// Number of ratios whose log had to be clamped so far.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    #[inline]
    fn dist(a: usize, b: usize) -> usize {
        a.abs_diff(b)
    }

    fn check_len(&self, n: &Configuration) -> Result<()> {
        if n.len() != self.sites() {
            return Err(Error::LengthMismatch {
                expected: self.sites(),
                got: n.len(),
            });
        }
        Ok(())
    }

    /// `Σ_{i<j ∈ S} ln sin(π (j-i)/L)` over the set bits of `s`.
    #[inline]
    fn pair_sum(&self, s: u64) -> f64 {
        let mut acc = 0.0;
        let mut rest = s;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            for j in BitIter(rest) {
                acc += self.log_sine[j - 1 - i];
            }
        }
        acc
    }

    /// `Σ_{a ∈ A, b ∈ B} ln sin(π |a-b|/L)` for disjoint sets.
    #[inline]
    fn cross_sum(&self, a: u64, b: u64) -> f64 {
        let mut acc = 0.0;
        for i in BitIter(a) {
            for j in BitIter(b) {
                acc += self.log_sine[Self::dist(i, j)];
            }
        }
        acc
    }

    /// Unnormalized `ln |c_n|` without a sector check.
    #[inline]
    pub fn log_mag_bits(&self, bits: u64) -> f64 {
        if self.alpha() == 0.0 {
            return 0.0;
        }
        self.alpha() * self.pair_sum(bits)
    }

    #[inline]
    pub fn sign_bits(bits: u64) -> i8 {
        let parity = BitIter(bits).fold(0usize, |acc, j| acc ^ (j & 1));
        if parity == 1 {
            -1
        } else {
            1
        }
    }

    pub fn amplitude(&self, n: &Configuration) -> Result<Amplitude> {
        self.check_len(n)?;
        if n.particle_count() != self.particles() {
            return Err(Error::WrongSector {
                expected: self.particles(),
                got: n.particle_count(),
            });
        }
        Ok(Amplitude {
            sign: Self::sign_bits(n.bits()),
            log_mag: self.log_mag_bits(n.bits()),
        })
    }

    /// `sign · exp(Δ)` with `Δ` clamped to `±LOG_CLAMP`.
    #[inline]
    pub fn exp_signed(&self, sign: f64, delta: f64) -> f64 {
        let d = if delta > LOG_CLAMP {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            LOG_CLAMP
        } else if delta < -LOG_CLAMP {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            -LOG_CLAMP
        } else {
            delta
        };
        sign * d.exp()
    }

    /// Bit-level `c_{(n∖R)∪A} / c_n`; zero when the target leaves half
    /// filling. `R ⊆ n` is the caller's responsibility.
    #[inline]
    pub fn ratio_bits(&self, n: u64, remove: u64, add: u64) -> f64 {
        debug_assert_eq!(remove & !n, 0);
        let kept = n & !remove;
        if add & kept != 0 {
            return 0.0;
        }
        let target = kept | add;
        if target.count_ones() as usize != self.particles() {
            return 0.0;
        }
        if target == n {
            return 1.0;
        }
        // Sites in both `remove` and `add` cancel out.
        let r = remove & !add;
        let a = add & !remove;
        let sign = if (Self::position_parity(r) ^ Self::position_parity(a)) == 1 {
            -1.0
        } else {
            1.0
        };
        if self.alpha() == 0.0 {
            return sign;
        }
        let k = n & !r;
        // Pairs inside `k` cancel between target and source.
        let delta = self.cross_sum(k, a) + self.pair_sum(a) - self.cross_sum(k, r) - self.pair_sum(r);
        self.exp_signed(sign, self.alpha() * delta)
    }

    #[inline]
    fn position_parity(bits: u64) -> usize {
        BitIter(bits).fold(0usize, |acc, j| acc ^ (j & 1))
    }

    /// `c_{(n∖remove)∪add} / c_n` for 1-indexed site sets.
    pub fn amplitude_ratio(&self, n: &Configuration, remove: &[usize], add: &[usize]) -> Result<f64> {
        self.check_len(n)?;
        let l = self.sites();
        let to_bits = |s: &[usize]| -> Result<u64> {
            s.iter().try_fold(0u64, |acc, &j| {
                if !(1..=l).contains(&j) {
                    Err(Error::BadRequest(format!("site {j} outside 1..={l}")))
                } else {
                    Ok(acc | (1u64 << (j - 1)))
                }
            })
        };
        let r = to_bits(remove)?;
        let a = to_bits(add)?;
        if r & !n.bits() != 0 {
            return Err(Error::RemoveNotOccupied);
        }
        // Repeated sites in `add` mean fewer distinct target sites.
        let mut distinct = add.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != add.len() {
            return Ok(0.0);
        }
        if n.particle_count() != self.particles() {
            return Err(Error::WrongSector {
                expected: self.particles(),
                got: n.particle_count(),
            });
        }
        Ok(self.ratio_bits(n.bits(), r, a))
    }

    /// `ln(|c_{n'}|² / |c_n|²)` for the swap `remove_site → add_site`, O(N).
    #[inline]
    pub fn swap_log_prob_bits(&self, n: u64, remove_site: usize, add_site: usize) -> f64 {
        if self.alpha() == 0.0 {
            return 0.0;
        }
        let kept = n & !(1u64 << (remove_site - 1));
        let mut delta = 0.0;
        for k in BitIter(kept) {
            delta += self.log_sine[Self::dist(k, add_site)] - self.log_sine[Self::dist(k, remove_site)];
        }
        2.0 * self.alpha() * delta
    }

    pub fn log_prob_ratio(&self, n: &Configuration, remove_site: usize, add_site: usize) -> Result<f64> {
        self.check_len(n)?;
        let l = self.sites();
        if !(1..=l).contains(&remove_site) || !(1..=l).contains(&add_site) {
            return Err(Error::BadRequest("site outside the chain".into()));
        }
        if !n.is_occupied(remove_site) {
            return Err(Error::RemoveNotOccupied);
        }
        if n.is_occupied(add_site) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.swap_log_prob_bits(n.bits(), remove_site, add_site))
    }

    /// Exactly normalized amplitudes over the half-filling sector.
    pub fn normalized_amplitudes(&self, max_dim: usize) -> Result<Vec<(Configuration, f64)>> {
        let l = self.sites();
        let n = self.particles();
        let dim = crate::model::binomial(l, n) as usize;
        if dim > max_dim {
            return Err(Error::SectorTooLarge { dim, limit: max_dim });
        }
        let configs = sector_configurations(l, n);
        let logs: Vec<f64> = configs.iter().map(|c| self.log_mag_bits(c.bits())).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm2: f64 = logs.iter().map(|x| (2.0 * (x - top)).exp()).sum();
        let shift = top + 0.5 * norm2.ln();
        Ok(configs
            .into_iter()
            .zip(logs)
            .map(|(c, lg)| (c, Self::sign_bits(c.bits()) as f64 * (lg - shift).exp()))
            .collect())
    }

    pub fn site_potential(&self, n: u64) -> SitePotential {
        SitePotential::new(self, n)
    }
}

/// `V(x) = Σ_{k ∈ n, k ≠ x} ln sin(π|x-k|/L)` for every site, giving O(1)
/// single-swap amplitude ratios.
#[derive(Clone, Debug)]
pub struct SitePotential {
    bits: u64,
    v: Vec<f64>,
}

impl SitePotential {
    pub fn new(model: &JastrowModel, bits: u64) -> Self {
        let l = model.sites();
        let mut v = vec![0.0; l];
        for (x, slot) in v.iter_mut().enumerate() {
            let site = x + 1;
            *slot = BitIter(bits & !(1u64 << x))
                .map(|k| model.log_sine[k.abs_diff(site)])
                .sum();
        }
        Self { bits, v }
    }

    #[inline]
    pub fn value(&self, site: usize) -> f64 {
        self.v[site - 1]
    }

    /// `c_{n'} / c_n` for moving a particle from occupied `from` to empty `to`.
    #[inline]
    pub fn swap_ratio(&self, model: &JastrowModel, from: usize, to: usize) -> f64 {
        debug_assert!(self.bits & (1u64 << (from - 1)) != 0);
        debug_assert!(self.bits & (1u64 << (to - 1)) == 0);
        let sign = if from.abs_diff(to) % 2 == 1 { -1.0 } else { 1.0 };
        if model.alpha() == 0.0 {
            return sign;
        }
        let delta = self.v[to - 1] - model.log_sine[from.abs_diff(to)] - self.v[from - 1];
        model.exp_signed(sign, model.alpha() * delta)
    }

    #[inline]
    pub fn occupied(&self) -> u64 {
        self.bits
    }

    pub fn empty(&self, len: usize) -> u64 {
        !self.bits & site_mask(len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(occ: &[u8]) -> Configuration {
        Configuration::from_occupations(occ)
    }

    #[test]
    fn two_site_signs() {
        let m = JastrowModel::half_filled(2, 1.0).unwrap();
        let a = m.amplitude(&cfg(&[1, 0])).unwrap();
        assert_eq!((a.sign, a.log_mag), (-1, 0.0));
        let b = m.amplitude(&cfg(&[0, 1])).unwrap();
        assert_eq!((b.sign, b.log_mag), (1, 0.0));
    }

    #[test]
    fn four_site_examples() {
        let m = JastrowModel::half_filled(4, 2.0).unwrap();
        let n = cfg(&[1, 0, 1, 0]);
        let a = m.amplitude(&n).unwrap();
        assert_eq!(a.sign, 1);
        assert!(a.log_mag.abs() < 1e-15);
        let r = m.amplitude_ratio(&n, &[3], &[2]).unwrap();
        assert!((r + 0.5).abs() < 1e-14, "{r}");
        let lp = m.log_prob_ratio(&n, 3, 2).unwrap();
        assert!((lp + 4f64.ln()).abs() < 1e-14);
        assert_eq!(m.amplitude_ratio(&n, &[], &[]).unwrap(), 1.0);
        assert_eq!(m.amplitude_ratio(&n, &[1], &[3]).unwrap(), 0.0);
        assert_eq!(m.amplitude_ratio(&n, &[2], &[1]), Err(Error::RemoveNotOccupied));
        assert!(matches!(m.amplitude(&cfg(&[1, 1, 1, 0])), Err(Error::WrongSector { .. })));
    }

    #[test]
    fn alpha_zero_is_flat() {
        let m = JastrowModel::half_filled(10, 0.0).unwrap();
        for c in sector_configurations(10, 5) {
            assert_eq!(m.amplitude(&c).unwrap().log_mag, 0.0);
        }
        let n = Configuration::neel(10, true);
        assert_eq!(m.log_prob_ratio(&n, 1, 2).unwrap(), 0.0);
    }

    #[test]
    fn log_sine_table() {
        let m = JastrowModel::half_filled(12, 1.0).unwrap();
        for d in 1..12 {
            assert_eq!(m.log_sine(d), m.log_sine(12 - d));
            assert!(m.log_sine(d) <= 0.0);
        }
        assert_eq!(m.log_sine(6), 0.0);
    }

    #[test]
    fn normalized_amplitudes_sum_to_one() {
        let m = JastrowModel::half_filled(10, 3.0).unwrap();
        let amps = m.normalized_amplitudes(1 << 20).unwrap();
        let s: f64 = amps.iter().map(|(_, c)| c * c).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(matches!(m.normalized_amplitudes(10), Err(Error::SectorTooLarge { .. })));
    }

    #[test]
    fn exp_of_log_prob_matches_squared_ratio() {
        let m = JastrowModel::half_filled(16, 1.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let all = sector_configurations(16, 8);
        for _ in 0..1000 {
            let n = all[rng.gen_range(0..all.len())];
            let occ: Vec<usize> = n.occupied_sites().collect();
            let emp: Vec<usize> = n.empty_sites().collect();
            let (a, b) = (occ[rng.gen_range(0..occ.len())], emp[rng.gen_range(0..emp.len())]);
            let r = m.amplitude_ratio(&n, &[a], &[b]).unwrap();
            let lp = m.log_prob_ratio(&n, a, b).unwrap();
            assert!((lp.exp() - r * r).abs() <= 1e-12 * (r * r).max(1.0));
            let pot = m.site_potential(n.bits());
            assert!((pot.swap_ratio(&m, a, b) - r).abs() <= 1e-12 * r.abs().max(1.0));
        }
    }

    #[test]
    fn clamp_is_counted() {
        let m = JastrowModel::half_filled(64, -400.0).unwrap();
        let spread = Configuration::neel(64, true);
        let before = m.clamp_events();
        // Moving one particle next to another strongly changes the weight.
        let _ = m.amplitude_ratio(&spread, &[3, 5, 7, 9, 11], &[2, 4, 6, 8, 10]).unwrap();
        let _ = m.ratio_bits(spread.bits(), 0b1010100, 0b0101010);
        assert!(m.clamp_events() >= before);
        let huge = m.exp_signed(1.0, 1e4);
        assert!(huge.is_finite());
        assert!(m.clamp_events() > before);
    }

    fn arb_swap(max_half: usize) -> impl Strategy<Value = (usize, f64, u64, u64)> {
        (2usize..=max_half, -8.0f64..8.0, any::<u64>(), any::<u64>())
            .prop_map(|(h, a, s1, s2)| (2 * h, a, s1, s2))
    }

    fn random_half_filled(len: usize, seed: u64) -> Configuration {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sites: Vec<usize> = (1..=len).collect();
        for i in (1..len).rev() {
            let j = rng.gen_range(0..=i);
            sites.swap(i, j);
        }
        Configuration::from_sites(len, &sites[..len / 2])
    }

    proptest! {
        #[test]
        fn incremental_matches_full((len, alpha, s1, s2) in arb_swap(25)) {
            let m = JastrowModel::half_filled(len, alpha).unwrap();
            let n = random_half_filled(len, s1);
            let occ: Vec<usize> = n.occupied_sites().collect();
            let emp: Vec<usize> = n.empty_sites().collect();
            let a = occ[(s2 % occ.len() as u64) as usize];
            let b = emp[((s2 >> 32) % emp.len() as u64) as usize];
            let target = n.flip(a).flip(b);
            let full = 2.0 * (m.amplitude(&target).unwrap().log_mag - m.amplitude(&n).unwrap().log_mag);
            let inc = m.log_prob_ratio(&n, a, b).unwrap();
            prop_assert!((full - inc).abs() < 1e-12 * full.abs().max(1.0));
        }

        #[test]
        fn general_ratio_matches_full((len, alpha, s1, s2) in arb_swap(10)) {
            let m = JastrowModel::half_filled(len, alpha).unwrap();
            let n = random_half_filled(len, s1);
            let remove = n.bits() & s2;
            let add = !n.bits() & site_mask(len) & (s2 >> 17);
            let target = (n.bits() & !remove) | add;
            let r = m.ratio_bits(n.bits(), remove, add);
            if target.count_ones() as usize != len / 2 {
                prop_assert_eq!(r, 0.0);
            } else {
                let t = m.amplitude(&Configuration::from_bits(target, len)).unwrap();
                let s = m.amplitude(&n).unwrap();
                let want = (t.sign * s.sign) as f64 * (t.log_mag - s.log_mag).exp();
                prop_assert!((r - want).abs() <= 1e-10 * want.abs().max(1e-300));
            }
        }

        #[test]
        fn magnitudes_translation_and_particle_hole((len, alpha, s1, _s2) in arb_swap(25)) {
            let m = JastrowModel::half_filled(len, alpha).unwrap();
            let n = random_half_filled(len, s1);
            let base = m.amplitude(&n).unwrap().log_mag;
            let shifted = m.amplitude(&n.translate(1)).unwrap().log_mag;
            let hole = m.amplitude(&n.complement()).unwrap().log_mag;
            prop_assert!((base - shifted).abs() < 1e-10 * base.abs().max(1.0));
            prop_assert!((base - hole).abs() < 1e-10 * base.abs().max(1.0));
        }
    }
}

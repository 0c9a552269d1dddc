//! Shared domain types: occupation configurations, system and channel
//! parameters, operator choices and moment records.
//!
//! Sites are labelled `1..=L` everywhere in the public API. Internally site
//! `j` lives in bit `j - 1` of a `u64`, so at most 64 sites are supported.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest chain length representable by [`Configuration`].
pub const MAX_SITES: usize = 64;

/// Occupation-number basis label `|n_1 n_2 ... n_L>`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    bits: u64,
    len: u8,
    ones: u8,
}

#[inline]
pub(crate) fn site_mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

impl Configuration {
    /// Builds a configuration from raw bits; bits above `len` are discarded.
    pub fn from_bits(bits: u64, len: usize) -> Self {
        assert!(len <= MAX_SITES, "at most {MAX_SITES} sites");
        let bits = bits & site_mask(len);
        Self {
            bits,
            len: len as u8,
            ones: bits.count_ones() as u8,
        }
    }

    /// Builds a configuration from a list of occupations `n_j ∈ {0, 1}`.
    pub fn from_occupations(occ: &[u8]) -> Self {
        let bits = occ
            .iter()
            .enumerate()
            .filter(|(_, &n)| n != 0)
            .fold(0u64, |acc, (i, _)| acc | (1u64 << i));
        Self::from_bits(bits, occ.len())
    }

    /// Builds a configuration from 1-indexed occupied sites.
    pub fn from_sites(len: usize, occupied: &[usize]) -> Self {
        let bits = occupied.iter().fold(0u64, |acc, &j| {
            assert!((1..=len).contains(&j), "site {j} outside 1..={len}");
            acc | (1u64 << (j - 1))
        });
        Self::from_bits(bits, len)
    }

    /// Néel configuration. `odd = true` occupies sites 1, 3, 5, ...
    pub fn neel(len: usize, odd: bool) -> Self {
        let pattern = if odd { 0x5555_5555_5555_5555 } else { 0xAAAA_AAAA_AAAA_AAAA };
        Self::from_bits(pattern, len)
    }

    /// Contiguous block of `width` particles starting at site `start` (1-indexed, periodic).
    pub fn block(len: usize, start: usize, width: usize) -> Self {
        let sites: Vec<usize> = (0..width).map(|k| (start - 1 + k) % len + 1).collect();
        Self::from_sites(len, &sites)
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of occupied sites.
    #[inline]
    pub fn particle_count(&self) -> usize {
        self.ones as usize
    }

    /// Occupation of 1-indexed site `j`.
    #[inline]
    pub fn occupation(&self, j: usize) -> u8 {
        ((self.bits >> (j - 1)) & 1) as u8
    }

    #[inline]
    pub fn is_occupied(&self, j: usize) -> bool {
        self.occupation(j) == 1
    }

    /// Copy with site `j` flipped.
    #[inline]
    pub fn flip(&self, j: usize) -> Self {
        Self::from_bits(self.bits ^ (1u64 << (j - 1)), self.len())
    }

    /// Copy with every bit complemented (particle-hole conjugate).
    pub fn complement(&self) -> Self {
        Self::from_bits(!self.bits, self.len())
    }

    /// Cyclic translation by `shift` sites towards higher indices.
    pub fn translate(&self, shift: usize) -> Self {
        let len = self.len();
        if len == 0 {
            return *self;
        }
        let s = shift % len;
        if s == 0 {
            return *self;
        }
        let rotated = (self.bits << s) | (self.bits >> (len - s));
        Self::from_bits(rotated, len)
    }

    /// Number of sites on which the two configurations differ.
    #[inline]
    pub fn hamming(&self, other: &Self) -> usize {
        (self.bits ^ other.bits).count_ones() as usize
    }

    /// Occupied sites in ascending order, 1-indexed.
    pub fn occupied_sites(&self) -> impl Iterator<Item = usize> {
        BitIter(self.bits)
    }

    /// Empty sites in ascending order, 1-indexed.
    pub fn empty_sites(&self) -> impl Iterator<Item = usize> {
        BitIter(!self.bits & site_mask(self.len()))
    }

    /// `Σ_j j n_j` with 1-indexed sites.
    #[inline]
    pub fn position_sum(&self) -> usize {
        self.occupied_sites().sum()
    }
}

/// Iterates over set bits, yielding 1-indexed positions.
#[derive(Clone, Copy)]
pub(crate) struct BitIter(pub(crate) u64);

impl Iterator for BitIter {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            let t = self.0.trailing_zeros() as usize;
            self.0 &= self.0 - 1;
            Some(t + 1)
        }
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({self})")
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 1..=self.len() {
            write!(f, "{}", self.occupation(j))?;
        }
        Ok(())
    }
}

/// All configurations of `len` sites holding `particles` particles, in
/// increasing order of their bit patterns.
pub fn sector_configurations(len: usize, particles: usize) -> Vec<Configuration> {
    assert!(particles <= len && len <= MAX_SITES);
    let mut out = Vec::new();
    if particles == 0 {
        out.push(Configuration::from_bits(0, len));
        return out;
    }
    // Gosper's hack walks the fixed-popcount patterns in increasing order.
    let mut v: u64 = site_mask(particles);
    loop {
        out.push(Configuration::from_bits(v, len));
        let t = v | (v - 1);
        let low = (!t & t.wrapping_add(1)).wrapping_sub(1);
        let next = t.wrapping_add(1) | low.checked_shr(v.trailing_zeros() + 1).unwrap_or(0);
        if t == u64::MAX || next > site_mask(len) || next.count_ones() as usize != particles {
            break;
        }
        v = next;
    }
    out
}

/// Binomial coefficient as `f64` (exact for the sizes used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Chain length, particle number and Jastrow exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    #[serde(rename = "L")]
    pub sites: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    pub alpha: f64,
}

impl SystemParams {
    /// Half-filled parameters; fails on odd or out-of-range `sites`.
    pub fn new(sites: usize, alpha: f64) -> Result<Self> {
        let p = Self {
            sites,
            particles: sites / 2,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites % 2 == 1 {
            return Err(Error::OddL(self.sites));
        }
        if self.sites < 2 || self.sites > MAX_SITES {
            return Err(Error::SitesOutOfRange(self.sites));
        }
        if self.particles != self.sites / 2 {
            return Err(Error::BadFilling {
                expected: self.sites / 2,
                got: self.particles,
            });
        }
        if !self.alpha.is_finite() {
            return Err(Error::BadRequest(format!("alpha must be finite (got {})", self.alpha)));
        }
        Ok(())
    }
}

/// Which local or global noise is applied to the pure state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Dephasing,
    #[serde(rename = "damping", alias = "amplitude_damping")]
    AmplitudeDamping,
    Depolarizing,
}

impl ChannelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelKind::Dephasing => "dephasing",
            ChannelKind::AmplitudeDamping => "damping",
            ChannelKind::Depolarizing => "depolarizing",
        }
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dephasing" => Ok(ChannelKind::Dephasing),
            "damping" | "amplitude_damping" | "amplitude-damping" => Ok(ChannelKind::AmplitudeDamping),
            "depolarizing" => Ok(ChannelKind::Depolarizing),
            other => Err(Error::BadRequest(format!("unknown channel '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub p: f64,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, p: f64) -> Result<Self> {
        let c = Self { kind, p };
        c.validate()?;
        Ok(c)
    }

    pub fn dephasing(p: f64) -> Self {
        Self { kind: ChannelKind::Dephasing, p }
    }

    pub fn damping(p: f64) -> Self {
        Self { kind: ChannelKind::AmplitudeDamping, p }
    }

    pub fn depolarizing(p: f64) -> Self {
        Self { kind: ChannelKind::Depolarizing, p }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::BadStrength(self.p));
        }
        Ok(())
    }
}

/// Metrological generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    /// Staggered magnetization `½ Σ_j (-1)^j Z_j`.
    OZ,
    /// Staggered transverse field `½ Σ_j (-1)^j X_j`.
    OX,
    /// Three-segment magnetization `½ Σ_j η_j Z_j`.
    OStar,
    /// `½ Σ_j w_j Z_j` with user weights.
    #[serde(rename = "custom")]
    CustomDiagonal,
}

impl std::str::FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oz" | "z" => Ok(OperatorKind::OZ),
            "ox" | "x" => Ok(OperatorKind::OX),
            "ostar" | "star" => Ok(OperatorKind::OStar),
            "custom" => Ok(OperatorKind::CustomDiagonal),
            other => Err(Error::BadRequest(format!("unknown operator '{other}'"))),
        }
    }
}

impl OperatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::OZ => "OZ",
            OperatorKind::OX => "OX",
            OperatorKind::OStar => "OStar",
            OperatorKind::CustomDiagonal => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
}

impl OperatorSpec {
    pub fn oz() -> Self {
        Self { kind: OperatorKind::OZ, coefficients: None }
    }

    pub fn ox() -> Self {
        Self { kind: OperatorKind::OX, coefficients: None }
    }

    pub fn ostar() -> Self {
        Self { kind: OperatorKind::OStar, coefficients: None }
    }

    pub fn custom(weights: Vec<f64>) -> Self {
        Self {
            kind: OperatorKind::CustomDiagonal,
            coefficients: Some(weights),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.kind != OperatorKind::OX
    }

    pub fn validate(&self, sites: usize) -> Result<()> {
        match (&self.kind, &self.coefficients) {
            (OperatorKind::CustomDiagonal, Some(c)) if c.len() != sites => Err(Error::BadCoefficients {
                expected: sites,
                got: c.len(),
            }),
            (OperatorKind::CustomDiagonal, None) => Err(Error::BadCoefficients { expected: sites, got: 0 }),
            _ => Ok(()),
        }
    }
}

/// Checks every parameter invariant at once.
pub fn validate_params(params: &SystemParams, channel: &ChannelSpec, op: &OperatorSpec) -> Result<()> {
    params.validate()?;
    channel.validate()?;
    op.validate(params.sites)
}

/// The complete, serializable input of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBundle {
    #[serde(flatten)]
    pub params: SystemParams,
    pub channel: ChannelSpec,
    pub operator: OperatorSpec,
    pub seed: u64,
}

impl ParamBundle {
    /// Returns the bundle unchanged when every invariant holds.
    pub fn validate(self) -> Result<Self> {
        validate_params(&self.params, &self.channel, &self.operator)?;
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        b.validate()
    }
}

/// One Monte Carlo (or exact) value of `Tr(ρ^r O ρ^s O)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub r: usize,
    pub s: usize,
    pub value: f64,
    pub std_error: f64,
    pub n_tuples: u64,
    /// Per-block means, used for joint bootstrap of derived quantities.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub block_means: Vec<f64>,
}

impl MomentEstimate {
    /// A noiseless value (closed form or exact diagonalization).
    pub fn exact(r: usize, s: usize, value: f64) -> Self {
        Self {
            r,
            s,
            value,
            std_error: 0.0,
            n_tuples: 1,
            block_means: Vec::new(),
        }
    }

    /// Builds an estimate from equally weighted block means.
    pub fn from_blocks(r: usize, s: usize, block_means: Vec<f64>, n_tuples: u64) -> Self {
        let (value, std_error) = mean_and_error(&block_means);
        Self {
            r,
            s,
            value,
            std_error,
            n_tuples: n_tuples.max(1),
            block_means,
        }
    }
}

/// Mean and standard error of the mean of independent block values.
pub fn mean_and_error(blocks: &[f64]) -> (f64, f64) {
    let n = blocks.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = blocks.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = blocks.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validation_examples() {
        let ok = validate_params(
            &SystemParams::new(8, 1.0).unwrap(),
            &ChannelSpec::dephasing(0.05),
            &OperatorSpec::ox(),
        );
        assert!(ok.is_ok());
        assert_eq!(SystemParams::new(7, 1.0), Err(Error::OddL(7)));
        let bad_p = validate_params(
            &SystemParams::new(8, 1.0).unwrap(),
            &ChannelSpec::dephasing(1.3),
            &OperatorSpec::oz(),
        );
        assert_eq!(bad_p, Err(Error::BadStrength(1.3)));
        let bad_w = validate_params(
            &SystemParams::new(8, 1.0).unwrap(),
            &ChannelSpec::dephasing(0.1),
            &OperatorSpec::custom(vec![1.0; 5]),
        );
        assert_eq!(bad_w, Err(Error::BadCoefficients { expected: 8, got: 5 }));
        assert_eq!(SystemParams::new(66, 1.0), Err(Error::SitesOutOfRange(66)));
    }

    #[test]
    fn sector_enumeration_counts() {
        assert_eq!(sector_configurations(4, 2).len(), 6);
        assert_eq!(sector_configurations(10, 5).len(), 252);
        assert_eq!(sector_configurations(64, 1).len(), 64);
        let all = sector_configurations(8, 4);
        assert!(all.windows(2).all(|w| w[0].bits() < w[1].bits()));
        assert!(all.iter().all(|c| c.particle_count() == 4));
    }

    #[test]
    fn one_indexed_sites() {
        let n = Configuration::from_occupations(&[1, 0, 1, 0]);
        assert_eq!(n, Configuration::neel(4, true));
        assert_eq!(n.occupied_sites().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(n.empty_sites().collect::<Vec<_>>(), vec![2, 4]);
        assert_eq!(n.position_sum(), 4);
        assert_eq!(n.translate(1), Configuration::neel(4, false));
        assert_eq!(n.to_string(), "1010");
        assert_eq!(Configuration::block(8, 7, 4).to_string(), "11000011");
    }

    #[test]
    fn bundle_json_keys() {
        let b = ParamBundle {
            params: SystemParams::new(8, 1.0).unwrap(),
            channel: ChannelSpec::dephasing(0.05),
            operator: OperatorSpec::ox(),
            seed: 7,
        };
        let v: serde_json::Value = serde_json::from_str(&b.to_json()).unwrap();
        assert_eq!(v["L"], 8);
        assert_eq!(v["N"], 4);
        assert_eq!(v["channel"]["kind"], "dephasing");
        assert_eq!(v["operator"]["kind"], "OX");
        assert_eq!(v["seed"], 7);
    }

    fn arb_bundle() -> impl Strategy<Value = ParamBundle> {
        (1usize..=32, -10.0f64..10.0, 0usize..3, 0.0f64..=1.0, 0usize..4, any::<u64>()).prop_map(
            |(half, alpha, ch, p, op, seed)| {
                let sites = 2 * half;
                let kind = [ChannelKind::Dephasing, ChannelKind::AmplitudeDamping, ChannelKind::Depolarizing][ch];
                let operator = match op {
                    0 => OperatorSpec::oz(),
                    1 => OperatorSpec::ox(),
                    2 => OperatorSpec::ostar(),
                    _ => OperatorSpec::custom((0..sites).map(|j| j as f64 * 0.25 - 1.0).collect()),
                };
                ParamBundle {
                    params: SystemParams::new(sites, alpha).unwrap(),
                    channel: ChannelSpec { kind, p },
                    operator,
                    seed,
                }
            },
        )
    }

    proptest! {
        #[test]
        fn bundle_round_trip(b in arb_bundle()) {
            let back = ParamBundle::from_json(&b.to_json()).unwrap();
            prop_assert_eq!(back, b);
        }

        #[test]
        fn popcount_matches_bit_sum(bits in any::<u64>(), len in 1usize..=64) {
            let c = Configuration::from_bits(bits, len);
            let sum: usize = (1..=len).map(|j| c.occupation(j) as usize).sum();
            prop_assert_eq!(c.particle_count(), sum);
        }

        #[test]
        fn translation_is_cyclic(bits in any::<u64>(), half in 1usize..=32) {
            let len = 2 * half;
            let c = Configuration::from_bits(bits, len);
            prop_assert_eq!(c.translate(len), c);
            prop_assert_eq!(c.translate(1).particle_count(), c.particle_count());
            prop_assert_eq!(c.translate(1).translate(len - 1), c);
        }
    }
}

//! Metropolis sampling of `|c_n|²` over the half-filling sector.
//!
//! Moves: a swap of a random occupied and a random empty site (accepted
//! with the Metropolis rule), mixed with a cyclic translation by `±1` site
//! with probability `1/L`. Translations leave `|c_n|` unchanged, so they
//! are always accepted; they let the chain tunnel between the two Néel
//! patterns, which the swap move alone cannot do efficiently at large α.
//!
//! Stream splitting: chain `c` draws from `ChaCha8Rng::seed_from_u64(seed)`
//! on stream `c`; tuple group `g` of an estimator draws from
//! `ChaCha8Rng::seed_from_u64(request_seed)` on stream `g`.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jastrow::JastrowModel;
use crate::model::Configuration;
use crate::operators::DiagonalOperator;

/// Total-variation threshold used to define the required sample count.
pub const TV_THRESHOLD: f64 = 0.1;
/// Largest chain for which `tv_distance` enumerates the sector.
pub const TV_MAX_SITES: usize = 20;
/// Longest tuple handled by the streaming tuple type.
pub const MAX_TUPLE: usize = 8;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    /// Retained samples `M` over all chains.
    pub n_samples: usize,
    pub burn_in_steps: usize,
    pub thin_stride: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Blocks per chain.
    pub n_blocks: usize,
    /// Enables the cyclic translation move.
    #[serde(default = "default_true")]
    pub translations: bool,
}

fn default_true() -> bool {
    true
}

impl SamplerConfig {
    pub const DEFAULT_CHAINS: usize = 4;
    pub const DEFAULT_BLOCKS: usize = 25;

    /// Defaults: burn-in `100·L`, stride `L`, 4 chains × 25 blocks. `M` is
    /// rounded up to a multiple of 100 so that every block has equal size.
    pub fn new(sites: usize, n_samples: usize, seed: u64) -> Self {
        let unit = Self::DEFAULT_CHAINS * Self::DEFAULT_BLOCKS;
        Self {
            n_samples: n_samples.max(1).div_ceil(unit) * unit,
            burn_in_steps: 100 * sites,
            thin_stride: sites.max(1),
            n_chains: Self::DEFAULT_CHAINS,
            seed,
            n_blocks: Self::DEFAULT_BLOCKS,
            translations: true,
        }
    }

    pub fn per_chain(&self) -> usize {
        self.n_samples / self.n_chains.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadSamplerConfig(m.to_string()));
        if self.n_samples == 0 {
            return bad("n_samples must be positive");
        }
        if self.n_chains == 0 || self.n_blocks == 0 || self.thin_stride == 0 {
            return bad("n_chains, n_blocks and thin_stride must be positive");
        }
        if !self.n_samples.is_multiple_of(self.n_chains) {
            return bad("n_samples must be divisible by n_chains");
        }
        if !self.per_chain().is_multiple_of(self.n_blocks) {
            return bad("n_blocks must divide the samples per chain");
        }
        Ok(())
    }
}

/// Retained configurations in chain-major order, split into equal groups
/// (blocks) used for error estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePool {
    len: usize,
    particles: usize,
    samples: Vec<u64>,
    n_chains: usize,
    n_groups: usize,
    acceptance_rate: f64,
    chain_acceptance: Vec<f64>,
}

impl SamplePool {
    /// Wraps raw samples; they are split into `n_groups` contiguous groups.
    pub fn from_samples(len: usize, samples: Vec<u64>, n_chains: usize, n_groups: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyPool);
        }
        if n_groups == 0 || n_groups > samples.len() || n_chains == 0 || !n_groups.is_multiple_of(n_chains) {
            return Err(Error::BadSamplerConfig(format!(
                "cannot split {} samples of {n_chains} chains into {n_groups} groups",
                samples.len()
            )));
        }
        let particles = len / 2;
        if let Some(bad) = samples.iter().find(|b| b.count_ones() as usize != particles) {
            return Err(Error::WrongSector {
                expected: particles,
                got: bad.count_ones() as usize,
            });
        }
        Ok(Self {
            len,
            particles,
            samples,
            n_chains,
            n_groups,
            acceptance_rate: 1.0,
            chain_acceptance: vec![1.0; n_chains],
        })
    }

    /// Independent draws from the exact `|c_n|²` (small `L` only); useful to
    /// separate estimator checks from Markov-chain effects.
    pub fn exact_iid(model: &JastrowModel, n_samples: usize, n_groups: usize, seed: u64) -> Result<Self> {
        let amps = model.normalized_amplitudes(1 << 20)?;
        let mut cdf = Vec::with_capacity(amps.len());
        let mut acc = 0.0;
        for (_, c) in &amps {
            acc += c * c;
            cdf.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n_samples)
            .map(|_| {
                let u: f64 = rng.gen::<f64>() * acc;
                let i = cdf.partition_point(|&x| x < u).min(amps.len() - 1);
                amps[i].0.bits()
            })
            .collect();
        Self::from_samples(model.sites(), samples, 1, n_groups)
    }

    pub fn sites(&self) -> usize {
        self.len
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bits(&self) -> &[u64] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> Configuration {
        Configuration::from_bits(self.samples[i], self.len)
    }

    pub fn iter(&self) -> impl Iterator<Item = Configuration> + '_ {
        self.samples.iter().map(move |&b| Configuration::from_bits(b, self.len))
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }

    pub fn chain_acceptance(&self) -> &[f64] {
        &self.chain_acceptance
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn chain_id(&self, i: usize) -> usize {
        i * self.n_chains / self.samples.len()
    }

    /// Global block (group) index of sample `i`.
    pub fn block_id(&self, i: usize) -> usize {
        // Inverse of the `group_range` boundaries.
        let m = self.samples.len();
        let mut g = i * self.n_groups / m;
        while self.group_range(g).end <= i {
            g += 1;
        }
        while self.group_range(g).start > i {
            g -= 1;
        }
        g
    }

    pub fn group_range(&self, g: usize) -> std::ops::Range<usize> {
        let m = self.samples.len();
        (g * m / self.n_groups)..((g + 1) * m / self.n_groups)
    }

    pub fn group(&self, g: usize) -> &[u64] {
        &self.samples[self.group_range(g)]
    }

    /// Per-block means of an observable.
    pub fn block_means<F: Fn(u64) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        (0..self.n_groups)
            .map(|g| {
                let grp = self.group(g);
                grp.iter().map(|&b| f(b)).sum::<f64>() / grp.len() as f64
            })
            .collect()
    }

    /// Re-groups the same samples.
    pub fn with_groups(mut self, n_groups: usize) -> Result<Self> {
        if n_groups == 0 || n_groups > self.samples.len() {
            return Err(Error::BadSamplerConfig(format!("invalid group count {n_groups}")));
        }
        self.n_groups = n_groups;
        Ok(self)
    }

    /// Keeps only the first `m` samples (as one chain).
    pub fn truncated(&self, m: usize, n_groups: usize) -> Result<Self> {
        let mut p = Self::from_samples(self.len, self.samples[..m.min(self.samples.len())].to_vec(), 1, n_groups)?;
        p.acceptance_rate = self.acceptance_rate;
        Ok(p)
    }
}

/// Mutable chain state with incremental site potentials.
struct ChainState<'a> {
    model: &'a JastrowModel,
    len: usize,
    bits: u64,
    occ: Vec<usize>,
    emp: Vec<usize>,
    /// `V(x) = Σ_{k ∈ n} ln sin(π|x-k|/L)` with the `k = x` term set to 0.
    pot: Vec<f64>,
    ls0: &'a [f64],
}

impl<'a> ChainState<'a> {
    fn new(model: &'a JastrowModel, ls0: &'a [f64], bits: u64) -> Self {
        let len = model.sites();
        let mut s = Self {
            model,
            len,
            bits,
            occ: Vec::new(),
            emp: Vec::new(),
            pot: vec![0.0; len],
            ls0,
        };
        s.rebuild();
        s
    }

    fn rebuild(&mut self) {
        let c = Configuration::from_bits(self.bits, self.len);
        self.occ = c.occupied_sites().collect();
        self.emp = c.empty_sites().collect();
        for x in 1..=self.len {
            self.pot[x - 1] = self.occ.iter().map(|&k| self.ls0[x.abs_diff(k)]).sum();
        }
    }

    #[inline]
    fn swap_log_prob(&self, a: usize, b: usize) -> f64 {
        let alpha = self.model.alpha();
        if alpha == 0.0 {
            return 0.0;
        }
        2.0 * alpha * (self.pot[b - 1] - self.ls0[a.abs_diff(b)] - self.pot[a - 1])
    }

    #[inline]
    fn apply_swap(&mut self, ia: usize, ib: usize) {
        let a = self.occ[ia];
        let b = self.emp[ib];
        self.occ[ia] = b;
        self.emp[ib] = a;
        self.bits ^= (1u64 << (a - 1)) | (1u64 << (b - 1));
        if self.model.alpha() != 0.0 {
            for x in 1..=self.len {
                self.pot[x - 1] += self.ls0[x.abs_diff(b)] - self.ls0[x.abs_diff(a)];
            }
        }
    }

    fn translate(&mut self, forward: bool) {
        let l = self.len;
        let c = Configuration::from_bits(self.bits, l);
        let shift = if forward { 1 } else { l - 1 };
        self.bits = c.translate(shift).bits();
        for s in self.occ.iter_mut().chain(self.emp.iter_mut()) {
            *s = (*s - 1 + shift) % l + 1;
        }
        if forward {
            self.pot.rotate_right(1);
        } else {
            self.pot.rotate_left(1);
        }
    }
}

fn random_half_filled(len: usize, rng: &mut ChaCha8Rng) -> u64 {
    let mut sites: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.gen_range(0..=i);
        sites.swap(i, j);
    }
    sites[..len / 2].iter().fold(0u64, |acc, &s| acc | (1u64 << s))
}

/// One chain: returns retained samples and the swap acceptance rate.
fn run_single_chain(model: &JastrowModel, cfg: &SamplerConfig, chain: usize, count: usize) -> (Vec<u64>, f64) {
    let len = model.sites();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let mut ls0 = vec![0.0; len];
    for (d, slot) in ls0.iter_mut().enumerate().skip(1) {
        *slot = model.log_sine(d);
    }
    let start = random_half_filled(len, &mut rng);
    let mut st = ChainState::new(model, &ls0, start);
    let n = st.occ.len();
    let e = st.emp.len();
    let p_translate = if cfg.translations && len > 2 { 1.0 / len as f64 } else { 0.0 };
    let (mut proposed, mut accepted) = (0u64, 0u64);
    let mut out = Vec::with_capacity(count);

    let mut step = |st: &mut ChainState, rng: &mut ChaCha8Rng| {
        if p_translate > 0.0 && rng.gen::<f64>() < p_translate {
            st.translate(rng.gen::<bool>());
            return;
        }
        let ia = rng.gen_range(0..n);
        let ib = rng.gen_range(0..e);
        let lp = st.swap_log_prob(st.occ[ia], st.emp[ib]);
        proposed += 1;
        if lp >= 0.0 || rng.gen::<f64>().ln() < lp {
            st.apply_swap(ia, ib);
            accepted += 1;
        }
    };

    for _ in 0..cfg.burn_in_steps {
        step(&mut st, &mut rng);
    }
    for i in 0..count {
        for _ in 0..cfg.thin_stride {
            step(&mut st, &mut rng);
        }
        debug_assert_eq!(st.bits.count_ones() as usize, len / 2);
        out.push(st.bits);
        if i % 4096 == 4095 {
            // Removes the round-off accumulated by incremental updates.
            st.rebuild();
        }
    }
    let rate = if proposed == 0 { 1.0 } else { accepted as f64 / proposed as f64 };
    (out, rate)
}

/// Runs `n_chains` independent chains (in parallel) and assembles the pool
/// in chain-major order.
pub fn run_chain(model: &JastrowModel, cfg: &SamplerConfig) -> Result<SamplePool> {
    cfg.validate()?;
    let per = cfg.per_chain();
    let results: Vec<(Vec<u64>, f64)> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_single_chain(model, cfg, c, per))
        .collect();
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut rates = Vec::with_capacity(cfg.n_chains);
    for (s, r) in results {
        samples.extend(s);
        rates.push(r);
    }
    let mean_rate = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok(SamplePool {
        len: model.sites(),
        particles: model.particles(),
        samples,
        n_chains: cfg.n_chains,
        n_groups: cfg.n_chains * cfg.n_blocks,
        acceptance_rate: mean_rate,
        chain_acceptance: rates,
    })
}

/// Fixed-capacity tuple of configurations (no heap allocation).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tuple {
    items: [u64; MAX_TUPLE],
    size: usize,
    len: usize,
}

impl Tuple {
    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn bits(&self, i: usize) -> u64 {
        self.items[i]
    }

    #[inline]
    pub fn as_bits(&self) -> &[u64] {
        &self.items[..self.size]
    }

    pub fn get(&self, i: usize) -> Configuration {
        Configuration::from_bits(self.items[i], self.len)
    }

    #[inline]
    pub(crate) fn draw(src: &[u64], size: usize, len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut items = [0u64; MAX_TUPLE];
        for slot in items.iter_mut().take(size) {
            *slot = src[rng.gen_range(0..src.len())];
        }
        Self { items, size, len }
    }
}

/// Streaming iterator of tuples drawn uniformly with replacement.
pub struct TupleStream<'a> {
    pool: &'a SamplePool,
    size: usize,
    remaining: usize,
    rng: ChaCha8Rng,
}

impl Iterator for TupleStream<'_> {
    type Item = Tuple;

    fn next(&mut self) -> Option<Tuple> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(Tuple::draw(&self.pool.samples, self.size, self.pool.len, &mut self.rng))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

pub fn bootstrap_tuples(pool: &SamplePool, tuple_size: usize, n_tuples: usize, seed: u64) -> Result<TupleStream<'_>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if tuple_size == 0 || tuple_size > MAX_TUPLE {
        return Err(Error::BadRequest(format!("tuple size must be in 1..={MAX_TUPLE}")));
    }
    Ok(TupleStream {
        pool,
        size: tuple_size,
        remaining: n_tuples,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

/// RNG for tuple group `g` of a request seeded with `seed`.
pub fn group_rng(seed: u64, g: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(g as u64);
    rng
}

/// Evaluates `f` on `n_tuples` tuples split evenly over the pool's groups;
/// each group resamples only its own configurations. Returns the per-group
/// means and the number of tuples actually evaluated.
pub fn grouped_tuple_means<F>(pool: &SamplePool, tuple_size: usize, n_tuples: usize, seed: u64, f: F) -> Result<(Vec<f64>, u64)>
where
    F: Fn(&Tuple, &mut ChaCha8Rng) -> f64 + Sync,
{
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if tuple_size == 0 || tuple_size > MAX_TUPLE {
        return Err(Error::BadRequest(format!("tuple size must be in 1..={MAX_TUPLE}")));
    }
    let g = pool.n_groups();
    let per = n_tuples.max(1).div_ceil(g);
    let means: Vec<f64> = (0..g)
        .into_par_iter()
        .map(|gi| {
            let mut rng = group_rng(seed, gi);
            let src = pool.group(gi);
            let mut acc = 0.0;
            for _ in 0..per {
                let t = Tuple::draw(src, tuple_size, pool.len, &mut rng);
                acc += f(&t, &mut rng);
            }
            acc / per as f64
        })
        .collect();
    Ok((means, (per * g) as u64))
}

/// `½ Σ_n |p̂_n - |c_n|²|` against the exactly enumerated distribution.
pub fn tv_distance(pool: &SamplePool, model: &JastrowModel) -> Result<f64> {
    if model.sites() > TV_MAX_SITES {
        let dim = crate::model::binomial(model.sites(), model.particles()) as usize;
        return Err(Error::SectorTooLarge {
            dim,
            limit: crate::model::binomial(TV_MAX_SITES, TV_MAX_SITES / 2) as usize,
        });
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let exact = model.normalized_amplitudes(usize::MAX)?;
    let mut counts: HashMap<u64, usize> = HashMap::with_capacity(exact.len());
    for &b in pool.bits() {
        *counts.entry(b).or_insert(0) += 1;
    }
    let m = pool.len() as f64;
    let mut tv = 0.0;
    for (c, amp) in &exact {
        let emp = counts.remove(&c.bits()).unwrap_or(0) as f64 / m;
        tv += (emp - amp * amp).abs();
    }
    // Anything left over lies outside the sector (cannot happen for valid pools).
    tv += counts.values().map(|&k| k as f64 / m).sum::<f64>();
    Ok(0.5 * tv)
}

/// TV distance between an arbitrary empirical histogram and a target.
pub fn tv_between(empirical: &[f64], target: &[f64]) -> f64 {
    0.5 * empirical.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Least-squares fit of `ln M = ln a + b L`.
pub fn required_samples_fit(l_values: &[usize], m_at_threshold: &[f64]) -> Result<(f64, f64)> {
    let n = l_values.len().min(m_at_threshold.len());
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    if m_at_threshold[..n].iter().any(|&m| m <= 0.0) {
        return Err(Error::NonPositiveValues(0));
    }
    let xs: Vec<f64> = l_values[..n].iter().map(|&l| l as f64).collect();
    let ys: Vec<f64> = m_at_threshold[..n].iter().map(|m| m.ln()).collect();
    let (slope, intercept) = linear_fit(&xs, &ys, None);
    Ok((intercept.exp(), slope))
}

/// (Weighted) least squares `y = slope·x + intercept`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> (f64, f64) {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..xs.len()).map(w).sum();
    let mx = (0..xs.len()).map(|i| w(i) * xs[i]).sum::<f64>() / sw;
    let my = (0..xs.len()).map(|i| w(i) * ys[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..xs.len()).map(|i| w(i) * (xs[i] - mx).powi(2)).sum();
    let sxy: f64 = (0..xs.len()).map(|i| w(i) * (xs[i] - mx) * (ys[i] - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Smallest `M` on a geometric ladder whose TV distance drops below
/// `threshold`, using prefixes of a single long pool.
pub fn samples_at_threshold(pool: &SamplePool, model: &JastrowModel, ladder: &[usize], threshold: f64) -> Result<Option<usize>> {
    for &m in ladder {
        if m > pool.len() {
            break;
        }
        let sub = pool.truncated(m, 1)?;
        if tv_distance(&sub, model)? < threshold {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// Header fields of the binary pool dump.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolHeader {
    pub sites: usize,
    pub particles: usize,
    pub alpha: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub thin: usize,
    pub burn_in: usize,
}

/// Binary dump: seven little-endian `u64` header fields
/// `(L, N, alpha bits, M, seed, thin, burn-in)` then `M` configurations,
/// one `u64` each.
pub fn write_pool<W: Write>(mut w: W, pool: &SamplePool, alpha: f64, cfg: &SamplerConfig) -> Result<()> {
    let header = [
        pool.len as u64,
        pool.particles as u64,
        alpha.to_bits(),
        pool.samples.len() as u64,
        cfg.seed,
        cfg.thin_stride as u64,
        cfg.burn_in_steps as u64,
    ];
    let mut buf = Vec::with_capacity(8 * (header.len() + pool.samples.len()));
    for h in header {
        buf.extend_from_slice(&h.to_le_bytes());
    }
    for &s in &pool.samples {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a dump written by [`write_pool`]; the group layout is not part of
/// the format and must be supplied.
pub fn read_pool<R: Read>(mut r: R, n_chains: usize, n_groups: usize) -> Result<(PoolHeader, SamplePool)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 56 || bytes.len() % 8 != 0 {
        return Err(Error::Format("pool file too short or misaligned".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
    let header = PoolHeader {
        sites: word(0) as usize,
        particles: word(1) as usize,
        alpha: f64::from_bits(word(2)),
        n_samples: word(3) as usize,
        seed: word(4),
        thin: word(5) as usize,
        burn_in: word(6) as usize,
    };
    if bytes.len() != 8 * (7 + header.n_samples) {
        return Err(Error::Format(format!(
            "header announces {} samples but file holds {}",
            header.n_samples,
            bytes.len() / 8 - 7
        )));
    }
    let samples = (0..header.n_samples).map(|i| word(7 + i)).collect();
    let pool = SamplePool::from_samples(header.sites, samples, n_chains, n_groups)?;
    Ok((header, pool))
}

/// Diagnostics CSV: one row per block with the chain acceptance rate and
/// the block mean of the probe `O_Z²`.
pub fn write_diagnostics<W: Write>(mut w: W, pool: &SamplePool) -> Result<()> {
    let probe = DiagonalOperator::staggered(pool.len);
    let means = pool.block_means(|b| probe.value_bits(b).powi(2));
    writeln!(w, "chain_id,block_id,acceptance_rate,probe_oz2_mean")?;
    for (g, m) in means.iter().enumerate() {
        let start = pool.group_range(g).start;
        let c = pool.chain_id(start);
        writeln!(w, "{c},{g},{},{m}", pool.chain_acceptance[c])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sector_configurations;

    fn config(sites: usize, m: usize, seed: u64) -> SamplerConfig {
        SamplerConfig::new(sites, m, seed)
    }

    #[test]
    fn uniform_at_alpha_zero() {
        let model = JastrowModel::half_filled(4, 0.0).unwrap();
        let pool = run_chain(&model, &config(4, 100_000, 1)).unwrap();
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for &b in pool.bits() {
            *counts.entry(b).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let m = pool.len() as f64;
        let sigma = (m * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for &c in counts.values() {
            assert!((c as f64 - m / 6.0).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn neel_dominates_at_large_alpha() {
        let model = JastrowModel::half_filled(8, 10.0).unwrap();
        let pool = run_chain(&model, &config(8, 100_000, 2)).unwrap();
        let a = Configuration::neel(8, true).bits();
        let b = Configuration::neel(8, false).bits();
        let frac = pool.bits().iter().filter(|&&x| x == a || x == b).count() as f64 / pool.len() as f64;
        assert!(frac >= 0.99, "{frac}");
    }

    #[test]
    fn acceptance_in_range_and_half_filled() {
        let model = JastrowModel::half_filled(20, 1.0).unwrap();
        let pool = run_chain(&model, &config(20, 2_000, 3)).unwrap();
        assert!(pool.acceptance_rate() > 0.0 && pool.acceptance_rate() <= 1.0);
        assert!(pool.bits().iter().all(|b| b.count_ones() == 10));
    }

    #[test]
    fn deterministic_given_seed() {
        let model = JastrowModel::half_filled(10, 1.0).unwrap();
        let a = run_chain(&model, &config(10, 4_000, 9)).unwrap();
        let b = run_chain(&model, &config(10, 4_000, 9)).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| run_chain(&model, &config(10, 4_000, 9)).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn bad_configs_rejected() {
        let model = JastrowModel::half_filled(4, 0.0).unwrap();
        let mut cfg = config(4, 100, 1);
        cfg.n_samples = 101;
        assert!(matches!(run_chain(&model, &cfg), Err(Error::BadSamplerConfig(_))));
        cfg.n_samples = 120;
        cfg.n_blocks = 7;
        assert!(matches!(run_chain(&model, &cfg), Err(Error::BadSamplerConfig(_))));
    }

    #[test]
    fn pool_indexing() {
        let model = JastrowModel::half_filled(6, 1.0).unwrap();
        let pool = run_chain(&model, &config(6, 1_000, 4)).unwrap();
        assert_eq!(pool.n_groups(), 100);
        assert_eq!(pool.chain_id(0), 0);
        assert_eq!(pool.chain_id(999), 3);
        assert_eq!(pool.block_id(0), 0);
        assert_eq!(pool.block_id(999), 99);
        assert_eq!(pool.block_id(257), 25);
        for g in 0..100 {
            assert_eq!(pool.group(g).len(), 10);
        }
    }

    #[test]
    fn tuples_are_deterministic_and_streaming() {
        let model = JastrowModel::half_filled(6, 1.0).unwrap();
        let pool = run_chain(&model, &config(6, 1_000, 4)).unwrap();
        let a: Vec<Tuple> = bootstrap_tuples(&pool, 3, 50, 11).unwrap().collect();
        let b: Vec<Tuple> = bootstrap_tuples(&pool, 3, 50, 11).unwrap().collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.size() == 3));
        let n = bootstrap_tuples(&pool, 3, 1_000_000, 5).unwrap().filter(|t| t.bits(0) == t.bits(1)).count();
        assert!(n > 0);
        let single: Vec<u64> = bootstrap_tuples(&pool, 1, 10, 1).unwrap().map(|t| t.bits(0)).collect();
        assert!(single.iter().all(|b| pool.bits().contains(b)));
    }

    #[test]
    fn tv_examples() {
        let model = JastrowModel::half_filled(4, 0.0).unwrap();
        let one = SamplePool::from_samples(4, vec![0b0101; 12], 1, 1).unwrap();
        assert!((tv_distance(&one, &model).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        let exact: Vec<u64> = sector_configurations(4, 2).iter().map(|c| c.bits()).collect();
        let flat = SamplePool::from_samples(4, exact, 1, 1).unwrap();
        assert!(tv_distance(&flat, &model).unwrap() < 1e-12);
        let big = JastrowModel::half_filled(22, 1.0).unwrap();
        let p = SamplePool::from_samples(22, vec![(1u64 << 11) - 1], 1, 1).unwrap();
        assert!(matches!(tv_distance(&p, &big), Err(Error::SectorTooLarge { .. })));
    }

    #[test]
    fn exponential_fit() {
        let ls = [6usize, 8, 10, 12, 14];
        let ms: Vec<f64> = ls.iter().map(|&l| 9.0 * (0.575 * l as f64).exp()).collect();
        let (a, b) = required_samples_fit(&ls, &ms).unwrap();
        assert!((a - 9.0).abs() < 1e-6 && (b - 0.575).abs() < 1e-6);
        assert_eq!(
            required_samples_fit(&ls[..2], &ms[..2]),
            Err(Error::TooFewPoints { needed: 3, got: 2 })
        );
    }

    #[test]
    fn dump_round_trip() {
        let model = JastrowModel::half_filled(10, 1.0).unwrap();
        let cfg = config(10, 400, 8);
        let pool = run_chain(&model, &cfg).unwrap();
        let mut buf = Vec::new();
        write_pool(&mut buf, &pool, 1.0, &cfg).unwrap();
        assert_eq!(buf.len(), 8 * (7 + 400));
        let (h, back) = read_pool(&buf[..], 4, 100).unwrap();
        assert_eq!(h.sites, 10);
        assert_eq!(h.alpha, 1.0);
        assert_eq!(h.burn_in, 1000);
        assert_eq!(back.bits(), pool.bits());
        assert!(read_pool(&buf[..100], 1, 1).is_err());
        let mut csv = Vec::new();
        write_diagnostics(&mut csv, &pool).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 101);
    }

    #[test]
    fn block_errors_shrink_with_more_blocks() {
        let model = JastrowModel::half_filled(8, 0.0).unwrap();
        let mut cfg = config(8, 80_000, 21);
        cfg.n_chains = 1;
        cfg.n_blocks = 400;
        let pool = run_chain(&model, &cfg).unwrap();
        let probe = DiagonalOperator::staggered(8);
        let err = |groups: usize| {
            let p = pool.clone().with_groups(groups).unwrap();
            let means = p.block_means(|b| probe.value_bits(b));
            crate::model::mean_and_error(&means).1
        };
        // Standard error of the overall mean is independent of the blocking
        // once blocks are uncorrelated; block-mean spread shrinks as 1/√size.
        let (e_small, e_large) = (err(400), err(25));
        assert!((e_small / e_large - 1.0).abs() < 0.5, "{e_small} {e_large}");
        let spread = |groups: usize| {
            let p = pool.clone().with_groups(groups).unwrap();
            let means = p.block_means(|b| probe.value_bits(b));
            crate::model::mean_and_error(&means).1 * (groups as f64).sqrt()
        };
        let ratio = spread(400) / spread(25);
        assert!((ratio - 4.0).abs() < 1.5, "{ratio}");
    }
}

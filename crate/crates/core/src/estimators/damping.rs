//! Amplitude damping. Each link of the trace ring carries a lost-particle
//! set `q_a ⊆ n_a`; the ring is evaluated through amplitude ratios
//! `R(n_a, q_a, q_{a-1}) = c_{(n_a ∖ q_a) ∪ q_{a-1}} / c_{n_a}`.
//!
//! For a diagonal operator every `|q_a|` equals a common `k`, drawn from
//! `w_k ∝ [C(N,k) p^k (1-p)^{N-k}]^P`. For `O_X` the loss counts may step by
//! one across operator nodes; the admissible count profiles are enumerated
//! exactly and drawn with their branch weights.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jastrow::JastrowModel;
use crate::model::{binomial, BitIter, MomentEstimate, OperatorKind};
use crate::operators::{stagger, DiagonalOperator};
use crate::sampler::{grouped_tuple_means, SamplePool, MAX_TUPLE};

use super::{relabel, structural_zero, MomentRequest};

/// Branch probability of losing exactly `k` given particles: `C(N,k) p^k (1-p)^{N-k}`.
fn branch_weight(n: usize, k: usize, p: f64) -> f64 {
    binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Importance weights over the common loss count `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DampingWeights {
    /// Normalized `w_k`, `k = 0..=N`.
    pub w: Vec<f64>,
    /// `Z_w = Σ_k [C(N,k) p^k (1-p)^{N-k}]^P`.
    pub z: f64,
    cdf: Vec<f64>,
}

impl DampingWeights {
    pub fn new(particles: usize, p: f64, ring: usize) -> Self {
        let raw: Vec<f64> = (0..=particles)
            .map(|k| branch_weight(particles, k, p).powi(ring as i32))
            .collect();
        let z: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let mut acc = 0.0;
        let cdf = w
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Self { w, z, cdf }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.w.len() - 1)
    }
}

/// Uniform random `k`-subset of the set bits of `n`.
#[inline]
fn random_subset(n: u64, k: usize, rng: &mut ChaCha8Rng) -> u64 {
    if k == 0 {
        return 0;
    }
    let mut sites = [0u8; 64];
    let mut cnt = 0;
    for s in BitIter(n) {
        sites[cnt] = s as u8;
        cnt += 1;
    }
    if k >= cnt {
        return n;
    }
    let mut out = 0u64;
    for i in 0..k {
        let j = rng.gen_range(i..cnt);
        sites.swap(i, j);
        out |= 1u64 << (sites[i] - 1);
    }
    out
}

/// `c_target / c_n` for two arbitrary labels (0 outside half filling).
#[inline]
fn ratio_to(model: &JastrowModel, n: u64, target: u64) -> f64 {
    if target.count_ones() as usize != model.particles() {
        return 0.0;
    }
    model.ratio_bits(n, n & !target, target & !n)
}

/// `Tr(ρ^r O ρ^s O)` for a diagonal operator.
pub fn moment_damping_diagonal(req: &MomentRequest, pool: &SamplePool, model: &JastrowModel) -> Result<MomentEstimate> {
    req.validate(pool, model)?;
    if req.r == 0 {
        let e = moment_damping_diagonal(&req.swapped(), pool, model)?;
        return Ok(relabel(e, req.r, req.s));
    }
    let op = DiagonalOperator::from_spec(&req.operator, model.sites())?;
    let p = req.r + req.s;
    let second = req.r % p;
    let weights = DampingWeights::new(model.particles(), req.channel.p, p);
    if weights.z == 0.0 || !weights.z.is_finite() {
        return Ok(structural_zero(req.r, req.s, pool.n_groups()));
    }
    let (means, n) = grouped_tuple_means(pool, p, req.n_tuples, req.seed, |t, rng| {
        let nodes = t.as_bits();
        let k = weights.draw(rng);
        let mut q = [0u64; MAX_TUPLE];
        for a in 0..p {
            q[a] = random_subset(nodes[a], k, rng);
        }
        let mut prod = 1.0;
        for a in 0..p {
            let prev = q[(a + p - 1) % p];
            prod *= model.ratio_bits(nodes[a], q[a], prev);
            if prod == 0.0 {
                return 0.0;
            }
        }
        let o1 = op.value_bits(nodes[0] & !q[0]);
        let o2 = op.value_bits(nodes[second] & !q[second]);
        weights.z * prod * o1 * o2
    })?;
    Ok(MomentEstimate::from_blocks(req.r, req.s, means, n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NodeKind {
    Plain,
    /// One `O_X`: the loss count steps by one across the node.
    Single,
    /// `O_X²` (only when `s = 0`): equal counts on both sides.
    Square,
}

/// All loss-count profiles compatible with the node kinds around the ring.
fn enumerate_profiles(kinds: &[NodeKind], particles: usize) -> Vec<Vec<usize>> {
    fn extend(kinds: &[NodeKind], n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let p = kinds.len();
        let a = cur.len();
        if a == p {
            // Closing constraint at node 0 between k_{P-1} and k_0.
            if compatible(kinds[0], cur[p - 1], cur[0]) {
                out.push(cur.clone());
            }
            return;
        }
        let prev = cur[a - 1];
        for k in prev.saturating_sub(1)..=(prev + 1).min(n) {
            if compatible(kinds[a], prev, k) {
                cur.push(k);
                extend(kinds, n, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    for k0 in 0..=particles {
        let mut cur = vec![k0];
        extend(kinds, particles, &mut cur, &mut out);
    }
    out
}

fn compatible(kind: NodeKind, prev: usize, k: usize) -> bool {
    match kind {
        NodeKind::Plain | NodeKind::Square => prev == k,
        NodeKind::Single => prev.abs_diff(k) == 1,
    }
}

/// `Tr(ρ^r O_X ρ^s O_X)`.
pub fn moment_damping_ox(req: &MomentRequest, pool: &SamplePool, model: &JastrowModel) -> Result<MomentEstimate> {
    req.validate(pool, model)?;
    if req.operator.kind != OperatorKind::OX {
        return Err(Error::BadRequest("moment_damping_ox needs the O_X operator".into()));
    }
    if req.r == 0 {
        let e = moment_damping_ox(&req.swapped(), pool, model)?;
        return Ok(relabel(e, req.r, req.s));
    }
    let l = model.sites();
    let nn = model.particles();
    let p = req.r + req.s;
    let mut kinds = vec![NodeKind::Plain; p];
    if req.s == 0 {
        kinds[0] = NodeKind::Square;
    } else {
        kinds[0] = NodeKind::Single;
        kinds[req.r] = NodeKind::Single;
    }
    let profiles = enumerate_profiles(&kinds, nn);
    if profiles.is_empty() {
        return Err(Error::ProfileSetEmpty);
    }
    let pw: Vec<f64> = profiles
        .iter()
        .map(|prof| prof.iter().map(|&k| branch_weight(nn, k, req.channel.p)).product())
        .collect();
    let z: f64 = pw.iter().sum();
    if z == 0.0 {
        return Ok(structural_zero(req.r, req.s, pool.n_groups()));
    }
    let mut acc = 0.0;
    let cdf: Vec<f64> = pw
        .iter()
        .map(|w| {
            acc += w / z;
            acc
        })
        .collect();
    let diag = 0.25 * l as f64;

    let (means, n) = grouped_tuple_means(pool, p, req.n_tuples, req.seed, |t, rng| {
        let nodes = t.as_bits();
        let u: f64 = rng.gen();
        let prof = &profiles[cdf.partition_point(|&c| c <= u).min(profiles.len() - 1)];
        let mut q = [0u64; MAX_TUPLE];
        for a in 0..p {
            q[a] = random_subset(nodes[a], prof[a], rng);
        }
        let mut prod = 1.0;
        for a in 0..p {
            let n_a = nodes[a];
            let prev = q[(a + p - 1) % p];
            let m = n_a & !q[a];
            let term = match kinds[a] {
                NodeKind::Plain => model.ratio_bits(n_a, q[a], prev),
                NodeKind::Single => (1..=l)
                    .map(|j| {
                        let mm = m ^ (1u64 << (j - 1));
                        if mm & prev != 0 {
                            0.0
                        } else {
                            0.5 * stagger(j) * ratio_to(model, n_a, mm | prev)
                        }
                    })
                    .sum(),
                NodeKind::Square => {
                    let mut s = diag * model.ratio_bits(n_a, q[a], prev);
                    let empty = !m & crate::model::site_mask(l);
                    for j in BitIter(m) {
                        for k in BitIter(empty) {
                            let mm = m ^ (1u64 << (j - 1)) ^ (1u64 << (k - 1));
                            if mm & prev == 0 {
                                s += 0.5 * stagger(j) * stagger(k) * ratio_to(model, n_a, mm | prev);
                            }
                        }
                    }
                    s
                }
            };
            prod *= term;
            if prod == 0.0 {
                return 0.0;
            }
        }
        z * prod
    })?;
    Ok(MomentEstimate::from_blocks(req.r, req.s, means, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn weights_normalize() {
        let w = DampingWeights::new(4, 0.3, 3);
        assert!((w.w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let direct: f64 = (0..=4).map(|k| branch_weight(4, k, 0.3).powi(3)).sum();
        assert!((w.z - direct).abs() < 1e-15);
        let pure = DampingWeights::new(4, 0.0, 2);
        assert_eq!(pure.w[0], 1.0);
        assert_eq!(pure.z, 1.0);
    }

    #[test]
    fn subsets_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 0b1011_0101u64;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..60_000 {
            let s = random_subset(n, 2, &mut rng);
            assert_eq!(s & !n, 0);
            assert_eq!(s.count_ones(), 2);
            *counts.entry(s).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 10);
        assert!(counts.values().all(|&c| (c as f64 - 6000.0).abs() < 400.0));
    }

    #[test]
    fn profiles_for_one_one() {
        let kinds = [NodeKind::Single, NodeKind::Single];
        let mut got = enumerate_profiles(&kinds, 2);
        got.sort();
        assert_eq!(got, vec![vec![0, 1], vec![1, 0], vec![1, 2], vec![2, 1]]);
        let sq = enumerate_profiles(&[NodeKind::Square, NodeKind::Plain], 2);
        assert_eq!(sq, vec![vec![0, 0], vec![1, 1], vec![2, 2]]);
        // Odd rings cannot alternate by one step at a single node.
        assert!(enumerate_profiles(&[NodeKind::Single, NodeKind::Plain], 3).is_empty());
    }
}

//! Dephasing: `ρ_p = Σ c_n c_n' f_{nn'} |n><n'|` with `f = (1-2p)^{Hamming}`.
//!
//! With samples `n_a ~ c²` the trace of a ring of `P = r + s` links becomes
//! an average of the product of `f` factors around the ring.

use crate::error::Result;
use crate::jastrow::JastrowModel;
use crate::model::{BitIter, MomentEstimate};
use crate::operators::DiagonalOperator;
use crate::sampler::{grouped_tuple_means, SamplePool};

use super::{relabel, MomentRequest};

/// Table of `(1 - 2p)^h` for `h = 0..=64` (`0⁰ = 1`, sign kept for `p > ½`).
#[derive(Clone, Debug, PartialEq)]
pub struct DephasingWeight {
    pow: Vec<f64>,
}

impl DephasingWeight {
    pub fn new(p: f64) -> Self {
        let q = 1.0 - 2.0 * p;
        Self {
            pow: (0..=64).map(|h| q.powi(h)).collect(),
        }
    }

    #[inline]
    pub fn value(&self, a: u64, b: u64) -> f64 {
        self.pow[(a ^ b).count_ones() as usize]
    }
}

/// `Tr(ρ^r O ρ^s O)` for a diagonal operator.
pub fn moment_dephasing_diagonal(req: &MomentRequest, pool: &SamplePool, model: &JastrowModel) -> Result<MomentEstimate> {
    req.validate(pool, model)?;
    if req.r == 0 {
        let e = moment_dephasing_diagonal(&req.swapped(), pool, model)?;
        return Ok(relabel(e, req.r, req.s));
    }
    let op = DiagonalOperator::from_spec(&req.operator, model.sites())?;
    let f = DephasingWeight::new(req.channel.p);
    let p = req.r + req.s;
    let second = req.r % p;
    let (means, n) = grouped_tuple_means(pool, p, req.n_tuples, req.seed, |t, _| {
        let nodes = t.as_bits();
        let mut w = 1.0;
        for a in 0..p {
            w *= f.value(nodes[a], nodes[(a + 1) % p]);
        }
        if w == 0.0 {
            return 0.0;
        }
        w * op.value_bits(nodes[0]) * op.value_bits(nodes[second])
    })?;
    Ok(MomentEstimate::from_blocks(req.r, req.s, means, n))
}

/// `Tr(ρ^m O_X²)`, the only non-vanishing moment shape for `O_X`.
pub fn moment_dephasing_ox(m: usize, pool: &SamplePool, model: &JastrowModel, p: f64, n_tuples: usize, seed: u64) -> Result<MomentEstimate> {
    let req = MomentRequest::new(
        m,
        0,
        crate::model::ChannelSpec::dephasing(p),
        crate::model::OperatorSpec::ox(),
        n_tuples,
        seed,
    );
    req.validate(pool, model)?;
    let f = DephasingWeight::new(p);
    let l = model.sites();
    let diag = 0.25 * l as f64;
    let (means, n) = grouped_tuple_means(pool, m, n_tuples, seed, |t, _| {
        let nodes = t.as_bits();
        let mut chain = 1.0;
        for a in 0..m - 1 {
            chain *= f.value(nodes[a], nodes[a + 1]);
        }
        if chain == 0.0 {
            return 0.0;
        }
        let first = nodes[0];
        let last = nodes[m - 1];
        let mut acc = diag * f.value(last, first);
        let pot = model.site_potential(first);
        for a in BitIter(first) {
            for b in BitIter(pot.empty(l)) {
                let target = first ^ (1u64 << (a - 1)) ^ (1u64 << (b - 1));
                let fw = f.value(last, target);
                if fw != 0.0 {
                    let w = if (a + b) % 2 == 0 { 0.5 } else { -0.5 };
                    acc += fw * w * pot.swap_ratio(model, a, b);
                }
            }
        }
        chain * acc
    })?;
    Ok(MomentEstimate::from_blocks(m, 0, means, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sector_configurations, ChannelSpec, OperatorSpec};

    #[test]
    fn weight_table() {
        let f = DephasingWeight::new(0.5);
        assert_eq!(f.value(0b1010, 0b1010), 1.0);
        assert_eq!(f.value(0b1010, 0b0110), 0.0);
        let g = DephasingWeight::new(0.75);
        assert_eq!(g.value(0b1, 0b0), -0.5);
        let h = DephasingWeight::new(0.0);
        assert_eq!(h.value(0b1111, 0), 1.0);
    }

    #[test]
    fn fully_dephased_second_moment_is_diagonal() {
        let model = JastrowModel::half_filled(8, 1.0).unwrap();
        let amps = model.normalized_amplitudes(1 << 16).unwrap();
        let op = DiagonalOperator::staggered(8);
        let exact: f64 = amps.iter().map(|(c, a)| a.powi(4) * op.value_bits(c.bits()).powi(2)).sum();
        let pool = SamplePool::exact_iid(&model, 400_000, 100, 3).unwrap();
        let req = MomentRequest::new(1, 1, ChannelSpec::dephasing(0.5), OperatorSpec::oz(), 1_000_000, 4);
        let e = moment_dephasing_diagonal(&req, &pool, &model).unwrap();
        assert!((e.value - exact).abs() < 3.0 * e.std_error, "{} ± {} vs {exact}", e.value, e.std_error);
    }

    #[test]
    fn fully_dephased_ox_is_diagonal_part() {
        let model = JastrowModel::half_filled(6, 1.0).unwrap();
        let pool = SamplePool::exact_iid(&model, 10_000, 10, 3).unwrap();
        let e = moment_dephasing_ox(1, &pool, &model, 0.5, 10_000, 1).unwrap();
        assert!((e.value - 1.5).abs() < 1e-12);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn ox_second_moment_uniform_four_sites() {
        // Exact Tr(ρ O_X²) over the six configurations of the flat state.
        let model = JastrowModel::half_filled(4, 0.0).unwrap();
        let amps = model.normalized_amplitudes(64).unwrap();
        let mut exact = 0.0;
        for (n, cn) in &amps {
            for (m, cm) in &amps {
                exact += cn * cm * crate::operators::ox_squared_element(n, m);
            }
        }
        let pool = SamplePool::from_samples(4, sector_configurations(4, 2).iter().map(|c| c.bits()).collect(), 1, 1).unwrap();
        let e = moment_dephasing_ox(1, &pool, &model, 0.0, 600_000, 2).unwrap();
        // At α = 0 every hop carries weight +½, so the local value is constant.
        assert!((e.value - exact).abs() < 1e-12, "{} vs {exact}", e.value);
        assert!((exact - 3.0).abs() < 1e-12);
    }
}

//! Monte Carlo estimators of `Tr(ρ^r O ρ^s O)` for the three channels,
//! plus pure-state variances and correlators.

pub mod correlations;
pub mod damping;
pub mod dephasing;
pub mod depolarizing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jastrow::JastrowModel;
use crate::model::{ChannelKind, ChannelSpec, MomentEstimate, OperatorKind, OperatorSpec};
use crate::operators::DiagonalOperator;
use crate::sampler::{SamplePool, MAX_TUPLE};

pub use correlations::{correlator_xx, correlator_zz, fit_luttinger, fit_power_law, fit_power_law_with, FitOptions, LuttingerFit, LuttingerForm, PowerLawFit};
pub use damping::{moment_damping_diagonal, moment_damping_ox, DampingWeights};
pub use dephasing::{moment_dephasing_diagonal, moment_dephasing_ox, DephasingWeight};
pub use depolarizing::{moment_depolarizing, moment_depolarizing_mc, trace_o2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRequest {
    pub r: usize,
    pub s: usize,
    pub channel: ChannelSpec,
    pub operator: OperatorSpec,
    pub n_tuples: usize,
    pub seed: u64,
}

impl MomentRequest {
    pub fn new(r: usize, s: usize, channel: ChannelSpec, operator: OperatorSpec, n_tuples: usize, seed: u64) -> Self {
        Self {
            r,
            s,
            channel,
            operator,
            n_tuples,
            seed,
        }
    }

    pub(crate) fn validate(&self, pool: &SamplePool, model: &JastrowModel) -> Result<()> {
        self.channel.validate()?;
        self.operator.validate(model.sites())?;
        let p = self.r + self.s;
        if p == 0 || p > MAX_TUPLE {
            return Err(Error::BadRequest(format!("r + s must lie in 1..={MAX_TUPLE} (got {p})")));
        }
        if self.n_tuples == 0 {
            return Err(Error::BadRequest("n_tuples must be positive".into()));
        }
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        if pool.sites() != model.sites() {
            return Err(Error::LengthMismatch {
                expected: model.sites(),
                got: pool.sites(),
            });
        }
        Ok(())
    }

    /// Same request with `r` and `s` exchanged.
    pub(crate) fn swapped(&self) -> Self {
        Self {
            r: self.s,
            s: self.r,
            ..self.clone()
        }
    }
}

/// Relabels an estimate computed for `(s, r)` as `(r, s)`.
pub(crate) fn relabel(mut e: MomentEstimate, r: usize, s: usize) -> MomentEstimate {
    e.r = r;
    e.s = s;
    e
}

/// A structurally vanishing moment, with zero block means so that joint
/// bootstraps stay aligned.
pub(crate) fn structural_zero(r: usize, s: usize, groups: usize) -> MomentEstimate {
    MomentEstimate {
        r,
        s,
        value: 0.0,
        std_error: 0.0,
        n_tuples: 1,
        block_means: vec![0.0; groups],
    }
}

/// Dispatches a moment request to the channel-specific estimator.
pub fn estimate_moment(req: &MomentRequest, pool: &SamplePool, model: &JastrowModel) -> Result<MomentEstimate> {
    req.validate(pool, model)?;
    let diagonal = req.operator.kind != OperatorKind::OX;
    match (req.channel.kind, diagonal) {
        (ChannelKind::Dephasing, true) => moment_dephasing_diagonal(req, pool, model),
        (ChannelKind::Dephasing, false) => {
            if req.r > 0 && req.s > 0 {
                Ok(structural_zero(req.r, req.s, pool.n_groups()))
            } else {
                let m = req.r + req.s;
                let e = moment_dephasing_ox(m, pool, model, req.channel.p, req.n_tuples, req.seed)?;
                Ok(relabel(e, req.r, req.s))
            }
        }
        (ChannelKind::AmplitudeDamping, true) => moment_damping_diagonal(req, pool, model),
        (ChannelKind::AmplitudeDamping, false) => moment_damping_ox(req, pool, model),
        (ChannelKind::Depolarizing, _) => moment_depolarizing_mc(req, pool, model),
    }
}

/// Value with a standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Per-block means of `⟨O⟩` and `⟨O²⟩` over the pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct PureMoments {
    pub mean_blocks: Vec<f64>,
    pub second_blocks: Vec<f64>,
}

impl PureMoments {
    pub fn mean(&self) -> f64 {
        avg(&self.mean_blocks)
    }

    pub fn second(&self) -> f64 {
        avg(&self.second_blocks)
    }
}

fn avg(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `⟨O_X²⟩` on one configuration: `L/4 + Σ_hops ½(-1)^{j+l} c_{n'}/c_n`.
pub(crate) fn ox_squared_local(model: &JastrowModel, bits: u64) -> f64 {
    let l = model.sites();
    let pot = model.site_potential(bits);
    let mut acc = 0.25 * l as f64;
    for a in crate::model::BitIter(bits) {
        for b in crate::model::BitIter(pot.empty(l)) {
            let w = if (a + b) % 2 == 0 { 0.5 } else { -0.5 };
            acc += w * pot.swap_ratio(model, a, b);
        }
    }
    acc
}

/// Block means of `O` and `O²` over every configuration in the pool.
pub fn pure_moments(pool: &SamplePool, model: &JastrowModel, op: &OperatorSpec) -> Result<PureMoments> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if op.kind == OperatorKind::OX {
        // Particle-number selection: ⟨O_X⟩ = 0 exactly.
        let second_blocks = parallel_block_means(pool, |b| ox_squared_local(model, b));
        Ok(PureMoments {
            mean_blocks: vec![0.0; pool.n_groups()],
            second_blocks,
        })
    } else {
        let d = DiagonalOperator::from_spec(op, model.sites())?;
        Ok(PureMoments {
            mean_blocks: pool.block_means(|b| d.value_bits(b)),
            second_blocks: pool.block_means(|b| d.value_bits(b).powi(2)),
        })
    }
}

pub(crate) fn parallel_block_means<F: Fn(u64) -> f64 + Sync>(pool: &SamplePool, f: F) -> Vec<f64> {
    use rayon::prelude::*;
    (0..pool.n_groups())
        .into_par_iter()
        .map(|g| {
            let grp = pool.group(g);
            grp.iter().map(|&b| f(b)).sum::<f64>() / grp.len() as f64
        })
        .collect()
}

/// Jackknife over blocks of a scalar function of block-level means.
pub(crate) fn jackknife<F: Fn(&[f64]) -> f64>(columns: &[&[f64]], f: F) -> ScalarEstimate {
    let g = columns[0].len();
    let full: Vec<f64> = columns.iter().map(|c| avg(c)).collect();
    let value = f(&full);
    if g < 2 {
        return ScalarEstimate { value, std_error: 0.0 };
    }
    let sums: Vec<f64> = columns.iter().map(|c| c.iter().sum()).collect();
    let leave_out: Vec<f64> = (0..g)
        .map(|i| {
            let means: Vec<f64> = columns
                .iter()
                .zip(&sums)
                .map(|(c, s)| (s - c[i]) / (g - 1) as f64)
                .collect();
            f(&means)
        })
        .collect();
    let m = avg(&leave_out);
    let var = leave_out.iter().map(|x| (x - m).powi(2)).sum::<f64>() * (g - 1) as f64 / g as f64;
    ScalarEstimate {
        value,
        std_error: var.sqrt(),
    }
}

/// `Var(O) = ⟨O²⟩ - ⟨O⟩²` over the pure state with a jackknife error.
pub fn variance_pure(pool: &SamplePool, model: &JastrowModel, op: &OperatorSpec) -> Result<ScalarEstimate> {
    let pm = pure_moments(pool, model, op)?;
    Ok(jackknife(&[&pm.second_blocks, &pm.mean_blocks], |m| m[0] - m[1] * m[1]))
}

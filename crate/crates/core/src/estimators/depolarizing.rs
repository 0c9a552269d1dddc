//! Global depolarizing: `ρ_p = (1-p)|ψ><ψ| + p I / 2^L`.
//!
//! Since `ρ_p^n = u_n |ψ><ψ| + t^n I` with `q = 1-p`, `t = p/2^L` and
//! `u_n = (q+t)^n - t^n`, every moment follows from `⟨O⟩`, `⟨O²⟩` and `Tr O²`.

use crate::error::Result;
use crate::jastrow::JastrowModel;
use crate::model::{MomentEstimate, OperatorKind, OperatorSpec};
use crate::operators::DiagonalOperator;
use crate::sampler::SamplePool;

use super::{pure_moments, MomentRequest};

/// `Tr(O²)` over the full `2^L` space.
pub fn trace_o2(op: &OperatorSpec, sites: usize) -> Result<f64> {
    let dim = 2f64.powi(sites as i32);
    if op.kind == OperatorKind::OX {
        return Ok(dim * 0.25 * sites as f64);
    }
    Ok(dim * DiagonalOperator::from_spec(op, sites)?.mean_square_trace())
}

/// `(u_r t^s + u_s t^r)⟨O²⟩ + u_r u_s ⟨O⟩² + t^{r+s} Tr(O²)`, with `0⁰ = 1`.
pub fn moment_depolarizing(r: usize, s: usize, pure_mean: f64, pure_second: f64, trace_o2: f64, sites: usize, p: f64) -> f64 {
    let q = 1.0 - p;
    let t = p / 2f64.powi(sites as i32);
    let u = |n: usize| (q + t).powi(n as i32) - t.powi(n as i32);
    let (ur, us) = (u(r), u(s));
    let (tr, ts) = (t.powi(r as i32), t.powi(s as i32));
    (ur * ts + us * tr) * pure_second + ur * us * pure_mean * pure_mean + tr * ts * trace_o2
}

/// Closed-form moment fed with Monte Carlo `⟨O⟩`, `⟨O²⟩` (block by block).
pub fn moment_depolarizing_mc(req: &MomentRequest, pool: &SamplePool, model: &JastrowModel) -> Result<MomentEstimate> {
    req.validate(pool, model)?;
    let pm = pure_moments(pool, model, &req.operator)?;
    let tr = trace_o2(&req.operator, model.sites())?;
    let (l, p) = (model.sites(), req.channel.p);
    let f = |mean: f64, second: f64| moment_depolarizing(req.r, req.s, mean, second, tr, l, p);
    let blocks: Vec<f64> = pm
        .mean_blocks
        .iter()
        .zip(&pm.second_blocks)
        .map(|(&m, &s)| f(m, s))
        .collect();
    let mut e = MomentEstimate::from_blocks(req.r, req.s, blocks, pool.len() as u64);
    e.value = f(pm.mean(), pm.second());
    Ok(e)
}

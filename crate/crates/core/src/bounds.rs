//! From mixed moments `Tr(ρ^r O ρ^s O)` to QFI lower bounds.
//!
//! `T_k = Σ_ij |O_ij|² (λ_i - λ_j)² ((λ_i + λ_j)/2)^k` is a fixed linear
//! combination of moments with `r + s = k + 2`. The polynomial bounds
//! `F_n = Σ_k 2^{k+1} C(n+1, k+1) (-1)^k T_k` and the Krylov bounds
//! `B_n = b^T A^{-1} b` (`A_ij = T_{i+j+1}`, `b_i = T_i`) both derive from
//! the `T_k`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::ScalarEstimate;
use crate::model::{binomial, MomentEstimate};

/// Default upper limit on the Hankel condition number.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Pivots below this fraction of their diagonal entry end the Krylov
/// recursion.
const PIVOT_REL_TOL: f64 = 1e-11;

/// Moments keyed by `(r, s)`; lookups are symmetric in `r ↔ s`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MomentTable {
    traces: BTreeMap<(usize, usize), MomentEstimate>,
}

impl MomentTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, e: MomentEstimate) {
        let key = (e.r.max(e.s), e.r.min(e.s));
        self.traces.insert(key, e);
    }

    pub fn from_estimates<I: IntoIterator<Item = MomentEstimate>>(it: I) -> Self {
        let mut t = Self::new();
        for e in it {
            t.insert(e);
        }
        t
    }

    /// Exact table of all shapes with `r + s ≤ max_p` from a closure.
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(max_p: usize, mut f: F) -> Self {
        Self::from_estimates(
            required_traces(max_p)
                .into_iter()
                .map(|(r, s)| MomentEstimate::exact(r, s, f(r, s))),
        )
    }

    pub fn get(&self, r: usize, s: usize) -> Option<&MomentEstimate> {
        self.traces.get(&(r.max(s), r.min(s)))
    }

    /// Largest `P = r + s` for which every shape is present.
    pub fn max_p(&self) -> usize {
        let mut p = 2;
        while (0..=p / 2).all(|s| self.get(p - s, s).is_some()) {
            p += 1;
        }
        p - 1
    }

    /// Highest `k` with all of `T_0..T_k` available, if any.
    pub fn max_k(&self) -> Option<usize> {
        let p = self.max_p();
        if p < 2 {
            None
        } else {
            Some(p - 2)
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &MomentEstimate> {
        self.traces.values()
    }

    /// Multiplies every trace by `c` (used for `O → λO`, `c = λ²`).
    pub fn scaled(&self, c: f64) -> Self {
        Self::from_estimates(self.iter().map(|e| MomentEstimate {
            value: e.value * c,
            std_error: e.std_error * c.abs(),
            block_means: e.block_means.iter().map(|b| b * c).collect(),
            ..e.clone()
        }))
    }
}

/// Canonical shapes `(r, s)`, `r ≥ s`, with `2 ≤ r + s ≤ max_p`.
pub fn required_traces(max_p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for p in 2..=max_p {
        for s in 0..=p / 2 {
            out.push((p - s, s));
        }
    }
    out
}

/// `C_l^{(k)} = C(k,l) - 2C(k,l-1) + C(k,l-2)`.
pub fn tk_coefficient(k: usize, l: usize) -> f64 {
    let c = |j: isize| if j < 0 { 0.0 } else { binomial(k, j as usize) };
    let l = l as isize;
    c(l) - 2.0 * c(l - 1) + c(l - 2)
}

/// Linear weights of `T_k` over the shapes `(k+2-l, l)`.
fn tk_terms(k: usize) -> Vec<(usize, usize, f64)> {
    let scale = 0.5f64.powi(k as i32);
    (0..=k + 2).map(|l| (k + 2 - l, l, scale * tk_coefficient(k, l))).collect()
}

fn tk_from<F: Fn(usize, usize) -> Option<f64>>(k: usize, value: F) -> Result<f64> {
    let mut acc = 0.0;
    for (r, s, c) in tk_terms(k) {
        if c == 0.0 {
            continue;
        }
        acc += c * value(r, s).ok_or(Error::MissingTrace { r, s })?;
    }
    Ok(acc)
}

/// `T_k` with an error from the shared block structure when available,
/// otherwise from independent propagation.
pub fn compute_tk(table: &MomentTable, k: usize) -> Result<ScalarEstimate> {
    let value = tk_from(k, |r, s| table.get(r, s).map(|e| e.value))?;
    let terms: Vec<(&MomentEstimate, f64)> = tk_terms(k)
        .into_iter()
        .filter(|t| t.2 != 0.0)
        .map(|(r, s, c)| (table.get(r, s).unwrap(), c))
        .collect();
    let g = terms.iter().map(|(e, _)| e.block_means.len()).max().unwrap_or(0);
    let aligned = g > 1 && terms.iter().all(|(e, _)| e.block_means.is_empty() || e.block_means.len() == g);
    let std_error = if aligned {
        let blocks: Vec<f64> = (0..g)
            .map(|i| {
                terms
                    .iter()
                    .map(|(e, c)| c * e.block_means.get(i).copied().unwrap_or(e.value))
                    .sum()
            })
            .collect();
        crate::model::mean_and_error(&blocks).1
    } else {
        terms.iter().map(|(e, c)| (c * e.std_error).powi(2)).sum::<f64>().sqrt()
    };
    Ok(ScalarEstimate { value, std_error })
}

/// `F_n` coefficients: `2^{k+1} C(n+1, k+1) (-1)^k`.
pub fn fn_coefficient(n: usize, k: usize) -> f64 {
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * 2f64.powi(k as i32 + 1) * binomial(n + 1, k + 1)
}

fn fn_value(t: &[f64], n: usize) -> f64 {
    (0..=n).map(|k| fn_coefficient(n, k) * t[k]).sum()
}

/// Polynomial bound `F_n` (errors combined in quadrature).
pub fn compute_fn(tks: &[ScalarEstimate], n: usize) -> Result<ScalarEstimate> {
    if tks.len() <= n {
        return Err(Error::MissingTk { order: n, needed: n });
    }
    let t: Vec<f64> = tks.iter().map(|x| x.value).collect();
    let err = (0..=n)
        .map(|k| (fn_coefficient(n, k) * tks[k].std_error).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ScalarEstimate {
        value: fn_value(&t, n),
        std_error: err,
    })
}

/// Result of one Krylov order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovBound {
    pub n: usize,
    pub value: f64,
    pub std_error: f64,
    /// Condition number of the `n × n` Hankel matrix.
    pub condition: f64,
    pub stable: bool,
    /// Number of Krylov directions actually used (`< n` after truncation).
    pub order_used: usize,
}

/// `b^T A^{-1} b` by sequential `LDL^T` in Krylov order. A vanishing or
/// negative pivot means the moment sequence has (numerically) fewer
/// independent directions; the recursion stops there and the bound of the
/// previous order is returned, flagged unstable.
fn krylov_value(t: &[f64], n: usize) -> Result<(f64, usize)> {
    let scale = t[..2 * n].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = 1e-13 * scale;
    if scale == 0.0 || (t[0].abs() <= floor && t[1].abs() <= floor) {
        return Ok((0.0, 0));
    }
    if t[1] <= floor {
        return Err(Error::SingularMatrix);
    }
    let a = |i: usize, j: usize| t[i + j + 1];
    // Column-wise LDL^T: l[i][j] for j < i, pivots d[j].
    let mut l = vec![vec![0.0; n]; n];
    let mut d = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut total = 0.0;
    for j in 0..n {
        let mut dj = a(j, j);
        for k in 0..j {
            dj -= l[j][k] * l[j][k] * d[k];
        }
        if dj <= PIVOT_REL_TOL * a(j, j).abs().max(floor) || dj <= floor {
            return Ok((total, j));
        }
        d[j] = dj;
        for i in j + 1..n {
            let mut v = a(i, j);
            for k in 0..j {
                v -= l[i][k] * l[j][k] * d[k];
            }
            l[i][j] = v / dj;
        }
        let mut yj = t[j];
        for k in 0..j {
            yj -= l[j][k] * y[k];
        }
        y[j] = yj;
        total += yj * yj / dj;
    }
    Ok((total, n))
}

/// Condition number of the `n × n` Hankel matrix `A_ij = T_{i+j+1}`.
pub fn hankel_condition(t: &[f64], n: usize) -> f64 {
    let m = DMatrix::from_fn(n, n, |i, j| t[i + j + 1]);
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Krylov bound `B_n` from `T_0..T_{2n-1}`.
pub fn compute_bn(tks: &[ScalarEstimate], n: usize, condition_limit: f64) -> Result<KrylovBound> {
    if n == 0 {
        return Err(Error::BadRequest("Krylov order starts at 1".into()));
    }
    if tks.len() < 2 * n {
        return Err(Error::MissingTk {
            order: n,
            needed: 2 * n - 1,
        });
    }
    let t: Vec<f64> = tks.iter().map(|x| x.value).collect();
    let (value, used) = krylov_value(&t, n)?;
    let condition = hankel_condition(&t, n);
    // First-order propagation for B_1; higher orders rely on the bootstrap.
    let std_error = if n == 1 && t[1] != 0.0 {
        let (t0, t1) = (t[0], t[1]);
        ((2.0 * t0 / t1 * tks[0].std_error).powi(2) + (t0 * t0 / (t1 * t1) * tks[1].std_error).powi(2)).sqrt()
    } else {
        f64::NAN
    };
    Ok(KrylovBound {
        n,
        value,
        std_error,
        condition,
        stable: used == n && condition <= condition_limit,
        order_used: used,
    })
}

/// Standard-quantum-limit line `F = L`.
pub fn sql_threshold(sites: usize) -> f64 {
    sites as f64
}

/// Whether `value` exceeds the SQL by more than `n_sigma` errors.
pub fn witnesses_entanglement(value: f64, std_error: f64, sites: usize, n_sigma: f64) -> bool {
    value - n_sigma * std_error.max(0.0) > sql_threshold(sites)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    /// Largest polynomial order to report (clipped by the available `T_k`).
    pub max_f: usize,
    /// Largest Krylov order to report.
    pub max_b: usize,
    pub condition_limit: f64,
    /// Bootstrap replicates for the error bars (0 disables).
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            max_f: 5,
            max_b: 2,
            condition_limit: CONDITION_LIMIT,
            n_boot: 400,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub t: Vec<ScalarEstimate>,
    /// `F_n` for `n = 0..f.len()`.
    pub f: Vec<ScalarEstimate>,
    /// `B_n` for `n = 1..=b.len()`.
    pub b: Vec<KrylovBound>,
    pub krylov_condition: Vec<f64>,
    /// Largest `n` whose `B_n` is stable.
    pub stable_orders: usize,
    pub sql: f64,
}

impl BoundReport {
    pub fn f_n(&self, n: usize) -> Option<&ScalarEstimate> {
        self.f.get(n)
    }

    pub fn b_n(&self, n: usize) -> Option<&KrylovBound> {
        if n == 0 {
            None
        } else {
            self.b.get(n - 1)
        }
    }
}

/// Builds `T_k`, `F_n` and `B_n` from a moment table. When the traces carry
/// aligned block means, errors of `F_n` and `B_n` come from a bootstrap
/// over blocks that resamples all traces jointly.
pub fn assemble(table: &MomentTable, sites: usize, opts: &BoundOptions) -> Result<BoundReport> {
    let kmax = table.max_k().ok_or(Error::MissingTrace { r: 1, s: 1 })?;
    let t: Vec<ScalarEstimate> = (0..=kmax).map(|k| compute_tk(table, k)).collect::<Result<_>>()?;
    let nf = opts.max_f.min(kmax);
    let mut f: Vec<ScalarEstimate> = (0..=nf).map(|n| compute_fn(&t, n)).collect::<Result<_>>()?;
    // B_n needs T_0..T_{2n-1}.
    let nb = opts.max_b.min(kmax.div_ceil(2));
    let mut b: Vec<KrylovBound> = (1..=nb)
        .map(|n| compute_bn(&t, n, opts.condition_limit))
        .collect::<Result<_>>()?;

    if opts.n_boot > 1 {
        if let Some(boot) = bootstrap(table, kmax, nf, nb, opts) {
            for (n, e) in boot.f_err.into_iter().enumerate() {
                f[n].std_error = e;
            }
            for (n, e) in boot.b_err.into_iter().enumerate() {
                b[n].std_error = e;
            }
        }
    }
    let krylov_condition = b.iter().map(|x| x.condition).collect();
    let stable_orders = b.iter().take_while(|x| x.stable).count();
    Ok(BoundReport {
        t,
        f,
        b,
        krylov_condition,
        stable_orders,
        sql: sql_threshold(sites),
    })
}

struct BootErrors {
    f_err: Vec<f64>,
    b_err: Vec<f64>,
}

fn bootstrap(table: &MomentTable, kmax: usize, nf: usize, nb: usize, opts: &BoundOptions) -> Option<BootErrors> {
    let g = table.iter().map(|e| e.block_means.len()).max()?;
    if g < 2 || table.iter().any(|e| !e.block_means.is_empty() && e.block_means.len() != g) {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut f_samples: Vec<Vec<f64>> = vec![Vec::new(); nf + 1];
    let mut b_samples: Vec<Vec<f64>> = vec![Vec::new(); nb];
    let mut idx = vec![0usize; g];
    for _ in 0..opts.n_boot {
        for i in idx.iter_mut() {
            *i = rng.gen_range(0..g);
        }
        let resampled = |r: usize, s: usize| {
            table.get(r, s).map(|e| {
                if e.block_means.is_empty() {
                    e.value
                } else {
                    idx.iter().map(|&i| e.block_means[i]).sum::<f64>() / g as f64
                }
            })
        };
        let t: Vec<f64> = match (0..=kmax).map(|k| tk_from(k, resampled)).collect::<Result<Vec<_>>>() {
            Ok(t) => t,
            Err(_) => continue,
        };
        for (n, slot) in f_samples.iter_mut().enumerate() {
            slot.push(fn_value(&t, n));
        }
        for (i, slot) in b_samples.iter_mut().enumerate() {
            if let Ok((v, _)) = krylov_value(&t, i + 1) {
                slot.push(v);
            }
        }
    }
    let sd = |v: &[f64]| {
        if v.len() < 2 {
            return f64::NAN;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    Some(BootErrors {
        f_err: f_samples.iter().map(|v| sd(v)).collect(),
        b_err: b_samples.iter().map(|v| sd(v)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_t(values: &[f64]) -> Vec<ScalarEstimate> {
        values.iter().map(|&v| ScalarEstimate { value: v, std_error: 0.0 }).collect()
    }

    /// Moments of a diagonal-in-eigenbasis toy: ρ = diag(λ), O given.
    fn toy_table(lambda: &[f64], o: &[Vec<f64>], max_p: usize) -> MomentTable {
        MomentTable::from_fn(max_p, |r, s| {
            let mut acc = 0.0;
            for i in 0..lambda.len() {
                for j in 0..lambda.len() {
                    acc += lambda[i].powi(r as i32) * o[i][j] * lambda[j].powi(s as i32) * o[j][i];
                }
            }
            acc
        })
    }

    fn toy_qfi(lambda: &[f64], o: &[Vec<f64>]) -> f64 {
        let mut f = 0.0;
        for i in 0..lambda.len() {
            for j in 0..lambda.len() {
                let s = lambda[i] + lambda[j];
                if s > 1e-12 {
                    f += 2.0 * (lambda[i] - lambda[j]).powi(2) / s * o[i][j] * o[i][j];
                }
            }
        }
        f
    }

    #[test]
    fn coefficient_rows() {
        assert_eq!((0..3).map(|l| tk_coefficient(0, l)).collect::<Vec<_>>(), vec![1.0, -2.0, 1.0]);
        assert_eq!((0..4).map(|l| tk_coefficient(1, l)).collect::<Vec<_>>(), vec![1.0, -1.0, -1.0, 1.0]);
        assert_eq!(fn_coefficient(1, 0), 4.0);
        assert_eq!(fn_coefficient(1, 1), -4.0);
    }

    #[test]
    fn pure_state_hierarchy_is_exact() {
        // Pure state: Tr(ρ^r O ρ^s O) = ⟨O⟩² for r,s ≥ 1 and ⟨O²⟩ otherwise.
        let (mean, second) = (0.3, 2.5);
        let var = second - mean * mean;
        let table = MomentTable::from_fn(7, |r, s| if r > 0 && s > 0 { mean * mean } else { second });
        let t0 = compute_tk(&table, 0).unwrap().value;
        let t1 = compute_tk(&table, 1).unwrap().value;
        assert!((t0 - 2.0 * var).abs() < 1e-14);
        assert!((t1 - var).abs() < 1e-14);
        let rep = assemble(&table, 4, &BoundOptions::default()).unwrap();
        assert!((rep.f[0].value - 4.0 * var).abs() < 1e-12);
        assert!((rep.b_n(1).unwrap().value - 4.0 * var).abs() < 1e-12);
        for f in &rep.f {
            assert!((f.value - 4.0 * var).abs() < 1e-10);
        }
    }

    #[test]
    fn near_pure_high_order_is_flagged() {
        let table = MomentTable::from_fn(7, |r, s| if r > 0 && s > 0 { 0.0 } else { 1.0 });
        let t: Vec<ScalarEstimate> = (0..6).map(|k| compute_tk(&table, k).unwrap()).collect();
        let b3 = compute_bn(&t, 3, CONDITION_LIMIT).unwrap();
        assert!(!b3.stable);
        assert!(b3.condition > CONDITION_LIMIT);
        assert!((b3.value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn maximally_mixed_gives_zero() {
        let lambda = vec![0.25; 4];
        let o = vec![
            vec![1.0, 0.5, 0.0, 0.0],
            vec![0.5, -1.0, 0.2, 0.0],
            vec![0.0, 0.2, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, -1.0],
        ];
        let rep = assemble(&toy_table(&lambda, &o, 7), 2, &BoundOptions::default()).unwrap();
        for f in &rep.f {
            assert!(f.value.abs() < 1e-14);
        }
        assert_eq!(rep.b_n(1).unwrap().value, 0.0);
        let zero = exact_t(&[0.0; 6]);
        assert_eq!(compute_fn(&zero, 5).unwrap().value, 0.0);
    }

    #[test]
    fn ordering_on_mixed_toy() {
        let lambda = vec![0.55, 0.25, 0.12, 0.05, 0.03];
        let o: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| ((i * 7 + j * 7 + i * j) % 5) as f64 * 0.3 - 0.4).collect())
            .collect();
        let rep = assemble(&toy_table(&lambda, &o, 7), 5, &BoundOptions::default()).unwrap();
        let fq = toy_qfi(&lambda, &o);
        let tol = 1e-12;
        assert!(rep.f[1].value <= rep.f[3].value + tol);
        assert!(rep.f[3].value <= rep.f[5].value + tol);
        assert!(rep.f[5].value <= fq + tol);
        assert!(rep.f[1].value <= rep.b_n(1).unwrap().value + tol);
        assert!(rep.f[5].value <= rep.b_n(2).unwrap().value + tol);
        assert!(rep.b_n(2).unwrap().value <= fq + tol);
    }

    #[test]
    fn scale_covariance() {
        let lambda = vec![0.6, 0.3, 0.1];
        let o = vec![vec![0.2, 1.0, 0.3], vec![1.0, -0.5, 0.7], vec![0.3, 0.7, 0.1]];
        let table = toy_table(&lambda, &o, 7);
        let a = assemble(&table, 3, &BoundOptions::default()).unwrap();
        let b = assemble(&table.scaled(4.0), 3, &BoundOptions::default()).unwrap();
        for (x, y) in a.f.iter().zip(&b.f) {
            assert!((4.0 * x.value - y.value).abs() < 1e-12);
        }
        for (x, y) in a.b.iter().zip(&b.b) {
            assert!((4.0 * x.value - y.value).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_inputs() {
        let table = MomentTable::from_fn(3, |_, _| 1.0);
        assert_eq!(compute_tk(&table, 2), Err(Error::MissingTrace { r: 4, s: 0 }));
        let t = exact_t(&[1.0, 0.5]);
        assert!(matches!(compute_fn(&t, 2), Err(Error::MissingTk { .. })));
        assert!(matches!(compute_bn(&t, 2, CONDITION_LIMIT), Err(Error::MissingTk { .. })));
        assert_eq!(
            compute_bn(&exact_t(&[1.0, 0.0]), 1, CONDITION_LIMIT),
            Err(Error::SingularMatrix)
        );
    }

    #[test]
    fn sql_line() {
        assert_eq!(sql_threshold(10), 10.0);
        assert_eq!(sql_threshold(50), 50.0);
        assert!(witnesses_entanglement(12.0, 0.5, 10, 3.0));
        assert!(!witnesses_entanglement(11.0, 0.5, 10, 3.0));
    }

    #[test]
    fn bootstrap_errors_track_block_noise() {
        let g = 50;
        let mk = |r: usize, s: usize, base: f64| {
            let blocks: Vec<f64> = (0..g).map(|i| base + 0.01 * ((i * 13 + r * 5 + s) % 7) as f64).collect();
            MomentEstimate::from_blocks(r, s, blocks, 1000)
        };
        let table = MomentTable::from_estimates(vec![mk(2, 0, 2.0), mk(1, 1, 0.5), mk(3, 0, 1.8), mk(2, 1, 0.45)]);
        let rep = assemble(&table, 4, &BoundOptions::default()).unwrap();
        assert!(rep.f[0].std_error > 0.0 && rep.f[0].std_error.is_finite());
        assert!(rep.b[0].std_error > 0.0 && rep.b[0].std_error.is_finite());
    }
}

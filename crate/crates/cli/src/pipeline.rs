//! Bound rows from Monte Carlo pools or exact states, plus closed-form
//! overlays.

use std::collections::HashMap;

use qfi_lab::analytics::{
    depolarizing_qfi, dephasing_ox_qfi, dicke_qfi, dicke_qfi_thermo, ghz_damping_qfi, ghz_dephasing_qfi, PrefactorMode,
};
use qfi_lab::bounds::{assemble, required_traces, witnesses_entanglement, BoundOptions, BoundReport, MomentTable};
use qfi_lab::estimators::{estimate_moment, variance_pure, MomentRequest};
use qfi_lab::exact::{
    apply_channel, build_jg_density, dicke_state, exact_summary, ghz_state, FULL_SPACE_SITES, pure_variance, DenseState,
};
use qfi_lab::sampler::SamplePool;
use qfi_lab::{ChannelKind, ChannelSpec, Error, JastrowModel, OperatorKind, OperatorSpec, Result};

use crate::args::{Order, MAX_B, MAX_F};
use crate::output::fmt_f64;

/// Significance used for the entanglement-witness column.
pub const WITNESS_SIGMA: f64 = 3.0;
const KMAX: usize = 2 * MAX_B - 1;

/// Named cells of one output row; missing cells print as `nan`.
#[derive(Clone, Debug, Default)]
pub struct Record(HashMap<String, String>);

impl Record {
    pub fn set(&mut self, k: impl Into<String>, v: impl Into<String>) {
        self.0.insert(k.into(), v.into());
    }

    pub fn num(&mut self, k: impl Into<String>, v: f64) {
        self.set(k, fmt_f64(v));
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.0.get(k).map(String::as_str)
    }

    pub fn cells(&self, header: &[String]) -> Vec<String> {
        header.iter().map(|h| self.get(h).unwrap_or("nan").to_string()).collect()
    }
}

fn bound_columns() -> Vec<String> {
    let mut h = Vec::new();
    for k in 0..=KMAX.max(MAX_F) {
        h.push(format!("T_{k}"));
        h.push(format!("T_{k}_err"));
    }
    for n in 0..=MAX_F {
        h.push(format!("F_{n}"));
        h.push(format!("F_{n}_err"));
    }
    for n in 1..=MAX_B {
        for suffix in ["", "_err", "_stable", "_condition", "_order_used"] {
            h.push(format!("B_{n}{suffix}"));
        }
    }
    h
}

const OVERLAYS: [&str; 6] = [
    "var_pure",
    "var_pure_err",
    "ghz_qfi",
    "dicke_qfi",
    "dicke_qfi_thermo",
    "closed_form_qfi",
];

/// Columns of `bounds` and `scan` output.
pub fn bounds_header() -> Vec<String> {
    let mut h: Vec<String> = ["L", "alpha", "channel", "p", "operator", "seed", "samples", "tuples"]
        .map(String::from)
        .to_vec();
    h.extend(bound_columns());
    h.extend(["sql", "witness_B_1"].map(String::from));
    h.extend(OVERLAYS.map(String::from));
    h.push("closed_form_qfi_err".into());
    h.push("status".into());
    h
}

/// Columns of `exact` output.
pub fn exact_header() -> Vec<String> {
    let mut h: Vec<String> = ["L", "alpha", "state", "channel", "p", "operator", "qfi", "effective_rank", "purity"]
        .map(String::from)
        .to_vec();
    h.extend(bound_columns());
    h.push("sql".into());
    h.extend(OVERLAYS.map(String::from));
    h
}

/// Key cells identifying a bounds row.
pub fn key_record(sites: usize, alpha: f64, channel: &ChannelSpec, op: &OperatorSpec, seed: u64, samples: usize, tuples: usize) -> Record {
    let mut r = Record::default();
    r.set("L", sites.to_string());
    r.num("alpha", alpha);
    r.set("channel", channel.kind.name());
    r.num("p", channel.p);
    r.set("operator", op.kind.name());
    r.set("seed", seed.to_string());
    r.set("samples", samples.to_string());
    r.set("tuples", tuples.to_string());
    r
}

fn fill_bounds(rec: &mut Record, rep: &BoundReport, orders: &[Order]) {
    for (k, t) in rep.t.iter().enumerate() {
        rec.num(format!("T_{k}"), t.value);
        rec.num(format!("T_{k}_err"), t.std_error);
    }
    for o in orders {
        match *o {
            Order::F(n) => {
                if let Some(f) = rep.f_n(n) {
                    rec.num(format!("F_{n}"), f.value);
                    rec.num(format!("F_{n}_err"), f.std_error);
                }
            }
            Order::B(n) => {
                if let Some(b) = rep.b_n(n) {
                    rec.num(format!("B_{n}"), b.value);
                    rec.num(format!("B_{n}_err"), b.std_error);
                    rec.set(format!("B_{n}_stable"), if b.stable { "1" } else { "0" });
                    rec.num(format!("B_{n}_condition"), b.condition);
                    rec.set(format!("B_{n}_order_used"), b.order_used.to_string());
                }
            }
        }
    }
    rec.num("sql", rep.sql);
}

/// Largest `T_k` index needed by the requested orders.
pub fn kmax(orders: &[Order]) -> usize {
    orders.iter().map(|o| o.kmax()).max().unwrap_or(0)
}

fn bound_options(orders: &[Order], n_boot: usize, seed: u64) -> BoundOptions {
    let max_f = orders.iter().filter_map(|o| if let Order::F(n) = o { Some(*n) } else { None }).max();
    let max_b = orders.iter().filter_map(|o| if let Order::B(n) = o { Some(*n) } else { None }).max();
    BoundOptions {
        max_f: max_f.unwrap_or(0),
        max_b: max_b.unwrap_or(0),
        n_boot,
        seed,
        ..BoundOptions::default()
    }
}

/// Closed-form references for the given setting; `var` is the pure-state
/// variance with its error.
pub fn overlays(rec: &mut Record, sites: usize, channel: &ChannelSpec, op: &OperatorSpec, var: Option<(f64, f64)>) {
    let p = channel.p;
    match (op.kind, channel.kind) {
        (OperatorKind::OZ, ChannelKind::Dephasing) => rec.num("ghz_qfi", ghz_dephasing_qfi(sites, p)),
        (OperatorKind::OZ, ChannelKind::AmplitudeDamping) => rec.num("ghz_qfi", ghz_damping_qfi(sites, p)),
        (OperatorKind::OStar, ChannelKind::Dephasing) => {
            if let Ok(v) = dicke_qfi(sites, p) {
                rec.num("dicke_qfi", v);
            }
            if let Ok(v) = dicke_qfi_thermo(p) {
                rec.num("dicke_qfi_thermo", v);
            }
        }
        _ => {}
    }
    let Some((v, err)) = var else { return };
    rec.num("var_pure", v);
    rec.num("var_pure_err", err);
    let closed: Option<Box<dyn Fn(f64) -> f64>> = if p == 0.0 {
        Some(Box::new(|x| 4.0 * x))
    } else {
        match (channel.kind, op.kind) {
            (ChannelKind::Dephasing, OperatorKind::OX) => Some(Box::new(move |x| dephasing_ox_qfi(x, sites, p))),
            (ChannelKind::Depolarizing, _) => {
                Some(Box::new(move |x| depolarizing_qfi(x, sites, p, PrefactorMode::FourTimes)))
            }
            _ => None,
        }
    };
    if let Some(f) = closed {
        rec.num("closed_form_qfi", f(v));
        rec.num("closed_form_qfi_err", (f(v + err) - f(v)).abs());
    }
}

/// Monte Carlo moment table for the traces needed up to `T_kmax`.
pub fn mc_table(
    model: &JastrowModel,
    pool: &SamplePool,
    channel: &ChannelSpec,
    op: &OperatorSpec,
    kmax: usize,
    tuples: usize,
    seed: u64,
) -> Result<MomentTable> {
    let mut t = MomentTable::new();
    for (i, (r, s)) in required_traces(kmax + 2).into_iter().enumerate() {
        let req = MomentRequest::new(r, s, *channel, op.clone(), tuples, seed.wrapping_add(1 + i as u64));
        t.insert(estimate_moment(&req, pool, model)?);
    }
    Ok(t)
}

pub struct McRequest<'a> {
    pub model: &'a JastrowModel,
    pub pool: &'a SamplePool,
    pub channel: ChannelSpec,
    pub operator: OperatorSpec,
    pub orders: &'a [Order],
    pub tuples: usize,
    pub n_boot: usize,
    pub seed: u64,
}

/// One `bounds` row from a sample pool; `rec` already holds the key cells.
pub fn mc_bounds(req: &McRequest<'_>, rec: &mut Record) -> Result<()> {
    let sites = req.model.sites();
    let table = mc_table(req.model, req.pool, &req.channel, &req.operator, kmax(req.orders), req.tuples, req.seed)?;
    let rep = assemble(&table, sites, &bound_options(req.orders, req.n_boot, req.seed))?;
    fill_bounds(rec, &rep, req.orders);
    if let Some(b1) = rep.b_n(1).filter(|_| req.orders.contains(&Order::B(1))) {
        let w = witnesses_entanglement(b1.value, b1.std_error, sites, WITNESS_SIGMA);
        rec.set("witness_B_1", if w { "1" } else { "0" });
    }
    let var = variance_pure(req.pool, req.model, &req.operator).ok().map(|v| (v.value, v.std_error));
    overlays(rec, sites, &req.channel, &req.operator, var);
    rec.set("status", "ok");
    Ok(())
}

/// Pristine state used by `exact`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    /// Jastrow–Gutzwiller state at the given α.
    Jg,
    /// Antiferromagnetic GHZ state.
    Ghz,
    /// Dicke-like superposition of translated blocks.
    Dicke,
}

impl StateKind {
    pub fn name(self) -> &'static str {
        match self {
            StateKind::Jg => "jg",
            StateKind::Ghz => "ghz",
            StateKind::Dicke => "dicke",
        }
    }
}

pub fn pristine_state(kind: StateKind, sites: usize, alpha: f64) -> Result<DenseState> {
    match kind {
        StateKind::Jg => build_jg_density(&JastrowModel::half_filled(sites, alpha)?),
        StateKind::Ghz => ghz_state(sites),
        StateKind::Dicke => dicke_state(sites),
    }
}

/// One `exact` row: spectral QFI, all bounds up to the CLI maxima and the
/// overlays evaluated with the exact pure-state variance.
pub fn exact_row(kind: StateKind, sites: usize, alpha: f64, channel: &ChannelSpec, op: &OperatorSpec) -> Result<Record> {
    op.validate(sites)?;
    // Channel limits first: they are stricter than the sector limit.
    if channel.kind != ChannelKind::Dephasing && sites > FULL_SPACE_SITES {
        return Err(Error::SpaceTooLarge { sites, limit: FULL_SPACE_SITES });
    }
    let pure = pristine_state(kind, sites, alpha)?;
    let state = apply_channel(&pure, channel)?;
    let opts = BoundOptions { max_f: MAX_F, max_b: MAX_B, n_boot: 0, ..BoundOptions::default() };
    let summary = exact_summary(&state, op, KMAX.max(MAX_F) + 2, &opts)?;
    let mut rec = Record::default();
    rec.set("L", sites.to_string());
    rec.num("alpha", if kind == StateKind::Jg { alpha } else { f64::NAN });
    rec.set("state", kind.name());
    rec.set("channel", channel.kind.name());
    rec.num("p", channel.p);
    rec.set("operator", op.kind.name());
    rec.num("qfi", summary.qfi);
    rec.num("effective_rank", summary.effective_rank);
    rec.num("purity", state.purity());
    let all: Vec<Order> = (0..=MAX_F).map(Order::F).chain((1..=MAX_B).map(Order::B)).collect();
    fill_bounds(&mut rec, &summary.bounds, &all);
    let var = pure_variance(&pure, op)?;
    overlays(&mut rec, sites, channel, op, Some((var, 0.0)));
    Ok(rec)
}

/// Row for a grid point that failed.
pub fn failed(mut rec: Record, e: &Error) -> Record {
    let cat = match e.category() {
        qfi_lab::ErrorCategory::Validation => "validation",
        qfi_lab::ErrorCategory::Resource => "resource",
        qfi_lab::ErrorCategory::Numerical => "numerical",
        qfi_lab::ErrorCategory::Io => "io",
    };
    rec.set("status", format!("error: {cat}: {e}"));
    rec
}

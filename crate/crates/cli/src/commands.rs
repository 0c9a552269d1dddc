//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use qfi_lab::estimators::correlations::Correlator;
use qfi_lab::estimators::{correlator_xx, correlator_zz, fit_luttinger, fit_power_law_with, FitOptions, LuttingerForm};
use qfi_lab::sampler::{read_pool, run_chain, tv_distance, write_diagnostics, write_pool, SamplePool, SamplerConfig, TV_MAX_SITES};
use qfi_lab::{Error, JastrowModel, Result, SystemParams};
use serde_json::{json, Value};

use crate::args::{
    parse_grid, parse_sites_grid, resolve_orders, BoundArgs, ChannelArgs, OperatorArgs, OutArgs, SamplingArgs,
};
use crate::output::{emit, fmt_f64, read_manifest, sidecar_path, write_manifest, RunManifest, Table};
use crate::pipeline::{bounds_header, exact_header, exact_row, failed, key_record, mc_bounds, McRequest, StateKind};

fn manifest(command: &str, params: Value, sampler: Option<&SamplerConfig>, seed: u64, start: Instant, extra: Value) -> RunManifest {
    RunManifest {
        command: command.into(),
        argv: std::env::args().collect(),
        params,
        sampler: sampler.map(|c| serde_json::to_value(c).expect("config serializes")),
        build_id: crate::output::build_id(),
        wall_time_s: start.elapsed().as_secs_f64(),
        seed,
        extra,
    }
}

fn sample_pool(model: &JastrowModel, cfg: &SamplerConfig) -> Result<SamplePool> {
    run_chain(model, cfg)
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Chain length L (even, ≤ 64).
    #[arg(long = "L")]
    pub sites: usize,
    /// Jastrow exponent α.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Binary pool file; `<out>.diagnostics.csv` and `<out>.manifest.json`
    /// are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    let start = Instant::now();
    let params = SystemParams::new(a.sites, a.alpha)?;
    let model = JastrowModel::new(params)?;
    let cfg = a.sampling.config(a.sites, a.seed);
    let pool = sample_pool(&model, &cfg)?;
    write_pool(fs::File::create(&a.out)?, &pool, a.alpha, &cfg)?;
    let diag = with_suffix(&a.out, ".diagnostics.csv");
    write_diagnostics(fs::File::create(&diag)?, &pool)?;
    let tv = if a.sites <= TV_MAX_SITES { Some(tv_distance(&pool, &model)?) } else { None };
    let extra = json!({
        "n_chains": pool.n_chains(),
        "n_groups": pool.n_groups(),
        "acceptance_rate": pool.acceptance_rate(),
        "tv_distance": tv,
        "diagnostics": diag.file_name().map(|n| n.to_string_lossy().into_owned()),
    });
    let m = manifest("sample", serde_json::to_value(params).expect("params serialize"), Some(&cfg), a.seed, start, extra);
    write_manifest(&a.out, &m)?;
    println!("samples {}", pool.len());
    println!("acceptance_rate {}", fmt_f64(pool.acceptance_rate()));
    if let Some(tv) = tv {
        println!("tv_distance {}", fmt_f64(tv));
    }
    Ok(())
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Where the configurations come from: a pool file or fresh sampling.
#[derive(Args, Debug, Clone)]
pub struct PoolArgs {
    /// Pool written by `qfi-lab sample`; L and α are taken from it.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Chain length L (required without --pool).
    #[arg(long = "L")]
    pub sites: Option<usize>,
    /// Jastrow exponent α (required without --pool).
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

struct Loaded {
    model: JastrowModel,
    pool: SamplePool,
    sampler: Option<SamplerConfig>,
    source: Value,
}

impl PoolArgs {
    fn load(&self, seed: u64) -> Result<Loaded> {
        match &self.pool {
            Some(path) => {
                let m = read_manifest(path)?;
                let layout = |k: &str, d: usize| {
                    m.as_ref().and_then(|m| m.extra.get(k)).and_then(Value::as_u64).map_or(d, |v| v as usize)
                };
                let (chains, groups) = (
                    layout("n_chains", SamplerConfig::DEFAULT_CHAINS),
                    layout("n_groups", SamplerConfig::DEFAULT_CHAINS * SamplerConfig::DEFAULT_BLOCKS),
                );
                let (header, pool) = read_pool(fs::File::open(path)?, chains, groups)?;
                if self.sites.is_some_and(|l| l != header.sites) {
                    return Err(Error::BadRequest(format!("--L disagrees with the pool (L = {})", header.sites)));
                }
                if self.alpha.is_some_and(|x| x != header.alpha) {
                    return Err(Error::BadRequest(format!("--alpha disagrees with the pool (alpha = {})", header.alpha)));
                }
                let model = JastrowModel::half_filled(header.sites, header.alpha)?;
                let sampler = m.and_then(|m| m.sampler).and_then(|v| serde_json::from_value(v).ok());
                let source = json!({ "pool": path.display().to_string() });
                Ok(Loaded { model, pool, sampler, source })
            }
            None => {
                let (Some(l), Some(alpha)) = (self.sites, self.alpha) else {
                    return Err(Error::BadRequest("either --pool or both --L and --alpha are required".into()));
                };
                let model = JastrowModel::half_filled(l, alpha)?;
                let cfg = self.sampling.config(l, seed);
                let pool = sample_pool(&model, &cfg)?;
                Ok(Loaded { model, pool, sampler: Some(cfg), source: json!("sampled") })
            }
        }
    }
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub source: PoolArgs,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    pub operator: OperatorArgs,
    #[command(flatten)]
    pub bounds: BoundArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn bounds(a: &BoundsArgs) -> Result<()> {
    let start = Instant::now();
    let channel = a.channel.spec()?;
    let op = a.operator.spec()?;
    let orders = resolve_orders(a.bounds.orders.as_deref(), channel.kind)?;
    if let Some(l) = a.source.sites {
        op.validate(l)?;
    }
    let src = a.source.load(a.seed)?;
    let sites = src.model.sites();
    op.validate(sites)?;
    let mut rec = key_record(sites, src.model.alpha(), &channel, &op, a.seed, src.pool.len(), a.bounds.tuples);
    let req = McRequest {
        model: &src.model,
        pool: &src.pool,
        channel,
        operator: op.clone(),
        orders: &orders,
        tuples: a.bounds.tuples,
        n_boot: a.bounds.n_boot,
        seed: a.seed,
    };
    mc_bounds(&req, &mut rec)?;
    let header = bounds_header();
    let mut table = Table::new(header.clone());
    table.push(rec.cells(&header));
    let params = json!({
        "L": sites,
        "N": sites / 2,
        "alpha": src.model.alpha(),
        "channel": channel,
        "operator": op,
        "orders": orders.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "tuples": a.bounds.tuples,
        "n_boot": a.bounds.n_boot,
        "source": src.source,
    });
    let m = manifest("bounds", params, src.sampler.as_ref(), a.seed, start, Value::Null);
    emit(&table, a.out.out.as_deref(), &m)
}

#[derive(Args, Debug)]
pub struct ExactArgs {
    /// Chain length L.
    #[arg(long = "L")]
    pub sites: usize,
    /// Jastrow exponent α (ignored for --state ghz|dicke).
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub alpha: f64,
    /// Pristine state.
    #[arg(long, value_enum, default_value = "jg")]
    pub state: StateKind,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    pub operator: OperatorArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn exact(a: &ExactArgs) -> Result<()> {
    let start = Instant::now();
    SystemParams::new(a.sites, a.alpha)?;
    let channel = a.channel.spec()?;
    let op = a.operator.spec()?;
    let rec = exact_row(a.state, a.sites, a.alpha, &channel, &op)?;
    let header = exact_header();
    let mut table = Table::new(header.clone());
    table.push(rec.cells(&header));
    let params = json!({
        "L": a.sites,
        "N": a.sites / 2,
        "alpha": a.alpha,
        "state": a.state,
        "channel": channel,
        "operator": op,
    });
    emit(&table, a.out.out.as_deref(), &manifest("exact", params, None, 0, start, Value::Null))
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    /// Chain lengths: `start:stop:step` (inclusive), `a,b,c` or one value.
    #[arg(long = "L")]
    pub sites: String,
    /// α grid, same syntax.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: String,
    /// Noise-strength grid, same syntax.
    #[arg(long, default_value = "0")]
    pub p: String,
    /// Noise channel: dephasing, damping or depolarizing.
    #[arg(long)]
    pub channel: String,
    #[command(flatten)]
    pub operator: OperatorArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[command(flatten)]
    pub bounds: BoundArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; rerunning with the same arguments completes missing rows.
    #[arg(long)]
    pub out: PathBuf,
}

/// Grid-point identity used to match rows on resume.
fn row_key(cells: &[String], header: &[String]) -> Option<(String, String, String)> {
    let col = |n: &str| header.iter().position(|h| h == n).and_then(|i| cells.get(i)).cloned();
    Some((col("L")?, col("alpha")?, col("p")?))
}

pub fn scan(a: &ScanArgs) -> Result<()> {
    let start = Instant::now();
    let kind = ChannelArgs { channel: a.channel.clone(), p: 0.0 }.kind()?;
    let op = a.operator.spec()?;
    let orders = resolve_orders(a.bounds.orders.as_deref(), kind)?;
    let ls = parse_sites_grid(&a.sites)?;
    let alphas = parse_grid(&a.alpha)?;
    let ps = parse_grid(&a.p)?;
    let params = json!({
        "L": a.sites,
        "alpha": a.alpha,
        "p": a.p,
        "channel": kind,
        "operator": op,
        "orders": orders.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "samples": a.sampling.samples,
        "burn_in": a.sampling.burn_in,
        "thin": a.sampling.thin,
        "translations": !a.sampling.no_translations,
        "tuples": a.bounds.tuples,
        "n_boot": a.bounds.n_boot,
    });
    let header = bounds_header();

    // Completed rows of an earlier run with identical parameters.
    let mut done: BTreeMap<(String, String, String), Vec<String>> = BTreeMap::new();
    if a.out.exists() {
        let prev = read_manifest(&a.out)?;
        if prev.as_ref().map(|m| (&m.command, &m.params, m.seed)) != Some((&"scan".to_string(), &params, a.seed)) {
            return Err(Error::BadRequest(format!(
                "{} exists and was not written by this scan (see {}); remove it or choose another --out",
                a.out.display(),
                sidecar_path(&a.out).display()
            )));
        }
        let old = Table::read(&a.out)?;
        if old.header != header {
            return Err(Error::Format(format!("{} has an unexpected header", a.out.display())));
        }
        let status = old.column("status").expect("header checked");
        for row in old.rows {
            if row[status] == "ok" {
                if let Some(k) = row_key(&row, &header) {
                    done.insert(k, row);
                }
            }
        }
    }

    let mut points = Vec::new();
    for &l in &ls {
        for &alpha in &alphas {
            for &p in &ps {
                points.push((l, alpha, p));
            }
        }
    }
    let mut rows: Vec<Option<Vec<String>>> = vec![None; points.len()];
    let mut first_error: Option<Error> = None;
    let write = |rows: &[Option<Vec<String>>]| -> Result<()> {
        let mut table = Table::new(header.clone());
        for r in rows.iter().flatten() {
            table.push(r.clone());
        }
        let extra = json!({ "points": points.len(), "completed": rows.iter().flatten().count() });
        emit(&table, Some(&a.out), &manifest("scan", params.clone(), None, a.seed, start, extra))
    };
    for (i, &(l, alpha, p)) in points.iter().enumerate() {
        let channel = qfi_lab::ChannelSpec { kind, p };
        let samples = a.sampling.config(l, a.seed).n_samples;
        let rec = key_record(l, alpha, &channel, &op, a.seed, samples, a.bounds.tuples);
        let key_cells = rec.cells(&header);
        let key = row_key(&key_cells, &header).expect("key columns present");
        if let Some(row) = done.remove(&key) {
            rows[i] = Some(row);
            continue;
        }
        let outcome = (|| -> Result<_> {
            channel.validate()?;
            op.validate(l)?;
            let model = JastrowModel::half_filled(l, alpha)?;
            let pool = sample_pool(&model, &a.sampling.config(l, a.seed))?;
            let mut rec = rec.clone();
            let req = McRequest {
                model: &model,
                pool: &pool,
                channel,
                operator: op.clone(),
                orders: &orders,
                tuples: a.bounds.tuples,
                n_boot: a.bounds.n_boot,
                seed: a.seed,
            };
            mc_bounds(&req, &mut rec)?;
            Ok(rec)
        })();
        let rec = match outcome {
            Ok(r) => r,
            Err(e) => {
                eprintln!("L={l} alpha={} p={}: {e}", fmt_f64(alpha), fmt_f64(p));
                let r = failed(rec, &e);
                first_error.get_or_insert(e);
                r
            }
        };
        rows[i] = Some(rec.cells(&header));
        write(&rows)?;
    }
    write(&rows)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Args, Debug)]
pub struct CorrelationArgs {
    #[command(flatten)]
    pub source: PoolArgs,
    /// Largest distance (default L/2).
    #[arg(long)]
    pub rmax: Option<usize>,
    /// Refit a correlator CSV written earlier instead of sampling.
    #[arg(long = "from-csv")]
    pub from_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

const CORR_HEADER: [&str; 5] = ["r", "corr_zz", "corr_zz_err", "corr_xx", "corr_xx_err"];

/// Staggered power law on the ring chord distance plus the effective `α`
/// of the full bosonization form.
fn fit_summary(c: &[Correlator], len: usize, form: LuttingerForm) -> Result<Value> {
    let r: Vec<usize> = c.iter().map(|x| x.r).collect();
    let v: Vec<f64> = c.iter().map(|x| x.value).collect();
    let e: Vec<f64> = c.iter().map(|x| x.std_error).collect();
    let pl = fit_power_law_with(&r, &v, Some(&e), FitOptions::ring(len, true))?;
    let lf = fit_luttinger(&r, &v, Some(&e), form, FitOptions { r_min: 2, ..FitOptions::ring(len, false) }).ok();
    Ok(json!({
        "staggered_exponent": pl.exponent,
        "staggered_exponent_err": pl.stderr,
        "prefactor": pl.prefactor,
        "n_points": pl.n_points,
        "alpha_eff": lf.map(|f| f.alpha),
        "alpha_eff_err": lf.map(|f| f.stderr),
    }))
}

fn column(t: &Table, name: &str) -> Result<Vec<f64>> {
    let i = t.column(name).ok_or_else(|| Error::Format(format!("missing column '{name}'")))?;
    t.rows
        .iter()
        .map(|row| row[i].parse::<f64>().map_err(|_| Error::Format(format!("bad number '{}' in '{name}'", row[i]))))
        .collect()
}

fn correlators_from(t: &Table, name: &str) -> Result<Vec<Correlator>> {
    let r = column(t, "r")?;
    let v = column(t, name)?;
    let e = column(t, &format!("{name}_err")).unwrap_or_else(|_| vec![0.0; v.len()]);
    Ok(r.iter()
        .zip(v.iter().zip(&e))
        .map(|(&r, (&value, &std_error))| Correlator { r: r as usize, value, std_error })
        .collect())
}

pub fn correlations(a: &CorrelationArgs) -> Result<()> {
    let start = Instant::now();
    if let Some(csv) = &a.from_csv {
        let t = Table::read(csv)?;
        let len = match a.source.sites {
            Some(l) => l,
            None => read_manifest(csv)?
                .and_then(|m| m.params.get("L").and_then(Value::as_u64))
                .map(|l| l as usize)
                .ok_or_else(|| Error::BadRequest("--L is required when the CSV has no manifest".into()))?,
        };
        let zz = fit_summary(&correlators_from(&t, "corr_zz")?, len, LuttingerForm::Zz)?;
        let xx = fit_summary(&correlators_from(&t, "corr_xx")?, len, LuttingerForm::Xx)?;
        let summary = json!({ "zz": zz, "xx": xx });
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        return Ok(());
    }
    let src = a.source.load(a.seed)?;
    let len = src.model.sites();
    let rmax = a.rmax.unwrap_or(len / 2);
    let zz = correlator_zz(&src.pool, rmax)?;
    let xx = correlator_xx(&src.pool, &src.model, rmax)?;
    let mut table = Table::new(CORR_HEADER.map(String::from).to_vec());
    for (z, x) in zz.iter().zip(&xx) {
        table.push(vec![
            z.r.to_string(),
            fmt_f64(z.value),
            fmt_f64(z.std_error),
            fmt_f64(x.value),
            fmt_f64(x.std_error),
        ]);
    }
    let fit = |c: &[Correlator], form| fit_summary(c, len, form).unwrap_or_else(|e| json!({ "error": e.to_string() }));
    let summary = json!({ "zz": fit(&zz, LuttingerForm::Zz), "xx": fit(&xx, LuttingerForm::Xx) });
    let params = json!({ "L": len, "N": len / 2, "alpha": src.model.alpha(), "rmax": rmax, "source": src.source });
    let m = manifest("correlations", params, src.sampler.as_ref(), a.seed, start, json!({ "fits": summary }));
    emit(&table, a.out.out.as_deref(), &m)?;
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if a.out.out.is_some() {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
    Ok(())
}

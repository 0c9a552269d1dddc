//! Argument types shared by the subcommands.

use std::path::PathBuf;

use clap::Args;
use qfi_lab::{ChannelKind, ChannelSpec, Error, OperatorKind, OperatorSpec, Result};

/// Largest `F_n` order exposed on the command line.
pub const MAX_F: usize = 5;
/// Largest `B_n` order exposed on the command line.
pub const MAX_B: usize = 3;

/// Parses counts such as `1000`, `1e6` or `2.5e5`.
pub fn parse_count(s: &str) -> std::result::Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a count"))?;
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= 1e15) {
        return Err(format!("'{s}' is not a non-negative integer"));
    }
    Ok(v as usize)
}

#[derive(Args, Clone, Debug)]
pub struct SamplingArgs {
    /// Retained Monte Carlo samples M (rounded up to a multiple of 100).
    #[arg(long, default_value = "1e5", value_parser = parse_count)]
    pub samples: usize,
    /// Burn-in steps per chain (default 100·L).
    #[arg(long = "burn-in", value_parser = parse_count)]
    pub burn_in: Option<usize>,
    /// Thinning stride (default L).
    #[arg(long, value_parser = parse_count)]
    pub thin: Option<usize>,
    /// Disable the rigid translation move.
    #[arg(long = "no-translations")]
    pub no_translations: bool,
}

impl SamplingArgs {
    pub fn config(&self, sites: usize, seed: u64) -> qfi_lab::sampler::SamplerConfig {
        let mut cfg = qfi_lab::sampler::SamplerConfig::new(sites, self.samples, seed);
        if let Some(b) = self.burn_in {
            cfg.burn_in_steps = b;
        }
        if let Some(t) = self.thin {
            cfg.thin_stride = t;
        }
        cfg.translations = !self.no_translations;
        cfg
    }
}

#[derive(Args, Clone, Debug)]
pub struct OperatorArgs {
    /// Generator: oz, ox, ostar or custom.
    #[arg(long, default_value = "oz")]
    pub operator: String,
    /// Comma-separated site weights for `--operator custom`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coefficients: Option<Vec<f64>>,
}

impl OperatorArgs {
    pub fn spec(&self) -> Result<OperatorSpec> {
        let kind: OperatorKind = self.operator.parse()?;
        Ok(match kind {
            OperatorKind::CustomDiagonal => OperatorSpec::custom(self.coefficients.clone().unwrap_or_default()),
            _ if self.coefficients.is_some() => {
                return Err(Error::BadRequest("--coefficients only applies to --operator custom".into()))
            }
            OperatorKind::OZ => OperatorSpec::oz(),
            OperatorKind::OX => OperatorSpec::ox(),
            OperatorKind::OStar => OperatorSpec::ostar(),
        })
    }
}

#[derive(Args, Clone, Debug)]
pub struct ChannelArgs {
    /// Noise channel: dephasing, damping or depolarizing.
    #[arg(long)]
    pub channel: String,
    /// Noise strength p.
    #[arg(long, default_value_t = 0.0)]
    pub p: f64,
}

impl ChannelArgs {
    pub fn kind(&self) -> Result<ChannelKind> {
        self.channel.parse()
    }

    pub fn spec(&self) -> Result<ChannelSpec> {
        ChannelSpec::new(self.kind()?, self.p)
    }
}

/// A bound order requested on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    F(usize),
    B(usize),
}

impl Order {
    /// Highest `T_k` index the order needs.
    pub fn kmax(self) -> usize {
        match self {
            Order::F(n) => n,
            Order::B(n) => 2 * n - 1,
        }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Order::F(n) => write!(f, "F{n}"),
            Order::B(n) => write!(f, "B{n}"),
        }
    }
}

/// Parses `F1,F3,B2`.
pub fn parse_orders(s: &str) -> Result<Vec<Order>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let bad = || Error::BadRequest(format!("unknown bound order '{tok}' (use F0..F{MAX_F}, B1..B{MAX_B})"));
        let (head, num) = tok.split_at(1);
        let n: usize = num.parse().map_err(|_| bad())?;
        let o = match head {
            "F" | "f" if n <= MAX_F => Order::F(n),
            "B" | "b" if (1..=MAX_B).contains(&n) => Order::B(n),
            _ => return Err(bad()),
        };
        if !out.contains(&o) {
            out.push(o);
        }
    }
    if out.is_empty() {
        return Err(Error::BadRequest("no bound orders requested".into()));
    }
    out.sort();
    Ok(out)
}

/// The bound set shown for each channel when none is requested.
pub fn default_orders(kind: ChannelKind) -> Vec<Order> {
    match kind {
        ChannelKind::Dephasing => vec![Order::F(1), Order::F(3), Order::F(5), Order::B(1), Order::B(2)],
        ChannelKind::AmplitudeDamping => vec![Order::F(0), Order::F(1), Order::B(1)],
        ChannelKind::Depolarizing => vec![Order::F(1), Order::B(1)],
    }
}

/// Orders to evaluate: the request, or the channel default. Damping is
/// limited to its default set.
pub fn resolve_orders(requested: Option<&str>, kind: ChannelKind) -> Result<Vec<Order>> {
    let Some(s) = requested else {
        return Ok(default_orders(kind));
    };
    let orders = parse_orders(s)?;
    if kind == ChannelKind::AmplitudeDamping {
        let allowed = default_orders(kind);
        if let Some(o) = orders.iter().find(|o| !allowed.contains(o)) {
            return Err(Error::BadRequest(format!("damping supports only F0, F1, B1 (got {o})")));
        }
    }
    Ok(orders)
}

#[derive(Args, Clone, Debug)]
pub struct BoundArgs {
    /// Bound orders, e.g. `F1,F3,B2` (default depends on the channel).
    #[arg(long)]
    pub orders: Option<String>,
    /// Bootstrap tuples per trace.
    #[arg(long, default_value = "1e5", value_parser = parse_count)]
    pub tuples: usize,
    /// Bootstrap resamples for the errors of F_n and B_n.
    #[arg(long = "n-boot", default_value_t = 400)]
    pub n_boot: usize,
}

#[derive(Args, Clone, Debug)]
pub struct OutArgs {
    /// Output CSV; a `<out>.manifest.json` sidecar is written next to it.
    /// Without it the CSV goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Inclusive `start:stop:step` grid, or a comma list, or a single value.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::BadRequest(format!("malformed grid '{s}' (use start:stop:step or a,b,c)"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s.split(',').map(num).collect(),
        3 => {
            let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if step.is_nan() || step <= 0.0 || b < a {
                return Err(bad());
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            // Rounded so that `0:0.3:0.1` yields 0.3 rather than 0.30000000000000004.
            Ok((0..=n).map(|i| ((a + step * i as f64) * 1e12).round() / 1e12).collect())
        }
        _ => Err(bad()),
    }
}

/// Grid of chain lengths.
pub fn parse_sites_grid(s: &str) -> Result<Vec<usize>> {
    parse_grid(s)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && (v - v.round()).abs() < 1e-9 {
                Ok(v.round() as usize)
            } else {
                Err(Error::BadRequest(format!("L grid must hold integers (got {v})")))
            }
        })
        .collect()
}

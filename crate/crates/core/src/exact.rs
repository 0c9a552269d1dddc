//! Dense exact-diagonalization oracle.
//!
//! Every state handled here is block diagonal in the particle number: the
//! pure JG state lives in one sector, dephasing and depolarizing keep the
//! blocks, and amplitude damping only moves weight from block `k` to block
//! `k - 1`. States are therefore stored and diagonalized block by block.
//! Configurations absent from the basis carry zero weight; `O_X` matrix
//! elements into them are kept as an explicit leakage term.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::bounds::{assemble, BoundOptions, BoundReport, MomentTable};
use crate::error::{Error, Result};
use crate::jastrow::JastrowModel;
use crate::model::{sector_configurations, ChannelKind, ChannelSpec, OperatorKind, OperatorSpec};
use crate::operators::{stagger, DiagonalOperator};

/// Largest half-filling sector built densely.
pub const DENSE_SECTOR_LIMIT: usize = 20_000;
/// Largest chain for channels that need the full `2^L` space.
pub const FULL_SPACE_SITES: usize = 12;
/// Default cut on `λ_i + λ_j` in the spectral QFI.
pub const RANK_CUT: f64 = 1e-12;

/// Density-matrix block of fixed particle number.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub particles: usize,
    pub basis: Vec<u64>,
    pub matrix: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    len: usize,
    blocks: Vec<Block>,
}

impl DenseState {
    /// Builds a state from a dense matrix over `basis`; entries between
    /// different particle numbers must vanish.
    pub fn from_matrix(len: usize, basis: Vec<u64>, matrix: DMatrix<f64>) -> Result<Self> {
        let d = basis.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::BadRequest("matrix shape does not match the basis".into()));
        }
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, &b) in basis.iter().enumerate() {
            let k = b.count_ones() as usize;
            match groups.iter_mut().find(|g| g.0 == k) {
                Some(g) => g.1.push(i),
                None => groups.push((k, vec![i])),
            }
        }
        for i in 0..d {
            for j in 0..d {
                if basis[i].count_ones() != basis[j].count_ones() && matrix[(i, j)] != 0.0 {
                    return Err(Error::BadRequest("coherences between particle-number sectors".into()));
                }
            }
        }
        groups.sort_by_key(|g| g.0);
        let blocks = groups
            .into_iter()
            .map(|(k, idx)| Block {
                particles: k,
                basis: idx.iter().map(|&i| basis[i]).collect(),
                matrix: DMatrix::from_fn(idx.len(), idx.len(), |a, b| matrix[(idx[a], idx[b])]),
            })
            .collect();
        Ok(Self { len, blocks })
    }

    /// `|ψ><ψ|` for real amplitudes within one particle sector.
    pub fn pure(len: usize, amplitudes: &[(u64, f64)]) -> Result<Self> {
        let k = amplitudes.first().map(|a| a.0.count_ones()).unwrap_or(0);
        if amplitudes.iter().any(|a| a.0.count_ones() != k) {
            return Err(Error::BadRequest("pure state spans several particle sectors".into()));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.1 * a.1).sum::<f64>().sqrt();
        let v = DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|a| a.1 / norm));
        Ok(Self {
            len,
            blocks: vec![Block {
                particles: k as usize,
                basis: amplitudes.iter().map(|a| a.0).collect(),
                matrix: &v * v.transpose(),
            }],
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.basis.len()).sum()
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.matrix.trace()).sum()
    }

    pub fn purity(&self) -> f64 {
        self.blocks.iter().map(|b| b.matrix.iter().map(|x| x * x).sum::<f64>()).sum()
    }

    /// Matrix element `<m|ρ|n>`.
    pub fn element(&self, m: u64, n: u64) -> f64 {
        if m.count_ones() != n.count_ones() {
            return 0.0;
        }
        for b in &self.blocks {
            if b.particles == m.count_ones() as usize {
                let i = b.basis.iter().position(|&x| x == m);
                let j = b.basis.iter().position(|&x| x == n);
                if let (Some(i), Some(j)) = (i, j) {
                    return b.matrix[(i, j)];
                }
            }
        }
        0.0
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (&b.matrix - b.matrix.transpose()).amax())
            .fold(0.0, f64::max)
    }

    fn eigen(&self) -> Vec<SymmetricEigen<f64, nalgebra::Dyn>> {
        self.blocks.iter().map(|b| b.matrix.clone().symmetric_eigen()).collect()
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.eigen().into_iter().flat_map(|e| e.eigenvalues.iter().copied().collect::<Vec<_>>()).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    /// `exp(-Σ λ ln λ)`.
    pub fn effective_rank(&self) -> f64 {
        let h: f64 = self
            .eigenvalues()
            .iter()
            .filter(|&&l| l > 1e-15)
            .map(|&l| -l * l.ln())
            .sum();
        h.exp()
    }

    /// Same state over complete sectors `ks` (full `C(L,k)` bases).
    fn embedded(&self, ks: impl Iterator<Item = usize>) -> Self {
        let blocks = ks
            .map(|k| {
                let basis: Vec<u64> = sector_configurations(self.len, k).iter().map(|c| c.bits()).collect();
                let mut matrix = DMatrix::zeros(basis.len(), basis.len());
                if let Some(old) = self.blocks.iter().find(|b| b.particles == k) {
                    let index: HashMap<u64, usize> = basis.iter().enumerate().map(|(i, &b)| (b, i)).collect();
                    let map: Vec<usize> = old.basis.iter().map(|b| index[b]).collect();
                    for (a, &i) in map.iter().enumerate() {
                        for (b, &j) in map.iter().enumerate() {
                            matrix[(i, j)] = old.matrix[(a, b)];
                        }
                    }
                }
                Block { particles: k, basis, matrix }
            })
            .collect();
        Self { len: self.len, blocks }
    }

    fn index(&self) -> HashMap<u64, (usize, usize)> {
        let mut map = HashMap::new();
        for (bi, b) in self.blocks.iter().enumerate() {
            for (i, &x) in b.basis.iter().enumerate() {
                map.insert(x, (bi, i));
            }
        }
        map
    }
}

/// Normalized pure JG state over the half-filling sector.
pub fn build_jg_density(model: &JastrowModel) -> Result<DenseState> {
    let amps = model.normalized_amplitudes(DENSE_SECTOR_LIMIT)?;
    let list: Vec<(u64, f64)> = amps.iter().map(|(c, a)| (c.bits(), *a)).collect();
    DenseState::pure(model.sites(), &list)
}

/// Antiferromagnetic GHZ state with the JG sign convention.
pub fn ghz_state(len: usize) -> Result<DenseState> {
    let odd: u64 = (0..len).step_by(2).map(|i| 1u64 << i).sum();
    let even = odd << 1;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sign = if (len / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    DenseState::pure(len, &[(odd, sign * s), (even, s)])
}

/// Translated contiguous blocks of `L/2` particles, block `j` starting at
/// site `j + 1`.
pub fn dicke_blocks(len: usize) -> Vec<u64> {
    let n = len / 2;
    (0..len)
        .map(|j| crate::model::Configuration::block(len, j + 1, n).bits())
        .collect()
}

/// Equal-weight superposition of the translated blocks.
pub fn dicke_state(len: usize) -> Result<DenseState> {
    let w = 1.0 / (len as f64).sqrt();
    let list: Vec<(u64, f64)> = dicke_blocks(len).into_iter().map(|b| (b, w)).collect();
    DenseState::pure(len, &list)
}

/// Dephased Dicke-like state: the circulant `q^{2 d_ij} / L` over block
/// states (`d` is the ring distance between block origins).
pub fn dephased_dicke_density(len: usize, p: f64) -> Result<DenseState> {
    if len % 2 == 1 {
        return Err(Error::OddL(len));
    }
    if !(2..=crate::model::MAX_SITES).contains(&len) {
        return Err(Error::SitesOutOfRange(len));
    }
    ChannelSpec::dephasing(p).validate()?;
    let q = 1.0 - 2.0 * p;
    let basis = dicke_blocks(len);
    let m = DMatrix::from_fn(len, len, |i, j| {
        let d = i.abs_diff(j).min(len - i.abs_diff(j));
        q.powi(2 * d as i32) / len as f64
    });
    Ok(DenseState {
        len,
        blocks: vec![Block {
            particles: len / 2,
            basis,
            matrix: m,
        }],
    })
}

/// Multiplies `<m|ρ|n>` by `(1-2p)^{Hamming(m,n)}`.
pub fn apply_dephasing(state: &DenseState, p: f64) -> Result<DenseState> {
    ChannelSpec::dephasing(p).validate()?;
    let q = 1.0 - 2.0 * p;
    let mut out = state.clone();
    for b in &mut out.blocks {
        let basis = &b.basis;
        for j in 0..basis.len() {
            for i in 0..basis.len() {
                let h = (basis[i] ^ basis[j]).count_ones() as i32;
                if h > 0 {
                    b.matrix[(i, j)] *= q.powi(h);
                }
            }
        }
    }
    Ok(out)
}

fn check_full_space(len: usize) -> Result<()> {
    if len > FULL_SPACE_SITES {
        return Err(Error::SpaceTooLarge {
            sites: len,
            limit: FULL_SPACE_SITES,
        });
    }
    Ok(())
}

/// Site-by-site amplitude damping with Kraus operators
/// `K⁰ = |0><0| + √(1-p)|1><1|`, `K¹ = √p |0><1|`.
pub fn apply_damping(state: &DenseState, p: f64) -> Result<DenseState> {
    ChannelSpec::damping(p).validate()?;
    check_full_space(state.len)?;
    let kmax = state.blocks.iter().map(|b| b.particles).max().unwrap_or(0);
    let mut cur = state.embedded(0..=kmax);
    let index = cur.index();
    let keep = (1.0 - p).sqrt();
    for j in 0..state.len {
        let bit = 1u64 << j;
        let mut next: Vec<DMatrix<f64>> = cur
            .blocks
            .iter()
            .map(|b| {
                let f: Vec<f64> = b.basis.iter().map(|&x| if x & bit != 0 { keep } else { 1.0 }).collect();
                DMatrix::from_fn(b.basis.len(), b.basis.len(), |a, c| f[a] * b.matrix[(a, c)] * f[c])
            })
            .collect();
        if p > 0.0 {
            for (bi, b) in cur.blocks.iter().enumerate().skip(1) {
                // (index in block k, index of the emptied config in block k-1)
                let moved: Vec<(usize, usize)> = b
                    .basis
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x & bit != 0)
                    .map(|(a, &x)| (a, index[&(x & !bit)].1))
                    .collect();
                let target = &mut next[bi - 1];
                for &(a, ta) in &moved {
                    for &(c, tc) in &moved {
                        target[(ta, tc)] += p * b.matrix[(a, c)];
                    }
                }
            }
        }
        for (b, m) in cur.blocks.iter_mut().zip(next) {
            b.matrix = m;
        }
    }
    Ok(cur)
}

/// `(1-p) ρ + p I / 2^L` over the full space.
pub fn apply_depolarizing(state: &DenseState, p: f64) -> Result<DenseState> {
    ChannelSpec::depolarizing(p).validate()?;
    check_full_space(state.len)?;
    let mut out = state.embedded(0..=state.len);
    let t = p / 2f64.powi(state.len as i32);
    for b in &mut out.blocks {
        b.matrix *= 1.0 - p;
        for i in 0..b.basis.len() {
            b.matrix[(i, i)] += t;
        }
    }
    Ok(out)
}

pub fn apply_channel(state: &DenseState, channel: &ChannelSpec) -> Result<DenseState> {
    match channel.kind {
        ChannelKind::Dephasing => apply_dephasing(state, channel.p),
        ChannelKind::AmplitudeDamping => apply_damping(state, channel.p),
        ChannelKind::Depolarizing => apply_depolarizing(state, channel.p),
    }
}

/// `|<i|O|j>|²` over eigenpairs, plus the weight `‖P_out O|i>‖²` that `O`
/// sends outside the stored basis (where `ρ` vanishes).
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSpectrum {
    /// `(λ_i, λ_j, |O_ij|²)`, both orders of each pair.
    pub pairs: Vec<(f64, f64, f64)>,
    /// `(λ_i, leakage_i)`.
    pub leak: Vec<(f64, f64)>,
}

fn pow0(x: f64, n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        x.powi(n as i32)
    }
}

impl OperatorSpectrum {
    pub fn new(state: &DenseState, op: &OperatorSpec) -> Result<Self> {
        op.validate(state.len)?;
        let eig = state.eigen();
        let mut pairs = Vec::new();
        let mut leak = Vec::new();
        if op.kind != OperatorKind::OX {
            let d = DiagonalOperator::from_spec(op, state.len)?;
            for (b, e) in state.blocks.iter().zip(&eig) {
                let o = DVector::from_iterator(b.basis.len(), b.basis.iter().map(|&x| d.value_bits(x)));
                let v = &e.eigenvectors;
                let w = v.transpose() * DMatrix::from_diagonal(&o) * v;
                push_pairs(&mut pairs, &e.eigenvalues, &e.eigenvalues, &w, false);
            }
            return Ok(Self { pairs, leak });
        }
        let index = state.index();
        for (bi, b) in state.blocks.iter().enumerate() {
            // Single flips that add a particle: couple block bi to the block with k+1.
            if let Some(bj) = state.blocks.iter().position(|c| c.particles == b.particles + 1) {
                let c = &state.blocks[bj];
                let mut o = DMatrix::zeros(b.basis.len(), c.basis.len());
                for (a, &x) in b.basis.iter().enumerate() {
                    for j in 0..state.len {
                        if x & (1u64 << j) == 0 {
                            if let Some(&(_, t)) = index.get(&(x | (1u64 << j))) {
                                o[(a, t)] = 0.5 * stagger(j + 1);
                            }
                        }
                    }
                }
                let w = eig[bi].eigenvectors.transpose() * o * &eig[bj].eigenvectors;
                push_pairs(&mut pairs, &eig[bi].eigenvalues, &eig[bj].eigenvalues, &w, true);
            }
            // Flips into configurations outside the stored basis.
            let mut outside: HashMap<u64, usize> = HashMap::new();
            let mut entries: Vec<(usize, usize, f64)> = Vec::new();
            for (a, &x) in b.basis.iter().enumerate() {
                for j in 0..state.len {
                    let y = x ^ (1u64 << j);
                    if !index.contains_key(&y) {
                        let n = outside.len();
                        let t = *outside.entry(y).or_insert(n);
                        entries.push((a, t, 0.5 * stagger(j + 1)));
                    }
                }
            }
            if !entries.is_empty() {
                let v = &eig[bi].eigenvectors;
                let mut acc = vec![0.0; outside.len()];
                for (i, &lam) in eig[bi].eigenvalues.iter().enumerate() {
                    acc.iter_mut().for_each(|x| *x = 0.0);
                    for &(a, t, w) in &entries {
                        acc[t] += w * v[(a, i)];
                    }
                    leak.push((lam, acc.iter().map(|x| x * x).sum()));
                }
            }
        }
        Ok(Self { pairs, leak })
    }

    /// `2 Σ (λ_i - λ_j)² / (λ_i + λ_j) |O_ij|²` over `λ_i + λ_j > rank_cut`;
    /// a leaked weight enters once per ordering of the pair, i.e. as `4 λ_i w_i`.
    pub fn qfi(&self, rank_cut: f64) -> f64 {
        let inner: f64 = self
            .pairs
            .iter()
            .filter(|(a, b, _)| a + b > rank_cut)
            .map(|(a, b, w)| (a - b).powi(2) / (a + b) * w)
            .sum();
        let outer: f64 = self.leak.iter().filter(|(a, _)| *a > rank_cut).map(|(a, w)| 4.0 * a * w).sum();
        2.0 * inner + outer
    }

    /// `Tr(ρ^r O ρ^s O)` (with `0⁰ = 1`).
    pub fn moment(&self, r: usize, s: usize) -> f64 {
        let inner: f64 = self.pairs.iter().map(|(a, b, w)| pow0(*a, r) * pow0(*b, s) * w).sum();
        let outer: f64 = self
            .leak
            .iter()
            .map(|(a, w)| w * (pow0(*a, r) * pow0(0.0, s) + pow0(0.0, r) * pow0(*a, s)))
            .sum();
        inner + outer
    }

    /// Exact moments for all shapes with `r + s ≤ max_p`.
    pub fn moment_table(&self, max_p: usize) -> MomentTable {
        MomentTable::from_fn(max_p, |r, s| self.moment(r, s))
    }
}

fn push_pairs(pairs: &mut Vec<(f64, f64, f64)>, la: &DVector<f64>, lb: &DVector<f64>, w: &DMatrix<f64>, both: bool) {
    for i in 0..la.len() {
        for j in 0..lb.len() {
            let x = w[(i, j)] * w[(i, j)];
            if x == 0.0 {
                continue;
            }
            pairs.push((la[i], lb[j], x));
            if both {
                pairs.push((lb[j], la[i], x));
            }
        }
    }
}

pub fn spectral_qfi(state: &DenseState, op: &OperatorSpec, rank_cut: f64) -> Result<f64> {
    Ok(OperatorSpectrum::new(state, op)?.qfi(rank_cut))
}

pub fn exact_moment(state: &DenseState, op: &OperatorSpec, r: usize, s: usize) -> Result<f64> {
    Ok(OperatorSpectrum::new(state, op)?.moment(r, s))
}

/// `⟨O²⟩ - ⟨O⟩²` of a pure state.
pub fn pure_variance(state: &DenseState, op: &OperatorSpec) -> Result<f64> {
    let s = OperatorSpectrum::new(state, op)?;
    Ok(s.moment(2, 0) - s.moment(1, 1))
}

/// Everything the exact pipeline reports for one state and operator.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSummary {
    pub qfi: f64,
    pub effective_rank: f64,
    pub bounds: BoundReport,
}

pub fn exact_summary(state: &DenseState, op: &OperatorSpec, max_p: usize, opts: &BoundOptions) -> Result<ExactSummary> {
    let spec = OperatorSpectrum::new(state, op)?;
    let bounds = assemble(&spec.moment_table(max_p), state.len, opts)?;
    Ok(ExactSummary {
        qfi: spec.qfi(RANK_CUT),
        effective_rank: state.effective_rank(),
        bounds,
    })
}

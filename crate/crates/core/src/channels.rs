//! Completely positive maps in three interchangeable representations.
//!
//! An entanglement-breaking map is stored as measure-and-prepare pairs
//! `A ↦ Σ_k Tr(A X_k) R_k`; a general CP map as Kraus operators
//! `A ↦ Σ_i K_i A K_i*`; or as a Choi matrix with the convention
//! `C = Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)` (input copy first). Measurements need not
//! form a POVM and outputs need not have unit trace.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{
    self, axpy, hermitian_eigen, is_entrywise_nonneg, is_psd, kron, psd_inverse_sqrt, ComplexMatrix, C64,
    MAX_DIM, ZERO,
};
use crate::random::{complex_gaussian, nonneg_vector, random_density, random_psd, rng_from_seed};

/// Tolerance used when validating PSD-ness of stored operators.
pub const PSD_TOL: f64 = 1e-9;

/// One measure-and-prepare term: measurement `x` on the input, output `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EbPair {
    #[serde(rename = "X")]
    pub x: ComplexMatrix,
    #[serde(rename = "R")]
    pub r: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EbMap {
    d_in: usize,
    d_out: usize,
    pairs: Vec<EbPair>,
}

impl EbMap {
    pub fn new(d_in: usize, d_out: usize, pairs: Vec<EbPair>) -> Result<Self> {
        check_dims(d_in, d_out)?;
        if pairs.is_empty() {
            return input("EB map needs at least one (X, R) pair");
        }
        for (k, pair) in pairs.iter().enumerate() {
            if (pair.x.rows(), pair.x.cols()) != (d_in, d_in) {
                return input(format!("pairs[{k}].X must be {d_in}x{d_in}"));
            }
            if (pair.r.rows(), pair.r.cols()) != (d_out, d_out) {
                return input(format!("pairs[{k}].R must be {d_out}x{d_out}"));
            }
            if !is_psd(&pair.x, PSD_TOL)? {
                return input(format!("pairs[{k}].X is not positive semidefinite"));
            }
            if !is_psd(&pair.r, PSD_TOL)? {
                return input(format!("pairs[{k}].R is not positive semidefinite"));
            }
        }
        Ok(Self { d_in, d_out, pairs })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn pairs(&self) -> &[EbPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn apply(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_input(a, self.d_in)?;
        Ok(self.apply_unchecked(a))
    }

    pub(crate) fn apply_unchecked(&self, a: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.d_out, self.d_out);
        for pair in &self.pairs {
            axpy(&mut out, a.trace_product(&pair.x), &pair.r);
        }
        out
    }

    /// Adjoint map `B ↦ Σ_k Tr(B R_k) X_k`: the pairs with roles swapped.
    pub fn adjoint(&self) -> EbMap {
        EbMap {
            d_in: self.d_out,
            d_out: self.d_in,
            pairs: self.pairs.iter().map(|p| EbPair { x: p.r.clone(), r: p.x.clone() }).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrausMap {
    d_in: usize,
    d_out: usize,
    kraus: Vec<ComplexMatrix>,
}

impl KrausMap {
    pub fn new(d_in: usize, d_out: usize, kraus: Vec<ComplexMatrix>) -> Result<Self> {
        check_dims(d_in, d_out)?;
        if kraus.is_empty() {
            return input("Kraus map needs at least one operator");
        }
        for (i, k) in kraus.iter().enumerate() {
            if (k.rows(), k.cols()) != (d_out, d_in) {
                return input(format!("kraus[{i}] must be {d_out}x{d_in}, got {}x{}", k.rows(), k.cols()));
            }
        }
        Ok(Self { d_in, d_out, kraus })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn apply(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_input(a, self.d_in)?;
        Ok(self.apply_unchecked(a))
    }

    pub(crate) fn apply_unchecked(&self, a: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.d_out, self.d_out);
        for k in &self.kraus {
            out = &out + &(&(k * a) * &k.adjoint());
        }
        out
    }

    pub fn adjoint(&self) -> KrausMap {
        KrausMap {
            d_in: self.d_out,
            d_out: self.d_in,
            kraus: self.kraus.iter().map(ComplexMatrix::adjoint).collect(),
        }
    }
}

/// Choi-matrix representation, `(d_in·d_out)`-square and PSD.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMap {
    d_in: usize,
    d_out: usize,
    matrix: ComplexMatrix,
}

impl ChoiMap {
    pub fn new(d_in: usize, d_out: usize, matrix: ComplexMatrix) -> Result<Self> {
        check_dims(d_in, d_out)?;
        let n = d_in * d_out;
        if (matrix.rows(), matrix.cols()) != (n, n) {
            return input(format!("Choi matrix must be {n}x{n}"));
        }
        if !is_psd(&matrix, PSD_TOL * matrix.max_abs().max(1.0))? {
            return input("Choi matrix is not positive semidefinite (map is not CP)");
        }
        Ok(Self { d_in, d_out, matrix })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub(crate) fn apply_unchecked(&self, a: &ComplexMatrix) -> ComplexMatrix {
        // Φ(A)_ab = Σ_ij A_ij C[(i,a),(j,b)]
        let (di, dout) = (self.d_in, self.d_out);
        let c = &self.matrix;
        let mut data = vec![ZERO; dout * dout];
        for i in 0..di {
            for j in 0..di {
                let aij = a[(i, j)];
                if aij == ZERO {
                    continue;
                }
                for x in 0..dout {
                    for y in 0..dout {
                        data[x * dout + y] += aij * c[(i * dout + x, j * dout + y)];
                    }
                }
            }
        }
        ComplexMatrix::from_raw(dout, dout, data)
    }

    /// Choi matrix of the adjoint: Ĉ[(a,i),(b,j)] = conj C[(i,a),(j,b)].
    pub fn adjoint(&self) -> ChoiMap {
        let (di, dout) = (self.d_in, self.d_out);
        let c = &self.matrix;
        let matrix = ComplexMatrix::from_fn(di * dout, di * dout, |r, s| {
            let (a, i) = (r / di, r % di);
            let (b, j) = (s / di, s % di);
            c[(i * dout + a, j * dout + b)].conj()
        });
        ChoiMap { d_in: dout, d_out: di, matrix }
    }
}

/// A CP map held in exactly one representation.
#[derive(Clone, Debug, PartialEq)]
pub enum SuperOp {
    Eb(EbMap),
    Kraus(KrausMap),
    Choi(ChoiMap),
}

impl From<EbMap> for SuperOp {
    fn from(m: EbMap) -> Self {
        SuperOp::Eb(m)
    }
}

impl From<KrausMap> for SuperOp {
    fn from(m: KrausMap) -> Self {
        SuperOp::Kraus(m)
    }
}

impl From<ChoiMap> for SuperOp {
    fn from(m: ChoiMap) -> Self {
        SuperOp::Choi(m)
    }
}

impl SuperOp {
    pub fn identity(d: usize) -> Self {
        SuperOp::Kraus(KrausMap { d_in: d, d_out: d, kraus: vec![ComplexMatrix::identity(d)] })
    }

    pub fn d_in(&self) -> usize {
        match self {
            SuperOp::Eb(m) => m.d_in,
            SuperOp::Kraus(m) => m.d_in,
            SuperOp::Choi(m) => m.d_in,
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            SuperOp::Eb(m) => m.d_out,
            SuperOp::Kraus(m) => m.d_out,
            SuperOp::Choi(m) => m.d_out,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SuperOp::Eb(_) => "eb",
            SuperOp::Kraus(_) => "kraus",
            SuperOp::Choi(_) => "choi",
        }
    }

    pub fn as_eb(&self) -> Option<&EbMap> {
        match self {
            SuperOp::Eb(m) => Some(m),
            _ => None,
        }
    }

    pub fn apply(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_input(a, self.d_in())?;
        Ok(self.apply_unchecked(a))
    }

    pub(crate) fn apply_unchecked(&self, a: &ComplexMatrix) -> ComplexMatrix {
        match self {
            SuperOp::Eb(m) => m.apply_unchecked(a),
            SuperOp::Kraus(m) => m.apply_unchecked(a),
            SuperOp::Choi(m) => m.apply_unchecked(a),
        }
    }

    /// The map defined by Tr B* Φ(A) = Tr (Φ̂(B))* A, in the same representation.
    pub fn adjoint(&self) -> SuperOp {
        match self {
            SuperOp::Eb(m) => SuperOp::Eb(m.adjoint()),
            SuperOp::Kraus(m) => SuperOp::Kraus(m.adjoint()),
            SuperOp::Choi(m) => SuperOp::Choi(m.adjoint()),
        }
    }

    /// c·Φ for c > 0.
    pub fn scaled(&self, c: f64) -> Result<SuperOp> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Domain(format!("scale factor must be positive, got {c}")));
        }
        Ok(match self {
            SuperOp::Eb(m) => SuperOp::Eb(EbMap {
                d_in: m.d_in,
                d_out: m.d_out,
                pairs: m.pairs.iter().map(|p| EbPair { x: p.x.clone(), r: p.r.scale(c) }).collect(),
            }),
            SuperOp::Kraus(m) => SuperOp::Kraus(KrausMap {
                d_in: m.d_in,
                d_out: m.d_out,
                kraus: m.kraus.iter().map(|k| k.scale(c.sqrt())).collect(),
            }),
            SuperOp::Choi(m) => {
                SuperOp::Choi(ChoiMap { d_in: m.d_in, d_out: m.d_out, matrix: m.matrix.scale(c) })
            }
        })
    }

    pub fn to_kraus(&self) -> KrausMap {
        match self {
            SuperOp::Eb(m) => eb_to_kraus(m),
            SuperOp::Kraus(m) => m.clone(),
            SuperOp::Choi(m) => choi_to_kraus(m),
        }
    }

    pub fn to_choi(&self) -> ChoiMap {
        ChoiMap { d_in: self.d_in(), d_out: self.d_out(), matrix: choi(self) }
    }

    /// Σ K*K = I, checked through the Choi matrix: Tr_out C = I_in.
    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        let c = choi(self);
        let reduced = linalg::partial_trace(&c, self.d_in(), self.d_out(), linalg::Keep::First)
            .expect("Choi matrix has product shape");
        reduced.max_abs_diff(&ComplexMatrix::identity(self.d_in())) <= tol
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        let out = self.apply_unchecked(&ComplexMatrix::identity(self.d_in()));
        self.d_in() == self.d_out() && out.max_abs_diff(&ComplexMatrix::identity(self.d_out())) <= tol
    }

    /// Dense matrix of the linear map acting on row-major vectorized inputs.
    pub fn transfer_matrix(&self) -> TransferMatrix {
        TransferMatrix::new(self)
    }
}

fn check_dims(d_in: usize, d_out: usize) -> Result<()> {
    if d_in == 0 || d_out == 0 {
        return input("channel dimensions must be positive");
    }
    if d_in > MAX_DIM || d_out > MAX_DIM {
        return Err(Error::Resource(format!("channel dimensions {d_in}->{d_out} exceed {MAX_DIM}")));
    }
    Ok(())
}

fn check_input(a: &ComplexMatrix, d: usize) -> Result<()> {
    if (a.rows(), a.cols()) != (d, d) {
        return input(format!("map input must be {d}x{d}, got {}x{}", a.rows(), a.cols()));
    }
    Ok(())
}

/// The superoperator as a `d_out² × d_in²` matrix S with
/// `vec(Φ(A)) = S vec(A)`; the adjoint map is `S*`.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    d_in: usize,
    d_out: usize,
    s: ComplexMatrix,
}

impl TransferMatrix {
    fn new(m: &SuperOp) -> Self {
        let (di, dout) = (m.d_in(), m.d_out());
        let mut data = vec![ZERO; dout * dout * di * di];
        let cols = di * di;
        for i in 0..di {
            for j in 0..di {
                let out = m.apply_unchecked(&ComplexMatrix::unit(di, i, j));
                for (ab, z) in out.data().iter().enumerate() {
                    data[ab * cols + i * di + j] = *z;
                }
            }
        }
        Self { d_in: di, d_out: dout, s: ComplexMatrix::from_raw(dout * dout, cols, data) }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn apply(&self, a: &ComplexMatrix) -> ComplexMatrix {
        let cols = self.d_in * self.d_in;
        let x = a.data();
        let s = self.s.data();
        let out = (0..self.d_out * self.d_out)
            .map(|ab| s[ab * cols..(ab + 1) * cols].iter().zip(x).map(|(u, v)| u * v).sum())
            .collect();
        ComplexMatrix::from_raw(self.d_out, self.d_out, out)
    }

    pub fn apply_adjoint(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let cols = self.d_in * self.d_in;
        let s = self.s.data();
        let mut out = vec![ZERO; cols];
        for (ab, bv) in b.data().iter().enumerate() {
            if *bv == ZERO {
                continue;
            }
            for (o, u) in out.iter_mut().zip(&s[ab * cols..(ab + 1) * cols]) {
                *o += u.conj() * bv;
            }
        }
        ComplexMatrix::from_raw(self.d_in, self.d_in, out)
    }
}

/// Choi matrix Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|).
pub fn choi(m: &SuperOp) -> ComplexMatrix {
    if let SuperOp::Choi(c) = m {
        return c.matrix.clone();
    }
    let (di, dout) = (m.d_in(), m.d_out());
    let n = di * dout;
    let mut data = vec![ZERO; n * n];
    for i in 0..di {
        for j in 0..di {
            let out = m.apply_unchecked(&ComplexMatrix::unit(di, i, j));
            for a in 0..dout {
                for b in 0..dout {
                    data[(i * dout + a) * n + j * dout + b] = out[(a, b)];
                }
            }
        }
    }
    ComplexMatrix::from_raw(n, n, data)
}

/// Kraus operators from the Choi spectrum; eigenvalues below the relative
/// clip are dropped.
pub fn choi_to_kraus(m: &ChoiMap) -> KrausMap {
    let (di, dout) = (m.d_in, m.d_out);
    let spec = hermitian_eigen(&m.matrix).expect("validated Choi matrix");
    let clipped = spec.clipped_eigenvalues();
    let mut kraus: Vec<ComplexMatrix> = clipped
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.0)
        .map(|(k, &l)| {
            let s = l.sqrt();
            ComplexMatrix::from_fn(dout, di, |a, i| spec.eigenvectors[(i * dout + a, k)] * s)
        })
        .collect();
    if kraus.is_empty() {
        kraus.push(ComplexMatrix::zeros(dout, di));
    }
    KrausMap { d_in: di, d_out: dout, kraus }
}

/// Kraus form of an EB map: for each pair, `√(r_i x_j) |r_i⟩⟨x_j|` over the
/// eigenpairs of R_k and X_k.
pub fn eb_to_kraus(m: &EbMap) -> KrausMap {
    let mut kraus = Vec::new();
    for pair in &m.pairs {
        let xs = hermitian_eigen(&pair.x).expect("validated X");
        let rs = hermitian_eigen(&pair.r).expect("validated R");
        let xv = xs.clipped_eigenvalues();
        let rv = rs.clipped_eigenvalues();
        for (i, &ri) in rv.iter().enumerate() {
            if ri <= 0.0 {
                continue;
            }
            let r_vec = rs.eigenvectors.column(i);
            for (j, &xj) in xv.iter().enumerate() {
                if xj <= 0.0 {
                    continue;
                }
                let x_vec = xs.eigenvectors.column(j);
                kraus.push(ComplexMatrix::outer(&r_vec, &x_vec).scale((ri * xj).sqrt()));
            }
        }
    }
    if kraus.is_empty() {
        kraus.push(ComplexMatrix::zeros(m.d_out, m.d_in));
    }
    KrausMap { d_in: m.d_in, d_out: m.d_out, kraus }
}

/// Φ ⊗ Ω in Kraus form, operators paired through Kronecker products.
pub fn tensor(m1: &SuperOp, m2: &SuperOp) -> Result<SuperOp> {
    let d_in = m1.d_in() * m2.d_in();
    let d_out = m1.d_out() * m2.d_out();
    if d_in > MAX_DIM || d_out > MAX_DIM {
        return Err(Error::Resource(format!("product map {d_in}->{d_out} exceeds {MAX_DIM}")));
    }
    let k1 = m1.to_kraus();
    let k2 = m2.to_kraus();
    let kraus = k1
        .kraus
        .iter()
        .flat_map(|a| k2.kraus.iter().map(move |b| kron(a, b)))
        .collect();
    Ok(SuperOp::Kraus(KrausMap { d_in, d_out, kraus }))
}

/// CQ map: measures in the standard basis and prepares `outputs[k]`.
pub fn make_cq(outputs: Vec<ComplexMatrix>) -> Result<EbMap> {
    let d_in = outputs.len();
    if d_in == 0 {
        return input("CQ map needs at least one output state");
    }
    let d_out = outputs[0].rows();
    for (k, r) in outputs.iter().enumerate() {
        if (r.trace().re - 1.0).abs() > 1e-9 || r.trace().im.abs() > 1e-9 {
            return input(format!("CQ output {k} does not have unit trace"));
        }
    }
    let pairs = outputs
        .into_iter()
        .enumerate()
        .map(|(k, r)| EbPair { x: ComplexMatrix::unit(d_in, k, k), r })
        .collect();
    EbMap::new(d_in, d_out, pairs)
}

/// QC map: measures the POVM and records outcome k as |k⟩⟨k|.
pub fn make_qc(povm: Vec<ComplexMatrix>) -> Result<EbMap> {
    let d_out = povm.len();
    if d_out == 0 {
        return input("QC map needs a nonempty POVM");
    }
    let d_in = povm[0].rows();
    if povm.iter().any(|x| (x.rows(), x.cols()) != (d_in, d_in)) {
        return input("POVM elements must share one square shape");
    }
    let total = linalg::sum(povm.iter()).expect("nonempty");
    if total.max_abs_diff(&ComplexMatrix::identity(d_in)) > 1e-9 {
        return input("POVM elements do not sum to the identity");
    }
    let pairs = povm
        .into_iter()
        .enumerate()
        .map(|(k, x)| EbPair { x, r: ComplexMatrix::unit(d_out, k, k) })
        .collect();
    EbMap::new(d_in, d_out, pairs)
}

/// Δ_λ(ρ) = λρ + (1−λ) Tr(ρ) I/d, stored as a Choi matrix.
pub fn make_depolarizing(d: usize, lam: f64) -> Result<SuperOp> {
    if !(0.0..=1.0).contains(&lam) {
        return input(format!("depolarizing parameter must lie in [0, 1], got {lam}"));
    }
    if d < 2 {
        return input("depolarizing channel needs d >= 2");
    }
    check_dims(d, d)?;
    let n = d * d;
    let mix = (1.0 - lam) / d as f64;
    let matrix = ComplexMatrix::from_fn(n, n, |r, c| {
        let (i, a) = (r / d, r % d);
        let (j, b) = (c / d, c % d);
        let mut v = 0.0;
        if i == a && j == b {
            v += lam;
        }
        if i == j && a == b {
            v += mix;
        }
        C64::new(v, 0.0)
    });
    Ok(SuperOp::Choi(ChoiMap { d_in: d, d_out: d, matrix }))
}

/// Every measurement operator is entrywise nonnegative.
pub fn check_cond1(m: &EbMap, tol: f64) -> bool {
    m.pairs.iter().all(|p| is_entrywise_nonneg(&p.x, tol))
}

/// Every output operator is diagonal.
pub fn check_cond2(m: &EbMap, tol: f64) -> bool {
    m.pairs.iter().all(|p| {
        let n = p.r.rows();
        (0..n).all(|i| (0..n).all(|j| i == j || p.r[(i, j)].norm() <= tol))
    })
}

/// Families of random EB maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EbClass {
    General,
    Cond1,
    Cond2,
    Cq,
    Qc,
}

impl FromStr for EbClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(EbClass::General),
            "cond1" => Ok(EbClass::Cond1),
            "cond2" => Ok(EbClass::Cond2),
            "cq" => Ok(EbClass::Cq),
            "qc" => Ok(EbClass::Qc),
            other => input(format!("unsupported EB class '{other}'")),
        }
    }
}

fn random_rank_psd<R: Rng>(n: usize, rng: &mut R) -> ComplexMatrix {
    let rank = rng.random_range(1..=n);
    complex_gaussian(rank, n, rng).gram()
}

fn random_diag_state<R: Rng>(n: usize, rng: &mut R) -> ComplexMatrix {
    let v = nonneg_vector(n, rng);
    let w: Vec<f64> = v.iter().map(|z| z.re * z.re).collect();
    ComplexMatrix::diag(&w)
}

fn unit_trace(m: ComplexMatrix) -> ComplexMatrix {
    let t = m.trace().re;
    if t > 0.0 {
        m.scale(1.0 / t)
    } else {
        m
    }
}

fn random_povm<R: Rng>(d: usize, n: usize, rng: &mut R) -> Result<Vec<ComplexMatrix>> {
    let raw: Vec<ComplexMatrix> = (0..n).map(|_| random_psd(d, rng)).collect();
    let total = linalg::sum(raw.iter()).expect("nonempty");
    let s = psd_inverse_sqrt(&total)?;
    Ok(raw.iter().map(|w| (&(&s * w) * &s).hermitian_part()).collect())
}

/// Random EB map of the requested class with normalized measurements and
/// unit-trace outputs (see [`random_eb_with`]).
pub fn random_eb(d_in: usize, d_out: usize, n: usize, class: EbClass, seed: u64) -> Result<EbMap> {
    random_eb_with(d_in, d_out, n, class, seed, true)
}

/// Random EB map, deterministic in `seed`.
///
/// * `cond1`: `X_k = |v⟩⟨v| + diag(u)` with entrywise nonnegative v, u.
/// * `cond2`: diagonal nonnegative `R_k`.
/// * `cq`: `X_k = |k⟩⟨k|`, so `n` is forced to `d_in`.
/// * `qc`: `R_k = |k⟩⟨k|` with a random POVM, so `n` is forced to `d_out`.
///
/// With `normalize`, measurements are rescaled so that `‖Σ X_k‖_∞ = 1` and
/// outputs have unit trace; CQ and QC maps are always exact.
pub fn random_eb_with(
    d_in: usize,
    d_out: usize,
    n: usize,
    class: EbClass,
    seed: u64,
    normalize: bool,
) -> Result<EbMap> {
    if d_in < 2 || d_out < 2 {
        return input("random EB maps need dimensions >= 2");
    }
    if n == 0 {
        return input("random EB maps need N >= 1");
    }
    check_dims(d_in, d_out)?;
    let mut rng = rng_from_seed(seed);
    let pairs: Vec<EbPair> = match class {
        EbClass::Cq => (0..d_in)
            .map(|k| EbPair { x: ComplexMatrix::unit(d_in, k, k), r: random_density(d_out, &mut rng) })
            .collect(),
        EbClass::Qc => random_povm(d_in, d_out, &mut rng)?
            .into_iter()
            .enumerate()
            .map(|(k, x)| EbPair { x, r: ComplexMatrix::unit(d_out, k, k) })
            .collect(),
        EbClass::General | EbClass::Cond1 | EbClass::Cond2 => {
            let mut pairs = Vec::with_capacity(n);
            for _ in 0..n {
                let x = if class == EbClass::Cond1 {
                    let v = nonneg_vector(d_in, &mut rng);
                    let jitter: Vec<f64> = (0..d_in).map(|_| rng.random_range(0.0..0.1)).collect();
                    &ComplexMatrix::outer(&v, &v) + &ComplexMatrix::diag(&jitter)
                } else {
                    random_rank_psd(d_in, &mut rng)
                };
                let r = if class == EbClass::Cond2 {
                    random_diag_state(d_out, &mut rng)
                } else {
                    random_rank_psd(d_out, &mut rng)
                };
                pairs.push(EbPair { x, r });
            }
            if normalize {
                let total = linalg::sum(pairs.iter().map(|p| &p.x)).expect("nonempty");
                let top = hermitian_eigen(&total)?.eigenvalues[0];
                for p in &mut pairs {
                    p.x = p.x.scale(1.0 / top);
                    p.r = unit_trace(std::mem::replace(&mut p.r, ComplexMatrix::zeros(1, 1)));
                }
            }
            pairs
        }
    };
    EbMap::new(d_in, d_out, pairs)
}

/// Gaussian random Kraus map; with `trace_preserving` the operators are
/// right-multiplied by `(Σ K*K)^{-1/2}`.
pub fn random_cp_kraus(
    d_in: usize,
    d_out: usize,
    n_kraus: usize,
    seed: u64,
    trace_preserving: bool,
) -> Result<KrausMap> {
    if n_kraus == 0 {
        return input("need at least one Kraus operator");
    }
    check_dims(d_in, d_out)?;
    let mut rng = rng_from_seed(seed);
    let mut kraus: Vec<ComplexMatrix> = (0..n_kraus).map(|_| complex_gaussian(d_out, d_in, &mut rng)).collect();
    if trace_preserving {
        let total = linalg::sum(kraus.iter().map(|k| k.gram()).collect::<Vec<_>>().iter()).expect("nonempty");
        let s = psd_inverse_sqrt(&total)?;
        kraus = kraus.iter().map(|k| k * &s).collect();
    } else {
        let scale = 1.0 / (n_kraus as f64 * d_in as f64).sqrt();
        kraus = kraus.iter().map(|k| k.scale(scale)).collect();
    }
    KrausMap::new(d_in, d_out, kraus)
}

#[derive(Serialize, Deserialize)]
struct ChannelJson {
    kind: String,
    d_in: usize,
    d_out: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pairs: Option<Vec<EbPair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kraus: Option<Vec<ComplexMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choi: Option<ComplexMatrix>,
}

impl SuperOp {
    /// Channel file encoding: `{"kind", "d_in", "d_out"}` plus one of
    /// `"pairs"`, `"kraus"` or `"choi"`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut doc = ChannelJson {
            kind: self.kind().to_string(),
            d_in: self.d_in(),
            d_out: self.d_out(),
            pairs: None,
            kraus: None,
            choi: None,
        };
        match self {
            SuperOp::Eb(m) => doc.pairs = Some(m.pairs.clone()),
            SuperOp::Kraus(m) => doc.kraus = Some(m.kraus.clone()),
            SuperOp::Choi(m) => doc.choi = Some(m.matrix.clone()),
        }
        serde_json::to_value(doc).expect("channel serializes")
    }

    pub fn from_json_str(text: &str) -> Result<SuperOp> {
        let doc: ChannelJson = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
        let field = |name: &str| Error::Parse(format!("kind '{}' requires field '{name}'", doc.kind));
        let wrap = |e: Error| Error::Parse(e.to_string());
        match doc.kind.as_str() {
            "eb" => {
                let pairs = doc.pairs.clone().ok_or_else(|| field("pairs"))?;
                EbMap::new(doc.d_in, doc.d_out, pairs).map(SuperOp::Eb).map_err(wrap)
            }
            "kraus" => {
                let kraus = doc.kraus.clone().ok_or_else(|| field("kraus"))?;
                KrausMap::new(doc.d_in, doc.d_out, kraus).map(SuperOp::Kraus).map_err(wrap)
            }
            "choi" => {
                let c = doc.choi.clone().ok_or_else(|| field("choi"))?;
                ChoiMap::new(doc.d_in, doc.d_out, c).map(SuperOp::Choi).map_err(wrap)
            }
            other => Err(Error::Parse(format!("field 'kind': unknown channel kind '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::SeededRng;

    fn basis(d: usize) -> Vec<ComplexMatrix> {
        (0..d).flat_map(|i| (0..d).map(move |j| ComplexMatrix::unit(d, i, j))).collect()
    }

    fn agree_on_basis(a: &SuperOp, b: &SuperOp, tol: f64) -> bool {
        basis(a.d_in())
            .iter()
            .all(|e| a.apply(e).unwrap().max_abs_diff(&b.apply(e).unwrap()) <= tol)
    }

    fn rng(seed: u64) -> SeededRng {
        rng_from_seed(seed)
    }

    #[test]
    fn eb_apply_examples() {
        let r = random_density(3, &mut rng(1));
        let m = EbMap::new(2, 3, vec![EbPair { x: ComplexMatrix::identity(2), r: r.clone() }]).unwrap();
        let a = random_psd(2, &mut rng(2));
        assert!(m.apply(&a).unwrap().max_abs_diff(&r.scale_complex(a.trace())) < 1e-13);

        let outputs: Vec<_> = (0..3).map(|s| random_density(2, &mut rng(10 + s))).collect();
        let cq = make_cq(outputs.clone()).unwrap();
        for (j, rj) in outputs.iter().enumerate() {
            let out = cq.apply(&ComplexMatrix::unit(3, j, j)).unwrap();
            assert!(out.max_abs_diff(rj) < 1e-14);
        }

        let id = SuperOp::identity(3);
        let a = random_psd(3, &mut rng(3));
        assert_eq!(id.apply(&a).unwrap(), a);
        assert!(matches!(id.apply(&ComplexMatrix::identity(2)), Err(Error::Input(_))));
    }

    #[test]
    fn eb_adjoint_swaps_roles() {
        let m = random_eb(2, 3, 2, EbClass::General, 4).unwrap();
        let adj = m.adjoint();
        for (p, q) in m.pairs().iter().zip(adj.pairs()) {
            assert_eq!(p.x, q.r);
            assert_eq!(p.r, q.x);
        }
        assert_eq!(adj.adjoint(), m);
    }

    #[test]
    fn adjoint_identity_all_representations() {
        let eb: SuperOp = random_eb(2, 3, 3, EbClass::General, 5).unwrap().into();
        let kraus: SuperOp = random_cp_kraus(3, 2, 3, 6, false).unwrap().into();
        let choi_rep = SuperOp::Choi(kraus.to_choi());
        for m in [eb, kraus, choi_rep] {
            let adj = m.adjoint();
            assert!(agree_on_basis(&adj.adjoint(), &m, 1e-12));
            let mut r = rng(7);
            for _ in 0..100 {
                let a = complex_gaussian(m.d_in(), m.d_in(), &mut r);
                let b = complex_gaussian(m.d_out(), m.d_out(), &mut r);
                let lhs = b.inner(&m.apply(&a).unwrap());
                let rhs = adj.apply(&b).unwrap().inner(&a);
                assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0), "{} {lhs} {rhs}", m.kind());
            }
        }
    }

    #[test]
    fn constructors_validate() {
        let bad = vec![ComplexMatrix::diag(&[0.5, 0.0]), ComplexMatrix::diag(&[0.0, 1.0])];
        assert!(matches!(make_cq(bad), Err(Error::Input(_))));
        let not_povm = vec![ComplexMatrix::diag(&[1.0, 0.0]), ComplexMatrix::diag(&[0.0, 0.5])];
        assert!(matches!(make_qc(not_povm), Err(Error::Input(_))));
        assert!(matches!(make_depolarizing(2, 1.5), Err(Error::Input(_))));
        assert!(matches!(make_depolarizing(2, -0.1), Err(Error::Input(_))));
        let not_psd = EbPair { x: ComplexMatrix::diag(&[1.0, -1.0]), r: ComplexMatrix::identity(2) };
        assert!(EbMap::new(2, 2, vec![not_psd]).is_err());
        assert!(EbMap::new(2, 2, vec![]).is_err());
        assert!(matches!("bogus".parse::<EbClass>(), Err(Error::Input(_))));
    }

    #[test]
    fn dephasing_is_qc() {
        let projectors: Vec<_> = (0..3).map(|k| ComplexMatrix::unit(3, k, k)).collect();
        let deph = make_qc(projectors).unwrap();
        assert!(check_cond2(&deph, 0.0));
        let a = complex_gaussian(3, 3, &mut rng(8));
        let out = deph.apply(&a).unwrap();
        assert!(out.max_abs_diff(&ComplexMatrix::diag_complex(&a.diagonal())) < 1e-14);
    }

    #[test]
    fn maximally_mixed_cq() {
        let mixed = ComplexMatrix::identity(2).scale(0.5);
        let cq = make_cq(vec![mixed.clone(), mixed.clone(), mixed.clone()]).unwrap();
        let a = random_density(3, &mut rng(9));
        assert!(cq.apply(&a).unwrap().max_abs_diff(&mixed) < 1e-14);
    }

    #[test]
    fn qc_outputs_are_diagonal_states() {
        let qc = random_eb(3, 4, 1, EbClass::Qc, 10).unwrap();
        assert_eq!(qc.len(), 4);
        assert!(check_cond2(&qc, 0.0));
        assert!(SuperOp::Eb(qc.clone()).is_trace_preserving(1e-10));
        let mut r = rng(11);
        for _ in 0..20 {
            let rho = random_density(3, &mut r);
            let out = qc.apply(&rho).unwrap();
            assert!(check_cond2(&EbMap::new(3, 4, vec![EbPair { x: rho.clone(), r: out.clone() }]).unwrap(), 1e-10));
            assert!((out.trace().re - 1.0).abs() < 1e-10);
            assert!(is_psd(&out, 1e-10).unwrap());
        }
    }

    #[test]
    fn depolarizing_examples() {
        let id = SuperOp::identity(3);
        assert!(agree_on_basis(&make_depolarizing(3, 1.0).unwrap(), &id, 1e-14));
        let full = make_depolarizing(3, 0.0).unwrap();
        let a = complex_gaussian(3, 3, &mut rng(12));
        let expect = ComplexMatrix::identity(3).scale_complex(a.trace() / 3.0);
        assert!(full.apply(&a).unwrap().max_abs_diff(&expect) < 1e-14);
        let d = make_depolarizing(3, 0.37).unwrap();
        assert!(d.is_unital(1e-12));
        assert!(d.is_trace_preserving(1e-12));
        let (l1, l2) = (0.6, 0.3);
        let d1 = make_depolarizing(3, l1).unwrap();
        let d2 = make_depolarizing(3, l2).unwrap();
        let d12 = make_depolarizing(3, l1 * l2).unwrap();
        for e in basis(3) {
            let two_step = d1.apply(&d2.apply(&e).unwrap()).unwrap();
            assert!(two_step.max_abs_diff(&d12.apply(&e).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn condition_checkers() {
        let x = ComplexMatrix::from_real_rows(&[&[1.0, -0.5], &[-0.5, 1.0]]).unwrap();
        let m = EbMap::new(2, 2, vec![EbPair { x, r: ComplexMatrix::identity(2) }]).unwrap();
        assert!(!check_cond1(&m, 1e-12));
        assert!(check_cond2(&m, 0.0));
        for seed in 0..20 {
            assert!(check_cond1(&random_eb(3, 2, 3, EbClass::Cond1, seed).unwrap(), 1e-12));
            assert!(check_cond2(&random_eb(3, 2, 3, EbClass::Cond2, seed).unwrap(), 0.0));
            assert!(check_cond2(&random_eb(2, 3, 1, EbClass::Qc, seed).unwrap(), 0.0));
        }
    }

    #[test]
    fn generators_are_deterministic() {
        for class in [EbClass::General, EbClass::Cond1, EbClass::Cond2, EbClass::Cq, EbClass::Qc] {
            assert_eq!(random_eb(2, 3, 2, class, 42).unwrap(), random_eb(2, 3, 2, class, 42).unwrap());
        }
        assert_eq!(random_cp_kraus(2, 2, 3, 1, true).unwrap(), random_cp_kraus(2, 2, 3, 1, true).unwrap());
        assert_ne!(random_eb(2, 2, 2, EbClass::General, 1).unwrap(), random_eb(2, 2, 2, EbClass::General, 2).unwrap());
    }

    #[test]
    fn random_cq_preserves_trace() {
        let cq = random_eb(3, 2, 1, EbClass::Cq, 13).unwrap();
        let out = cq.apply(&ComplexMatrix::identity(3).scale(1.0 / 3.0)).unwrap();
        let expect = linalg::sum(cq.pairs().iter().map(|p| &p.r)).unwrap().scale(1.0 / 3.0);
        assert!(out.max_abs_diff(&expect) < 1e-14);
        assert!((out.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_flag() {
        let raw = random_eb_with(2, 2, 3, EbClass::General, 3, false).unwrap();
        let norm = random_eb_with(2, 2, 3, EbClass::General, 3, true).unwrap();
        assert!(norm.pairs().iter().all(|p| (p.r.trace().re - 1.0).abs() < 1e-12));
        let total = linalg::sum(norm.pairs().iter().map(|p| &p.x)).unwrap();
        assert!((hermitian_eigen(&total).unwrap().eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(raw.pairs().iter().any(|p| (p.r.trace().re - 1.0).abs() > 1e-6));
    }

    #[test]
    fn eb_maps_preserve_positivity() {
        for seed in 0..5 {
            let m = random_eb(3, 2, 3, EbClass::General, seed).unwrap();
            let mut r = rng(100 + seed);
            for _ in 0..100 {
                let a = random_psd(3, &mut r);
                assert!(is_psd(&m.apply(&a).unwrap(), 1e-10).unwrap());
            }
        }
    }

    #[test]
    fn representation_round_trips() {
        let eb: SuperOp = random_eb(2, 3, 3, EbClass::General, 14).unwrap().into();
        let k1: SuperOp = eb.to_kraus().into();
        let c: SuperOp = SuperOp::Choi(k1.to_choi());
        let k2: SuperOp = c.to_kraus().into();
        assert!(agree_on_basis(&eb, &k1, 1e-9));
        assert!(agree_on_basis(&eb, &c, 1e-9));
        assert!(agree_on_basis(&eb, &k2, 1e-8));
        assert!(is_psd(&choi(&eb), 1e-10).unwrap());
        let kraus: SuperOp = random_cp_kraus(2, 2, 2, 15, true).unwrap().into();
        assert!(is_psd(&choi(&kraus), 1e-10).unwrap());
    }

    #[test]
    fn choi_convention() {
        // Identity channel on a qubit: C = Σ |i⟩⟨j| ⊗ |i⟩⟨j| = |Ω⟩⟨Ω| with |Ω⟩ = |00⟩ + |11⟩.
        let c = choi(&SuperOp::identity(2));
        let omega = [C64::new(1.0, 0.0), ZERO, ZERO, C64::new(1.0, 0.0)];
        assert_eq!(c, ComplexMatrix::outer(&omega, &omega));
        // Block (i, j) holds Φ(|i⟩⟨j|).
        let m: SuperOp = random_cp_kraus(2, 3, 2, 16, false).unwrap().into();
        let c = choi(&m);
        let out = m.apply(&ComplexMatrix::unit(2, 0, 1)).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(c[(a, 3 + b)], out[(a, b)]);
            }
        }
    }

    #[test]
    fn transfer_matrix_matches_apply() {
        let m: SuperOp = random_eb(3, 2, 2, EbClass::General, 17).unwrap().into();
        let t = m.transfer_matrix();
        let mut r = rng(18);
        let a = complex_gaussian(3, 3, &mut r);
        let b = complex_gaussian(2, 2, &mut r);
        assert!(t.apply(&a).max_abs_diff(&m.apply(&a).unwrap()) < 1e-13);
        assert!(t.apply_adjoint(&b).max_abs_diff(&m.adjoint().apply(&b).unwrap()) < 1e-13);
    }

    #[test]
    fn tensor_examples() {
        let id = tensor(&SuperOp::identity(2), &SuperOp::identity(3)).unwrap();
        assert!(agree_on_basis(&id, &SuperOp::identity(6), 1e-14));

        let phi: SuperOp = random_eb(2, 3, 2, EbClass::General, 19).unwrap().into();
        let omega: SuperOp = random_cp_kraus(2, 2, 3, 20, true).unwrap().into();
        let prod = tensor(&phi, &omega).unwrap();
        let mut r = rng(21);
        for _ in 0..100 {
            let a = complex_gaussian(2, 2, &mut r);
            let b = complex_gaussian(2, 2, &mut r);
            let lhs = prod.apply(&kron(&a, &b)).unwrap();
            let rhs = kron(&phi.apply(&a).unwrap(), &omega.apply(&b).unwrap());
            assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        }

        let tp1: SuperOp = random_cp_kraus(2, 3, 2, 22, true).unwrap().into();
        let tp2: SuperOp = random_eb(2, 2, 1, EbClass::Qc, 23).unwrap().into();
        let prod = tensor(&tp1, &tp2).unwrap();
        for _ in 0..20 {
            let rho = random_psd(4, &mut r);
            let out = prod.apply(&rho).unwrap();
            assert!((out.trace() - rho.trace()).norm() < 1e-9);
        }
    }

    #[test]
    fn tensor_is_associative_on_products() {
        let a: SuperOp = random_cp_kraus(2, 2, 2, 24, true).unwrap().into();
        let b: SuperOp = random_eb(2, 2, 2, EbClass::Cond1, 25).unwrap().into();
        let c = make_depolarizing(2, 0.4).unwrap();
        let left = tensor(&tensor(&a, &b).unwrap(), &c).unwrap();
        let right = tensor(&a, &tensor(&b, &c).unwrap()).unwrap();
        let mut r = rng(26);
        for _ in 0..10 {
            let x = kron(&kron(&random_psd(2, &mut r), &random_psd(2, &mut r)), &random_psd(2, &mut r));
            assert!(left.apply(&x).unwrap().max_abs_diff(&right.apply(&x).unwrap()) < 1e-9);
        }
    }

    #[test]
    fn tensor_budget() {
        let big = SuperOp::identity(9);
        assert!(matches!(tensor(&big, &big), Err(Error::Resource(_))));
    }

    #[test]
    fn channel_json_round_trip() {
        let maps: Vec<SuperOp> = vec![
            random_eb(2, 3, 2, EbClass::General, 27).unwrap().into(),
            random_cp_kraus(3, 2, 2, 28, true).unwrap().into(),
            make_depolarizing(2, 0.25).unwrap(),
        ];
        for m in maps {
            let text = serde_json::to_string(&m.to_json()).unwrap();
            assert_eq!(SuperOp::from_json_str(&text).unwrap(), m);
        }
    }

    #[test]
    fn channel_json_errors() {
        assert!(matches!(SuperOp::from_json_str("{\"kind\": \"eb\""), Err(Error::Parse(_))));
        let missing = r#"{"kind":"kraus","d_in":2,"d_out":2}"#;
        let err = SuperOp::from_json_str(missing).unwrap_err().to_string();
        assert!(err.contains("kraus"), "{err}");
        let unknown = r#"{"kind":"stinespring","d_in":2,"d_out":2}"#;
        assert!(SuperOp::from_json_str(unknown).unwrap_err().to_string().contains("kind"));
    }
}

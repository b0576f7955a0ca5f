//! p→q norms of CP maps.
//!
//! For a CP map the supremum of ‖Φ(A)‖_q / ‖A‖_p is attained on positive
//! semidefinite inputs, so the optimizer only searches that cone. Inputs are
//! parametrized as A = G*G with an unconstrained complex G and the ratio is
//! ascended in log form with backtracking line search and Barzilai-Borwein
//! step proposals. The value reported is attained by the returned argmax,
//! hence a certified lower bound on the true norm.

use serde::{Deserialize, Serialize};

use crate::channels::{SuperOp, TransferMatrix};
use crate::error::{input, Error, Result};
use crate::linalg::{
    hermitian_eigen, is_psd, lp_norm, psd_power, schatten_norm, spectral_power, ComplexMatrix, HermitianSpectrum, C64,
};
use crate::par;
use crate::random::{complex_gaussian, derive_seed, rng_from_seed};

/// Hölder conjugate p/(p−1); `f64::INFINITY` stands for the conjugate of 1.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Exponent pair for a p→q norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormQuery {
    pub p: f64,
    pub q: f64,
}

impl NormQuery {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q)] {
            if !v.is_finite() || v < 1.0 {
                return Err(Error::Domain(format!("{name} must be finite and >= 1, got {v}")));
            }
        }
        Ok(Self { p, q })
    }

    pub fn p_conj(&self) -> f64 {
        conjugate(self.p)
    }

    pub fn q_conj(&self) -> f64 {
        conjugate(self.q)
    }

    /// The (q′, p′) query for the adjoint map; needs p, q > 1.
    pub fn dual(&self) -> Result<NormQuery> {
        if self.p <= 1.0 || self.q <= 1.0 {
            return Err(Error::Domain(format!(
                "dual exponents are infinite for p = {}, q = {}",
                self.p, self.q
            )));
        }
        NormQuery::new(self.q_conj(), self.p_conj())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub n_starts: usize,
    pub max_iter: usize,
    pub step_init: f64,
    pub tol_grad: f64,
    pub tol_value: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { n_starts: 16, max_iter: 2000, step_init: 1.0, tol_grad: 1e-9, tol_value: 1e-10, seed: 0 }
    }
}

impl OptimizerConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Four times the starts and iterations, same seed.
    pub fn escalated(&self) -> Self {
        Self { n_starts: self.n_starts * 4, max_iter: self.max_iter * 4, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 || self.max_iter == 0 {
            return input("optimizer needs n_starts >= 1 and max_iter >= 1");
        }
        if !(self.step_init > 0.0 && self.tol_grad > 0.0 && self.tol_value >= 1e-12) {
            return input("optimizer step and tolerances must be positive, tol_value >= 1e-12");
        }
        if !(self.step_init.is_finite() && self.tol_grad.is_finite() && self.tol_value.is_finite()) {
            return input("optimizer parameters must be finite");
        }
        Ok(())
    }
}

/// Lower bound on ‖Φ‖_{p→q} together with the input that attains it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    /// PSD input with ‖argmax‖_p = 1.
    pub argmax: ComplexMatrix,
    pub n_starts_converged: usize,
    pub best_start_index: usize,
    pub iterations: usize,
}

/// ‖M‖_p and the gradient of log ‖M‖_p for PSD M, i.e. M^{p−1} / Tr M^p.
/// Eigenvalues are rescaled by the largest before powering.
fn log_norm_and_grad(m: &ComplexMatrix, p: f64) -> Result<(f64, ComplexMatrix)> {
    let n = m.rows();
    if p == 1.0 {
        let t = m.trace().re;
        return Ok((t, ComplexMatrix::identity(n).scale(1.0 / t)));
    }
    if p == 2.0 {
        let f2: f64 = m.data().iter().map(|z| z.norm_sqr()).sum();
        return Ok((f2.sqrt(), m.hermitian_part().scale(1.0 / f2)));
    }
    let spec = hermitian_eigen(m)?;
    let clipped = spec.clipped_eigenvalues();
    let top = clipped.first().copied().unwrap_or(0.0);
    let norm = lp_norm(&clipped, p);
    if top <= 0.0 {
        return Ok((0.0, ComplexMatrix::zeros(n, n)));
    }
    let scaled_trace: f64 = clipped.iter().map(|&l| (l / top).powf(p)).sum();
    let grad = HermitianSpectrum { eigenvalues: clipped, eigenvectors: spec.eigenvectors }
        .reconstruct_with(|l| (l / top).powf(p - 1.0) / (top * scaled_trace));
    Ok((norm, grad))
}

fn log_norm(m: &ComplexMatrix, p: f64) -> Result<f64> {
    Ok(match p {
        _ if p == 1.0 => m.trace().re,
        _ if p == 2.0 => m.frobenius_norm(),
        _ => lp_norm(&hermitian_eigen(m)?.clipped_eigenvalues(), p),
    }
    .ln())
}

/// log(‖Φ(G*G)‖_q / ‖G*G‖_p) and its steepest-ascent direction in G.
struct Objective<'a> {
    map: &'a TransferMatrix,
    query: NormQuery,
}

impl Objective<'_> {
    fn value(&self, g: &ComplexMatrix) -> Result<f64> {
        let a = g.gram();
        let m = self.map.apply(&a);
        Ok(log_norm(&m, self.query.q)? - log_norm(&a, self.query.p)?)
    }

    fn value_and_grad(&self, g: &ComplexMatrix) -> Result<(f64, ComplexMatrix)> {
        let a = g.gram();
        let m = self.map.apply(&a);
        let (out_norm, out_grad) = log_norm_and_grad(&m, self.query.q)?;
        let (in_norm, in_grad) = log_norm_and_grad(&a, self.query.p)?;
        let value = out_norm.ln() - in_norm.ln();
        // d log h = Tr(W dA), dA = dG* G + G* dG  ⇒  ascent direction 2 G W.
        let w = &self.map.apply_adjoint(&out_grad).hermitian_part() - &in_grad;
        Ok((value, (g * &w).scale(2.0)))
    }
}

#[derive(Clone, Debug)]
struct StartResult {
    log_value: f64,
    g: ComplexMatrix,
    iterations: usize,
    converged: bool,
}

fn normalized(g: ComplexMatrix) -> ComplexMatrix {
    let n = g.frobenius_norm();
    g.scale(1.0 / n)
}

fn real_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.inner(b).re
}

fn ascend(obj: &Objective<'_>, g0: ComplexMatrix, cfg: &OptimizerConfig) -> Result<StartResult> {
    let mut g = normalized(g0);
    let (mut f, mut grad) = obj.value_and_grad(&g)?;
    if f == f64::NEG_INFINITY {
        // Φ annihilates this start; nothing to climb.
        return Ok(StartResult { log_value: f, g, iterations: 0, converged: true });
    }
    if !f.is_finite() {
        return Err(Error::Numeric("non-finite objective at start".into()));
    }
    let mut step = cfg.step_init;
    let mut prev: Option<(ComplexMatrix, ComplexMatrix)> = None;
    let mut stalls = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let gnorm2 = real_inner(&grad, &grad);
        if gnorm2.sqrt() < cfg.tol_grad {
            converged = true;
            break;
        }
        if let Some((gp, gradp)) = &prev {
            let s = &g - gp;
            let y = &grad - gradp;
            let sy = real_inner(&s, &y);
            let ss = real_inner(&s, &s);
            step = if sy < 0.0 { (ss / -sy).clamp(1e-8, 1e6) } else { (step * 2.0).min(1e6) };
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = normalized(&g + &grad.scale(t));
            let fc = obj.value(&candidate)?;
            if fc.is_nan() {
                return Err(Error::Numeric("objective became NaN during line search".into()));
            }
            if fc >= f + 1e-4 * t * gnorm2 {
                accepted = Some((candidate, fc));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some((g_new, f_new)) = accepted else {
            converged = true;
            break;
        };
        let (f_check, grad_new) = obj.value_and_grad(&g_new)?;
        if !f_check.is_finite() || grad_new.check_finite().is_err() {
            return Err(Error::Numeric("non-finite objective or gradient".into()));
        }
        let gain = f_new - f;
        prev = Some((std::mem::replace(&mut g, g_new), std::mem::replace(&mut grad, grad_new)));
        f = f_check;
        step = t;
        if gain < 1e-3 * cfg.tol_value {
            stalls += 1;
            if stalls >= 5 {
                converged = true;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Ok(StartResult { log_value: f, g, iterations, converged })
}

/// Multi-start ascent of ‖Φ(A)‖_q over {A ≥ 0, ‖A‖_p = 1}.
pub fn norm_p_to_q(m: &SuperOp, query: NormQuery, cfg: &OptimizerConfig) -> Result<NormEstimate> {
    norm_p_to_q_with_starts(m, query, cfg, &[])
}

/// As [`norm_p_to_q`], with extra PSD starting inputs tried before the
/// random ones. The result is never below the value of any warm start.
pub fn norm_p_to_q_with_starts(
    m: &SuperOp,
    query: NormQuery,
    cfg: &OptimizerConfig,
    warm_starts: &[ComplexMatrix],
) -> Result<NormEstimate> {
    cfg.validate()?;
    NormQuery::new(query.p, query.q)?;
    let n = m.d_in();
    for (i, w) in warm_starts.iter().enumerate() {
        if (w.rows(), w.cols()) != (n, n) {
            return input(format!("warm start {i} must be {n}x{n}"));
        }
    }
    let transfer = m.transfer_matrix();
    let obj = Objective { map: &transfer, query };
    let n_warm = warm_starts.len();
    let total = n_warm + cfg.n_starts;

    let results: Vec<Result<StartResult>> = par::map_indexed(total, |i| {
        let g0 = if i < n_warm {
            psd_power(&warm_starts[i], 0.5)?
        } else {
            complex_gaussian(n, n, &mut rng_from_seed(derive_seed(cfg.seed, i as u64)))
        };
        ascend(&obj, g0, cfg)
    });

    let mut best: Option<(usize, StartResult)> = None;
    let mut n_converged = 0;
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        if r.converged {
            n_converged += 1;
        }
        if best.as_ref().is_none_or(|(_, b)| r.log_value > b.log_value) {
            best = Some((i, r));
        }
    }
    let (best_index, best) = best.expect("at least one start");
    let a = best.g.gram();
    let a_norm = schatten_norm(&a, query.p)?;
    let argmax = if a_norm > 0.0 { a.scale(1.0 / a_norm) } else { a };
    let value = schatten_norm(&m.apply(&argmax)?, query.q)?;
    if !value.is_finite() {
        return Err(Error::Numeric("non-finite norm value".into()));
    }
    Ok(NormEstimate {
        value,
        argmax,
        n_starts_converged: n_converged,
        best_start_index: best_index,
        iterations: best.iterations,
    })
}

/// Brute-force lower bound: random PSD samples, then a derivative-free
/// compass search from the ten best. Meant for inputs of dimension ≤ 4.
pub fn oracle_norm(m: &SuperOp, query: NormQuery, n_samples: usize, seed: u64) -> f64 {
    let n = m.d_in();
    let ratio = |g: &ComplexMatrix| -> f64 {
        let a = g.gram();
        let den = schatten_norm(&a, query.p).unwrap_or(0.0);
        if den == 0.0 {
            return 0.0;
        }
        let out = m.apply(&a).expect("dimension matches");
        schatten_norm(&out, query.q).map(|v| v / den).unwrap_or(0.0)
    };
    let mut rng = rng_from_seed(seed);
    let mut samples: Vec<(f64, ComplexMatrix)> = (0..n_samples.max(1))
        .map(|_| {
            let g = complex_gaussian(n, n, &mut rng);
            (ratio(&g), g)
        })
        .collect();
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    samples.truncate(10);

    let mut best = samples[0].0;
    for (v0, g0) in samples {
        let mut params: Vec<f64> = normalized(g0).data().iter().flat_map(|z| [z.re, z.im]).collect();
        let to_matrix = |p: &[f64]| {
            ComplexMatrix::from_fn(n, n, |r, c| {
                let k = 2 * (r * n + c);
                C64::new(p[k], p[k + 1])
            })
        };
        let mut v = v0;
        let mut delta = 0.1;
        let mut evals = 0;
        while delta > 1e-10 && evals < 40_000 {
            let mut improved = false;
            for k in 0..params.len() {
                for sign in [1.0, -1.0] {
                    let old = params[k];
                    params[k] = old + sign * delta;
                    let trial = ratio(&to_matrix(&params));
                    evals += 1;
                    if trial > v {
                        v = trial;
                        improved = true;
                        break;
                    }
                    params[k] = old;
                }
            }
            if !improved {
                delta *= 0.5;
            }
        }
        best = best.max(v);
    }
    best
}

/// |||A|||_p = ‖A‖_p / ‖I_d‖_p.
pub fn triple_norm(a: &ComplexMatrix, p: f64) -> Result<f64> {
    if !a.is_square() {
        return input("triple norm needs a square matrix");
    }
    Ok(schatten_norm(a, p)? * (a.rows() as f64).powf(-1.0 / p))
}

/// |||Φ|||_{p→q} = ‖Φ‖_{p→q} · d_in^{1/p} / d_out^{1/q}, with the identity
/// input among the starts so the unital bound |||Φ||| ≥ 1 is always attained.
pub fn triple_norm_p_to_q(m: &SuperOp, query: NormQuery, cfg: &OptimizerConfig) -> Result<f64> {
    Ok(triple_norm_estimate(m, query, cfg, &[])?.0)
}

pub(crate) fn triple_norm_estimate(
    m: &SuperOp,
    query: NormQuery,
    cfg: &OptimizerConfig,
    extra_starts: &[ComplexMatrix],
) -> Result<(f64, NormEstimate)> {
    let mut starts = vec![ComplexMatrix::identity(m.d_in())];
    starts.extend_from_slice(extra_starts);
    let est = norm_p_to_q_with_starts(m, query, cfg, &starts)?;
    let factor = (m.d_in() as f64).powf(1.0 / query.p) / (m.d_out() as f64).powf(1.0 / query.q);
    Ok((est.value * factor, est))
}

/// Both sides of Tr(B*CB)^q ≤ Tr (BB*)^q C^q for PSD C and q ≥ 1.
pub fn lieb_thirring_check(b: &ComplexMatrix, c: &ComplexMatrix, q: f64) -> Result<(f64, f64)> {
    if !q.is_finite() || q < 1.0 {
        return Err(Error::Domain(format!("Lieb-Thirring exponent must be >= 1, got {q}")));
    }
    if !c.is_square() || c.rows() != b.rows() {
        return input(format!(
            "C must be square with as many rows as B ({}), got {}x{}",
            b.rows(),
            c.rows(),
            c.cols()
        ));
    }
    if !is_psd(c, 1e-9 * c.max_abs().max(1.0))? {
        return input("C is not positive semidefinite");
    }
    let bcb = &(&b.adjoint() * c) * b;
    let lhs = if q == 1.0 {
        bcb.trace()
    } else {
        C64::new(spectral_power(&hermitian_eigen(&bcb)?, q).trace().re, 0.0)
    };
    let bbt = b * &b.adjoint();
    let rhs = if q == 1.0 {
        bbt.trace_product(c)
    } else {
        spectral_power(&hermitian_eigen(&bbt)?, q).trace_product(&spectral_power(&hermitian_eigen(c)?, q))
    };
    let scale = rhs.norm().max(lhs.norm()).max(1.0);
    if rhs.im.abs() > 1e-10 * scale || lhs.im.abs() > 1e-10 * scale {
        return Err(Error::Numeric(format!("trace has imaginary part {} / {}", lhs.im, rhs.im)));
    }
    Ok((lhs.re, rhs.re))
}

/// ‖L‖_{p→q} against ‖L̂‖_{q′→p′}; both sides are optimizer lower bounds.
pub fn duality_check(m: &SuperOp, query: NormQuery, cfg: &OptimizerConfig) -> Result<(f64, f64)> {
    let dual = query.dual()?;
    let lhs = norm_p_to_q(m, query, cfg)?.value;
    let rhs = norm_p_to_q(&m.adjoint(), dual, &cfg.with_seed(derive_seed(cfg.seed, 0xD0A1)))?.value;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{make_depolarizing, make_qc, random_cp_kraus, random_eb, EbClass};
    use crate::random::random_psd;

    fn quick() -> OptimizerConfig {
        OptimizerConfig { n_starts: 8, ..OptimizerConfig::default() }
    }

    fn dephasing(d: usize) -> SuperOp {
        make_qc((0..d).map(|k| ComplexMatrix::unit(d, k, k)).collect()).unwrap().into()
    }

    #[test]
    fn conjugates() {
        let q = NormQuery::new(2.0, 4.0).unwrap();
        assert_eq!(q.p_conj(), 2.0);
        assert!((1.0 / q.q + 1.0 / q.q_conj() - 1.0).abs() < 1e-12);
        assert_eq!(NormQuery::new(1.0, 3.0).unwrap().p_conj(), f64::INFINITY);
        let d = q.dual().unwrap();
        assert!((d.p - 4.0 / 3.0).abs() < 1e-15 && d.q == 2.0);
        assert!(NormQuery::new(1.0, 3.0).unwrap().dual().is_err());
        assert!(NormQuery::new(0.5, 3.0).is_err());
        assert!(NormQuery::new(2.0, f64::INFINITY).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig { tol_value: 1e-13, ..OptimizerConfig::default() };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { n_starts: 0, ..OptimizerConfig::default() };
        assert!(bad.validate().is_err());
        let e = OptimizerConfig::default().escalated();
        assert_eq!((e.n_starts, e.max_iter), (64, 8000));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m: SuperOp = random_eb(3, 2, 3, EbClass::General, 3).unwrap().into();
        let t = m.transfer_matrix();
        for (p, q) in [(2.0, 3.0), (1.5, 4.0), (1.0, 2.5), (3.0, 2.0)] {
            let obj = Objective { map: &t, query: NormQuery::new(p, q).unwrap() };
            let g = complex_gaussian(3, 3, &mut rng_from_seed(4));
            let (_, grad) = obj.value_and_grad(&g).unwrap();
            let dir = complex_gaussian(3, 3, &mut rng_from_seed(5));
            let h = 1e-6;
            let fd = (obj.value(&(&g + &dir.scale(h))).unwrap() - obj.value(&(&g - &dir.scale(h))).unwrap()) / (2.0 * h);
            let analytic = real_inner(&grad, &dir);
            assert!((fd - analytic).abs() < 1e-6 * analytic.abs().max(1.0), "p={p} q={q}: {fd} vs {analytic}");
        }
    }

    #[test]
    fn identity_two_to_four() {
        let est = norm_p_to_q(&SuperOp::identity(2), NormQuery::new(2.0, 4.0).unwrap(), &quick()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-8, "{}", est.value);
    }

    #[test]
    fn completely_depolarizing_two_to_two() {
        let m = make_depolarizing(3, 0.0).unwrap();
        let est = norm_p_to_q(&m, NormQuery::new(2.0, 2.0).unwrap(), &quick()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-8, "{}", est.value);
    }

    #[test]
    fn dephasing_two_to_three() {
        let est = norm_p_to_q(&dephasing(2), NormQuery::new(2.0, 3.0).unwrap(), &quick()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-8, "{}", est.value);
    }

    #[test]
    fn estimate_is_attained() {
        let m: SuperOp = random_cp_kraus(2, 3, 2, 6, true).unwrap().into();
        let query = NormQuery::new(1.5, 3.0).unwrap();
        let cfg = quick();
        let est = norm_p_to_q(&m, query, &cfg).unwrap();
        assert!((schatten_norm(&est.argmax, 1.5).unwrap() - 1.0).abs() < 1e-10);
        assert!(is_psd(&est.argmax, 1e-10).unwrap());
        let again = schatten_norm(&m.apply(&est.argmax).unwrap(), 3.0).unwrap();
        assert!((again - est.value).abs() <= cfg.tol_value);
        assert!(est.best_start_index < cfg.n_starts);
        assert!(est.n_starts_converged >= 1);
    }

    #[test]
    fn warm_start_is_never_lost() {
        let m = make_depolarizing(2, 0.5).unwrap();
        let query = NormQuery::new(2.0, 4.0).unwrap();
        let cfg = OptimizerConfig { n_starts: 1, max_iter: 1, ..quick() };
        let warm = ComplexMatrix::identity(2);
        let est = norm_p_to_q_with_starts(&m, query, &cfg, std::slice::from_ref(&warm)).unwrap();
        let warm_value = schatten_norm(&m.apply(&warm).unwrap(), 4.0).unwrap() / schatten_norm(&warm, 2.0).unwrap();
        assert!(est.value >= warm_value - 1e-14);
    }

    #[test]
    fn optimizer_dominates_oracle() {
        let query = NormQuery::new(2.0, 3.0).unwrap();
        for seed in 0..4 {
            let m: SuperOp = random_eb(2, 2, 3, EbClass::General, seed).unwrap().into();
            let est = norm_p_to_q(&m, query, &quick().with_seed(seed)).unwrap();
            let oracle = oracle_norm(&m, query, 500, seed);
            assert!(oracle <= est.value + 1e-6, "seed {seed}: oracle {oracle} > {}", est.value);
        }
    }

    #[test]
    fn oracle_identity_and_determinism() {
        let query = NormQuery::new(2.0, 4.0).unwrap();
        let v = oracle_norm(&SuperOp::identity(2), query, 10_000, 1);
        assert!((v - 1.0).abs() < 1e-4, "{v}");
        let m: SuperOp = random_eb(2, 2, 2, EbClass::General, 2).unwrap().into();
        assert_eq!(oracle_norm(&m, query, 1, 9), oracle_norm(&m, query, 1, 9));
    }

    #[test]
    fn scaling_covariance() {
        let m: SuperOp = random_eb(2, 3, 2, EbClass::General, 8).unwrap().into();
        let query = NormQuery::new(2.0, 3.0).unwrap();
        let base = norm_p_to_q(&m, query, &quick()).unwrap().value;
        let scaled = norm_p_to_q(&m.scaled(2.5).unwrap(), query, &quick()).unwrap().value;
        assert!((scaled - 2.5 * base).abs() < 1e-8);
    }

    #[test]
    fn monotone_in_q() {
        let m: SuperOp = random_cp_kraus(2, 2, 3, 9, true).unwrap().into();
        let mut last = f64::INFINITY;
        for q in [1.0, 1.5, 2.0, 3.0, 5.0] {
            let v = norm_p_to_q(&m, NormQuery::new(1.5, q).unwrap(), &quick()).unwrap().value;
            assert!(v <= last + 1e-6, "q = {q}: {v} > {last}");
            last = v;
        }
    }

    #[test]
    fn triple_norm_examples() {
        for d in 1..5 {
            for p in [1.0, 1.5, 2.0, 7.0] {
                assert!((triple_norm(&ComplexMatrix::identity(d), p).unwrap() - 1.0).abs() < 1e-14);
            }
        }
        let a = [1.0, -2.0, 0.5];
        let p = 3.0;
        let expect = (a.iter().map(|x: &f64| x.abs().powf(p)).sum::<f64>() / 3.0).powf(1.0 / p);
        assert!((triple_norm(&ComplexMatrix::diag(&a), p).unwrap() - expect).abs() < 1e-13);
        assert_eq!(triple_norm(&ComplexMatrix::zeros(2, 2), 2.0).unwrap(), 0.0);
    }

    #[test]
    fn triple_operator_norms() {
        let q22 = NormQuery::new(2.0, 2.0).unwrap();
        let v = triple_norm_p_to_q(&SuperOp::identity(2), q22, &quick()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let full = make_depolarizing(2, 0.0).unwrap();
        for (p, q) in [(1.5, 2.0), (2.0, 4.0), (2.0, 2.0)] {
            let v = triple_norm_p_to_q(&full, NormQuery::new(p, q).unwrap(), &quick()).unwrap();
            assert!((v - 1.0).abs() < 1e-6, "({p},{q}): {v}");
        }
        let tp: SuperOp = make_depolarizing(3, 0.3).unwrap();
        let v = triple_norm_p_to_q(&tp, NormQuery::new(2.0, 3.0).unwrap(), &quick()).unwrap();
        assert!(v >= 1.0 - 1e-8);
    }

    #[test]
    fn lieb_thirring_equality_cases() {
        let mut rng = rng_from_seed(10);
        let c = random_psd(3, &mut rng);
        let (l, r) = lieb_thirring_check(&ComplexMatrix::identity(3), &c, 2.5).unwrap();
        assert!((l - r).abs() < 1e-10 * r.abs().max(1.0));
        let b = complex_gaussian(3, 4, &mut rng);
        let (l, r) = lieb_thirring_check(&b, &c, 1.0).unwrap();
        assert!((l - r).abs() < 1e-10 * r.abs().max(1.0));
    }

    #[test]
    fn lieb_thirring_random() {
        let mut rng = rng_from_seed(11);
        for q in [1.5, 2.0, 3.0, 5.5] {
            for _ in 0..200 {
                let b = complex_gaussian(3, 2, &mut rng);
                let c = random_psd(3, &mut rng);
                let (l, r) = lieb_thirring_check(&b, &c, q).unwrap();
                assert!(l <= r + 1e-8 * r.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lieb_thirring_rejects_non_psd() {
        let c = ComplexMatrix::diag(&[1.0, -1.0]);
        assert!(matches!(lieb_thirring_check(&ComplexMatrix::identity(2), &c, 2.0), Err(Error::Input(_))));
        let c = ComplexMatrix::identity(3);
        assert!(lieb_thirring_check(&ComplexMatrix::identity(2), &c, 2.0).is_err());
    }

    #[test]
    fn duality_identity_and_eb() {
        let query = NormQuery::new(2.0, 4.0).unwrap();
        let (l, r) = duality_check(&SuperOp::identity(2), query, &quick()).unwrap();
        assert!((l - 1.0).abs() < 1e-8 && (r - 1.0).abs() < 1e-8, "{l} {r}");
        let m: SuperOp = random_eb(2, 2, 3, EbClass::General, 12).unwrap().into();
        let (l, r) = duality_check(&m, NormQuery::new(2.0, 3.0).unwrap(), &quick()).unwrap();
        assert!((l - r).abs() < 1e-4, "{l} {r}");
        let (l2, _) = duality_check(&m.adjoint().adjoint(), NormQuery::new(2.0, 3.0).unwrap(), &quick()).unwrap();
        assert!((l - l2).abs() < 1e-12);
        assert!(duality_check(&m, NormQuery::new(1.0, 3.0).unwrap(), &quick()).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let m: SuperOp = random_cp_kraus(2, 2, 2, 13, true).unwrap().into();
        let query = NormQuery::new(2.0, 3.0).unwrap();
        let a = norm_p_to_q(&m, query, &quick()).unwrap();
        let b = norm_p_to_q(&m, query, &quick()).unwrap();
        assert_eq!(a, b);
    }
}

//! Product-map tests: ‖Φ⊗Ω‖_{p→q} against ‖Φ‖_{p→q}·‖Ω‖_{p→q}.
//!
//! The product norm is always at least the product of the factor norms, and
//! the optimizer for Φ⊗Ω is warm-started from the tensor product of the two
//! factor maximizers, so every report has ratio ≥ 1 up to rounding. A ratio
//! well above 1 is only ever a *candidate* violation: all three numbers are
//! lower bounds and a factor optimizer may have stalled.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{random_cp_kraus, random_eb, tensor, EbClass, SuperOp};
use crate::error::{input, Error, Result};
use crate::linalg::{kron, MAX_DIM};
use crate::norms::{norm_p_to_q, norm_p_to_q_with_starts, NormEstimate, NormQuery, OptimizerConfig};
use crate::par;
use crate::random::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicativityReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub family: Option<Family>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trial: Option<usize>,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub ratio: f64,
    pub candidate: bool,
    pub escalated: bool,
    pub lhs: NormEstimate,
    pub rhs_phi: NormEstimate,
    pub rhs_omega: NormEstimate,
    pub config: OptimizerConfig,
}

impl MultiplicativityReport {
    /// Row for the summary CSV: family, p, q, seed, lhs, rhs_phi, rhs_omega, ratio.
    pub fn csv_record(&self) -> [String; 8] {
        [
            self.family.map_or_else(String::new, |f| f.to_string()),
            self.p.to_string(),
            self.q.to_string(),
            self.seed.to_string(),
            self.lhs.value.to_string(),
            self.rhs_phi.value.to_string(),
            self.rhs_omega.value.to_string(),
            self.ratio.to_string(),
        ]
    }
}

pub const CSV_HEADER: [&str; 8] = ["family", "p", "q", "seed", "lhs", "rhs_phi", "rhs_omega", "ratio"];

/// Ratio above which a report is flagged as a possible violation.
pub fn candidate_threshold(cfg: &OptimizerConfig) -> f64 {
    1.0 + 10.0 * cfg.tol_value
}

/// Compares the product-map norm with the product of factor norms.
pub fn product_norm_test(
    phi: &SuperOp,
    omega: &SuperOp,
    query: NormQuery,
    cfg: &OptimizerConfig,
) -> Result<MultiplicativityReport> {
    let d_in = phi.d_in() * omega.d_in();
    let d_out = phi.d_out() * omega.d_out();
    if d_in > MAX_DIM || d_out > MAX_DIM {
        return Err(Error::Resource(format!("product map {d_in}->{d_out} exceeds {MAX_DIM}")));
    }
    let rhs_phi = norm_p_to_q(phi, query, &cfg.with_seed(derive_seed(cfg.seed, 1)))?;
    let rhs_omega = norm_p_to_q(omega, query, &cfg.with_seed(derive_seed(cfg.seed, 2)))?;
    let product = tensor(phi, omega)?;
    let warm = kron(&rhs_phi.argmax, &rhs_omega.argmax);
    let lhs = norm_p_to_q_with_starts(&product, query, &cfg.with_seed(derive_seed(cfg.seed, 3)), &[warm])?;
    let den = rhs_phi.value * rhs_omega.value;
    let ratio = if den > 0.0 { lhs.value / den } else if lhs.value == 0.0 { 1.0 } else { f64::INFINITY };
    Ok(MultiplicativityReport {
        family: None,
        trial: None,
        p: query.p,
        q: query.q,
        seed: cfg.seed,
        ratio,
        candidate: ratio > candidate_threshold(cfg),
        escalated: false,
        lhs,
        rhs_phi,
        rhs_omega,
        config: cfg.clone(),
    })
}

/// ‖Φ⊗Φ‖ against ‖Φ‖².
pub fn fm_power_test(phi: &SuperOp, query: NormQuery, cfg: &OptimizerConfig) -> Result<MultiplicativityReport> {
    if phi.d_in() * phi.d_in() > MAX_DIM || phi.d_out() * phi.d_out() > MAX_DIM {
        return Err(Error::Resource("tensor square exceeds the dimension budget".into()));
    }
    product_norm_test(phi, phi, query, cfg)
}

/// Runs [`product_norm_test`] and, if the ratio flags a candidate, repeats
/// it once with the escalated budget before deciding.
pub fn product_norm_test_escalating(
    phi: &SuperOp,
    omega: &SuperOp,
    query: NormQuery,
    cfg: &OptimizerConfig,
) -> Result<MultiplicativityReport> {
    let first = product_norm_test(phi, omega, query, cfg)?;
    if !first.candidate {
        return Ok(first);
    }
    let mut second = product_norm_test(phi, omega, query, &cfg.escalated())?;
    second.escalated = true;
    Ok(second)
}

/// Generator families for [`violation_search`]. The family fixes Φ; Ω is
/// always a random trace-preserving qubit channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "eb-general")]
    EbGeneral,
    #[serde(rename = "eb-cond1")]
    EbCond1,
    #[serde(rename = "eb-cond2")]
    EbCond2,
    #[serde(rename = "cq")]
    Cq,
    #[serde(rename = "qc")]
    Qc,
    #[serde(rename = "cp-general")]
    CpGeneral,
}

impl Family {
    pub const ALL: [Family; 6] =
        [Family::EbGeneral, Family::EbCond1, Family::EbCond2, Family::Cq, Family::Qc, Family::CpGeneral];

    pub fn name(&self) -> &'static str {
        match self {
            Family::EbGeneral => "eb-general",
            Family::EbCond1 => "eb-cond1",
            Family::EbCond2 => "eb-cond2",
            Family::Cq => "cq",
            Family::Qc => "qc",
            Family::CpGeneral => "cp-general",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .map_or_else(|| input(format!("unknown family '{s}'")), Ok)
    }
}

/// Draws (Φ, Ω) for one trial: dimensions and N from {2, 3}, Ω a
/// trace-preserving qubit channel with 1 to 4 Kraus operators.
pub fn draw_trial(family: Family, trial_seed: u64) -> Result<(SuperOp, SuperOp)> {
    let mut rng = rng_from_seed(trial_seed);
    let d_in = rng.random_range(2..=3);
    let d_out = rng.random_range(2..=3);
    let n = rng.random_range(2..=3);
    let n_kraus = rng.random_range(1..=4);
    let phi_seed = derive_seed(trial_seed, 1);
    let phi: SuperOp = match family {
        Family::EbGeneral => random_eb(d_in, d_out, n, EbClass::General, phi_seed)?.into(),
        Family::EbCond1 => random_eb(d_in, d_out, n, EbClass::Cond1, phi_seed)?.into(),
        Family::EbCond2 => random_eb(d_in, d_out, n, EbClass::Cond2, phi_seed)?.into(),
        Family::Cq => random_eb(d_in, d_out, n, EbClass::Cq, phi_seed)?.into(),
        Family::Qc => random_eb(d_in, d_out, n, EbClass::Qc, phi_seed)?.into(),
        Family::CpGeneral => random_cp_kraus(d_in, d_out, n, phi_seed, true)?.into(),
    };
    let omega = random_cp_kraus(2, 2, n_kraus, derive_seed(trial_seed, 2), true)?.into();
    Ok((phi, omega))
}

/// Seeded search for multiplicativity violations. Returns every trial's
/// report, highest ratio first (ties by trial index); reports still above
/// the candidate threshold after budget escalation carry `candidate = true`.
pub fn violation_search(
    family: Family,
    query: NormQuery,
    n_trials: usize,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<Vec<MultiplicativityReport>> {
    let reports: Vec<Result<MultiplicativityReport>> = par::map_indexed(n_trials, |t| {
        let trial_seed = derive_seed(seed, t as u64);
        let (phi, omega) = draw_trial(family, trial_seed)?;
        let mut report = product_norm_test_escalating(&phi, &omega, query, &cfg.with_seed(trial_seed))?;
        report.family = Some(family);
        report.trial = Some(t);
        Ok(report)
    });
    let mut reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then(a.trial.cmp(&b.trial)));
    Ok(reports)
}

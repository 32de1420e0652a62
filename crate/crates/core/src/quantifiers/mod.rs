//! Prevalence estimators.
//!
//! All estimators share the factorization of the test distribution of
//! classifier outputs into a prevalence-weighted mixture of class-conditional
//! output distributions. They differ in the summary used for the outputs
//! (hard counts, mean posteriors, histograms, kernel densities) and in how
//! the resulting system is solved.

mod count;
mod histogram;
mod kdey;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::PosteriorMatrix;
use crate::kernels::{KernelConfig, VertexKernel};
use crate::sis::ClassWeights;
use crate::{Error, Prevalence, Result};

pub use count::{acc_adjust, cc, pcc, AccFit, PaccFit};
pub use histogram::{
    dm_histogram_multiclass, hdy_binary, hellinger, Aggregation, DmHistogramFit, HdyFit, DEFAULT_BINS,
};
pub use kdey::{
    em_proportions, kdey_ml_solve, kdey_ml_solve_pg, negative_log_likelihood, KdeyFit, KdeySolution, DEFAULT_SIGMA,
    DENSITY_FLOOR,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Grid resolution of the binary HDy search.
    pub grid: usize,
    /// Reserved for Monte-Carlo divergences; unused by the implemented solvers.
    pub mc_draws: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 1000,
            tol: 1e-10,
            seed: 0,
            grid: 1000,
            mc_draws: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::param("solver.max_iters", "must be >= 1"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::param("solver.tol", "must be > 0"));
        }
        if self.grid == 0 {
            return Err(Error::param("solver.grid", "must be >= 1"));
        }
        Ok(())
    }
}

/// Non-fatal conditions attached to an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// The class-conditional summaries do not determine the prevalence.
    Unidentifiable,
    /// Some test point had zero density under every class.
    DensityFloor,
    /// A class had zero total importance weight; uniform weights were used.
    SisFallback,
    /// A test sample is smaller than requested.
    ShortSample,
    NotConverged,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::Unidentifiable => "unidentifiable",
            Flag::DensityFloor => "density_floor",
            Flag::SisFallback => "sis_fallback",
            Flag::ShortSample => "short_sample",
            Flag::NotConverged => "not_converged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub prevalence: Prevalence,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantifierKind {
    Cc,
    Pcc,
    Acc,
    Pacc,
    Hdy,
    DmHistogram,
    Kdey,
}

impl QuantifierKind {
    pub fn accepts_weights(self) -> bool {
        matches!(self, QuantifierKind::Pacc | QuantifierKind::Kdey)
    }
}

impl FromStr for QuantifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "cc" => QuantifierKind::Cc,
            "pcc" => QuantifierKind::Pcc,
            "acc" => QuantifierKind::Acc,
            "pacc" => QuantifierKind::Pacc,
            "hdy" => QuantifierKind::Hdy,
            "dm-hist" | "dm" => QuantifierKind::DmHistogram,
            "kdey" | "kdey-ml" => QuantifierKind::Kdey,
            other => return Err(Error::param("kind", format!("unknown quantifier kind {other:?}"))),
        })
    }
}

/// Importance-weighting settings: the test-density kernel (flattened), the
/// training-density kernel (constant unless given) and the ratio floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SisConfig {
    #[serde(flatten)]
    pub kernel: KernelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_kernel: Option<KernelConfig>,
}

impl SisConfig {
    pub fn q_kernel(&self) -> Result<VertexKernel> {
        self.kernel.to_kernel()
    }

    pub fn p_kernel(&self) -> Result<VertexKernel> {
        self.p_kernel
            .as_ref()
            .map_or(Ok(VertexKernel::Constant), KernelConfig::to_kernel)
    }

    pub fn floor(&self) -> f64 {
        self.floor.unwrap_or(crate::sis::DEFAULT_FLOOR)
    }
}

/// JSON form:
/// `{"kind","sigma","bins","aggregation","solver":{..},"sis":{..}}`, plus an
/// optional display `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantifierConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<Aggregation>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sis: Option<SisConfig>,
}

impl QuantifierConfig {
    pub fn of_kind(kind: &str) -> Self {
        QuantifierConfig {
            kind: kind.into(),
            name: None,
            sigma: None,
            bins: None,
            aggregation: None,
            solver: SolverConfig::default(),
            sis: None,
        }
    }

    pub fn kind(&self) -> Result<QuantifierKind> {
        self.kind.parse()
    }

    /// Name used in result tables, e.g. `KDEy+SIS`.
    pub fn display_name(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let base = match self.kind() {
            Ok(QuantifierKind::Cc) => "CC".to_string(),
            Ok(QuantifierKind::Pcc) => "PCC".to_string(),
            Ok(QuantifierKind::Acc) => "ACC".to_string(),
            Ok(QuantifierKind::Pacc) => "PACC".to_string(),
            Ok(QuantifierKind::Hdy) => "HDy".to_string(),
            Ok(QuantifierKind::DmHistogram) => match self.aggregation.unwrap_or(Aggregation::Concat) {
                Aggregation::Concat => "DM-HD-concat".to_string(),
                Aggregation::Average => "DM-HD-avg".to_string(),
            },
            Ok(QuantifierKind::Kdey) => "KDEy".to_string(),
            Err(_) => self.kind.clone(),
        };
        if self.sis.is_some() {
            format!("{base}+SIS")
        } else {
            base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        self.solver.validate()?;
        if let Some(sis) = &self.sis {
            if !kind.accepts_weights() {
                return Err(Error::param(
                    "sis",
                    format!("quantifier {:?} does not accept SIS weights", self.kind),
                ));
            }
            sis.q_kernel()?;
            sis.p_kernel()?;
        }
        Ok(())
    }
}

/// A quantifier with its class-conditional summaries estimated.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedQuantifier {
    Cc { k: usize },
    Pcc { k: usize },
    Acc(AccFit, SolverConfig),
    Pacc(PaccFit, SolverConfig),
    Hdy(HdyFit, SolverConfig),
    DmHistogram(DmHistogramFit, SolverConfig),
    Kdey(KdeyFit, SolverConfig),
}

impl FittedQuantifier {
    pub fn quantify(&self, test: &PosteriorMatrix) -> Result<Outcome> {
        let plain = |p: Prevalence| Outcome {
            prevalence: p,
            flags: Vec::new(),
        };
        match self {
            FittedQuantifier::Cc { k } => Ok(plain(cc(&test.hard_predictions(), *k)?)),
            FittedQuantifier::Pcc { .. } => Ok(plain(pcc(test)?)),
            FittedQuantifier::Acc(fit, cfg) => fit.quantify(&test.hard_predictions(), cfg),
            FittedQuantifier::Pacc(fit, cfg) => fit.quantify(test, cfg),
            FittedQuantifier::Hdy(fit, cfg) => fit.quantify(test, cfg.grid),
            FittedQuantifier::DmHistogram(fit, cfg) => fit.quantify(test, cfg),
            FittedQuantifier::Kdey(fit, cfg) => fit.quantify(test, cfg),
        }
    }
}

/// Fits the quantifier described by `cfg` on training posteriors and labels.
/// Importance `weights` are accepted by the PACC and KDEy kinds only.
pub fn make_quantifier(
    cfg: &QuantifierConfig,
    train: &PosteriorMatrix,
    labels: &[usize],
    weights: Option<&ClassWeights>,
) -> Result<FittedQuantifier> {
    let kind = cfg.kind()?;
    cfg.solver.validate()?;
    if weights.is_some() && !kind.accepts_weights() {
        return Err(Error::param(
            "sis",
            format!("quantifier {:?} does not accept SIS weights", cfg.kind),
        ));
    }
    let k = train.num_classes();
    let solver = cfg.solver.clone();
    Ok(match kind {
        QuantifierKind::Cc => FittedQuantifier::Cc { k },
        QuantifierKind::Pcc => FittedQuantifier::Pcc { k },
        QuantifierKind::Acc => FittedQuantifier::Acc(AccFit::fit(&train.hard_predictions(), labels, k)?, solver),
        QuantifierKind::Pacc => FittedQuantifier::Pacc(PaccFit::fit(train, labels, weights)?, solver),
        QuantifierKind::Hdy => {
            FittedQuantifier::Hdy(HdyFit::fit(train, labels, cfg.bins.unwrap_or(DEFAULT_BINS))?, solver)
        }
        QuantifierKind::DmHistogram => FittedQuantifier::DmHistogram(
            DmHistogramFit::fit(
                train,
                labels,
                cfg.bins.unwrap_or(DEFAULT_BINS),
                cfg.aggregation.unwrap_or(Aggregation::Concat),
            )?,
            solver,
        ),
        QuantifierKind::Kdey => FittedQuantifier::Kdey(
            KdeyFit::fit(train, labels, cfg.sigma.unwrap_or(DEFAULT_SIGMA), weights)?,
            solver,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train() -> (PosteriorMatrix, Vec<usize>) {
        (
            PosteriorMatrix::new(vec![vec![0.9, 0.1], vec![0.7, 0.3], vec![0.2, 0.8], vec![0.4, 0.6]], 2).unwrap(),
            vec![0, 0, 1, 1],
        )
    }

    #[test]
    fn pcc_kind_is_mean() {
        let (tr, y) = train();
        let fq = make_quantifier(&QuantifierConfig::of_kind("pcc"), &tr, &y, None).unwrap();
        let test = PosteriorMatrix::new(vec![vec![0.2, 0.8], vec![0.6, 0.4]], 2).unwrap();
        let q = fq.quantify(&test).unwrap().prevalence;
        assert!((q[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn unknown_kind_and_misplaced_weights() {
        let (tr, y) = train();
        assert!(make_quantifier(&QuantifierConfig::of_kind("qmm"), &tr, &y, None).is_err());
        let w = ClassWeights::uniform(&y, 2).unwrap();
        for kind in ["cc", "pcc", "hdy", "acc", "dm-hist"] {
            assert!(make_quantifier(&QuantifierConfig::of_kind(kind), &tr, &y, Some(&w)).is_err());
        }
        assert!(make_quantifier(&QuantifierConfig::of_kind("kdey"), &tr, &y, Some(&w)).is_ok());
    }

    #[test]
    fn config_json() {
        let cfg: QuantifierConfig = serde_json::from_str(
            r#"{"kind":"kdey","sigma":0.05,"solver":{"max_iters":50},
                "sis":{"kind":"interpolated-ppr","lambda_mix":0.9,"floor":1e-9}}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.display_name(), "KDEy+SIS");
        assert_eq!(cfg.solver.max_iters, 50);
        assert_eq!(cfg.solver.tol, 1e-10);
        let sis = cfg.sis.unwrap();
        assert_eq!(sis.floor(), 1e-9);
        assert_eq!(sis.p_kernel().unwrap(), VertexKernel::Constant);

        let bad: QuantifierConfig = serde_json::from_str(r#"{"kind":"hdy","sis":{"kind":"constant"}}"#).unwrap();
        assert!(bad.validate().is_err());
    }
}

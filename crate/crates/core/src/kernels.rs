//! Vertex affinity kernels backing the structural density estimates.
//!
//! Kernels are evaluated lazily on a `sources × targets` slice. The PPR kernel
//! is `Π = (αI + (1−α)Ā)^L` with `Ā = A D⁻¹`; column `t` of `Π` is obtained by
//! pushing the indicator of `t` through `L` sparse lazy-walk steps, so `Π` is
//! never materialized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Graph, Result};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_STEPS: usize = 10;
pub const DEFAULT_LAMBDA_SP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VertexKernel {
    /// `κ(x, x′) = Π[x, x′]`.
    Ppr {
        alpha: f64,
        steps: usize,
    },
    /// `κ(x, x′) = exp(−λ·d_SP(x, x′))`, zero when unreachable.
    ShortestPath {
        lambda: f64,
    },
    /// `κ(x, x′) = λ_mix·Π[x, x′] + (1 − λ_mix)`.
    InterpolatedPpr {
        alpha: f64,
        steps: usize,
        lambda_mix: f64,
    },
    Constant,
}

impl VertexKernel {
    pub fn validate(&self) -> Result<()> {
        let check_ppr = |alpha: f64, steps: usize| {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::param("alpha", format!("must lie in (0,1), got {alpha}")));
            }
            if steps == 0 {
                return Err(Error::param("steps", "must be >= 1"));
            }
            Ok(())
        };
        match *self {
            VertexKernel::Ppr { alpha, steps } => check_ppr(alpha, steps),
            VertexKernel::ShortestPath { lambda } => {
                if lambda > 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("lambda_sp", format!("must be > 0, got {lambda}")))
                }
            }
            VertexKernel::InterpolatedPpr {
                alpha,
                steps,
                lambda_mix,
            } => {
                check_ppr(alpha, steps)?;
                if (0.0..=1.0).contains(&lambda_mix) {
                    Ok(())
                } else {
                    Err(Error::param(
                        "lambda_mix",
                        format!("must lie in [0,1], got {lambda_mix}"),
                    ))
                }
            }
            VertexKernel::Constant => Ok(()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, VertexKernel::Constant)
    }

    /// Evaluates `κ(sources[i], targets[j])` for all pairs.
    ///
    /// Columns are computed independently (in parallel); each column is a
    /// sequential computation, so the result does not depend on thread count.
    pub fn evaluate(&self, g: &Graph, sources: &[usize], targets: &[usize]) -> Result<KernelSlice> {
        self.validate()?;
        let n = g.num_nodes();
        if let Some(&bad) = sources.iter().chain(targets).find(|&&u| u >= n) {
            return Err(Error::InvalidInput(format!("node {bad} out of range")));
        }
        let columns: Vec<Vec<f64>> = match *self {
            VertexKernel::Constant => vec![vec![1.0; sources.len()]; targets.len()],
            VertexKernel::Ppr { alpha, steps } => targets
                .par_iter()
                .map(|&t| {
                    let col = ppr_column(g, t, alpha, steps);
                    sources.iter().map(|&s| col[s]).collect()
                })
                .collect(),
            VertexKernel::InterpolatedPpr {
                alpha,
                steps,
                lambda_mix,
            } => targets
                .par_iter()
                .map(|&t| {
                    let col = ppr_column(g, t, alpha, steps);
                    sources
                        .iter()
                        .map(|&s| lambda_mix * col[s] + (1.0 - lambda_mix))
                        .collect()
                })
                .collect(),
            VertexKernel::ShortestPath { lambda } => targets
                .par_iter()
                .map(|&t| {
                    let dist = g.bfs_distances(t);
                    sources
                        .iter()
                        .map(|&s| dist[s].map_or(0.0, |d| (-lambda * d as f64).exp()))
                        .collect()
                })
                .collect(),
        };
        let values = (0..sources.len())
            .map(|i| columns.iter().map(|col| col[i]).collect())
            .collect();
        Ok(KernelSlice {
            sources: sources.to_vec(),
            targets: targets.to_vec(),
            values,
        })
    }
}

/// Column `t` of `(αI + (1−α)Ā)^steps` over all nodes.
pub fn ppr_column(g: &Graph, t: usize, alpha: f64, steps: usize) -> Vec<f64> {
    let mut e = vec![0.0; g.num_nodes()];
    e[t] = 1.0;
    g.lazy_walk(&e, alpha, steps)
}

/// Kernel values on a `sources × targets` block, `values[i][j] = κ(sources[i], targets[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSlice {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl KernelSlice {
    /// Mean over targets for each source.
    pub fn row_means(&self) -> Vec<f64> {
        let m = self.targets.len() as f64;
        self.values.iter().map(|row| row.iter().sum::<f64>() / m).collect()
    }
}

pub fn ppr_kernel(g: &Graph, alpha: f64, steps: usize, sources: &[usize], targets: &[usize]) -> Result<KernelSlice> {
    VertexKernel::Ppr { alpha, steps }.evaluate(g, sources, targets)
}

pub fn sp_kernel(g: &Graph, lambda: f64, sources: &[usize], targets: &[usize]) -> Result<KernelSlice> {
    VertexKernel::ShortestPath { lambda }.evaluate(g, sources, targets)
}

pub fn interpolated_ppr(
    g: &Graph,
    alpha: f64,
    steps: usize,
    lambda_mix: f64,
    sources: &[usize],
    targets: &[usize],
) -> Result<KernelSlice> {
    VertexKernel::InterpolatedPpr {
        alpha,
        steps,
        lambda_mix,
    }
    .evaluate(g, sources, targets)
}

/// JSON form: `{"kind","alpha","steps","lambda_sp","lambda_mix"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_sp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_mix: Option<f64>,
}

impl KernelConfig {
    pub fn constant() -> Self {
        KernelConfig {
            kind: "constant".into(),
            alpha: None,
            steps: None,
            lambda_sp: None,
            lambda_mix: None,
        }
    }

    pub fn to_kernel(&self) -> Result<VertexKernel> {
        let alpha = self.alpha.unwrap_or(DEFAULT_ALPHA);
        let steps = self.steps.unwrap_or(DEFAULT_STEPS);
        let kernel = match self.kind.as_str() {
            "ppr" => VertexKernel::Ppr { alpha, steps },
            "sp" => VertexKernel::ShortestPath {
                lambda: self.lambda_sp.unwrap_or(DEFAULT_LAMBDA_SP),
            },
            "interpolated-ppr" => VertexKernel::InterpolatedPpr {
                alpha,
                steps,
                lambda_mix: self
                    .lambda_mix
                    .ok_or_else(|| Error::param("lambda_mix", "required for interpolated-ppr"))?,
            },
            "constant" => VertexKernel::Constant,
            other => return Err(Error::param("kind", format!("unknown kernel kind {other:?}"))),
        };
        kernel.validate()?;
        Ok(kernel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges, None, None).unwrap()
    }

    #[test]
    fn two_node_path_half_everywhere() {
        let s = ppr_kernel(&path(2), 0.5, 1, &[0, 1], &[0, 1]).unwrap();
        for row in &s.values {
            for &v in row {
                assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn disconnected_pair_is_zero() {
        let g = Graph::new(4, &[(0, 1), (2, 3)], None, None).unwrap();
        let s = ppr_kernel(&g, 0.3, 7, &[0, 1], &[2, 3]).unwrap();
        assert!(s.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn sp_values() {
        let g = path(3);
        let s = sp_kernel(&g, 0.5, &[0, 2], &[0]).unwrap();
        assert_eq!(s.values[0][0], 1.0);
        assert_abs_diff_eq!(s.values[1][0], (-1.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.values[1][0], 0.3679, epsilon = 1e-4);
        let g = Graph::new(3, &[(0, 1)], None, None).unwrap();
        assert_eq!(sp_kernel(&g, 0.5, &[2], &[0]).unwrap().values[0][0], 0.0);
    }

    #[test]
    fn interpolation_endpoints() {
        let g = path(4);
        let all: Vec<usize> = (0..4).collect();
        let ppr = ppr_kernel(&g, 0.1, 3, &all, &all).unwrap();
        let one = interpolated_ppr(&g, 0.1, 3, 1.0, &all, &all).unwrap();
        let zero = interpolated_ppr(&g, 0.1, 3, 0.0, &all, &all).unwrap();
        assert_eq!(ppr.values, one.values);
        assert!(zero.values.iter().flatten().all(|&v| v == 1.0));
        let g = Graph::new(2, &[], None, None).unwrap();
        let s = interpolated_ppr(&g, 0.1, 3, 0.9, &[0], &[1]).unwrap();
        assert_abs_diff_eq!(s.values[0][0], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn constant_is_one() {
        let g = path(3);
        let s = VertexKernel::Constant.evaluate(&g, &[0, 1], &[2]).unwrap();
        assert_eq!(s.values, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn config_parsing() {
        let cfg: KernelConfig = serde_json::from_str(r#"{"kind":"interpolated-ppr","lambda_mix":0.9}"#).unwrap();
        assert_eq!(
            cfg.to_kernel().unwrap(),
            VertexKernel::InterpolatedPpr {
                alpha: 0.1,
                steps: 10,
                lambda_mix: 0.9
            }
        );
        let bad: KernelConfig = serde_json::from_str(r#"{"kind":"ppr","alpha":1.5}"#).unwrap();
        assert!(matches!(bad.to_kernel(), Err(Error::InvalidParameter { key, .. }) if key == "alpha"));
        let unknown: KernelConfig = serde_json::from_str(r#"{"kind":"heat"}"#).unwrap();
        assert!(unknown.to_kernel().is_err());
    }
}

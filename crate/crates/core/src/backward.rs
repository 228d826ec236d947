//! Pairwise backward Riccati recursions and their definiteness certificates.
//!
//! For a pair of models `(i, j)` the stationary filters form the closed-loop
//! system `x+ = F^ij x + K^ij y` with `F^ij = diag(F_i - K_i H_i, F_j - K_j H_j)`
//! and `K^ij = [K_i; K_j]`. The backward recursion
//!
//! ```text
//! X_t = K^T T_{t+1} K + (R~_i^-1 + R~_j^-1)
//! L_t = X_t^-1 (K^T T_{t+1} F - [R~_i^-1 H_i, R~_j^-1 H_j])
//! T_t = F^T T_{t+1} F - L_t^T X_t L_t + diag(H_i^T R~_i^-1 H_i, H_j^T R~_j^-1 H_j)
//! ```
//!
//! computes the cost-to-go `x^T T_t x` of minimizing the accumulated filter
//! residuals plus the terminal penalty over the remaining outputs. That
//! minimum is finite exactly when every `X_t` is positive definite, which is
//! the convention every certificate records.

use crate::error::{Error, Result};
use crate::forward::StationarySolution;
use crate::linalg::{
    block_diag, hstack, is_numerically_invertible, is_positive_definite, vstack, Matrix, SymMatrix,
    Vector,
};
use crate::model::ValidatedModelSet;

/// One-step quadratic data of a linear system driven by the output sequence:
/// state update `x+ = F x + K y`, stage cost `x^T Q x + 2 y^T N x + y^T R y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrStage {
    pub f: Matrix,
    pub k: Matrix,
    pub q: SymMatrix,
    pub n: Matrix,
    pub r: SymMatrix,
}

/// Output of one backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardStep {
    pub x: SymMatrix,
    pub l: Matrix,
    pub t: SymMatrix,
}

impl LqrStage {
    /// `X = K^T T K + R`, `L = X^-1 (K^T T F + N)`, `T = F^T T F + Q - L^T X L`.
    ///
    /// `t` is reported in `SingularX` and should be the time index of `X`.
    pub fn step(&self, t_next: &SymMatrix, t: usize) -> Result<BackwardStep> {
        let tn = t_next.as_matrix();
        let kt_t = self.k.transpose() * tn;
        let x = SymMatrix::new(&kt_t * &self.k + self.r.as_matrix());
        if !x.is_finite() || !is_numerically_invertible(x.as_matrix()) {
            return Err(Error::SingularX { t });
        }
        let rhs = &kt_t * &self.f + &self.n;
        let l = x
            .as_matrix()
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularX { t })?;
        let t_new = self.f.transpose() * tn * &self.f + self.q.as_matrix()
            - l.transpose() * x.as_matrix() * &l;
        Ok(BackwardStep {
            x,
            l,
            t: SymMatrix::new(t_new),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }
}

/// Closed loop of a pair of stationary Kalman filters.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSystem {
    pub i: usize,
    pub j: usize,
    pub fij: Matrix,
    pub kij: Matrix,
    pub h_i: Matrix,
    pub h_j: Matrix,
    pub rtilde_inv_i: SymMatrix,
    pub rtilde_inv_j: SymMatrix,
    stage: LqrStage,
}

impl PairSystem {
    pub fn stage(&self) -> &LqrStage {
        &self.stage
    }

    pub fn state_dim(&self) -> usize {
        self.fij.nrows()
    }
}

fn check_index(index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::IndexOutOfRange { index, len });
    }
    Ok(())
}

/// Assembles `F^ij`, `K^ij` and the residual weights of the pair `(i, j)`
/// (zero-based). `i == j` is allowed.
pub fn build_pair(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    i: usize,
    j: usize,
) -> Result<PairSystem> {
    let len = set.len().min(stat.len());
    check_index(i, len)?;
    check_index(j, len)?;
    let (mi, mj) = (set.model(i)?, set.model(j)?);
    let (si, sj) = (&stat[i], &stat[j]);
    let ai = si.closed_loop(mi);
    let aj = sj.closed_loop(mj);
    let fij = block_diag(&[&ai, &aj]);
    let kij = vstack(&[&si.k, &sj.k]);
    let wi = si.rtilde_inv.as_matrix();
    let wj = sj.rtilde_inv.as_matrix();
    let stage = LqrStage {
        f: fij.clone(),
        k: kij.clone(),
        q: SymMatrix::new(block_diag(&[
            &(mi.h.transpose() * wi * &mi.h),
            &(mj.h.transpose() * wj * &mj.h),
        ])),
        n: -hstack(&[&(wi * &mi.h), &(wj * &mj.h)]),
        r: SymMatrix::new(wi + wj),
    };
    Ok(PairSystem {
        i,
        j,
        fij,
        kij,
        h_i: mi.h.clone(),
        h_j: mj.h.clone(),
        rtilde_inv_i: si.rtilde_inv.clone(),
        rtilde_inv_j: sj.rtilde_inv.clone(),
        stage,
    })
}

/// One step of the pairwise recursion from `T_{t+1}`.
pub fn backward_step(pair: &PairSystem, t_next: &SymMatrix) -> Result<BackwardStep> {
    if t_next.dim() != pair.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "terminal matrix is {0}x{0}, pair state is {1}",
            t_next.dim(),
            pair.state_dim()
        )));
    }
    pair.stage.step(t_next, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TerminalKind {
    /// Upper-bound terminal condition built from a lower weight `Qunder`.
    Sufficient,
    /// Lower-bound terminal condition from the pair average.
    Necessary,
}

impl std::fmt::Display for TerminalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TerminalKind::Sufficient => "sufficient",
            TerminalKind::Necessary => "necessary",
        })
    }
}

impl std::str::FromStr for TerminalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sufficient" | "upper" => Ok(TerminalKind::Sufficient),
            "necessary" | "lower" => Ok(TerminalKind::Necessary),
            other => Err(Error::InvalidArgument(format!(
                "unknown terminal kind `{other}`"
            ))),
        }
    }
}

/// Terminal matrix `T_N` together with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCondition {
    pub kind: TerminalKind,
    pub gamma: f64,
    pub matrix: SymMatrix,
}

/// Certificates record which sign of `X_t` means a finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    /// The value is finite iff every `X_t` is positive definite.
    FiniteIffPositiveDefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    AllDefinite,
    /// First time index (counting down from `N - 1`) at which `X_t` is not
    /// positive definite or not invertible.
    FailsAt(usize),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::AllDefinite)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCertificate {
    pub i: usize,
    pub j: usize,
    pub gamma: f64,
    pub terminal_kind: TerminalKind,
    pub horizon: usize,
    /// `T_0`, present only when every step passed.
    pub t0: Option<SymMatrix>,
    /// `X_t` for `t = N-1, N-2, ...` up to the first failure.
    pub x_trace: Vec<SymMatrix>,
    pub verdict: Verdict,
    pub sign_convention: SignConvention,
}

impl PairCertificate {
    /// `-gamma^2 [x_i; x_j]^T T_0 [x_i; x_j]`, without the factor one half.
    pub fn quadratic_value(&self, x_i: &Vector, x_j: &Vector) -> Option<f64> {
        let t0 = self.t0.as_ref()?;
        let v = crate::linalg::vstack_vectors(&[x_i, x_j]);
        Some(-self.gamma * self.gamma * t0.quad_form(&v))
    }
}

fn max_eig_p(stat: &[StationarySolution]) -> f64 {
    stat.iter()
        .map(|s| s.p.max_eigenvalue())
        .fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn check_feasible(stat: &[StationarySolution], gamma: f64) -> Result<()> {
    let top = max_eig_p(stat);
    if !(gamma.is_finite() && gamma * gamma > top) {
        return Err(Error::InfeasibleGamma {
            gamma,
            floor: top.max(0.0).sqrt(),
        });
    }
    Ok(())
}

fn difference_block(w: &Matrix, gamma: f64) -> SymMatrix {
    let n = w.nrows();
    let mut t = Matrix::zeros(2 * n, 2 * n);
    t.view_mut((0, 0), (n, n)).copy_from(&(-w));
    t.view_mut((n, n), (n, n)).copy_from(&(-w));
    t.view_mut((0, n), (n, n)).copy_from(w);
    t.view_mut((n, 0), (n, n)).copy_from(w);
    SymMatrix::new(t / (gamma * gamma))
}

/// Largest multiple of the identity dominated by every `I - gamma^-2 P_k`.
pub fn default_qunder(stat: &[StationarySolution], gamma: f64) -> Result<SymMatrix> {
    check_feasible(stat, gamma)?;
    let n = stat.first().map_or(0, |s| s.p.dim());
    let top = max_eig_p(stat);
    Ok(SymMatrix::identity(n).scale(1.0 - top / (gamma * gamma)))
}

/// Upper-bound terminal condition
/// `T_N = -[[Qu^-1, -Qu^-1], [-Qu^-1, Qu^-1]] / gamma^2`.
///
/// `qunder` defaults to [`default_qunder`]; a supplied weight must be
/// positive definite and satisfy `Qunder <= I - gamma^-2 P_k` for every `k`.
pub fn terminal_sufficient(
    stat: &[StationarySolution],
    i: usize,
    j: usize,
    gamma: f64,
    qunder: Option<&SymMatrix>,
) -> Result<TerminalCondition> {
    check_index(i, stat.len())?;
    check_index(j, stat.len())?;
    check_feasible(stat, gamma)?;
    let qu = match qunder {
        Some(q) => {
            let n = stat[0].p.dim();
            if q.dim() != n {
                return Err(Error::DimensionMismatch(format!(
                    "Qunder is {0}x{0}, state dimension is {n}",
                    q.dim()
                )));
            }
            if !is_positive_definite(q, 0.0)? {
                return Err(Error::InvalidQunder { model: i });
            }
            for (k, s) in stat.iter().enumerate() {
                let gap = &(&SymMatrix::identity(n) - &s.p.scale(1.0 / (gamma * gamma))) - q;
                if gap.min_eigenvalue() < -1e-12 {
                    return Err(Error::InvalidQunder { model: k });
                }
            }
            q.clone()
        }
        None => default_qunder(stat, gamma)?,
    };
    let inv = qu.spd_inverse().ok_or(Error::InvalidQunder { model: i })?;
    Ok(TerminalCondition {
        kind: TerminalKind::Sufficient,
        gamma,
        matrix: difference_block(inv.as_matrix(), gamma),
    })
}

/// Lower-bound terminal condition with `Q^ij = (2I - gamma^-2 (P_i + P_j))^-1`.
pub fn terminal_necessary(
    stat: &[StationarySolution],
    i: usize,
    j: usize,
    gamma: f64,
) -> Result<TerminalCondition> {
    check_index(i, stat.len())?;
    check_index(j, stat.len())?;
    check_feasible(stat, gamma)?;
    let n = stat[i].p.dim();
    let sum = &stat[i].p + &stat[j].p;
    let base = &SymMatrix::identity(n).scale(2.0) - &sum.scale(1.0 / (gamma * gamma));
    let qij = base.spd_inverse().ok_or(Error::InfeasibleGamma {
        gamma,
        floor: max_eig_p(stat).sqrt(),
    })?;
    Ok(TerminalCondition {
        kind: TerminalKind::Necessary,
        gamma,
        matrix: difference_block(qij.as_matrix(), gamma),
    })
}

/// Runs the recursion `horizon` times from `terminal` and records the
/// definiteness of every `X_t` at absolute tolerance `tol`.
pub fn run_backward(
    pair: &PairSystem,
    terminal: &TerminalCondition,
    horizon: usize,
    tol: f64,
) -> Result<PairCertificate> {
    if terminal.matrix.dim() != pair.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "terminal matrix is {0}x{0}, pair state is {1}",
            terminal.matrix.dim(),
            pair.state_dim()
        )));
    }
    let run = run_stage(&pair.stage, &terminal.matrix, horizon, tol)?;
    Ok(PairCertificate {
        i: pair.i,
        j: pair.j,
        gamma: terminal.gamma,
        terminal_kind: terminal.kind,
        horizon,
        t0: run.t0,
        x_trace: run.x_trace,
        verdict: run.verdict,
        sign_convention: SignConvention::FiniteIffPositiveDefinite,
    })
}

pub(crate) struct StageRun {
    pub t0: Option<SymMatrix>,
    pub x_trace: Vec<SymMatrix>,
    pub verdict: Verdict,
}

pub(crate) fn run_stage(
    stage: &LqrStage,
    terminal: &SymMatrix,
    horizon: usize,
    tol: f64,
) -> Result<StageRun> {
    let mut t_cur = terminal.clone();
    let mut x_trace = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let step = match stage.step(&t_cur, t) {
            Ok(s) => s,
            Err(Error::SingularX { .. }) => {
                return Ok(StageRun {
                    t0: None,
                    x_trace,
                    verdict: Verdict::FailsAt(t),
                })
            }
            Err(e) => return Err(e),
        };
        let pd = is_positive_definite(&step.x, tol)?;
        x_trace.push(step.x);
        if !pd {
            return Ok(StageRun {
                t0: None,
                x_trace,
                verdict: Verdict::FailsAt(t),
            });
        }
        t_cur = step.t;
    }
    Ok(StageRun {
        t0: Some(t_cur),
        x_trace,
        verdict: Verdict::AllDefinite,
    })
}

//! Bounds on the optimal performance level `gamma*_N`.
//!
//! A level `gamma` is certified as an upper bound when every pairwise
//! recursion started from the sufficient terminal condition keeps `X_t`
//! positive definite; it is certified as a strict lower bound when some pair
//! started from the necessary terminal condition loses definiteness. Both
//! predicates are bisected in `gamma` above the feasibility floor
//! `sqrt(max_i lambda_max(P_i))`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::backward::{
    build_pair, run_backward, terminal_necessary, terminal_sufficient, PairCertificate,
};
use crate::error::{Error, Result};
use crate::forward::StationarySolution;
use crate::linalg::{SymMatrix, DEFAULT_PD_TOL};
use crate::model::ValidatedModelSet;

pub const DEFAULT_GAMMA_TOL: f64 = 1e-3;
pub const DEFAULT_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsOptions {
    /// Bisection half-width on `gamma`.
    pub tol: f64,
    /// Largest `gamma` probed before giving up on an upper bound.
    pub cap: f64,
    /// Absolute eigenvalue floor for the definiteness of `X_t`.
    pub pd_tol: f64,
    /// Lower weight for the sufficient terminal condition. `None` uses the
    /// largest feasible multiple of the identity at each probed `gamma`.
    pub qunder: Option<SymMatrix>,
}

impl Default for BoundsOptions {
    fn default() -> Self {
        BoundsOptions {
            tol: DEFAULT_GAMMA_TOL,
            cap: DEFAULT_CAP,
            pd_tol: DEFAULT_PD_TOL,
            qunder: None,
        }
    }
}

pub type CertificateMap = BTreeMap<(usize, usize), PairCertificate>;

/// `sqrt(max_i lambda_max(P_i))`; every feasible `gamma` exceeds it.
pub fn feasibility_floor(stat: &[StationarySolution]) -> f64 {
    stat.iter()
        .map(|s| s.p.max_eigenvalue())
        .fold(0.0, f64::max)
        .sqrt()
}

/// Unordered pairs `i <= j`, including `i == j`.
pub fn model_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientCheck {
    /// `gamma` is a valid upper bound on `gamma*_N`.
    pub holds: bool,
    pub certificates: CertificateMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessaryCheck {
    /// `gamma*_N > gamma`.
    pub violated: bool,
    pub certificates: CertificateMap,
}

fn certify_pairs<F>(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    horizon: usize,
    pd_tol: f64,
    terminal: F,
) -> Result<CertificateMap>
where
    F: Fn(usize, usize) -> Result<crate::backward::TerminalCondition> + Sync,
{
    model_pairs(set.len())
        .into_par_iter()
        .map(|(i, j)| {
            let pair = build_pair(set, stat, i, j)?;
            let term = terminal(i, j)?;
            Ok(((i, j), run_backward(&pair, &term, horizon, pd_tol)?))
        })
        .collect()
}

/// Checks the sufficient condition at `gamma` for every pair.
pub fn check_sufficient(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    gamma: f64,
    horizon: usize,
    qunder: Option<&SymMatrix>,
    pd_tol: f64,
) -> Result<SufficientCheck> {
    crate::backward::check_feasible(stat, gamma)?;
    let certificates = certify_pairs(set, stat, horizon, pd_tol, |i, j| {
        terminal_sufficient(stat, i, j, gamma, qunder)
    })?;
    let holds = certificates.values().all(|c| c.verdict.passed());
    Ok(SufficientCheck {
        holds,
        certificates,
    })
}

/// Checks the necessary condition at `gamma` for every pair.
pub fn check_necessary(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    gamma: f64,
    horizon: usize,
    pd_tol: f64,
) -> Result<NecessaryCheck> {
    crate::backward::check_feasible(stat, gamma)?;
    let certificates = certify_pairs(set, stat, horizon, pd_tol, |i, j| {
        terminal_necessary(stat, i, j, gamma)
    })?;
    let violated = certificates.values().any(|c| !c.verdict.passed());
    Ok(NecessaryCheck {
        violated,
        certificates,
    })
}

pub(crate) enum Search {
    /// The predicate already holds at the start of the bracket.
    AtStart(f64),
    /// `pred(lo)` is false, `pred(hi)` is true and `hi - lo <= tol`.
    Bracket { lo: f64, hi: f64 },
    /// The predicate is false up to and including the cap.
    Capped,
}

/// Smallest `gamma` at which a monotone (false, then true) predicate holds.
pub(crate) fn bisect_threshold<P>(floor: f64, tol: f64, cap: f64, pred: P) -> Result<Search>
where
    P: Fn(f64) -> Result<bool>,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let start = floor * (1.0 + tol);
    if start >= cap {
        return Ok(Search::Capped);
    }
    if pred(start)? {
        return Ok(Search::AtStart(start));
    }
    let mut lo = start;
    let mut hi = (2.0 * floor).max(start + tol);
    loop {
        if hi >= cap {
            if pred(cap)? {
                hi = cap;
                break;
            }
            return Ok(Search::Capped);
        }
        if pred(hi)? {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Search::Bracket { lo, hi })
}

/// Walks `[lo, hi]` in steps of `tol / 2` and fails if the predicate turns
/// false again after having held.
fn assert_monotone<P>(lo: f64, hi: f64, tol: f64, pred: P) -> Result<()>
where
    P: Fn(f64) -> Result<bool>,
{
    let step = tol / 2.0;
    let mut seen_true = false;
    let mut g = lo;
    loop {
        let at = g.min(hi);
        let v = pred(at)?;
        if seen_true && !v {
            return Err(Error::NonMonotone { lo, hi });
        }
        seen_true |= v;
        if at >= hi {
            break;
        }
        g += step;
    }
    if !seen_true {
        return Err(Error::NonMonotone { lo, hi });
    }
    Ok(())
}

fn sufficient_holds(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    horizon: usize,
    opts: &BoundsOptions,
    gamma: f64,
) -> Result<bool> {
    match check_sufficient(set, stat, gamma, horizon, opts.qunder.as_ref(), opts.pd_tol) {
        Ok(c) => Ok(c.holds),
        // a fixed lower weight that is not dominated at this gamma certifies nothing
        Err(Error::InvalidQunder { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Smallest certified upper bound on `gamma*_N`, to within `opts.tol`.
pub fn bisect_upper(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    horizon: usize,
    opts: &BoundsOptions,
) -> Result<f64> {
    let floor = feasibility_floor(stat);
    let pred = |g: f64| sufficient_holds(set, stat, horizon, opts, g);
    match bisect_threshold(floor, opts.tol, opts.cap, pred)? {
        Search::AtStart(g) => Ok(g),
        Search::Bracket { lo, hi } => {
            assert_monotone(lo, hi, opts.tol, pred)?;
            Ok(hi)
        }
        Search::Capped => Err(Error::NoUpperBound { cap: opts.cap }),
    }
}

/// Largest `gamma` (to within `opts.tol`) at which the necessary condition
/// is violated, so that `gamma*_N` exceeds it. Falls back to the feasibility
/// floor when no violation is found above it.
pub fn bisect_lower(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    horizon: usize,
    opts: &BoundsOptions,
) -> Result<f64> {
    let floor = feasibility_floor(stat);
    let pred = |g: f64| -> Result<bool> {
        Ok(!check_necessary(set, stat, g, horizon, opts.pd_tol)?.violated)
    };
    match bisect_threshold(floor, opts.tol, opts.cap, pred)? {
        Search::AtStart(_) => Ok(floor),
        Search::Bracket { lo, .. } => Ok(lo),
        Search::Capped => Ok(opts.cap),
    }
}

/// Floor, lower and upper bounds for one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaBounds {
    pub horizon: usize,
    pub gamma_floor: f64,
    pub gamma_lower: f64,
    pub gamma_upper: f64,
    pub tol: f64,
    /// Sufficient-condition certificates at `gamma_upper`.
    pub upper_certificates: CertificateMap,
    /// Necessary-condition certificates at `gamma_lower` (empty when the
    /// lower bound is the floor itself).
    pub lower_certificates: CertificateMap,
}

pub fn compute_bounds(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    horizon: usize,
    opts: &BoundsOptions,
) -> Result<GammaBounds> {
    let gamma_floor = feasibility_floor(stat);
    let gamma_lower = bisect_lower(set, stat, horizon, opts)?;
    let gamma_upper = bisect_upper(set, stat, horizon, opts)?;
    let upper_certificates = check_sufficient(
        set,
        stat,
        gamma_upper,
        horizon,
        opts.qunder.as_ref(),
        opts.pd_tol,
    )?
    .certificates;
    let lower_certificates = if gamma_lower > gamma_floor {
        check_necessary(set, stat, gamma_lower, horizon, opts.pd_tol)?.certificates
    } else {
        CertificateMap::new()
    };
    Ok(GammaBounds {
        horizon,
        gamma_floor,
        gamma_lower,
        gamma_upper,
        tol: opts.tol,
        upper_certificates,
        lower_certificates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Upper,
    Lower,
}

/// Bound on the game value `J*_N(x0_hat)` from passing certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueBound {
    pub kind: BoundKind,
    pub value: f64,
    pub maximizing_pair: (usize, usize),
}

/// `1/2 max_{i<=j} -gamma^2 [x_i; x_j]^T T_0^ij [x_i; x_j]` over the given
/// certificates, evaluated at the initial estimates of `set`.
pub fn value_bound_from_certificates(
    set: &ValidatedModelSet,
    certificates: &CertificateMap,
    kind: BoundKind,
) -> Result<ValueBound> {
    let x0 = set.x0_hats();
    let mut best: Option<ValueBound> = None;
    for (i, j) in model_pairs(set.len()) {
        let cert = certificates
            .get(&(i, j))
            .ok_or(Error::CertificateMissing { i, j })?;
        let v = cert
            .quadratic_value(&x0[i], &x0[j])
            .ok_or(Error::CertificateMissing { i, j })?
            * 0.5;
        if best.as_ref().map_or(true, |b| v > b.value) {
            best = Some(ValueBound {
                kind,
                value: v,
                maximizing_pair: (i, j),
            });
        }
    }
    best.ok_or(Error::EmptySet)
}

/// Runs the check of the requested kind at `gamma` and evaluates the value
/// bound; fails with `CertificateMissing` when some pair does not pass.
pub fn value_bound(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    gamma: f64,
    horizon: usize,
    kind: BoundKind,
    opts: &BoundsOptions,
) -> Result<ValueBound> {
    let certificates = match kind {
        BoundKind::Upper => {
            check_sufficient(set, stat, gamma, horizon, opts.qunder.as_ref(), opts.pd_tol)?
                .certificates
        }
        BoundKind::Lower => check_necessary(set, stat, gamma, horizon, opts.pd_tol)?.certificates,
    };
    value_bound_from_certificates(set, &certificates, kind)
}

//! Online minimax multiple-model estimator.
//!
//! A bank of stationary Kalman filters runs one per model, each accumulating
//! its normalized output residuals. The estimate at time `t` is
//!
//! ```text
//! x_hat = argmin_x max_i |x - x_i|^2_{(I - gamma^-2 P_i)^-1} - gamma^2 c_i
//! ```
//!
//! computed with [`minimax_interpolation`].

use std::sync::Arc;

use crate::backward::check_feasible;
use crate::error::{Error, Result};
use crate::exact::terminal_weights;
use crate::forward::StationarySolution;
use crate::interpolation::{minimax_interpolation, DEFAULT_THETA_STEP};
use crate::linalg::{Matrix, SymMatrix, Vector};
use crate::model::ValidatedModelSet;

#[derive(Debug)]
struct BankParams {
    f: Vec<Matrix>,
    h: Vec<Matrix>,
    k: Vec<Matrix>,
    rtilde_inv: Vec<SymMatrix>,
    weights: Vec<SymMatrix>,
    gamma: f64,
    theta_step: f64,
}

/// Filter states `x_i` and accumulated residual costs `c_i` at time `t`.
///
/// `step` returns a new bank and leaves the receiver untouched; the model
/// parameters are shared between all banks derived from the same origin.
#[derive(Debug, Clone)]
pub struct FilterBank {
    t: usize,
    x_breve: Vec<Vector>,
    c: Vec<f64>,
    params: Arc<BankParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub t: usize,
    pub x_hat: Vector,
    pub game_value: f64,
    pub theta_star: Vec<f64>,
    /// `|x_hat - x_i|^2_{Q_i} - gamma^2 c_i` for every model.
    pub per_model_costs: Vec<f64>,
    pub filter_states: Vec<Vector>,
    pub residual_costs: Vec<f64>,
}

impl FilterBank {
    pub fn new(
        set: &ValidatedModelSet,
        stat: &[StationarySolution],
        gamma: f64,
        x0_hats: &[Vector],
    ) -> Result<FilterBank> {
        let m = set.len();
        if stat.len() != m || x0_hats.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} models, {} stationary solutions, {} initial estimates",
                stat.len(),
                x0_hats.len()
            )));
        }
        if let Some(x) = x0_hats.iter().find(|x| x.len() != set.state_dim()) {
            return Err(Error::DimensionMismatch(format!(
                "initial estimate of length {}, state dimension {}",
                x.len(),
                set.state_dim()
            )));
        }
        check_feasible(stat, gamma)?;
        let models = set.models();
        let params = BankParams {
            f: models.iter().map(|md| md.f.clone()).collect(),
            h: models.iter().map(|md| md.h.clone()).collect(),
            k: stat.iter().map(|s| s.k.clone()).collect(),
            rtilde_inv: stat.iter().map(|s| s.rtilde_inv.clone()).collect(),
            weights: terminal_weights(stat, gamma)?,
            gamma,
            theta_step: DEFAULT_THETA_STEP,
        };
        Ok(FilterBank {
            t: 0,
            x_breve: x0_hats.to_vec(),
            c: vec![0.0; m],
            params: Arc::new(params),
        })
    }

    /// Bank started from the initial estimates stored in the model set.
    pub fn from_model_set(
        set: &ValidatedModelSet,
        stat: &[StationarySolution],
        gamma: f64,
    ) -> Result<FilterBank> {
        Self::new(set, stat, gamma, &set.x0_hats())
    }

    /// Same bank with a different simplex grid spacing for [`estimate`].
    ///
    /// [`estimate`]: FilterBank::estimate
    pub fn with_theta_step(self, theta_step: f64) -> Result<FilterBank> {
        if !(theta_step > 0.0 && theta_step <= 1.0) {
            return Err(Error::InvalidArgument(format!("theta step {theta_step}")));
        }
        let p = &self.params;
        let params = BankParams {
            f: p.f.clone(),
            h: p.h.clone(),
            k: p.k.clone(),
            rtilde_inv: p.rtilde_inv.clone(),
            weights: p.weights.clone(),
            gamma: p.gamma,
            theta_step,
        };
        Ok(FilterBank {
            params: Arc::new(params),
            ..self
        })
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn filter_states(&self) -> &[Vector] {
        &self.x_breve
    }

    pub fn residual_costs(&self) -> &[f64] {
        &self.c
    }

    /// `x_i <- F_i x_i + K_i (y - H_i x_i)`, `c_i <- c_i + |H_i x_i - y|^2_{R~_i^-1}`.
    pub fn step(&self, y: &Vector) -> Result<FilterBank> {
        let p = &self.params;
        let m_out = p.h[0].nrows();
        if y.len() != m_out {
            return Err(Error::DimensionMismatch(format!(
                "measurement of length {}, output dimension {m_out}",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry("measurement"));
        }
        let mut x_next = Vec::with_capacity(self.x_breve.len());
        let mut c_next = Vec::with_capacity(self.c.len());
        for (i, x) in self.x_breve.iter().enumerate() {
            let r = y - &p.h[i] * x;
            x_next.push(&p.f[i] * x + &p.k[i] * &r);
            c_next.push(self.c[i] + p.rtilde_inv[i].quad_form(&r));
        }
        Ok(FilterBank {
            t: self.t + 1,
            x_breve: x_next,
            c: c_next,
            params: Arc::clone(&self.params),
        })
    }

    pub fn estimate(&self) -> Result<EstimateReport> {
        let p = &self.params;
        let g2 = p.gamma * p.gamma;
        let penalties: Vec<f64> = self.c.iter().map(|c| g2 * c).collect();
        let sol = minimax_interpolation(&self.x_breve, &p.weights, &penalties, p.theta_step)?;
        Ok(EstimateReport {
            t: self.t,
            x_hat: sol.x_hat,
            game_value: sol.value,
            theta_star: sol.theta,
            per_model_costs: sol.per_model,
            filter_states: self.x_breve.clone(),
            residual_costs: self.c.clone(),
        })
    }
}

/// Runs a bank over `ys` and reports the estimate at `t = 0` and after every
/// measurement.
pub fn run_sequence(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    gamma: f64,
    x0_hats: &[Vector],
    ys: &[Vector],
) -> Result<Vec<EstimateReport>> {
    let bank = FilterBank::new(set, stat, gamma, x0_hats)?;
    replay(bank, ys)
}

/// Same as [`run_sequence`] from an existing bank.
pub fn replay(mut bank: FilterBank, ys: &[Vector]) -> Result<Vec<EstimateReport>> {
    let wrap = |t: usize| {
        move |e: Error| Error::StepFailed {
            t,
            source: Box::new(e),
        }
    };
    let mut out = Vec::with_capacity(ys.len() + 1);
    out.push(bank.estimate().map_err(wrap(bank.time()))?);
    for y in ys {
        let t = bank.time();
        bank = bank.step(y).map_err(wrap(t))?;
        out.push(bank.estimate().map_err(wrap(t + 1))?);
    }
    Ok(out)
}

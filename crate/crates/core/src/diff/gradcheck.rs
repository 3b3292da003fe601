//! Central-difference gradient checking.

use super::{NodeId, OpKind, Tape};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error for each parameter, in input order.
    pub per_param: Vec<f64>,
    pub max_error: f64,
}

/// Gradient checker configuration.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub eps: f64,
    /// Corrupts one backward rule; see [`Tape::backward_with_fault`].
    pub fault: Option<OpKind>,
}

impl GradCheck {
    pub fn new(eps: f64) -> Self {
        Self { eps, fault: None }
    }

    /// Compares backward gradients of the scalar built by `build` against
    /// central differences, entry by entry, for every matrix in `params`.
    pub fn run<F>(&self, params: &[DenseMatrix], build: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
    {
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        let eval = |ps: &[DenseMatrix]| -> Result<f64> {
            let mut tape = Tape::new();
            let ids: Vec<_> = ps.iter().map(|p| tape.input(p.clone())).collect();
            let loss = build(&mut tape, &ids)?;
            let v = tape.value(loss).get(0, 0);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("loss evaluated to {v}")));
            }
            Ok(v)
        };

        let mut tape = Tape::new();
        let ids: Vec<_> = params.iter().map(|p| tape.input(p.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        if !tape.value(loss).get(0, 0).is_finite() {
            return Err(Error::NonFinite("loss at the unperturbed point".into()));
        }
        let grads = tape.backward_with_fault(loss, self.fault)?;

        let mut work = params.to_vec();
        let mut per_param = Vec::with_capacity(params.len());
        for (pi, id) in ids.iter().enumerate() {
            let analytic = grads.get(*id);
            let mut worst = 0.0f64;
            for k in 0..work[pi].data().len() {
                let orig = work[pi].data()[k];
                work[pi].data_mut()[k] = orig + self.eps;
                let plus = eval(&work)?;
                work[pi].data_mut()[k] = orig - self.eps;
                let minus = eval(&work)?;
                work[pi].data_mut()[k] = orig;
                let numeric = (plus - minus) / (2.0 * self.eps);
                worst = worst.max(relative_error(analytic.data()[k], numeric));
            }
            per_param.push(worst);
        }
        let max_error = per_param.iter().copied().fold(0.0, f64::max);
        Ok(GradCheckReport { per_param, max_error })
    }
}

pub fn finite_diff_check<F>(params: &[DenseMatrix], eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    GradCheck::new(eps).run(params, build)
}

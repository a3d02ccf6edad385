//! Central finite-difference gradient oracle.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::Graph;
use super::params::ParamStore;
use super::tape::Var;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub step: f64,
    pub tol: f64,
    /// Upper bound on entries probed per parameter tensor; larger tensors
    /// are probed at a seeded random subset.
    pub max_entries: Option<usize>,
    pub seed: u64,
    /// Re-measure a probe that misses the tolerance at a tenth and a
    /// hundredth of the step, keeping the smallest error. A probe whose
    /// stencil straddles a ReLU or max kink converges as the step shrinks;
    /// a wrong gradient does not.
    pub refine: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            step: 1e-4,
            tol: 1e-4,
            max_entries: None,
            seed: 0,
            refine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// Probes that needed a smaller step.
    pub refined: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn eval<F>(f: &F, params: &ParamStore<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let loss = f(&mut g)?;
    let v = g.value(loss);
    if !v.is_scalar() {
        return Err(Error::NonScalarLoss(v.shape().to_vec()));
    }
    let v = v.item();
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "finite_diff_check" });
    }
    Ok(v)
}

fn central<F>(f: &F, probe: &mut ParamStore<f64>, p: usize, i: usize, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let orig = probe.value(p).data()[i];
    probe.value_mut(p).data_mut()[i] = orig + step;
    let fp = eval(f, probe);
    probe.value_mut(p).data_mut()[i] = orig - step;
    let fm = eval(f, probe);
    probe.value_mut(p).data_mut()[i] = orig;
    Ok((fp? - fm?) / (2.0 * step))
}

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences for every parameter in `params`.
pub fn finite_diff_check<F>(f: F, params: &ParamStore<f64>, opts: CheckOptions) -> Result<CheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let mut analytic = params.clone();
    analytic.zero_grads();
    {
        let mut g = Graph::new(params);
        let loss = f(&mut g)?;
        if !g.value(loss).item().is_finite() {
            return Err(Error::NonFinite { op: "finite_diff_check" });
        }
        g.into_tape().backward(loss, &mut analytic)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut report = CheckReport {
        params: Vec::new(),
        max_rel_err: 0.0,
        tol: opts.tol,
        passed: true,
    };
    for p in 0..params.len() {
        let n = params.value(p).numel();
        let entries: Vec<usize> = match opts.max_entries {
            Some(m) if m < n => sample(&mut rng, n, m).into_vec(),
            _ => (0..n).collect(),
        };
        let mut worst = 0f64;
        let mut refined = 0;
        for &i in &entries {
            let a = analytic.grad_at(p).data()[i];
            let mut err = rel_err(a, central(&f, &mut probe, p, i, opts.step)?);
            if opts.refine && err >= opts.tol {
                refined += 1;
                for frac in [0.1, 0.01] {
                    err = err.min(rel_err(a, central(&f, &mut probe, p, i, frac * opts.step)?));
                }
            }
            worst = worst.max(err);
        }
        report.max_rel_err = report.max_rel_err.max(worst);
        report.params.push(ParamCheck {
            name: params.name(p).into(),
            checked: entries.len(),
            refined,
            max_rel_err: worst,
        });
    }
    report.passed = report.max_rel_err < opts.tol;
    Ok(report)
}

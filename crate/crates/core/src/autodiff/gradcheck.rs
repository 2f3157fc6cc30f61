use super::graph::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Per checked parameter, its largest relative error.
    pub checked: Vec<(String, f64)>,
    /// Frozen parameters, skipped rather than failed.
    pub skipped: Vec<String>,
    pub coords: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

fn eval<F>(store: &ParamStore<f64>, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let loss = f(&mut g)?;
    let v = g.value(loss);
    if v.len() != 1 {
        return Err(Error::NotScalar(v.shape().to_vec()));
    }
    Ok(v.item())
}

/// Central-difference check of every trainable coordinate.
pub fn grad_check<F>(store: &ParamStore<f64>, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    grad_check_sampled(store, eps, usize::MAX, f)
}

/// Like [`grad_check`] but checks at most `max_coords` evenly strided
/// coordinates per parameter.
pub fn grad_check_sampled<F>(
    store: &ParamStore<f64>,
    eps: f64,
    max_coords: usize,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let first = eval(store, &f)?;
    let second = eval(store, &f)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let grads = {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };

    let mut report = GradCheckReport::default();
    let mut work = store.clone();
    for (id, p) in store.iter() {
        if !p.trainable {
            report.skipped.push(p.name.clone());
            continue;
        }
        let analytic = grads.get_or_zeros(id, store);
        let n = p.value.len();
        let stride = if n <= max_coords { 1 } else { n.div_ceil(max_coords) };
        let mut worst_here = 0.0f64;
        for i in (0..n).step_by(stride) {
            let orig = p.value.data()[i];
            work.value_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(&work, &f)?;
            work.value_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(&work, &f)?;
            work.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coords += 1;
            worst_here = worst_here.max(rel);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((p.name.clone(), i));
            }
        }
        report.checked.push((p.name.clone(), worst_here));
    }
    Ok(report)
}

use super::graph::{Graph, Var};
use super::params::ParameterStore;
use crate::error::Result;

/// Relative errors are `|a - n| / max(|a|, |n|, REL_FLOOR)`. Below the floor,
/// central differences of an O(10) loss cannot resolve the gradient, so such
/// entries are held to the absolute bound `tolerance * REL_FLOOR` instead.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares backpropagated gradients of `loss` against central differences
/// with the given `step`, entry by entry for every parameter in `store`.
///
/// `loss` must be deterministic. Stored gradients are zeroed first and hold
/// the analytic gradients on return; parameter values are restored exactly.
pub fn finite_difference_check<F>(
    store: &mut ParameterStore,
    step: f64,
    tolerance: f64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParameterStore) -> Result<Var>,
{
    store.zero_gradients();
    let mut graph = Graph::new();
    let root = loss(&mut graph, store)?;
    graph.backward(root, store)?;

    let mut eval = |store: &ParameterStore| -> Result<f64> {
        let mut g = Graph::new();
        let root = loss(&mut g, store)?;
        Ok(g.value(root).item())
    };

    let mut report = GradCheckReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for k in 0..store.value(id).len() {
            let original = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = original + step;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[k] = original - step;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let analytic = store.grad(id).data()[k];
            let abs = (analytic - numeric).abs();
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(abs / analytic.abs().max(numeric.abs()).max(REL_FLOOR));
        }
        report.params.push(ParamCheck {
            name: store.name(id).to_string(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel < tolerance,
        });
    }
    Ok(report)
}

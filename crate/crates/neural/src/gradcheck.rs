//! Centered finite-difference verification of analytic gradients.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::params::ParamStore;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

/// Relative error floor: below this magnitude a gradient component is
/// checked absolutely, which keeps roundoff on near-zero gradients from
/// dominating the report.
const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: Option<(String, usize)>,
    pub components_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Compare the autodiff gradient of a deterministic scalar function against
/// centered finite differences with step `h`, over every parameter
/// component in the store.
pub fn grad_check<F>(mut f: F, store: &mut ParamStore, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(Tape, ValueId)>,
{
    store.zero_grads();
    let (mut tape, loss) = f(store)?;
    tape.backward(loss, store)?;
    let analytic: BTreeMap<String, Tensor> = store
        .names()
        .map(str::to_string)
        .collect::<Vec<_>>()
        .into_iter()
        .map(|name| {
            let grad = store.grad(&name).expect("own name").clone();
            (name, grad)
        })
        .collect();
    compare_numeric(&mut f, store, &analytic, h)
}

/// Finite-difference comparison against externally supplied analytic
/// gradients. Exposed so a deliberately corrupted gradient can be shown to
/// fail the check.
pub fn compare_numeric<F>(
    f: &mut F,
    store: &mut ParamStore,
    analytic: &BTreeMap<String, Tensor>,
    h: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(Tape, ValueId)>,
{
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        components_checked: 0,
    };
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let len = store.get(&name)?.data().len();
        for k in 0..len {
            let original = store.get(&name)?.data()[k];
            store.get_mut(&name)?.data_mut()[k] = original + h;
            let (tape_plus, loss_plus) = f(store)?;
            let plus = tape_plus.value(loss_plus)[0];
            store.get_mut(&name)?.data_mut()[k] = original - h;
            let (tape_minus, loss_minus) = f(store)?;
            let minus = tape_minus.value(loss_minus)[0];
            store.get_mut(&name)?.data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic
                .get(&name)
                .map(|t| t.data()[k])
                .unwrap_or(0.0);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.components_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), k));
            }
        }
    }
    Ok(report)
}

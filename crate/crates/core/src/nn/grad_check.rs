use super::params::{Gradient, Parameterized};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Group name and index of the worst entry, if any parameter was checked.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the analytic gradient returned by `loss` against central
/// differences for every parameter entry.
///
/// Relative error per entry is `|a - n| / max(|a|, |n|, 1e-8)`. A model with no
/// parameters reports zero error.
pub fn grad_check<P, F>(model: &mut P, mut loss: F, step: f64) -> Result<GradCheckReport>
where
    P: Parameterized,
    F: FnMut(&P) -> Result<(f64, Gradient)>,
{
    let (_, analytic) = loss(model)?;
    analytic.check_matches(model)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (gi, (name, grads)) in analytic.groups().iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let original = model.param_groups()[gi].1[i];
            model.param_groups_mut()[gi].1[i] = original + step;
            let (up, _) = loss(model)?;
            model.param_groups_mut()[gi].1[i] = original - step;
            let (down, _) = loss(model)?;
            model.param_groups_mut()[gi].1[i] = original;

            let numeric = (up - down) / (2.0 * step);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

use crate::error::{check_len, Result};

/// Anything with named, flat parameter groups that the optimizer can update.
///
/// `param_groups` and `param_groups_mut` must list groups in the same order.
pub trait Parameterized {
    fn param_groups(&self) -> Vec<(String, &[f64])>;
    fn param_groups_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.param_groups().iter().map(|(_, p)| p.len()).sum()
    }
}

/// Per-parameter partial derivatives, grouped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    groups: Vec<(String, Vec<f64>)>,
}

impl Gradient {
    pub fn zeros_like<P: Parameterized + ?Sized>(model: &P) -> Self {
        Self {
            groups: model
                .param_groups()
                .into_iter()
                .map(|(name, p)| (name, vec![0.0; p.len()]))
                .collect(),
        }
    }

    pub fn from_groups(groups: Vec<(String, Vec<f64>)>) -> Self {
        Self { groups }
    }

    pub fn groups(&self) -> &[(String, Vec<f64>)] {
        &self.groups
    }

    pub fn group_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.groups[index].1
    }

    /// Two disjoint mutable groups, e.g. a layer's weights and bias.
    pub(crate) fn pair_mut(&mut self, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
        assert!(a < b);
        let (lo, hi) = self.groups.split_at_mut(b);
        (&mut lo[a].1, &mut hi[0].1)
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, g) in &mut self.groups {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.groups.iter().flat_map(|(_, g)| g.iter().copied()).collect()
    }

    pub fn check_matches<P: Parameterized + ?Sized>(&self, model: &P) -> Result<()> {
        let params = model.param_groups();
        check_len("gradient group count", params.len(), self.groups.len())?;
        for ((name, p), (_, g)) in params.iter().zip(&self.groups) {
            check_len(&format!("gradient for `{name}`"), p.len(), g.len())?;
        }
        Ok(())
    }
}

use std::ops::Range;

use crate::error::Result;
use crate::Error;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-4;

/// A scalar function with an analytic gradient.
pub trait Differentiable {
    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Named parameter groups; errors are reported per group.
    fn groups(&self, len: usize) -> Vec<(String, Range<usize>)> {
        vec![("x".to_string(), 0..len)]
    }
}

/// [`Differentiable`] built from a value closure and a gradient closure.
pub struct FnDifferentiable<F, G> {
    value: F,
    gradient: G,
    groups: Vec<(String, Range<usize>)>,
}

impl<F, G> FnDifferentiable<F, G>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    pub fn new(value: F, gradient: G) -> Self {
        Self {
            value,
            gradient,
            groups: Vec::new(),
        }
    }

    pub fn with_groups(mut self, groups: Vec<(String, Range<usize>)>) -> Self {
        self.groups = groups;
        self
    }
}

impl<F, G> Differentiable for FnDifferentiable<F, G>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn value(&self, x: &[f64]) -> Result<f64> {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.gradient)(x)
    }

    fn groups(&self, len: usize) -> Vec<(String, Range<usize>)> {
        if self.groups.is_empty() {
            vec![("x".to_string(), 0..len)]
        } else {
            self.groups.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    /// `max|a − n| / max(max|a|, max|n|)` over the group.
    pub rel_error: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub step: f64,
    pub groups: Vec<GroupError>,
}

impl GradReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_error).fold(0.0, f64::max)
    }
}

/// Compares the analytic gradient with central differences
/// `(f(x+εe) − f(x−εe))/2ε` on every coordinate.
pub fn grad_check(f: &impl Differentiable, point: &[f64], step: f64) -> Result<GradReport> {
    let analytic = f.gradient(point)?;
    if analytic.len() != point.len() {
        return Err(Error::Numerical(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            point.len()
        )));
    }
    if let Some(k) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("analytic gradient is non-finite at {k}")));
    }
    let mut x = point.to_vec();
    let mut numeric = vec![0.0; point.len()];
    for k in 0..point.len() {
        x[k] = point[k] + step;
        let plus = f.value(&x)?;
        x[k] = point[k] - step;
        let minus = f.value(&x)?;
        x[k] = point[k];
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::Numerical(format!("function is non-finite near coordinate {k}")));
        }
        numeric[k] = (plus - minus) / (2.0 * step);
    }
    let groups = f
        .groups(point.len())
        .into_iter()
        .map(|(name, range)| {
            let a = &analytic[range.clone()];
            let n = &numeric[range];
            let abs_error = a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let scale = a.iter().chain(n).map(|x| x.abs()).fold(0.0, f64::max).max(1e-12);
            GroupError {
                name,
                rel_error: abs_error / scale,
                abs_error,
            }
        })
        .collect();
    Ok(GradReport { step, groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let c = [1.5, -2.0, 0.25, 7.0];
        let f = FnDifferentiable::new(
            |x: &[f64]| Ok(x.iter().zip(&c).map(|(a, b)| a * b).sum()),
            |_: &[f64]| Ok(c.to_vec()),
        );
        let report = grad_check(&f, &[0.3, 0.1, -4.0, 2.0], DEFAULT_STEP).unwrap();
        assert!(report.max_rel_error() <= 1e-9);
        assert_eq!(report.step, DEFAULT_STEP);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = FnDifferentiable::new(|x: &[f64]| Ok(x[0] * x[0]), |x: &[f64]| Ok(vec![x[0]]));
        assert!(grad_check(&f, &[1.0], DEFAULT_STEP).unwrap().max_rel_error() > 0.4);
    }

    #[test]
    fn non_finite_values_are_reported() {
        let f = FnDifferentiable::new(|x: &[f64]| Ok(x[0].ln()), |x: &[f64]| Ok(vec![1.0 / x[0]]));
        assert!(matches!(grad_check(&f, &[0.0], DEFAULT_STEP), Err(Error::Numerical(_))));
    }

    #[test]
    fn groups_are_reported_separately() {
        let f = FnDifferentiable::new(
            |x: &[f64]| Ok(x[0] * x[0] + x[1]),
            |x: &[f64]| Ok(vec![2.0 * x[0], 2.0]),
        )
        .with_groups(vec![("good".into(), 0..1), ("bad".into(), 1..2)]);
        let report = grad_check(&f, &[0.7, 0.0], DEFAULT_STEP).unwrap();
        assert!(report.groups[0].rel_error < 1e-9);
        assert!(report.groups[1].rel_error > 0.4);
    }
}

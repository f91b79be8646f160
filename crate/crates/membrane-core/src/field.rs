//! Scalar fields on a domain and the rearrangement-theory primitives:
//! distribution functions, monotone rearrangements, class and weak-closure
//! membership, and comonotone alignment against a weight field.
//!
//! Discretely, the rearrangement class of a generator is the set of
//! permutations of its cell values, and the weak closure is the majorization
//! polytope of the value vector: equal total sum, with every partial sum of
//! the decreasingly sorted values dominated by the generator's.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Relative slack for weak-closure sum comparisons, scaled by the generator's
/// total mass; absorbs rounding accumulated by convex combinations.
const WEAK_CLOSURE_SLACK: f64 = 1e-12;

/// One real value per interior cell, ordered as the domain's cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.num_cells() {
            return Err(Error::LengthMismatch {
                expected: domain.num_cells(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ScalarField { domain, values })
    }

    pub fn constant(domain: Arc<Domain>, value: f64) -> Result<Self> {
        let n = domain.num_cells();
        Self::new(domain, vec![value; n])
    }

    /// Sample a function of the centroid coordinates.
    pub fn from_fn(domain: &Arc<Domain>, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let values = domain.centroids().map(|(x, y)| f(x, y)).collect();
        Self::new(Arc::clone(domain), values)
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// Midpoint quadrature: h²·Σ values.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.domain.cell_measure()
    }

    /// Measure of {value > 0}.
    pub fn support_measure(&self) -> f64 {
        self.values.iter().filter(|&&v| v > 0.0).count() as f64 * self.domain.cell_measure()
    }

    /// λ(α) = |{value ≥ α}|; right-continuous and decreasing in α.
    pub fn distribution_function(&self, alpha: f64) -> f64 {
        self.values.iter().filter(|&&v| v >= alpha).count() as f64 * self.domain.cell_measure()
    }

    /// The decreasing step profile on (0, |D|] with this field's distribution.
    /// Requires non-negative values.
    pub fn decreasing_rearrangement(&self) -> Result<MonotoneProfile> {
        let mut levels = self.nonnegative_values()?;
        levels.sort_unstable_by(|a, b| b.total_cmp(a));
        Ok(MonotoneProfile::from_levels(levels, self.domain.cell_measure()))
    }

    /// Mirror of [`Self::decreasing_rearrangement`]: g_Δ(s) = g^Δ(|D| − s).
    pub fn increasing_rearrangement(&self) -> Result<MonotoneProfile> {
        let mut levels = self.nonnegative_values()?;
        levels.sort_unstable_by(|a, b| a.total_cmp(b));
        Ok(MonotoneProfile::from_levels(levels, self.domain.cell_measure()))
    }

    fn nonnegative_values(&self) -> Result<Vec<f64>> {
        if let Some(k) = self.values.iter().position(|&v| v < 0.0) {
            return Err(Error::Negative {
                cell: k,
                value: self.values[k],
            });
        }
        Ok(self.values.clone())
    }

    /// Exact multiset equality of values; fields from the same generator
    /// carry bit-identical values, so no tolerance is involved.
    pub fn is_rearrangement_of(&self, other: &ScalarField) -> Result<bool> {
        if !self.domain.compatible_with(&other.domain) {
            return Err(Error::DomainMismatch);
        }
        let mut a = self.values.clone();
        let mut b = other.values.clone();
        a.sort_unstable_by(f64::total_cmp);
        b.sort_unstable_by(f64::total_cmp);
        Ok(a == b)
    }
}

/// h²·Σ a·b.
pub fn inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if !a.domain.compatible_with(&b.domain) {
        return Err(Error::DomainMismatch);
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * a.domain.cell_measure())
}

/// A monotone step function on (0, |D|]: `levels[k]` on
/// (`breakpoints[k-1]`, `breakpoints[k]`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneProfile {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl MonotoneProfile {
    fn from_levels(levels: Vec<f64>, cell_measure: f64) -> Self {
        let breakpoints = (1..=levels.len())
            .map(|k| k as f64 * cell_measure)
            .collect();
        MonotoneProfile { breakpoints, levels }
    }

    /// Cumulative measures; strictly increasing, ending at |D|.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Evaluate at s ∈ (0, |D|].
    pub fn value_at(&self, s: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b < s);
        self.levels[idx.min(self.levels.len() - 1)]
    }
}

/// The multiset of density values generating a rearrangement class, kept
/// sorted decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    domain: Arc<Domain>,
    sorted_desc: Vec<f64>,
}

impl Generator {
    /// Class generated by an existing arrangement.
    pub fn from_field(g0: &ScalarField) -> Result<Self> {
        Self::from_values(Arc::clone(&g0.domain), g0.values.clone())
    }

    pub fn from_values(domain: Arc<Domain>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.num_cells() {
            return Err(Error::LengthMismatch {
                expected: domain.num_cells(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) || values.iter().all(|&v| v == 0.0)
        {
            return Err(Error::InvalidGenerator);
        }
        values.sort_unstable_by(|a, b| b.total_cmp(a));
        Ok(Generator {
            domain,
            sorted_desc: values,
        })
    }

    /// Two-material stock: `k` cells of density `alpha`, the rest `beta`.
    pub fn two_material(domain: Arc<Domain>, alpha: f64, beta: f64, k: usize) -> Result<Self> {
        let n = domain.num_cells();
        if k > n {
            return Err(Error::InvalidArgument("material count exceeds cell count"));
        }
        let mut values = vec![beta; n];
        values[..k].fill(alpha);
        Self::from_values(domain, values)
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    /// The value multiset, sorted decreasing.
    pub fn sorted_desc(&self) -> &[f64] {
        &self.sorted_desc
    }

    pub fn total_sum(&self) -> f64 {
        self.sorted_desc.iter().sum()
    }

    /// Support measure of any member of the class.
    pub fn support_measure(&self) -> f64 {
        self.sorted_desc.iter().filter(|&&v| v > 0.0).count() as f64
            * self.domain.cell_measure()
    }

    /// Majorization test for membership in the weak closure: equal total sum
    /// and dominated partial sums of the decreasing rearrangement, within a
    /// relative slack of the generator's mass. A field on another domain or
    /// with a negative value is simply not a member.
    pub fn in_weak_closure(&self, g: &ScalarField) -> bool {
        if !self.domain.compatible_with(&g.domain) {
            return false;
        }
        if g.values.iter().any(|&v| v < 0.0) {
            return false;
        }
        let slack = WEAK_CLOSURE_SLACK * self.total_sum();
        let mut sorted = g.values.clone();
        sorted.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut pg = 0.0;
        let mut p0 = 0.0;
        for (a, b) in sorted.iter().zip(&self.sorted_desc) {
            pg += a;
            p0 += b;
            if pg > p0 + slack {
                return false;
            }
        }
        (pg - p0).abs() <= slack
    }

    /// The arrangement of the class comonotone with `w`: cells sorted by
    /// (w ascending, index ascending) receive the values in ascending order.
    /// Maximizes Σ g·w over the class, and over its weak closure.
    pub fn align_increasing(&self, w: &ScalarField) -> Result<ScalarField> {
        self.align(w, true)
    }

    /// Anti-comonotone arrangement; minimizes Σ g·w.
    pub fn align_decreasing(&self, w: &ScalarField) -> Result<ScalarField> {
        self.align(w, false)
    }

    fn align(&self, w: &ScalarField, increasing: bool) -> Result<ScalarField> {
        if !self.domain.compatible_with(&w.domain) {
            return Err(Error::DomainMismatch);
        }
        let n = self.sorted_desc.len();
        let mut order: Vec<usize> = (0..n).collect();
        // Ties in w broken by ascending cell index keep this a total function.
        order.sort_unstable_by(|&a, &b| w.values[a].total_cmp(&w.values[b]).then(a.cmp(&b)));
        let mut out = vec![0.0; n];
        if increasing {
            for (slot, v) in order.iter().zip(self.sorted_desc.iter().rev()) {
                out[*slot] = *v;
            }
        } else {
            for (slot, v) in order.iter().zip(self.sorted_desc.iter()) {
                out[*slot] = *v;
            }
        }
        ScalarField::new(Arc::clone(&self.domain), out)
    }

    /// A seeded uniformly random member of the class.
    pub fn random_rearrangement(&self, seed: u64) -> ScalarField {
        let mut values = self.sorted_desc.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        values.shuffle(&mut rng);
        ScalarField {
            domain: Arc::clone(&self.domain),
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainSpec, Shape};

    fn strip(n: usize) -> Arc<Domain> {
        // n cells of spacing 1 in a row.
        Arc::new(
            build_domain(&DomainSpec::new(
                Shape::Rectangle {
                    width: n as f64,
                    height: 1.0,
                },
                n,
            ))
            .unwrap(),
        )
    }

    fn field(d: &Arc<Domain>, v: &[f64]) -> ScalarField {
        ScalarField::new(Arc::clone(d), v.to_vec()).unwrap()
    }

    #[test]
    fn distribution_function_counts_superlevel_measure() {
        let d = strip(3);
        let f = field(&d, &[2.0, 0.0, 1.0]);
        assert_eq!(f.distribution_function(1.0), 2.0);
        assert_eq!(f.distribution_function(0.0), 3.0);
        assert_eq!(f.distribution_function(2.5), 0.0);
    }

    #[test]
    fn monotone_rearrangements() {
        let d = strip(3);
        let f = field(&d, &[2.0, 0.0, 1.0]);
        let dec = f.decreasing_rearrangement().unwrap();
        assert_eq!(dec.levels(), &[2.0, 1.0, 0.0]);
        assert_eq!(dec.breakpoints(), &[1.0, 2.0, 3.0]);
        let inc = f.increasing_rearrangement().unwrap();
        assert_eq!(inc.levels(), &[0.0, 1.0, 2.0]);

        let c = field(&d, &[4.0, 4.0, 4.0]);
        assert!(c.decreasing_rearrangement().unwrap().levels().iter().all(|&v| v == 4.0));

        let g = field(&d, &[5.0, 5.0, 1.0]);
        assert_eq!(g.decreasing_rearrangement().unwrap().levels(), &[5.0, 5.0, 1.0]);
        assert_eq!(g.increasing_rearrangement().unwrap().levels(), &[1.0, 5.0, 5.0]);

        let neg = field(&d, &[1.0, -0.5, 0.0]);
        assert!(matches!(
            neg.decreasing_rearrangement(),
            Err(Error::Negative { cell: 1, .. })
        ));
    }

    #[test]
    fn rearrangement_membership_is_exact() {
        let d = strip(3);
        let a = field(&d, &[1.0, 0.0, 2.0]);
        let b = field(&d, &[2.0, 1.0, 0.0]);
        let c = field(&d, &[1.0, 1.0, 0.0]);
        assert!(a.is_rearrangement_of(&b).unwrap());
        assert!(!c.is_rearrangement_of(&field(&d, &[1.0, 0.0, 0.0])).unwrap());
        assert!(a.is_rearrangement_of(&a).unwrap());

        let other = strip(4);
        let f4 = field(&other, &[1.0, 0.0, 2.0, 0.0]);
        assert_eq!(a.is_rearrangement_of(&f4), Err(Error::DomainMismatch));
    }

    #[test]
    fn weak_closure_membership() {
        let d = strip(2);
        let gen = Generator::from_values(Arc::clone(&d), alloc::vec![1.0, 0.0]).unwrap();
        assert!(gen.in_weak_closure(&field(&d, &[0.5, 0.5])));
        assert!(!gen.in_weak_closure(&field(&d, &[0.6, 0.6])));
        assert!(gen.in_weak_closure(&field(&d, &[0.0, 1.0])));
        assert!(gen.in_weak_closure(&field(&d, &[1.0, 0.0])));
        // Majorization violation with matching sum.
        let d3 = strip(3);
        let gen3 = Generator::from_values(Arc::clone(&d3), alloc::vec![2.0, 1.0, 0.0]).unwrap();
        assert!(!gen3.in_weak_closure(&field(&d3, &[3.0, 0.0, 0.0])));
        assert!(gen3.in_weak_closure(&field(&d3, &[1.0, 1.0, 1.0])));
    }

    #[test]
    fn alignment_matches_forced_examples() {
        let d = strip(3);
        let gen = Generator::from_values(Arc::clone(&d), alloc::vec![0.0, 0.0, 1.0]).unwrap();
        let w = field(&d, &[3.0, 1.0, 2.0]);
        assert_eq!(gen.align_increasing(&w).unwrap().values(), &[1.0, 0.0, 0.0]);
        assert_eq!(gen.align_decreasing(&w).unwrap().values(), &[0.0, 1.0, 0.0]);

        let gen123 = Generator::from_values(Arc::clone(&d), alloc::vec![1.0, 2.0, 3.0]).unwrap();
        let w2 = field(&d, &[0.1, 0.3, 0.2]);
        assert_eq!(gen123.align_increasing(&w2).unwrap().values(), &[1.0, 3.0, 2.0]);
        assert_eq!(gen123.align_decreasing(&w2).unwrap().values(), &[3.0, 1.0, 2.0]);

        // Ties broken by cell index.
        let d2 = strip(2);
        let gen01 = Generator::from_values(Arc::clone(&d2), alloc::vec![0.0, 1.0]).unwrap();
        let tied = field(&d2, &[5.0, 5.0]);
        assert_eq!(gen01.align_increasing(&tied).unwrap().values(), &[0.0, 1.0]);
        let const_w = field(&d, &[7.0, 7.0, 7.0]);
        assert_eq!(gen123.align_decreasing(&const_w).unwrap().values(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn support_and_quadrature() {
        let d = strip(3);
        let f = field(&d, &[0.0, 1.0, 2.0]);
        assert_eq!(f.support_measure(), 2.0);
        assert_eq!(field(&d, &[0.0, 0.0, 0.0]).support_measure(), 0.0);
        assert_eq!(field(&d, &[1.0, 2.0, 3.0]).support_measure(), d.measure());

        let unit = Arc::new(
            build_domain(&DomainSpec::new(
                Shape::Rectangle {
                    width: 1.0,
                    height: 1.0,
                },
                5,
            ))
            .unwrap(),
        );
        let one = ScalarField::constant(Arc::clone(&unit), 1.0).unwrap();
        assert!((one.integrate() - 1.0).abs() < 1e-12);
        assert_eq!(ScalarField::constant(unit, 0.0).unwrap().integrate(), 0.0);

        let d2 = strip(2);
        let a = field(&d2, &[1.0, 2.0]);
        let b = field(&d2, &[3.0, 4.0]);
        assert_eq!(inner(&a, &b).unwrap(), 11.0);
    }

    #[test]
    fn generator_rejects_invalid_stock() {
        let d = strip(2);
        assert!(matches!(
            Generator::from_values(Arc::clone(&d), alloc::vec![0.0, 0.0]),
            Err(Error::InvalidGenerator)
        ));
        assert!(matches!(
            Generator::from_values(Arc::clone(&d), alloc::vec![1.0, -1.0]),
            Err(Error::InvalidGenerator)
        ));
    }

    #[test]
    fn profile_value_agrees_with_distribution_inverse() {
        let d = strip(4);
        let f = field(&d, &[0.5, 2.0, 2.0, 1.0]);
        let dec = f.decreasing_rearrangement().unwrap();
        // Oracle: g^Δ(s) = max{α among values: λ(α) ≥ s}.
        let oracle = |s: f64| -> f64 {
            f.values()
                .iter()
                .copied()
                .filter(|&a| f.distribution_function(a) >= s)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        for &s in &[0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0] {
            assert_eq!(dec.value_at(s), oracle(s), "at s = {s}");
        }
    }
}

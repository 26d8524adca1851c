//! Regression basis families.
//!
//! The max-call families are built on the order statistics of the state:
//! `f_i(x)` is the i-th largest coordinate. `psi1` is the constant plus all
//! order statistics, `psi1_g` adds the undiscounted payoff, `psi2` and
//! `psi3` add all products of two and three order statistics. The gas
//! families are plain polynomials in the price coordinates. Feature order
//! is deterministic and part of each family's identity: the constant comes
//! first, then features in the documented generation order.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::ColMatrix;
use crate::scalar::{real, Scalar};

/// One basis function.
#[derive(Clone)]
pub enum Feature<T> {
    /// Constant one.
    Constant,
    /// Product of powers of the descending-sorted coordinates:
    /// `prod_k f_{idx_k}(x)^{pow_k}`.
    SortedMonomial(Vec<(usize, u32)>),
    /// Product of powers of the raw coordinates.
    RawMonomial(Vec<(usize, u32)>),
    /// Named closure, used for payoff-augmented families.
    Custom(String, Arc<dyn Fn(&[T]) -> T + Send + Sync>),
}

impl<T> fmt::Debug for Feature<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Constant => write!(f, "Constant"),
            Feature::SortedMonomial(p) => write!(f, "SortedMonomial({p:?})"),
            Feature::RawMonomial(p) => write!(f, "RawMonomial({p:?})"),
            Feature::Custom(name, _) => write!(f, "Custom({name})"),
        }
    }
}

/// Serializable description of a standard family; the identity under which
/// trained coefficient sets are stored and reloaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BasisSpec {
    /// Constant and order statistics.
    Psi1 { dim: usize },
    /// `Psi1` plus the undiscounted max-call payoff at the given strike.
    Psi1G { dim: usize, strike: f64 },
    /// `Psi1` plus products of two order statistics.
    Psi2 { dim: usize },
    /// `Psi2` plus products of three order statistics.
    Psi3 { dim: usize },
    /// Powers of the price coordinate `x2` up to `degree`.
    PricePoly { degree: usize },
    /// All monomials `x1^p x2^q` with `p + q <= degree`.
    JointPoly { degree: usize },
}

impl BasisSpec {
    /// Short name, as used in configuration files and result tables.
    pub fn id(&self) -> String {
        match self {
            BasisSpec::Psi1 { dim } => format!("psi1(d={dim})"),
            BasisSpec::Psi1G { dim, strike } => format!("psi1_g(d={dim},strike={strike})"),
            BasisSpec::Psi2 { dim } => format!("psi2(d={dim})"),
            BasisSpec::Psi3 { dim } => format!("psi3(d={dim})"),
            BasisSpec::PricePoly { degree } => format!("p{degree}_x2"),
            BasisSpec::JointPoly { degree } => format!("p{degree}_x1x2"),
        }
    }

    /// State dimension the family expects.
    pub fn dim(&self) -> usize {
        match self {
            BasisSpec::Psi1 { dim }
            | BasisSpec::Psi1G { dim, .. }
            | BasisSpec::Psi2 { dim }
            | BasisSpec::Psi3 { dim } => *dim,
            BasisSpec::PricePoly { .. } | BasisSpec::JointPoly { .. } => 2,
        }
    }
}

/// An ordered list of features over a fixed state dimension.
#[derive(Debug, Clone)]
pub struct BasisFamily<T> {
    id: String,
    dim: usize,
    features: Vec<Feature<T>>,
    spec: Option<BasisSpec>,
    uses_sorted: bool,
}

impl<T: Scalar> BasisFamily<T> {
    /// Builds an ad-hoc family from explicit features. Such families have
    /// no [`BasisSpec`] and cannot be stored to disk.
    pub fn from_features(id: impl Into<String>, dim: usize, features: Vec<Feature<T>>) -> Self {
        let uses_sorted = features
            .iter()
            .any(|f| matches!(f, Feature::SortedMonomial(_)));
        Self {
            id: id.into(),
            dim,
            features,
            spec: None,
            uses_sorted,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of features `K`.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn spec(&self) -> Option<&BasisSpec> {
        self.spec.as_ref()
    }

    pub fn features(&self) -> &[Feature<T>] {
        &self.features
    }

    /// Evaluates all features at one state. `scratch` holds the sorted
    /// coordinates between calls to avoid reallocation; `out` must have
    /// length [`BasisFamily::len`].
    pub fn eval_row(&self, x: &[T], scratch: &mut Vec<T>, out: &mut [T]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.features.len());
        if self.uses_sorted {
            scratch.clear();
            scratch.extend_from_slice(x);
            scratch.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite coordinates"));
        }
        for (slot, feature) in out.iter_mut().zip(&self.features) {
            *slot = match feature {
                Feature::Constant => T::one(),
                Feature::SortedMonomial(powers) => powers
                    .iter()
                    .fold(T::one(), |acc, &(i, p)| acc * scratch[i].powi(p as i32)),
                Feature::RawMonomial(powers) => powers
                    .iter()
                    .fold(T::one(), |acc, &(i, p)| acc * x[i].powi(p as i32)),
                Feature::Custom(_, f) => f(x),
            };
        }
    }
}

/// Coordinates of `x` sorted in descending order: `out[0]` is the largest.
pub fn sorted_features<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut out = x.to_vec();
    out.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite coordinates"));
    out
}

/// Builds a standard family from its description.
pub fn build_basis<T: Scalar>(spec: &BasisSpec) -> Result<BasisFamily<T>> {
    let dim = spec.dim();
    if dim == 0 {
        return Err(Error::InvalidInput("basis dimension must be >= 1".into()));
    }
    let mut features: Vec<Feature<T>> = vec![Feature::Constant];
    match spec {
        BasisSpec::Psi1 { .. } => push_order_stats(&mut features, dim),
        BasisSpec::Psi1G { strike, .. } => {
            push_order_stats(&mut features, dim);
            let strike_t: T = real(*strike);
            features.push(Feature::Custom(
                "max_call_payoff".into(),
                Arc::new(move |x: &[T]| {
                    let mut best = T::neg_infinity();
                    for &v in x {
                        if v > best {
                            best = v;
                        }
                    }
                    (best - strike_t).max(T::zero())
                }),
            ));
        }
        BasisSpec::Psi2 { .. } => {
            push_order_stats(&mut features, dim);
            push_sorted_products(&mut features, dim, 2);
        }
        BasisSpec::Psi3 { .. } => {
            push_order_stats(&mut features, dim);
            push_sorted_products(&mut features, dim, 2);
            push_sorted_products(&mut features, dim, 3);
        }
        BasisSpec::PricePoly { degree } => {
            for p in 1..=*degree {
                features.push(Feature::RawMonomial(vec![(1, p as u32)]));
            }
        }
        BasisSpec::JointPoly { degree } => {
            for total in 1..=*degree {
                // Highest x1 power first within each total degree, so the
                // degree-one block reads (x1, x2).
                for p in (0..=total).rev() {
                    let q = total - p;
                    let mut powers = Vec::new();
                    if p > 0 {
                        powers.push((0, p as u32));
                    }
                    if q > 0 {
                        powers.push((1, q as u32));
                    }
                    features.push(Feature::RawMonomial(powers));
                }
            }
        }
    }
    let uses_sorted = features
        .iter()
        .any(|f| matches!(f, Feature::SortedMonomial(_)));
    Ok(BasisFamily {
        id: spec.id(),
        dim,
        features,
        spec: Some(spec.clone()),
        uses_sorted,
    })
}

fn push_order_stats<T>(features: &mut Vec<Feature<T>>, dim: usize) {
    for i in 0..dim {
        features.push(Feature::SortedMonomial(vec![(i, 1)]));
    }
}

/// Appends all degree-`deg` products of order statistics with indices in
/// nondecreasing order (i <= j <= k ...), lexicographically.
fn push_sorted_products<T>(features: &mut Vec<Feature<T>>, dim: usize, deg: usize) {
    let mut idx = vec![0usize; deg];
    loop {
        let mut powers: Vec<(usize, u32)> = Vec::new();
        for &i in &idx {
            match powers.last_mut() {
                Some((j, p)) if *j == i => *p += 1,
                _ => powers.push((i, 1)),
            }
        }
        features.push(Feature::SortedMonomial(powers));
        // Advance the nondecreasing multi-index.
        let mut k = deg;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            if idx[k] + 1 < dim {
                let next = idx[k] + 1;
                for slot in idx.iter_mut().skip(k) {
                    *slot = next;
                }
                break;
            }
        }
    }
}

/// Assembles the design matrix: one row per state, the family's features
/// first, then any reinforcement columns (already-evaluated value
/// functions) in the order given.
pub fn design_matrix<T: Scalar>(
    basis: &BasisFamily<T>,
    states: &[T],
    dim: usize,
    reinforced: &[&[T]],
) -> Result<ColMatrix<T>> {
    if dim != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: dim,
        });
    }
    if states.is_empty() || states.len() % dim != 0 {
        return Err(Error::InvalidInput(format!(
            "state buffer length {} not a positive multiple of dim {dim}",
            states.len()
        )));
    }
    if states.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state buffer"));
    }
    let rows = states.len() / dim;
    let k = basis.len();
    for col in reinforced {
        if col.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: col.len(),
            });
        }
    }

    let mut row_major = vec![T::zero(); rows * k];
    use rayon::prelude::*;
    row_major
        .par_chunks_mut(k)
        .zip(states.par_chunks(dim))
        .for_each_init(Vec::new, |scratch, (row, x)| {
            basis.eval_row(x, scratch, row);
        });
    if row_major.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }

    let mut matrix = ColMatrix::from_row_major(rows, k, &row_major);
    for col in reinforced {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reinforcement column"));
        }
        matrix.push_col(col);
    }
    Ok(matrix)
}

// ============================================================================
// Tests
// ============================================================================

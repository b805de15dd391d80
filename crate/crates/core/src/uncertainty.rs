//! Box and ellipsoidal uncertainty sets for renewable deviations.
//!
//! An ellipsoid is `{Δ : (Δ − c)ᵀ Q (Δ − c) ≤ r}` with `Q = UᵀU`, `U` upper
//! triangular. Its support function has the closed form
//! `max aᵀΔ = aᵀc + √r · ‖U⁻ᵀ a‖₂`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::coalition::Coalition;
use crate::error::{Error, Result};

/// Pivots at or below this value are treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Axis-aligned box centred at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub half_widths: DVector<f64>,
}

impl BoxSet {
    pub fn new(half_widths: DVector<f64>) -> Result<BoxSet> {
        if let Some(v) = half_widths.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!("box half-width must be nonnegative, found {v}")));
        }
        Ok(BoxSet { half_widths })
    }

    pub fn dim(&self) -> usize {
        self.half_widths.len()
    }
}

/// Upper-triangular factor `U` with `Q = UᵀU`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    upper: DMatrix<f64>,
    /// Lower factor `Uᵀ`, kept for triangular solves.
    lower: DMatrix<f64>,
}

impl CholFactor {
    pub fn upper(&self) -> &DMatrix<f64> {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.upper.nrows()
    }

    /// `U⁻ᵀ a`.
    pub fn solve_transpose(&self, a: &DVector<f64>) -> DVector<f64> {
        self.lower.solve_lower_triangular(a).expect("factor has a nonzero diagonal")
    }

    /// `U⁻¹ ξ`.
    pub fn solve(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.upper.solve_upper_triangular(xi).expect("factor has a nonzero diagonal")
    }

    /// `UᵀU`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * &self.upper
    }
}

/// Factorises a symmetric positive-definite matrix as `Q = UᵀU`.
///
/// Only the lower triangle of `q` is read.
pub fn cholesky(q: &DMatrix<f64>) -> Result<CholFactor> {
    if !q.is_square() {
        return Err(Error::DimensionMismatch { what: "shape matrix".into(), expected: q.nrows(), found: q.ncols() });
    }
    let g = match nalgebra::linalg::Cholesky::new(q.clone()) {
        Some(c) => c.unpack(),
        None => {
            // report the smallest eigenvalue as the offending pivot
            let pivot = nalgebra::linalg::SymmetricEigen::new(q.clone()).eigenvalues.min();
            return Err(Error::NotPositiveDefinite { pivot });
        }
    };
    // nalgebra yields Q = G·Gᵀ with G lower; U = Gᵀ
    let pivot = g.diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    if pivot.is_nan() || pivot <= PIVOT_TOL {
        return Err(Error::NotPositiveDefinite { pivot });
    }
    Ok(CholFactor { upper: g.transpose(), lower: g })
}

/// `{Δ : (Δ − c)ᵀ Q (Δ − c) ≤ r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSet {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    budget: f64,
    factor: CholFactor,
}

impl EllipsoidSet {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>, budget: f64) -> Result<EllipsoidSet> {
        if shape.nrows() != center.len() {
            return Err(Error::DimensionMismatch {
                what: "ellipsoid center".into(),
                expected: shape.nrows(),
                found: center.len(),
            });
        }
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::InvalidArgument(format!("ellipsoid budget must be positive, found {budget}")));
        }
        let asym = symmetry_error(&shape);
        if asym > 1e-10 * (1.0 + shape.amax()) {
            return Err(Error::InvalidArgument(format!("shape matrix is not symmetric (error {asym:.3e})")));
        }
        let factor = cholesky(&shape)?;
        Ok(EllipsoidSet { center, shape, budget, factor })
    }

    /// Same centre and shape with a different budget (the factor is reused).
    pub fn with_budget(&self, budget: f64) -> Result<EllipsoidSet> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::InvalidArgument(format!("ellipsoid budget must be positive, found {budget}")));
        }
        Ok(EllipsoidSet { budget, ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn factor(&self) -> &CholFactor {
        &self.factor
    }

    /// `(Δ − c)ᵀ Q (Δ − c)`.
    pub fn quadratic_form(&self, delta: &DVector<f64>) -> f64 {
        let d = delta - &self.center;
        (&self.factor.upper * d).norm_squared()
    }
}

/// Largest absolute difference between `m` and its transpose.
pub fn symmetry_error(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m - m.transpose()).amax()
}

fn check_dim(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what: what.into(), expected, found })
    }
}

/// `max { aᵀΔ : Δ ∈ e }`.
pub fn support_ellipsoid(a: &DVector<f64>, e: &EllipsoidSet) -> Result<f64> {
    check_dim("support direction", e.dim(), a.len())?;
    Ok(a.dot(&e.center) + e.budget.sqrt() * e.factor.solve_transpose(a).norm())
}

/// `(aᵀc, ‖U⁻ᵀ a‖₂)`, so that the support at any budget `r` is
/// `aᵀc + √r · ‖U⁻ᵀ a‖₂`.
pub fn support_components(a: &DVector<f64>, e: &EllipsoidSet) -> Result<(f64, f64)> {
    check_dim("support direction", e.dim(), a.len())?;
    Ok((a.dot(&e.center), e.factor.solve_transpose(a).norm()))
}

/// `max { aᵀΔ : |Δ| ≤ half_widths }`.
pub fn support_box(a: &DVector<f64>, b: &BoxSet) -> Result<f64> {
    check_dim("support direction", b.dim(), a.len())?;
    Ok(a.iter().zip(b.half_widths.iter()).map(|(x, w)| x.abs() * w).sum())
}

/// Historical budget and the reductions contributed by data-sharing groups.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataContribution {
    pub historical: f64,
    pub terms: Vec<(Coalition, f64)>,
}

impl DataContribution {
    pub fn new(historical: f64, terms: Vec<(Coalition, f64)>) -> DataContribution {
        DataContribution { historical, terms }
    }

    /// Budget left when every stored group is shared: `k_h − Σ k_S`.
    pub fn minimum_budget(&self) -> f64 {
        self.historical - self.terms.iter().map(|(_, k)| k).sum::<f64>()
    }

    /// `r(C) = k_h − Σ_{S ⊆ C} k_S`: a group's reduction applies once all of
    /// its members belong to `C`.
    pub fn effective_budget(&self, c: Coalition) -> f64 {
        let reduction: f64 =
            self.terms.iter().filter(|(s, _)| !s.is_empty() && s.is_subset_of(c)).map(|(_, k)| k).sum();
        self.historical - reduction
    }

    pub fn without_terms(&self) -> DataContribution {
        DataContribution { historical: self.historical, terms: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Boundary,
    Interior,
}

/// `n` points from the ellipsoid: a Gaussian direction normalised to the unit
/// sphere, mapped through `√r · U⁻¹` and shifted by the centre. Interior mode
/// further scales each point by `u^(1/dim)` with `u` uniform on `[0, 1]`.
pub fn sample_ellipsoid(e: &EllipsoidSet, n: usize, seed: u64, mode: SampleMode) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = e.dim();
    let unit = Uniform::new(0.0f64, 1.0);
    let root = e.budget.sqrt();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut u = DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(&mut rng)));
        let norm = u.norm();
        if norm == 0.0 {
            continue;
        }
        u /= norm;
        if mode == SampleMode::Interior {
            let s: f64 = unit.sample(&mut rng);
            u *= s.powf(1.0 / dim as f64);
        }
        out.push(&e.center + e.factor.solve(&u) * root);
    }
    out
}

/// `n` points on the boundary of a box: half are vertices with random signs,
/// half lie on a random facet with the other coordinates uniform.
pub fn sample_box(b: &BoxSet, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = b.dim();
    let unit = Uniform::new(0.0f64, 1.0);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = DVector::zeros(dim);
        if k % 2 == 0 {
            for j in 0..dim {
                let sign = if unit.sample(&mut rng) < 0.5 { -1.0 } else { 1.0 };
                v[j] = sign * b.half_widths[j];
            }
        } else if dim > 0 {
            for j in 0..dim {
                v[j] = (2.0 * unit.sample(&mut rng) - 1.0) * b.half_widths[j];
            }
            // pin one coordinate with positive width to a face
            let open: Vec<usize> = (0..dim).filter(|&j| b.half_widths[j] > 0.0).collect();
            if !open.is_empty() {
                let face = open[((unit.sample(&mut rng) * open.len() as f64) as usize).min(open.len() - 1)];
                let sign = if unit.sample(&mut rng) < 0.5 { -1.0 } else { 1.0 };
                v[face] = sign * b.half_widths[face];
            }
        }
        out.push(v);
    }
    out
}

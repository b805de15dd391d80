//! Exact big-M encoding of binary × continuous products.

use crate::{ConicProgram, Sense, Var};

/// Registry entry for one linearized product `product = binary · factor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductLink {
    pub product: Var,
    pub binary: Var,
    pub factor: Var,
    pub big_m: f64,
}

/// Adds an auxiliary variable standing for `binary · factor` together with the
/// four rows
///
/// ```text
///  -M·I ≤ IP ≤ M·I
///  -M·(1 − I) ≤ IP − P ≤ M·(1 − I)
/// ```
///
/// At any point with `I ∈ {0, 1}` and `|P| ≤ M` these force `IP = I·P`.
pub fn linearize_product(p: &mut ConicProgram, binary: Var, factor: Var, big_m: f64, label: &str) -> ProductLink {
    let m = big_m;
    let product = p.add_var(-m, m);
    p.add_row(label, vec![(product, 1.0), (binary, -m)], Sense::Le, 0.0);
    p.add_row(label, vec![(product, -1.0), (binary, -m)], Sense::Le, 0.0);
    p.add_row(label, vec![(product, 1.0), (factor, -1.0), (binary, m)], Sense::Le, m);
    p.add_row(label, vec![(product, -1.0), (factor, 1.0), (binary, m)], Sense::Le, m);
    ProductLink { product, binary, factor, big_m }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BigMIssue {
    /// The auxiliary differs from the true product by more than the tolerance.
    ProductMismatch { error: f64 },
    /// The factor exceeds M, so the encoding may have cut off valid points.
    BigMTooSmall { value: f64, big_m: f64 },
    /// The factor is within 1% of M.
    NearSaturation { value: f64, big_m: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BigMAudit {
    /// `(index into the link registry, issue)`.
    pub issues: Vec<(usize, BigMIssue)>,
    pub max_product_error: f64,
    /// Largest `|P| / M` seen.
    pub max_load: f64,
}

impl BigMAudit {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    /// Issues other than near-saturation warnings.
    pub fn violations(&self) -> usize {
        self.issues.iter().filter(|(_, i)| !matches!(i, BigMIssue::NearSaturation { .. })).count()
    }
}

pub const PRODUCT_TOL: f64 = 1e-6;
pub const SATURATION: f64 = 0.99;

/// Checks every registered product at the point `x`.
pub fn audit_bigm(x: &[f64], links: &[ProductLink]) -> BigMAudit {
    let mut audit = BigMAudit::default();
    for (k, link) in links.iter().enumerate() {
        let (ip, i, pv) = (x[link.product.0], x[link.binary.0], x[link.factor.0]);
        let err = (ip - i * pv).abs();
        audit.max_product_error = audit.max_product_error.max(err);
        audit.max_load = audit.max_load.max(pv.abs() / link.big_m);
        if pv.abs() > link.big_m {
            audit.issues.push((k, BigMIssue::BigMTooSmall { value: pv, big_m: link.big_m }));
        } else if pv.abs() > SATURATION * link.big_m {
            audit.issues.push((k, BigMIssue::NearSaturation { value: pv, big_m: link.big_m }));
        }
        if err > PRODUCT_TOL {
            audit.issues.push((k, BigMIssue::ProductMismatch { error: err }));
        }
    }
    audit
}

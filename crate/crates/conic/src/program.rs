use crate::ConicError;

/// Index of a variable inside a [`ConicProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "le",
            Sense::Ge => "ge",
            Sense::Eq => "eq",
        }
    }
}

/// `Σ coef·x  (≤ | ≥ | =)  rhs`, tagged with a row class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }

    fn magnitude(&self, x: &[f64]) -> f64 {
        let terms: f64 = self.terms.iter().map(|&(v, a)| (a * x[v.0]).abs()).sum();
        1.0 + self.rhs.abs() + terms
    }
}

/// `‖x_tail‖₂ ≤ x_head`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderCone {
    pub head: Var,
    pub tail: Vec<Var>,
}

/// `2·x_first·x_second ≥ ‖x_tail‖₂²` with `x_first, x_second ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedCone {
    pub first: Var,
    pub second: Var,
    pub tail: Vec<Var>,
}

/// Minimisation problem with linear objective, linear rows, second-order and
/// rotated cones, and binary marks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    binary: Vec<bool>,
    objective: Vec<f64>,
    offset: f64,
    rows: Vec<Row>,
    socs: Vec<SecondOrderCone>,
    rotated: Vec<RotatedCone>,
}

fn clean_label(label: &str) -> String {
    let s: String = label.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    if s.is_empty() {
        "row".to_string()
    } else {
        s
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64) -> Var {
        self.lower.push(lower);
        self.upper.push(upper);
        self.binary.push(false);
        self.objective.push(0.0);
        Var(self.lower.len() - 1)
    }

    pub fn add_free_var(&mut self) -> Var {
        self.add_var(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_binary(&mut self) -> Var {
        let v = self.add_var(0.0, 1.0);
        self.binary[v.0] = true;
        v
    }

    /// Marks an existing variable binary and clamps its bounds to `[0, 1]`.
    pub fn mark_binary(&mut self, v: Var) {
        self.binary[v.0] = true;
        self.lower[v.0] = self.lower[v.0].max(0.0);
        self.upper[v.0] = self.upper[v.0].min(1.0);
    }

    pub fn is_binary(&self, v: Var) -> bool {
        self.binary[v.0]
    }

    pub fn binaries(&self) -> Vec<Var> {
        (0..self.num_vars()).filter(|&i| self.binary[i]).map(Var).collect()
    }

    /// Drops all integrality marks (bounds are kept).
    pub fn relax_integrality(&mut self) {
        self.binary.iter_mut().for_each(|b| *b = false);
    }

    pub fn bounds(&self, v: Var) -> (f64, f64) {
        (self.lower[v.0], self.upper[v.0])
    }

    pub fn set_bounds(&mut self, v: Var, lower: f64, upper: f64) {
        self.lower[v.0] = lower;
        self.upper[v.0] = upper;
    }

    pub fn fix(&mut self, v: Var, value: f64) {
        self.set_bounds(v, value, value);
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    /// Adds `coef` to the objective coefficient of `v`.
    pub fn add_objective(&mut self, v: Var, coef: f64) {
        self.objective[v.0] += coef;
    }

    pub fn set_objective(&mut self, v: Var, coef: f64) {
        self.objective[v.0] = coef;
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn add_offset(&mut self, value: f64) {
        self.offset += value;
    }

    pub fn set_offset(&mut self, value: f64) {
        self.offset = value;
    }

    /// Appends a linear row and returns its index. Zero coefficients are
    /// dropped and repeated variables are merged.
    pub fn add_row(&mut self, label: &str, terms: Vec<(Var, f64)>, sense: Sense, rhs: f64) -> usize {
        let mut merged: Vec<(Var, f64)> = Vec::with_capacity(terms.len());
        for (v, a) in terms {
            if let Some(entry) = merged.iter_mut().find(|(w, _)| *w == v) {
                entry.1 += a;
            } else {
                merged.push((v, a));
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Row { label: clean_label(label), terms: merged, sense, rhs });
        self.rows.len() - 1
    }

    /// Appends a row verbatim (used by the text loader).
    pub(crate) fn push_row_raw(&mut self, label: &str, terms: Vec<(Var, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row { label: clean_label(label), terms, sense, rhs });
    }

    pub fn add_soc(&mut self, head: Var, tail: Vec<Var>) {
        self.socs.push(SecondOrderCone { head, tail });
    }

    pub fn add_rotated(&mut self, first: Var, second: Var, tail: Vec<Var>) {
        self.rotated.push(RotatedCone { first, second, tail });
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn socs(&self) -> &[SecondOrderCone] {
        &self.socs
    }

    pub fn rotated(&self) -> &[RotatedCone] {
        &self.rotated
    }

    /// Keeps only the rows for which `keep` returns true.
    pub fn retain_rows(&mut self, mut keep: impl FnMut(&Row) -> bool) {
        self.rows.retain(|r| keep(r));
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest scaled violation over bounds, rows and cones. Each violation
    /// is divided by `1 + magnitude` of the quantities involved.
    pub fn scaled_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for ((&xi, &lo), &hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            if lo.is_finite() && xi < lo {
                worst = worst.max((lo - xi) / (1.0 + lo.abs()));
            }
            if hi.is_finite() && xi > hi {
                worst = worst.max((xi - hi) / (1.0 + hi.abs()));
            }
        }
        for row in &self.rows {
            worst = worst.max(row.violation(x) / row.magnitude(x));
        }
        for cone in &self.socs {
            let norm = cone.tail.iter().map(|v| x[v.0] * x[v.0]).sum::<f64>().sqrt();
            let head = x[cone.head.0];
            worst = worst.max((norm - head).max(0.0) / (1.0 + norm + head.abs()));
        }
        for cone in &self.rotated {
            let (a, b) = (x[cone.first.0], x[cone.second.0]);
            let sq = cone.tail.iter().map(|v| x[v.0] * x[v.0]).sum::<f64>();
            // same cone written as ‖((a−b)/√2, tail)‖ ≤ (a+b)/√2
            let norm = ((a - b) * (a - b) / 2.0 + sq).sqrt();
            let head = (a + b) / std::f64::consts::SQRT_2;
            let v = (norm - head).max(0.0).max(-a).max(-b);
            worst = worst.max(v / (1.0 + norm + head.abs()));
        }
        worst
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.num_vars();
        let check = |v: Var| {
            if v.0 < n {
                Ok(())
            } else {
                Err(ConicError::VarOutOfRange { index: v.0, count: n })
            }
        };
        for row in &self.rows {
            for &(v, _) in &row.terms {
                check(v)?;
            }
        }
        for cone in &self.socs {
            check(cone.head)?;
            for &v in &cone.tail {
                check(v)?;
            }
            if self.binary[cone.head.0] {
                return Err(ConicError::BinaryConeHead(cone.head.0));
            }
        }
        for cone in &self.rotated {
            check(cone.first)?;
            check(cone.second)?;
            for &v in &cone.tail {
                check(v)?;
            }
            for head in [cone.first, cone.second] {
                if self.binary[head.0] {
                    return Err(ConicError::BinaryConeHead(head.0));
                }
            }
        }
        for i in 0..n {
            if self.binary[i] && (self.lower[i] < 0.0 || self.upper[i] > 1.0) {
                return Err(ConicError::BinaryBounds { index: i, lower: self.lower[i], upper: self.upper[i] });
            }
        }
        Ok(())
    }
}

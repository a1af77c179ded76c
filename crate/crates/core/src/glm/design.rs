//! Model terms, compact formulas and column-oriented covariate tables.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-oriented table of named real-valued columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Frame {
    pub fn new(n_rows: usize) -> Self {
        Self {
            names: Vec::new(),
            columns: Vec::new(),
            n_rows,
        }
    }

    /// Adds (or replaces) a column. Panics if the length does not match.
    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.push_column(name, values);
        self
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) {
        assert_eq!(values.len(), self.n_rows, "column length mismatch");
        let name = name.into();
        match self.names.iter().position(|n| *n == name) {
            Some(i) => self.columns[i] = values,
            None => {
                self.names.push(name);
                self.columns.push(values);
            }
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Keeps the rows at `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Frame {
        Frame {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
            n_rows: idx.len(),
        }
    }
}

/// One column of a design matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Main(String),
    /// Product of two or more columns (`z1:z2`, `a:z1:z2`).
    Product(Vec<String>),
    /// Absolute value of a column (`abs(z1)`).
    Abs(String),
}

impl Term {
    pub fn is_interaction(&self) -> bool {
        matches!(self, Term::Product(_))
    }

    /// Columns this term reads.
    pub fn columns(&self) -> Vec<&str> {
        match self {
            Term::Intercept => vec![],
            Term::Main(c) | Term::Abs(c) => vec![c.as_str()],
            Term::Product(cs) => cs.iter().map(String::as_str).collect(),
        }
    }

    /// Evaluates the term for one row given a column lookup.
    pub fn value(&self, lookup: &impl Fn(&str) -> Option<f64>) -> Result<f64> {
        let get = |c: &str| lookup(c).ok_or_else(|| Error::MissingColumn(c.to_string()));
        Ok(match self {
            Term::Intercept => 1.0,
            Term::Main(c) => get(c)?,
            Term::Abs(c) => get(c)?.abs(),
            Term::Product(cs) => {
                let mut v = 1.0;
                for c in cs {
                    v *= get(c)?;
                }
                v
            }
        })
    }

    pub fn parse(s: &str) -> Result<Term> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Formula("empty term".into()));
        }
        if s == "1" {
            return Ok(Term::Intercept);
        }
        if let Some(inner) = s.strip_prefix("abs(").and_then(|r| r.strip_suffix(')')) {
            let inner = inner.trim();
            check_ident(inner)?;
            return Ok(Term::Abs(inner.to_string()));
        }
        if s.contains(':') {
            let parts: Vec<String> = s.split(':').map(|p| p.trim().to_string()).collect();
            for p in &parts {
                check_ident(p)?;
            }
            return Ok(Term::Product(parts));
        }
        check_ident(s)?;
        Ok(Term::Main(s.to_string()))
    }
}

fn check_ident(s: &str) -> Result<()> {
    let ok = !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !s.starts_with(|c: char| c.is_ascii_digit());
    if ok {
        Ok(())
    } else {
        Err(Error::Formula(format!("invalid column name `{s}`")))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "1"),
            Term::Main(c) => write!(f, "{c}"),
            Term::Abs(c) => write!(f, "abs({c})"),
            Term::Product(cs) => write!(f, "{}", cs.join(":")),
        }
    }
}

/// Ordered list of design terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DesignSpec {
    terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(Error::Formula(format!("duplicate term `{t}`")));
            }
        }
        Ok(Self { terms })
    }

    pub fn intercept_only() -> Self {
        Self {
            terms: vec![Term::Intercept],
        }
    }

    /// Parses the right-hand side of a formula, e.g. `x + z1 + z1:z2 + abs(z1)`.
    /// An intercept is added unless the terms include `0` or `-1`.
    pub fn parse_rhs(rhs: &str) -> Result<Self> {
        let rhs = rhs.trim();
        if rhs.is_empty() {
            return Err(Error::Formula("empty right-hand side".into()));
        }
        let mut intercept = true;
        let mut terms = Vec::new();
        for (k, chunk) in split_signed(rhs)?.into_iter().enumerate() {
            let (negative, body) = chunk;
            match (negative, body.as_str()) {
                (true, "1") | (false, "0") => intercept = false,
                (true, other) => {
                    return Err(Error::Formula(format!("cannot remove term `{other}`")));
                }
                (false, "1") => {
                    if k != 0 && terms.is_empty() && !intercept {
                        intercept = true;
                    }
                }
                (false, other) => {
                    let t = Term::parse(other)?;
                    if terms.contains(&t) {
                        return Err(Error::Formula(format!("duplicate term `{t}`")));
                    }
                    terms.push(t);
                }
            }
        }
        if intercept {
            terms.insert(0, Term::Intercept);
        }
        if terms.is_empty() {
            return Err(Error::Formula("model has no terms".into()));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn has_intercept(&self) -> bool {
        self.terms.contains(&Term::Intercept)
    }

    pub fn is_intercept_only(&self) -> bool {
        self.terms == [Term::Intercept]
    }

    /// True if any term reads `column`.
    pub fn references(&self, column: &str) -> bool {
        self.terms.iter().any(|t| t.columns().contains(&column))
    }

    /// Copy without the term at `idx`.
    pub fn without(&self, idx: usize) -> Self {
        let mut terms = self.terms.clone();
        terms.remove(idx);
        Self { terms }
    }

    /// Row-major `n × p` design matrix.
    pub fn model_matrix(&self, frame: &Frame) -> Result<Vec<f64>> {
        let n = frame.n_rows();
        let p = self.terms.len();
        let mut cols: Vec<Vec<&[f64]>> = Vec::with_capacity(p);
        for t in &self.terms {
            let mut cs = Vec::new();
            for c in t.columns() {
                cs.push(frame.column(c).ok_or_else(|| Error::MissingColumn(c.to_string()))?);
            }
            cols.push(cs);
        }
        let mut out = vec![0.0; n * p];
        for (j, t) in self.terms.iter().enumerate() {
            let cs = &cols[j];
            for i in 0..n {
                out[i * p + j] = match t {
                    Term::Intercept => 1.0,
                    Term::Main(_) => cs[0][i],
                    Term::Abs(_) => cs[0][i].abs(),
                    Term::Product(_) => cs.iter().map(|c| c[i]).product(),
                };
            }
        }
        Ok(out)
    }

    /// Linear predictor Σ βⱼ·termⱼ for one row.
    pub fn linear_predictor(&self, coefficients: &[f64], lookup: &impl Fn(&str) -> Option<f64>) -> Result<f64> {
        let mut eta = 0.0;
        for (t, b) in self.terms.iter().zip(coefficients) {
            eta += b * t.value(lookup)?;
        }
        Ok(eta)
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .terms
            .iter()
            .filter(|t| **t != Term::Intercept)
            .map(ToString::to_string)
            .collect();
        if !self.has_intercept() {
            parts.insert(0, "0".into());
        } else if parts.is_empty() {
            parts.push("1".into());
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// `response ~ rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Formula {
    pub response: String,
    pub design: DesignSpec,
}

impl Formula {
    pub fn parse(s: &str) -> Result<Self> {
        let (lhs, rhs) = s
            .split_once('~')
            .ok_or_else(|| Error::Formula(format!("`{s}` has no `~`")))?;
        let response = lhs.trim();
        check_ident(response)?;
        Ok(Self {
            response: response.to_string(),
            design: DesignSpec::parse_rhs(rhs)?,
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ {}", self.response, self.design)
    }
}

fn split_signed(rhs: &str) -> Result<Vec<(bool, String)>> {
    let mut out = Vec::new();
    let mut negative = false;
    let mut current = String::new();
    let mut depth = 0i32;
    for ch in rhs.chars() {
        match ch {
            '(' => {
                depth += 1;
                current.push(ch);
            }
            ')' => {
                depth -= 1;
                current.push(ch);
            }
            '+' | '-' if depth == 0 => {
                let body = current.trim().to_string();
                if !body.is_empty() {
                    out.push((negative, body));
                } else if !out.is_empty() || negative {
                    return Err(Error::Formula(format!("dangling operator in `{rhs}`")));
                }
                negative = ch == '-';
                current.clear();
            }
            _ => current.push(ch),
        }
    }
    let body = current.trim().to_string();
    if body.is_empty() {
        return Err(Error::Formula(format!("dangling operator in `{rhs}`")));
    }
    out.push((negative, body));
    Ok(out)
}

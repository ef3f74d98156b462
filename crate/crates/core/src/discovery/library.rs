use std::fmt;

use crate::error::{Error, Result};

/// A monomial `Π x_v^{p_v}` over the full state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    powers: Vec<u32>,
}

impl Monomial {
    pub fn new(powers: Vec<u32>) -> Self {
        Self { powers }
    }

    pub fn constant(dim: usize) -> Self {
        Self { powers: vec![0; dim] }
    }

    pub fn powers(&self) -> &[u32] {
        &self.powers
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    #[inline]
    pub fn eval(&self, state: &[f64]) -> f64 {
        let mut v = 1.0;
        for (&x, &p) in state.iter().zip(&self.powers) {
            for _ in 0..p {
                v *= x;
            }
        }
        v
    }
}

/// Ordered candidate features for every state equation.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLibrary {
    variables: Vec<String>,
    terms: Vec<Monomial>,
}

impl CandidateLibrary {
    pub fn new(variables: Vec<String>, terms: Vec<Monomial>) -> Result<Self> {
        let dim = variables.len();
        if terms.iter().any(|t| t.powers.len() != dim) {
            return Err(Error::InvalidInput("monomial arity differs from the state dimension".into()));
        }
        if !terms.iter().any(Monomial::is_constant) {
            return Err(Error::InvalidInput("candidate library needs a constant feature".into()));
        }
        Ok(Self { variables, terms })
    }

    /// `1, y, z, y², z², yz, x, xy, xz, xy², xz², xyz` over `(x, y, z)`.
    pub fn lorenz84() -> Self {
        let m = |x, y, z| Monomial::new(vec![x, y, z]);
        Self {
            variables: vec!["x".into(), "y".into(), "z".into()],
            terms: vec![
                m(0, 0, 0),
                m(0, 1, 0),
                m(0, 0, 1),
                m(0, 2, 0),
                m(0, 0, 2),
                m(0, 1, 1),
                m(1, 0, 0),
                m(1, 1, 0),
                m(1, 0, 1),
                m(1, 2, 0),
                m(1, 0, 2),
                m(1, 1, 1),
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn constant_index(&self) -> usize {
        self.terms.iter().position(Monomial::is_constant).expect("constant feature")
    }

    /// Index of the feature with the given powers.
    pub fn index_of(&self, powers: &[u32]) -> Option<usize> {
        self.terms.iter().position(|t| t.powers == powers)
    }

    /// Index of a feature by its display name, e.g. `"xy^2"` or `"1"`.
    pub fn index_by_name(&self, name: &str) -> Option<usize> {
        (0..self.len()).find(|&j| self.name(j) == name)
    }

    pub fn eval_into(&self, state: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(state);
        }
    }

    pub fn name(&self, j: usize) -> String {
        Named(&self.terms[j], &self.variables).to_string()
    }
}

struct Named<'a>(&'a Monomial, &'a [String]);

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_constant() {
            return f.write_str("1");
        }
        for (v, &p) in self.1.iter().zip(&self.0.powers) {
            match p {
                0 => {}
                1 => f.write_str(v)?,
                _ => write!(f, "{v}^{p}")?,
            }
        }
        Ok(())
    }
}

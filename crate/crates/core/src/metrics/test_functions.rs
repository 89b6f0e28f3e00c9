use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::norm;

/// Identifier of a bounded test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TestFunctionId {
    /// Indicator of `‖x‖ ∈ (0,1/2) ∪ (3/2,2) ∪ (5/2,3) ∪ (7/2,4)`.
    Phi1,
    /// `exp(-‖x‖)`.
    ExpNegNorm,
    /// Radial step function with values in `[-1, 1]`.
    Phi2,
    /// `arctan(‖x‖)`, bounded by π/2.
    AtanNorm,
    Const,
    User,
}

/// The four test functions used by the convergence studies, in report order.
pub const STANDARD_TEST_FUNCTIONS: [TestFunctionId; 4] = [
    TestFunctionId::Phi1,
    TestFunctionId::ExpNegNorm,
    TestFunctionId::Phi2,
    TestFunctionId::AtanNorm,
];

impl TestFunctionId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestFunctionId::Phi1 => "PHI1",
            TestFunctionId::ExpNegNorm => "EXP_NEG_NORM",
            TestFunctionId::Phi2 => "PHI2",
            TestFunctionId::AtanNorm => "ATAN_NORM",
            TestFunctionId::Const => "CONST",
            TestFunctionId::User => "USER",
        }
    }
}

impl fmt::Display for TestFunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestFunctionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PHI1" => Ok(TestFunctionId::Phi1),
            "EXP_NEG_NORM" => Ok(TestFunctionId::ExpNegNorm),
            "PHI2" => Ok(TestFunctionId::Phi2),
            "ATAN_NORM" => Ok(TestFunctionId::AtanNorm),
            "CONST" => Ok(TestFunctionId::Const),
            "USER" => Ok(TestFunctionId::User),
            other => Err(invalid(format!("unknown test function {other}"))),
        }
    }
}

/// User-supplied test function body.
pub type PhiFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Eval {
    Phi1,
    ExpNegNorm,
    Phi2,
    AtanNorm,
    Const(f64),
    User(PhiFn),
}

/// A bounded measurable function with a recorded sup-norm.
#[derive(Clone)]
pub struct TestFunction {
    id: TestFunctionId,
    sup_norm: f64,
    eval: Eval,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("id", &self.id)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

/// Built-in test function. `CONST` is the constant 1 (see
/// [`TestFunction::constant`]); `USER` must be built with [`TestFunction::user`].
pub fn make_test_function(id: TestFunctionId) -> Result<TestFunction> {
    let (sup_norm, eval) = match id {
        TestFunctionId::Phi1 => (1.0, Eval::Phi1),
        TestFunctionId::ExpNegNorm => (1.0, Eval::ExpNegNorm),
        TestFunctionId::Phi2 => (1.0, Eval::Phi2),
        TestFunctionId::AtanNorm => (std::f64::consts::FRAC_PI_2, Eval::AtanNorm),
        TestFunctionId::Const => (1.0, Eval::Const(1.0)),
        TestFunctionId::User => return Err(invalid("USER test functions need TestFunction::user")),
    };
    Ok(TestFunction { id, sup_norm, eval })
}

fn phi1(r: f64) -> f64 {
    let hit = (r > 0.0 && r < 0.5) || (r > 1.5 && r < 2.0) || (r > 2.5 && r < 3.0) || (r > 3.5 && r < 4.0);
    if hit {
        1.0
    } else {
        0.0
    }
}

// [5/2, 3) is not covered by the original case list; it carries the value of
// the preceding interval [2, 5/2).
fn phi2(r: f64) -> f64 {
    if r < 0.5 {
        0.0
    } else if r < 1.0 {
        1.0
    } else if r < 1.5 {
        0.5
    } else if r < 2.0 {
        -1.0
    } else if r < 3.0 {
        0.25
    } else if r < 3.5 {
        1.0 / 3.0
    } else if r < 4.0 {
        -1.0 / 3.0
    } else {
        -0.5
    }
}

impl TestFunction {
    pub fn constant(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(invalid("constant must be finite"));
        }
        Ok(Self {
            id: TestFunctionId::Const,
            sup_norm: c.abs().max(f64::MIN_POSITIVE),
            eval: Eval::Const(c),
        })
    }

    /// User function with a caller-asserted bound `|φ| ≤ sup_norm`.
    pub fn user(sup_norm: f64, f: PhiFn) -> Result<Self> {
        if !(sup_norm > 0.0 && sup_norm.is_finite()) {
            return Err(invalid("sup_norm must be positive"));
        }
        Ok(Self { id: TestFunctionId::User, sup_norm, eval: Eval::User(f) })
    }

    pub fn id(&self) -> TestFunctionId {
        self.id
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// True when the value depends on `x` only through `‖x‖`.
    pub fn is_radial(&self) -> bool {
        !matches!(self.eval, Eval::User(_))
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.eval {
            Eval::Phi1 => phi1(norm(x)),
            Eval::ExpNegNorm => (-norm(x)).exp(),
            Eval::Phi2 => phi2(norm(x)),
            Eval::AtanNorm => norm(x).atan(),
            Eval::Const(c) => *c,
            Eval::User(f) => f(x),
        }
    }
}

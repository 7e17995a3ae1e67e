//! Small models and formulas used by tests, examples and the demo page.

/// Robot vacuum product line with basic constructs only.
pub const ROBOT_BASIC: &str = include_str!("../fixtures/robot_basic.uvl");
/// The robot vacuum extended with a group cardinality, a feature cardinality and attribute constraints.
pub const ROBOT_EXPRESSIVE: &str = include_str!("../fixtures/robot_expressive.uvl");
/// A division whose divisor can evaluate to zero.
pub const DIVISION: &str = include_str!("../fixtures/division.uvl");
/// `2 x1 + x2 >= 2` and `x2 + x3 >= 1`.
pub const SMALL_OPB: &str = include_str!("../fixtures/small.opb");

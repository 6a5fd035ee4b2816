//! Benchmark fixtures shared by the criterion targets.

use mgt_core::{build_mesh, derive_params, partition_boundary, DomainSpec, Problem, ScalarField};

/// Critical-case interval problem with feedback at `x = 1`.
pub fn interval_problem(n: usize) -> Problem {
    let mesh = build_mesh(&DomainSpec::Interval { a: 0.0, b: 1.0 }, &[n]).expect("valid mesh");
    let part = partition_boundary(&mesh, [-1.0, 0.0]).expect("x0 outside");
    let p = derive_params(1.0, 1.0, 0.0, 1.0, ScalarField::Constant(1.0)).expect("valid params");
    Problem::new(mesh, part, p).expect("assembles")
}

/// Unit square with feedback on the sides facing away from `(-0.5, -0.5)`.
pub fn square_problem(n: usize) -> Problem {
    let mesh = build_mesh(&DomainSpec::Rectangle { x: (0.0, 1.0), y: (0.0, 1.0) }, &[n, n]).expect("valid mesh");
    let part = partition_boundary(&mesh, [-0.5, -0.5]).expect("x0 outside");
    let p = derive_params(1.0, 1.0, 0.5, 1.0, ScalarField::Constant(1.2)).expect("valid params");
    Problem::new(mesh, part, p).expect("assembles")
}

//! Fixtures shared by the benchmarks in `benches/`.

use flexreg_core::problems::{build_mmatrix_problem, pk_ramp_mmatrix};
use flexreg_core::{NormalSystem, PenaltyFamily, PenaltySequence};

/// The gradient problem on a `d x d` grid with its exponent ramp.
pub fn mmatrix_fixture(d: usize) -> (NormalSystem, PenaltySequence) {
    let p = build_mmatrix_problem(d).expect("d >= 2");
    let pk = PenaltySequence::from_exponents_permissive(PenaltyFamily::Power, &pk_ramp_mmatrix(p.n()).expect("n >= 2"))
        .expect("ramp exponents are admissible");
    (p.system(), pk)
}

/// Weights of the kind the smoothed iteration produces: large where `x` is
/// small.
pub fn sample_weights(n: usize) -> Vec<f64> {
    (0..n).map(|k| 1.0 + 1e4 * ((k * 7919) % 97) as f64 / 97.0).collect()
}

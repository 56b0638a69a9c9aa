//! Inputs shared by the benchmarks.

use wmopt_core::states::{fock_state, oscillator_operators};
use wmopt_core::{ComplexMatrix, DensityMatrix, MeasurementSetup, Observable, PovmElement, Tolerances, C64};

/// Spin-½ system prepared along +x, postselected on |0⟩, coupled to a
/// truncated oscillator in its ground state with position pointer and
/// momentum readout.
pub fn spin_oscillator(dim: usize, lambda: f64) -> MeasurementSetup {
    let (q, p) = oscillator_operators(dim).expect("dim >= 2");
    let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    MeasurementSetup::new(
        DensityMatrix::pure(&[r, r]).unwrap(),
        PovmElement::pure(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap(),
        Observable::new(ComplexMatrix::from_real_diagonal(&[1.0, -1.0]), &Tolerances::default()).unwrap(),
        fock_state(dim, 0).unwrap(),
        q,
        p,
        lambda,
    )
    .unwrap()
}

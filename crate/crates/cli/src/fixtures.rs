//! The benchmark systems used by the experiment commands.

use nalgebra::DMatrix;
use noisy_synth_core::data::SystemPair;
use noisy_synth_core::synth::PerformanceSpec;

/// Unstable three-state, two-input plant for the stabilization sweep.
pub fn sweep_system() -> SystemPair {
    SystemPair::new(
        DMatrix::from_row_slice(
            3,
            3,
            &[
                0.850, -0.038, -0.380, //
                0.735, 0.815, 1.594, //
                -0.664, 0.697, -0.064,
            ],
        ),
        DMatrix::from_row_slice(
            3,
            2,
            &[
                1.431, 0.705, //
                1.620, -1.129, //
                0.913, 0.369,
            ],
        ),
    )
    .expect("fixture dimensions are consistent")
}

/// Fighter-aircraft model, discretized at 0.01s; unstable.
pub fn aircraft_system() -> SystemPair {
    SystemPair::new(
        DMatrix::from_row_slice(
            6,
            6,
            &[
                1.000, -0.374, -0.190, -0.321, 0.056, -0.026, //
                0.000, 0.982, 0.010, -0.000, -0.003, 0.001, //
                0.000, 0.115, 0.975, -0.000, -0.269, 0.191, //
                0.000, 0.001, 0.010, 1.000, -0.001, 0.001, //
                0.000, 0.000, 0.000, 0.000, 0.741, 0.000, //
                0.000, 0.000, 0.000, 0.000, 0.000, 0.741,
            ],
        ),
        DMatrix::from_row_slice(
            6,
            2,
            &[
                0.007, -0.003, //
                0.000, 0.000, //
                -0.043, 0.030, //
                0.000, 0.000, //
                0.259, 0.000, //
                0.000, 0.259,
            ],
        ),
    )
    .expect("fixture dimensions are consistent")
}

/// Aircraft performance output: the last state.
pub fn aircraft_performance() -> PerformanceSpec {
    PerformanceSpec::new(
        DMatrix::from_row_slice(1, 6, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
        DMatrix::zeros(1, 2),
        None,
    )
    .expect("fixture dimensions are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use noisy_synth_core::verify::spectral_radius;

    #[test]
    fn fixture_systems_are_unstable() {
        assert!(spectral_radius(&sweep_system().a) > 1.0);
        assert!(spectral_radius(&aircraft_system().a) >= 1.0);
    }
}

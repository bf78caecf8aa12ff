use nalgebra::{DMatrix, DVector};
use noisy_synth::fixtures;
use noisy_synth_core::data::simulate;
use noisy_synth_core::noise::NoiseModel;
use noisy_synth_core::synth::{synth_stab, SynthFailure};
use noisy_synth_core::verify::spectral_radius;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let sys = fixtures::sweep_system();
    println!("rho(A_s) = {}", spectral_radius(&sys.a));
    let (n, m, t) = (3usize, 2usize, 20usize);
    let eps = 0.5;
    for trial in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let mut g = |rng: &mut ChaCha8Rng| -> f64 { <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng) };
        let x0 = DVector::from_fn(n, |_, _| g(&mut rng));
        let u = DMatrix::from_fn(m, t, |_, _| g(&mut rng));
        let mut w = DMatrix::zeros(n, t);
        for c in 0..t {
            use rand::RngExt;
            let mut dir = DVector::from_fn(n, |_, _| g(&mut rng));
            let nr = dir.norm().max(1e-300);
            let r = (eps as f64).sqrt() * rng.random_range(0.0_f64..1.0).powf(1.0/3.0);
            dir *= r / nr;
            w.set_column(c, &dir);
        }
        let d = simulate(&sys, &x0, &u, &w).unwrap();
        let p = d.partition();
        println!("trial {trial}: max |x| = {:.3e}", p.x_plus.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let model = NoiseModel::from_sample_norm_bound(eps, n, t).unwrap();
        let mut settings = noisy_synth_core::synth::SynthSettings::default();
        if std::env::var("NO_COORD_SCALE").is_ok() {
            settings.coordinate_scaling = false;
        }
        match synth_stab(&p.x_plus, &p.x_minus, &p.u_minus, &model, &settings) {
            Ok(ctrl) => {
                let rho = spectral_radius(&(&sys.a + &sys.b * &ctrl.k));
                println!("  feasible, beta = {:.3e}, rho(closed) = {}", ctrl.beta, rho);
            }
            Err(SynthFailure::NotInformative { definitive, .. }) => println!("  not informative (definitive = {definitive})"),
            Err(SynthFailure::Indeterminate { detail }) => println!("  indeterminate: {detail}"),
            Err(SynthFailure::Invalid(e)) => println!("  invalid: {e}"),
        }
    }
}

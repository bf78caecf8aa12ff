use nalgebra::{DMatrix, DVector};
use noisy_synth::fixtures;
use noisy_synth_core::data::simulate;
use noisy_synth_core::noise::NoiseModel;
use noisy_synth_core::synth::{build_stab_lmi, SynthSettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    for trial in [2u64, 3, 4] {
        let sys = fixtures::sweep_system();
        let (n, m, t) = (3usize, 2usize, 20usize);
        let eps = 0.5;
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
        let model = NoiseModel::from_sample_norm_bound(eps, n, t).unwrap();
        let settings = SynthSettings::default();
        let lmi = build_stab_lmi(&p.x_plus, &p.x_minus, &p.u_minus, &model, &settings).unwrap();
        println!("trial {trial}:");
        for exponent in 2..=9 {
            let target = 10f64.powi(-exponent);
            let mut pinned = lmi.problem.clone();
            pinned.maximize(&[]);
            pinned.equality(vec![(pinned.unknown(lmi.beta, 0, 0).unwrap(), 1.0)], target);
            let (a2, r2) = pinned.solve(&settings.sdp).unwrap();
            print!("  beta~ = 1e-{exponent}: {:?}", r2.status);
            if let Some(a2) = a2 {
                let blocks = lmi.problem.evaluate_blocks(&a2).unwrap();
                let mut worst_rel = f64::INFINITY;
                for (_, v) in &blocks {
                    worst_rel = worst_rel.min(v.eigenvalues()[0] / v.spectral_scale());
                }
                println!("  worst relative eig {:.2e}", worst_rel);
            } else {
                println!();
            }
        }
    }
}

use nalgebra::{DMatrix, DVector};
use noisy_synth::fixtures;
use noisy_synth_core::data::simulate;
use noisy_synth_core::noise::NoiseModel;
use noisy_synth_core::sdp::SolveStatus;
use noisy_synth_core::synth::{build_stab_lmi, SynthSettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let sys = fixtures::sweep_system();
    let (n, m, t) = (3usize, 2usize, 20usize);
    let eps = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
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
    let (a0, r0) = lmi.problem.solve(&settings.sdp).unwrap();
    println!("stage1: status {:?}, iters {}, obj {:?}", r0.status, r0.iterations, r0.objective_value);
    if let Some(a) = &a0 {
        let beta_hat = a.scalar(lmi.beta).unwrap();
        let (ok, worst) = lmi.problem.verify_assignment(a, 1e-8).unwrap();
        println!("beta_hat = {beta_hat:.4e}, verify ok = {ok}, worst = {worst:.3e}");
        for frac in [0.7, 0.3, 0.1] {
            let target = beta_hat * frac;
            let mut pinned = lmi.problem.clone();
            pinned.maximize(&[]);
            pinned.equality(vec![(pinned.unknown(lmi.beta, 0, 0).unwrap(), 1.0)], target);
            let (a2, r2) = pinned.solve(&settings.sdp).unwrap();
            println!("  pinned beta = {target:.4e}: status {:?}, iters {}", r2.status, r2.iterations);
            if r2.status == SolveStatus::Optimal {
                let (ok, worst) = lmi.problem.verify_assignment(&a2.unwrap(), 1e-8).unwrap();
                println!("    verify ok = {ok}, worst = {worst:.3e}");
            }
        }
    } else {
        println!("no iterate returned");
    }
}

use nalgebra::{DMatrix, DVector};
use noisy_synth::fixtures;
use noisy_synth_core::data::simulate;
use noisy_synth_core::noise::NoiseModel;
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
    let lmi = build_stab_lmi(&p.x_plus, &p.x_minus, &p.u_minus, &model, &SynthSettings::default()).unwrap();
    println!("n_scale = {:.3e}", lmi.n_scale);
    // print N-hat spectrum
    let nf = lmi.n_form.mat();
    println!("N eigs: {:?}", nf.eigenvalues().iter().map(|v| v / lmi.n_scale).collect::<Vec<_>>());
    let (assignment, report) = lmi.problem.solve(&Default::default()).unwrap();
    println!("status = {:?}, obj = {:?}, iters = {}", report.status, report.objective_value, report.iterations);
    if let Some(a) = assignment {
        println!("beta = {:?}", a.scalar(lmi.beta));
    }
}

use nalgebra::{DMatrix, DVector};
use noisy_synth::fixtures;
use noisy_synth_core::consistency::solution_radius_sq;
use noisy_synth_core::data::simulate;
use noisy_synth_core::noise::NoiseModel;
use noisy_synth_core::synth::{build_stab_lmi, SynthSettings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    for trial in [2u64, 3] {
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
        let rsq = solution_radius_sq(&lmi.scaled_n_form);
        println!("trial {trial}: radius_sq = {rsq:?}");
        let dim = lmi.problem.block_dim(lmi.main_block).unwrap();
        for exponent in 2..=9 {
            let target = 10f64.powi(-exponent);
            let mut pinned = lmi.problem.clone();
            pinned.equality(vec![(pinned.unknown(lmi.beta, 0, 0).unwrap(), 1.0)], target);
            let tv = pinned.scalar("_margin").unwrap();
            pinned.block_scalar_term(lmi.main_block, tv, DMatrix::identity(dim, dim) * -1.0).unwrap();
            let t_pos = pinned.psd_block("_margin_nonneg", 1).unwrap();
            pinned.block_scalar_term(t_pos, tv, DMatrix::from_element(1, 1, 1.0)).unwrap();
            let t_cap = pinned.psd_block("_margin_cap", 1).unwrap();
            pinned.block_constant(t_cap, DMatrix::from_element(1, 1, 1.0)).unwrap();
            pinned.block_scalar_term(t_cap, tv, DMatrix::from_element(1, 1, -1.0)).unwrap();
            pinned.maximize(&[(pinned.unknown(tv, 0, 0).unwrap(), 1.0)]);
            let (a2, r2) = pinned.solve(&settings.sdp).unwrap();
            print!("  beta~ = 1e-{exponent}: {:?}", r2.status);
            if let Some(a2) = a2 {
                let t_val = a2.scalar(tv).unwrap();
                let projected = a2.project_onto(&lmi.problem).unwrap();
                let blocks = lmi.problem.evaluate_blocks(&projected).unwrap();
                let mut viol = 0.0_f64;
                let mut main_lam = 0.0;
                for (name, v) in &blocks {
                    let lam = v.eigenvalues()[0];
                    if name == "stabilization" { main_lam = lam; }
                    viol = viol.max(-lam);
                }
                println!("  t = {t_val:.2e}, main lam = {main_lam:.2e}, worst viol = {viol:.2e}");
            } else {
                println!();
            }
        }
    }
}

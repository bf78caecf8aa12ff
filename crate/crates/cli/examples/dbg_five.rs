use nalgebra::{DMatrix, DVector};
use noisy_synth::fixtures;
use noisy_synth_core::data::simulate;
use noisy_synth_core::noise::NoiseModel;
use noisy_synth_core::symmat::SymMatrix;
use noisy_synth_core::synth::{build_stab_lmi, SynthSettings};
use noisy_synth_core::verify::spectral_radius;
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
        let dim = lmi.problem.block_dim(lmi.main_block).unwrap();
        println!("trial {trial}:");
        for exponent in 1..=9 {
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
            print!("  rung 1e-{exponent}: {:?}", r2.status);
            if let Some(a2) = a2 {
                let proj = a2.project_onto(&lmi.problem).unwrap();
                let pm = proj.symmetric(lmi.p).unwrap();
                let lm = proj.rectangular(lmi.l).unwrap();
                let al = proj.scalar(lmi.alpha).unwrap().max(0.0);
                if pm.eigenvalues()[0] <= 0.0 { println!("  P not PD"); continue; }
                let k = pm.solve(&lm.transpose()).unwrap().transpose();
                let kp = &k * pm.as_matrix();
                let mut r = DMatrix::zeros(2*n+m, 2*n+m);
                r.view_mut((0,0),(n,n)).copy_from(pm.as_matrix());
                r.view_mut((n,n),(n,n)).copy_from(&(-pm.as_matrix()));
                r.view_mut((n,2*n),(n,m)).copy_from(&(-kp.transpose()));
                r.view_mut((2*n,n),(m,n)).copy_from(&(-&kp));
                r.view_mut((2*n,2*n),(m,m)).copy_from(&(-(&kp*k.transpose())));
                r += lmi.scaled_n_form.mat().as_matrix() * (-al / lmi.n_scale);
                let rsym = SymMatrix::new(r).unwrap();
                let lam = rsym.eigenvalues()[0];
                // check closed loop of the SCALED true system
                let dsc = &lmi.state_scale; let esc = &lmi.input_scale;
                let k_orig = DMatrix::from_fn(m, n, |i, j| k[(i,j)] * esc[i] / dsc[j]);
                let rho = spectral_radius(&(&sys.a + &sys.b * &k_orig));
                println!("  lam_min(R) = {lam:.2e}, rho_true = {rho:.3}");
            } else { println!(); }
        }
    }
}

//! Subcommand implementations. Exit codes: 0 success, 1 config or I/O
//! error, 2 data not informative, 3 solver indeterminate.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use noisy_synth_core::consistency::{build_n, QmiForm};
use noisy_synth_core::data::{simulate, DataSet};
use noisy_synth_core::error::{Error, Result};
use noisy_synth_core::io;
use noisy_synth_core::slemma::{
    falsify_implication, find_multiplier, find_multiplier_structured, FalsifyOutcome,
    ImplicationForm,
};
use noisy_synth_core::symmat::SymMatrix;
use noisy_synth_core::synth::{
    synth_h2, synth_hinf, synth_stab, synth_stab_multi, Controller, SynthFailure, SynthSettings,
};
use noisy_synth_core::verify::{robust_verify, spectral_radius, ClosedLoop};

use crate::config::{RunConfig, SynthKind};
use crate::experiments;
use crate::provenance::Provenance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_INFORMATIVE: i32 = 2;
pub const EXIT_INDETERMINATE: i32 = 3;

/// Everything a subcommand needs from the invocation.
pub struct Invocation {
    pub config_path: Option<PathBuf>,
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Invocation {
    pub fn load(
        config_path: Option<PathBuf>,
        seed_flag: Option<u64>,
        out_flag: Option<PathBuf>,
    ) -> Result<Self> {
        let config = match &config_path {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig {
                seed: None,
                out: None,
                system: None,
                data: None,
                noise: None,
                synth: None,
                simulate: None,
                verify: None,
                slemma: None,
                experiment: None,
            },
        };
        let seed = seed_flag.or(config.seed).unwrap_or(0);
        let out = out_flag
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Invocation {
            config_path,
            config,
            seed,
            out,
        })
    }

    /// Directory that relative paths inside the config resolve against.
    pub fn base(&self) -> PathBuf {
        self.config_path
            .as_ref()
            .and_then(|p| p.parent().map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn provenance(&self, command: &str) -> Result<Provenance> {
        let mut p = Provenance::new(command, self.seed);
        if let Some(cfg) = &self.config_path {
            p.record_config(cfg)?;
        }
        Ok(p)
    }
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join(name),
        serde_json::to_string_pretty(value).expect("json serializes"),
    )?;
    Ok(())
}

/// Simulate the configured system under seeded inputs and noise, writing
/// `trajectory.csv` and `w_true.csv`.
pub fn cmd_simulate(inv: &Invocation) -> Result<()> {
    let base = inv.base();
    let sys_files = inv
        .config
        .system
        .as_ref()
        .ok_or_else(|| Error::Parse("simulate needs a `system` section".into()))?;
    let sim = inv
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Parse("simulate needs a `simulate` section".into()))?;
    let sys = sys_files.load_pair(&base)?;
    let n = sys.state_dim();
    let m = sys.input_dim();
    let t = sim.t;
    if t == 0 {
        return Err(Error::Parse("simulate.t must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(inv.seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    };
    let x0 = DVector::from_fn(n, |_, _| gauss(&mut rng));
    let u = DMatrix::from_fn(m, t, |_, _| gauss(&mut rng));
    let w = match (sim.sigma, sim.eps) {
        (Some(sigma), None) => DMatrix::from_fn(n, t, |_, _| sigma * gauss(&mut rng)),
        (None, Some(eps)) => {
            use rand::RngExt;
            let mut w = DMatrix::zeros(n, t);
            for c in 0..t {
                let mut dir = DVector::from_fn(n, |_, _| gauss(&mut rng));
                let norm = dir.norm().max(1e-300);
                let radius = eps.sqrt() * rng.random_range(0.0_f64..1.0).powf(1.0 / n as f64);
                dir *= radius / norm;
                w.set_column(c, &dir);
            }
            w
        }
        _ => {
            return Err(Error::Parse(
                "simulate takes exactly one of `sigma` or `eps`".into(),
            ));
        }
    };
    let dataset = simulate(&sys, &x0, &u, &w)?;

    std::fs::create_dir_all(&inv.out)?;
    dataset.write_csv(&inv.out.join("trajectory.csv"))?;
    io::write_matrix(&inv.out.join("w_true.csv"), &w)?;

    let mut prov = inv.provenance("simulate")?;
    for p in sys_files.input_paths() {
        prov.record_input(&base.join(p))?;
    }
    prov.write(&inv.out)?;
    Ok(())
}

fn load_dataset(inv: &Invocation) -> Result<DataSet> {
    let base = inv.base();
    let data = inv
        .config
        .data
        .as_ref()
        .ok_or_else(|| Error::Parse("config needs a `data.trajectory` entry".into()))?;
    DataSet::read_csv(&base.join(&data.trajectory))
}

struct SynthArtifacts {
    controller: Controller,
    n_form: QmiForm,
}

fn run_synthesis(inv: &Invocation) -> std::result::Result<SynthArtifacts, SynthFailure> {
    let base = inv.base();
    let dataset = load_dataset(inv).map_err(SynthFailure::Invalid)?;
    let p = dataset.partition();
    let n = dataset.state_dim();
    let t = dataset.horizon();
    let synth_cfg = inv
        .config
        .synth
        .as_ref()
        .ok_or_else(|| SynthFailure::Invalid(Error::Parse("config needs a `synth` section".into())))?;
    let settings = SynthSettings::default();

    let noise = || -> Result<_> {
        inv.config
            .noise
            .as_ref()
            .ok_or_else(|| Error::Parse("config needs a `noise` section".into()))?
            .build(&base, n, t)
    };

    let controller = match synth_cfg.kind {
        SynthKind::Stab => {
            let model = noise().map_err(SynthFailure::Invalid)?;
            synth_stab(&p.x_plus, &p.x_minus, &p.u_minus, &model, &settings)?
        }
        SynthKind::StabMulti => {
            let eps = synth_cfg.eps.ok_or_else(|| {
                SynthFailure::Invalid(Error::Parse("stab-multi needs `synth.eps`".into()))
            })?;
            synth_stab_multi(&p.x_plus, &p.x_minus, &p.u_minus, eps, &settings)?
        }
        SynthKind::H2 | SynthKind::Hinf => {
            let model = noise().map_err(SynthFailure::Invalid)?;
            let sys_files = inv.config.system.as_ref().ok_or_else(|| {
                SynthFailure::Invalid(Error::Parse(
                    "performance synthesis needs `system.c` (and optionally `system.d`)".into(),
                ))
            })?;
            let spec = sys_files
                .load_performance(&base, synth_cfg.gamma)
                .map_err(SynthFailure::Invalid)?
                .ok_or_else(|| {
                    SynthFailure::Invalid(Error::Parse("missing performance output files".into()))
                })?;
            if synth_cfg.kind == SynthKind::H2 {
                synth_h2(&p.x_plus, &p.x_minus, &p.u_minus, &model, &spec, None, &settings)?
            } else {
                synth_hinf(&p.x_plus, &p.x_minus, &p.u_minus, &model, &spec, &settings)?
            }
        }
    };

    // The consistency form for verification; the multi design has no
    // aggregated model, so fall back to the per-sample aggregate.
    let model_for_verify = match synth_cfg.kind {
        SynthKind::StabMulti => noisy_synth_core::noise::NoiseModel::from_sample_norm_bound(
            synth_cfg.eps.unwrap(),
            n,
            t,
        )
        .map_err(SynthFailure::Invalid)?,
        _ => noise().map_err(SynthFailure::Invalid)?,
    };
    let n_form = build_n(&p.x_plus, &p.x_minus, &p.u_minus, &model_for_verify)
        .map_err(SynthFailure::Invalid)?;
    Ok(SynthArtifacts { controller, n_form })
}

/// Synthesize a controller from the configured data and noise model,
/// writing `controller.json`, `verify.json`, `report.json` and the
/// provenance record.
pub fn cmd_synth(inv: &Invocation) -> std::result::Result<(), SynthFailure> {
    let base = inv.base();
    let artifacts = run_synthesis(inv)?;
    let ctrl = &artifacts.controller;

    std::fs::create_dir_all(&inv.out).map_err(|e| SynthFailure::Invalid(e.into()))?;
    write_json(&inv.out, "controller.json", &ctrl.to_json()).map_err(SynthFailure::Invalid)?;

    let samples = inv
        .config
        .verify
        .as_ref()
        .and_then(|v| v.samples)
        .unwrap_or(500);
    let spec = match (&inv.config.system, &inv.config.synth) {
        (Some(sf), Some(sc)) => sf
            .load_performance(&base, sc.gamma)
            .map_err(SynthFailure::Invalid)?,
        _ => None,
    };
    let verify_report = robust_verify(ctrl, &artifacts.n_form, spec.as_ref(), samples, inv.seed)
        .map(|r| serde_json::to_value(&r).expect("report serializes"))
        .unwrap_or_else(|e| json!({ "skipped": format!("{e}") }));
    write_json(&inv.out, "verify.json", &verify_report).map_err(SynthFailure::Invalid)?;

    // True-system diagnostics when the plant is supplied.
    let mut report = json!({
        "beta": ctrl.beta,
        "gamma_achieved": ctrl.gamma_achieved,
        "flags": ctrl.flags,
        "slater": ctrl.slater.as_ref().map(|s| s.satisfied()),
    });
    if let Some(sf) = &inv.config.system {
        if let Ok(sys) = sf.load_pair(&base) {
            let a_cl = &sys.a + &sys.b * &ctrl.k;
            report["true_system"] = json!({
                "spectral_radius": spectral_radius(&a_cl),
                "stable": spectral_radius(&a_cl) < 1.0,
            });
            if let Some(s) = &spec {
                if spectral_radius(&a_cl) < 1.0 {
                    if let Ok(cl) = ClosedLoop::from_parts(&sys, &ctrl.k, Some(s)) {
                        if let Ok(h2) = noisy_synth_core::verify::h2_norm(&cl) {
                            report["true_system"]["h2_norm"] = json!(h2);
                        }
                    }
                }
            }
        }
    }
    write_json(&inv.out, "report.json", &report).map_err(SynthFailure::Invalid)?;

    let mut prov = inv.provenance("synth").map_err(SynthFailure::Invalid)?;
    if let Some(data) = &inv.config.data {
        prov.record_input(&base.join(&data.trajectory))
            .map_err(SynthFailure::Invalid)?;
    }
    if let Some(s) = &ctrl.slater {
        prov.slater_satisfied = Some(s.satisfied());
        prov.slater_positive_eigenvalues = Some(s.positive_eigenvalues);
    }
    prov.write(&inv.out).map_err(SynthFailure::Invalid)?;
    Ok(())
}

/// Re-verify a previously produced controller against the configured data
/// and noise model.
pub fn cmd_verify(inv: &Invocation) -> Result<()> {
    let base = inv.base();
    let dataset = load_dataset(inv)?;
    let p = dataset.partition();
    let model = inv
        .config
        .noise
        .as_ref()
        .ok_or_else(|| Error::Parse("config needs a `noise` section".into()))?
        .build(&base, dataset.state_dim(), dataset.horizon())?;
    let n_form = build_n(&p.x_plus, &p.x_minus, &p.u_minus, &model)?;

    let verify_cfg = inv.config.verify.as_ref();
    let ctrl_path = verify_cfg
        .and_then(|v| v.controller.clone())
        .unwrap_or_else(|| PathBuf::from("controller.json"));
    let text = std::fs::read_to_string(base.join(&ctrl_path))
        .map_err(|e| Error::Parse(format!("{}: {e}", ctrl_path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("controller.json: {e}")))?;
    let ctrl = Controller::from_json(&value)?;

    let samples = verify_cfg.and_then(|v| v.samples).unwrap_or(500);
    let spec = match (&inv.config.system, &inv.config.synth) {
        (Some(sf), sc) => sf.load_performance(&base, sc.as_ref().and_then(|s| s.gamma))?,
        _ => None,
    };
    let report = robust_verify(&ctrl, &n_form, spec.as_ref(), samples, inv.seed)?;
    write_json(
        &inv.out,
        "verify.json",
        &serde_json::to_value(&report).expect("report serializes"),
    )?;

    let mut prov = inv.provenance("verify")?;
    prov.record_input(&base.join(&ctrl_path))?;
    prov.write(&inv.out)?;
    Ok(())
}

/// Multiplier search / falsification on explicit `(M, N)` CSV forms.
pub fn cmd_slemma_check(inv: &Invocation) -> Result<()> {
    let base = inv.base();
    let section = inv
        .config
        .slemma
        .as_ref()
        .ok_or_else(|| Error::Parse("config needs a `slemma` section".into()))?;
    let m = QmiForm::new(SymMatrix::new(io::read_matrix(&base.join(&section.m))?)?, section.k)?;
    let n = QmiForm::new(SymMatrix::new(io::read_matrix(&base.join(&section.n))?)?, section.k)?;
    let budget = section.budget.unwrap_or(10_000);

    let (cert, form_label) = match section.form.as_str() {
        "nonstrict" => (find_multiplier(&m, &n, ImplicationForm::Nonstrict)?, "nonstrict"),
        "strict" => (find_multiplier(&m, &n, ImplicationForm::Strict)?, "strict"),
        "structured" => (find_multiplier_structured(&m, &n)?, "structured"),
        other => {
            return Err(Error::Parse(format!(
                "slemma.form must be nonstrict|strict|structured, got {other:?}"
            )));
        }
    };

    std::fs::create_dir_all(&inv.out)?;
    let verdict = match &cert {
        Some(c) => {
            println!(
                "certificate: alpha = {}, beta = {:?}, margin = {:.3e}",
                c.alpha, c.beta, c.margin
            );
            json!({
                "form": form_label,
                "verdict": "certificate",
                "alpha": c.alpha,
                "beta": c.beta,
                "margin": c.margin,
            })
        }
        None => {
            let conclusion = if form_label == "nonstrict" {
                ImplicationForm::Nonstrict
            } else {
                ImplicationForm::Strict
            };
            match falsify_implication(&m, &n, budget, inv.seed, conclusion)? {
                FalsifyOutcome::Counterexample(z) => {
                    println!("counterexample found; written to counterexample.csv");
                    println!("{}", io::format_matrix(&z));
                    io::write_matrix(&inv.out.join("counterexample.csv"), &z)?;
                    json!({
                        "form": form_label,
                        "verdict": "counterexample",
                        "counterexample_csv": "counterexample.csv",
                    })
                }
                FalsifyOutcome::NoneFound { tested } => {
                    println!("no certificate and no counterexample in {tested} samples");
                    json!({
                        "form": form_label,
                        "verdict": "undecided",
                        "samples_tested": tested,
                    })
                }
                FalsifyOutcome::Inconclusive { accepted, attempted } => {
                    println!(
                        "sampling inconclusive: {accepted} of {attempted} draws hit the hypothesis set"
                    );
                    json!({
                        "form": form_label,
                        "verdict": "inconclusive",
                        "accepted": accepted,
                        "attempted": attempted,
                    })
                }
            }
        }
    };
    write_json(&inv.out, "verdict.json", &verdict)?;

    let mut prov = inv.provenance("slemma check")?;
    prov.record_input(&base.join(&section.m))?;
    prov.record_input(&base.join(&section.n))?;
    prov.write(&inv.out)?;
    Ok(())
}

/// Run one of the named studies and write its report (plus plot CSV for
/// the aircraft curve).
pub fn cmd_exp(inv: &Invocation, name: &str, trials_flag: Option<usize>) -> Result<()> {
    let trials = trials_flag
        .or_else(|| {
            inv.config
                .experiment
                .as_ref()
                .and_then(|e| e.trials)
        })
        .unwrap_or(100);
    std::fs::create_dir_all(&inv.out)?;
    match name {
        "stabilization-sweep" => {
            let report = experiments::exp_stabilization_sweep(inv.seed, trials)?;
            for row in &report.rows {
                println!(
                    "eps = {:<4}  success = {:>3}/{}  slater-count = {}/{}",
                    row.epsilon, row.successes, row.trials, row.slater_count, row.trials
                );
            }
            write_json(
                &inv.out,
                "report.json",
                &serde_json::to_value(&report).expect("report serializes"),
            )?;
        }
        "aircraft-h2" => {
            let report = experiments::exp_aircraft_h2(inv.seed)?;
            println!(
                "benchmark gamma = {:.4}; achieved gamma^2 at T = {}: {:.4}",
                report.benchmark_gamma, report.horizon, report.achieved_sq_at_full_horizon
            );
            std::fs::write(
                inv.out.join("plot.csv"),
                experiments::aircraft_plot_csv(&report),
            )?;
            write_json(
                &inv.out,
                "report.json",
                &serde_json::to_value(&report).expect("report serializes"),
            )?;
        }
        "comparison" => {
            let report = experiments::exp_comparison()?;
            println!(
                "consistency design: {} (K = {:.3}); competing designs: {} / {}",
                report.consistency_design, report.gain, report.depersis, report.berberich
            );
            write_json(
                &inv.out,
                "report.json",
                &serde_json::to_value(&report).expect("report serializes"),
            )?;
        }
        other => {
            return Err(Error::Parse(format!(
                "unknown experiment {other:?} (expected stabilization-sweep, aircraft-h2, comparison)"
            )));
        }
    }
    let prov = inv.provenance(&format!("exp {name}"))?;
    prov.write(&inv.out)?;
    Ok(())
}

/// Map a synthesis failure onto the exit-code contract.
pub fn synth_exit_code(f: &SynthFailure) -> i32 {
    match f {
        SynthFailure::NotInformative { .. } => EXIT_NOT_INFORMATIVE,
        SynthFailure::Indeterminate { .. } => EXIT_INDETERMINATE,
        SynthFailure::Invalid(_) => EXIT_CONFIG,
    }
}

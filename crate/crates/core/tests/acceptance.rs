//! End-to-end acceptance run. Every criterion prints one PASS/FAIL line; the
//! process exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use roughflow_core::field::{BallIndicator, GridField3, PlaneWave, UniformGrid};
use roughflow_core::flow1d::{scaling_study_1d, AlphaSpec, MultiSpeedForce, Study1dConfig};
use roughflow_core::flow3d::{
    flow_map, jacobian_estimate, semigroup_residual, Box6, Ensemble,
};
use roughflow_core::harness::{
    build_force, cone_study, dispersion_run, maximal_fields, maximal_laws, maximal_operator, maximal_probes,
    occupation_scan, qdelta_study, run_experiment, ConeStudy, ExperimentConfig, OperatorChoice, QDeltaStudy,
};
use roughflow_core::maximal::{geometric_radii, lp_operator_norm_scan};
use roughflow_core::models::smooth_force;
use roughflow_core::rng::{self, Purpose};
use roughflow_core::wave::wave_op;
use roughflow_core::{SphereRule, Vector3};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_text(text).expect("acceptance config is valid")
}

fn measure_preservation() -> Outcome {
    let force = smooth_force();
    let ens = Ensemble::sample(Box6::symmetric(1.0, 1.0), 200, 11);
    let flow = flow_map(&force, 0.0, 1.0, 1e-3);
    let worst = ens
        .points
        .iter()
        .map(|p| (jacobian_estimate(&flow, p, 1e-4).unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    outcome(worst < 1e-4, format!("max |det DΦ − 1| = {worst:.3e} over 200 points"))
}

fn semigroup() -> Outcome {
    let force = smooth_force();
    let mut r = rng::stream(12, Purpose::MonteCarlo, 0);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let p = Ensemble::point(&Box6::symmetric(1.0, 1.0), 12, i);
        let t = r.random::<f64>();
        let s = r.random::<f64>();
        worst = worst.max(semigroup_residual(&force, p, t, s, 1e-3).unwrap());
    }
    outcome(worst < 1e-6, format!("max residual {worst:.3e} over 100 splits"))
}

fn cone_config() -> ExperimentConfig {
    cfg("experiment = cone_verify\nn_trajectories = 10\nn_samples = 1000\ndt = 1e-3\nvolume_samples = 100000\nseed = 3")
}

fn cone_roundtrip(study: &ConeStudy) -> Outcome {
    let failures = study.probes.iter().filter(|p| p.status != "ok").count();
    let roundtrip = study.probes.iter().filter_map(|p| p.roundtrip).fold(0.0, f64::max);
    let coverage = study.domains.iter().map(|d| d.coverage).fold(1.0, f64::min);
    let violation = study
        .domains
        .iter()
        .map(|d| d.max_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        failures == 0 && roundtrip < 1e-8 && coverage >= 0.999 && violation <= 1e-3,
        format!(
            "{} probes, {failures} failed, max round trip {roundtrip:.3e}, min coverage {coverage}, max outward violation {violation:.3e}",
            study.probes.len()
        ),
    )
}

fn cone_gradients(study: &ConeStudy) -> Outcome {
    let grad = study
        .probes
        .iter()
        .flat_map(|p| [p.rel_err_s, p.rel_err_omega])
        .flatten()
        .fold(0.0, f64::max);
    let n = study.probes.iter().filter(|p| p.rel_err_s.is_some()).count();
    outcome(
        n >= 1000 && grad < 1e-4 && study.static_gradient_error <= 1e-12,
        format!(
            "max relative error {grad:.3e} over {n} probes, trajectory at rest {:.3e}",
            study.static_gradient_error
        ),
    )
}

fn jacobian_density(study: &ConeStudy) -> Outcome {
    let v = &study.volume;
    let rel = (v.estimate - v.exact).abs() / v.exact;
    outcome(
        rel <= 0.02,
        format!(
            "∫1/J = {:.5} vs 4πt = {:.5} (rel {rel:.2e}, std err {:.2e}, 1e5 samples)",
            v.estimate, v.exact, v.std_error
        ),
    )
}

fn wave_multiplier() -> Outcome {
    let rule = SphereRule::new(30).unwrap();
    let mut r = rng::stream(6, Purpose::MonteCarlo, 0);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = 0.2 + 4.8 * r.random::<f64>();
        let xi = rng::unit_vector3(&mut r) * k;
        let t = 10.0 / k * r.random::<f64>();
        if t == 0.0 {
            continue;
        }
        let x = Vector3::from_fn(|_, _| 2.0 * r.random::<f64>() - 1.0);
        let got = wave_op(&PlaneWave::new(xi), &rule, t, &x);
        let want = 4.0 * PI * (k * t).sin() / k * xi.dot(&x).cos();
        worst = worst.max((got - want).abs() / (4.0 * PI * t));
    }
    outcome(worst < 1e-6, format!("max error / 4πt = {worst:.3e} for t|ξ| ≤ 10, order 30"))
}

fn dispersive_decay() -> Outcome {
    let p = dispersion_run(&cfg("experiment = dispersion\nfield = ball\ns_grid = 4, 8, 16, 32\nn_samples = 4000")).unwrap();
    let slope = p.slope.unwrap_or(f64::NAN);
    outcome(
        slope <= -0.6 && !p.under_resolved,
        format!("fitted slope {slope:.4} over s = 4..32"),
    )
}

fn maximal_round(spacing: f64) -> (f64, Vec<f64>, f64, f64, f64) {
    // Shells and spheres share one radius set; the evaluation lattice (spacing 0.5)
    // is the same at both resolutions.
    let radii: Vec<String> = geometric_radii(0.25, 3.0, 1.25).iter().map(|r| r.to_string()).collect();
    let stride = (0.5 / spacing).round() as usize;
    let c = cfg(&format!(
        "experiment = maximal_scan\noperator = shell\nwidths = 0.8, 0.4\ngrid_half = 4\ngrid_spacing = {spacing}\n\
         r_min = 0.25\nr_max = 3\nradius_ratio = 1.25\nshell_eps = {}\neta_fractions = 0.1, 0.5, 1\nseed = 8",
        radii.join(", ")
    ));
    let fields = maximal_fields(&c).unwrap();
    let shell = maximal_operator(&c, OperatorChoice::Shell).unwrap();
    let spherical = maximal_operator(&c, OperatorChoice::Spherical).unwrap();
    let g = &fields[0].1;
    let h = &fields[1].1;
    let probes = maximal_probes(g.grid(), 1000, 8);
    let laws = maximal_laws(&shell, &spherical, g, h, &probes).unwrap();
    let grids: Vec<GridField3> = fields.into_iter().map(|f| f.1).collect();
    let ratios = lp_operator_norm_scan(&shell, &grids, 2.0, stride).unwrap();
    (laws.domination, ratios, laws.homogeneity, laws.sublinearity, laws.monotonicity)
}

fn maximal_operator_laws() -> Outcome {
    let (c0, r0, hom0, sub0, mono0) = maximal_round(0.25);
    let (c1, r1, hom1, sub1, mono1) = maximal_round(0.125);
    let stable = |a: f64, b: f64| (b / a - 1.0).abs() <= 0.2;
    let ratios_stable = r0.iter().zip(&r1).all(|(a, b)| stable(*a, *b));
    let laws = hom0 == 0.0 && hom1 == 0.0 && sub0.max(sub1) <= 1e-12 && mono0.max(mono1) <= 1e-12;
    outcome(
        laws && stable(c0, c1) && ratios_stable,
        format!(
            "homogeneity residual {:.1e}, sublinearity {:.1e}, monotonicity {:.1e}; c = {c0:.4} → {c1:.4}; L² ratios {r0:.4?} → {r1:.4?}",
            hom0.max(hom1),
            sub0.max(sub1),
            mono0.max(mono1)
        ),
    )
}

fn rough_study() -> QDeltaStudy {
    let c = cfg("experiment = qdelta3d\nfield = rough\ndomain_x = -28, 28\ndomain_v = -1, 1\nn_samples = 10000\ndt = 1e-3\nseed = 1");
    let force = build_force(&c);
    qdelta_study(&c, &*force).unwrap()
}

fn chebyshev_truncation(s: &QDeltaStudy) -> Outcome {
    let slope = s.omega_k_slope.unwrap_or(f64::NAN);
    let fractions: Vec<f64> = s.reports[..6].iter().map(|r| r.omega_k_fraction).collect();
    outcome(
        (-2.3..=-1.7).contains(&slope),
        format!("excluded-fraction exponent {slope:.3}, fractions {fractions:.3?}"),
    )
}

fn q_sublinearity(s: &QDeltaStudy) -> Outcome {
    let Ok(fit) = &s.psi_fit else {
        return outcome(false, "fit failed");
    };
    let trend = fit.psi.as_ref().unwrap();
    let first = trend.ratios.first().copied().unwrap_or(f64::NAN);
    let last = trend.ratios.last().copied().unwrap_or(f64::NAN);
    outcome(
        trend.nonincreasing && last < 0.5 * first,
        format!(
            "Q/(T·(−log δ)) nonincreasing within 10%: {}, last/first = {:.3}",
            trend.nonincreasing,
            last / first
        ),
    )
}

fn i_delta_growth(s: &QDeltaStudy) -> Outcome {
    match &s.i_delta_fit {
        Ok(fit) => outcome(fit.slope <= 1.2, format!("fitted exponent {:.4} at K = 64", fit.slope)),
        Err(e) => outcome(false, format!("fit failed: {e}")),
    }
}

fn occupation_bound() -> Outcome {
    let alpha = AlphaSpec::identity();
    let force = MultiSpeedForce::default_instance(2.5, 64).unwrap();
    let ks: Vec<f64> = (1..=6).map(|j| 2f64.powi(j)).collect();
    let scan = |n: usize| {
        occupation_scan(&alpha, &force, (-1.0, 1.0), (-0.5, 1.5), n, 1, 2.0, 1e-3, force.speeds()[0], 0.02, &ks)
            .unwrap()
    };
    let constant = |rows: &[roughflow_core::harness::OccupationRow]| rows.iter().map(|r| r.scaled).fold(0.0, f64::max);
    let small = scan(1000);
    let large = scan(2000);
    let (a, b) = (constant(&small), constant(&large));
    let scaled: Vec<f64> = large.iter().map(|r| r.scaled).collect();
    outcome(
        a > 0.0 && (b / a - 1.0).abs() <= 0.25,
        format!("max fraction·K = {a:.4} (N = 1000) vs {b:.4} (N = 2000); fraction·K at N = 2000: {scaled:.3?}"),
    )
}

fn r_scaling() -> Outcome {
    let alpha = AlphaSpec::identity();
    let force = MultiSpeedForce::default_instance(2.5, 64).unwrap();
    let report = scaling_study_1d(&alpha, &force, &Study1dConfig::default()).unwrap();
    let exponent = report.fitted_exponent.unwrap_or(f64::NAN);
    let medians: Vec<f64> = report.rows.iter().map(|r| r.median_delta_bar_t).collect();
    let nonincreasing = medians.windows(2).all(|w| w[1] <= w[0]);
    let decreasing = nonincreasing && medians.last() < medians.first();
    outcome(
        exponent <= 0.9 && decreasing,
        format!("fitted exponent {exponent:.4}; median δ̄(T) {medians:.4?}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let grid_path = dir.path().join("ball.grid");
    GridField3::sample(
        UniformGrid::centered_cube(2.0, 0.25),
        &BallIndicator {
            center: Vector3::zeros(),
            radius: 1.0,
        },
    )
    .unwrap()
    .save(&grid_path)
    .unwrap();
    let configs = [
        "experiment = qdelta3d\nfield = rough\ndomain_x = -28, 28\nn_samples = 200\ndt = 1e-2".to_string(),
        "experiment = rdelta1d\nn_samples = 40\ndt = 1e-3\nn_speeds = 16\ndump_points = 3".to_string(),
        "experiment = dispersion\nn_samples = 500\nquad_order = 200".to_string(),
        "experiment = maximal_scan\nwidths = 0.8\ngrid_half = 3\ngrid_spacing = 0.5\nn_samples = 50".to_string(),
        "experiment = cone_verify\nn_trajectories = 3\nn_samples = 30\ndt = 1e-2\nvolume_samples = 2000".to_string(),
        format!("experiment = field_check\ngrid_paths = {}", grid_path.display()),
    ];
    let mut mismatches = Vec::new();
    for text in &configs {
        let c = cfg(text);
        let bytes = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let r = pool.install(|| run_experiment(&c)).unwrap();
            let mut out = r.table.to_csv();
            out.extend(r.summary_json());
            for (_, e) in &r.extras {
                out.extend(e);
            }
            out
        };
        let first = bytes(1);
        if first != bytes(1) || first != bytes(3) {
            mismatches.push(c.experiment.name());
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("6 experiment kinds rerun on 1 and 3 workers; mismatched: {mismatches:?}"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = run();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        println!(
            "criterion {n:2} {verdict} {name}: {} [{:.1} s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "measure preservation", &mut measure_preservation);
    report(2, "semigroup", &mut semigroup);
    let cone = cone_study(&cone_config(), &*build_force(&cone_config())).unwrap();
    report(3, "cone inversion round trip", &mut || cone_roundtrip(&cone));
    report(4, "analytic chart gradients", &mut || cone_gradients(&cone));
    report(5, "jacobian density volume identity", &mut || jacobian_density(&cone));
    report(6, "wave multiplier", &mut wave_multiplier);
    report(7, "dispersive decay", &mut dispersive_decay);
    report(8, "maximal-operator laws", &mut maximal_operator_laws);
    let rough = rough_study();
    report(9, "chebyshev truncation", &mut || chebyshev_truncation(&rough));
    report(10, "Q sublinearity", &mut || q_sublinearity(&rough));
    report(11, "I growth", &mut || i_delta_growth(&rough));
    report(12, "occupation bound", &mut occupation_bound);
    report(13, "R scaling", &mut r_scaling);
    report(14, "determinism", &mut determinism);
    if failed > 0 {
        println!("{failed} of 14 criteria failed");
        std::process::exit(1);
    }
    println!("all 14 criteria passed");
}

use std::fs;

use proptest::prelude::*;

use gesfem::experiment::{converge, meshgen, run, ExperimentConfig, Ladder, Mode, Simulation};
use gesfem::geometry::U0Preset;
use gesfem::mesh::{read_off, ImplicitSurface, SurfaceKind};
use gesfem::model::ModelSpec;
use gesfem::stepper::{BootstrapMode, Scheme, StepOptions};
use gesfem::Error;

fn ellipsoid() -> SurfaceKind {
    SurfaceKind::Ellipsoid { a: 2.0, b: 1.0, c: 1.0 }
}

fn small_ellipsoid_run(model: ModelSpec, scheme: Scheme) -> ExperimentConfig {
    ExperimentConfig {
        surface: ellipsoid(),
        level: 1,
        scheme,
        model,
        initial_u: None,
        tau: 0.01,
        t_end: 0.05,
        bootstrap: BootstrapMode::Substep { log2_refinement: None },
        ..ExperimentConfig::radial(2.0, 1, 0.01, 0.05)
    }
}

#[test]
fn radial_run_tracks_exact_radius() {
    // R(1) = 13^{-1/2} for alpha = 2, R0 = u0 = 1
    let summary = run(&ExperimentConfig::radial(2.0, 3, 1e-2, 1.0), None).unwrap();
    let exact = 13f64.powf(-0.5);
    assert_eq!(summary.steps, 100);
    assert!((summary.t - 1.0).abs() < 1e-12);
    assert!((summary.mean_radius - exact).abs() < 0.01 * exact, "{}", summary.mean_radius);
    assert!((summary.exact_radius.unwrap() - exact).abs() < 1e-12);
    assert!(summary.max_errors.is_some());
}

#[test]
fn frozen_model_keeps_positions() {
    let cfg = small_ellipsoid_run(ModelSpec::Frozen { d0: 1.0 }, Scheme::P1);
    let mut sim = Simulation::new(&cfg).unwrap();
    let x0 = sim.state().x.clone();
    while !sim.is_finished().unwrap() {
        sim.advance().unwrap();
    }
    let drift = sim
        .state()
        .x
        .iter()
        .zip(&x0)
        .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max);
    assert!(drift < 1e-8, "{drift}");
}

#[test]
fn runs_are_deterministic() {
    let cfg = small_ellipsoid_run(ModelSpec::GradientFlow { alpha: 2.0, d0: 1.0 }, Scheme::P2);
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run(&cfg, Some(d1.path())).unwrap();
    run(&cfg, Some(d2.path())).unwrap();
    let a = fs::read(d1.path().join("monitor.csv")).unwrap();
    let b = fs::read(d2.path().join("monitor.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn run_writes_monitor_and_snapshots() {
    let mut cfg = small_ellipsoid_run(ModelSpec::GradientFlow { alpha: 1.0, d0: 1.0 }, Scheme::P1);
    cfg.output_every = 2;
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&cfg, Some(dir.path())).unwrap();
    let csv = fs::read_to_string(dir.path().join("monitor.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,mass,energy,u_min,u_max,H_min,area,nu_min,nu_max");
    // two start levels plus four steps
    assert_eq!(lines.count(), 6);
    assert_eq!(summary.rows.len(), 6);
    for name in ["snapshot_00000.vtk", "snapshot_00002.vtk", "snapshot_00004.vtk", "snapshot_00005.vtk"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with("# vtk DataFile"), "{name}");
        for field in ["u", "V", "H", "normal_length"] {
            assert!(text.contains(&format!("SCALARS {field} ")), "{name} lacks {field}");
        }
    }
}

#[test]
fn converge_space_table_is_reproducible() {
    let mut cfg = ExperimentConfig::radial(1.0, 1, 0.01, 0.1);
    cfg.mode = Mode::ConvergeSpace;
    cfg.ladder = Ladder {
        levels: vec![1, 2],
        taus: Vec::new(),
    };
    let a = converge(&cfg).unwrap();
    let b = converge(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.rungs.len(), 2);
    assert_eq!(a.eocs.len(), 1);
    assert!(a.rungs[1].size < a.rungs[0].size);
    // at this step size only x and n are dominated by the mesh
    let ex = a.eoc_of("x").unwrap();
    let en = a.eoc_of("n").unwrap();
    assert!(ex[0] > 1.0 && en[0] > 2.0, "{a}");
    let csv = a.to_csv();
    assert!(csv.starts_with("level,tau,h,err_x,eoc_x,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn converge_time_needs_radial_setup() {
    let mut cfg = small_ellipsoid_run(ModelSpec::GradientFlow { alpha: 2.0, d0: 1.0 }, Scheme::P1);
    cfg.mode = Mode::ConvergeTime;
    cfg.ladder.taus = vec![0.01, 0.005];
    assert!(matches!(converge(&cfg), Err(Error::Config(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = ExperimentConfig::radial(2.0, 2, 0.01, 0.1);
    let cases: Vec<ExperimentConfig> = vec![
        ExperimentConfig { tau: 0.0, ..base.clone() },
        ExperimentConfig { t_end: -1.0, ..base.clone() },
        ExperimentConfig { degree: 3, ..base.clone() },
        ExperimentConfig { q: 6, ..base.clone() },
        ExperimentConfig { q: 0, ..base.clone() },
        ExperimentConfig {
            mode: Mode::ConvergeSpace,
            ..base.clone()
        },
        ExperimentConfig {
            initial_u: Some(U0Preset::Constant { value: -1.0 }),
            ..base.clone()
        },
        ExperimentConfig {
            surface: ellipsoid(),
            ..base.clone()
        },
    ];
    for c in cases {
        assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
    }
    let uneven = ExperimentConfig { t_end: 0.105, ..base };
    assert!(matches!(uneven.step_count(), Err(Error::Config(_))));
}

#[test]
fn unknown_fields_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::radial(2.0, 2, 0.01, 0.1).to_json()).unwrap();
    v["tua"] = serde_json::json!(0.1);
    assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::Config(_))));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 2);
}

#[test]
fn meshgen_icosphere_vertex_count() {
    // 10 * 4^level + 2 vertices
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sphere.off");
    let mesh = meshgen(SurfaceKind::Sphere { radius: 1.0 }, 2, 1, &out).unwrap();
    assert_eq!(mesh.node_count(), 162);
    let back = read_off(&out).unwrap();
    assert_eq!(back.node_count(), 162);
    assert_eq!(back.element_count(), 320);
}

#[test]
fn meshgen_ellipsoid_nodes_on_surface() {
    let dir = tempfile::tempdir().unwrap();
    let surf = ImplicitSurface::new(ellipsoid()).unwrap();
    for degree in [1, 2] {
        let out = dir.path().join(format!("ell{degree}.vtk"));
        let mesh = meshgen(ellipsoid(), 2, degree, &out).unwrap();
        let worst = mesh.nodes.iter().map(|&p| surf.value(p).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-10, "degree {degree}: {worst}");
        assert!(out.exists());
    }
}

#[test]
fn meshgen_rejects_quadratic_off() {
    let dir = tempfile::tempdir().unwrap();
    let r = meshgen(ellipsoid(), 1, 2, &dir.path().join("x.off"));
    assert!(matches!(r, Err(Error::Unsupported(_))));
}

fn arb_surface() -> impl Strategy<Value = SurfaceKind> {
    prop_oneof![
        (0.5..2.0f64).prop_map(|radius| SurfaceKind::Sphere { radius }),
        (1.0..3.0f64, 0.5..1.5f64, 0.5..1.5f64).prop_map(|(a, b, c)| SurfaceKind::Ellipsoid { a, b, c }),
    ]
}

fn arb_preset() -> impl Strategy<Value = Option<U0Preset>> {
    prop_oneof![
        Just(None),
        (0.1..5.0f64).prop_map(|value| Some(U0Preset::Constant { value })),
        (0.1..1.0f64, 1.0..5.0f64, -0.5..0.5f64, 0.1..0.5f64).prop_map(|(low, high, center, width)| Some(
            U0Preset::NeckSplit {
                high,
                low,
                center,
                width
            }
        )),
    ]
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        arb_surface(),
        0u32..5,
        1usize..=2,
        prop::bool::ANY,
        (0.0..3.0f64, 0.1..2.0f64, prop::bool::ANY),
        arb_preset(),
        1usize..=5,
        (1e-4..0.1f64, 0usize..50, 0usize..100),
        (prop::option::of(0u32..10), 1e-14..1e-6f64, prop::bool::ANY),
    )
        .prop_map(|(surface, level, degree, p2, (alpha, d0, frozen), initial_u, q, (tau, every, steps), (refine, tol, renorm))| {
            ExperimentConfig {
                surface,
                level,
                degree,
                scheme: if p2 { Scheme::P2 } else { Scheme::P1 },
                model: if frozen {
                    ModelSpec::Frozen { d0 }
                } else {
                    ModelSpec::GradientFlow { alpha, d0 }
                },
                initial_u,
                q,
                tau,
                t_end: tau * (steps + 1) as f64,
                output_every: every,
                output_dir: format!("out/{level}").into(),
                mode: Mode::Run,
                bootstrap: BootstrapMode::Substep { log2_refinement: refine },
                step: StepOptions {
                    cg_rel_tol: tol,
                    renormalize: renorm,
                    ..StepOptions::default()
                },
                ladder: Ladder::default(),
            }
        })
}

proptest! {
    #[test]
    fn config_round_trip(cfg in arb_config()) {
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

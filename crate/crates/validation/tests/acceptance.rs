//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! line per criterion and exits nonzero when any of them fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use num_rational::Ratio;

use gesfem::assembly::Assembler;
use gesfem::diagnostics::{energy_increase, min_principal_curvature, ErrorNorms, MonitorRow};
use gesfem::experiment::{converge, run, ExperimentConfig, Ladder, Mode, RunSummary, Simulation};
use gesfem::mesh::{QuadratureRule, SurfaceMesh};
use gesfem::stepper::{bdf_coefficients, Scheme};

struct Report {
    lines: Vec<(usize, Option<bool>, String)>,
}

impl Report {
    fn record(&mut self, id: usize, pass: Option<bool>, detail: String) {
        let tag = match pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "EXCLUDED",
        };
        println!("criterion {id}: {tag} {detail}");
        self.lines.push((id, pass, detail));
    }

    fn failed(&self) -> usize {
        self.lines.iter().filter(|l| l.1 == Some(false)).count()
    }
}

fn config_file(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn with_scheme(mut c: ExperimentConfig, scheme: Scheme) -> ExperimentConfig {
    c.scheme = scheme;
    c
}

fn min_of(rows: &[MonitorRow], f: impl Fn(&MonitorRow) -> f64) -> f64 {
    rows.iter().map(f).fold(f64::INFINITY, f64::min)
}

/// Named run whose monitor rows feed criteria 5 and 6.
struct Named {
    name: String,
    summary: Result<RunSummary, String>,
}

fn named(name: &str, config: &ExperimentConfig) -> Named {
    let t0 = Instant::now();
    let summary = run(config, None).map_err(|e| e.to_string());
    eprintln!("  [{name}] {:.1}s", t0.elapsed().as_secs_f64());
    Named {
        name: name.to_string(),
        summary,
    }
}

fn radial_run(alpha: f64, scheme: Scheme, tau: f64, t_end: f64, cg_rel_tol: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::radial(alpha, 3, tau, t_end);
    c.scheme = scheme;
    c.step.cg_rel_tol = cg_rel_tol;
    c
}

fn final_mass_drift(s: &RunSummary) -> f64 {
    let m0 = s.rows[0].mass;
    (s.last_row().mass - m0).abs() / m0.abs()
}

fn max_mass_drift(s: &RunSummary) -> f64 {
    gesfem::diagnostics::max_relative_mass_drift(&s.rows)
}

fn criterion_1(report: &mut Report) {
    let mut c = ExperimentConfig::radial(2.0, 1, 5e-4, 1.0);
    c.mode = Mode::ConvergeSpace;
    c.ladder = Ladder {
        levels: vec![1, 2, 3],
        taus: Vec::new(),
    };
    let t0 = Instant::now();
    match converge(&c) {
        Ok(table) => {
            eprintln!("{table}\n  [space ladder] {:.1}s", t0.elapsed().as_secs_f64());
            let mut ok = true;
            let mut parts = Vec::new();
            for (k, name) in ErrorNorms::NAMES.iter().enumerate() {
                let orders: Vec<f64> = table.eocs.iter().map(|e| e[k]).collect();
                let good = orders.iter().all(|o| (1.7..=2.6).contains(o));
                ok &= good;
                let shown: Vec<String> = orders.iter().map(|o| format!("{o:.2}")).collect();
                parts.push(format!("{name}=[{}]{}", shown.join(","), if good { "" } else { "!" }));
            }
            report.record(1, Some(ok), format!("space EOC in [1.7,2.6]: {}", parts.join(" ")));
        }
        Err(e) => report.record(1, Some(false), format!("space ladder failed: {e}")),
    }
}

fn criterion_2(report: &mut Report) {
    let mut c = ExperimentConfig::radial(2.0, 3, 0.02, 1.0);
    c.mode = Mode::ConvergeTime;
    c.ladder = Ladder {
        levels: Vec::new(),
        taus: vec![0.02, 0.01, 0.005, 0.0025],
    };
    let t0 = Instant::now();
    match converge(&c) {
        Ok(table) => {
            eprintln!("{table}\n  [time ladder] {:.1}s", t0.elapsed().as_secs_f64());
            let n = table.rungs.len();
            let mut ok = true;
            let mut parts = Vec::new();
            for (k, name) in ErrorNorms::NAMES.iter().enumerate() {
                let errs: Vec<f64> = table.rungs.iter().map(|r| r.errors.as_array()[k]).collect();
                let (lo, hi) = errs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
                // an error that barely moves across an 8x range of tau is the spatial floor
                if hi <= 1.1 * lo {
                    parts.push(format!("{name}=spatial-floor({lo:.2e})"));
                    continue;
                }
                let finest: Vec<f64> = table.eocs[n - 3..].iter().map(|e| e[k]).collect();
                let good = finest.iter().all(|o| (1.7..=2.3).contains(o));
                ok &= good;
                let shown: Vec<String> = finest.iter().map(|o| format!("{o:.2}")).collect();
                parts.push(format!("{name}=[{}]{}", shown.join(","), if good { "" } else { "!" }));
            }
            report.record(2, Some(ok), format!("time EOC in [1.7,2.3] on two finest pairs: {}", parts.join(" ")));
        }
        Err(e) => report.record(2, Some(false), format!("time ladder failed: {e}")),
    }
}

fn criterion_3(report: &mut Report, alpha2: &Named, mcf_p1: &Named) -> Option<f64> {
    let target_a = 13f64.powf(-0.5);
    let target_b = 0.2f64.sqrt();
    let rel = |r: f64, t: f64| (r - t).abs() / t;
    match (&alpha2.summary, &mcf_p1.summary) {
        (Ok(a), Ok(b)) => {
            let (ea, eb) = (rel(a.mean_radius, target_a), rel(b.mean_radius, target_b));
            report.record(
                3,
                Some(ea <= 0.01 && eb <= 0.01),
                format!(
                    "alpha=2 T=1 R={:.7} vs {target_a:.7} (rel {ea:.2e}); alpha=0 t=0.2 R={:.7} vs {target_b:.7} (rel {eb:.2e}); tol 1e-2",
                    a.mean_radius, b.mean_radius
                ),
            );
            Some(b.mean_radius)
        }
        (a, b) => {
            let err = a.as_ref().err().or(b.as_ref().err()).cloned().unwrap_or_default();
            report.record(3, Some(false), format!("run failed: {err}"));
            None
        }
    }
}

fn criterion_4(report: &mut Report, ladder: &[(f64, &Named)]) {
    let mut drifts = Vec::new();
    for (tau, n) in ladder {
        match &n.summary {
            Ok(s) => drifts.push((*tau, final_mass_drift(s), max_mass_drift(s))),
            Err(e) => {
                report.record(4, Some(false), format!("run tau={tau} failed: {e}"));
                return;
            }
        }
    }
    let orders: Vec<f64> = drifts
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    let at_1e3 = drifts.iter().find(|d| (d.0 - 1e-3).abs() < 1e-15).map(|d| d.1).unwrap_or(f64::NAN);
    let ok = orders.iter().all(|&o| o >= 2.0) && at_1e3 <= 1e-4;
    let shown: Vec<String> = drifts
        .iter()
        .map(|d| format!("tau={:.0e}:{:.3e}(max-in-time {:.3e})", d.0, d.1, d.2))
        .collect();
    let ords: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
    report.record(
        4,
        Some(ok),
        format!(
            "final relative mass drift at T=1 {} orders [{}] >= 2, drift at tau=1e-3 {at_1e3:.3e} <= 1e-4",
            shown.join(" "),
            ords.join(",")
        ),
    );
}

fn criterion_5(report: &mut Report, runs: &[&Named]) {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in runs {
        match &n.summary {
            Ok(s) => {
                let umin = min_of(&s.rows, |r| r.u_min);
                ok &= umin >= 0.0;
                parts.push(format!("{}:{umin:.3e}", n.name));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{}:failed({e})", n.name));
            }
        }
    }
    report.record(5, Some(ok), format!("min u >= 0: {}", parts.join(" ")));
}

fn criterion_6(report: &mut Report, runs: &[&Named]) {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in runs {
        match &n.summary {
            Ok(s) => match energy_increase(&s.rows, 1e-10) {
                None => parts.push(format!("{}:ok({} rows)", n.name, s.rows.len())),
                Some(i) => {
                    ok = false;
                    parts.push(format!("{}:increase at row {i}", n.name));
                }
            },
            Err(e) => {
                ok = false;
                parts.push(format!("{}:failed({e})", n.name));
            }
        }
    }
    report.record(6, Some(ok), format!("energy non-increasing (rel tol 1e-10): {}", parts.join(" ")));
}

fn criterion_7(report: &mut Report, runs: &[&Named]) {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in runs {
        match &n.summary {
            Ok(s) => {
                let hmin = min_of(&s.rows, |r| r.h_min);
                ok &= hmin >= 0.0;
                parts.push(format!("{}:H_min={hmin:.3e}", n.name));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{}:failed({e})", n.name));
            }
        }
    }
    // loss of convexity is recorded, not asserted
    let convexity = ellipsoid_min_principal_curvature()
        .map(|(k0, k1)| format!("min principal curvature {k0:.3e} at t=0, {k1:.3e} at end"))
        .unwrap_or_else(|e| format!("principal curvature unavailable: {e}"));
    report.record(7, Some(ok), format!("ellipsoid H-proxy >= 0: {}; recorded: {convexity}", parts.join(" ")));
}

fn ellipsoid_min_principal_curvature() -> gesfem::Result<(f64, f64)> {
    let c = config_file("ellipsoid.json");
    let mut sim = Simulation::new(&c)?;
    let k = |sim: &Simulation| min_principal_curvature(sim.assembler(), &sim.state().x, &sim.state().n);
    let k0 = k(&sim)?;
    while !sim.is_finished()? {
        sim.advance()?;
    }
    Ok((k0, k(&sim)?))
}

fn flat_triangle_mesh() -> SurfaceMesh {
    let nodes = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let faces = vec![vec![0, 1, 2], vec![0, 3, 1], vec![1, 3, 2], vec![0, 2, 3]];
    SurfaceMesh::new(nodes.clone(), faces.clone(), 1)
        .or_else(|_| SurfaceMesh::new(nodes, faces.into_iter().map(|f| vec![f[0], f[2], f[1]]).collect(), 1))
        .expect("tetrahedron surface")
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn criterion_8(report: &mut Report) {
    let mut failures = Vec::new();

    // right triangle (0,0,0), (1,0,0), (0,1,0) of the unit tetrahedron
    let mesh = flat_triangle_mesh();
    let asm = Assembler::new(&mesh);
    let mut elem_err = 0.0f64;
    match asm.geometry(&mesh.nodes) {
        Ok(geo) => {
            let e = (0..mesh.element_count())
                .find(|&e| mesh.element(e).iter().all(|&i| i != 3))
                .expect("face in z = 0");
            let conn = mesh.element(e).to_vec();
            let m = asm.element_mass(&geo, e);
            let a = asm.element_stiffness(&geo, e);
            let m_exact = |i: usize, j: usize| if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
            let a_exact = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
            for r in 0..3 {
                for c in 0..3 {
                    let (i, j) = (conn[r], conn[c]);
                    elem_err = elem_err
                        .max((m[r * 3 + c] - m_exact(i, j)).abs())
                        .max((a[r * 3 + c] - a_exact[i][j]).abs());
                }
            }
        }
        Err(e) => failures.push(format!("geometry: {e}")),
    }
    if elem_err > 1e-13 {
        failures.push(format!("element matrices off by {elem_err:.2e}"));
    }

    // ∫_T ξ^i η^j = i! j! / (i + j + 2)! on the reference triangle
    let mut quad_err = 0.0f64;
    for exactness in [2, 4, 6] {
        let rule = QuadratureRule::new(exactness).expect("built-in rule");
        for i in 0..=exactness {
            for j in 0..=exactness - i {
                let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                let got = rule.integrate(|p| p[0].powi(i as i32) * p[1].powi(j as i32));
                quad_err = quad_err.max((got - exact).abs());
            }
        }
    }
    if quad_err > 1e-13 {
        failures.push(format!("quadrature off by {quad_err:.2e}"));
    }

    let r = |n: i64, d: i64| Ratio::new(n, d);
    let delta_table: [Vec<Ratio<i64>>; 5] = [
        vec![r(1, 1), r(-1, 1)],
        vec![r(3, 2), r(-2, 1), r(1, 2)],
        vec![r(11, 6), r(-3, 1), r(3, 2), r(-1, 3)],
        vec![r(25, 12), r(-4, 1), r(3, 1), r(-4, 3), r(1, 4)],
        vec![r(137, 60), r(-5, 1), r(5, 1), r(-10, 3), r(5, 4), r(-1, 5)],
    ];
    let gamma_table: [Vec<i64>; 5] = [vec![1], vec![2, -1], vec![3, -3, 1], vec![4, -6, 4, -1], vec![5, -10, 10, -5, 1]];
    for q in 1..=5 {
        let bdf = bdf_coefficients(q).expect("q in range");
        let gamma: Vec<Ratio<i64>> = gamma_table[q - 1].iter().map(|&g| Ratio::from_integer(g)).collect();
        if bdf.delta_exact != delta_table[q - 1] || bdf.gamma_exact != gamma {
            failures.push(format!("BDF{q} coefficients differ"));
        }
    }

    let detail = format!(
        "element matrices max err {elem_err:.2e}, quadrature max err {quad_err:.2e} (tol 1e-13), BDF q=1..5 exact{}",
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
    );
    report.record(8, Some(failures.is_empty()), detail);
}

fn criterion_9(report: &mut Report, r_p1: Option<f64>, mcf_p2: &Named) {
    let tol = 2.0 * 0.01 * 0.2f64.sqrt();
    match (r_p1, &mcf_p2.summary) {
        (Some(a), Ok(b)) => {
            let d = (a - b.mean_radius).abs();
            report.record(
                9,
                Some(d <= tol),
                format!("alpha=0 t=0.2 |R_P1 - R_P2| = |{a:.7} - {:.7}| = {d:.2e} <= {tol:.2e}", b.mean_radius),
            );
        }
        (_, Err(e)) => report.record(9, Some(false), format!("P2 run failed: {e}")),
        (None, _) => report.record(9, Some(false), "P1 run failed".into()),
    }
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let mut report = Report { lines: Vec::new() };

    eprintln!("running shared experiments");
    let mass_ladder: Vec<(f64, Named)> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&tau| (tau, named(&format!("radial-a2-tau{tau:e}"), &radial_run(2.0, Scheme::P1, tau, 1.0, 1e-13))))
        .collect();
    let alpha2 = &mass_ladder[2].1;
    let alpha2_p2 = named("radial-a2-p2", &radial_run(2.0, Scheme::P2, 1e-3, 1.0, 1e-10));
    let mcf_p1 = named("radial-a0-p1", &radial_run(0.0, Scheme::P1, 1e-3, 0.2, 1e-10));
    let mcf_p2 = named("radial-a0-p2", &radial_run(0.0, Scheme::P2, 1e-3, 0.2, 1e-10));
    let ell_p1 = named("ellipsoid-p1", &with_scheme(config_file("ellipsoid.json"), Scheme::P1));
    let ell_p2 = named("ellipsoid-p2", &with_scheme(config_file("ellipsoid.json"), Scheme::P2));
    let dumb_p1 = named("dumbbell-p1", &with_scheme(config_file("dumbbell.json"), Scheme::P1));
    let dumb_p2 = named("dumbbell-p2", &with_scheme(config_file("dumbbell.json"), Scheme::P2));

    criterion_1(&mut report);
    criterion_2(&mut report);
    let r_p1 = criterion_3(&mut report, alpha2, &mcf_p1);
    let ladder: Vec<(f64, &Named)> = mass_ladder.iter().map(|(t, n)| (*t, n)).collect();
    criterion_4(&mut report, &ladder);
    let gradient_flow_runs = [alpha2, &alpha2_p2, &mcf_p1, &mcf_p2, &ell_p1, &ell_p2, &dumb_p1, &dumb_p2];
    criterion_5(&mut report, &[alpha2, &alpha2_p2, &ell_p1, &ell_p2, &dumb_p1, &dumb_p2]);
    criterion_6(&mut report, &gradient_flow_runs);
    criterion_7(&mut report, &[&ell_p1, &ell_p2]);
    criterion_8(&mut report);
    criterion_9(&mut report, r_p1, &mcf_p2);
    report.record(
        10,
        None,
        "absolute error magnitudes on the reference meshes and the proof-theoretic statements are not reproduced; covered by the property suites".into(),
    );

    let failed = report.failed();
    println!(
        "acceptance: {} of {} checked criteria passed ({:.0}s)",
        report.lines.iter().filter(|l| l.1 == Some(true)).count(),
        report.lines.iter().filter(|l| l.1.is_some()).count(),
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

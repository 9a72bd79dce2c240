use hsfmo::fem2d::{cantilever, FemModel, Problem};
use hsfmo::hs_bounds::{f_hs, worst_case_volume, SearchConfig1D, VolumeEstimatorKind};
use hsfmo::laminate_am::{am_solve, AmConfig};
use hsfmo::setgeom::sample_strains;
use hsfmo::sgp_solver::{local_subproblem, sgp_solve, sgp_solve_with_tables, GridTables, SgpConfig};
use hsfmo::tensor_core::{energy, PhasePair};

fn problem(n: usize, contrast: f64) -> Problem {
    let (mesh, loadcases) = cantilever(n, n, 1.0, 1.0).unwrap();
    Problem { mesh, loadcases, phases: PhasePair::from_contrast(1.0, 0.3, contrast).unwrap(), vbar: 0.2 }
}

fn coarse() -> SgpConfig {
    SgpConfig { diag_grid: 17, offdiag_grid: 17, angle_samples: 91, max_iters: 15, ..Default::default() }
}

#[test]
fn hs_design_is_admissible() {
    let pb = problem(6, 1e-2);
    let cfg = coarse();
    let out = sgp_solve(&pb, VolumeEstimatorKind::HashinShtrikman, &cfg).unwrap();
    let design = &out.iterate.design;
    let bases = design.bases.as_ref().unwrap();
    let strains = sample_strains(500, 11);
    for ((b, t), &v) in bases.iter().zip(&design.tensors).zip(&design.volumes) {
        let w = worst_case_volume(b, &pb.phases, &cfg.search).unwrap();
        assert!((w - v).abs() <= 1e-8, "{w} vs {v}");
        for e in &strains.strains {
            let bound = f_hs(e, v, &pb.phases).unwrap();
            assert!(energy(t, e) <= bound + 1e-8 * bound.abs().max(1.0));
        }
    }
}

#[test]
fn hs_multiplier_is_dual_feasible() {
    let pb = problem(6, 1e-2);
    let cfg = coarse();
    let tables = GridTables::new(pb.phases, &cfg, VolumeEstimatorKind::HashinShtrikman).unwrap();
    let out = sgp_solve_with_tables(&pb, &tables, &cfg).unwrap();
    let fem = FemModel::from_problem(&pb).unwrap();
    let last = out.log.iter().rev().find(|l| l.lambda > 0.0).unwrap();
    assert!(last.volume_residual.abs() <= 1e-3, "{}", last.volume_residual);

    let design = &out.iterate.design;
    let state = fem.solve_state(&design.tensors).unwrap();
    let sens = fem.sensitivities(&state);
    let n = design.len();
    let mean_volume = |lam: f64| {
        (0..n).map(|e| local_subproblem(&sens[e], &design.tensors[e], lam, n, &tables).1).sum::<f64>() / n as f64
    };
    let lam = out.iterate.lambda;
    let lo = mean_volume(lam * (1.0 - 1e-3));
    let hi = mean_volume(lam * (1.0 + 1e-3));
    assert!(lo >= hi);
    assert!(mean_volume(0.0) >= pb.vbar);
    assert!(mean_volume(lam * 10.0) <= pb.vbar);
}

#[test]
fn model_hierarchy_on_small_cantilever() {
    let pb = problem(6, 1e-2);
    let cfg = coarse();
    let c = |k| sgp_solve(&pb, k, &cfg).unwrap().iterate.total_compliance();
    let zo = c(VolumeEstimatorKind::ZeroOrder);
    let vo = c(VolumeEstimatorKind::Voigt);
    let hs = c(VolumeEstimatorKind::HashinShtrikman);
    assert!(zo < vo && vo < hs, "{zo} {vo} {hs}");
}

#[test]
fn am_meets_volume_and_nearly_descends() {
    let pb = problem(10, 1e-2);
    let out = am_solve(&pb, &AmConfig::default()).unwrap();
    assert!(out.converged);
    assert!((out.design.mean_volume() - pb.vbar).abs() <= 1e-8);
    for w in out.log.windows(2).skip(1) {
        assert!(w[1].compliance <= w[0].compliance * (1.0 + 1e-3), "{} -> {}", w[0].compliance, w[1].compliance);
    }
    let first = out.log[1].compliance;
    assert!(out.compliance < first);
}

#[test]
fn volume_search_is_rotation_invariant() {
    let p = PhasePair::from_contrast(1.0, 0.3, 1e-2).unwrap();
    let cfg = SearchConfig1D::default();
    let b = hsfmo::tensor_core::OrthoTensor::new(0.8, 0.2, 0.5, 0.3, 0.0);
    let v0 = worst_case_volume(&b, &p, &cfg).unwrap();
    for phi in [0.3, 1.0, std::f64::consts::FRAC_PI_2, 2.5] {
        let v = worst_case_volume(&b.with_phi(phi), &p, &cfg).unwrap();
        assert!((v - v0).abs() <= 1e-10);
    }
}

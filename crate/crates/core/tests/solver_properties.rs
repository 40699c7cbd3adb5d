mod common;

use aswarz::assembly::{assemble_hypersingular, assemble_rhs_slit};
use aswarz::precond::{build_preconditioner, LevelBlock, Preconditioner, PreconditionerKind};
use aswarz::solve::{direct_solve, gmres, spectrum};
use common::{fine_matrix, lshape_mesh, random_hierarchy, reference_gmres, slit_mesh, uniform_hierarchy};
use nalgebra::{DMatrix, DVector};

/// `B⁻¹ = A⁻¹` written as a sum of rank-one terms over eigenvectors.
fn exact_inverse(a: &DMatrix<f64>) -> Preconditioner {
    let eig = a.clone().symmetric_eigen();
    let n = a.nrows();
    let columns = (0..n)
        .map(|j| (0..n).map(|i| (i, eig.eigenvectors[(i, j)])).collect())
        .collect();
    let inv_diag = eig.eigenvalues.iter().map(|l| 1.0 / l).collect();
    let block = LevelBlock {
        level: 0,
        nodes: (0..n).collect(),
        columns,
        inv_diag,
    };
    Preconditioner::from_blocks(PreconditionerKind::Gmld, n, vec![block]).unwrap()
}

#[test]
fn exact_inverse_needs_one_step_and_has_unit_spectrum() {
    let hier = uniform_hierarchy(slit_mesh(), 3);
    let a = fine_matrix(&hier);
    let b = assemble_rhs_slit(hier.finest()).unwrap();
    let p = exact_inverse(&a);
    let (_, rep) = gmres(&a, &p, &b, 1e-8, None).unwrap();
    assert_eq!(rep.iterations, Some(1));
    let (lo, hi) = spectrum(&a, &p).unwrap();
    assert!((lo - 1.0).abs() < 1e-10 && (hi - 1.0).abs() < 1e-10);
}

#[test]
fn iteration_count_matches_reference_gmres() {
    let hier = uniform_hierarchy(slit_mesh(), 6);
    let a = fine_matrix(&hier);
    let b = assemble_rhs_slit(hier.finest()).unwrap();
    for kind in PreconditionerKind::ALL {
        let p = build_preconditioner(kind, &hier, &a).unwrap();
        let (x, rep) = gmres(&a, &p, &b, 1e-8, None).unwrap();
        let (count, x_ref) = reference_gmres(&a, &p.dense_inverse(), &b, 1e-8, 4 * a.nrows());
        assert_eq!(rep.iterations, Some(count), "{kind}");
        assert!((x - x_ref).norm() <= 1e-8 * rep.n_dofs as f64, "{kind}");
    }
}

#[test]
fn residual_history_ends_below_tolerance() {
    let hier = random_hierarchy(slit_mesh(), 5, 4);
    let a = fine_matrix(&hier);
    let b = assemble_rhs_slit(hier.finest()).unwrap();
    for kind in PreconditionerKind::ALL {
        let p = build_preconditioner(kind, &hier, &a).unwrap();
        let (x, rep) = gmres(&a, &p, &b, 1e-9, None).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.residual_history.len(), rep.iterations.unwrap() + 1);
        assert!(*rep.residual_history.last().unwrap() <= 1e-9);
        // the reported residual is the preconditioned one
        let r = p.apply_inverse(&(&b - &a * &x)).unwrap().norm() / p.apply_inverse(&b).unwrap().norm();
        assert!(r <= 1e-8, "{kind}: {r}");
    }
}

#[test]
fn gmres_agrees_with_cholesky() {
    for hier in [uniform_hierarchy(lshape_mesh(), 3), random_hierarchy(lshape_mesh(), 4, 2)] {
        let mesh = hier.finest();
        let a = assemble_hypersingular(mesh, true).unwrap().matrix;
        let b = DVector::from_fn(a.nrows(), |i, _| ((i * 7 % 5) as f64) - 2.0);
        let (xd, rep) = direct_solve(&a, &b).unwrap();
        assert!(rep.true_residual < 1e-10);
        assert_eq!(rep.iterations, None);
        for kind in PreconditionerKind::ALL {
            let p = build_preconditioner(kind, &hier, &a).unwrap();
            let (x, rep) = gmres(&a, &p, &b, 1e-8, None).unwrap();
            assert!(rep.converged);
            assert!((x - &xd).norm() <= 1e-7 * xd.norm(), "{kind}");
        }
    }
}

#[test]
fn symmetric_and_general_eigen_routes_agree() {
    let mut hier = uniform_hierarchy(lshape_mesh(), 1);
    hier.refine(&[0, 15]).unwrap();
    hier.refine(&[0]).unwrap();
    let a = fine_matrix(&hier);
    for kind in PreconditionerKind::ALL {
        let p = build_preconditioner(kind, &hier, &a).unwrap();
        let (lo, hi) = spectrum(&a, &p).unwrap();
        let general = (p.dense_inverse() * &a).complex_eigenvalues();
        let max_im = general.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        let re_min = general.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        let re_max = general.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        assert!(max_im <= 1e-10 * hi, "{kind}");
        assert!((re_min - lo).abs() <= 1e-8 * lo, "{kind}: {re_min} vs {lo}");
        assert!((re_max - hi).abs() <= 1e-8 * hi, "{kind}: {re_max} vs {hi}");
    }
}

#[test]
fn scaling_the_system_changes_nothing() {
    let hier = random_hierarchy(lshape_mesh(), 4, 8);
    let a = fine_matrix(&hier);
    let b = DVector::from_fn(a.nrows(), |i, _| (i as f64).sin());
    for kind in PreconditionerKind::ALL {
        if kind == PreconditionerKind::None {
            continue;
        }
        let p = build_preconditioner(kind, &hier, &a).unwrap();
        let sa = &a * 7.5;
        let ps = build_preconditioner(kind, &hier, &sa).unwrap();
        let (_, r1) = gmres(&a, &p, &b, 1e-8, None).unwrap();
        let (_, r2) = gmres(&sa, &ps, &(&b * 7.5), 1e-8, None).unwrap();
        assert_eq!(r1.iterations, r2.iterations, "{kind}");
        let (l1, h1) = spectrum(&a, &p).unwrap();
        let (l2, h2) = spectrum(&sa, &ps).unwrap();
        assert!(((h1 / l1) - (h2 / l2)).abs() <= 1e-10 * h1 / l1, "{kind}");
    }
}

#[test]
fn indefinite_preconditioner_is_rejected() {
    let hier = uniform_hierarchy(slit_mesh(), 2);
    let a = fine_matrix(&hier);
    let n = a.nrows();
    // a rank-deficient B⁻¹ touching a single unknown
    let block = LevelBlock {
        level: 0,
        nodes: vec![0],
        columns: vec![vec![(0, 1.0)]],
        inv_diag: vec![1.0],
    };
    let p = Preconditioner::from_blocks(PreconditionerKind::Gmld, n, vec![block]).unwrap();
    assert!(spectrum(&a, &p).is_err());
    let bad = LevelBlock {
        level: 0,
        nodes: vec![0],
        columns: vec![vec![(0, 1.0)]],
        inv_diag: vec![-1.0],
    };
    assert!(Preconditioner::from_blocks(PreconditionerKind::Gmld, n, vec![bad]).is_err());
}

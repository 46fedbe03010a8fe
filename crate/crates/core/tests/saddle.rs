mod common;

use std::sync::Arc;

use common::{gaussian, gaussian_vec, rng};
use fpdhf::ops::{FnForward, ForwardKind, SimplexIndicator, ZeroOperator};
use fpdhf::probe::probe_monotone;
use fpdhf::saddle::{build_saddle_spec, run_saddle, Bilinear, SaddleCoupling, SaddleField, SaddleProblem};
use fpdhf::{auto_method, ForwardOp, StepSizes, StopRule, Vector};
use nalgebra::{DMatrix, DVector};
use ndarray::{array, Array2, ArrayView1};

/// Zero-sum game `min_x max_y yᵀMx` over simplices, solved by enumerating
/// equal-size supports. Returns `(x, y, value)`.
fn support_enumeration(m: &Array2<f64>) -> (Vec<f64>, Vec<f64>, f64) {
    let (rows, cols) = m.dim();
    let subsets = |n: usize, k: usize| -> Vec<Vec<usize>> {
        (0u32..1 << n)
            .filter(|mask| mask.count_ones() as usize == k)
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
            .collect()
    };
    for k in 1..=rows.min(cols) {
        for sy in subsets(rows, k) {
            for sx in subsets(cols, k) {
                // x on sx makes every row in sy pay v; y on sy makes every column in sx cost v
                let mut ax = DMatrix::<f64>::zeros(k + 1, k + 1);
                let mut ay = DMatrix::<f64>::zeros(k + 1, k + 1);
                for (a, &i) in sy.iter().enumerate() {
                    for (b, &j) in sx.iter().enumerate() {
                        ax[(a, b)] = m[[i, j]];
                        ay[(b, a)] = m[[i, j]];
                    }
                    ax[(a, k)] = -1.0;
                    ay[(a, k)] = -1.0;
                    ax[(k, a)] = 1.0;
                    ay[(k, a)] = 1.0;
                }
                let mut rhs = DVector::<f64>::zeros(k + 1);
                rhs[k] = 1.0;
                let (Some(solx), Some(soly)) = (ax.lu().solve(&rhs), ay.lu().solve(&rhs)) else {
                    continue;
                };
                let mut x = vec![0.0; cols];
                let mut y = vec![0.0; rows];
                for (b, &j) in sx.iter().enumerate() {
                    x[j] = solx[b];
                }
                for (a, &i) in sy.iter().enumerate() {
                    y[i] = soly[a];
                }
                let v = solx[k];
                if x.iter().chain(&y).any(|&p| p < -1e-12) {
                    continue;
                }
                let mx: Vec<f64> = (0..rows).map(|i| (0..cols).map(|j| m[[i, j]] * x[j]).sum()).collect();
                let mty: Vec<f64> = (0..cols).map(|j| (0..rows).map(|i| m[[i, j]] * y[i]).sum()).collect();
                if mx.iter().all(|&r| r <= v + 1e-10) && mty.iter().all(|&c| c >= v - 1e-10) {
                    return (x, y, v);
                }
            }
        }
    }
    panic!("no equilibrium found");
}

#[test]
fn matrix_game_value_matches_support_enumeration() {
    let mut r = rng(3);
    let m = gaussian(3, 3, &mut r);
    let (_, _, value) = support_enumeration(&m);

    let mut sp = SaddleProblem::new(Arc::new(SimplexIndicator { dim: 3 }), Arc::new(SimplexIndicator { dim: 3 }));
    let psi = Arc::new(Bilinear::new(m.clone()));
    sp.psi = Some(psi.clone());
    let zeta = psi.lipschitz();
    let tau = 0.9 / zeta;
    let x0 = array![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
    let report = run_saddle(
        &sp,
        StepSizes::new(tau, 1.0, 0.0),
        x0,
        Vector::zeros(0),
        StopRule {
            max_iters: 200_000,
            rel_pd_tol: 1e-14,
        },
    )
    .unwrap();
    // the resolvent output z lies on the simplices
    let z = &report.final_state.z;
    let (x, y) = (z.slice(ndarray::s![..3]), z.slice(ndarray::s![3..]));
    let got = psi.value(x, y);
    assert!((got - value).abs() <= 1e-4, "value {got} vs oracle {value}");
    // duality gap of the final point
    let mx = m.dot(&x);
    let mty = m.t().dot(&y);
    let gap = mx.fold(f64::MIN, |a, &b| a.max(b)) - mty.fold(f64::MAX, |a, &b| a.min(b));
    assert!(gap <= 1e-4, "gap {gap}");
}

#[test]
fn oracle_handles_pure_strategies() {
    // saddle at entry (0, 0)
    let m = array![[1.0, 3.0], [0.0, 2.0]];
    let (x, y, v) = support_enumeration(&m);
    assert_eq!(v, 1.0);
    assert_eq!(x, vec![1.0, 0.0]);
    assert_eq!(y, vec![1.0, 0.0]);
}

#[test]
fn missing_coupling_runs_condat_vu() {
    let mut sp = SaddleProblem::new(Arc::new(ZeroOperator { dim: 2 }), Arc::new(ZeroOperator { dim: 2 }));
    sp.grad_f3 = Some(Arc::new(FnForward::new(2, ForwardKind::Cocoercive, 1.0, |x| x.to_owned())));
    let spec = build_saddle_spec(&sp).unwrap();
    assert!(spec.c().is_none());
    assert_eq!(auto_method(&spec), "condat-vu");
    sp.f2 = Some(fpdhf::saddle::DualTrack {
        prox: Arc::new(fpdhf::ops::L1Norm::new(1, 1.0)),
        map: Arc::new(fpdhf::linops::DenseMatrix::new(array![[1.0, 1.0]])),
    });
    let spec = build_saddle_spec(&sp).unwrap();
    assert_eq!(auto_method(&spec), "condat-vu");
    assert_eq!(spec.dual_dim(), 1);
    sp.psi = Some(Arc::new(Bilinear::new(array![[1.0, -1.0], [0.5, 2.0]])));
    assert_eq!(auto_method(&build_saddle_spec(&sp).unwrap()), "fpdhf");
}

/// `Ψ(x, y) = ½‖x‖² + <x, y> - ½‖y‖²`, strongly convex-concave.
struct Quadratic;

impl SaddleCoupling for Quadratic {
    fn dims(&self) -> (usize, usize) {
        (2, 2)
    }
    fn grad_x(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Vector {
        &x + &y
    }
    fn grad_y(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Vector {
        &x - &y
    }
    fn lipschitz(&self) -> f64 {
        2f64.sqrt()
    }
}

#[test]
fn convex_concave_field_is_monotone() {
    let field = SaddleField::new(Arc::new(Quadratic));
    assert!(probe_monotone(|v| field.apply(v), 4, 200, 5, 3.0) >= -1e-10);
    let mut r = rng(6);
    let bil = SaddleField::new(Arc::new(Bilinear::new(gaussian(3, 5, &mut r))));
    for _ in 0..50 {
        let v = gaussian_vec(8, &mut r);
        assert!(bil.apply(v.view()).dot(&v).abs() <= 1e-12);
    }
}

#[test]
fn dimension_mismatch_is_rejected() {
    let mut sp = SaddleProblem::new(Arc::new(ZeroOperator { dim: 2 }), Arc::new(ZeroOperator { dim: 2 }));
    sp.psi = Some(Arc::new(Bilinear::new(array![[1.0, 2.0, 3.0]])));
    assert!(build_saddle_spec(&sp).is_err());
}

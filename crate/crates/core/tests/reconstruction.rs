use laplace_cauchy::carleman::{kernel_kn, CarlemanParams};
use laplace_cauchy::geometry::{triangle_at, BaseShape, CylinderDomain};
use laplace_cauchy::oracles::{add_noise, library_solution, CauchyData, CATALOG};
use laplace_cauchy::reconstruct::{combined_dalembert, field_grid, solve_point, Path};
use laplace_cauchy::Error;
use proptest::prelude::*;

fn square() -> CylinderDomain {
    CylinderDomain::flat(BaseShape::Interval { a: 0.0, b: 1.0 }, 0.0, 1.0).unwrap()
}

fn ball(dim: usize) -> CylinderDomain {
    CylinderDomain::flat(BaseShape::Ball { center: vec![0.0; dim - 1], radius: 1.0 }, 0.0, 1.0).unwrap()
}

fn catalog_data(name: &str, dim: usize) -> CauchyData {
    CauchyData::analytic(library_solution(name, dim).unwrap())
}

fn errors(name: &str, domain: &CylinderDomain, x: &[f64], schedule: Vec<u32>) -> Vec<f64> {
    let data = catalog_data(name, domain.dim());
    let r = solve_point(x, domain, &data, &CarlemanParams::with_schedule(schedule), Path::Compositional).unwrap();
    r.oracle_errors.unwrap()
}

#[test]
fn constant_data_reconstruct_to_one() {
    let schedule: Vec<u32> = (0..=6).map(|k| 1 << k).collect();
    for x in [[0.5, 0.6], [0.3, 0.8], [0.8, 0.9]] {
        let e = errors("const1", &square(), &x, schedule.clone());
        assert!(*e.last().unwrap() < 0.05, "{x:?}: {e:?}");
    }
    let e = errors("const1", &ball(3), &[0.1, -0.2, 0.8], vec![1, 2, 4, 8, 16]);
    assert!(*e.last().unwrap() < 0.05, "{e:?}");
}

#[test]
fn re_z2_error_decreases_at_the_centre() {
    let e = errors("re_z2", &square(), &[0.5, 0.5], (0..=6).map(|k| 1 << k).collect());
    for w in e.windows(2) {
        assert!(w[1] <= w[0] || w[1] < 1e-14, "{e:?}");
    }
    assert!(e.iter().cloned().fold(f64::INFINITY, f64::min) <= 5e-2);
}

#[test]
fn points_off_the_interior_are_rejected() {
    let data = catalog_data("re_z2", 2);
    let params = CarlemanParams::with_schedule(vec![1, 2]);
    for x in [[0.5, 1.0], [0.5, 0.0], [0.0, 0.5], [0.5, 1.2]] {
        for path in [Path::Compositional, Path::Combined] {
            let r = solve_point(&x, &square(), &data, &params, path);
            assert!(matches!(r, Err(Error::Domain(_))), "{x:?} {path}: {r:?}");
        }
    }
}

/// Clean data: the error at the last N is no larger than at the first, and
/// the imaginary part stays within ten times the real error.
#[test]
fn every_catalog_oracle_improves_along_the_schedule() {
    for name in CATALOG {
        let (domain, x, schedule) = match *name {
            "saddle3d" | "point_source" => (ball(3), vec![0.1, -0.2, 0.7], vec![1, 2, 4, 8]),
            "saddle4d" => (ball(4), vec![0.1, -0.2, 0.05, 0.7], vec![1, 2, 4, 8, 16]),
            _ => (square(), vec![0.5, 0.6], vec![1, 2, 4, 8, 16]),
        };
        let data = catalog_data(name, domain.dim());
        let params = CarlemanParams::with_schedule(schedule);
        let r = solve_point(&x, &domain, &data, &params, Path::Compositional).unwrap();
        let e = r.oracle_errors.as_ref().unwrap();
        assert!(e.last().unwrap() <= &e[0], "{name}: {e:?}");
        let err = r.oracle_error.unwrap();
        assert!(r.im_residual <= 10.0 * err, "{name}: im {} vs error {err}", r.im_residual);
    }
}

#[test]
fn noisy_data_have_an_interior_error_minimum() {
    let domain = square();
    let sol = library_solution("re_z2", 2).unwrap();
    let noisy = add_noise(&CauchyData::analytic(sol.clone()), &domain, 65, 1e-3, 17).unwrap();
    let x = [0.5, 0.9];
    let r = solve_point(&x, &domain, &noisy, &CarlemanParams::default(), Path::Compositional).unwrap();
    let e: Vec<f64> = r.values_by_n.iter().map(|v| (v.re - sol.value(&x)).abs()).collect();
    let last = *e.last().unwrap();
    assert!(e.iter().any(|v| *v < last), "{e:?}");
}

/// Same `u0`, different `u1`: `u = x1^2 - x2^2 + c (x2 - 1)` on the unit
/// square for two values of `c`.
#[test]
fn different_neumann_data_give_different_solutions() {
    let domain = square();
    let data = |c: f64| {
        CauchyData::from_callbacks(2, |xp, xn| xp[0] * xp[0] - xn * xn, move |_, xn| -2.0 * xn + c)
            .with_gradient(|xp, _| vec![2.0 * xp[0]])
    };
    let params = CarlemanParams::with_schedule(vec![1, 2, 4, 8]);
    let x = [0.5, 0.7];
    let a = solve_point(&x, &domain, &data(0.0), &params, Path::Compositional).unwrap();
    let b = solve_point(&x, &domain, &data(1.0), &params, Path::Compositional).unwrap();
    let gap = (a.value() - b.value()).abs();
    assert!(gap > 10.0 * params.stop_threshold, "gap {gap}");
    // The exact gap is c (x2 - 1).
    assert!((gap - 0.3).abs() < 1e-2, "gap {gap}");
}

#[test]
fn field_grid_on_constant_data() {
    let domain = square();
    let data = catalog_data("const1", 2);
    let params = CarlemanParams::with_schedule((0..=6).map(|k| 1 << k).collect());
    let axes = vec![vec![0.3, 0.5, 0.7], vec![0.6, 0.75, 0.9]];
    let grid = field_grid(&domain, &data, &params, &axes, Path::Compositional).unwrap();
    assert_eq!(grid.len(), 9);
    for entry in &grid {
        let r = entry.result.as_ref().unwrap();
        assert!((r.value() - 1.0).abs() < 0.05, "{:?}", entry.point);
        assert!(r.oracle_error.is_some());
    }
    assert_eq!(grid[1].point, vec![0.3, 0.75]);

    let axes = vec![vec![0.5], vec![0.7, 1.5]];
    let grid = field_grid(&domain, &data, &params, &axes, Path::Compositional).unwrap();
    assert!(grid[0].result.is_ok());
    assert!(matches!(grid[1].result, Err(Error::Domain(_))));
}

/// The terms kept at `y = eps` carry `K_N(eps)`, which dies off like `exp(-N)`.
#[test]
fn kernel_at_the_rim_vanishes_along_the_schedule() {
    let domain = ball(4);
    let tri = triangle_at(&domain, &[0.1, -0.2, 0.05]).unwrap();
    let mut prev = f64::INFINITY;
    for n in [1u32, 2, 4, 8, 16, 32, 64, 128, 256] {
        let k = kernel_kn(&tri, 0.7, tri.epsilon, n).unwrap().re.abs();
        assert!(k < prev, "N={n}");
        prev = k;
    }
    assert!(prev < 1e-100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dalembert_paths_agree(x1 in 0.2f64..0.8, x2 in 0.55f64..0.95, k in 0usize..3) {
        let domain = square();
        let data = catalog_data(["re_z3", "exp_cos", "saddle"][k], 2);
        let params = CarlemanParams::with_schedule(vec![1, 2, 4]);
        let x = [x1, x2];
        let r = solve_point(&x, &domain, &data, &params, Path::Compositional).unwrap();
        for (i, n) in [1u32, 2, 4].into_iter().enumerate() {
            let c = combined_dalembert(&x, &domain, &data, n, &params).unwrap();
            let v = r.values_by_n[i];
            prop_assert!((c - v).norm() <= 1e-4 * (1.0 + v.norm()), "N={}: {} vs {}", n, c, v);
        }
    }
}

mod common;

use admix_core::asymptotics::{
    boundary_law, interior_law, project_onto_cone, projection_kkt_residual, summarize_law, ConeSpec, Law,
};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn objective(l: &DVector<f64>, z: &DVector<f64>, g: &DMatrix<f64>) -> f64 {
    let d = l - z;
    d.dot(&(g * &d))
}

fn random_instance(r: &mut impl Rng) -> (DVector<f64>, DMatrix<f64>, ConeSpec) {
    let dim = r.random_range(1..=5);
    let a = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(r));
    let gamma: DMatrix<f64> = a.transpose() * &a + DMatrix::identity(dim, dim) * 0.1;
    let z = DVector::from_fn(dim, |_, _| 2.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, r));
    let (mut k_min, mut k_max) = (Vec::new(), Vec::new());
    for j in 0..dim {
        match r.random_range(0..3) {
            0 => k_min.push(j),
            1 => k_max.push(j),
            _ => {}
        }
    }
    (z, gamma, ConeSpec::new(dim, k_min, k_max).unwrap())
}

fn clip(v: &mut DVector<f64>, cone: &ConeSpec) {
    for &j in &cone.k_min {
        v[j] = v[j].max(0.0);
    }
    for &j in &cone.k_max {
        v[j] = v[j].min(0.0);
    }
}

/// Cyclic coordinate descent on the same quadratic; exact per coordinate.
fn coordinate_descent(z: &DVector<f64>, g: &DMatrix<f64>, cone: &ConeSpec) -> DVector<f64> {
    let mut l = z.clone();
    clip(&mut l, cone);
    for _ in 0..20_000 {
        let before = l.clone();
        for j in 0..l.len() {
            // d/dl_j: 2 [G (l - z)]_j = 0
            let rest: f64 = (0..l.len()).filter(|&k| k != j).map(|k| g[(j, k)] * (l[k] - z[k])).sum();
            let mut v = z[j] - rest / g[(j, j)];
            if cone.k_min.contains(&j) {
                v = v.max(0.0);
            }
            if cone.k_max.contains(&j) {
                v = v.min(0.0);
            }
            l[j] = v;
        }
        if (&l - &before).amax() < 1e-15 {
            break;
        }
    }
    l
}

#[test]
fn projection_beats_random_feasible_points_and_satisfies_kkt() {
    let mut r = rng(70);
    for case in 0..10_000 {
        let (z, gamma, cone) = random_instance(&mut r);
        let lambda = project_onto_cone(&z, &gamma, &cone).unwrap();
        assert!(cone.contains(&lambda, 0.0), "case {case}");
        let kkt = projection_kkt_residual(&lambda, &z, &gamma, &cone);
        assert!(kkt < 1e-10, "case {case}: kkt {kkt}");
        let obj = objective(&lambda, &z, &gamma);
        for t in 0..1000 {
            let mut v = match t % 3 {
                0 => DVector::from_fn(z.len(), |_, _| 3.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r)),
                1 => &z + DVector::from_fn(z.len(), |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r)),
                _ => &lambda + DVector::from_fn(z.len(), |_, _| 1e-3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r)),
            };
            clip(&mut v, &cone);
            assert!(obj <= objective(&v, &z, &gamma), "case {case}: feasible point beats the projection");
        }
    }
}

#[test]
fn projection_matches_coordinate_descent() {
    let mut r = rng(71);
    for case in 0..500 {
        let (z, gamma, cone) = random_instance(&mut r);
        let lambda = project_onto_cone(&z, &gamma, &cone).unwrap();
        let reference = coordinate_descent(&z, &gamma, &cone);
        let gap = objective(&lambda, &z, &gamma) - objective(&reference, &z, &gamma);
        assert!(gap <= 1e-10, "case {case}: gap {gap}");
    }
}

#[test]
fn one_sided_scalar_law_has_half_atom() {
    let gamma = DMatrix::from_element(1, 1, 3.7);
    let cone = ConeSpec::new(1, vec![0], vec![]).unwrap();
    let law = boundary_law(&gamma, &cone, 100_000, 5).unwrap();
    let atom = law.atom_probability(0);
    assert!((atom - 0.5).abs() <= 0.005, "atom {atom}");
    // Continuous part is a half normal with the interior scale.
    let pos: Vec<f64> = law.marginal(0).into_iter().filter(|&v| v > 0.0).collect();
    let mean = pos.iter().sum::<f64>() / pos.len() as f64;
    let expect = (2.0 / std::f64::consts::PI).sqrt() / 3.7f64.sqrt();
    assert!((mean - expect).abs() < 0.01, "half-normal mean {mean} vs {expect}");
}

#[test]
fn independent_orthant_faces_have_product_masses() {
    let gamma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
    let cone = ConeSpec::new(2, vec![0], vec![1]).unwrap();
    let law = boundary_law(&gamma, &cone, 200_000, 6).unwrap();
    let both = law.point_masses.get(&vec![0, 1]).copied().unwrap_or(0.0);
    assert!((both - 0.25).abs() < 0.005, "both pinned {both}");
    assert!((law.continuous_mass - 0.25).abs() < 0.005);
}

#[test]
fn empty_cone_gives_the_gaussian_law() {
    let gamma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let cone = ConeSpec::unconstrained(2);
    let law = boundary_law(&gamma, &cone, 50_000, 7).unwrap();
    assert_eq!(law.continuous_mass, 1.0);
    let g = interior_law(&gamma).unwrap();
    let n = law.samples.len() as f64;
    let mean = law.samples.iter().fold(DVector::zeros(2), |a, s| a + s) / n;
    let cov = law.samples.iter().fold(DMatrix::zeros(2, 2), |a, s| a + (s - &mean) * (s - &mean).transpose()) / (n - 1.0);
    assert!(rel_err_mat(&cov, &g.covariance) < 0.03);
    let s = summarize_law(Law::Gaussian(&g), 0, 0, None, None).unwrap();
    assert_eq!(s.atom_probability, 0.0);
    assert!((s.bins.iter().map(|b| b.mass).sum::<f64>() - 1.0).abs() < 1e-3);
}

#[test]
fn law_is_thread_count_independent() {
    let gamma = DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 1.0]);
    let cone = ConeSpec::new(2, vec![0], vec![]).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| boundary_law(&gamma, &cone, 20_000, 9).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.point_masses, b.point_masses);
}

#[test]
fn relabeling_drops_the_largest_coordinate() {
    let cone = ConeSpec::from_ancestry(&[0.937166, 0.00001, 0.062824], 1e-4).unwrap();
    assert_eq!(cone.dropped, 0);
    assert_eq!(cone.labels, vec![1, 2]);
    assert_eq!(cone.k_min, vec![0]);
    assert!(cone.k_max.is_empty());
    let cone = ConeSpec::from_ancestry(&[0.00001, 0.99999], 1e-4).unwrap();
    assert_eq!(cone.labels, vec![0]);
    assert_eq!(cone.k_min, vec![0]);
}

use calmkit::cone::{ConeBlock, FaceDescriptor, ProductCone, DEFAULT_TOL_RANK};
use calmkit::sampling::{random_block, rng, structured_point};
use calmkit::Vector;
use proptest::prelude::*;

const KINDS: [(&str, usize); 5] =
    [("zero", 4), ("orthant_nonneg", 8), ("orthant_nonpos", 8), ("soc", 5), ("psd", 4)];

fn setup(seed: u64, kind: usize) -> (ProductCone, Vector, Vector, rand_chacha::ChaCha8Rng) {
    let mut r = rng(seed);
    let (name, max) = KINDS[kind];
    let block = random_block(&mut r, name, max);
    let z = structured_point(&mut r, &block);
    let h = structured_point(&mut r, &block);
    (ProductCone::single(block), z, h, r)
}

fn mixed(seed: u64) -> (ProductCone, Vector, Vector) {
    let mut r = rng(seed);
    let blocks: Vec<ConeBlock> =
        KINDS.iter().map(|(name, max)| random_block(&mut r, name, (*max).min(3))).collect();
    let cone = ProductCone::new(blocks).unwrap();
    let z = calmkit::sampling::structured_product_point(&mut r, &cone);
    let h = calmkit::sampling::structured_product_point(&mut r, &cone);
    (cone, z, h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn moreau_decomposition(seed in any::<u64>(), kind in 0..5usize) {
        let (k, z, _, _) = setup(seed, kind);
        let p = k.project(&z).unwrap();
        let q = k.project_polar_direct(&z).unwrap();
        let scale = 1.0 + z.norm();
        prop_assert!((&p + &q - &z).norm() <= 1e-9 * scale);
        prop_assert!(p.dot(&q).abs() <= 1e-9 * scale * scale);
        prop_assert!(k.violation(&p).unwrap().1 <= 1e-9 * scale);
    }

    #[test]
    fn projection_idempotent_and_nonexpansive(seed in any::<u64>(), kind in 0..5usize) {
        let (k, z, w, _) = setup(seed, kind);
        let p = k.project(&z).unwrap();
        prop_assert!((k.project(&p).unwrap() - &p).norm() <= 1e-9 * (1.0 + z.norm()));
        let pw = k.project(&w).unwrap();
        prop_assert!((&p - &pw).norm() <= (&z - &w).norm() + 1e-9);
    }

    #[test]
    fn dirderiv_matches_finite_differences(seed in any::<u64>(), kind in 0..5usize) {
        let (k, z, h, _) = setup(seed, kind);
        let d = k.proj_dirderiv(&z, &h).unwrap();
        let p = k.project(&z).unwrap();
        let t = 1e-7;
        let fd = (k.project(&(&z + &h * t)).unwrap() - &p) / t;
        prop_assert!((&fd - &d).norm() <= 1e-4 * (1.0 + h.norm()), "fd {fd} vs {d}");
    }

    #[test]
    fn dirderiv_positively_homogeneous(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let (k, z, h) = mixed(seed);
        let d1 = k.proj_dirderiv(&z, &h).unwrap();
        let d2 = k.proj_dirderiv(&z, &(&h * scale)).unwrap();
        prop_assert!((d1 * scale - d2).norm() <= 1e-9 * scale * (1.0 + h.norm()));
    }

    #[test]
    fn jacobian_elements_reproduce_values(seed in any::<u64>()) {
        let (k, z, h) = mixed(seed);
        let j = k.projection_jacobian(&z).unwrap();
        prop_assert!((&j * &z - k.project(&z).unwrap()).norm() <= 1e-8 * (1.0 + z.norm()));
        let fd = FaceDescriptor::at_projection(&k, &z, DEFAULT_TOL_RANK).unwrap();
        let jd = fd.dirderiv_jacobian(&h).unwrap();
        prop_assert!((&jd * &h - fd.proj_dirderiv(&h).unwrap()).norm() <= 1e-8 * (1.0 + h.norm()));
    }

    #[test]
    fn graph_derivative_round_trip(seed in any::<u64>()) {
        let (k, z, w) = mixed(seed);
        let y = k.project(&z).unwrap();
        let mu = &z - &y;
        let dy = k.proj_dirderiv(&z, &w).unwrap();
        let dlam = &w - &dy;
        prop_assert!(k.normal_graph_deriv_contains(&y, &mu, &dy, &dlam, 1e-8).unwrap());
    }

    #[test]
    fn critical_cone_and_polar_are_moreau_pair(seed in any::<u64>()) {
        let (k, z, h) = mixed(seed);
        let fd = FaceDescriptor::at_projection(&k, &z, DEFAULT_TOL_RANK).unwrap();
        let c = fd.project_onto_critical_cone(&h).unwrap();
        let p = fd.project_onto_critical_polar(&h).unwrap();
        prop_assert!(fd.critical_cone_contains(&c, 1e-9).unwrap());
        prop_assert!(fd.critical_polar_contains(&p, 1e-9).unwrap());
        prop_assert!(c.dot(&p).abs() <= 1e-9 * (1.0 + h.norm_squared()));
    }

    #[test]
    fn sigma_nonnegative_and_gradient_consistent(seed in any::<u64>()) {
        let (k, z, h) = mixed(seed);
        let fd = FaceDescriptor::at_projection(&k, &z, DEFAULT_TOL_RANK).unwrap();
        let c = fd.project_onto_critical_cone(&h).unwrap();
        let ups = fd.sigma_term(&c).unwrap();
        prop_assert!(ups >= -1e-12);
        // Quadratic form: ⟨∇Υ(h), h⟩ = 2Υ(h).
        let g = fd.sigma_gradient(&c).unwrap();
        prop_assert!((g.dot(&c) - 2.0 * ups).abs() <= 1e-9 * (1.0 + ups.abs()));
        let e = calmkit::sampling::gaussian_vector(&mut rng(seed ^ 1), c.len());
        let t = 1e-6;
        let fdiff = (fd.sigma_extended(&(&c + &e * t)).unwrap()
            - fd.sigma_extended(&(&c - &e * t)).unwrap()) / (2.0 * t);
        prop_assert!((fdiff - g.dot(&e)).abs() <= 1e-5 * (1.0 + g.norm()) * (1.0 + e.norm()));
    }

    #[test]
    fn normal_projection_lands_in_normal_cone(seed in any::<u64>()) {
        let (k, z, w) = mixed(seed);
        let fd = FaceDescriptor::at_projection(&k, &z, DEFAULT_TOL_RANK).unwrap();
        let y = k.project(&z).unwrap();
        let n = fd.project_onto_normal_cone(&w).unwrap();
        prop_assert!(k.normal_cone_contains(&y, &n, 1e-9).unwrap());
        prop_assert!((fd.project_onto_normal_cone(&n).unwrap() - &n).norm() <= 1e-9 * (1.0 + n.norm()));
    }
}

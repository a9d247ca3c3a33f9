use haarbcr::fastapply::{random_values, PowerOptions};
use haarbcr::kernels::{kernel_registry_get, KernelParams};
use haarbcr::nsform::{build_nsform_pyramid, split, BuildOptions};
use haarbcr::tb::{check_image, make_bsystem_indicator, run_tb_dyadic, run_tb_report, Exponent};
use haarbcr::{DenseOperator, GridSpec, LinearOp, Quadrature};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn e(v: f64) -> Exponent {
    Exponent::new(v).unwrap()
}

fn report(name: &str, g: GridSpec, p: Exponent, q: Exponent, c: f64) -> haarbcr::tb::TbReport {
    let k = kernel_registry_get(name, &KernelParams::default(), &g).unwrap();
    let sf = split(&build_nsform_pyramid(&k, &g, &BuildOptions::default()).unwrap());
    let t = DenseOperator::from_kernel(&k, &g, &Quadrature::default(), 4096).unwrap();
    let bs = make_bsystem_indicator(g, 0..g.j, p, q).unwrap();
    run_tb_report(&bs, &t, &sf, c, &PowerOptions::default()).unwrap()
}

#[test]
fn constant_kernel_closed_forms() {
    let g = GridSpec::new(2, 4).unwrap();
    let rep = report("constant", g, e(2.0), e(2.0), 2.0);
    assert!(rep.pass(), "{rep:?}");
    assert_eq!(rep.sup_normalization, 0.0);
    assert_eq!(rep.sup_size, 2.0);
    assert!(rep.t1_dyadic < 1e-12);
    for c in &rep.cubes {
        let q = 0.5f64.powi(c.j as i32);
        assert!((c.image - 2.0 * q * q).abs() < 1e-12);
        assert!(c.image_dyadic < 1e-24);
        assert!(c.reduction_holds);
    }
    // T1_Q = |Q| everywhere, so the T(1) constant is 2|Q| at the largest cube
    assert!((rep.t1 - 2.0).abs() < 1e-12);
}

#[test]
fn hilbert_report_and_reduction() {
    let g = GridSpec::new(2, 6).unwrap();
    let rep = report("truncated-hilbert", g, e(2.0), e(2.0), 10.0);
    assert!(rep.reduction_holds && rep.exponent_constraint && rep.smooth_norm_is_lp);
    assert_eq!(rep.cubes.len(), 2 * (64 - 1));
    assert!(rep.sup_image.is_finite() && rep.t1_dyadic.is_finite());
    let json = serde_json::to_string(&rep).unwrap();
    assert_eq!(json, serde_json::to_string(&report("truncated-hilbert", g, e(2.0), e(2.0), 10.0)).unwrap());
}

#[test]
fn exponent_flags() {
    let g = GridSpec::new(1, 3).unwrap();
    assert!(report("truncated-abs", g, e(4.0), e(4.0), 10.0).exponent_constraint);
    assert!(!report("truncated-abs", g, e(4.0 / 3.0), e(4.0 / 3.0), 10.0).exponent_constraint);
    let inf = report("truncated-abs", g, Exponent::INFINITY, e(2.0), 10.0);
    assert!(inf.exponent_constraint && !inf.smooth_norm_is_lp);
    assert_eq!(inf.p_dual, 1.0);
}

#[test]
fn image_check_uses_a_consistent_adjoint() {
    let g = GridSpec::new(2, 4).unwrap();
    let k = kernel_registry_get("truncated-hilbert", &KernelParams::default(), &g).unwrap();
    let t = DenseOperator::from_kernel(&k, &g, &Quadrature::default(), 4096).unwrap();
    let tt = t.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (b, h) = (random_values(g.n(), &mut rng), random_values(g.n(), &mut rng));
    let lhs: f64 = t.apply(&b).iter().zip(&h).map(|(x, y)| x * y).sum();
    let rhs: f64 = b.iter().zip(tt.apply(&h)).map(|(x, y)| x * y).sum();
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    let bs = make_bsystem_indicator(g, 0..4, e(2.0), e(3.0)).unwrap();
    let a = check_image(&bs, &t).unwrap();
    let b2 = check_image(&bs, &haarbcr::fastapply::Adjoint(&tt)).unwrap();
    for (x, y) in a.per_cube.iter().zip(&b2.per_cube) {
        assert!((x - y).abs() <= 1e-12 * x.max(1.0));
    }
}

#[test]
fn dyadic_entry_point() {
    let g = GridSpec::new(2, 5).unwrap();
    let k = kernel_registry_get("truncated-hilbert", &KernelParams::default(), &g).unwrap();
    let sf = split(&build_nsform_pyramid(&k, &g, &BuildOptions::default()).unwrap());
    let bs = make_bsystem_indicator(g, 0..5, e(2.0), e(2.0)).unwrap();
    let (norm, size, image, pass) = run_tb_dyadic(&bs, &sf.dyadic, 100.0).unwrap();
    assert_eq!(norm.sup, 0.0);
    assert_eq!(size.sup, 2.0);
    assert!(image.sup.is_finite() && pass);
}

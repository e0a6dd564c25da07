use num_rational::Ratio;
use paneitz_core::blowup::{shoot, Classification};
use paneitz_core::discretize::{eigenbasis, DiscreteOperator};
use paneitz_core::geometry::{
    builtin_profile, critical_exponent, einstein_coefficients, einstein_coefficients_exact,
    PaneitzCoefficients,
};
use paneitz_core::io::{self, fmt_f64, Meta};
use paneitz_core::solvers::{dm_minimize, newton_refine, SolverConfig};
use paneitz_core::variational::{
    embedding_constant_probe, functional_i, gradient_i, nehari_scale, sign_changes,
};
use proptest::prelude::*;

const BETA: f64 = 6.5625;

fn op(cells: usize) -> DiscreteOperator {
    let p = builtin_profile("sphere_point", 5, None).unwrap();
    DiscreteOperator::new(&p, cells, PaneitzCoefficients::new(5.5, BETA, 3.0).unwrap()).unwrap()
}

fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn einstein_data_positive_with_exact_discriminant(n in 5i128..40, num in 1i128..500, den in 1i128..50) {
        let sc = Ratio::new(num, den);
        let e = einstein_coefficients_exact(n, sc).unwrap();
        prop_assert!(e.alpha > Ratio::from_integer(0) && e.beta > Ratio::from_integer(0));
        let disc = e.alpha * e.alpha - Ratio::from_integer(4) * e.beta;
        prop_assert_eq!(disc, e.discriminant);
        prop_assert_eq!(disc * Ratio::from_integer(n * n * (n - 1) * (n - 1)), Ratio::from_integer(4) * sc * sc);
        let f = einstein_coefficients(n as usize, num as f64 / den as f64).unwrap();
        prop_assert!(f.alpha > 0.0 && f.beta > 0.0);
    }

    #[test]
    fn critical_exponent_grows_with_focal_dimension(n in 9usize..30) {
        let mut p = builtin_profile("sphere_point", n, None).unwrap();
        let mut last = 1.0;
        for m in 0..n - 4 {
            p.m0 = m;
            p.m1 = m;
            let qf = critical_exponent(&p);
            prop_assert!(qf >= last);
            last = qf;
        }
    }

    #[test]
    fn laplacian_symmetric_and_nonpositive(u in vector(64), v in vector(64)) {
        let op = op(64);
        let g = &op.grid;
        let (lu, lv) = (op.apply_lap(&u), op.apply_lap(&v));
        let scale = op.lap.max_abs() * g.norm(&u) * g.norm(&v);
        prop_assert!((g.dot(&lu, &v) - g.dot(&u, &lv)).abs() <= 1e-12 * scale);
        prop_assert!(g.dot(&lu, &u) <= 1e-12 * op.lap.max_abs() * g.dot(&u, &u));
        prop_assert!(op.quadratic_form(&u) >= BETA * g.dot(&u, &u) * (1.0 - 1e-12));
    }

    #[test]
    fn functional_is_even(u in vector(64)) {
        let op = op(64);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        prop_assert_eq!(functional_i(&op, &u).unwrap(), functional_i(&op, &neg).unwrap());
        let (g, gn) = (gradient_i(&op, &u).unwrap(), gradient_i(&op, &neg).unwrap());
        prop_assert!(g.iter().zip(&gn).all(|(a, b)| *a == -*b));
    }

    #[test]
    fn nehari_scale_is_projective(u in vector(64), c in 0.01f64..100.0) {
        let op = op(64);
        let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
        let a = nehari_scale(&op, &u).unwrap();
        let ac = nehari_scale(&op, &cu).unwrap();
        prop_assert!((ac * c - a).abs() <= 1e-12 * a);
    }

    #[test]
    fn sign_changes_ignore_sign_and_scale(u in vector(200), c in 1e-3f64..1e3) {
        let scaled: Vec<f64> = u.iter().map(|x| -c * x).collect();
        prop_assert_eq!(sign_changes(&u), sign_changes(&scaled));
    }

    #[test]
    fn float_text_is_exact(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}

#[test]
fn newton_recovers_constant_from_mode_perturbations() {
    let op = op(400);
    let basis = eigenbasis(&op.grid, 3).unwrap();
    let cfg = SolverConfig::default();
    let c = BETA.sqrt();
    for k in 1..3 {
        for eps in [-0.5, -0.2, 0.2, 0.5] {
            let e = &basis.vectors[k];
            let scale = eps * c / e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let u0: Vec<f64> = e.iter().map(|v| c + scale * v).collect();
            let rec = newton_refine(&op, &u0, &cfg).unwrap();
            assert!(rec.converged && rec.residual < 1e-8, "k={k} eps={eps}: {}", rec.residual);
            assert!(rec.identity_defect(3.0) < 1e-6 * rec.e_value.max(1.0));
        }
    }
}

#[test]
fn dm_restarts_agree() {
    let op = op(300);
    let cfg = SolverConfig {
        seeds: 8,
        ..Default::default()
    };
    for m in [0, 2, 4] {
        let out = dm_minimize(&op, m, &cfg).unwrap();
        assert!(!out.spread_warning(), "m={m} spread {}", out.spread);
        assert_eq!(out.levels.len(), 8);
    }
}

#[test]
fn embedding_probe_is_grid_stable() {
    let coarse = embedding_constant_probe(&op(500), 4, 7).unwrap();
    let fine = embedding_constant_probe(&op(1000), 4, 7).unwrap();
    assert!((coarse - fine).abs() < 1e-2 * fine, "{coarse} vs {fine}");
}

#[test]
fn first_zero_converges_in_tolerance() {
    let a = shoot(6, 2.0, -0.5, 100.0, 1e-10).unwrap().classification;
    let b = shoot(6, 2.0, -0.5, 100.0, 5e-11).unwrap().classification;
    let (Classification::SignChange(ra), Classification::SignChange(rb)) = (a, b) else {
        panic!("expected sign changes, got {a:?} and {b:?}");
    };
    assert!((ra - rb).abs() < 1e-6 * ra, "{ra} vs {rb}");
}

#[test]
fn every_writer_emits_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let op = op(32);
    let meta = Meta::for_config(&SolverConfig::default()).unwrap();
    let basis = eigenbasis(&op.grid, 3).unwrap();
    io::write_triplets(&dir.path().join("b.csv"), &meta, &op.paneitz).unwrap();
    io::write_eigenpairs(&dir.path().join("e.csv"), &meta, &op.grid, &basis).unwrap();
    io::write_profile_values(&dir.path().join("u.csv"), &meta, &op.grid, &vec![1.0; 32]).unwrap();
    let rec = newton_refine(&op, &vec![2.0; 32], &SolverConfig::default()).unwrap();
    io::write_record(&dir.path().join("r.json"), &meta, &op, &rec).unwrap();
    for f in ["b.csv", "e.csv", "u.csv"] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.starts_with("# paneitz-lab "), "{f}");
        assert!(text.contains(&format!("# config-sha256 {}", meta.config_sha256)), "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["meta"]["config_sha256"], meta.config_sha256.as_str());
    let back = io::read_record(&dir.path().join("r.json")).unwrap();
    assert_eq!(back.u, rec.u);
}

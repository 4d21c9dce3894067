use std::sync::OnceLock;

use proptest::prelude::*;

use jae_core::demo;
use jae_core::jmm::{
    fit, fit_grid, jmm_from_json, jmm_to_json, DatasetSpec, JmmError, MonomialBasis, Normalization,
    PolynomialJmm, Ridge,
};
use jae_core::ExecPolicy;

fn planar2_jmm() -> &'static PolynomialJmm {
    static JMM: OnceLock<PolynomialJmm> = OnceLock::new();
    JMM.get_or_init(|| {
        let model = demo::model("planar2").unwrap();
        let spec = DatasetSpec::from_joint_limits(&model, &[0, 1], vec![9, 9]).unwrap();
        fit_grid(
            &model,
            &spec,
            &[0, 1],
            &[0, 1, 2],
            4,
            Ridge::NONE,
            ExecPolicy::Sequential,
        )
        .unwrap()
        .jmm
    })
}

fn interior(jmm: &PolynomialJmm, unit: &[f64]) -> Vec<f64> {
    jmm.normalization()
        .iter()
        .zip(unit)
        .map(|(n, &u)| n.center + 0.9 * (2.0 * u - 1.0) * n.half_range)
        .collect()
}

fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jacobian_matches_differences_of_evaluate(unit in proptest::collection::vec(0.0..=1.0f64, 2)) {
        let jmm = planar2_jmm();
        let theta = interior(jmm, &unit);
        let g = jmm.jacobian(&theta).unwrap();
        let h = 1e-6;
        let scale = g.amax();
        for j in 0..jmm.dof() {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[j] += h;
            m[j] -= h;
            let fd = (jmm.evaluate(&p).unwrap() - jmm.evaluate(&m).unwrap()) / (2.0 * h);
            for i in 0..jmm.muscle_count() {
                prop_assert!(rel_err(g[(i, j)], fd[i], scale) < 1e-6);
            }
        }
    }

    #[test]
    fn directional_derivative_matches_differences_of_jacobian(
        unit in proptest::collection::vec(0.0..=1.0f64, 2),
        dir in proptest::collection::vec(-1.0..=1.0f64, 2),
    ) {
        let jmm = planar2_jmm();
        let theta = interior(jmm, &unit);
        let analytic = jmm.jacobian_directional_derivative(&theta, &dir).unwrap();
        let h = 1e-4;
        let plus: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + h * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t - h * d).collect();
        let fd = (jmm.jacobian(&plus).unwrap() - jmm.jacobian(&minus).unwrap()) / (2.0 * h);
        let scale = fd.amax().max(analytic.amax());
        for (a, b) in analytic.iter().zip(fd.iter()) {
            prop_assert!(rel_err(*a, *b, scale) < 1e-5);
        }
    }
}

#[test]
fn refit_of_regenerated_samples_reproduces_coefficients() {
    let jmm = planar2_jmm();
    let spec = DatasetSpec::new(
        vec![11, 11],
        jmm.normalization()
            .iter()
            .map(|n| (n.center - n.half_range, n.center + n.half_range))
            .collect(),
    )
    .unwrap();
    let samples = spec.points().map(|p| {
        let l = jmm.evaluate(&p)?.as_slice().to_vec();
        Ok::<_, JmmError>((p, l))
    });
    let refit = fit(
        samples,
        jmm.basis(),
        jmm.normalization().to_vec(),
        jmm.muscle_names().to_vec(),
        jmm.joint_names().to_vec(),
        Ridge::NONE,
    )
    .unwrap();
    let a = jmm.coefficients();
    let b = refit.jmm.coefficients();
    let scale = a.amax();
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() <= 1e-8 * scale, "{x} vs {y}");
    }
}

#[test]
fn degree_zero_fit_predicts_the_grid_mean() {
    let model = demo::model("planar2").unwrap();
    let spec = DatasetSpec::from_joint_limits(&model, &[0, 1], vec![7, 7]).unwrap();
    let out = fit_grid(
        &model,
        &spec,
        &[0, 1],
        &[0, 1, 2],
        0,
        Ridge::NONE,
        ExecPolicy::Sequential,
    )
    .unwrap();

    let lengths: Vec<Vec<f64>> = spec
        .points()
        .map(|p| {
            model
                .calibrated_lengths(&p)
                .unwrap()
                .values
                .as_slice()
                .to_vec()
        })
        .collect();
    let n = lengths.len() as f64;
    for m in 0..3 {
        let mean = lengths.iter().map(|l| l[m]).sum::<f64>() / n;
        let std = (lengths.iter().map(|l| (l[m] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for p in spec.points().step_by(5) {
            let v = out.jmm.evaluate(&p).unwrap()[m];
            assert!((v - mean).abs() < 1e-12, "muscle {m}: {v} vs {mean}");
        }
        assert!(
            (out.training_rms[m] - std).abs() < 1e-9,
            "muscle {m}: rms {} vs std {std}",
            out.training_rms[m]
        );
    }
}

#[test]
fn fitting_is_deterministic_across_policies() {
    let model = demo::model("upper6").unwrap();
    let joints = [0, 1, 2, 3];
    let spec = DatasetSpec::from_joint_limits(&model, &joints, vec![5; 4]).unwrap();
    let run = |exec| {
        fit_grid(
            &model,
            &spec,
            &joints,
            &[0, 1, 2, 3],
            3,
            Ridge::default(),
            exec,
        )
        .unwrap()
        .jmm
    };
    let a = run(ExecPolicy::Sequential);
    let b = run(ExecPolicy::Sequential);
    let c = run(ExecPolicy::Parallel);
    assert_eq!(a.coefficients(), b.coefficients());
    assert_eq!(a.coefficients(), c.coefficients());
}

#[test]
fn mapping_file_round_trip_is_exact() {
    let jmm = planar2_jmm();
    let back = jmm_from_json(&jmm_to_json(jmm)).unwrap();
    assert_eq!(&back, jmm);
}

#[test]
fn recovers_an_exact_quadratic() {
    // l = 0.2 + 0.5 x - 0.3 y + 0.1 x y + 0.4 y^2 on [-2, 2] x [0, 1]
    let generator =
        |t: &[f64]| vec![0.2 + 0.5 * t[0] - 0.3 * t[1] + 0.1 * t[0] * t[1] + 0.4 * t[1] * t[1]];
    let spec = DatasetSpec::new(vec![5, 5], vec![(-2.0, 2.0), (0.0, 1.0)]).unwrap();
    let basis = MonomialBasis::enumerate(2, 2).unwrap();
    let samples = spec.points().map(|p| {
        let l = generator(&p);
        Ok::<_, JmmError>((p, l))
    });
    let out = fit(
        samples,
        &basis,
        vec![
            Normalization::from_range(-2.0, 2.0),
            Normalization::from_range(0.0, 1.0),
        ],
        vec!["m".into()],
        vec!["x".into(), "y".into()],
        Ridge::NONE,
    )
    .unwrap();
    for t in [[-1.7, 0.1], [0.3, 0.9], [1.9, 0.5]] {
        let got = out.jmm.evaluate(&t).unwrap()[0];
        assert!((got - generator(&t)[0]).abs() < 1e-9);
    }
}

use mvsc_core::graph::default_eig_eps;
use mvsc_core::{
    build_laplacian, fit, generate_synthetic, load_dataset, objective, save_dataset,
    update_similarity, zero_eigenvalue_multiplicity, DistanceTable, SolverConfig, SyntheticSpec,
    Variant,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn small(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n: 60,
        views: 3,
        clusters: 2,
        seed,
        ..SyntheticSpec::default()
    }
}

fn config(variant: Variant) -> SolverConfig {
    SolverConfig {
        alpha: 1e5,
        lambda: 1.0,
        c: 2,
        variant,
        ..SolverConfig::default()
    }
}

#[test]
fn two_component_means_are_s_root_dim_apart() {
    let spec = SyntheticSpec {
        n: 4000,
        views: 2,
        dim: 10,
        mean_separation: 4.0,
        seed: 3,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let labels = data.labels().unwrap();
    for x in data.views() {
        let mut means = [DMatrix::zeros(spec.dim, 1), DMatrix::zeros(spec.dim, 1)];
        let mut counts = [0.0, 0.0];
        for (i, &l) in labels.iter().enumerate() {
            means[l] += x.column(i);
            counts[l] += 1.0;
        }
        let gap = (&means[0] / counts[0] - &means[1] / counts[1]).norm();
        assert!((gap - 4.0 * 10f64.sqrt()).abs() < 0.3, "gap {gap}");
    }
}

#[test]
fn objective_matches_scalar_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 9;
    let g = |rng: &mut ChaCha8Rng, r, c| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let views: Vec<DMatrix<f64>> = (0..2).map(|_| g(&mut rng, 4, n)).collect();
    let zs: Vec<DMatrix<f64>> = (0..2).map(|_| g(&mut rng, n, n)).collect();
    let ps: Vec<DMatrix<f64>> = (0..2).map(|_| g(&mut rng, n, 2)).collect();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rng.random_range(0.0..2.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    let graph = update_similarity(&DistanceTable { d, variant: Variant::Mscam }, 3).unwrap();
    let gammas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let (alpha, lambda) = (0.7, 1.3);

    for variant in [Variant::Mscam, Variant::Mscan] {
        let mut want = 0.0;
        for v in 0..2 {
            let (x, z) = (&views[v], &zs[v]);
            let f = match variant {
                Variant::Mscam => ps[v].transpose() * z,
                Variant::Mscan => z.clone(),
            };
            for r in 0..x.nrows() {
                for i in 0..n {
                    let mut fit = x[(r, i)];
                    for l in 0..n {
                        fit -= x[(r, l)] * z[(l, i)];
                    }
                    want += fit * fit;
                }
            }
            want += alpha * z.iter().map(|e| e * e).sum::<f64>();
            for i in 0..n {
                for j in 0..n {
                    let dist: f64 = (0..f.nrows()).map(|r| (f[(r, i)] - f[(r, j)]).powi(2)).sum();
                    want += lambda * graph.matrix()[(i, j)] * dist;
                }
            }
        }
        for i in 0..n {
            want += gammas[i] * (0..n).map(|j| graph.matrix()[(i, j)].powi(2)).sum::<f64>();
        }
        let got = objective(&views, &zs, Some(&ps), &graph, alpha, lambda, &gammas, variant).unwrap();
        assert!((got - want).abs() < 1e-9 * want.abs(), "{variant}: {got} vs {want}");
    }
}

#[test]
fn fits_recover_separable_clusters() {
    for variant in [Variant::Mscam, Variant::Mscan] {
        let data = generate_synthetic(&small(1)).unwrap();
        let result = fit(&data, &config(variant)).unwrap();
        assert_eq!(result.component_count, 2, "{variant}");
        assert!(!result.fallback);
        assert_eq!(result.metrics.unwrap().acc, 1.0);
        assert_eq!(result.labels.len(), 60);
    }
}

#[test]
fn final_graph_is_valid_and_agrees_with_its_spectrum() {
    for (seed, variant) in [(2, Variant::Mscam), (3, Variant::Mscan), (4, Variant::Mscan)] {
        let data = generate_synthetic(&SyntheticSpec {
            corruption_fraction: 0.5,
            ..small(seed)
        })
        .unwrap();
        let result = fit(&data, &config(variant)).unwrap();
        let a = result.graph.matrix();
        for i in 0..a.nrows() {
            assert_eq!(a[(i, i)], 0.0);
            assert!(a.row(i).iter().all(|&x| x >= 0.0));
            assert!((a.row(i).sum() - 1.0).abs() < 1e-9);
        }
        let bundle = build_laplacian(&result.graph);
        let mult = zero_eigenvalue_multiplicity(&bundle, default_eig_eps(a.nrows())).unwrap();
        assert_eq!(mult, result.component_count);
        assert_eq!(mult, result.laplacian_nullity);
    }
}

#[test]
fn mscan_trace_is_non_increasing() {
    let data = generate_synthetic(&SyntheticSpec {
        corruption_fraction: 0.3,
        ..small(5)
    })
    .unwrap();
    let result = fit(
        &data,
        &SolverConfig {
            lambda_adapt: false,
            outer_tol: 1e-12,
            outer_max_iters: 10,
            ..config(Variant::Mscan)
        },
    )
    .unwrap();
    for w in result.objective_trace.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-6), "{:?}", result.objective_trace);
    }
}

#[test]
fn fit_is_a_pure_function() {
    let data = generate_synthetic(&small(6)).unwrap();
    let a = fit(&data, &config(Variant::Mscam)).unwrap();
    let b = fit(&data, &config(Variant::Mscam)).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.objective_trace, b.objective_trace);
    assert_eq!(a.graph, b.graph);
}

#[test]
fn saved_datasets_reload_exactly() {
    let data = generate_synthetic(&SyntheticSpec {
        corruption_fraction: 0.9,
        ..small(7)
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_dataset(&data, dir.path()).unwrap();
    let back = load_dataset(&manifest).unwrap();
    assert_eq!(back.views(), data.views());
    assert_eq!(back.labels(), data.labels());
}

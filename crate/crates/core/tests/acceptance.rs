//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Data files are read from `IMAPCE_DATA_DIR` (default `<workspace>/data`).
//! Criteria whose inputs are missing print SKIP. The process exits non-zero on
//! any FAIL only when `IMAPCE_ACCEPTANCE_STRICT=1`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use imapce::data::{
    gaussian_matrix, gen_synthetic, load_csv, load_idx, preprocess, sample_rows, superimpose, ComplexSpec, CsvSpec,
    PreprocessOptions, SyntheticSpec, DIMS14, DIMS56,
};
use imapce::dpgmm::{fit_matrix, DpgmmConfig};
use imapce::exploration::{explore_with, Embedder, ExplorationHistory, ExploreOptions};
use imapce::manifold::{random_stiefel, SolverOptions};
use imapce::metrics::{laplacian_score, mean_jaccard, nmi, separability_accuracy};
use imapce::objectives::{
    cpca_alpha_select, cpca_project, default_alphas, imapce_euclid_gradient, kurtosis_index, multivariate_kurtosis, reconstruction_error,
    ImapceProblem,
};
use imapce::{center, resolve_prior, Dataset, Hyperparams, PriorSpec, ProjectionMatrix};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn data_dir() -> PathBuf {
    std::env::var_os("IMAPCE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn main() {
    let criteria: [(&str, Check, Duration); 9] = [
        ("1 gradient vs finite differences", gradient_fd, Duration::from_secs(10)),
        ("2 PCA reduction", pca_reduction, Duration::from_secs(30)),
        ("3 synthetic attribute prior", synthetic, Duration::from_secs(5 * 60)),
        ("4 complex Fashion/MNIST data", complex_data, Duration::from_secs(20 * 60)),
        ("5 image segmentation exploration", segmentation, Duration::from_secs(30 * 60)),
        ("5b MNIST 2000-sample exploration", mnist_exploration, Duration::from_secs(30 * 60)),
        ("6 DPGMM three-blob recovery", dpgmm_recovery, Duration::from_secs(5 * 60)),
        ("7 exploration invariants", exploration_invariants, Duration::from_secs(10 * 60)),
        ("8 kurtosis invariances", kurtosis_invariances, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let timing = format!("{:.1}s of {}s", took.as_secs_f64(), budget.as_secs());
        let outcome = match outcome {
            Outcome::Pass(d) if took > budget => Outcome::Fail(format!("{d}; over time budget")),
            o => o,
        };
        match outcome {
            Outcome::Pass(d) => println!("PASS criterion {name}: {d} [{timing}]"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} [{timing}]");
            }
            Outcome::Skip(d) => println!("SKIP criterion {name}: {d}"),
        }
    }
    let strict = std::env::var("IMAPCE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

fn fd_rel_err(p: &ImapceProblem<f64>, v: &ProjectionMatrix<f64>) -> f64 {
    let g = imapce_euclid_gradient(p, v).unwrap();
    let h = 1e-5;
    let fd = DMatrix::from_fn(v.d(), v.k(), |i, j| {
        let mut vp = v.matrix().clone();
        let mut vm = v.matrix().clone();
        vp[(i, j)] += h;
        vm[(i, j)] -= h;
        (p.cost(&vp).unwrap() - p.cost(&vm).unwrap()) / (2.0 * h)
    });
    let scale = fd.amax().max(1e-12);
    g.iter()
        .zip(fd.iter())
        .map(|(a, b)| (a - b).abs() / b.abs().max(1e-3 * scale))
        .fold(0.0, f64::max)
}

fn gradient_fd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut count = 0;
    for rep in 0..3u64 {
        for alpha in [0.0, 0.5, 1.0] {
            for mu in [0.0, 1.0, 100.0] {
                let n = rng.random_range(20..=60);
                let d = rng.random_range(3..=10);
                let m = rng.random_range(10..=60);
                let seed = 100 * rep + count as u64;
                let (x, _) = center(&gaussian_matrix::<f64>(n, d, seed));
                let (y, _) = center(&gaussian_matrix::<f64>(m, d, seed + 7_000));
                let z = x.rows(0, n / 2).into_owned();
                let p = ImapceProblem::new(x, Some(y), Some(z), alpha, mu).unwrap();
                let v = random_stiefel::<f64>(d, 2, seed + 9_000).unwrap();
                worst = worst.max(fd_rel_err(&p, &v));
                count += 1;
            }
        }
    }
    verdict(worst < 1e-5, format!("{count} instances, max relative error {worst:.2e} (< 1e-5)"))
}

fn pca_reduction() -> Outcome {
    let mut worst_angle = 0.0f64;
    let mut worst_cost = 0.0f64;
    for seed in 0..10u64 {
        let d = 6 + (seed % 3) as usize;
        // Spectral gap from a decaying column scale.
        let base = gaussian_matrix::<f64>(80, d, seed);
        let x = DMatrix::from_fn(80, d, |i, j| base[(i, j)] * (d - j) as f64);
        let (x, _) = center(&x);
        let p = ImapceProblem::new(x.clone(), None, None, 0.0, 0.0).unwrap();
        let opts = SolverOptions {
            grad_tol: 1e-8,
            max_iter: 5000,
            seed,
            ..SolverOptions::default()
        };
        let rep = p.solve(2, &opts).unwrap();
        let e = SymmetricEigen::new(x.transpose() * &x);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
        let top = DMatrix::from_columns(&[e.eigenvectors.column(idx[0]), e.eigenvectors.column(idx[1])]);
        let trailing: f64 = idx[2..].iter().map(|&i| e.eigenvalues[i]).sum();
        let s = (top.transpose() * rep.v_star.matrix()).singular_values();
        let angle = s.iter().map(|c| c.clamp(-1.0, 1.0).acos()).fold(0.0, f64::max);
        worst_angle = worst_angle.max(angle);
        worst_cost = worst_cost.max((rep.objective_value - trailing).abs() / trailing.max(1.0));
    }
    verdict(
        worst_angle < 1e-3 && worst_cost < 1e-6,
        format!("max principal angle {worst_angle:.2e} (< 1e-3), max cost gap {worst_cost:.2e} (< 1e-6)"),
    )
}

fn synthetic() -> Outcome {
    let ds = gen_synthetic::<f64>(&SyntheticSpec::default());
    let (std_ds, _) = preprocess(
        &ds,
        &PreprocessOptions {
            standardize: true,
            ..PreprocessOptions::default()
        },
    )
    .unwrap();
    let prior = resolve_prior(&std_ds, &PriorSpec::Attributes(vec![0, 1, 2, 3])).unwrap();
    let x = std_ds.values().clone();
    let (y, _) = center(&prior.y.unwrap());
    let p = ImapceProblem::new(x.clone(), Some(y.clone()), None, 1.0, 200.0).unwrap();
    let rep = p
        .solve(
            2,
            &SolverOptions {
                restarts: 5,
                ..SolverOptions::default()
            },
        )
        .unwrap();
    let q_imapce = rep.v_star.project(&x).unwrap();
    let sel = cpca_alpha_select(&x, Some(&y), &default_alphas::<f64>(), 4, 2).unwrap();
    let q_cpca = sel.projection.project(&x).unwrap();

    let l14 = ds.label_column(DIMS14).unwrap();
    let mut ordered = true;
    let mut pairs = Vec::new();
    for k in (10..=100).step_by(10) {
        let a = laplacian_score(&q_imapce, l14, k).unwrap();
        let b = laplacian_score(&q_cpca, l14, k).unwrap();
        ordered &= a > b;
        pairs.push(format!("{k}:{a:.3}/{b:.3}"));
    }
    let (acc, _) = separability_accuracy(&q_imapce, ds.label_column(DIMS56).unwrap(), 10, 0.75, 0).unwrap();
    verdict(
        ordered && acc >= 0.90,
        format!(
            "(a) Laplacian IMAPCE/cPCA(alpha={:.3}) {} ; (b) dims5-6 accuracy {acc:.3} (>= 0.90)",
            sel.alpha,
            pairs.join(" ")
        ),
    )
}

fn load_images(dir: &str, images: &str, labels: &str) -> Option<Dataset<f64>> {
    let base = data_dir().join(dir);
    let (i, l) = (base.join(images), base.join(labels));
    (i.exists() && l.exists()).then(|| load_idx::<f64>(&i, &l).unwrap())
}

fn mnist() -> Option<Dataset<f64>> {
    load_images("mnist", "train-images-idx3-ubyte", "train-labels-idx1-ubyte")
}

fn complex_data() -> Outcome {
    let (Some(fashion), Some(mnist)) = (load_images("fashion", "images-idx3-ubyte", "labels-idx1-ubyte"), mnist()) else {
        return Outcome::Skip("Fashion-MNIST or MNIST IDX files not found".into());
    };
    let complex = superimpose(&fashion, &mnist, &ComplexSpec::default()).unwrap();
    let complex = sample_rows(&complex, 2000, 0).unwrap();
    let prior = sample_rows(&mnist, 1000, 1).unwrap();
    let (x, pre) = preprocess(
        &complex,
        &PreprocessOptions {
            svd_dims: Some(100),
            ..PreprocessOptions::default()
        },
    )
    .unwrap();
    let (y, _) = center(&pre.apply(prior.values()).unwrap());
    let x = x.values().clone();
    let labels = complex.labels().unwrap();

    let p = ImapceProblem::new(x.clone(), Some(y.clone()), None, 1.0, 1e5).unwrap();
    let rep = p
        .solve(
            2,
            &SolverOptions {
                restarts: 5,
                ..SolverOptions::default()
            },
        )
        .unwrap();
    let (acc, sd) = separability_accuracy(&rep.v_star.project(&x).unwrap(), labels, 10, 0.75, 0).unwrap();
    let sel = cpca_alpha_select(&x, Some(&y), &default_alphas::<f64>(), 4, 2).unwrap();
    let (cacc, csd) = separability_accuracy(&sel.projection.project(&x).unwrap(), labels, 10, 0.75, 0).unwrap();
    verdict(
        (acc - 0.98).abs() <= 0.05 && acc - cacc >= 0.10,
        format!(
            "IMAPCE {acc:.3} ± {sd:.3} (0.98 ± 0.05), cPCA(alpha={:.3}) {cacc:.3} ± {csd:.3}, margin {:.3} (>= 0.10), retained variance {:.3}",
            sel.alpha,
            acc - cacc,
            pre.retained_variance.unwrap_or(1.0)
        ),
    )
}

struct RunScores {
    jaccard: f64,
    nmi: f64,
    iterations: usize,
}

fn score(h: &ExplorationHistory<f64>, labels: &[i64]) -> RunScores {
    RunScores {
        jaccard: mean_jaccard(&h.distinct_clusters(), labels).unwrap(),
        nmi: nmi(&h.row_labels(), labels).unwrap(),
        iterations: h.iterations.len(),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Averages exploration scores over seeded runs for both embedders.
fn compare_embedders(x: &Dataset<f64>, labels: &[i64], hp: &Hyperparams<f64>, seeds: &[u64]) -> (Vec<RunScores>, Vec<RunScores>) {
    let mut ours = Vec::new();
    let mut cpca = Vec::new();
    for &seed in seeds {
        let hp = Hyperparams { seed, ..hp.clone() };
        let cfg = DpgmmConfig {
            seed,
            ..DpgmmConfig::default()
        };
        let h = explore_with(x, &PriorSpec::None, &hp, &cfg, &ExploreOptions::default()).unwrap();
        ours.push(score(&h, labels));
        let opts = ExploreOptions {
            embedder: Embedder::Cpca,
            ..ExploreOptions::default()
        };
        let h = explore_with(x, &PriorSpec::None, &hp, &cfg, &opts).unwrap();
        cpca.push(score(&h, labels));
    }
    (ours, cpca)
}

fn summarize(runs: &[RunScores]) -> (f64, f64, String) {
    let j: Vec<f64> = runs.iter().map(|r| r.jaccard).collect();
    let n: Vec<f64> = runs.iter().map(|r| r.nmi).collect();
    let iters: Vec<String> = runs.iter().map(|r| r.iterations.to_string()).collect();
    (mean(&j), mean(&n), iters.join(","))
}

fn segmentation() -> Outcome {
    let path = data_dir().join("segmentation.csv");
    if !path.exists() {
        return Outcome::Skip(format!("{} not found", path.display()));
    }
    let spec = CsvSpec {
        label_cols: vec!["class".into()],
        ..CsvSpec::default()
    };
    let (ds, _) = load_csv::<f64>(&path, &spec).unwrap();
    let (x, _) = preprocess(
        &ds,
        &PreprocessOptions {
            standardize: true,
            ..PreprocessOptions::default()
        },
    )
    .unwrap();
    let labels = ds.labels().unwrap();
    let hp = Hyperparams {
        alpha: 1.0,
        mu: 1e5,
        min_cluster_size: 75,
        restarts: 10,
        ..Hyperparams::default()
    };
    let seeds: Vec<u64> = (0..5).collect();
    let (ours, cpca) = compare_embedders(&x, labels, &hp, &seeds);
    let (j, n, it) = summarize(&ours);
    let (cj, cn, cit) = summarize(&cpca);
    verdict(
        j >= 0.55 && n >= 0.60 && j > cj && n > cn,
        format!(
            "{} runs: IMAPCE Jaccard {j:.3} (>= 0.55) NMI {n:.3} (>= 0.60) iterations [{it}]; cPCA Jaccard {cj:.3} NMI {cn:.3} iterations [{cit}]",
            seeds.len()
        ),
    )
}

fn mnist_exploration() -> Outcome {
    let Some(mnist) = mnist() else {
        return Outcome::Skip("MNIST IDX files not found".into());
    };
    let sample = sample_rows(&mnist, 2000, 3).unwrap();
    let (x, _) = preprocess(
        &sample,
        &PreprocessOptions {
            svd_dims: Some(100),
            ..PreprocessOptions::default()
        },
    )
    .unwrap();
    // No mu is given for this run; use one hundredth of the PCA reconstruction error.
    let pca = cpca_project(x.values(), None, 0.0, 2).unwrap();
    let hp = Hyperparams {
        alpha: 1.0,
        mu: 1e-2 * reconstruction_error(x.values(), &pca).unwrap(),
        min_cluster_size: 75,
        restarts: 5,
        ..Hyperparams::default()
    };
    let seeds = [0u64];
    let (ours, cpca) = compare_embedders(&x, sample.labels().unwrap(), &hp, &seeds);
    let (j, n, it) = summarize(&ours);
    let (cj, cn, cit) = summarize(&cpca);
    verdict(
        j > cj && n > cn,
        format!(
            "mu {:.1}: IMAPCE Jaccard {j:.3} NMI {n:.3} iterations [{it}]; cPCA Jaccard {cj:.3} NMI {cn:.3} iterations [{cit}]",
            hp.mu
        ),
    )
}

fn nmi_usize(a: &[usize], b: &[usize]) -> f64 {
    let a: Vec<i64> = a.iter().map(|&v| v as i64).collect();
    let b: Vec<i64> = b.iter().map(|&v| v as i64).collect();
    nmi(&a, &b).unwrap()
}

fn dpgmm_recovery() -> Outcome {
    let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
    let mut details = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let noise = gaussian_matrix::<f64>(600, 2, 500 + seed);
        let truth: Vec<usize> = (0..600).map(|i| i / 200).collect();
        let x = DMatrix::from_fn(600, 2, |i, j| {
            let c = centers[truth[i]];
            noise[(i, j)] + if j == 0 { c.0 } else { c.1 }
        });
        let m = fit_matrix(&x, &DpgmmConfig { seed, ..DpgmmConfig::default() }).unwrap();
        let monotone = m
            .elbo_trace
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0));
        let score = nmi_usize(&m.assignments, &truth);
        ok &= monotone && m.active_components.len() == 3 && score > 0.95;
        details.push(format!("seed {seed}: {} comps nmi {score:.3} monotone {monotone}", m.active_components.len()));
    }
    verdict(ok, details.join("; "))
}

fn invariant_violations(h: &ExplorationHistory<f64>, n: usize) -> Vec<String> {
    let mut errs = Vec::new();
    let mut seen = vec![false; n];
    let mut last = usize::MAX;
    for it in &h.iterations {
        let mut owner = vec![0u8; n];
        it.prior_rows.iter().for_each(|&r| owner[r] += 1);
        it.unexplored_rows.iter().for_each(|&r| owner[r] += 1);
        if owner.iter().any(|&c| c != 1) {
            errs.push(format!("iteration {}: Y/Z do not partition the rows", it.index));
        }
        if it.unexplored_rows.len() >= last {
            errs.push(format!("iteration {}: |Z| did not decrease", it.index));
        }
        last = it.unexplored_rows.len();
        for &r in it.distinct_rows.iter().flatten() {
            if std::mem::replace(&mut seen[r], true) {
                errs.push(format!("row {r} extracted twice"));
            }
        }
    }
    errs
}

fn exploration_invariants() -> Outcome {
    let mut runs = 0;
    let mut errs = Vec::new();
    for seed in 0..6u64 {
        let k = 2 + (seed % 3) as usize;
        let per = 80;
        let noise = gaussian_matrix::<f64>(k * per, 6, seed);
        let x = DMatrix::from_fn(k * per, 6, |i, j| noise[(i, j)] + if j == (i / per) % 6 { 8.0 } else { 0.0 });
        let ds = Dataset::new(x).unwrap();
        let prior = if seed % 2 == 0 {
            PriorSpec::None
        } else {
            PriorSpec::Subset((0..20).collect())
        };
        let hp = Hyperparams {
            min_cluster_size: 30,
            mu: 10.0,
            restarts: 2,
            seed,
            ..Hyperparams::default()
        };
        let cfg = DpgmmConfig { seed, ..DpgmmConfig::default() };
        for embedder in [Embedder::Imapce, Embedder::Cpca] {
            let opts = ExploreOptions {
                embedder,
                ..ExploreOptions::default()
            };
            let a = explore_with(&ds, &prior, &hp, &cfg, &opts).unwrap();
            let b = explore_with(&ds, &prior, &hp, &cfg, &opts).unwrap();
            if a != b {
                errs.push(format!("seed {seed}: rerun differs"));
            }
            errs.extend(invariant_violations(&a, k * per));
            runs += 1;
        }
    }
    let detail = if errs.is_empty() {
        format!("{runs} runs, all invariants held and reruns were bit-identical")
    } else {
        errs.join("; ")
    };
    verdict(errs.is_empty(), detail)
}

fn kurtosis_invariances() -> Outcome {
    let mut worst_rot = 0.0f64;
    let mut bounds_ok = true;
    for seed in 0..20u64 {
        let (x, _) = center(&gaussian_matrix::<f64>(50, 7, seed));
        let z = x.rows(0, 30).into_owned();
        let v = random_stiefel::<f64>(7, 3, seed + 1).unwrap();
        let r = random_stiefel::<f64>(3, 3, seed + 2).unwrap();
        let vr = ProjectionMatrix::new(v.matrix() * r.matrix()).unwrap();
        let a = multivariate_kurtosis(&x, &z, &v).unwrap();
        let b = multivariate_kurtosis(&x, &z, &vr).unwrap();
        worst_rot = worst_rot.max((a - b).abs() / a.abs().max(1.0));

        let u = DVector::from_column_slice(random_stiefel::<f64>(7, 1, seed + 3).unwrap().matrix().as_slice());
        let kappa = kurtosis_index(&x, &u).unwrap();
        bounds_ok &= (1.0 - 1e-12..=50.0 + 1e-12).contains(&kappa);
    }
    let g = gaussian_matrix::<f64>(100_000, 1, 42);
    let mc = kurtosis_index(&g, &DVector::from_element(1, 1.0)).unwrap();
    verdict(
        worst_rot < 1e-9 && bounds_ok && (mc - 3.0).abs() <= 0.15,
        format!("rotation gap {worst_rot:.2e} (< 1e-9), kappa in [1, n]: {bounds_ok}, Gaussian kappa {mc:.4} (3 ± 0.15)"),
    )
}

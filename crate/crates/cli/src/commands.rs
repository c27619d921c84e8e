use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use imapce::data::{self, gen_synthetic, load_csv, load_idx, preprocess, CsvSpec, PreprocessOptions, Preprocessor, SyntheticSpec};
use imapce::dpgmm::DpgmmConfig;
use imapce::exploration::{explore_with, Embedder, ExploreOptions};
use imapce::manifold::{SolverOptions, StopReason};
use imapce::metrics::{laplacian_score, mean_jaccard, nmi, separability_accuracy};
use imapce::objectives::{cpca_alpha_select, cpca_project, default_alphas, reconstruction_error, ImapceProblem};
use imapce::{center, resolve_prior, Dataset, Hyperparams, PriorSpec, ProjectionMatrix};
use log::{info, warn};
use nalgebra::DMatrix;

use crate::config::{parse_index_list, split_list, RunConfig};
use crate::error::CliError;
use crate::svg::{self, Panel};

type CliResult<T> = Result<T, CliError>;

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = PathBuf::from(cfg.str_or("out", "out"));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.clone(), e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path.to_path_buf(), e))
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::io(path.to_path_buf(), e.into()))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let io = |e: csv::Error| CliError::io(path.to_path_buf(), e.into());
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path.to_path_buf(), e))
}

fn finish(cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    write_text(&dir.join("config.resolved"), &cfg.resolved_text())
}

/// A CSV file, or a directory holding an IDX image/label pair.
fn load_any(path: &Path, labels: &[String]) -> CliResult<Dataset<f64>> {
    if path.is_dir() {
        for (img, lab) in [
            ("images-idx3-ubyte", "labels-idx1-ubyte"),
            ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        ] {
            if path.join(img).exists() {
                return Ok(load_idx(path.join(img), path.join(lab))?);
            }
        }
        return Err(CliError::Usage(format!("{}: no IDX image file found", path.display())));
    }
    let spec = CsvSpec {
        label_cols: labels.to_vec(),
        ..CsvSpec::default()
    };
    let (ds, report) = load_csv(path, &spec)?;
    if !report.dropped.is_empty() {
        warn!("{}: dropped {} malformed row(s)", path.display(), report.dropped.len());
    }
    Ok(ds)
}

struct Prepared {
    x: Dataset<f64>,
    prior: PriorSpec<f64>,
    label_names: Vec<String>,
}

fn column_indices(spec: &str, names: Option<&[String]>, d: usize) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for item in split_list(spec) {
        if let Some(j) = names.and_then(|n| n.iter().position(|c| *c == item)) {
            out.push(j);
        } else if item.chars().all(|c| c.is_ascii_digit() || c == '-') {
            out.extend(parse_index_list(&item)?);
        } else {
            return Err(CliError::Usage(format!("unknown prior column {item:?}")));
        }
    }
    if let Some(&j) = out.iter().find(|&&j| j >= d) {
        return Err(CliError::Usage(format!("prior column {j} out of range for {d} columns")));
    }
    Ok(out)
}

fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let path = PathBuf::from(cfg.require("data")?);
    let label_names = split_list(&cfg.str_or("labels", ""));
    let raw = load_any(&path, &label_names)?;
    let label_names = raw.label_columns().iter().map(|c| c.name.clone()).collect();
    let svd_dims: Option<usize> = cfg.opt("svd-dims")?;
    let opts = PreprocessOptions {
        center: true,
        standardize: cfg.flag("standardize")?,
        svd_dims,
    };
    let (x, pre) = preprocess(&raw, &opts)?;
    if let Some(r) = pre.retained_variance {
        info!("svd_dims={} retains {r:.4} of the variance", svd_dims.unwrap_or(0));
    }
    let prior = build_prior(cfg, &raw, &pre, svd_dims.is_some())?;
    Ok(Prepared { x, prior, label_names })
}

fn build_prior(cfg: &RunConfig, raw: &Dataset<f64>, pre: &Preprocessor<f64>, projected: bool) -> CliResult<PriorSpec<f64>> {
    let kind = cfg.str_or("prior-type", "none");
    Ok(match kind.as_str() {
        "none" => PriorSpec::None,
        "attributes" => {
            if projected {
                return Err(CliError::Usage("attribute priors need the original columns; drop --svd-dims".into()));
            }
            PriorSpec::Attributes(column_indices(&cfg.require("prior-cols")?, raw.column_names(), raw.ncols())?)
        }
        "samples" => {
            let path = PathBuf::from(cfg.require("prior-file")?);
            let labels: Vec<String> = raw.label_columns().iter().map(|c| c.name.clone()).collect();
            let y = load_any(&path, &labels)?;
            PriorSpec::Samples(pre.apply(y.values())?)
        }
        "subset" => PriorSpec::Subset(parse_index_list(&cfg.require("prior-rows")?)?),
        other => {
            return Err(CliError::Usage(format!(
                "unknown prior type {other:?} (none, attributes, samples, subset)"
            )))
        }
    })
}

fn hyperparams(cfg: &RunConfig) -> CliResult<Hyperparams<f64>> {
    let d = Hyperparams::<f64>::default();
    Ok(Hyperparams {
        alpha: cfg.get("alpha", d.alpha)?,
        mu: cfg.get("mu", d.mu)?,
        k: cfg.get("k", d.k)?,
        min_cluster_size: cfg.get("s", d.min_cluster_size)?,
        restarts: cfg.get("restarts", d.restarts)?,
        seed: cfg.get("seed", d.seed)?,
        max_iter: cfg.get("max-iter", d.max_iter)?,
        grad_tol: cfg.get("grad-tol", d.grad_tol)?,
    })
}

/// Replaces `mu` with a power of ten times the cPCA reconstruction error when `--auto-mu` is set.
fn apply_auto_mu(cfg: &RunConfig, p: &Prepared, hp: &mut Hyperparams<f64>, log: &mut String) -> CliResult<()> {
    let Some(raw) = cfg.opt_str("auto-mu") else {
        return Ok(());
    };
    let exponent: i32 = match raw.as_str() {
        "" | "true" => -2,
        v => v
            .parse()
            .map_err(|_| CliError::Usage(format!("--auto-mu expects an exponent such as -1 or -2, got {v:?}")))?,
    };
    let r = resolve_prior(&p.x, &p.prior)?;
    let (xc, _) = center(&r.x_work);
    let y = r.y.map(|y| center(&y).0);
    let alpha = hp.effective_alpha(y.is_some());
    let v = cpca_project(&xc, y.as_ref(), alpha, hp.k)?;
    let err = reconstruction_error(&xc, &v)?;
    hp.mu = 10f64.powi(exponent) * err;
    let _ = writeln!(log, "auto_mu_exponent={exponent}\ncpca_reconstruction_error={err}\nmu={}", hp.mu);
    info!("auto mu = {} (10^{exponent} of cPCA reconstruction error {err})", hp.mu);
    Ok(())
}

fn solver_options(hp: &Hyperparams<f64>) -> SolverOptions<f64> {
    SolverOptions {
        max_iter: hp.max_iter,
        grad_tol: hp.grad_tol,
        restarts: hp.restarts,
        seed: hp.seed,
        ..SolverOptions::default()
    }
}

fn coord_header(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("q{j}")).collect()
}

fn first_labels(x: &Dataset<f64>) -> Vec<i64> {
    x.labels().map_or_else(|| vec![0; x.nrows()], <[i64]>::to_vec)
}

fn stop_name(s: StopReason) -> String {
    format!("{s:?}").to_lowercase()
}

pub fn synth(cfg: &RunConfig) -> CliResult<()> {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        n: cfg.get("n", d.n)?,
        seed: cfg.get("seed", d.seed)?,
        ..d
    };
    let dir = out_dir(cfg)?;
    let ds = gen_synthetic::<f64>(&spec);
    data::write_csv(dir.join("synthetic.csv"), &ds)?;
    finish(cfg, &dir)
}

pub fn embed(cfg: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let method = cfg.str_or("method", "imapce");
    let p = prepare(cfg)?;
    let mut hp = hyperparams(cfg)?;
    let mut log = format!("command=embed\nmethod={method}\nn={}\nd={}\n", p.x.nrows(), p.x.ncols());
    apply_auto_mu(cfg, &p, &mut hp, &mut log)?;
    hp.validate(p.x.ncols())?;
    let dir = out_dir(cfg)?;

    let r = resolve_prior(&p.x, &p.prior)?;
    let (xc, _) = center(&r.x_work);
    let y = r.y.map(|y| center(&y).0);
    let alpha = hp.effective_alpha(y.is_some());
    let _ = writeln!(log, "alpha={alpha}\nk={}", hp.k);
    let v: ProjectionMatrix<f64> = match method.as_str() {
        "imapce" => {
            let z = xc.select_rows(&r.z_rows);
            let prob = ImapceProblem::new(xc.clone(), y, Some(z), alpha, hp.mu)?;
            let rep = prob.solve(hp.k, &solver_options(&hp))?;
            let _ = writeln!(
                log,
                "mu={}\nobjective={}\ninitial_objective={}\niterations={}\nconverged={}\nbest_restart={}",
                hp.mu, rep.objective_value, rep.initial_value, rep.iterations, rep.converged, rep.restart_index
            );
            for rs in &rep.restarts {
                let _ = match &rs.outcome {
                    Ok((c, it, stop)) => writeln!(log, "restart.{}=seed:{} cost:{c} iterations:{it} stop:{}", rs.index, rs.seed, stop_name(*stop)),
                    Err(msg) => writeln!(log, "restart.{}=seed:{} failed:{msg}", rs.index, rs.seed),
                };
            }
            let trace: Vec<String> = rep.trace.iter().map(f64::to_string).collect();
            let _ = writeln!(log, "trace={}", trace.join(","));
            rep.v_star
        }
        "cpca" => {
            if cfg.flag("alpha-select")? {
                let groups: usize = cfg.get("spectral-clusters", 4)?;
                let sel = cpca_alpha_select(&xc, y.as_ref(), &default_alphas::<f64>(), groups, hp.k)?;
                let _ = writeln!(log, "selected_alpha={}", sel.alpha);
                sel.projection
            } else {
                cpca_project(&xc, y.as_ref(), alpha, hp.k)?
            }
        }
        other => return Err(CliError::Usage(format!("unknown method {other:?} (imapce, cpca)"))),
    };
    let q = v.project(&xc)?;
    let _ = writeln!(log, "reconstruction_error={}", reconstruction_error(&xc, &v)?);

    let mut header = vec!["row".to_string()];
    header.extend(coord_header(hp.k));
    header.extend(p.label_names.iter().cloned());
    let rows = (0..q.nrows()).map(|i| {
        let mut r = vec![i.to_string()];
        r.extend(q.row(i).iter().map(f64::to_string));
        r.extend(p.x.label_columns().iter().map(|c| c.values[i].to_string()));
        r
    });
    write_rows(&dir.join("embeddings.csv"), &header, rows)?;
    write_rows(
        &dir.join("projection.csv"),
        &(1..=hp.k).map(|j| format!("v{j}")).collect::<Vec<_>>(),
        v.matrix().row_iter().map(|r| r.iter().map(f64::to_string).collect()),
    )?;
    let labels = first_labels(&p.x);
    let pts = svg::xy(&q);
    write_text(
        &dir.join("scatter.svg"),
        &svg::render(&[Panel {
            title: &method,
            points: &pts,
            labels: &labels,
        }]),
    )?;
    let _ = writeln!(log, "wall_time_s={:.3}", start.elapsed().as_secs_f64());
    write_text(&dir.join("run.log"), &log)?;
    finish(cfg, &dir)
}

pub fn explore(cfg: &RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let p = prepare(cfg)?;
    let mut hp = hyperparams(cfg)?;
    let mut log = format!("command=explore\nn={}\nd={}\n", p.x.nrows(), p.x.ncols());
    apply_auto_mu(cfg, &p, &mut hp, &mut log)?;
    let embedder = match cfg.str_or("embedder", "imapce").as_str() {
        "imapce" => Embedder::Imapce,
        "cpca" => Embedder::Cpca,
        other => return Err(CliError::Usage(format!("unknown embedder {other:?} (imapce, cpca)"))),
    };
    let opts = ExploreOptions {
        embedder,
        max_outer: cfg.get("max-outer", ExploreOptions::default().max_outer)?,
        ..ExploreOptions::default()
    };
    let dcfg = DpgmmConfig {
        max_components: cfg.get("components", DpgmmConfig::<f64>::default().max_components)?,
        seed: hp.seed,
        ..DpgmmConfig::default()
    };
    let dir = out_dir(cfg)?;
    let h = explore_with(&p.x, &p.prior, &hp, &dcfg, &opts)?;
    let truth = p.x.labels().map(<[i64]>::to_vec);

    let mut next_cluster = 0i64;
    for it in &h.iterations {
        let idir = dir.join(format!("iter_{:03}", it.index));
        fs::create_dir_all(&idir).map_err(|e| CliError::io(idir.clone(), e))?;
        let q = it.embedding.coords();
        let rows = it.embedding.source_rows();
        let accepted: Vec<usize> = it.acceptable.iter().map(|c| c.component).collect();

        let mut header = vec!["row".to_string()];
        header.extend(coord_header(q.ncols()));
        header.extend(["component".to_string(), "acceptable".to_string()]);
        header.extend(p.label_names.iter().cloned());
        let body = (0..q.nrows()).map(|i| {
            let comp = it.model.assignments[i];
            let mut r = vec![rows[i].to_string()];
            r.extend(q.row(i).iter().map(f64::to_string));
            r.push(comp.to_string());
            r.push(u8::from(accepted.contains(&comp)).to_string());
            r.extend(p.x.label_columns().iter().map(|c| c.values[rows[i]].to_string()));
            r
        });
        write_rows(&idir.join("embedding.csv"), &header, body)?;

        let mut distinct = Vec::new();
        let mut highlight = vec![-1i64; q.nrows()];
        let pos: BTreeMap<usize, usize> = rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        for c in &it.distinct_rows {
            for &r in c {
                distinct.push(vec![next_cluster.to_string(), r.to_string()]);
                highlight[pos[&r]] = next_cluster;
            }
            next_cluster += 1;
        }
        write_rows(&idir.join("distinct.csv"), &["cluster".into(), "row".into()], distinct)?;

        let pts = svg::xy(q);
        let all = vec![-1i64; q.nrows()];
        let comps: Vec<i64> = it.model.assignments.iter().map(|&a| a as i64).collect();
        let gt: Vec<i64> = match &truth {
            Some(t) => rows.iter().map(|&r| t[r]).collect(),
            None => highlight.clone(),
        };
        let svg = svg::render(&[
            Panel {
                title: &format!("iteration {}: embedding", it.index),
                points: &pts,
                labels: &all,
            },
            Panel {
                title: "mixture components",
                points: &pts,
                labels: &comps,
            },
            Panel {
                title: if truth.is_some() { "ground truth" } else { "extracted" },
                points: &pts,
                labels: &gt,
            },
        ]);
        write_text(&idir.join("triptych.svg"), &svg)?;

        let sizes: Vec<String> = it.acceptable.iter().map(|c| c.size.to_string()).collect();
        let _ = writeln!(
            log,
            "iteration.{}=alpha:{} objective:{} unexplored:{} acceptable:[{}] extracted:{}",
            it.index,
            it.alpha,
            it.objective_value.map_or("none".to_string(), |v| v.to_string()),
            it.unexplored_rows.len(),
            sizes.join(" "),
            it.distinct_rows.iter().map(Vec::len).sum::<usize>()
        );
    }

    let labels = h.row_labels();
    let mut header = vec!["row".to_string(), "cluster".to_string()];
    header.extend(p.label_names.iter().cloned());
    let body = (0..h.n_rows).map(|i| {
        let mut r = vec![i.to_string(), labels[i].to_string()];
        r.extend(p.x.label_columns().iter().map(|c| c.values[i].to_string()));
        r
    });
    write_rows(&dir.join("clusters.csv"), &header, body)?;

    let clusters = h.distinct_clusters();
    let sizes: Vec<String> = clusters.iter().map(|c| c.len().to_string()).collect();
    let mut summary = format!(
        "terminal_reason={}\niterations={}\nclusters={}\ncluster_sizes={}\nunexplored={}\n",
        h.terminal_reason.as_str(),
        h.iterations.len(),
        clusters.len(),
        sizes.join(","),
        h.final_unexplored().len()
    );
    if let Some(t) = &truth {
        let _ = writeln!(summary, "jaccard={}\nnmi={}", mean_jaccard(&clusters, t)?, nmi(&labels, t)?);
    }
    write_text(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    let _ = writeln!(log, "wall_time_s={:.3}", start.elapsed().as_secs_f64());
    write_text(&dir.join("run.log"), &log)?;
    finish(cfg, &dir)
}

/// Columns of a CSV file by header name.
struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Self> {
        let io = |e: csv::Error| CliError::io(path.to_path_buf(), e.into());
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(io)?;
        let header = r.headers().map_err(io)?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(io)?;
        Ok(Table {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    fn column<T: std::str::FromStr>(&self, name: &str) -> CliResult<Vec<T>> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("{}: no column {name:?}", self.path.display())))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.get(j).and_then(|v| v.parse().ok()).ok_or_else(|| {
                    imapce::Error::Parse {
                        path: self.path.clone(),
                        line: i + 2,
                        msg: format!("bad value in column {name:?}"),
                    }
                    .into()
                })
            })
            .collect()
    }

    fn matrix(&self, names: &[String]) -> CliResult<DMatrix<f64>> {
        let cols = names.iter().map(|n| self.column::<f64>(n)).collect::<CliResult<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.rows.len(), cols.len(), |i, j| cols[j][i]))
    }

    /// Names of the form `q<digits>`.
    fn coord_names(&self) -> Vec<String> {
        self.header
            .iter()
            .filter(|h| h.len() > 1 && h.starts_with('q') && h[1..].chars().all(|c| c.is_ascii_digit()))
            .cloned()
            .collect()
    }
}

pub fn score(cfg: &RunConfig) -> CliResult<()> {
    let kind = cfg.require("kind")?;
    let table = Table::read(Path::new(&cfg.require("data")?))?;
    let label_col = cfg.str_or("label-col", "label");
    let labels: Vec<i64> = table.column(&label_col)?;
    let coords = || -> CliResult<DMatrix<f64>> {
        let names = match cfg.opt_str("coords") {
            Some(c) => split_list(&c),
            None => table.coord_names(),
        };
        if names.is_empty() {
            return Err(CliError::Usage("no coordinate columns; pass --coords".into()));
        }
        table.matrix(&names)
    };
    let mut report = format!("metric={kind}\nlabel_col={label_col}\nn={}\n", labels.len());
    let mut sweep = None;
    match kind.as_str() {
        "laplacian" => {
            let q = coords()?;
            let neighbors = parse_index_list(&cfg.str_or("neighbors", "10,20,30,40,50,60,70,80,90,100"))?;
            let mut rows = Vec::new();
            for &k in &neighbors {
                let s = laplacian_score(&q, &labels, k)?;
                let _ = writeln!(report, "value.k{k}={s}");
                rows.push(vec![k.to_string(), s.to_string()]);
            }
            sweep = Some(rows);
        }
        "jaccard" | "nmi" => {
            let pred_col = cfg.str_or("pred-col", "cluster");
            let pred: Vec<i64> = table.column(&pred_col)?;
            let _ = writeln!(report, "pred_col={pred_col}");
            let value = if kind == "nmi" {
                nmi(&pred, &labels)?
            } else {
                let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
                for (i, &c) in pred.iter().enumerate().filter(|(_, &c)| c >= 0) {
                    groups.entry(c).or_default().push(i);
                }
                mean_jaccard(&groups.into_values().collect::<Vec<_>>(), &labels)?
            };
            let _ = writeln!(report, "value={value}");
        }
        "clf" => {
            let q = coords()?;
            let splits = cfg.get("splits", 10usize)?;
            let frac = cfg.get("train-frac", 0.75f64)?;
            let seed = cfg.get("seed", 0u64)?;
            let (mean, std) = separability_accuracy(&q, &labels, splits, frac, seed)?;
            let _ = writeln!(report, "splits={splits}\ntrain_frac={frac}\nseed={seed}\nvalue={mean}\nstd={std}");
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown score kind {other:?} (laplacian, jaccard, nmi, clf)"
            )))
        }
    }
    print!("{report}");
    if cfg.opt_str("out").is_some() {
        let dir = out_dir(cfg)?;
        write_text(&dir.join("report.txt"), &report)?;
        if let Some(rows) = sweep {
            write_rows(&dir.join("laplacian_sweep.csv"), &["neighbors".into(), "score".into()], rows)?;
        }
        finish(cfg, &dir)?;
    }
    Ok(())
}

use std::fmt::Write as _;
use std::path::Path;

use momentgmm::benchmark::{self, ExperimentConfig};
use momentgmm::gmm::{sample, EmOptions, GmmParams};
use momentgmm::moments::empirical_moments;
use momentgmm::waring::{decompose as waring_decompose, DecompositionOptions};
use momentgmm::{io, pca as pca_mod, Error, Result};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::{BenchmarkArgs, DecomposeArgs, FitArgs, Format, ModelArgs, MomentsArgs, PcaArgs, SimulateArgs};

fn unsupported(format: Format, what: &str) -> Error {
    Error::InvalidInput(format!("--format {format:?} is not available for {what}").to_lowercase())
}

fn load_model(m: &ModelArgs) -> Result<GmmParams> {
    match (&m.params, m.example) {
        (Some(p), _) => io::params_from_json(&io::read_to_string(p)?),
        (None, Some(1)) => Ok(benchmark::example1()),
        (None, Some(2)) => Ok(benchmark::example2()),
        _ => Err(Error::InvalidInput("one of --params or --example is required".into())),
    }
}

fn column_names(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("x{j}")).collect()
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serialises")
}

pub fn simulate(a: &SimulateArgs, seed: u64) -> Result<()> {
    let theta = load_model(&a.model)?;
    if a.n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let ds = sample(&theta, a.n, seed)?;
    let header = a.header.then(|| column_names(theta.dim()));
    io::emit(a.out.as_deref(), &io::csv_string(&ds.data, header.as_deref()))?;
    if let (Some(path), Some(labels)) = (&a.labels_out, &ds.labels) {
        io::write_string(path, &io::labels_string(labels))?;
    }
    Ok(())
}

/// Long-format rows for a scatterplot matrix: every ordered feature pair.
pub fn plot_rows(data: &DMatrix<f64>, labels: &[usize], names: &[String]) -> String {
    let mut out = String::from("label,feature_x,feature_y,x,y\n");
    let m = data.ncols();
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            for (row, label) in labels.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{label},{},{},{},{}",
                    names[i],
                    names[j],
                    io::format_value(data[(row, i)]),
                    io::format_value(data[(row, j)])
                );
            }
        }
    }
    out
}

fn params_csv(p: &GmmParams) -> String {
    let mut out = String::from("component,weight,variance");
    for j in 1..=p.dim() {
        let _ = write!(out, ",mean{j}");
    }
    out.push('\n');
    for k in 0..p.n_components() {
        let _ = write!(
            out,
            "{k},{},{}",
            io::format_value(p.weights[k]),
            io::format_value(p.variances[k])
        );
        for x in &p.means[k] {
            let _ = write!(out, ",{}", io::format_value(*x));
        }
        out.push('\n');
    }
    out
}

pub fn fit(a: &FitArgs, seed: u64, format: Format) -> Result<()> {
    let csv = io::read_csv(&a.data)?;
    let truth = a.labels.as_deref().map(io::read_labels).transpose()?;
    let em = EmOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        seed,
    };
    let report = benchmark::fit(&csv.data, a.r, a.init, &em, truth.as_deref())?;
    if report.fallback {
        eprintln!(
            "warning: {} initialisation failed, random initialisation used instead{}",
            a.init,
            report.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
        );
    }
    let (n, m) = csv.data.shape();
    let bic = if a.bic_lower_is_better { -report.bic } else { report.bic };
    let text = match format {
        Format::Json => {
            let mut v = serde_json::to_value(&report).expect("report serialises");
            v["bic"] = json!(bic);
            v["bic_convention"] = json!(if a.bic_lower_is_better { "-2l+nu*ln(n)" } else { "2l-nu*ln(n)" });
            v["n"] = json!(n);
            v["m"] = json!(m);
            v["r"] = json!(a.r);
            pretty(&v)
        }
        Format::Csv => params_csv(&report.params),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "initializer  {}{}", a.init, if report.fallback { " (fallback: random)" } else { "" });
            let _ = writeln!(s, "n, m, r      {n}, {m}, {}", a.r);
            let _ = writeln!(s, "iterations   {} (converged: {})", report.iterations, report.converged);
            let _ = writeln!(s, "loglik       {:.6}", report.loglik);
            let _ = writeln!(s, "BIC          {bic:.4}");
            if let (Some(ari), Some(err)) = (report.ari, report.error_rate) {
                let _ = writeln!(s, "ARI          {ari:.6}");
                let _ = writeln!(s, "errorRate    {err:.6}");
            }
            let _ = writeln!(s, "time(s)      {:.3}", report.wall_time_s);
            for k in 0..a.r {
                let mean: Vec<String> = report.params.means[k].iter().map(|x| format!("{x:.4}")).collect();
                let _ = writeln!(
                    s,
                    "component {k}: weight {:.4}, variance {:.4}, mean ({})",
                    report.params.weights[k],
                    report.params.variances[k],
                    mean.join(", ")
                );
            }
            s
        }
    };
    io::emit(a.out.as_deref(), &text)?;
    if let Some(path) = &a.labels_out {
        io::write_string(path, &io::labels_string(&report.hard_labels))?;
    }
    if let Some(path) = &a.plot_data {
        let names = csv.header.clone().unwrap_or_else(|| column_names(m));
        io::write_string(path, &plot_rows(&csv.data, &report.hard_labels, &names))?;
    }
    Ok(())
}

pub fn decompose(a: &DecomposeArgs, seed: u64, format: Format) -> Result<()> {
    let t = io::tensor_from_json(&io::read_to_string(&a.tensor)?)?;
    let opts = DecompositionOptions {
        rank: a.rank,
        rank_tolerance: a.tol,
        k: a.k,
        refine_iterations: a.refine,
        rng_seed: seed,
        ..Default::default()
    };
    let d = waring_decompose(&t, &opts)?;
    if d.complex_warning {
        eprintln!("warning: points had imaginary parts (ratio {:.3e}); real parts kept", d.imaginary_ratio);
    }
    let text = match format {
        Format::Json => io::decomposition_to_json(&d),
        Format::Csv => {
            let mut s = String::from("weight");
            for j in 1..=t.dim() {
                let _ = write!(s, ",x{j}");
            }
            s.push('\n');
            for (w, p) in d.waring.weights.iter().zip(&d.waring.points) {
                s.push_str(&io::format_value(*w));
                for x in p {
                    let _ = write!(s, ",{}", io::format_value(*x));
                }
                s.push('\n');
            }
            s
        }
        Format::Text => {
            let mut s = format!("rank {} (k={}), relative residual {:.3e}\n", d.waring.rank(), d.k, d.residual);
            for (w, p) in d.waring.weights.iter().zip(&d.waring.points) {
                let pts: Vec<String> = p.iter().map(|x| format!("{x:.6}")).collect();
                let _ = writeln!(s, "{w:+.6} * ({} . X)^{}", pts.join(", "), t.order());
            }
            s
        }
    };
    io::emit(a.out.as_deref(), &text)
}

pub fn moments(a: &MomentsArgs, format: Format) -> Result<()> {
    let csv = io::read_csv(&a.data)?;
    let ms = empirical_moments(&csv.data)?;
    if ms.multiplicity_warning {
        eprintln!("warning: smallest covariance eigenvalue is not simple");
    }
    let text = match format {
        Format::Json => io::moments_to_json(&ms),
        Format::Text => {
            let mut s = format!("sigma_bar_sq {}\n", ms.sigma_bar_sq);
            let _ = writeln!(s, "v  {:?}", ms.v);
            let _ = writeln!(s, "m1 {:?}", ms.m1);
            for row in ms.m2.row_iter() {
                let _ = writeln!(s, "m2 {:?}", row.iter().collect::<Vec<_>>());
            }
            let _ = writeln!(s, "m3 {:?}", ms.m3.coeffs());
            s
        }
        Format::Csv => return Err(unsupported(format, "moments")),
    };
    io::emit(a.out.as_deref(), &text)
}

pub fn pca(a: &PcaArgs) -> Result<()> {
    let csv = io::read_csv(&a.data)?;
    let p = pca_mod::pca(&csv.data, a.q)?;
    let header: Option<Vec<String>> = a.header.then(|| (1..=a.q).map(|j| format!("pc{j}")).collect());
    io::emit(a.out.as_deref(), &io::csv_string(&p.scores, header.as_deref()))
}

fn experiment(a: &BenchmarkArgs, seed: u64) -> Result<ExperimentConfig> {
    if let Some(path) = &a.config {
        let text = io::read_to_string(path)?;
        return serde_json::from_str(&text).map_err(|e| Error::Parse(format!("experiment config: {e}")));
    }
    let model = load_model(&a.model)?;
    let mut cfg = ExperimentConfig::new(model, a.n, a.replicates, seed);
    cfg.initializers = a.initializers.clone();
    cfg.max_iter = a.max_iter;
    cfg.tol = a.tol;
    cfg.repeats = a.repeats;
    Ok(cfg)
}

pub fn benchmark(a: &BenchmarkArgs, seed: u64, format: Format) -> Result<()> {
    let cfg = experiment(a, seed)?;
    let out = benchmark::run_benchmark(&cfg)?;
    let summary = benchmark::summary_to_json(&out.summary);
    let table = benchmark::summary_table(&out.summary, Some(&out.mean_time_s));
    let rows = benchmark::rows_to_csv(&out.rows);
    match &a.out {
        Some(dir) => {
            io::write_string(&dir.join("summary.json"), &(summary + "\n"))?;
            io::write_string(&dir.join("replicates.csv"), &rows)?;
            io::write_string(&dir.join("summary.txt"), &table)?;
            let times: serde_json::Map<String, Value> = out
                .mean_time_s
                .iter()
                .map(|(k, v)| (k.to_string(), json!(v)))
                .collect();
            io::write_string(&dir.join("timings.json"), &pretty(&Value::Object(times)))?;
            if format == Format::Text {
                print!("{table}");
            }
            Ok(())
        }
        None => {
            let text = match format {
                Format::Json => summary,
                Format::Csv => rows,
                Format::Text => table,
            };
            io::emit(None::<&Path>, &text)
        }
    }
}

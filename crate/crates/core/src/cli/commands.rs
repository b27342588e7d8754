use std::fs::File;
use std::hint::black_box;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;

use super::config::{parse_grid, resolve_seed, ConfigFile, SEED_ENV};
use super::report::{FoldLine, RunReport};
use super::{
    BenchCmd, CliError, CvgridCmd, DataArgs, DataFormat, EvalCmd, ExportCmd, GlobalArgs, KernelcorrCmd, Toggle,
    TrainArgs, TrainCmd,
};
use crate::data::{apply_normalizer, fit_logistic_normalizer, load_csv, load_sparse_text, CsvOptions, Dataset, LabelColumn};
use crate::error::MbklError;
use crate::kernel::{distance_correlation_report, gram_matrix, uniform_bank, GRAM_LIMIT};
use crate::matrix::Matrix;
use crate::mbkl::{
    accuracy, cross_validate, fit, load_model, mean_class_accuracy, save_model, select_hyperparameters, GridSpec,
    Method, Model, Timings, TrainConfig, DEFAULT_C_GRID,
};
use crate::stumps::write_stumps_csv;

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn set_workers(global: &GlobalArgs, file: &ConfigFile) -> Result<()> {
    if let Some(n) = file.pick(global.workers, "workers")? {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        // The global pool can only be built once per process; later calls
        // keep the first size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn seed_env() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

struct DataSettings {
    path: PathBuf,
    format: DataFormat,
    label_column: Option<usize>,
    header: bool,
}

fn resolve_data(args: &DataArgs, file: &ConfigFile) -> Result<DataSettings> {
    let path: PathBuf = file
        .pick(args.data.clone(), "data")?
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let format = match file.pick(args.format, "format")? {
        Some(f) => f,
        None if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => DataFormat::Csv,
        None => DataFormat::Sparse,
    };
    Ok(DataSettings {
        path,
        format,
        label_column: file.pick(args.label_column, "label-column")?,
        header: args.header || file.get::<bool>("header")?.unwrap_or(false),
    })
}

impl DataSettings {
    /// Sparse inputs are padded to `n_features` when given.
    fn load(&self, n_features: Option<usize>) -> Result<Dataset> {
        let loaded = match self.format {
            DataFormat::Csv => load_csv(
                &self.path,
                CsvOptions {
                    label_column: self.label_column.map_or(LabelColumn::Last, LabelColumn::Index),
                    has_header: self.header,
                },
            ),
            DataFormat::Sparse => load_sparse_text(&self.path, n_features),
        };
        // Whatever is wrong with the input file is a data error.
        loaded.map_err(|e| CliError::Data(e.to_string()))
    }

    fn echo(&self, report: &mut RunReport) {
        report.config("data", self.path.display());
        report.config(
            "format",
            match self.format {
                DataFormat::Csv => "csv",
                DataFormat::Sparse => "sparse",
            },
        );
    }
}

struct TrainSettings {
    cfg: TrainConfig,
    method: Method,
    c1: Option<f64>,
    c2: Option<f64>,
    grid: Vec<f64>,
    inner_folds: usize,
}

fn resolve_train(args: &TrainArgs, file: &ConfigFile, format: DataFormat) -> Result<TrainSettings> {
    let d = TrainConfig::default();
    let normalize = file
        .pick(args.normalize, "normalize")?
        .map_or(format == DataFormat::Csv, |t| t == Toggle::On);
    let c1 = file.pick(args.c1, "c1")?;
    let c2 = file.pick(args.c2, "c2")?;
    let grid = match file.pick(args.grid.clone(), "grid")? {
        Some(g) => parse_grid(&g)?,
        None => DEFAULT_C_GRID.to_vec(),
    };
    let inner_folds = file.pick(args.inner_folds, "inner-folds")?.unwrap_or(3);
    if inner_folds < 2 {
        return Err(CliError::Usage("--inner-folds must be at least 2".into()));
    }
    let cfg = TrainConfig {
        initial_stumps: file.pick(args.stumps, "stumps")?,
        neg_pos_ratio: file.pick(args.neg_pos_ratio, "neg-pos-ratio")?.unwrap_or(d.neg_pos_ratio),
        step1_cap: file.pick(args.step1_cap, "step1-cap")?.unwrap_or(d.step1_cap),
        c1: c1.unwrap_or(d.c1),
        c2: c2.unwrap_or(d.c2),
        seed: resolve_seed(args.seed, file, seed_env().as_deref())?,
        step0_mode: file.pick(args.step0_table, "step0-table")?.unwrap_or(d.step0_mode),
        normalize,
        tol: file.pick(args.tol, "tol")?.unwrap_or(d.tol),
        max_epochs: file.pick(args.max_epochs, "max-epochs")?.unwrap_or(d.max_epochs),
    };
    cfg.validate()?;
    Ok(TrainSettings {
        cfg,
        method: file.pick(args.baseline, "baseline")?.unwrap_or_default(),
        c1,
        c2,
        grid,
        inner_folds,
    })
}

impl TrainSettings {
    /// The penalty search still to run, if any penalty the method uses is free.
    fn search(&self, folds: usize) -> Option<GridSpec> {
        let free1 = self.method.uses_c1() && self.c1.is_none();
        let free2 = self.method.uses_c2() && self.c2.is_none();
        (free1 || free2).then(|| GridSpec {
            c1: self.c1.map_or_else(|| self.grid.clone(), |c| vec![c]),
            c2: self.c2.map_or_else(|| self.grid.clone(), |c| vec![c]),
            inner_folds: folds,
        })
    }

    fn echo(&self, report: &mut RunReport, d: usize) {
        let show = |used: bool, fixed: Option<f64>| match (used, fixed) {
            (false, _) => "-".to_string(),
            (true, Some(c)) => c.to_string(),
            (true, None) => "grid".to_string(),
        };
        let c = &self.cfg;
        report.config("baseline", self.method);
        report.config("normalize", if c.normalize { "on" } else { "off" });
        report.config("stumps", c.n_stumps(d));
        report.config("neg-pos-ratio", c.neg_pos_ratio);
        report.config("step1-cap", c.step1_cap);
        report.config("step0-table", c.step0_mode);
        report.config("c1", show(self.method.uses_c1(), self.c1));
        report.config("c2", show(self.method.uses_c2(), self.c2));
        let grid: Vec<String> = self.grid.iter().map(f64::to_string).collect();
        report.config("grid", grid.join(","));
        report.config("inner-folds", self.inner_folds);
        report.config("tol", c.tol);
        report.config("max-epochs", c.max_epochs);
    }

    fn c_or_dash(&self, used: bool, c: f64) -> Option<f64> {
        used.then_some(c)
    }
}

fn dataset_results(report: &mut RunReport, ds: &Dataset) {
    report.result("n_samples", ds.n_samples());
    report.result("n_features", ds.n_features());
    report.result("n_classes", ds.n_classes());
}

fn time_lines(report: &mut RunReport, t: &Timings) {
    report.time("normalize", t.normalize);
    report.time("stumps", t.stumps);
    report.time("step0", t.step0);
    report.time("step1", t.step1);
    report.time("step2", t.step2);
    report.time("total", t.total);
}

/// Prints the report with timings and writes the file copy, which carries
/// timings only on request so that seeded reruns are byte-identical.
fn emit(report: &RunReport, out: &mut dyn Write, global: &GlobalArgs) -> Result<()> {
    out.write_all(report.render(true).as_bytes())
        .map_err(|e| CliError::Data(format!("stdout: {e}")))?;
    if let Some(p) = &global.report {
        std::fs::write(p, report.render(global.timings)).map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

pub(super) fn train(cmd: TrainCmd, out: &mut dyn Write) -> Result<()> {
    let file = ConfigFile::load(cmd.global.config.as_deref())?;
    set_workers(&cmd.global, &file)?;
    let data = resolve_data(&cmd.data, &file)?;
    let ts = resolve_train(&cmd.train, &file, data.format)?;
    let folds = file.pick(cmd.folds, "folds")?;
    if folds.is_some_and(|k| k < 2) {
        return Err(CliError::Usage("--folds must be at least 2".into()));
    }
    let model_path: PathBuf = file.pick(cmd.out.clone(), "out")?.unwrap_or_else(|| "model.mbkl".into());
    let ds = data.load(None)?;

    let mut report = RunReport::new("train", ts.cfg.seed);
    data.echo(&mut report);
    ts.echo(&mut report, ds.n_features());
    report.config("folds", folds.map_or_else(|| "-".to_string(), |k| k.to_string()));
    dataset_results(&mut report, &ds);
    let method = ts.method;
    let search = ts.search(ts.inner_folds);

    let mut cv_time = Timings::default();
    let mut selection_secs = 0.0;
    if let Some(k) = folds {
        let cv = cross_validate(&ds, &ts.cfg, method, k, search.as_ref())?;
        report.set_folds(
            cv.folds
                .iter()
                .map(|f| FoldLine {
                    fold: f.fold,
                    n_test: f.n_test,
                    accuracy: f.accuracy,
                    mean_class_accuracy: f.mean_class_accuracy,
                    c1: ts.c_or_dash(method.uses_c1(), f.c1),
                    c2: ts.c_or_dash(method.uses_c2(), f.c2),
                    n_active: f.n_active,
                })
                .collect(),
        );
        for f in &cv.folds {
            cv_time.add(&f.timings);
            selection_secs += f.selection_secs;
        }
    }

    let mut final_cfg = ts.cfg.clone();
    let t = Instant::now();
    if let Some(g) = &search {
        let sel = select_hyperparameters(&ds, &ts.cfg, method, g)?;
        final_cfg.c1 = sel.c1;
        final_cfg.c2 = sel.c2;
        report.result("final.selection_accuracy", sel.accuracy);
    }
    selection_secs += t.elapsed().as_secs_f64();
    let (model, timings) = fit(&ds, &final_cfg, method)?;
    save_model(&model, &model_path)?;
    if let Some(c) = ts.c_or_dash(method.uses_c1(), final_cfg.c1) {
        report.result("final.c1", c);
    }
    if let Some(c) = ts.c_or_dash(method.uses_c2(), final_cfg.c2) {
        report.result("final.c2", c);
    }
    report.result("final.n_active", model.n_active());
    report.result("model", model_path.display());

    cv_time.add(&timings);
    report.time("selection", selection_secs);
    time_lines(&mut report, &cv_time);
    emit(&report, out, &cmd.global)
}

/// Dataset labels re-indexed into the model's class list by name.
fn model_labels(model: &Model, ds: &Dataset) -> Result<Vec<usize>> {
    let names = model.class_names();
    let map: Vec<usize> = ds
        .class_names()
        .iter()
        .map(|n| {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| CliError::Data(format!("class {n:?} is unknown to the model")))
        })
        .collect::<Result<_>>()?;
    Ok(ds.labels().iter().map(|&l| map[l]).collect())
}

fn check_dim(model: &Model, ds: &Dataset) -> Result<()> {
    if ds.n_features() != model.n_features() {
        return Err(MbklError::DimensionMismatch {
            expected: model.n_features(),
            found: ds.n_features(),
        }
        .into());
    }
    Ok(())
}

fn model_echo(report: &mut RunReport, path: &Path, model: &Model) {
    report.config("model", path.display());
    report.result("model.kind", model.kind());
    report.result("model.n_active", model.n_active());
    report.result("model.n_features", model.n_features());
}

pub(super) fn eval(cmd: EvalCmd, out: &mut dyn Write) -> Result<()> {
    let file = ConfigFile::load(cmd.global.config.as_deref())?;
    set_workers(&cmd.global, &file)?;
    let data = resolve_data(&cmd.data, &file)?;
    let model = load_model(&cmd.model)?;
    let ds = data.load(Some(model.n_features()))?;
    check_dim(&model, &ds)?;
    let truth = model_labels(&model, &ds)?;
    let t = Instant::now();
    let predicted = model.predict_matrix(ds.features())?;
    let secs = t.elapsed().as_secs_f64();

    let mut report = RunReport::new("eval", 0);
    model_echo(&mut report, &cmd.model, &model);
    data.echo(&mut report);
    report.result("n_samples", ds.n_samples());
    report.result("accuracy", accuracy(&predicted, &truth));
    report.result(
        "mean_class_accuracy",
        mean_class_accuracy(&predicted, &truth, model.class_names().len()),
    );
    if let Some(p) = &cmd.predictions {
        let names = model.class_names();
        let mut w = create(p)?;
        let mut body = String::from("index,true,predicted\n");
        for (i, (&t, &y)) in truth.iter().zip(&predicted).enumerate() {
            body.push_str(&format!("{i},{},{}\n", names[t], names[y]));
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(p, e))?;
        report.result("predictions", p.display());
    }
    report.time("predict", secs);
    emit(&report, out, &cmd.global)
}

pub(super) fn cvgrid(cmd: CvgridCmd, out: &mut dyn Write) -> Result<()> {
    let file = ConfigFile::load(cmd.global.config.as_deref())?;
    set_workers(&cmd.global, &file)?;
    let data = resolve_data(&cmd.data, &file)?;
    let ts = resolve_train(&cmd.train, &file, data.format)?;
    let k = file.pick(cmd.folds, "folds")?.unwrap_or(ts.inner_folds);
    if k < 2 {
        return Err(CliError::Usage("--folds must be at least 2".into()));
    }
    let ds = data.load(None)?;
    let mut report = RunReport::new("cvgrid", ts.cfg.seed);
    data.echo(&mut report);
    ts.echo(&mut report, ds.n_features());
    report.config("folds", k);
    dataset_results(&mut report, &ds);

    let grid = GridSpec {
        c1: ts.c1.map_or_else(|| ts.grid.clone(), |c| vec![c]),
        c2: ts.c2.map_or_else(|| ts.grid.clone(), |c| vec![c]),
        inner_folds: k,
    };
    let t = Instant::now();
    let sel = select_hyperparameters(&ds, &ts.cfg, ts.method, &grid)?;
    let secs = t.elapsed().as_secs_f64();
    if ts.method.uses_c1() {
        report.result("best.c1", sel.c1);
    }
    if ts.method.uses_c2() {
        report.result("best.c2", sel.c2);
    }
    report.result("best.accuracy", sel.accuracy);
    for (i, s) in sel.scores.iter().enumerate() {
        let c1 = ts.c_or_dash(ts.method.uses_c1(), s.c1).map_or("-".into(), |c| c.to_string());
        let c2 = ts.c_or_dash(ts.method.uses_c2(), s.c2).map_or("-".into(), |c| c.to_string());
        report.result(&format!("grid.{i}.c1"), c1);
        report.result(&format!("grid.{i}.c2"), c2);
        report.result(
            &format!("grid.{i}.accuracy"),
            s.accuracy.map_or("none".into(), |a| a.to_string()),
        );
    }
    report.time("selection", secs);
    emit(&report, out, &cmd.global)
}

/// Seconds per sample of sequential single-sample prediction over the rows
/// of `x`, one measurement per repeat.
pub fn per_sample_latency(model: &Model, x: &Matrix, repeats: usize) -> crate::Result<Vec<f64>> {
    if x.rows() == 0 {
        return Err(MbklError::EmptyDataset);
    }
    // Warm-up pass, which also surfaces dimension errors.
    for row in x.iter_rows() {
        black_box(model.predict(black_box(row))?.class);
    }
    let mut out = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        for row in x.iter_rows() {
            black_box(model.predict(black_box(row))?.class);
        }
        out.push(t.elapsed().as_secs_f64() / x.rows() as f64);
    }
    Ok(out)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub(super) fn bench(cmd: BenchCmd, out: &mut dyn Write) -> Result<()> {
    if cmd.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let file = ConfigFile::load(cmd.global.config.as_deref())?;
    set_workers(&cmd.global, &file)?;
    let data = resolve_data(&cmd.data, &file)?;
    let model = load_model(&cmd.model)?;
    let ds = data.load(Some(model.n_features()))?;
    check_dim(&model, &ds)?;
    let lat = per_sample_latency(&model, ds.features(), cmd.repeats)?;

    let mut report = RunReport::new("bench", 0);
    model_echo(&mut report, &cmd.model, &model);
    data.echo(&mut report);
    report.config("repeats", cmd.repeats);
    report.result("n_samples", ds.n_samples());
    report.result("k_active", model.n_active());
    report.result("d", model.n_features());
    report.result("median_latency_ns", median(&lat) * 1e9);
    let all: Vec<String> = lat.iter().map(|s| (s * 1e9).to_string()).collect();
    report.result("latencies_ns", all.join(","));
    emit(&report, out, &cmd.global)
}

pub(super) fn kernelcorr(cmd: KernelcorrCmd, out: &mut dyn Write) -> Result<()> {
    let file = ConfigFile::load(cmd.global.config.as_deref())?;
    set_workers(&cmd.global, &file)?;
    let data = resolve_data(&cmd.data, &file)?;
    let seed = resolve_seed(cmd.seed, &file, seed_env().as_deref())?;
    let normalize = file.pick(cmd.normalize, "normalize")? == Some(Toggle::On);
    let scatter: PathBuf = file.pick(cmd.out.clone(), "out")?.unwrap_or_else(|| "kernelcorr.csv".into());
    let ds = data.load(None)?;
    let n_stumps = file
        .pick(cmd.stumps, "stumps")?
        .unwrap_or_else(|| TrainConfig::default().n_stumps(ds.n_features()));
    let ds = if normalize {
        apply_normalizer(&fit_logistic_normalizer(&ds), &ds)?
    } else {
        ds
    };

    let t = Instant::now();
    let rep = distance_correlation_report(ds.features(), n_stumps, seed, cmd.pair_cap)?;
    let secs = t.elapsed().as_secs_f64();
    let mut w = create(&scatter)?;
    rep.write_scatter_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&scatter, e))?;

    let mut report = RunReport::new("kernelcorr", seed);
    data.echo(&mut report);
    report.config("normalize", if normalize { "on" } else { "off" });
    report.config("stumps", n_stumps);
    report.config("pair-cap", cmd.pair_cap);
    report.result("n_samples", rep.n_samples);
    report.result("total_pairs", rep.total_pairs);
    report.result("pairs", rep.pairs.len());
    report.result("sampled", rep.sampled);
    match rep.pearson {
        Some(r) => report.result("pearson", r),
        None => {
            warn!("pearson correlation is undefined: a distance has zero variance over the pairs");
            report.result("pearson", "undefined");
        }
    }
    report.result("scatter", scatter.display());
    if let Some(g) = &cmd.gram {
        let bank = uniform_bank(ds.features(), n_stumps, seed);
        let (sorted, _) = gram_matrix(ds.features(), &bank, GRAM_LIMIT)?.class_sorted(ds.labels())?;
        let mut w = create(g)?;
        sorted.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(g, e))?;
        report.result("gram", g.display());
    }
    report.time("kernelcorr", secs);
    emit(&report, out, &cmd.global)
}

pub(super) fn export(cmd: ExportCmd, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&cmd.model)?;
    let json = model.to_json();
    match &cmd.out {
        Some(p) => std::fs::write(p, &json).map_err(|e| io_err(p, e))?,
        None => writeln!(out, "{json}").map_err(|e| CliError::Data(format!("stdout: {e}")))?,
    }
    if let Some(p) = &cmd.stumps_csv {
        let Model::Bank(m) = &model else {
            return Err(CliError::Usage("the linear baseline has no stump table".into()));
        };
        let mut w = create(p)?;
        write_stumps_csv(&m.bank.stumps, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

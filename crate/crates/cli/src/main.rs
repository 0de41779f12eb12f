mod args;
mod table;

use std::io::Write;
use std::net::ToSocketAddrs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Map, Value};
use workbench_core::data::{data_quality, feature_select, summarize, TaskKind};
use workbench_core::experiment::ops::{self, render_json};
use workbench_core::experiment::{
    emit_report, run_pipeline_config, AnalysisRequest, DatasetInfo, Experiment, Instance, ModelInfo, Outcome,
    PipelineConfig, ReportBundle,
};
use workbench_core::models::ScoreTable;
use workbench_core::{Error, ErrorClass, Result};

use args::{Cli, Command, DataCommand, DataSource, DiagnoseArgs, ExplainArgs, Format, TrainArgs};

const DEFAULT_TEST_RATIO: f64 = 0.2;

fn exit_code(class: ErrorClass) -> ExitCode {
    ExitCode::from(match class {
        ErrorClass::Config => 1,
        ErrorClass::Data | ErrorClass::Storage => 2,
        ErrorClass::Capability | ErrorClass::Execution | ErrorClass::Conflict => 3,
    })
}

fn threads() -> Result<Option<usize>> {
    match std::env::var("WORKBENCH_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::invalid("WORKBENCH_THREADS", format!("expected a positive integer, got `{v}`"))),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = threads().and_then(|n| {
        if let Some(n) = n {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::invalid("WORKBENCH_THREADS", e.to_string()))?;
        }
        run(cli)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.class())
        }
    }
}

struct Ctx {
    path: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Format,
}

impl Ctx {
    fn open(&self) -> Result<Experiment> {
        if self.path.exists() {
            Experiment::load(&self.path)
        } else {
            Ok(Experiment::new(self.seed.unwrap_or(0)))
        }
    }

    fn save(&self, exp: &Experiment) -> Result<()> {
        exp.save(&self.path)
    }

    fn write(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, text).map_err(|source| Error::Io { path: path.clone(), source }),
            None => std::io::stdout()
                .lock()
                .write_all(text.as_bytes())
                .map_err(|source| Error::Io { path: "<stdout>".into(), source }),
        }
    }

    /// JSON or the generic table; `brief` replaces the table when given.
    fn emit<T: serde::Serialize>(&self, value: &T, brief: Option<String>) -> Result<()> {
        let text = match self.format {
            Format::Json => render_json(value)?,
            Format::Table => match brief {
                Some(b) => format!("{b}\n"),
                None => table::render(&serde_json::to_value(value)?),
            },
        };
        self.write(&text)
    }

    fn emit_report(&self, bundle: &ReportBundle) -> Result<()> {
        match self.format {
            Format::Json => self.write(&bundle.to_json()?),
            Format::Table => self.write(&table::render(&serde_json::to_value(bundle)?)),
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let format = cli.format.unwrap_or(if cli.out.is_some() { Format::Json } else { Format::Table });
    let ctx = Ctx { path: cli.experiment, seed: cli.seed, out: cli.out, format };
    match cli.command {
        Command::Data(cmd) => data(&ctx, cmd),
        Command::Train(a) => train(&ctx, a),
        Command::Register { scores, id } => {
            let mut exp = ctx.open()?;
            let table = ScoreTable::load(exp.dataset()?, &scores)?;
            let id = exp.register_scores(id, table, scores.display().to_string())?;
            ctx.save(&exp)?;
            ctx.emit(&ModelInfo::of(exp.model_entry(&id).expect("just added")), Some(id))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Interpret { model, row } => {
            analyse(&ctx, ctx.open()?, AnalysisRequest::Interpret { model, instance: row.map(Instance::row) })
        }
        Command::Explain(a) => explain(&ctx, a),
        Command::Diagnose(a) => diagnose(&ctx, a),
        Command::Compare { models, tests } => {
            let tests = tests.iter().map(|t| ops::diagnostic(t, Value::Null)).collect::<Result<Vec<_>>>()?;
            analyse(&ctx, ctx.open()?, AnalysisRequest::Compare { models, tests })
        }
        Command::Run { pipeline } => {
            let mut config = PipelineConfig::load(&pipeline)?;
            if let Some(seed) = ctx.seed {
                config.seed = seed;
            }
            let exp = run_pipeline_config(&config, pipeline.parent().unwrap_or(Path::new(".")))?;
            ctx.save(&exp)?;
            ctx.emit_report(&emit_report(&exp)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report => {
            ctx.emit_report(&emit_report(&ctx.open()?)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { host, port } => serve(&ctx, &host, port),
    }
}

fn load(exp: &mut Experiment, source: &DataSource) -> Result<()> {
    let task: TaskKind = source.task.parse()?;
    exp.load_data(&source.path, &source.target, task)
}

fn data(ctx: &Ctx, cmd: DataCommand) -> Result<ExitCode> {
    let mut exp = ctx.open()?;
    match cmd {
        DataCommand::Load(source) => {
            load(&mut exp, &source)?;
            ctx.save(&exp)?;
            ctx.emit(&DatasetInfo::of(exp.data.as_ref().expect("just loaded")), None)?;
        }
        DataCommand::Prepare { test_ratio } => {
            exp.prepare(test_ratio)?;
            ctx.save(&exp)?;
            ctx.emit(&DatasetInfo::of(exp.data.as_ref().expect("prepared")), None)?;
        }
        DataCommand::Summary => ctx.emit(&summarize(exp.dataset()?), None)?,
        DataCommand::Quality => ctx.emit(&data_quality(exp.dataset()?), None)?,
        DataCommand::Select { top_k } => ctx.emit(&feature_select(exp.dataset()?, top_k)?, None)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_object(text: Option<&str>, name: &str) -> Result<Map<String, Value>> {
    match text.map(serde_json::from_str::<Value>) {
        None => Ok(Map::new()),
        Some(Ok(Value::Object(m))) => Ok(m),
        Some(Ok(_)) => Err(Error::invalid(name, "expected a JSON object")),
        Some(Err(e)) => Err(Error::invalid(name, format!("invalid JSON: {e}"))),
    }
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<ExitCode> {
    let spec = ops::model_spec(&a.model, Value::Object(parse_object(a.params.as_deref(), "params")?))?;
    let mut exp = ctx.open()?;
    if let Some(path) = a.data {
        let source = DataSource { path, target: a.target.unwrap_or_default(), task: a.task.unwrap_or_default() };
        // Re-running against the already loaded file keeps the existing split.
        let loaded = exp.data.as_ref().is_some_and(|d| d.source == source.path.display().to_string());
        if !loaded {
            load(&mut exp, &source)?;
            exp.prepare(a.test_ratio.unwrap_or(DEFAULT_TEST_RATIO))?;
        }
    } else if let Some(r) = a.test_ratio {
        exp.prepare(r)?;
    }
    let id = exp.train_model(a.id, spec)?;
    ctx.save(&exp)?;
    ctx.emit(&ModelInfo::of(exp.model_entry(&id).expect("just trained")), Some(id))?;
    Ok(ExitCode::SUCCESS)
}

/// Check, run (or fetch the stored entry), save and print a result entry.
/// A stored failure still prints the entry, then exits by its class.
fn analyse(ctx: &Ctx, mut exp: Experiment, request: AnalysisRequest) -> Result<ExitCode> {
    exp.check(&request)?;
    let request = match ctx.seed {
        Some(seed) => request.with_seed(seed),
        None => request,
    };
    let entry = exp.run(request)?.clone();
    ctx.save(&exp)?;
    ctx.emit(&entry, None)?;
    match &entry.outcome {
        Outcome::Ok { .. } => Ok(ExitCode::SUCCESS),
        Outcome::Error { class, message } => {
            eprintln!("error: {message}");
            Ok(exit_code(*class))
        }
    }
}

fn explain(ctx: &Ctx, a: ExplainArgs) -> Result<ExitCode> {
    let mut params = parse_object(a.params.as_deref(), "params")?;
    params.insert("method".into(), json!(a.method));
    match a.feature.as_slice() {
        [] => {}
        [f] if a.method != "pdp" => {
            params.insert("feature".into(), json!(f));
        }
        _ if a.method != "pdp" => return Err(Error::invalid("feature", format!("{} takes one feature", a.method))),
        fs => {
            params.insert("features".into(), json!(fs));
        }
    }
    let flags = [
        ("grid", a.grid.map(|v| json!(v))),
        ("bins", a.bins.map(|v| json!(v))),
        ("instance", a.row.map(|r| json!({"row": r}))),
        ("metric", a.metric.map(|v| json!(v))),
        ("repeats", a.repeats.map(|v| json!(v))),
        ("samples", a.samples.map(|v| json!(v))),
        ("top_k", a.top_k.map(|v| json!(v))),
        ("background", a.background.map(|v| json!(v))),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            params.insert(key.into(), v);
        }
    }
    let request = ops::explain_request(params)?;
    analyse(ctx, ctx.open()?, AnalysisRequest::Explain { model: a.model, request })
}

fn diagnose(ctx: &Ctx, a: DiagnoseArgs) -> Result<ExitCode> {
    let mut config = parse_object(a.config.as_deref(), "config")?;
    let sliced = !a.slice_feature.is_empty() || a.bins.is_some();
    match a.test.as_str() {
        "weakspot" | "overfit" if sliced => {
            let slice = config.entry("slice").or_insert_with(|| json!({}));
            let slice = slice.as_object_mut().ok_or_else(|| Error::invalid("config.slice", "expected a JSON object"))?;
            if !a.slice_feature.is_empty() {
                slice.insert("features".into(), json!(a.slice_feature));
            }
            if let Some(b) = a.bins {
                slice.insert("bins".into(), json!(b));
            }
        }
        "reliability" if sliced => {
            match a.slice_feature.as_slice() {
                [] => {}
                [f] => {
                    config.insert("slice_feature".into(), json!(f));
                }
                _ => return Err(Error::invalid("slice-feature", "reliability slices on one feature")),
            }
            if let Some(b) = a.bins {
                config.insert("slice_bins".into(), json!(b));
            }
        }
        test if sliced => {
            return Err(Error::invalid("slice-feature", format!("`{test}` does not take slicing options")));
        }
        _ => {}
    }
    let diagnostic = ops::diagnostic(&a.test, Value::Object(config))?;
    let exp = ctx.open()?;
    let model = match a.model {
        Some(m) => m,
        None => match exp.models.as_slice() {
            [only] => only.id.clone(),
            models => {
                return Err(Error::invalid(
                    "model",
                    format!("the experiment has {} models; choose one with --model", models.len()),
                ))
            }
        },
    };
    analyse(ctx, exp, AnalysisRequest::Diagnose { model, diagnostic })
}

fn serve(ctx: &Ctx, host: &str, port: u16) -> Result<ExitCode> {
    let workers = match threads()? {
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let endpoint = format!("{host}:{port}");
    let io_err = |source| Error::Io { path: endpoint.clone().into(), source };
    let addr = endpoint
        .to_socket_addrs()
        .map_err(io_err)?
        .next()
        .ok_or_else(|| Error::invalid("host", format!("`{host}` does not resolve")))?;
    let state = workbench_service::AppState::open(&ctx.path, ctx.seed.unwrap_or(0), workers)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(io_err)?;
    eprintln!("serving {} on http://{addr}", ctx.path.display());
    runtime.block_on(workbench_service::serve(addr, state)).map_err(io_err)?;
    Ok(ExitCode::SUCCESS)
}

use std::fmt::Display;
use std::fs::{self, File};
use std::path::Path;
use std::sync::Arc;

use fairsearch_core::deltr::{
    generate_synthetic, predict, read_training_csv, reference_gamma_scale, run_gamma_experiment, train,
    write_training_csv,
};
use fairsearch_core::fair::{construct_mtable, fair_rerank};
use fairsearch_core::search::parse_ndjson;
use fairsearch_core::{Candidate, DeltrModel, FairnessParams, MTable, TrainConfig};
use fairsearch_service::config::ConfigError;
use fairsearch_service::wire::{ModelRecord, MODEL_TYPE};
use fairsearch_service::{Engine, EngineOptions, ServiceConfig, ServiceError};
use serde::Serialize;

use crate::args::{
    Command, ExperimentArgs, IngestArgs, MTableArgs, PredictArgs, RerankArgs, ServeArgs, SynthArgs, TrainArgs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad parameters or a failure of the computation itself.
    #[error("{0}")]
    Invalid(String),
    /// Unreadable, unwritable or unparsable files and connections.
    #[error("{0}")]
    Io(String),
}

type Result<T> = std::result::Result<T, CliError>;

impl From<fairsearch_core::Error> for CliError {
    fn from(e: fairsearch_core::Error) -> Self {
        use fairsearch_core::Error::*;
        match e {
            Parse { .. } | Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Storage(_) => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::Io(e.to_string()),
            ConfigError::Invalid(_) => CliError::Invalid(e.to_string()),
        }
    }
}

fn in_file(path: &Path) -> impl Fn(CliError) -> CliError + '_ {
    move |e| match e {
        CliError::Invalid(m) => CliError::Invalid(format!("{}: {m}", path.display())),
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
    }
}

fn io_error(path: &Path, e: impl Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| io_error(path, e))
}

/// Writes `bytes` to `out` if given (returning nothing for stdout),
/// otherwise returns them for stdout.
fn emit(out: Option<&Path>, bytes: Vec<u8>) -> Result<Vec<u8>> {
    match out {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| io_error(path, e))?;
            eprintln!("wrote {}", path.display());
            Ok(Vec::new())
        }
        None => Ok(bytes),
    }
}

fn json_line<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable output");
    out.push(b'\n');
    out
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Runs one command and returns its stdout bytes. Nothing is printed on
/// failure, so stdout never carries a partial document.
pub fn run(command: Command) -> Result<Vec<u8>> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Mtable(a) => cmd_mtable(a),
        Command::Rerank(a) => cmd_rerank(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Ingest(a) => cmd_ingest(a),
    }
}

fn cmd_train(a: TrainArgs) -> Result<Vec<u8>> {
    let config = TrainConfig {
        gamma: a.gamma,
        learning_rate: a.learning_rate,
        iterations: a.iterations,
        seed: a.seed,
        init_scale: a.init_scale,
    };
    config.validate()?;
    let set = read_training_csv::<f64, _>(open(&a.data)?).map_err(|e| in_file(&a.data)(e.into()))?;
    let model = train(&set.queries, &config)?.with_feature_names(set.model_feature_names())?;

    let mut trajectory = csv::Writer::from_writer(Vec::new());
    trajectory
        .write_record(["iteration", "relevance_part", "fairness_part", "total"])
        .map_err(csv_error)?;
    for r in &model.trajectory {
        trajectory
            .write_record([
                r.iteration.to_string(),
                r.relevance.to_string(),
                r.fairness.to_string(),
                r.total.to_string(),
            ])
            .map_err(csv_error)?;
    }
    let trajectory = trajectory.into_inner().map_err(|e| CliError::Io(e.to_string()))?;

    let record = ModelRecord {
        model_name: a.model_name,
        model_type: MODEL_TYPE.to_string(),
        feature_set: model.feature_names.clone(),
        model,
        protected_key: None,
        protected_value: None,
    };
    fs::write(&a.out, json_line(&record)).map_err(|e| io_error(&a.out, e))?;
    if let (Some(first), Some(last)) = (record.model.trajectory.first(), record.model.trajectory.last()) {
        eprintln!(
            "trained {} iterations, total loss {} -> {}; model written to {}",
            last.iteration,
            first.total,
            last.total,
            a.out.display()
        );
    }
    Ok(trajectory)
}

fn load_model(path: &Path) -> Result<DeltrModel> {
    let text = read_text(path)?;
    if let Ok(record) = serde_json::from_str::<ModelRecord>(&text) {
        return Ok(record.model);
    }
    DeltrModel::from_json(&text).map_err(|e| in_file(path)(e.into()))
}

fn cmd_predict(a: PredictArgs) -> Result<Vec<u8>> {
    let model = load_model(&a.model)?;
    let set = read_training_csv::<f64, _>(open(&a.data)?).map_err(|e| in_file(&a.data)(e.into()))?;
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["query_id", "doc_id", "score", "rank"]).map_err(csv_error)?;
    for query in &set.queries {
        let prediction = predict(&model, &query.docs)?;
        let score_of = |id: &str| {
            query
                .docs
                .iter()
                .position(|d| d.doc_id == id)
                .map(|i| prediction.scores[i])
                .expect("ranked id is a query document")
        };
        for (rank, id) in prediction.ranking.iter().enumerate() {
            out.write_record([
                query.query_id.clone(),
                id.clone(),
                score_of(id).to_string(),
                (rank + 1).to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    out.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn cmd_mtable(a: MTableArgs) -> Result<Vec<u8>> {
    let table = construct_mtable(FairnessParams::new(a.k, a.p, a.alpha)?, a.adjust)?;
    Ok(json_line(&table))
}

fn parse_flag(value: &str) -> Option<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

fn read_candidates(path: &Path) -> Result<Vec<Candidate>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| io_error(path, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| io_error(path, format!("missing column `{name}`")))
    };
    let (id, score, protected) = (column("id")?, column("score")?, column("protected")?);
    let mut candidates = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| io_error(path, e))?;
        let bad = |what: &str| io_error(path, format!("line {line}: {what}"));
        let score: f64 = row[score].trim().parse().map_err(|_| bad("score is not a number"))?;
        let protected = parse_flag(&row[protected]).ok_or_else(|| bad("protected must be 0, 1, true or false"))?;
        candidates.push(Candidate::new(row[id].trim(), score, protected).map_err(|e| bad(&e.to_string()))?);
    }
    Ok(candidates)
}

#[derive(Serialize)]
struct RerankRow<'a> {
    rank: usize,
    id: &'a str,
    score: f64,
    protected: u8,
    required: usize,
    protected_so_far: usize,
    constraint_met: bool,
}

fn cmd_rerank(a: RerankArgs) -> Result<Vec<u8>> {
    let candidates = read_candidates(&a.candidates)?;
    let mtable: MTable = match &a.mtable_file {
        Some(path) => serde_json::from_str(&read_text(path)?).map_err(|e| io_error(path, e))?,
        None => {
            let p = a
                .fairness
                .p
                .ok_or_else(|| CliError::Invalid("--p is required without --mtable-file".into()))?;
            let k = a.fairness.k.unwrap_or(candidates.len());
            construct_mtable(FairnessParams::new(k, p, a.fairness.alpha)?, a.fairness.adjust)?
        }
    };
    let result = fair_rerank(&candidates, &mtable)?;

    let mut seen = 0;
    let rows: Vec<RerankRow> = result
        .ranking
        .iter()
        .enumerate()
        .map(|(i, c)| {
            seen += usize::from(c.protected);
            let required = mtable.entries()[i];
            RerankRow {
                rank: i + 1,
                id: &c.id,
                score: c.score,
                protected: u8::from(c.protected),
                required,
                protected_so_far: seen,
                constraint_met: seen >= required,
            }
        })
        .collect();
    let violations: Vec<String> = result.violations.iter().map(usize::to_string).collect();
    eprintln!("satisfied: {}; violations: [{}]", result.satisfied, violations.join(","));

    if a.json {
        return Ok(json_line(&serde_json::json!({
            "mtable": mtable,
            "ranking": rows,
            "satisfied": result.satisfied,
            "violations": result.violations,
        })));
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        out.serialize(row).map_err(csv_error)?;
    }
    out.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn cmd_synth(a: SynthArgs) -> Result<Vec<u8>> {
    let set = generate_synthetic::<f64>(a.n, a.protected_first, a.seed)?;
    let mut buf = Vec::new();
    write_training_csv(&mut buf, &set)?;
    emit(a.out.as_deref(), buf)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<Vec<u8>> {
    let config = TrainConfig {
        gamma: 0.0,
        learning_rate: a.learning_rate,
        iterations: a.iterations,
        seed: a.seed,
        init_scale: a.init_scale,
    };
    config.validate()?;
    let mut gammas = a.gammas.clone();
    if a.relative {
        let reference = generate_synthetic::<f64>(a.n, false, a.seed)?;
        let scale = reference_gamma_scale(&reference.queries[0])?
            .ok_or_else(|| CliError::Invalid("exposure penalty is zero on the reference data".into()))?;
        eprintln!("gamma scale {scale}");
        gammas.iter_mut().for_each(|g| *g *= scale);
    }
    let rows = run_gamma_experiment(a.n, &gammas, a.protected_first, a.seed, &config)?;
    let mut out = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        out.serialize(row).map_err(csv_error)?;
    }
    let buf = out.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    emit(a.out.as_deref(), buf)
}

fn cmd_serve(a: ServeArgs) -> Result<Vec<u8>> {
    let config = ServiceConfig::load(&a.config)?;
    let addr = config.socket_addr()?;
    let engine = Arc::new(Engine::open(&config.engine_options())?);
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    eprintln!("listening on {addr}");
    tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Io(e.to_string()))?
        .block_on(fairsearch_service::serve(engine, addr))
        .map_err(|e| CliError::Io(format!("{addr}: {e}")))?;
    Ok(Vec::new())
}

fn cmd_ingest(a: IngestArgs) -> Result<Vec<u8>> {
    let text = read_text(&a.file)?;
    let count = parse_ndjson(&text).map_err(|e| in_file(&a.file)(e.into()))?.len();
    let indexed = match (&a.url, &a.snapshot) {
        (Some(url), _) => {
            let endpoint = format!("{}/{}/_ingest", url.trim_end_matches('/'), a.index);
            let response = reqwest::blocking::Client::new()
                .post(&endpoint)
                .header("content-type", "application/x-ndjson")
                .body(text)
                .send()
                .map_err(|e| CliError::Io(format!("{endpoint}: {e}")))?;
            let status = response.status();
            let body: serde_json::Value = response
                .text()
                .map_err(|e| e.to_string())
                .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
                .map_err(|e| CliError::Io(format!("{endpoint}: {e}")))?;
            if !status.is_success() {
                let reason = body["error"]["reason"].as_str().unwrap_or("request failed").to_string();
                return Err(CliError::Invalid(format!("{endpoint}: {status}: {reason}")));
            }
            body["indexed"].as_u64().unwrap_or(count as u64) as usize
        }
        (None, Some(snapshot)) => {
            let engine = Engine::open(&EngineOptions {
                storage_dir: None,
                index_snapshot: Some(snapshot.clone()),
            })?;
            engine.ingest(&a.index, &text)?
        }
        (None, None) => unreachable!("clap requires --url or --snapshot"),
    };
    eprintln!("indexed {indexed} documents into `{}`", a.index);
    Ok(json_line(&serde_json::json!({"index": a.index, "indexed": indexed})))
}

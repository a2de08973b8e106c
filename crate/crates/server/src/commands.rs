use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;
use taboo_core::container::{
    Detector, EmbeddingSource, Metadata, ModelContainer, Payload, RecnnPayload, SelectivePayload,
};
use taboo_core::corpus::{
    clean_sentences, make_silver, read_records, split, write_records, Dataset, LabeledSentence,
    Splits,
};
use taboo_core::embeddings::EmbeddingTable;
use taboo_core::evalkit::{synthetic_embeddings, CompareReport, MetricsReport};
use taboo_core::keyword::{CountStore, CsanModel, InfRuleModel, KeywordMaxModel};
use taboo_core::recnn::{self, prepare, Activation, RecnnModel, TrainConfig};
use taboo_core::selective::{selective_train, PretrainBudget, SelectiveConfig};

use crate::api::{router, Catalog};
use crate::cli::{
    ActivationArg, CliError, Command, CompareArgs, EvalArgs, ModelKind, PredictArgs, PrepareArgs,
    PretrainArg, ServeArgs, TrainArgs,
};
use crate::detect::detect;

type Result<T> = std::result::Result<T, CliError>;

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Prepare(a) => prepare_cmd(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Compare(a) => compare_cmd(&a),
        Command::Predict(a) => predict_cmd(&a),
        Command::Serve(a) => serve_cmd(&a),
    }
}

fn with_path<T>(path: &Path, r: taboo_core::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_sentences(path: &Path) -> Result<Vec<LabeledSentence>> {
    with_path(
        path,
        read_records(BufReader::new(open(path)?)).map(|i| i.sentences),
    )
}

fn print_json(v: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("reports serialize")
    );
}

fn prepare_cmd(a: &PrepareArgs) -> Result<()> {
    if a.min_len > a.max_len {
        return Err(CliError::Usage(format!(
            "--min-len {} exceeds --max-len {}",
            a.min_len, a.max_len
        )));
    }
    let ingest = with_path(&a.input, read_records(BufReader::new(open(&a.input)?)))?;
    let read = ingest.sentences.len() + ingest.rejected_short.len();
    let (kept, clean) = clean_sentences(ingest.sentences, a.min_len, a.max_len);
    let dataset = match &a.silver {
        Some(info_type) => make_silver(&kept, info_type, a.seed)?,
        None => {
            let info_type = kept
                .first()
                .map(|s| s.info_type.clone())
                .unwrap_or_default();
            Dataset::unsplit("prepared", info_type, kept)
        }
    };
    let dataset = split(&dataset, a.splits, a.seed)?;

    std::fs::create_dir_all(&a.out)?;
    let s = &dataset.splits;
    for (name, part) in [("train", &s.train), ("dev", &s.dev), ("test", &s.test)] {
        let path = a.out.join(format!("{name}.tsv"));
        let mut w = BufWriter::new(File::create(&path)?);
        write_records(&mut w, part)?;
        w.flush()?;
    }
    print_json(&json!({
        "read": read,
        "rejected_short": ingest.rejected_short.len(),
        "too_short": clean.too_short,
        "too_long": clean.too_long,
        "ambiguous": clean.ambiguous,
        "kept": clean.kept,
        "silver": a.silver,
        "train": s.train.len(),
        "dev": s.dev.len(),
        "test": s.test.len(),
    }));
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let c = TrainConfig {
        learning_rates: a.learning_rates.0.clone(),
        line_search_epochs: a.line_search_epochs,
        batch_size: a.batch_size,
        sensitive_weight: a.weight,
        dropout: a.dropout,
        patience: a.patience,
        max_epochs: a.max_epochs,
        epsilon: a.epsilon,
        probe_interval: a.probe_interval,
        seed: a.seed,
        ..Default::default()
    };
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}

fn selective_config(a: &TrainArgs) -> Result<SelectiveConfig> {
    let c = SelectiveConfig {
        k: a.clusters,
        cutoff: a.cutoff,
        pretrain: match a.pretrain {
            PretrainArg::Auto => PretrainBudget::Auto,
            PretrainArg::Minibatches(n) => PretrainBudget::Minibatches(n),
        },
        seed: a.seed,
        only_class: a.only_class,
        ..Default::default()
    };
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}

fn activation(a: ActivationArg) -> Activation {
    match a {
        ActivationArg::Tanh => Activation::Tanh,
        ActivationArg::Sigmoid => Activation::Sigmoid,
        ActivationArg::Relu => Activation::Relu,
    }
}

/// Word vectors for network training and how the container refers to them.
fn word_vectors(a: &TrainArgs, data: &Dataset) -> Result<(EmbeddingTable, EmbeddingSource)> {
    match (&a.embeddings, a.random_embeddings) {
        (Some(path), _) => {
            let table = with_path(path, EmbeddingTable::load_text(BufReader::new(open(path)?)))?;
            let source = if a.link_embeddings {
                EmbeddingSource::File(std::path::absolute(path)?)
            } else {
                EmbeddingSource::Inline(table.clone())
            };
            Ok((table, source))
        }
        (None, Some(dim)) => {
            let table = synthetic_embeddings(data, dim, a.seed)?;
            Ok((table.clone(), EmbeddingSource::Inline(table)))
        }
        (None, None) => Err(CliError::Usage(
            "network models need --embeddings FILE or --random-embeddings DIM".into(),
        )),
    }
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let train = read_sentences(&a.train)?;
    let dev = a.dev.as_deref().map(read_sentences).transpose()?;
    let info_type = a
        .info_type
        .clone()
        .or_else(|| train.first().map(|s| s.info_type.clone()))
        .ok_or_else(|| CliError::Data(format!("{}: no training records", a.train.display())))?;
    let needs_dev = matches!(
        a.model,
        ModelKind::Recnn | ModelKind::Selective | ModelKind::KeywordMax
    );
    if needs_dev && dev.is_none() {
        return Err(CliError::Usage("this model kind needs --dev".into()));
    }
    if a.base_model.is_some() && a.model != ModelKind::Recnn {
        return Err(CliError::Usage("--base-model applies to recnn only".into()));
    }
    let dev = dev.unwrap_or_default();

    let mut metadata = Metadata::now()
        .note("train_file", a.train.display().to_string())
        .note("train_sentences", train.len());
    let (payload, summary) = match a.model {
        ModelKind::Infrule => {
            let store = CountStore::count_terms(&train, 1)?;
            let m = InfRuleModel::mine(&store, a.min_support, a.min_confidence);
            let s = json!({"rules": m.rules.len()});
            (Payload::InfRule(m), s)
        }
        ModelKind::Csan => {
            let store = CountStore::count_terms(&train, 1)?;
            let m = CsanModel::fit(&store, a.alpha)?;
            let s = json!({"threshold": m.threshold()});
            (Payload::Csan(m), s)
        }
        ModelKind::KeywordMax => {
            let store = CountStore::count_terms(&train, a.order)?;
            let m = KeywordMaxModel::fit(&store, &dev, a.order)?;
            let s = json!({"threshold": m.threshold, "dev_accuracy": m.fit_accuracy});
            (Payload::KeywordMax(m), s)
        }
        ModelKind::Recnn | ModelKind::Selective => {
            let config = train_config(a)?;
            let data = Dataset {
                name: "train".into(),
                info_type: info_type.clone(),
                splits: Splits {
                    train,
                    dev,
                    test: Vec::new(),
                },
            };
            let (table, source) = word_vectors(a, &data)?;
            let init = match &a.base_model {
                Some(path) => match with_path(path, ModelContainer::load(path))?.payload {
                    Payload::Recnn(p) => p.network,
                    other => {
                        return Err(CliError::Data(format!(
                            "{}: base model is {}, not recnn",
                            path.display(),
                            other.kind()
                        )))
                    }
                },
                None => RecnnModel::init(table.dim(), a.hidden, activation(a.activation), a.seed)?,
            };
            if init.n_e() != table.dim() {
                return Err(CliError::Data(format!(
                    "word vectors have {} components, the network expects {}",
                    table.dim(),
                    init.n_e()
                )));
            }
            metadata = metadata.note("train_config", &config);
            if a.model == ModelKind::Selective {
                let sel = selective_config(a)?;
                metadata = metadata.note("selective_config", &sel);
                let out = selective_train(&data, &init, &config, &sel, &table)?;
                let s = serde_json::to_value(&out.report).expect("reports serialize");
                metadata = metadata.note("report", &s);
                (
                    Payload::Selective(SelectivePayload {
                        model: out.model,
                        embeddings: source,
                    }),
                    s,
                )
            } else {
                let train_ex = prepare(&data.splits.train, &table)?;
                let dev_ex = prepare(&data.splits.dev, &table)?;
                let out = if a.base_model.is_some() {
                    let config = TrainConfig {
                        embedding_noise: a.noise,
                        ..config
                    };
                    recnn::transfer_finetune(&init, &train_ex, &dev_ex, &config)?
                } else {
                    recnn::train(&init, &train_ex, &dev_ex, &config)?
                };
                let s = json!({
                    "learning_rate": out.learning_rate,
                    "best_dev": out.best_dev,
                    "epochs": out.epochs,
                    "minibatches": out.minibatches,
                    "line_search_minibatches": out.line_search_minibatches,
                    "stopped_by": out.stopped_by,
                });
                metadata = metadata.note("report", &s);
                (
                    Payload::Recnn(RecnnPayload {
                        network: out.model,
                        embeddings: source,
                    }),
                    s,
                )
            }
        }
    };
    let container = ModelContainer::new(info_type, metadata, payload);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    container.save(&a.out)?;
    print_json(&json!({
        "model": a.out.display().to_string(),
        "kind": container.kind(),
        "info_type": container.info_type,
        "summary": summary,
    }));
    Ok(())
}

fn load_detector(path: &Path) -> Result<Detector> {
    with_path(path, Detector::load(path))
}

fn model_name(path: &Path) -> String {
    path.file_stem()
        .unwrap_or_default()
        .to_string_lossy()
        .into_owned()
}

fn labels(det: &Detector, data: &[LabeledSentence]) -> Result<Vec<u8>> {
    Ok(det
        .predict_all(data)?
        .into_iter()
        .map(|p| p.label)
        .collect())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let det = load_detector(&a.model)?;
    let data = read_sentences(&a.data)?;
    let truths: Vec<u8> = data.iter().map(|s| s.label).collect();
    let report = MetricsReport::new(model_name(&a.model), &labels(&det, &data)?, &truths)?;
    if a.json {
        print_json(&report);
    } else {
        print!("{report}");
    }
    Ok(())
}

fn compare_cmd(a: &CompareArgs) -> Result<()> {
    let det_a = load_detector(&a.model_a)?;
    let det_b = load_detector(&a.model_b)?;
    let data = read_sentences(&a.data)?;
    let truths: Vec<u8> = data.iter().map(|s| s.label).collect();
    let report = CompareReport::new(
        model_name(&a.model_a),
        model_name(&a.model_b),
        &labels(&det_a, &data)?,
        &labels(&det_b, &data)?,
        &truths,
    )?;
    if a.json {
        print_json(&report);
    } else {
        print!("{report}");
    }
    Ok(())
}

fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let det = load_detector(&a.model)?;
    let text = match (&a.text, &a.input) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) if p.as_os_str() == "-" => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
        (None, Some(p)) => std::fs::read_to_string(p)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        (None, None) => unreachable!("clap requires --text or --input"),
    };
    print_json(&json!({ "sentences": detect(&det, &text)? }));
    Ok(())
}

fn serve_cmd(a: &ServeArgs) -> Result<()> {
    let catalog = Catalog::load(&a.models_dir, a.samples.as_deref())?;
    if let Some(dir) = &a.static_dir {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!(
                "--static {} is not a directory",
                dir.display()
            )));
        }
    }
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|_| CliError::Usage(format!("cannot listen on {}:{}", a.host, a.port)))?;
    let app = router(
        Arc::new(catalog),
        a.static_dir.as_deref().map(PathBuf::from).as_deref(),
    );
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await
    })?;
    Ok(())
}

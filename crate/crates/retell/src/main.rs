//! Pipeline driver: one subcommand per stage, all driven by a single TOML
//! config. Intermediate artifacts are line-delimited JSON stamped with the
//! config fingerprint.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 transport
//! error.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use retell::artifact::{check_fingerprint, read_artifact, write_artifact, ArtifactError};
use retell::client::{ChatClient, ClientError, MockChatClient, OpenAiClient, RetryPolicy};
use retell::config::{ConfigError, PipelineConfig};
use retell::corpus::{
    chunk_passages, expand_keywords_npmi, match_quote, Book, Passage, QuoteMatch,
};
use retell::eval::{
    bootstrap_ci, build_intruder_item, jsd, pairwise_precision_outcomes, pairwise_recall_outcomes,
    sample_intruder_assigned, sample_intruder_lda, threshold_pr_curve, GoldEntry, GoldLabels,
    GoldSource, Prediction,
};
use retell::lda::{doc_topic_distribution, most_prominent_topic, topic_top_words, train, DocTopicDist};
use retell::preprocess::{build_vocabulary, remove_names, to_bow, tokenize, BowDoc, Gazetteer};
use retell::retell::{retell_batch, RetellRecord, RetellSettings, RetellStatus, RetellVerb};
use retell::topicgpt::{
    assign_topics, assigned_k, generate_topics, mrr_prominence, AssignDiagnostics, Document,
    TopicAssignment, TopicEntry, TopicPool,
};

#[derive(Parser)]
#[command(name = "retell", about = "Topic modeling over LM retellings of literary passages")]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Method {
    Lda,
    Tglite,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ModelInput {
    Retellings,
    Passages,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk every book in books_dir into passages.
    Chunk,
    /// Match a quotes file against book passages.
    MatchQuotes,
    /// Retell every passage with the configured backend (resumable).
    Retell,
    /// Preprocess and train a topic model.
    Model {
        #[arg(long, value_enum, default_value = "lda")]
        method: Method,
        #[arg(long, value_enum, default_value = "retellings")]
        input: ModelInput,
    },
    /// Score model artifacts against gold labels.
    Eval {
        #[arg(long, value_enum, default_value = "lda")]
        method: Method,
        /// Topic indices for the threshold PR curve (comma separated).
        #[arg(long, value_delimiter = ',')]
        pr_topics: Vec<usize>,
        /// Gold topic whose passages are the PR-curve positives.
        #[arg(long)]
        pr_gold_topic: Option<String>,
        /// Two retellings artifacts to compare by word-distribution JSD.
        #[arg(long, num_args = 2)]
        jsd_retellings: Vec<PathBuf>,
    },
    /// Expand the configured seed keywords by NPMI co-occurrence.
    Keywords,
    /// Emit a human-eval intruder bundle.
    Intruders {
        #[arg(long, value_enum, default_value = "lda")]
        method: Method,
    },
}

#[derive(Debug)]
enum CmdError {
    Usage(String),
    Data(String),
    Transport(String),
}

impl CmdError {
    fn code(&self) -> u8 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Data(_) => 2,
            CmdError::Transport(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CmdError::Usage(m) | CmdError::Data(m) | CmdError::Transport(m) => m,
        }
    }
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Usage(e.to_string())
    }
}

impl From<ArtifactError> for CmdError {
    fn from(e: ArtifactError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<ClientError> for CmdError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Config(m) => CmdError::Usage(m),
            ClientError::Transport(m) => CmdError::Transport(m),
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CmdError {
    CmdError::Data(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match PipelineConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Chunk => cmd_chunk(&config),
        Command::MatchQuotes => cmd_match_quotes(&config),
        Command::Retell => cmd_retell(&config),
        Command::Model { method, input } => cmd_model(&config, method, input),
        Command::Eval {
            method,
            pr_topics,
            pr_gold_topic,
            jsd_retellings,
        } => cmd_eval(&config, method, &pr_topics, pr_gold_topic.as_deref(), &jsd_retellings),
        Command::Keywords => cmd_keywords(&config),
        Command::Intruders { method } => cmd_intruders(&config, method),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

// ---------------------------------------------------------------- artifacts

fn out_path(config: &PipelineConfig, name: &str) -> PathBuf {
    config.paths.output_dir.join(name)
}

fn retellings_name(config: &PipelineConfig) -> String {
    format!(
        "retellings_{}_{}.jsonl",
        config.retell.verb, config.retell.run_id
    )
}

fn ensure_output_dir(config: &PipelineConfig) -> Result<(), CmdError> {
    fs::create_dir_all(&config.paths.output_dir)
        .map_err(|e| CmdError::Data(format!("cannot create output dir: {e}")))
}

fn load_books(config: &PipelineConfig) -> Result<Vec<Book>, CmdError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(&config.paths.books_dir)
        .map_err(|e| {
            CmdError::Data(format!(
                "cannot read books dir {}: {e}",
                config.paths.books_dir.display()
            ))
        })?
        .filter_map(|r| r.ok().map(|d| d.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(CmdError::Data(format!(
            "no .txt books in {}",
            config.paths.books_dir.display()
        )));
    }
    let mut books = Vec::new();
    for path in entries {
        let text = fs::read_to_string(&path)
            .map_err(|e| CmdError::Data(format!("cannot read {}: {e}", path.display())))?;
        let stem = path.file_stem().unwrap().to_string_lossy().to_string();
        books.push(Book::from_text(stem.clone(), stem, &text));
    }
    Ok(books)
}

fn load_passages(config: &PipelineConfig) -> Result<Vec<Passage>, CmdError> {
    let path = out_path(config, "passages.jsonl");
    let (header, passages) = read_artifact::<Passage>(&path, "passages")?;
    check_fingerprint(&header, &config.fingerprint(), &path)?;
    Ok(passages)
}

fn load_gazetteer(config: &PipelineConfig) -> Result<Gazetteer, CmdError> {
    let mut gazetteer = Gazetteer::default();
    let Some(path) = &config.paths.gazetteer else {
        return Ok(gazetteer);
    };
    #[derive(Deserialize)]
    struct Row {
        book_id: String,
        names: Vec<String>,
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Data(format!("cannot read gazetteer {}: {e}", path.display())))?;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: Row = serde_json::from_str(line).map_err(data_err)?;
        gazetteer.insert(&row.book_id, row.names);
    }
    Ok(gazetteer)
}

fn load_gold(config: &PipelineConfig) -> Result<GoldLabels, CmdError> {
    let Some(path) = &config.paths.gold_labels else {
        return Err(CmdError::Usage("paths.gold_labels is not set".into()));
    };
    #[derive(Deserialize)]
    struct Row {
        passage_id: String,
        source: GoldSource,
        topics: BTreeSet<String>,
        tags: BTreeSet<String>,
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Data(format!("cannot read gold labels {}: {e}", path.display())))?;
    let mut gold = GoldLabels::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: Row = serde_json::from_str(line).map_err(data_err)?;
        gold.insert(
            row.passage_id,
            GoldEntry {
                source: row.source,
                topics: row.topics,
                tags: row.tags,
            },
        );
    }
    Ok(gold)
}

fn build_client(config: &PipelineConfig) -> Result<Box<dyn ChatClient>, CmdError> {
    match config.retell.backend.as_str() {
        "openai" => {
            let client = OpenAiClient::new(
                config.retell.endpoint.as_deref().unwrap_or(""),
                config.retell.credential_env.as_deref(),
                config.retell.temperature,
            )?;
            Ok(Box::new(client))
        }
        "mock" => {
            let path = config.retell.mock_fixture.as_ref().unwrap();
            #[derive(Deserialize)]
            struct Row {
                tag: String,
                text: String,
            }
            let text = fs::read_to_string(path).map_err(|e| {
                CmdError::Usage(format!("cannot read mock fixture {}: {e}", path.display()))
            })?;
            let mut map = BTreeMap::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let row: Row = serde_json::from_str(line).map_err(data_err)?;
                map.insert(row.tag, row.text);
            }
            Ok(Box::new(MockChatClient::new(map)))
        }
        other => Err(CmdError::Usage(format!("unknown backend {other:?}"))),
    }
}

// --------------------------------------------------------------- stages

fn cmd_chunk(config: &PipelineConfig) -> Result<(), CmdError> {
    ensure_output_dir(config)?;
    let books = load_books(config)?;
    let mut passages = Vec::new();
    for book in &books {
        passages.extend(chunk_passages(book, config.max_passage_tokens));
    }
    let path = out_path(config, "passages.jsonl");
    write_artifact(&path, "passages", &config.fingerprint(), &passages)?;
    println!("wrote {} passages to {}", passages.len(), path.display());
    Ok(())
}

fn cmd_match_quotes(config: &PipelineConfig) -> Result<(), CmdError> {
    ensure_output_dir(config)?;
    let Some(quotes_path) = &config.paths.quotes else {
        return Err(CmdError::Usage("paths.quotes is not set".into()));
    };
    #[derive(Deserialize)]
    struct QuoteRow {
        book_id: String,
        quote: String,
        #[serde(default)]
        labels: Vec<String>,
    }
    #[derive(Serialize)]
    struct MatchRow {
        book_id: String,
        quote: String,
        labels: Vec<String>,
        matched: Option<QuoteMatch>,
    }
    let passages = load_passages(config)?;
    let by_book: BTreeMap<&str, Vec<Passage>> = {
        let mut m: BTreeMap<&str, Vec<Passage>> = BTreeMap::new();
        for p in &passages {
            m.entry(p.book_id.as_str()).or_default().push(p.clone());
        }
        m
    };
    let text = fs::read_to_string(quotes_path)
        .map_err(|e| CmdError::Data(format!("cannot read quotes {}: {e}", quotes_path.display())))?;
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: QuoteRow = serde_json::from_str(line).map_err(data_err)?;
        let matched = by_book
            .get(row.book_id.as_str())
            .and_then(|ps| match_quote(&row.quote, ps, retell::corpus::DEFAULT_QUOTE_THRESHOLD));
        rows.push(MatchRow {
            book_id: row.book_id,
            quote: row.quote,
            labels: row.labels,
            matched,
        });
    }
    let matched = rows.iter().filter(|r| r.matched.is_some()).count();
    let path = out_path(config, "quote_matches.jsonl");
    write_artifact(&path, "quote-matches", &config.fingerprint(), &rows)?;
    println!(
        "matched {matched}/{} quotes (rate {:.1})",
        rows.len(),
        100.0 * matched as f64 / rows.len().max(1) as f64
    );
    Ok(())
}

fn cmd_retell(config: &PipelineConfig) -> Result<(), CmdError> {
    ensure_output_dir(config)?;
    let passages = load_passages(config)?;
    let verb = RetellVerb::parse(&config.retell.verb)
        .ok_or_else(|| CmdError::Usage(format!("unknown retell verb {:?}", config.retell.verb)))?;
    let path = out_path(config, &retellings_name(config));

    // Resume: keep records for passages already retold.
    let mut existing: BTreeMap<String, RetellRecord> = BTreeMap::new();
    if path.exists() {
        let (header, records) = read_artifact::<RetellRecord>(&path, "retellings")?;
        check_fingerprint(&header, &config.fingerprint(), &path)?;
        for r in records {
            existing.insert(r.passage_id.clone(), r);
        }
    }
    let pending: Vec<Passage> = passages
        .iter()
        .filter(|p| !existing.contains_key(&p.passage_id))
        .cloned()
        .collect();

    if !pending.is_empty() {
        let client = build_client(config)?;
        let settings = RetellSettings {
            verb,
            model_id: config.retell.model_id.clone(),
            run_id: config.retell.run_id.clone(),
            max_in_flight: config.retell.max_in_flight,
            retry: RetryPolicy::default(),
        };
        let records = retell_batch(&pending, &settings, client.as_ref()).map_err(|e| match e {
            retell::retell::RetellError::Client(c) => CmdError::from(c),
            other => CmdError::Data(other.to_string()),
        })?;
        if records
            .iter()
            .all(|r| r.status == RetellStatus::Failed)
        {
            return Err(CmdError::Transport(
                "every retelling request failed; see output records".into(),
            ));
        }
        for r in records {
            existing.insert(r.passage_id.clone(), r);
        }
    }

    // Rewrite in passage order so reruns are byte-identical.
    let ordered: Vec<&RetellRecord> = passages
        .iter()
        .filter_map(|p| existing.get(&p.passage_id))
        .collect();
    write_artifact(&path, "retellings", &config.fingerprint(), &ordered)?;
    println!("wrote {} retellings to {}", ordered.len(), path.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct VocabRow {
    term: String,
    id: usize,
    df: usize,
}

#[derive(Serialize, Deserialize)]
struct TopicWordsRow {
    topic: usize,
    words: Vec<String>,
}

fn book_id_of_passage(passage_id: &str) -> &str {
    passage_id.rsplit_once(':').map_or(passage_id, |(b, _)| b)
}

/// Documents for modeling: retellings (successful ones) or raw passages.
fn modeling_docs(
    config: &PipelineConfig,
    input: ModelInput,
) -> Result<Vec<(String, String)>, CmdError> {
    match input {
        ModelInput::Passages => Ok(load_passages(config)?
            .into_iter()
            .map(|p| (p.passage_id, p.text))
            .collect()),
        ModelInput::Retellings => {
            let path = out_path(config, &retellings_name(config));
            let (header, records) = read_artifact::<RetellRecord>(&path, "retellings")?;
            check_fingerprint(&header, &config.fingerprint(), &path)?;
            Ok(records
                .into_iter()
                .filter(|r| r.status == RetellStatus::Ok)
                .map(|r| (r.passage_id, r.text))
                .collect())
        }
    }
}

fn cmd_model(config: &PipelineConfig, method: Method, input: ModelInput) -> Result<(), CmdError> {
    ensure_output_dir(config)?;
    let docs = modeling_docs(config, input)?;
    if docs.is_empty() {
        return Err(CmdError::Data("no documents to model".into()));
    }
    match method {
        Method::Lda => cmd_model_lda(config, &docs),
        Method::Tglite => cmd_model_tglite(config, &docs),
    }
}

fn cmd_model_lda(config: &PipelineConfig, docs: &[(String, String)]) -> Result<(), CmdError> {
    let gazetteer = load_gazetteer(config)?;
    let tokenized: Vec<Vec<String>> = docs
        .iter()
        .map(|(doc_id, text)| {
            let tokens = tokenize(text);
            if config.paths.gazetteer.is_some() {
                remove_names(tokens, &gazetteer, book_id_of_passage(doc_id))
            } else {
                tokens
            }
        })
        .collect();
    let pp = &config.preprocess;
    let vocab = build_vocabulary(&tokenized, pp.min_chars, pp.max_df_frac, pp.min_df_docs)
        .map_err(data_err)?;
    let bows: Vec<BowDoc> = docs
        .iter()
        .zip(&tokenized)
        .map(|((doc_id, _), tokens)| to_bow(doc_id, tokens, &vocab))
        .collect();

    let fingerprint = config.fingerprint();
    let vocab_rows: Vec<VocabRow> = vocab
        .terms
        .iter()
        .enumerate()
        .map(|(id, term)| VocabRow {
            term: term.clone(),
            id,
            df: vocab.df[id],
        })
        .collect();
    write_artifact(
        &out_path(config, "vocab.jsonl"),
        "vocabulary",
        &fingerprint,
        &vocab_rows,
    )?;
    write_artifact(&out_path(config, "bow.jsonl"), "bow", &fingerprint, &bows)?;

    let lda_config = config.lda.to_lda_config();
    let model = train(&bows, vocab.terms.clone(), &lda_config).map_err(data_err)?;

    let model_path = out_path(config, "lda_model.json");
    let wrapped = json!({ "fingerprint": fingerprint, "model": &model });
    fs::write(&model_path, serde_json::to_string(&wrapped).unwrap())
        .map_err(|e| CmdError::Data(format!("cannot write model: {e}")))?;

    let dists: Vec<DocTopicDist> = (0..bows.len())
        .map(|d| doc_topic_distribution(&model, d))
        .collect();
    write_artifact(
        &out_path(config, "doc_topics.jsonl"),
        "doc-topics",
        &fingerprint,
        &dists,
    )?;
    let words: Vec<TopicWordsRow> = (0..lda_config.k)
        .map(|t| TopicWordsRow {
            topic: t,
            words: topic_top_words(&model, t, 5),
        })
        .collect();
    write_artifact(
        &out_path(config, "topic_words.jsonl"),
        "topic-words",
        &fingerprint,
        &words,
    )?;
    println!(
        "trained LDA (k = {}) over {} docs, vocabulary {}",
        lda_config.k,
        bows.len(),
        vocab.len()
    );
    Ok(())
}

fn load_tag_fixture(path: &Path) -> Result<BTreeMap<String, String>, CmdError> {
    #[derive(Deserialize)]
    struct Row {
        tag: String,
        text: String,
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Usage(format!("cannot read fixture {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: Row = serde_json::from_str(line).map_err(data_err)?;
        map.insert(row.tag, row.text);
    }
    Ok(map)
}

fn cmd_model_tglite(config: &PipelineConfig, docs: &[(String, String)]) -> Result<(), CmdError> {
    let Some(tg) = &config.topicgpt else {
        return Err(CmdError::Usage("config has no [topicgpt] section".into()));
    };
    let documents: Vec<Document> = docs
        .iter()
        .map(|(doc_id, text)| Document {
            doc_id: doc_id.clone(),
            text: text.clone(),
        })
        .collect();

    let generation_client: Box<dyn ChatClient> = match &tg.generation_fixture {
        Some(path) => Box::new(MockChatClient::new(load_tag_fixture(path)?)),
        None => build_client(config)?,
    };
    let retry = RetryPolicy::default();
    let sample = &documents[..documents.len().min(tg.sample_n)];
    let pool = generate_topics(sample, generation_client.as_ref(), tg.mode, &tg.model_id, retry);
    if pool.is_empty() {
        return Err(CmdError::Data(
            "topic generation produced an empty pool".into(),
        ));
    }

    let assignment_client: Box<dyn ChatClient> = match &tg.assignment_fixture {
        Some(path) => Box::new(MockChatClient::new(load_tag_fixture(path)?)),
        None => build_client(config)?,
    };
    let mut diagnostics = AssignDiagnostics::default();
    let mut assignments = Vec::new();
    for doc in &documents {
        let a = assign_topics(
            doc,
            &pool,
            assignment_client.as_ref(),
            &tg.model_id,
            retry,
            &mut diagnostics,
        )
        .map_err(data_err)?;
        assignments.push(a);
    }

    let fingerprint = config.fingerprint();
    write_artifact(
        &out_path(config, "pool.jsonl"),
        "topic-pool",
        &fingerprint,
        &pool.entries,
    )?;
    write_artifact(
        &out_path(config, "assignments.jsonl"),
        "assignments",
        &fingerprint,
        &assignments,
    )?;
    let k = assigned_k(&assignments);
    let mean_assigned: f64 = assignments
        .iter()
        .map(|a| a.ranked_labels.len() as f64)
        .sum::<f64>()
        / assignments.len() as f64;
    let diag = json!({
        "fingerprint": fingerprint,
        "pool_size": pool.len(),
        "assigned_k": k,
        "mean_assigned_per_doc": mean_assigned,
        "hallucinated_count": diagnostics.hallucinated_count,
        "empty_count": diagnostics.empty_count,
    });
    fs::write(
        out_path(config, "tglite_diagnostics.json"),
        serde_json::to_string_pretty(&diag).unwrap(),
    )
    .map_err(|e| CmdError::Data(e.to_string()))?;
    println!(
        "topic pool {} labels, assigned k = {k}, {} docs",
        pool.len(),
        assignments.len()
    );
    Ok(())
}

// --------------------------------------------------------------- eval

fn load_doc_topics(config: &PipelineConfig) -> Result<Vec<DocTopicDist>, CmdError> {
    let path = out_path(config, "doc_topics.jsonl");
    let (header, dists) = read_artifact::<DocTopicDist>(&path, "doc-topics")?;
    check_fingerprint(&header, &config.fingerprint(), &path)?;
    Ok(dists)
}

fn load_assignments(config: &PipelineConfig) -> Result<Vec<TopicAssignment>, CmdError> {
    let path = out_path(config, "assignments.jsonl");
    let (header, assignments) = read_artifact::<TopicAssignment>(&path, "assignments")?;
    check_fingerprint(&header, &config.fingerprint(), &path)?;
    Ok(assignments)
}

fn load_pool(config: &PipelineConfig) -> Result<TopicPool, CmdError> {
    let path = out_path(config, "pool.jsonl");
    let (header, entries) = read_artifact::<TopicEntry>(&path, "topic-pool")?;
    check_fingerprint(&header, &config.fingerprint(), &path)?;
    Ok(TopicPool { entries })
}

fn load_topic_words(config: &PipelineConfig) -> Result<BTreeMap<usize, Vec<String>>, CmdError> {
    let path = out_path(config, "topic_words.jsonl");
    let (header, rows) = read_artifact::<TopicWordsRow>(&path, "topic-words")?;
    check_fingerprint(&header, &config.fingerprint(), &path)?;
    Ok(rows.into_iter().map(|r| (r.topic, r.words)).collect())
}

fn lda_predictions(dists: &[DocTopicDist]) -> Prediction {
    dists
        .iter()
        .map(|d| {
            (
                d.doc_id.clone(),
                d.ranked_topics()
                    .into_iter()
                    .map(|t| format!("t{t}"))
                    .collect(),
            )
        })
        .collect()
}

fn tglite_predictions(assignments: &[TopicAssignment]) -> Prediction {
    assignments
        .iter()
        .map(|a| (a.doc_id.clone(), a.ranked_labels.clone()))
        .collect()
}

fn word_distributions(
    config: &PipelineConfig,
    a: &Path,
    b: &Path,
) -> Result<(Vec<f64>, Vec<f64>), CmdError> {
    let mut counts = Vec::new();
    for path in [a, b] {
        let (header, records) = read_artifact::<RetellRecord>(path, "retellings")?;
        check_fingerprint(&header, &config.fingerprint(), path)?;
        let mut c: BTreeMap<String, u64> = BTreeMap::new();
        for r in records.iter().filter(|r| r.status == RetellStatus::Ok) {
            for token in tokenize(&r.text) {
                *c.entry(token).or_insert(0) += 1;
            }
        }
        counts.push(c);
    }
    let union: BTreeSet<&String> = counts.iter().flat_map(|c| c.keys()).collect();
    let to_dist = |c: &BTreeMap<String, u64>| -> Vec<f64> {
        let total: u64 = c.values().sum();
        union
            .iter()
            .map(|t| c.get(*t).copied().unwrap_or(0) as f64 / total.max(1) as f64)
            .collect()
    };
    Ok((to_dist(&counts[0]), to_dist(&counts[1])))
}

fn cmd_eval(
    config: &PipelineConfig,
    method: Method,
    pr_topics: &[usize],
    pr_gold_topic: Option<&str>,
    jsd_retellings: &[PathBuf],
) -> Result<(), CmdError> {
    ensure_output_dir(config)?;
    let gold = load_gold(config)?;
    let mut report: Vec<serde_json::Value> = Vec::new();
    let fingerprint = config.fingerprint();
    let mut rng = ChaCha8Rng::seed_from_u64(config.eval.seed);

    let preds = match method {
        Method::Lda => lda_predictions(&load_doc_topics(config)?),
        Method::Tglite => tglite_predictions(&load_assignments(config)?),
    };

    match pairwise_precision_outcomes(&preds, &gold) {
        Ok(outcomes) => {
            let value = outcomes.iter().filter(|&&b| b).count() as f64 / outcomes.len() as f64;
            let (lo, hi) = bootstrap_ci(&outcomes, 1000, &mut rng);
            report.push(json!({
                "metric": "pairwise_precision",
                "value": value,
                "ci_low": lo,
                "ci_high": hi,
                "pairs": outcomes.len(),
            }));
        }
        Err(e) => report.push(json!({"metric": "pairwise_precision", "error": e.to_string()})),
    }
    match pairwise_recall_outcomes(&preds, &gold) {
        Ok(outcomes) => {
            let value = outcomes.iter().filter(|&&b| b).count() as f64 / outcomes.len() as f64;
            let (lo, hi) = bootstrap_ci(&outcomes, 1000, &mut rng);
            report.push(json!({
                "metric": "pairwise_recall",
                "value": value,
                "ci_low": lo,
                "ci_high": hi,
                "pairs": outcomes.len(),
            }));
        }
        Err(e) => report.push(json!({"metric": "pairwise_recall", "error": e.to_string()})),
    }

    // Prominent topic per gold (source, topic) passage set.
    let mut sets: BTreeMap<(GoldSource, &String), Vec<&String>> = BTreeMap::new();
    for (pid, entry) in &gold {
        for topic in &entry.topics {
            sets.entry((entry.source, topic)).or_default().push(pid);
        }
    }
    match method {
        Method::Lda => {
            let dists = load_doc_topics(config)?;
            let words = load_topic_words(config)?;
            let by_id: BTreeMap<&str, &DocTopicDist> =
                dists.iter().map(|d| (d.doc_id.as_str(), d)).collect();
            for ((source, gold_topic), pids) in &sets {
                let subset: Vec<DocTopicDist> = pids
                    .iter()
                    .filter_map(|pid| by_id.get(pid.as_str()).copied().cloned())
                    .collect();
                if subset.is_empty() {
                    continue;
                }
                let (topic, mean) = most_prominent_topic(&subset).map_err(data_err)?;
                report.push(json!({
                    "metric": "prominent_topic",
                    "source": source,
                    "gold_topic": gold_topic,
                    "passages": subset.len(),
                    "topic": topic,
                    "mean_probability": mean,
                    "words": words.get(&topic),
                }));
            }
        }
        Method::Tglite => {
            let assignments = load_assignments(config)?;
            let pool = load_pool(config)?;
            let by_id: BTreeMap<&str, &TopicAssignment> = assignments
                .iter()
                .map(|a| (a.doc_id.as_str(), a))
                .collect();
            for ((source, gold_topic), pids) in &sets {
                let subset: Vec<TopicAssignment> = pids
                    .iter()
                    .filter_map(|pid| by_id.get(pid.as_str()).copied().cloned())
                    .collect();
                if subset.is_empty() {
                    continue;
                }
                let mrr = mrr_prominence(&subset, &pool).map_err(data_err)?;
                let (label, score) = mrr.first().cloned().unwrap_or_default();
                report.push(json!({
                    "metric": "prominent_topic",
                    "source": source,
                    "gold_topic": gold_topic,
                    "passages": subset.len(),
                    "label": label,
                    "mrr": score,
                }));
            }
            // Full MRR table over all assignments.
            let mrr = mrr_prominence(&assignments, &pool).map_err(data_err)?;
            for (label, value) in &mrr {
                report.push(json!({"metric": "mrr", "label": label, "value": value}));
            }
            report.push(json!({"metric": "assigned_k", "value": assigned_k(&assignments)}));
        }
    }

    // Threshold PR curve over configured cutoffs.
    if let (false, Some(gold_topic)) = (pr_topics.is_empty(), pr_gold_topic) {
        let dists = load_doc_topics(config)?;
        let targets: BTreeSet<usize> = pr_topics.iter().copied().collect();
        let positives: BTreeSet<String> = gold
            .iter()
            .filter(|(_, e)| e.topics.contains(gold_topic))
            .map(|(pid, _)| pid.clone())
            .collect();
        let curve = threshold_pr_curve(&dists, &targets, &positives, &config.eval.cutoffs)
            .map_err(data_err)?;
        write_artifact(
            &out_path(config, "pr_curve.jsonl"),
            "pr-curve",
            &fingerprint,
            &curve.points,
        )?;
        report.push(json!({
            "metric": "pr_curve",
            "gold_topic": gold_topic,
            "target_topics": pr_topics,
            "points": curve.points.len(),
        }));
    }

    // JSD between two retelling runs' word distributions.
    if jsd_retellings.len() == 2 {
        let (p, q) = word_distributions(config, &jsd_retellings[0], &jsd_retellings[1])?;
        let value = jsd(&p, &q).map_err(data_err)?;
        report.push(json!({
            "metric": "jsd",
            "a": jsd_retellings[0].display().to_string(),
            "b": jsd_retellings[1].display().to_string(),
            "value": value,
        }));
    }

    let path = out_path(config, "report.jsonl");
    write_artifact(&path, "report", &fingerprint, &report)?;
    println!("wrote {} report records to {}", report.len(), path.display());
    Ok(())
}

fn cmd_keywords(config: &PipelineConfig) -> Result<(), CmdError> {
    ensure_output_dir(config)?;
    if config.keywords.seeds.is_empty() {
        return Err(CmdError::Usage("keywords.seeds is empty".into()));
    }
    let passages = load_passages(config)?;
    let expanded = expand_keywords_npmi(
        &passages,
        &config.keywords.seeds,
        config.keywords.npmi_threshold,
        config.keywords.min_df,
    )
    .map_err(data_err)?;
    #[derive(Serialize)]
    struct Row<'a> {
        term: &'a str,
        npmi: f64,
        provenance: &'static str,
    }
    let rows: Vec<Row> = expanded
        .iter()
        .map(|(term, npmi)| Row {
            term,
            npmi: *npmi,
            provenance: "npmi-expanded",
        })
        .collect();
    let path = out_path(config, "keywords.jsonl");
    write_artifact(&path, "keywords", &config.fingerprint(), &rows)?;
    println!("wrote {} expanded keywords to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_intruders(config: &PipelineConfig, method: Method) -> Result<(), CmdError> {
    ensure_output_dir(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.eval.seed);
    let mut items = Vec::new();
    let mut skipped = 0usize;
    match method {
        Method::Lda => {
            let dists = load_doc_topics(config)?;
            let words = load_topic_words(config)?;
            let label = |t: usize| -> String {
                match words.get(&t) {
                    Some(w) => format!("t{t}: {}", w.join(", ")),
                    None => format!("t{t}"),
                }
            };
            for (i, dist) in dists.iter().enumerate() {
                let ranked = dist.ranked_topics();
                if ranked.len() < 4 {
                    skipped += 1;
                    continue;
                }
                match sample_intruder_lda(i, &dists, &mut rng) {
                    Ok(intruder) => items.push(build_intruder_item(
                        &dist.doc_id,
                        [label(ranked[0]), label(ranked[1]), label(ranked[2])],
                        label(intruder),
                        &mut rng,
                    )),
                    Err(_) => skipped += 1,
                }
            }
        }
        Method::Tglite => {
            let assignments = load_assignments(config)?;
            let pool = load_pool(config)?;
            let labels = pool.labels();
            for (i, a) in assignments.iter().enumerate() {
                if a.ranked_labels.len() < 3 {
                    skipped += 1;
                    continue;
                }
                match sample_intruder_assigned(i, &assignments, &labels, &mut rng) {
                    Ok(intruder) => items.push(build_intruder_item(
                        &a.doc_id,
                        [
                            a.ranked_labels[0].clone(),
                            a.ranked_labels[1].clone(),
                            a.ranked_labels[2].clone(),
                        ],
                        intruder,
                        &mut rng,
                    )),
                    Err(_) => skipped += 1,
                }
            }
        }
    }
    #[derive(Serialize)]
    #[serde(untagged)]
    enum Row<'a> {
        Meta { seed: u64 },
        Item(&'a retell::eval::IntruderItem),
    }
    let mut rows = vec![Row::Meta {
        seed: config.eval.seed,
    }];
    rows.extend(items.iter().map(Row::Item));
    let path = out_path(config, "intruders.jsonl");
    write_artifact(&path, "intruders", &config.fingerprint(), &rows)?;
    println!(
        "wrote {} intruder items ({skipped} passages skipped) to {}",
        items.len(),
        path.display()
    );
    Ok(())
}

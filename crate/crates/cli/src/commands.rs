use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;

use gradgraph::evaluation::{
    evaluate_split_detailed, labeled_from_split, neighborhood_density_study, neighbors, optimization_effect_study,
    Label, Query, RankingMetrics, Side, Space,
};
use gradgraph::kb::{
    build_filter_index, generate_synthetic_kb, load_checkpoint, load_tsv_with_vocab, save_checkpoint, DatasetSplits, KnownTripletIndex, Triplet, Vocab,
};
use gradgraph::harmony::LambdaMode;
use gradgraph::model::Model;
use gradgraph::training::{load_train_state, resume, save_train_state, EpochReport, TrainState};

use crate::config::{Command, RunConfig, SplitName};

pub fn dispatch(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let echo = toml::to_string(&cfg.settings).context("serializing resolved config")?;
    write(&cfg.out_dir.join(format!("{}.config.toml", cfg.command.name())), &echo)?;
    match cfg.command {
        Command::Synth => synth(cfg),
        Command::Train => train(cfg),
        Command::Eval => eval(cfg),
        Command::Score => score(cfg),
        Command::Neighbors => neighbors_cmd(cfg),
        Command::AnalyzeOpt => analyze_opt(cfg),
        Command::Density => density(cfg),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn require_dataset(cfg: &RunConfig) -> Result<()> {
    for p in [&cfg.data.train, &cfg.data.valid, &cfg.data.test] {
        if !p.is_file() {
            bail!(
                "dataset file not found: {} (run `gradgraph synth` or pass --data)",
                p.display()
            );
        }
    }
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<DatasetSplits> {
    require_dataset(cfg)?;
    Ok(DatasetSplits::load(&cfg.data.train, &cfg.data.valid, &cfg.data.test)?)
}

/// Loads the dataset using an existing vocabulary; unknown names are an error.
fn load_dataset_with(cfg: &RunConfig, vocab: &Vocab) -> Result<DatasetSplits> {
    require_dataset(cfg)?;
    let mut v = vocab.clone();
    let train = load_tsv_with_vocab(&cfg.data.train, &mut v)?;
    let valid = load_tsv_with_vocab(&cfg.data.valid, &mut v)?;
    let test = load_tsv_with_vocab(&cfg.data.test, &mut v)?;
    if v.n_entities() != vocab.n_entities() || v.n_relations() != vocab.n_relations() {
        bail!("dataset mentions entities or relations that are not in the checkpoint");
    }
    Ok(DatasetSplits::new(v, train, valid, test)?)
}

fn load_model(cfg: &RunConfig) -> Result<(Model, Vocab)> {
    let ck = load_checkpoint(&cfg.checkpoint)?;
    let model = ck.to_model_with_epsilon(cfg.spec.epsilon)?;
    Ok((model, ck.vocab))
}

fn split<'a>(splits: &'a DatasetSplits, name: SplitName) -> &'a [Triplet] {
    match name {
        SplitName::Train => &splits.train,
        SplitName::Valid => &splits.valid,
        SplitName::Test => &splits.test,
    }
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let kb = generate_synthetic_kb(&cfg.synth)?;
    kb.splits.write_dir(&cfg.data_dir)?;
    let meta = json!({
        "n_entities": cfg.synth.n_entities,
        "n_relations": cfg.synth.n_relations,
        "n_blocks": cfg.synth.n_blocks,
        "noise": cfg.synth.noise,
        "seed": cfg.synth.seed,
        "n_facts": kb.metadata.n_facts,
        "block_of": kb.metadata.block_of,
        "compatible": kb.metadata.compatible,
    });
    write(&cfg.data_dir.join("synth_metadata.json"), &serde_json::to_string_pretty(&meta)?)?;
    println!(
        "wrote {} train / {} valid / {} test triplets to {}",
        kb.splits.train.len(),
        kb.splits.valid.len(),
        kb.splits.test.len(),
        cfg.data_dir.display()
    );
    Ok(())
}

const METRICS_HEADER: &str = "MR\tMRR\tH@1\tH@3\tH@10";

fn valid_columns(m: &Option<RankingMetrics>) -> String {
    match m {
        Some(m) => m.tsv_row(),
        None => ["-"; 5].join("\t"),
    }
}

fn train(cfg: &RunConfig) -> Result<()> {
    let (splits, state) = if cfg.resume {
        let (state, vocab) = load_train_state(&cfg.state_path())?;
        (load_dataset_with(cfg, &vocab)?, state)
    } else {
        let splits = load_dataset(cfg)?;
        let state = TrainState::fresh(&cfg.spec, &splits, cfg.train.seed)?;
        (splits, state)
    };
    let mut log = String::new();
    let mut stable = String::new();
    let on_epoch = |r: &EpochReport| {
        let v = valid_columns(&r.valid);
        let _ = writeln!(log, "{}\t{:.6}\t{}\t{:.3}", r.epoch, r.mean_loss, v, r.wall_seconds);
        let _ = writeln!(stable, "{}\t{:.6}\t{}", r.epoch, r.mean_loss, v);
        eprintln!("epoch {:>4}  loss {:.5}  valid {}", r.epoch, r.mean_loss, v);
    };
    let outcome = resume(&splits, state, &cfg.train, on_epoch)?;

    let log_path = cfg.out_dir.join("train_log.tsv");
    let valid_path = cfg.out_dir.join("valid_metrics.tsv");
    if cfg.resume && log_path.is_file() {
        fs::OpenOptions::new().append(true).open(&log_path)?.write_all(log.as_bytes())?;
        fs::OpenOptions::new().append(true).open(&valid_path)?.write_all(stable.as_bytes())?;
    } else {
        write(&log_path, &format!("epoch\tloss\t{METRICS_HEADER}\twall_seconds\n{log}"))?;
        write(&valid_path, &format!("epoch\tloss\t{METRICS_HEADER}\n{stable}"))?;
    }

    let ck = outcome.checkpoint(&splits.vocab)?;
    save_checkpoint(&ck, &cfg.checkpoint)?;
    save_train_state(&outcome.state, &splits.vocab, &cfg.state_path())?;
    let best = outcome.state.best.as_ref().map(|b| b.epoch);
    println!(
        "trained {} epochs{}; checkpoint {}",
        outcome.state.epochs_done,
        best.map(|e| format!(" (best validation epoch {e})")).unwrap_or_default(),
        cfg.checkpoint.display()
    );
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<()> {
    let (model, vocab) = load_model(cfg)?;
    let splits = load_dataset_with(cfg, &vocab)?;
    let filter = build_filter_index(&splits);
    let (metrics, records) = with_pool(cfg, || evaluate_split_detailed(split(&splits, cfg.split), &model, &filter))?;
    let row = format!("{}\t{}\t{}", cfg.split.name(), metrics.tsv_row(), metrics.n_queries);
    write(
        &cfg.out_dir.join("metrics.tsv"),
        &format!("split\t{METRICS_HEADER}\tqueries\n{row}\n"),
    )?;
    let mut jsonl = String::new();
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    write(&cfg.out_dir.join("ranks.jsonl"), &jsonl)?;
    println!("split\t{METRICS_HEADER}\tqueries\n{row}");
    Ok(())
}

fn with_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> gradgraph::Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.train.threads).build()?;
    Ok(pool.install(f)?)
}

fn read_queries(cfg: &RunConfig) -> Result<Vec<(usize, [String; 3])>> {
    let path = cfg.queries.as_ref().context("this command needs --queries FILE")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [h, r, t] = fields[..] else {
            bail!("{}:{}: expected head<TAB>relation<TAB>tail", path.display(), i + 1);
        };
        out.push((i + 1, [h.to_string(), r.to_string(), t.to_string()]));
    }
    Ok(out)
}

fn score(cfg: &RunConfig) -> Result<()> {
    let (model, vocab) = load_model(cfg)?;
    let mut out = String::from("head\trelation\ttail\tscore\n");
    for (line, [h, r, t]) in read_queries(cfg)? {
        let trip = vocab.resolve(&h, &r, &t).with_context(|| format!("query line {line}"))?;
        let s = model.score(&trip)?;
        let _ = writeln!(out, "{h}\t{r}\t{t}\t{s}");
    }
    write(&cfg.out_dir.join("scores.tsv"), &out)?;
    print!("{out}");
    Ok(())
}

/// `head rel ?tail` asks for the tail; the name after `?` is the true entity.
fn parse_neighbor_query(vocab: &Vocab, line: usize, [h, r, t]: &[String; 3]) -> Result<Query> {
    let strip = |s: &str| s.strip_prefix('?').map(str::to_owned);
    let (side, head, tail) = match (strip(h), strip(t)) {
        (Some(h), None) => (Side::Left, h, t.clone()),
        (None, Some(t)) => (Side::Right, h.clone(), t),
        _ => bail!("query line {line}: mark exactly one entity slot with `?name`"),
    };
    if head.is_empty() || tail.is_empty() {
        bail!("query line {line}: `?` must be followed by the queried entity's name");
    }
    let trip = vocab.resolve(&head, r, &tail).with_context(|| format!("query line {line}"))?;
    Ok(Query::new(trip, side))
}

fn neighbors_cmd(cfg: &RunConfig) -> Result<()> {
    let (model, vocab) = load_model(cfg)?;
    let splits = load_dataset_with(cfg, &vocab)?;
    let filter = build_filter_index(&splits);
    let mut out = String::from("query\thead\trelation\ttail\tmissing\tspace\trank\tneighbor\tdistance\tknown\n");
    for (qi, (line, fields)) in read_queries(cfg)?.into_iter().enumerate() {
        let q = parse_neighbor_query(&vocab, line, &fields)?;
        for space in [Space::Type, Space::Token] {
            let rep = neighbors(&q, None, &model, &vocab, &filter, cfg.k, space)?;
            if rep.short {
                eprintln!("query {qi}: only {} candidates for k = {}", rep.neighbors.len(), cfg.k);
            }
            for (rank, n) in rep.neighbors.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{qi}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    fields[0].trim_start_matches('?'),
                    fields[1],
                    fields[2].trim_start_matches('?'),
                    q.missing_side.name(),
                    space.name(),
                    rank + 1,
                    n.name,
                    n.distance,
                    n.known
                );
            }
        }
    }
    write(&cfg.out_dir.join("neighbors.tsv"), &out)?;
    print!("{out}");
    Ok(())
}

fn rho_text(r: &gradgraph::Result<f64>) -> String {
    match r {
        Ok(v) => format!("{v}"),
        Err(e) => format!("undefined ({e})"),
    }
}

fn analyze_opt(cfg: &RunConfig) -> Result<()> {
    let (model, vocab) = load_model(cfg)?;
    if model.harmony.lambda() == LambdaMode::Infinite {
        bail!("analyze-opt needs a finite-lambda model");
    }
    let splits = load_dataset_with(cfg, &vocab)?;
    let filter = build_filter_index(&splits);
    let eff = with_pool(cfg, || optimization_effect_study(split(&splits, cfg.split), &model, &filter))?;
    let summary = format!(
        "split\t{}\nqueries\t{}\nmean_delta_harmony\t{}\nrho_rank\t{}\nrho_mrr_all\t{}\nrho_mrr_changed\t{}\n",
        cfg.split.name(),
        eff.rows.len(),
        eff.mean_delta_harmony,
        rho_text(&eff.rho_rank),
        rho_text(&eff.rho_mrr_all),
        rho_text(&eff.rho_mrr_changed),
    );
    write(&cfg.out_dir.join("optimization.tsv"), &summary)?;
    let mut scatter = format!(
        "# delta_harmony minus global mean {}\tdelta_rank\n",
        eff.mean_delta_harmony
    );
    for (x, y) in eff.scatter() {
        let _ = writeln!(scatter, "{x}\t{y}");
    }
    write(&cfg.out_dir.join("scatter.tsv"), &scatter)?;
    let mut rows = String::from("query\thead\trelation\ttail\tmissing\tdelta_harmony\trank_token\trank_type\n");
    for r in &eff.rows {
        let n = |id: usize| vocab.entity_name(id).unwrap_or("?").to_string();
        let _ = writeln!(
            rows,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.query_id,
            n(r.triplet.left),
            vocab.relation_name(r.triplet.rel).unwrap_or("?"),
            n(r.triplet.right),
            r.side.name(),
            r.delta_harmony,
            r.rank_token,
            r.rank_type
        );
    }
    write(&cfg.out_dir.join("optimization_rows.tsv"), &rows)?;
    print!("{summary}");
    Ok(())
}

fn read_labeled(path: &Path, vocab: &Vocab) -> Result<Vec<(Triplet, Label)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [h, r, t, l] = f[..] else {
            bail!("{}:{}: expected head<TAB>relation<TAB>tail<TAB>label", path.display(), i + 1);
        };
        let label = match l.to_ascii_lowercase().as_str() {
            "pos" | "1" | "true" => Label::Pos,
            "neg" | "0" | "-1" | "false" => Label::Neg,
            _ => bail!("{}:{}: label must be Pos or Neg", path.display(), i + 1),
        };
        out.push((vocab.resolve(h, r, t)?, label));
    }
    Ok(out)
}

fn density(cfg: &RunConfig) -> Result<()> {
    let (model, vocab) = load_model(cfg)?;
    let splits = load_dataset_with(cfg, &vocab)?;
    let filter: KnownTripletIndex = build_filter_index(&splits);
    let labeled = match &cfg.labeled {
        Some(p) => read_labeled(p, &vocab)?,
        None => labeled_from_split(
            split(&splits, cfg.split),
            &filter,
            model.n_entities(),
            cfg.n_pos,
            cfg.n_neg,
            cfg.train.seed,
        )?,
    };
    let study = with_pool(cfg, || neighborhood_density_study(&labeled, &model, &filter, cfg.k))?;
    let t = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
    let summary = format!(
        "label\tqueries\tmean_delta_density\tt\nPos\t{}\t{}\t{}\nNeg\t{}\t{}\t{}\n",
        study.pos.n_queries,
        study.pos.mean_delta,
        t(study.pos.t_statistic),
        study.neg.n_queries,
        study.neg.mean_delta,
        t(study.neg.t_statistic),
    );
    write(&cfg.out_dir.join("density.tsv"), &summary)?;
    let mut rows = String::from("head\trelation\ttail\tlabel\tmissing\ttype_density\ttoken_density\n");
    for r in &study.records {
        let n = |id: usize| vocab.entity_name(id).unwrap_or("?").to_string();
        let _ = writeln!(
            rows,
            "{}\t{}\t{}\t{:?}\t{}\t{}\t{}",
            n(r.triplet.left),
            vocab.relation_name(r.triplet.rel).unwrap_or("?"),
            n(r.triplet.right),
            r.label,
            r.side.name(),
            r.type_density,
            r.token_density
        );
    }
    write(&cfg.out_dir.join("density_records.tsv"), &rows)?;
    print!("{summary}");
    Ok(())
}

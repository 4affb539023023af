use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use nahgec::corpus::{
    build_vocab, load_parallel_corpus, load_sentences, parse_m2, CorpusFilter, Example, M2Document, VocabPair,
};
use nahgec::decoder::{
    build_correction_lexicon, format_nbest, group_nbest, parse_nbest, translate_corpus, CorrectionLexicon,
    DecodeOptions,
};
use nahgec::eval::{analyze, score_m2, PortionChoice, SegmentChoice};
use nahgec::lm::{default_grid, rerank, train_kn_lm, tune_lambda, NgramModel};
use nahgec::model::ModelParams;
use nahgec::trainer::{load_checkpoint, save_checkpoint, select_model, Candidate, Checkpoint, Event, TrainConfig, Trainer};
use nahgec::Error;

use crate::{Command, ConfigArgs, Portion, Segment};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildVocab {
            train,
            out,
            lexicon_out,
            cfg,
        } => build_vocab_cmd(&train, &out, lexicon_out.as_deref(), &cfg),
        Command::Train {
            train,
            vocab,
            out,
            valid,
            dev_m2,
            resume,
            workers,
            cfg,
        } => train_cmd(&TrainArgs {
            train,
            vocab,
            out,
            valid,
            dev_m2,
            resume,
            workers,
            cfg,
        }),
        Command::Decode {
            model,
            vocab,
            input,
            out,
            nbest_out,
            nbest,
            lexicon,
            workers,
            cfg,
        } => decode_cmd(&DecodeArgs {
            model,
            vocab,
            input,
            out,
            nbest_out,
            nbest,
            lexicon,
            workers,
            cfg,
        }),
        Command::TrainLm {
            input,
            out,
            order,
            arpa,
        } => train_lm_cmd(&input, &out, order, arpa.as_deref()),
        Command::Rerank {
            nbest,
            lm,
            out,
            lambda,
            gold,
            grid,
        } => rerank_cmd(&nbest, &lm, &out, lambda, gold.as_deref(), grid),
        Command::Score { hyp, gold, out } => score_cmd(&hyp, &gold, out.as_deref()),
        Command::Analyze {
            hyp,
            gold,
            vocab,
            segment,
            portion,
            out,
        } => analyze_cmd(&hyp, &gold, &vocab, segment, portion, out.as_deref()),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        let e = io::Error::new(io::ErrorKind::NotFound, format!("{}: no such file", path.display()));
        Err(Error::Io(e).into())
    }
}

/// Refuses to write an output over one of the inputs.
fn distinct_outputs(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for o in outputs {
        let oc = fs::canonicalize(o).ok();
        for i in inputs {
            if *i == *o || (oc.is_some() && oc == fs::canonicalize(i).ok()) {
                return Err(Error::Invalid(format!("output {} would overwrite an input", o.display())).into());
            }
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .map_err(Error::Io)
        .with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(Error::Io)
        .with_context(|| format!("reading {}", path.display()))
}

fn load_vocab(path: &Path) -> Result<VocabPair> {
    Ok(VocabPair::from_json(&read_text(path)?).with_context(|| format!("loading {}", path.display()))?)
}

fn load_doc(path: &Path) -> Result<M2Document> {
    Ok(parse_m2(path)?)
}

fn lines(sentences: &[Vec<String>]) -> String {
    let mut s = String::new();
    for t in sentences {
        s.push_str(&t.join(" "));
        s.push('\n');
    }
    s
}

/// `--set` pairs first, then the named flags, so named flags win.
fn overrides(cfg: &ConfigArgs) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for kv in &cfg.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let named: [(&str, Option<String>); 5] = [
        ("seed", cfg.seed.map(|v| v.to_string())),
        ("variant", cfg.variant.clone()),
        ("vocab_size", cfg.vocab_size.map(|v| v.to_string())),
        ("beam", cfg.beam.map(|v| v.to_string())),
        ("char_beam", cfg.char_beam.map(|v| v.to_string())),
    ];
    for (k, v) in named {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    }
    Ok(out)
}

/// `base`, then the config file, then overrides.
fn resolve_config(base: TrainConfig, cfg: &ConfigArgs) -> Result<TrainConfig> {
    let mut c = base;
    if let Some(path) = &cfg.config {
        require_file(path)?;
        let text = read_text(path)?;
        c.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    for (k, v) in overrides(cfg)? {
        c.set(&k, &v)?;
    }
    c.validate()?;
    Ok(c)
}

fn echo_config(command: &str, c: &TrainConfig) {
    eprintln!("[{command}] resolved configuration (seed {}):", c.seed);
    for line in c.to_text().lines() {
        eprintln!("  {line}");
    }
}

/// Checks that `config` describes the same network as `params`.
fn same_structure(config: &TrainConfig, params: &ModelParams) -> Result<()> {
    let d = params.dims;
    if config.variant != params.variant || config.dims(d.src_vocab, d.tgt_vocab, d.char_vocab) != d {
        return Err(Error::Config("variant and layer sizes are fixed by the checkpoint".into()).into());
    }
    Ok(())
}

fn check_vocab(vocab: &VocabPair, params: &ModelParams) -> Result<()> {
    let d = params.dims;
    let got = (vocab.source.len(), vocab.target.len(), vocab.chars.len());
    if got != (d.src_vocab, d.tgt_vocab, d.char_vocab) {
        return Err(Error::Shape(format!(
            "vocabulary sizes {got:?} do not match the model's {:?}",
            (d.src_vocab, d.tgt_vocab, d.char_vocab)
        ))
        .into());
    }
    Ok(())
}

fn decode_options(c: &TrainConfig, nbest: usize, workers: usize) -> DecodeOptions {
    DecodeOptions {
        beam: c.beam,
        char_beam: c.char_beam,
        max_chars: c.max_chars,
        length_norm: c.length_norm,
        nbest,
        workers,
    }
}

fn build_vocab_cmd(train: &Path, out: &Path, lexicon_out: Option<&Path>, cfg: &ConfigArgs) -> Result<()> {
    require_file(train)?;
    let mut outputs = vec![out];
    outputs.extend(lexicon_out);
    distinct_outputs(&[train], &outputs)?;
    let config = resolve_config(TrainConfig::default(), cfg)?;
    echo_config("build-vocab", &config);
    let pairs = load_parallel_corpus(train, Some(filter(&config)))?;
    let vocab = build_vocab(&pairs, config.vocab_size, config.vocab_mode)?;
    write(out, &vocab.to_json())?;
    eprintln!(
        "[build-vocab] {} pairs; {} source, {} target, {} character symbols",
        pairs.len(),
        vocab.source.len(),
        vocab.target.len(),
        vocab.chars.len()
    );
    if let Some(path) = lexicon_out {
        let lex = build_correction_lexicon(&pairs);
        lex.save(path)?;
        eprintln!("[build-vocab] lexicon with {} source words", lex.len());
    }
    Ok(())
}

fn filter(c: &TrainConfig) -> CorpusFilter {
    CorpusFilter {
        max_tokens: c.max_tokens,
        min_ratio: c.min_ratio,
    }
}

struct TrainArgs {
    train: PathBuf,
    vocab: PathBuf,
    out: PathBuf,
    valid: Option<PathBuf>,
    dev_m2: Option<PathBuf>,
    resume: Option<PathBuf>,
    workers: usize,
    cfg: ConfigArgs,
}

fn checkpoint_name(iteration: u64) -> String {
    format!("ckpt-{iteration:08}.nahm")
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    require_file(&a.train)?;
    require_file(&a.vocab)?;
    for p in [&a.valid, &a.dev_m2, &a.resume].into_iter().flatten() {
        require_file(p)?;
    }
    if a.out.exists() && !a.out.is_dir() {
        return Err(Error::Invalid(format!("{} exists and is not a directory", a.out.display())).into());
    }
    let vocab = load_vocab(&a.vocab)?;
    let dev = a.dev_m2.as_deref().map(load_doc).transpose()?;

    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            let config = resolve_config(ck.config.clone(), &a.cfg)?;
            same_structure(&config, &ck.params)?;
            let mut t = Trainer::resume(ck);
            t.config = config;
            t
        }
        None => {
            let config = resolve_config(TrainConfig::default(), &a.cfg)?;
            let dims = config.dims(vocab.source.len(), vocab.target.len(), vocab.chars.len());
            Trainer::new(config, dims)?
        }
    };
    check_vocab(&vocab, &trainer.params)?;
    echo_config("train", &trainer.config);

    let config = trainer.config.clone();
    let train: Vec<Example> = load_parallel_corpus(&a.train, Some(filter(&config)))?
        .iter()
        .map(|p| Example::encode(p, &vocab))
        .collect();
    let valid: Vec<Example> = match &a.valid {
        Some(p) => load_parallel_corpus(p, None)?
            .iter()
            .map(|p| Example::encode(p, &vocab))
            .collect(),
        None => Vec::new(),
    };
    eprintln!("[train] {} training pairs, {} validation pairs", train.len(), valid.len());
    fs::create_dir_all(&a.out).map_err(Error::Io)?;
    write(&a.out.join("config.txt"), &config.to_text())?;

    let out = a.out.clone();
    trainer.run(&train, &valid, &mut |event| {
        match event {
            Event::Step { iteration, report, lr } => {
                if iteration % 10 == 0 {
                    let per_token = report.loss.total * report.loss.sentences as f64 / report.loss.target_tokens.max(1) as f64;
                    eprintln!("[train] iter {iteration} loss/token {per_token:.4} lr {lr:.6}");
                }
            }
            Event::Cost { iteration, cost, lr } => {
                eprintln!("[train] iter {iteration} decay sample cost {cost:.4} lr {lr:.6}");
            }
            Event::Validation { iteration, loss } => {
                eprintln!(
                    "[train] iter {iteration} validation loss {:.4} (word {:.4}, char {:.4} + {:.4})",
                    loss.total, loss.word, loss.char_basic, loss.char_nested
                );
            }
            Event::Checkpoint { checkpoint, .. } => {
                let path = out.join(checkpoint_name(checkpoint.progress.iteration));
                save_checkpoint(checkpoint, &path)?;
                eprintln!("[train] saved {}", path.display());
            }
        }
        Ok(())
    })?;

    let best = select_best(&a.out, &config, &vocab, dev.as_ref(), a.workers)?;
    fs::copy(a.out.join(checkpoint_name(best)), a.out.join("best.nahm")).map_err(Error::Io)?;
    println!("selected iteration {best}");
    Ok(())
}

/// Checkpoints in `dir`, ordered by iteration.
fn saved_checkpoints(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(Error::Io)? {
        let path = entry.map_err(Error::Io)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(it) = name
            .strip_prefix("ckpt-")
            .and_then(|n| n.strip_suffix(".nahm"))
            .and_then(|n| n.parse::<u64>().ok())
        {
            found.push((it, path));
        }
    }
    found.sort();
    Ok(found)
}

/// Lowest validation losses, then best development F0.5 when a development
/// set is given. Without validation losses the latest checkpoint wins.
fn select_best(
    dir: &Path,
    config: &TrainConfig,
    vocab: &VocabPair,
    dev: Option<&M2Document>,
    workers: usize,
) -> Result<u64> {
    let saved = saved_checkpoints(dir)?;
    let mut candidates = Vec::new();
    for (it, path) in &saved {
        let ck: Checkpoint = load_checkpoint(path)?;
        match ck.val_loss {
            Some(v) => candidates.push(Candidate {
                iteration: *it,
                val_loss: v,
            }),
            None => {
                let last = saved.last().map(|s| s.0).ok_or_else(|| Error::Invalid("no checkpoints written".into()))?;
                return Ok(last);
            }
        }
    }
    let sources: Vec<Vec<String>> = dev
        .map(|d| d.sentences.iter().map(|s| s.source.clone()).collect())
        .unwrap_or_default();
    let chosen = select_model(&candidates, config.select_pool, |c| match dev {
        Some(doc) => {
            let ck = load_checkpoint(&dir.join(checkpoint_name(c.iteration)))?;
            let opts = decode_options(config, 1, workers);
            let outputs: Vec<Vec<String>> = translate_corpus(&ck.params, vocab, None, &sources, &opts)?
                .iter()
                .map(|t| t.best().to_vec())
                .collect();
            let f = score_m2(&outputs, doc)?.prf.f;
            eprintln!("[train] iteration {} dev F0.5 {f:.2}", c.iteration);
            Ok(f)
        }
        None => Ok(-c.val_loss),
    })?;
    Ok(chosen.iteration)
}

struct DecodeArgs {
    model: PathBuf,
    vocab: PathBuf,
    input: PathBuf,
    out: PathBuf,
    nbest_out: Option<PathBuf>,
    nbest: usize,
    lexicon: Option<PathBuf>,
    workers: usize,
    cfg: ConfigArgs,
}

fn decode_cmd(a: &DecodeArgs) -> Result<()> {
    require_file(&a.model)?;
    require_file(&a.vocab)?;
    require_file(&a.input)?;
    if let Some(l) = &a.lexicon {
        require_file(l)?;
    }
    let mut inputs = vec![a.model.as_path(), a.vocab.as_path(), a.input.as_path()];
    inputs.extend(a.lexicon.as_deref());
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.nbest_out.as_deref());
    distinct_outputs(&inputs, &outputs)?;
    if a.nbest == 0 || a.workers == 0 {
        return Err(Error::Invalid("--nbest and --workers must be positive".into()).into());
    }

    let ck = load_checkpoint(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let config = resolve_config(ck.config.clone(), &a.cfg)?;
    same_structure(&config, &ck.params)?;
    echo_config("decode", &config);
    let vocab = load_vocab(&a.vocab)?;
    check_vocab(&vocab, &ck.params)?;
    let lexicon = a.lexicon.as_deref().map(CorrectionLexicon::load).transpose()?;

    let sources = load_sentences(&a.input)?;
    let opts = decode_options(&config, a.nbest, a.workers);
    let translations = translate_corpus(&ck.params, &vocab, lexicon.as_ref(), &sources, &opts)?;
    let best: Vec<Vec<String>> = translations.iter().map(|t| t.best().to_vec()).collect();
    write(&a.out, &lines(&best))?;
    if let Some(path) = &a.nbest_out {
        let entries: Vec<_> = translations.into_iter().flat_map(|t| t.candidates).collect();
        write(path, &format_nbest(&entries))?;
    }
    eprintln!("[decode] {} sentences", sources.len());
    Ok(())
}

fn train_lm_cmd(input: &Path, out: &Path, order: usize, arpa: Option<&Path>) -> Result<()> {
    require_file(input)?;
    let mut outputs = vec![out];
    outputs.extend(arpa);
    distinct_outputs(&[input], &outputs)?;
    let corpus: Vec<Vec<String>> = load_sentences(input)?.into_iter().filter(|s| !s.is_empty()).collect();
    let lm = train_kn_lm(&corpus, order)?;
    lm.save(out)?;
    if let Some(path) = arpa {
        write(path, &lm.to_arpa())?;
    }
    eprintln!(
        "[train-lm] order {} over {} sentences, {} word types",
        lm.order(),
        corpus.len(),
        lm.vocab_size()
    );
    Ok(())
}

fn rerank_cmd(
    nbest: &Path,
    lm_path: &Path,
    out: &Path,
    lambda: Option<f64>,
    gold: Option<&Path>,
    grid: Option<Vec<f64>>,
) -> Result<()> {
    require_file(nbest)?;
    require_file(lm_path)?;
    if let Some(g) = gold {
        require_file(g)?;
    }
    let mut inputs = vec![nbest, lm_path];
    inputs.extend(gold);
    distinct_outputs(&inputs, &[out])?;
    let text = read_text(nbest)?;
    let groups = group_nbest(parse_nbest(&text, &nbest.display().to_string())?)?;
    let lm = NgramModel::load(lm_path)?;
    let lambda = match (lambda, gold) {
        (Some(l), _) => l,
        (None, Some(g)) => {
            let doc = load_doc(g)?;
            let grid = grid.unwrap_or_else(default_grid);
            let t = tune_lambda(&groups, &lm, &doc, &grid)?;
            for (l, f) in &t.grid {
                eprintln!("[rerank] lambda {l:.2} F0.5 {f:.2}");
            }
            println!("lambda={}", t.lambda);
            t.lambda
        }
        (None, None) => return Err(Error::Invalid("give --lambda, or --gold to tune it".into()).into()),
    };
    let best: Vec<Vec<String>> = groups
        .iter()
        .map(|g| Ok(rerank(g, &lm, lambda)?.swap_remove(0).entry.tokens))
        .collect::<Result<_>>()?;
    write(out, &lines(&best))?;
    eprintln!("[rerank] {} sentences at lambda {lambda}", best.len());
    Ok(())
}

fn score_cmd(hyp: &Path, gold: &Path, out: Option<&Path>) -> Result<()> {
    require_file(hyp)?;
    require_file(gold)?;
    if let Some(o) = out {
        distinct_outputs(&[hyp, gold], &[o])?;
    }
    let report = score_m2(&load_sentences(hyp)?, &load_doc(gold)?)?;
    let text = format!("{}{}", report.to_text(), report.to_key_values());
    print!("{text}");
    if let Some(o) = out {
        write(o, &text)?;
    }
    Ok(())
}

fn analyze_cmd(hyp: &Path, gold: &Path, vocab: &Path, segment: Segment, portion: Portion, out: Option<&Path>) -> Result<()> {
    require_file(hyp)?;
    require_file(gold)?;
    require_file(vocab)?;
    if let Some(o) = out {
        distinct_outputs(&[hyp, gold, vocab], &[o])?;
    }
    let v = load_vocab(vocab)?;
    let report = analyze(&load_sentences(hyp)?, &load_doc(gold)?, &v.source)?;
    let segment = match segment {
        Segment::All => SegmentChoice::All,
        Segment::Oov => SegmentChoice::Oov,
        Segment::NonOov => SegmentChoice::NonOov,
    };
    let portion = match portion {
        Portion::All => PortionChoice::All,
        Portion::Small => PortionChoice::Small,
        Portion::Large => PortionChoice::Large,
    };
    let text = report.to_text(segment, portion);
    print!("{text}");
    if let Some(o) = out {
        write(o, &text)?;
    }
    Ok(())
}

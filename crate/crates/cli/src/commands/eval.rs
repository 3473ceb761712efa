use ccemb_core::downstream::{
    evaluate, train_classifier, ClassifierConfig, EmbeddingSource, EvalResult, JointClassifier, ParsingDataset,
    EVAL_CSV_HEADER,
};
use ccemb_core::{compress, train, CompressedEmbedding, EmbeddingTable, LearnerConfig};

use crate::args::EvalArgs;
use crate::util::{load_any, out_dir, write_file, CliError, CliResult};
use crate::RunContext;

fn classifier_config(a: &EvalArgs) -> ClassifierConfig {
    ClassifierConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        weight_decay: a.weight_decay,
        label_smoothing: a.label_smoothing,
        seed: a.seed,
        ..Default::default()
    }
}

fn fit(
    source: EmbeddingSource,
    train_set: &ParsingDataset,
    test_set: &ParsingDataset,
    a: &EvalArgs,
    cfg: &ClassifierConfig,
) -> CliResult<(JointClassifier, EvalResult, EvalResult)> {
    let mut model = JointClassifier::for_dataset(source, train_set, a.unk.as_deref())?;
    train_classifier(&mut model, train_set, cfg)?;
    let on_train = evaluate(&model, train_set)?;
    let on_test = evaluate(&model, test_set)?;
    Ok((model, on_train, on_test))
}

fn learn_compressed(table: &EmbeddingTable, a: &EvalArgs) -> CliResult<CompressedEmbedding> {
    let mut cfg = LearnerConfig::new(a.m, a.k);
    cfg.epochs = a.learn_epochs;
    cfg.learning_rate = a.learn_learning_rate;
    cfg.batch_size = a.learn_batch_size;
    cfg.restarts = a.restarts;
    cfg.seed = a.seed;
    cfg.validate()?;
    let (model, _) = train(table, &cfg)?;
    Ok(compress(table, &model)?)
}

pub fn run(a: &EvalArgs, ctx: &RunContext) -> CliResult<()> {
    let cfg = classifier_config(a);
    cfg.validate()?;
    let out = out_dir(&a.common)?;
    let data = ParsingDataset::load(&a.data, None)?;
    let (train_set, test_set) = match &a.test_data {
        Some(path) => (data.clone(), ParsingDataset::load(path, Some(&data.labels()))?),
        None => data.split_every(5),
    };
    if train_set.is_empty() || test_set.is_empty() {
        return Err(CliError::data("need at least one training and one test example"));
    }
    let table = load_any(&a.emb)?;
    let ce = match &a.compressed {
        Some(path) => CompressedEmbedding::load(path)?,
        None => {
            let ce = learn_compressed(&table, a)?;
            ce.save(&out.join("embedding.cce"))?;
            ce
        }
    };
    if ce.vocab() != table.vocab() {
        return Err(CliError::data("compressed vocabulary does not match --emb"));
    }
    let trainable = !a.freeze_codebooks;

    let (_, orig_train, orig_test) = fit(EmbeddingSource::Dense(table), &train_set, &test_set, a, &cfg)?;
    let (model, comp_train, comp_test) = fit(
        EmbeddingSource::Compressed {
            ce: ce.clone(),
            trainable,
        },
        &train_set,
        &test_set,
        a,
        &cfg,
    )?;
    let tuned = model.export_compressed().expect("compressed source")?;
    let codes_unchanged = tuned.packed_codes() == ce.packed_codes();
    if !codes_unchanged {
        return Err(CliError::data("discrete codes changed during classifier training"));
    }
    if trainable {
        tuned.save(&out.join("finetuned.cce"))?;
    }

    let rows = [
        ("original_train", orig_train),
        ("original_test", orig_test),
        ("compressed_train", comp_train),
        ("compressed_test", comp_test),
    ];
    let mut csv = format!("{EVAL_CSV_HEADER}\n");
    for (name, r) in &rows {
        csv.push_str(&r.csv_row(name));
        csv.push('\n');
    }
    write_file(&out.join("eval.csv"), csv)?;
    let ratio = if orig_test.exact_match > 0.0 {
        comp_test.exact_match / orig_test.exact_match
    } else {
        f64::NAN
    };
    ctx.write_manifest(&out, &[("trainable-codebooks", trainable.to_string())])?;

    println!("{:<18} {:>8} {:>10} {:>9}", "split", "EM", "intent", "slot");
    for (name, r) in &rows {
        println!(
            "{name:<18} {:>8.4} {:>10.4} {:>9.4}",
            r.exact_match, r.intent_accuracy, r.slot_token_accuracy
        );
    }
    println!(
        "codebooks {}; codes unchanged: yes",
        if trainable { "finetuned" } else { "frozen" }
    );
    println!("preservation ratio (test EM, compressed / original): {ratio:.4}");
    Ok(())
}

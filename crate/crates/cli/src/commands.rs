use std::path::{Path, PathBuf};

use mega_core::merge::{build_merge_plan_with, MergeReport};
use mega_core::{
    execute_merge_plan, flatten, gen_synthetic, load_checkpoint, load_csv, save_checkpoint, train,
    weight_average, AccuracyFitness, Dataset, Error, Genome, Part,
};
use serde::Serialize;

use crate::config::{DataSource, RunConfig};
use crate::CliError;

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let data = match &cfg.data {
        DataSource::Synthetic {
            kind,
            n_samples,
            noise,
        } => gen_synthetic(*kind, *n_samples, *noise, cfg.data_seed)?,
        DataSource::Csv { path, label_column } => {
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "dataset file {} does not exist",
                    path.display()
                )));
            }
            load_csv(path, label_column)?
        }
    };
    Ok(data.split(cfg.val_fraction, cfg.test_fraction, cfg.data_seed)?)
}

/// Fitness on one partition, scored at checkpoint precision so that what
/// `eval` prints for a saved file matches what the search reported.
fn scorer(genome: &Genome, data: &Dataset, part: Part) -> Result<AccuracyFitness, CliError> {
    let spec = genome.manifest().to_spec()?;
    if spec.input_dim() != data.feature_dim() || spec.num_classes() < data.num_classes() {
        return Err(Error::Incompatible {
            left: format!(
                "dataset with {} features, {} classes",
                data.feature_dim(),
                data.num_classes()
            ),
            right: format!("model {spec} {}", genome.manifest()),
        }
        .into());
    }
    Ok(AccuracyFitness::from_dataset(spec, data, part)?.with_checkpoint_precision(true))
}

fn has_test(data: &Dataset) -> bool {
    !data.partition().test.is_empty()
}

fn test_accuracy(genome: &Genome, data: &Dataset) -> Result<Option<f64>, CliError> {
    if !has_test(data) {
        return Ok(None);
    }
    Ok(Some(scorer(genome, data, Part::Test)?.accuracy(genome)?))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn label_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Saves the checkpoint, then the text files. If any write fails, the files
/// already written are removed so a failed command leaves nothing behind.
fn write_outputs(genome: &Genome, out: &Path, texts: &[(PathBuf, String)]) -> Result<(), CliError> {
    save_checkpoint(genome, out)?;
    let mut done = vec![out.to_path_buf()];
    for (path, text) in texts {
        if let Err(source) = std::fs::write(path, text) {
            for p in &done {
                let _ = std::fs::remove_file(p);
            }
            return Err(Error::Io {
                path: path.clone(),
                source,
            }
            .into());
        }
        done.push(path.clone());
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainMetrics {
    layers: String,
    seed: u64,
    parameter_count: usize,
    train_accuracy: f64,
    val_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_accuracy: Option<f64>,
}

pub fn train_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    if cfg.spec.input_dim() != data.feature_dim() || cfg.spec.num_classes() < data.num_classes() {
        return Err(CliError::Usage(format!(
            "layers {} do not fit a dataset with {} features and {} classes",
            cfg.spec,
            data.feature_dim(),
            data.num_classes()
        )));
    }
    let params = train(&cfg.spec, &data, &cfg.train)?;
    let genome = flatten(&params)?;
    let metrics = TrainMetrics {
        layers: cfg.spec.to_string(),
        seed: cfg.seed,
        parameter_count: genome.len(),
        train_accuracy: scorer(&genome, &data, Part::Train)?.accuracy(&genome)?,
        val_accuracy: scorer(&genome, &data, Part::Val)?.accuracy(&genome)?,
        test_accuracy: test_accuracy(&genome, &data)?,
    };
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n";
    write_outputs(&genome, out, &[(sidecar(out, ".metrics.json"), json)])?;
    println!(
        "trained {} (seed {}): train {:.4}  val {:.4}",
        cfg.spec, cfg.seed, metrics.train_accuracy, metrics.val_accuracy
    );
    Ok(())
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<Genome>, CliError> {
    paths
        .iter()
        .map(|p| {
            if !p.is_file() {
                return Err(CliError::Usage(format!(
                    "checkpoint {} does not exist",
                    p.display()
                )));
            }
            Ok(load_checkpoint(p)?)
        })
        .collect()
}

pub struct MergeOutputs<'a> {
    pub out: &'a Path,
    pub history: Option<&'a Path>,
    pub report: Option<&'a Path>,
}

/// Shared by `merge` (two inputs) and `merge-tree` (any power of two).
pub fn merge_cmd(
    cfg: &RunConfig,
    inputs: &[PathBuf],
    outputs: MergeOutputs,
) -> Result<(), CliError> {
    let genomes = load_all(inputs)?;
    let data = load_dataset(cfg)?;
    let labels = inputs.iter().map(|p| label_for(p)).collect();
    let plan = build_merge_plan_with(genomes.clone(), labels, cfg.ga.clone(), cfg.pairing)?;
    let val = scorer(&genomes[0], &data, Part::Val)?;
    let merged = execute_merge_plan(&plan, &val, true)?;

    let mut report = merged.report;
    if has_test(&data) {
        let test = scorer(&genomes[0], &data, Part::Test)?;
        for (leaf, g) in report.leaves.iter_mut().zip(plan.leaves()) {
            leaf.test_accuracy = Some(test.accuracy(g)?);
        }
        report.final_test_accuracy = Some(test.accuracy(&merged.genome)?);
    }
    let average = weight_average(&genomes)?;
    report.weight_average_val_accuracy = Some(val.accuracy(&average)?);
    report.weight_average_test_accuracy = test_accuracy(&average, &data)?;

    let mut history_csv = Vec::new();
    if let Some(root) = report.nodes.last() {
        mega_core::ga::write_history_csv(&root.history, &mut history_csv)
            .expect("writing to memory");
    }

    let history_path = outputs
        .history
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sidecar(outputs.out, ".history.csv"));
    let report_path = outputs
        .report
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sidecar(outputs.out, ".report.json"));
    let history_csv = String::from_utf8(history_csv).expect("csv is utf-8");
    write_outputs(
        &merged.genome,
        outputs.out,
        &[(history_path, history_csv), (report_path, report.to_json())],
    )?;
    print!("{}", report.to_table());
    Ok(())
}

#[derive(Serialize)]
struct AverageReport {
    inputs: Vec<String>,
    val_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_accuracy: Option<f64>,
}

pub fn average_cmd(cfg: &RunConfig, inputs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage(
            "average needs at least one checkpoint".into(),
        ));
    }
    let genomes = load_all(inputs)?;
    let average = weight_average(&genomes)?;
    let data = load_dataset(cfg)?;
    let report = AverageReport {
        inputs: inputs.iter().map(|p| label_for(p)).collect(),
        val_accuracy: scorer(&average, &data, Part::Val)?.accuracy(&average)?,
        test_accuracy: test_accuracy(&average, &data)?,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serialize") + "\n";
    write_outputs(&average, out, &[(sidecar(out, ".metrics.json"), json)])?;
    println!(
        "weight average of {} models: val {:.4}",
        inputs.len(),
        report.val_accuracy
    );
    Ok(())
}

pub fn eval_cmd(cfg: &RunConfig, checkpoint: &Path, part: Part) -> Result<(), CliError> {
    let genome = load_all(std::slice::from_ref(&checkpoint.to_path_buf()))?.remove(0);
    let data = load_dataset(cfg)?;
    let acc = scorer(&genome, &data, part)?.accuracy(&genome)?;
    println!("{} accuracy {:.4}", part.name(), acc);
    Ok(())
}

pub fn report_cmd(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let report: MergeReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: not a merge report: {e}", path.display())))?;
    print!("{}", report.to_table());
    Ok(())
}

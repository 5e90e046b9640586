//! Pairwise reduction of `2^k` models into one, and the averaging baseline.
//!
//! Leaves are paired in order, `(0, 1), (2, 3), ...`; each pair is merged by
//! a full GA run and the winners are paired again until one genome remains.
//! Every node's seed comes from the master seed and the node's position, so
//! sibling merges can run in any order or concurrently.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{run_mega, FitnessFn, GaConfig, GenerationRecord, MegaOutcome};
use crate::genome::{ensure_compatible, Genome};
use crate::rng::{derive_seed, stream, Stream};

/// Merge node position. Level 1 merges leaves; the root is at level `depth`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub level: usize,
    pub index: usize,
}

impl NodeId {
    pub fn label(&self) -> String {
        format!("L{}.{}", self.level, self.index)
    }
}

pub fn node_seed(master_seed: u64, node: NodeId) -> u64 {
    derive_seed(master_seed, &[node.level as u64, node.index as u64])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pairing {
    /// Input order.
    #[default]
    Adjacent,
    /// Seeded permutation of the leaves before pairing.
    Shuffled(u64),
}

#[derive(Clone, Debug)]
pub struct MergePlan {
    leaves: Vec<Genome>,
    labels: Vec<String>,
    config: GaConfig,
    overrides: BTreeMap<NodeId, GaConfig>,
}

impl MergePlan {
    pub fn leaves(&self) -> &[Genome] {
        &self.leaves
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn depth(&self) -> usize {
        self.leaves.len().trailing_zeros() as usize
    }

    pub fn node_count(&self) -> usize {
        self.leaves.len() - 1
    }

    /// All merge nodes, bottom-up, left to right.
    pub fn nodes(&self) -> Vec<NodeId> {
        (1..=self.depth())
            .flat_map(|level| {
                let width = self.leaves.len() >> level;
                (0..width).map(move |index| NodeId { level, index })
            })
            .collect()
    }

    /// Replace the shared config for one node. The node's seed is still
    /// derived from `cfg.seed` and the node position.
    pub fn set_node_config(&mut self, node: NodeId, cfg: GaConfig) -> Result<()> {
        if !self.nodes().contains(&node) {
            return Err(Error::InvalidConfig(format!(
                "plan has no node {}",
                node.label()
            )));
        }
        cfg.validate()?;
        self.overrides.insert(node, cfg);
        Ok(())
    }

    /// Effective config for a node, with its derived seed.
    pub fn node_config(&self, node: NodeId) -> GaConfig {
        let base = self.overrides.get(&node).unwrap_or(&self.config);
        GaConfig {
            seed: node_seed(base.seed, node),
            ..base.clone()
        }
    }
}

pub fn build_merge_plan(checkpoints: Vec<Genome>, cfg: GaConfig) -> Result<MergePlan> {
    let labels = (1..=checkpoints.len())
        .map(|i| format!("model-{i}"))
        .collect();
    build_merge_plan_with(checkpoints, labels, cfg, Pairing::Adjacent)
}

pub fn build_merge_plan_with(
    checkpoints: Vec<Genome>,
    labels: Vec<String>,
    cfg: GaConfig,
    pairing: Pairing,
) -> Result<MergePlan> {
    let n = checkpoints.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    if labels.len() != n {
        return Err(Error::InvalidConfig(format!(
            "{} labels for {n} checkpoints",
            labels.len()
        )));
    }
    cfg.validate()?;
    for (i, g) in checkpoints.iter().enumerate().skip(1) {
        ensure_compatible(&checkpoints[0], g).map_err(|_| Error::Incompatible {
            left: format!("{} {}", labels[0], checkpoints[0].manifest()),
            right: format!("{} {}", labels[i], g.manifest()),
        })?;
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Pairing::Shuffled(seed) = pairing {
        order.shuffle(&mut stream(seed, Stream::Pairing));
    }
    Ok(MergePlan {
        leaves: order.iter().map(|&i| checkpoints[i].clone()).collect(),
        labels: order.iter().map(|&i| labels[i].clone()).collect(),
        config: cfg,
        overrides: BTreeMap::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafReport {
    pub label: String,
    pub val_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub level: usize,
    pub index: usize,
    pub left: String,
    pub right: String,
    pub seed: u64,
    /// Fitness of the node's winner, i.e. its validation accuracy.
    pub merged_val_accuracy: f64,
    pub history: Vec<GenerationRecord>,
    /// Kept out of the JSON so reports stay byte-reproducible.
    #[serde(skip)]
    pub wall_time_secs: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub leaves: Vec<LeafReport>,
    pub nodes: Vec<NodeReport>,
    pub final_val_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_test_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_average_val_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_average_test_accuracy: Option<f64>,
}

fn fmt_acc(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

impl MergeReport {
    pub fn best_leaf_val_accuracy(&self) -> f64 {
        self.leaves
            .iter()
            .map(|l| l.val_accuracy)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Baseline models against merged results, accuracies to four places.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>10} {:>10}   {:<16} {:>10} {:>10}",
            "model", "val acc", "test acc", "merging method", "val acc", "test acc"
        );
        let _ = writeln!(out, "{}", "-".repeat(78));
        let methods: Vec<(&str, Option<f64>, Option<f64>)> = vec![
            (
                "MeGA",
                Some(self.final_val_accuracy),
                self.final_test_accuracy,
            ),
            (
                "Weight Average",
                self.weight_average_val_accuracy,
                self.weight_average_test_accuracy,
            ),
        ];
        for (i, leaf) in self.leaves.iter().enumerate() {
            let right = match methods.get(i) {
                Some((name, v, t)) if i == 0 || v.is_some() => {
                    format!("{:<16} {:>10} {:>10}", name, fmt_acc(*v), fmt_acc(*t))
                }
                _ => String::new(),
            };
            let _ = writeln!(
                out,
                "{:<14} {:>10} {:>10}   {}",
                leaf.label,
                fmt_acc(Some(leaf.val_accuracy)),
                fmt_acc(leaf.test_accuracy),
                right.trim_end()
            );
        }
        if !self.nodes.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<8} {:<24} {:>10} {:>6} {:>10}",
                "node", "pair", "val acc", "gens", "time (s)"
            );
            for node in &self.nodes {
                let id = NodeId {
                    level: node.level,
                    index: node.index,
                };
                let _ = writeln!(
                    out,
                    "{:<8} {:<24} {:>10} {:>6} {:>10}",
                    id.label(),
                    format!("{} + {}", node.left, node.right),
                    fmt_acc(Some(node.merged_val_accuracy)),
                    node.history.len(),
                    node.wall_time_secs
                        .map_or("-".into(), |t| format!("{t:.3}"))
                );
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct MergeOutcome {
    pub genome: Genome,
    pub report: MergeReport,
}

#[cfg(not(target_arch = "wasm32"))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = std::time::Instant::now();
    let out = f();
    (out, Some(start.elapsed().as_secs_f64()))
}

#[cfg(target_arch = "wasm32")]
fn timed<T>(f: impl FnOnce() -> T) -> (T, Option<f64>) {
    (f(), None)
}

/// A genome waiting to be merged, with its report label.
type Slot = (Genome, String);

fn run_node<F: FitnessFn + ?Sized>(
    plan: &MergePlan,
    node: NodeId,
    left: &Genome,
    right: &Genome,
    fitness_fn: &F,
) -> Result<(MegaOutcome, Option<f64>)> {
    let cfg = plan.node_config(node);
    let (result, secs) = timed(|| run_mega(left, right, &cfg, fitness_fn));
    let outcome = result.map_err(|e| Error::Node {
        level: node.level,
        index: node.index,
        source: Box::new(e),
    })?;
    Ok((outcome, secs))
}

/// Runs every node bottom-up. With `parallel_siblings`, nodes on the same
/// level run concurrently; results are identical either way.
///
/// The report's leaf and node accuracies are the fitness values; test
/// accuracies and the averaging baseline are left for the caller.
pub fn execute_merge_plan<F: FitnessFn + ?Sized>(
    plan: &MergePlan,
    fitness_fn: &F,
    parallel_siblings: bool,
) -> Result<MergeOutcome> {
    let mut leaves = Vec::with_capacity(plan.leaves.len());
    for (i, (g, label)) in plan.leaves.iter().zip(&plan.labels).enumerate() {
        let val_accuracy = fitness_fn.fitness(g).map_err(|e| Error::Fitness {
            index: i,
            source: Box::new(e),
        })?;
        leaves.push(LeafReport {
            label: label.clone(),
            val_accuracy,
            test_accuracy: None,
        });
    }

    let mut current: Vec<Slot> = plan
        .leaves
        .iter()
        .cloned()
        .zip(plan.labels.iter().cloned())
        .collect();
    let mut nodes = Vec::with_capacity(plan.node_count());

    for level in 1..=plan.depth() {
        let jobs: Vec<(NodeId, &Slot, &Slot)> = current
            .chunks(2)
            .enumerate()
            .map(|(index, pair)| (NodeId { level, index }, &pair[0], &pair[1]))
            .collect();
        let run =
            |(node, l, r): &(NodeId, &Slot, &Slot)| run_node(plan, *node, &l.0, &r.0, fitness_fn);
        let results: Vec<Result<(MegaOutcome, Option<f64>)>> = if parallel_siblings {
            par_collect(&jobs, run)
        } else {
            jobs.iter().map(run).collect()
        };

        let mut next = Vec::with_capacity(jobs.len());
        for ((node, l, r), result) in jobs.iter().zip(results) {
            let (outcome, secs) = result?;
            nodes.push(NodeReport {
                level: node.level,
                index: node.index,
                left: l.1.clone(),
                right: r.1.clone(),
                seed: plan.node_config(*node).seed,
                merged_val_accuracy: outcome.best_fitness(),
                history: outcome.history,
                wall_time_secs: secs,
            });
            next.push((outcome.best.genome, node.label()));
        }
        current = next;
    }

    let (genome, _) = current.pop().expect("one root");
    let final_val_accuracy = nodes
        .last()
        .map(|n| n.merged_val_accuracy)
        .unwrap_or_default();
    Ok(MergeOutcome {
        genome,
        report: MergeReport {
            leaves,
            nodes,
            final_val_accuracy,
            ..MergeReport::default()
        },
    })
}

#[cfg(feature = "parallel")]
fn par_collect<J: Sync, T: Send>(jobs: &[J], f: impl Fn(&J) -> T + Sync) -> Vec<T> {
    use rayon::prelude::*;
    jobs.par_iter().map(&f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_collect<J: Sync, T: Send>(jobs: &[J], f: impl Fn(&J) -> T + Sync) -> Vec<T> {
    jobs.iter().map(f).collect()
}

/// Coordinate-wise mean, computed as `g0 + sum(gi - g0) / k` so averaging
/// copies of one genome returns it unchanged.
pub fn weight_average(genomes: &[Genome]) -> Result<Genome> {
    let first = genomes.first().ok_or(Error::EmptyDataset)?;
    for g in &genomes[1..] {
        ensure_compatible(first, g)?;
    }
    let k = genomes.len() as f64;
    let mut mean = first.clone();
    for (j, m) in mean.values_mut().iter_mut().enumerate() {
        let base = *m;
        let offset: f64 = genomes[1..].iter().map(|g| g.values()[j] - base).sum();
        *m = base + offset / k;
    }
    Ok(mean)
}

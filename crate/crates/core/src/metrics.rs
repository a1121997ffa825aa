//! Test-set evaluation, the weighted global objective, weight divergence
//! against a centralized reference, accuracy stability, and the metrics CSV.

use std::fmt::Write as _;

use crate::data::LabeledExample;
use crate::error::{invalid, Error, Result};
use crate::model::ModelParams;
use crate::partition::ClientShard;

/// Accuracy (argmax, lowest class wins ties) and mean cross-entropy.
pub fn evaluate(params: &ModelParams, test: &[LabeledExample]) -> Result<(f64, f64)> {
    if test.is_empty() {
        return invalid("cannot evaluate on an empty test set");
    }
    let (correct, loss) = sum_loss(params, test)?;
    let n = test.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

fn sum_loss(params: &ModelParams, examples: &[LabeledExample]) -> Result<(usize, f64)> {
    let mut correct = 0;
    let mut loss = 0.0;
    for ex in examples {
        if ex.label >= params.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: ex.label,
                num_classes: params.num_classes(),
            });
        }
        let logp = crate::model::net_log_probs(params, &ex.image)?;
        loss -= logp[ex.label];
        correct += usize::from(crate::model::net_argmax(&logp) == ex.label);
    }
    Ok((correct, loss))
}

/// `sum_k p_k f_k(params)` with `f_k` the mean loss on shard `k`. With no
/// weights, `p_k = n_k / n`. Shards with zero weight may be empty.
pub fn global_objective(
    params: &ModelParams,
    shards: &[ClientShard],
    weights: Option<&[f64]>,
) -> Result<f64> {
    let total: usize = shards.iter().map(ClientShard::len).sum();
    if total == 0 {
        return invalid("global objective over no examples");
    }
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != shards.len() {
                return invalid(format!("{} weights for {} shards", w.len(), shards.len()));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || w.iter().any(|&p| p < 0.0) {
                return invalid(format!(
                    "weights must be nonnegative and sum to 1, got {sum}"
                ));
            }
            w.to_vec()
        }
        None => shards
            .iter()
            .map(|s| s.len() as f64 / total as f64)
            .collect(),
    };
    let mut acc = 0.0;
    for (shard, &p) in shards.iter().zip(&weights) {
        if p == 0.0 {
            continue;
        }
        if shard.is_empty() {
            return invalid(format!(
                "client {} has weight {p} but no data",
                shard.client_id
            ));
        }
        let (_, loss) = sum_loss(params, &shard.examples)?;
        acc += p * loss / shard.len() as f64;
    }
    Ok(acc)
}

/// `||fed - reference|| / ||reference||` over all values.
pub fn weight_divergence(fed: &ModelParams, reference: &ModelParams) -> Result<f64> {
    fed.check_compatible(reference)?;
    let denom = reference.l2_norm();
    if denom == 0.0 {
        return invalid("reference parameters have zero norm");
    }
    let num = fed
        .values()
        .zip(reference.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub global_objective: f64,
    pub weight_divergence: Option<f64>,
    pub wall_time_s: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "round,test_accuracy,test_loss,global_objective,weight_divergence,wall_time_s";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RoundRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.round,
            self.test_accuracy,
            self.test_loss,
            self.global_objective,
            opt(self.weight_divergence),
            opt(self.wall_time_s)
        )
    }
}

pub fn metrics_csv(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Parses a metrics CSV. Errors carry the 1-based line number.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<RoundRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == METRICS_HEADER => {}
        _ => return invalid("line 1: missing metrics header"),
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return invalid(format!(
                "line {row}: expected 6 fields, found {}",
                fields.len()
            ));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("line {row}: bad {what} {s:?}")))
        };
        let opt_num = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, what).map(Some)
            }
        };
        let round = fields[0].parse::<usize>().map_err(|_| {
            Error::InvalidArgument(format!("line {row}: bad round {:?}", fields[0]))
        })?;
        let test_accuracy = num(fields[1], "test_accuracy")?;
        if !(0.0..=1.0).contains(&test_accuracy) {
            return invalid(format!(
                "line {row}: accuracy {test_accuracy} outside [0, 1]"
            ));
        }
        if let Some(prev) = records.last().map(|r: &RoundRecord| r.round) {
            if round <= prev {
                return invalid(format!("line {row}: round {round} does not increase"));
            }
        }
        records.push(RoundRecord {
            round,
            test_accuracy,
            test_loss: num(fields[2], "test_loss")?,
            global_objective: num(fields[3], "global_objective")?,
            weight_divergence: opt_num(fields[4], "weight_divergence")?,
            wall_time_s: opt_num(fields[5], "wall_time_s")?,
        });
    }
    if records.is_empty() {
        return invalid("no data rows");
    }
    Ok(records)
}

/// Population std of the last `window` accuracies; `None` when there are
/// fewer records than `window`.
pub fn stability_stats(records: &[RoundRecord], window: usize) -> Result<Option<f64>> {
    if window < 2 {
        return invalid(format!("stability window {window} must be at least 2"));
    }
    if records.len() < window {
        return Ok(None);
    }
    let tail = &records[records.len() - window..];
    // shifted by the first value so a constant series is exactly zero
    let shift = tail[0].test_accuracy;
    let mean = tail.iter().map(|r| r.test_accuracy - shift).sum::<f64>() / window as f64;
    let var = tail
        .iter()
        .map(|r| (r.test_accuracy - shift - mean).powi(2))
        .sum::<f64>()
        / window as f64;
    Ok(Some(var.sqrt()))
}

/// Mean accuracy over the last `n` records (all of them if fewer).
pub fn final_accuracy(records: &[RoundRecord], n: usize) -> f64 {
    let tail = &records[records.len().saturating_sub(n)..];
    tail.iter().map(|r| r.test_accuracy).sum::<f64>() / tail.len().max(1) as f64
}

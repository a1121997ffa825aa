//! Splitting a central training set across virtual clients, either IID or
//! with per-label Dirichlet skew.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::data::{label_histogram, LabeledDataset, LabeledExample};
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionMode {
    Iid,
    /// One concentration parameter per client.
    Dirichlet {
        alphas: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub num_clients: usize,
    pub mode: PartitionMode,
}

impl PartitionSpec {
    pub fn iid(num_clients: usize) -> Self {
        Self {
            num_clients,
            mode: PartitionMode::Iid,
        }
    }

    /// Dirichlet mode with the same `alpha` for every client.
    pub fn dirichlet(num_clients: usize, alpha: f64) -> Self {
        Self {
            num_clients,
            mode: PartitionMode::Dirichlet {
                alphas: vec![alpha; num_clients],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return invalid("num_clients must be at least 1");
        }
        if let PartitionMode::Dirichlet { alphas } = &self.mode {
            if alphas.len() != self.num_clients {
                return invalid(format!(
                    "{} alphas given for {} clients",
                    alphas.len(),
                    self.num_clients
                ));
            }
            check_alphas(alphas)?;
        }
        Ok(())
    }
}

/// One client's slice of the central training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    /// Positions in the central dataset, ascending.
    pub indices: Vec<usize>,
    pub examples: Vec<LabeledExample>,
    pub label_histogram: Vec<usize>,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return invalid("at least one alpha is required");
    }
    if let Some((i, a)) = alphas
        .iter()
        .enumerate()
        .find(|(_, a)| !(**a > 0.0 && a.is_finite()))
    {
        return invalid(format!("alpha[{i}] = {a} must be positive and finite"));
    }
    Ok(())
}

/// `ln X` for `X ~ Gamma(shape, 1)`.
///
/// Marsaglia-Tsang squeeze for `shape >= 1`; for `shape < 1` the boost
/// `X = Y * U^(1/shape)` with `Y ~ Gamma(shape + 1)`, kept in log space so
/// small shapes cannot underflow to an all-zero draw.
fn sample_ln_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        return sample_ln_gamma(shape + 1.0, rng) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = 1.0 - rng.gen::<f64>();
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 || u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// One point on the simplex, from normalized independent Gamma draws.
pub fn sample_dirichlet(alphas: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    check_alphas(alphas)?;
    let logs: Vec<f64> = alphas.iter().map(|&a| sample_ln_gamma(a, rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut xs: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = xs.iter().sum();
    for x in &mut xs {
        *x /= sum;
    }
    Ok(xs)
}

/// Log of the Dirichlet density at `x`.
pub fn dirichlet_log_density(x: &[f64], alphas: &[f64]) -> Result<f64> {
    check_alphas(alphas)?;
    if x.len() != alphas.len() {
        return Err(Error::ShapeMismatch(format!(
            "point has {} coordinates, {} alphas",
            x.len(),
            alphas.len()
        )));
    }
    let sum: f64 = x.iter().sum();
    if x.iter().any(|&v| v.is_nan() || v < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::OffSimplex(format!("{x:?} sums to {sum}")));
    }
    let alpha_sum: f64 = alphas.iter().sum();
    let ln_beta = alphas.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(alpha_sum);
    let mut acc = -ln_beta;
    for (i, (&xi, &ai)) in x.iter().zip(alphas).enumerate() {
        if xi == 0.0 {
            if ai < 1.0 {
                return Err(Error::DensityDiverges(i));
            }
            if ai > 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            continue;
        }
        acc += (ai - 1.0) * xi.ln();
    }
    Ok(acc)
}

/// Integer counts summing to `total`, proportional to `proportions`.
/// Floors first, then hands the remainder to the largest fractional parts
/// (ties to the lower index).
pub fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|&p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    // floors can only undershoot, but guard against float overshoot anyway
    let mut remaining = total.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    let mut over = counts.iter().sum::<usize>().saturating_sub(total);
    for &i in order.iter().rev() {
        if over == 0 {
            break;
        }
        if counts[i] > 0 {
            counts[i] -= 1;
            over -= 1;
        }
    }
    counts
}

fn build_shards(ds: &LabeledDataset, assignment: Vec<Vec<usize>>) -> Vec<ClientShard> {
    assignment
        .into_iter()
        .enumerate()
        .map(|(client_id, mut indices)| {
            indices.sort_unstable();
            let examples: Vec<LabeledExample> =
                indices.iter().map(|&i| ds.examples()[i].clone()).collect();
            let label_histogram = label_histogram(&examples, ds.num_classes());
            ClientShard {
                client_id,
                indices,
                examples,
                label_histogram,
            }
        })
        .collect()
}

pub fn partition(
    ds: &LabeledDataset,
    spec: &PartitionSpec,
    rng: &mut RngStream,
) -> Result<Vec<ClientShard>> {
    spec.validate()?;
    if ds.is_empty() {
        return invalid("cannot partition an empty dataset");
    }
    let k = spec.num_clients;
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); k];
    match &spec.mode {
        PartitionMode::Iid => {
            if k > ds.len() {
                return invalid(format!("{k} clients for {} examples", ds.len()));
            }
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(rng);
            let base = ds.len() / k;
            let extra = ds.len() % k;
            let mut start = 0;
            for (client, slot) in assignment.iter_mut().enumerate() {
                let size = base + usize::from(client < extra);
                slot.extend_from_slice(&order[start..start + size]);
                start += size;
            }
        }
        PartitionMode::Dirichlet { alphas } => {
            let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
            for (i, ex) in ds.examples().iter().enumerate() {
                by_label[ex.label].push(i);
            }
            for indices in &mut by_label {
                indices.shuffle(rng);
                let proportions = sample_dirichlet(alphas, rng)?;
                let counts = largest_remainder(&proportions, indices.len());
                let mut start = 0;
                for (slot, count) in assignment.iter_mut().zip(counts) {
                    slot.extend_from_slice(&indices[start..start + count]);
                    start += count;
                }
            }
        }
    }
    Ok(build_shards(ds, assignment))
}

/// Per-client label histograms, ready for CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardStatistics {
    pub num_classes: usize,
    pub rows: Vec<ShardRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardRow {
    pub client_id: usize,
    pub histogram: Vec<usize>,
    pub total: usize,
}

impl ShardStatistics {
    /// Column sums over clients.
    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.num_classes];
        for row in &self.rows {
            for (s, &h) in sums.iter_mut().zip(&row.histogram) {
                *s += h;
            }
        }
        sums
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("client_id");
        for c in 0..self.num_classes {
            out.push_str(&format!(",label_{c}"));
        }
        out.push_str(",total\n");
        for row in &self.rows {
            out.push_str(&row.client_id.to_string());
            for h in &row.histogram {
                out.push_str(&format!(",{h}"));
            }
            out.push_str(&format!(",{}\n", row.total));
        }
        out
    }
}

pub fn shard_statistics(shards: &[ClientShard], num_classes: usize) -> ShardStatistics {
    let rows = shards
        .iter()
        .map(|s| {
            let mut histogram = s.label_histogram.clone();
            histogram.resize(num_classes, 0);
            ShardRow {
                client_id: s.client_id,
                total: histogram.iter().sum(),
                histogram,
            }
        })
        .collect();
    ShardStatistics { num_classes, rows }
}

/// `client_id,example_index,label` rows for every assigned example.
pub fn assignment_csv(shards: &[ClientShard]) -> String {
    let mut out = String::from("client_id,example_index,label\n");
    for s in shards {
        for (idx, ex) in s.indices.iter().zip(&s.examples) {
            out.push_str(&format!("{},{},{}\n", s.client_id, idx, ex.label));
        }
    }
    out
}

//! Training loss and evaluation metrics.

use seisforge_srfd::N_QUANTITIES;
use serde::{Deserialize, Serialize};

/// Loss of one window: weighted sum of per-quantity masked MSEs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub per_quantity: [f64; N_QUANTITIES],
    /// `∂total/∂pred`, same layout as `pred`.
    pub grad: Vec<f64>,
}

/// Masked MSE over a `rows × (N_QUANTITIES · n_max)` block.
///
/// Rows before `first_row` and channels of stories with `story_mask` false
/// are excluded. A quantity with no counted values contributes zero.
pub fn masked_loss(
    pred: &[f64],
    target: &[f64],
    n_max: usize,
    story_mask: &[bool],
    first_row: usize,
    weights: &[f64; N_QUANTITIES],
) -> LossValue {
    let c = N_QUANTITIES * n_max;
    assert_eq!(pred.len(), target.len(), "prediction and target shapes differ");
    assert_eq!(pred.len() % c, 0, "block width is not a multiple of the channel count");
    assert_eq!(story_mask.len(), n_max, "story mask length differs from n_max");
    let rows = pred.len() / c;
    let stories = story_mask.iter().filter(|m| **m).count();
    let count = (rows.saturating_sub(first_row) * stories) as f64;
    let mut per_quantity = [0.0; N_QUANTITIES];
    let mut grad = vec![0.0; pred.len()];
    if count == 0.0 {
        return LossValue {
            total: 0.0,
            per_quantity,
            grad,
        };
    }
    for (q, pq) in per_quantity.iter_mut().enumerate() {
        let mut sum = 0.0;
        for r in first_row..rows {
            for (s, _) in story_mask.iter().enumerate().filter(|(_, m)| **m) {
                let i = r * c + q * n_max + s;
                let e = pred[i] - target[i];
                sum += e * e;
                grad[i] = 2.0 * weights[q] * e / count;
            }
        }
        *pq = sum / count;
    }
    LossValue {
        total: per_quantity.iter().zip(weights).map(|(l, w)| l * w).sum(),
        per_quantity,
        grad,
    }
}

/// Streaming error statistics of prediction/target pairs. Mergeable, so
/// partial results from parallel workers combine exactly in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    sum_sq: f64,
    sum_abs: f64,
    sum_abs_target: f64,
    mean_p: f64,
    mean_t: f64,
    m2_p: f64,
    m2_t: f64,
    c_pt: f64,
}

impl Accumulator {
    pub fn push(&mut self, p: f64, t: f64) {
        let e = p - t;
        self.n += 1;
        self.sum_sq += e * e;
        self.sum_abs += e.abs();
        self.sum_abs_target += t.abs();
        let n = self.n as f64;
        let dp = p - self.mean_p;
        let dt = t - self.mean_t;
        self.mean_p += dp / n;
        self.mean_t += dt / n;
        self.m2_p += dp * (p - self.mean_p);
        self.m2_t += dt * (t - self.mean_t);
        self.c_pt += dp * (t - self.mean_t);
    }

    pub fn extend(&mut self, pred: &[f64], target: &[f64]) {
        for (p, t) in pred.iter().zip(target) {
            self.push(*p, *t);
        }
    }

    pub fn merge(&mut self, o: &Self) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let dp = o.mean_p - self.mean_p;
        let dt = o.mean_t - self.mean_t;
        self.m2_p += o.m2_p + dp * dp * na * nb / n;
        self.m2_t += o.m2_t + dt * dt * na * nb / n;
        self.c_pt += o.c_pt + dp * dt * na * nb / n;
        self.mean_p += dp * nb / n;
        self.mean_t += dt * nb / n;
        self.n += o.n;
        self.sum_sq += o.sum_sq;
        self.sum_abs += o.sum_abs;
        self.sum_abs_target += o.sum_abs_target;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn finish(&self) -> Metrics {
        let n = self.n.max(1) as f64;
        let mre = if self.sum_abs_target > 0.0 {
            self.sum_abs / self.sum_abs_target
        } else if self.sum_abs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let denom = (self.m2_p * self.m2_t).sqrt();
        let r = if denom > 0.0 {
            (self.c_pt / denom).clamp(-1.0, 1.0)
        } else if self.m2_p == 0.0 && self.m2_t == 0.0 && self.sum_sq == 0.0 {
            // identical constant series
            1.0
        } else {
            0.0
        };
        Metrics {
            count: self.n,
            mse: self.sum_sq / n,
            mae: self.sum_abs / n,
            mre,
            r,
        }
    }
}

/// Error metrics over a set of values. MRE is `Σ|e| / Σ|target|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: u64,
    pub mse: f64,
    pub mae: f64,
    pub mre: f64,
    pub r: f64,
}

/// Metrics of one flattened prediction/target pair.
pub fn metrics(pred: &[f64], target: &[f64]) -> Metrics {
    let mut a = Accumulator::default();
    a.extend(pred, target);
    a.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorMetrics {
    /// 1 is the first suspended floor.
    pub floor: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityReport {
    pub quantity: String,
    pub overall: Metrics,
    pub per_floor: Vec<FloorMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub sample_id: String,
    pub quantity: String,
    pub mse: f64,
}

/// Evaluation of a checkpoint over one split. Errors are measured in the
/// dataset's normalized units so quantities are comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub n_samples: usize,
    pub units: String,
    pub quantities: Vec<QuantityReport>,
    pub worst: Vec<WorstCase>,
}

impl EvalReport {
    pub fn quantity(&self, name: &str) -> Option<&QuantityReport> {
        self.quantities.iter().find(|q| q.quantity == name)
    }
}

/// Per-sample contribution to an [`EvalReport`].
#[derive(Debug, Clone, Default)]
pub struct SampleErrors {
    pub sample_id: String,
    /// Per quantity: one accumulator per floor.
    pub floors: Vec<Vec<Accumulator>>,
}

/// Reduces per-sample errors, in the given order, to a report keeping the
/// `n_worst` highest-MSE samples per quantity.
pub fn reduce_report(split: &str, names: &[&str], samples: &[SampleErrors], n_worst: usize) -> EvalReport {
    let mut quantities = Vec::new();
    let mut worst = Vec::new();
    for (q, name) in names.iter().enumerate() {
        let mut overall = Accumulator::default();
        let mut floors: Vec<Accumulator> = Vec::new();
        let mut ranked = Vec::new();
        for s in samples {
            let mut whole = Accumulator::default();
            for (f, a) in s.floors[q].iter().enumerate() {
                if floors.len() <= f {
                    floors.resize(f + 1, Accumulator::default());
                }
                floors[f].merge(a);
                whole.merge(a);
            }
            overall.merge(&whole);
            ranked.push((whole.finish().mse, s.sample_id.clone()));
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        worst.extend(ranked.into_iter().take(n_worst).map(|(mse, id)| WorstCase {
            sample_id: id,
            quantity: name.to_string(),
            mse,
        }));
        quantities.push(QuantityReport {
            quantity: name.to_string(),
            overall: overall.finish(),
            per_floor: floors
                .iter()
                .enumerate()
                .map(|(f, a)| FloorMetrics {
                    floor: f + 1,
                    metrics: a.finish(),
                })
                .collect(),
        });
    }
    EvalReport {
        split: split.to_string(),
        n_samples: samples.len(),
        units: "normalized".into(),
        quantities,
        worst,
    }
}

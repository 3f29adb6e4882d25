use crate::error::ModelError;
use crate::models::Model;

/// Change between two consecutive global models.
///
/// Ridge: `‖h_cur − h_prev‖ / (1 + ‖h_prev‖)`. Similarity: largest absolute
/// change over stored entries (a missing entry reads as 0). Naive Bayes:
/// largest absolute change of a smoothed feature probability.
pub fn convergence_metric(prev: &Model, cur: &Model) -> Result<f64, ModelError> {
    match (prev, cur) {
        (Model::Ridge(a), Model::Ridge(b)) => {
            if a.dim() != b.dim() {
                return Err(ModelError::InputDomain("ridge dimensions differ".into()));
            }
            Ok((b.weights() - a.weights()).norm() / (1.0 + a.weights().norm()))
        }
        (Model::Ppr(a), Model::Ppr(b)) => {
            if a.item_count() != b.item_count() {
                return Err(ModelError::InputDomain("item counts differ".into()));
            }
            let mut worst = 0.0f64;
            for i in 0..a.item_count() {
                let (ra, rb) = (a.similarity_row(i), b.similarity_row(i));
                for (j, x) in ra {
                    worst = worst.max((x - rb.get(j).copied().unwrap_or(0.0)).abs());
                }
                for (j, y) in rb {
                    if !ra.contains_key(j) {
                        worst = worst.max(y.abs());
                    }
                }
            }
            Ok(worst)
        }
        (Model::Mnb(a), Model::Mnb(b)) => {
            if a.classes() != b.classes() || a.vocab() != b.vocab() {
                return Err(ModelError::InputDomain("naive Bayes shapes differ".into()));
            }
            let mut worst = 0.0f64;
            for c in 0..a.classes() {
                for f in 0..a.vocab() {
                    worst = worst
                        .max((a.feature_probability(c, f) - b.feature_probability(c, f)).abs());
                }
            }
            Ok(worst)
        }
        (a, b) => Err(ModelError::InputDomain(format!(
            "cannot compare a {} model with a {} model",
            a.kind(),
            b.kind()
        ))),
    }
}

/// Stops after `patience` consecutive aggregated rounds below `epsilon`.
/// `epsilon = 0` never stops.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTracker {
    epsilon: f64,
    patience: u32,
    streak: u32,
    converged_at: Option<u64>,
}

impl ConvergenceTracker {
    pub fn new(epsilon: f64, patience: u32) -> Self {
        Self {
            epsilon,
            patience,
            streak: 0,
            converged_at: None,
        }
    }

    pub fn observe(&mut self, round: u64, metric: f64) {
        if metric < self.epsilon {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.converged_at.is_none() && self.patience > 0 && self.streak >= self.patience {
            self.converged_at = Some(round);
        }
    }

    pub fn converged_at(&self) -> Option<u64> {
        self.converged_at
    }
}

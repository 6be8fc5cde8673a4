use crate::error::{Error, Result};

/// Optimisation settings shared by every training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Peak learning rate.
    pub lr: f64,
    pub warmup: usize,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    /// Padded target tokens per micro-batch.
    pub batch_tokens: usize,
    /// Micro-batches per update.
    pub accum_steps: usize,
    pub max_updates: usize,
    pub label_smoothing: f64,
    pub seed: u64,
    /// Updates between dev evaluations (0 disables them until the end).
    pub eval_interval: usize,
    pub eval_beam: usize,
    /// Mask-predict iterations for dev decoding of non-autoregressive models.
    pub eval_iterations: usize,
    /// Weight of the length-prediction loss.
    pub length_loss_weight: f64,
    /// Parameter-name prefixes kept fixed.
    pub freeze: Vec<String>,
    /// Updates after which a copy of the parameters is kept.
    pub snapshots: Vec<usize>,
}

impl TrainConfig {
    /// Pre-training defaults (label smoothing 0.1 applies to the
    /// autoregressive model only; see [`TrainConfig::nat_pretrain`]).
    pub fn pretrain() -> Self {
        TrainConfig {
            lr: 5e-4,
            warmup: 4000,
            betas: (0.9, 0.98),
            adam_eps: 1e-8,
            batch_tokens: 4096,
            accum_steps: 1,
            max_updates: 20000,
            label_smoothing: 0.1,
            seed: 1,
            eval_interval: 500,
            eval_beam: 1,
            eval_iterations: 5,
            length_loss_weight: 0.1,
            freeze: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn nat_pretrain() -> Self {
        TrainConfig {
            label_smoothing: 0.0,
            ..Self::pretrain()
        }
    }

    pub fn finetune() -> Self {
        TrainConfig {
            lr: 0.5e-5,
            label_smoothing: 0.0,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, why: &str| Err(Error::Config(format!("train.{k} {why}")));
        if self.warmup < 1 {
            return bad("warmup", "must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(0.0..1.0).contains(&self.betas.0) || !(0.0..1.0).contains(&self.betas.1) {
            return bad("betas", "must lie in [0,1)");
        }
        if self.batch_tokens < 1 || self.accum_steps < 1 {
            return bad("batch_tokens", "and train.accum_steps must be positive");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing", "must lie in [0,1)");
        }
        if self.eval_beam < 1 || self.eval_iterations < 1 {
            return bad("eval_beam", "and train.eval_iterations must be positive");
        }
        Ok(())
    }
}

/// `peak * min(u / w, sqrt(w / u))`: linear warm-up, then inverse
/// square-root decay.
pub fn lr_schedule(update: usize, warmup: usize, peak: f64) -> f64 {
    let (u, w) = (update.max(1) as f64, warmup.max(1) as f64);
    peak * (u / w).min((w / u).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_points() {
        assert_eq!(lr_schedule(4000, 4000, 1e-3), 1e-3);
        assert_eq!(lr_schedule(16000, 4000, 1e-3), 0.5e-3);
        assert_eq!(lr_schedule(2000, 4000, 1e-3), 0.5e-3);
        assert!(lr_schedule(1, 4000, 1.0) > 0.0);
    }

    #[test]
    fn defaults_validate() {
        TrainConfig::pretrain().validate().unwrap();
        TrainConfig::finetune().validate().unwrap();
        assert_eq!(TrainConfig::finetune().lr, 0.5e-5);
        let mut c = TrainConfig::pretrain();
        c.warmup = 0;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("train.warmup"));
    }
}

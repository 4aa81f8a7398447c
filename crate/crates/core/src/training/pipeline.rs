//! Search on the supernet, hardening, and retraining of the pruned network.

use std::f64::consts::PI;

use super::bank::{kcr_batch_loss, refresh_bank, FeatureBank, LandmarkState};
use super::config::{ExperimentConfig, RunConfig, Splits};
use super::metrics::{EpochRecord, Phase};
use crate::data::Dataset;
use crate::error::{KcrError, Result};
use crate::kernel::{akc, kc_exact, kcr_bounds, spectrum_of_features, BoundReport};
use crate::model::{alpha_sgd_step, AdamConfig, AdamW, KcrNet, LossSpec, Mode, SoftNoise};
use crate::numerics::{Matrix, Rng};
use crate::selection::{anneal, Architecture, HardMask};

const STREAM_INIT_SUPERNET: u64 = 1;
const STREAM_INIT_PRUNED: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_LANDMARKS: u64 = 4;
const STREAM_SEARCH_SHUFFLE: u64 = 1 << 20;
const STREAM_TRAIN_SHUFFLE: u64 = 2 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Mean over rows of `‖logits − onehot‖²`.
    pub sq_loss: f64,
    pub ce: f64,
}

pub fn evaluate_logits(logits: &Matrix, labels: &[usize]) -> Result<Evaluation> {
    let (n, c) = logits.shape();
    if n != labels.len() || n == 0 {
        return Err(KcrError::Dimension(format!("{n} logit rows for {} labels", labels.len())));
    }
    let mut correct = 0usize;
    let mut sq = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        correct += usize::from(best == y);
        sq += row.iter().enumerate().map(|(j, v)| (v - if j == y { 1.0 } else { 0.0 }).powi(2)).sum::<f64>();
    }
    let ce = crate::model::loss_ce(logits, labels)?;
    Ok(Evaluation { accuracy: correct as f64 / n as f64, sq_loss: sq / n as f64, ce })
}

/// Hard-mode accuracy, squared loss and cross-entropy over a dataset.
pub fn evaluate(net: &KcrNet, data: &Dataset, chunk: usize) -> Result<Evaluation> {
    let (logits, _) = net.predict(&data.images, chunk)?;
    evaluate_logits(&logits, &data.labels)
}

/// Linear rise from `floor` to `peak` over `warm` steps, then cosine decay
/// back to `floor` at `total`.
#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub peak: f64,
    pub floor: f64,
    pub warm: usize,
    pub total: usize,
}

impl Schedule {
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warm {
            return self.floor + (self.peak - self.floor) * (step + 1) as f64 / self.warm as f64;
        }
        let span = self.total.saturating_sub(self.warm).max(1);
        let t = ((step - self.warm) as f64 / span as f64).min(1.0);
        self.floor + (self.peak - self.floor) * 0.5 * (1.0 + (PI * t).cos())
    }
}

fn batches_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}

fn schedule(run: &RunConfig, steps_per_epoch: usize, epochs: usize) -> Schedule {
    Schedule {
        peak: run.lr,
        floor: run.lr * run.lr_floor_ratio,
        warm: (run.lr_warmup_epochs * steps_per_epoch).min(epochs * steps_per_epoch),
        total: epochs * steps_per_epoch,
    }
}

fn shuffled(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed, stream).shuffle(&mut idx);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStats {
    /// Mean cross-entropy over weight batches.
    pub ce: f64,
    /// Mean `λ ln(soft cost)` over architecture batches.
    pub cost: f64,
}

/// Optimizer state carried across search epochs.
pub struct SearchState {
    pub weights: AdamW,
    pub noise: Rng,
    pub schedule: Schedule,
    pub step: usize,
}

impl SearchState {
    pub fn new(net: &KcrNet, run: &RunConfig, n_train: usize, seed: u64) -> Self {
        let n_w = (run.split_weights * n_train as f64).ceil() as usize;
        let steps = batches_per_epoch(n_w, run.batch);
        Self {
            weights: AdamW::new(&net.params, AdamConfig::default(), run.weight_decay),
            noise: Rng::new(seed, STREAM_NOISE),
            schedule: schedule(run, steps, run.t_search),
            step: 0,
        }
    }
}

/// One search epoch: weight batches on the first `split_weights` share of an
/// epoch-seeded shuffle (cross-entropy only), interleaved with architecture
/// batches on the rest (cross-entropy plus `λ ln(soft cost)`), fresh soft masks
/// per batch, then one temperature anneal.
pub fn search_epoch(
    net: &mut KcrNet,
    state: &mut SearchState,
    data: &Dataset,
    run: &RunConfig,
    seed: u64,
    epoch: usize,
) -> Result<SearchStats> {
    let order = shuffled(data.len(), seed, STREAM_SEARCH_SHUFFLE + epoch as u64);
    let n_w = ((run.split_weights * data.len() as f64).ceil() as usize).min(data.len());
    let (w_part, a_part) = order.split_at(n_w);
    let wb: Vec<&[usize]> = w_part.chunks(run.batch).collect();
    let ab: Vec<&[usize]> = a_part.chunks(run.batch).collect();

    // merge the two batch streams by their relative position in the epoch
    let mut plan: Vec<(f64, bool, usize)> = Vec::with_capacity(wb.len() + ab.len());
    plan.extend((0..wb.len()).map(|i| ((i as f64 + 0.5) / wb.len() as f64, false, i)));
    plan.extend((0..ab.len()).map(|i| ((i as f64 + 0.5) / ab.len() as f64, true, i)));
    plan.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));

    let (mut ce_sum, mut cost_sum) = (0.0, 0.0);
    for (_, is_alpha, i) in plan {
        let idx = if is_alpha { ab[i] } else { wb[i] };
        let images = data.images.select_rows(idx);
        let labels: Vec<usize> = idx.iter().map(|&k| data.labels[k]).collect();
        let noise = SoftNoise::draw(net, &mut state.noise)?;
        if is_alpha {
            let spec = LossSpec { cost_lambda: run.lambda, ..LossSpec::default() };
            let (parts, grads) = net.loss_and_grad(&images, &labels, Mode::Soft(&noise), spec)?;
            cost_sum += parts.cost;
            alpha_sgd_step(&mut net.selectors, &grads.alpha, run.alpha_lr);
        } else {
            let (parts, grads) = net.loss_and_grad(&images, &labels, Mode::Soft(&noise), LossSpec::default())?;
            ce_sum += parts.ce;
            let lr = state.schedule.lr(state.step);
            state.step += 1;
            state.weights.step(&mut net.params, &grads.params, lr);
        }
    }
    for sel in net.selectors.iter_mut().flatten() {
        sel.tau = anneal(sel.tau, run.tau_decay)?;
    }
    Ok(SearchStats {
        ce: ce_sum / wb.len().max(1) as f64,
        cost: cost_sum / ab.len().max(1) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub ce: f64,
    /// Mean weighted regularizer term; zero in warm-up epochs.
    pub kcr: f64,
}

/// One retraining epoch in hard mode. Epochs up to `t_warm` use cross-entropy
/// only; later epochs add `kcr_weight` times the batch regularizer, which needs
/// a bank stamped for this epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    net: &mut KcrNet,
    opt: &mut AdamW,
    data: &Dataset,
    run: &RunConfig,
    bank: Option<&FeatureBank>,
    seed: u64,
    epoch: usize,
    schedule: &Schedule,
    step: &mut usize,
) -> Result<TrainStats> {
    let regularized = epoch > run.t_warm;
    if regularized && run.kcr_weight != 0.0 {
        match bank {
            Some(b) => b.ensure_fresh(epoch)?,
            None => return Err(KcrError::StaleBank { expected: epoch, found: None }),
        }
    }
    let order = shuffled(data.len(), seed, STREAM_TRAIN_SHUFFLE + epoch as u64);
    let (mut ce_sum, mut kcr_sum, mut count) = (0.0, 0.0, 0usize);
    for idx in order.chunks(run.batch) {
        let images = data.images.select_rows(idx);
        let labels: Vec<usize> = idx.iter().map(|&k| data.labels[k]).collect();
        let reg = |f: &Matrix| kcr_batch_loss(idx, f, bank, epoch);
        let spec = if regularized {
            LossSpec { kcr_weight: run.kcr_weight, regularizer: Some(&reg), cost_lambda: 0.0 }
        } else {
            LossSpec::default()
        };
        let (parts, grads) = net.loss_and_grad(&images, &labels, Mode::Hard, spec)?;
        ce_sum += parts.ce;
        kcr_sum += parts.kcr;
        count += 1;
        opt.step(&mut net.params, &grads.params, schedule.lr(*step));
        *step += 1;
    }
    Ok(TrainStats { ce: ce_sum / count as f64, kcr: kcr_sum / count as f64 })
}

/// End-of-epoch measurements plus the refreshed bank they were computed from.
pub struct Measurement {
    pub train_sq: f64,
    pub akc: f64,
    pub bound: BoundReport,
    pub val: Evaluation,
    pub bank: FeatureBank,
}

/// Extracts training features, refreshes the Nyström factors (stamped for
/// `bank_epoch`) and evaluates bounds and validation metrics.
pub fn measure(
    net: &KcrNet,
    splits: &Splits,
    run: &RunConfig,
    landmarks: &mut LandmarkState,
    epoch: usize,
    bank_epoch: usize,
) -> Result<Measurement> {
    let (logits, feats) = net.predict(&splits.train.images, run.eval_chunk)?;
    let train = evaluate_logits(&logits, &splits.train.labels)?;
    let n = feats.rows();
    let bank = refresh_bank(feats, landmarks, run.gamma, bank_epoch)?;
    let (a, _) = akc(&bank.snapshot, &bank.factors)?;
    let (kc, _) = kc_exact(&spectrum_of_features(&bank.snapshot)?);
    let bound = kcr_bounds(train.sq_loss, a, n, run.x).with_epoch(epoch).with_exact_kc(kc);
    let val = evaluate(net, &splits.val, run.eval_chunk)?;
    Ok(Measurement { train_sq: train.sq_loss, akc: a, bound, val, bank })
}

fn in_phase<T>(phase: Phase, epoch: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| KcrError::Pipeline { phase: phase.to_string(), epoch, source: Box::new(e) })
}

/// Result of the search phase.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub supernet: KcrNet,
    pub architecture: Architecture,
    pub records: Vec<EpochRecord>,
    pub landmarks: LandmarkState,
    pub tau: f64,
}

impl SearchOutcome {
    /// A search result for a fixed architecture, as if the search had been skipped.
    pub fn from_architecture(cfg: &ExperimentConfig, architecture: Architecture) -> Result<Self> {
        cfg.validate()?;
        architecture.validate(cfg.model.dim)?;
        if architecture.blocks.len() != cfg.model.depth {
            return Err(KcrError::Config(format!(
                "architecture has {} blocks, model depth is {}",
                architecture.blocks.len(),
                cfg.model.depth
            )));
        }
        let supernet = KcrNet::supernet(&cfg.model, cfg.run.tau_init, &mut Rng::new(cfg.seed, STREAM_INIT_SUPERNET))?;
        Ok(Self {
            supernet,
            architecture,
            records: Vec::new(),
            landmarks: LandmarkState::new(cfg.run.m_land, Rng::new(cfg.seed, STREAM_LANDMARKS)),
            tau: cfg.run.tau_init,
        })
    }
}

pub fn run_search(cfg: &ExperimentConfig, splits: &Splits) -> Result<SearchOutcome> {
    cfg.validate()?;
    let run = &cfg.run;
    let mut net = KcrNet::supernet(&cfg.model, run.tau_init, &mut Rng::new(cfg.seed, STREAM_INIT_SUPERNET))?;
    let mut landmarks = LandmarkState::new(run.m_land, Rng::new(cfg.seed, STREAM_LANDMARKS));
    if run.t_search == 0 {
        let masks = vec![HardMask::all(cfg.model.dim); cfg.model.depth];
        return Ok(SearchOutcome {
            architecture: Architecture::from_masks(&masks, cfg.model.mlp_layers),
            supernet: net,
            records: Vec::new(),
            landmarks,
            tau: run.tau_init,
        });
    }
    let mut state = SearchState::new(&net, run, splits.train.len(), cfg.seed);
    let mut records = Vec::with_capacity(run.t_search);
    let mut tau = run.tau_init;
    for epoch in 1..=run.t_search {
        let stats = in_phase(Phase::Search, epoch, search_epoch(&mut net, &mut state, &splits.train, run, cfg.seed, epoch))?;
        tau = net.selectors.iter().flatten().map(|s| s.tau).next().unwrap_or(tau);
        let m = in_phase(Phase::Search, epoch, measure(&net, splits, run, &mut landmarks, epoch, epoch + 1))?;
        records.push(EpochRecord {
            epoch,
            phase: Phase::Search,
            ce: stats.ce,
            kcr: 0.0,
            akc: m.akc,
            bound: m.bound,
            train_sq: m.train_sq,
            val_sq: m.val.sq_loss,
            val_acc: m.val.accuracy,
            flops: net.flops(),
            tau,
        });
    }
    let architecture = net.architecture()?;
    Ok(SearchOutcome { supernet: net, architecture, records, landmarks, tau })
}

/// Everything a full run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub net: KcrNet,
    pub supernet: KcrNet,
    pub architecture: Architecture,
    /// Search records followed by retraining records.
    pub records: Vec<EpochRecord>,
}

impl PipelineOutput {
    pub fn bounds(&self) -> Vec<BoundReport> {
        self.records.iter().map(|r| r.bound).collect()
    }
}

/// Retrains a freshly initialized network restricted to the searched architecture.
pub fn run_retrain(cfg: &ExperimentConfig, splits: &Splits, search: &SearchOutcome) -> Result<PipelineOutput> {
    cfg.validate()?;
    let run = &cfg.run;
    let mut net = KcrNet::pruned(&cfg.model, &search.architecture, &mut Rng::new(cfg.seed, STREAM_INIT_PRUNED))?;
    let mut landmarks = search.landmarks.clone();
    let mut opt = AdamW::new(&net.params, AdamConfig::default(), run.weight_decay);
    let sched = schedule(run, batches_per_epoch(splits.train.len(), run.batch), run.t_train);
    let mut step = 0;
    let mut records = search.records.clone();
    let mut bank: Option<FeatureBank> = None;
    if run.t_warm == 0 && run.t_train > 0 {
        let feats = in_phase(Phase::Regularized, 0, net.extract_features(&splits.train.images, run.eval_chunk))?;
        bank = Some(in_phase(Phase::Regularized, 0, refresh_bank(feats, &mut landmarks, run.gamma, 1))?);
    }
    for epoch in 1..=run.t_train {
        let phase = if epoch > run.t_warm { Phase::Regularized } else { Phase::Warmup };
        let stats = in_phase(
            phase,
            epoch,
            train_epoch(&mut net, &mut opt, &splits.train, run, bank.as_ref(), cfg.seed, epoch, &sched, &mut step),
        )?;
        let m = in_phase(phase, epoch, measure(&net, splits, run, &mut landmarks, epoch, epoch + 1))?;
        records.push(EpochRecord {
            epoch,
            phase,
            ce: stats.ce,
            kcr: stats.kcr,
            akc: m.akc,
            bound: m.bound,
            train_sq: m.train_sq,
            val_sq: m.val.sq_loss,
            val_acc: m.val.accuracy,
            flops: net.flops(),
            tau: search.tau,
        });
        bank = Some(m.bank);
    }
    Ok(PipelineOutput { net, supernet: search.supernet.clone(), architecture: search.architecture.clone(), records })
}

/// Search, harden, then retrain from scratch.
pub fn run_pipeline(cfg: &ExperimentConfig, splits: &Splits) -> Result<PipelineOutput> {
    let search = run_search(cfg, splits)?;
    run_retrain(cfg, splits, &search)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_examples() {
        let labels = [0, 2, 1];
        let perfect = Matrix::from_fn(3, 3, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
        let e = evaluate_logits(&perfect, &labels).unwrap();
        assert_eq!((e.accuracy, e.sq_loss), (1.0, 0.0));
        let zero = evaluate_logits(&Matrix::zeros(3, 3), &labels).unwrap();
        assert_eq!(zero.sq_loss, 1.0);
        let mut rng = Rng::new(1, 0);
        let l = Matrix::from_fn(3, 3, |_, _| rng.normal());
        let a = evaluate_logits(&l, &labels).unwrap().accuracy;
        assert_eq!(evaluate_logits(&l.scale(7.5), &labels).unwrap().accuracy, a);
    }

    #[test]
    fn schedule_shape() {
        let s = Schedule { peak: 1.0, floor: 0.2, warm: 4, total: 12 };
        assert!((s.lr(0) - 0.4).abs() < 1e-15);
        assert_eq!(s.lr(3), 1.0);
        assert!((s.lr(4) - 1.0).abs() < 1e-15);
        assert!(s.lr(8) < 1.0 && s.lr(8) > 0.2);
        assert!((s.lr(12) - 0.2).abs() < 1e-15);
    }
}

//! End-to-end experiment steps shared by the command-line driver and the
//! acceptance suite: generation, training, rate/accuracy evaluation over a
//! power grid, sensing comparisons and oracle benchmarking.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::autonet::{predict_beams, AutoPrecoderParams, Mode};
use crate::channel::{add_channel_noise, build_channel, sample_environment};
use crate::codebook::Codebook;
use crate::config::{ExperimentConfig, OracleKind};
use crate::datapipe::{generate_dataset, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::oracle::{exhaustive_rf_search, greedy_label_search, greedy_selection, solution_for, LinkBudget};
use crate::rng::{domain, stream_rng};
use crate::scalar::Real;
use crate::sensing::{beam_space_profile, random_measurements};
use crate::trainer::{dataset_accuracy, sample_accuracy, train, EpochRecord, TrainOutcome};

pub fn generate(cfg: &ExperimentConfig) -> Result<Dataset> {
    generate_dataset(&cfg.generate_spec()?)
}

/// Rejects datasets whose sizes or codebook disagree with the config.
pub fn check_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> Result<()> {
    if ds.dims != cfg.dataset_dims() {
        return Err(Error::Config {
            field: "dims".into(),
            reason: format!("dataset has {:?}, config expects {:?}", ds.dims, cfg.dataset_dims()),
        });
    }
    if ds.codebook != cfg.codebook {
        return Err(Error::Config { field: "codebook".into(), reason: format!("dataset uses {}", ds.codebook) });
    }
    Ok(())
}

pub fn check_params<T: Real>(cfg: &ExperimentConfig, params: &AutoPrecoderParams<T>) -> Result<()> {
    if params.shape != cfg.net_shape() {
        return Err(Error::Config {
            field: "dims".into(),
            reason: format!("checkpoint has {:?}, config expects {:?}", params.shape, cfg.net_shape()),
        });
    }
    Ok(())
}

/// The seeded train/test split every command agrees on.
pub fn split_dataset(cfg: &ExperimentConfig, ds: &Dataset) -> Result<(Dataset, Dataset)> {
    check_dataset(cfg, ds)?;
    ds.split(cfg.dataset.train_fraction, cfg.seed)
}

pub fn train_from<T: Real>(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    init: AutoPrecoderParams<T>,
    freeze_encoder: bool,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    check_params(cfg, &init)?;
    let tc = crate::trainer::TrainConfig { freeze_encoder: freeze_encoder || cfg.train.freeze_encoder, ..cfg.train_config() };
    train(&train_set.examples::<T>(), init, &tc, on_epoch)
}

/// Splits, initializes from the config seed and trains on the training part.
pub fn train_model<T: Real>(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    let (train_set, _) = split_dataset(cfg, ds)?;
    train_from(cfg, &train_set, AutoPrecoderParams::init(cfg.net_shape(), cfg.seed)?, false, on_epoch)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub p_t_dbm: f64,
    pub m_t: usize,
    pub m_r: usize,
    pub mean_rate_pred: f64,
    pub mean_rate_oracle: f64,
    pub ratio: f64,
    pub tx_acc: f64,
    pub rx_acc: f64,
}

pub const EVAL_CSV_HEADER: &str = "p_t_dbm,m_t,m_r,mean_rate_pred,mean_rate_oracle,ratio,tx_acc,rx_acc";

fn eval_fields(r: &EvalRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.p_t_dbm, r.m_t, r.m_r, r.mean_rate_pred, r.mean_rate_oracle, r.ratio, r.tx_acc, r.rx_acc
    )
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = format!("{EVAL_CSV_HEADER}\n");
    for r in rows {
        writeln!(s, "{}", eval_fields(r)).expect("string write");
    }
    s
}

/// The test samples an evaluation uses: the first `eval.max_samples`.
pub fn eval_subset(cfg: &ExperimentConfig, test: &Dataset) -> Dataset {
    let n = cfg.eval.max_samples.map_or(test.len(), |m| m.min(test.len()));
    test.subset(&(0..n).collect::<Vec<_>>())
}

/// Network inputs at transmit power `p_t_dbm`: the clean channel plus fresh
/// noise, scaled by the dataset norm factor. Sample `i` draws unit noise
/// from its own stream, rescaled per power, so all grid points share the
/// same noise realization up to scale.
pub fn eval_inputs<T: Real>(cfg: &ExperimentConfig, test: &Dataset, p_t_dbm: f64) -> Vec<ComplexVector<T>> {
    let sigma = cfg.channel_noise_power(p_t_dbm).sqrt();
    let inv_nf = 1.0 / test.norm_factor;
    test.samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream_rng(cfg.seed, domain::EVAL_NOISE, i as u64);
            let zero = ComplexMatrix::zeros(s.h_true.rows(), s.h_true.cols());
            let unit = add_channel_noise(&zero, 1.0, &mut rng);
            let noisy = ComplexMatrix::from_fn(s.h_true.rows(), s.h_true.cols(), |r, c| {
                (s.h_true[(r, c)] + unit[(r, c)] * sigma) * inv_nf
            });
            noisy.vec().cast()
        })
        .collect()
}

fn oracle_rate(
    cfg: &ExperimentConfig,
    h: &ComplexMatrix<f64>,
    cb: &(Codebook<f64>, Codebook<f64>),
    lb: &LinkBudget<f64>,
) -> Result<f64> {
    let d = cfg.dataset_dims();
    let sol = match cfg.eval.oracle {
        OracleKind::Exhaustive => {
            exhaustive_rf_search(h, &cb.0, &cb.1, d.n_rf_tx, d.n_rf_rx, lb, cfg.eval.search_cap as u128)?
        }
        OracleKind::Greedy => greedy_label_search(h, &cb.0, &cb.1, d.n_rf_tx, d.n_rf_rx, lb)?,
    };
    Ok(sol.rate)
}

/// Perfect-CSI reference rate of every sample at one transmit power.
pub fn oracle_rates(cfg: &ExperimentConfig, test: &Dataset, p_t_dbm: f64) -> Result<Vec<f64>> {
    let cb = cfg.dataset_dims().codebooks::<f64>(cfg.codebook)?;
    let lb = cfg.link_budget(p_t_dbm)?;
    test.samples.par_iter().map(|s| oracle_rate(cfg, &s.h_true, &cb, &lb)).collect()
}

#[derive(Clone, Debug)]
pub struct PointEval {
    pub row: EvalRow,
    pub tx_pred: Vec<Vec<usize>>,
    pub rx_pred: Vec<Vec<usize>>,
    pub tx_acc: Vec<f64>,
    pub rx_acc: Vec<f64>,
    pub pred_rates: Vec<f64>,
}

const EVAL_CHUNK: usize = 1024;

/// Predicts beams at one transmit power and scores them on the clean
/// channel against the dataset labels and the given reference rates.
pub fn eval_point<T: Real>(
    cfg: &ExperimentConfig,
    params: &AutoPrecoderParams<T>,
    test: &Dataset,
    p_t_dbm: f64,
    oracle: &[f64],
) -> Result<PointEval> {
    check_params(cfg, params)?;
    if test.is_empty() || oracle.len() != test.len() {
        return Err(Error::InvalidArgument(format!("{} reference rates for {} test samples", oracle.len(), test.len())));
    }
    let d = cfg.dataset_dims();
    let inputs = eval_inputs::<T>(cfg, test, p_t_dbm);
    let mut tx_pred = Vec::with_capacity(test.len());
    let mut rx_pred = Vec::with_capacity(test.len());
    for chunk in inputs.chunks(EVAL_CHUNK) {
        let refs: Vec<&ComplexVector<T>> = chunk.iter().collect();
        let fwd = params.forward_batch(&refs, Mode::Inference)?;
        for i in 0..chunk.len() {
            let (t, r) = predict_beams(&fwd.output(i, &params.shape), d.n_rf_tx, d.n_rf_rx);
            tx_pred.push(t);
            rx_pred.push(r);
        }
    }
    let cb = d.codebooks::<f64>(cfg.codebook)?;
    let lb = cfg.link_budget(p_t_dbm)?;
    let pred_rates: Vec<f64> = (0..test.len())
        .into_par_iter()
        .map(|i| Ok(solution_for(&test.samples[i].h_true, &cb.0, &cb.1, &tx_pred[i], &rx_pred[i], &lb, false)?.rate))
        .collect::<Result<_>>()?;
    let tx_acc: Vec<f64> = test.samples.iter().zip(&tx_pred).map(|(s, p)| sample_accuracy(p, &s.tx)).collect::<Result<_>>()?;
    let rx_acc: Vec<f64> = test.samples.iter().zip(&rx_pred).map(|(s, p)| sample_accuracy(p, &s.rx)).collect::<Result<_>>()?;
    let mean_rate_pred = pred_rates.iter().sum::<f64>() / test.len() as f64;
    let mean_rate_oracle = oracle.iter().sum::<f64>() / test.len() as f64;
    let row = EvalRow {
        p_t_dbm,
        m_t: params.shape.m_t,
        m_r: params.shape.m_r,
        mean_rate_pred,
        mean_rate_oracle,
        ratio: mean_rate_pred / mean_rate_oracle,
        tx_acc: dataset_accuracy(&tx_acc)?,
        rx_acc: dataset_accuracy(&rx_acc)?,
    };
    Ok(PointEval { row, tx_pred, rx_pred, tx_acc, rx_acc, pred_rates })
}

/// One row per grid power. `oracle` optionally supplies precomputed
/// reference rates, one vector per grid point.
pub fn eval_grid<T: Real>(
    cfg: &ExperimentConfig,
    params: &AutoPrecoderParams<T>,
    test: &Dataset,
    oracle: Option<&[Vec<f64>]>,
) -> Result<Vec<EvalRow>> {
    cfg.link
        .p_t_dbm
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let owned;
            let rates = match oracle {
                Some(o) => &o[k],
                None => {
                    owned = oracle_rates(cfg, test, p)?;
                    &owned
                }
            };
            Ok(eval_point(cfg, params, test, p, rates)?.row)
        })
        .collect()
}

/// Codebook beams closest to the environment's cluster centers.
pub fn cluster_aligned_beams(cfg: &ExperimentConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let (cb_tx, cb_rx) = cfg.dataset_dims().codebooks::<f64>(cfg.codebook)?;
    let env = cfg.environment_model();
    let collect = |cb: &Codebook<f64>, angles: Vec<f64>| {
        let mut v: Vec<usize> = angles.into_iter().map(|a| cb.nearest_beam(a)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    Ok((
        collect(&cb_tx, env.clusters.iter().map(|c| c.center_aod).collect()),
        collect(&cb_rx, env.clusters.iter().map(|c| c.center_aoa).collect()),
    ))
}

/// Share of profile power on `aligned` beams divided by the share a flat
/// profile would put there.
pub fn concentration(profile: &[f64], aligned: &[usize]) -> f64 {
    let total: f64 = profile.iter().sum();
    let on: f64 = aligned.iter().map(|&i| profile[i]).sum();
    (on / total) / (aligned.len() as f64 / profile.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensingVariant {
    pub variant: String,
    pub eval: EvalRow,
    pub tx_concentration: f64,
    pub rx_concentration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileRow {
    pub side: &'static str,
    pub beam: usize,
    pub cluster_aligned: bool,
    pub learned: f64,
    pub random: f64,
    pub projected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensingReport {
    pub p_t_dbm: f64,
    pub variants: Vec<SensingVariant>,
    pub profile: Vec<ProfileRow>,
    pub aligned_tx: Vec<usize>,
    pub aligned_rx: Vec<usize>,
}

impl SensingReport {
    pub fn variant(&self, name: &str) -> Option<&SensingVariant> {
        self.variants.iter().find(|v| v.variant == name)
    }

    pub fn variants_csv(&self) -> String {
        let mut s = format!("variant,{EVAL_CSV_HEADER},tx_concentration,rx_concentration\n");
        for v in &self.variants {
            writeln!(s, "{},{},{},{}", v.variant, eval_fields(&v.eval), v.tx_concentration, v.rx_concentration)
                .expect("string write");
        }
        s
    }

    pub fn profile_csv(&self) -> String {
        let mut s = String::from("side,beam,cluster_aligned,learned,random,projected\n");
        for r in &self.profile {
            writeln!(s, "{},{},{},{},{},{}", r.side, r.beam, r.cluster_aligned as u8, r.learned, r.random, r.projected)
                .expect("string write");
        }
        s
    }
}

fn profiles<T: Real>(
    params: &AutoPrecoderParams<T>,
    cb: &(Codebook<f64>, Codebook<f64>),
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mm = params.export_measurement_matrices();
    Ok((beam_space_profile(&cb.0, &mm.p.cast())?, beam_space_profile(&cb.1, &mm.q.cast())?))
}

/// The random constant-modulus baseline: fixed random sensing beams feeding
/// a head trained from scratch with the encoder frozen.
pub fn random_sensing_baseline<T: Real>(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    let s = cfg.net_shape();
    let mm = random_measurements::<T>(s.n_t, s.n_r, s.m_t, s.m_r, &mut stream_rng(cfg.seed, domain::SENSING, 0));
    let mut init = AutoPrecoderParams::init(s, cfg.seed)?;
    init.import_measurement_matrices(&mm)?;
    train_from(cfg, train_set, init, true, on_epoch)
}

/// Compares learned, random (retrained head) and constant-modulus projected
/// sensing at the training power and reports beam-space power profiles.
pub fn compare_sensing<T: Real>(
    cfg: &ExperimentConfig,
    learned: &AutoPrecoderParams<T>,
    random: &AutoPrecoderParams<T>,
    test: &Dataset,
) -> Result<SensingReport> {
    let p = cfg.link.train_p_t_dbm;
    let oracle = oracle_rates(cfg, test, p)?;
    let mut projected = learned.clone();
    projected.import_measurement_matrices(&learned.export_measurement_matrices().project_constant_modulus())?;
    let cb = cfg.dataset_dims().codebooks::<f64>(cfg.codebook)?;
    let (aligned_tx, aligned_rx) = cluster_aligned_beams(cfg)?;
    let mut variants = Vec::new();
    let mut profs = Vec::new();
    for (name, params) in [("learned", learned), ("random", random), ("projected", &projected)] {
        let eval = eval_point(cfg, params, test, p, &oracle)?.row;
        let (pt, pr) = profiles(params, &cb)?;
        variants.push(SensingVariant {
            variant: name.into(),
            eval,
            tx_concentration: concentration(&pt, &aligned_tx),
            rx_concentration: concentration(&pr, &aligned_rx),
        });
        profs.push((pt, pr));
    }
    let mut profile = Vec::new();
    for (side, aligned, pick) in [("tx", &aligned_tx, 0usize), ("rx", &aligned_rx, 1)] {
        let n = if pick == 0 { cb.0.len() } else { cb.1.len() };
        for beam in 0..n {
            let get = |k: usize| if pick == 0 { profs[k].0[beam] } else { profs[k].1[beam] };
            profile.push(ProfileRow {
                side,
                beam,
                cluster_aligned: aligned.contains(&beam),
                learned: get(0),
                random: get(1),
                projected: get(2),
            });
        }
    }
    Ok(SensingReport { p_t_dbm: p, variants, profile, aligned_tx, aligned_rx })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub channel: usize,
    pub greedy_rate: f64,
    pub exhaustive_rate: f64,
    pub ratio: f64,
    pub same_selection: bool,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("channel,greedy_rate,exhaustive_rate,ratio,same_selection\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.channel, r.greedy_rate, r.exhaustive_rate, r.ratio, r.same_selection as u8)
            .expect("string write");
    }
    s
}

/// Greedy label search against exhaustive search on fresh channels from the
/// configured environment at the training power.
pub fn oracle_bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    let d = cfg.dataset_dims();
    let env = cfg.environment_model();
    let (cb_tx, cb_rx) = d.codebooks::<f64>(cfg.codebook)?;
    let lb = cfg.link_budget(cfg.link.train_p_t_dbm)?;
    (0..cfg.eval.bench_channels)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, domain::BENCH, i as u64);
            let h = build_channel(&sample_environment::<f64>(&env, &mut rng), d.n_t, d.n_r)?;
            let (gt, gr) = greedy_selection(&h, &cb_tx, &cb_rx, d.n_rf_tx, d.n_rf_rx, &lb)?;
            let greedy = solution_for(&h, &cb_tx, &cb_rx, &gt, &gr, &lb, false)?;
            let ex = exhaustive_rf_search(&h, &cb_tx, &cb_rx, d.n_rf_tx, d.n_rf_rx, &lb, cfg.eval.search_cap as u128)?;
            Ok(BenchRow {
                channel: i,
                greedy_rate: greedy.rate,
                exhaustive_rate: ex.rate,
                ratio: greedy.rate / ex.rate,
                same_selection: (gt, gr) == (ex.tx_indices, ex.rx_indices),
            })
        })
        .collect()
}

/// Pilot count of the learned sensing stage next to exhaustive channel sounding.
pub fn pilot_accounting(cfg: &ExperimentConfig) -> String {
    let d = &cfg.dims;
    format!(
        "pilots: {} x {} = {} (exhaustive sounding: {} x {} = {})",
        d.m_t,
        d.m_r,
        d.m_t * d.m_r,
        d.n_t,
        d.n_r,
        d.n_t * d.n_r
    )
}

use autoprecoder::autonet::{random_channel_vector, AutoPrecoderParams, NetShape};
use autoprecoder::codebook::Codebook;
use autoprecoder::config::ExperimentConfig;
use autoprecoder::datapipe::Dataset;
use autoprecoder::experiment;
use autoprecoder::oracle::{exhaustive_rf_search, greedy_label_search, LinkBudget, DEFAULT_SEARCH_CAP};
use autoprecoder::rng::stream_rng;
use autoprecoder::sensing::beam_space_profile;
use autoprecoder::trainer::{gradient_check, precision, recall, sample_accuracy, LabelVector};
use autoprecoder::Result;
use rand::Rng;

use crate::commands::{CliError, CliResult};

struct Check {
    name: &'static str,
    detail: String,
    pass: bool,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((pass, detail)) => Check { name, detail, pass },
        Err(e) => Check { name, detail: format!("error[{}]: {e}", e.category()), pass: false },
    }
}

fn encoder_matches_operator() -> Result<(bool, String)> {
    let shape = NetShape { n_t: 8, n_r: 8, m_t: 3, m_r: 2, n_tx_beams: 8, n_rx_beams: 8, hidden1: 8, hidden2: 8 };
    let p = AutoPrecoderParams::<f64>::init(shape, 11)?;
    let op = p.export_measurement_matrices().operator();
    let mut rng = stream_rng(11, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let h = random_channel_vector::<f64>(64, &mut rng);
        let a = p.encoder_forward(&h)?;
        let b = op.mul_vec(&h)?;
        for (x, y) in a.iter().zip(b.iter()) {
            worst = worst.max((x - y).norm());
        }
    }
    Ok((worst < 1e-10, format!("max deviation {worst:.2e}")))
}

fn gradients_match() -> Result<(bool, String)> {
    let shape = NetShape { n_t: 4, n_r: 4, m_t: 2, m_r: 2, n_tx_beams: 4, n_rx_beams: 4, hidden1: 16, hidden2: 16 };
    let p = AutoPrecoderParams::<f64>::init(shape, 3)?;
    let mut rng = stream_rng(3, 0, 1);
    let hs: Vec<_> = (0..32)
        .map(|_| {
            let h = random_channel_vector::<f64>(16, &mut rng);
            let peak = h.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
            h.scale(num_complex::Complex::new(1.0 / peak, 0.0))
        })
        .collect();
    let labels = (0..32)
        .map(|_| {
            let t = rng.random_range(0..3);
            let r = rng.random_range(0..3);
            LabelVector::from_indices(&[t, t + 1], &[r, r + 1], 4, 4)
        })
        .collect::<Result<Vec<_>>>()?;
    let checks = gradient_check(&p, &hs, &labels, 5, 16, 1e-4, 3)?;
    let worst = checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    Ok((worst < 1e-4, format!("max relative error {worst:.2e} over {} tensors", checks.len())))
}

fn greedy_close_to_exhaustive() -> Result<(bool, String)> {
    let mut cfg = ExperimentConfig::default();
    cfg.dims.n_t = 8;
    cfg.dims.n_r = 8;
    cfg.dims.m_t = 4;
    cfg.dims.m_r = 4;
    let env = cfg.environment_model();
    let lb = LinkBudget::<f64>::from_dbm(cfg.link.train_p_t_dbm, cfg.noise_dbm(), cfg.n_streams())?;
    let cb = Codebook::<f64>::build(cfg.codebook, 8, 8)?;
    let mut rng = stream_rng(5, 0, 2);
    let (mut g, mut e) = (0.0, 0.0);
    for _ in 0..20 {
        let paths = autoprecoder::channel::sample_environment::<f64>(&env, &mut rng);
        let h = autoprecoder::channel::build_channel(&paths, 8, 8)?;
        g += greedy_label_search(&h, &cb, &cb, 2, 2, &lb)?.rate;
        e += exhaustive_rf_search(&h, &cb, &cb, 2, 2, &lb, DEFAULT_SEARCH_CAP)?.rate;
    }
    Ok((g <= e * (1.0 + 1e-9) && g >= 0.95 * e, format!("greedy/exhaustive {:.4}", g / e)))
}

fn dataset_round_trip() -> Result<(bool, String)> {
    let mut cfg = ExperimentConfig::default();
    cfg.dims.n_t = 8;
    cfg.dims.n_r = 8;
    cfg.dims.m_t = 2;
    cfg.dims.m_r = 2;
    cfg.dataset.n_samples = 40;
    let ds = experiment::generate(&cfg)?;
    let back = Dataset::from_bytes(&ds.to_bytes())?;
    let mut again = back.clone();
    again.normalize()?;
    let peak = ds.max_abs_noisy();
    Ok((
        back == ds && again == back && (peak - 1.0).abs() < 1e-12,
        format!("{} samples, peak {peak:.12}", ds.len()),
    ))
}

fn pick(rng: &mut impl Rng, k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = rand::seq::index::sample(rng, 16, k).into_vec();
    v.sort_unstable();
    v
}

fn metric_identities() -> Result<(bool, String)> {
    let mut rng = stream_rng(9, 0, 3);
    let mut bad = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..5);
        let (a, b) = (pick(&mut rng, k), pick(&mut rng, k));
        let acc = sample_accuracy(&a, &b)?;
        if precision(&a, &b)? != acc || recall(&a, &b)? != acc || sample_accuracy(&a, &a)? != 1.0 {
            bad += 1;
        }
    }
    Ok((bad == 0, format!("{bad} of 1000 cases violate precision = recall = accuracy")))
}

fn profile_parseval() -> Result<(bool, String)> {
    let cb = Codebook::<f64>::dft(16, 16)?;
    let shape = NetShape { n_t: 16, n_r: 16, m_t: 4, m_r: 4, n_tx_beams: 16, n_rx_beams: 16, hidden1: 8, hidden2: 8 };
    let mm = AutoPrecoderParams::<f64>::init(shape, 1)?.export_measurement_matrices();
    let profile = beam_space_profile(&cb, &mm.p)?;
    let total: f64 = profile.iter().sum();
    let energy = mm.p.frobenius_norm_sqr();
    Ok(((total - energy).abs() < 1e-10, format!("profile {total:.12} vs kernel energy {energy:.12}")))
}

pub fn run() -> CliResult {
    let checks = [
        check("encoder equals Kronecker operator", encoder_matches_operator),
        check("analytic gradients match central differences", gradients_match),
        check("greedy search tracks exhaustive search", greedy_close_to_exhaustive),
        check("dataset round trip and normalization", dataset_round_trip),
        check("precision, recall and accuracy agree", metric_identities),
        check("beam-space profile preserves energy", profile_parseval),
    ];
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        return Err(CliError::SelftestFailed(failed));
    }
    Ok(())
}

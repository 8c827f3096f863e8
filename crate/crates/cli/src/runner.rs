//! Turns a validated config into result rows, a CSV file and a run
//! manifest.
//!
//! Rows are computed in config order and every failure is reported in the
//! row's error column rather than aborting the run. With `timing = off`
//! (the default) repeated runs with the same config and seed produce
//! byte-identical CSV.

use std::fmt::Write as _;
use std::time::Instant;

use qdistill::channels::{bell_diagonal_state, standard_channel, QuantumChannel};
use qdistill::codes::derive_code_sizes;
use qdistill::entropy::coherent_information;
use qdistill::optimize::maximize_rate;
use qdistill::protocols::{
    run_entanglement_distillation, run_entanglement_generation, run_entanglement_transmission,
    run_key_distillation, run_key_generation, ProtocolOutcome,
};
use qdistill::qmath::{purify, DensityOperator, StateVector};
use qdistill::source::{
    channel_to_tripartite, source_through_channel, CqqSource, InputEnsemble, ProtocolParams,
    TripartiteState,
};
use qdistill::typicality::typical_set;

use crate::config::{ExperimentConfig, Scenario, SourceSpec};

/// One CSV row. Absent metrics stay `None` and are emitted as empty
/// fields; the column set never changes.
#[derive(Debug, Clone, Default)]
pub struct ResultRow {
    pub scenario: String,
    pub n: usize,
    pub seed: u64,
    pub rate_bits: Option<f64>,
    pub distance_to_target: Option<f64>,
    pub eve_decoupling: Option<f64>,
    pub avg_success: Option<f64>,
    pub leakage: Option<f64>,
    pub classical_bits: Option<u32>,
    pub abort_mass: Option<f64>,
    pub wall_time_ms: Option<u64>,
    pub error: Option<String>,
}

pub const CSV_HEADER: &str = "scenario,n,seed,rate_bits,distance_to_target,eve_decoupling,avg_success,leakage,classical_bits,abort_mass,wall_time_ms,error";

/// Nine significant digits, locale-independent.
fn fmt_metric(x: f64) -> String {
    format!("{x:.8e}")
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        let f = |v: &Option<f64>| v.map(fmt_metric).unwrap_or_default();
        let mut line = String::new();
        let _ = write!(
            line,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.n,
            self.seed,
            f(&self.rate_bits),
            f(&self.distance_to_target),
            f(&self.eve_decoupling),
            f(&self.avg_success),
            f(&self.leakage),
            self.classical_bits.map(|b| b.to_string()).unwrap_or_default(),
            f(&self.abort_mass),
            self.wall_time_ms.map(|t| t.to_string()).unwrap_or_default(),
            self.error.as_deref().unwrap_or(""),
        );
        line
    }
}

/// Builds the configured source.
pub fn build_source(spec: &SourceSpec) -> Result<CqqSource, String> {
    match spec {
        SourceSpec::TwoPure { p0, overlap_b, overlap_e } => {
            CqqSource::two_pure(*p0, *overlap_b, *overlap_e).map_err(|e| e.to_string())
        }
        SourceSpec::Ideal { probs } => CqqSource::ideal(probs.clone()).map_err(|e| e.to_string()),
        SourceSpec::BellDiagonal { probs } => {
            let rho = bell_diagonal_state(probs).map_err(|e| e.to_string())?;
            let psi = purify(&rho).map_err(|e| e.to_string())?;
            // [A, B, E]: the purifying register is Eve's
            let mut v = psi;
            v.rename_register(2, "E");
            TripartiteState::from_vector(v)
                .map(|t| t.source().clone())
                .map_err(|e| e.to_string())
        }
    }
}

fn build_channel(cfg: &ExperimentConfig) -> Result<QuantumChannel, String> {
    standard_channel(cfg.channel.expect("channel scenarios carry a channel kind"))
        .map_err(|e| e.to_string())
}

/// The source a channel scenario works with: the uniform computational
/// ensemble pushed through the channel.
fn channel_source(cfg: &ExperimentConfig) -> Result<(QuantumChannel, InputEnsemble, CqqSource), String> {
    let ch = build_channel(cfg)?;
    let ens = InputEnsemble::uniform_basis(ch.input_dim()).map_err(|e| e.to_string())?;
    let src = source_through_channel(&ch, &ens).map_err(|e| e.to_string())?;
    Ok((ch, ens, src))
}

fn params_for(cfg: &ExperimentConfig, n: usize) -> Result<ProtocolParams, String> {
    ProtocolParams::new(n, cfg.delta, cfg.epsilon, cfg.rate_backoff, cfg.seed)
        .map_err(|e| e.to_string())
}

fn outcome_row(cfg: &ExperimentConfig, out: &ProtocolOutcome) -> ResultRow {
    ResultRow {
        scenario: cfg.scenario.name().to_string(),
        n: out.n,
        seed: out.seed,
        rate_bits: Some(out.rate_bits),
        distance_to_target: Some(out.distance_to_target),
        eve_decoupling: Some(out.eve_decoupling),
        avg_success: Some(out.avg_success),
        leakage: Some(out.leakage),
        classical_bits: Some(out.forward_bits),
        abort_mass: Some(out.abort_mass),
        ..Default::default()
    }
}

fn run_row(cfg: &ExperimentConfig, n: usize) -> Result<ResultRow, String> {
    let base = ResultRow {
        scenario: cfg.scenario.name().to_string(),
        n,
        seed: cfg.seed,
        ..Default::default()
    };
    match cfg.scenario {
        Scenario::Rate => {
            let ch = build_channel(cfg)?;
            let input = max_entangled_input(ch.input_dim()).map_err(|e| e.to_string())?;
            let psi = channel_to_tripartite(&ch, &input).map_err(|e| e.to_string())?;
            let ic = coherent_information(&psi).map_err(|e| e.to_string())?;
            Ok(ResultRow { rate_bits: Some(ic), ..base })
        }
        Scenario::Typical => {
            let src = build_source(cfg.source.as_ref().expect("validated"))?;
            let t = typical_set(src.probs(), n, cfg.delta).map_err(|e| e.to_string())?;
            if t.is_empty() {
                return Err(format!("typical set is empty at n = {n}"));
            }
            Ok(ResultRow {
                rate_bits: Some((t.len() as f64).log2() / n as f64),
                abort_mass: Some(1.0 - t.mass),
                ..base
            })
        }
        Scenario::Code => {
            let src = build_source(cfg.source.as_ref().expect("validated"))?;
            let (m, s) = code_shape(cfg, &src, n)?;
            let mut rng = qdistill::rng::stream_rng(cfg.seed, 0);
            let code = qdistill::codes::build_keygen_code(&src, n, cfg.delta, m, s, &mut rng)
                .map_err(|e| e.to_string())?;
            Ok(ResultRow {
                rate_bits: Some((m as f64).log2() / n as f64),
                avg_success: Some(code.avg_success),
                leakage: Some(code.max_row_leakage),
                ..base
            })
        }
        Scenario::KeyGen => {
            let (ch, ens, _) = channel_source(cfg)?;
            let p = params_for(cfg, n)?;
            let out = run_key_generation(&ch, &ens, &p).map_err(|e| e.to_string())?;
            Ok(outcome_row(cfg, &out))
        }
        Scenario::KeyDist => {
            let src = build_source(cfg.source.as_ref().expect("validated"))?;
            let p = params_for(cfg, n)?;
            let out = run_key_distillation(&src, &p, cfg.trials).map_err(|e| e.to_string())?;
            Ok(outcome_row(cfg, &out))
        }
        Scenario::EntGen => {
            let (ch, ens, _) = channel_source(cfg)?;
            let p = params_for(cfg, n)?;
            let out = run_entanglement_generation(&ch, &ens, &p).map_err(|e| e.to_string())?;
            Ok(outcome_row(cfg, &out))
        }
        Scenario::EntDist => {
            let src = build_source(cfg.source.as_ref().expect("validated"))?;
            let p = params_for(cfg, n)?;
            let out = run_entanglement_distillation(&src, &p).map_err(|e| e.to_string())?;
            Ok(outcome_row(cfg, &out))
        }
        Scenario::EntTrans => {
            let (ch, ens, src) = channel_source(cfg)?;
            let p = params_for(cfg, n)?;
            let (m, s) = code_shape(cfg, &src, n)?;
            let mut rng = qdistill::rng::stream_rng(cfg.seed, 0);
            let code = qdistill::codes::build_keygen_code(&src, n, cfg.delta, m, s, &mut rng)
                .map_err(|e| e.to_string())?;
            let msg = DensityOperator::maximally_mixed(&[code.m], &["Msg"])
                .map_err(|e| e.to_string())?;
            let out = run_entanglement_transmission(&ch, &ens, &code, &msg, &p)
                .map_err(|e| e.to_string())?;
            Ok(outcome_row(cfg, &out))
        }
        Scenario::Optimize => {
            let ch = build_channel(cfg)?;
            let report = maximize_rate(&ch, &cfg.optimize_param, cfg.optimize_budget, cfg.seed)
                .map_err(|e| e.to_string())?;
            Ok(ResultRow { rate_bits: Some(report.best_value), ..base })
        }
    }
}

fn max_entangled_input(d: usize) -> qdistill::Result<StateVector> {
    let ens = InputEnsemble::uniform_basis(d)?;
    ens.to_input_state()
}

fn code_shape(cfg: &ExperimentConfig, src: &CqqSource, n: usize) -> Result<(usize, usize), String> {
    match (cfg.code_m_bits, cfg.code_s_bits) {
        (Some(m), Some(s)) => Ok((1usize << m, 1usize << s)),
        _ => {
            let sizes =
                derive_code_sizes(src, n, cfg.delta, cfg.rate_backoff).map_err(|e| e.to_string())?;
            let m = cfg.code_m_bits.map(|b| 1usize << b).unwrap_or(sizes.m);
            let s = cfg.code_s_bits.map(|b| 1usize << b).unwrap_or(sizes.s);
            Ok((m, s))
        }
    }
}

/// The whole run: one row per n, in config order.
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub warnings: usize,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> RunReport {
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    let mut warnings = 0;
    for &n in &cfg.n_list {
        let started = Instant::now();
        let mut row = match run_row(cfg, n) {
            Ok(row) => row,
            Err(message) => {
                warnings += 1;
                ResultRow {
                    scenario: cfg.scenario.name().to_string(),
                    n,
                    seed: cfg.seed,
                    error: Some(message.replace(',', ";")),
                    ..Default::default()
                }
            }
        };
        if cfg.timing {
            row.wall_time_ms = Some(started.elapsed().as_millis() as u64);
        }
        rows.push(row);
    }
    RunReport { rows, warnings }
}

/// Renders the rows as CSV (header + one line per row, `\n` endings).
pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// The sidecar manifest: config echo, tool version and seed.
pub fn manifest(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# qdistill run manifest");
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let _ = writeln!(out, "# config echo (defaults materialised)");
    out.push_str(&cfg.serialize());
    out
}

/// Dry-run report: derived code sizes per n, nothing simulated.
pub fn dry_run_report(cfg: &ExperimentConfig) -> Result<String, String> {
    let mut out = String::new();
    let _ = writeln!(out, "scenario = {}", cfg.scenario.name());
    let src = match (&cfg.source, cfg.scenario.uses_channel()) {
        (Some(spec), false) => Some(build_source(spec)?),
        (None, true) => {
            if cfg.scenario == Scenario::Rate || cfg.scenario == Scenario::Optimize {
                None
            } else {
                Some(channel_source(cfg)?.2)
            }
        }
        _ => None,
    };
    for &n in &cfg.n_list {
        match &src {
            None => {
                let _ = writeln!(out, "n = {n}: single-letter evaluation, no code sizes");
            }
            Some(src) => match derive_code_sizes(src, n, cfg.delta, cfg.rate_backoff) {
                Ok(sizes) => {
                    let l = (sizes.typical_count / (sizes.m as u128 * sizes.s as u128)).max(0);
                    let _ = writeln!(
                        out,
                        "n = {n}: M = {} ({} bits), S = {} ({} bits), |T| = {}, L = {l}",
                        sizes.m, sizes.m_bits, sizes.s, sizes.s_bits, sizes.typical_count
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "n = {n}: infeasible ({e})");
                }
            },
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_columns_and_empty_fields() {
        let row = ResultRow {
            scenario: "rate".into(),
            n: 1,
            seed: 0,
            rate_bits: Some(1.0),
            ..Default::default()
        };
        let line = row.to_csv_line();
        assert_eq!(line.matches(',').count(), CSV_HEADER.matches(',').count());
        assert!(line.starts_with("rate,1,0,1.00000000e0,,,"));
    }

    #[test]
    fn metric_formatting_is_nine_significant_digits() {
        assert_eq!(fmt_metric(0.2780719051126377), "2.78071905e-1");
        assert_eq!(fmt_metric(1.0), "1.00000000e0");
        assert_eq!(fmt_metric(0.0), "0.00000000e0");
    }

    #[test]
    fn rate_row_for_identity_channel() {
        let cfg = ExperimentConfig::parse("scenario = rate\nchannel.kind = identity\nn_list = 1\n")
            .unwrap();
        let report = run_experiment(&cfg);
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.warnings, 0);
        assert!((report.rows[0].rate_bits.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_row_carries_error_and_run_continues() {
        let cfg = ExperimentConfig::parse(
            "scenario = entdist\nsource.kind = two_pure\nsource.overlap_e = 0.95\nn_list = 4,12\nrate_backoff = 0.05\n",
        )
        .unwrap();
        let report = run_experiment(&cfg);
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[0].error.is_none());
        assert!(report.rows[1].error.is_some());
        assert_eq!(report.warnings, 1);
        // error text must not break the CSV column count
        let line = report.rows[1].to_csv_line();
        assert_eq!(line.matches(',').count(), CSV_HEADER.matches(',').count());
    }
}

//! Configuration files, presets and result serialization.
//!
//! Configs are TOML with two sections. Keys follow the usual symbols of the
//! model (`L`, `N`, `K`, `b_l`, ...); every key is optional and unknown keys
//! are rejected.
//!
//! ```toml
//! [network]
//! L = 5
//! b_l = 3          # or one entry per AP: [3, 3, 4, 4, 2]
//! p_db = -10.0
//! corr_model = "exponential"
//! rho = 0.5
//!
//! [plan]
//! kind = "nmse_vs_bits"
//! bits = [1, 2, 3, 4, 5, 6, 7, 8]
//! n_placements = 100
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{CorrelationModel, NetworkConfig, ProcessingOption};
use crate::error::{Error, Result};
use crate::harness::{build_id, ExperimentKind, ExperimentPlan, SweepResult};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    network: NetworkSection,
    #[serde(default)]
    plan: PlanSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum BitsValue {
    Uniform(u32),
    PerAp(Vec<u32>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct NetworkSection {
    L: Option<usize>,
    N: Option<usize>,
    K: Option<usize>,
    p_db: Option<f64>,
    noise_dbm: Option<f64>,
    noise_figure_db: Option<f64>,
    b_l: Option<BitsValue>,
    alpha: Option<f64>,
    area_side: Option<f64>,
    d_min: Option<f64>,
    B: Option<f64>,
    B_c: Option<f64>,
    T_c: Option<f64>,
    carrier_hz: Option<f64>,
    tau_d: Option<u64>,
    b_c: Option<u32>,
    b_e: Option<u64>,
    corr_model: Option<String>,
    rho: Option<f64>,
    option: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanSection {
    kind: Option<ExperimentKind>,
    bits: Option<Vec<u32>>,
    powers_db: Option<Vec<f64>>,
    n_placements: Option<usize>,
    n_blocks_per_placement: Option<usize>,
    n_samples_per_block: Option<usize>,
    options: Option<Vec<String>>,
}

const NETWORK_KEYS: &[&str] = &[
    "L",
    "N",
    "K",
    "p_db",
    "noise_dbm",
    "noise_figure_db",
    "b_l",
    "alpha",
    "area_side",
    "d_min",
    "B",
    "B_c",
    "T_c",
    "carrier_hz",
    "tau_d",
    "b_c",
    "b_e",
    "corr_model",
    "rho",
    "option",
    "seed",
];
const PLAN_KEYS: &[&str] = &[
    "kind",
    "bits",
    "powers_db",
    "n_placements",
    "n_blocks_per_placement",
    "n_samples_per_block",
    "options",
];

fn line_of(text: &str, err: &toml::de::Error) -> usize {
    err.span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0)
}

/// Applies one `key=value` override. `key` is `section.key` or a bare key
/// that belongs to exactly one section. The value is read as a TOML value,
/// falling back to a plain string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let value = value.trim();
    let (section, name) = match key.split_once('.') {
        Some((s, k)) => (s.to_string(), k.to_string()),
        None if NETWORK_KEYS.contains(&key) => ("network".to_string(), key.to_string()),
        None if PLAN_KEYS.contains(&key) => ("plan".to_string(), key.to_string()),
        None => return Err(Error::Config(format!("unknown override key `{key}`"))),
    };
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let entry = table
        .entry(section.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(name, parsed);
            Ok(())
        }
        _ => Err(Error::Config(format!("`{section}` is not a section"))),
    }
}

fn parse_options(names: &[String]) -> Result<Vec<ProcessingOption>> {
    names.iter().map(|n| n.parse()).collect()
}

/// Parses config text plus `key=value` overrides into a validated scenario
/// and plan. Missing keys take their defaults.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<(NetworkConfig, ExperimentPlan)> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        line: line_of(text, &e),
        message: e.message().to_string(),
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let merged;
    let source = if overrides.is_empty() {
        text
    } else {
        merged = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        merged.as_str()
    };
    let file: ConfigFile = toml::from_str(source).map_err(|e| {
        if overrides.is_empty() {
            Error::Parse {
                line: line_of(text, &e),
                message: e.message().to_string(),
            }
        } else {
            // Line numbers would point into the merged document, not the file.
            Error::Config(format!("with overrides applied: {e}"))
        }
    })?;
    resolve(file)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<(NetworkConfig, ExperimentPlan)> {
    let text = fs::read_to_string(path)?;
    parse_config_str(&text, overrides)
}

fn resolve(file: ConfigFile) -> Result<(NetworkConfig, ExperimentPlan)> {
    let n = file.network;
    let d = NetworkConfig::default();
    let num_aps = n.L.unwrap_or(d.num_aps);
    let users = n.K.unwrap_or(d.users);
    let combiner_bits = n.b_c.unwrap_or(d.combiner_bits);
    let bits = match n.b_l {
        None => vec![d.bits[0]; num_aps],
        Some(BitsValue::Uniform(b)) => vec![b; num_aps],
        Some(BitsValue::PerAp(v)) => v,
    };
    let correlation = match n.corr_model.as_deref().unwrap_or("uncorrelated") {
        "uncorrelated" => {
            if n.rho.is_some() {
                return Err(Error::Config(
                    "rho is only meaningful with corr_model = \"exponential\"".into(),
                ));
            }
            CorrelationModel::Uncorrelated
        }
        "exponential" => CorrelationModel::Exponential {
            rho: n
                .rho
                .ok_or_else(|| Error::Config("corr_model = \"exponential\" needs rho".into()))?,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown corr_model `{other}` (uncorrelated | exponential)"
            )))
        }
    };
    let option = match n.option {
        Some(s) => s.parse()?,
        None => d.option,
    };
    let cfg = NetworkConfig {
        num_aps,
        antennas: n.N.unwrap_or(d.antennas),
        users,
        power_db: n.p_db.unwrap_or(d.power_db),
        noise_dbm: n.noise_dbm.unwrap_or(d.noise_dbm),
        noise_figure_db: n.noise_figure_db.unwrap_or(d.noise_figure_db),
        bits,
        alpha: n.alpha.unwrap_or(d.alpha),
        area_side: n.area_side.unwrap_or(d.area_side),
        min_distance: n.d_min.unwrap_or(d.min_distance),
        bandwidth: n.B.unwrap_or(d.bandwidth),
        coherence_bandwidth: n.B_c.unwrap_or(d.coherence_bandwidth),
        coherence_time: n.T_c.unwrap_or(d.coherence_time),
        carrier_hz: n.carrier_hz.unwrap_or(d.carrier_hz),
        tau_d: n.tau_d.unwrap_or(d.tau_d),
        combiner_bits,
        covariance_bits: n
            .b_e
            .unwrap_or_else(|| crate::config::default_covariance_bits(users, combiner_bits)),
        correlation,
        option,
        seed: n.seed.unwrap_or(d.seed),
    };
    cfg.validate()?;

    let p = file.plan;
    let dp = ExperimentPlan::default();
    let kind = p.kind.unwrap_or(dp.kind);
    let (placements, samples) = match kind {
        ExperimentKind::BerVsPower => (200, 500),
        ExperimentKind::NoiseCdf | ExperimentKind::NoiseCov => (1, 110_000),
        _ => (dp.n_placements, dp.n_samples_per_block),
    };
    let plan = ExperimentPlan {
        kind,
        bits: p.bits.unwrap_or(dp.bits),
        powers_db: p.powers_db.unwrap_or(dp.powers_db),
        n_placements: p.n_placements.unwrap_or(placements),
        n_blocks_per_placement: p.n_blocks_per_placement.unwrap_or(match kind {
            ExperimentKind::NoiseCdf | ExperimentKind::NoiseCov => 1,
            _ => dp.n_blocks_per_placement,
        }),
        n_samples_per_block: p.n_samples_per_block.unwrap_or(samples),
        options: match p.options {
            Some(names) => parse_options(&names)?,
            None => dp.options,
        },
        master_seed: cfg.seed,
    };
    plan.validate()?;
    log::info!("resolved scenario: {cfg:?}");
    log::info!("resolved plan: {plan:?}");
    Ok((cfg, plan))
}

/// Writes a fully resolved config that parses back to the same scenario and
/// plan.
pub fn to_toml(cfg: &NetworkConfig, plan: &ExperimentPlan) -> String {
    let (corr_model, rho) = match cfg.correlation {
        CorrelationModel::Uncorrelated => ("uncorrelated", None),
        CorrelationModel::Exponential { rho } => ("exponential", Some(rho)),
    };
    let file = ConfigFile {
        network: NetworkSection {
            L: Some(cfg.num_aps),
            N: Some(cfg.antennas),
            K: Some(cfg.users),
            p_db: Some(cfg.power_db),
            noise_dbm: Some(cfg.noise_dbm),
            noise_figure_db: Some(cfg.noise_figure_db),
            b_l: Some(BitsValue::PerAp(cfg.bits.clone())),
            alpha: Some(cfg.alpha),
            area_side: Some(cfg.area_side),
            d_min: Some(cfg.min_distance),
            B: Some(cfg.bandwidth),
            B_c: Some(cfg.coherence_bandwidth),
            T_c: Some(cfg.coherence_time),
            carrier_hz: Some(cfg.carrier_hz),
            tau_d: Some(cfg.tau_d),
            b_c: Some(cfg.combiner_bits),
            b_e: Some(cfg.covariance_bits),
            corr_model: Some(corr_model.to_string()),
            rho,
            option: Some(cfg.option.name().to_string()),
            seed: Some(plan.master_seed),
        },
        plan: PlanSection {
            kind: Some(plan.kind),
            bits: Some(plan.bits.clone()),
            powers_db: Some(plan.powers_db.clone()),
            n_placements: Some(plan.n_placements),
            n_blocks_per_placement: Some(plan.n_blocks_per_placement),
            n_samples_per_block: Some(plan.n_samples_per_block),
            options: Some(plan.options.iter().map(|o| o.name().to_string()).collect()),
        },
    };
    toml::to_string(&file).expect("config sections always serialize")
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: NetworkConfig,
    pub plan: ExperimentPlan,
    /// Linear values derived from the dB inputs.
    pub p_watts: f64,
    pub sigma2_watts: f64,
    pub outputs: Vec<PathBuf>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

impl RunManifest {
    pub fn new(cfg: &NetworkConfig, plan: &ExperimentPlan) -> Self {
        Self {
            tool_version: build_id(),
            config: cfg.clone(),
            plan: plan.clone(),
            p_watts: cfg.p(),
            sigma2_watts: cfg.sigma2(),
            outputs: Vec::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0.0,
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// `%.9g`-style formatting.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn metric_file(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::NmseVsBits => "nmse.csv",
        ExperimentKind::BerVsPower => "ber.csv",
        ExperimentKind::BitrateTable => "bitrate.csv",
        ExperimentKind::NoiseCdf => "noise_ks.csv",
        ExperimentKind::NoiseCov => "noise_cov.csv",
    }
}

/// The main result table: the axis, one column per series, then one `_hw`
/// column per series that carries half-widths.
fn csv_string(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("ascii fields")
}

pub fn results_csv(result: &SweepResult) -> String {
    let mut header = vec![result.axis_name.clone()];
    header.extend(result.series.iter().map(|s| s.name.clone()));
    header.extend(
        result
            .series
            .iter()
            .filter(|s| s.half_widths.is_some())
            .map(|s| format!("{}_hw", s.name)),
    );
    let rows = result.axis.iter().enumerate().map(|(i, &a)| {
        let mut row = vec![format_sig(a)];
        row.extend(result.series.iter().map(|s| format_sig(s.values[i])));
        row.extend(
            result
                .series
                .iter()
                .filter_map(|s| s.half_widths.as_ref().map(|h| format_sig(h[i]))),
        );
        row
    });
    csv_string(std::iter::once(header).chain(rows))
}

fn two_column(header: (&str, &str), x: &[f64], y: &[f64]) -> String {
    let rows = x.iter().zip(y).map(|(a, b)| vec![format_sig(*a), format_sig(*b)]);
    csv_string(std::iter::once(vec![header.0.to_string(), header.1.to_string()]).chain(rows))
}

/// Writes the CSV tables, `config.toml` (the resolved config) and
/// `manifest.json` into `out_dir`. Returns the manifest with the output list
/// filled in.
pub fn emit_results(result: &SweepResult, manifest: &RunManifest, out_dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(out_dir)?;
    let mut manifest = manifest.clone();
    let mut files: Vec<(PathBuf, String)> = vec![(out_dir.join(metric_file(result.kind)), results_csv(result))];
    if let Some(noise) = &result.noise {
        if result.kind == ExperimentKind::NoiseCdf {
            for pair in &noise.cdfs {
                let i = pair.pair + 1;
                files.push((
                    out_dir.join(format!("noise_cdf_pair{i}_re.csv")),
                    two_column(("value", "cdf"), &pair.grid, &pair.re),
                ));
                files.push((
                    out_dir.join(format!("noise_cdf_pair{i}_im.csv")),
                    two_column(("value", "cdf"), &pair.grid, &pair.im),
                ));
                files.push((
                    out_dir.join(format!("noise_cdf_pair{i}_uniform.csv")),
                    two_column(("value", "cdf"), &pair.grid, &pair.uniform),
                ));
            }
        }
    }
    files.push((out_dir.join("config.toml"), to_toml(&manifest.config, &manifest.plan)));
    for (path, body) in &files {
        fs::write(path, body)?;
    }
    manifest.outputs = files.into_iter().map(|(p, _)| p).collect();
    let manifest_path = out_dir.join("manifest.json");
    manifest.outputs.push(manifest_path.clone());
    manifest.finished_unix_s = unix_now();
    let doc = serde_json::json!({ "manifest": manifest, "result": result });
    fs::write(manifest_path, serde_json::to_string_pretty(&doc)?)?;
    Ok(manifest)
}

/// Built-in scenarios matching the paper's figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Bitrate,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "fig5" => Ok(Preset::Fig5),
            "bitrate" => Ok(Preset::Bitrate),
            _ => Err(Error::Config(format!(
                "unknown preset `{s}` (fig2 | fig3 | fig4 | fig5 | bitrate)"
            ))),
        }
    }
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Fig2, Preset::Fig3, Preset::Fig4, Preset::Fig5, Preset::Bitrate];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Bitrate => "bitrate",
        }
    }

    /// Config text of the preset; overrides apply on top.
    pub fn source(self) -> &'static str {
        match self {
            Preset::Fig2 => "[network]\nb_l = 3\np_db = -10.0\n\n[plan]\nkind = \"noise_cdf\"\nn_samples_per_block = 110000\n",
            Preset::Fig3 => "[network]\nb_l = 3\np_db = -10.0\n\n[plan]\nkind = \"noise_cov\"\nn_samples_per_block = 110000\n",
            Preset::Fig4 => {
                "[network]\np_db = -10.0\n\n[plan]\nkind = \"nmse_vs_bits\"\nbits = [1, 2, 3, 4, 5, 6, 7, 8]\nn_placements = 500\nn_blocks_per_placement = 10\nn_samples_per_block = 100\n"
            }
            Preset::Fig5 => {
                "[network]\nb_l = 3\n\n[plan]\nkind = \"ber_vs_power\"\npowers_db = [-20.0, -19.0, -18.0, -17.0, -16.0, -15.0, -14.0, -13.0, -12.0, -11.0, -10.0, -9.0, -8.0, -7.0, -6.0, -5.0, -4.0, -3.0, -2.0, -1.0, 0.0]\nn_placements = 200\nn_blocks_per_placement = 10\nn_samples_per_block = 500\n"
            }
            Preset::Bitrate => "[plan]\nkind = \"bitrate_table\"\nbits = [1, 2, 3, 4, 5, 6, 7, 8]\n",
        }
    }

    pub fn resolve(self, overrides: &[String]) -> Result<(NetworkConfig, ExperimentPlan)> {
        parse_config_str(self.source(), overrides)
    }
}

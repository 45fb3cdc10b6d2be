//! Command-line front end: flat key=value config, CSV emitters, exit codes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::{db_to_linear, MimoConfig};
use crate::dmt::{
    d_constant_power_feedback, d_perfect_feedback, d_power_controlled_feedback, d_training, g_tradeoff,
};
use crate::error::{Error, Result};
use crate::exponents::{region_probability, Region};
use crate::feedback::ThresholdRule;
use crate::mac::{estimate_mac_no_feedback, simulate_mac_point, MacConfig};
use crate::engine::derive_seed;
use crate::protocol::{
    calibrate_power_levels, estimate_diversity_slope, simulate_point, OutageEstimate, ProtocolOptions, Scenario,
    DEFAULT_PILOT_TRIALS,
};
use crate::stats::linear_fit;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;

pub const DMT_HEADER: &str = "r,scenario,diversity";
pub const SIM_HEADER: &str =
    "snr_db,scenario,trials,outages,p_hat,ci_low,ci_high,mean_fwd_power,mean_fb_power,low_confidence,slope,slope_stderr";
pub const EXPONENTS_HEADER: &str =
    "snr_db,region,trials,hits,p_hat,ci_low,ci_high,predicted_exponent,empirical_exponent,empirical_stderr";
pub const CALIBRATE_HEADER: &str = "snr_db,scenario,level,power,fb_power,pi_hat,fail_hat,low_confidence";

/// Names used in the `dmt` table, in table order.
pub const DMT_SCENARIOS: [&str; 8] = [
    "csirt",
    "no-feedback",
    "perfect-fb",
    "const-fb",
    "pc-fb",
    "const-train",
    "pc-train",
    "pc-train-fb",
];

const KNOWN_KEYS: [&str; 17] = [
    "m",
    "n",
    "l_users",
    "r",
    "k_levels",
    "epsilon",
    "n_train",
    "scenario",
    "snr_db_list",
    "trials",
    "seed",
    "parallelism",
    "const_fb_c",
    "fb_threshold",
    "fb_epsilon",
    "r_grid",
    "pilot_trials",
];

#[derive(Parser, Debug)]
#[command(name = "dmtlab", version, about = "Diversity-multiplexing tradeoff lab for MIMO links with quantized feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Analytic tradeoff curves for every scenario.
    Dmt(RunArgs),
    /// Outage sweep over SNR with slope fit.
    Sim(RunArgs),
    /// Joint exponent region probabilities against predictions.
    Exponents(RunArgs),
    /// Multiple-access sweep with common feedback.
    Mac(RunArgs),
    /// Calibrated power levels per scenario and SNR.
    Calibrate(RunArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// key=value config file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// SNR grid in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Extra config entries, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Fully resolved run description.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub m: usize,
    pub n: usize,
    pub l_users: usize,
    pub r: Vec<f64>,
    pub k_levels: usize,
    pub epsilon: f64,
    pub n_train: Option<usize>,
    pub scenarios: Vec<Scenario>,
    pub snr_db_list: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub parallelism: usize,
    pub const_fb_c: f64,
    pub threshold_rule: ThresholdRule,
    pub r_grid: Option<Vec<f64>>,
    pub pilot_trials: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            m: 1,
            n: 1,
            l_users: 1,
            r: vec![0.2],
            k_levels: 2,
            epsilon: 0.05,
            n_train: None,
            scenarios: Scenario::ALL.to_vec(),
            snr_db_list: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 100_000,
            seed: 1,
            parallelism: 1,
            const_fb_c: 1.0,
            threshold_rule: ThresholdRule::Map,
            r_grid: None,
            pilot_trials: DEFAULT_PILOT_TRIALS,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
        insert_entry(&mut out, k, v)?;
    }
    Ok(out)
}

fn insert_entry(map: &mut BTreeMap<String, String>, k: &str, v: &str) -> Result<()> {
    let key = k.trim().to_ascii_lowercase();
    if !KNOWN_KEYS.contains(&key.as_str()) {
        return Err(Error::Config(format!("unknown key '{key}'")));
    }
    if map.insert(key.clone(), v.trim().to_string()).is_some() {
        return Err(Error::Config(format!("duplicate key '{key}'")));
    }
    Ok(())
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

impl RunSpec {
    pub fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self> {
        let mut s = RunSpec::default();
        let mut fb_threshold = "map".to_string();
        let mut fb_epsilon = 0.05;
        for (k, v) in entries {
            match k.as_str() {
                "m" => s.m = num(k, v)?,
                "n" => s.n = num(k, v)?,
                "l_users" => s.l_users = num(k, v)?,
                "r" => s.r = list(k, v)?,
                "k_levels" => s.k_levels = num(k, v)?,
                "epsilon" => s.epsilon = num(k, v)?,
                "n_train" => s.n_train = Some(num(k, v)?),
                "scenario" => {
                    s.scenarios = if v.trim().eq_ignore_ascii_case("all") {
                        Scenario::ALL.to_vec()
                    } else {
                        v.split(',').map(str::parse).collect::<Result<_>>()?
                    }
                }
                "snr_db_list" => s.snr_db_list = list(k, v)?,
                "trials" => s.trials = num(k, v)?,
                "seed" => s.seed = num(k, v)?,
                "parallelism" => s.parallelism = num(k, v)?,
                "const_fb_c" => s.const_fb_c = num(k, v)?,
                "fb_threshold" => fb_threshold = v.to_ascii_lowercase(),
                "fb_epsilon" => fb_epsilon = num(k, v)?,
                "r_grid" => s.r_grid = Some(list(k, v)?),
                "pilot_trials" => s.pilot_trials = num(k, v)?,
                _ => return Err(Error::Config(format!("unknown key '{k}'"))),
            }
        }
        s.threshold_rule = match fb_threshold.as_str() {
            "map" => ThresholdRule::Map,
            "exponent" => ThresholdRule::Exponent { epsilon: fb_epsilon },
            other => return Err(Error::Config(format!("fb_threshold must be map or exponent, got '{other}'"))),
        };
        s.check()?;
        Ok(s)
    }

    /// Config file, then `--set` entries, then explicit flags.
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let mut entries = match &args.config {
            Some(path) => parse_config(&read_config(path)?)?,
            None => BTreeMap::new(),
        };
        for kv in &args.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            entries.remove(&k.trim().to_ascii_lowercase());
            insert_entry(&mut entries, k, v)?;
        }
        let mut s = Self::from_entries(&entries)?;
        if let Some(v) = &args.snr_db {
            s.snr_db_list = v.clone();
        }
        if let Some(t) = args.trials {
            s.trials = t;
        }
        if let Some(seed) = args.seed {
            s.seed = seed;
        }
        if let Some(p) = args.parallelism {
            s.parallelism = p;
        }
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("m and n must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.k_levels == 0 {
            return Err(Error::Config("k_levels must be at least 1".into()));
        }
        if self.r.is_empty() {
            return Err(Error::Config("r needs a value".into()));
        }
        if self.snr_db_list.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("snr_db_list entries must be finite".into()));
        }
        Ok(())
    }

    fn single_r(&self) -> Result<f64> {
        match self.r.as_slice() {
            [r] => Ok(*r),
            _ => Err(Error::Config(format!("expected one multiplexing gain, got {}", self.r.len()))),
        }
    }

    fn mimo(&self, snr_db: f64) -> Result<MimoConfig> {
        let cfg = MimoConfig::new(self.m, self.n, db_to_linear(snr_db), self.single_r()?)?
            .with_k_levels(self.k_levels)?
            .with_epsilon(self.epsilon)?;
        match self.n_train {
            Some(t) => cfg.with_n_train(t),
            None => Ok(cfg),
        }
    }

    fn options(&self) -> ProtocolOptions {
        ProtocolOptions {
            threshold_rule: self.threshold_rule,
            const_fb_c: self.const_fb_c,
            empty_index: None,
            pilot_trials: self.pilot_trials,
        }
    }

    fn mac(&self, snr_db: f64) -> Result<MacConfig> {
        let r_vec = match self.r.len() {
            1 => vec![self.r[0]; self.l_users],
            l if l == self.l_users => self.r.clone(),
            l => {
                return Err(Error::Config(format!(
                    "r lists {l} gains for {} users",
                    self.l_users
                )))
            }
        };
        let mut cfg = MacConfig::new(self.m, self.n, r_vec, db_to_linear(snr_db))?;
        cfg.k_levels = self.k_levels;
        cfg.epsilon = self.epsilon;
        if let Some(t) = self.n_train {
            cfg.n_train = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// CSV text plus whether any calibration was degenerate.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub csv: String,
    pub degenerate: bool,
}

pub fn cmd_dmt(spec: &RunSpec) -> Result<Report> {
    let (m, n, k) = (spec.m, spec.n, spec.k_levels);
    let r_max = m.min(n) as f64;
    let grid = spec
        .r_grid
        .clone()
        .unwrap_or_else(|| (0..=20).map(|i| r_max * i as f64 / 20.0).collect());
    let mut csv = format!("{DMT_HEADER}\n");
    for &r in &grid {
        if !(0.0..=r_max).contains(&r) {
            return Err(Error::MultiplexingOutOfRange { r, max: r_max });
        }
        let row = dmt_row(r, k, m, n)?;
        for (name, d) in DMT_SCENARIOS.iter().zip(row) {
            let _ = writeln!(csv, "{r},{name},{}", fmt_div(d));
        }
    }
    Ok(Report { csv, degenerate: false })
}

fn fmt_div(d: f64) -> String {
    if d.is_infinite() {
        "inf".into()
    } else {
        format!("{d}")
    }
}

/// One value per entry of [`DMT_SCENARIOS`]. At r = min(m,n) every finite curve is 0;
/// with one level every feedback curve collapses to G(r,1).
fn dmt_row(r: f64, k: usize, m: usize, n: usize) -> Result<[f64; 8]> {
    if r >= m.min(n) as f64 {
        return Ok([f64::INFINITY, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
    let none = g_tradeoff(r, 1.0, m, n)?;
    if k == 1 {
        return Ok([f64::INFINITY, none, none, none, none, none, none, none]);
    }
    let pc_train = d_training(r, m, n, true)?;
    Ok([
        f64::INFINITY,
        none,
        d_perfect_feedback(r, k, m, n)?,
        d_constant_power_feedback(r, k, m, n)?,
        d_power_controlled_feedback(r, k, m, n)?.0,
        d_training(r, m, n, false)?,
        pc_train,
        pc_train,
    ])
}

fn sim_row(csv: &mut String, snr_db: f64, label: &str, e: &OutageEstimate) {
    let _ = writeln!(
        csv,
        "{snr_db},{label},{},{},{},{},{},{},{},{},,",
        e.trials,
        e.outages,
        e.p_hat,
        e.ci_low,
        e.ci_high,
        e.mean_fwd_power,
        e.mean_fb_power,
        u8::from(e.low_confidence)
    );
}

fn summary_row(csv: &mut String, label: &str, points: &[OutageEstimate]) {
    let trials: u64 = points.iter().map(|p| p.trials).sum();
    let outages: u64 = points.iter().map(|p| p.outages).sum();
    let low = points.iter().any(|p| p.low_confidence);
    let (slope, stderr) = match estimate_diversity_slope(points) {
        Ok(fit) => (format!("{}", fit.slope), format!("{}", fit.stderr)),
        Err(e) => {
            eprintln!("warning: {label}: no slope fit ({e})");
            (String::new(), String::new())
        }
    };
    let _ = writeln!(
        csv,
        "summary,{label},{trials},{outages},,,,,,{},{slope},{stderr}",
        u8::from(low)
    );
}

pub fn cmd_sim(spec: &RunSpec) -> Result<Report> {
    let opts = spec.options();
    let mut csv = format!("{SIM_HEADER}\n");
    let mut degenerate = false;
    for &scenario in &spec.scenarios {
        let mut points = Vec::with_capacity(spec.snr_db_list.len());
        for &snr_db in &spec.snr_db_list {
            let cfg = spec.mimo(snr_db)?;
            let (_, est) = simulate_point(scenario, &cfg, &opts, spec.trials, spec.seed, spec.parallelism)?;
            degenerate |= est.low_confidence;
            sim_row(&mut csv, snr_db, scenario.name(), &est);
            points.push(est);
        }
        summary_row(&mut csv, scenario.name(), &points);
    }
    Ok(Report { csv, degenerate })
}

pub fn cmd_mac(spec: &RunSpec) -> Result<Report> {
    let mut csv = format!("{SIM_HEADER}\n");
    let mut degenerate = false;
    let mut baseline = Vec::new();
    let mut protocol = Vec::new();
    for &snr_db in &spec.snr_db_list {
        let cfg = spec.mac(snr_db)?;
        let seed = derive_seed(spec.seed, &[0x6261_7365, cfg.snr.to_bits()]);
        baseline.push(estimate_mac_no_feedback(&cfg, spec.trials, seed, spec.parallelism)?);
        let (_, est) = simulate_mac_point(
            &cfg,
            spec.threshold_rule,
            spec.pilot_trials,
            spec.trials,
            spec.seed,
            spec.parallelism,
        )?;
        degenerate |= est.low_confidence;
        protocol.push(est);
    }
    for (label, points) in [("MAC_NO_FEEDBACK", &baseline), ("MAC_NOISY_FB_PC", &protocol)] {
        for (snr_db, e) in spec.snr_db_list.iter().zip(points.iter()) {
            sim_row(&mut csv, *snr_db, label, e);
        }
        summary_row(&mut csv, label, points);
    }
    Ok(Report { csv, degenerate })
}

pub fn cmd_exponents(spec: &RunSpec) -> Result<Report> {
    let (m, n) = (spec.m, spec.n);
    let n_train = spec.n_train.unwrap_or(m);
    let mut csv = format!("{EXPONENTS_HEADER}\n");
    for k in 0..=m.min(n) {
        let region = Region::canonical(k, m, n)?;
        let predicted = region.predicted_exponent(m, n);
        let id = region.id();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &snr_db in &spec.snr_db_list {
            let snr = db_to_linear(snr_db);
            let seed = derive_seed(spec.seed, &[k as u64, snr.to_bits()]);
            let p = region_probability(m, n, snr, n_train, &region, spec.trials, seed, spec.parallelism)?;
            let _ = writeln!(
                csv,
                "{snr_db},{id},{},{},{},{},{},{predicted},,",
                p.trials, p.hits, p.p_hat, p.ci_low, p.ci_high
            );
            if p.hits > 0 {
                xs.push(snr.log10());
                ys.push(-p.p_hat.log10());
            }
        }
        let (slope, stderr) = match linear_fit(&xs, &ys) {
            Ok(fit) => (format!("{}", fit.slope), format!("{}", fit.stderr)),
            Err(e) => {
                eprintln!("warning: {id}: no exponent fit ({e})");
                (String::new(), String::new())
            }
        };
        let _ = writeln!(csv, "summary,{id},,,,,,{predicted},{slope},{stderr}");
    }
    Ok(Report { csv, degenerate: false })
}

pub fn cmd_calibrate(spec: &RunSpec) -> Result<Report> {
    let opts = spec.options();
    let mut csv = format!("{CALIBRATE_HEADER}\n");
    let mut degenerate = false;
    for &scenario in &spec.scenarios {
        for &snr_db in &spec.snr_db_list {
            let cfg = spec.mimo(snr_db)?;
            let seed = derive_seed(spec.seed, &[0x6361_6c69, cfg.snr.to_bits()]);
            let pol = calibrate_power_levels(scenario, &cfg, &opts, seed)?;
            degenerate |= pol.low_confidence;
            for (i, p) in pol.power.powers().iter().enumerate() {
                let q = pol.feedback.as_ref().map(|f| f.powers()[i]).unwrap_or(0.0);
                let fail = pol.fail_hat.get(i).map(|f| format!("{f}")).unwrap_or_default();
                let _ = writeln!(
                    csv,
                    "{snr_db},{scenario},{i},{p},{q},{},{fail},{}",
                    pol.pi_hat[i],
                    u8::from(pol.low_confidence)
                );
            }
        }
    }
    Ok(Report { csv, degenerate })
}

pub fn execute(command: &Command) -> Result<(Report, Option<PathBuf>)> {
    let (args, f): (&RunArgs, fn(&RunSpec) -> Result<Report>) = match command {
        Command::Dmt(a) => (a, cmd_dmt),
        Command::Sim(a) => (a, cmd_sim),
        Command::Exponents(a) => (a, cmd_exponents),
        Command::Mac(a) => (a, cmd_mac),
        Command::Calibrate(a) => (a, cmd_calibrate),
    };
    let spec = RunSpec::resolve(args)?;
    Ok((f(&spec)?, args.output.clone()))
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> u8 {
    let (report, output) = match execute(&cli.command) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let written = match output {
        Some(path) => std::fs::write(&path, &report.csv).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(report.csv.as_bytes())
                .map_err(|e| e.to_string())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return 1;
    }
    if report.degenerate {
        eprintln!("warning: some calibration saw no failures in the pilot run; powers use the 3/N floor");
        return EXIT_DEGENERATE;
    }
    EXIT_OK
}

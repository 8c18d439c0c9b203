//! TOML run configuration. Every problem in a file is reported at once.

use std::path::PathBuf;

use eit_echo::ensemble::EnsembleSpec;
use eit_echo::readout::ReadoutMode;
use eit_echo::sequences::{AreaCalibration, EchoConfig};
use eit_echo::studies::{CompensationSettings, FieldModel, ScalingModel, TemperatureModel};
use eit_echo::LambdaParams;
use serde::Serialize;
use toml::{Table, Value};

use crate::units::{self, Kind};

/// Storage-time grid for decay curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecaySettings {
    pub tau_start: f64,
    pub tau_stop: f64,
    pub points: usize,
    /// Gaussian noise added to each normalized amplitude (0 = none).
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSettings {
    pub model: FieldModel,
    pub coil_start: f64,
    pub coil_stop: f64,
    pub coil_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperatureSettings {
    pub model: TemperatureModel,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub isd_coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSettings {
    pub model: ScalingModel,
    pub t2_min: f64,
    pub t2_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub physics: LambdaParams,
    pub ensemble: EnsembleSpec,
    pub sequence: EchoConfig,
    pub readout: ReadoutMode,
    pub decay: DecaySettings,
    pub field: FieldSettings,
    pub compensation: CompensationSettings,
    pub temperature: TemperatureSettings,
    pub scaling: ScalingSettings,
    pub qst_noise: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            physics: LambdaParams::material(),
            ensemble: EnsembleSpec::single(),
            sequence: EchoConfig::default(),
            readout: ReadoutMode::Beat,
            decay: DecaySettings {
                tau_start: 10e-6,
                tau_stop: 1500e-6,
                points: 30,
                noise: 0.0,
            },
            field: FieldSettings {
                model: FieldModel::default(),
                coil_start: -50e-6,
                coil_stop: 50e-6,
                coil_count: 20,
            },
            compensation: CompensationSettings::default(),
            temperature: TemperatureSettings {
                model: TemperatureModel::default(),
                start: 4.0,
                stop: 12.0,
                count: 17,
                isd_coupling: 0.0,
            },
            scaling: ScalingSettings {
                model: ScalingModel::default(),
                t2_min: 100e-12,
                t2_max: 100e-6,
                count: 19,
            },
            qst_noise: 0.0,
            seed: 0,
            threads: None,
            out: None,
        }
    }
}

/// Reference text for `--help`: every section and key with its default.
pub const KEYS_HELP: &str = "\
CONFIGURATION (TOML; every physical value needs a unit suffix)

[run]
  seed = 0                      RNG seed for measurement noise
  threads = 4                   worker threads (default: all cores)
  out = \"results\"               output directory

[physics]                       defaults: material lifetimes
  model = \"material\"            \"material\" or \"closed\" (no loss)
  t1_opt = \"164us\"              excited-state lifetime (\"inf\" allowed)
  t2_opt = \"106us\"              optical coherence time
  t2_spin = \"500us\"             spin coherence time (\"inf\" allowed)
  gamma_opt_decay = \"6.1e3/s\"   rates override the lifetimes above
  gamma_opt_deph = \"0/s\"
  gamma_spin_deph = \"2000/s\"
  branch0 = 0.5                 fraction of excited decay into |0>
  delta_opt = \"0Hz\"             one-photon detuning (Hz or rad/s)
  delta_spin = \"0Hz\"            two-photon detuning (Hz or rad/s)

[ensemble]                      omit for a single resonant member
  spin_fwhm = \"30kHz\"           required when the section is present
  optical_fwhm = \"170kHz\"
  n_optical = 11                odd grid sizes
  n_spin = 11
  zeeman_split = \"6kHz\"         two equal branches at +-split/2

[sequence]
  tau = \"20us\"                  init start to readout start
  init_duration = \"2us\"
  rephase_duration = \"2us\"
  readout_duration = \"2us\"
  rabi = \"1MHz\"                 fixed Rabi frequency (default: from areas)
  readout_rabi = \"1MHz\"
  init_area = \"pi\"
  rephase_area = \"2pi\"
  calibration = \"bright\"        areas on the \"bright\" or \"bare\" coupling
  splitting = \"10.2MHz\"         hyperfine beat frequency
  init_phase_offset = \"0deg\"
  rephase_phase_shift = \"0deg\"
  include_rephase = true
  sample_dt = \"10ns\"
  refine = 1                    integrator substeps per output step
  readout = \"beat\"              \"beat\" or \"proxy\"

[decay]                         storage-time grid of decay curves
  tau_start = \"10us\"
  tau_stop = \"1500us\"
  points = 30
  noise = 0.0                   Gaussian noise on normalized amplitudes

[field]                         field-sweep and compensate
  g_factor = \"12kHz/100uT\"
  ambient = [\"0uT\", \"0uT\", \"0uT\"]
  compensation = [\"0uT\", \"0uT\", \"0uT\"]
  coil_start = \"-50uT\"          vertical coil values of the sweep
  coil_stop = \"50uT\"
  coil_count = 20

[compensation]
  probe_tau = \"20us\"
  range = \"150uT\"
  coarse_step = \"5uT\"
  tolerance = \"0.05uT\"
  sweeps = 2

[temperature]
  t2_opt_ref = \"10us\"
  temperature_ref = \"6K\"
  exponent = 7
  start = \"4K\"
  stop = \"12K\"
  count = 17
  isd_coupling = 0.0            extra spin dephasing per optical dephasing

[scaling]
  t_pi_ref = \"150ns\"
  t2_ref = \"100us\"
  storage = \"1.5us\"
  samples_per_pulse = 50
  t2_min = \"100ps\"              log-spaced optical T2 grid
  t2_max = \"100us\"
  count = 19

[qst]
  noise = 0.0                   Gaussian noise on measured populations

Units: s ms us ns ps | Hz kHz MHz GHz | rad/s | /s /ms /us | T mT uT nT G |
K mK | rad deg pi | Hz/T kHz/100uT";

struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn section<'a>(&mut self, root: &'a Table, name: &str, known: &[&str]) -> Option<&'a Table> {
        let t = match root.get(name)? {
            Value::Table(t) => t,
            _ => {
                self.errors.push(format!("{name}: expected a table"));
                return None;
            }
        };
        for key in t.keys() {
            if !known.contains(&key.as_str()) {
                self.errors.push(format!("{name}.{key}: unknown key"));
            }
        }
        Some(t)
    }

    fn fail(&mut self, path: String, msg: impl std::fmt::Display) {
        self.errors.push(format!("{path}: {msg}"));
    }

    fn quantity(&mut self, t: &Table, sect: &str, key: &str, kind: Kind, slot: &mut f64) {
        if let Some(v) = t.get(key) {
            match units::parse(v, kind) {
                Ok(x) => *slot = x,
                Err(e) => self.fail(format!("{sect}.{key}"), e),
            }
        }
    }

    fn maybe_quantity(&mut self, t: &Table, sect: &str, key: &str, kind: Kind) -> Option<f64> {
        let mut x = f64::NAN;
        self.quantity(t, sect, key, kind, &mut x);
        (!x.is_nan()).then_some(x)
    }

    fn number(&mut self, t: &Table, sect: &str, key: &str, slot: &mut f64) {
        match t.get(key) {
            None => {}
            Some(Value::Float(f)) => *slot = *f,
            Some(Value::Integer(i)) => *slot = *i as f64,
            Some(_) => self.fail(format!("{sect}.{key}"), "expected a plain number"),
        }
    }

    fn count<T: TryFrom<i64>>(&mut self, t: &Table, sect: &str, key: &str, slot: &mut T) {
        match t.get(key) {
            None => {}
            Some(Value::Integer(i)) => match T::try_from(*i) {
                Ok(v) if *i >= 0 => *slot = v,
                _ => self.fail(format!("{sect}.{key}"), format!("{i} is out of range")),
            },
            Some(_) => self.fail(format!("{sect}.{key}"), "expected a non-negative integer"),
        }
    }

    fn flag(&mut self, t: &Table, sect: &str, key: &str, slot: &mut bool) {
        match t.get(key) {
            None => {}
            Some(Value::Boolean(b)) => *slot = *b,
            Some(_) => self.fail(format!("{sect}.{key}"), "expected true or false"),
        }
    }

    fn choice<'a>(
        &mut self,
        t: &Table,
        sect: &str,
        key: &str,
        options: &[&'a str],
    ) -> Option<&'a str> {
        let v = t.get(key)?;
        let s = v.as_str().unwrap_or("");
        match options.iter().find(|o| **o == s) {
            Some(o) => Some(o),
            None => {
                self.fail(
                    format!("{sect}.{key}"),
                    format!("expected one of {options:?}"),
                );
                None
            }
        }
    }

    fn vector(&mut self, t: &Table, sect: &str, key: &str, kind: Kind, slot: &mut [f64; 3]) {
        let Some(v) = t.get(key) else { return };
        let path = format!("{sect}.{key}");
        match v.as_array() {
            Some(a) if a.len() == 3 => {
                for (k, item) in a.iter().enumerate() {
                    match units::parse(item, kind) {
                        Ok(x) => slot[k] = x,
                        Err(e) => self.fail(format!("{path}[{k}]"), e),
                    }
                }
            }
            _ => self.fail(path, "expected an array of three quantities"),
        }
    }

    fn check_nonnegative(&mut self, path: &str, v: f64) {
        if !(v >= 0.0) {
            self.fail(path.to_string(), format!("{v} must be >= 0"));
        }
    }

    fn check_positive(&mut self, path: &str, v: f64) {
        if !(v > 0.0) {
            self.fail(path.to_string(), format!("{v} must be > 0"));
        }
    }

    fn check_module(&mut self, sect: &str, r: eit_echo::Result<()>) {
        if let Err(e) = r {
            self.fail(sect.to_string(), e);
        }
    }
}

fn read_physics(r: &mut Reader, root: &Table, cfg: &mut RunConfig) {
    const KEYS: &[&str] = &[
        "model",
        "t1_opt",
        "t2_opt",
        "t2_spin",
        "gamma_opt_decay",
        "gamma_opt_deph",
        "gamma_spin_deph",
        "branch0",
        "delta_opt",
        "delta_spin",
    ];
    let Some(t) = r.section(root, "physics", KEYS) else {
        return;
    };
    let s = "physics";
    let closed = r.choice(t, s, "model", &["material", "closed"]) == Some("closed");
    let (mut t1, mut t2, mut t2s) = if closed {
        (f64::INFINITY, f64::INFINITY, f64::INFINITY)
    } else {
        (164e-6, 106e-6, 500e-6)
    };
    let mut given = false;
    for (key, slot) in [
        ("t1_opt", &mut t1),
        ("t2_opt", &mut t2),
        ("t2_spin", &mut t2s),
    ] {
        if t.contains_key(key) {
            given = true;
            r.quantity(t, s, key, Kind::Time, slot);
            r.check_positive(&format!("{s}.{key}"), *slot);
        }
    }
    let mut p = if closed {
        LambdaParams::closed()
    } else {
        LambdaParams::material()
    };
    if given || closed {
        match LambdaParams::from_lifetimes(t1, t2, t2s) {
            Ok(q) => p = q,
            Err(e) => r.fail(s.into(), e),
        }
    }
    for (key, life, slot) in [
        ("gamma_opt_decay", "t1_opt", &mut p.gamma_opt_decay),
        ("gamma_opt_deph", "t2_opt", &mut p.gamma_opt_deph),
        ("gamma_spin_deph", "t2_spin", &mut p.gamma_spin_deph),
    ] {
        if t.contains_key(key) {
            if t.contains_key(life) {
                r.fail(format!("{s}.{key}"), format!("conflicts with {s}.{life}"));
            }
            r.quantity(t, s, key, Kind::Rate, slot);
            r.check_nonnegative(&format!("{s}.{key}"), *slot);
        }
    }
    r.number(t, s, "branch0", &mut p.branch0);
    if !(0.0..=1.0).contains(&p.branch0) {
        r.fail(
            format!("{s}.branch0"),
            format!("{} must be in [0, 1]", p.branch0),
        );
    }
    r.quantity(t, s, "delta_opt", Kind::Angular, &mut p.delta_opt);
    r.quantity(t, s, "delta_spin", Kind::Angular, &mut p.delta_spin);
    cfg.physics = p;
}

fn read_ensemble(r: &mut Reader, root: &Table, cfg: &mut RunConfig) {
    const KEYS: &[&str] = &[
        "spin_fwhm",
        "optical_fwhm",
        "n_optical",
        "n_spin",
        "zeeman_split",
    ];
    let Some(t) = r.section(root, "ensemble", KEYS) else {
        return;
    };
    let s = "ensemble";
    let mut e = EnsembleSpec {
        optical_fwhm: 170e3,
        spin_fwhm: 0.0,
        n_optical: 11,
        n_spin: 11,
        zeeman_branches: Vec::new(),
    };
    if !t.contains_key("spin_fwhm") {
        r.fail(
            format!("{s}.spin_fwhm"),
            "required when [ensemble] is present",
        );
    }
    r.quantity(t, s, "spin_fwhm", Kind::Frequency, &mut e.spin_fwhm);
    r.quantity(t, s, "optical_fwhm", Kind::Frequency, &mut e.optical_fwhm);
    r.count(t, s, "n_optical", &mut e.n_optical);
    r.count(t, s, "n_spin", &mut e.n_spin);
    r.check_nonnegative("ensemble.spin_fwhm", e.spin_fwhm);
    r.check_nonnegative("ensemble.optical_fwhm", e.optical_fwhm);
    if let Some(split) = r.maybe_quantity(t, s, "zeeman_split", Kind::Frequency) {
        e = e.with_split(split);
    }
    cfg.ensemble = e;
}

fn read_sequence(r: &mut Reader, root: &Table, cfg: &mut RunConfig) {
    const KEYS: &[&str] = &[
        "tau",
        "init_duration",
        "rephase_duration",
        "readout_duration",
        "rabi",
        "readout_rabi",
        "init_area",
        "rephase_area",
        "calibration",
        "splitting",
        "init_phase_offset",
        "rephase_phase_shift",
        "include_rephase",
        "sample_dt",
        "refine",
        "readout",
    ];
    let Some(t) = r.section(root, "sequence", KEYS) else {
        return;
    };
    let s = "sequence";
    let q = &mut cfg.sequence;
    r.quantity(t, s, "tau", Kind::Time, &mut q.tau);
    r.quantity(t, s, "init_duration", Kind::Time, &mut q.init_duration);
    r.quantity(
        t,
        s,
        "rephase_duration",
        Kind::Time,
        &mut q.rephase_duration,
    );
    r.quantity(
        t,
        s,
        "readout_duration",
        Kind::Time,
        &mut q.readout_duration,
    );
    if let Some(v) = r.maybe_quantity(t, s, "rabi", Kind::Angular) {
        q.rabi = Some(v);
    }
    if let Some(v) = r.maybe_quantity(t, s, "readout_rabi", Kind::Angular) {
        q.readout_rabi = Some(v);
    }
    r.quantity(t, s, "init_area", Kind::Angle, &mut q.init_area);
    r.quantity(t, s, "rephase_area", Kind::Angle, &mut q.rephase_area);
    match r.choice(t, s, "calibration", &["bright", "bare"]) {
        Some("bare") => q.calibration = AreaCalibration::Bare,
        Some(_) => q.calibration = AreaCalibration::Bright,
        None => {}
    }
    r.quantity(t, s, "splitting", Kind::Frequency, &mut q.splitting);
    r.quantity(
        t,
        s,
        "init_phase_offset",
        Kind::Angle,
        &mut q.init_phase_offset,
    );
    r.quantity(
        t,
        s,
        "rephase_phase_shift",
        Kind::Angle,
        &mut q.rephase_phase_shift,
    );
    r.flag(t, s, "include_rephase", &mut q.include_rephase);
    r.quantity(t, s, "sample_dt", Kind::Time, &mut q.sample_dt);
    r.count(t, s, "refine", &mut q.refine);
    match r.choice(t, s, "readout", &["beat", "proxy"]) {
        Some("proxy") => cfg.readout = ReadoutMode::Proxy,
        Some(_) => cfg.readout = ReadoutMode::Beat,
        None => {}
    }
}

fn read_studies(r: &mut Reader, root: &Table, cfg: &mut RunConfig) {
    if let Some(t) = r.section(root, "decay", &["tau_start", "tau_stop", "points", "noise"]) {
        let d = &mut cfg.decay;
        r.quantity(t, "decay", "tau_start", Kind::Time, &mut d.tau_start);
        r.quantity(t, "decay", "tau_stop", Kind::Time, &mut d.tau_stop);
        r.count(t, "decay", "points", &mut d.points);
        r.number(t, "decay", "noise", &mut d.noise);
    }
    let d = cfg.decay.clone();
    r.check_positive("decay.tau_start", d.tau_start);
    if !(d.tau_stop > d.tau_start) {
        r.fail("decay.tau_stop".into(), "must exceed decay.tau_start");
    }
    if d.points < 5 {
        r.fail(
            "decay.points".into(),
            format!("{} is fewer than the 5 a fit needs", d.points),
        );
    }
    r.check_nonnegative("decay.noise", d.noise);

    const FIELD: &[&str] = &[
        "g_factor",
        "ambient",
        "compensation",
        "coil_start",
        "coil_stop",
        "coil_count",
    ];
    if let Some(t) = r.section(root, "field", FIELD) {
        let f = &mut cfg.field;
        r.quantity(t, "field", "g_factor", Kind::GFactor, &mut f.model.g_factor);
        r.vector(t, "field", "ambient", Kind::Field, &mut f.model.field);
        r.vector(
            t,
            "field",
            "compensation",
            Kind::Field,
            &mut f.model.compensation,
        );
        r.quantity(t, "field", "coil_start", Kind::Field, &mut f.coil_start);
        r.quantity(t, "field", "coil_stop", Kind::Field, &mut f.coil_stop);
        r.count(t, "field", "coil_count", &mut f.coil_count);
    }
    r.check_module("field", cfg.field.model.validate());
    if cfg.field.coil_count == 0 {
        r.fail("field.coil_count".into(), "must be >= 1");
    }

    const COMP: &[&str] = &["probe_tau", "range", "coarse_step", "tolerance", "sweeps"];
    if let Some(t) = r.section(root, "compensation", COMP) {
        let c = &mut cfg.compensation;
        r.quantity(t, "compensation", "probe_tau", Kind::Time, &mut c.probe_tau);
        r.quantity(t, "compensation", "range", Kind::Field, &mut c.range);
        r.quantity(
            t,
            "compensation",
            "coarse_step",
            Kind::Field,
            &mut c.coarse_step,
        );
        r.quantity(
            t,
            "compensation",
            "tolerance",
            Kind::Field,
            &mut c.tolerance,
        );
        r.count(t, "compensation", "sweeps", &mut c.sweeps);
    }
    let c = cfg.compensation;
    for (k, v) in [
        ("probe_tau", c.probe_tau),
        ("range", c.range),
        ("coarse_step", c.coarse_step),
        ("tolerance", c.tolerance),
    ] {
        r.check_positive(&format!("compensation.{k}"), v);
    }

    const TEMP: &[&str] = &[
        "t2_opt_ref",
        "temperature_ref",
        "exponent",
        "start",
        "stop",
        "count",
        "isd_coupling",
    ];
    if let Some(t) = r.section(root, "temperature", TEMP) {
        let m = &mut cfg.temperature;
        r.quantity(
            t,
            "temperature",
            "t2_opt_ref",
            Kind::Time,
            &mut m.model.t2_opt_ref,
        );
        r.quantity(
            t,
            "temperature",
            "temperature_ref",
            Kind::Temperature,
            &mut m.model.temperature_ref,
        );
        r.number(t, "temperature", "exponent", &mut m.model.exponent);
        r.quantity(t, "temperature", "start", Kind::Temperature, &mut m.start);
        r.quantity(t, "temperature", "stop", Kind::Temperature, &mut m.stop);
        r.count(t, "temperature", "count", &mut m.count);
        r.number(t, "temperature", "isd_coupling", &mut m.isd_coupling);
    }
    r.check_module("temperature", cfg.temperature.model.validate());
    let m = cfg.temperature.clone();
    r.check_positive("temperature.start", m.start);
    if !(m.stop >= m.start) || m.count == 0 {
        r.fail("temperature".into(), "needs stop >= start and count >= 1");
    }
    r.check_nonnegative("temperature.isd_coupling", m.isd_coupling);

    const SCALE: &[&str] = &[
        "t_pi_ref",
        "t2_ref",
        "storage",
        "samples_per_pulse",
        "t2_min",
        "t2_max",
        "count",
    ];
    if let Some(t) = r.section(root, "scaling", SCALE) {
        let m = &mut cfg.scaling;
        r.quantity(t, "scaling", "t_pi_ref", Kind::Time, &mut m.model.t_pi_ref);
        r.quantity(t, "scaling", "t2_ref", Kind::Time, &mut m.model.t2_ref);
        r.quantity(t, "scaling", "storage", Kind::Time, &mut m.model.storage);
        r.number(
            t,
            "scaling",
            "samples_per_pulse",
            &mut m.model.samples_per_pulse,
        );
        r.quantity(t, "scaling", "t2_min", Kind::Time, &mut m.t2_min);
        r.quantity(t, "scaling", "t2_max", Kind::Time, &mut m.t2_max);
        r.count(t, "scaling", "count", &mut m.count);
    }
    r.check_module("scaling", cfg.scaling.model.validate());
    let m = cfg.scaling.clone();
    r.check_positive("scaling.t2_min", m.t2_min);
    if !(m.t2_max >= m.t2_min) || m.count == 0 {
        r.fail("scaling".into(), "needs t2_max >= t2_min and count >= 1");
    }

    if let Some(t) = r.section(root, "qst", &["noise"]) {
        r.number(t, "qst", "noise", &mut cfg.qst_noise);
    }
    r.check_nonnegative("qst.noise", cfg.qst_noise);
}

fn read_run(r: &mut Reader, root: &Table, cfg: &mut RunConfig) {
    let Some(t) = r.section(root, "run", &["seed", "threads", "out"]) else {
        return;
    };
    r.count(t, "run", "seed", &mut cfg.seed);
    if t.contains_key("threads") {
        let mut n = 0usize;
        r.count(t, "run", "threads", &mut n);
        if n == 0 {
            r.fail("run.threads".into(), "must be >= 1");
        }
        cfg.threads = Some(n);
    }
    match t.get("out") {
        None => {}
        Some(Value::String(s)) => cfg.out = Some(PathBuf::from(s)),
        Some(_) => r.fail("run.out".into(), "expected a path string"),
    }
}

/// Parses and validates a configuration, returning every error found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<String>> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| vec![format!("syntax: {}", e.message())])?;
    const SECTIONS: &[&str] = &[
        "run",
        "physics",
        "ensemble",
        "sequence",
        "decay",
        "field",
        "compensation",
        "temperature",
        "scaling",
        "qst",
    ];
    let mut r = Reader { errors: Vec::new() };
    for key in root.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            r.errors.push(format!("{key}: unknown section"));
        }
    }
    let mut cfg = RunConfig::default();
    read_run(&mut r, &root, &mut cfg);
    read_physics(&mut r, &root, &mut cfg);
    read_ensemble(&mut r, &root, &mut cfg);
    read_sequence(&mut r, &root, &mut cfg);
    read_studies(&mut r, &root, &mut cfg);
    if r.errors.is_empty() {
        r.check_module("physics", cfg.physics.validate());
        r.check_module("ensemble", cfg.ensemble.validate());
        r.check_module("sequence", cfg.sequence.validate());
        if let Err(e) = eit_echo::sequences::make_echo_sequence(&cfg.sequence) {
            r.fail("sequence".into(), e);
        }
    }
    if r.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(r.errors)
    }
}

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use eit_echo::dynamics::{PulseLabel, Trajectory};
use eit_echo::ensemble::Physics;
use eit_echo::readout::{
    echo_amplitude, fit_decay, reference_amplitude, synthesize_beat, DecayCurve, FitResult,
};
use eit_echo::sequences::{linear_taus, make_echo_sequence};
use eit_echo::studies::{
    closed_system_fidelity, compensation_search, field_sweep, scaling_study, temperature_scan,
    write_field_grid_csv, write_field_summary_csv, write_scaling_csv, write_temperature_csv,
};
use eit_echo::tomography::{qst_case, write_tomography_csv, QstCase};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    /// Bad input; exit code 1.
    Invalid(Vec<String>),
    /// The run itself failed; exit code 2.
    Runtime(String),
}

impl From<eit_echo::Error> for Failure {
    fn from(e: eit_echo::Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(vec![e.to_string()])
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Output directory plus the list of files written, for the manifest.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub out: PathBuf,
    pub written: Vec<String>,
}

impl<'a> Run<'a> {
    fn physics(&self) -> Physics {
        Physics::new(self.cfg.physics, self.cfg.ensemble.clone())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        fs::create_dir_all(&self.out)?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Outcome {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        Ok(())
    }

    fn taus(&self) -> Vec<f64> {
        let d = &self.cfg.decay;
        linear_taus(d.tau_start, d.tau_stop, d.points)
    }

    /// Adds the configured measurement noise to a curve and refits it.
    fn noisy(
        &self,
        curve: &mut DecayCurve,
        rng: &mut ChaCha8Rng,
    ) -> Option<(Option<FitResult>, Option<String>)> {
        let sigma = self.cfg.decay.noise;
        if sigma == 0.0 {
            return None;
        }
        let n = Normal::new(0.0, sigma).expect("noise validated as >= 0");
        for a in &mut curve.amplitudes {
            *a += n.sample(rng);
        }
        Some(match fit_decay(curve) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        })
    }
}

fn write_trajectory_with_segments(w: impl Write, tr: &Trajectory) -> eit_echo::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "segment", "x", "y", "z", "pe"])?;
    for (k, (t, rho)) in tr.times.iter().zip(&tr.states).enumerate() {
        let label = tr
            .spans
            .iter()
            .find(|s| k > s.start_index && k <= s.end_index)
            .map(|s| match s.label {
                Some(PulseLabel::InitPiHalf) => "init",
                Some(PulseLabel::RephasePi) => "rephase",
                Some(PulseLabel::Readout) => "readout",
                Some(PulseLabel::Custom) => "pulse",
                None => "wait",
            })
            .unwrap_or("start");
        let [x, y, z] = rho.ground_block().bloch_vector();
        let pe = rho.populations()[2];
        wr.write_record([
            format!("{t:e}"),
            label.into(),
            format!("{x:e}"),
            format!("{y:e}"),
            format!("{z:e}"),
            format!("{pe:e}"),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn simulate(run: &mut Run) -> Outcome {
    let cfg = run.cfg;
    let seq = make_echo_sequence(&cfg.sequence)?;
    let tr = run.physics().run(&seq)?;
    tr.write_csv(run.create("trajectory.csv")?)?;
    let beat = synthesize_beat(&tr, cfg.sequence.splitting)?;
    beat.write_csv(run.create("beat.csv")?)?;
    let amplitude = echo_amplitude(&cfg.sequence, &run.physics(), cfg.readout)?;
    let coherence = tr
        .state_before(PulseLabel::Readout)
        .map(|r| r.ground_coherence().norm());
    let summary = json!({
        "tau": cfg.sequence.tau,
        "readout": cfg.readout,
        "echo_amplitude": amplitude,
        "reference_amplitude": reference_amplitude(&cfg.sequence, cfg.readout)?,
        "coherence_before_readout": coherence,
    });
    run.json("echo.json", &summary)?;
    println!(
        "echo amplitude at tau = {:.3e} s: {amplitude:.6}",
        cfg.sequence.tau
    );
    Ok(())
}

pub fn bloch_path(run: &mut Run) -> Outcome {
    let seq = make_echo_sequence(&run.cfg.sequence)?;
    let tr = run.physics().run(&seq)?;
    write_trajectory_with_segments(run.create("bloch_path.csv")?, &tr)?;
    println!("{} samples written", tr.len());
    Ok(())
}

pub fn qst(run: &mut Run) -> Outcome {
    let cfg = run.cfg;
    let mut rng = run.rng();
    let physics = run.physics();
    let mut results = Vec::new();
    for case in QstCase::ALL {
        let r = qst_case(case, &cfg.sequence, &physics, cfg.qst_noise, &mut rng)?;
        println!(
            "{}: fidelity {:.4} (vs target {:.4})",
            case.name(),
            r.fidelity_vs_attainable.unwrap_or(f64::NAN),
            r.fidelity_vs_target
        );
        results.push((case.name().to_string(), r));
    }
    write_tomography_csv(run.create("qst.csv")?, &results)?;
    let records: Vec<serde_json::Value> = results
        .iter()
        .map(|(label, r)| {
            r.to_json(label)
                .map(|s| serde_json::from_str(&s).expect("valid json"))
        })
        .collect::<eit_echo::Result<_>>()?;
    run.json("qst.json", &records)
}

pub fn field(run: &mut Run) -> Outcome {
    let cfg = run.cfg;
    let f = &cfg.field;
    let coils = linear_taus(f.coil_start, f.coil_stop, f.coil_count);
    let mut points = field_sweep(
        &coils,
        &f.model,
        &cfg.sequence,
        &run.taus(),
        &run.physics(),
        cfg.readout,
    )?;
    let mut rng = run.rng();
    for p in &mut points {
        if let Some((fit, err)) = run.noisy(&mut p.curve, &mut rng) {
            p.fit = fit;
            p.fit_error = err;
        }
    }
    write_field_grid_csv(run.create("field_sweep.csv")?, &points)?;
    write_field_summary_csv(run.create("field_summary.csv")?, &points)?;
    for p in &points {
        match &p.fit {
            Some(fit) => println!(
                "coil {:+8.2} uT  splitting {:8.1} Hz  T2 {:8.1} us",
                p.coil_field * 1e6,
                p.splitting,
                fit.t2 * 1e6
            ),
            None => println!("coil {:+8.2} uT  fit failed", p.coil_field * 1e6),
        }
    }
    Ok(())
}

pub fn temperature(run: &mut Run) -> Outcome {
    let cfg = run.cfg;
    let t = &cfg.temperature;
    let temps = linear_taus(t.start, t.stop, t.count);
    let mut scan = temperature_scan(
        &temps,
        &t.model,
        &cfg.sequence,
        &run.taus(),
        &run.physics(),
        cfg.readout,
        t.isd_coupling,
    )?;
    let mut rng = run.rng();
    for p in &mut scan.points {
        if let Some((fit, err)) = run.noisy(&mut p.curve, &mut rng) {
            p.fit = fit;
            p.fit_error = err;
        }
    }
    write_temperature_csv(run.create("temperature.csv")?, &scan)?;
    run.json(
        "temperature_summary.json",
        &json!({ "knee": scan.knee, "crossing": scan.crossing }),
    )?;
    match scan.knee {
        Some(k) => println!(
            "amplitude knee {k:.2} K; optical T2 equals the pulse at {:.2} K",
            scan.crossing
        ),
        None => println!(
            "no knee in range; optical T2 equals the pulse at {:.2} K",
            scan.crossing
        ),
    }
    Ok(())
}

pub fn scaling(run: &mut Run) -> Outcome {
    let cfg = run.cfg;
    let s = &cfg.scaling;
    let t2s: Vec<f64> = if s.count == 1 {
        vec![s.t2_min]
    } else {
        let (a, b) = (s.t2_min.ln(), s.t2_max.ln());
        (0..s.count)
            .map(|k| (a + (b - a) * k as f64 / (s.count - 1) as f64).exp())
            .collect()
    };
    let physics = run.physics();
    let points = scaling_study(&t2s, &s.model, &cfg.sequence, &physics)?;
    let closed = closed_system_fidelity(&s.model, &cfg.sequence, &physics)?;
    write_scaling_csv(run.create("scaling.csv")?, &points)?;
    run.json(
        "scaling_summary.json",
        &json!({ "closed_system_fidelity": closed }),
    )?;
    println!("closed-system fidelity {closed:.4}");
    Ok(())
}

pub fn compensate(run: &mut Run) -> Outcome {
    let cfg = run.cfg;
    let r = compensation_search(
        &cfg.field.model,
        &cfg.sequence,
        &run.physics(),
        &cfg.compensation,
    )?;
    run.json("compensation.json", &r)?;
    let c = r.compensation;
    println!(
        "compensation ({:.3}, {:.3}, {:.3}) uT after {} evaluations",
        c[0] * 1e6,
        c[1] * 1e6,
        c[2] * 1e6,
        r.evaluations
    );
    if let Some(w) = &r.warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

/// Everything needed to repeat the run: the command, the verbatim config,
/// the resolved values and the outputs.
pub fn write_manifest(
    run: &mut Run,
    command: &str,
    config_path: Option<&Path>,
    config_text: &str,
    threads: usize,
) -> Outcome {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": run.cfg.seed,
        "threads": threads,
        "config_file": config_path.map(|p| p.display().to_string()),
        "config_text": config_text,
        "resolved": run.cfg,
        "outputs": run.written.clone(),
    });
    run.json("manifest.json", &manifest)
}

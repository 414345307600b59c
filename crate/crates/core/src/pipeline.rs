//! Staged end-to-end run with a cached archive in a work directory.
//!
//! Stages: params, eta, mu2, phi2, assemble, inhomo, simulate. Profiles are
//! stored as archive blocks, the later stages as JSON results tagged with
//! the inputs they were computed from; a stage whose inputs are unchanged is
//! reported as cached and skipped.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::archive::ProfileArchive;
use crate::asymptotics::AsymptoticBundle;
use crate::error::{Error, Result};
use crate::eta::solve_eta;
use crate::fit::loglog_slope;
use crate::mu2::solve_mu2;
use crate::ode::Order;
use crate::params::ModelParams;
use crate::pde::{run, Perturbation, SimConfig};
use crate::phi2::solve_h;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub n: u32,
    pub workdir: PathBuf,
    /// Relative tolerance of the `I` norm quadrature.
    pub tol: f64,
    pub inhomo_times: Vec<f64>,
    pub potential_times: Vec<f64>,
    pub sim: SimConfig,
    /// Amplitude of the perturbed companion run; zero skips it.
    pub perturb_amp: f64,
}

impl PipelineOptions {
    pub fn new(n: u32, workdir: impl Into<PathBuf>) -> Self {
        Self {
            n,
            workdir: workdir.into(),
            tol: 1e-8,
            inhomo_times: vec![1e2, 1e3, 1e4, 1e5],
            potential_times: vec![1e2, 1e3, 1e4],
            sim: SimConfig::new(n),
            perturb_amp: 1e-3,
        }
    }

    pub fn archive_path(&self) -> PathBuf {
        self.workdir.join(format!("profiles_n{}.archive", self.n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub stage: String,
    pub name: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: u32,
    pub stages: Vec<(String, StageStatus)>,
    pub metrics: Vec<Metric>,
}

impl PipelineReport {
    pub fn all_pass(&self) -> bool {
        self.metrics.iter().all(|m| m.pass)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        for (name, st) in &self.stages {
            let _ = writeln!(
                s,
                "stage {name:<9} {}",
                if *st == StageStatus::Cached {
                    "cached"
                } else {
                    "ran"
                }
            );
        }
        let _ = writeln!(
            s,
            "{:<9} {:<34} {:>15}  {:<26} status",
            "stage", "metric", "value", "target"
        );
        for m in &self.metrics {
            let _ = writeln!(
                s,
                "{:<9} {:<34} {:>15.6e}  {:<26} {}",
                m.stage,
                m.name,
                m.value,
                m.target,
                if m.pass { "PASS" } else { "FAIL" }
            );
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("stage,metric,value[1],target,status\n");
        for m in &self.metrics {
            let _ = writeln!(
                s,
                "{},{},{:?},\"{}\",{}",
                m.stage,
                m.name,
                m.value,
                m.target,
                if m.pass { "pass" } else { "fail" }
            );
        }
        s
    }
}

fn metric(stage: &str, name: &str, value: f64, target: &str, pass: bool) -> Metric {
    Metric {
        stage: stage.into(),
        name: name.into(),
        value,
        target: target.into(),
        pass: pass && value.is_finite(),
    }
}

/// Look up a cached stage result computed from `inputs`.
fn cached<'a>(a: &'a ProfileArchive, stage: &str, inputs: &Value) -> Option<&'a Value> {
    let s = a.stages.get(stage)?;
    if s.get("inputs") == Some(inputs) {
        s.get("result")
    } else {
        None
    }
}

/// Stage results computed from profiles that have just been replaced.
fn drop_downstream(a: &mut ProfileArchive) {
    for s in ["assemble", "inhomo", "simulate"] {
        a.stages.remove(s);
    }
}

fn store(a: &mut ProfileArchive, stage: &str, inputs: Value, result: Value) {
    a.stages
        .insert(stage.into(), json!({ "inputs": inputs, "result": result }));
}

pub fn pipeline(opts: &PipelineOptions) -> Result<PipelineReport> {
    let p = ModelParams::derive(opts.n)?;
    opts.sim.validate()?;
    if opts.sim.n != opts.n {
        return Err(Error::Config(format!(
            "simulation configured for n = {}, pipeline n = {}",
            opts.sim.n, opts.n
        )));
    }
    std::fs::create_dir_all(&opts.workdir)?;
    let path = opts.archive_path();
    let mut archive = match ProfileArchive::load(&path, Some(opts.n)) {
        Ok(a) if a.params == p => a,
        Ok(_) | Err(Error::Io(_)) => ProfileArchive::new(p.clone()),
        Err(e) => return Err(e),
    };
    let mut stages = Vec::new();
    let save = |a: &ProfileArchive| a.save(&path);

    let no_inputs = json!({ "n": opts.n });
    let st = if cached(&archive, "params", &no_inputs).is_some() {
        StageStatus::Cached
    } else {
        let table: serde_json::Map<String, Value> = p
            .table()
            .into_iter()
            .map(|(k, v)| (k.to_string(), Value::String(v)))
            .collect();
        store(
            &mut archive,
            "params",
            no_inputs.clone(),
            Value::Object(table),
        );
        save(&archive)?;
        StageStatus::Ran
    };
    stages.push(("params".to_string(), st));

    let st = if archive.eta.is_some() {
        StageStatus::Cached
    } else {
        archive.eta = Some(solve_eta(&p).map_err(Error::in_stage("eta"))?);
        archive.mu2 = None;
        archive.phi2 = None;
        drop_downstream(&mut archive);
        save(&archive)?;
        StageStatus::Ran
    };
    stages.push(("eta".to_string(), st));

    let st = if archive.mu2.is_some() {
        StageStatus::Cached
    } else {
        archive.mu2 = Some(solve_mu2(&p).map_err(Error::in_stage("mu2"))?);
        drop_downstream(&mut archive);
        save(&archive)?;
        StageStatus::Ran
    };
    stages.push(("mu2".to_string(), st));

    let st = if archive.phi2.is_some() {
        StageStatus::Cached
    } else {
        let eta = archive.eta.as_ref().expect("eta stage ran");
        archive.phi2 = Some(solve_h(&p, eta).map_err(Error::in_stage("phi2"))?);
        drop_downstream(&mut archive);
        save(&archive)?;
        StageStatus::Ran
    };
    stages.push(("phi2".to_string(), st));

    let bundle = archive.bundle().map_err(Error::in_stage("assemble"))?;

    let inputs = json!({ "n": opts.n, "potential_times": opts.potential_times });
    let st = if cached(&archive, "assemble", &inputs).is_some() {
        StageStatus::Cached
    } else {
        let r =
            assemble_stage(&bundle, &opts.potential_times).map_err(Error::in_stage("assemble"))?;
        store(&mut archive, "assemble", inputs, r);
        save(&archive)?;
        StageStatus::Ran
    };
    stages.push(("assemble".to_string(), st));

    let inputs = json!({ "n": opts.n, "tol": opts.tol, "times": opts.inhomo_times });
    let st = if cached(&archive, "inhomo", &inputs).is_some() {
        StageStatus::Cached
    } else {
        let mut rows = Vec::new();
        for &t in &opts.inhomo_times {
            rows.push(serde_json::to_value(
                bundle
                    .inhomo_norm(t, opts.tol)
                    .map_err(Error::in_stage("inhomo"))?,
            )?);
        }
        store(&mut archive, "inhomo", inputs, Value::Array(rows));
        save(&archive)?;
        StageStatus::Ran
    };
    stages.push(("inhomo".to_string(), st));

    let mut perturbed = opts.sim.clone();
    perturbed.perturbation = Perturbation::Bump {
        amp: opts.perturb_amp,
        width: 5.0,
    };
    let inputs = json!({ "config": opts.sim.to_text(), "perturb_amp": opts.perturb_amp });
    let st = if cached(&archive, "simulate", &inputs).is_some() {
        StageStatus::Cached
    } else {
        let sim = Error::in_stage("simulate");
        let (base, pert) = rayon::join(
            || run(&opts.sim, &bundle, None),
            || (opts.perturb_amp != 0.0).then(|| run(&perturbed, &bundle, None)),
        );
        let mut result = json!({ "unperturbed": base.map_err(&sim)? });
        if let Some(r) = pert {
            result["perturbed"] = serde_json::to_value(r.map_err(&sim)?)?;
        }
        store(&mut archive, "simulate", inputs, result);
        save(&archive)?;
        StageStatus::Ran
    };
    stages.push(("simulate".to_string(), st));

    let metrics = summarize(&bundle, &archive)?;
    Ok(PipelineReport {
        n: opts.n,
        stages,
        metrics,
    })
}

fn assemble_stage(b: &AsymptoticBundle, potential_times: &[f64]) -> Result<Value> {
    let p = &b.params;
    // Continuity of v_inf across the seams of the three profiles.
    let mut seam_jump = 0.0f64;
    for t in [1e2f64, 1e3, 1e4] {
        let seams = [
            b.eta.options.z_max * t.powf(p.alpha),
            b.phi2.options.z_max * t.powf(p.alpha),
            b.mu2.profile.x_min() * t.sqrt(),
            b.mu2.profile.x_max() * t.sqrt(),
        ];
        for x in seams {
            let d = 1e-9 * x;
            let jump = (b.v_infinity(x + d, t)? - b.v_infinity(x - d, t)?).abs();
            seam_jump = seam_jump.max(jump);
        }
    }
    let v0 = b.v_infinity(0.0, 1e4)?;
    let mut scans = Vec::new();
    for &t in potential_times {
        scans.push(serde_json::to_value(b.potential_scan(t, 2000)?)?);
    }
    let matching: Vec<f64> = [1e1, 1e2, 1e3, 1e4]
        .iter()
        .map(|&t| b.matching_defect(1.0, t))
        .collect::<Result<_>>()?;
    let z20 = b.front_reactive(20.0)? * 20f64.powf(p.delta + 2.0);
    Ok(json!({
        "seam_jump": seam_jump,
        "v0_t1e4": v0,
        "potential": scans,
        "matching_y1": matching,
        "front_reactive_z20_scaled": z20,
    }))
}

fn num(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for k in path {
        cur = match cur.get(k) {
            Some(c) => c,
            None => return f64::NAN,
        };
    }
    cur.as_f64().unwrap_or(f64::NAN)
}

fn summarize(b: &AsymptoticBundle, a: &ProfileArchive) -> Result<Vec<Metric>> {
    let p = &b.params;
    let nf = f64::from(p.n);
    let mut m = Vec::new();

    let rel = (p.lambda.powf(nf - 1.0) * (2.0 * p.kappa).powf(nf) / p.delta_delta1() - 1.0).abs();
    m.push(metric(
        "params",
        "lambda relation defect",
        rel,
        "< 1e-12",
        rel < 1e-12,
    ));

    let eta = &b.eta;
    let z = eta.options.z_max;
    let tail = (eta.profile.value(z) * z.powf(p.delta) / p.lambda - 1.0).abs();
    m.push(metric(
        "eta",
        "eta(z_max) z_max^delta / lambda - 1",
        tail,
        "< 1e-2",
        tail < 1e-2,
    ));
    let e2 = (eta.eta2_fit / (0.5 * eta.eta0.powi(2 * p.n as i32)) - 1.0).abs();
    m.push(metric(
        "eta",
        "eta2 fit rel. error",
        e2,
        "< 1e-4",
        e2 < 1e-4,
    ));
    let mono = eta
        .profile
        .nodes()
        .iter()
        .all(|nd| nd.f > 0.0 && nd.df < 0.0);
    m.push(metric(
        "eta",
        "eta > 0, eta' < 0 at nodes",
        f64::from(u8::from(mono)),
        "1",
        mono,
    ));

    let mu = &b.mu2;
    let dm = (mu.m_at_x_min - p.lambda).abs() / p.lambda;
    m.push(metric(
        "mu2",
        "|m(1e-3) - lambda| / lambda",
        dm,
        "< 1e-3",
        dm < 1e-3,
    ));
    let l0 = (mu.lambda0_fit / p.lambda0 - 1.0).abs();
    m.push(metric(
        "mu2",
        "lambda0 fit rel. error",
        l0,
        "< 1e-2",
        l0 < 1e-2,
    ));
    let consts: Vec<f64> = (0..=20)
        .map(|k| {
            let y = 6.0 + 0.1 * f64::from(k);
            mu.mu2(y, Order::Value)
                .map(|v| v * (0.25 * y * y).exp() * y.powf(1.0 - 2.0 * p.epsilon))
        })
        .collect::<Result<_>>()?;
    let hi = consts.iter().cloned().fold(f64::MIN, f64::max);
    let lo = consts.iter().cloned().fold(f64::MAX, f64::min);
    let var = (hi - lo) / hi;
    m.push(metric(
        "mu2",
        "Gaussian tail constant variation",
        var,
        "< 5e-2",
        var < 0.05,
    ));

    let h = &b.phi2;
    let r = &h.report;
    m.push(metric(
        "phi2",
        "shooting vs VP sup-norm",
        r.agreement,
        "< 1e-3",
        r.agreement < 1e-3,
    ));
    m.push(metric(
        "phi2",
        "Wronskian defect (scaled)",
        r.wronskian_error,
        "< 1e-6",
        r.wronskian_error < 1e-6,
    ));
    let hz = h.profile.value(h.options.z_max) * h.options.z_max.powf(p.delta - 2.0);
    let ht = (hz / p.lambda0 - 1.0).abs();
    m.push(metric(
        "phi2",
        "h(z_max) z_max^(delta-2) / lambda0 - 1",
        ht,
        "< 1e-2",
        ht < 1e-2,
    ));
    let target = -(p.delta_prime - 2.0);
    let ok = (h.tail_slope - target).abs() <= 0.05;
    m.push(metric(
        "phi2",
        "tail exponent",
        h.tail_slope,
        &format!("{target:.4} +- 0.05"),
        ok,
    ));

    let asm = a
        .stages
        .get("assemble")
        .and_then(|s| s.get("result"))
        .cloned()
        .unwrap_or(Value::Null);
    let sj = num(&asm, &["seam_jump"]);
    m.push(metric(
        "assemble",
        "v_inf seam jump",
        sj,
        "< 1e-8",
        sj < 1e-8,
    ));
    if let Some(scans) = asm.get("potential").and_then(Value::as_array) {
        let first = scans.first().map(|s| num(s, &["min"])).unwrap_or(f64::NAN);
        let t0 = scans.first().map(|s| num(s, &["t"])).unwrap_or(f64::NAN);
        let rate = p.gamma * (nf - 1.0) * (p.delta_prime + 1.0);
        for s in scans {
            let t = num(s, &["t"]);
            let v = num(s, &["min"]);
            if p.n % 2 == 1 {
                m.push(metric(
                    "assemble",
                    &format!("min V at t={t:e}"),
                    v,
                    ">= 0",
                    v >= 0.0,
                ));
            } else {
                let floor = -10.0 * first.abs() * (t / t0).powf(-rate);
                m.push(metric(
                    "assemble",
                    &format!("min V at t={t:e}"),
                    v,
                    &format!(">= {floor:.3e}"),
                    v >= floor,
                ));
            }
        }
    }
    if let Some(mt) = asm.get("matching_y1").and_then(Value::as_array) {
        let vals: Vec<f64> = mt.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect();
        let mono = vals.windows(2).all(|w| w[1] < w[0]);
        m.push(metric(
            "assemble",
            "matching defect decreasing",
            vals.last().copied().unwrap_or(f64::NAN),
            "monotone",
            mono,
        ));
    }

    if let Some(rows) = a
        .stages
        .get("inhomo")
        .and_then(|s| s.get("result"))
        .and_then(Value::as_array)
    {
        let ts: Vec<f64> = rows.iter().map(|r| num(r, &["t"])).collect();
        let ns: Vec<f64> = rows.iter().map(|r| num(r, &["value"])).collect();
        let target = -(1.0 + 4.0 * p.gamma);
        let slope = loglog_slope(&ts, &ns).map(|f| f.slope).unwrap_or(f64::NAN);
        m.push(metric(
            "inhomo",
            "slope of log N(t)",
            slope,
            &format!("{target:.4} +- 0.1"),
            (slope - target).abs() <= 0.1,
        ));
    }

    if let Some(sim) = a.stages.get("simulate").and_then(|s| s.get("result")) {
        for key in ["unperturbed", "perturbed"] {
            let Some(rep) = sim.get(key) else { continue };
            let slope = num(rep, &["sup_slope", "slope"]);
            let bound = -4.0 * p.gamma + 0.15;
            m.push(metric(
                "simulate",
                &format!("{key}: sup-norm slope"),
                slope,
                &format!("<= {bound:.4}"),
                slope <= bound,
            ));
            let f0 = num(rep, &["f0_scaled"]) / num(rep, &["eta2"]) - 1.0;
            m.push(metric(
                "simulate",
                &format!("{key}: F(0) t^(2n gamma)/eta2 - 1"),
                f0,
                "|.| < 2e-2",
                f0.abs() < 0.02,
            ));
            let even = rep
                .get("checkpoints")
                .and_then(Value::as_array)
                .map(|cs| cs.iter().map(|c| num(c, &["evenness"])).fold(0.0, f64::max))
                .unwrap_or(f64::NAN);
            m.push(metric(
                "simulate",
                &format!("{key}: evenness error"),
                even,
                "< 1e-10",
                even < 1e-10,
            ));
        }
    }
    Ok(m)
}

/// Exit code for a pipeline outcome: 0 ok, 2 configuration error, 3
/// numerical failure, 4 failed acceptance metric.
pub fn exit_code(r: &Result<PipelineReport>) -> i32 {
    match r {
        Ok(rep) if rep.all_pass() => 0,
        Ok(_) => 4,
        Err(e) if e.is_config() => 2,
        Err(_) => 3,
    }
}

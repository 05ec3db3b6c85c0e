//! One invocation: pick the stages a command needs, run them, write the
//! data files, the report and the timings.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Command, ConfigError, RunConfig};
use crate::dynamics::{BranchSystem, MapSpec, TailPeriodicWord};
use crate::example2::{self, Example2Report};
use crate::kernel::{default_probes, dual_potential, involution_kernel, scaling_function, Gauge};
use crate::maxergodic::{deviation_istar, lyndon_words};
use crate::output::{columns, csv, to_json, Cell, OutDir};
use crate::pipeline::{finalize_verdicts, Pipeline, PipelineError, Residual, Stage, Status, Verdict};
use crate::piecewise::TIE_TOL;
use crate::potential::Potential;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

pub const ENV_OUT_DIR: &str = "ERGOTRANS_OUT_DIR";

pub fn stages_for(cmd: Command) -> &'static [Stage] {
    use Stage::*;
    match cmd {
        Command::Eigen => &[Eigen],
        Command::Kernel => &[Eigen, Kernel],
        Command::Dual => &[Eigen, Kernel, Orbit, Dual],
        Command::Subaction => &[Eigen, Orbit, Subaction, Kernel, Dual, Candidates],
        Command::Betascan => &[Eigen, Orbit, Subaction, Betascan],
        Command::Turning => &[Eigen, Pairs, Twist, Turning],
        Command::Pieces => &[Eigen, Pieces, Twist, Betascan],
        // The perturbed potential is too sharp for the default eigen grid.
        Command::Example2 => &[Pieces, Twist],
        Command::All => &[Eigen, Kernel, Orbit, Subaction, Dual, Candidates, Pairs, Twist, Pieces, Betascan],
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Io(_) => EXIT_NUMERIC,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub crate_version: &'static str,
    pub command: String,
    pub map: MapSpec,
    pub potential: crate::potential::PotentialSpec,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub skip: usize,
    pub info: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub provenance: Provenance,
    pub exit_code: i32,
    pub error: Option<PipelineError>,
    pub summary: Summary,
    pub residuals: Vec<Residual>,
    pub verdicts: Vec<Verdict>,
    pub files: Vec<String>,
}

impl Report {
    pub fn verdict(&self, id: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }
}

pub struct Outcome {
    pub report: Report,
    pub out_dir: PathBuf,
    pub pipeline: Pipeline,
    pub example2: Option<Example2Report>,
}

/// `--out` beats the environment variable, which beats the config file.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(ENV_OUT_DIR).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"))
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Validates, runs and writes everything into `out`. A FAILED marker is left
/// in `out` whenever the exit code is nonzero.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Outcome, RunError> {
    let res = execute_inner(cfg, out);
    let code = match &res {
        Ok(o) => o.report.exit_code,
        Err(e) => e.exit_code(),
    };
    let marker = out.join("FAILED");
    if code != EXIT_OK {
        let msg = match &res {
            Ok(o) => format!("exit {code}\n{}\n", o.report.error.as_ref().map_or("invariant failure".into(), |e| e.to_string())),
            Err(e) => format!("exit {code}\n{e}\n"),
        };
        if std::fs::create_dir_all(out).is_ok() {
            let _ = std::fs::write(&marker, msg);
        }
    } else if marker.exists() {
        let _ = std::fs::remove_file(&marker);
    }
    res
}

fn execute_inner(cfg: &RunConfig, out: &Path) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let sys = BranchSystem::from_spec(&cfg.map).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let pot = Potential::new(&cfg.potential, &sys).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut dir = OutDir::create(out)?;
    dir.write("config_used.toml", &cfg.to_toml())?;

    let mut error = None;
    let mut ex2 = None;
    let mut timings: Vec<(String, f64)> = vec![];
    let pipeline = if cfg.command == Command::Example2 {
        match example2::run(&cfg.example2, &cfg.numerics, cfg.seed) {
            Ok((mut p, rep)) => {
                if let Err(e) = p.ensure_all(stages_for(Command::Example2)) {
                    error = Some(e);
                }
                ex2 = Some(rep);
                p
            }
            Err(e) => {
                error = Some(e);
                let e2pot = Potential::new(&example2::potential_spec(&cfg.example2, 0.0), &sys)
                    .map_err(|e| ConfigError::Parse(e.to_string()))?;
                Pipeline::new(sys.clone(), e2pot, cfg.numerics.clone(), cfg.seed)
            }
        }
    } else {
        let mut p = Pipeline::new(sys.clone(), pot, cfg.numerics.clone(), cfg.seed);
        if let Err(e) = p.ensure_all(stages_for(cfg.command)) {
            error = Some(e);
        }
        if cfg.command == Command::All && error.is_none() && cfg.map == MapSpec::Doubling {
            let t = std::time::Instant::now();
            match example2::run(&cfg.example2, &cfg.numerics, cfg.seed) {
                Ok((_, rep)) => ex2 = Some(rep),
                Err(e) => error = Some(e),
            }
            timings.push(("example2".into(), t.elapsed().as_secs_f64()));
        }
        p
    };
    timings.splice(0..0, pipeline.timings.iter().cloned());

    let mut produced = pipeline.verdicts();
    if let Some(r) = &ex2 {
        produced.extend(r.verdicts());
    }
    let verdicts: Vec<Verdict> = finalize_verdicts(produced)
        .into_iter()
        .map(|v| match (&ex2, v.id.starts_with("example2.")) {
            (None, true) if v.status == Status::Skip => {
                Verdict::skip(&v.id, "example2 runs with the all command on the doubling map, or with example2")
            }
            _ => v,
        })
        .collect();

    write_files(&pipeline, ex2.as_ref(), &mut dir)?;

    let mut summary = Summary::default();
    for v in &verdicts {
        match v.status {
            Status::Pass => summary.pass += 1,
            Status::Fail => summary.fail += 1,
            Status::Skip => summary.skip += 1,
            Status::Info => summary.info += 1,
        }
    }
    let exit_code = if error.is_some() {
        EXIT_NUMERIC
    } else if summary.fail > 0 {
        EXIT_INVARIANT
    } else {
        EXIT_OK
    };
    let mut files = dir.written().to_vec();
    files.push("report.json".into());
    files.push("timings.json".into());
    let report = Report {
        provenance: Provenance {
            config_sha256: config_hash(cfg),
            seed: cfg.seed,
            crate_version: env!("CARGO_PKG_VERSION"),
            command: cfg.command.to_string(),
            map: cfg.map.clone(),
            potential: pipeline.pot.spec().clone(),
        },
        exit_code,
        error,
        summary,
        residuals: pipeline.residual_table(),
        verdicts,
        files,
    };
    dir.write("report.json", &to_json(&report))?;
    let tj: serde_json::Map<String, serde_json::Value> =
        timings.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
    dir.write("timings.json", &to_json(&tj))?;
    Ok(Outcome { report, out_dir: out.to_path_buf(), pipeline, example2: ex2 })
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlotError {
    #[error("field `{0}` has not been computed")]
    NotComputed(&'static str),
    #[error("empty grid")]
    EmptyGrid,
}

/// Columns `x V V_rec V_pieces piece_index` on the grid nodes.
pub fn plot_v(p: &Pipeline) -> Result<String, PlotError> {
    let v = &p.st.subaction.as_ref().ok_or(PlotError::NotComputed("V"))?.v;
    let pairs = p.st.pairs.as_ref().ok_or(PlotError::NotComputed("V_rec"))?;
    let pw = p.st.pieces.as_ref().ok_or(PlotError::NotComputed("pieces"))?;
    if pairs.xs.is_empty() {
        return Err(PlotError::EmptyGrid);
    }
    let rows = pairs.xs.iter().zip(pairs.v_rec.values()).map(|(&x, &vr)| {
        vec![Cell::from(x), v.eval(x).into(), vr.into(), pw.eval(x).into(), pw.piece_index(x).into()]
    });
    Ok(columns(&["x", "V", "V_rec", "V_pieces", "piece_index"], rows))
}

/// Columns `x u_plus u_minus` with the words as real codings.
pub fn plot_u(p: &Pipeline) -> Result<String, PlotError> {
    let pairs = p.st.pairs.as_ref().ok_or(PlotError::NotComputed("u"))?;
    if pairs.selections.is_empty() {
        return Err(PlotError::EmptyGrid);
    }
    let d = p.sys.d();
    let rows = pairs.selections.iter().map(|s| {
        vec![Cell::from(s.x), s.u_plus().real_coding(d).into(), s.u_minus().real_coding(d).into()]
    });
    Ok(columns(&["x", "u_plus", "u_minus"], rows))
}

fn write_files(p: &Pipeline, ex2: Option<&Example2Report>, dir: &mut OutDir) -> std::io::Result<()> {
    let st = &p.st;
    let (sys, pot, num) = (&p.sys, &p.pot, &p.num);
    if let Some(e) = &st.eigen {
        let rows = e.v.nodes().into_iter().zip(e.v.values()).map(|(x, &v)| vec![Cell::from(x), v.into()]);
        dir.write("eigen.csv", &csv(&["x", "v"], rows))?;
        let rows = e.mu.rows().map(|(w, k, m)| vec![Cell::from(w.to_string()), k.into(), m.into()]);
        dir.write("cylinders.csv", &csv(&["word", "depth", "weight"], rows))?;
    }
    let words = p.kernel_words();
    if let (Some(e), Some(_)) = (&st.eigen, &st.kernel) {
        let probes = default_probes();
        let mut rows = vec![];
        for w in &words {
            for &x in &probes {
                let row = match involution_kernel(sys, pot, e, w, x, num.kernel_depth, num.x_ref) {
                    Ok(k) => vec![w.to_string().into(), x.into(), k.delta.value.into(), k.h_gauged.value.into(), k.combined_bound.into()],
                    Err(_) => {
                        let dk = st.kernel.as_ref().unwrap().w(w, x);
                        vec![w.to_string().into(), x.into(), dk.into(), f64::NAN.into(), f64::NAN.into()]
                    }
                };
                rows.push(row);
            }
        }
        dir.write("kernel.csv", &csv(&["word", "x", "W_delta", "W_h_gauged", "err_bound"], rows))?;
    }
    if let Some(d) = &st.dual {
        let rows = words.iter().map(|w| {
            let (g, s) = match &st.eigen {
                Some(e) => (
                    dual_potential(sys, pot, Some(e), w, e.depth(), &default_probes(), Gauge::Eigen)
                        .map(|v| v.g_star)
                        .unwrap_or(f64::NAN),
                    scaling_function(sys, e, w, e.depth()).map(|s| e.alpha * s.value).unwrap_or(f64::NAN),
                ),
                None => (f64::NAN, f64::NAN),
            };
            vec![w.to_string().into(), d.a_star(w).into(), d.r_star(w).into(), g.into(), s.into()]
        });
        dir.write("dual.csv", &csv(&["word", "A_star", "R_star", "g_star", "alpha_times_s"], rows))?;
        let rows = (0..d.cells()).map(|c| {
            vec![Cell::from(d.cell_word(c).prefix(d.depth()).to_string()), d.tree_value(c).into()]
        });
        dir.write("Vstar.csv", &csv(&["prefix", "Vstar"], rows))?;
    }
    if let Some(o) = &st.orbit {
        #[derive(Serialize)]
        struct OrbitOut<'a> {
            #[serde(flatten)]
            orbit: &'a crate::maxergodic::MaximizingOrbit,
            dual_words: Vec<TailPeriodicWord>,
        }
        dir.write("orbit.json", &to_json(&OrbitOut { orbit: o, dual_words: o.dual_words() }))?;
    }
    if let Some(v) = &st.subaction {
        let rows = v.v.nodes().into_iter().zip(v.v.values()).map(|(x, &y)| vec![Cell::from(x), y.into()]);
        dir.write("V.csv", &csv(&["x", "V"], rows))?;
    }
    if let (Some(d), Some(c), Some(o)) = (&st.dual, &st.candidates, &st.orbit) {
        let mut rows = vec![];
        for e in c.entries.iter().filter(|e| e.word.preperiod().len() <= 8) {
            rows.push(vec![e.word.to_string().into(), e.i_star.into(), true.into()]);
        }
        let orbit_words = o.dual_words();
        for w in lyndon_words(sys.d(), 4) {
            let tw = TailPeriodicWord::periodic(w).expect("nonempty");
            if orbit_words.iter().any(|q| q.period() == tw.period() || tw.period().primitive_root() == q.period().primitive_root()) {
                continue;
            }
            let dv = deviation_istar(d, &tw, TIE_TOL);
            rows.push(vec![tw.to_string().into(), dv.value.into(), dv.finite.into()]);
        }
        dir.write("deviation.csv", &csv(&["word", "I_star", "finite"], rows))?;
    }
    if let Some(b) = &st.betascan {
        let rows = b.points.iter().map(|q| {
            vec![
                Cell::from(q.beta),
                q.log_alpha_over_beta.into(),
                q.sup_dist_to_v.unwrap_or(f64::NAN).into(),
                q.orbit_mass.unwrap_or(f64::NAN).into(),
            ]
        });
        dir.write("betascan.csv", &csv(&["beta", "log_alpha_over_beta", "sup_dist_to_V", "orbit_mass"], rows))?;
    }
    if let Some(pairs) = &st.pairs {
        let rows = pairs.selections.iter().map(|s| {
            vec![Cell::from(s.x), s.value.into(), s.u_plus().to_string().into(), s.u_minus().to_string().into(), s.words.len().into()]
        });
        dir.write("pairs.csv", &csv(&["x", "V_rec", "u_plus", "u_minus", "ties"], rows))?;
    }
    if let Some(tp) = &st.turning {
        dir.write("turning.json", &to_json(tp))?;
    }
    if let Some(pw) = &st.pieces {
        #[derive(Serialize)]
        struct PiecesOut<'a> {
            pieces: &'a [crate::piecewise::Piece],
            breakpoints: &'a [crate::piecewise::Breakpoint],
            offset: f64,
            orbit_periodic: bool,
            infinite_domains_expected: bool,
            continuity_residual: f64,
            calibration_residual: f64,
        }
        dir.write(
            "pieces.json",
            &to_json(&PiecesOut {
                pieces: &pw.pieces,
                breakpoints: &pw.breakpoints,
                offset: pw.offset,
                orbit_periodic: pw.orbit_periodic,
                infinite_domains_expected: pw.infinite_domains_expected,
                continuity_residual: pw.continuity_residual,
                calibration_residual: pw.calibration_residual,
            }),
        )?;
        if let Ok(s) = plot_v(p) {
            dir.write("plot_v.dat", &s)?;
        }
    }
    if let Ok(s) = plot_u(p) {
        dir.write("plot_u.dat", &s)?;
    }
    if let Some(r) = ex2 {
        dir.write("example2.json", &to_json(r))?;
    }
    Ok(())
}

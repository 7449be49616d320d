//! Seeded experiment runs: configuration, per-view metrics and output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Vector, View};
use crate::params::{derive_params, ObservationParams, SensorIntrinsics};
use crate::planner::{Planner, PlannerCaps, ViewRecord};

use super::mesh::{load_mesh, SceneMesh};
use super::metrics::CoverageTracker;
use super::plot::{plot_lines, Series};
use super::sensor::{Scene, SimSensor, SimulatedCamera};

/// Where the scene geometry comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// PLY or OBJ path, relative to the config file. Exclusive with `builtin`.
    pub mesh: Option<PathBuf>,
    /// `"sphere"` for a geodesic sphere centred at the origin.
    pub builtin: Option<String>,
    /// Uniformly rescale a loaded mesh to fit this box, m.
    pub scale_to_box: Option<[f64; 3]>,
    #[serde(default = "default_sphere_radius")]
    pub sphere_radius: f64,
    #[serde(default = "default_subdivisions")]
    pub subdivisions: u32,
}

fn default_sphere_radius() -> f64 {
    0.3
}

fn default_subdivisions() -> u32 {
    5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorProfile {
    Rgbd,
    Lidar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub profile: SensorProfile,
    /// Overrides the profile's resolution and field of view.
    pub intrinsics: Option<SensorIntrinsics>,
    pub noise_sigma: f64,
    pub max_range: Option<f64>,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            profile: SensorProfile::Rgbd,
            intrinsics: None,
            noise_sigma: 0.01,
            max_range: None,
        }
    }
}

impl SensorConfig {
    pub fn intrinsics(&self) -> SensorIntrinsics {
        self.intrinsics.unwrap_or(match self.profile {
            SensorProfile::Rgbd => SensorIntrinsics::rgbd(),
            SensorProfile::Lidar => SensorIntrinsics::lidar(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Small,
    Large,
}

/// A preset plus optional overrides. Zero leaves a value to be derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub preset: Preset,
    pub rho: Option<f64>,
    pub r: Option<f64>,
    pub d: Option<f64>,
    pub epsilon: Option<f64>,
    pub psi: Option<f64>,
    pub upsilon: Option<f64>,
    pub tau: Option<usize>,
    pub eta: Option<f64>,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Small,
            rho: None,
            r: None,
            d: None,
            epsilon: None,
            psi: None,
            upsilon: None,
            tau: None,
            eta: None,
        }
    }
}

impl ParamsConfig {
    pub fn resolve(&self, sensor: &SensorIntrinsics) -> Result<ObservationParams> {
        let mut p = match self.preset {
            Preset::Small => ObservationParams::small_model(),
            Preset::Large => ObservationParams::large_model(),
        };
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.rho, self.rho);
        set(&mut p.r, self.r);
        set(&mut p.d, self.d);
        set(&mut p.epsilon, self.epsilon);
        set(&mut p.psi, self.psi);
        set(&mut p.upsilon, self.upsilon);
        set(&mut p.eta, self.eta);
        if let Some(t) = self.tau {
            p.tau = t;
        }
        let p = derive_params(&p, sensor)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialView {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Expected number of views; the view cap is ten times this unless set in `caps`.
    pub expected_views: usize,
    /// Explicit first view. Otherwise the sensor starts outside the bounding
    /// sphere along `initial_direction`, looking at the scene centre.
    pub initial_view: Option<InitialView>,
    pub initial_direction: [f64; 3],
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            expected_views: 40,
            initial_view: None,
            initial_direction: [0.866, 0.0, 0.5],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsConfig {
    pub max_views: Option<usize>,
    pub max_adjustments_per_frontier: Option<usize>,
}

/// Top-level experiment configuration, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub caps: CapsConfig,
    #[serde(default)]
    pub run: RunConfig,
    /// Directory that relative mesh paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.scene.mesh, &self.scene.builtin) {
            (None, None) => return Err(Error::Config("scene needs a mesh path or a builtin".into())),
            (Some(_), Some(_)) => return Err(Error::Config("scene mesh and builtin are exclusive".into())),
            (None, Some(b)) if b != "sphere" => {
                return Err(Error::Config(format!("unknown builtin scene {b:?}")))
            }
            _ => {}
        }
        if self.scene.sphere_radius.is_nan() || self.scene.sphere_radius <= 0.0 {
            return Err(Error::Config("sphere_radius must be positive".into()));
        }
        if let Some(b) = self.scene.scale_to_box {
            if b.iter().any(|v| v.is_nan() || *v <= 0.0) {
                return Err(Error::Config("scale_to_box extents must be positive".into()));
            }
        }
        if !(self.sensor.noise_sigma >= 0.0 && self.sensor.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        self.sensor.intrinsics().validate()?;
        if Vector::from(self.run.initial_direction).norm() == 0.0 {
            return Err(Error::Config("initial_direction must be non-zero".into()));
        }
        self.params.resolve(&self.sensor.intrinsics())?;
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<SceneMesh> {
        let mut mesh = match (&self.scene.mesh, &self.scene.builtin) {
            (Some(path), _) => load_mesh(&self.base_dir.join(path))?,
            _ => SceneMesh::icosphere(Point::origin(), self.scene.sphere_radius, self.scene.subdivisions),
        };
        if let Some(b) = self.scene.scale_to_box {
            mesh.scale_to_box(Vector::from(b));
        }
        Ok(mesh)
    }

    pub fn caps(&self) -> PlannerCaps {
        let d = PlannerCaps::default();
        PlannerCaps {
            max_views: self
                .caps
                .max_views
                .unwrap_or(10 * self.run.expected_views.max(1)),
            max_adjustments_per_frontier: self
                .caps
                .max_adjustments_per_frontier
                .unwrap_or(d.max_adjustments_per_frontier),
        }
    }

    pub fn initial_view(&self, mesh: &SceneMesh, params: &ObservationParams) -> Result<View> {
        if let Some(v) = &self.run.initial_view {
            let o = Vector::from(v.orientation);
            if o.norm() == 0.0 {
                return Err(Error::Config("initial view orientation must be non-zero".into()));
            }
            return Ok(View::new(Point::from(v.position), nalgebra::Unit::new_normalize(o)));
        }
        let b = mesh.bounds();
        let c = b.center();
        let radius = 0.5 * b.extent().norm();
        let dir = Vector::from(self.run.initial_direction).normalize();
        let position = c + (radius + params.d) * dir;
        Ok(View::new(position, nalgebra::Unit::new_normalize(-dir)))
    }
}

/// One view of one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViewMetrics {
    pub trial: u64,
    pub view_index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub coverage: f64,
    pub cum_distance_m: f64,
    pub nbv_time_s: f64,
    pub points_total: usize,
    pub frontiers: usize,
}

/// The timing-free subset of [`ViewMetrics`], reproducible bit for bit.
#[derive(Serialize)]
struct DeterministicRow {
    trial: u64,
    view_index: usize,
    x: f64,
    y: f64,
    z: f64,
    coverage: f64,
    cum_distance_m: f64,
    points_total: usize,
    frontiers: usize,
}

impl From<&ViewMetrics> for DeterministicRow {
    fn from(m: &ViewMetrics) -> Self {
        Self {
            trial: m.trial,
            view_index: m.view_index,
            x: m.x,
            y: m.y,
            z: m.z,
            coverage: m.coverage,
            cum_distance_m: m.cum_distance_m,
            points_total: m.points_total,
            frontiers: m.frontiers,
        }
    }
}

#[derive(Serialize)]
struct EventLine<'a> {
    trial: u64,
    coverage: f64,
    #[serde(flatten)]
    record: &'a ViewRecord,
}

/// Outcome of one seeded trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial: u64,
    pub views: usize,
    pub coverage: f64,
    pub distance_m: f64,
    pub planning_time_s: f64,
    pub wall_time_s: f64,
    pub complete: bool,
    pub remaining_frontiers: usize,
    pub points_total: usize,
    pub error: String,
}

/// Everything a trial produced.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub summary: TrialSummary,
    pub views: Vec<ViewMetrics>,
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub trials: Vec<TrialResult>,
    pub failed: usize,
    pub views: Stat,
    pub coverage: Stat,
    pub distance_m: Stat,
    pub planning_time_s: Stat,
}

/// Prepared scene, sensor and parameters shared by all trials.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scene: Scene,
    pub params: ObservationParams,
    pub start: View,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let params = config.params.resolve(&config.sensor.intrinsics())?;
        let mesh = config.build_mesh()?;
        let start = config.initial_view(&mesh, &params)?;
        Ok(Self {
            scene: Scene::new(mesh),
            params,
            start,
            config,
        })
    }

    pub fn sensor(&self, seed: u64) -> Result<SimSensor> {
        let mut s = SimSensor::new(self.config.sensor.intrinsics(), self.config.sensor.noise_sigma, seed)?;
        if let Some(m) = self.config.sensor.max_range {
            s.max_range = m;
        }
        Ok(s)
    }

    /// Runs one trial. `on_view` receives each view's metrics, record and
    /// the cloud after that capture.
    pub fn run_trial<F>(&self, seed: u64, mut on_view: F) -> Result<(TrialResult, crate::cloud::ObservedCloud)>
    where
        F: FnMut(&ViewMetrics, &ViewRecord),
    {
        let started = Instant::now();
        let mut camera = SimulatedCamera::new(&self.scene, self.sensor(seed)?);
        let planner = Planner::new(self.params, self.config.caps())?;
        let mut tracker = CoverageTracker::new(self.scene.mesh().vertices(), self.params.eta);
        let mut seen = 0;
        let mut views = Vec::new();
        let result = planner.run(&mut camera, self.start, |record, cloud| {
            tracker.add(&cloud.positions()[seen..]);
            seen = cloud.len();
            let m = ViewMetrics {
                trial: seed,
                view_index: record.view_index,
                x: record.position[0],
                y: record.position[1],
                z: record.position[2],
                coverage: tracker.ratio(),
                cum_distance_m: record.cum_distance_m,
                nbv_time_s: record.nbv_time_s,
                points_total: record.points_total,
                frontiers: record.frontiers,
            };
            on_view(&m, record);
            views.push(m);
        });
        let last = views.last();
        let summary = TrialSummary {
            trial: seed,
            views: result.trajectory.len(),
            coverage: last.map_or(0.0, |m| m.coverage),
            distance_m: last.map_or(0.0, |m| m.cum_distance_m),
            planning_time_s: views.iter().map(|m| m.nbv_time_s).sum(),
            wall_time_s: started.elapsed().as_secs_f64(),
            complete: result.complete,
            remaining_frontiers: result.remaining_frontiers,
            points_total: result.cloud.len(),
            error: String::new(),
        };
        Ok((TrialResult { summary, views }, result.cloud))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs one trial per seed and writes all outputs into `out_dir`:
/// `views.csv`, `metrics.csv` (no timing), `trials.csv`, `summary.csv`,
/// `cloud_trial<seed>.ply`, `events_trial<seed>.jsonl`, `scene.ply`,
/// `resolved_config.toml` and the two coverage plots.
/// A failing trial is recorded and skipped; the call fails only if every trial fails.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, seeds: &[u64]) -> Result<ExperimentSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let exp = Experiment::new(config.clone())?;
    std::fs::create_dir_all(out_dir)?;
    exp.scene.mesh().write_ply(BufWriter::new(File::create(out_dir.join("scene.ply"))?))?;
    let mut resolved = config.clone();
    if let Some(mesh) = &config.scene.mesh {
        let full = config.base_dir.join(mesh);
        resolved.scene.mesh = Some(std::fs::canonicalize(&full).unwrap_or(full));
    }
    resolved.params = ParamsConfig {
        preset: config.params.preset,
        rho: Some(exp.params.rho),
        r: Some(exp.params.r),
        d: Some(exp.params.d),
        epsilon: Some(exp.params.epsilon),
        psi: Some(exp.params.psi),
        upsilon: Some(exp.params.upsilon),
        tau: Some(exp.params.tau),
        eta: Some(exp.params.eta),
    };
    std::fs::write(out_dir.join("resolved_config.toml"), resolved.to_toml()?)?;

    let mut views_csv = csv_writer(&out_dir.join("views.csv"))?;
    let mut metrics_csv = csv_writer(&out_dir.join("metrics.csv"))?;
    let mut trials = Vec::new();
    let mut summaries = Vec::new();
    let mut failed = 0;
    for &seed in seeds {
        let events_path = out_dir.join(format!("events_trial{seed}.jsonl"));
        let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<_> {
            let mut events = BufWriter::new(File::create(&events_path)?);
            let mut io_err = None;
            let res = exp.run_trial(seed, |m, record| {
                let line = EventLine {
                    trial: seed,
                    coverage: m.coverage,
                    record,
                };
                let r = serde_json::to_string(&line)
                    .map_err(std::io::Error::other)
                    .and_then(|s| writeln!(events, "{s}"));
                if let Err(e) = r {
                    io_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_err {
                return Err(e.into());
            }
            events.flush()?;
            Ok(res)
        }));
        let outcome = match outcome {
            Ok(r) => r,
            Err(p) => Err(Error::Config(format!("trial panicked: {}", panic_message(p)))),
        };
        match outcome {
            Ok((trial, cloud)) => {
                cloud.save_ply(&out_dir.join(format!("cloud_trial{seed}.ply")))?;
                for m in &trial.views {
                    views_csv.serialize(m)?;
                    metrics_csv.serialize(DeterministicRow::from(m))?;
                }
                log::info!(
                    "trial {seed}: {} views, coverage {:.4}, {:.3} m, complete {}",
                    trial.summary.views,
                    trial.summary.coverage,
                    trial.summary.distance_m,
                    trial.summary.complete
                );
                summaries.push(trial.summary.clone());
                trials.push(trial);
            }
            Err(e) => {
                log::error!("trial {seed} failed: {e}");
                failed += 1;
                summaries.push(TrialSummary {
                    trial: seed,
                    views: 0,
                    coverage: f64::NAN,
                    distance_m: f64::NAN,
                    planning_time_s: f64::NAN,
                    wall_time_s: f64::NAN,
                    complete: false,
                    remaining_frontiers: 0,
                    points_total: 0,
                    error: e.to_string(),
                });
            }
        }
    }
    views_csv.flush()?;
    metrics_csv.flush()?;

    let mut trials_csv = csv_writer(&out_dir.join("trials.csv"))?;
    for s in &summaries {
        trials_csv.serialize(s)?;
    }
    trials_csv.flush()?;

    let col = |f: fn(&TrialSummary) -> f64| -> Vec<f64> { trials.iter().map(|t| f(&t.summary)).collect() };
    let summary = ExperimentSummary {
        failed,
        views: Stat::of(&col(|s| s.views as f64)),
        coverage: Stat::of(&col(|s| s.coverage)),
        distance_m: Stat::of(&col(|s| s.distance_m)),
        planning_time_s: Stat::of(&col(|s| s.planning_time_s)),
        trials,
    };
    let mut summary_csv = csv_writer(&out_dir.join("summary.csv"))?;
    summary_csv.write_record(["metric", "mean", "std", "trials", "failed"])?;
    for (name, s) in [
        ("views", summary.views),
        ("coverage", summary.coverage),
        ("distance_m", summary.distance_m),
        ("planning_time_s", summary.planning_time_s),
    ] {
        summary_csv.write_record([
            name.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            summary.trials.len().to_string(),
            failed.to_string(),
        ])?;
    }
    summary_csv.flush()?;

    if summary.trials.is_empty() {
        return Err(Error::Config(format!("all {} trials failed", seeds.len())));
    }
    write_plots(out_dir, &summary.trials)?;
    Ok(summary)
}

/// Coverage-vs-distance and coverage-vs-time plots, one line per trial.
pub fn write_plots(out_dir: &Path, trials: &[TrialResult]) -> Result<()> {
    let series = |x: &dyn Fn(&[ViewMetrics], usize) -> f64| -> Vec<Series> {
        trials
            .iter()
            .map(|t| Series {
                label: format!("trial {}", t.summary.trial),
                points: (0..t.views.len())
                    .map(|i| (x(&t.views, i), 100.0 * t.views[i].coverage))
                    .collect(),
            })
            .collect()
    };
    let by_distance = series(&|v, i| v[i].cum_distance_m);
    let by_time = series(&|v, i| v[..=i].iter().map(|m| m.nbv_time_s).sum());
    plot_lines(
        &out_dir.join("coverage_vs_distance.svg"),
        "Coverage vs distance",
        "distance travelled (m)",
        "coverage (%)",
        &by_distance,
    )?;
    plot_lines(
        &out_dir.join("coverage_vs_time.svg"),
        "Coverage vs planning time",
        "cumulative planning time (s)",
        "coverage (%)",
        &by_time,
    )
}

/// Reads the `x` column (`cum_distance_m` or `nbv_time_s`, the latter
/// accumulated) and coverage from a views CSV and plots one line per trial.
pub fn plot_csv(csv_path: &Path, out: &Path, x_column: &str) -> Result<()> {
    let mut reader = csv::Reader::from_path(csv_path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{} has no {name:?} column", csv_path.display())))
    };
    let (trial_col, x_col, cov_col) = (find("trial")?, find(x_column)?, find("coverage")?);
    let cumulative = x_column == "nbv_time_s";
    let mut series: Vec<Series> = Vec::new();
    let mut acc = 0.0;
    for rec in reader.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Config(format!("bad number {:?} in {}", &rec[i], csv_path.display())))
        };
        let label = format!("trial {}", &rec[trial_col]);
        if series.last().is_none_or(|s| s.label != label) {
            series.push(Series {
                label,
                points: Vec::new(),
            });
            acc = 0.0;
        }
        let x = if cumulative {
            acc += parse(x_col)?;
            acc
        } else {
            parse(x_col)?
        };
        let y = 100.0 * parse(cov_col)?;
        series.last_mut().expect("pushed above").points.push((x, y));
    }
    let x_label = if cumulative {
        "cumulative planning time (s)"
    } else {
        x_column
    };
    plot_lines(out, "Coverage", x_label, "coverage (%)", &series)
}

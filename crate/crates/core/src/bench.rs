//! Benchmark harness: runs (case, shape, variant, level) combinations,
//! records condition numbers and GMRES statistics, and writes CSV and SVG.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_system, BlockSystem, CouplingMode, ElementChoice, ProblemConfig};
use crate::error::{Error, Result};
use crate::linalg::condition::{
    estimate_condition_number, sparse_matrix_condition, CondEstimate, CondMode, CondOptions,
};
use crate::linalg::gmres::{gmres, GmresSettings, SolveReport};
use crate::linalg::operator::Composed;
use crate::multigrid::MgConfig;
use crate::precond::{build_preconditioner, PrecondSpec, Shape, Variant};

/// Exact CSV header.
pub const CSV_HEADER: &str = "case,shape,variant,level,h,n_v,n_v2,n_lambda,cond_initial,cond_precond,cond_method,iterations,solve_seconds,setup_seconds,converged";

/// Default dimension up to which condition numbers use a dense SVD.
pub const DEFAULT_BENCH_DENSE_CAP: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseKind {
    /// Element 1 with L2 coupling.
    E1L2,
    /// Element 1 with H1 coupling.
    E1H1,
    /// Element 2 with L2 coupling.
    E2L2,
}

impl CaseKind {
    pub const ALL: [CaseKind; 3] = [CaseKind::E1L2, CaseKind::E1H1, CaseKind::E2L2];

    pub fn label(self) -> &'static str {
        match self {
            CaseKind::E1L2 => "e1l2",
            CaseKind::E1H1 => "e1h1",
            CaseKind::E2L2 => "e2l2",
        }
    }

    pub fn element_choice(self) -> ElementChoice {
        match self {
            CaseKind::E2L2 => ElementChoice::Element2,
            _ => ElementChoice::Element1,
        }
    }

    pub fn coupling(self) -> CouplingMode {
        match self {
            CaseKind::E1H1 => CouplingMode::H1,
            _ => CouplingMode::L2,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            CaseKind::E1L2 => "Element 1, L2 coupling",
            CaseKind::E1H1 => "Element 1, H1 coupling",
            CaseKind::E2L2 => "Element 2, L2 coupling",
        }
    }
}

impl std::fmt::Display for CaseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e1l2" => Ok(CaseKind::E1L2),
            "e1h1" => Ok(CaseKind::E1H1),
            "e2l2" => Ok(CaseKind::E2L2),
            "e2h1" => Err(Error::UnsupportedPairing(
                "element 2 has a P0 multiplier and cannot use H1 coupling".into(),
            )),
            _ => Err(Error::Parse(format!("unknown case '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentCase {
    pub kind: CaseKind,
    pub spec: PrecondSpec,
    /// `(background_level, disk_level)` pairs.
    pub levels: Vec<(usize, usize)>,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub case: String,
    pub shape: String,
    pub variant: String,
    pub level: usize,
    pub h: f64,
    pub n_v: usize,
    pub n_v2: usize,
    pub n_lambda: usize,
    pub cond_initial: f64,
    pub cond_precond: f64,
    /// `dense`, `estimated` or `skipped`.
    pub cond_method: String,
    pub iterations: usize,
    pub solve_seconds: f64,
    pub setup_seconds: f64,
    pub converged: bool,
}

/// Everything configurable about a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cases: Vec<CaseKind>,
    pub shapes: Vec<Shape>,
    pub variants: Vec<Variant>,
    pub min_level: usize,
    pub max_level: usize,
    pub disk_level_offset: i64,
    pub problem: ProblemConfig,
    pub gmres: GmresSettings,
    pub mg: MgConfig,
    pub cond: CondOptions,
    pub compute_condition: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cases: CaseKind::ALL.to_vec(),
            shapes: Shape::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            min_level: 2,
            max_level: 5,
            disk_level_offset: 0,
            problem: ProblemConfig::default(),
            gmres: GmresSettings::default(),
            mg: MgConfig::default(),
            cond: CondOptions {
                dense_cap: DEFAULT_BENCH_DENSE_CAP,
                ..Default::default()
            },
            compute_condition: true,
        }
    }
}

fn parse_list<T: FromStr<Err = Error> + Clone>(value: &str, all: &[T]) -> Result<Vec<T>> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(all.to_vec());
    }
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(T::from_str)
        .collect()
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Parse(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

impl RunConfig {
    /// Applies one `key=value` setting; keys match the CLI long flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        match key.as_str() {
            "element" => self.cases = parse_list(value, &CaseKind::ALL)?,
            "shape" => self.shapes = parse_list(value, &Shape::ALL)?,
            "variant" => self.variants = parse_list(value, &Variant::ALL)?,
            "min-level" => self.min_level = parse_num(&key, value)?,
            "max-level" => self.max_level = parse_num(&key, value)?,
            "disk-level-offset" => self.disk_level_offset = parse_num(&key, value)?,
            "beta" => self.problem.beta = parse_num(&key, value)?,
            "beta2" => self.problem.beta2 = parse_num(&key, value)?,
            "f" => self.problem.f = parse_num(&key, value)?,
            "f2" => self.problem.f2 = parse_num(&key, value)?,
            "allow-relaxed-beta" => self.problem.allow_relaxed_beta = parse_bool(&key, value)?,
            "tol" => self.gmres.abs_tol = parse_num(&key, value)?,
            "max-iter" => self.gmres.max_iter = parse_num(&key, value)?,
            "restart" => self.gmres.restart = parse_num(&key, value)?,
            "relative" => self.gmres.relative = parse_bool(&key, value)?,
            "smooth-steps" => self.mg.smooth_steps = parse_num(&key, value)?,
            "vanka-smooth-steps" => self.mg.element2_vanka_smooth_steps = parse_num(&key, value)?,
            "sor-omega" => self.mg.sor_omega = parse_num(&key, value)?,
            "mg-cycles" => self.mg.cycles = parse_num(&key, value)?,
            "dense-cap" => self.cond.dense_cap = parse_num(&key, value)?,
            "cond-tol" => self.cond.rel_tol = parse_num(&key, value)?,
            "condition" => self.compute_condition = parse_bool(&key, value)?,
            _ => return Err(Error::Parse(format!("unknown setting '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_level == 0 || self.min_level > self.max_level {
            return Err(Error::InvalidArgument(format!(
                "level range {}..={} is empty or starts below 1",
                self.min_level, self.max_level
            )));
        }
        for l in self.min_level..=self.max_level {
            self.disk_level(l)?;
        }
        if self.gmres.restart == 0 || self.mg.cycles == 0 {
            return Err(Error::InvalidArgument("restart and mg-cycles must be positive".into()));
        }
        Ok(())
    }

    pub fn disk_level(&self, background_level: usize) -> Result<usize> {
        let d = background_level as i64 + self.disk_level_offset;
        if d < 1 {
            return Err(Error::InvalidArgument(format!(
                "disk level {d} for background level {background_level} is below 1"
            )));
        }
        Ok(d as usize)
    }

    pub fn level_pairs(&self) -> Result<Vec<(usize, usize)>> {
        (self.min_level..=self.max_level)
            .map(|l| Ok((l, self.disk_level(l)?)))
            .collect()
    }

    pub fn problem_for(&self, kind: CaseKind) -> ProblemConfig {
        ProblemConfig {
            element_choice: kind.element_choice(),
            coupling: kind.coupling(),
            ..self.problem
        }
    }

    /// Every admissible (case, shape, variant) combination passing the filters.
    pub fn cases(&self) -> Result<Vec<ExperimentCase>> {
        let levels = self.level_pairs()?;
        let mut out = Vec::new();
        for &kind in &self.cases {
            for &shape in &self.shapes {
                for &variant in &self.variants {
                    out.push(ExperimentCase {
                        kind,
                        spec: PrecondSpec::new(shape, variant),
                        levels: levels.clone(),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn load_config_file(path: &Path, config: &mut RunConfig) -> Result<()> {
    let text = fs::read_to_string(path)?;
    for (k, v) in parse_config_text(&text)? {
        config.set(&k, &v)?;
    }
    Ok(())
}

/// Mesh size of a square background level.
pub fn mesh_size(half_width: f64, level: usize) -> f64 {
    2.0 * half_width / (1usize << (level - 1)) as f64
}

fn method_label(estimates: &[&CondEstimate]) -> &'static str {
    if estimates.iter().all(|e| e.mode == CondMode::DenseSvd) {
        "dense"
    } else {
        "estimated"
    }
}

/// Condition number of the assembled matrix (dense below the cap).
pub fn initial_condition(system: &BlockSystem, cond: &CondOptions) -> Result<CondEstimate> {
    sparse_matrix_condition(&system.full_matrix(), cond)
}

/// Runs one level of one case, returning the row and the GMRES report.
pub fn run_level(
    kind: CaseKind,
    spec: PrecondSpec,
    levels: (usize, usize),
    config: &RunConfig,
    cached_initial: Option<CondEstimate>,
) -> Result<(ResultRow, SolveReport, Option<CondEstimate>)> {
    faer::set_global_parallelism(faer::Par::Seq);
    let problem = config.problem_for(kind);
    let system = assemble_system(&problem, levels.0, levels.1)?;
    let a = system.full_matrix();
    let b = system.full_rhs();

    let t_setup = Instant::now();
    let p = build_preconditioner(&system, spec, &config.mg)?;
    let setup_seconds = t_setup.elapsed().as_secs_f64();

    let (cond_initial, cond_precond, cond_method) = if config.compute_condition {
        let initial = match cached_initial {
            Some(c) => c,
            None => initial_condition(&system, &config.cond)?,
        };
        let op = Composed { outer: &p, inner: &a };
        let mode = if a.n_rows() <= config.cond.dense_cap {
            CondMode::DenseSvd
        } else {
            CondMode::Iterative
        };
        let precond = estimate_condition_number(&op, mode, &config.cond)?;
        if precond.mode == CondMode::Iterative || initial.mode == CondMode::Iterative {
            log::info!("{kind} {spec} level {}: condition numbers estimated iteratively", levels.0);
        }
        (Some(initial), Some(precond), method_label(&[&initial, &precond]))
    } else {
        (None, None, "skipped")
    };

    let (_, report) = gmres(&a, &b, &p, &config.gmres)?;
    let row = ResultRow {
        case: kind.label().to_string(),
        shape: spec.shape.label().to_string(),
        variant: spec.variant.label(),
        level: levels.0,
        h: mesh_size(problem.square_half_width, levels.0),
        n_v: system.n_v(),
        n_v2: system.n_v2(),
        n_lambda: system.n_lambda(),
        cond_initial: cond_initial.map_or(f64::NAN, |c| c.value),
        cond_precond: cond_precond.map_or(f64::NAN, |c| c.value),
        cond_method: cond_method.to_string(),
        iterations: report.iterations,
        solve_seconds: report.wall_time,
        setup_seconds,
        converged: report.converged,
    };
    log::info!(
        "{kind} {spec} level {}: {} iterations, converged={}, cond {:.3e} -> {:.3e}",
        levels.0,
        row.iterations,
        row.converged,
        row.cond_initial,
        row.cond_precond
    );
    Ok((row, report, cond_initial))
}

/// Runs all levels of one case.
pub fn run_case(case: &ExperimentCase, config: &RunConfig) -> Result<Vec<ResultRow>> {
    Ok(run_case_detailed(case, config)?.into_iter().map(|(r, _)| r).collect())
}

pub fn run_case_detailed(
    case: &ExperimentCase,
    config: &RunConfig,
) -> Result<Vec<(ResultRow, SolveReport)>> {
    let mut cache = HashMap::new();
    run_case_cached(case, config, &mut cache)
}

fn run_case_cached(
    case: &ExperimentCase,
    config: &RunConfig,
    cache: &mut HashMap<(CaseKind, usize, usize), CondEstimate>,
) -> Result<Vec<(ResultRow, SolveReport)>> {
    let mut out = Vec::with_capacity(case.levels.len());
    for &lv in &case.levels {
        let key = (case.kind, lv.0, lv.1);
        let (row, report, initial) = run_level(case.kind, case.spec, lv, config, cache.get(&key).copied())?;
        if let Some(c) = initial {
            cache.insert(key, c);
        }
        out.push((row, report));
    }
    Ok(out)
}

/// Result of a full matrix run: rows plus the cases that failed.
#[derive(Debug, Default)]
pub struct MatrixOutcome {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<(String, String)>,
}

/// Runs every filtered combination; a failing case is logged and skipped.
pub fn run_matrix(config: &RunConfig) -> Result<MatrixOutcome> {
    config.validate()?;
    let mut cache = HashMap::new();
    let mut outcome = MatrixOutcome::default();
    for case in config.cases()? {
        let id = format!("{} {}", case.kind, case.spec);
        match run_case_cached(&case, config, &mut cache) {
            Ok(rows) => outcome.rows.extend(rows.into_iter().map(|(r, _)| r)),
            Err(e) => {
                log::error!("{id} failed: {e}");
                outcome.failures.push((id, e.to_string()));
            }
        }
    }
    Ok(outcome)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header '{}'", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_csv(rows, fs::File::create(path)?)
}

/// Decade tick values covering `[lo, hi]`.
pub fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.log10().floor() as i32, hi.log10().ceil() as i32);
    let b = if b == a { a + 1 } else { b };
    (a..=b).map(|k| 10f64.powi(k)).collect()
}

const VARIANT_COLORS: [(&str, &str); 5] = [
    ("dd", "#1f77b4"),
    ("dm", "#ff7f0e"),
    ("md", "#2ca02c"),
    ("mm", "#d62728"),
    ("none", "#000000"),
];

struct Series {
    label: String,
    /// `(x, y, filled)`
    points: Vec<(f64, f64, bool)>,
    dashed: bool,
    joined: bool,
}

struct Panel {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

const W: f64 = 520.0;
const H: f64 = 380.0;
const ML: f64 = 70.0;
const MR: f64 = 90.0;
const MT: f64 = 40.0;
const MB: f64 = 50.0;

fn color_of(label: &str) -> &'static str {
    VARIANT_COLORS
        .iter()
        .find(|(l, _)| *l == label)
        .map(|(_, c)| *c)
        .unwrap_or("#7f7f7f")
}

fn fmt_tick(v: f64) -> String {
    format!("1e{}", v.log10().round() as i32)
}

fn render_panel(panel: &Panel) -> Option<String> {
    let pts: Vec<(f64, f64)> = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| (p.0, p.1)))
        .filter(|(x, y)| x.is_finite() && y.is_finite() && *x > 0.0 && *y > 0.0)
        .collect();
    if pts.is_empty() {
        return None;
    }
    let (xmin, xmax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (ymin, ymax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let xt = log_ticks(xmin, xmax);
    let yt = log_ticks(ymin, ymax);
    let (lx0, lx1) = (xt[0].log10(), xt[xt.len() - 1].log10());
    let (ly0, ly1) = (yt[0].log10(), yt[yt.len() - 1].log10());
    let px = |x: f64| ML + (x.log10() - lx0) / (lx1 - lx0) * (W - ML - MR);
    let py = |y: f64| H - MB - (y.log10() - ly0) / (ly1 - ly0) * (H - MT - MB);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        (W - MR + ML) / 2.0,
        panel.title
    );
    let _ = writeln!(
        s,
        r#"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - ML - MR,
        H - MT - MB
    );
    for t in &xt {
        let x = px(*t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{MT}" x2="{x:.2}" y2="{}" stroke="#dddddd"/><text class="xtick" x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            H - MB,
            H - MB + 15.0,
            fmt_tick(*t)
        );
    }
    for t in &yt {
        let y = py(*t);
        let _ = writeln!(
            s,
            r##"<line x1="{ML}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#dddddd"/><text class="ytick" x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            W - MR,
            ML - 5.0,
            y + 4.0,
            fmt_tick(*t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (W - MR + ML) / 2.0,
        H - 12.0,
        panel.x_label
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        (H - MB + MT) / 2.0,
        (H - MB + MT) / 2.0,
        panel.y_label
    );
    for (k, series) in panel.series.iter().enumerate() {
        let color = color_of(&series.label);
        let valid: Vec<&(f64, f64, bool)> = series
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite() && p.0 > 0.0 && p.1 > 0.0)
            .collect();
        if series.joined && valid.len() > 1 {
            let path: Vec<String> = valid.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
            let dash = if series.dashed { r#" stroke-dasharray="5,3""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                path.join(" ")
            );
        }
        for p in &valid {
            let fill = if p.2 { color } else { "white" };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{fill}" stroke="{color}"/>"#,
                px(p.0),
                py(p.1)
            );
        }
        let ly = MT + 10.0 + 16.0 * k as f64;
        let lx = W - MR + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text class="legend" x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0,
            series.label
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

/// Writes one condition-vs-h and one iterations-vs-time SVG per
/// (case, shape) present in `rows`. Returns the files written.
pub fn emit_plots(rows: &[ResultRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        log::warn!("no result rows, no plots written");
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir)?;
    let mut groups: BTreeMap<(String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.case.clone(), r.shape.clone())).or_default().push(r);
    }
    let mut written = Vec::new();
    for ((case, shape), group) in groups {
        let title_case = CaseKind::from_str(&case).map(|k| k.title().to_string()).unwrap_or(case.clone());
        let mut by_variant: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
        for r in &group {
            by_variant.entry(r.variant.clone()).or_default().push(r);
        }
        let mut initial: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for r in &group {
            initial.entry(r.level).or_insert((r.h, r.cond_initial));
        }

        let mut cond_series: Vec<Series> = by_variant
            .iter()
            .map(|(v, rs)| Series {
                label: v.clone(),
                points: rs.iter().map(|r| (r.h, r.cond_precond, r.converged)).collect(),
                dashed: false,
                joined: true,
            })
            .collect();
        cond_series.push(Series {
            label: "none".into(),
            points: initial.values().map(|&(h, c)| (h, c, true)).collect(),
            dashed: true,
            joined: true,
        });
        let cond_panel = Panel {
            title: format!("{title_case}, {shape}: condition number"),
            x_label: "h".into(),
            y_label: "condition number".into(),
            series: cond_series,
        };
        let iter_panel = Panel {
            title: format!("{title_case}, {shape}: iterations"),
            x_label: "solve time [s]".into(),
            y_label: "iterations".into(),
            series: by_variant
                .iter()
                .map(|(v, rs)| Series {
                    label: v.clone(),
                    points: rs
                        .iter()
                        .map(|r| (r.solve_seconds.max(1e-6), r.iterations.max(1) as f64, r.converged))
                        .collect(),
                    dashed: false,
                    joined: true,
                })
                .collect(),
        };
        for (prefix, panel) in [("cond", cond_panel), ("iters", iter_panel)] {
            if let Some(svg) = render_panel(&panel) {
                let path = out_dir.join(format!("{prefix}_{case}_{}.svg", shape.to_ascii_lowercase()));
                fs::write(&path, svg)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

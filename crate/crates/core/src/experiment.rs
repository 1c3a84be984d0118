//! Residual sweeps: one problem family per seed, one preconditioner per
//! seed, every method and bound at every grid point.
//!
//! Output is a long `sweep.csv` (one row per seed, residual and method), a
//! wide `bounds.csv` (one row per seed and residual, with every component a
//! bound column is computed from) and a gnuplot script.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundComponents, BoundKind, SystemSpectra};
use crate::dense::{DenseMatrix, EPS};
use crate::error::{Error, Result};
use crate::preconditioner::{self, Preconditioner};
use crate::problem::{LeastSquaresProblem, ProblemBase};
use crate::randomize::mix_seed;
use crate::solvers::{self, HpneSolver, Method, NormalSolver, PneSolver, QrSolver, SolveReport};

/// Log-spaced residual norms `10^log_min ..= 10^log_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualGrid {
    pub log_min: f64,
    pub log_max: f64,
    pub points: usize,
}

impl Default for ResidualGrid {
    fn default() -> Self {
        Self {
            log_min: -16.0,
            log_max: 0.0,
            points: 33,
        }
    }
}

impl ResidualGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::InvalidArgument("grid needs at least one point".into()));
        }
        if !(self.log_min.is_finite() && self.log_max.is_finite()) || self.log_min > self.log_max {
            return Err(Error::InvalidArgument(format!(
                "bad grid range [{}, {}]",
                self.log_min, self.log_max
            )));
        }
        Ok(())
    }

    /// Grid values; integral exponents map to the exact decimal `1eK`.
    pub fn values(&self) -> Vec<f64> {
        let step = if self.points > 1 {
            (self.log_max - self.log_min) / (self.points - 1) as f64
        } else {
            0.0
        };
        (0..self.points)
            .map(|i| pow10(self.log_min + i as f64 * step))
            .collect()
    }
}

fn pow10(e: f64) -> f64 {
    let r = e.round();
    if (e - r).abs() < 1e-9 {
        format!("1e{}", r as i64).parse().expect("valid literal")
    } else {
        10f64.powf(e)
    }
}

/// Sample amount: a fixed count or a multiple of `n` written `"3n"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SampleAmountRepr", into = "SampleAmountRepr")]
pub enum SampleAmount {
    Fixed(usize),
    PerColumn(usize),
}

impl Default for SampleAmount {
    fn default() -> Self {
        SampleAmount::PerColumn(3)
    }
}

impl SampleAmount {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            SampleAmount::Fixed(c) => c,
            SampleAmount::PerColumn(k) => k * n,
        }
    }
}

impl std::str::FromStr for SampleAmount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || Error::InvalidArgument(format!("bad sample amount '{s}'; use a count or e.g. '3n'"));
        if let Some(k) = t.strip_suffix('n') {
            let k = if k.is_empty() { 1 } else { k.parse().map_err(|_| bad())? };
            return Ok(SampleAmount::PerColumn(k));
        }
        t.parse().map(SampleAmount::Fixed).map_err(|_| bad())
    }
}

impl std::fmt::Display for SampleAmount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleAmount::Fixed(c) => write!(f, "{c}"),
            SampleAmount::PerColumn(k) => write!(f, "{k}n"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SampleAmountRepr {
    Count(usize),
    Text(String),
}

impl TryFrom<SampleAmountRepr> for SampleAmount {
    type Error = Error;

    fn try_from(r: SampleAmountRepr) -> Result<Self> {
        match r {
            SampleAmountRepr::Count(c) => Ok(SampleAmount::Fixed(c)),
            SampleAmountRepr::Text(s) => s.parse(),
        }
    }
}

impl From<SampleAmount> for SampleAmountRepr {
    fn from(a: SampleAmount) -> Self {
        match a {
            SampleAmount::Fixed(c) => SampleAmountRepr::Count(c),
            other => SampleAmountRepr::Text(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub kappa: f64,
    pub c: SampleAmount,
    pub residual_grid: ResidualGrid,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub bounds: Vec<BoundKind>,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    /// Fresh sketches tried after a rank-deficient one.
    pub retries: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 3000,
            n: 500,
            kappa: 1e8,
            c: SampleAmount::default(),
            residual_grid: ResidualGrid::default(),
            seeds: vec![1, 2, 3],
            methods: Method::ALL.to_vec(),
            bounds: BoundKind::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
            jobs: None,
            retries: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m <= self.n {
            return Err(Error::InvalidArgument(format!(
                "need m > n >= 1, got m={} n={}",
                self.m, self.n
            )));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa {} must be >= 1", self.kappa)));
        }
        if self.c.resolve(self.n) < self.n {
            return Err(Error::InvalidArgument(format!(
                "sample amount {} is below n = {}",
                self.c, self.n
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("at least one method is required".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidArgument("jobs must be positive".into()));
        }
        self.residual_grid.validate()
    }

    pub fn sample_count(&self) -> usize {
        self.c.resolve(self.n)
    }
}

/// Seed for the sketch of problem `seed`, attempt `attempt`.
pub fn preconditioner_seed(seed: u64, attempt: usize) -> u64 {
    mix_seed(seed, 1 + attempt as u64)
}

/// Everything that depends on the seed but not on the residual norm.
pub struct SeedSetup {
    pub seed: u64,
    pub base: ProblemBase,
    pub pc: Preconditioner,
    pub ap: DenseMatrix,
    pub spectra: SystemSpectra,
    qr: QrSolver,
    ne: NormalSolver,
    pne: PneSolver,
    hpne: HpneSolver,
    /// Time to generate `A`, build `R_s`, form `A_p` and measure `kappa(A_p)`
    /// alone would take; the part a preconditioner-quality check pays for.
    pub precondition_time: Duration,
    pub setup_time: Duration,
    pub attempts: usize,
}

impl SeedSetup {
    pub fn new(m: usize, n: usize, kappa: f64, c: usize, seed: u64, retries: usize) -> Result<Self> {
        let start = Instant::now();
        let base = ProblemBase::new(m, n, kappa, seed)?;
        let mut attempt = 0;
        let pc = loop {
            match Preconditioner::build_seeded(&base.a, c, preconditioner_seed(seed, attempt)) {
                Err(Error::RankDeficientSketch { .. }) if attempt < retries => attempt += 1,
                other => break other?,
            }
        };
        let ap = preconditioner::apply(&base.a, &pc)?;
        let sv_ap = crate::dense::singular_values(&ap);
        let precondition_time = start.elapsed();

        let qr = QrSolver::new(&base.a);
        let apta = ap.transpose_matmul(&base.a);
        let spectra = SystemSpectra::from_measured(qr.r(), &sv_ap, &pc.r_s, &apta)?;
        let ne = NormalSolver::new(&base.a);
        let pne = PneSolver::new(&ap, &pc.r_s);
        let hpne = HpneSolver::from_product(&ap, &apta);
        Ok(Self {
            seed,
            base,
            pc,
            ap,
            spectra,
            qr,
            ne,
            pne,
            hpne,
            precondition_time,
            setup_time: start.elapsed(),
            attempts: attempt + 1,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        Self::new(cfg.m, cfg.n, cfg.kappa, cfg.sample_count(), seed, cfg.retries)
    }

    pub fn problem(&self, eta_r: f64) -> Result<LeastSquaresProblem> {
        self.base.instance(eta_r)
    }

    /// Solves `p` (an instance of this seed's family) with `method`.
    pub fn solve(&self, p: &LeastSquaresProblem, method: Method) -> Result<SolveReport> {
        let (a, b, xs) = (&p.a, p.b.data(), p.x_star.data());
        let norm_a = self.spectra.norm_a;
        match method {
            Method::Qr => solvers::report(method, a, norm_a, b, xs, self.qr.solve(b)?, None),
            Method::Ne => solvers::report(method, a, norm_a, b, xs, self.ne.solve(b)?, None),
            Method::Pne => {
                let (x, y) = self.pne.solve(b)?;
                solvers::report(method, a, norm_a, b, xs, x, Some((&self.ap, self.spectra.norm_ap, y)))
            }
            Method::Hpne => solvers::report(method, a, norm_a, b, xs, self.hpne.solve(b)?, None),
        }
    }

    /// Every method and the bound components at one residual norm.
    pub fn point(&self, eta_r: f64) -> Result<PointResult> {
        let p = self.problem(eta_r)?;
        let reports: Vec<(Method, Result<SolveReport>)> =
            Method::ALL.iter().map(|&m| (m, self.solve(&p, m))).collect();
        let ok: Vec<&SolveReport> = reports.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
        let components = BoundComponents::from_parts(&self.spectra, &self.pc.r_s, &ok, EPS)?;
        Ok(PointResult {
            eta_r,
            reports,
            components,
        })
    }
}

pub struct PointResult {
    pub eta_r: f64,
    pub reports: Vec<(Method, Result<SolveReport>)>,
    pub components: BoundComponents,
}

impl PointResult {
    pub fn report(&self, m: Method) -> Option<&SolveReport> {
        self.reports
            .iter()
            .find(|(k, _)| *k == m)
            .and_then(|(_, r)| r.as_ref().ok())
    }

    pub fn error_of(&self, m: Method) -> Option<&Error> {
        self.reports
            .iter()
            .find(|(k, _)| *k == m)
            .and_then(|(_, r)| r.as_ref().err())
    }

    /// `sweep.csv` rows for `methods`, in the given order.
    pub fn sweep_rows(&self, methods: &[Method], spectra: &SystemSpectra, seed: u64) -> Vec<SweepRow> {
        methods
            .iter()
            .map(|&method| {
                let r = self.report(method);
                SweepRow {
                    method,
                    eta_r: self.eta_r,
                    rel_error: r.map(|r| r.rel_error),
                    rel_residual: r.map(|r| r.rel_residual),
                    rel_residual_precond: r.and_then(|r| r.rel_residual_precond),
                    kappa_a: Some(spectra.kappa_a),
                    kappa_ap: method.needs_preconditioner().then_some(spectra.kappa_ap),
                    seed,
                    error: self.error_of(method).map(err_text),
                }
            })
            .collect()
    }

    pub fn bounds_row(&self, kinds: &[BoundKind], seed: u64) -> BoundsRow {
        BoundsRow {
            eta_r: self.eta_r,
            seed,
            err: Method::ALL.map(|m| self.report(m).map(|r| r.rel_error)),
            bounds: kinds
                .iter()
                .map(|&k| (k, self.components.evaluate(k).ok().map(|b| b.value)))
                .collect(),
            components: Some(self.components),
            error: None,
        }
    }
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub eta_r: f64,
    pub rel_error: Option<f64>,
    pub rel_residual: Option<f64>,
    pub rel_residual_precond: Option<f64>,
    pub kappa_a: Option<f64>,
    pub kappa_ap: Option<f64>,
    pub seed: u64,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: [&str; 9] = [
    "method",
    "eta_r",
    "rel_error",
    "rel_residual",
    "rel_residual_precond",
    "kappa_A",
    "kappa_Ap",
    "seed",
    "error",
];

/// One line of `bounds.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub eta_r: f64,
    pub seed: u64,
    pub err: [Option<f64>; 4],
    pub bounds: Vec<(BoundKind, Option<f64>)>,
    pub components: Option<BoundComponents>,
    pub error: Option<String>,
}

/// Fixed component columns of `bounds.csv`, after the bound columns.
pub const COMPONENT_COLUMNS: [&str; 14] = [
    "nu_pne",
    "nu_hpne",
    "eta",
    "kappa_a",
    "kappa_ap",
    "kappa_rs",
    "kappa_apta",
    "epsilon",
    "res_ls",
    "res_ne",
    "res_pne",
    "res_hpne",
    "seed",
    "error",
];

pub fn bounds_header(kinds: &[BoundKind]) -> Vec<String> {
    let mut h: Vec<String> = ["eta_r", "err_qr", "err_ne", "err_pne", "err_hpne"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(kinds.iter().map(|k| k.column().to_string()));
    h.extend(COMPONENT_COLUMNS.iter().map(|s| s.to_string()));
    h
}

pub struct SeedSummary {
    pub seed: u64,
    pub kappa_ap: Option<f64>,
    pub spectra: Option<SystemSpectra>,
    pub precondition_time: Duration,
    pub setup_time: Duration,
    pub error: Option<String>,
}

pub struct SweepResult {
    pub config: ExperimentConfig,
    pub grid: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub bound_rows: Vec<BoundsRow>,
    pub seeds: Vec<SeedSummary>,
}

/// `Kind: message`, as written to the `error` CSV columns.
pub fn err_text(e: &Error) -> String {
    format!("{}: {}", e.kind(), e)
}

fn sweep_seed(cfg: &ExperimentConfig, grid: &[f64], seed: u64) -> (Vec<SweepRow>, Vec<BoundsRow>, SeedSummary) {
    let failed_all = |e: &Error| {
        let msg = err_text(e);
        let rows = grid
            .iter()
            .flat_map(|&eta| {
                cfg.methods.iter().map({
                    let msg = msg.clone();
                    move |&method| SweepRow {
                        method,
                        eta_r: eta,
                        rel_error: None,
                        rel_residual: None,
                        rel_residual_precond: None,
                        kappa_a: None,
                        kappa_ap: None,
                        seed,
                        error: Some(msg.clone()),
                    }
                })
            })
            .collect();
        let brows = grid
            .iter()
            .map(|&eta| BoundsRow {
                eta_r: eta,
                seed,
                err: [None; 4],
                bounds: cfg.bounds.iter().map(|&k| (k, None)).collect(),
                components: None,
                error: Some(msg.clone()),
            })
            .collect();
        (rows, brows)
    };

    let setup = match SeedSetup::from_config(cfg, seed) {
        Ok(s) => s,
        Err(e) => {
            let (rows, brows) = failed_all(&e);
            let summary = SeedSummary {
                seed,
                kappa_ap: None,
                spectra: None,
                precondition_time: Duration::ZERO,
                setup_time: Duration::ZERO,
                error: Some(err_text(&e)),
            };
            return (rows, brows, summary);
        }
    };

    let mut rows = Vec::with_capacity(grid.len() * cfg.methods.len());
    let mut brows = Vec::with_capacity(grid.len());
    for &eta in grid {
        match setup.point(eta) {
            Ok(pt) => {
                rows.extend(pt.sweep_rows(&cfg.methods, &setup.spectra, seed));
                brows.push(pt.bounds_row(&cfg.bounds, seed));
            }
            Err(e) => {
                let msg = err_text(&e);
                for &method in &cfg.methods {
                    rows.push(SweepRow {
                        method,
                        eta_r: eta,
                        rel_error: None,
                        rel_residual: None,
                        rel_residual_precond: None,
                        kappa_a: None,
                        kappa_ap: None,
                        seed,
                        error: Some(msg.clone()),
                    });
                }
                brows.push(BoundsRow {
                    eta_r: eta,
                    seed,
                    err: [None; 4],
                    bounds: cfg.bounds.iter().map(|&k| (k, None)).collect(),
                    components: None,
                    error: Some(msg),
                });
            }
        }
    }
    let summary = SeedSummary {
        seed,
        kappa_ap: Some(setup.spectra.kappa_ap),
        spectra: Some(setup.spectra),
        precondition_time: setup.precondition_time,
        setup_time: setup.setup_time,
        error: None,
    };
    (rows, brows, summary)
}

/// Runs the sweep in memory. Rows come out in (seed, residual, method)
/// order whatever the thread count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let grid = cfg.residual_grid.values();
    let work = || -> Vec<_> {
        cfg.seeds
            .par_iter()
            .map(|&seed| sweep_seed(cfg, &grid, seed))
            .collect()
    };
    let per_seed = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut rows = Vec::new();
    let mut bound_rows = Vec::new();
    let mut seeds = Vec::new();
    for (r, b, s) in per_seed {
        rows.extend(r);
        bound_rows.extend(b);
        seeds.push(s);
    }
    Ok(SweepResult {
        config: cfg.clone(),
        grid,
        rows,
        bound_rows,
        seeds,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse {
        line,
        message: format!("bad number '{s}'"),
    })
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record([
            r.method.name().to_string(),
            format!("{:e}", r.eta_r),
            fmt_opt(r.rel_error),
            fmt_opt(r.rel_residual),
            fmt_opt(r.rel_residual_precond),
            fmt_opt(r.kappa_a),
            fmt_opt(r.kappa_ap),
            r.seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_bounds_csv<W: std::io::Write>(kinds: &[BoundKind], rows: &[BoundsRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(bounds_header(kinds))?;
    for r in rows {
        let mut rec = vec![format!("{:e}", r.eta_r)];
        rec.extend(r.err.iter().map(|&e| fmt_opt(e)));
        for &k in kinds {
            let v = r.bounds.iter().find(|(b, _)| *b == k).and_then(|(_, v)| *v);
            rec.push(fmt_opt(v));
        }
        let c = r.components.as_ref();
        rec.push(fmt_opt(c.and_then(|c| c.nu_pne)));
        rec.push(fmt_opt(c.map(|c| c.nu_hpne)));
        rec.push(fmt_opt(c.and_then(|c| c.eta().ok())));
        rec.push(fmt_opt(c.map(|c| c.kappa_a)));
        rec.push(fmt_opt(c.map(|c| c.kappa_ap)));
        rec.push(fmt_opt(c.map(|c| c.kappa_rs)));
        rec.push(fmt_opt(c.map(|c| c.kappa_apta)));
        rec.push(fmt_opt(c.map(|c| c.epsilon)));
        rec.push(fmt_opt(c.and_then(|c| c.res_ls)));
        rec.push(fmt_opt(c.and_then(|c| c.res_ne)));
        rec.push(fmt_opt(c.and_then(|c| c.res_pne)));
        rec.push(fmt_opt(c.and_then(|c| c.res_hpne)));
        rec.push(r.seed.to_string());
        rec.push(r.error.clone().unwrap_or_default());
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `bounds.csv` back; bound kinds come from the header.
pub fn read_bounds_csv<R: std::io::Read>(r: R) -> Result<(Vec<BoundKind>, Vec<BoundsRow>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let kinds: Vec<BoundKind> = header
        .iter()
        .filter(|h| h.starts_with("bound_"))
        .map(|h| h.parse())
        .collect::<Result<_>>()?;
    let idx_eta = col("eta_r")?;
    let idx_err: Vec<usize> = ["err_qr", "err_ne", "err_pne", "err_hpne"]
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let idx_bounds: Vec<usize> = kinds.iter().map(|k| col(k.column())).collect::<Result<_>>()?;
    let idx_comp: Vec<usize> = COMPONENT_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let get = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize| parse_opt(get(j), line);
        let seed: u64 = get(idx_comp[12]).parse().map_err(|_| Error::Parse {
            line,
            message: "bad seed".into(),
        })?;
        let error = Some(get(idx_comp[13]).to_string()).filter(|s| !s.is_empty());
        let components = match (num(idx_comp[1])?, num(idx_comp[3])?) {
            (Some(nu_hpne), Some(kappa_a)) => Some(BoundComponents {
                nu_pne: num(idx_comp[0])?,
                nu_hpne,
                kappa_a,
                kappa_ap: num(idx_comp[4])?.unwrap_or(f64::NAN),
                kappa_rs: num(idx_comp[5])?.unwrap_or(f64::NAN),
                kappa_apta: num(idx_comp[6])?.unwrap_or(f64::NAN),
                epsilon: num(idx_comp[7])?.unwrap_or(EPS),
                res_ls: num(idx_comp[8])?,
                res_ne: num(idx_comp[9])?,
                res_pne: num(idx_comp[10])?,
                res_hpne: num(idx_comp[11])?,
            }),
            _ => None,
        };
        let mut err = [None; 4];
        for (k, &j) in idx_err.iter().enumerate() {
            err[k] = num(j)?;
        }
        let bounds = kinds
            .iter()
            .zip(&idx_bounds)
            .map(|(&k, &j)| Ok((k, num(j)?)))
            .collect::<Result<_>>()?;
        rows.push(BoundsRow {
            eta_r: num(idx_eta)?.unwrap_or(f64::NAN),
            seed,
            err,
            bounds,
            components,
            error,
        });
    }
    Ok((kinds, rows))
}

/// Recomputes every bound column from the component columns of the same row.
pub fn recompute_bounds(rows: &[BoundsRow]) -> Vec<BoundsRow> {
    rows.iter()
        .map(|r| {
            let mut out = r.clone();
            out.bounds = r
                .bounds
                .iter()
                .map(|&(k, _)| (k, r.components.as_ref().and_then(|c| c.evaluate(k).ok().map(|b| b.value))))
                .collect();
            out
        })
        .collect()
}

/// Number of `(row, bound)` cells whose stored and recomputed values differ
/// in any bit.
pub fn bound_mismatches(stored: &[BoundsRow], recomputed: &[BoundsRow]) -> usize {
    stored
        .iter()
        .zip(recomputed)
        .map(|(a, b)| {
            a.bounds
                .iter()
                .zip(&b.bounds)
                .filter(|((_, x), (_, y))| x.map(f64::to_bits) != y.map(f64::to_bits))
                .count()
        })
        .sum()
}

/// gnuplot script plotting errors and bounds against the residual norm for
/// the first seed in `bounds.csv`.
pub fn plot_script(cfg: &ExperimentConfig, seed: u64) -> String {
    let mut s = String::new();
    s.push_str("# Relative errors and perturbation bounds versus the least squares residual.\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set logscale xy\nset format x '10^{%L}'\nset format y '10^{%L}'\n");
    s.push_str("set xlabel 'relative least squares residual'\n");
    s.push_str("set ylabel 'relative error'\n");
    s.push_str(&format!(
        "set title 'm = {}, n = {}, kappa(A) = {:e}, c = {}, seed {seed}'\n",
        cfg.m,
        cfg.n,
        cfg.kappa,
        cfg.sample_count()
    ));
    s.push_str("set key outside right\n");
    s.push_str("set terminal pngcairo size 1000,600\nset output 'sweep.png'\n");
    let sel = format!("(strcol('seed') eq '{seed}' ? column('%s') : 1/0)");
    let mut parts = Vec::new();
    for (col, title, style) in [
        ("err_qr", "QR", "lp pt 1"),
        ("err_pne", "PNE", "lp pt 4"),
        ("err_hpne", "HPNE", "lp pt 2"),
    ] {
        parts.push(format!(
            "'bounds.csv' using 'eta_r':{} with {style} title '{title}'",
            sel.replace("%s", col)
        ));
    }
    for k in &cfg.bounds {
        parts.push(format!(
            "'bounds.csv' using 'eta_r':{} with l dt 2 title '{}'",
            sel.replace("%s", k.column()),
            k.column()
        ));
    }
    s.push_str("plot ");
    s.push_str(&parts.join(", \\\n     "));
    s.push('\n');
    s
}

/// Writes `sweep.csv`, `bounds.csv`, `plot.gp` and `config.json`.
pub fn write_outputs(res: &SweepResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_sweep_csv(&res.rows, fs::File::create(dir.join("sweep.csv"))?)?;
    write_bounds_csv(&res.config.bounds, &res.bound_rows, fs::File::create(dir.join("bounds.csv"))?)?;
    let first = res.config.seeds[0];
    fs::write(dir.join("plot.gp"), plot_script(&res.config, first))?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&res.config)?)?;
    Ok(())
}

/// Least squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            m: 200,
            n: 20,
            kappa: 1e8,
            residual_grid: ResidualGrid {
                log_min: -16.0,
                log_max: 0.0,
                points: 9,
            },
            seeds: vec![4, 5],
            jobs: Some(1),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn grid_values() {
        let g = ResidualGrid::default().values();
        assert_eq!(g.len(), 33);
        assert_eq!(g[0], 1e-16);
        assert_eq!(g[2], 1e-15);
        assert_eq!(g[32], 1.0);
        assert!((g[1] / 10f64.powf(-15.5) - 1.0).abs() < 1e-15);
        let one = ResidualGrid {
            log_min: -8.0,
            log_max: -8.0,
            points: 1,
        };
        assert_eq!(one.values(), vec![1e-8]);
        assert!(ResidualGrid { points: 0, ..one }.validate().is_err());
    }

    #[test]
    fn sample_amount_parsing() {
        assert_eq!("3n".parse::<SampleAmount>().unwrap(), SampleAmount::PerColumn(3));
        assert_eq!("150".parse::<SampleAmount>().unwrap(), SampleAmount::Fixed(150));
        assert!("x".parse::<SampleAmount>().is_err());
        assert_eq!(SampleAmount::default().resolve(500), 1500);
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"c": "4n", "n": 10}"#).unwrap();
        assert_eq!(cfg.sample_count(), 40);
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"c": 77}"#).unwrap();
        assert_eq!(cfg.c, SampleAmount::Fixed(77));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = small_config();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        let mut bad = cfg.clone();
        bad.m = bad.n;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_shape_order_and_determinism() {
        let cfg = small_config();
        let a = run_sweep(&cfg).unwrap();
        assert_eq!(a.rows.len(), 2 * 9 * 4);
        assert_eq!(a.bound_rows.len(), 2 * 9);
        assert_eq!(a.rows[0].seed, 4);
        assert_eq!(a.rows[0].method, Method::Qr);
        assert_eq!(a.rows[3].method, Method::Hpne);
        assert_eq!(a.rows[4].eta_r, a.grid[1]);

        let mut cfg2 = cfg.clone();
        cfg2.jobs = Some(2);
        let b = run_sweep(&cfg2).unwrap();
        let (mut wa, mut wb) = (Vec::new(), Vec::new());
        write_sweep_csv(&a.rows, &mut wa).unwrap();
        write_sweep_csv(&b.rows, &mut wb).unwrap();
        assert_eq!(wa, wb);
        // kappa = 1e8 makes NE fail or lose all accuracy; the row is still there.
        let ne = a.rows.iter().find(|r| r.method == Method::Ne).unwrap();
        assert!(ne.error.is_some() || ne.rel_error.unwrap() > 1e-3);
    }

    #[test]
    fn bounds_csv_recomputes_bit_identically() {
        let cfg = small_config();
        let res = run_sweep(&cfg).unwrap();
        let mut buf = Vec::new();
        write_bounds_csv(&cfg.bounds, &res.bound_rows, &mut buf).unwrap();
        let (kinds, rows) = read_bounds_csv(buf.as_slice()).unwrap();
        assert_eq!(kinds, cfg.bounds);
        assert_eq!(rows.len(), res.bound_rows.len());
        let again = recompute_bounds(&rows);
        assert_eq!(bound_mismatches(&rows, &again), 0);
        assert_eq!(bound_mismatches(&res.bound_rows, &rows), 0);
    }

    #[test]
    fn single_point_matches_direct_solve() {
        let mut cfg = small_config();
        cfg.residual_grid = ResidualGrid {
            log_min: -6.0,
            log_max: -6.0,
            points: 1,
        };
        cfg.seeds = vec![8];
        let res = run_sweep(&cfg).unwrap();
        let p = crate::problem::generate(cfg.m, cfg.n, cfg.kappa, 1e-6, 8).unwrap();
        let pc = Preconditioner::build_seeded(&p.a, cfg.sample_count(), preconditioner_seed(8, 0)).unwrap();
        for row in &res.rows {
            let direct = solvers::solve(&p, row.method, Some(&pc));
            match direct {
                Ok(r) => {
                    let got = row.rel_error.unwrap();
                    assert!((got / r.rel_error - 1.0).abs() < 1e-6, "{}: {got} vs {}", row.method, r.rel_error);
                }
                Err(_) => assert!(row.error.is_some()),
            }
        }
    }

    #[test]
    fn failed_setup_is_recorded_per_row() {
        let mut cfg = small_config();
        cfg.residual_grid.points = 2;
        cfg.seeds = vec![1];
        // Beyond what double precision can represent as a triangular factor.
        cfg.kappa = 1e300;
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 2 * 4);
        assert!(res.rows.iter().all(|r| r.error.is_some()));
    }

    #[test]
    fn writes_output_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.residual_grid.points = 3;
        let res = run_sweep(&cfg).unwrap();
        write_outputs(&res, dir.path()).unwrap();
        for f in ["sweep.csv", "bounds.csv", "plot.gp", "config.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3 * 4);
        assert!(text.starts_with("method,eta_r,rel_error"));
        let gp = fs::read_to_string(dir.path().join("plot.gp")).unwrap();
        assert!(gp.contains("bound_pne") && gp.contains("logscale"));
    }
}

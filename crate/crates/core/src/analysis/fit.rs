use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

use super::ols::{self, Ols};
use super::SweepCell;

/// Response used for the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    /// One observation per cell: `ln(1 - mean fitness)`.
    #[default]
    CellMean,
    /// One observation per seed of every sub-ceiling cell.
    PerSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Cells with mean fitness at or above this are excluded.
    pub ceiling: f64,
    pub response: Response,
    /// Residual permutations for the `c` test; 0 skips it.
    pub shuffles: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ceiling: 0.97,
            response: Response::CellMean,
            shuffles: 10_000,
        }
    }
}

/// Smallest per-seed gap admitted in [`Response::PerSeed`] mode.
pub const PER_SEED_GAP_FLOOR: f64 = 1e-6;

/// Coefficients of `ln(1 - V) = beta0 + a ln T + b ln N + c ln T ln N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r2: f64,
    /// Freedman-Lane permutation p-value for `c != 0`.
    pub p_c: Option<f64>,
    /// Two-sided t-test p-value for `c != 0`.
    pub p_c_t: f64,
    pub n_cells: usize,
    pub n_obs: usize,
}

impl FitResult {
    /// Fitted log-gap at `(T, N)`.
    pub fn log_gap(&self, t: f64, n: f64) -> f64 {
        let (lt, ln) = (t.ln(), n.ln());
        self.beta0 + self.a * lt + self.b * ln + self.c * lt * ln
    }

    /// Fitted fitness `1 - exp(log_gap)`.
    pub fn fitness(&self, t: f64, n: f64) -> f64 {
        1.0 - self.log_gap(t, n).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {need} sub-ceiling cells, found {got}")]
    TooFewCells { need: usize, got: usize },
    #[error("rank-deficient design: {axis}")]
    RankDeficient { axis: String },
    #[error("cell (C={c}, T={t}) has no seeds")]
    EmptyCell { c: u64, t: u64 },
}

/// Minimum sub-ceiling cells for the bilinear fit.
pub const MIN_CELLS: usize = 5;

struct Design {
    lt: Vec<f64>,
    ln: Vec<f64>,
    y: DVector<f64>,
    n_cells: usize,
}

fn design(cells: &[SweepCell], opts: &FitOptions) -> Result<Design, FitError> {
    let mut kept: Vec<&SweepCell> = Vec::new();
    for cell in cells {
        if cell.fitness.is_empty() {
            return Err(FitError::EmptyCell { c: cell.c, t: cell.t });
        }
        if cell.mean() < opts.ceiling {
            kept.push(cell);
        }
    }
    if kept.len() < MIN_CELLS {
        return Err(FitError::TooFewCells {
            need: MIN_CELLS,
            got: kept.len(),
        });
    }
    // Sorting makes the fit independent of input order.
    kept.sort_by(|a, b| (a.c, a.t).cmp(&(b.c, b.t)).then(a.mean().total_cmp(&b.mean())));
    let (mut lt, mut ln, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for cell in &kept {
        let (t, n) = ((cell.t as f64).ln(), (cell.n as f64).ln());
        match opts.response {
            Response::CellMean => {
                lt.push(t);
                ln.push(n);
                y.push((1.0 - cell.mean()).ln());
            }
            Response::PerSeed => {
                for v in &cell.fitness {
                    lt.push(t);
                    ln.push(n);
                    y.push((1.0 - v).max(PER_SEED_GAP_FLOOR).ln());
                }
            }
        }
    }
    let distinct = |v: &[f64]| {
        let mut s: Vec<f64> = v.to_vec();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s.len()
    };
    if distinct(&lt) < 2 {
        return Err(FitError::RankDeficient {
            axis: "T takes a single value".into(),
        });
    }
    if distinct(&ln) < 2 {
        return Err(FitError::RankDeficient {
            axis: "N takes a single value".into(),
        });
    }
    let mut budgets: Vec<u64> = kept.iter().map(|c| c.c).collect();
    budgets.sort_unstable();
    budgets.dedup();
    if budgets.len() < 2 {
        return Err(FitError::RankDeficient {
            axis: "ln T and ln N are collinear (single budget C)".into(),
        });
    }
    Ok(Design {
        y: DVector::from_vec(y),
        lt,
        ln,
        n_cells: kept.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    M0,
    M1,
    M2,
    M3,
    M4,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [Self::M0, Self::M1, Self::M2, Self::M3, Self::M4];

    pub fn describe(self) -> &'static str {
        match self {
            Self::M0 => "budget only (c = 0, a = b)",
            Self::M1 => "bilinear",
            Self::M2 => "bilinear + ln^2 T",
            Self::M3 => "bilinear + ln^2 N",
            Self::M4 => "bilinear + ln^2 T + ln^2 N",
        }
    }

    fn columns(self, lt: f64, ln: f64) -> Vec<f64> {
        match self {
            Self::M0 => vec![1.0, lt + ln],
            Self::M1 => vec![1.0, lt, ln, lt * ln],
            Self::M2 => vec![1.0, lt, ln, lt * ln, lt * lt],
            Self::M3 => vec![1.0, lt, ln, lt * ln, ln * ln],
            Self::M4 => vec![1.0, lt, ln, lt * ln, lt * lt, ln * ln],
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

fn matrix(kind: ModelKind, d: &Design) -> DMatrix<f64> {
    let p = kind.columns(0.0, 0.0).len();
    DMatrix::from_fn(d.lt.len(), p, |i, j| kind.columns(d.lt[i], d.ln[i])[j])
}

fn fit_model(kind: ModelKind, d: &Design) -> Result<(DMatrix<f64>, Ols), FitError> {
    let x = matrix(kind, d);
    if x.nrows() <= x.ncols() {
        return Err(FitError::TooFewCells {
            need: x.ncols() + 1,
            got: x.nrows(),
        });
    }
    if ols::rank(&x) < x.ncols() {
        return Err(FitError::RankDeficient {
            axis: format!("{kind} columns are linearly dependent on these cells"),
        });
    }
    let fit = ols::fit(&x, &d.y);
    Ok((x, fit))
}

fn t_pvalue(t: f64, df: usize) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { 1.0 } else { 0.0 };
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Ordinary least squares for the bilinear gap model on sub-ceiling cells.
pub fn fit_bilinear<R: Rng + ?Sized>(
    cells: &[SweepCell],
    opts: &FitOptions,
    rng: &mut R,
) -> Result<FitResult, FitError> {
    let d = design(cells, opts)?;
    let (x, full) = fit_model(ModelKind::M1, &d)?;
    let t_obs = full.coef[3] / full.se(3);
    let p_c = (opts.shuffles > 0).then(|| freedman_lane(&d, &x, t_obs, opts.shuffles, rng));
    Ok(FitResult {
        beta0: full.coef[0],
        a: full.coef[1],
        b: full.coef[2],
        c: full.coef[3],
        r2: full.r2(),
        p_c,
        p_c_t: t_pvalue(t_obs, full.df_resid()),
        n_cells: d.n_cells,
        n_obs: d.y.len(),
    })
}

/// Permutes residuals of the model without the interaction and refits the
/// full model; p is the fraction of shuffles with `|t_c|` at least the
/// observed value.
fn freedman_lane<R: Rng + ?Sized>(
    d: &Design,
    x: &DMatrix<f64>,
    t_obs: f64,
    shuffles: usize,
    rng: &mut R,
) -> f64 {
    if !t_obs.is_finite() {
        return if t_obs.is_nan() { 1.0 } else { 0.0 };
    }
    let reduced_x = x.columns(0, 3).into_owned();
    let reduced = ols::fit(&reduced_x, &d.y);
    let fitted = &reduced_x * &reduced.coef;
    let mut resid: Vec<f64> = (&d.y - &fitted).iter().copied().collect();

    // Precompute the pieces of the full fit that do not depend on y.
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(4, 4))
        .expect("full rank");
    // c = e_3' R^-1 Q' y
    let c_row = r_inv.row(3) * q.transpose();
    let var_c = r_inv.row(3).norm_squared();
    let df = (x.nrows() - 4) as f64;
    let tol = 1e-12 * t_obs.abs().max(1.0);

    let mut hits = 0usize;
    let mut y = DVector::zeros(x.nrows());
    for _ in 0..shuffles {
        resid.shuffle(rng);
        for i in 0..y.len() {
            y[i] = fitted[i] + resid[i];
        }
        let c = (&c_row * &y)[0];
        let qty = q.transpose() * &y;
        let rss = (y.norm_squared() - qty.norm_squared()).max(0.0);
        let se = (rss / df * var_c).sqrt();
        let t = c / se;
        if t.abs() >= t_obs.abs() - tol || (se == 0.0 && c != 0.0) {
            hits += 1;
        }
    }
    hits as f64 / shuffles as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedModel {
    pub kind: ModelKind,
    pub params: usize,
    pub r2: f64,
    pub rss: f64,
    pub df_resid: usize,
    pub coefficients: Vec<f64>,
    /// F-test p-value against M1 (M0 as restriction of M1, M2..M4 as
    /// extensions). `None` for M1 itself.
    pub p_vs_m1: Option<f64>,
    pub f_vs_m1: Option<f64>,
}

fn f_test(restricted: &Ols, general: &Ols) -> (f64, f64) {
    let dq = (general.p - restricted.p) as f64;
    let df2 = general.df_resid() as f64;
    let num = (restricted.rss - general.rss).max(0.0) / dq;
    let den = general.rss / df2;
    if den <= 0.0 {
        return if num > 0.0 { (f64::INFINITY, 0.0) } else { (0.0, 1.0) };
    }
    let f = num / den;
    let dist = FisherSnedecor::new(dq, df2).expect("positive dfs");
    (f, (1.0 - dist.cdf(f)).clamp(0.0, 1.0))
}

/// Fits M0..M4 on the same sub-ceiling observations and F-tests each
/// against M1.
pub fn nested_model_compare(
    cells: &[SweepCell],
    opts: &FitOptions,
) -> Result<Vec<NestedModel>, FitError> {
    let d = design(cells, opts)?;
    let fits = ModelKind::ALL
        .iter()
        .map(|&k| fit_model(k, &d).map(|(_, f)| (k, f)))
        .collect::<Result<Vec<_>, _>>()?;
    let m1 = fits[1].1.clone();
    Ok(fits
        .into_iter()
        .map(|(kind, f)| {
            let test = match kind {
                ModelKind::M1 => None,
                ModelKind::M0 => Some(f_test(&f, &m1)),
                _ => Some(f_test(&m1, &f)),
            };
            NestedModel {
                kind,
                params: f.p,
                r2: f.r2(),
                rss: f.rss,
                df_resid: f.df_resid(),
                coefficients: f.coef.iter().copied().collect(),
                p_vs_m1: test.map(|t| t.1),
                f_vs_m1: test.map(|t| t.0),
            }
        })
        .collect())
}

use nalgebra::{DMatrix, DVector};

/// Least-squares fit of `y` on the columns of `x`.
#[derive(Debug, Clone)]
pub(crate) struct Ols {
    pub coef: DVector<f64>,
    pub rss: f64,
    pub tss: f64,
    pub n: usize,
    pub p: usize,
    /// Diagonal of `(X'X)^-1`.
    pub xtx_inv_diag: DVector<f64>,
}

impl Ols {
    pub fn r2(&self) -> f64 {
        if self.tss <= 0.0 {
            return if self.rss <= 0.0 { 1.0 } else { 0.0 };
        }
        (1.0 - self.rss / self.tss).clamp(0.0, 1.0)
    }

    pub fn df_resid(&self) -> usize {
        self.n - self.p
    }

    /// Standard error of coefficient `j`.
    pub fn se(&self, j: usize) -> f64 {
        let df = self.df_resid();
        if df == 0 {
            return f64::NAN;
        }
        (self.rss / df as f64 * self.xtx_inv_diag[j]).sqrt()
    }
}

/// Numerical rank of `x`.
pub(crate) fn rank(x: &DMatrix<f64>) -> usize {
    let svd = x.clone().svd(false, false);
    let max = svd.singular_values.max();
    let tol = max * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON * 16.0;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Fits by QR. Caller guarantees full column rank.
pub(crate) fn fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Ols {
    let (n, p) = x.shape();
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .expect("full-rank design has invertible R");
    let resid = y - x * &coef;
    let rss = resid.norm_squared();
    let mean = y.mean();
    let tss = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .expect("full-rank design has invertible R");
    let xtx_inv_diag = DVector::from_iterator(p, (0..p).map(|i| r_inv.row(i).norm_squared()));
    Ols {
        coef,
        rss,
        tss,
        n,
        p,
        xtx_inv_diag,
    }
}

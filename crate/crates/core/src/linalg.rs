//! Dense matrix primitives shared by the rest of the crate: masked storage,
//! centering, sample covariance, a symmetric eigensolver and a thin SVD.
//!
//! The eigensolver is Householder tridiagonalization followed by implicit QL
//! with Wilkinson shifts. Eigenvector rows are kept contiguous so the Givens
//! updates in the QL sweep stream through memory.

use ndarray::{Array1, Array2, ArrayView2, Axis, CowArray, Ix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance accepted by [`sym_eig`], scaled by `max(1, max|s_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Relative tolerance for clamping slightly negative covariance eigenvalues.
pub const EIG_CLAMP_TOL: f64 = 1e-9;

/// A dense matrix together with an observedness mask (`true` = observed).
///
/// Values under unobserved cells are never read by any routine in this crate,
/// and equality ignores them.
#[derive(Debug, Clone)]
pub struct MaskedMatrix {
    values: Array2<f64>,
    mask: Array2<bool>,
}

impl PartialEq for MaskedMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mask == other.mask
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &m)| !m || a.to_bits() == b.to_bits())
    }
}

impl MaskedMatrix {
    pub fn new(values: Array2<f64>, mask: Array2<bool>) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::Dimension(format!("values are {:?} but mask is {:?}", values.dim(), mask.dim())));
        }
        Ok(Self { values: row_major(values), mask: row_major(mask) })
    }

    /// Fully observed matrix.
    pub fn complete(values: Array2<f64>) -> Self {
        let mask = Array2::from_elem(values.dim(), true);
        Self { values: row_major(values), mask }
    }

    /// Treats every NaN cell as missing.
    pub fn from_nan(values: Array2<f64>) -> Self {
        let mask = values.mapv(|v| !v.is_nan());
        Self { values: row_major(values), mask }
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn is_observed(&self, sample: usize, feature: usize) -> bool {
        self.mask[[sample, feature]]
    }

    /// Value of an observed cell, `None` when the cell is missing.
    pub fn get(&self, sample: usize, feature: usize) -> Option<f64> {
        self.mask[[sample, feature]].then(|| self.values[[sample, feature]])
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Copy with NaN written into every missing cell (canonical serialized form).
    pub fn to_nan_filled(&self) -> Array2<f64> {
        let mut out = self.values.clone();
        ndarray::Zip::from(&mut out).and(&self.mask).for_each(|v, &m| {
            if !m {
                *v = f64::NAN;
            }
        });
        out
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { values: row_major(self.values.select(Axis(0), rows)), mask: row_major(self.mask.select(Axis(0), rows)) }
    }

    /// Columns selected by index, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self { values: row_major(self.values.select(Axis(1), cols)), mask: row_major(self.mask.select(Axis(1), cols)) }
    }

    /// Observed entries of one column.
    pub fn observed_in_column(&self, feature: usize) -> Vec<f64> {
        self.values.column(feature).iter().zip(self.mask.column(feature)).filter(|(_, &m)| m).map(|(&v, _)| v).collect()
    }
}

/// Row-major copy unless already row-major. Reductions in this crate run in
/// memory order, so a fixed layout keeps results bit-identical.
pub fn row_major<T: Clone>(a: Array2<T>) -> Array2<T> {
    if has_c_strides(&a) {
        a
    } else {
        c_copy(a.view())
    }
}

/// Borrowed when already row-major with exact C strides, copied otherwise.
pub fn row_major_view<'a>(a: ArrayView2<'a, f64>) -> CowArray<'a, f64, Ix2> {
    if has_c_strides(&a) {
        CowArray::from(a)
    } else {
        CowArray::from(c_copy(a))
    }
}

// `is_standard_layout` accepts any stride on a length-1 axis, but matrix
// products still dispatch on the strides, so those are pinned too.
fn has_c_strides<S: ndarray::Data>(a: &ndarray::ArrayBase<S, Ix2>) -> bool {
    let (_, p) = a.dim();
    a.is_standard_layout() && a.strides() == [p as isize, 1]
}

fn c_copy<T: Clone>(a: ArrayView2<'_, T>) -> Array2<T> {
    Array2::from_shape_vec(a.raw_dim(), a.iter().cloned().collect()).expect("same element count")
}

/// Eigenvalues sorted non-increasing with matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Subtracts column means. Returns the centered matrix and the mean vector.
pub fn center_columns(x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Dimension(format!("cannot center an empty {}x{} matrix", x.nrows(), x.ncols())));
    }
    let x = row_major_view(x);
    let means = x.mean_axis(Axis(0)).expect("nonempty");
    let centered = &x - &means;
    Ok((centered, means))
}

/// Sample covariance `(1/(n-1)) Xcᵀ Xc`, exactly symmetric.
pub fn covariance(x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.nrows() < 2 {
        return Err(Error::InsufficientSamples { context: "covariance".into(), got: x.nrows(), need: 2 });
    }
    let (xc, _) = center_columns(x)?;
    let mut s = xc.t().dot(&xc);
    s /= (x.nrows() - 1) as f64;
    symmetrize_upper(&mut s);
    Ok(s)
}

fn symmetrize_upper(s: &mut Array2<f64>) {
    let p = s.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            s[[j, i]] = s[[i, j]];
        }
    }
}

fn max_asymmetry(s: ArrayView2<'_, f64>) -> f64 {
    let p = s.nrows();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            worst = worst.max((s[[i, j]] - s[[j, i]]).abs());
        }
    }
    worst
}

/// Keeps rows and columns `indices` of a square matrix.
pub fn principal_submatrix(s: ArrayView2<'_, f64>, indices: &[usize]) -> Result<Array2<f64>> {
    if s.nrows() != s.ncols() {
        return Err(Error::Dimension(format!("principal submatrix of non-square {}x{} matrix", s.nrows(), s.ncols())));
    }
    let p = s.nrows();
    let mut seen = vec![false; p];
    for &i in indices {
        if i >= p {
            return Err(Error::Index(format!("index {i} out of range for size {p}")));
        }
        if seen[i] {
            return Err(Error::Index(format!("duplicate index {i}")));
        }
        seen[i] = true;
    }
    Ok(Array2::from_shape_fn((indices.len(), indices.len()), |(a, b)| s[[indices[a], indices[b]]]))
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come out non-increasing. Each eigenvector is flipped so its
/// largest-magnitude entry is positive (first such entry on ties).
pub fn sym_eig(s: ArrayView2<'_, f64>) -> Result<Spectrum> {
    let p = s.nrows();
    let mut t = symmetric_rows(s)?;
    let mut d = vec![0.0; p];
    let mut e = vec![0.0; p];
    tridiagonalize(&mut t, &mut d, &mut e, p);
    ql_implicit(Some(&mut t), &mut d, &mut e, p)?;

    let order = descending_order(&d);
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut eigenvectors = Array2::zeros((p, p));
    for (col, &src) in order.iter().enumerate() {
        write_signed_column(&mut eigenvectors, col, &t[src * p..(src + 1) * p]);
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

/// All eigenvalues of `s` (non-increasing) together with eigenvectors for
/// only the leading `select(eigenvalues)` of them. The eigenvectors come from
/// inverse iteration on the tridiagonal form, which is much cheaper than the
/// full decomposition when few vectors are needed.
pub fn sym_eig_partial(s: ArrayView2<'_, f64>, select: impl FnOnce(&Array1<f64>) -> usize) -> Result<Spectrum> {
    let p = s.nrows();
    let mut t = symmetric_rows(s)?;
    let mut d = vec![0.0; p];
    let mut e = vec![0.0; p];
    householder_reduce(&mut t, &mut d, &mut e, p);
    let diag: Vec<f64> = (0..p).map(|j| t[j * p + j]).collect();
    let reflector_norms = d;
    e[0] = 0.0;
    let sub: Vec<f64> = e[1..].to_vec();

    let mut values = diag.clone();
    let mut off = e;
    ql_implicit(None, &mut values, &mut off, p)?;
    let eigenvalues = Array1::from_iter(descending_order(&values).into_iter().map(|i| values[i]));
    let count = select(&eigenvalues).min(p);

    let vectors = tridiagonal_eigenvectors(&diag, &sub, &eigenvalues.as_slice().expect("contiguous")[..count]);
    let mut eigenvectors = Array2::zeros((p, count));
    for (col, mut y) in vectors.into_iter().enumerate() {
        for i in 0..p.saturating_sub(1) {
            let h = reflector_norms[i + 1];
            if h != 0.0 {
                let u = &t[(i + 1) * p..(i + 1) * p + i + 1];
                let g = dot(u, &y[..=i]) / h;
                axpy(&mut y[..=i], -g, u);
            }
        }
        write_signed_column(&mut eigenvectors, col, &y);
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

fn descending_order(d: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

/// Writes `v` into column `col`, flipped so its largest-magnitude entry
/// (first on ties) is positive.
fn write_signed_column(out: &mut Array2<f64>, col: usize, v: &[f64]) {
    let mut pivot = 0;
    for k in 1..v.len() {
        if v[k].abs() > v[pivot].abs() {
            pivot = k;
        }
    }
    let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
    for (k, x) in v.iter().enumerate() {
        out[[k, col]] = sign * x;
    }
}

/// Validates squareness and symmetry, then returns a row-major copy with the
/// upper triangle mirrored.
fn symmetric_rows(s: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let p = s.nrows();
    if p != s.ncols() {
        return Err(Error::Dimension(format!("eigendecomposition of non-square {}x{} matrix", s.nrows(), s.ncols())));
    }
    if p == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let scale = s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let asym = max_asymmetry(s);
    if !(asym <= SYMMETRY_TOL * scale) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    let mut t = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            t[i * p + j] = if i <= j { s[[i, j]] } else { s[[j, i]] };
        }
    }
    Ok(t)
}

/// Eigendecomposition of a covariance-like (PSD) matrix. Eigenvalues in
/// `[-1e-9 * λ_max, 0)` are clamped to zero; anything more negative is an
/// error.
pub fn psd_eig(s: ArrayView2<'_, f64>) -> Result<Spectrum> {
    let mut spec = sym_eig(s)?;
    let lmax = spec.eigenvalues[0].max(0.0);
    let floor = -EIG_CLAMP_TOL * lmax.max(f64::MIN_POSITIVE);
    for v in spec.eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v >= floor || (lmax == 0.0 && v.abs() < 1e-300) {
                *v = 0.0;
            } else {
                return Err(Error::NegativeEigenvalue { value: *v });
            }
        }
    }
    Ok(spec)
}

/// Householder reduction to tridiagonal form. On entry `t` holds the
/// symmetric matrix; on exit its rows hold the accumulated transformation
/// (transposed), `d` the diagonal and `e[1..]` the subdiagonal.
fn tridiagonalize(t: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    householder_reduce(t, d, e, n);
    accumulate_reflectors(t, d, e, n);
}

/// Reduction half of [`tridiagonalize`]. On exit row `i` of `t` holds the
/// reflector `u_i` in its first `i` entries, `d[i]` its scaling `h_i`, the
/// diagonal of the tridiagonal form sits on the diagonal of `t` and `e[1..]`
/// holds the subdiagonal.
fn householder_reduce(t: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    // Indexing convention: V[a][b] == t[b * n + a].
    for j in 0..n {
        d[j] = t[j * n + (n - 1)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = t[j * n + (i - 1)];
                t[j * n + i] = 0.0;
                t[i * n + j] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                t[i * n + j] = f;
                let row = &t[j * n..j * n + i];
                g = e[j] + row[j] * f + dot(&row[j + 1..i], &d[j + 1..i]);
                axpy(&mut e[j + 1..i], f, &row[j + 1..i]);
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let row = &mut t[j * n..j * n + i];
                for k in j..i {
                    row[k] -= f * e[k] + g * d[k];
                }
                d[j] = t[j * n + (i - 1)];
                t[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }
}

fn accumulate_reflectors(t: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    for i in 0..n - 1 {
        t[i * n + (n - 1)] = t[i * n + i];
        t[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = t[(i + 1) * n + k] / h;
            }
            for j in 0..=i {
                let (head, tail) = t.split_at_mut((i + 1) * n);
                let src = &tail[..=i];
                let dst = &mut head[j * n..j * n + i + 1];
                let g = dot(src, dst);
                axpy(dst, -g, &d[..=i]);
            }
        }
        for k in 0..=i {
            t[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = t[j * n + (n - 1)];
        t[j * n + (n - 1)] = 0.0;
    }
    t[(n - 1) * n + (n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal `(d, e)`, rotating the rows of `t` when
/// eigenvectors are wanted.
fn ql_implicit(t: Option<&mut [f64]>, d: &mut [f64], e: &mut [f64], n: usize) -> Result<()> {
    let record = t.is_some();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let max_iter = 60 * n.max(1);
    let mut iterations = 0usize;
    let mut rotations: Vec<Rotation> = Vec::new();
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                iterations += 1;
                if iterations > max_iter {
                    return Err(Error::NoConvergence(max_iter));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    if record {
                        rotations.push(Rotation { row: i, c, s });
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    if let Some(t) = t {
        apply_rotations(t, n, &rotations);
    }
    Ok(())
}

/// LU factors of `T - μI` for a symmetric tridiagonal `T`, with partial
/// pivoting.
struct TridiagonalLu {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    upper2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn factor(a: &[f64], b: &[f64], mu: f64, tiny: f64) -> Self {
        let n = a.len();
        let mut diag: Vec<f64> = a.iter().map(|v| v - mu).collect();
        let mut lower = b.to_vec();
        let mut upper = b.to_vec();
        let mut upper2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if diag[i].abs() >= lower[i].abs() {
                if diag[i].abs() < tiny {
                    diag[i] = tiny;
                }
                let fact = lower[i] / diag[i];
                lower[i] = fact;
                diag[i + 1] -= fact * upper[i];
            } else {
                let fact = diag[i] / lower[i];
                diag[i] = lower[i];
                lower[i] = fact;
                let temp = upper[i];
                upper[i] = diag[i + 1];
                diag[i + 1] = temp - fact * diag[i + 1];
                if i + 2 < n {
                    upper2[i] = upper[i + 1];
                    upper[i + 1] = -fact * upper[i + 1];
                }
                swapped[i] = true;
            }
        }
        if diag[n - 1].abs() < tiny {
            diag[n - 1] = tiny;
        }
        Self { lower, diag, upper, upper2, swapped }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.lower[i] * x[i];
        }
        x[n - 1] /= self.diag[n - 1];
        if n > 1 {
            x[n - 2] = (x[n - 2] - self.upper[n - 2] * x[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (x[i] - self.upper[i] * x[i + 1] - self.upper2[i] * x[i + 2]) / self.diag[i];
        }
    }
}

/// Eigenvectors of the symmetric tridiagonal matrix with diagonal `a` and
/// off-diagonal `b` for the given non-increasing eigenvalues, by inverse
/// iteration. Vectors whose eigenvalues lie within `1e-3 * ‖T‖` of each other
/// are reorthogonalized against one another.
fn tridiagonal_eigenvectors(a: &[f64], b: &[f64], lambdas: &[f64]) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};

    const ITERATIONS: usize = 3;
    let n = a.len();
    let mut norm = 0.0f64;
    for i in 0..n {
        let left = if i > 0 { b[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { b[i].abs() } else { 0.0 };
        norm = norm.max(a[i].abs() + left + right);
    }
    if norm == 0.0 {
        norm = 1.0;
    }
    let tiny = f64::EPSILON * norm;
    let cluster_gap = 1e-3 * norm;
    let perturbation = 10.0 * f64::EPSILON * norm;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x1f83_d9ab_fb41_bd6b);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(lambdas.len());
    let mut cluster_start = 0;
    let mut previous_mu = f64::INFINITY;
    for (j, &lambda) in lambdas.iter().enumerate() {
        let mut mu = lambda;
        if j > 0 {
            if lambdas[j - 1] - lambda > cluster_gap {
                cluster_start = j;
            } else if previous_mu - mu < perturbation {
                mu = previous_mu - perturbation;
            }
        }
        previous_mu = mu;
        let lu = TridiagonalLu::factor(a, b, mu, tiny);
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..ITERATIONS {
            orthogonalize(&mut x, &out[cluster_start..j]);
            if !normalize(&mut x) {
                x = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                orthogonalize(&mut x, &out[cluster_start..j]);
                normalize(&mut x);
            }
            lu.solve(&mut x);
        }
        orthogonalize(&mut x, &out[cluster_start..j]);
        orthogonalize(&mut x, &out[cluster_start..j]);
        normalize(&mut x);
        out.push(x);
    }
    out
}

fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for v in basis {
        let g = dot(v, x);
        axpy(x, -g, v);
    }
}

fn normalize(x: &mut [f64]) -> bool {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return false;
    }
    x.iter_mut().for_each(|v| *v /= scale);
    let len = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= len);
    true
}

#[derive(Clone, Copy)]
struct Rotation {
    row: usize,
    c: f64,
    s: f64,
}

/// Replays the recorded Givens rotations on the rows of `t`, one column
/// chunk at a time so a chunk of every row stays in cache for the whole
/// sequence. Each element sees the same operations in the same order as
/// applying every rotation to full rows.
fn apply_rotations(t: &mut [f64], n: usize, rotations: &[Rotation]) {
    const CHUNK: usize = 32;
    let full = n - n % CHUNK;
    for k0 in (0..full).step_by(CHUNK) {
        for r in rotations {
            let (lo, hi) = t.split_at_mut((r.row + 1) * n);
            let a: &mut [f64; CHUNK] =
                (&mut lo[r.row * n + k0..r.row * n + k0 + CHUNK]).try_into().expect("chunk length");
            let b: &mut [f64; CHUNK] = (&mut hi[k0..k0 + CHUNK]).try_into().expect("chunk length");
            for l in 0..CHUNK {
                let hb = b[l];
                b[l] = r.s * a[l] + r.c * hb;
                a[l] = r.c * a[l] - r.s * hb;
            }
        }
    }
    let mut k0 = full;
    while k0 < n {
        let k1 = n;
        for r in rotations {
            let (lo, hi) = t.split_at_mut((r.row + 1) * n);
            let a = &mut lo[r.row * n + k0..r.row * n + k1];
            let b = &mut hi[k0..k1];
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let hb = *y;
                *y = r.s * *x + r.c * hb;
                *x = r.c * *x - r.s * hb;
            }
        }
        k0 = k1;
    }
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let split = a.len() - a.len() % 4;
    for (ca, cb) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in a[split..].iter().zip(&b[split..]) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thin singular value decomposition `A ≈ U diag(σ) Vᵀ`, truncated.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<f64>,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U diag(σ) Vᵀ` with the given singular values substituted.
    pub fn reconstruct_with(&self, sigma: &Array1<f64>) -> Array2<f64> {
        let scaled = &self.u * sigma;
        scaled.dot(&self.v.t())
    }
}

/// Leading `max_rank` singular triplets, computed from the eigendecomposition
/// of the smaller Gram matrix. Triplets whose singular value is below
/// `1e-12 * σ_max` are dropped, so the returned rank may be smaller.
pub fn truncated_svd(a: ArrayView2<'_, f64>, max_rank: usize) -> Result<Svd> {
    truncated_svd_above(a, max_rank, |_| 0.0)
}

/// Like [`truncated_svd`], additionally dropping triplets with
/// `σ <= floor(σ_max)`. Only the kept singular vectors are computed.
pub fn truncated_svd_above(a: ArrayView2<'_, f64>, max_rank: usize, floor: impl FnOnce(f64) -> f64) -> Result<Svd> {
    let (n, p) = a.dim();
    if n == 0 || p == 0 {
        return Err(Error::Dimension("svd of an empty matrix".into()));
    }
    let tall = n >= p;
    let mut gram = if tall { a.t().dot(&a) } else { a.dot(&a.t()) };
    symmetrize_upper(&mut gram);
    let spec = sym_eig_partial(gram.view(), |ev| {
        let smax = ev[0].max(0.0).sqrt();
        let cutoff = (smax * 1e-12).max(floor(smax));
        ev.iter()
            .take(max_rank)
            .take_while(|&&l| {
                let sigma = l.max(0.0).sqrt();
                sigma > cutoff && sigma > 0.0
            })
            .count()
    })?;
    let keep = spec.eigenvectors.ncols();
    let sigma = spec.eigenvalues.slice(ndarray::s![..keep]).mapv(|l| l.max(0.0).sqrt());
    let basis = spec.eigenvectors.slice(ndarray::s![.., ..keep]).to_owned();
    let other = if tall { a.dot(&basis) } else { a.t().dot(&basis) } / &sigma;
    let (u, v) = if tall { (other, basis) } else { (basis, other) };
    Ok(Svd { u, singular_values: sigma, v })
}

pub fn frobenius_norm(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn trace(a: ArrayView2<'_, f64>) -> f64 {
    a.diag().sum()
}

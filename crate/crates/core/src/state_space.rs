//! Linear Gauss-Markov state-space models and their N-block structure.
//!
//! Block vectors are stacked newest sample first: for a block starting at
//! time `kN`, block position 0 holds sample `kN + N - 1` and position `N - 1`
//! holds sample `kN`. Observability matrices therefore carry `C A^{N-1}` in
//! their top block row and `C` in the bottom one. [`block_position`] is the
//! single place that encodes this.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative singular-value threshold used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

/// `x_{t+1} = A x_t + B u_t`, `y_t = C x_t + v_t`, with the risk-sensitive
/// output `D x_t` weighting the estimation error.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

/// Which output map a block matrix is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    /// The measured output `C`.
    Measured,
    /// The risk-sensitive output `D`.
    Risk,
}

impl StateSpaceModel {
    /// Validates dimensions and the full-row-rank condition on `D`.
    /// `D` defaults to the identity.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension {
                context: "A must be square and nonempty",
                expected: (n.max(1), n.max(1)),
                found: a.shape(),
            });
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension {
                context: "B must have n rows",
                expected: (n, b.ncols().max(1)),
                found: b.shape(),
            });
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::Dimension {
                context: "C must have n columns",
                expected: (c.nrows().max(1), n),
                found: c.shape(),
            });
        }
        let d = d.unwrap_or_else(|| DMatrix::identity(n, n));
        if d.ncols() != n || d.nrows() == 0 || d.nrows() > n {
            return Err(Error::Dimension {
                context: "D must be q x n with 1 <= q <= n",
                expected: (d.nrows().clamp(1, n), n),
                found: d.shape(),
            });
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(alloc::format!("{name} has non-finite entries")));
            }
        }
        if rank(&d) < d.nrows() {
            return Err(Error::invalid("D must have full row rank"));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Process-noise dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Measurement dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Risk-output dimension.
    pub fn q(&self) -> usize {
        self.d.nrows()
    }

    pub fn output(&self, which: Output) -> &DMatrix<f64> {
        match which {
            Output::Measured => &self.c,
            Output::Risk => &self.d,
        }
    }

    /// The two-state example with an unstable, weakly observable mode:
    /// `A = [[0.1, 1], [0, 1.2]]`, `C = [1, -1]`, `B = D = I`.
    pub fn weakly_observable_example() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, 1.2]),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            None,
        )
        .expect("example model is valid")
    }
}

/// Block position of the sample at offset `k` (time `kN + k`) inside an
/// `N`-block stacked vector.
pub fn block_position(block_len: usize, offset: usize) -> usize {
    debug_assert!(offset < block_len);
    block_len - 1 - offset
}

fn check_block_len(block_len: usize) -> Result<()> {
    if block_len == 0 {
        return Err(Error::invalid("block length N must be at least 1"));
    }
    Ok(())
}

/// `R_N = [B, AB, ..., A^{N-1} B]`.
pub fn reachability_matrix(model: &StateSpaceModel, block_len: usize) -> Result<DMatrix<f64>> {
    check_block_len(block_len)?;
    let (n, m) = (model.n(), model.m());
    let mut r = DMatrix::zeros(n, block_len * m);
    // column block j multiplies u at offset N-1-j, which reaches x_{(k+1)N} through A^j
    let mut apow_b = model.b.clone();
    for j in 0..block_len {
        debug_assert_eq!(block_position(block_len, block_len - 1 - j), j);
        r.view_mut((0, j * m), (n, m)).copy_from(&apow_b);
        apow_b = &model.a * apow_b;
    }
    Ok(r)
}

/// `O_N` (or `O_N^R` for the risk output) with `X A^{N-1}` in the top block row
/// and `X` in the bottom one.
pub fn observability_matrix(
    model: &StateSpaceModel,
    block_len: usize,
    which: Output,
) -> Result<DMatrix<f64>> {
    check_block_len(block_len)?;
    let x = model.output(which);
    let (r, n) = x.shape();
    let mut o = DMatrix::zeros(block_len * r, n);
    let mut x_apow = x.clone();
    for offset in 0..block_len {
        let i = block_position(block_len, offset);
        o.view_mut((i * r, 0), (r, n)).copy_from(&x_apow);
        x_apow *= &model.a;
    }
    Ok(o)
}

/// Strictly upper block-triangular Toeplitz matrix of the impulse response
/// from process noise to `X`: block `(i, j)` is `X A^{j-i-1} B` for `j > i`.
pub fn impulse_toeplitz(
    model: &StateSpaceModel,
    block_len: usize,
    which: Output,
) -> Result<DMatrix<f64>> {
    check_block_len(block_len)?;
    let x = model.output(which);
    let r = x.nrows();
    let m = model.m();
    let mut t = DMatrix::zeros(block_len * r, block_len * m);
    // x_apow = X A^{lag-1}
    let mut x_apow = x.clone();
    for lag in 1..block_len {
        let markov = &x_apow * &model.b;
        for out_offset in lag..block_len {
            let i = block_position(block_len, out_offset);
            let j = block_position(block_len, out_offset - lag);
            t.view_mut((i * r, j * m), (r, m)).copy_from(&markov);
        }
        x_apow *= &model.a;
    }
    Ok(t)
}

/// Numerical rank with relative singular-value threshold [`RANK_TOL`].
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

pub fn is_reachable(model: &StateSpaceModel) -> bool {
    reachability_matrix(model, model.n()).is_ok_and(|r| rank(&r) == model.n())
}

pub fn is_observable(model: &StateSpaceModel) -> bool {
    observability_matrix(model, model.n(), Output::Measured).is_ok_and(|o| rank(&o) == model.n())
}

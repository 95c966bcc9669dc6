//! Tensor-train machinery shared by the pure and mixed engines.
//!
//! Site tensors are stored as `(left, physical, purification, right)`. Pure
//! states carry a purification extent of 1.

use ndarray::{Array2, ArrayView2};

use crate::error::{dim_err, param_err, Result};
use crate::linalg::adjoint;
use crate::model::GateLayer;
use crate::tensor::{gauge, qr_positive, truncated_svd_matrix};
use crate::{c64, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Truncation {
    pub max_bond: usize,
    pub cutoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Train {
    pub sites: Vec<Tensor>,
    /// Site holding the norm when the train is in mixed-canonical form.
    pub center: Option<usize>,
}

pub(crate) fn dims(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}

fn owned(mat: Array2<c64>, shape: &[usize]) -> Result<Tensor> {
    Tensor::from_matrix(mat, shape)
}

impl Train {
    pub fn new(sites: Vec<Tensor>) -> Result<Self> {
        if sites.len() < 2 {
            return Err(param_err("a train needs at least two sites"));
        }
        let phys = sites[0].shape().get(1).copied().unwrap_or(0);
        for (j, t) in sites.iter().enumerate() {
            if t.rank() != 4 {
                return Err(dim_err(format!("site {j} has rank {}", t.rank())));
            }
            if t.shape()[1] != phys {
                return Err(dim_err(format!("site {j} has physical extent {}", t.shape()[1])));
            }
        }
        if sites[0].shape()[0] != 1 || sites[sites.len() - 1].shape()[3] != 1 {
            return Err(dim_err("boundary bonds must have extent 1"));
        }
        for (j, w) in sites.windows(2).enumerate() {
            if w[0].shape()[3] != w[1].shape()[0] {
                return Err(dim_err(format!(
                    "bond {j}: {} vs {}",
                    w[0].shape()[3],
                    w[1].shape()[0]
                )));
            }
        }
        Ok(Self {
            sites,
            center: None,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn phys(&self) -> usize {
        self.sites[0].shape()[1]
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.len() - 1]
            .iter()
            .map(|t| t.shape()[3])
            .collect()
    }

    fn shift_right(&mut self, j: usize) -> Result<()> {
        let (l, p, k, _) = dims(&self.sites[j]);
        let (q, r) = qr_positive(self.sites[j].as_matrix(3))?;
        let chi = q.ncols();
        self.sites[j] = owned(q, &[l, p, k, chi])?;
        let (_, p2, k2, r2) = dims(&self.sites[j + 1]);
        let m = r.dot(&self.sites[j + 1].as_matrix(1));
        self.sites[j + 1] = owned(m, &[chi, p2, k2, r2])?;
        Ok(())
    }

    fn shift_left(&mut self, j: usize) -> Result<()> {
        let (_, p, k, r) = dims(&self.sites[j]);
        // M = R^† Q^† from the QR of M^†
        let adj = adjoint(&self.sites[j].as_matrix(1).to_owned());
        let (q, rr) = qr_positive(adj.view())?;
        let chi = q.ncols();
        self.sites[j] = owned(adjoint(&q), &[chi, p, k, r])?;
        let (l0, p0, k0, _) = dims(&self.sites[j - 1]);
        let m = self.sites[j - 1].as_matrix(3).dot(&adjoint(&rr));
        self.sites[j - 1] = owned(m, &[l0, p0, k0, chi])?;
        Ok(())
    }

    /// Move the orthogonality center to `to`, gauging fully if needed.
    pub fn move_center(&mut self, to: usize) -> Result<()> {
        if to >= self.len() {
            return Err(param_err(format!("site {to} out of range")));
        }
        match self.center {
            None => {
                self.sites = gauge(&self.sites, to)?;
            }
            Some(c) => {
                for j in c..to {
                    self.shift_right(j)?;
                }
                for j in (to + 1..=c).rev() {
                    self.shift_left(j)?;
                }
            }
        }
        self.center = Some(to);
        Ok(())
    }

    /// `<X|X>`, the squared norm of the vectorized train.
    pub fn norm_sqr(&self) -> f64 {
        match self.center {
            Some(c) => self.sites[c].norm_sqr(),
            None => {
                let mut env = Array2::from_elem((1, 1), c64::new(1.0, 0.0));
                for t in &self.sites {
                    env = transfer(&env, t, None);
                }
                env[(0, 0)].re
            }
        }
    }

    /// Rescale to unit norm; returns the norm before rescaling.
    pub fn normalize(&mut self) -> Result<f64> {
        if self.center.is_none() {
            self.move_center(0)?;
        }
        let c = self.center.unwrap_or(0);
        let n = self.sites[c].norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(crate::Error::Numerical {
                rows: 1,
                cols: 1,
                message: format!("cannot normalize a state of norm {n}"),
            });
        }
        self.sites[c].scale(c64::new(1.0 / n, 0.0));
        Ok(n)
    }

    /// Apply one gate to the bond `(j, j+1)`. The center must sit on `j` or
    /// `j+1`; it ends on `j+1` when `rightward`, else on `j`.
    fn apply_gate(
        &mut self,
        j: usize,
        gate: ArrayView2<'_, c64>,
        trunc: Truncation,
        rightward: bool,
    ) -> Result<f64> {
        let (l, p, k1, _) = dims(&self.sites[j]);
        let (_, _, k2, r) = dims(&self.sites[j + 1]);
        if gate.dim() != (p * p, p * p) {
            return Err(dim_err(format!(
                "gate {:?} does not act on two sites of extent {p}",
                gate.dim()
            )));
        }
        let theta = self.sites[j].as_matrix(3).dot(&self.sites[j + 1].as_matrix(1));
        let theta = Tensor::from_matrix(theta, &[l, p, k1, p, k2, r])?;
        let moved = theta.permute(&[1, 3, 0, 2, 4, 5])?;
        let applied = gate.dot(&moved.as_matrix(2));
        let applied = Tensor::from_matrix(applied, &[p, p, l, k1, k2, r])?;
        let theta = applied.permute(&[2, 0, 3, 1, 4, 5])?;

        let svd = truncated_svd_matrix(theta.as_matrix(3), trunc.max_bond, trunc.cutoff)?;
        let chi = svd.rank();
        let mut u = svd.left_isometry;
        let mut v = svd.right_isometry;
        if rightward {
            for (i, x) in v.data_mut().iter_mut().enumerate() {
                *x *= svd.singular_values[i / (p * k2 * r)];
            }
        } else {
            for (i, x) in u.data_mut().iter_mut().enumerate() {
                *x *= svd.singular_values[i % chi];
            }
        }
        self.sites[j] = u.reshape(&[l, p, k1, chi])?;
        self.sites[j + 1] = v.reshape(&[chi, p, k2, r])?;
        self.center = Some(if rightward { j + 1 } else { j });
        Ok(svd.discarded_weight)
    }

    /// Apply every gate of a layer, sweeping from whichever end is closer to
    /// the current center. Returns the summed discarded weight.
    pub fn apply_layer(&mut self, layer: &GateLayer, trunc: Truncation, normalize: bool) -> Result<f64> {
        if layer.gates.is_empty() {
            return Ok(0.0);
        }
        let first = layer.gates[0].0;
        let last = layer.gates[layer.gates.len() - 1].0 + 1;
        let c = match self.center {
            Some(c) => c,
            None => {
                self.move_center(first)?;
                first
            }
        };
        let rightward = c.abs_diff(first) <= c.abs_diff(last);
        let mut discarded = 0.0;
        let order: Vec<&(usize, Tensor)> = if rightward {
            layer.gates.iter().collect()
        } else {
            layer.gates.iter().rev().collect()
        };
        for (bond, gate) in order {
            let bond = *bond;
            if bond + 1 >= self.len() {
                return Err(param_err(format!("bond {bond} outside chain of {}", self.len())));
            }
            self.move_center(if rightward { bond } else { bond + 1 })?;
            discarded += self.apply_gate(bond, gate.as_matrix(1), trunc, rightward)?;
        }
        if normalize {
            self.normalize()?;
        }
        Ok(discarded)
    }

    /// Apply layers in order, fusing runs of consecutive same-parity layers.
    pub fn apply_layers(&mut self, layers: &[GateLayer], trunc: Truncation, normalize: bool) -> Result<f64> {
        let mut discarded = 0.0;
        let mut i = 0;
        while i < layers.len() {
            let mut fused = layers[i].clone();
            let mut k = i + 1;
            while k < layers.len() && layers[k].parity == fused.parity {
                fused = fused.then(&layers[k])?;
                k += 1;
            }
            discarded += self.apply_layer(&fused, trunc, normalize)?;
            i = k;
        }
        Ok(discarded)
    }

    /// Re-split every bond under `trunc` after a right-to-left sweep.
    pub fn compress(&mut self, trunc: Truncation) -> Result<f64> {
        let n = self.len();
        self.move_center(n - 1)?;
        let mut discarded = 0.0;
        for j in (0..n - 1).rev() {
            let (l, p, k1, _) = dims(&self.sites[j]);
            let (_, _, k2, r) = dims(&self.sites[j + 1]);
            let theta = self.sites[j].as_matrix(3).dot(&self.sites[j + 1].as_matrix(1));
            let svd = truncated_svd_matrix(theta.view(), trunc.max_bond, trunc.cutoff)?;
            let chi = svd.rank();
            let mut u = svd.left_isometry;
            for (i, x) in u.data_mut().iter_mut().enumerate() {
                *x *= svd.singular_values[i % chi];
            }
            self.sites[j] = u.reshape(&[l, p, k1, chi])?;
            self.sites[j + 1] = svd.right_isometry.reshape(&[chi, p, k2, r])?;
            self.center = Some(j);
            discarded += svd.discarded_weight;
        }
        Ok(discarded)
    }

    /// Left environments: `envs[j]` contracts sites `0..j` with their conjugate.
    pub fn left_envs(&self) -> Vec<Array2<c64>> {
        let mut envs = Vec::with_capacity(self.len() + 1);
        envs.push(Array2::from_elem((1, 1), c64::new(1.0, 0.0)));
        for t in &self.sites {
            let next = transfer(envs.last().unwrap(), t, None);
            envs.push(next);
        }
        envs
    }

    /// Right environments: `envs[j]` contracts sites `j..L`, `envs[L]` is 1.
    pub fn right_envs(&self) -> Vec<Array2<c64>> {
        let n = self.len();
        let mut envs = vec![Array2::from_elem((1, 1), c64::new(1.0, 0.0)); n + 1];
        for j in (0..n).rev() {
            envs[j] = transfer_left(&envs[j + 1], &self.sites[j], None);
        }
        envs
    }

    /// `sum conj(X) (prod ops) X` for single-site operators on strictly
    /// increasing sites.
    pub fn expectation(&self, ops: &[(usize, Array2<c64>)]) -> Result<c64> {
        check_ops(ops, self.len(), self.phys())?;
        let mut env = Array2::from_elem((1, 1), c64::new(1.0, 0.0));
        let mut next = ops.iter().peekable();
        for (j, t) in self.sites.iter().enumerate() {
            let op = match next.peek() {
                Some((s, m)) if *s == j => {
                    next.next();
                    Some(m.view())
                }
                _ => None,
            };
            env = transfer(&env, t, op);
        }
        Ok(env[(0, 0)])
    }

    /// Expectation of a `d² x d²` operator on bond `(j, j+1)`, with
    /// precomputed environments.
    pub fn bond_expectation(
        &self,
        j: usize,
        op: ArrayView2<'_, c64>,
        left: &[Array2<c64>],
        right: &[Array2<c64>],
    ) -> Result<c64> {
        let (l, p, k1, _) = dims(&self.sites[j]);
        let (_, _, k2, r) = dims(&self.sites[j + 1]);
        if op.dim() != (p * p, p * p) {
            return Err(dim_err("bond operator extent mismatch"));
        }
        let theta = self.sites[j].as_matrix(3).dot(&self.sites[j + 1].as_matrix(1));
        let theta = Tensor::from_matrix(theta, &[l, p, k1, p, k2, r])?;
        let moved = theta.permute(&[1, 3, 0, 2, 4, 5])?;
        let applied = op.dot(&moved.as_matrix(2));
        let applied = Tensor::from_matrix(applied, &[p, p, l, k1, k2, r])?;
        let applied = applied.permute(&[2, 0, 3, 1, 4, 5])?;
        // <theta| L (op theta) R>
        let lt = left[j].dot(&applied.as_matrix(1));
        let lt = Tensor::from_matrix(lt, &[l, p, k1, p, k2, r])?;
        let ltr = lt.as_matrix(5).dot(&right[j + 2].t());
        let mut acc = c64::new(0.0, 0.0);
        for (a, b) in theta.data().iter().zip(ltr.iter()) {
            acc += a.conj() * b;
        }
        Ok(acc)
    }

    /// Full matrix `M[j][k] = sum conj(X) a_j^† a_k X` of a two-point
    /// string of single-site operators, with `a^† a` used on the diagonal.
    pub fn two_point_matrix(&self, a: &Array2<c64>) -> Result<Array2<c64>> {
        let n = self.len();
        let ad = adjoint(a);
        let left = self.left_envs();
        let right = self.right_envs();
        let mut out = Array2::<c64>::zeros((n, n));
        let diag = ad.dot(a);
        for j in 0..n {
            let e = transfer(&left[j], &self.sites[j], Some(diag.view()));
            out[(j, j)] = close(&e, &right[j + 1]);
            let mut e = transfer(&left[j], &self.sites[j], Some(ad.view()));
            for k in j + 1..n {
                let with_a = transfer(&e, &self.sites[k], Some(a.view()));
                out[(j, k)] = close(&with_a, &right[k + 1]);
                if k + 1 < n {
                    e = transfer(&e, &self.sites[k], None);
                }
            }
        }
        for j in 0..n {
            for k in 0..j {
                out[(j, k)] = out[(k, j)].conj();
            }
        }
        Ok(out)
    }

    /// Dense vectorization with site 0 most significant; purification
    /// indices are kept next to their physical index.
    pub fn to_dense(&self) -> Result<Vec<c64>> {
        let total: usize = self.sites.iter().map(|t| t.shape()[1] * t.shape()[2]).product();
        if total > 1 << 22 {
            return Err(crate::Error::Resource(format!("dense vector of {total} entries")));
        }
        let mut acc = self.sites[0].as_matrix(3).to_owned();
        for t in &self.sites[1..] {
            let (l, p, k, r) = dims(t);
            let m = acc.dot(&t.as_matrix(1));
            let rows = m.nrows() * p * k;
            acc = Array2::from_shape_vec((rows, r), crate::tensor::matrix_into_vec(m))
                .map_err(|e| dim_err(e.to_string()))?;
            debug_assert_eq!(l, t.shape()[0]);
        }
        Ok(acc.iter().copied().collect())
    }
}

/// `<a|b>` for two trains of equal length and local extents.
pub(crate) fn overlap(a: &Train, b: &Train) -> Result<c64> {
    if a.len() != b.len() {
        return Err(dim_err("overlap of trains of different length"));
    }
    let mut env = Array2::from_elem((1, 1), c64::new(1.0, 0.0));
    for (x, y) in a.sites.iter().zip(&b.sites) {
        let (_, p, k, _) = dims(x);
        let (l, p2, k2, r) = dims(y);
        if (p, k) != (p2, k2) {
            return Err(dim_err("overlap of trains with different local extents"));
        }
        let ey = env.dot(&y.as_matrix(1));
        let ey = Array2::from_shape_vec((ey.nrows() * p * k, r), crate::tensor::matrix_into_vec(ey))
            .map_err(|e| dim_err(e.to_string()))?;
        debug_assert_eq!(l, y.shape()[0]);
        env = x.as_matrix(3).t().mapv(|v| v.conj()).dot(&ey);
    }
    Ok(env[(0, 0)])
}

/// `ca |a> + cb |b>` as a train with block-diagonal bonds.
pub(crate) fn direct_sum(a: &Train, ca: c64, b: &Train, cb: c64) -> Result<Train> {
    let n = a.len();
    if n != b.len() {
        return Err(dim_err("sum of trains of different length"));
    }
    let mut sites = Vec::with_capacity(n);
    for j in 0..n {
        let (la, p, k, ra) = dims(&a.sites[j]);
        let (lb, pb, kb, rb) = dims(&b.sites[j]);
        if (p, k) != (pb, kb) {
            return Err(dim_err("sum of trains with different local extents"));
        }
        let (l, r) = (
            if j == 0 { 1 } else { la + lb },
            if j == n - 1 { 1 } else { ra + rb },
        );
        let (oa, ob) = (if j == 0 { ca } else { c64::new(1.0, 0.0) }, if j == 0 { cb } else { c64::new(1.0, 0.0) });
        let mut t = Tensor::zeros(&[l, p, k, r]);
        for (src, scale, lo, ro) in [
            (&a.sites[j], oa, 0, 0),
            (&b.sites[j], ob, if j == 0 { 0 } else { la }, if j == n - 1 { 0 } else { ra }),
        ] {
            let (sl, _, _, sr) = dims(src);
            for x in 0..sl {
                for i in 0..p {
                    for q in 0..k {
                        for y in 0..sr {
                            t.set(&[x + lo, i, q, y + ro], src.get(&[x, i, q, y]) * scale);
                        }
                    }
                }
            }
        }
        sites.push(t);
    }
    Train::new(sites)
}

/// Remove every component outside total particle number `n0` by repeated
/// phase twirls `(ψ + e^{iφ(N - n0)} ψ) / 2` with `φ = π, π/2, π/4, ...`.
/// Returns the discarded weight of the compressions.
pub(crate) fn number_filter(train: &mut Train, n0: usize, trunc: Truncation) -> Result<f64> {
    let d = train.phys();
    let max_n = train.len() * (d - 1);
    let span = n0.max(max_n.saturating_sub(n0));
    let mut discarded = 0.0;
    let mut phi = std::f64::consts::PI;
    let mut period = 1usize;
    while period <= span {
        let mut twisted = train.clone();
        for t in &mut twisted.sites {
            let shape = t.shape().to_vec();
            let inner = shape[2] * shape[3];
            for (i, x) in t.data_mut().iter_mut().enumerate() {
                let n = (i / inner) % shape[1];
                *x *= c64::from_polar(1.0, phi * n as f64);
            }
        }
        twisted.center = None;
        let shift = c64::from_polar(0.5, -phi * n0 as f64);
        let mut sum = direct_sum(train, c64::new(0.5, 0.0), &twisted, shift)?;
        discarded += sum.compress(trunc)?;
        *train = sum;
        phi /= 2.0;
        period *= 2;
    }
    Ok(discarded)
}

/// Apply `n` Trotter steps produced by `make`, fusing the closing half-layer
/// of each step into the opening one of the next. Returns the discarded
/// weight per step.
pub(crate) fn run_steps(
    train: &mut Train,
    n: usize,
    make: impl FnMut(usize) -> Result<[GateLayer; 3]>,
    trunc: Truncation,
    normalize: bool,
) -> Result<Vec<f64>> {
    run_steps_from(train, 0..n, make, trunc, normalize, false, true)
}

/// Steps `range` of a fused sequence. `pending` says the closing half-layer
/// of step `range.start - 1` has not been applied yet; with `close` false
/// the closing half-layer of the last step is left pending in turn.
pub(crate) fn run_steps_from(
    train: &mut Train,
    range: std::ops::Range<usize>,
    mut make: impl FnMut(usize) -> Result<[GateLayer; 3]>,
    trunc: Truncation,
    normalize: bool,
    pending: bool,
    close: bool,
) -> Result<Vec<f64>> {
    let mut log = Vec::with_capacity(range.len());
    let mut open: Option<GateLayer> = match (pending, range.start) {
        (false, _) => None,
        (true, 0) => return Err(param_err("no step precedes step 0")),
        (true, s) => Some(make(s - 1)?[2].clone()),
    };
    for s in range {
        let [a, b, c] = make(s)?;
        let first = match open.take() {
            Some(p) => p.then(&a)?,
            None => a,
        };
        let mut w = train.apply_layer(&first, trunc, normalize)?;
        w += train.apply_layer(&b, trunc, normalize)?;
        log.push(w);
        open = Some(c);
    }
    if close {
        if let Some(p) = open {
            let w = train.apply_layer(&p, trunc, normalize)?;
            match log.last_mut() {
                Some(last) => *last += w,
                None => log.push(w),
            }
        }
    }
    Ok(log)
}

fn check_ops(ops: &[(usize, Array2<c64>)], n: usize, d: usize) -> Result<()> {
    for w in ops.windows(2) {
        if w[0].0 >= w[1].0 {
            return Err(param_err("operator sites must be strictly increasing"));
        }
    }
    for (s, m) in ops {
        if *s >= n {
            return Err(param_err(format!("site {s} out of range for length {n}")));
        }
        if m.dim() != (d, d) {
            return Err(dim_err(format!("operator on site {s} is {:?}, expected {d}x{d}", m.dim())));
        }
    }
    Ok(())
}

/// `E'[b', b] = sum conj(A[a', p', k, b']) op[p', p] E[a', a] A[a, p, k, b]`.
pub(crate) fn transfer(env: &Array2<c64>, t: &Tensor, op: Option<ArrayView2<'_, c64>>) -> Array2<c64> {
    let (l, p, k, r) = dims(t);
    let ea = env.dot(&t.as_matrix(1));
    let ea = match op {
        Some(op) => {
            let m = Tensor::from_matrix(ea, &[l, p, k * r]).expect("shape");
            let moved = m.permute(&[1, 0, 2]).expect("perm");
            let applied = op.dot(&moved.as_matrix(1));
            let back = Tensor::from_matrix(applied, &[p, l, k * r]).expect("shape");
            let back = back.permute(&[1, 0, 2]).expect("perm");
            let back = back.reshape(&[l * p * k, r]).expect("shape");
            back.as_matrix(1).to_owned()
        }
        None => Array2::from_shape_vec((l * p * k, r), crate::tensor::matrix_into_vec(ea)).expect("shape"),
    };
    let a = t.as_matrix(3);
    a.t().mapv(|x| x.conj()).dot(&ea)
}

/// Right-to-left counterpart of [`transfer`]: `E[a', a]` from `E'[b', b]`.
fn transfer_left(env: &Array2<c64>, t: &Tensor, op: Option<ArrayView2<'_, c64>>) -> Array2<c64> {
    debug_assert!(op.is_none());
    let (l, p, k, r) = dims(t);
    // A[a, (p k b)] E^T -> contract b with E[b', b]
    let a = t.as_matrix(3);
    let ae = a.dot(&env.t());
    let ae = Array2::from_shape_vec((l, p * k * r), crate::tensor::matrix_into_vec(ae)).expect("shape");
    let ac = t.as_matrix(1).mapv(|x| x.conj());
    ac.dot(&ae.t())
}

fn close(env: &Array2<c64>, right: &Array2<c64>) -> c64 {
    env.iter().zip(right.iter()).map(|(a, b)| a * b).sum()
}

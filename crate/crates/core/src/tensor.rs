//! Calculus shared by both tensor network families.
//!
//! A rank term is ∏_j g_j(x_j). The operator applied to it at one point is
//!
//!   S = w0 ∏ g + Σ_a (w1_a g'_a + w2_aa g''_a) ∏_{j≠a} g + Σ_{a<b} 2 w2_ab g'_a g'_b ∏_{j≠a,b} g,
//!
//! which is multilinear in the per-factor jets (g, g', g''). It is evaluated by
//! one left-to-right sweep in O(d²) and differentiated by the reverse sweep.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Value and first two derivatives of a one-dimensional function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet<T> {
    pub v: T,
    pub d1: T,
    pub d2: T,
}

impl<T: Real> Jet<T> {
    pub fn new(v: T, d1: T, d2: T) -> Self {
        Self { v, d1, d2 }
    }

    pub fn zero() -> Self {
        Self { v: T::zero(), d1: T::zero(), d2: T::zero() }
    }

    /// Leibniz rule for (self · other).
    pub fn mul(self, o: Self) -> Self {
        let two = T::one() + T::one();
        Self {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + two * self.d1 * o.d1 + self.v * o.d2,
        }
    }

    /// Adjoint of `o` in `self · o` (self held fixed), given the product adjoint.
    pub fn mul_adjoint(self, bar: Self) -> Self {
        let two = T::one() + T::one();
        Self {
            v: self.v * bar.v + self.d1 * bar.d1 + self.d2 * bar.d2,
            d1: self.v * bar.d1 + two * self.d1 * bar.d2,
            d2: self.v * bar.d2,
        }
    }
}

/// Coefficients of the expanded operator at one point:
/// Lp = w0 p + Σ w1_k ∂_k p + Σ w2_ij ∂_ij p, with w2 symmetric row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOperator<T> {
    pub w0: T,
    pub w1: Vec<T>,
    pub w2: Vec<T>,
}

impl<T: Real> PointOperator<T> {
    pub fn from_f64(zeroth: f64, first: &[f64], second: &[f64]) -> Self {
        Self {
            w0: T::of(zeroth),
            w1: first.iter().map(|&v| T::of(v)).collect(),
            w2: second.iter().map(|&v| T::of(v)).collect(),
        }
    }
}

/// Forward-sweep states, kept so the reverse sweep can reuse them.
#[derive(Debug, Clone, Default)]
pub struct Sweep<T> {
    s0: Vec<T>,
    s1: Vec<T>,
    s2: Vec<T>,
    /// Row j holds the pending pair sums t_b before step j.
    t: Vec<T>,
}

impl<T: Real> Sweep<T> {
    pub fn new(d: usize) -> Self {
        Self { s0: vec![T::zero(); d + 1], s1: vec![T::zero(); d + 1], s2: vec![T::zero(); d + 1], t: vec![T::zero(); (d + 1) * d] }
    }
}

/// S for one rank term.
pub fn contract<T: Real>(jets: &[Jet<T>], op: &PointOperator<T>, sw: &mut Sweep<T>) -> T {
    let d = jets.len();
    let two = T::one() + T::one();
    sw.s0[0] = T::one();
    sw.s1[0] = T::zero();
    sw.s2[0] = T::zero();
    for b in 0..d {
        sw.t[b] = T::zero();
    }
    for j in 0..d {
        let g = jets[j];
        let (s0, s1, s2) = (sw.s0[j], sw.s1[j], sw.s2[j]);
        let tj = sw.t[j * d + j];
        sw.s2[j + 1] = s2 * g.v + tj * g.d1;
        for b in j + 1..d {
            sw.t[(j + 1) * d + b] = sw.t[j * d + b] * g.v + two * op.w2[j * d + b] * g.d1 * s0;
        }
        sw.s1[j + 1] = s1 * g.v + (op.w1[j] * g.d1 + op.w2[j * d + j] * g.d2) * s0;
        sw.s0[j + 1] = s0 * g.v;
    }
    op.w0 * sw.s0[d] + sw.s1[d] + sw.s2[d]
}

/// Adds `seed · ∂S/∂(g_j, g'_j, g''_j)` into `adj[j]`; `sw` must hold the
/// forward sweep of [`contract`] on the same jets.
pub fn contract_adjoint<T: Real>(jets: &[Jet<T>], op: &PointOperator<T>, sw: &Sweep<T>, seed: T, adj: &mut [Jet<T>], tbar: &mut Vec<T>) {
    let d = jets.len();
    let two = T::one() + T::one();
    let mut s0b = op.w0 * seed;
    let mut s1b = seed;
    let mut s2b = seed;
    tbar.clear();
    tbar.resize(d, T::zero());
    for j in (0..d).rev() {
        let g = jets[j];
        let (s0, s1, s2) = (sw.s0[j], sw.s1[j], sw.s2[j]);
        let row = &sw.t[j * d..(j + 1) * d];
        let mut gv = s2 * s2b + s1 * s1b + s0 * s0b;
        let mut g1 = row[j] * s2b + op.w1[j] * s0 * s1b;
        let g2 = op.w2[j * d + j] * s0 * s1b;
        let mut s0b_new = g.v * s0b + (op.w1[j] * g.d1 + op.w2[j * d + j] * g.d2) * s1b;
        for b in j + 1..d {
            let tb = tbar[b];
            gv += row[b] * tb;
            g1 += two * op.w2[j * d + b] * s0 * tb;
            s0b_new += two * op.w2[j * d + b] * g.d1 * tb;
            tbar[b] = g.v * tb;
        }
        tbar[j] = g.d1 * s2b;
        s0b = s0b_new;
        s1b *= g.v;
        s2b *= g.v;
        adj[j].v += gv;
        adj[j].d1 += g1;
        adj[j].d2 += g2;
    }
}

/// Value, gradient and row-major Hessian of Σ_i c_i ∏_j g_ij (unnormalized).
pub fn assemble_derivatives<T: Real>(weights: &[T], jets: &[Jet<T>], d: usize) -> (T, Vec<T>, Vec<T>) {
    let mut p = T::zero();
    let mut grad = vec![T::zero(); d];
    let mut hess = vec![T::zero(); d * d];
    let mut prefix = vec![T::one(); d + 1];
    let mut suffix = vec![T::one(); d + 1];
    for (i, &c) in weights.iter().enumerate() {
        let g = &jets[i * d..(i + 1) * d];
        for j in 0..d {
            prefix[j + 1] = prefix[j] * g[j].v;
        }
        for j in (0..d).rev() {
            suffix[j] = suffix[j + 1] * g[j].v;
        }
        p += c * prefix[d];
        for a in 0..d {
            let e1 = prefix[a] * suffix[a + 1];
            grad[a] += c * g[a].d1 * e1;
            hess[a * d + a] += c * g[a].d2 * e1;
            for b in a + 1..d {
                // product over j ∉ {a, b}
                let mut e2 = prefix[a];
                for gj in &g[a + 1..b] {
                    e2 *= gj.v;
                }
                e2 *= suffix[b + 1];
                let v = c * g[a].d1 * g[b].d1 * e2;
                hess[a * d + b] += v;
                hess[b * d + a] += v;
            }
        }
    }
    (p, grad, hess)
}

/// Per-factor jet evaluation and its reverse mode, implemented by each family.
pub trait TensorFactors<T: Real>: Sync {
    /// Per-thread storage for whatever the reverse pass needs from the forward pass.
    type Scratch: Send;

    fn dim(&self) -> usize;
    fn rank(&self) -> usize;
    fn num_params(&self) -> usize;
    /// Rank weight c_i.
    fn weight(&self, i: usize) -> T;
    fn new_scratch(&self) -> Self::Scratch;
    fn factor_forward(&self, i: usize, j: usize, x: T, scratch: &mut Self::Scratch) -> Jet<T>;
    /// Adds the parameter gradient of `adj · jet_ij` into `grad` (natural coordinates).
    fn factor_backward(&self, i: usize, j: usize, x: T, adj: Jet<T>, scratch: &mut Self::Scratch, grad: &mut [T]);
    /// True when a factor jet that is exactly zero also has zero parameter
    /// derivatives, so a rank with such a factor can be skipped outright.
    fn zero_jet_is_inert(&self) -> bool {
        false
    }
    /// Adds `g` to the gradient slot of c_i, if c_i is trainable.
    fn weight_backward(&self, i: usize, g: T, grad: &mut [T]);
}

/// A batch of collocation points with their operator coefficients.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub dim: usize,
    /// Row-major, `len = dim · size`.
    pub points: Vec<T>,
    pub ops: Vec<PointOperator<T>>,
    /// The same points in f64, reported in diagnostics.
    pub points_f64: Vec<f64>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Σ_b r_b² and, optionally, its gradient with respect to every parameter
/// except through Z. Returns (Σ r², ∂(Σ r²)/∂Z).
///
/// Chunks have a size fixed by the batch length and are reduced in order, so
/// the result does not depend on the worker count.
pub fn residual_pass<T: Real, F: TensorFactors<T>>(
    model: &F,
    z: T,
    batch: &Batch<T>,
    mut grad: Option<&mut [T]>,
) -> Result<(T, T)> {
    let d = model.dim();
    let n = model.rank();
    let want_grad = grad.is_some();
    let chunk = batch.len().div_ceil(64).max(16);
    let np = if want_grad { model.num_params() } else { 0 };
    let inv_z = T::one() / z;
    let inert = model.zero_jet_is_inert();
    let two = T::one() + T::one();
    let parts: Vec<Result<(T, Vec<T>)>> = (0..batch.len())
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .map(|idx| {
            let mut scratch = model.new_scratch();
            let mut jets = vec![Jet::zero(); n * d];
            let mut sums = vec![T::zero(); n];
            let mut dead = vec![false; n];
            let mut sw = Sweep::new(d);
            let mut adj = vec![Jet::zero(); d];
            let mut tbar = Vec::with_capacity(d);
            let mut g = vec![T::zero(); np];
            let mut sumsq = T::zero();
            for &b in idx {
                let x = &batch.points[b * d..(b + 1) * d];
                let op = &batch.ops[b];
                let mut total = T::zero();
                for i in 0..n {
                    dead[i] = false;
                    for j in 0..d {
                        let g = model.factor_forward(i, j, x[j], &mut scratch);
                        jets[i * d + j] = g;
                        if inert && g == Jet::zero() {
                            dead[i] = true;
                            break;
                        }
                    }
                    sums[i] = if dead[i] { T::zero() } else { contract(&jets[i * d..(i + 1) * d], op, &mut sw) };
                    total += model.weight(i) * sums[i];
                }
                let r = total * inv_z;
                if !r.is_finite() {
                    return Err(Error::NonFiniteResidual {
                        index: b,
                        point: batch.points_f64[b * d..(b + 1) * d].to_vec(),
                    });
                }
                sumsq += r * r;
                if !want_grad {
                    continue;
                }
                let rr = two * r * inv_z;
                for i in 0..n {
                    let c = model.weight(i);
                    let gi = &jets[i * d..(i + 1) * d];
                    model.weight_backward(i, rr * sums[i], &mut g);
                    if c == T::zero() || dead[i] {
                        continue;
                    }
                    contract(gi, op, &mut sw);
                    adj.iter_mut().for_each(|a| *a = Jet::zero());
                    contract_adjoint(gi, op, &sw, rr * c, &mut adj, &mut tbar);
                    for j in 0..d {
                        model.factor_backward(i, j, x[j], adj[j], &mut scratch, &mut g);
                    }
                }
            }
            Ok((sumsq, g))
        })
        .collect();
    let mut sumsq = T::zero();
    for part in parts {
        let (s, g) = part?;
        sumsq += s;
        if let Some(out) = grad.as_deref_mut() {
            for (o, v) in out.iter_mut().zip(&g) {
                *o += *v;
            }
        }
    }
    // r = G / Z, so ∂(Σ r²)/∂Z = -2 Σ r² / Z
    Ok((sumsq, -two * sumsq * inv_z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(s: &mut u64) -> f64 {
        *s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*s >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    }

    /// Direct O(d³) evaluation of S as an oracle for the sweep.
    fn naive(jets: &[Jet<f64>], op: &PointOperator<f64>) -> f64 {
        let d = jets.len();
        let prod_except = |skip: &[usize]| -> f64 {
            (0..d).filter(|j| !skip.contains(j)).map(|j| jets[j].v).product()
        };
        let mut s = op.w0 * prod_except(&[]);
        for a in 0..d {
            s += (op.w1[a] * jets[a].d1 + op.w2[a * d + a] * jets[a].d2) * prod_except(&[a]);
            for b in 0..d {
                if a != b {
                    s += op.w2[a * d + b] * jets[a].d1 * jets[b].d1 * prod_except(&[a, b]);
                }
            }
        }
        s
    }

    fn random_case(d: usize, s: &mut u64) -> (Vec<Jet<f64>>, PointOperator<f64>) {
        let jets = (0..d).map(|_| Jet::new(lcg(s), lcg(s), lcg(s))).collect();
        let mut w2 = vec![0.0; d * d];
        for a in 0..d {
            for b in a..d {
                let v = lcg(s);
                w2[a * d + b] = v;
                w2[b * d + a] = v;
            }
        }
        let op = PointOperator { w0: lcg(s), w1: (0..d).map(|_| lcg(s)).collect(), w2 };
        (jets, op)
    }

    #[test]
    fn sweep_matches_direct_sum() {
        let mut s = 1u64;
        for d in 1..=7 {
            for _ in 0..20 {
                let (jets, op) = random_case(d, &mut s);
                let mut sw = Sweep::new(d);
                let got = contract(&jets, &op, &mut sw);
                let want = naive(&jets, &op);
                assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()), "d={d}");
            }
        }
    }

    #[test]
    fn adjoint_matches_substitution() {
        // S is linear in each jet, so its partials are S with jet j replaced by a unit jet
        let mut s = 2u64;
        for d in 1..=6 {
            let (jets, op) = random_case(d, &mut s);
            let mut sw = Sweep::new(d);
            contract(&jets, &op, &mut sw);
            let mut adj = vec![Jet::zero(); d];
            let mut tbar = Vec::new();
            contract_adjoint(&jets, &op, &sw, 1.5, &mut adj, &mut tbar);
            for j in 0..d {
                for (k, unit) in [Jet::new(1.0, 0.0, 0.0), Jet::new(0.0, 1.0, 0.0), Jet::new(0.0, 0.0, 1.0)]
                    .into_iter()
                    .enumerate()
                {
                    let mut sub = jets.clone();
                    sub[j] = unit;
                    let want = 1.5 * naive(&sub, &op);
                    let got = [adj[j].v, adj[j].d1, adj[j].d2][k];
                    assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()), "d={d} j={j} k={k}");
                }
            }
        }
    }

    #[test]
    fn assembled_derivatives_agree_with_contraction() {
        let mut s = 3u64;
        let d = 4;
        let n = 3;
        let weights: Vec<f64> = (0..n).map(|_| lcg(&mut s).abs()).collect();
        let jets: Vec<Jet<f64>> = (0..n * d).map(|_| Jet::new(lcg(&mut s), lcg(&mut s), lcg(&mut s))).collect();
        let (p, grad, hess) = assemble_derivatives(&weights, &jets, d);
        let (_, op) = random_case(d, &mut s);
        let mut sw = Sweep::new(d);
        let via_sweep: f64 =
            (0..n).map(|i| weights[i] * contract(&jets[i * d..(i + 1) * d], &op, &mut sw)).sum();
        let mut direct = op.w0 * p;
        for a in 0..d {
            direct += op.w1[a] * grad[a];
            for b in 0..d {
                direct += op.w2[a * d + b] * hess[a * d + b];
            }
        }
        assert!((via_sweep - direct).abs() < 1e-12);
        for a in 0..d {
            for b in 0..d {
                assert_eq!(hess[a * d + b], hess[b * d + a]);
            }
        }
    }

    #[test]
    fn leibniz_adjoint() {
        let e: Jet<f64> = Jet::new(0.3, -1.1, 2.0);
        let bar: Jet<f64> = Jet::new(0.7, 0.2, -0.4);
        let adj = e.mul_adjoint(bar);
        // ⟨bar, e·k⟩ is linear in k; compare against unit substitutions
        for (k, unit) in [Jet::new(1.0, 0.0, 0.0), Jet::new(0.0, 1.0, 0.0), Jet::new(0.0, 0.0, 1.0)].into_iter().enumerate() {
            let m = e.mul(unit);
            let want = bar.v * m.v + bar.d1 * m.d1 + bar.d2 * m.d2;
            let got = [adj.v, adj.d1, adj.d2][k];
            assert!((got - want).abs() < 1e-15);
        }
    }
}

//! Scalar MLP [1, w, …, w, 1] with tanh hidden layers and softplus output,
//! propagating second-order input jets forward and their adjoints backward.

use rand::Rng;

use crate::scalar::Real;
use crate::tensor::Jet;

/// Layer widths and parameter offsets; weights and biases live in a flat
/// slice owned by the caller, layer l as `W_l` (out × in, row-major) then `b_l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    len: usize,
}

/// Per-layer activations saved by the forward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache<T> {
    /// Layer inputs, one jet component per unit, concatenated over layers.
    a: [Vec<T>; 3],
    /// Pre-activations.
    z: [Vec<T>; 3],
    /// First three activation derivatives at each pre-activation value.
    ds: [Vec<T>; 3],
}

#[inline]
fn tanh_derivs<T: Real>(z: T) -> (T, T, T, T) {
    let t = z.tanh();
    let s = T::one() - t * t;
    let two = T::one() + T::one();
    let six = T::of(6.0);
    (t, s, -two * t * s, s * (six * t * t - two))
}

#[inline]
fn softplus_derivs<T: Real>(z: T) -> (T, T, T, T) {
    let sp = z.max(T::zero()) + (-z.abs()).exp().ln_1p();
    let s = T::one() / (T::one() + (-z).exp());
    let two = T::one() + T::one();
    (sp, s, s * (T::one() - s), s * (T::one() - s) * (T::one() - two * s))
}

impl MlpShape {
    /// `hidden` lists the hidden widths; input and output widths are 1.
    pub fn new(hidden: &[usize]) -> Self {
        let mut widths = vec![1];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut offsets = Vec::with_capacity(widths.len());
        let mut len = 0;
        for w in widths.windows(2) {
            offsets.push(len);
            len += w[0] * w[1] + w[1];
        }
        Self { widths, offsets, len }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_params(&self) -> usize {
        self.len
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn units(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn new_cache<T: Real>(&self) -> MlpCache<T> {
        let u = self.units();
        let zeros = || [vec![T::zero(); u], vec![T::zero(); u], vec![T::zero(); u]];
        MlpCache { a: zeros(), z: zeros(), ds: zeros() }
    }

    /// Xavier/Glorot uniform weights, zero biases.
    pub fn init<T: Real, R: Rng + ?Sized>(&self, params: &mut [T], rng: &mut R) {
        for l in 0..self.layers() {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let a = (6.0 / (fi + fo) as f64).sqrt();
            let off = self.offsets[l];
            for w in &mut params[off..off + fi * fo] {
                *w = T::of(rng.random_range(-a..a));
            }
            for b in &mut params[off + fi * fo..off + fi * fo + fo] {
                *b = T::zero();
            }
        }
    }

    /// Output jet (v, v', v'') at x; fills `cache` for [`MlpShape::backward`].
    /// With `seed_derivs = false` the input jet is (x, 0, 0) and only the value is meaningful.
    pub fn forward<T: Real>(&self, params: &[T], x: T, seed_derivs: bool, cache: &mut MlpCache<T>) -> Jet<T> {
        let mut base = 0;
        cache.a[0][0] = x;
        cache.a[1][0] = if seed_derivs { T::one() } else { T::zero() };
        cache.a[2][0] = T::zero();
        let last = self.layers() - 1;
        let mut out = Jet::zero();
        let [c0, c1, c2] = &mut cache.a;
        let [z0v, z1v, z2v] = &mut cache.z;
        let [d1v, d2v, d3v] = &mut cache.ds;
        for l in 0..self.layers() {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let off = self.offsets[l];
            let (w, b) = (&params[off..off + fi * fo], &params[off + fi * fo..off + fi * fo + fo]);
            let next = base + fi;
            let (in0, out0) = c0.split_at_mut(next);
            let (in1, out1) = c1.split_at_mut(next);
            let (in2, out2) = c2.split_at_mut(next);
            let (in0, in1, in2) = (&in0[base..], &in1[base..], &in2[base..]);
            for o in 0..fo {
                let row = &w[o * fi..(o + 1) * fi];
                let (mut z0, mut z1, mut z2) = (b[o], T::zero(), T::zero());
                for k in 0..fi {
                    z0 += row[k] * in0[k];
                    z1 += row[k] * in1[k];
                    z2 += row[k] * in2[k];
                }
                let u = next + o;
                z0v[u] = z0;
                z1v[u] = z1;
                z2v[u] = z2;
                let (s0, s1, s2, s3) = if l == last { softplus_derivs(z0) } else { tanh_derivs(z0) };
                d1v[u] = s1;
                d2v[u] = s2;
                d3v[u] = s3;
                let (v1, v2) = (s1 * z1, s2 * z1 * z1 + s1 * z2);
                out0[o] = s0;
                out1[o] = v1;
                out2[o] = v2;
                if l == last {
                    out = Jet::new(s0, v1, v2);
                }
            }
            base = next;
        }
        out
    }

    /// Adds the parameter gradient of `adj · output_jet` to `grad`, using the
    /// cache of the matching forward pass.
    pub fn backward<T: Real>(&self, params: &[T], cache: &MlpCache<T>, adj: Jet<T>, grad: &mut [T], work: &mut Vec<T>) {
        let two = T::one() + T::one();
        let wmax = *self.widths.iter().max().expect("at least two layers");
        // [current output adjoints (ā, ā1, ā2) | next input adjoints], 3·wmax each
        work.clear();
        work.resize(6 * wmax, T::zero());
        let (cur, prev) = work.split_at_mut(3 * wmax);
        cur[0] = adj.v;
        cur[wmax] = adj.d1;
        cur[2 * wmax] = adj.d2;
        let mut base_out = self.units() - 1;
        for l in (0..self.layers()).rev() {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let off = self.offsets[l];
            let base_in = base_out - fi;
            prev.iter_mut().for_each(|v| *v = T::zero());
            let (a0, a1, a2) = (&cache.a[0][base_in..base_in + fi], &cache.a[1][base_in..base_in + fi], &cache.a[2][base_in..base_in + fi]);
            let (p0, rest) = prev.split_at_mut(wmax);
            let (p1, p2) = rest.split_at_mut(wmax);
            let (p0, p1, p2) = (&mut p0[..fi], &mut p1[..fi], &mut p2[..fi]);
            for o in 0..fo {
                let (ab, a1b, a2b) = (cur[o], cur[wmax + o], cur[2 * wmax + o]);
                let u = base_out + o;
                let (z1, z2) = (cache.z[1][u], cache.z[2][u]);
                let (s1, s2, s3) = (cache.ds[0][u], cache.ds[1][u], cache.ds[2][u]);
                let zb = ab * s1 + a1b * s2 * z1 + a2b * (s3 * z1 * z1 + s2 * z2);
                let z1b = a1b * s1 + two * a2b * s2 * z1;
                let z2b = a2b * s1;
                let w = &params[off + o * fi..off + (o + 1) * fi];
                let g = &mut grad[off + o * fi..off + (o + 1) * fi];
                for k in 0..fi {
                    g[k] += zb * a0[k] + z1b * a1[k] + z2b * a2[k];
                    p0[k] += w[k] * zb;
                    p1[k] += w[k] * z1b;
                    p2[k] += w[k] * z2b;
                }
                grad[off + fi * fo + o] += zb;
            }
            cur.copy_from_slice(prev);
            base_out = base_in;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_is_ln2() {
        let sh = MlpShape::new(&[8, 8]);
        let p = vec![0.0f64; sh.num_params()];
        let mut c = sh.new_cache();
        let j = sh.forward(&p, 0.7, true, &mut c);
        assert!((j.v - 2f64.ln()).abs() < 1e-15);
        assert_eq!((j.d1, j.d2), (0.0, 0.0));
    }

    #[test]
    fn single_unit_closed_form() {
        // hidden = tanh(x), output = softplus(tanh(x))
        let sh = MlpShape::new(&[1]);
        let p = vec![1.0, 0.0, 1.0, 0.0];
        let mut c = sh.new_cache();
        let x = 0.3f64;
        let j = sh.forward(&p, x, true, &mut c);
        let t = x.tanh();
        let sech2 = 1.0 - t * t;
        let sig = 1.0 / (1.0 + (-t).exp());
        assert!((j.v - (1.0 + t.exp()).ln()).abs() < 1e-14);
        assert!((j.d1 - sig * sech2).abs() < 1e-12);
        let d2 = sig * (1.0 - sig) * sech2 * sech2 + sig * (-2.0 * t * sech2);
        assert!((j.d2 - d2).abs() < 1e-12);
    }

    #[test]
    fn input_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sh = MlpShape::new(&[8, 8]);
        for _ in 0..20 {
            let mut p = vec![0.0f64; sh.num_params()];
            sh.init(&mut p, &mut rng);
            for v in p.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
            let mut c = sh.new_cache();
            for k in 0..10 {
                let x = -2.0 + 0.4 * k as f64;
                let h = 1e-4;
                let j = sh.forward(&p, x, true, &mut c);
                let fp = sh.forward(&p, x + h, true, &mut c);
                let fm = sh.forward(&p, x - h, true, &mut c);
                let fd1 = (fp.v - fm.v) / (2.0 * h);
                let fd2 = (fp.v - 2.0 * j.v + fm.v) / (h * h);
                assert!((fd1 - j.d1).abs() <= 1e-6 * j.d1.abs().max(1.0));
                assert!((fd2 - j.d2).abs() <= 1e-6 * j.d2.abs().max(1.0) * 10.0);
                assert!(((fp.d1 - fm.d1) / (2.0 * h) - j.d2).abs() <= 1e-6 * j.d2.abs().max(1.0));
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sh = MlpShape::new(&[4, 3]);
        let mut p = vec![0.0f64; sh.num_params()];
        sh.init(&mut p, &mut rng);
        for v in p.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
        let adj = Jet::new(0.7, -1.3, 0.4);
        let obj = |p: &[f64]| {
            let mut c = sh.new_cache();
            let j = sh.forward(p, 0.37, true, &mut c);
            adj.v * j.v + adj.d1 * j.d1 + adj.d2 * j.d2
        };
        let mut c = sh.new_cache();
        sh.forward(&p, 0.37, true, &mut c);
        let mut g = vec![0.0; p.len()];
        let mut work = Vec::new();
        sh.backward(&p, &c, adj, &mut g, &mut work);
        for k in 0..p.len() {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[k] += 1e-6;
            pm[k] -= 1e-6;
            let fd = (obj(&pp) - obj(&pm)) / 2e-6;
            assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn output_is_positive() {
        let sh = MlpShape::new(&[8]);
        let p = vec![-30.0f64; sh.num_params()];
        let mut c = sh.new_cache();
        assert!(sh.forward(&p, 1.0, true, &mut c).v > 0.0);
    }
}

//! GRU cell: forward step, cached forward, and hand-written backward.
//!
//! Gate equations, with `σ` the logistic function:
//!   z  = σ(Wz x + Uz h + bz)
//!   r  = σ(Wr x + Ur h + br)
//!   c  = tanh(Wh x + Uh (r ⊙ h) + bh)
//!   h' = z ⊙ h + (1 - z) ⊙ c
//!
//! With all-zero weights and h = 0 every gate is constant and h' = 0, which
//! pins down the update-gate orientation: z gates the carried-over state.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, ParamStore, SeededRng, Tensor2D};

const SUFFIXES: [&str; 9] = ["wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh"];

/// Borrowed view of one GRU's weights inside a [`ParamStore`].
pub struct GruWeights<'a> {
    pub wz: &'a Tensor2D,
    pub uz: &'a Tensor2D,
    pub bz: &'a Tensor2D,
    pub wr: &'a Tensor2D,
    pub ur: &'a Tensor2D,
    pub br: &'a Tensor2D,
    pub wh: &'a Tensor2D,
    pub uh: &'a Tensor2D,
    pub bh: &'a Tensor2D,
    input_dim: usize,
    hidden_dim: usize,
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub rh: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Gradient accumulators matching one GRU's weights.
#[derive(Clone, Debug)]
pub struct GruGrads {
    pub wz: Tensor2D,
    pub uz: Tensor2D,
    pub bz: Tensor2D,
    pub wr: Tensor2D,
    pub ur: Tensor2D,
    pub br: Tensor2D,
    pub wh: Tensor2D,
    pub uh: Tensor2D,
    pub bh: Tensor2D,
}

/// Inserts freshly initialized GRU weights under `prefix` into `store`.
/// Weight matrices use symmetric uniform init scaled by fan-in and fan-out;
/// biases start at zero.
pub fn init_gru_params(
    store: &mut ParamStore,
    prefix: &str,
    input_dim: usize,
    hidden_dim: usize,
    rng: &mut SeededRng,
) -> Result<()> {
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "gru dims must be positive, got input {input_dim}, hidden {hidden_dim}"
        )));
    }
    let xavier = |rows: usize, cols: usize, rng: &mut SeededRng| {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Tensor2D::from_fn(rows, cols, |_, _| rng.range(-bound, bound))
    };
    for gate in ["z", "r", "h"] {
        store.insert(
            format!("{prefix}.w{gate}"),
            xavier(hidden_dim, input_dim, rng),
        )?;
        store.insert(
            format!("{prefix}.u{gate}"),
            xavier(hidden_dim, hidden_dim, rng),
        )?;
        store.insert(format!("{prefix}.b{gate}"), Tensor2D::zeros(1, hidden_dim))?;
    }
    Ok(())
}

impl<'a> GruWeights<'a> {
    /// Borrows the nine `prefix.*` tensors and validates their shapes agree.
    pub fn from_store(store: &'a ParamStore, prefix: &str) -> Result<Self> {
        let t = |suffix: &str| store.get(&format!("{prefix}.{suffix}"));
        let wz = t("wz")?;
        let uz = t("uz")?;
        let bz = t("bz")?;
        let wr = t("wr")?;
        let ur = t("ur")?;
        let br = t("br")?;
        let wh = t("wh")?;
        let uh = t("uh")?;
        let bh = t("bh")?;
        let hidden_dim = wz.rows();
        let input_dim = wz.cols();
        for (name, tensor, shape) in [
            ("uz", uz, (hidden_dim, hidden_dim)),
            ("wr", wr, (hidden_dim, input_dim)),
            ("ur", ur, (hidden_dim, hidden_dim)),
            ("wh", wh, (hidden_dim, input_dim)),
            ("uh", uh, (hidden_dim, hidden_dim)),
            ("bz", bz, (1, hidden_dim)),
            ("br", br, (1, hidden_dim)),
            ("bh", bh, (1, hidden_dim)),
        ] {
            if tensor.shape() != shape {
                return Err(Error::shape(
                    "GruWeights::from_store",
                    format!("{prefix}.{name} {}x{}", tensor.rows(), tensor.cols()),
                    format!("expected {}x{}", shape.0, shape.1),
                ));
            }
        }
        Ok(GruWeights {
            wz,
            uz,
            bz,
            wr,
            ur,
            br,
            wh,
            uh,
            bh,
            input_dim,
            hidden_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn gate_preact(&self, w: &Tensor2D, u: &Tensor2D, b: &Tensor2D, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut a = w.matvec(x);
        let uh = u.matvec(h);
        for ((ai, ui), bi) in a.iter_mut().zip(&uh).zip(b.row(0)) {
            *ai += ui + bi;
        }
        a
    }

    /// One step, keeping intermediates for backward.
    pub fn step_cached(&self, x: &[f64], h_prev: &[f64]) -> GruCache {
        debug_assert_eq!(x.len(), self.input_dim);
        debug_assert_eq!(h_prev.len(), self.hidden_dim);
        let z: Vec<f64> = self
            .gate_preact(self.wz, self.uz, self.bz, x, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = self
            .gate_preact(self.wr, self.ur, self.br, x, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(ri, hi)| ri * hi).collect();
        let c: Vec<f64> = self
            .gate_preact(self.wh, self.uh, self.bh, x, &rh)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h: Vec<f64> = z
            .iter()
            .zip(h_prev)
            .zip(&c)
            .map(|((zi, hi), ci)| zi * hi + (1.0 - zi) * ci)
            .collect();
        GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            rh,
            c,
            h,
        }
    }

    /// One step without caching.
    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        self.step_cached(x, h_prev).h
    }

    /// Backpropagates `dh` (gradient w.r.t. this step's output) through the
    /// cell. Accumulates weight gradients into `grads` and returns
    /// `(dx, dh_prev)`.
    pub fn backward(&self, cache: &GruCache, dh: &[f64], grads: &mut GruGrads) -> (Vec<f64>, Vec<f64>) {
        let n = self.hidden_dim;
        debug_assert_eq!(dh.len(), n);

        let mut dz = vec![0.0; n];
        let mut dc = vec![0.0; n];
        let mut dh_prev = vec![0.0; n];
        for i in 0..n {
            dz[i] = dh[i] * (cache.h_prev[i] - cache.c[i]);
            dc[i] = dh[i] * (1.0 - cache.z[i]);
            dh_prev[i] = dh[i] * cache.z[i];
        }

        // Candidate path: c = tanh(ah).
        let mut dah = vec![0.0; n];
        for i in 0..n {
            dah[i] = dc[i] * (1.0 - cache.c[i] * cache.c[i]);
        }
        grads.wh.add_outer(&dah, &cache.x);
        grads.uh.add_outer(&dah, &cache.rh);
        for (g, d) in grads.bh.row_mut(0).iter_mut().zip(&dah) {
            *g += d;
        }
        let drh = self.uh.matvec_transpose(&dah);
        let mut dr = vec![0.0; n];
        for i in 0..n {
            dr[i] = drh[i] * cache.h_prev[i];
            dh_prev[i] += drh[i] * cache.r[i];
        }

        // Gate preactivations through the logistic derivative.
        let mut daz = vec![0.0; n];
        let mut dar = vec![0.0; n];
        for i in 0..n {
            daz[i] = dz[i] * cache.z[i] * (1.0 - cache.z[i]);
            dar[i] = dr[i] * cache.r[i] * (1.0 - cache.r[i]);
        }
        grads.wz.add_outer(&daz, &cache.x);
        grads.uz.add_outer(&daz, &cache.h_prev);
        for (g, d) in grads.bz.row_mut(0).iter_mut().zip(&daz) {
            *g += d;
        }
        grads.wr.add_outer(&dar, &cache.x);
        grads.ur.add_outer(&dar, &cache.h_prev);
        for (g, d) in grads.br.row_mut(0).iter_mut().zip(&dar) {
            *g += d;
        }

        let mut dx = self.wz.matvec_transpose(&daz);
        for (d, v) in dx.iter_mut().zip(self.wr.matvec_transpose(&dar)) {
            *d += v;
        }
        for (d, v) in dx.iter_mut().zip(self.wh.matvec_transpose(&dah)) {
            *d += v;
        }
        for (d, v) in dh_prev.iter_mut().zip(self.uz.matvec_transpose(&daz)) {
            *d += v;
        }
        for (d, v) in dh_prev.iter_mut().zip(self.ur.matvec_transpose(&dar)) {
            *d += v;
        }

        (dx, dh_prev)
    }
}

impl GruGrads {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GruGrads {
            wz: Tensor2D::zeros(hidden_dim, input_dim),
            uz: Tensor2D::zeros(hidden_dim, hidden_dim),
            bz: Tensor2D::zeros(1, hidden_dim),
            wr: Tensor2D::zeros(hidden_dim, input_dim),
            ur: Tensor2D::zeros(hidden_dim, hidden_dim),
            br: Tensor2D::zeros(1, hidden_dim),
            wh: Tensor2D::zeros(hidden_dim, input_dim),
            uh: Tensor2D::zeros(hidden_dim, hidden_dim),
            bh: Tensor2D::zeros(1, hidden_dim),
        }
    }

    /// Adds the accumulated gradients into `prefix.*` entries of `store`.
    pub fn add_into(&self, store: &mut ParamStore, prefix: &str) -> Result<()> {
        let tensors = [
            &self.wz, &self.uz, &self.bz, &self.wr, &self.ur, &self.br, &self.wh, &self.uh,
            &self.bh,
        ];
        for (suffix, t) in SUFFIXES.iter().zip(tensors) {
            store
                .get_mut(&format!("{prefix}.{suffix}"))?
                .add_scaled(t, 1.0)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    /// Independent scalar GRU (input dim 1, hidden dim 1) written directly
    /// from the gate equations, used as an oracle for the vector code.
    fn scalar_gru(w: &[f64; 9], x: f64, h: f64) -> f64 {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let [wz, uz, bz, wr, ur, br, wh, uh, bh] = *w;
        let z = sig(wz * x + uz * h + bz);
        let r = sig(wr * x + ur * h + br);
        let c = (wh * x + uh * (r * h) + bh).tanh();
        z * h + (1.0 - z) * c
    }

    fn store_from_scalars(w: &[f64; 9]) -> ParamStore {
        let mut store = ParamStore::new();
        for (suffix, v) in SUFFIXES.iter().zip(w) {
            store
                .insert(
                    format!("g.{suffix}"),
                    Tensor2D::from_vec(1, 1, vec![*v]).unwrap(),
                )
                .unwrap();
        }
        store
    }

    #[test]
    fn matches_scalar_oracle() {
        let cases: [([f64; 9], f64, f64); 3] = [
            ([0.5, -0.3, 0.1, 0.2, 0.7, -0.1, 1.1, -0.6, 0.0], 0.8, -0.4),
            ([-1.0, 0.4, 0.0, 0.9, -0.2, 0.3, -0.5, 0.8, -0.7], -1.2, 0.9),
            ([0.0; 9], 1.0, 0.5),
        ];
        for (w, x, h) in cases {
            let store = store_from_scalars(&w);
            let gru = GruWeights::from_store(&store, "g").unwrap();
            let got = gru.step(&[x], &[h])[0];
            let want = scalar_gru(&w, x, h);
            assert!((got - want).abs() < 1e-14, "got {got}, want {want}");
        }
    }

    #[test]
    fn zero_weights_zero_state_is_fixed_point() {
        let mut store = ParamStore::new();
        for suffix in SUFFIXES {
            let t = if suffix.starts_with('b') {
                Tensor2D::zeros(1, 3)
            } else if suffix.starts_with('u') {
                Tensor2D::zeros(3, 3)
            } else {
                Tensor2D::zeros(3, 2)
            };
            store.insert(format!("g.{suffix}"), t).unwrap();
        }
        let gru = GruWeights::from_store(&store, "g").unwrap();
        let h = gru.step(&[1.0, -2.0], &[0.0; 3]);
        assert_eq!(h, vec![0.0; 3]);
    }

    #[test]
    fn inconsistent_shapes_rejected() {
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(0);
        init_gru_params(&mut store, "g", 2, 3, &mut rng).unwrap();
        // Corrupt one gate shape.
        let mut bad = ParamStore::new();
        for (name, t) in store.iter() {
            if name == "g.ur" {
                bad.insert(name, Tensor2D::zeros(3, 4)).unwrap();
            } else {
                bad.insert(name, t.clone()).unwrap();
            }
        }
        assert!(GruWeights::from_store(&bad, "g").is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Objective: run two chained GRU steps from h0 = 0 on fixed inputs
        // and take a fixed linear functional of the final state. Checks
        // weight gradients and the dh_prev chain.
        let mut rng = SeededRng::new(21);
        let mut params = ParamStore::new();
        init_gru_params(&mut params, "g", 3, 4, &mut rng).unwrap();
        let x0: Vec<f64> = (0..3).map(|_| rng.range(-1.0, 1.0)).collect();
        let x1: Vec<f64> = (0..3).map(|_| rng.range(-1.0, 1.0)).collect();
        let probe: Vec<f64> = (0..4).map(|_| rng.range(-1.0, 1.0)).collect();

        let objective = {
            let x0 = x0.clone();
            let x1 = x1.clone();
            let probe = probe.clone();
            move |p: &ParamStore| -> crate::error::Result<f64> {
                let gru = GruWeights::from_store(p, "g")?;
                let h1 = gru.step(&x0, &[0.0; 4]);
                let h2 = gru.step(&x1, &h1);
                Ok(crate::numerics::dot(&probe, &h2))
            }
        };

        let gru = GruWeights::from_store(&params, "g").unwrap();
        let c1 = gru.step_cached(&x0, &[0.0; 4]);
        let c2 = gru.step_cached(&x1, &c1.h);
        let mut grads = GruGrads::zeros(3, 4);
        let (_, dh1) = gru.backward(&c2, &probe, &mut grads);
        let (_, _) = gru.backward(&c1, &dh1, &mut grads);
        let mut analytic = params.zeros_like();
        grads.add_into(&mut analytic, "g").unwrap();

        let report = grad_check(objective, &params, &analytic, 1e-5, 1e-7).unwrap();
        assert!(
            report.passed(),
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst.map(|w| (w.name, w.row, w.col))
        );
    }

    #[test]
    fn backward_dx_matches_finite_differences() {
        let mut rng = SeededRng::new(22);
        let mut params = ParamStore::new();
        init_gru_params(&mut params, "g", 2, 3, &mut rng).unwrap();
        let gru = GruWeights::from_store(&params, "g").unwrap();
        let x: Vec<f64> = (0..2).map(|_| rng.range(-1.0, 1.0)).collect();
        let h: Vec<f64> = (0..3).map(|_| rng.range(-1.0, 1.0)).collect();
        let probe: Vec<f64> = (0..3).map(|_| rng.range(-1.0, 1.0)).collect();

        let cache = gru.step_cached(&x, &h);
        let mut grads = GruGrads::zeros(2, 3);
        let (dx, dh_prev) = gru.backward(&cache, &probe, &mut grads);

        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let plus = crate::numerics::dot(&probe, &gru.step(&xp, &h));
            let minus = crate::numerics::dot(&probe, &gru.step(&xm, &h));
            let numeric = (plus - minus) / (2.0 * eps);
            assert!((dx[i] - numeric).abs() < 1e-7, "dx[{i}]");
        }
        for i in 0..h.len() {
            let mut hp = h.clone();
            hp[i] += eps;
            let mut hm = h.clone();
            hm[i] -= eps;
            let plus = crate::numerics::dot(&probe, &gru.step(&x, &hp));
            let minus = crate::numerics::dot(&probe, &gru.step(&x, &hm));
            let numeric = (plus - minus) / (2.0 * eps);
            assert!((dh_prev[i] - numeric).abs() < 1e-7, "dh_prev[{i}]");
        }
    }
}

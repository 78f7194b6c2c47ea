//! Pure forward kernels. The tape in `tape.rs` composes the same math with
//! recorded backward rules; these entry points are the reference forward
//! path and what evaluation uses.

use rand::Rng;

use super::{NetError, Tensor};

/// LSTM cell weights, borrowed from wherever the parameters live. Gate rows
/// are stacked `[input; forget; cell; output]`, so `wx` is `4h x d`, `wh` is
/// `4h x h` and `b` is `4h`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a> {
    pub wx: &'a Tensor,
    pub wh: &'a Tensor,
    pub b: &'a Tensor,
}

impl<'a> LstmParams<'a> {
    pub fn hidden_size(&self) -> usize {
        self.b.len() / 4
    }

    pub fn input_size(&self) -> Result<usize, NetError> {
        Ok(self.wx.dims2()?.1)
    }

    fn validate(&self) -> Result<(usize, usize), NetError> {
        let (wx_rows, d) = self.wx.dims2()?;
        let (wh_rows, h) = self.wh.dims2()?;
        if wx_rows != 4 * h || wh_rows != 4 * h || self.b.len() != 4 * h {
            return Err(NetError::ShapeMismatch {
                context: "LstmParams",
                detail: format!(
                    "wx {:?}, wh {:?}, b {:?} are not a consistent 4h layout",
                    self.wx.shape(),
                    self.wh.shape(),
                    self.b.shape()
                ),
            });
        }
        Ok((d, h))
    }
}

pub(super) fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = w.dims2().expect("matvec weight must be 2-D");
    debug_assert_eq!(cols, x.len(), "matvec width mismatch");
    let data = w.data();
    let mut y = vec![0.0; rows];
    for (r, out) in y.iter_mut().enumerate() {
        let row = &data[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *out = acc;
    }
    y
}

pub(super) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One LSTM step with forget gate:
/// `c = f (.) c_prev + i (.) g`, `h = o (.) tanh(c)`.
pub fn lstm_step(
    p: &LstmParams<'_>,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NetError> {
    let (d, h) = p.validate()?;
    if x.len() != d || h_prev.len() != h || c_prev.len() != h {
        return Err(NetError::ShapeMismatch {
            context: "lstm_step",
            detail: format!(
                "x len {} (want {d}), h_prev len {} / c_prev len {} (want {h})",
                x.len(),
                h_prev.len(),
                c_prev.len()
            ),
        });
    }
    let mut z = matvec(p.wx, x);
    let zh = matvec(p.wh, h_prev);
    for ((z, zh), b) in z.iter_mut().zip(&zh).zip(p.b.data()) {
        *z += zh + b;
    }

    let mut h_out = vec![0.0; h];
    let mut c_out = vec![0.0; h];
    for k in 0..h {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[h + k]);
        let g = z[2 * h + k].tanh();
        let o = sigmoid(z[3 * h + k]);
        let c = f * c_prev[k] + i * g;
        c_out[k] = c;
        h_out[k] = o * c.tanh();
    }
    if h_out.iter().chain(&c_out).any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("lstm_step"));
    }
    Ok((h_out, c_out))
}

/// Folds `lstm_step` over the sequence from the zero state and returns the
/// final hidden vector. An empty sequence yields the zero vector, which is
/// what a context side consisting only of padding contributes.
pub fn run_lstm(p: &LstmParams<'_>, inputs: &[Vec<f64>]) -> Result<Vec<f64>, NetError> {
    let h = p.hidden_size();
    let mut hidden = vec![0.0; h];
    let mut cell = vec![0.0; h];
    for x in inputs {
        let (new_h, new_c) = lstm_step(p, x, &hidden, &cell)?;
        hidden = new_h;
        cell = new_c;
    }
    Ok(hidden)
}

/// Inverted dropout mask: kept positions carry `1/(1-rate)`, dropped ones 0.
/// Position `i` is kept iff the `i`-th draw from `rng` is `>= rate`.
pub fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<f64>, NetError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NetError::BadDropoutRate(rate));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() >= rate { keep } else { 0.0 })
        .collect())
}

/// Single-hidden-layer MLP: `y = w2 . relu(w1 . drop(x) + b1) + b2`, with
/// inverted dropout on the input and hidden activation in training mode.
#[allow(clippy::too_many_arguments)]
pub fn mlp_forward<R: Rng>(
    w1: &Tensor,
    b1: &Tensor,
    w2: &Tensor,
    b2: &Tensor,
    x: &[f64],
    dropout_rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Vec<f64>, NetError> {
    let (h1, in_dim) = w1.dims2()?;
    let (out_dim, h1b) = w2.dims2()?;
    if in_dim != x.len() || h1 != b1.len() || h1b != h1 || b2.len() != out_dim {
        return Err(NetError::ShapeMismatch {
            context: "mlp_forward",
            detail: format!(
                "x len {}, w1 {:?}, b1 {:?}, w2 {:?}, b2 {:?}",
                x.len(),
                w1.shape(),
                b1.shape(),
                w2.shape(),
                b2.shape()
            ),
        });
    }
    let mut input = x.to_vec();
    if training {
        let mask = dropout_mask(input.len(), dropout_rate, rng)?;
        for (v, m) in input.iter_mut().zip(&mask) {
            *v *= m;
        }
    } else if !(0.0..1.0).contains(&dropout_rate) {
        return Err(NetError::BadDropoutRate(dropout_rate));
    }

    let mut hidden = matvec(w1, &input);
    for (v, b) in hidden.iter_mut().zip(b1.data()) {
        *v = (*v + b).max(0.0);
    }
    if training {
        let mask = dropout_mask(hidden.len(), dropout_rate, rng)?;
        for (v, m) in hidden.iter_mut().zip(&mask) {
            *v *= m;
        }
    }

    let mut y = matvec(w2, &hidden);
    for (v, b) in y.iter_mut().zip(b2.data()) {
        *v += b;
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("mlp_forward"));
    }
    Ok(y)
}

/// Max-subtracted softmax. Output entries are in (0, 1] and sum to 1.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    assert!(!scores.is_empty(), "softmax over empty scores");
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

/// `-ln(pred[true_index])`, with the probability clamped at 1e-12 so a
/// confidently wrong model yields a large but finite loss.
pub fn cross_entropy(pred: &[f64], true_index: usize) -> Result<f64, NetError> {
    if true_index >= pred.len() {
        return Err(NetError::IndexOutOfRange {
            index: true_index,
            len: pred.len(),
        });
    }
    Ok(-pred[true_index].max(1e-12).ln())
}

/// Uniform init in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen::<f64>() * 2.0 * bound - bound)
        .collect();
    Tensor::new(vec![rows, cols], data).expect("finite init")
}

/// Fresh LSTM weights: Xavier for both weight matrices, zero biases except
/// the forget gate's.
pub fn lstm_init<R: Rng>(
    input: usize,
    hidden: usize,
    forget_bias: f64,
    rng: &mut R,
) -> (Tensor, Tensor, Tensor) {
    let wx = xavier_uniform(4 * hidden, input, rng);
    let wh = xavier_uniform(4 * hidden, hidden, rng);
    let mut b = vec![0.0; 4 * hidden];
    for v in &mut b[hidden..2 * hidden] {
        *v = forget_bias;
    }
    let b = Tensor::new(vec![4 * hidden], b).expect("finite init");
    (wx, wh, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_lstm(d: usize, h: usize) -> (Tensor, Tensor, Tensor) {
        (
            Tensor::zeros(vec![4 * h, d]),
            Tensor::zeros(vec![4 * h, h]),
            Tensor::zeros(vec![4 * h]),
        )
    }

    #[test]
    fn lstm_step_all_zero_is_zero() {
        let (wx, wh, b) = zero_lstm(3, 2);
        let p = LstmParams { wx: &wx, wh: &wh, b: &b };
        let (h, c) = lstm_step(&p, &[0.0; 3], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn lstm_step_forget_bias_keeps_zero_cell() {
        let (wx, wh, mut b) = zero_lstm(3, 2);
        for v in &mut b.data_mut()[2..4] {
            *v = 1.0;
        }
        let p = LstmParams { wx: &wx, wh: &wh, b: &b };
        let (_, c) = lstm_step(&p, &[0.0; 3], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(c, vec![0.0, 0.0]);
    }

    #[test]
    fn lstm_step_matches_independent_reference() {
        // Naive re-implementation with its own loops and activations.
        fn reference(
            wx: &Tensor,
            wh: &Tensor,
            b: &Tensor,
            x: &[f64],
            h_prev: &[f64],
            c_prev: &[f64],
        ) -> (Vec<f64>, Vec<f64>) {
            let h = h_prev.len();
            let d = x.len();
            let gate = |row: usize| -> f64 {
                let mut z = b.data()[row];
                for (k, xv) in x.iter().enumerate() {
                    z += wx.data()[row * d + k] * xv;
                }
                for (k, hv) in h_prev.iter().enumerate() {
                    z += wh.data()[row * h + k] * hv;
                }
                z
            };
            let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
            let mut hs = vec![0.0; h];
            let mut cs = vec![0.0; h];
            for k in 0..h {
                let i = sig(gate(k));
                let f = sig(gate(h + k));
                let g = gate(2 * h + k).tanh();
                let o = sig(gate(3 * h + k));
                cs[k] = f * c_prev[k] + i * g;
                hs[k] = o * cs[k].tanh();
            }
            (hs, cs)
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (d, h) = (4, 3);
        let wx = xavier_uniform(4 * h, d, &mut rng);
        let wh = xavier_uniform(4 * h, h, &mut rng);
        let b = Tensor::new(
            vec![4 * h],
            (0..4 * h).map(|_| rng.gen::<f64>() - 0.5).collect(),
        )
        .unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
        let hp: Vec<f64> = (0..h).map(|_| rng.gen::<f64>() - 0.5).collect();
        let cp: Vec<f64> = (0..h).map(|_| rng.gen::<f64>() - 0.5).collect();

        let p = LstmParams { wx: &wx, wh: &wh, b: &b };
        let (got_h, got_c) = lstm_step(&p, &x, &hp, &cp).unwrap();
        let (want_h, want_c) = reference(&wx, &wh, &b, &x, &hp, &cp);
        for (g, w) in got_h.iter().zip(&want_h).chain(got_c.iter().zip(&want_c)) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn lstm_step_rejects_shape_mismatch() {
        let (wx, wh, b) = zero_lstm(3, 2);
        let p = LstmParams { wx: &wx, wh: &wh, b: &b };
        assert!(lstm_step(&p, &[0.0; 4], &[0.0; 2], &[0.0; 2]).is_err());
    }

    #[test]
    fn run_lstm_empty_sequence_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (wx, wh, b) = lstm_init(3, 2, 1.0, &mut rng);
        let p = LstmParams { wx: &wx, wh: &wh, b: &b };
        assert_eq!(run_lstm(&p, &[]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn run_lstm_folds_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (wx, wh, b) = lstm_init(3, 2, 1.0, &mut rng);
        let p = LstmParams { wx: &wx, wh: &wh, b: &b };
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();

        let single = run_lstm(&p, &xs[..1]).unwrap();
        let (manual_h, _) = lstm_step(&p, &xs[0], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(single, manual_h);

        let folded = run_lstm(&p, &xs).unwrap();
        let (h1, c1) = lstm_step(&p, &xs[0], &[0.0; 2], &[0.0; 2]).unwrap();
        let (h2, c2) = lstm_step(&p, &xs[1], &h1, &c1).unwrap();
        let (h3, _) = lstm_step(&p, &xs[2], &h2, &c2).unwrap();
        assert_eq!(folded, h3);
    }

    #[test]
    fn mlp_eval_mode_ignores_rng() {
        let mut rng_a = ChaCha8Rng::seed_from_u64(1);
        let mut rng_b = ChaCha8Rng::seed_from_u64(999);
        let w1 = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b1 = Tensor::zeros(vec![2]);
        let w2 = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let b2 = Tensor::zeros(vec![1]);
        let x = [0.5, -0.25];
        let a = mlp_forward(&w1, &b1, &w2, &b2, &x, 0.5, false, &mut rng_a).unwrap();
        let b = mlp_forward(&w1, &b1, &w2, &b2, &x, 0.5, false, &mut rng_b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mlp_zero_rate_training_equals_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w1 = xavier_uniform(4, 3, &mut rng);
        let b1 = Tensor::zeros(vec![4]);
        let w2 = xavier_uniform(2, 4, &mut rng);
        let b2 = Tensor::zeros(vec![2]);
        let x = [0.1, -0.2, 0.3];
        let train = mlp_forward(&w1, &b1, &w2, &b2, &x, 0.0, true, &mut rng.clone()).unwrap();
        let eval = mlp_forward(&w1, &b1, &w2, &b2, &x, 0.0, false, &mut rng).unwrap();
        assert_eq!(train, eval);
    }

    #[test]
    fn mlp_dropout_matches_hand_applied_mask() {
        let seed = 11;
        let w1 = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b1 = Tensor::new(vec![2], vec![0.1, -0.1]).unwrap();
        let w2 = Tensor::new(vec![2, 2], vec![1.0, -1.0, 0.5, 0.5]).unwrap();
        let b2 = Tensor::new(vec![2], vec![0.0, 1.0]).unwrap();
        let x = [1.0, -2.0];
        let rate = 0.5;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let got = mlp_forward(&w1, &b1, &w2, &b2, &x, rate, true, &mut rng).unwrap();

        // Re-draw the same masks and apply them by hand.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m_in = dropout_mask(2, rate, &mut rng).unwrap();
        let m_hidden = dropout_mask(2, rate, &mut rng).unwrap();
        let xd = [x[0] * m_in[0], x[1] * m_in[1]];
        let h = [
            (1.0 * xd[0] + 2.0 * xd[1] + 0.1).max(0.0) * m_hidden[0],
            (3.0 * xd[0] + 4.0 * xd[1] - 0.1).max(0.0) * m_hidden[1],
        ];
        let want = [h[0] - h[1], 0.5 * h[0] + 0.5 * h[1] + 1.0];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn mlp_rejects_bad_rate() {
        let w1 = Tensor::zeros(vec![1, 1]);
        let b1 = Tensor::zeros(vec![1]);
        let w2 = Tensor::zeros(vec![1, 1]);
        let b2 = Tensor::zeros(vec![1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mlp_forward(&w1, &b1, &w2, &b2, &[1.0], 1.0, true, &mut rng).is_err());
        assert!(mlp_forward(&w1, &b1, &w2, &b2, &[1.0], -0.1, false, &mut rng).is_err());
    }

    #[test]
    fn softmax_symmetry_and_stability() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1000.0, 0.0]);
        assert!(p[0] > 1.0 - 1e-12 && p[1] < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let scores: [f64; 3] = [1.0, 2.0, 3.0];
        let direct: Vec<f64> = {
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            scores.iter().map(|s| s.exp() / z).collect()
        };
        let got = softmax(&scores);
        let sum: f64 = got.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for (g, d) in got.iter().zip(&direct) {
            assert!((g - d).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        let uniform = cross_entropy(&[1.0 / 3.0; 3], 0).unwrap();
        assert!((uniform - 3f64.ln()).abs() < 1e-12);
        let skewed = cross_entropy(&[0.5, 0.25, 0.25], 1).unwrap();
        assert!((skewed - 4f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&[1.0], 1).is_err());
    }

    #[test]
    fn cross_entropy_is_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 10.0 - 5.0).collect();
            let probs = softmax(&scores);
            let idx = rng.gen_range(0..6);
            assert!(cross_entropy(&probs, idx).unwrap() >= 0.0);
        }
    }
}

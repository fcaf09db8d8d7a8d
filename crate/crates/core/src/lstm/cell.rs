//! Forward pass and backpropagation through time.

use super::{LstmError, LstmWeights};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Activations recorded during the forward pass of one window.
struct Tape {
    steps: usize,
    h: usize,
    /// Gate activations `[i, f, g, o]` per step, `4H` each.
    gates: Vec<f64>,
    /// Pre-activation of `g` per step.
    g_pre: Vec<f64>,
    /// Cell state per step (index 0 is the zero initial state).
    c: Vec<f64>,
    /// Hidden state per step (index 0 is the zero initial state).
    hs: Vec<f64>,
}

fn check_window(w: &LstmWeights, window: &[f64], steps: usize) -> Result<(), LstmError> {
    let need = steps * w.input_dim;
    if window.len() != need || steps == 0 {
        return Err(LstmError::WindowLength {
            have: window.len(),
            need,
        });
    }
    Ok(())
}

fn run(w: &LstmWeights, window: &[f64], steps: usize) -> (f64, Tape) {
    let (d, h) = (w.input_dim, w.hidden_dim);
    let p = &w.params;
    let mut tape = Tape {
        steps,
        h,
        gates: vec![0.0; steps * 4 * h],
        g_pre: vec![0.0; steps * h],
        c: vec![0.0; (steps + 1) * h],
        hs: vec![0.0; (steps + 1) * h],
    };
    let mut pre = vec![0.0; 4 * h];
    for t in 0..steps {
        let x = &window[t * d..(t + 1) * d];
        let h_prev = &tape.hs[t * h..(t + 1) * h];
        for g in 0..4 {
            let wi = w.w_in_offset(g);
            let wr = w.w_rec_offset(g);
            let bi = w.b_in_offset(g);
            let br = w.b_rec_offset(g);
            for j in 0..h {
                let mut a = p[bi + j] + p[br + j];
                for k in 0..d {
                    a += p[wi + j * d + k] * x[k];
                }
                for k in 0..h {
                    a += p[wr + j * h + k] * h_prev[k];
                }
                pre[g * h + j] = a;
            }
        }
        let base = t * 4 * h;
        for j in 0..h {
            let i_g = sigmoid(pre[j]);
            let f_g = sigmoid(pre[h + j]);
            let g_g = silu(pre[2 * h + j]);
            let o_g = sigmoid(pre[3 * h + j]);
            tape.gates[base + j] = i_g;
            tape.gates[base + h + j] = f_g;
            tape.gates[base + 2 * h + j] = g_g;
            tape.gates[base + 3 * h + j] = o_g;
            tape.g_pre[t * h + j] = pre[2 * h + j];
            let c_new = f_g * tape.c[t * h + j] + i_g * g_g;
            tape.c[(t + 1) * h + j] = c_new;
            tape.hs[(t + 1) * h + j] = o_g * silu(c_new);
        }
    }
    let h_last = &tape.hs[steps * h..];
    let y = w.dense_b() + w.dense_w().iter().zip(h_last).map(|(a, b)| a * b).sum::<f64>();
    (y, tape)
}

/// Accumulates `dy * ∂y/∂params` into `grad` and returns `dy * ∂y/∂window`.
fn backprop(w: &LstmWeights, window: &[f64], tape: &Tape, dy: f64, grad: &mut [f64]) -> Vec<f64> {
    let (d, h, steps) = (w.input_dim, tape.h, tape.steps);
    let p = &w.params;
    let mut dx = vec![0.0; window.len()];

    let dense = w.dense_offset();
    let mut dh = vec![0.0; h];
    for j in 0..h {
        grad[dense + j] += dy * tape.hs[steps * h + j];
        dh[j] = dy * p[dense + j];
    }
    let n = grad.len();
    grad[n - 1] += dy;

    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    for t in (0..steps).rev() {
        let base = t * 4 * h;
        for j in 0..h {
            let (i_g, f_g, g_g, o_g) = (
                tape.gates[base + j],
                tape.gates[base + h + j],
                tape.gates[base + 2 * h + j],
                tape.gates[base + 3 * h + j],
            );
            let c_t = tape.c[(t + 1) * h + j];
            let c_prev = tape.c[t * h + j];
            let d_o = dh[j] * silu(c_t);
            let dc = dc_next[j] + dh[j] * o_g * silu_grad(c_t);
            da[j] = dc * g_g * i_g * (1.0 - i_g);
            da[h + j] = dc * c_prev * f_g * (1.0 - f_g);
            da[2 * h + j] = dc * i_g * silu_grad(tape.g_pre[t * h + j]);
            da[3 * h + j] = d_o * o_g * (1.0 - o_g);
            dc_next[j] = dc * f_g;
        }
        let x = &window[t * d..(t + 1) * d];
        let h_prev = &tape.hs[t * h..(t + 1) * h];
        let mut dh_prev = vec![0.0; h];
        for g in 0..4 {
            let wi = w.w_in_offset(g);
            let wr = w.w_rec_offset(g);
            let bi = w.b_in_offset(g);
            let br = w.b_rec_offset(g);
            for j in 0..h {
                let a = da[g * h + j];
                grad[bi + j] += a;
                grad[br + j] += a;
                for k in 0..d {
                    grad[wi + j * d + k] += a * x[k];
                    dx[t * d + k] += p[wi + j * d + k] * a;
                }
                for k in 0..h {
                    grad[wr + j * h + k] += a * h_prev[k];
                    dh_prev[k] += p[wr + j * h + k] * a;
                }
            }
        }
        dh = dh_prev;
    }
    dx
}

/// Forecast for one window of `steps` time steps, each `input_dim` values
/// (time-major, oldest first). The initial hidden and cell states are zero.
pub fn forward(w: &LstmWeights, window: &[f64], steps: usize) -> Result<f64, LstmError> {
    check_window(w, window, steps)?;
    Ok(run(w, window, steps).0)
}

pub fn forward_batch(w: &LstmWeights, windows: &[Vec<f64>], steps: usize) -> Result<Vec<f64>, LstmError> {
    windows.iter().map(|x| forward(w, x, steps)).collect()
}

/// Forecast and its gradient with respect to every window element.
pub fn input_gradient(w: &LstmWeights, window: &[f64], steps: usize) -> Result<(f64, Vec<f64>), LstmError> {
    check_window(w, window, steps)?;
    let (y, tape) = run(w, window, steps);
    let mut scratch = vec![0.0; w.params.len()];
    let dx = backprop(w, window, &tape, 1.0, &mut scratch);
    Ok((y, dx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Mean squared error over the batch.
    pub loss: f64,
    pub params: Vec<f64>,
    /// Loss gradient with respect to each window in the batch.
    pub inputs: Vec<Vec<f64>>,
}

/// Loss `mean((y_hat - y)^2)` and its exact gradients.
pub fn gradients(w: &LstmWeights, windows: &[Vec<f64>], targets: &[f64], steps: usize) -> Result<Gradients, LstmError> {
    let n = windows.len();
    if n == 0 || targets.len() != n {
        return Err(LstmError::NoWindows(format!(
            " ({} windows, {} targets)",
            n,
            targets.len()
        )));
    }
    let mut grads = Gradients {
        loss: 0.0,
        params: vec![0.0; w.params.len()],
        inputs: Vec::with_capacity(n),
    };
    let scale = 1.0 / n as f64;
    for (x, &y) in windows.iter().zip(targets) {
        check_window(w, x, steps)?;
        let (y_hat, tape) = run(w, x, steps);
        let err = y_hat - y;
        grads.loss += err * err * scale;
        let dx = backprop(w, x, &tape, 2.0 * err * scale, &mut grads.params);
        grads.inputs.push(dx);
    }
    Ok(grads)
}

/// Accumulates the parameter gradient of the batch MSE into `grad` and
/// returns the loss. Windows are assumed to be validated.
pub(crate) fn batch_gradient(w: &LstmWeights, batch: &[(&[f64], f64)], steps: usize, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &(x, y) in batch {
        let (y_hat, tape) = run(w, x, steps);
        let err = y_hat - y;
        loss += err * err * scale;
        backprop(w, x, &tape, 2.0 * err * scale, grad);
    }
    loss
}

//! Reverse and forward mode on a small spectral graph.

use sno::autodiff::{jvp, Activation, Tape};
use sno::tensor::Mat;

fn main() -> sno::Result<()> {
    let n = 8;
    let x = Mat::from_vec(1, n, (0..n).map(|j| (j as f64 * 0.7).sin()).collect());
    let w = Mat::from_vec(2, 1, vec![0.8, -1.3]);

    // loss = ∫ tanh(W x)² dx, truncated to 3 Fourier modes first
    let build = |tape: &mut Tape, w, x| {
        let f = tape.dft(x, 3)?;
        let smooth = tape.idft(f, n)?;
        let z = tape.matmul(w, smooth, false)?;
        let a = tape.activation(z, Activation::Tanh)?;
        let sq = tape.mul(a, a)?;
        tape.quadrature_sum(sq, 1.0 / n as f64)
    };

    let mut tape = Tape::new();
    let wid = tape.parameter(w.clone());
    let xid = tape.input_real(x.clone());
    let loss = build(&mut tape, wid, xid)?;
    let grad = tape.backward(loss)?;
    println!("loss {:.6}, dL/dW = {:?}", tape.scalar(loss), grad.flatten());

    let h = Mat::from_vec(1, n, vec![1.0; n]);
    let dir = jvp(
        |t, x| {
            let wid = t.input_real(w.clone());
            build(t, wid, x)
        },
        &x,
        &h,
    )?;
    println!("directional derivative along 1: {:.6}", dir.data[0]);
    Ok(())
}

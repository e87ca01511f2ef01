//! One LSTM step by hand, then the same state modulated by a visual gate.
//!
//! cargo run --example lstm_step

use mmlstm::model::{lstm_step, visual_modulate, LstmParams, LstmState};
use mmlstm::tensor::Matrix;

fn main() {
    // One hidden unit, one input dimension, every gate weight 1.
    let params = LstmParams {
        w: Matrix::from_vec(4, 1, vec![1.0; 4]),
        v: Matrix::zeros(4, 1),
        b: vec![0.0; 4],
        m: Matrix::zeros(1, 1),
        embed: Matrix::zeros(1, 1),
        out: Matrix::zeros(1, 1),
        out_bias: vec![0.0],
    };
    let prev = LstmState { z: vec![0.0], c: vec![0.2] };
    let (state, gates) = lstm_step(&params, &[0.5], &prev);
    println!(
        "i = {:.6}  f = {:.6}  g = {:.6}  o = {:.6}",
        gates.input()[0],
        gates.forget()[0],
        gates.cell()[0],
        gates.output()[0]
    );
    println!("c = {:.7}  z = {:.7}", state.c[0], state.z[0]);

    // M v is applied as is; 2 doubles the state, -1 flips it.
    for gate in [1.0, 2.0, -1.0, 0.0] {
        let m = Matrix::from_vec(1, 1, vec![gate]);
        println!("M v = {gate:>4}: z' = {:.7}", visual_modulate(&state.z, &m, &[1.0])[0]);
    }
}

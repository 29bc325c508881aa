//! Builds a small two-layer network on the tape, backpropagates, and checks
//! the result against finite differences.

use chime::tensor_core::{grad_check, Tape, Tensor};

fn main() -> chime::Result<()> {
    let w1 = Tensor::new(vec![3, 4], (0..12).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect())?;
    let w2 = Tensor::new(vec![4, 2], (0..8).map(|i| ((i * 5 % 7) as f64 - 3.0) / 5.0).collect())?;
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 0.25, 1.5, 0.0, -0.75])?;

    let net = |t: &mut Tape<f64>, w: &[chime::tensor_core::Var]| {
        let xv = t.constant(x.clone());
        let h = t.matmul(xv, w[0])?;
        let h = t.gelu(h)?;
        let y = t.matmul(h, w[1])?;
        let y = t.softmax(y, 1)?;
        let y = t.mul(y, y)?;
        t.sum(y)
    };

    let mut tape = Tape::new();
    let vars = vec![tape.leaf(w1.clone().with_grad()), tape.leaf(w2.clone().with_grad())];
    let out = net(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    println!("loss = {:.6}", tape.value(out).data()[0]);
    println!("dL/dW2 = {:?}", grads.get(vars[1]).unwrap());

    let report = grad_check(net, &[w1, w2], 1e-4)?;
    println!(
        "checked {} entries, max relative error {:.2e} (analytic {:.6}, numeric {:.6})",
        report.entries, report.max_rel_error, report.analytic, report.numeric
    );
    Ok(())
}

use super::{GradError, Tape, Tensor, Var};

/// Largest `|a − f| / max(1, |a|, |f|)` between `analytic` gradients and
/// central differences of `f` around `inputs`.
pub fn relative_error(
    f: impl Fn(&[Tensor]) -> f64,
    analytic: &[Tensor],
    inputs: &[Tensor],
    eps: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, x) in inputs.iter().enumerate() {
        for (idx, &v) in x.indexed_iter() {
            probe[k][idx] = v + eps;
            let up = f(&probe);
            probe[k][idx] = v - eps;
            let down = f(&probe);
            probe[k][idx] = v;
            let fd = (up - down) / (2.0 * eps);
            let a = analytic[k][idx];
            worst = worst.max((a - fd).abs() / 1f64.max(a.abs()).max(fd.abs()));
        }
    }
    worst
}

/// Checks the tape gradients of a scalar function built by `build` from
/// one trainable leaf per input.
pub fn grad_check(
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var, GradError>,
    inputs: &[Tensor],
    eps: f64,
) -> Result<f64, GradError> {
    let run = |xs: &[Tensor]| -> Result<(Tape, Vec<Var>, Var), GradError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };
    let (tape, vars, out) = run(inputs)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, x)| {
            grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(x.raw_dim()))
        })
        .collect();
    let value = |xs: &[Tensor]| {
        let (tape, _, out) = run(xs).expect("same shapes as the probe point");
        tape.value(out)[[0, 0]]
    };
    Ok(relative_error(value, &analytic, inputs, eps))
}

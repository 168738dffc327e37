use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tape, Var};

/// Compares tape gradients against central finite differences.
///
/// `f` builds a scalar on a fresh tape from one leaf per entry of
/// `params`. Returns the largest
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)` over all entries.
pub fn grad_check<T, F>(f: F, params: &[Matrix<T>], step: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step <= 1e-3) {
        return Err(Error::Config(format!("grad_check step {step} outside (0, 1e-3]")));
    }
    let eval = |ps: &[Matrix<T>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.scalar(out).as_f64();
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check evaluation".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.scalar(out).as_f64().is_finite() {
        return Err(Error::NonFinite("grad_check evaluation".into()));
    }
    let grads = tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut work: Vec<Matrix<T>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.get(vars[pi]);
        for k in 0..p.len() {
            let orig = p.as_slice()[k];
            work[pi].as_mut_slice()[k] = orig + T::lit(step);
            let plus = eval(&work)?;
            work[pi].as_mut_slice()[k] = orig - T::lit(step);
            let minus = eval(&work)?;
            work[pi].as_mut_slice()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.map_or(0.0, |g| g.as_slice()[k].as_f64());
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

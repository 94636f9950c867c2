//! Small dense solves and restarted GMRES for matrix-free operators.

/// Solves the augmented system `[A | b]` by partial-pivot Gaussian elimination.
pub fn dense_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = a[r][n];
        for c in r + 1..n {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a GMRES solve.
#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES for `A x = b`.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    restart: usize,
    max_iter: usize,
    tol: f64,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= tol {
            return GmresOutcome { x, iterations, relative_residual: rel, converged: true };
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut hess = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            for (j, vj) in v.iter().enumerate() {
                let hjk = dot(&w, vj);
                hess[j][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vi;
                }
            }
            let hn = norm(&w);
            hess[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let d = hess[k][k].hypot(hess[k + 1][k]);
            cs[k] = hess[k][k] / d;
            sn[k] = hess[k + 1][k] / d;
            hess[k][k] = d;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= tol || iterations >= max_iter || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for r in (0..k_used).rev() {
            let mut acc = g[r];
            for c in r + 1..k_used {
                acc -= hess[r][c] * y[c];
            }
            y[r] = acc / hess[r][r];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z[j]) {
                *xi += yj * zi;
            }
        }
        if rel <= tol {
            let ax = apply(&x);
            let true_rel = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / bnorm;
            if true_rel <= tol * 10.0 {
                return GmresOutcome { x, iterations, relative_residual: true_rel, converged: true };
            }
        }
    }
    GmresOutcome { x, iterations, relative_residual: rel, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_gmres_agree() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.1, 0.4, 2.0]];
        let b = [1.0, 2.0, 3.0];
        let aug = a.iter().zip(b).map(|(r, bi)| vec![r[0], r[1], r[2], bi]).collect();
        let xd = dense_solve(aug).unwrap();
        let apply = |x: &[f64]| a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect::<Vec<f64>>();
        let out = gmres(apply, |r| r.to_vec(), &b, 2, 50, 1e-13);
        assert!(out.converged);
        for (p, q) in xd.iter().zip(&out.x) {
            assert!((p - q).abs() < 1e-10);
        }
    }
}

//! Monomial bases in a few variables.

/// All exponent vectors in `nvars` variables with total degree `<= degree`,
/// graded by degree then reverse-lexicographic.
pub fn monomials(nvars: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mut cur = vec![0u8; nvars];
        fill(&mut out, &mut cur, 0, d);
    }
    out
}

fn fill(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, left: usize) {
    if cur.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == cur.len() - 1 {
        cur[pos] = left as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e as u8;
        fill(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

pub fn degree(m: &[u8]) -> usize {
    m.iter().map(|&e| e as usize).sum()
}

/// Powers `y^0 ..= y^max` for each variable.
pub fn power_table(y: &[f64], max: usize) -> Vec<Vec<f64>> {
    y.iter()
        .map(|&v| {
            let mut p = Vec::with_capacity(max + 1);
            let mut acc = 1.0;
            for _ in 0..=max {
                p.push(acc);
                acc *= v;
            }
            p
        })
        .collect()
}

pub fn eval_real(m: &[u8], pw: &[Vec<f64>]) -> f64 {
    m.iter().zip(pw).map(|(&e, p)| p[e as usize]).product()
}

/// `d/dy_k` of a monomial.
pub fn deriv_real(m: &[u8], pw: &[Vec<f64>], k: usize) -> f64 {
    if m[k] == 0 {
        return 0.0;
    }
    let mut v = m[k] as f64;
    for (i, (&e, p)) in m.iter().zip(pw).enumerate() {
        let e = if i == k { e - 1 } else { e };
        v *= p[e as usize];
    }
    v
}

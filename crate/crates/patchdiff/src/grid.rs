//! Uniform lattice iteration over the unit cube [0,1]^m.

/// Visits every point of the lattice {0, 1/res, ..., 1}^m, i.e. (res+1)^m
/// points, in odometer order. The slice passed to `f` is reused.
pub fn for_each_point(m: usize, res: usize, mut f: impl FnMut(&[f64])) {
    assert!(m >= 1 && res >= 1);
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0f64; m];
    loop {
        for i in 0..m {
            x[i] = idx[i] as f64 / res as f64;
        }
        f(&x);
        let mut i = 0;
        loop {
            if i == m {
                return;
            }
            idx[i] += 1;
            if idx[i] <= res {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Visits the lattice points with at least one coordinate equal to 0 or 1.
pub fn for_each_boundary_point(m: usize, res: usize, mut f: impl FnMut(&[f64])) {
    for_each_point(m, res, |x| {
        if x.iter().any(|&v| v == 0.0 || v == 1.0) {
            f(x);
        }
    });
}

/// Collects the full lattice; convenient for tests.
pub fn points(m: usize, res: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity((res + 1).pow(m as u32));
    for_each_point(m, res, |x| out.push(x.to_vec()));
    out
}

//! Unnormalized Legendre polynomials, `ψ_n(1) = 1`, orthogonal under the
//! uniform density on [-1, 1] with `E[ψ_n²] = 1 / (2n + 1)`.

const EDGE_SLACK: f64 = 1e-12;

#[inline]
fn clamp_edge(xi: f64) -> f64 {
    if xi > 1.0 && xi <= 1.0 + EDGE_SLACK {
        1.0
    } else if xi < -1.0 && xi >= -1.0 - EDGE_SLACK {
        -1.0
    } else {
        xi
    }
}

/// `ψ_n(ξ)` by the three-term recurrence
/// `n ψ_n = (2n - 1) ξ ψ_{n-1} - (n - 1) ψ_{n-2}`.
pub fn legendre_value(n: usize, xi: f64) -> f64 {
    let xi = clamp_edge(xi);
    match n {
        0 => 1.0,
        1 => xi,
        _ => {
            let (mut p_prev, mut p_curr) = (1.0, xi);
            for k in 2..=n {
                let kf = k as f64;
                let p_next = ((2.0 * kf - 1.0) * xi * p_curr - (kf - 1.0) * p_prev) / kf;
                p_prev = p_curr;
                p_curr = p_next;
            }
            p_curr
        }
    }
}

/// `dψ_n/dξ` from the differentiated three-term recurrence
///
/// ```text
/// ψ'_n = ((2n-1)/n) ψ_{n-1} + ((2n-1)/n) ξ ψ'_{n-1} - ((n-1)/n) ψ'_{n-2}
/// ```
///
/// which stays finite at `ξ = ±1`, unlike the form divided by `1 - ξ²`.
pub fn legendre_derivative(n: usize, xi: f64) -> f64 {
    let mut vals = vec![0.0; n + 1];
    let mut ders = vec![0.0; n + 1];
    legendre_table(n, xi, &mut vals, &mut ders);
    ders[n]
}

/// Fills `values[k] = ψ_k(ξ)` and `derivs[k] = ψ'_k(ξ)` for `k = 0..=max_degree`.
///
/// Both slices must hold at least `max_degree + 1` entries.
pub fn legendre_table(max_degree: usize, xi: f64, values: &mut [f64], derivs: &mut [f64]) {
    let xi = clamp_edge(xi);
    values[0] = 1.0;
    derivs[0] = 0.0;
    if max_degree == 0 {
        return;
    }
    values[1] = xi;
    derivs[1] = 1.0;
    for n in 2..=max_degree {
        let nf = n as f64;
        let a = (2.0 * nf - 1.0) / nf;
        let b = (nf - 1.0) / nf;
        values[n] = a * xi * values[n - 1] - b * values[n - 2];
        derivs[n] = a * values[n - 1] + a * xi * derivs[n - 1] - b * derivs[n - 2];
    }
}

/// Values-only variant of [`legendre_table`].
pub fn legendre_values(max_degree: usize, xi: f64, values: &mut [f64]) {
    let xi = clamp_edge(xi);
    values[0] = 1.0;
    if max_degree == 0 {
        return;
    }
    values[1] = xi;
    for n in 2..=max_degree {
        let nf = n as f64;
        values[n] = ((2.0 * nf - 1.0) * xi * values[n - 1] - (nf - 1.0) * values[n - 2]) / nf;
    }
}

/// `E[ψ_n²]` under the uniform density on [-1, 1].
#[inline]
pub fn legendre_norm_squared(n: usize) -> f64 {
    1.0 / (2.0 * n as f64 + 1.0)
}

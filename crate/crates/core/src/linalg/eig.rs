use num_complex::Complex64;

use super::normalize_phase;

const MAX_SWEEPS: usize = 60;

/// Cyclic Jacobi on a Hermitian `n x n` row-major matrix.
///
/// Returns eigenvalues (descending) and the row-major matrix whose columns are
/// the matching eigenvectors.
pub(super) fn jacobi(input: &[Complex64], n: usize) -> (Vec<f64>, Vec<Complex64>) {
    let mut a = input.to_vec();
    for i in 0..n {
        a[i * n + i].im = 0.0;
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }
    let total: f64 = a.iter().map(|z| z.norm_sqr()).sum();

    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if off == 0.0 || off <= 1e-32 * total {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                // negligible against both diagonal entries: drop it
                if sweep > 3 && mag * 1e17 < app.abs() && mag * 1e17 < aqq.abs() {
                    a[p * n + q] = Complex64::new(0.0, 0.0);
                    a[q * n + p] = Complex64::new(0.0, 0.0);
                    continue;
                }
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 { 1.0 / (tau + (1.0 + tau * tau).sqrt()) } else { -1.0 / (-tau + (1.0 + tau * tau).sqrt()) };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let ph = apq / mag;
                let sph = ph * s;
                let sphc = sph.conj();

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * c - sphc * akq;
                    a[k * n + q] = sph * akp + akq * c;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = apk * c - sph * aqk;
                    a[q * n + k] = sphc * apk + aqk * c;
                }
                a[p * n + p] = Complex64::new(app - t * mag, 0.0);
                a[q * n + q] = Complex64::new(aqq + t * mag, 0.0);
                a[p * n + q] = Complex64::new(0.0, 0.0);
                a[q * n + p] = Complex64::new(0.0, 0.0);

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * c - sphc * vkq;
                    v[k * n + q] = sph * vkp + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].re.total_cmp(&a[i * n + i].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let mut vectors = vec![Complex64::new(0.0, 0.0); n * n];
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            col[k] = v[k * n + src];
        }
        normalize_phase(&mut col);
        for k in 0..n {
            vectors[k * n + dst] = col[k];
        }
    }
    (values, vectors)
}

//! Bounds-checked entry points into `matrixmultiply`. Row-major operands;
//! `op(a)` is `m×k`, `op(b)` is `k×n`, `c` is `m×n`.
#![allow(unsafe_code)]

fn strides(trans: bool, rows: usize, cols: usize) -> (isize, isize) {
    // Untransposed operand is stored rows×cols; transposed is stored cols×rows.
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! checked_gemm {
    ($name:ident, $t:ty, $raw:path) => {
        #[allow(clippy::too_many_arguments)]
        pub fn $name(
            trans_a: bool,
            trans_b: bool,
            m: usize,
            n: usize,
            k: usize,
            alpha: $t,
            a: &[$t],
            b: &[$t],
            beta: $t,
            c: &mut [$t],
        ) {
            assert!(a.len() >= m * k, "gemm: lhs holds {} values, needs {}", a.len(), m * k);
            assert!(b.len() >= k * n, "gemm: rhs holds {} values, needs {}", b.len(), k * n);
            assert!(c.len() >= m * n, "gemm: output holds {} values, needs {}", c.len(), m * n);
            if m == 0 || n == 0 {
                return;
            }
            let (rsa, csa) = strides(trans_a, m, k);
            let (rsb, csb) = strides(trans_b, k, n);
            // SAFETY: the asserts above guarantee every index touched through
            // these strides lies inside the borrowed slices, and `c` is a
            // unique borrow disjoint from `a` and `b`.
            unsafe {
                $raw(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
            }
        }
    };
}

checked_gemm!(sgemm, f32, matrixmultiply::sgemm);
checked_gemm!(dgemm, f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_transpose_combinations() {
        // a: 2×3, b: 3×2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let want = [58.0, 64.0, 139.0, 154.0];
        for (ta, tb, x, y) in [(false, false, &a, &b), (true, false, &at, &b), (false, true, &a, &bt), (true, true, &at, &bt)] {
            let mut c = [1.0; 4];
            dgemm(ta, tb, 2, 2, 3, 1.0, x, y, 0.0, &mut c);
            assert_eq!(c, want, "trans_a={ta} trans_b={tb}");
        }
        let mut c = [1.0; 4];
        dgemm(false, false, 2, 2, 3, 2.0, &a, &b, 1.0, &mut c);
        assert_eq!(c, [117.0, 129.0, 279.0, 309.0]);
    }
}

//! Multi-index helpers for row-major register layouts.
//!
//! A composite index over registers with dimensions `dims = [d_0, …, d_{k-1}]`
//! is `i = Σ_j i_j · stride_j` with `stride_j = d_{j+1} · … · d_{k-1}` — the
//! first register is the most significant digit.

/// Row-major strides for the given register dimensions.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for j in (0..dims.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * dims[j + 1];
    }
    s
}

/// Composite index from per-register digits.
pub fn compose_index(dims: &[usize], digits: &[usize]) -> usize {
    debug_assert_eq!(dims.len(), digits.len());
    let mut idx = 0usize;
    for (j, &d) in digits.iter().enumerate() {
        debug_assert!(d < dims[j]);
        idx = idx * dims[j] + d;
    }
    idx
}

/// Per-register digits of a composite index.
pub fn decompose_index(dims: &[usize], mut idx: usize) -> Vec<usize> {
    let mut digits = vec![0usize; dims.len()];
    for j in (0..dims.len()).rev() {
        digits[j] = idx % dims[j];
        idx /= dims[j];
    }
    digits
}

/// Calls `f` with every multi-index over `dims`, in row-major order.
pub fn for_each_index<F: FnMut(&[usize])>(dims: &[usize], mut f: F) {
    let mut digits = vec![0usize; dims.len()];
    if dims.iter().any(|&d| d == 0) {
        return;
    }
    loop {
        f(&digits);
        // odometer increment
        let mut j = dims.len();
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            digits[j] += 1;
            if digits[j] < dims[j] {
                break;
            }
            digits[j] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_decompose_round_trip() {
        let dims = [2usize, 3, 4];
        for i in 0..24 {
            let d = decompose_index(&dims, i);
            assert_eq!(compose_index(&dims, &d), i);
        }
    }

    #[test]
    fn strides_match_row_major() {
        assert_eq!(strides(&[2, 3, 4]), vec![12, 4, 1]);
        assert_eq!(strides(&[5]), vec![1]);
        assert!(strides(&[]).is_empty());
    }

    #[test]
    fn for_each_visits_all_in_order() {
        let mut seen = Vec::new();
        for_each_index(&[2, 2], |d| seen.push(compose_index(&[2, 2], d)));
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }
}

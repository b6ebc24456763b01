//! Partition hashing: `h(x1..xt) = (g(x1) + ... + g(xt)) mod n` over the
//! columns of a discriminating set, taken in ascending position order.

/// Seedless 64-bit mixer used as the per-value hash `g`.
///
/// Fibonacci multiply followed by two xor-shift/multiply rounds; fixed
/// constants so partitioning is identical across runs and machines.
#[inline]
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z ^= z >> 31;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 29;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 32)
}

#[inline]
fn identity(x: u64) -> u64 {
    x
}

/// The per-value hash `g` plugged into the sum-mod-n partition function.
#[derive(Clone, Copy, Debug)]
pub struct HashScheme {
    g: fn(u64) -> u64,
    name: &'static str,
}

impl HashScheme {
    pub const MIXER: HashScheme = HashScheme {
        g: mix64,
        name: "mix64",
    };
    /// `g(x) = x`; only useful for hand-checkable tests on integers.
    pub const IDENTITY: HashScheme = HashScheme {
        g: identity,
        name: "identity",
    };

    #[inline]
    pub fn g(&self, x: u64) -> u64 {
        (self.g)(x)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Partition of `row` under discriminating columns `disc` (0-based,
    /// ascending). An empty `disc` or `n <= 1` always maps to partition 0.
    #[inline]
    pub fn partition(&self, row: &[u64], disc: &[usize], n: usize) -> usize {
        if n <= 1 || disc.is_empty() {
            return 0;
        }
        let mut s = 0u64;
        for &c in disc {
            s = s.wrapping_add(self.g(row[c]));
        }
        (s % n as u64) as usize
    }

    /// Same as [`partition`](Self::partition) but over values already
    /// projected onto the discriminating set.
    #[inline]
    pub fn partition_of_key(&self, key: &[u64], n: usize) -> usize {
        if n <= 1 || key.is_empty() {
            return 0;
        }
        let s = key.iter().fold(0u64, |s, &x| s.wrapping_add(self.g(x)));
        (s % n as u64) as usize
    }
}

impl Default for HashScheme {
    fn default() -> Self {
        HashScheme::MIXER
    }
}

impl PartialEq for HashScheme {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

/// Hash of selected columns of a row, for the in-partition hash tables.
#[inline]
pub fn hash_cols(row: &[u64], cols: &[usize]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3u64;
    for &c in cols {
        h = (h ^ row[c]).wrapping_mul(0x100_0000_01B3).rotate_left(23);
    }
    mix64(h)
}

/// Hash of a whole row.
#[inline]
pub fn hash_row(row: &[u64]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3u64;
    for &x in row {
        h = (h ^ x).wrapping_mul(0x100_0000_01B3).rotate_left(23);
    }
    mix64(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_scheme_examples() {
        let s = HashScheme::IDENTITY;
        assert_eq!(s.partition(&[3, 5], &[0], 4), 3);
        assert_eq!(s.partition(&[3, 5], &[0, 1], 4), 0);
        assert_eq!(s.partition(&[3, 5], &[0, 1], 1), 0);
    }

    #[test]
    fn projected_and_row_forms_agree() {
        let s = HashScheme::MIXER;
        for x in 0..100u64 {
            let row = [x, x * 7 + 1, 99];
            assert_eq!(
                s.partition(&row, &[0, 2], 7),
                s.partition_of_key(&[row[0], row[2]], 7)
            );
        }
    }

    #[test]
    fn row_and_column_hashes_agree_on_full_projection() {
        let row = [1u64, 2, 3];
        assert_eq!(hash_row(&row), hash_cols(&row, &[0, 1, 2]));
    }
}

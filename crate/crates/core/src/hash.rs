//! MurmurHash3, x64 128-bit variant.

const C1: u64 = 0x87c3_7b91_1142_53d5;
const C2: u64 = 0x4cf5_ad43_2745_937f;

#[inline]
fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^ (k >> 33)
}

#[inline]
fn mix_k1(k1: u64) -> u64 {
    k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2)
}

#[inline]
fn mix_k2(k2: u64) -> u64 {
    k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1)
}

/// Returns the 128-bit hash as `h1 | h2 << 64`, i.e. the little-endian
/// reading of the 16 output bytes of the reference implementation.
pub fn murmur3_128(data: &[u8], seed: u32) -> u128 {
    let mut h1 = seed as u64;
    let mut h2 = seed as u64;

    let mut blocks = data.chunks_exact(16);
    for block in &mut blocks {
        let k1 = u64::from_le_bytes(block[..8].try_into().unwrap());
        let k2 = u64::from_le_bytes(block[8..].try_into().unwrap());

        h1 ^= mix_k1(k1);
        h1 = h1.rotate_left(27).wrapping_add(h2).wrapping_mul(5).wrapping_add(0x52dc_e729);
        h2 ^= mix_k2(k2);
        h2 = h2.rotate_left(31).wrapping_add(h1).wrapping_mul(5).wrapping_add(0x3849_5ab5);
    }

    let tail = blocks.remainder();
    if tail.len() > 8 {
        let k2 = tail[8..]
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc ^ ((b as u64) << (8 * i)));
        h2 ^= mix_k2(k2);
    }
    if !tail.is_empty() {
        let k1 = tail[..tail.len().min(8)]
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc ^ ((b as u64) << (8 * i)));
        h1 ^= mix_k1(k1);
    }

    let len = data.len() as u64;
    h1 ^= len;
    h2 ^= len;
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    h1 = fmix64(h1);
    h2 = fmix64(h2);
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);

    (h1 as u128) | ((h2 as u128) << 64)
}

/// 32 lowercase hex digits.
pub fn hex128(h: u128) -> String {
    format!("{h:032x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    // Pinned against the canonical C++ implementation (via the `mmh3` Python
    // binding, `mmh3.hash128(data, seed, signed=False)`).
    const VECTORS: &[(&[u8], u32, u128)] = &[
        (b"", 0, 0),
        (b"", 1, 0x51622daa78f835834610abe56eff5cb5),
        (b"hello", 0, 0x5b1e906a48ae1d19cbd8a7b341bd9b02),
        (b"hello", 1, 0x128900ef20900135a78ddff5adae8d10),
        (b"hello, world", 0, 0x4cdcbc079642414d342fac623a5ebc8e),
        (b"The quick brown fox jumps over the lazy dog", 0, 0x7a433ca9c49a9347e34bbc7bbc071b6c),
        ("नमस्ते दुनिया".as_bytes(), 0, 0x9cbd026da956e6c94d5357e8739f55e8),
        (b"abcdefghijklmnopq", 42, 0x108aa140a7e9ebeb7da3a48ab3b5413),
        (b"a", 0, 0xe6b53a48510e895a85555565f6597889),
        (b"0123456789abcdef", 0, 0x87c35b5c63a708da4be06d94cf4ad1a7),
        (b"0123456789abcde", 7, 0xdb693488682d8ac5d0369285c8e61e8e),
    ];

    #[test]
    fn reference_vectors() {
        for &(data, seed, want) in VECTORS {
            assert_eq!(murmur3_128(data, seed), want, "{:?} seed {seed}", String::from_utf8_lossy(data));
        }
    }

    #[test]
    fn seed_changes_value() {
        assert_ne!(murmur3_128(b"hello", 0), murmur3_128(b"hello", 1));
    }

    #[test]
    fn hex_is_fixed_width() {
        assert_eq!(hex128(0), "0".repeat(32));
        assert_eq!(hex128(murmur3_128(b"hello", 0)).len(), 32);
    }
}

use std::ops::Range;

/// Number of fragments for a body of `len` bytes; an empty body still takes one.
pub fn fragment_count(len: usize, limit: usize) -> usize {
    assert!(limit >= 1, "fragment limit must be at least one byte");
    len.div_ceil(limit).max(1)
}

/// Byte ranges of each fragment, in order.
pub fn fragment_ranges(len: usize, limit: usize) -> impl Iterator<Item = Range<usize>> {
    let count = fragment_count(len, limit);
    (0..count).map(move |i| {
        let start = i * limit;
        start..(start + limit).min(len)
    })
}

/// Splits `payload` into `limit`-sized slices; only the last may be shorter.
pub fn fragment_payload(payload: &[u8], limit: usize) -> Vec<&[u8]> {
    fragment_ranges(payload.len(), limit)
        .map(|r| &payload[r])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn one_mebibyte_in_64k_slices() {
        let payload = vec![7u8; 1 << 20];
        let frags = fragment_payload(&payload, 65_536);
        assert_eq!(frags.len(), 16);
        assert!(frags.iter().all(|f| f.len() == 65_536));
    }

    #[test]
    fn empty_payload_is_one_fragment() {
        let frags = fragment_payload(&[], 100);
        assert_eq!(frags.len(), 1);
        assert!(frags[0].is_empty());
    }

    #[test]
    fn remainder_fragment() {
        let payload = vec![1u8; 65_537];
        let sizes: Vec<_> = fragment_payload(&payload, 65_536)
            .iter()
            .map(|f| f.len())
            .collect();
        assert_eq!(sizes, vec![65_536, 1]);
    }

    fn check(len: usize, limit: usize) {
        let payload: Vec<u8> = (0..len).map(|i| (i * 31 % 251) as u8).collect();
        let frags = fragment_payload(&payload, limit);
        assert_eq!(frags.len(), len.div_ceil(limit).max(1));
        assert_eq!(frags.concat(), payload);
        for f in &frags[..frags.len() - 1] {
            assert_eq!(f.len(), limit);
        }
    }

    #[test]
    fn concatenation_reproduces_payload() {
        let limit = 1000;
        for len in [0, 1, limit - 1, limit, limit + 1, 2 * limit] {
            check(len, limit);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let limit = rng.gen_range(1..2000);
            check(rng.gen_range(0..10_000), limit);
        }
    }
}

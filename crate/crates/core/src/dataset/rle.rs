//! COCO run-length encodings.
//!
//! Runs alternate background/foreground starting with background and walk the
//! pixels in column-major order. The compressed form packs each count into
//! 5-bit groups (6 bits per character, offset by ASCII `'0'`), least
//! significant group first, with bit 5 as a continuation flag and bit 4 of
//! the final group as the sign. From the fourth count on, each value is stored
//! as the difference to the count two positions earlier.

use thiserror::Error;

use super::BinaryMask;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("run lengths sum to {sum}, expected {expected} for {height}x{width}")]
    CountSum {
        sum: u64,
        expected: u64,
        height: u32,
        width: u32,
    },
    #[error("invalid character {0:?} at byte {1} of compressed counts")]
    BadCharacter(char, usize),
    #[error("compressed counts end in the middle of a value")]
    Truncated,
    #[error("compressed counts decode to negative run {value} at position {index}")]
    NegativeRun { value: i64, index: usize },
    #[error("compressed count at position {0} overflows")]
    Overflow(usize),
}

/// Expands column-major run lengths into a mask of `height` x `width`.
pub fn decode_uncompressed_rle(counts: &[u32], height: u32, width: u32) -> Result<BinaryMask, RleError> {
    let expected = height as u64 * width as u64;
    let sum: u64 = counts.iter().map(|&c| c as u64).sum();
    if sum != expected {
        return Err(RleError::CountSum {
            sum,
            expected,
            height,
            width,
        });
    }
    let mut mask = BinaryMask::new(width, height);
    let h = height as usize;
    let mut pos = 0usize;
    for (i, &run) in counts.iter().enumerate() {
        let run = run as usize;
        if i % 2 == 1 {
            for p in pos..pos + run {
                mask.set((p / h) as u32, (p % h) as u32, true);
            }
        }
        pos += run;
    }
    Ok(mask)
}

/// Column-major run lengths of `mask`, background first.
pub fn encode_counts(mask: &BinaryMask) -> Vec<u32> {
    let (w, h) = mask.dimensions();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(x, y);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    counts
}

/// Packs run lengths into COCO's compressed character form.
pub fn counts_to_string(counts: &[u32]) -> String {
    let mut out = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut group = (x & 0x1f) as u8;
            x >>= 5;
            let more = if group & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                group |= 0x20;
            }
            out.push((group + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}

/// Unpacks COCO's compressed character form into run lengths.
pub fn counts_from_string(encoded: &str) -> Result<Vec<u32>, RleError> {
    let mut counts: Vec<u32> = Vec::new();
    let bytes = encoded.as_bytes();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut shift = 0u32;
        loop {
            let Some(&b) = bytes.get(p) else {
                return Err(RleError::Truncated);
            };
            if !(48..48 + 64).contains(&b) {
                return Err(RleError::BadCharacter(b as char, p));
            }
            if shift > 55 {
                return Err(RleError::Overflow(counts.len()));
            }
            let c = (b - 48) as i64;
            x |= (c & 0x1f) << shift;
            shift += 5;
            p += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << shift;
                }
                break;
            }
        }
        let index = counts.len();
        if index > 2 {
            x += counts[index - 2] as i64;
        }
        if x < 0 {
            return Err(RleError::NegativeRun { value: x, index });
        }
        let run = u32::try_from(x).map_err(|_| RleError::Overflow(index))?;
        counts.push(run);
    }
    Ok(counts)
}

pub fn decode_compressed_rle(encoded: &str, height: u32, width: u32) -> Result<BinaryMask, RleError> {
    let counts = counts_from_string(encoded)?;
    decode_uncompressed_rle(&counts, height, width)
}

pub fn encode_compressed_rle(mask: &BinaryMask) -> String {
    counts_to_string(&encode_counts(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_background_run_is_empty_mask() {
        let m = decode_uncompressed_rle(&[6], 2, 3).unwrap();
        assert_eq!(m.count_foreground(), 0);
    }

    #[test]
    fn zero_leading_run_is_full_mask() {
        let m = decode_uncompressed_rle(&[0, 6], 2, 3).unwrap();
        assert_eq!(m.count_foreground(), 6);
    }

    #[test]
    fn column_major_unrolling() {
        // h=3, w=2: column-major positions 2,3,4 -> (row2,col0), (row0,col1), (row1,col1)
        let m = decode_uncompressed_rle(&[2, 3, 1], 3, 2).unwrap();
        let fg: Vec<_> = m.foreground().collect();
        // foreground() yields (x, y) in row-major order
        assert_eq!(fg, vec![(1, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn wrong_sum_is_rejected() {
        assert!(matches!(
            decode_uncompressed_rle(&[2, 3], 3, 2),
            Err(RleError::CountSum { sum: 5, expected: 6, .. })
        ));
    }

    #[test]
    fn compressed_single_run_matches_uncompressed() {
        let s = counts_to_string(&[6]);
        assert_eq!(s, "6");
        assert_eq!(
            decode_compressed_rle(&s, 2, 3).unwrap(),
            decode_uncompressed_rle(&[6], 2, 3).unwrap()
        );
    }

    #[test]
    fn known_coco_strings() {
        // produced by pycocotools.mask.encode
        assert_eq!(counts_to_string(&[0, 12]), "0<");
        assert_eq!(counts_from_string("0<").unwrap(), vec![0, 12]);
        assert_eq!(counts_to_string(&[3, 2, 3, 1, 3]), "323O0");
        assert_eq!(counts_from_string("323O0").unwrap(), vec![3, 2, 3, 1, 3]);
        assert_eq!(counts_to_string(&[100, 40, 60]), "T3X1l1");
    }

    #[test]
    fn malformed_streams_are_rejected() {
        assert!(matches!(counts_from_string("6 "), Err(RleError::BadCharacter(' ', 1))));
        // continuation bit set on the last character
        assert_eq!(counts_from_string("P"), Err(RleError::Truncated));
        // fourth count is a delta against the second
        assert_eq!(counts_from_string("1112").unwrap(), vec![1, 1, 1, 3]);
        assert!(matches!(
            counts_from_string("100O"),
            Err(RleError::NegativeRun { value: -1, index: 3 })
        ));
        assert!(decode_compressed_rle("7", 2, 3).is_err());
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), (w * h) as usize)
                .prop_map(move |bits| BinaryMask::from_bits(w, h, bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn compressed_round_trip(mask in arb_mask()) {
            let s = encode_compressed_rle(&mask);
            let back = decode_compressed_rle(&s, mask.height(), mask.width()).unwrap();
            prop_assert_eq!(&back, &mask);
            prop_assert_eq!(encode_compressed_rle(&back), s);
        }

        #[test]
        fn foreground_plus_background_is_area(mask in arb_mask()) {
            prop_assert_eq!(
                mask.count_foreground() + mask.count_background(),
                (mask.width() * mask.height()) as usize
            );
        }
    }
}

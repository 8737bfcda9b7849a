use crate::error::{Error, Result};

/// Run-length encoded binary mask over row-major pixel order.
///
/// Runs alternate background/foreground, starting with background (a leading
/// zero-length run encodes a mask whose first pixel is foreground).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<u32>,
}

impl InstanceMask {
    /// Encodes a set of foreground pixel indices. Duplicates are ignored.
    pub fn encode(width: u32, height: u32, pixels: &[u32]) -> Result<Self> {
        let total = width as u64 * height as u64;
        let mut sorted = pixels.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() {
            return Err(Error::param("mask", "no foreground pixels"));
        }
        if *sorted.last().unwrap() as u64 >= total {
            return Err(Error::param("mask", "pixel index outside image"));
        }

        let mut runs = Vec::new();
        let mut cursor = 0u32;
        let mut i = 0;
        while i < sorted.len() {
            let start = sorted[i];
            let mut end = start;
            while i + 1 < sorted.len() && sorted[i + 1] == end + 1 {
                i += 1;
                end += 1;
            }
            runs.push(start - cursor);
            runs.push(end - start + 1);
            cursor = end + 1;
            i += 1;
        }
        let tail = (total - cursor as u64) as u32;
        if tail > 0 {
            runs.push(tail);
        }
        Ok(Self { width, height, runs })
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn foreground_count(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    /// Checks the run lengths cover the image exactly and mark at least one
    /// foreground pixel. Returns a short reason on failure.
    pub fn check(&self) -> std::result::Result<(), &'static str> {
        let sum: u64 = self.runs.iter().map(|&r| r as u64).sum();
        if sum != self.pixel_count() {
            return Err("mask length mismatch");
        }
        if self.foreground_count() == 0 {
            return Err("empty mask");
        }
        Ok(())
    }

    /// Foreground pixel indices in ascending row-major order.
    pub fn decode(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.foreground_count() as usize);
        let mut cursor = 0u32;
        for (k, &run) in self.runs.iter().enumerate() {
            if k % 2 == 1 {
                out.extend(cursor..cursor + run);
            }
            cursor += run;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_small() {
        let m = InstanceMask { width: 10, height: 10, runs: vec![4, 2, 94] };
        assert_eq!(m.decode(), vec![4, 5]);
        let full = InstanceMask { width: 10, height: 10, runs: vec![0, 100] };
        assert_eq!(full.decode(), (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn check_reasons() {
        let short = InstanceMask { width: 10, height: 10, runs: vec![4, 2, 93] };
        assert_eq!(short.check(), Err("mask length mismatch"));
        let empty = InstanceMask { width: 10, height: 10, runs: vec![100] };
        assert_eq!(empty.check(), Err("empty mask"));
    }

    #[test]
    fn encode_edges() {
        let m = InstanceMask::encode(4, 1, &[0, 3]).unwrap();
        assert_eq!(m.runs, vec![0, 1, 2, 1]);
        assert!(InstanceMask::encode(4, 1, &[]).is_err());
        assert!(InstanceMask::encode(4, 1, &[4]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        // Naive bitmap oracle: the decoded set equals the bitmap's set bits.
        #[test]
        fn round_trip(w in 1u32..40, h in 1u32..40, seed in any::<u64>(), density in 0.01f64..0.99) {
            let total = (w * h) as usize;
            let mut bitmap = vec![false; total];
            let mut state = seed | 1;
            for bit in bitmap.iter_mut() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                *bit = (state % 10_000) as f64 / 10_000.0 < density;
            }
            if !bitmap.iter().any(|b| *b) { bitmap[(seed as usize) % total] = true; }
            let set: Vec<u32> = (0..total as u32).filter(|&i| bitmap[i as usize]).collect();
            let mask = InstanceMask::encode(w, h, &set).unwrap();
            prop_assert!(mask.check().is_ok());
            prop_assert_eq!(mask.decode(), set);
        }
    }
}

//! Block FFT convolution engine.
//!
//! Long signals are processed in blocks of `L` symbols (`L * N_t` samples).
//! Each block is analyzed over a window made of the previous and current
//! block concatenated (`2 L N_t` samples). Filters are confined to the first
//! half of that window, zero-padded to the full window and transformed once.
//! The circular convolution of a window with such a filter reproduces the
//! linear convolution of the underlying stream on the second half of the
//! window; that half, decimated back to the symbol rate, is the valid output
//! of the block.

use crate::error::{Error, Result};
use crate::fft::Fft64;
use num_complex::Complex64;

/// Geometry of the block engine: `L` symbols per block, `N_t` samples per
/// symbol, windows of `2 * L * N_t` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub block_symbols: usize,
    pub samples_per_symbol: usize,
}

impl BlockLayout {
    pub fn new(block_symbols: usize, samples_per_symbol: usize) -> Result<Self> {
        if block_symbols == 0 || samples_per_symbol == 0 {
            return Err(Error::config("block_symbols and samples_per_symbol must be positive"));
        }
        Ok(Self { block_symbols, samples_per_symbol })
    }

    /// Samples per block: `L * N_t`.
    pub fn block_samples(&self) -> usize {
        self.block_symbols * self.samples_per_symbol
    }

    /// Window (and FFT) length: `2 * L * N_t`.
    pub fn window_samples(&self) -> usize {
        2 * self.block_samples()
    }
}

/// Concatenated (previous, current) block pair for block index `k`.
///
/// The window for block `k` starts at absolute sample `(k - 1) * L * N_t`;
/// the first window (`k = 0`) uses an all-zero previous block.
#[derive(Debug, Clone)]
pub struct BlockBuffer {
    pub window: Vec<Complex64>,
    pub block_index: usize,
}

/// Build the analysis window from two consecutive blocks of `L * N_t` samples.
pub fn make_window(prev_block: &[Complex64], cur_block: &[Complex64], block_index: usize) -> Result<BlockBuffer> {
    if prev_block.len() != cur_block.len() {
        return Err(Error::dimension(format!(
            "block length mismatch: prev {} vs cur {}",
            prev_block.len(),
            cur_block.len()
        )));
    }
    let mut window = Vec::with_capacity(2 * prev_block.len());
    window.extend_from_slice(prev_block);
    window.extend_from_slice(cur_block);
    Ok(BlockBuffer { window, block_index })
}

/// Frequency response of a filter zero-padded to the window length.
///
/// Time-domain support is confined to the first half (indices
/// `0 .. L * N_t - 1`); the second half is identically zero before the FFT.
#[derive(Debug, Clone)]
pub struct PaddedFilter {
    pub response: Vec<Complex64>,
    pub n_taps: usize,
}

impl PaddedFilter {
    pub fn window_len(&self) -> usize {
        self.response.len()
    }
}

/// Zero-pad `taps` to `2 * half_len` and transform once.
///
/// Rejects filters longer than `half_len = L * N_t`: the block length must
/// exceed the filter memory for the valid-region identity to hold.
pub fn pad_filter(taps: &[Complex64], half_len: usize) -> Result<PaddedFilter> {
    if taps.len() > half_len {
        return Err(Error::dimension(format!(
            "filter support {} exceeds block samples {}",
            taps.len(),
            half_len
        )));
    }
    let w = 2 * half_len;
    let mut buf = vec![Complex64::new(0.0, 0.0); w];
    buf[..taps.len()].copy_from_slice(taps);
    let fft = Fft64::new(w);
    fft.forward(&mut buf);
    Ok(PaddedFilter { response: buf, n_taps: taps.len() })
}

/// Circular convolution of a window with a padded filter, full-length output.
pub fn circ_conv(window: &BlockBuffer, filter: &PaddedFilter, fft: &Fft64) -> Result<Vec<Complex64>> {
    if window.window.len() != filter.window_len() {
        return Err(Error::dimension(format!(
            "window length {} != filter length {}",
            window.window.len(),
            filter.window_len()
        )));
    }
    let mut buf = fft.forward_copy(&window.window);
    for (b, h) in buf.iter_mut().zip(filter.response.iter()) {
        *b *= h;
    }
    fft.inverse(&mut buf);
    Ok(buf)
}

/// Frequency-domain product without the inverse transform, for callers that
/// accumulate several branches before a single final inverse FFT.
pub fn circ_conv_spectrum(window_spectrum: &[Complex64], filter: &PaddedFilter) -> Result<Vec<Complex64>> {
    if window_spectrum.len() != filter.window_len() {
        return Err(Error::dimension("spectrum length != filter length"));
    }
    Ok(window_spectrum
        .iter()
        .zip(filter.response.iter())
        .map(|(x, h)| x * h)
        .collect())
}

/// Extract the valid (non-aliased) second half of a full window output and
/// decimate it to one sample per symbol.
///
/// For a causal filter of support `<= L * N_t`, entry `i` equals the linear
/// convolution output at absolute sample `(k * L + i) * N_t`.
pub fn extract_valid(full_output: &[Complex64], samples_per_symbol: usize) -> Result<Vec<Complex64>> {
    if full_output.len() % (2 * samples_per_symbol) != 0 {
        return Err(Error::dimension("output length not divisible by 2 * N_t"));
    }
    let half = full_output.len() / 2;
    Ok(full_output[half..]
        .iter()
        .step_by(samples_per_symbol)
        .copied()
        .collect())
}

/// Convenience: filter a whole stream block-by-block and concatenate the
/// valid outputs. The stream length must be a multiple of `L * N_t`.
pub fn filter_stream(stream: &[Complex64], filter: &PaddedFilter, layout: BlockLayout) -> Result<Vec<Complex64>> {
    let bs = layout.block_samples();
    if stream.len() % bs != 0 {
        return Err(Error::dimension("stream length not a multiple of block samples"));
    }
    let n_blocks = stream.len() / bs;
    let fft = Fft64::new(layout.window_samples());
    let zeros = vec![Complex64::new(0.0, 0.0); bs];
    let mut out = Vec::with_capacity(n_blocks * layout.block_symbols);
    for k in 0..n_blocks {
        let prev = if k == 0 { &zeros[..] } else { &stream[(k - 1) * bs..k * bs] };
        let cur = &stream[k * bs..(k + 1) * bs];
        let win = make_window(prev, cur, k)?;
        let full = circ_conv(&win, filter, &fft)?;
        out.extend(extract_valid(&full, layout.samples_per_symbol)?);
    }
    Ok(out)
}

/// Direct linear convolution oracle (zero initial state), full output length.
pub fn direct_linear_conv(signal: &[Complex64], taps: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); signal.len() + taps.len() - 1];
    for (i, &s) in signal.iter().enumerate() {
        for (j, &h) in taps.iter().enumerate() {
            out[i + j] += s * h;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_complex(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn window_startup_and_concat() {
        let prev = vec![Complex64::new(0.0, 0.0); 4];
        let cur: Vec<Complex64> = (1..=4).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let w = make_window(&prev, &cur, 0).unwrap();
        assert!(w.window[..4].iter().all(|x| x.norm() == 0.0));
        let next: Vec<Complex64> = (5..=8).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let w1 = make_window(&cur, &next, 1).unwrap();
        for i in 0..8 {
            assert_eq!(w1.window[i].re, (i + 1) as f64);
        }
        // Sliding property: second half of window k = first half of window k+1.
        assert_eq!(&w.window[4..], &w1.window[..4]);
    }

    #[test]
    fn window_length_mismatch_rejected() {
        let a = vec![Complex64::new(0.0, 0.0); 4];
        let b = vec![Complex64::new(0.0, 0.0); 5];
        assert!(make_window(&a, &b, 0).is_err());
    }

    #[test]
    fn delta_filter_flat_response() {
        let taps = vec![Complex64::new(1.0, 0.0)];
        let pf = pad_filter(&taps, 8).unwrap();
        for h in &pf.response {
            assert!((h - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn filter_length_boundary() {
        let taps = vec![Complex64::new(1.0, 0.0); 8];
        assert!(pad_filter(&taps, 8).is_ok());
        let taps9 = vec![Complex64::new(1.0, 0.0); 9];
        assert!(pad_filter(&taps9, 8).is_err());
    }

    #[test]
    fn circ_conv_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 64;
        let window = BlockBuffer { window: rand_complex(&mut rng, n), block_index: 0 };
        let taps = rand_complex(&mut rng, 16);
        let pf = pad_filter(&taps, n / 2).unwrap();
        let fft = Fft64::new(n);
        let fast = circ_conv(&window, &pf, &fft).unwrap();
        // O(n^2) circular reference.
        let mut direct = vec![Complex64::new(0.0, 0.0); n];
        for m in 0..n {
            for (j, &h) in taps.iter().enumerate() {
                direct[m] += h * window.window[(m + n - j) % n];
            }
        }
        let scale = direct.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for i in 0..n {
            assert!((fast[i] - direct[i]).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn circ_conv_delta_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let window = BlockBuffer { window: rand_complex(&mut rng, 32), block_index: 0 };
        let pf = pad_filter(&[Complex64::new(1.0, 0.0)], 16).unwrap();
        let fft = Fft64::new(32);
        let out = circ_conv(&window, &pf, &fft).unwrap();
        for i in 0..32 {
            assert!((out[i] - window.window[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn valid_extraction_single_sample() {
        // L = 1, N_t = 1, delta filter: the valid sample is the current input.
        let prev = vec![Complex64::new(3.0, 0.0)];
        let cur = vec![Complex64::new(7.0, 1.0)];
        let w = make_window(&prev, &cur, 1).unwrap();
        let pf = pad_filter(&[Complex64::new(1.0, 0.0)], 1).unwrap();
        let fft = Fft64::new(2);
        let full = circ_conv(&w, &pf, &fft).unwrap();
        let valid = extract_valid(&full, 1).unwrap();
        assert_eq!(valid.len(), 1);
        assert!((valid[0] - cur[0]).norm() < 1e-12);
    }

    #[test]
    fn stream_filtering_equals_linear_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = BlockLayout::new(8, 2).unwrap();
        let n_blocks = 5;
        let stream = rand_complex(&mut rng, n_blocks * layout.block_samples());
        let taps = rand_complex(&mut rng, 11);
        let pf = pad_filter(&taps, layout.block_samples()).unwrap();
        let blockwise = filter_stream(&stream, &pf, layout).unwrap();
        let direct = direct_linear_conv(&stream, &taps);
        let scale = direct.iter().map(|x| x.norm()).fold(0.0, f64::max);
        // Valid outputs are the symbol-instant samples of the linear convolution.
        for (i, v) in blockwise.iter().enumerate() {
            let idx = i * layout.samples_per_symbol;
            assert!((v - direct[idx]).norm() < 1e-12 * scale, "symbol {i}");
        }
    }

    #[test]
    fn centered_filter_output_is_delayed() {
        // A filter stored with its reference point shifted by `c` samples
        // delays the output by exactly `c`.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layout = BlockLayout::new(8, 1).unwrap();
        let stream = rand_complex(&mut rng, 6 * layout.block_samples());
        let c = 3usize;
        let base = rand_complex(&mut rng, 5);
        let mut shifted = vec![Complex64::new(0.0, 0.0); c + base.len()];
        shifted[c..].copy_from_slice(&base);
        let pf = pad_filter(&shifted, layout.block_samples()).unwrap();
        let out = filter_stream(&stream, &pf, layout).unwrap();
        let direct = direct_linear_conv(&stream, &base);
        let scale = direct.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for i in c..out.len() {
            assert!((out[i] - direct[i - c]).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn deferred_ifft_equals_time_domain_sum() {
        // Summing branch spectra then one inverse transform equals summing
        // the branch time-domain outputs.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 32;
        let window = BlockBuffer { window: rand_complex(&mut rng, n), block_index: 0 };
        let fft = Fft64::new(n);
        let spectrum = fft.forward_copy(&window.window);
        let filters: Vec<PaddedFilter> = (0..3)
            .map(|_| pad_filter(&rand_complex(&mut rng, 7), n / 2).unwrap())
            .collect();
        let mut acc_spec = vec![Complex64::new(0.0, 0.0); n];
        let mut acc_time = vec![Complex64::new(0.0, 0.0); n];
        for pf in &filters {
            let s = circ_conv_spectrum(&spectrum, pf).unwrap();
            for (a, v) in acc_spec.iter_mut().zip(s.iter()) {
                *a += v;
            }
            let t = circ_conv(&window, pf, &fft).unwrap();
            for (a, v) in acc_time.iter_mut().zip(t.iter()) {
                *a += v;
            }
        }
        fft.inverse(&mut acc_spec);
        let scale = acc_time.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for i in 0..n {
            assert!((acc_spec[i] - acc_time[i]).norm() < 1e-12 * scale);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn prop_overlap_save_identity(
            seed in 0u64..1u64 << 32,
            l in 1usize..12,
            nt in 1usize..3,
            n_blocks in 2usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layout = BlockLayout::new(l, nt).unwrap();
            let support = rng.gen_range(1..=layout.block_samples());
            let stream = rand_complex(&mut rng, n_blocks * layout.block_samples());
            let taps = rand_complex(&mut rng, support);
            let pf = pad_filter(&taps, layout.block_samples()).unwrap();
            let blockwise = filter_stream(&stream, &pf, layout).unwrap();
            let direct = direct_linear_conv(&stream, &taps);
            let scale = direct.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-30);
            for (i, v) in blockwise.iter().enumerate() {
                let idx = i * layout.samples_per_symbol;
                prop_assert!((v - direct[idx]).norm() < 1e-12 * scale);
            }
        }

        #[test]
        fn prop_circ_conv_linearity(seed in 0u64..1u64 << 32) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 32;
            let a = rand_complex(&mut rng, n);
            let b = rand_complex(&mut rng, n);
            let sum: Vec<Complex64> = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
            let taps = rand_complex(&mut rng, 9);
            let pf = pad_filter(&taps, n / 2).unwrap();
            let fft = Fft64::new(n);
            let ca = circ_conv(&BlockBuffer { window: a, block_index: 0 }, &pf, &fft).unwrap();
            let cb = circ_conv(&BlockBuffer { window: b, block_index: 0 }, &pf, &fft).unwrap();
            let cs = circ_conv(&BlockBuffer { window: sum, block_index: 0 }, &pf, &fft).unwrap();
            let scale = cs.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-30);
            for i in 0..n {
                prop_assert!((cs[i] - ca[i] - cb[i]).norm() < 1e-12 * scale);
            }
        }
    }
}

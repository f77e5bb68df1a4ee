//! Basic coherent receiver: matched filter, full dispersion compensation,
//! average carrier phase recovery, downsampling and pre-FEC decision.
//!
//! Timing and frequency are ideal by construction (the simulator introduces
//! no offsets), so the receiver reduces to frequency-domain filtering and a
//! single average phase per realization.

use crate::channel::LinkSpec;
use crate::error::{Error, Result};
use crate::fft::{angular_freqs, Fft64};
use crate::waveforms::{constellation, pulse_spectrum, PulseSpec, SampledField, SymbolSequence};
use num_complex::Complex64;

/// Receiver output: the noisy received symbols (the desired response of the
/// estimator) and the decided symbols feeding the twin.
#[derive(Debug, Clone)]
pub struct RxOutput {
    pub desired: SymbolSequence,
    pub decided: SymbolSequence,
    pub data_aided: bool,
}

/// Matched filter (conjugate pulse spectrum) followed by decimation at the
/// symbol instants. The output is normalized to unit average symbol energy
/// per polarization.
pub fn matched_filter_downsample(field: &SampledField, pulse: &PulseSpec) -> Result<SymbolSequence> {
    if pulse.samples_per_symbol != field.samples_per_symbol {
        return Err(Error::dimension("pulse and field sample rates differ"));
    }
    let n = field.n_samples();
    let sps = field.samples_per_symbol;
    let symbol_period = field.sample_period_s * sps as f64;
    let kernel_f = pulse_spectrum(pulse.rolloff, n, field.sample_period_s, symbol_period);
    let fft = Fft64::new(n);

    let mut data = Vec::with_capacity(field.n_pol());
    for pol in &field.data {
        let mut buf = fft.forward_copy(pol);
        // Real kernel: the conjugate is the kernel itself.
        for (b, &k) in buf.iter_mut().zip(kernel_f.iter()) {
            *b *= k;
        }
        fft.inverse(&mut buf);
        let symbols: Vec<Complex64> = buf.iter().step_by(sps).copied().collect();
        data.push(symbols);
    }
    // Normalize to unit average symbol energy (measured, per polarization).
    let mut out = Vec::with_capacity(data.len());
    for pol in data {
        let p = pol.iter().map(|x| x.norm_sqr()).sum::<f64>() / pol.len() as f64;
        if p <= 0.0 {
            return Err(Error::numeric("zero-energy symbol stream"));
        }
        let s = p.sqrt();
        out.push(pol.into_iter().map(|x| x / s).collect());
    }
    SymbolSequence::new(out, field.sample_period_s * sps as f64)
}

/// Full receiver-side dispersion compensation: multiplication by
/// `exp(+j w^2 B / 2)` with `B` the accumulated dispersion of the link.
pub fn gvd_compensate(field: &SampledField, link: &LinkSpec) -> SampledField {
    let b_total = link.accumulated_beta2_s2(link.total_length_km());
    gvd_compensate_by(field, b_total)
}

/// Compensate an explicit accumulated dispersion `B` (s^2).
pub fn gvd_compensate_by(field: &SampledField, accumulated_beta2_s2: f64) -> SampledField {
    let n = field.n_samples();
    let fft = Fft64::new(n);
    let omega = angular_freqs(n, field.sample_period_s);
    let mut data = Vec::with_capacity(field.n_pol());
    for pol in &field.data {
        let mut buf = fft.forward_copy(pol);
        for (x, w) in buf.iter_mut().zip(omega.iter()) {
            *x *= Complex64::from_polar(1.0, w * w * accumulated_beta2_s2 / 2.0);
        }
        fft.inverse(&mut buf);
        data.push(buf);
    }
    SampledField { data, sample_period_s: field.sample_period_s, samples_per_symbol: field.samples_per_symbol }
}

/// Remove the single average phase `psi = arg sum d ref*` (joint across
/// polarizations) from the symbol stream.
pub fn carrier_phase_recover(symbols: &SymbolSequence, reference: &SymbolSequence) -> Result<SymbolSequence> {
    if symbols.n_pol() != reference.n_pol() || symbols.len() != reference.len() {
        return Err(Error::dimension("symbols and reference differ in shape"));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (dp, rp) in symbols.data.iter().zip(reference.data.iter()) {
        for (d, r) in dp.iter().zip(rp.iter()) {
            acc += d * r.conj();
        }
    }
    if acc.norm() == 0.0 {
        return Err(Error::numeric("zero correlation in phase recovery"));
    }
    let rot = Complex64::from_polar(1.0, -acc.arg());
    let data = symbols
        .data
        .iter()
        .map(|pol| pol.iter().map(|x| x * rot).collect())
        .collect();
    SymbolSequence::new(data, symbols.symbol_period_s)
}

/// Least-squares complex gain of `symbols` against `reference`,
/// `g = sum d ref* / sum |ref|^2`, joint across polarizations.
pub fn fit_complex_gain(symbols: &SymbolSequence, reference: &SymbolSequence) -> Result<Complex64> {
    if symbols.n_pol() != reference.n_pol() || symbols.len() != reference.len() {
        return Err(Error::dimension("symbols and reference differ in shape"));
    }
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for (dp, rp) in symbols.data.iter().zip(reference.data.iter()) {
        for (d, r) in dp.iter().zip(rp.iter()) {
            num += d * r.conj();
            den += r.norm_sqr();
        }
    }
    if den == 0.0 || num.norm() == 0.0 {
        return Err(Error::numeric("zero energy in gain fit"));
    }
    Ok(num / den)
}

/// Rescale `symbols` by the real amplitude of the fitted gain, leaving the
/// phase to [`carrier_phase_recover`]. The receiver's RMS normalization is
/// only as good as the finite sequence statistics; this pins the amplitude
/// to the actual reference.
pub fn normalize_gain(symbols: &SymbolSequence, reference: &SymbolSequence) -> Result<SymbolSequence> {
    let g = fit_complex_gain(symbols, reference)?.norm();
    let data = symbols
        .data
        .iter()
        .map(|pol| pol.iter().map(|x| x / g).collect())
        .collect();
    SymbolSequence::new(data, symbols.symbol_period_s)
}

/// The removed phase, for diagnostics.
pub fn average_phase(symbols: &SymbolSequence, reference: &SymbolSequence) -> Result<f64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (dp, rp) in symbols.data.iter().zip(reference.data.iter()) {
        for (d, r) in dp.iter().zip(rp.iter()) {
            acc += d * r.conj();
        }
    }
    if acc.norm() == 0.0 {
        return Err(Error::numeric("zero correlation"));
    }
    Ok(acc.arg())
}

/// Minimum-distance slicing onto the unit-energy constellation.
pub fn decide(symbols: &SymbolSequence, order: usize) -> Result<SymbolSequence> {
    let points = constellation(order)?;
    let data = symbols
        .data
        .iter()
        .map(|pol| {
            pol.iter()
                .map(|&x| {
                    *points
                        .iter()
                        .min_by(|a, b| {
                            (x - *a).norm_sqr().partial_cmp(&(x - *b).norm_sqr()).unwrap()
                        })
                        .unwrap()
                })
                .collect()
        })
        .collect();
    SymbolSequence::new(data, symbols.symbol_period_s)
}

/// Symbol error rate of `decided` against the transmitted truth.
pub fn symbol_error_rate(decided: &SymbolSequence, truth: &SymbolSequence) -> f64 {
    let mut errors = 0usize;
    let mut total = 0usize;
    for (dp, tp) in decided.data.iter().zip(truth.data.iter()) {
        for (d, t) in dp.iter().zip(tp.iter()) {
            if (d - t).norm() > 1e-9 {
                errors += 1;
            }
            total += 1;
        }
    }
    errors as f64 / total.max(1) as f64
}

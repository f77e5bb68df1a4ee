//! Frequency-domain digital twin of the link.
//!
//! The twin models the received symbols as
//!
//! ```text
//! y(i) = a(i) (1 - j phi) + n(i),
//! n(i) = sum_l rho_l w_l (g_l (*) N(h_l (*) A))(i T)
//! ```
//!
//! with one branch per grid coordinate `z_l`. `h_l` carries the pulse plus
//! the dispersion accumulated from the transmitter to `z_l`; `g_l` is its
//! bin-wise conjugate and equals the dispersion from `z_l` to the link end
//! composed with the matched filter and full receiver-side equalization.
//! `N(u) = ||u||^2 u` is the Kerr operator with the joint-polarization norm,
//! and the branch constant `+j / sqrt(P_pol)` makes the taps `w_l` real,
//! positive and directly comparable to `gamma * f(z_l)`.
//!
//! Each block runs through the overlap-save engine: one window FFT per
//! polarization, one inverse/forward pair inside every branch around the
//! Kerr operator, and a single final inverse FFT after the weighted branch
//! spectra are summed. Branch spectra are cached for the gradient, which
//! adds one error FFT per block instead of one inverse FFT per branch.
//!
//! Propagator taps are stored causally with the filter center rotated to the
//! middle of the first half-window, so every branch carries a uniform
//! processing delay of one block: the output of window `(k-1, k)` models the
//! symbols of block `k-1`.

use crate::channel::LinkSpec;
use crate::error::{Error, Result};
use crate::fft::{angular_freqs, Fft64};
use crate::overlap_save::{circ_conv_spectrum, extract_valid, pad_filter, BlockLayout, PaddedFilter};
use crate::waveforms::{dbm_to_watts, pulse_spectrum, PulseSpec};
use num_complex::Complex64;

/// Spatial grid, quadrature weights and block geometry of the twin.
#[derive(Debug, Clone)]
pub struct TwinConfig {
    /// Grid coordinates `z_l`, km (mid-points of uniform cells).
    pub z_km: Vec<f64>,
    /// Quadrature weights `rho_l`, km (constant `dz` for the mid-point rule).
    pub weights_km: Vec<f64>,
    /// Accumulated dispersion `B(z_l)` in s^2 from the nominal map.
    pub accumulated_b2_s2: Vec<f64>,
    /// Block length in symbols.
    pub block_symbols: usize,
    pub samples_per_symbol: usize,
    pub pulse: PulseSpec,
    pub symbol_period_s: f64,
    pub launch_power_dbm: f64,
    pub n_pol: usize,
}

impl TwinConfig {
    /// Mid-point grid over the whole link with uniform step near
    /// `grid_step_km`, block length from [`block_length_rule`] unless a
    /// larger override is given.
    #[allow(clippy::too_many_arguments)]
    pub fn from_link(
        link: &LinkSpec,
        pulse: PulseSpec,
        symbol_period_s: f64,
        grid_step_km: f64,
        launch_power_dbm: f64,
        n_pol: usize,
        block_override: Option<usize>,
    ) -> Result<Self> {
        link.validate()?;
        if grid_step_km <= 0.0 {
            return Err(Error::config("grid step must be positive"));
        }
        let total = link.total_length_km();
        let m = (total / grid_step_km).round().max(1.0) as usize;
        let dz = total / m as f64;
        let z_km: Vec<f64> = (0..m).map(|l| (l as f64 + 0.5) * dz).collect();
        let weights_km = vec![dz; m];
        let accumulated_b2_s2 = z_km.iter().map(|&z| link.accumulated_beta2_s2(z)).collect();
        let rule = block_length_rule(link, &pulse, symbol_period_s);
        let block_symbols = match block_override {
            Some(l) => {
                if l < rule {
                    return Err(Error::config(format!(
                        "block length {l} below the dispersion-memory requirement {rule}"
                    )));
                }
                l
            }
            None => rule,
        };
        Ok(Self {
            z_km,
            weights_km,
            accumulated_b2_s2,
            block_symbols,
            samples_per_symbol: pulse.samples_per_symbol,
            pulse,
            symbol_period_s,
            launch_power_dbm,
            n_pol,
        })
    }

    pub fn n_branches(&self) -> usize {
        self.z_km.len()
    }

    pub fn layout(&self) -> Result<BlockLayout> {
        BlockLayout::new(self.block_symbols, self.samples_per_symbol)
    }

    pub fn launch_power_w_per_pol(&self) -> f64 {
        dbm_to_watts(self.launch_power_dbm) / self.n_pol as f64
    }
}

/// Block length rule: the dispersion of the whole link spreads a symbol over
/// `2 pi |B| / T^2` symbols; the block must exceed that memory plus the
/// pulse support, with margin. Rounded up to a power of two for the FFTs.
pub fn block_length_rule(link: &LinkSpec, pulse: &PulseSpec, symbol_period_s: f64) -> usize {
    let b_total: f64 = link
        .spans
        .iter()
        .map(|s| (s.beta2_s2_per_m() * s.length_km * 1e3).abs())
        .sum();
    let memory = 2.0 * std::f64::consts::PI * b_total / (symbol_period_s * symbol_period_s);
    let needed = 1.25 * (memory + pulse.span_symbols as f64);
    (needed.ceil() as usize).next_power_of_two().max(16)
}

/// One twin branch: analytic frequency responses on the half-window grid
/// plus the causally stored taps derived from them.
#[derive(Debug, Clone)]
pub struct PropagatorPair {
    pub z_km: f64,
    /// `P(w) exp(-j w^2 B(z)/2)` on the `L * N_t` bin grid.
    pub h_freq: Vec<Complex64>,
    /// Bin-wise conjugate of `h_freq`.
    pub g_freq: Vec<Complex64>,
    /// Causal taps, length `L * N_t`, filter center at `center`.
    pub h_taps: Vec<Complex64>,
    pub g_taps: Vec<Complex64>,
    /// Center offset of both tap buffers, samples.
    pub center: usize,
}

/// Full set of branches plus the geometry and scaling shared by the engines.
#[derive(Debug, Clone)]
pub struct PropagatorSet {
    pub pairs: Vec<PropagatorPair>,
    pub layout: BlockLayout,
    pub weights_km: Vec<f64>,
    /// Total processing delay of every branch, symbols.
    pub delay_symbols: usize,
    pub launch_power_w_pol: f64,
    pub n_pol: usize,
}

/// Rotate a zero-phase periodic impulse response so the filter center lands
/// at `center`, making the tap buffer causal.
fn rotate_taps(periodic: &[Complex64], center: usize) -> Vec<Complex64> {
    let n = periodic.len();
    (0..n).map(|i| periodic[(i + n - center) % n]).collect()
}

/// Build the branch propagators for a twin configuration.
pub fn build_propagators(cfg: &TwinConfig) -> Result<PropagatorSet> {
    let layout = cfg.layout()?;
    let half = layout.block_samples();
    if cfg.z_km.len() != cfg.accumulated_b2_s2.len() || cfg.z_km.len() != cfg.weights_km.len() {
        return Err(Error::dimension("grid, weights and dispersion table differ in length"));
    }
    if cfg.z_km.is_empty() {
        return Err(Error::config("twin needs at least one grid point"));
    }
    let dt = cfg.symbol_period_s / cfg.samples_per_symbol as f64;
    let p_freq = pulse_spectrum(cfg.pulse.rolloff, half, dt, cfg.symbol_period_s);
    let omega = angular_freqs(half, dt);
    let fft = Fft64::new(half);
    // Center on the middle of the half window (a multiple of N_t since the
    // block length is even), giving a one-block composite delay per branch.
    let center = half / 2;

    let mut pairs = Vec::with_capacity(cfg.z_km.len());
    for (l, &z) in cfg.z_km.iter().enumerate() {
        let b = cfg.accumulated_b2_s2[l];
        let h_freq: Vec<Complex64> = p_freq
            .iter()
            .zip(omega.iter())
            .map(|(&p, &w)| Complex64::from_polar(p, -w * w * b / 2.0))
            .collect();
        let g_freq: Vec<Complex64> = h_freq.iter().map(|h| h.conj()).collect();
        let h_taps = rotate_taps(&fft.inverse_copy(&h_freq), center);
        let g_taps = rotate_taps(&fft.inverse_copy(&g_freq), center);
        pairs.push(PropagatorPair { z_km: z, h_freq, g_freq, h_taps, g_taps, center });
    }
    Ok(PropagatorSet {
        pairs,
        layout,
        weights_km: cfg.weights_km.clone(),
        delay_symbols: 2 * center / cfg.samples_per_symbol,
        launch_power_w_pol: cfg.launch_power_w_per_pol(),
        n_pol: cfg.n_pol,
    })
}

impl PropagatorSet {
    /// Build a set from explicit causal taps (tests and synthetic setups).
    /// `delay_symbols` declares the composite delay embodied by the taps.
    pub fn from_taps(
        taps: Vec<(Vec<Complex64>, Vec<Complex64>)>,
        layout: BlockLayout,
        weights_km: Vec<f64>,
        delay_symbols: usize,
        launch_power_w_pol: f64,
        n_pol: usize,
    ) -> Result<Self> {
        let half = layout.block_samples();
        if taps.len() != weights_km.len() {
            return Err(Error::dimension("taps and weights differ in length"));
        }
        let fft = Fft64::new(half);
        let mut pairs = Vec::with_capacity(taps.len());
        for (h_taps, g_taps) in taps {
            if h_taps.len() > half || g_taps.len() > half {
                return Err(Error::dimension("taps exceed the half-window"));
            }
            let mut h_full = vec![Complex64::new(0.0, 0.0); half];
            h_full[..h_taps.len()].copy_from_slice(&h_taps);
            let mut g_full = vec![Complex64::new(0.0, 0.0); half];
            g_full[..g_taps.len()].copy_from_slice(&g_taps);
            let h_freq = fft.forward_copy(&h_full);
            let g_freq = fft.forward_copy(&g_full);
            pairs.push(PropagatorPair {
                z_km: 0.0,
                h_freq,
                g_freq,
                h_taps: h_full,
                g_taps: g_full,
                center: 0,
            });
        }
        Ok(Self { pairs, layout, weights_km, delay_symbols, launch_power_w_pol, n_pol })
    }

    pub fn n_branches(&self) -> usize {
        self.pairs.len()
    }
}

/// Kerr operator `N(u) = ||u||^2 u` with the Euclidean norm across
/// polarizations at each instant.
pub fn kerr(pols: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = pols[0].len();
    let mut out: Vec<Vec<Complex64>> = pols.to_vec();
    for i in 0..n {
        let p: f64 = pols.iter().map(|pol| pol[i].norm_sqr()).sum();
        for pol in out.iter_mut() {
            pol[i] *= p;
        }
    }
    out
}

/// Cached branch spectra `U_lk` of one block, kept for the gradient.
#[derive(Debug, Clone)]
pub struct BranchSpectra {
    /// `[branch][pol][2 L N_t]`, branch constant included.
    pub u: Vec<Vec<Vec<Complex64>>>,
    pub block_index: u64,
    pub block_symbols: usize,
    pub samples_per_symbol: usize,
}

/// Output of one twin block.
#[derive(Debug, Clone)]
pub struct TwinBlockOutput {
    /// Twin estimate `y(i)` for the modeled symbols, `[pol][L]`.
    pub y: Vec<Vec<Complex64>>,
    /// The NLI part `n(i)` alone, `[pol][L]`.
    pub nli: Vec<Vec<Complex64>>,
    pub spectra: BranchSpectra,
}

/// The twin forward engine for a fixed propagator set.
pub struct TwinEngine {
    set: PropagatorSet,
    h_pad: Vec<PaddedFilter>,
    g_pad: Vec<PaddedFilter>,
    fft_w: Fft64,
    /// Upsampling amplitude `sqrt(P_pol N_t)` applied to the stuffed symbols.
    up_scale: f64,
    /// `+j / sqrt(P_pol)` applied to every branch output.
    branch_scale: Complex64,
}

impl TwinEngine {
    pub fn new(set: PropagatorSet) -> Result<Self> {
        let half = set.layout.block_samples();
        let w = set.layout.window_samples();
        let mut h_pad = Vec::with_capacity(set.pairs.len());
        let mut g_pad = Vec::with_capacity(set.pairs.len());
        for p in &set.pairs {
            h_pad.push(pad_filter(&p.h_taps, half)?);
            g_pad.push(pad_filter(&p.g_taps, half)?);
        }
        let up_scale = (set.launch_power_w_pol * set.layout.samples_per_symbol as f64).sqrt();
        let branch_scale = Complex64::new(0.0, 1.0) / set.launch_power_w_pol.sqrt();
        Ok(Self { set, h_pad, g_pad, fft_w: Fft64::new(w), up_scale, branch_scale })
    }

    pub fn set(&self) -> &PropagatorSet {
        &self.set
    }

    pub fn block_symbols(&self) -> usize {
        self.set.layout.block_symbols
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.set.layout.samples_per_symbol
    }

    pub fn n_pol(&self) -> usize {
        self.set.n_pol
    }

    /// Processing delay: the output of window `(k-1, k)` models the symbols
    /// starting `delay_symbols` before block `k`.
    pub fn delay_symbols(&self) -> usize {
        self.set.delay_symbols
    }

    pub fn fft(&self) -> &Fft64 {
        &self.fft_w
    }

    /// Upsample the concatenated symbol pair of one polarization onto the
    /// window grid and transform.
    fn window_spectrum(&self, prev: &[Complex64], cur: &[Complex64]) -> Vec<Complex64> {
        let nt = self.set.layout.samples_per_symbol;
        let w = self.set.layout.window_samples();
        let l = self.set.layout.block_symbols;
        let mut buf = vec![Complex64::new(0.0, 0.0); w];
        for (i, &s) in prev.iter().enumerate() {
            buf[i * nt] = s * self.up_scale;
        }
        for (i, &s) in cur.iter().enumerate() {
            buf[(l + i) * nt] = s * self.up_scale;
        }
        self.fft_w.forward(&mut buf);
        buf
    }

    /// Run one block: window `(prev, cur)` of detected symbols per
    /// polarization with the current taps `w` and eRP phase `phi`.
    pub fn forward_block(
        &self,
        prev: &[Vec<Complex64>],
        cur: &[Vec<Complex64>],
        w_taps: &[f64],
        phi: f64,
        block_index: u64,
    ) -> Result<TwinBlockOutput> {
        let m = self.set.n_branches();
        if w_taps.len() != m {
            return Err(Error::dimension(format!(
                "tap count {} != branch count {m}",
                w_taps.len()
            )));
        }
        let n_pol = self.set.n_pol;
        if prev.len() != n_pol || cur.len() != n_pol {
            return Err(Error::dimension("polarization count mismatch"));
        }
        let l = self.set.layout.block_symbols;
        let nt = self.set.layout.samples_per_symbol;
        let w_len = self.set.layout.window_samples();

        let window_spec: Vec<Vec<Complex64>> = (0..n_pol)
            .map(|p| self.window_spectrum(&prev[p], &cur[p]))
            .collect();

        let mut u = vec![vec![Vec::new(); n_pol]; m];
        let mut acc: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); w_len]; n_pol];
        for b in 0..m {
            // h filter, back to time for the Kerr operator.
            let dispersed: Vec<Vec<Complex64>> = (0..n_pol)
                .map(|p| {
                    let spec = circ_conv_spectrum(&window_spec[p], &self.h_pad[b])?;
                    Ok(self.fft_w.inverse_copy(&spec))
                })
                .collect::<Result<Vec<_>>>()?;
            let mixed = kerr(&dispersed);
            for p in 0..n_pol {
                let mut spec = mixed[p].clone();
                self.fft_w.forward(&mut spec);
                let mut u_spec = circ_conv_spectrum(&spec, &self.g_pad[b])?;
                for v in u_spec.iter_mut() {
                    *v *= self.branch_scale;
                }
                let rw = self.set.weights_km[b] * w_taps[b];
                for (a, v) in acc[p].iter_mut().zip(u_spec.iter()) {
                    *a += rw * v;
                }
                u[b][p] = u_spec;
            }
        }

        // One inverse transform after the branch sum, then the valid region.
        let mut nli = Vec::with_capacity(n_pol);
        for p in 0..n_pol {
            self.fft_w.inverse(&mut acc[p]);
            nli.push(extract_valid(&acc[p], nt)?);
        }

        let erp = Complex64::new(1.0, -phi);
        let mut y = Vec::with_capacity(n_pol);
        for p in 0..n_pol {
            let modeled = self.modeled_symbols(&prev[p], &cur[p]);
            let row: Vec<Complex64> = (0..l).map(|i| modeled[i] * erp + nli[p][i]).collect();
            y.push(row);
        }
        Ok(TwinBlockOutput {
            y,
            nli,
            spectra: BranchSpectra {
                u,
                block_index,
                block_symbols: l,
                samples_per_symbol: nt,
            },
        })
    }

    /// The window symbols this window's output models (delay applied).
    pub fn modeled_symbols(&self, prev: &[Complex64], cur: &[Complex64]) -> Vec<Complex64> {
        let l = self.set.layout.block_symbols;
        let d = self.set.delay_symbols.min(l);
        let mut out = Vec::with_capacity(l);
        out.extend_from_slice(&prev[l - d..]);
        out.extend_from_slice(&cur[..l - d]);
        out
    }

    /// Spectrum of the interleaved error block: error samples placed at the
    /// valid window positions, zero where branch spectra hold non-valid
    /// samples, one forward transform.
    pub fn interleaved_error_spectrum(&self, error_block: &[Complex64]) -> Vec<Complex64> {
        let mut buf = self.interleave_error(error_block);
        self.fft_w.forward(&mut buf);
        buf
    }

    /// Time-domain interleaved error block (exposed for the Parseval oracle).
    pub fn interleave_error(&self, error_block: &[Complex64]) -> Vec<Complex64> {
        let nt = self.set.layout.samples_per_symbol;
        let half = self.set.layout.block_samples();
        let w = self.set.layout.window_samples();
        let mut buf = vec![Complex64::new(0.0, 0.0); w];
        for (i, &e) in error_block.iter().enumerate() {
            buf[half + i * nt] = e;
        }
        buf
    }
}

/// Polyphase variant of one twin branch set at `N_t = 2`: the upsampler and
/// downsampler disappear and all convolutions run at the symbol rate on the
/// even/odd tap components.
pub struct PolyphaseEngine {
    set: PropagatorSet,
    h_even: Vec<PaddedFilter>,
    h_odd: Vec<PaddedFilter>,
    g_even: Vec<PaddedFilter>,
    g_odd: Vec<PaddedFilter>,
    fft_half: Fft64,
    up_scale: f64,
    branch_scale: Complex64,
}

/// Even/odd polyphase components of a tap buffer.
pub fn polyphase_components(taps: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let even = taps.iter().step_by(2).copied().collect();
    let odd = taps.iter().skip(1).step_by(2).copied().collect();
    (even, odd)
}

impl PolyphaseEngine {
    pub fn new(set: PropagatorSet) -> Result<Self> {
        if set.layout.samples_per_symbol != 2 {
            return Err(Error::config("polyphase structure requires N_t = 2"));
        }
        let l = set.layout.block_symbols;
        let mut h_even = Vec::new();
        let mut h_odd = Vec::new();
        let mut g_even = Vec::new();
        let mut g_odd = Vec::new();
        for p in &set.pairs {
            let (he, ho) = polyphase_components(&p.h_taps);
            let (ge, go) = polyphase_components(&p.g_taps);
            h_even.push(pad_filter(&he, l)?);
            h_odd.push(pad_filter(&ho, l)?);
            g_even.push(pad_filter(&ge, l)?);
            g_odd.push(pad_filter(&go, l)?);
        }
        let up_scale = (set.launch_power_w_pol * 2.0).sqrt();
        let branch_scale = Complex64::new(0.0, 1.0) / set.launch_power_w_pol.sqrt();
        Ok(Self {
            fft_half: Fft64::new(2 * l),
            set,
            h_even,
            h_odd,
            g_even,
            g_odd,
            up_scale,
            branch_scale,
        })
    }

    /// NLI of one block, identical to the standard engine's output. All
    /// processing runs at one sample per symbol.
    pub fn nli_block(&self, prev: &[Vec<Complex64>], cur: &[Vec<Complex64>], w_taps: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let m = self.set.n_branches();
        if w_taps.len() != m {
            return Err(Error::dimension("tap count != branch count"));
        }
        let n_pol = self.set.n_pol;
        let l = self.set.layout.block_symbols;
        let two_l = 2 * l;

        // Symbol-rate window spectrum, shared by the even and odd paths.
        let window_spec: Vec<Vec<Complex64>> = (0..n_pol)
            .map(|p| {
                let mut buf = Vec::with_capacity(two_l);
                buf.extend(prev[p].iter().map(|&s| s * self.up_scale));
                buf.extend(cur[p].iter().map(|&s| s * self.up_scale));
                self.fft_half.forward(&mut buf);
                buf
            })
            .collect();

        let mut acc: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); two_l]; n_pol];
        for b in 0..m {
            let even_t: Vec<Vec<Complex64>> = (0..n_pol)
                .map(|p| {
                    let s = circ_conv_spectrum(&window_spec[p], &self.h_even[b])?;
                    Ok(self.fft_half.inverse_copy(&s))
                })
                .collect::<Result<Vec<_>>>()?;
            let odd_t: Vec<Vec<Complex64>> = (0..n_pol)
                .map(|p| {
                    let s = circ_conv_spectrum(&window_spec[p], &self.h_odd[b])?;
                    Ok(self.fft_half.inverse_copy(&s))
                })
                .collect::<Result<Vec<_>>>()?;
            let k_even = kerr(&even_t);
            let k_odd = kerr(&odd_t);
            for p in 0..n_pol {
                // Even output phase: g_even * K_even + g_odd * delay1(K_odd).
                let mut ke = k_even[p].clone();
                self.fft_half.forward(&mut ke);
                let ye = circ_conv_spectrum(&ke, &self.g_even[b])?;
                let mut ko: Vec<Complex64> = (0..two_l)
                    .map(|i| k_odd[p][(i + two_l - 1) % two_l])
                    .collect();
                self.fft_half.forward(&mut ko);
                let yo = circ_conv_spectrum(&ko, &self.g_odd[b])?;
                let rw = self.set.weights_km[b] * w_taps[b] * self.branch_scale;
                for i in 0..two_l {
                    acc[p][i] += rw * (ye[i] + yo[i]);
                }
            }
        }
        let mut out = Vec::with_capacity(n_pol);
        for p in 0..n_pol {
            self.fft_half.inverse(&mut acc[p]);
            out.push(extract_valid(&acc[p], 1)?);
        }
        Ok(out)
    }
}

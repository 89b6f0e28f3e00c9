//! Counter-based Gaussian noise streams.
//!
//! A stream is identified by `(master_seed, trajectory_index)`. The master
//! seed is expanded into a 256-bit ChaCha8 key with SplitMix64 and the
//! trajectory index selects the ChaCha stream (nonce), so any trajectory's noise
//! can be produced in O(1) without touching any other trajectory.
//!
//! Uniforms are formed from the top 53 bits of each 64-bit output as
//! `(k + 0.5) / 2^53`, which lies strictly inside `(0, 1)`. Normals are obtained
//! by inverting the standard normal CDF with Wichura's AS241 (PPND16)
//! rational approximation, one uniform per normal. Both steps are plain
//! floating-point arithmetic, so the streams are bit-stable across platforms.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const SPLITMIX_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a salt; used to derive independent seeds (e.g. for an
/// uncoupled reference run or for checker sampling).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut s = seed ^ salt.rotate_left(32);
    splitmix64(&mut s) ^ splitmix64(&mut s).rotate_left(17)
}

/// Deterministic stream of standard Gaussian vectors.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    master_seed: u64,
    trajectory_index: u64,
    step_counter: u64,
    rng: ChaCha8Rng,
}

/// Creates the stream for trajectory `trajectory_index` under `master_seed`.
pub fn derive_stream(master_seed: u64, trajectory_index: u64) -> NoiseStream {
    let mut key = [0u8; 32];
    let mut state = master_seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trajectory_index);
    NoiseStream {
        master_seed,
        trajectory_index,
        step_counter: 0,
        rng,
    }
}

impl NoiseStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trajectory_index(&self) -> u64 {
        self.trajectory_index
    }

    /// Number of Gaussian vectors drawn so far.
    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        inverse_normal_cdf(self.next_uniform())
    }

    /// Fills `out` with i.i.d. N(0, 1) draws and advances the step counter by one.
    #[inline]
    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = inverse_normal_cdf(self.next_uniform());
        }
        self.step_counter += 1;
    }

    /// Returns a fresh `d`-dimensional standard Gaussian vector.
    pub fn next_gaussian_vector(&mut self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        self.fill_gaussian(&mut out);
        out
    }
}

/// Free-function form of [`NoiseStream::next_gaussian_vector`].
pub fn next_gaussian_vector(stream: &mut NoiseStream, d: usize) -> Vec<f64> {
    stream.next_gaussian_vector(d)
}

/// Inverse of the standard normal CDF (Wichura 1988, algorithm AS241,
/// PPND16; relative accuracy about 1e-16). `p` must lie in `(0, 1)`.
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608_0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083_0e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061_0e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561_0e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_90,
        5.769_497_221_460_691_405_50,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_70e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_40e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_40,
        6.897_673_349_851_000_045_50e-1,
        1.481_039_764_274_800_745_90e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946_00e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_20,
        5.463_784_911_164_114_369_90,
        1.784_826_539_917_291_335_80,
        2.965_605_718_285_048_912_30e-1,
        2.653_218_952_657_612_309_30e-2,
        1.242_660_947_388_078_438_60e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_90e-1,
        1.369_298_809_227_358_053_10e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591_00e-4,
        1.846_318_317_510_054_681_80e-5,
        1.421_511_758_316_445_888_70e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    #[inline]
    fn horner(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        horner(&C, r) / horner(&D, r)
    } else {
        r -= 5.0;
        horner(&E, r) / horner(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

//! Synthetic I/Q frames: symbol mapping, pulse shaping, channel impairments and
//! additive noise at a controlled SNR.

mod frame;
mod mapping;
mod noise;
mod pulse;

use serde::{Deserialize, Serialize};

pub use frame::{
    frame_stream, normalize_frame, synthesize_frame, synthesize_frame_with_noise, FrameConfig,
    SignalFrame,
};
pub use mapping::{map_symbols, modulate_fsk};
pub use noise::{
    awgn_for_snr, complex_to_rows, measure_snr, rows_to_complex, ImpairmentSpec, NoiseModel,
    Sinusoid,
};
pub use pulse::{pulse_shape, rrc_taps, RRC_SPAN_SYMBOLS};

/// Lowest SNR on the grid, in dB.
pub const SNR_MIN_DB: i32 = -20;
/// Highest SNR on the grid, in dB.
pub const SNR_MAX_DB: i32 = 18;
/// Grid spacing in dB.
pub const SNR_STEP_DB: i32 = 2;

/// Every SNR on the 2 dB grid, ascending.
pub fn snr_grid() -> Vec<i32> {
    (SNR_MIN_DB..=SNR_MAX_DB).step_by(SNR_STEP_DB as usize).collect()
}

pub fn is_grid_snr(snr_db: i32) -> bool {
    (SNR_MIN_DB..=SNR_MAX_DB).contains(&snr_db) && (snr_db - SNR_MIN_DB) % SNR_STEP_DB == 0
}

/// Digital modulation classes. The ordinal is the default class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModulationScheme {
    Bpsk = 0,
    Qpsk = 1,
    Psk8 = 2,
    Pam4 = 3,
    Qam16 = 4,
    Qam64 = 5,
    Cpfsk = 6,
    Gfsk = 7,
}

impl ModulationScheme {
    pub const ALL: [ModulationScheme; 8] = [
        ModulationScheme::Bpsk,
        ModulationScheme::Qpsk,
        ModulationScheme::Psk8,
        ModulationScheme::Pam4,
        ModulationScheme::Qam16,
        ModulationScheme::Qam64,
        ModulationScheme::Cpfsk,
        ModulationScheme::Gfsk,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Self> {
        Self::ALL.get(ordinal as usize).copied()
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModulationScheme::Bpsk | ModulationScheme::Cpfsk | ModulationScheme::Gfsk => 1,
            ModulationScheme::Qpsk | ModulationScheme::Pam4 => 2,
            ModulationScheme::Psk8 => 3,
            ModulationScheme::Qam16 => 4,
            ModulationScheme::Qam64 => 6,
        }
    }

    /// Constellation-based schemes that go through the RRC pulse shaper.
    pub fn is_linear(self) -> bool {
        !matches!(self, ModulationScheme::Cpfsk | ModulationScheme::Gfsk)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationScheme::Bpsk => "bpsk",
            ModulationScheme::Qpsk => "qpsk",
            ModulationScheme::Psk8 => "8psk",
            ModulationScheme::Pam4 => "pam4",
            ModulationScheme::Qam16 => "qam16",
            ModulationScheme::Qam64 => "qam64",
            ModulationScheme::Cpfsk => "cpfsk",
            ModulationScheme::Gfsk => "gfsk",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let lower = name.trim().to_ascii_lowercase();
        Self::ALL.iter().copied().find(|s| s.name() == lower)
    }
}

impl std::fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

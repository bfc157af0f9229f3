mod griffin_lim;
mod mel;
mod pitch;
mod stft;
mod text;
mod wav;

pub use griffin_lim::{griffin_lim, GriffinLim, DEFAULT_PHASE_SEED};
pub use mel::{
    hz_to_mel, mel_center_frequencies, mel_filterbank, mel_spectrogram, mel_to_hz, MelAnalyzer,
    MelConfig, MelSpectrogram,
};
pub use pitch::{estimate_pitch, format_pitch_file, parse_pitch_file, PitchConfig, PitchContour, THRESHOLDS};
pub use stft::{hann_window, Stft};
pub use text::{
    text_to_phonemes, Lexicon, PhonemeSequence, Vocabulary, BOS, EOS, PAD, SPECIALS, UNK,
};
pub use wav::{load_wav, save_wav, Waveform};

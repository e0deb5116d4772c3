//! Audio I/O and the causal log-mel front end.

mod fbank;
mod melfile;
mod wav;

pub use fbank::{fbank, FbankExtractor, FBANK_WINDOW, FFT_SIZE};
pub use melfile::{read_mel, read_mel_bytes, write_mel, write_mel_bytes};
pub use wav::{read_wav, read_wav_native, resample, write_wav};

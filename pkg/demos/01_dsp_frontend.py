"""Walk through the signal front-end on a synthetic clip.

Builds a two-tone signal, resamples it between the three working rates,
fits it to a fixed duration, and renders the log-magnitude spectrogram the
model's second branch consumes.
"""

import numpy as np

from moskit import dsp

# A 10 s clip at 48 kHz with one low tone and one tone above 8 kHz.  The
# high tone survives only in the 48 kHz branch; after downsampling to
# 16 kHz it is gone.
rate = 48000
t = np.arange(10 * rate) / rate
x = 0.4 * np.sin(2 * np.pi * 440 * t) + 0.2 * np.sin(2 * np.pi * 11000 * t)
clip = dsp.AudioClip(samples=x, sample_rate_hz=rate)

at16k = dsp.resample(clip, 16000)
print(f"48 kHz clip: {clip.samples.size} samples -> 16 kHz: {at16k.samples.size} samples")

spectrum16 = np.abs(np.fft.rfft(at16k.samples))
freqs16 = np.fft.rfftfreq(at16k.samples.size, 1 / 16000)
print(f"energy above 8 kHz after downsampling: {spectrum16[freqs16 > 8000].sum():.2e} (band removed)")

# Repetitive padding and head cropping
short = dsp.AudioClip(samples=x[: 3 * rate], sample_rate_hz=rate)
padded = dsp.fit_length(short, 10.0)
print(f"3 s clip tiled to {padded.duration_seconds:.0f} s; starts repeat: "
      f"{np.array_equal(padded.samples[:short.samples.size], short.samples)}")

# The spectrogram branch input: 161 bins x 2999 frames for 10 s at 48 kHz
spec = dsp.stft_log_magnitude(dsp.fit_length(clip, 10.0))
print(f"log-spectrogram shape: {spec.n_bins} bins x {spec.n_frames} frames")

bin_hz = 48000 / dsp.StftConfig().fft_size
low_bin, high_bin = round(440 / bin_hz), round(11000 / bin_hz)
print(f"mean log-magnitude at 440 Hz bin: {spec.values[low_bin].mean():.2f}, "
      f"at 11 kHz bin: {spec.values[high_bin].mean():.2f}, "
      f"floor: {spec.values[80].mean():.2f}")

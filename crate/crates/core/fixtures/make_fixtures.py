"""Regenerate the speech fixtures from the upstream sdists.

usage: python3 make_fixtures.py <pysptk-0.2.2 dir> <amfm_decompy-1.0.12.2 dir>
"""
import sys

import numpy as np
import scipy.io.wavfile as wavfile
import scipy.signal as signal

FS = 20000
SEGMENTS = [(0.40, 1.10), (1.10, 1.90), (1.90, 2.95), (2.95, 3.50)]


def load(path):
    rate, data = wavfile.read(path)
    assert rate == 16000
    return signal.resample_poly(data / 32768.0, 5, 4)


def main(pysptk_dir, amfm_dir):
    arctic = load(f"{pysptk_dir}/pysptk/example_audio_data/arctic_a0007.wav")
    noise = arctic[: int(0.38 * FS)]
    pad = noise[: int(0.25 * FS)]
    fade = np.linspace(0.0, 1.0, int(0.01 * FS))

    out = {"cont_arctic-a0007": arctic}
    for i, (t0, t1) in enumerate(SEGMENTS):
        seg = arctic[int(t0 * FS): int(t1 * FS)].copy()
        seg[: fade.size] *= fade
        seg[-fade.size:] *= fade[::-1]
        out[f"iso_arctic-a0007-seg{i + 1}"] = np.concatenate([pad, seg, pad[::-1]])
    out["iso_amfm-sample"] = load(f"{amfm_dir}/amfm_decompy/sample.wav")

    for name, x in out.items():
        x = np.clip(x, -1.0, 32767 / 32768)
        wavfile.write(f"{name}.wav", FS, np.round(x * 32768).astype(np.int16))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

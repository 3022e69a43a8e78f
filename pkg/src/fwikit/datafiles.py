"""Observed-data files and per-iteration curve CSVs.

Observed data (text): header ``freq_hz n_src n_rec``, then one line per
(source, receiver) pair: ``s r re im`` with 0-based indices. Curve CSV:
header ``iter,freq_hz,misfit,model_rms``. All floats carry 17 significant
digits so values round-trip bit-exactly.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigurationError


def observed_path(data_dir: str, freq_hz: float) -> str:
    return os.path.join(data_dir, f"data_{freq_hz:g}Hz.txt")


def save_observed(path, freq_hz: float, data: np.ndarray) -> None:
    """Write an (n_sources, n_receivers) complex data block."""
    data = np.asarray(data, dtype=np.complex128)
    n_src, n_rec = data.shape
    with open(path, "w") as fh:
        fh.write(f"{freq_hz:.17g} {n_src} {n_rec}\n")
        for s in range(n_src):
            for r in range(n_rec):
                v = data[s, r]
                fh.write(f"{s} {r} {v.real:.17g} {v.imag:.17g}\n")


def load_observed(path) -> tuple[float, np.ndarray]:
    """Read an observed-data file; returns (freq_hz, (n_src, n_rec) block)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ConfigurationError(f"{path}: malformed data header {header!r}")
        freq_hz = float(header[0])
        n_src, n_rec = int(header[1]), int(header[2])
        data = np.zeros((n_src, n_rec), dtype=np.complex128)
        seen = np.zeros((n_src, n_rec), dtype=bool)
        for ln, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ConfigurationError(f"{path}:{ln}: malformed data line {line!r}")
            s, r = int(parts[0]), int(parts[1])
            if not (0 <= s < n_src and 0 <= r < n_rec):
                raise ConfigurationError(f"{path}:{ln}: index ({s}, {r}) out of range")
            data[s, r] = complex(float(parts[2]), float(parts[3]))
            seen[s, r] = True
    if not seen.all():
        raise ConfigurationError(f"{path}: missing (source, receiver) entries")
    return freq_hz, data


def save_curve_csv(path, records) -> None:
    """Write per-iteration records; each record is (iter, freq_hz, misfit, rms)."""
    with open(path, "w") as fh:
        fh.write("iter,freq_hz,misfit,model_rms\n")
        for it, freq, misfit, rms in records:
            fh.write(f"{it},{freq:.17g},{misfit:.17g},{rms:.17g}\n")


def load_curve_csv(path) -> list[tuple[int, float, float, float]]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "iter,freq_hz,misfit,model_rms":
            raise ConfigurationError(f"{path}: unexpected CSV header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            it, freq, misfit, rms = line.split(",")
            records.append((int(it), float(freq), float(misfit), float(rms)))
    return records

"""Frequency-domain echo synthesis and the sparse-recovery sensing operator.

One OFDM symbol per estimate. Given cyclic-prefix removal with the prefix
longer than every (clock-shifted) path delay, the received spectrum at BS m
is exactly linear in the virtual per-pair channels:

    y_m = sqrt(p) * sum_u diag(s_u) G h~_{u,m} + noise,   G[n, l] = W_N^{nl}

Because the columns of G are DFT vectors, both the forward map and its
adjoint reduce to FFTs; `SensingOperator` exploits this, while
`sensing_matrix` materializes the same matrix for small problems and tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OfdmConfig:
    n_subcarriers: int
    cp_length: int
    tx_power: float
    noise_variance: float
    subcarrier_spacing: float

    def __post_init__(self) -> None:
        if self.tx_power <= 0:
            raise ValueError("tx_power must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")

    def check_cp(self, tap_span: int) -> None:
        if self.cp_length <= tap_span:
            raise ValueError(
                f"cp_length {self.cp_length} must exceed the tap span {tap_span}"
            )


def make_pilots(n_bs: int, n_subcarriers: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus QPSK-like pilots, one row per BS."""
    phases = rng.integers(0, 4, size=(n_bs, n_subcarriers))
    return np.exp(1j * (np.pi / 2.0) * phases + 1j * np.pi / 4.0)


def dft_delay_matrix(n_subcarriers: int, tap_span: int) -> np.ndarray:
    """N x tap_span matrix of delay steering columns, G[n, l] = e^{-2pi i nl/N}."""
    n = np.arange(n_subcarriers)[:, None]
    l = np.arange(tap_span)[None, :]
    return np.exp(-2j * np.pi * n * l / n_subcarriers)


def sensing_matrix(pilots: np.ndarray, tap_span: int) -> np.ndarray:
    """Dense stacked sensing matrix [diag(s_1) G, ..., diag(s_M) G]."""
    n_bs, n = pilots.shape
    g = dft_delay_matrix(n, tap_span)
    return np.hstack([pilots[u][:, None] * g for u in range(n_bs)])


class SensingOperator:
    """FFT-backed application of the stacked sensing matrix and its adjoint."""

    def __init__(self, pilots: np.ndarray, tap_span: int):
        if tap_span > pilots.shape[1]:
            raise ValueError("tap_span cannot exceed the number of subcarriers")
        self.pilots = np.asarray(pilots)
        self.n_bs, self.n = self.pilots.shape
        self.tap_span = tap_span
        self.dim = self.n_bs * tap_span

    def apply(self, h: np.ndarray) -> np.ndarray:
        """Map stacked channels (dim,) or (dim, R) to spectra (n,) or (n, R)."""
        single = h.ndim == 1
        hh = h[:, None] if single else h
        blocks = hh.reshape(self.n_bs, self.tap_span, hh.shape[1])
        padded = np.zeros((self.n_bs, self.n, hh.shape[1]), dtype=complex)
        padded[:, : self.tap_span, :] = blocks
        spec = np.fft.fft(padded, axis=1)
        y = np.einsum("un,unr->nr", self.pilots, spec)
        return y[:, 0] if single else y

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        single = y.ndim == 1
        yy = y[:, None] if single else y
        weighted = np.conj(self.pilots)[:, :, None] * yy[None, :, :]
        taps = np.fft.ifft(weighted, axis=1)[:, : self.tap_span, :] * self.n
        out = taps.reshape(self.dim, yy.shape[1])
        return out[:, 0] if single else out

    def spectral_norm(self, iters: int = 60, seed: int = 0) -> float:
        """Largest singular value, by power iteration on the Gram operator."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        v /= np.linalg.norm(v)
        sigma2 = 0.0
        for _ in range(iters):
            w = self.adjoint(self.apply(v))
            sigma2 = float(np.linalg.norm(w))
            v = w / sigma2
        return float(np.sqrt(sigma2))


def virtual_shift(
    true_taps, sto: np.ndarray, tap_span: int
) -> dict[tuple[int, int], np.ndarray]:
    """Shift each pair's true taps by its clock offset onto the virtual grid."""
    out = {}
    for (u, m), taps in true_taps.paths.items():
        vec = np.zeros(tap_span, dtype=complex)
        shift = int(sto[u, m])
        for t in taps:
            idx = t.delay + shift
            if idx < 0:
                raise ValueError(
                    f"virtual delay {idx} < 0 for pair ({u},{m}); scene invariant breach"
                )
            if idx >= tap_span:
                raise ValueError(
                    f"virtual delay {idx} exceeds tap span {tap_span} for pair ({u},{m})"
                )
            vec[idx] += t.gain
        out[(u, m)] = vec
    return out


def receiver_stack(
    virtual: dict[tuple[int, int], np.ndarray], n_bs: int, tap_span: int
) -> np.ndarray:
    """Stack per-pair virtual channels into one vector per receiving BS."""
    stacked = np.zeros((n_bs, n_bs * tap_span), dtype=complex)
    for (u, m), vec in virtual.items():
        stacked[m, u * tap_span : (u + 1) * tap_span] = vec
    return stacked


def synthesize(
    pilots: np.ndarray,
    stacked: np.ndarray,
    cfg: OfdmConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Received spectra, one row per receiving BS, with complex Gaussian noise."""
    n_bs, n = pilots.shape
    tap_span = stacked.shape[1] // n_bs
    op = SensingOperator(pilots, tap_span)
    clean = np.sqrt(cfg.tx_power) * op.apply(stacked.T).T
    if cfg.noise_variance == 0:
        return clean
    sigma = np.sqrt(cfg.noise_variance / 2.0)
    noise = sigma * (
        rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
    )
    return clean + noise

"""Symbol alphabets with unit average energy and their +/-1 bit-layer labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnsupportedAlphabetError(ValueError):
    """Raised when a detector is handed an alphabet it cannot work with."""


@dataclass(frozen=True)
class Modulation:
    """BPSK or square M-QAM, scaled to E_s = 1.

    Real and imaginary parts of a QAM symbol are independent M'-PAM symbols
    (M' = sqrt(M)) on the lattice {+-1, +-3, ...} multiplied by ``scale``.
    Bits are the +/-1 layers of that lattice value, layer ``j`` weighted 2**j.
    """

    name: str
    M: int

    def __post_init__(self):
        if self.name == "bpsk":
            if self.M != 2:
                raise ValueError("BPSK has M=2")
        elif self.name == "qam":
            root = int(round(np.sqrt(self.M)))
            if self.M < 4 or root * root != self.M or root & (root - 1):
                raise UnsupportedAlphabetError(f"only square QAM with M a power of 4, got M={self.M}")
        else:
            raise UnsupportedAlphabetError(f"unknown modulation {self.name!r}")

    @classmethod
    def parse(cls, text: str) -> "Modulation":
        """Parse ``bpsk``, ``4qam``, ``16-qam``, ``qam64`` ..."""
        t = text.strip().lower().replace("-", "")
        if t == "bpsk":
            return cls("bpsk", 2)
        if t.endswith("qam"):
            return cls("qam", int(t[:-3]))
        if t.startswith("qam"):
            return cls("qam", int(t[3:]))
        raise UnsupportedAlphabetError(f"cannot parse modulation {text!r}")

    def __str__(self):
        return "bpsk" if self.name == "bpsk" else f"{self.M}qam"

    @property
    def is_bpsk(self) -> bool:
        return self.name == "bpsk"

    @property
    def pam_order(self) -> int:
        """Number of levels per real dimension (2 for BPSK)."""
        return 2 if self.is_bpsk else int(round(np.sqrt(self.M)))

    @property
    def n_layers(self) -> int:
        return int(np.log2(self.pam_order))

    @property
    def bits_per_symbol(self) -> int:
        return 1 if self.is_bpsk else 2 * self.n_layers

    @property
    def pam_levels(self) -> np.ndarray:
        m = self.pam_order
        return np.arange(-(m - 1), m, 2, dtype=float)

    @property
    def scale(self) -> float:
        """Factor taking lattice values to unit-energy amplitudes."""
        if self.is_bpsk:
            return 1.0
        m = self.pam_order
        # average energy of the unscaled square QAM lattice is 2(M-1)/3
        return float(np.sqrt(3.0 / (2.0 * (m * m - 1))))

    @property
    def points(self) -> np.ndarray:
        """All constellation points (complex, unit average energy)."""
        if self.is_bpsk:
            return np.array([-1.0, 1.0], dtype=complex)
        lv = self.pam_levels * self.scale
        return (lv[:, None] + 1j * lv[None, :]).ravel()

    def random_symbols(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.is_bpsk:
            return (2.0 * rng.integers(0, 2, n) - 1.0).astype(complex)
        lv = self.pam_levels
        re = lv[rng.integers(0, len(lv), n)]
        im = lv[rng.integers(0, len(lv), n)]
        return self.scale * (re + 1j * im)

    def to_lattice(self, x: np.ndarray) -> np.ndarray:
        """Real-valued lattice vector [Re; Im] (BPSK keeps only Re)."""
        x = np.asarray(x)
        if self.is_bpsk:
            return np.real(x).astype(float)
        return np.concatenate([x.real, x.imag]) / self.scale

    def from_lattice(self, xl: np.ndarray) -> np.ndarray:
        xl = np.asarray(xl, dtype=float)
        if self.is_bpsk:
            return xl.astype(complex)
        n = xl.size // 2
        return self.scale * (xl[:n] + 1j * xl[n:])

    def quantize(self, x: np.ndarray) -> np.ndarray:
        """Nearest constellation point, per entry."""
        x = np.asarray(x)
        if self.is_bpsk:
            return np.where(np.real(x) >= 0, 1.0, -1.0).astype(complex)
        m = self.pam_order

        def q(v):
            k = np.clip(np.round((v / self.scale + (m - 1)) / 2.0), 0, m - 1)
            return 2.0 * k - (m - 1)

        return self.scale * (q(x.real) + 1j * q(x.imag))

    def bits(self, x: np.ndarray) -> np.ndarray:
        """0/1 bits of symbol vector ``x`` (natural +/-1 layer labelling)."""
        from .qam_search import bit_expand

        lattice = self.to_lattice(self.quantize(x))
        layers = bit_expand(lattice, self.pam_order)
        return (layers.ravel() > 0).astype(np.int8)

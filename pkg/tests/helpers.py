"""Small hand-built decoders and models used as oracles in the tests."""

from dataclasses import dataclass

import numpy as np

from spectrum_mdl.spectrum import SpectrumParams, truncate

# PASS/FAIL lines from the acceptance suite, printed in the terminal summary
ACCEPTANCE: list[str] = []


@dataclass
class LinearDecoder:
    """x = c * z_k along the first output axis."""

    c: float
    k: int = 1
    D: int = 1

    def __call__(self, Z):
        Z = np.atleast_2d(Z)
        out = np.zeros((Z.shape[0], self.D))
        out[:, 0] = self.c * Z[:, self.k - 1]
        return out


@dataclass
class ConstantDecoder:
    value: tuple = (0.5, -1.0)

    def __call__(self, Z):
        Z = np.atleast_2d(Z)
        return np.tile(np.asarray(self.value, dtype=float), (Z.shape[0], 1))


class IntervalStub:
    """Perfect autoencoder on [0, 1]: x -> dim 1 spiking at a + (b - a) x."""

    def __init__(self, params: SpectrumParams):
        self.params = params

    def encode(self, X):
        X = np.atleast_2d(X)
        z = np.zeros((X.shape[0], self.params.K))
        z[:, 0] = self.params.a + (self.params.b - self.params.a) * X[:, 0]
        return truncate(z, self.params)

    def decode(self, Z):
        Z = np.atleast_2d(Z)
        return ((Z[:, :1] - self.params.a) / (self.params.b - self.params.a))


class SplitStub:
    """Encodes 2-D points on pattern {1} when x1 < split, else {2}; decodes to a fixed point per pattern."""

    def __init__(self, params: SpectrumParams, split: float = 5.0):
        self.params = params
        self.split = split

    def encode(self, X):
        X = np.atleast_2d(X)
        z = np.zeros((X.shape[0], self.params.K))
        right = X[:, 0] >= self.split
        z[~right, 0] = 0.5
        z[right, 1] = 0.5
        return z

    def decode(self, Z):
        Z = np.atleast_2d(Z)
        return np.where(Z[:, [1]] > 0, [[5.0, 2.0]], [[2.0, 2.0]])

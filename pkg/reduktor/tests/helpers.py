import numpy as np

from reduktor.channel_gen import BathModel

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])


def sigma_x_model():
    """Bathless two-level model H = sigma_x: M(t) = cos(2t) I + (1 - cos(2t)) Theta."""
    return BathModel.from_hamiltonian(SIGMA_X)


def eigenbasis_model():
    """Bathless model measured in the eigenbasis of H: M(t) is the identity."""
    return BathModel.from_hamiltonian(np.diag([1.0, 2.5]))


def sigma_x_m(t):
    c, s = np.cos(t) ** 2, np.sin(t) ** 2
    return np.array([[c, s], [s, c]])


def complex_pairs(arr):
    arr = np.asarray(arr, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()

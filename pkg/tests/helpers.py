"""Independent dense-matrix reference implementations used as test oracles."""

import numpy as np

H2 = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


def bits_of(index, offset, width):
    return (index >> offset) % (1 << width)


def with_bits(index, offset, width, value):
    cleared = index - (bits_of(index, offset, width) << offset)
    return cleared + (value << offset)


def dense_xor_oracle(n_qubits, f_entries, in_spec, out_spec):
    """Matrix of |x, y> -> |x, y xor f(x)>; specs are (offset, width) of plain segments."""
    dim = 1 << n_qubits
    u = np.zeros((dim, dim))
    for i in range(dim):
        x = bits_of(i, *in_spec)
        y = bits_of(i, *out_spec)
        j = with_bits(i, out_spec[0], out_spec[1], y ^ int(f_entries[x]))
        u[j, i] = 1.0
    return u


def dense_permutation(n_qubits, p_entries, spec):
    dim = 1 << n_qubits
    u = np.zeros((dim, dim))
    for i in range(dim):
        j = with_bits(i, spec[0], spec[1], int(p_entries[bits_of(i, *spec)]))
        u[j, i] = 1.0
    return u


def dense_hadamard(n_qubits, qubits):
    """Kronecker product; np.kron(A, B) puts B on the less significant bits."""
    u = np.array([[1.0]])
    for q in reversed(range(n_qubits)):
        u = np.kron(u, H2 if q in qubits else np.eye(2))
    return u


def dense_phase_flip(n_qubits, spec, value):
    diag = [(-1.0 if bits_of(i, *spec) == value else 1.0) for i in range(1 << n_qubits)]
    return np.diag(diag)


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)

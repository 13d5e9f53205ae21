"""Truth-table records and pointer-basis selection by correlation stability.

A measurement record is made by conditionally shifting an apparatus out of
its ready level: |A_0>|s_k> -> |A_r(k)>|s_k>.  Coupling the record to an
environment through a diagonal interaction multiplies every |A_k>|e_nu>
amplitude by a phase e^{-i g_kn t}; the pairwise overlap of the resulting
environment branches is the decoherence factor zeta_kk'(t).  Candidate
record bases are scored by how far each conditional state of the remaining
subsystems is from a product.  The distinguished (pointer) basis is the one
whose conditionals stay products for all t, which singles it out without any
appeal to probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import (
    NORM_TOL,
    Bipartition,
    OrthogonalOutcomeError,
    StateVector,
    conditional_state,
    schmidt,
)

SPECTRUM_NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-10
FLAT_LANDSCAPE_TOL = 1e-9
SEARCH_DIM_CAP = 8


@dataclass(frozen=True)
class TruthTable:
    """Record rule: system vector k is written to apparatus level record_map[k].

    ``system_basis`` rows must be unit vectors.  They are usually orthonormal,
    but do not have to be: non-orthogonal inputs can still be recorded on
    orthonormal apparatus levels through ``premeasure_branches``.  Level 0 of
    the apparatus is the ready state and never appears as a record image, so
    record indices start at 1; the default map is k -> k + 1.  ``parked`` is
    where a destructive readout leaves the system (first coordinate vector
    unless overridden).
    """

    system_basis: np.ndarray = field(repr=False)
    record_map: tuple = ()
    parked: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        basis = np.asarray(self.system_basis, dtype=complex)
        if basis.ndim != 2 or basis.shape[0] < 1:
            raise ValueError("system_basis must be a 2-d array, one vector per row")
        nrms = np.linalg.norm(basis, axis=1)
        if np.max(np.abs(nrms - 1.0)) > NORM_TOL:
            raise ValueError("system_basis rows must be unit vectors")
        if self.record_map:
            rmap = tuple(int(r) for r in self.record_map)
        else:
            rmap = tuple(range(1, basis.shape[0] + 1))
        if len(rmap) != basis.shape[0]:
            raise ValueError("record_map length must match the number of outcomes")
        if len(set(rmap)) != len(rmap):
            raise ValueError("record_map must be injective")
        if min(rmap) < 1:
            raise ValueError("apparatus level 0 is the ready state; records start at 1")
        if self.parked is None:
            parked = np.zeros(basis.shape[1], dtype=complex)
            parked[0] = 1.0
        else:
            parked = np.asarray(self.parked, dtype=complex)
            if parked.shape != (basis.shape[1],):
                raise ValueError("parked vector dimension mismatch")
            if abs(np.linalg.norm(parked) - 1.0) > NORM_TOL:
                raise ValueError("parked vector must be normalized")
        basis = basis.copy()
        basis.flags.writeable = False
        parked = parked.copy()
        parked.flags.writeable = False
        object.__setattr__(self, "system_basis", basis)
        object.__setattr__(self, "record_map", rmap)
        object.__setattr__(self, "parked", parked)

    @property
    def n_outcomes(self) -> int:
        return self.system_basis.shape[0]

    @property
    def dim_system(self) -> int:
        return self.system_basis.shape[1]

    def is_orthonormal(self, tol: float = 1e-9) -> bool:
        gram = self.system_basis.conj() @ self.system_basis.T
        return float(np.max(np.abs(gram - np.eye(self.n_outcomes)))) <= tol


@dataclass(frozen=True)
class CouplingMatrix:
    """Record-environment coupling strengths g[k, nu] (hbar = 1)."""

    g: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 2 or g.size == 0:
            raise ValueError("couplings must form a 2-d array (record x level)")
        if not np.all(np.isfinite(g)):
            raise ValueError("couplings must be finite")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "g", g)

    @property
    def n_records(self) -> int:
        return self.g.shape[0]

    @property
    def n_levels(self) -> int:
        return self.g.shape[1]


@dataclass(frozen=True)
class EnvSpectrum:
    """Initial environment expansion amplitudes gamma_nu."""

    gamma: np.ndarray = field(repr=False)

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=complex)
        if gamma.ndim != 1 or gamma.size == 0:
            raise ValueError("spectrum must be a flat nonempty vector")
        total = float(np.sum(np.abs(gamma) ** 2))
        if abs(total - 1.0) > SPECTRUM_NORM_TOL:
            raise ValueError(f"spectrum weights sum to {total!r}, not 1")
        gamma = gamma.copy()
        gamma.flags.writeable = False
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def uniform(cls, n_levels: int) -> "EnvSpectrum":
        return cls(np.full(int(n_levels), 1.0 / math.sqrt(int(n_levels)), dtype=complex))

    @property
    def n_levels(self) -> int:
        return self.gamma.size


@dataclass(frozen=True)
class PointerScore:
    """Entanglement scores of the conditionals behind each candidate level.

    ``per_outcome[l]`` is 1 minus the squared largest Schmidt coefficient of
    the conditional state picked out by candidate vector l: zero means the
    conditional is a product (the record is intact), 1 - 1/N is the ceiling
    for N evenly entangled branches.  Levels whose projection weight falls
    below the 1e-12 floor carry no conditional and are reported as 0.
    ``degenerate_minimum`` is set by the basis search when the score
    landscape is flat and the reported minimizer is not unique.
    """

    per_outcome: tuple
    max_score: float
    degenerate_minimum: bool = False


def environment_state(spectrum: EnvSpectrum) -> StateVector:
    """Single-subsystem state sum_nu gamma_nu |e_nu>."""
    return StateVector((spectrum.n_levels,), spectrum.gamma)


def load_couplings(path) -> CouplingMatrix:
    """Read g[k, nu] from whitespace-separated text, one row per record level."""
    return CouplingMatrix(np.loadtxt(path, ndmin=2, dtype=float))


def _assemble(amplitudes, table: TruthTable, apparatus_dim: int,
              destructive: bool, system_dims) -> StateVector:
    if apparatus_dim < table.n_outcomes + 1:
        raise ValueError(
            f"apparatus too small: {table.n_outcomes} outcomes need dimension "
            f">= {table.n_outcomes + 1} (level 0 stays the ready state)"
        )
    if max(table.record_map) >= apparatus_dim:
        raise ValueError("record_map points past the apparatus dimension")
    out = np.zeros((int(apparatus_dim), table.dim_system), dtype=complex)
    for k, r in enumerate(table.record_map):
        target = table.parked if destructive else table.system_basis[k]
        out[r] += amplitudes[k] * target
    return StateVector((int(apparatus_dim),) + tuple(system_dims), out.reshape(-1))


def premeasure(system_state: StateVector, table: TruthTable, apparatus_dim: int,
               destructive: bool = False) -> StateVector:
    """Record a system state onto a fresh apparatus: |A_0>|s_k> -> |A_r(k)>|s_k>.

    The table basis must be orthonormal (the branch amplitudes are the
    projections <s_k|input>) and the input must lie in its span.  With
    ``destructive`` the system is left parked in a fixed vector while the
    record keeps k.  Output layout: (apparatus, system), apparatus first.
    """
    if not table.is_orthonormal():
        raise ValueError(
            "premeasure needs an orthonormal system_basis; for general unit "
            "vectors supply branch amplitudes to premeasure_branches"
        )
    if system_state.amps.size != table.dim_system:
        raise ValueError("system state dimension does not match the table")
    amplitudes = table.system_basis.conj() @ system_state.amps
    residue = system_state.amps - amplitudes @ table.system_basis
    if np.linalg.norm(residue) > 1e-9:
        raise ValueError("input state has weight outside the recorded span")
    return _assemble(amplitudes, table, apparatus_dim, destructive, system_state.dims)


def premeasure_branches(amplitudes, table: TruthTable, apparatus_dim: int,
                        destructive: bool = False) -> StateVector:
    """Record explicitly weighted branches: sum_k c_k |A_r(k)>|s_k>.

    This is the route for non-orthogonal recorded states, where projections
    are ambiguous and the caller owns the branch amplitudes c_k.  The output
    is normalized because the record images are orthonormal regardless of the
    overlaps <s_k|s_l>.
    """
    c = np.asarray(amplitudes, dtype=complex)
    if c.shape != (table.n_outcomes,):
        raise ValueError("one amplitude per table outcome required")
    if abs(np.linalg.norm(c) - 1.0) > NORM_TOL:
        raise ValueError("branch amplitudes must satisfy sum |c_k|^2 = 1")
    return _assemble(c, table, apparatus_dim, destructive, (table.dim_system,))


def evolve(state: StateVector, apparatus: int, env: int,
           couplings: CouplingMatrix, t: float) -> StateVector:
    """Diagonal record-environment coupling acting for time t.

    Multiplies the amplitude of every |A_k>|e_nu> component by e^{-i g_kn t};
    all other subsystems are spectators and the norm is untouched.  The
    coupling matrix must cover the full apparatus and environment dimensions.
    """
    n = state.n_subsystems
    if apparatus == env:
        raise ValueError("apparatus and environment must be distinct subsystems")
    for idx in (apparatus, env):
        if idx < 0 or idx >= n:
            raise ValueError(f"subsystem {idx} out of range")
    g = couplings.g
    if state.dims[apparatus] != g.shape[0] or state.dims[env] != g.shape[1]:
        raise ValueError(
            f"coupling shape {g.shape} does not match apparatus/environment "
            f"dimensions ({state.dims[apparatus]}, {state.dims[env]})"
        )
    phases = np.exp(-1j * g * float(t))
    tens = np.moveaxis(state.tensor(), (apparatus, env), (0, 1))
    tens = tens * phases.reshape(g.shape + (1,) * (n - 2))
    out = np.moveaxis(tens, (0, 1), (apparatus, env))
    return StateVector(state.dims, out.reshape(-1))


def decoherence_factor(couplings: CouplingMatrix, spectrum: EnvSpectrum,
                       k: int, k_other: int, t: float) -> complex:
    """Overlap of the environment branches behind records k and k_other.

    zeta_kk'(t) = sum_nu |gamma_nu|^2 e^{i (g_k'nu - g_knu) t}; modulus <= 1
    always, and exactly 1 at t = 0 or k = k'.
    """
    g = couplings.g
    for idx in (k, k_other):
        if idx < 0 or idx >= g.shape[0]:
            raise ValueError(f"record index {idx} out of range")
    if spectrum.n_levels != g.shape[1]:
        raise ValueError("spectrum level count does not match the couplings")
    weights = np.abs(spectrum.gamma) ** 2
    return complex(np.sum(weights * np.exp(1j * (g[k_other] - g[k]) * float(t))))


def pointer_score(state: StateVector, apparatus: int, candidate_basis) -> PointerScore:
    """Score a candidate record basis by the entanglement of its conditionals.

    For each basis vector the remaining subsystems are conditioned on it and
    the score is 1 minus the squared top Schmidt coefficient of that
    conditional across (first remaining subsystem | rest).  Zero means the
    conditional is a product; any entanglement between the leftover
    subsystems pushes the score up.  Vectors whose projection weight is below
    the 1e-12 floor are skipped and scored 0.
    """
    basis = np.asarray(candidate_basis, dtype=complex)
    d = state.dims[apparatus]
    if basis.shape != (d, d):
        raise ValueError(f"candidate basis must be {d} x {d}, one vector per row")
    gram = basis.conj() @ basis.T
    if np.max(np.abs(gram - np.eye(d))) > 1e-9:
        raise ValueError("candidate basis is not orthonormal")
    scores = []
    for row in basis:
        try:
            _, residual = conditional_state(state, apparatus, row)
        except OrthogonalOutcomeError:
            scores.append(0.0)
            continue
        if residual.n_subsystems == 1:
            scores.append(0.0)
            continue
        dec = schmidt(residual, Bipartition((0,)))
        lam = float(np.max(np.abs(dec.coeffs)))
        scores.append(min(1.0, max(0.0, 1.0 - lam * lam)))
    return PointerScore(tuple(scores), max(scores))


def _haar_basis(rng, d: int) -> np.ndarray:
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return (q * (diag / np.abs(diag))).T


def _rotated(basis: np.ndarray, i: int, j: int, theta: float, phi: float) -> np.ndarray:
    # two-level rotation mixing rows i and j; c real keeps the rows orthonormal
    out = basis.copy()
    c = math.cos(theta)
    s = math.sin(theta) * complex(math.cos(phi), math.sin(phi))
    out[i] = c * basis[i] + s * basis[j]
    out[j] = -s.conjugate() * basis[i] + c * basis[j]
    return out


def _descend(state, apparatus, basis, value, iterations):
    d = basis.shape[0]
    span = math.pi / 2
    phis = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
    for _ in range(max(1, int(iterations))):
        for i in range(d):
            for j in range(i + 1, d):
                best_trial, best_val = None, value
                for theta in np.linspace(-span, span, 9):
                    if theta == 0.0:
                        continue
                    for phi in phis:
                        trial = _rotated(basis, i, j, float(theta), phi)
                        v = pointer_score(state, apparatus, trial).max_score
                        if v < best_val - 1e-15:
                            best_val, best_trial = v, trial
                if best_trial is not None:
                    basis, value = best_trial, best_val
        span *= 0.5
        if value <= 1e-14:
            break
    return basis, value


def find_pointer_basis(state: StateVector, apparatus: int, iterations: int = 48):
    """Best-effort search for the record basis with the smallest max score.

    Greedy coordinate descent over two-level rotations with a halving angle
    bracket, run from the coordinate basis and 5 seeded random starts; no
    global optimality is claimed.  Returns (basis rows, PointerScore).  When
    an initial probe shows the landscape is flat, the coordinate basis comes
    back with ``degenerate_minimum`` set instead of a meaningless winner.
    """
    d = state.dims[apparatus]
    if d > SEARCH_DIM_CAP:
        raise ValueError(f"apparatus dimension {d} above desk scale ({SEARCH_DIM_CAP})")
    rng = np.random.default_rng(17)  # fixed: the search must be reproducible
    starts = [np.eye(d, dtype=complex)] + [_haar_basis(rng, d) for _ in range(5)]
    start_scores = [pointer_score(state, apparatus, b).max_score for b in starts]
    if max(start_scores) - min(start_scores) <= FLAT_LANDSCAPE_TOL:
        flat = pointer_score(state, apparatus, starts[0])
        return starts[0], PointerScore(flat.per_outcome, flat.max_score, True)
    best_basis, best_val = starts[0], start_scores[0]
    for basis, val in zip(starts, start_scores):
        got_basis, got_val = _descend(state, apparatus, basis, val, iterations)
        if got_val < best_val:
            best_basis, best_val = got_basis, got_val
    return best_basis, pointer_score(state, apparatus, best_basis)


def commutator_norm(pointer_observable, couplings: CouplingMatrix) -> float:
    """Frobenius norm of the commutator with the record-environment coupling.

    The interaction Hamiltonian is H = sum_kn g_kn |A_k><A_k| (x) |e_n><e_n|;
    an observable diagonal in the record basis commutes with it exactly.
    """
    lam = np.asarray(pointer_observable, dtype=complex)
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
        raise ValueError("pointer observable must be a square matrix")
    if np.max(np.abs(lam - lam.conj().T)) > HERMITIAN_TOL:
        raise ValueError("pointer observable must be hermitian")
    g = couplings.g
    if lam.shape[0] != g.shape[0]:
        raise ValueError("observable dimension does not match the coupling rows")
    h = np.diag(g.reshape(-1))  # apparatus index slow, environment fast
    lam_full = np.kron(lam, np.eye(g.shape[1]))
    comm = lam_full @ h - h @ lam_full
    return float(np.linalg.norm(comm))

"""Many-body spin operators, sector bases, and eigensolvers for small lattices.

Conventions used throughout:

* basis labels are integers; qubit ``i`` is bit ``i``, and lattice site
  ``(x, y)`` maps to qubit ``y * lx + x`` (row-major, qubit 0 at the origin);
* bit value 1 is spin up, i.e. sigma_z has eigenvalue +1 on a set bit;
* Hamiltonian bonds use bare Pauli matrices (sigma_i . sigma_j, so a two-site
  bond has spectrum {-3, 1, 1, 1}), while total-spin operators use S = sigma/2
  so that the squared total spin has eigenvalues J(J+1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from . import kernels
from .errors import CapacityError, ConvergenceError, DependencyError, ParseError, StructureError
from .util import make_rng

MAX_QUBITS = 20
DENSE_LIMIT = 4096
HEAVY_DENSE_LIMIT = 12870

_HERMITICITY_TOL = 1e-12

# 16-bit popcount lookup, composed for wider labels
_POPCOUNT16 = np.array([bin(i).count("1") for i in range(1 << 16)], dtype=np.int64)


def _popcount(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    return _POPCOUNT16[labels & 0xFFFF] + _POPCOUNT16[(labels >> 16) & 0xFFFF]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpinLatticeSpec:
    """Rectangular spin-1/2 lattice with optional periodic wrap and z-field."""

    lx: int
    ly: int
    periodic: bool = True
    field_h: float = 0.0
    max_qubits: int = MAX_QUBITS

    def __post_init__(self):
        if self.lx < 1 or self.ly < 1 or self.n_sites < 2:
            raise ValueError("lattice needs at least two sites")
        if self.n_sites > self.max_qubits:
            raise CapacityError(
                f"{self.n_sites} spins exceed the configured maximum of {self.max_qubits}"
            )

    @property
    def n_sites(self) -> int:
        return self.lx * self.ly

    def site_index(self, x: int, y: int) -> int:
        return y * self.lx + x

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds, each counted once (wrap bonds deduplicated)."""
        pairs = set()
        for y in range(self.ly):
            for x in range(self.lx):
                here = self.site_index(x, y)
                if x + 1 < self.lx:
                    pairs.add((here, self.site_index(x + 1, y)))
                elif self.periodic and self.lx > 1:
                    pairs.add(tuple(sorted((here, self.site_index(0, y)))))
                if y + 1 < self.ly:
                    pairs.add((here, self.site_index(x, y + 1)))
                elif self.periodic and self.ly > 1:
                    pairs.add(tuple(sorted((here, self.site_index(x, 0)))))
        return sorted(pairs)


@dataclass(frozen=True, eq=False)
class SparseHermitianOperator:
    """Hermitian operator in CSR layout with optional known spectral bounds.

    ``scale_info = (shift, scale)`` maps energies of this operator back to the
    original frame via ``E_orig = shift + scale * E``.
    """

    matrix: sparse.csr_matrix
    hermiticity_checked: bool = False
    bounds: tuple[float, float] | None = None
    scale_info: tuple[float, float] = (0.0, 1.0)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def dot(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix.dot(vec)

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def to_dense(self) -> np.ndarray:
        dense = self.matrix.toarray()
        if np.abs(dense.imag).max(initial=0.0) == 0.0:
            return dense.real
        return dense

    def entries(self):
        """COO triples (rows, cols, values)."""
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    @staticmethod
    def from_matrix(matrix, *, check: bool = True, bounds=None, scale_info=(0.0, 1.0)):
        csr = sparse.csr_matrix(matrix)
        if np.iscomplexobj(csr.data):
            if np.abs(csr.data.imag).max(initial=0.0) == 0.0:
                # real operators stay real: half the matvec cost
                csr = sparse.csr_matrix(
                    (csr.data.real.copy(), csr.indices, csr.indptr), shape=csr.shape
                )
        else:
            csr = csr.astype(np.float64, copy=False)
        csr.sum_duplicates()
        csr.sort_indices()
        if check:
            residual = (csr - csr.getH()).tocoo()
            scale = max(1.0, np.abs(csr.data).max(initial=0.0))
            if residual.nnz and np.abs(residual.data).max() > _HERMITICITY_TOL * scale:
                raise ValueError("operator is not hermitian")
        csr.data.flags.writeable = False
        return SparseHermitianOperator(
            matrix=csr,
            hermiticity_checked=check,
            bounds=None if bounds is None else (float(bounds[0]), float(bounds[1])),
            scale_info=(float(scale_info[0]), float(scale_info[1])),
        )


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized complex state over explicit integer basis labels."""

    amplitudes: np.ndarray
    basis_labels: np.ndarray

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        labels = np.ascontiguousarray(self.basis_labels, dtype=np.int64)
        if amps.shape != labels.shape or amps.ndim != 1:
            raise ValueError("amplitudes and basis labels must be 1D and congruent")
        norm = np.linalg.norm(amps)
        if not norm > 0.0:
            raise ValueError("state has zero norm")
        amps = amps / norm
        amps.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "basis_labels", labels)

    @property
    def dimension(self) -> int:
        return self.amplitudes.shape[0]


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Retained bit-strings of a quantum-number sector of the full basis."""

    parent_qubits: int
    constraint: tuple[str, float]
    index_map: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(self.index_map, dtype=np.int64)
        if idx.size and np.any(np.diff(idx) <= 0):
            raise ValueError("index_map must be strictly increasing")
        idx.flags.writeable = False
        object.__setattr__(self, "index_map", idx)

    @property
    def dimension(self) -> int:
        return self.index_map.shape[0]


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Ascending spectrum with optional eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    scale_info: tuple[float, float] = (0.0, 1.0)

    @property
    def dimension(self) -> int:
        return self.eigenvalues.shape[0]


# ---------------------------------------------------------------------------
# Operator constructors
# ---------------------------------------------------------------------------


def _assemble(dim, diag, rows, cols, vals, *, bounds=None):
    mat = sparse.coo_matrix(
        (vals.astype(np.float64), (rows, cols)), shape=(dim, dim)
    ).tocsr()
    mat = mat + sparse.diags(diag.astype(np.float64), format="csr")
    return SparseHermitianOperator.from_matrix(mat, check=False, bounds=bounds)


def build_heisenberg(spec: SpinLatticeSpec) -> SparseHermitianOperator:
    """Nearest-neighbour sigma.sigma Hamiltonian plus a uniform z-field."""
    n = spec.n_sites
    diag, rows, cols, vals = kernels.pair_coupling_entries(n, spec.bonds())
    if spec.field_h != 0.0:
        labels = np.arange(1 << n, dtype=np.int64)
        # sum_i h * sigma_z_i = h * (2 * popcount - n)
        diag = diag + spec.field_h * (2.0 * _popcount(labels) - n)
    return _assemble(1 << n, diag, rows, cols, vals)


def build_total_spin_squared(n_spins: int) -> SparseHermitianOperator:
    """(sum_i S_i)^2 with S = sigma/2; eigenvalues are exactly J(J+1)."""
    if n_spins < 1:
        raise ValueError("need at least one spin")
    if n_spins > MAX_QUBITS:
        raise CapacityError(f"{n_spins} spins exceed the configured maximum")
    if n_spins == 1:
        diag = np.full(2, 0.75)
        empty = np.empty(0, dtype=np.int64)
        return _assemble(2, diag, empty, empty, np.empty(0), bounds=(0.75, 0.75))
    pairs = [(i, j) for i in range(n_spins) for j in range(i + 1, n_spins)]
    diag, rows, cols, vals = kernels.pair_coupling_entries(n_spins, pairs)
    # J^2 = 3n/4 + (1/2) sum_{i<j} sigma_i.sigma_j
    diag = 0.75 * n_spins + 0.5 * diag
    j_max = n_spins / 2.0
    return _assemble(
        1 << n_spins, diag, rows, cols, 0.5 * vals, bounds=(0.0, j_max * (j_max + 1.0))
    )


def build_jz(n_spins: int) -> SparseHermitianOperator:
    """Diagonal total third spin component sum_i sigma_z_i / 2."""
    if n_spins < 1:
        raise ValueError("need at least one spin")
    if n_spins > MAX_QUBITS:
        raise CapacityError(f"{n_spins} spins exceed the configured maximum")
    labels = np.arange(1 << n_spins, dtype=np.int64)
    diag = _popcount(labels) - n_spins / 2.0
    mat = sparse.diags(diag.astype(np.float64), format="csr")
    return SparseHermitianOperator.from_matrix(
        mat, check=False, bounds=(-n_spins / 2.0, n_spins / 2.0)
    )


def jz_sector(n_spins: int, jz_value: float = 0.0) -> SectorBasis:
    """Basis sector with fixed total J_z (i.e. fixed number of up spins)."""
    n_up = jz_value + n_spins / 2.0
    if abs(n_up - round(n_up)) > 1e-9 or not 0 <= round(n_up) <= n_spins:
        raise ValueError(f"no basis states with J_z = {jz_value} on {n_spins} spins")
    labels = np.arange(1 << n_spins, dtype=np.int64)
    kept = labels[_popcount(labels) == round(n_up)]
    return SectorBasis(n_spins, ("J_z", float(jz_value)), kept)


def sector_restrict(
    op: SparseHermitianOperator, sector: SectorBasis, *, check_structure: bool = False
) -> SparseHermitianOperator:
    """Project an operator onto the retained sector basis."""
    if op.dimension != (1 << sector.parent_qubits):
        raise ValueError("operator dimension does not match the sector's parent basis")
    idx = sector.index_map
    rows = op.matrix[idx]
    if check_structure:
        in_sector = np.zeros(op.dimension, dtype=bool)
        in_sector[idx] = True
        outside = ~in_sector[rows.indices]
        if outside.any() and np.abs(rows.data[outside]).max() > 1e-12:
            raise StructureError(
                "operator couples the sector to its complement; it does not "
                f"commute with {sector.constraint[0]}"
            )
    sub = rows[:, idx].tocsr()
    sub.sort_indices()
    sub.data.flags.writeable = False
    return SparseHermitianOperator(
        matrix=sub,
        hermiticity_checked=op.hermiticity_checked,
        bounds=op.bounds,  # parent bounds still enclose the restricted spectrum
        scale_info=op.scale_info,
    )


def sector_restrict_state(
    state: StateVector, sector: SectorBasis, *, require_full_weight: bool = True
) -> StateVector:
    """Keep the amplitudes of a full-space state that lie inside the sector."""
    if state.dimension != (1 << sector.parent_qubits):
        raise ValueError("state lives in a different basis than the sector parent")
    amps = state.amplitudes[sector.index_map]
    weight = float(np.vdot(amps, amps).real)
    if require_full_weight and weight < 1.0 - 1e-10:
        raise ValueError(f"state keeps only {weight:.6f} of its weight in the sector")
    return StateVector(amps, sector.index_map)


def neel_state(spec: SpinLatticeSpec) -> StateVector:
    """Product state with spins up on the even and down on the odd sublattice."""
    label = 0
    for y in range(spec.ly):
        for x in range(spec.lx):
            if (x + y) % 2 == 0:
                label |= 1 << spec.site_index(x, y)
    amps = np.zeros(1 << spec.n_sites, dtype=np.complex128)
    amps[label] = 1.0
    return StateVector(amps, np.arange(1 << spec.n_sites, dtype=np.int64))


def random_trial_state(
    eigen: EigenDecomposition, seed: int, basis_labels=None
) -> StateVector:
    """Ground component 1 plus uniform [-1, 1] draws on every excited component.

    The draws come from ``make_rng(seed).uniform(-1, 1, dimension - 1)`` in
    eigenvalue order, so they can be reproduced exactly from the seed.
    """
    if eigen.eigenvectors is None:
        raise DependencyError("random trial state needs the eigenbasis columns")
    dim = eigen.dimension
    coeffs = np.ones(dim)
    if dim > 1:
        coeffs[1:] = make_rng(seed).uniform(-1.0, 1.0, dim - 1)
    psi = eigen.eigenvectors @ (coeffs / np.linalg.norm(coeffs))
    if basis_labels is None:
        basis_labels = np.arange(dim, dtype=np.int64)
    return StateVector(psi.astype(np.complex128), basis_labels)


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------


def extremal_eigenvalues(
    op: SparseHermitianOperator,
    tolerance: float = 1e-9,
    *,
    safety_margin: float = 0.0,
) -> tuple[float, float]:
    """Smallest and largest eigenvalue; Lanczos above dimension 64, dense below.

    ``safety_margin`` widens the returned interval by that fraction of the
    span on each side, for scaling spectra known only approximately.
    """
    dim = op.dimension
    if dim <= 64:
        vals = np.linalg.eigvalsh(op.to_dense())
        lo, hi = float(vals[0]), float(vals[-1])
    else:
        v0 = make_rng(0).standard_normal(dim)  # fixed start for reproducibility
        try:
            lo = float(
                spla.eigsh(op.matrix, k=1, which="SA", tol=tolerance, v0=v0,
                           return_eigenvectors=False)[0]
            )
            hi = float(
                spla.eigsh(op.matrix, k=1, which="LA", tol=tolerance, v0=v0,
                           return_eigenvectors=False)[0]
            )
        except spla.ArpackNoConvergence as exc:
            best = exc.eigenvalues if exc.eigenvalues is not None else None
            raise ConvergenceError(
                "extremal eigenvalue iteration did not converge", best=best
            ) from exc
    span = hi - lo
    return lo - safety_margin * span, hi + safety_margin * span


def eigendecompose(op: SparseHermitianOperator, *, heavy: bool = False) -> EigenDecomposition:
    """Full dense spectrum and orthonormal eigenvectors."""
    limit = HEAVY_DENSE_LIMIT if heavy else DENSE_LIMIT
    if op.dimension > limit:
        raise CapacityError(
            f"dimension {op.dimension} exceeds the dense limit {limit}"
            + ("" if heavy else " (pass heavy=True up to 12870)")
        )
    vals, vecs = np.linalg.eigh(op.to_dense())
    return EigenDecomposition(vals, vecs, scale_info=op.scale_info)


def scale_and_shift(
    op: SparseHermitianOperator, target_energy: float, e_min: float, e_max: float
) -> SparseHermitianOperator:
    """Map the spectrum so the target sits at 0 and the full width is <= 1."""
    if not e_min < e_max:
        raise ValueError("need e_min < e_max to scale an operator")
    width = e_max - e_min
    mat = (op.matrix - target_energy * sparse.identity(op.dimension, format="csr")) / width
    mat = mat.tocsr()
    mat.sort_indices()
    mat.data.flags.writeable = False
    if op.bounds is not None:
        lo, hi = op.bounds
    else:
        lo, hi = e_min, e_max
    shift, scale = op.scale_info
    return SparseHermitianOperator(
        matrix=mat,
        hermiticity_checked=op.hermiticity_checked,
        bounds=((lo - target_energy) / width, (hi - target_energy) / width),
        scale_info=(shift + scale * target_energy, scale * width),
    )


def expectation(op: SparseHermitianOperator, state: StateVector) -> float:
    """Real expectation value <psi|op|psi>."""
    if op.dimension != state.dimension:
        raise ValueError(
            f"operator dimension {op.dimension} != state dimension {state.dimension}"
        )
    value = np.vdot(state.amplitudes, op.dot(state.amplitudes))
    return float(value.real)


# ---------------------------------------------------------------------------
# JSON wire formats
# ---------------------------------------------------------------------------


def save_operator(op: SparseHermitianOperator, path) -> None:
    Path(path).write_text(json.dumps(operator_to_json(op)) + "\n", encoding="utf-8")


def load_operator(path) -> SparseHermitianOperator:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return operator_from_json(doc)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except (KeyError, IndexError, TypeError) as exc:
        raise ParseError(f"malformed operator document: {exc}") from exc


def operator_to_json(op: SparseHermitianOperator) -> dict:
    rows, cols, vals = op.entries()
    return {
        "dimension": op.dimension,
        "entries": [
            [int(i), int(j), float(v.real), float(v.imag)]
            for i, j, v in zip(rows, cols, vals)
        ],
    }


def operator_from_json(doc: dict) -> SparseHermitianOperator:
    dim = int(doc["dimension"])
    entries = doc.get("entries", [])
    rows = np.array([e[0] for e in entries], dtype=np.int64)
    cols = np.array([e[1] for e in entries], dtype=np.int64)
    vals = np.array([complex(e[2], e[3]) for e in entries], dtype=np.complex128)
    mat = sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    return SparseHermitianOperator.from_matrix(mat, check=True)


def state_to_json(state: StateVector) -> dict:
    return {
        "labels": [int(l) for l in state.basis_labels],
        "amplitudes": [[float(a.real), float(a.imag)] for a in state.amplitudes],
    }


def state_from_json(doc: dict) -> StateVector:
    labels = np.array(doc["labels"], dtype=np.int64)
    amps = np.array([complex(re, im) for re, im in doc["amplitudes"]])
    return StateVector(amps, labels)

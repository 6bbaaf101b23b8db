"""
Smallest eigenvalue of the restricted quadratic form, and the compactness-estimate probe.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from dbar_lab.dbar import (
    AssembledQOperator,
    ProductQOperator,
    QOperator,
    assemble_q,
    q_value,
    sobolev_minus1,
)
from dbar_lab.model.fields import FormField01, SeparableForm01
from dbar_lab.model.grid import GridDomain, Support
from dbar_lab.model.options import SolverOptions
from dbar_lab.model.regions import EmptyMaskError
from dbar_lab.model.reports import LambdaReport, ProbeLedgerEntry, ProbeReport

# Largest problem the dense oracle accepts.
DENSE_LIMIT = 4000


class SpectralError(RuntimeError):
    pass


class SizeLimitError(SpectralError):
    pass


class EmptyIntersectionError(SpectralError):
    pass


class SolverConvergenceError(SpectralError):
    def __init__(self, message: str, *, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ZeroFormError(SpectralError):
    pass


@dataclass(frozen=True, slots=True)
class EigenPair:
    """Lowest eigenpair of a Hermitian matrix, with its residual ‖Mv - λv‖/‖v‖."""

    value: float
    vector: np.ndarray
    residual: float
    solver: str


def _residual(matrix: sp.spmatrix | np.ndarray, value: float, vector: np.ndarray) -> float:
    r = matrix @ vector - value * vector
    return float(np.linalg.norm(r) / np.linalg.norm(vector))


def _fix_phase(vector: np.ndarray) -> np.ndarray:
    """Unit norm, largest entry real and positive: a canonical eigenvector."""
    v = vector / np.linalg.norm(vector)
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def lowest_pair_dense(matrix: sp.spmatrix | np.ndarray) -> EigenPair:
    n = matrix.shape[0]
    if n > DENSE_LIMIT:
        raise SizeLimitError(f"dense eigensolve limited to {DENSE_LIMIT} dofs, got {n}")
    dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    values, vectors = scipy.linalg.eigh(dense, subset_by_index=[0, 0])
    value = float(values[0])
    vector = _fix_phase(vectors[:, 0])
    return EigenPair(value, vector, _residual(dense, value, vector), "dense")


def lowest_pair_iterative(
    matrix: sp.spmatrix, *, tol: float, seed: int, max_iterations: int = 5000
) -> EigenPair:
    """
    Shift-invert ARPACK for the lowest eigenpair of a Hermitian PSD matrix.

    The shift sits just below zero so the factorization stays regular and the
    lowest eigenvalue is the one nearest the shift. The starting vector comes
    from a seeded generator, and the reported vector is phase-normalized.

    Raises:
        SolverConvergenceError: If ARPACK fails or the residual exceeds `tol`.
    """
    n = matrix.shape[0]
    if n < 3:
        return lowest_pair_dense(matrix)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    if np.iscomplexobj(matrix.data):
        v0 = v0 + 1j * rng.standard_normal(n)
    scale = float(np.mean(np.abs(matrix.diagonal()))) or 1.0
    sigma = -1e-6 * scale
    try:
        values, vectors = eigsh(
            matrix.tocsc(), k=1, sigma=sigma, which="LM", v0=v0, tol=0.0, maxiter=max_iterations
        )
    except (ArpackNoConvergence, ArpackError) as e:
        raise SolverConvergenceError(f"ARPACK failed on {n} dofs: {e}")
    vector = _fix_phase(vectors[:, 0])
    # Rayleigh quotient of the returned vector
    value = float(np.vdot(vector, matrix @ vector).real)
    residual = _residual(matrix, value, vector)
    logging.debug(f"[spectral] iterative n={n} lambda={value:.12g} residual={residual:.3g}")
    _check_residual(residual, tol, f"iterative eigenpair on {n} dofs")
    return EigenPair(value, vector, residual, "iterative")


def _check_residual(residual: float, tol: float, what: str) -> None:
    """
    Raises:
        SolverConvergenceError: If ‖Mv - λv‖ exceeds `tol` for the unit vector v.
    """
    if not residual <= tol:
        raise SolverConvergenceError(f"{what}: residual {residual:.3g} exceeds {tol:.3g}", residual=residual)


def _lowest_pair(matrix: sp.spmatrix, options: SolverOptions) -> EigenPair:
    if matrix.shape[0] <= options.dense_threshold:
        return lowest_pair_dense(matrix)
    return lowest_pair_iterative(
        matrix, tol=options.tol, seed=options.seed, max_iterations=options.max_iterations
    )


@dataclass(frozen=True, slots=True)
class EigenResult:
    value: float
    residual: float
    solver: str
    form: FormField01 | SeparableForm01


def _product_eigen(q: ProductQOperator, options: SolverOptions | None, dense: bool) -> EigenResult:
    """min over blocks of λ(A) + λ(B), with the separable minimizer a ⊗ b."""
    best: tuple[float, float, str, SeparableForm01] | None = None
    for block in q.blocks:
        if dense:
            pa, pb = lowest_pair_dense(block.a), lowest_pair_dense(block.b)
        else:
            assert options is not None
            pa, pb = _lowest_pair(block.a, options), _lowest_pair(block.b, options)
        value = pa.value + pb.value
        ra = block.a @ pa.vector - pa.value * pa.vector
        rb = block.b @ pb.vector - pb.value * pb.vector
        # ‖r_a⊗b + a⊗r_b‖² with ‖a‖ = ‖b‖ = 1
        cross = 2.0 * (np.vdot(pa.vector, ra) * np.vdot(rb, pb.vector)).real
        residual = float(np.sqrt(max(np.vdot(ra, ra).real + np.vdot(rb, rb).real + cross, 0.0)))
        solver = "dense" if pa.solver == pb.solver == "dense" else "iterative"
        if best is None or value < best[0]:
            grid = q.support.grid
            assert grid.planes is not None and q.support.planes is not None
            a = np.zeros(grid.planes[0].size, dtype=complex)
            b = np.zeros(grid.planes[1].size, dtype=complex)
            i1, i2 = q.support.plane_indices
            a[i1] = pa.vector
            b[i2] = pb.vector
            form = SeparableForm01(
                q.support, block.slot, a.reshape(grid.planes[0].shape), b.reshape(grid.planes[1].shape)
            )
            best = (value, residual, solver, form)
    assert best is not None
    return EigenResult(*best)


# :: FeatureStart | name=smallest_eig_dense
def smallest_eig_dense(q: QOperator) -> tuple[float, FormField01 | SeparableForm01]:
    """
    Exact minimum Rayleigh quotient of Q over the support.

    Raises:
        SizeLimitError: If an assembled operator has more than 4000 dofs.
    """
    if isinstance(q, ProductQOperator):
        result = _product_eigen(q, None, dense=True)
        return result.value, result.form
    if q.dof_count > DENSE_LIMIT:
        raise SizeLimitError(f"dense eigensolve limited to {DENSE_LIMIT} dofs, got {q.dof_count}")
    pair = lowest_pair_dense(q.to_sparse())
    return pair.value, FormField01.from_support_vector(q.support, pair.vector)
# :: FeatureEnd | name=smallest_eig_dense | outcome=ok


# :: FeatureStart | name=smallest_eig_iterative
def smallest_eig_iterative(
    q: QOperator, tol: float = 1e-8, seed: int = 0, *, max_iterations: int = 5000
) -> tuple[float, FormField01 | SeparableForm01]:
    """
    Lowest eigenpair by shift-invert Lanczos/Arnoldi, deterministic for a seed.

    Raises:
        SolverConvergenceError: If the residual ‖Qv - λv‖/‖v‖ exceeds `tol`.
    """
    options = SolverOptions(tol=tol, seed=seed, dense_threshold=0, max_iterations=max_iterations)
    if isinstance(q, ProductQOperator):
        result = _product_eigen(q, options, dense=False)
        _check_residual(result.residual, tol, f"product eigenpair on {q.dof_count} dofs")
        return result.value, result.form
    pair = lowest_pair_iterative(q.to_sparse(), tol=tol, seed=seed, max_iterations=max_iterations)
    return pair.value, FormField01.from_support_vector(q.support, pair.vector)
# :: FeatureEnd | name=smallest_eig_iterative | outcome=ok


def _solve(q: QOperator, options: SolverOptions) -> EigenResult:
    if isinstance(q, ProductQOperator):
        result = _product_eigen(q, options, dense=False)
        _check_residual(result.residual, options.tol, f"product eigenpair on {q.dof_count} dofs")
        return result
    pair = _lowest_pair(q.to_sparse(), options)
    if pair.solver == "dense":
        _check_residual(pair.residual, options.tol, f"dense eigenpair on {q.dof_count} dofs")
    form = FormField01.from_support_vector(q.support, pair.vector)
    return EigenResult(pair.value, pair.residual, pair.solver, form)


# :: FeatureStart | name=lambda_estimate
def lambda_estimate(
    grid: GridDomain,
    region: object | None,
    options: SolverOptions | None = None,
    *,
    label: str = "",
    factorize: bool = True,
) -> LambdaReport:
    """
    Discrete λ(U): smallest eigenvalue of Q over forms supported in U ∩ Ω.

    Args:
        grid (GridDomain): Lattice of the domain Ω.
        region (object | None): The neighborhood U (a ProductDomain or any
            object with `contains`); None uses the whole grid.
        options (SolverOptions | None): Solver settings.
        label (str): Neighborhood id recorded on the report.
        factorize (bool): Allow the product factorization when available.

    Returns:
        LambdaReport: λ, residual, solver and grid metadata.

    Raises:
        EmptyIntersectionError: If no lattice node lies in U ∩ Ω.
        SolverConvergenceError: If the eigensolve does not converge.
    """
    options = options or SolverOptions()
    try:
        support = grid.support_in(region, label=label)
    except EmptyMaskError as e:
        raise EmptyIntersectionError(str(e))
    return lambda_on_support(support, options, factorize=factorize)


def lambda_on_support(
    support: Support, options: SolverOptions, *, factorize: bool = True
) -> LambdaReport:
    q = assemble_q(support, factorize=factorize)
    result = _solve(q, options)
    domain = support.grid.domain
    report = LambdaReport(
        lambda_value=result.value,
        residual=result.residual,
        solver=result.solver,
        h=support.grid.h,
        neighborhood=support.label,
        dofs=q.dof_count,
        domain=str(getattr(domain, "name", "")),
    )
    logging.debug(
        f"[spectral] lambda({support.label}) = {report.lambda_value:.10g} "
        f"dofs={report.dofs} solver={report.solver}"
    )
    return report
# :: FeatureEnd | name=lambda_estimate | outcome=ok


def rayleigh_quotient(f: FormField01 | SeparableForm01, q: QOperator | None = None) -> float:
    norm = f.norm_sq()
    if norm == 0.0:
        raise ZeroFormError("Rayleigh quotient of the zero form")
    product = q if isinstance(q, ProductQOperator) else None
    return q_value(f, product) / norm


# :: FeatureStart | name=compactness_probe
def compactness_probe(
    forms: Sequence[FormField01],
    epsilon: float,
    *,
    family_id: str = "",
    labels: Sequence[str] | None = None,
    supports: Sequence[Support | None] | None = None,
) -> ProbeReport:
    """
    Least D with ‖g‖² <= ε(‖∂̄g‖² + ‖∂̄*g‖²) + D‖g‖²₋₁ on every form.

    Args:
        forms (Sequence[FormField01]): Nonzero forms.
        epsilon (float): Positive ε.
        family_id (str): Name recorded on the report.
        labels (Sequence[str] | None): Per-form ledger labels.
        supports (Sequence[Support | None] | None): Masks for the -1 norm
            solve; defaults to each form's grid mask.

    Raises:
        ZeroFormError: If a form vanishes.
    """
    if not epsilon > 0.0:
        raise SpectralError("epsilon must be positive")
    labels = labels or [f"g{i}" for i in range(len(forms))]
    supports = supports or [None] * len(forms)
    ledger: list[ProbeLedgerEntry] = []
    d_min = 0.0
    for form, label, support in zip(forms, labels, supports):
        norm = form.norm_sq()
        if norm == 0.0:
            raise ZeroFormError(f"form {label!r} is zero")
        q = q_value(form)
        minus1 = sobolev_minus1(form, support)
        entry = ProbeLedgerEntry(label=label, norm_sq=norm, q=q, minus1_sq=minus1)
        ledger.append(entry)
        excess = max(0.0, norm - epsilon * q)
        if excess > 0.0:
            d_min = max(d_min, excess / minus1)
    logging.debug(f"[spectral] probe {family_id!r} eps={epsilon:.6g} d_min={d_min:.6g}")
    return ProbeReport(epsilon=epsilon, d_min=d_min, family_id=family_id, ledger=tuple(ledger))
# :: FeatureEnd | name=compactness_probe | outcome=ok


__all__ = [
    "AssembledQOperator",
    "DENSE_LIMIT",
    "EigenPair",
    "EmptyIntersectionError",
    "ProductQOperator",
    "SizeLimitError",
    "SolverConvergenceError",
    "SpectralError",
    "ZeroFormError",
    "compactness_probe",
    "lambda_estimate",
    "lambda_on_support",
    "lowest_pair_dense",
    "lowest_pair_iterative",
    "rayleigh_quotient",
    "smallest_eig_dense",
    "smallest_eig_iterative",
]

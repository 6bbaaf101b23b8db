from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, TypeAlias

import numpy as np
from scipy.special import jn_zeros

from dbar_lab.geometry import build_grid, builtin_domains, polydisc, siegel_model, witness_neighborhood
from dbar_lab.internal.orchestration import Task, TaskRunner
from dbar_lab.internal.sampling import random_interior_forms
from dbar_lab.internal.util.toml import dump_toml_to_file, load_toml_file
from dbar_lab.mkh import (
    RefinementLevel,
    builtin_weights,
    mkh_check_scaled,
    validate_weight,
    violations_shrink,
)
from dbar_lab.model.config import ExperimentConfig, ShrinkSettings
from dbar_lab.model.fields import SeparableForm01
from dbar_lab.model.options import ConfigError
from dbar_lab.model.regions import DomainLike, PlanarRegion, ProductDomain
from dbar_lab.model.reports import ExperimentRow, LambdaReport, WitnessCertificate
from dbar_lab.spectral import compactness_probe, lambda_estimate, lambda_on_support, rayleigh_quotient
from dbar_lab.witness import (
    CertificateStore,
    bump_constant,
    default_bump,
    grid_witness_spec,
    sample_witness,
    witness_quotient,
    witness_support,
)

# λ transfer is exact up to solver noise
TRANSFER_SLACK = 1e-8
BOUND_SLACK = 1e-3
PROBE_SLACK = 1e-9
# lowest ∂̄* energy on the z1 disc of radius 1/2, the limit of V_j: (1/4) j0,1^2 / (1/2)^2
DISC_LAMBDA_LIMIT = float(jn_zeros(0, 1)[0]) ** 2


@dataclass(frozen=True, slots=True)
class ExperimentOutcome:
    """What a runner hands back to the report writer."""

    rows: tuple[ExperimentRow, ...]
    ledger: Mapping[str, Any] = field(default_factory=dict)
    certificates: tuple[WitnessCertificate, ...] = ()
    failures: tuple[str, ...] = ()


ExperimentRunner: TypeAlias = Callable[..., ExperimentOutcome]


def resolve_domain(config: ExperimentConfig) -> DomainLike:
    """
    Raises:
        ConfigError: If `experiment.domain` names no built-in or configured domain.
    """
    known: dict[str, DomainLike] = dict(builtin_domains())
    known.update(config.domains)
    if config.domain not in known:
        raise ConfigError(f"unknown domain {config.domain!r}", key="experiment.domain")
    return known[config.domain]


def _product_domain(config: ExperimentConfig) -> ProductDomain:
    domain = resolve_domain(config)
    if not isinstance(domain, ProductDomain):
        raise ConfigError(
            f"{config.kind.value} needs a product domain, got {config.domain!r}", key="experiment.domain"
        )
    return domain


def _runner(config: ExperimentConfig) -> TaskRunner[Any]:
    return TaskRunner(experiment=config.kind.value, threads=config.threads)


# --------------------------------------------------------------------------- #
# disc-example
# --------------------------------------------------------------------------- #


def _disc_grid_task(config: ExperimentConfig, domain: ProductDomain, j: int, h: float) -> dict[str, Any]:
    grid = build_grid(domain, h, window=witness_neighborhood(j))
    support = witness_support(grid, j)
    report = lambda_on_support(support, config.solver)
    spec = grid_witness_spec(j, config.disc_example.grid_alpha_scale)
    return {
        "j": j,
        "h": h,
        "report": report,
        "grid_quotient": rayleigh_quotient(sample_witness(spec, support)),
    }


def disc_cross_check(config: ExperimentConfig, domain: ProductDomain, j: int) -> dict[str, Any]:
    """
    Grid quotient of the sampled witness against the quadrature R_j at the same alpha.

    The lattice has h = 1 / (cross_check_cells * j), so it resolves the
    z2-scale 1/j and the pole at alpha = grid_alpha_scale / j alike.
    """
    settings = config.disc_example
    h = 1.0 / (settings.cross_check_cells * j)
    grid = build_grid(domain, h, window=witness_neighborhood(j))
    support = witness_support(grid, j)
    spec = grid_witness_spec(j, settings.grid_alpha_scale)
    grid_q = rayleigh_quotient(sample_witness(spec, support))
    quad_q = witness_quotient(spec, config.quadrature.tol, max_cells=config.quadrature.max_cells)
    return {
        "j": j,
        "h": h,
        "alpha": settings.grid_alpha_scale / j,
        "dofs": support.dof_count,
        "grid_quotient": grid_q,
        "quadrature_quotient": quad_q,
        "relative_gap": abs(grid_q - quad_q) / quad_q,
    }


# :: FeatureStart | name=disc_example
def run_disc_example(*, config: ExperimentConfig) -> ExperimentOutcome:
    """
    Certified witnesses for each j, then λ on V_j against the grid witness.

    λ_h(V_j) stays below the z1-disc limit DISC_LAMBDA_LIMIT up to
    lambda_slack * h; the spread over j is recorded, not enforced.
    """
    settings = config.disc_example
    domain = _product_domain(config)
    quad = config.quadrature
    store = CertificateStore(settings.certificates).load()
    c_f = bump_constant(default_bump())

    cert_tasks = [
        Task(
            f"certify j={j}",
            partial(store.certificate, j, quad.tol, constants=config.model, max_cells=quad.max_cells),
        )
        for j in settings.j
    ]
    certs: list[WitnessCertificate] = _runner(config).run(cert_tasks)
    for cert in certs:
        store.put(cert)
    store.save()

    rows: list[ExperimentRow] = []
    failures: list[str] = []
    for cert in certs:
        passed = cert.inequality_holds and cert.quotient_within_bound
        if not passed:
            failures.append(f"witness bound violated for j={cert.j}: R_j={cert.r_quotient} bound={cert.bound}")
        rows.append(
            ExperimentRow(
                experiment="disc-example",
                domain=domain.name,
                neighborhood=f"V_{cert.j}",
                witness_bound=cert.bound,
                alpha=cert.alpha_text(),
                r_quotient=cert.r_quotient,
                passed=passed,
            )
        )

    cross_tasks = [Task(f"cross-check j={j}", partial(disc_cross_check, config, domain, j)) for j in settings.j]
    cross_checks: list[dict[str, Any]] = _runner(config).run(cross_tasks)
    for check in cross_checks:
        close = check["relative_gap"] <= settings.cross_check_tol
        if not close:
            failures.append(
                f"grid and quadrature quotients differ by {check['relative_gap']:.1%} "
                f"for j={check['j']} h={check['h']!r}"
            )
        rows.append(
            ExperimentRow(
                experiment="disc-example",
                domain=domain.name,
                neighborhood=f"V_{check['j']}",
                h=check["h"],
                dofs=check["dofs"],
                alpha=repr(check["alpha"]),
                r_quotient=check["grid_quotient"],
                passed=close,
            )
        )

    grid_tasks = [
        Task(f"grid j={j} h={h!r}", partial(_disc_grid_task, config, domain, j, h))
        for j in settings.j
        for h in config.h
    ]
    checks: list[dict[str, Any]] = _runner(config).run(grid_tasks)
    ledger_checks = []
    for check in checks:
        report: LambdaReport = check["report"]
        transfer = report.lambda_value <= check["grid_quotient"] + TRANSFER_SLACK
        ceiling = DISC_LAMBDA_LIMIT + settings.lambda_slack * report.h
        bounded = report.lambda_value <= ceiling
        if not transfer:
            failures.append(f"lambda exceeds the grid witness quotient for j={check['j']} h={check['h']!r}")
        if not bounded:
            failures.append(
                f"lambda={report.lambda_value:.6g} exceeds {ceiling:.6g} for j={check['j']} h={check['h']!r}"
            )
        rows.append(
            ExperimentRow(
                experiment="disc-example",
                domain=domain.name,
                neighborhood=report.neighborhood,
                h=report.h,
                dofs=report.dofs,
                lambda_value=report.lambda_value,
                residual=report.residual,
                alpha=repr(settings.grid_alpha_scale / check["j"]),
                r_quotient=check["grid_quotient"],
                passed=transfer and bounded,
            )
        )
        ledger_checks.append(
            {"j": check["j"], "h": check["h"], "grid_quotient": check["grid_quotient"], "lambda": report.lambda_value}
        )

    finest = min(config.h)
    lambdas = [c["report"].lambda_value for c in checks if c["h"] == finest]
    quotients = [c.r_quotient for c in certs if c.r_quotient is not None]
    ledger = {
        "c_f": c_f,
        "cross_checks": cross_checks,
        "grid_checks": ledger_checks,
        "lambda_limit": DISC_LAMBDA_LIMIT,
        "lambda_trend": {
            "h": finest,
            "lambda": lambdas,
            "ratio": max(lambdas) / min(lambdas) if lambdas else None,
        },
        "sup_quotient": max(quotients, default=None),
        "sup_bound": 0.25 + c_f + BOUND_SLACK,
    }
    if quotients and max(quotients) > 0.25 + c_f + BOUND_SLACK:
        failures.append("sup of R_j exceeds 1/4 + C_f")
    logging.info(f"[experiments] disc-example finished: {len(rows)} rows, {len(failures)} failures")
    return ExperimentOutcome(tuple(rows), ledger, tuple(certs), tuple(failures))
# :: FeatureEnd | name=disc_example | outcome=ok


# --------------------------------------------------------------------------- #
# shrink-study
# --------------------------------------------------------------------------- #


def _growth_regression(settings: ShrinkSettings, radii: list[float], ratios: list[float]) -> list[str]:
    """
    Compares growth ratios with the stored baseline, writing it on the first run.

    Returns:
        list[str]: Failure messages; empty when the store was just written or
        every ratio is within regression_tol of its baseline.
    """
    if settings.regression is None:
        return []
    path = Path(settings.regression)
    recorded = {"radii": radii, "cells_per_radius": settings.cells_per_radius, "half_width": settings.half_width}
    if not path.exists():
        dump_toml_to_file({**recorded, "growth_ratios": ratios}, path)
        logging.info(f"[experiments] recorded {len(ratios)} growth ratios in {path}")
        return []
    baseline = load_toml_file(path)
    if any(baseline.get(key) != value for key, value in recorded.items()):
        return [f"growth-ratio store {path} was recorded for other shrink-study settings"]
    stored = [float(r) for r in baseline.get("growth_ratios", ())]
    if len(stored) != len(ratios):
        return [f"growth-ratio store {path} holds {len(stored)} ratios, run produced {len(ratios)}"]
    return [
        f"growth ratio {k} drifted: {now:.9g} against stored {then:.9g}"
        for k, (now, then) in enumerate(zip(ratios, stored))
        if not math.isclose(now, then, rel_tol=settings.regression_tol)
    ]


def run_shrink_study(*, config: ExperimentConfig) -> ExperimentOutcome:
    """λ on polydiscs of radius r around the origin, at h = r / cells_per_radius."""
    settings = config.shrink_study
    domain = siegel_model(settings.half_width)

    def one(radius: float) -> LambdaReport:
        window = polydisc(radius, name=f"P({radius!r})")
        grid = build_grid(domain, radius / settings.cells_per_radius, window=window)
        return lambda_estimate(grid, window, config.solver, label=window.name)

    radii = sorted(settings.radii, reverse=True)
    reports = _runner(config).run([Task(f"r={r!r}", partial(one, r)) for r in radii])
    values = [r.lambda_value for r in reports]
    increasing = all(b > a for a, b in zip(values, values[1:]))
    rows = tuple(
        ExperimentRow(
            experiment="shrink-study",
            domain=domain.name,
            neighborhood=r.neighborhood,
            h=r.h,
            dofs=r.dofs,
            lambda_value=r.lambda_value,
            residual=r.residual,
            passed=increasing,
        )
        for r in reports
    )
    ratios = [b / a for a, b in zip(values, values[1:])]
    ledger = {"radii": radii, "lambda": values, "growth_ratios": ratios}
    failures = [] if increasing else ["lambda is not strictly increasing as the neighborhood shrinks"]
    failures += _growth_regression(settings, radii, ratios)
    return ExperimentOutcome(rows, ledger, (), tuple(failures))


# --------------------------------------------------------------------------- #
# mkh-suite
# --------------------------------------------------------------------------- #


def _mkh_level(config: ExperimentConfig, domain: ProductDomain, level: int, h: float) -> dict[str, Any]:
    settings = config.mkh_suite
    weight = builtin_weights(settings.radius_sq, settings.delta)[settings.weight]
    window = polydisc(settings.window, name=f"P({settings.window!r})")
    grid = build_grid(domain, h, window=window)
    support = grid.support_in(window)
    pts = support.points()
    validate_weight(weight, pts[:, 0] + 1j * pts[:, 1], pts[:, 2] + 1j * pts[:, 3])

    rng = np.random.default_rng([config.seed, level])
    forms = random_interior_forms(support, settings.count, rng, layers=settings.erosion)
    reports = tuple(mkh_check_scaled(weight, u, grid, settings.slack_constant) for u in forms)

    spec = grid_witness_spec(2, config.disc_example.grid_alpha_scale)
    phi = sample_witness(spec, witness_support(grid, 2))
    witness_report = mkh_check_scaled(weight, phi, grid, settings.slack_constant)
    return {
        "level": RefinementLevel(h, reports),
        "witness": witness_report,
        "dofs": support.dof_count,
        "support": support.label,
        "weight": weight,
    }


def run_mkh_suite(*, config: ExperimentConfig) -> ExperimentOutcome:
    settings = config.mkh_suite
    domain = _product_domain(config)
    tasks = [
        Task(f"h={h!r}", partial(_mkh_level, config, domain, i, h)) for i, h in enumerate(settings.h)
    ]
    results: list[dict[str, Any]] = _runner(config).run(tasks)
    rows: list[ExperimentRow] = []
    failures: list[str] = []
    ledger_levels = []
    for result in results:
        level: RefinementLevel = result["level"]
        witness = result["witness"]
        rows.append(
            ExperimentRow(
                experiment="mkh-suite",
                domain=domain.name,
                neighborhood=f"{result['weight'].name}:{result['support']}",
                h=level.h,
                dofs=result["dofs"],
                passed=level.failures == 0,
            )
        )
        rows.append(
            ExperimentRow(
                experiment="mkh-suite",
                domain=domain.name,
                neighborhood=f"{result['weight'].name}:phi_2",
                h=level.h,
                dofs=result["dofs"],
                passed=witness.passed,
            )
        )
        if not witness.passed:
            failures.append(f"witness form fails the weighted inequality at h={level.h!r}")
        ledger_levels.append(
            {
                "h": level.h,
                "weight": result["weight"].describe(),
                "failures": level.failures,
                "max_violation": level.max_violation,
                "witness": witness.to_mapping(),
            }
        )
    levels = [r["level"] for r in results]
    if not violations_shrink(levels):
        failures.append("weighted inequality violations grow under refinement")
    return ExperimentOutcome(tuple(rows), {"levels": ledger_levels}, (), tuple(failures))


# --------------------------------------------------------------------------- #
# probe
# --------------------------------------------------------------------------- #


def run_probe(*, config: ExperimentConfig) -> ExperimentOutcome:
    """
    Compactness probe on the grid witness family.

    ε = epsilon_factor / M with M = max_j R_j, the quadrature quotients of the
    sampled witnesses. The least D is also recomputed at 2ε, where it may not
    grow.
    """
    settings = config.probe
    quad = config.quadrature
    domain = _product_domain(config)
    h = config.h[0]
    grid = build_grid(domain, h, window=witness_neighborhood(min(settings.j)))
    forms, labels, grid_quotients, r_quotients, alphas, dofs = [], [], [], [], [], []
    for j in settings.j:
        support = witness_support(grid, j)
        spec = grid_witness_spec(j, settings.alpha_scale)
        phi = sample_witness(spec, support)
        grid_quotients.append(rayleigh_quotient(phi))
        r_quotients.append(witness_quotient(spec, quad.tol, max_cells=quad.max_cells))
        forms.append(phi.to_form() if isinstance(phi, SeparableForm01) else phi)
        labels.append(support.label)
        alphas.append(settings.alpha_scale / j)
        dofs.append(support.dof_count)

    m_quotient = max(r_quotients)
    epsilon = settings.epsilon_factor / m_quotient
    report = compactness_probe(forms, epsilon, family_id="witness", labels=labels)
    doubled = compactness_probe(forms, 2.0 * epsilon, family_id="witness", labels=labels)

    failures: list[str] = []
    if not math.isfinite(report.d_min):
        failures.append("compactness probe returned an infinite constant")
    if not report.holds(PROBE_SLACK):
        failures.append("compactness estimate fails on the ledger")
    if doubled.d_min > report.d_min:
        failures.append("least constant grew when epsilon was doubled")
    rows = tuple(
        ExperimentRow(
            experiment="probe",
            domain=domain.name,
            neighborhood=entry.label,
            h=h,
            dofs=n,
            r_quotient=r,
            alpha=repr(alpha),
            passed=entry.slack(report.epsilon, report.d_min) >= -PROBE_SLACK,
        )
        for entry, r, alpha, n in zip(report.ledger, r_quotients, alphas, dofs)
    )
    ledger = {
        "m_quotient": m_quotient,
        "r_quotients": r_quotients,
        "grid_quotients": grid_quotients,
        "probe": report.to_mapping(),
        "probe_doubled": doubled.to_mapping(),
    }
    return ExperimentOutcome(rows, ledger, (), tuple(failures))


# --------------------------------------------------------------------------- #
# anchors
# --------------------------------------------------------------------------- #


def run_anchors(*, config: ExperimentConfig) -> ExperimentOutcome:
    """λ on the cube (0, L)^4 against the continuum value π²/L²."""
    settings = config.anchors
    side = settings.side
    face = PlanarRegion.box((0.0, side), (0.0, side))
    cube = ProductDomain(factor1=face, factor2=face, name=f"cube({side!r})")
    exact = math.pi**2 / side**2

    def one(h: float) -> LambdaReport:
        return lambda_estimate(build_grid(cube, h), None, config.solver, label="interior")

    hs = sorted(settings.h, reverse=True)
    reports = _runner(config).run([Task(f"h={h!r}", partial(one, h)) for h in hs])
    errors = [abs(r.lambda_value - exact) / exact for r in reports]
    failures: list[str] = []
    if errors[0] > settings.tolerance:
        failures.append(f"coarsest anchor error {errors[0]:.3g} exceeds {settings.tolerance}")
    if not all(b < a for a, b in zip(errors, errors[1:])):
        failures.append("anchor error is not strictly decreasing in h")
    rows = tuple(
        ExperimentRow(
            experiment="anchors",
            domain=cube.name,
            neighborhood=r.neighborhood,
            h=r.h,
            dofs=r.dofs,
            lambda_value=r.lambda_value,
            residual=r.residual,
            passed=e <= settings.tolerance,
        )
        for r, e in zip(reports, errors)
    )
    ledger = {"exact": exact, "h": hs, "relative_errors": errors}
    return ExperimentOutcome(rows, ledger, (), tuple(failures))


# Dictionary of experiment id to its runner
BUILTIN_EXPERIMENTS: dict[str, ExperimentRunner] = {
    "disc-example": run_disc_example,
    "shrink-study": run_shrink_study,
    "mkh-suite": run_mkh_suite,
    "probe": run_probe,
    "anchors": run_anchors,
}

"""Explicit rate certificates for the generalized averaged iteration.

Given the instance constants and the schedule moduli, the certificate
machinery produces three naturals-to-naturals functions:

* ``threshold``       how much coupling-series mass forces a residual dip,
* ``residual_rate``   a rate of convergence of ||x_n - T(x_n)|| to 0,
* ``step_rate``       a rate of convergence of ||x_{n+1} - x_n|| to 0,

plus a liminf modulus locating a residual dip inside any window.  All values
are exact integers; the only double-precision step is the evaluation of the
uniform-convexity modulus inside the threshold quotient, whose ceiling is
snap-guarded (see :func:`km_rates.moduli.ceil_int`).  Larger pointwise values
stay valid rates, so conservative upward rounding is always sound.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from .moduli import (
    LiminfModulus,
    RateFn,
    RateKind,
    UcModulus,
    ceil_int,
)
from .schedules import Family, Schedule, coupling_cap

_ZERO_CAUCHY = RateFn.constant(0, RateKind.CAUCHY_MODULUS, "modulus of an identically zero series")


class CertificateOverflow(RuntimeError):
    """Certificate arithmetic left the finite range (for example the convexity
    modulus underflowed to zero)."""


class FormulaTag(Enum):
    GENERAL = "general"
    FACTORED = "factored"
    HILBERT = "hilbert"
    INEXACT_KM = "inexact_km"
    CLASSICAL_KM = "classical_km"
    ANCHOR = "anchor"
    EXAMPLE1 = "example1"
    EXAMPLE2 = "example2"


@dataclass(frozen=True)
class InstanceConstants:
    """Integer instance bounds.

    ``start_bound`` dominates ||x-z|| and ||z||; ``dist_bound`` dominates
    ||x_n - z|| along the whole run and ``norm_bound`` dominates ||x_n||.
    """

    start_bound: int
    defect_sum_bound: int
    perturbation_sum_bound: int
    dist_bound: int
    norm_bound: int

    def __post_init__(self):
        if self.start_bound < 1:
            raise ValueError(f"start bound must be a positive integer, got {self.start_bound}")
        if self.defect_sum_bound < 0 or self.perturbation_sum_bound < 0:
            raise ValueError("series bounds must be nonnegative integers")
        expected_dist = self.start_bound * (1 + self.defect_sum_bound) + self.perturbation_sum_bound
        if self.dist_bound != expected_dist:
            raise ValueError(f"dist bound must equal {expected_dist}, got {self.dist_bound}")
        if self.norm_bound != self.dist_bound + self.start_bound:
            raise ValueError(
                f"norm bound must equal {self.dist_bound + self.start_bound}, got {self.norm_bound}"
            )

    @classmethod
    def from_bounds(cls, start_bound: int, defect_sum_bound: int,
                    perturbation_sum_bound: int) -> "InstanceConstants":
        dist = start_bound * (1 + defect_sum_bound) + perturbation_sum_bound
        return cls(start_bound, defect_sum_bound, perturbation_sum_bound, dist,
                   dist + start_bound)

    @property
    def threshold_numerator(self) -> int:
        """dist_bound + defect_sum_bound*start_bound + perturbation_sum_bound + 1."""
        return (self.dist_bound + self.defect_sum_bound * self.start_bound
                + self.perturbation_sum_bound + 1)

    def to_dict(self) -> dict:
        return {
            "start_bound": self.start_bound,
            "defect_sum_bound": self.defect_sum_bound,
            "perturbation_sum_bound": self.perturbation_sum_bound,
            "dist_bound": self.dist_bound,
            "norm_bound": self.norm_bound,
        }


def instance_constants(x, z, schedule: Schedule,
                       norm: Optional[Callable] = None) -> InstanceConstants:
    """Round max(||x-z||, ||z||) up to a positive integer and derive the rest."""
    if norm is None:
        norm = lambda v: float(np.linalg.norm(np.asarray(v, dtype=float)))
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    b = max(1, ceil_int(max(norm(x - z), norm(z))))
    return InstanceConstants.from_bounds(b, schedule.defect_sum_bound,
                                         schedule.perturbation_sum_bound)


def _guarded_quotient(numerator: int, denominator: float) -> int:
    if not denominator > 0.0:
        raise CertificateOverflow(
            f"convexity modulus evaluated to {denominator}; threshold undefined"
        )
    try:
        return ceil_int(numerator / denominator)
    except OverflowError as exc:
        raise CertificateOverflow(str(exc)) from None


def weight_threshold(constants: InstanceConstants, uc: UcModulus) -> RateFn:
    """k -> ceil( numerator*(k+1) / eta(1/(dist_bound*(k+1))) )."""
    num = constants.threshold_numerator
    m0 = constants.dist_bound

    def fn(k: int) -> int:
        return _guarded_quotient(num * (k + 1), uc.eval(1.0 / (m0 * (k + 1))))

    return RateFn(fn, RateKind.THRESHOLD, description="coupling-mass threshold (direct modulus)")


def weight_threshold_factored(constants: InstanceConstants, uc: UcModulus) -> RateFn:
    """k -> ceil( numerator*(k+1) / (2*eta_tilde(1/(dist_bound*(k+1)))) ).

    Needs the factorization eta(eps) = eps*eta_tilde(eps) with eta_tilde
    increasing; rejected otherwise.
    """
    if not uc.factored:
        raise ValueError(f"modulus {uc.name!r} carries no increasing factorization")
    num = constants.threshold_numerator
    m0 = constants.dist_bound

    def fn(k: int) -> int:
        return _guarded_quotient(num * (k + 1), 2.0 * uc.eval_tilde(1.0 / (m0 * (k + 1))))

    return RateFn(fn, RateKind.THRESHOLD, description="coupling-mass threshold (factored modulus)")


def hilbert_threshold(constants: InstanceConstants) -> RateFn:
    """Exact-integer Euclidean closed form 4*dist_bound*numerator*(k+1)^2."""
    num = constants.threshold_numerator
    m0 = constants.dist_bound
    return RateFn(
        lambda k: 4 * m0 * num * (k + 1) ** 2,
        RateKind.THRESHOLD,
        description="coupling-mass threshold (Euclidean closed form)",
    )


def select_threshold(constants: InstanceConstants, uc: UcModulus):
    """Pick the sharpest valid threshold form for the modulus at hand."""
    if uc.hilbert:
        return hilbert_threshold(constants), FormulaTag.HILBERT
    if uc.factored:
        return weight_threshold_factored(constants, uc), FormulaTag.FACTORED
    return weight_threshold(constants, uc), FormulaTag.GENERAL


def make_step_series_modulus(constants: InstanceConstants, defect_cauchy: RateFn,
                             perturbation_cauchy: RateFn) -> RateFn:
    """Cauchy modulus of sum_n 2*norm_bound*defect_n + 2*||r_n||, the series
    that dominates the residual increments:
    k -> max(defect_cauchy(4*norm_bound*(k+1)-1), perturbation_cauchy(4k+3))."""
    m = constants.norm_bound
    return RateFn(
        lambda k: max(defect_cauchy(4 * m * (k + 1) - 1), perturbation_cauchy(4 * k + 3)),
        RateKind.CAUCHY_MODULUS,
        description="modulus of the residual-increment series",
    )


def make_residual_rate(constants: InstanceConstants, threshold: RateFn,
                       weight_divergence: RateFn, defect_cauchy: RateFn,
                       perturbation_cauchy: RateFn) -> RateFn:
    """Rate of convergence of the operator residual:
    k -> weight_divergence(threshold(2k+1) + step_series_modulus(2k+1) + 1)."""
    inc = make_step_series_modulus(constants, defect_cauchy, perturbation_cauchy)
    return RateFn(
        lambda k: weight_divergence(threshold(2 * k + 1) + inc(2 * k + 1) + 1),
        RateKind.RATE_OF_CONVERGENCE,
        description="operator-residual rate",
        target="res_T",
    )


def make_step_rate(residual_rate: RateFn) -> RateFn:
    """Rate of convergence of successive displacements: k -> residual_rate(2k+1)."""
    return RateFn(
        lambda k: residual_rate(2 * k + 1),
        RateKind.RATE_OF_CONVERGENCE,
        description="step-displacement rate",
        target="res_step",
    )


def make_liminf_modulus(threshold: RateFn, weight_divergence: RateFn) -> LiminfModulus:
    """(k, L) -> weight_divergence(threshold(k) + L)."""
    return LiminfModulus(
        lambda k, L: weight_divergence(threshold(k) + L),
        description="residual dip-window modulus",
    )


@dataclass(frozen=True)
class Certificate:
    formula: FormulaTag
    constants: InstanceConstants
    threshold: RateFn
    residual_rate: RateFn
    step_rate: RateFn
    liminf_modulus: LiminfModulus
    step_series_modulus: RateFn
    alt_formula: Optional[FormulaTag] = None
    alt_residual_rate: Optional[RateFn] = None
    alt_step_rate: Optional[RateFn] = None
    liminf_extension: bool = False

    def table(self, k_max: int) -> List[dict]:
        return [
            {
                "k": k,
                "threshold": self.threshold(k),
                "residual_rate": self.residual_rate(k),
                "step_rate": self.step_rate(k),
            }
            for k in range(k_max + 1)
        ]

    def to_dict(self, k_max: int) -> dict:
        out = {
            "formula": self.formula.value,
            "constants": self.constants.to_dict(),
            "liminf_extension": self.liminf_extension,
            "table": self.table(k_max),
        }
        if self.alt_residual_rate is not None:
            out["alt_formula"] = self.alt_formula.value if self.alt_formula else None
            out["alt_table"] = [
                {"k": k, "residual_rate": self.alt_residual_rate(k),
                 "step_rate": self.alt_step_rate(k)}
                for k in range(k_max + 1)
            ]
        return out


def general_certificate(constants: InstanceConstants, schedule: Schedule,
                        uc: UcModulus, route: str = "auto") -> Certificate:
    """Certificate along the generic composition path.

    ``route`` forces a threshold form ("general", "factored", "hilbert");
    "auto" picks the sharpest valid one.  With a Euclidean modulus the
    integer closed-form threshold is used and the double-precision factored
    path is attached as a cross-checked alternate.
    """
    if route == "auto":
        threshold, tag = select_threshold(constants, uc)
    elif route == "general":
        threshold, tag = weight_threshold(constants, uc), FormulaTag.GENERAL
    elif route == "factored":
        threshold, tag = weight_threshold_factored(constants, uc), FormulaTag.FACTORED
    elif route == "hilbert":
        if not uc.hilbert:
            raise ValueError("the Euclidean closed form needs the Euclidean modulus")
        threshold, tag = hilbert_threshold(constants), FormulaTag.HILBERT
    else:
        raise ValueError(f"unknown threshold route {route!r}")
    residual = make_residual_rate(constants, threshold, schedule.weight_divergence,
                                  schedule.defect_cauchy, schedule.perturbation_cauchy)
    step = make_step_rate(residual)
    alt_residual = alt_step = alt_tag = None
    if tag is FormulaTag.HILBERT:
        alt_threshold = weight_threshold_factored(constants, uc)
        alt_residual = make_residual_rate(constants, alt_threshold,
                                          schedule.weight_divergence,
                                          schedule.defect_cauchy,
                                          schedule.perturbation_cauchy)
        alt_step = make_step_rate(alt_residual)
        alt_tag = FormulaTag.FACTORED
    return Certificate(
        formula=tag,
        constants=constants,
        threshold=threshold,
        residual_rate=residual,
        step_rate=step,
        liminf_modulus=make_liminf_modulus(threshold, schedule.weight_divergence),
        step_series_modulus=make_step_series_modulus(
            constants, schedule.defect_cauchy, schedule.perturbation_cauchy),
        alt_formula=alt_tag,
        alt_residual_rate=alt_residual,
        alt_step_rate=alt_step,
    )


def inexact_km_certificate(start_bound: int, perturbation_sum_bound: int,
                           weight_divergence: RateFn, perturbation_cauchy: RateFn,
                           uc: UcModulus,
                           tag: FormulaTag = FormulaTag.INEXACT_KM) -> Certificate:
    """Certificate for alpha_n = 1 - beta_n (vanishing defect).

    The coupling series degenerates to sum beta_n*(1-beta_n) and the residual
    rate collapses to
    k -> weight_divergence(threshold(2k+1) + perturbation_cauchy(8k+7) + 1).
    """
    constants = InstanceConstants.from_bounds(start_bound, 0, perturbation_sum_bound)
    threshold, _ = select_threshold(constants, uc)
    residual = make_residual_rate(constants, threshold, weight_divergence,
                                  _ZERO_CAUCHY, perturbation_cauchy)
    return Certificate(
        formula=tag,
        constants=constants,
        threshold=threshold,
        residual_rate=residual,
        step_rate=make_step_rate(residual),
        liminf_modulus=make_liminf_modulus(threshold, weight_divergence),
        step_series_modulus=make_step_series_modulus(constants, _ZERO_CAUCHY,
                                                     perturbation_cauchy),
        liminf_extension=True,
    )


def classical_km_certificate(start_bound: int, weight_divergence: RateFn,
                             uc: UcModulus) -> Certificate:
    """Inexact certificate with zero perturbation."""
    return inexact_km_certificate(start_bound, 0, weight_divergence, _ZERO_CAUCHY,
                                  uc, tag=FormulaTag.CLASSICAL_KM)


def example1_certificate(start_bound: int, lam: float, r_star_norm: float,
                         uc: UcModulus) -> Certificate:
    """Closed-form certificate for the constant-weight family.

    residual_rate(k) = cap*(threshold(2k+1) + 8c(k+1) + 1) and
    step_rate(k)     = cap*(threshold(4k+3) + 16c(k+1) + 1)
    with c = ceil(r_star_norm) and cap = ceil(1/(lam*(1-lam))); the generic
    composition with the same moduli is attached as an alternate and must
    agree exactly.
    """
    cap = coupling_cap(lam)
    c = ceil_int(float(r_star_norm))
    constants = InstanceConstants.from_bounds(start_bound, 0, 2 * c)
    threshold, _ = select_threshold(constants, uc)
    residual = RateFn(
        lambda k: cap * (threshold(2 * k + 1) + 8 * c * (k + 1) + 1),
        RateKind.RATE_OF_CONVERGENCE,
        description="operator-residual rate (constant-weight closed form)",
        target="res_T",
    )
    step = RateFn(
        lambda k: cap * (threshold(4 * k + 3) + 16 * c * (k + 1) + 1),
        RateKind.RATE_OF_CONVERGENCE,
        description="step-displacement rate (constant-weight closed form)",
        target="res_step",
    )
    divergence = RateFn.affine(cap, 0, RateKind.RATE_OF_DIVERGENCE,
                               f"constant-weight coupling divergence (cap={cap})")
    pert_cauchy = RateFn.affine(c, c, RateKind.CAUCHY_MODULUS,
                                "inverse-square perturbation modulus")
    alt_residual = make_residual_rate(constants, threshold, divergence,
                                      _ZERO_CAUCHY, pert_cauchy)
    return Certificate(
        formula=FormulaTag.EXAMPLE1,
        constants=constants,
        threshold=threshold,
        residual_rate=residual,
        step_rate=step,
        liminf_modulus=make_liminf_modulus(threshold, divergence),
        step_series_modulus=make_step_series_modulus(constants, _ZERO_CAUCHY, pert_cauchy),
        alt_formula=FormulaTag.INEXACT_KM,
        alt_residual_rate=alt_residual,
        alt_step_rate=make_step_rate(alt_residual),
        liminf_extension=True,
    )


def example2_certificate(start_bound: int, lam: float, J: int, r_star_norm: float,
                         uc: UcModulus) -> Certificate:
    """Closed-form certificate for the shrinking-weight family.

    residual_rate(k) = cap*threshold(2k+1) + 16*cap*(2b+c)*(k+1) + 3*cap - 1
    step_rate(k)     = cap*threshold(4k+3) + 32*cap*(2b+c)*(k+1) + 3*cap - 1.
    """
    if J < 2:
        raise ValueError(f"defect decay offset must be at least 2, got {J}")
    hi = (J * J - 1.0) / (J * J)
    if not 0.0 < lam < hi:
        raise ValueError(f"averaging weight must lie in (0, {hi}) for this family, got {lam}")
    cap = coupling_cap(lam)
    c = ceil_int(float(r_star_norm))
    b = start_bound
    constants = InstanceConstants.from_bounds(b, 2, 2 * c)
    threshold, _ = select_threshold(constants, uc)
    residual = RateFn(
        lambda k: cap * threshold(2 * k + 1) + 16 * cap * (2 * b + c) * (k + 1) + 3 * cap - 1,
        RateKind.RATE_OF_CONVERGENCE,
        description="operator-residual rate (shrinking-weight closed form)",
        target="res_T",
    )
    step = RateFn(
        lambda k: cap * threshold(4 * k + 3) + 32 * cap * (2 * b + c) * (k + 1) + 3 * cap - 1,
        RateKind.RATE_OF_CONVERGENCE,
        description="step-displacement rate (shrinking-weight closed form)",
        target="res_step",
    )
    divergence = RateFn.affine(cap, 2 * cap - 1, RateKind.RATE_OF_DIVERGENCE,
                               f"shrinking-weight coupling divergence (cap={cap})")
    defect_cauchy = RateFn.affine(1, 1, RateKind.CAUCHY_MODULUS,
                                  "inverse-square defect modulus")
    pert_cauchy = RateFn.affine(c, c, RateKind.CAUCHY_MODULUS,
                                "inverse-square perturbation modulus")
    alt_residual = make_residual_rate(constants, threshold, divergence,
                                      defect_cauchy, pert_cauchy)
    return Certificate(
        formula=FormulaTag.EXAMPLE2,
        constants=constants,
        threshold=threshold,
        residual_rate=residual,
        step_rate=step,
        liminf_modulus=make_liminf_modulus(threshold, divergence),
        step_series_modulus=make_step_series_modulus(constants, defect_cauchy, pert_cauchy),
        alt_formula=FormulaTag.GENERAL,
        alt_residual_rate=alt_residual,
        alt_step_rate=make_step_rate(alt_residual),
        liminf_extension=True,
    )


def certificate_for_schedule(schedule: Schedule, constants: InstanceConstants,
                             uc: UcModulus, r_star_norm: float = 0.0,
                             lam: Optional[float] = None,
                             J: Optional[int] = None) -> Certificate:
    """Family-aware certificate selection used by the CLI auto mode."""
    if schedule.family is Family.EXAMPLE1 and lam is not None:
        return example1_certificate(constants.start_bound, lam, r_star_norm, uc)
    if schedule.family is Family.EXAMPLE2 and lam is not None and J is not None:
        return example2_certificate(constants.start_bound, lam, J, r_star_norm, uc)
    if schedule.family in (Family.INEXACT_KM, Family.CLASSICAL_KM):
        tag = (FormulaTag.CLASSICAL_KM if schedule.family is Family.CLASSICAL_KM
               else FormulaTag.INEXACT_KM)
        return inexact_km_certificate(constants.start_bound,
                                      constants.perturbation_sum_bound,
                                      schedule.weight_divergence,
                                      schedule.perturbation_cauchy, uc, tag=tag)
    return general_certificate(constants, schedule, uc)

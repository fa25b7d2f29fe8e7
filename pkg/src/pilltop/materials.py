"""Pointwise material model: phase-interpolated diffusivity, double-well
potential and the linear excipient mixture for the dissolution rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Inconsistent material configuration (shape/length mismatches)."""


@dataclass(frozen=True)
class PhysicsConstants:
    """Solver constants, independent of the excipients and the phase.

    Defaults are the published non-dimensional set.  Note that the shipped
    run configs override the interface lengths (eps_t, mu) and D_solvent
    with mesh-calibrated values; see the project README.
    """

    D_solvent: float = 1e-6
    D_solid: float = 5e-11
    C_sat: float = 1.0
    rho_s: float = 5.0
    eps_t: float = 1e-4
    W: float = 140.0
    M_phi: float = 2e-3
    mu: float = 1e-4

    def __post_init__(self):
        for name in ("D_solvent", "D_solid", "C_sat", "rho_s", "eps_t",
                     "W", "M_phi", "mu"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")
        if self.D_solid > 1e-2 * self.D_solvent:
            raise ConfigurationError(
                "D_solid must be << D_solvent (at most 1e-2 * D_solvent)"
            )


@dataclass(frozen=True)
class ExcipientLibrary:
    """Dissolution rate constant per excipient, plus display metadata."""

    rates: np.ndarray
    names: tuple = ()
    colors: tuple = ()

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        object.__setattr__(self, "rates", rates)
        if rates.ndim != 1 or rates.size < 1:
            raise ConfigurationError("library needs at least one material")
        if np.any(rates < 0):
            raise ConfigurationError("dissolution rates must be >= 0")
        names = tuple(self.names) if self.names else tuple(
            f"material_{i}" for i in range(rates.size))
        colors = tuple(self.colors) if self.colors else ("",) * rates.size
        if len(names) != rates.size or len(colors) != rates.size:
            raise ConfigurationError("names/colors must match the rate count")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "colors", colors)

    @property
    def n_materials(self) -> int:
        return self.rates.size


def default_library() -> ExcipientLibrary:
    """The published five-excipient set (rates in units of 1e-4)."""
    return ExcipientLibrary(
        rates=np.array([0.1, 0.5, 1.0, 5.0, 0.0]) * 1e-4,
        names=("pink", "blue", "green", "yellow", "white"),
        colors=("#FF2FA3", "#00C2FF", "#8BE000", "#FFC700", "#FFFFFF"),
    )


def smooth_step(phi):
    """Quintic interpolation h(phi) = phi^3 (10 - 15 phi + 6 phi^2)."""
    phi = np.asarray(phi, dtype=float)
    return phi ** 3 * (10.0 - 15.0 * phi + 6.0 * phi * phi)


def smooth_step_deriv(phi):
    """h'(phi) = 30 phi^2 (1 - phi)^2."""
    phi = np.asarray(phi, dtype=float)
    return 30.0 * phi * phi * (1.0 - phi) ** 2


def diffusivity(phi, constants: PhysicsConstants):
    """Phase-interpolated diffusion coefficient D(phi)."""
    return constants.D_solvent + (constants.D_solid - constants.D_solvent) \
        * smooth_step(phi)


def diffusivity_deriv(phi, constants: PhysicsConstants):
    return (constants.D_solid - constants.D_solvent) * smooth_step_deriv(phi)


def dissolution_rate(gamma, library: ExcipientLibrary):
    """Linear mixture rule k = sum_s gamma_s k^(s).

    `gamma` may be a single fraction vector (S,) or a batch (n, S).
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape[-1] != library.n_materials:
        raise ConfigurationError(
            f"gamma has {gamma.shape[-1]} components but the library has "
            f"{library.n_materials} materials"
        )
    return gamma @ library.rates


def potential_derivative(phi, W):
    """psi'(phi) for the double well psi = W phi^2 (1-phi)^2."""
    phi = np.asarray(phi, dtype=float)
    return 2.0 * W * phi * (1.0 - phi) * (1.0 - 2.0 * phi)


def potential_second_derivative(phi, W):
    """psi''(phi) = 2W (1 - 6 phi + 6 phi^2)."""
    phi = np.asarray(phi, dtype=float)
    return 2.0 * W * (1.0 - 6.0 * phi + 6.0 * phi * phi)

"""Coupled Allen-Cahn / Fickian diffusion solver on a structured bilinear
quad mesh.

State is (phi, C) at the nodes.  Each backward-Euler step solves the
nonlinear residual system with Newton-Raphson and a direct sparse
factorization.  Assembly is vectorized over elements with a fixed
accumulation order, so repeated runs are bitwise reproducible.

Residual convention (time step n -> n+1, everything implicit):

    R_phi = M (phi+ - phi)/dt + K_phi phi+ + F_phi(phi+, C+)
    R_C   = M (C+   - C)/dt   + K_c(phi+) C+ - F_c(phi+, C+)

with F_phi carrying the double-well derivative and the dissolution
forcing (1/rho_s) k (C_sat - C)|grad phi|, and F_c the matching solute
source k (C_sat - C)|grad phi|.  Dissolution therefore always moves mass
from the phase field into the concentration field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import materials
from .materials import PhysicsConstants

# |grad phi| is smoothed as sqrt(grad.grad + GRAD_SMOOTHING^2) so the
# tangent stays defined where the field is flat.
GRAD_SMOOTHING = 1e-8

# 2x2 Gauss rule on [-1,1]^2: exact for products of bilinears.
_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
GAUSS_WEIGHTS = np.ones(4)


class SolverError(RuntimeError):
    """Base class for forward-solver failures."""


class SolverDivergenceError(SolverError):
    """Non-finite values appeared during assembly."""

    def __init__(self, message, element=None, field_name=None):
        super().__init__(message)
        self.element = element
        self.field_name = field_name


class SingularJacobianError(SolverError):
    """The tangent matrix could not be factorized."""


class NonConvergenceError(SolverError):
    """Newton failed to reach tolerance within the iteration cap."""

    def __init__(self, message, step=None, residual_norm=None):
        super().__init__(message)
        self.step = step
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class StructuredMesh:
    nx: int
    ny: int
    Lx: float
    Ly: float
    nodes: np.ndarray          # (n_nodes, 2)
    conn: np.ndarray           # (n_elements, 4) counterclockwise
    boundary_nodes: np.ndarray  # sorted unique node ids on the domain boundary
    element_centers: np.ndarray  # (n_elements, 2)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]

    @property
    def element_volume(self) -> float:
        return (self.Lx / self.nx) * (self.Ly / self.ny)

    @property
    def element_volumes(self) -> np.ndarray:
        return np.full(self.n_elements, self.element_volume)


@dataclass
class StateFields:
    """Nodal phase and concentration at one time level."""

    phi: np.ndarray
    C: np.ndarray
    step: int = 0

    def copy(self) -> "StateFields":
        return StateFields(self.phi.copy(), self.C.copy(), self.step)


@dataclass(frozen=True)
class SolverSettings:
    dt: float
    n_steps: int
    newton_tol: float = 1e-8
    newton_abs_tol: float = 1e-12
    newton_max: int = 25
    max_halvings: int = 8

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")


def build_mesh(nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0) -> StructuredMesh:
    """Structured quad mesh with lexicographic node numbering (x fastest)."""
    if nx < 2 or ny < 2:
        raise ValueError("need at least 2 elements in each direction")
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    ei, ej = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ei, ej = ei.ravel(), ej.ravel()
    n00 = ej * (nx + 1) + ei
    conn = np.column_stack([n00, n00 + 1, n00 + nx + 2, n00 + nx + 1])

    on_edge = ((nodes[:, 0] == 0.0) | (nodes[:, 0] == Lx)
               | (nodes[:, 1] == 0.0) | (nodes[:, 1] == Ly))
    boundary = np.nonzero(on_edge)[0]

    centers = nodes[conn].mean(axis=1)
    return StructuredMesh(nx=nx, ny=ny, Lx=float(Lx), Ly=float(Ly),
                          nodes=nodes, conn=conn, boundary_nodes=boundary,
                          element_centers=centers)


def _shape_tables():
    """Shape function values and reference-space derivatives at the Gauss
    points, node order (-1,-1), (1,-1), (1,1), (-1,1)."""
    xi = GAUSS_POINTS[:, 0][:, None]
    eta = GAUSS_POINTS[:, 1][:, None]
    signs_xi = np.array([-1.0, 1.0, 1.0, -1.0])
    signs_eta = np.array([-1.0, -1.0, 1.0, 1.0])
    N = 0.25 * (1.0 + signs_xi * xi) * (1.0 + signs_eta * eta)
    dN_dxi = 0.25 * signs_xi * (1.0 + signs_eta * eta) * np.ones_like(xi)
    dN_deta = 0.25 * signs_eta * (1.0 + signs_xi * xi)
    return N, dN_dxi, dN_deta


class DissolutionSystem:
    """Assembled operators for one mesh + constants pair.

    Holds everything that does not change between time steps: shape
    tables, the consistent mass matrix, scatter indices for the coupled
    sparse Jacobian and the Dirichlet bookkeeping for C on the boundary.
    """

    def __init__(self, mesh: StructuredMesh, constants: PhysicsConstants,
                 grad_smoothing: float = GRAD_SMOOTHING):
        self.mesh = mesh
        self.constants = constants
        self.grad_smoothing = grad_smoothing

        dx = mesh.Lx / mesh.nx
        dy = mesh.Ly / mesh.ny
        self.v_e = dx * dy
        self.wdet = self.v_e / 4.0  # gauss weight (=1) times |J|

        N, dN_dxi, dN_deta = _shape_tables()
        self.N = N                       # (4 gauss, 4 nodes)
        self.Bx = dN_dxi * (2.0 / dx)
        self.By = dN_deta * (2.0 / dy)

        # element matrices shared by all elements of the uniform mesh
        self.M_loc = self.wdet * np.einsum("gi,gj->ij", N, N)
        self.Klap_loc = self.wdet * (np.einsum("gi,gj->ij", self.Bx, self.Bx)
                                     + np.einsum("gi,gj->ij", self.By, self.By))
        c = constants
        self.Kphi_loc = c.M_phi * c.W * c.eps_t ** 2 * self.Klap_loc

        conn = mesh.conn
        n = mesh.n_nodes
        self.n_dof = 2 * n

        # scatter indices for the four 4x4 blocks of each element, order
        # (phi,phi), (phi,C), (C,phi), (C,C)
        rows_e = np.repeat(conn[:, :, None], 4, axis=2)
        cols_e = np.repeat(conn[:, None, :], 4, axis=1)
        blocks = []
        for roff, coff in ((0, 0), (0, n), (n, 0), (n, n)):
            blocks.append(((rows_e + roff).ravel(), (cols_e + coff).ravel()))
        self._rows = np.concatenate([b[0] for b in blocks])
        self._cols = np.concatenate([b[1] for b in blocks])

        self.constrained = mesh.boundary_nodes + n  # global C dofs on Gamma
        is_constrained = np.zeros(self.n_dof, dtype=bool)
        is_constrained[self.constrained] = True
        self._zero_mask = is_constrained[self._rows] | is_constrained[self._cols]
        # identity entries appended after zeroing rows/columns
        self._rows_full = np.concatenate([self._rows, self.constrained])
        self._cols_full = np.concatenate([self._cols, self.constrained])

        self.M = sp.coo_matrix(
            (np.tile(self.M_loc.ravel(), mesh.n_elements),
             (blocks[0][0], blocks[0][1])), shape=(n, n)).tocsr()

        # nodal weights for the solid mass: m = rho_s * sum_e mean(phi_e) v_e
        w = np.zeros(n)
        np.add.at(w, conn.ravel(), c.rho_s * self.v_e / 4.0)
        self.mass_weights = w

    # -- gauss-point fields ------------------------------------------------

    def _gauss(self, nodal: np.ndarray):
        """Values and gradients at the Gauss points, shapes (n_e, 4g)."""
        e = nodal[self.mesh.conn]
        return e, e @ self.N.T, e @ self.Bx.T, e @ self.By.T

    def _grad_norm(self, gx, gy):
        return np.sqrt(gx * gx + gy * gy + self.grad_smoothing ** 2)

    def source_forcing_gauss(self, phi, C, k_elem):
        """(S_source, f_diss) at every Gauss point, exactly as assembled."""
        c = self.constants
        _, _, pgx, pgy = self._gauss(phi)
        _, cg, _, _ = self._gauss(C)
        source = k_elem[:, None] * (c.C_sat - cg) * self._grad_norm(pgx, pgy)
        return source, -source / c.rho_s

    # -- residual and tangent ----------------------------------------------

    def residuals(self, phi_new, C_new, phi_old, C_old, k_elem, dt):
        """Nodal residual vectors (R_phi, R_C) with Dirichlet rows replaced."""
        c = self.constants
        mesh = self.mesh
        phi_e, pg, pgx, pgy = self._gauss(phi_new)
        C_e, cg, cgx, cgy = self._gauss(C_new)
        gnorm = self._grad_norm(pgx, pgy)
        source = k_elem[:, None] * (c.C_sat - cg) * gnorm

        if not (np.all(np.isfinite(pg)) and np.all(np.isfinite(cg))):
            bad = np.nonzero(~np.isfinite(pg).all(axis=1))[0]
            name = "phi"
            if bad.size == 0:
                bad = np.nonzero(~np.isfinite(cg).all(axis=1))[0]
                name = "C"
            raise SolverDivergenceError(
                f"non-finite {name} values in element {bad[0]}",
                element=int(bad[0]), field_name=name)

        dphi_e = phi_e - phi_old[mesh.conn]
        dC_e = C_e - C_old[mesh.conn]

        f_phi = self.wdet * (c.M_phi * materials.potential_derivative(pg, c.W)
                             + source / c.rho_s)
        r_phi_e = (dphi_e @ self.M_loc / dt + phi_e @ self.Kphi_loc
                   + f_phi @ self.N)

        D_g = materials.diffusivity(pg, c)
        r_C_e = (dC_e @ self.M_loc / dt
                 + self.wdet * ((D_g * cgx) @ self.Bx + (D_g * cgy) @ self.By)
                 - self.wdet * source @ self.N)

        R_phi = np.zeros(mesh.n_nodes)
        R_C = np.zeros(mesh.n_nodes)
        np.add.at(R_phi, mesh.conn.ravel(), r_phi_e.ravel())
        np.add.at(R_C, mesh.conn.ravel(), r_C_e.ravel())

        R_C[mesh.boundary_nodes] = C_new[mesh.boundary_nodes]
        return R_phi, R_C

    def jacobian(self, phi_new, C_new, k_elem, dt):
        """Exact coupled tangent d(R_phi,R_C)/d(phi_new,C_new) as CSC."""
        c = self.constants
        _, pg, pgx, pgy = self._gauss(phi_new)
        _, cg, cgx, cgy = self._gauss(C_new)
        gnorm = self._grad_norm(pgx, pgy)
        k_col = k_elem[:, None]
        csat_m_c = c.C_sat - cg

        # d|grad phi|/d phi_j at each gauss point: (n_e, 4g, 4n)
        dgn = (pgx[:, :, None] * self.Bx[None, :, :]
               + pgy[:, :, None] * self.By[None, :, :]) / gnorm[:, :, None]

        NN = np.einsum("gi,gj->gij", self.N, self.N)
        BB = (np.einsum("gi,gj->gij", self.Bx, self.Bx)
              + np.einsum("gi,gj->gij", self.By, self.By))

        psi2 = materials.potential_second_derivative(pg, c.W)
        # (phi,phi): mass/dt + interface stiffness + well curvature + forcing
        J_pp = (self.M_loc[None, :, :] / dt + self.Kphi_loc[None, :, :]
                + self.wdet * c.M_phi * np.einsum("eg,gij->eij", psi2, NN)
                + self.wdet / c.rho_s * np.einsum(
                    "eg,gi,egj->eij", k_col * csat_m_c, self.N, dgn))
        # (phi,C): forcing loses (C_sat - C)
        J_pc = -self.wdet / c.rho_s * np.einsum(
            "eg,gij->eij", k_col * gnorm, NN)

        D_g = materials.diffusivity(pg, c)
        dD_g = materials.diffusivity_deriv(pg, c)
        gradN_gradC = (cgx[:, :, None] * self.Bx[None, :, :]
                       + cgy[:, :, None] * self.By[None, :, :])
        # (C,phi): diffusivity variation minus source variation via |grad phi|
        J_cp = (self.wdet * np.einsum("eg,egi,gj->eij", dD_g, gradN_gradC, self.N)
                - self.wdet * np.einsum(
                    "eg,gi,egj->eij", k_col * csat_m_c, self.N, dgn))
        # (C,C): mass/dt + diffusion + source reaction
        J_cc = (self.M_loc[None, :, :] / dt
                + self.wdet * np.einsum("eg,gij->eij", D_g, BB)
                + self.wdet * np.einsum("eg,gij->eij", k_col * gnorm, NN))

        vals = np.concatenate([J_pp.ravel(), J_pc.ravel(),
                               J_cp.ravel(), J_cc.ravel()])
        vals[self._zero_mask] = 0.0
        vals = np.concatenate([vals, np.ones(self.constrained.size)])
        J = sp.coo_matrix((vals, (self._rows_full, self._cols_full)),
                          shape=(self.n_dof, self.n_dof))
        return J.tocsc()

    def factorize(self, phi_new, C_new, k_elem, dt):
        J = self.jacobian(phi_new, C_new, k_elem, dt)
        try:
            return spla.splu(J)
        except RuntimeError as exc:
            raise SingularJacobianError(
                f"tangent factorization failed: {exc}") from exc

    # -- time stepping -------------------------------------------------------

    def _residual_vector(self, phi, C, phi_old, C_old, k_elem, dt):
        R_phi, R_C = self.residuals(phi, C, phi_old, C_old, k_elem, dt)
        return np.concatenate([R_phi, R_C])

    def solve_timestep(self, state_prev: StateFields, k_elem,
                       settings: SolverSettings) -> StateFields:
        """One backward-Euler step via Newton with residual-norm halving."""
        mesh = self.mesh
        dt = settings.dt
        phi = state_prev.phi.copy()
        C = state_prev.C.copy()
        C[mesh.boundary_nodes] = 0.0
        phi_old, C_old = state_prev.phi, C.copy()

        R = self._residual_vector(phi, C, phi_old, C_old, k_elem, dt)
        norm0 = np.linalg.norm(R)
        norm = norm0
        target = max(settings.newton_abs_tol,
                     settings.newton_tol * (1.0 + norm0))
        if norm <= target:
            return StateFields(phi, C, state_prev.step + 1)

        for _ in range(settings.newton_max):
            lu = self.factorize(phi, C, k_elem, dt)
            delta = lu.solve(-R)
            delta[self.constrained] = 0.0
            d_phi, d_C = delta[:mesh.n_nodes], delta[mesh.n_nodes:]

            alpha = 1.0
            best = None
            for _ in range(settings.max_halvings + 1):
                phi_t = phi + alpha * d_phi
                C_t = C + alpha * d_C
                R_t = self._residual_vector(phi_t, C_t, phi_old, C_old,
                                            k_elem, dt)
                norm_t = np.linalg.norm(R_t)
                if best is None or norm_t < best[0]:
                    best = (norm_t, phi_t, C_t, R_t)
                if norm_t < norm:
                    break
                alpha *= 0.5
            norm, phi, C, R = best
            if norm <= target:
                state = StateFields(phi, C, state_prev.step + 1)
                state.C[mesh.boundary_nodes] = 0.0
                return state

        raise NonConvergenceError(
            f"Newton stalled at |R| = {norm:.3e} (target {target:.3e})",
            residual_norm=norm)

    def element_center_phi(self, phi) -> np.ndarray:
        """Bilinear value at element centers (the mean of the 4 nodes)."""
        return phi[self.mesh.conn].mean(axis=1)

    def solid_mass(self, phi) -> float:
        """rho_s * sum_e phi(center_e) v_e."""
        return float(self.mass_weights @ phi)

    def simulate(self, phi0, k_elem, settings: SolverSettings,
                 store: str = "all"):
        """March the coupled system, returning (history, mass_series).

        `store="all"` keeps every state (indices 0..n_steps); `store="none"`
        keeps only the mass series.  C starts at zero everywhere.
        """
        phi0 = np.asarray(phi0, dtype=float)
        if phi0.shape != (self.mesh.n_nodes,):
            raise ValueError("phi0 must be a nodal vector")
        if phi0.min() < -1e-12 or phi0.max() > 1.0 + 1e-12:
            raise ValueError("phi0 must lie in [0, 1] nodally")
        k_elem = np.asarray(k_elem, dtype=float)
        if k_elem.shape != (self.mesh.n_elements,):
            raise ValueError("k_elem must be a per-element vector")

        state = StateFields(phi0.copy(), np.zeros(self.mesh.n_nodes), 0)
        history = [state.copy()] if store == "all" else None
        mass = np.empty(settings.n_steps + 1)
        mass[0] = self.solid_mass(state.phi)
        for n in range(1, settings.n_steps + 1):
            try:
                state = self.solve_timestep(state, k_elem, settings)
            except NonConvergenceError as exc:
                raise NonConvergenceError(
                    f"step {n}: {exc}", step=n,
                    residual_norm=exc.residual_norm) from exc
            mass[n] = self.solid_mass(state.phi)
            if history is not None:
                history.append(state.copy())
        return history, mass


# -- convenience wrappers matching the operation-level contracts -------------

def assemble_residuals(state_next: StateFields, state_prev: StateFields,
                       k_field, constants: PhysicsConstants,
                       mesh: StructuredMesh, dt: float):
    system = DissolutionSystem(mesh, constants)
    return system.residuals(state_next.phi, state_next.C,
                            state_prev.phi, state_prev.C,
                            np.asarray(k_field, dtype=float), dt)


def assemble_jacobian(state_next: StateFields, state_prev: StateFields,
                      k_field, constants: PhysicsConstants,
                      mesh: StructuredMesh, dt: float):
    system = DissolutionSystem(mesh, constants)
    return system.jacobian(state_next.phi, state_next.C,
                           np.asarray(k_field, dtype=float), dt)


def solve_timestep(state_prev: StateFields, k_field,
                   constants: PhysicsConstants, mesh: StructuredMesh,
                   settings: SolverSettings) -> StateFields:
    system = DissolutionSystem(mesh, constants)
    return system.solve_timestep(state_prev, np.asarray(k_field, dtype=float),
                                 settings)


def simulate(phi0, k_field, constants: PhysicsConstants,
             mesh: StructuredMesh, settings: SolverSettings, store="all"):
    system = DissolutionSystem(mesh, constants)
    return system.simulate(phi0, np.asarray(k_field, dtype=float),
                           settings, store=store)

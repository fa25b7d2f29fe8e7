"""Scratch: verify jacobian vs FD residuals on a small mesh."""
import numpy as np
from pilltop import fem
from pilltop.materials import PhysicsConstants

rng = np.random.default_rng(0)
mesh = fem.build_mesh(4, 4, 1.0, 1.0)
consts = PhysicsConstants(D_solvent=1e-4, D_solid=1e-9, eps_t=0.05, mu=0.05,
                          M_phi=2e-3, W=140.0)
system = fem.DissolutionSystem(mesh, consts)

n = mesh.n_nodes
phi_new = rng.uniform(0.0, 1.0, n)
C_new = rng.uniform(0.0, 0.9, n)
C_new[mesh.boundary_nodes] = 0.0
phi_old = rng.uniform(0.0, 1.0, n)
C_old = rng.uniform(0.0, 0.9, n)
k = rng.uniform(1e-5, 5e-4, mesh.n_elements)
dt = 10.0

J = system.jacobian(phi_new, C_new, k, dt).toarray()

def resid(u):
    p, c = u[:n], u[n:]
    Rp, Rc = system.residuals(p, c, phi_old, C_old, k, dt)
    return np.concatenate([Rp, Rc])

u0 = np.concatenate([phi_new, C_new])
h = 1e-7
J_fd = np.zeros_like(J)
for i in range(2 * n):
    up = u0.copy(); up[i] += h
    um = u0.copy(); um[i] -= h
    J_fd[:, i] = (resid(up) - resid(um)) / (2 * h)

scale = np.abs(J_fd).max()
err = np.abs(J - J_fd)
rel = err.max() / scale
print("max abs err:", err.max(), " scale:", scale, " rel:", rel)
# per-block relative errors
blocks = {"pp": (slice(0, n), slice(0, n)), "pc": (slice(0, n), slice(n, None)),
          "cp": (slice(n, None), slice(0, n)), "cc": (slice(n, None), slice(n, None))}
for name, (r, c) in blocks.items():
    e = np.abs(J[r, c] - J_fd[r, c]).max()
    s = max(np.abs(J_fd[r, c]).max(), 1e-30)
    print(f"  block {name}: abs {e:.3e} scale {s:.3e} rel {e/s:.3e}")

# sparsity check: <= 18 couplings per row
nnz_per_row = (np.abs(J) > 0).sum(axis=1)
print("max nnz per row:", nnz_per_row.max())

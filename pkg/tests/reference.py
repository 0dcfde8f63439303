"""Independent oracles used only by the test-suite."""

import numpy as np

from uqpinn.pde import BURGERS_VISCOSITY


def burgers_fd_snapshots(times, dx=1.0 / 2048, dt=1e-5, nu=BURGERS_VISCOSITY):
    """Method-of-lines Burgers solve (conservative central differences, SSP-RK3).

    Returns the grid and one snapshot per requested time.
    """
    x = np.arange(-1.0, 1.0 + dx / 2, dx)
    u = -np.sin(np.pi * x)
    u[0] = u[-1] = 0.0

    def rhs(u):
        out = np.zeros_like(u)
        flux = 0.5 * u * u
        out[1:-1] = -(flux[2:] - flux[:-2]) / (2 * dx) + nu * (u[2:] - 2 * u[1:-1] + u[:-2]) / dx**2
        return out

    steps = np.rint(np.asarray(times) / dt).astype(int)
    wanted = set(steps.tolist())
    snaps = {}
    for k in range(steps.max() + 1):
        if k in wanted:
            snaps[k] = u.copy()
        if k == steps.max():
            break
        u1 = u + dt * rhs(u)
        u2 = 0.75 * u + 0.25 * (u1 + dt * rhs(u1))
        u = u / 3 + 2 / 3 * (u2 + dt * rhs(u2))
    return x, [snaps[s] for s in steps]


def taylor_green_jet(x, y, t, nu, drift=(0.0, 0.0)):
    """Hand-derived values and derivatives of the drifting Taylor-Green flow.

    Returns a Jet-compatible triple (value (n, 3), d1 (n, 3, 3), d2 (n, 3, 2))
    with outputs (u, v, p), inputs (x, y, t) and second derivatives in x, y.
    """
    U, V = drift
    xi, eta = x - U * t, y - V * t
    D = np.exp(-2 * nu * t)
    sx, cx, sy, cy = np.sin(xi), np.cos(xi), np.sin(eta), np.cos(eta)
    u = U - cx * sy * D
    v = V + sx * cy * D
    p = -0.25 * (np.cos(2 * xi) + np.cos(2 * eta)) * D**2
    u_x, u_y = sx * sy * D, -cx * cy * D
    v_x, v_y = cx * cy * D, -sx * sy * D
    p_x, p_y = 0.5 * np.sin(2 * xi) * D**2, 0.5 * np.sin(2 * eta) * D**2
    u_t = -U * u_x - V * u_y + 2 * nu * cx * sy * D
    v_t = -U * v_x - V * v_y - 2 * nu * sx * cy * D
    p_t = -U * p_x - V * p_y + nu * (np.cos(2 * xi) + np.cos(2 * eta)) * D**2
    value = np.stack([u, v, p], axis=1)
    d1 = np.stack([
        np.stack([u_x, u_y, u_t], axis=1),
        np.stack([v_x, v_y, v_t], axis=1),
        np.stack([p_x, p_y, p_t], axis=1),
    ], axis=1)
    lap = cx * sy * D
    d2 = np.stack([
        np.stack([lap, lap], axis=1),
        np.stack([-sx * cy * D, -sx * cy * D], axis=1),
        np.stack([np.cos(2 * xi) * D**2, np.cos(2 * eta) * D**2], axis=1),
    ], axis=1)
    return value, d1, d2

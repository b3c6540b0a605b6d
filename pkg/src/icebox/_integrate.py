"""Fixed-step classical RK4 marching shared by the dynamics modules."""

from __future__ import annotations

__all__ = ["rk4_linear_run", "rk4_step"]


def rk4_step(f, y, dt):
    """One RK4 step for dy/dt = f(y) with time-independent f.

    ``y`` may be any object supporting + and scalar *; ``f`` returns the same
    kind of object.
    """
    k1 = f(y)
    k2 = f(y + (0.5 * dt) * k1)
    k3 = f(y + (0.5 * dt) * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_linear_run(apply_a, psi, n_steps, sample_every, on_sample):
    """March dpsi/dt' = A psi where ``apply_a`` already includes the factor dt
    (i.e. apply_a(v) = dt * (d v / dt)).  Samples at step 0, every
    ``sample_every`` steps, and at the final step.
    """
    on_sample(0, psi)
    for step in range(1, n_steps + 1):
        k1 = apply_a(psi)
        k2 = apply_a(psi + 0.5 * k1)
        k3 = apply_a(psi + 0.5 * k2)
        k4 = apply_a(psi + k3)
        psi = psi + (k1 + 2.0 * (k2 + k3) + k4) / 6.0
        if step % sample_every == 0 or step == n_steps:
            on_sample(step, psi)
    return psi

"""Three-compartment insulin-glucose model.

State is [G, I, x]:

* G  blood glucose deviation above the reference level (mmol/L). Insulin
  drives it down; sustained G below -3.8 is hypoglycemia, the unsafe region.
* I  plasma insulin concentration (mU/L)
* x  subcutaneous insulin mass (mU)

Dynamics, with u the pump's infusion rate (mU/min):

    dG/dt = -p1 G - p2 I + p3
    dI/dt = -ke I + (ka / VI) x
    dx/dt = -ka x + u

With the pump off the glucose equilibrium is p3/p1. The time step is one
minute; the step function is an affine map precomposed from RK4 substeps
(linear system, held input), so stepping and recoverability simulations cost
one 3x3 matvec each.
"""

from dataclasses import dataclass

import numpy as np

G, I, XSUB = 0, 1, 2


def _rk4_affine(A, h):
    n = len(A)
    hA = h * A
    R = np.eye(n) + hA @ (np.eye(n) + hA @ (np.eye(n) / 2 + hA @ (np.eye(n) / 6 + hA / 24)))
    S = h * (np.eye(n) + hA @ (np.eye(n) / 2 + hA @ (np.eye(n) / 6 + hA / 24)))
    return R, S


@dataclass
class ApParams:
    p1: float = 0.025
    p2: float = 0.005
    p3: float = 0.1925
    ke: float = 0.09
    ka: float = 0.025
    vi: float = 12.0
    dt: float = 1.0                 # minutes
    u_max: float = 100.0            # pump ceiling (mU/min)
    n_substeps: int = 4
    hypo_threshold: float = -3.8
    recoverability_cap: int = 5000

    def __post_init__(self):
        for name in ("p1", "p2", "p3", "ke", "ka", "vi"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"patient parameter {name} must be positive")
        A = np.array([
            [-self.p1, -self.p2, 0.0],
            [0.0, -self.ke, self.ka / self.vi],
            [0.0, 0.0, -self.ka],
        ])
        bu = np.array([0.0, 0.0, 1.0])
        c = np.array([self.p3, 0.0, 0.0])
        R, S = _rk4_affine(A, self.dt / self.n_substeps)
        E = np.eye(3)
        T = np.zeros((3, 3))
        for _ in range(self.n_substeps):
            E = R @ E
            T = R @ T + S
        self.matrix = A
        self.step_matrix = E
        self.input_vector = T @ bu
        self.drift_vector = T @ c

    @property
    def equilibrium_g(self):
        """Glucose deviation the patient settles at with the pump off."""
        return self.p3 / self.p1

    @property
    def i_crit(self):
        """Insulin level above which glucose still falls at the unsafe line.

        From dG/dt at G = hypo_threshold with u = 0: glucose can only keep
        falling through the threshold while I exceeds (p3 - p1*G_thr)/p2.
        """
        return (self.p3 - self.p1 * self.hypo_threshold) / self.p2


def ap_rhs(s, u, params: ApParams):
    return np.array([
        -params.p1 * s[G] - params.p2 * s[I] + params.p3,
        -params.ke * s[I] + (params.ka / params.vi) * s[XSUB],
        -params.ka * s[XSUB] + u,
    ])


def ap_step(s, u, params: ApParams):
    """Advance one minute with the infusion rate held constant."""
    u = min(max(float(u), 0.0), params.u_max)
    return params.step_matrix @ s + params.input_vector * u + params.drift_vector

# -*- coding: utf-8 -*-
"""3-DOF surge, sway and yaw vessel model

The pose eta = [x_n, y_n, psi] lives in the north-east plane, the body
velocities nu = [u, v, r] in the bow-starboard frame. The kinetics read::

    eta_dot = R(psi) nu
    M nu_dot + C(nu) nu + D(nu) nu = B f

with f = [T_u, T_r] the surge force and yaw moment.
"""

import os
import math
import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from asvlab.core import AsvLabValidationError, SimulationFault
from asvlab.utils.filesystem import read_json

logger = logging.getLogger("asvlab.dynamics")

DEFAULT_SHIP_MODEL = os.path.join(os.path.dirname(__file__), "data", "cybership2.json")

INTEGRATORS = ("rk4", "semi-implicit-euler")


def wrap_angle(angle):
    """Wrap an angle, or an array of angles, to (-pi, pi]"""
    wrapped = -((-np.asarray(angle, dtype=float) + math.pi) % (2 * math.pi) - math.pi)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


# Domain types ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VesselState:
    """Pose and body velocities of the vessel

    The heading is wrapped on construction.
    """

    eta: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float).reshape(3)
        nu = np.array(self.nu, dtype=float).reshape(3)
        eta[2] = wrap_angle(eta[2])
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def at(cls, x_n=0.0, y_n=0.0, psi=0.0, u=0.0, v=0.0, r=0.0):
        return cls(np.array([x_n, y_n, psi]), np.array([u, v, r]))

    @property
    def position(self):
        return self.eta[:2].copy()

    x_n = property(lambda self: float(self.eta[0]))
    y_n = property(lambda self: float(self.eta[1]))
    psi = property(lambda self: float(self.eta[2]))
    u = property(lambda self: float(self.nu[0]))
    v = property(lambda self: float(self.nu[1]))
    r = property(lambda self: float(self.nu[2]))

    def is_finite(self):
        return bool(np.all(np.isfinite(self.eta)) and np.all(np.isfinite(self.nu)))

    def to_dict(self):
        return {"eta": self.eta.tolist(), "nu": self.nu.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.array(data["eta"]), np.array(data["nu"]))


@dataclass(frozen=True)
class ControlInput:
    """Surge force (N) and yaw moment (N.m)"""

    T_u: float = 0.0
    T_r: float = 0.0

    def as_vector(self):
        return np.array([self.T_u, self.T_r], dtype=float)


@dataclass(eq=False)
class ShipModel:
    """Mass, damping and actuator description of a vessel

    Keyword arguments:
        - M -- 3x3 rigid-body plus added mass matrix
        - D_lin -- 3x3 linear damping matrix
        - d_quad -- diagonal quadratic damping, D(nu) = D_lin + diag(d_quad |nu|)
        - B -- 3x2 actuator configuration matrix
        - T_u_max, T_r_max -- actuator limits
        - u_max -- maximum surge speed, derived from the surge balance if None
        - hull_radius -- radius of the collision disk

    """

    M: np.ndarray
    D_lin: np.ndarray
    B: np.ndarray
    T_u_max: float
    T_r_max: float
    hull_radius: float = 5.0
    d_quad: np.ndarray = field(default_factory=lambda: np.zeros(3))
    u_max: float = None
    name: str = "unnamed"

    def __post_init__(self):
        self.M = np.array(self.M, dtype=float)
        self.D_lin = np.array(self.D_lin, dtype=float)
        self.B = np.array(self.B, dtype=float)
        self.d_quad = np.array(self.d_quad, dtype=float).reshape(-1)
        self._validate()
        self.M_inv = np.linalg.inv(self.M)
        if self.u_max is None:
            self.u_max = self.steady_surge_speed()
        logger.debug("ship model '%s' loaded, u_max=%.4f m/s", self.name, self.u_max)

    def _validate(self):
        def fail(reason):
            raise AsvLabValidationError("ship_model_invalid", name=self.name, reason=reason)

        if self.M.shape != (3, 3) or self.D_lin.shape != (3, 3):
            fail("mass and damping matrices must be 3x3")
        if self.B.shape != (3, 2):
            fail("actuator matrix must be 3x2")
        if self.d_quad.shape != (3,) or np.any(self.d_quad < 0):
            fail("quadratic damping must be 3 non-negative values")
        if not np.allclose(self.M, self.M.T, atol=1e-12):
            fail("mass matrix is not symmetric")
        try:
            np.linalg.cholesky(self.M)
        except np.linalg.LinAlgError:
            fail("mass matrix is not positive definite")
        sym = 0.5 * (self.D_lin + self.D_lin.T)
        if np.linalg.eigvalsh(sym).min() < -1e-12:
            fail("linear damping is not dissipative")
        if self.T_u_max <= 0 or self.T_r_max <= 0:
            fail("actuator limits must be positive")
        if self.hull_radius <= 0:
            fail("hull radius must be positive")
        if self.u_max is not None and self.u_max <= 0:
            fail("maximum surge speed must be positive")

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                name=data.get("name", "unnamed"),
                M=data["mass_matrix"],
                D_lin=data["linear_damping"],
                d_quad=data.get("quadratic_damping", [0.0, 0.0, 0.0]),
                B=data["actuator_matrix"],
                T_u_max=float(data["max_surge_force"]),
                T_r_max=float(data["max_yaw_moment"]),
                u_max=data.get("max_surge_speed"),
                hull_radius=float(data.get("hull_radius", 5.0)),
            )
        except KeyError as e:
            raise AsvLabValidationError(
                "ship_model_invalid",
                name=data.get("name", "unnamed"),
                reason="missing key %s" % e,
            )

    @classmethod
    def load(cls, path=None):
        """Load a ship model file, the bundled one by default"""
        return cls.from_dict(read_json(path or DEFAULT_SHIP_MODEL))

    def to_dict(self):
        return {
            "name": self.name,
            "mass_matrix": self.M.tolist(),
            "linear_damping": self.D_lin.tolist(),
            "quadratic_damping": self.d_quad.tolist(),
            "actuator_matrix": self.B.tolist(),
            "max_surge_force": self.T_u_max,
            "max_yaw_moment": self.T_r_max,
            "max_surge_speed": self.u_max,
            "hull_radius": self.hull_radius,
        }

    def steady_surge_speed(self):
        """Surge speed where full thrust balances the surge damping"""
        thrust = self.B[0, 0] * self.T_u_max
        d1, d2 = self.D_lin[0, 0], self.d_quad[0]
        if d2 == 0:
            if d1 <= 0:
                raise AsvLabValidationError(
                    "ship_model_invalid",
                    name=self.name,
                    reason="surge is undamped, max_surge_speed must be given",
                )
            return thrust / d1
        return (-d1 + math.sqrt(d1 * d1 + 4 * d2 * thrust)) / (2 * d2)

    def coriolis(self, nu):
        """Coriolis and centripetal matrix derived from M, skew-symmetric"""
        u, v, r = nu
        m11 = self.M[0, 0]
        m22 = self.M[1, 1]
        m23 = 0.5 * (self.M[1, 2] + self.M[2, 1])
        c13 = -(m22 * v + m23 * r)
        c23 = m11 * u
        return np.array([[0.0, 0.0, c13], [0.0, 0.0, c23], [-c13, -c23, 0.0]])

    def damping(self, nu):
        return self.D_lin + np.diag(self.d_quad * np.abs(nu))


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    integrator: str = "rk4"

    def __post_init__(self):
        if not self.dt > 0:
            raise AsvLabValidationError("invalid_config_value", key="dt", value=self.dt)
        if self.integrator not in INTEGRATORS:
            raise AsvLabValidationError(
                "invalid_config_value", key="integrator", value=self.integrator
            )


# Kinematics and kinetics ---------------------------------------------


def rotation_matrix(psi):
    """Rotation about the down axis, body to north-east-down"""
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rates(eta, nu, force, model):
    eta_dot = rotation_matrix(eta[2]) @ nu
    rhs = model.B @ force - model.coriolis(nu) @ nu - model.damping(nu) @ nu
    return eta_dot, model.M_inv @ rhs


def derivatives(state: VesselState, f: ControlInput, model: ShipModel) -> Tuple[np.ndarray, np.ndarray]:
    """Return (eta_dot, nu_dot) for a state under a control input"""
    return _rates(state.eta, state.nu, f.as_vector(), model)


def saturate(f: ControlInput, model: ShipModel) -> ControlInput:
    """Clamp a control input to the actuator limits"""
    return ControlInput(
        float(np.clip(f.T_u, -model.T_u_max, model.T_u_max)),
        float(np.clip(f.T_r, -model.T_r_max, model.T_r_max)),
    )


def action_to_control(action, model: ShipModel) -> ControlInput:
    """Map a policy action in [-1, 1]^2 to a saturated control input"""
    a = np.clip(np.asarray(action, dtype=float).reshape(2), -1.0, 1.0)
    return ControlInput(float(a[0] * model.T_u_max), float(a[1] * model.T_r_max))


def step(state: VesselState, f: ControlInput, model: ShipModel, cfg: SimConfig) -> VesselState:
    """Advance a state by cfg.dt

    Raises SimulationFault when the integration produces non-finite values.
    """
    force = f.as_vector()
    dt = cfg.dt
    eta, nu = state.eta, state.nu

    if cfg.integrator == "rk4":
        k1e, k1n = _rates(eta, nu, force, model)
        k2e, k2n = _rates(eta + 0.5 * dt * k1e, nu + 0.5 * dt * k1n, force, model)
        k3e, k3n = _rates(eta + 0.5 * dt * k2e, nu + 0.5 * dt * k2n, force, model)
        k4e, k4n = _rates(eta + dt * k3e, nu + dt * k3n, force, model)
        eta = eta + (dt / 6.0) * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
        nu = nu + (dt / 6.0) * (k1n + 2.0 * k2n + 2.0 * k3n + k4n)
    else:
        _, nu_dot = _rates(eta, nu, force, model)
        nu = nu + dt * nu_dot
        eta = eta + dt * (rotation_matrix(eta[2]) @ nu)

    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(nu))):
        raise SimulationFault("simulation_fault", eta=eta.tolist(), nu=nu.tolist())

    return VesselState(eta, nu)


def kinetic_energy(state: VesselState, model: ShipModel) -> float:
    return 0.5 * float(state.nu @ model.M @ state.nu)

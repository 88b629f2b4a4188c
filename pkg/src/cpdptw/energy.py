"""Per-leg energy models: momentum-theory rotor power for drones, rolling
friction for sidewalk robots.

All speeds are m/s, masses kg, distances m, power W, leg energies kJ.
The drone model chains

    alpha  = atan( 0.5 rho (sum C_D A) v_a^2 / (g sum m) )      # angle of attack
    T      = g sum m + 0.5 rho (sum C_D A) v_a^2                # thrust ~ W + D
    v_i    : v_i = g sum m / (2 n rho s * sqrt((v_a cos a)^2 + (v_a sin a + v_i)^2))
    P      = T (v_a sin alpha + v_i) / eta

with the induced speed v_i solved to 1e-12 residual.  Wind enters through
the effective airspeed; the printed composition formula (which yields
sqrt(2)*v_g in still air) is kept available as ``formula="verbatim"`` next
to the standard law-of-cosines ``formula="vector"`` used by the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

G = 9.81  # m/s^2


@dataclass
class UavParams:
    """Rotor-craft constants. Defaults describe a ~120 g micro-drone whose
    6.5 kJ battery gives a useful-but-binding range on a 5 km box."""

    masses_kg: list[float] = field(default_factory=lambda: [0.07, 0.05, 0.0])
    n_rotors: int = 4
    disc_area_m2: float = 0.08       # per rotor
    air_density: float = 1.225       # kg/m^3
    drag_coeffs: list[float] = field(default_factory=lambda: [0.5])
    proj_areas_m2: list[float] = field(default_factory=lambda: [0.0016])
    efficiency: float = 0.85
    gravity: float = G

    @property
    def total_mass(self):
        return sum(self.masses_kg)

    @property
    def drag_area(self):
        """sum_k C_Dk * A_k."""
        return sum(c * a for c, a in zip(self.drag_coeffs, self.proj_areas_m2))

    def with_payload(self, payload_kg):
        m = list(self.masses_kg)
        m[-1] = payload_kg
        return UavParams(m, self.n_rotors, self.disc_area_m2, self.air_density,
                         list(self.drag_coeffs), list(self.proj_areas_m2),
                         self.efficiency, self.gravity)

    def validate(self):
        if any(m < 0 for m in self.masses_kg) or self.total_mass <= 0:
            raise ValueError(f"masses_kg: must be >= 0 with positive total, got {self.masses_kg}")
        for name in ("n_rotors", "disc_area_m2", "air_density", "gravity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name}: must be > 0, got {getattr(self, name)!r}")
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"efficiency: must be in (0, 1], got {self.efficiency!r}")
        return self


@dataclass
class AdrParams:
    friction: float = 0.008      # rolling-resistance coefficient C_r
    mass_kg: float = 4.0         # robot incl. battery
    payload_kg: float = 0.0
    efficiency: float = 0.85     # drivetrain
    gravity: float = G

    def validate(self):
        for name in ("friction", "mass_kg", "gravity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name}: must be > 0, got {getattr(self, name)!r}")
        if self.payload_kg < 0:
            raise ValueError(f"payload_kg: must be >= 0, got {self.payload_kg!r}")
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"efficiency: must be in (0, 1], got {self.efficiency!r}")
        return self


@dataclass
class WindState:
    speed: float = 0.0           # m/s
    course: float = 0.0          # rad, direction the air mass moves toward
    model: str = "none"          # none | constant | turbulent
    seed: int = 0

    def validate(self):
        if not 0 <= self.speed <= 12:
            raise ValueError(f"wind speed: must be in [0, 12] m/s, got {self.speed!r}")
        if self.model not in ("none", "constant", "turbulent"):
            raise ValueError(f"wind model: none|constant|turbulent, got {self.model!r}")
        return self


def angle_of_attack(p, v_a):
    """Tilt angle balancing parasite drag against weight."""
    if v_a < 0:
        raise ValueError(f"v_a: must be >= 0, got {v_a}")
    drag = 0.5 * p.air_density * p.drag_area * v_a * v_a
    return math.atan(drag / (p.gravity * p.total_mass))


def thrust(p, v_a):
    if v_a < 0:
        raise ValueError(f"v_a: must be >= 0, got {v_a}")
    return p.gravity * p.total_mass + 0.5 * p.air_density * p.drag_area * v_a * v_a


def induced_velocity(p, v_a, alpha=None):
    """Induced rotor speed from the implicit momentum-theory fixed point.

    Damped fixed-point iteration, with bisection as fallback; raises
    ArithmeticError (reporting the residual) if 1e4 iterations do not reach
    a 1e-12 residual.  In hover this reduces to sqrt(g*m / (2 n rho s)).
    """
    if alpha is None:
        alpha = angle_of_attack(p, v_a)
    w = p.gravity * p.total_mass
    denom0 = 2.0 * p.n_rotors * p.air_density * p.disc_area_m2
    v_hover = math.sqrt(w / denom0)
    if v_a == 0.0:
        return v_hover
    vx = v_a * math.cos(alpha)
    vz = v_a * math.sin(alpha)

    def rhs(v):
        return w / (denom0 * math.hypot(vx, vz + v))

    v = v_hover
    for _ in range(100):
        nxt = 0.5 * v + 0.5 * rhs(v)
        if abs(nxt - v) <= 1e-13 * max(1.0, v):
            v = nxt
            break
        v = nxt
    if abs(v - rhs(v)) > 1e-12:
        # bisection on f(v) = v - rhs(v): f(0+) < 0, f(v_hover) >= 0
        lo, hi = 0.0, v_hover
        for _ in range(10_000):
            mid = 0.5 * (lo + hi)
            if mid - rhs(mid) > 0:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
        v = 0.5 * (lo + hi)
        if abs(v - rhs(v)) > 1e-9:
            raise ArithmeticError(
                f"induced velocity failed to converge: residual {abs(v - rhs(v)):.3e} "
                f"at v_a={v_a}, alpha={alpha}")
    return v


def uav_power(p, v_a):
    """Electrical power draw (W) in steady flight at airspeed ``v_a``."""
    alpha = angle_of_attack(p, v_a)
    t = thrust(p, v_a)
    v_i = induced_velocity(p, v_a, alpha)
    return t * (v_a * math.sin(alpha) + v_i) / p.efficiency


def effective_airspeed(v_g, chi, w, formula="verbatim"):
    """Airspeed for ground speed ``v_g`` on course ``chi`` under wind ``w``.

    ``formula="verbatim"`` keeps the published composition (which inflates
    still-air speed by sqrt(2)); ``formula="vector"`` is the plain relative
    velocity magnitude.  Wind model "none" zeroes the wind speed.
    """
    if v_g < 0:
        raise ValueError(f"v_g: must be >= 0, got {v_g}")
    v_w = 0.0 if w.model == "none" else w.speed
    rel = math.cos(w.course - chi)
    if formula == "verbatim":
        rad = 2 * v_g * v_g + 2 * v_w * v_w - 2 * v_g * v_w * rel
    elif formula == "vector":
        rad = v_g * v_g + v_w * v_w - 2 * v_g * v_w * rel
    else:
        raise ValueError(f"formula: expected verbatim|vector, got {formula!r}")
    assert rad > -1e-12, "negative radicand cannot happen for real speeds"
    return math.sqrt(max(rad, 0.0))


def adr_power(p, v):
    """Rolling-friction draw: C_r (M + m_pl) g v / nu — exactly linear in both."""
    if v < 0:
        raise ValueError(f"v: must be >= 0, got {v}")
    return p.friction * (p.mass_kg + p.payload_kg) * p.gravity * v / p.efficiency


def turbulent_speed(w, leg_key=()):
    """Per-leg wind magnitude: constant +/- 20% uniform, reproducible per
    (seed, leg) so identical rollouts consume identical energy."""
    entropy = (w.seed,) + tuple(int(k) for k in leg_key)
    u = np.random.default_rng(entropy).uniform(-0.2, 0.2)
    return w.speed * (1.0 + u)


def leg_energy(mode, distance_m, speed, payload_kg, wind, params,
               course=0.0, formula="vector", leg_key=()):
    """Energy (kJ) to move ``distance_m`` at ground speed ``speed``.

    UAV legs feel wind through the effective airspeed; ADR legs do not.
    ``course`` is the leg's heading (rad); ``leg_key`` seeds turbulence.
    """
    if distance_m < 0:
        raise ValueError(f"distance_m: must be >= 0, got {distance_m}")
    if not speed > 0:
        raise ValueError(f"speed: must be > 0, got {speed}")
    if distance_m == 0.0:
        return 0.0
    duration_s = distance_m / speed
    if mode == "ADR":
        p = AdrParams(params.friction, params.mass_kg, payload_kg,
                      params.efficiency, params.gravity)
        return adr_power(p, speed) * duration_s / 1000.0
    if mode != "UAV":
        raise ValueError(f"mode: expected UAV|ADR, got {mode!r}")
    w = wind if wind is not None else WindState()
    if w.model == "turbulent":
        w = WindState(speed=turbulent_speed(w, leg_key), course=w.course,
                      model="constant", seed=w.seed)
    v_a = effective_airspeed(speed, course, w, formula=formula)
    p = params.with_payload(payload_kg)
    return uav_power(p, v_a) * duration_s / 1000.0


@dataclass
class PhysicsConfig:
    """Everything the simulator needs to price a leg."""

    uav: UavParams = field(default_factory=UavParams)
    adr: AdrParams = field(default_factory=AdrParams)
    wind: WindState = field(default_factory=WindState)
    wind_formula: str = "vector"      # verbatim | vector
    payload_kg_per_unit: float = 0.02  # kg per abstract load unit

    def validate(self):
        self.uav.validate()
        self.adr.validate()
        self.wind.validate()
        if self.wind_formula not in ("verbatim", "vector"):
            raise ValueError(
                f"wind_formula: expected verbatim|vector, got {self.wind_formula!r}")
        if self.payload_kg_per_unit < 0:
            raise ValueError(
                f"payload_kg_per_unit: must be >= 0, got {self.payload_kg_per_unit!r}")
        return self

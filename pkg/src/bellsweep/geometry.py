"""Bloch-sphere parameterization of two-setting Bell measurements.

Every local measurement is a unit vector on the Bloch sphere, stored either
as spherical angles (theta, phi) or as Cartesian components.  Symmetry modes
generate the partner setting a' from a (polar mirror: same transverse part,
opposite z; azimuthal mirror: y negated) and may pin sites to the z axis.
The reduced search space of a mirror mode folds into the fundamental domain
[0, pi/2] x [0, pi]; the folding maps are validated against the objective by
the test suite rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError, DomainError

TWO_PI = 2.0 * math.pi

# Mode tags.  FREE keeps a and a' independent (four angles per site);
# the mirror modes keep one (theta, phi) per site; AXIS_LOCKED pins the
# listed sites to +z and applies the polar-mirror rule to the others.
FREE = "FREE"
POLAR_MIRROR = "POLAR_MIRROR"
AZIMUTHAL_MIRROR = "AZIMUTHAL_MIRROR"
AXIS_LOCKED = "AXIS_LOCKED"

_MODE_TAGS = (FREE, POLAR_MIRROR, AZIMUTHAL_MIRROR, AXIS_LOCKED)


@dataclass(frozen=True)
class BlochAngles:
    """Spherical angles in radians: theta in [0, pi], phi in [0, 2*pi)."""

    theta: float
    phi: float

    def as_tuple(self):
        return (self.theta, self.phi)


@dataclass(frozen=True)
class UnitVector:
    x: float
    y: float
    z: float

    def as_tuple(self):
        return (self.x, self.y, self.z)

    def norm(self):
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def dot(self, other):
        return self.x * other.x + self.y * other.y + self.z * other.z


@dataclass(frozen=True)
class MeasurementSettings:
    """The full set {a_k, a'_k} for one unit cell: pairs[k] = (a_k, a'_k)."""

    pairs: tuple

    def __post_init__(self):
        for a, ap in self.pairs:
            for v in (a, ap):
                if abs(v.norm() - 1.0) > 1e-9:
                    raise DomainError(f"setting vector {v} is not unit length")

    @property
    def u(self):
        return len(self.pairs)

    def tiled(self, n_sites):
        """Per-site (a, a') list for a chain of n_sites, repeating the cell."""
        if n_sites % self.u != 0:
            raise ConfigurationError(
                f"chain length {n_sites} is not a multiple of the unit cell {self.u}"
            )
        return [self.pairs[k % self.u] for k in range(n_sites)]

    def angle_rows(self):
        """(theta_a, phi_a, theta_ap, phi_ap) per site, pole convention applied."""
        rows = []
        for a, ap in self.pairs:
            ta = vector_to_angles(a)
            tp = vector_to_angles(ap)
            rows.append((ta.theta, ta.phi, tp.theta, tp.phi))
        return rows


@dataclass(frozen=True)
class SymmetryMode:
    """Pair-generation rule plus optionally pinned sites (1-based indices)."""

    tag: str
    locked_sites: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.tag not in _MODE_TAGS:
            raise ConfigurationError(f"unknown symmetry mode tag {self.tag!r}")
        object.__setattr__(self, "locked_sites", frozenset(self.locked_sites))

    def pair_rule(self):
        """Rule applied at unlocked sites; AXIS_LOCKED falls back to polar."""
        return POLAR_MIRROR if self.tag == AXIS_LOCKED else self.tag

    def free_sites(self, u):
        sites = [k for k in range(1, u + 1) if k not in self.locked_sites]
        for s in self.locked_sites:
            if not 1 <= s <= u:
                raise ConfigurationError(f"locked site {s} outside unit cell 1..{u}")
        return sites

    def angles_per_site(self):
        return 2 if self.pair_rule() == FREE else 1

    def n_params(self, u):
        """Number of reduced (theta, phi) pairs; scalar dim is twice this."""
        return len(self.free_sites(u)) * self.angles_per_site()

    def describe(self):
        if self.locked_sites:
            locked = ",".join(str(s) for s in sorted(self.locked_sites))
            return f"{self.tag}[locked={locked}]"
        return self.tag


#: Fundamental domain bounds for a symmetry-reduced (theta, phi) pair.
DOMAIN_THETA_MAX = 0.5 * math.pi
DOMAIN_PHI_MAX = math.pi


def _wrap_phi(phi):
    phi = math.fmod(phi, TWO_PI)
    if phi < 0.0:
        phi += TWO_PI
    # fmod can return TWO_PI - eps rounding back up to TWO_PI
    if phi >= TWO_PI:
        phi = 0.0
    return phi


def normalize_angles(theta, phi):
    """Map arbitrary real (theta, phi) to theta in [0, pi], phi in [0, 2pi).

    Applies the pole convention phi = 0 whenever theta sits at a pole.
    """
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta += TWO_PI
    if theta > math.pi:
        theta = TWO_PI - theta
        phi = phi + math.pi
    phi = _wrap_phi(phi)
    if theta < 1e-12 or math.pi - theta < 1e-12:
        phi = 0.0
        theta = 0.0 if theta < 1e-12 else math.pi
    return BlochAngles(theta, phi)


def angles_to_vector(angles):
    """Cartesian unit vector [sin t cos p, sin t sin p, cos t]."""
    t, p = angles.theta, angles.phi
    if not 0.0 <= t <= math.pi:
        raise DomainError(f"theta {t} outside [0, pi]")
    if not 0.0 <= p < TWO_PI:
        raise DomainError(f"phi {p} outside [0, 2*pi)")
    st = math.sin(t)
    return UnitVector(st * math.cos(p), st * math.sin(p), math.cos(t))


def vector_to_angles(v):
    """Inverse of angles_to_vector with the phi=0 pole convention."""
    n = v.norm()
    if abs(n - 1.0) > 1e-9:
        raise DomainError(f"vector {v} has norm {n}, expected 1")
    z = min(1.0, max(-1.0, v.z / n))
    theta = math.acos(z)
    if theta < 1e-9 or math.pi - theta < 1e-9:
        return BlochAngles(0.0 if theta < 1e-9 else math.pi, 0.0)
    phi = math.atan2(v.y, v.x)
    if phi < 0.0:
        phi += TWO_PI
    return BlochAngles(theta, _wrap_phi(phi))


def canonicalize_to_domain(angles):
    """Fold into the fundamental domain [0, pi/2] x [0, pi].

    Folding maps: theta -> pi - theta and phi -> 2*pi - phi.  Whether the
    objective is invariant under them depends on the symmetry mode; the
    invariant suite checks this where the maps are used.
    """
    a = normalize_angles(angles.theta, angles.phi)
    theta, phi = a.theta, a.phi
    if theta > DOMAIN_THETA_MAX:
        theta = math.pi - theta
    if phi > DOMAIN_PHI_MAX:
        phi = TWO_PI - phi
    if theta < 1e-12:
        phi = 0.0
    return BlochAngles(theta, phi)


def _pair_from_rule(angles, rule):
    a = angles_to_vector(angles)
    if rule == POLAR_MIRROR:
        return a, UnitVector(a.x, a.y, -a.z)
    if rule == AZIMUTHAL_MIRROR:
        return a, UnitVector(a.x, -a.y, a.z)
    raise ConfigurationError(f"no pair rule for tag {rule!r}")


def expand_settings(reduced, mode, u):
    """Build the full 2u-operator set from reduced angles under a mode.

    ``reduced`` holds one BlochAngles per unlocked site for mirror modes and
    two (a then a') per unlocked site in FREE mode.  Locked sites receive
    (0, 0, 1) for both settings.
    """
    free = mode.free_sites(u)
    need = mode.n_params(u)
    if len(reduced) != need:
        raise ConfigurationError(
            f"mode {mode.describe()} with u={u} needs {need} reduced angle pairs, "
            f"got {len(reduced)}"
        )
    rule = mode.pair_rule()
    z_hat = UnitVector(0.0, 0.0, 1.0)
    pairs = []
    it = iter(reduced)
    for site in range(1, u + 1):
        if site not in free:
            pairs.append((z_hat, z_hat))
        elif rule == FREE:
            a = angles_to_vector(next(it))
            ap = angles_to_vector(next(it))
            pairs.append((a, ap))
        else:
            pairs.append(_pair_from_rule(next(it), rule))
    return MeasurementSettings(pairs=tuple(pairs))


def circular_distance(phi1, phi2):
    """Shortest angular distance on the circle of period 2*pi."""
    d = abs(math.fmod(phi1 - phi2, TWO_PI))
    if d > math.pi:
        d = TWO_PI - d
    return d

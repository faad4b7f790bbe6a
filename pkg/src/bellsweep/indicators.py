"""Field sweeps, spectral indicators and measurement-geometry reports.

A sweep optimizes the Bell settings at every field value (warm-started from
the previous point), records the per-site transfer spectrum, then fills the
susceptibility d|lambda1|/dh, locates critical points from susceptibility
peaks and gap minima, and classifies each angle trajectory as LOCKED or
ROTATING.

Trajectories are gauge-fixed before classification: the Bell family is
exactly invariant under a small group of setting transformations (global
prime swap, global negation of either setting, global y reflection), so
each record is replaced by the orbit representative closest to its
predecessor.  Genuine angle jumps survive this matching; representative
switching does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bellop, geometry, optimizer, tebd
from .errors import BellsweepError, ConfigurationError
from .geometry import FREE, circular_distance, normalize_angles

LOCKED = "LOCKED"
ROTATING = "ROTATING"

TAU_LOCK = 0.05      # rad; below this max drift an angle counts as locked
TAU_JUMP = 0.2       # rad; above this adjacent-point change is a jump
PROMINENCE_FRAC = 0.25   # susceptibility peak prominence, fraction of max
GAP_DEPTH_FRAC = 0.10    # gap-minimum depth, fraction of the median gap
POLE_THETA = 1e-3    # phi excluded from drift statistics below this theta


@dataclass
class SweepRecord:
    h: float
    J: float
    lambda1: float
    lambda2: float
    gap: float
    dlambda_dh: float
    reduced_angles: list
    settings: object
    converged: bool
    spectrum_top: tuple = ()
    n_evals: int = 0
    error: str = ""

    def angle_rows(self):
        return self.settings.angle_rows() if self.settings is not None else []


@dataclass
class CriticalPoint:
    h: float
    methods: tuple
    agreement: bool = False


@dataclass
class GeometryReport:
    verdicts: dict          # track name -> LOCKED | ROTATING
    max_drift: dict         # track name -> max adjacent change (rad)
    jump_locations: list    # h values with angular jumps
    jumps_by_track: dict
    tau_lock: float
    tau_jump: float


# ---------------------------------------------------------------------------
# gauge fixing of degenerate setting representatives
# ---------------------------------------------------------------------------

def _neg_angles(a):
    return normalize_angles(math.pi - a.theta, a.phi + math.pi)


def _yflip(a):
    return normalize_angles(a.theta, -a.phi)


def gauge_variants(angles, mode):
    """Objective-preserving transforms of a reduced angle list.

    All transforms act globally (on every pair at once); per-site versions
    are not symmetries of the transfer spectrum.
    """
    pairs_free = mode.pair_rule() == FREE
    variants = []
    if pairs_free:
        n = len(angles) // 2
        for do_swap in (False, True):
            for neg_a in (False, True):
                for neg_ap in (False, True):
                    for flip in (False, True):
                        out = []
                        for k in range(n):
                            a, ap = angles[2 * k], angles[2 * k + 1]
                            if neg_a:
                                a = _neg_angles(a)
                            if neg_ap:
                                ap = _neg_angles(ap)
                            if do_swap:
                                a, ap = ap, a
                            if flip:
                                a, ap = _yflip(a), _yflip(ap)
                            out.extend([a, ap])
                        variants.append(out)
    else:
        for fold_theta in (False, True):
            for flip in (False, True):
                out = []
                for a in angles:
                    th = math.pi - a.theta if fold_theta else a.theta
                    ph = -a.phi if flip else a.phi
                    out.append(normalize_angles(th, ph))
                variants.append(out)
    seen, unique = set(), []
    for v in variants:
        key = tuple((round(a.theta, 10), round(a.phi, 10)) for a in v)
        if key not in seen:
            seen.add(key)
            unique.append(v)
    return unique


def _angle_distance(xa, xb):
    d = 0.0
    for a, b in zip(xa, xb):
        d += abs(a.theta - b.theta)
        if a.theta > POLE_THETA and b.theta > POLE_THETA:
            d += circular_distance(a.phi, b.phi)
    return d


def match_to_previous(angles, prev_angles, mode):
    """Gauge representative of `angles` closest to the previous point."""
    if prev_angles is None:
        return angles
    best, best_d = None, math.inf
    for v in gauge_variants(angles, mode):
        d = _angle_distance(v, prev_angles)
        if d < best_d - 1e-15:
            best, best_d = v, d
    return best


# ---------------------------------------------------------------------------
# the sweep
# ---------------------------------------------------------------------------

def _optimize_point(mps, config, warm_x):
    """Warm-started per-point optimization with fresh anti-trapping seeds.

    The warm start is always refined; the best fresh candidate is refined
    only when its scan value competes with the warm result, which is where
    branch trapping could actually occur.
    """
    if warm_x is None:
        return optimizer.optimize_settings(mps, config)
    obj = optimizer.make_objective(mps, config)
    results = [optimizer.gradient_ascent_objective(obj, warm_x, config)]
    seeds = optimizer.structured_seeds(obj, config.mode, obj.u,
                                       config.grid_resolution)
    for seed_x, seed_val in seeds[: config.n_starts]:
        if seed_val > results[0].lambda1_per_site - 0.05:
            results.append(optimizer.gradient_ascent_objective(obj, seed_x, config))
    best = optimizer.select_best(results, obj)
    best.meta.update({"n_evals": obj.n_evals, "n_starts": len(results)})
    return best


def sweep(template, h_values, chi, config, gs_tol=1e-8, warm_start=True,
          progress=None):
    """One SweepRecord per field value, warm-started along the grid."""
    h_values = list(h_values)
    if any(b <= a for a, b in zip(h_values, h_values[1:])):
        raise ConfigurationError("h_values must be strictly ascending")
    records = []
    prev_mps = None
    prev_x = None
    prev_angles = None
    for h in h_values:
        spec = template.with_field(h)
        try:
            mps = tebd.ground_state_umps(
                spec, chi=chi, tol=gs_tol,
                warm_from=prev_mps if warm_start else None,
                schedule=(0.01, 0.001) if (warm_start and prev_mps is not None)
                else tebd.DEFAULT_SCHEDULE)
            warm = prev_x if (warm_start and prev_x is not None) else None
            res = _optimize_point(mps, config, warm)
            M = bellop.mixed_transfer_matrix(mps, res.settings)
            spectrum = bellop.transfer_spectrum(M)
            angles = match_to_previous(res.reduced_angles, prev_angles, config.mode)
            settings = geometry.expand_settings(angles, config.mode, res.settings.u)
            rec = SweepRecord(
                h=float(h), J=float(template.J),
                lambda1=spectrum.lambda1_per_site,
                lambda2=spectrum.lambda1_per_site - spectrum.gap,
                gap=spectrum.gap,
                dlambda_dh=float("nan"),
                reduced_angles=angles,
                settings=settings,
                converged=res.converged,
                spectrum_top=spectrum.top,
                n_evals=res.meta.get("n_evals", 0),
            )
            prev_mps, prev_x = mps, optimizer.angles_to_params(angles)
            prev_angles = angles
        except BellsweepError as exc:
            rec = SweepRecord(
                h=float(h), J=float(template.J),
                lambda1=float("nan"), lambda2=float("nan"), gap=float("nan"),
                dlambda_dh=float("nan"), reduced_angles=[], settings=None,
                converged=False, n_evals=0, error=str(exc))
        records.append(rec)
        if progress is not None:
            progress(rec)
    return records


# ---------------------------------------------------------------------------
# indicators
# ---------------------------------------------------------------------------

def susceptibility(records):
    """Fill dlambda_dh by central differences (one-sided at the ends)."""
    if len(records) < 3:
        raise ConfigurationError("susceptibility needs at least 3 records")
    h = np.array([r.h for r in records])
    lam = np.array([r.lambda1 for r in records])
    steps = np.diff(h)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(abs(steps[0]), 1e-30):
        raise ConfigurationError("susceptibility requires a uniform h grid")
    d = np.empty_like(lam)
    d[1:-1] = (lam[2:] - lam[:-2]) / (h[2:] - h[:-2])
    d[0] = (lam[1] - lam[0]) / (h[1] - h[0])
    d[-1] = (lam[-1] - lam[-2]) / (h[-1] - h[-2])
    for r, v in zip(records, d):
        r.dlambda_dh = float(v)
    return records


def _local_maxima(y):
    idx = []
    for i in range(1, len(y) - 1):
        if y[i] > y[i - 1] and y[i] >= y[i + 1]:
            idx.append(i)
    return idx


def _prominence(y, i):
    """Classic peak prominence of the local maximum at index i."""
    left_min = np.min(y[: i + 1])
    right_min = np.min(y[i:])
    for j in range(i - 1, -1, -1):
        if y[j] > y[i]:
            left_min = np.min(y[j: i + 1])
            break
    for j in range(i + 1, len(y)):
        if y[j] > y[i]:
            right_min = np.min(y[i: j + 1])
            break
    return y[i] - max(left_min, right_min)


def detect_critical_points(records, prominence_frac=PROMINENCE_FRAC,
                           gap_depth_frac=GAP_DEPTH_FRAC):
    """Critical-field estimates from susceptibility peaks and gap minima.

    A sharp cusp in lambda1 makes the signed susceptibility flip sign,
    leaving two |s| peaks flanking the transition; candidates within two
    grid steps are therefore clustered, and a cluster whose signed
    susceptibility crosses zero is located at the interpolated crossing.
    Estimates carrying both method tags are flagged as agreeing.
    """
    h = np.array([r.h for r in records])
    if len(h) < 3:
        return []
    s_signed = np.array([r.dlambda_dh for r in records])
    if np.any(np.isnan(s_signed)):
        raise ConfigurationError("run susceptibility() before detection")
    s = np.abs(s_signed)
    gap = np.array([r.gap for r in records])
    step = h[1] - h[0]

    cands = []
    smax = np.max(s)
    if smax > 0:
        for i in _local_maxima(s):
            if _prominence(s, i) >= prominence_frac * smax:
                cands.append((i, "SUSCEPTIBILITY"))
    gap_median = float(np.median(gap))
    if gap_median > 1e-9:
        # a settings-degenerate family collapses the sector gap identically,
        # in which case minima carry no signal
        for i in _local_maxima(-gap):
            if gap[i] <= gap_depth_frac * gap_median:
                cands.append((i, "GAP"))

    cands.sort()
    clusters = []
    for idx, tag in cands:
        if clusters and idx - clusters[-1][-1][0] <= 2:
            clusters[-1].append((idx, tag))
        else:
            clusters.append([(idx, tag)])

    out = []
    for cluster in clusters:
        tags = tuple(sorted({t for _, t in cluster}))
        sus_idx = [i for i, t in cluster if t == "SUSCEPTIBILITY"]
        if sus_idx:
            lo = max(min(sus_idx) - 1, 0)
            hi = min(max(sus_idx) + 1, len(h) - 1)
            hc = None
            for j in range(lo, hi):
                if s_signed[j] == 0.0:
                    hc = h[j]
                    break
                if s_signed[j] * s_signed[j + 1] < 0.0:
                    f = s_signed[j] / (s_signed[j] - s_signed[j + 1])
                    hc = h[j] + f * (h[j + 1] - h[j])
                    break
            if hc is None:
                hc = h[max(sus_idx, key=lambda i: s[i])]
        else:
            hc = h[min((i for i, t in cluster if t == "GAP"), key=lambda i: gap[i])]
        out.append(CriticalPoint(h=float(hc), methods=tags,
                                 agreement=len(tags) > 1))
    return out


def _angle_tracks(records):
    """(name -> [(h, value, theta_of_operator)]) for every angle component."""
    tracks = {}
    for r in records:
        if r.settings is None:
            continue
        for k, (ta, pa, tb, pb) in enumerate(r.angle_rows(), start=1):
            for name, val, th in ((f"theta_a{k}", ta, ta), (f"phi_a{k}", pa, ta),
                                  (f"theta_ap{k}", tb, tb), (f"phi_ap{k}", pb, tb)):
                tracks.setdefault(name, []).append((r.h, val, th))
    return tracks


def classify_geometry(records, tau_lock=TAU_LOCK, tau_jump=TAU_JUMP):
    """Per-angle LOCKED/ROTATING verdicts with jump locations.

    LOCKED means the whole trajectory stays within tau_lock of its starting
    value (a smooth ramp of larger total excursion counts as ROTATING even
    though its per-step changes are tiny); a jump is an adjacent-point
    change above tau_jump.
    """
    if tau_lock >= tau_jump:
        raise ConfigurationError("tau_lock must be below tau_jump")
    verdicts, drifts, jumps_by, jump_locs = {}, {}, {}, []
    for name, pts in _angle_tracks(records).items():
        is_phi = name.startswith("phi")
        usable = [(h, v) for h, v, th in pts
                  if not (is_phi and th < POLE_THETA)]  # phi undefined at pole
        max_drift = 0.0
        jumps = []
        for (h0, v0), (h1, v1) in zip(usable, usable[1:]):
            step = circular_distance(v0, v1) if is_phi else abs(v1 - v0)
            if step > tau_jump:
                jumps.append(0.5 * (h0 + h1))
        for _, v0 in usable:
            for _, v1 in usable:
                d = circular_distance(v0, v1) if is_phi else abs(v1 - v0)
                max_drift = max(max_drift, d)
        verdicts[name] = LOCKED if max_drift < tau_lock else ROTATING
        drifts[name] = max_drift
        jumps_by[name] = jumps
        jump_locs.extend(jumps)
    return GeometryReport(verdicts=verdicts, max_drift=drifts,
                          jump_locations=sorted(set(jump_locs)),
                          jumps_by_track=jumps_by,
                          tau_lock=tau_lock, tau_jump=tau_jump)


def bloch_trajectory(records, site):
    """(h, a_site, a'_site) Cartesian trajectories for one cell site."""
    out = []
    for r in records:
        if r.settings is None:
            continue
        if not 1 <= site <= r.settings.u:
            raise ConfigurationError(f"site {site} outside unit cell 1..{r.settings.u}")
        a, ap = r.settings.pairs[site - 1]
        out.append((r.h, a, ap))
    return out


# ---------------------------------------------------------------------------
# CSV interface
# ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(float(x), ".12g")


def write_csv(records, path, config_hash="", thresholds=None):
    """Serialize records; angles are written in units of pi."""
    th = thresholds or {"tau_lock": TAU_LOCK, "tau_jump": TAU_JUMP,
                        "prominence": PROMINENCE_FRAC, "gap_depth": GAP_DEPTH_FRAC}
    u = max((r.settings.u for r in records if r.settings is not None), default=0)
    cols = ["h", "J", "lambda1", "lambda2", "gap", "dlambda_dh"]
    for k in range(1, u + 1):
        cols += [f"theta_a{k}_pi", f"phi_a{k}_pi", f"theta_ap{k}_pi", f"phi_ap{k}_pi"]
    cols.append("converged")
    lines = []
    meta = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(th.items()))
    lines.append(f"# bellsweep sweep v1 config={config_hash} {meta}")
    lines.append(",".join(cols))
    for r in records:
        row = [_fmt(r.h), _fmt(r.J), _fmt(r.lambda1), _fmt(r.lambda2),
               _fmt(r.gap), _fmt(r.dlambda_dh)]
        rows = r.angle_rows()
        for k in range(u):
            if k < len(rows):
                row += [_fmt(v / math.pi) for v in rows[k]]
            else:
                row += ["nan"] * 4
        row.append("1" if r.converged else "0")
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
    return text


def read_csv(path):
    """Parse a sweep CSV back into SweepRecords (angles -> settings)."""
    from .geometry import MeasurementSettings, angles_to_vector

    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ConfigurationError("missing sweep CSV header comment")
    cols = lines[1].split(",")
    n_angle_cols = sum(1 for c in cols if c.endswith("_pi"))
    u = n_angle_cols // 4
    records = []
    for ln in lines[2:]:
        parts = ln.split(",")
        row = dict(zip(cols, parts))
        pairs = []
        ok = True
        for k in range(1, u + 1):
            try:
                ta = float(row[f"theta_a{k}_pi"]) * math.pi
                pa = float(row[f"phi_a{k}_pi"]) * math.pi
                tb = float(row[f"theta_ap{k}_pi"]) * math.pi
                pb = float(row[f"phi_ap{k}_pi"]) * math.pi
                pairs.append((angles_to_vector(normalize_angles(ta, pa)),
                              angles_to_vector(normalize_angles(tb, pb))))
            except ValueError:
                ok = False
        settings = MeasurementSettings(pairs=tuple(pairs)) if ok and pairs else None
        records.append(SweepRecord(
            h=float(row["h"]), J=float(row["J"]),
            lambda1=float(row["lambda1"]), lambda2=float(row["lambda2"]),
            gap=float(row["gap"]), dlambda_dh=float(row["dlambda_dh"]),
            reduced_angles=[], settings=settings,
            converged=row["converged"] == "1"))
    return records

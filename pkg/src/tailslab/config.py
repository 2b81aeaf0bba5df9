"""Run configuration: flat key-value sections, hand-editable and diffable.

Sections and defaults are documented in REFERENCE (also emitted by
``tailslab report --reference``).  Parse problems raise ConfigError naming
the offending key and line.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

REFERENCE = """\
# tailslab run configuration -- all keys with their defaults
[metric]
kind = minkowski_hyperboloidal   ; minkowski_hyperboloidal | mass_deformed
mass = 0.0
height_scale = 1.0               ; h(r) = sqrt(scale^2+r^2) - scale

[grid]
n = 800                          ; radial points, uniform in s

[evolution]
t_final = 1000.0
cfl = 0.5                        ; dt = cfl * ds
dissipation = 0.02               ; Kreiss-Oliger strength
trace_dt = 0.02                  ; dense scri/probe cadence
t_dense = 120.0                  ; end of the dense cadence
trace_dt_coarse = 0.5
snapshot_dt = 0.25               ; snapshot cadence on [0, snapshot_until]
snapshot_until = 60.0
probes = 1.0, 5.0, 20.0          ; tail-fit radii (profile radii are added)

[nonlinearity]
power = 3                        ; p >= 3; 'linear = true' disables the term
linear = false
coefficient = 1.0                ; constant a (or b)

[data]
kind = gaussian                  ; gaussian | expanded
amplitude = 0.1
width = 0.5
center = 0.0
amplitude1 = 0.0                 ; amplitude of a Gaussian u1
c1 = 0.0                         ; expanded-data tail factors
c2 = 0.0
d1 = 0.0
r0 = 4.0

[cutoff]
windows = 0.5:1, 2:4             ; two disjoint chi windows t0:t1

[fit]
t_a = 0.15                       ; fit window as fractions of t_final
t_b = 0.95
tol_exponent = 0.1
tol_amplitude = 0.25
profile_t_min = 100.0
"""


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    metric_kind: str = "minkowski_hyperboloidal"
    mass: float = 0.0
    height_scale: float = 1.0
    n: int = 800
    t_final: float = 1000.0
    cfl: float = 0.5
    dissipation: float = 0.02
    trace_dt: float = 0.02
    t_dense: float = 120.0
    trace_dt_coarse: float = 0.5
    snapshot_dt: float = 0.25
    snapshot_until: float = 60.0
    probes: tuple = (1.0, 5.0, 20.0)
    power: int = 3
    linear: bool = False
    coefficient: float = 1.0
    data_kind: str = "gaussian"
    amplitude: float = 0.1
    width: float = 0.5
    center: float = 0.0
    amplitude1: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    d1: float = 0.0
    r0: float = 4.0
    cutoffs: tuple = ((0.5, 1.0), (2.0, 4.0))
    fit_t_a: float = 0.15
    fit_t_b: float = 0.95
    tol_exponent: float = 0.1
    tol_amplitude: float = 0.25
    profile_t_min: float = 100.0
    raw_text: str = field(default="", repr=False)

    def sanity(self):
        if self.metric_kind not in ("minkowski_hyperboloidal", "mass_deformed"):
            raise ConfigError(f"metric.kind {self.metric_kind!r} cannot be "
                              "evolved (normal_form is test-only)")
        if self.power < 3:
            raise ConfigError("nonlinearity.power must be >= 3")
        if not self.linear and self.power >= 4 and self.cutoffs == ((0.5, 1.0), (2.0, 4.0)):
            # late windows keep d_X clean of the outgoing pulse
            self.cutoffs = ((20.0, 40.0), (50.0, 100.0))
        return self


def _line_of_key(text, section, key):
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1]
        elif current == section and s.split("=")[0].strip() == key:
            return i
    return -1


def _get(cp, text, section, key, cast, default):
    if not cp.has_section(section) and default is not None:
        return default
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    raw = raw.split(";")[0].strip()
    try:
        if cast is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except (TypeError, ValueError):
        line = _line_of_key(text, section, key)
        raise ConfigError(
            f"bad value for [{section}] {key} = {raw!r} (line {line})") from None


def _parse_windows(raw, text):
    out = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            out.append((float(a), float(b)))
        except ValueError:
            line = _line_of_key(text, "cutoff", "windows")
            raise ConfigError(
                f"bad cutoff window {item!r} (line {line}); "
                "expected t0:t1") from None
    return tuple(out)


def parse_config(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", "?")
        raise ConfigError(f"config parse error at line {lineno}: "
                          f"{exc.message.splitlines()[0]}") from None
    known = {
        "metric": {"kind", "mass", "height_scale"},
        "grid": {"n"},
        "evolution": {"t_final", "cfl", "dissipation", "trace_dt", "t_dense",
                      "trace_dt_coarse", "snapshot_dt", "snapshot_until",
                      "probes"},
        "nonlinearity": {"power", "linear", "coefficient"},
        "data": {"kind", "amplitude", "width", "center", "amplitude1",
                 "c1", "c2", "d1", "r0"},
        "cutoff": {"windows"},
        "fit": {"t_a", "t_b", "tol_exponent", "tol_amplitude",
                "profile_t_min"},
    }
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp.options(section):
            if key not in known[section]:
                line = _line_of_key(text, section, key)
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}] (line {line})")
    cfg = RunConfig(raw_text=text)
    cfg.metric_kind = _get(cp, text, "metric", "kind", str, cfg.metric_kind)
    cfg.mass = _get(cp, text, "metric", "mass", float, cfg.mass)
    cfg.height_scale = _get(cp, text, "metric", "height_scale", float,
                            cfg.height_scale)
    cfg.n = _get(cp, text, "grid", "n", int, cfg.n)
    cfg.t_final = _get(cp, text, "evolution", "t_final", float, cfg.t_final)
    cfg.cfl = _get(cp, text, "evolution", "cfl", float, cfg.cfl)
    cfg.dissipation = _get(cp, text, "evolution", "dissipation", float,
                           cfg.dissipation)
    cfg.trace_dt = _get(cp, text, "evolution", "trace_dt", float, cfg.trace_dt)
    cfg.t_dense = _get(cp, text, "evolution", "t_dense", float, cfg.t_dense)
    cfg.trace_dt_coarse = _get(cp, text, "evolution", "trace_dt_coarse",
                               float, cfg.trace_dt_coarse)
    cfg.snapshot_dt = _get(cp, text, "evolution", "snapshot_dt", float,
                           cfg.snapshot_dt)
    cfg.snapshot_until = _get(cp, text, "evolution", "snapshot_until", float,
                              cfg.snapshot_until)
    probes_raw = _get(cp, text, "evolution", "probes", str, None)
    if probes_raw is not None:
        try:
            cfg.probes = tuple(float(x) for x in probes_raw.split(",") if x.strip())
        except ValueError:
            line = _line_of_key(text, "evolution", "probes")
            raise ConfigError(f"bad probes list (line {line})") from None
    cfg.power = _get(cp, text, "nonlinearity", "power", int, cfg.power)
    cfg.linear = _get(cp, text, "nonlinearity", "linear", bool, cfg.linear)
    cfg.coefficient = _get(cp, text, "nonlinearity", "coefficient", float,
                           cfg.coefficient)
    cfg.data_kind = _get(cp, text, "data", "kind", str, cfg.data_kind)
    for key in ("amplitude", "width", "center", "amplitude1", "c1", "c2",
                "d1", "r0"):
        setattr(cfg, key, _get(cp, text, "data", key, float, getattr(cfg, key)))
    windows_raw = _get(cp, text, "cutoff", "windows", str, None)
    if windows_raw is not None:
        cfg.cutoffs = _parse_windows(windows_raw, text)
    cfg.fit_t_a = _get(cp, text, "fit", "t_a", float, cfg.fit_t_a)
    cfg.fit_t_b = _get(cp, text, "fit", "t_b", float, cfg.fit_t_b)
    cfg.tol_exponent = _get(cp, text, "fit", "tol_exponent", float,
                            cfg.tol_exponent)
    cfg.tol_amplitude = _get(cp, text, "fit", "tol_amplitude", float,
                             cfg.tol_amplitude)
    cfg.profile_t_min = _get(cp, text, "fit", "profile_t_min", float,
                             cfg.profile_t_min)
    return cfg.sanity()


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


BUNDLED = {
    "linear_flat": """\
[metric]
kind = minkowski_hyperboloidal
[grid]
n = 400
[evolution]
t_final = 60.0
snapshot_until = 30.0
t_dense = 60.0
[nonlinearity]
linear = true
[data]
kind = gaussian
amplitude = 0.1
width = 0.5
""",
    "p3_small_flat": """\
[metric]
kind = minkowski_hyperboloidal
[grid]
n = 1600
[evolution]
t_final = 2000.0
t_dense = 120.0
snapshot_until = 60.0
probes = 1.0, 5.0, 20.0
[nonlinearity]
power = 3
coefficient = 1.0
[data]
kind = gaussian
amplitude = 0.1
width = 0.5
[cutoff]
windows = 0.5:1, 2:4
[fit]
t_a = 0.15
t_b = 0.95
""",
    "p4_small_flat": """\
[metric]
kind = minkowski_hyperboloidal
[grid]
n = 1600
[evolution]
t_final = 2000.0
t_dense = 150.0
snapshot_until = 60.0
probes = 1.0, 5.0, 20.0
[nonlinearity]
power = 4
coefficient = 1.0
[data]
kind = gaussian
amplitude = 0.4
width = 0.5
[cutoff]
windows = 20:40, 50:100
[fit]
t_a = 0.15
t_b = 0.95
tol_exponent = 0.15
""",
}

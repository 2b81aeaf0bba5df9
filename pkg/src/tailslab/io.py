"""Run-directory persistence: CSV schemas, binary snapshots, manifest.

Every pipeline stage communicates only through files declared in the run
manifest.  Schemas:

* trajectory.csv   -- t_star, probe_id, r, phi, dphi_dt
* scri_trace.csv   -- t_star, theta_index, phi_index, rad1_raw
                      (spherical runs use theta_index = phi_index = 0)
* monitors.csv     -- t_star, energy, apriori
* radiation.csv    -- t_star, ell, m, rad1_lm, rad2_lm, rad3_lm
* radiation_nodal.csv -- t_star, theta_index, phi_index, rad1, rad2, rad3
* c_omega.csv      -- theta_index, phi_index, c, d, c_tilde
* fits.csv         -- one row per probe fit
* snapshots.bin    -- magic "TAILSLAB1", version, JSON header, little-endian
                      float64 arrays

Floats are written with repr-shortest formatting, so identical runs emit
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

MAGIC = b"TAILSLAB1"
SNAP_VERSION = 1


def _fmt(x):
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def sha256_of(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# trajectory files
# ---------------------------------------------------------------------------

def write_trajectory_csv(path, traj):
    rows = []
    for pid, probe in enumerate(traj.probes):
        phi = probe.phi if probe.phi.ndim == 1 else probe.phi[:, 0]
        dphi = probe.dphi_dt if probe.dphi_dt.ndim == 1 else probe.dphi_dt[:, 0]
        for i, t in enumerate(traj.times):
            rows.append((float(t), pid, float(probe.r), float(phi[i]),
                         float(dphi[i])))
    write_csv(path, ["t_star", "probe_id", "r", "phi", "dphi_dt"], rows)


def read_trajectory_csv(path):
    """-> (times, {probe_id: (r, phi[], dphi[])})"""
    _, rows = read_csv(path)
    probes = {}
    for t, pid, r, phi, dphi in rows:
        d = probes.setdefault(int(pid), {"r": float(r), "t": [], "phi": [],
                                         "dphi": []})
        d["t"].append(float(t))
        d["phi"].append(float(phi))
        d["dphi"].append(float(dphi))
    out = {}
    times = None
    for pid, d in probes.items():
        times = np.asarray(d["t"])
        out[pid] = (d["r"], np.asarray(d["phi"]), np.asarray(d["dphi"]))
    return times, out


def write_scri_csv(path, traj):
    rows = []
    scri = traj.scri
    if scri.ndim == 1:
        for i, t in enumerate(traj.times):
            rows.append((float(t), 0, 0, float(scri[i])))
    else:
        for i, t in enumerate(traj.times):
            for m in range(scri.shape[1]):
                rows.append((float(t), m, 0, float(scri[i, m])))
    write_csv(path, ["t_star", "theta_index", "phi_index", "rad1_raw"], rows)


def read_scri_csv(path):
    _, rows = read_csv(path)
    times, vals = [], []
    for t, ti, pi, v in rows:
        if int(ti) == 0 and int(pi) == 0:
            times.append(float(t))
            vals.append(float(v))
    return np.asarray(times), np.asarray(vals)


def write_monitors_csv(path, traj):
    rows = [(float(t), float(traj.energy[i]), float(traj.apriori[i]))
            for i, t in enumerate(traj.times)]
    write_csv(path, ["t_star", "energy", "apriori"], rows)


def write_radiation_csv(path, series):
    """Harmonic-coefficient radiation series (spherical: single 0,0 row)."""
    rows = []
    t = series.times

    def entry(arr, i):
        return float(arr[i]) if arr is not None else 0.0

    if series.spherical:
        norm = np.sqrt(4.0 * np.pi)  # value -> Y00 coefficient
        for i in range(t.size):
            rows.append((float(t[i]), 0, 0, float(series.rad1[i] * norm),
                         entry(series.rad2, i) * norm,
                         entry(series.rad3, i) * norm))
    else:
        g = series.sphere
        c1 = np.array([g.analyze(series.rad1[i]) for i in range(t.size)])
        c2 = np.array([g.analyze(series.rad2[i]) for i in range(t.size)]) \
            if series.rad2 is not None else None
        c3 = np.array([g.analyze(series.rad3[i]) for i in range(t.size)]) \
            if series.rad3 is not None else None
        for i in range(t.size):
            for k, (ell, m) in enumerate(g.modes):
                rows.append((float(t[i]), ell, m, float(c1[i, k]),
                             float(c2[i, k]) if c2 is not None else 0.0,
                             float(c3[i, k]) if c3 is not None else 0.0))
    write_csv(path, ["t_star", "ell", "m", "rad1_lm", "rad2_lm", "rad3_lm"],
              rows)


def write_radiation_nodal_csv(path, series):
    rows = []
    t = series.times
    if series.spherical:
        for i in range(t.size):
            rows.append((float(t[i]), 0, 0, float(series.rad1[i]),
                         float(series.rad2[i]) if series.rad2 is not None else 0.0,
                         float(series.rad3[i]) if series.rad3 is not None else 0.0))
    else:
        nth, nph = series.rad1.shape[1:]
        for i in range(t.size):
            for a in range(nth):
                for b in range(nph):
                    rows.append((float(t[i]), a, b, float(series.rad1[i, a, b]),
                                 float(series.rad2[i, a, b]) if series.rad2 is not None else 0.0,
                                 float(series.rad3[i, a, b]) if series.rad3 is not None else 0.0))
    write_csv(path, ["t_star", "theta_index", "phi_index",
                     "rad1", "rad2", "rad3"], rows)


def write_fits_csv(path, fits, verdicts):
    rows = []
    for fit, v in zip(fits, verdicts):
        rows.append((float(fit.probe_r), float(fit.window[0]), float(fit.window[1]),
                     float(fit.exponent), float(fit.exponent_err),
                     float(fit.amplitude), float(fit.amplitude_err),
                     float(fit.amplitude_pinned or 0.0), float(fit.goodness),
                     int(fit.sign), float(v.ratio), int(v.passed),
                     int(v.indeterminate)))
    write_csv(path, ["r", "t_a", "t_b", "exponent", "exponent_err",
                     "amplitude", "amplitude_err", "amplitude_pinned",
                     "goodness", "sign", "ratio", "passed", "indeterminate"],
              rows)


# ---------------------------------------------------------------------------
# binary snapshots
# ---------------------------------------------------------------------------

def save_snapshots(path, traj, spec_hash=""):
    """TAILSLAB1 container: header JSON + per-snapshot (Phi, Pi) arrays."""
    header = {
        "version": SNAP_VERSION,
        "n": int(traj.grid.n),
        "s_min": float(traj.grid.s_min),
        "spec_hash": spec_hash,
        "spec_info": traj.spec_info,
        "times": [float(s.t_star) for s in traj.snapshots],
        "shape": list(np.shape(traj.snapshots[0].Phi)) if traj.snapshots else [],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", SNAP_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for st in traj.snapshots:
            fh.write(np.ascontiguousarray(st.Phi, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(st.Pi, dtype="<f8").tobytes())


def load_snapshots(path):
    """-> (header dict, [(t, Phi, Pi), ...])"""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"not a snapshot container: bad magic {magic!r}")
        version, = struct.unpack("<I", fh.read(4))
        if version != SNAP_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        hlen, = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        shape = tuple(header["shape"])
        count = int(np.prod(shape)) if shape else 0
        out = []
        for t in header["times"]:
            phi = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            pi = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            out.append((t, phi.copy(), pi.copy()))
    return header, out


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def write_manifest(run_dir, config_text, meta, files, errors=None):
    inventory = {}
    for name in files:
        p = os.path.join(run_dir, name)
        if os.path.exists(p):
            inventory[name] = sha256_of(p)
    manifest = {
        "config": config_text,
        "code_version": meta.get("code_version", "0.1.0"),
        "meta": meta,
        "files": inventory,
        "errors": errors or [],
    }
    with open(os.path.join(run_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def read_manifest(run_dir):
    with open(os.path.join(run_dir, "manifest.json")) as fh:
        return json.load(fh)

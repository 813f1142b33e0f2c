"""CSV readers and writers for truth, IMU, odometer and filter-result files.

UTF-8, one header row, ``\\n`` line endings, floats written with 17
significant digits. Readers validate every record and raise
:class:`SchemaError` naming the offending line.
"""
from __future__ import annotations

import csv
import math
import os

import numpy as np

from .errors import SchemaError
from .frames import dcm_to_quat, local_offset, quat_to_dcm
from .trajsim import ImuData, OdoData, Truth

TRUTH_COLS = ["t", "lon", "lat", "h", "vn", "vu", "ve", "q0", "q1", "q2", "q3", "d"]
IMU_COLS = ["t"] + [f"{q}{i}{a}" for q in ("dth", "dv") for i in (1, 2) for a in "xyz"]
ODO_COLS = ["t", "N"]
RESULT_COLS = ["t", "err_n", "err_e", "err_h", "herr", "dist", "K_hat", "psi_hat", "theta_hat",
               "lx", "ly", "lz", "bgx", "bgy", "bgz", "bax", "bay", "baz", "adapted_std"]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(x) for x in r) + "\n")


def read_csv(path, header, int_cols=()):
    """Parse a schema-checked CSV into a dict of column arrays."""
    if not os.path.exists(path):
        raise SchemaError(f"{path}: file not found")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}:1: empty file, expected header") from None
        if head[:len(header)] != list(header):
            raise SchemaError(f"{path}:1: header {','.join(head)} does not start with "
                              f"{','.join(header)}")
        n = len(head)
        cols = [[] for _ in range(n)]
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != n:
                raise SchemaError(f"{path}:{lineno}: expected {n} fields, found {len(rec)}")
            for j, tok in enumerate(rec):
                try:
                    val = int(tok) if head[j] in int_cols else float(tok)
                except ValueError:
                    raise SchemaError(f"{path}:{lineno}: field {head[j]!r} has invalid value "
                                      f"{tok!r}") from None
                if head[j] not in int_cols and head[j] != "t" and math.isinf(val):
                    raise SchemaError(f"{path}:{lineno}: field {head[j]!r} is infinite")
                cols[j].append(val)
    out = {h: np.asarray(c, dtype=np.int64 if h in int_cols else float) for h, c in zip(head, cols)}
    if "t" in out:
        t = out["t"]
        if not np.all(np.isfinite(t)):
            raise SchemaError(f"{path}:{2 + int(np.argmin(np.isfinite(t)))}: non-finite time")
        bad = np.nonzero(np.diff(t) <= 0)[0]
        if bad.size:
            raise SchemaError(f"{path}:{bad[0] + 3}: time does not increase")
    return out


def write_truth(path, truth: Truth, every: int = 1) -> None:
    idx = range(0, len(truth), every)

    def rows():
        for i in idx:
            q = dcm_to_quat(truth.C_bn[i])
            yield [truth.t[i], *truth.p[i], *truth.v[i], *q, truth.d[i]]

    write_csv(path, TRUTH_COLS, rows())


def read_truth(path) -> Truth:
    c = read_csv(path, TRUTH_COLS)
    n = len(c["t"])
    q = np.stack([c["q0"], c["q1"], c["q2"], c["q3"]], axis=1)
    norm = np.linalg.norm(q, axis=1)
    bad = np.nonzero(np.abs(norm - 1.0) > 1e-6)[0]
    if bad.size:
        raise SchemaError(f"{path}:{bad[0] + 2}: attitude quaternion is not unit length")
    C = np.array([quat_to_dcm(qi) for qi in q]) if n else np.zeros((0, 3, 3))
    p = np.stack([c["lon"], c["lat"], c["h"]], axis=1)
    v = np.stack([c["vn"], c["vu"], c["ve"]], axis=1)
    z = np.full((n, 3), np.nan)
    return Truth(c["t"], p, v, C, z, z.copy(), c["d"])


def write_imu(path, imu: ImuData) -> None:
    data = np.column_stack([imu.t, imu.dth1, imu.dth2, imu.dv1, imu.dv2])
    write_csv(path, IMU_COLS, data)


def read_imu(path) -> ImuData:
    c = read_csv(path, IMU_COLS)

    def vec(q, i):
        return np.stack([c[f"{q}{i}{a}"] for a in "xyz"], axis=1)

    return ImuData(c["t"], vec("dth", 1), vec("dth", 2), vec("dv", 1), vec("dv", 2))


def write_odo(path, odo: OdoData) -> None:
    write_csv(path, ODO_COLS, zip(odo.t, (int(n) for n in odo.N)))


def read_odo(path) -> OdoData:
    c = read_csv(path, ODO_COLS, int_cols=("N",))
    return OdoData(c["t"], c["N"])


def result_rows(out, truth: Truth | None = None):
    """Rows of the results table; error columns are NaN without truth and
    distance then falls back to accumulated pulses over the estimated K."""
    n = len(out.t)
    M = out.weights.shape[1] if out.weights.ndim == 2 else 1
    header = RESULT_COLS + ["yaw_err"] + [f"w{j + 1}" for j in range(M)]
    rows = []
    for i in range(n):
        if truth is not None:
            k = int(np.clip(np.searchsorted(truth.t, out.t[i] - 1e-9), 0, len(truth) - 1))
            if abs(truth.t[k] - out.t[i]) > 1e-6:
                tp = truth.t
                # linear interpolation of position and distance between samples
                p_true = np.array([np.interp(out.t[i], tp, truth.p[:, j]) for j in range(3)])
                dist = float(np.interp(out.t[i], tp, truth.d))
                C_true = truth.C_bn[k]
            else:
                p_true, dist, C_true = truth.p[k], float(truth.d[k]), truth.C_bn[k]
            en, eu, ee = local_offset(p_true, out.p[i])
            herr = math.hypot(en, ee)
            dC = out.C_bn[i] @ C_true.T
            yaw = math.atan2(dC[0, 2] - dC[2, 0], dC[0, 0] + dC[2, 2])
        else:
            en = eu = ee = herr = yaw = float("nan")
            dist = float(out.s[i] / out.K[i])
        rows.append([out.t[i], en, ee, eu, herr, dist, out.K[i], out.psi[i], out.theta[i],
                     *out.lever[i], *out.b_g[i], *out.b_a[i], out.adapted_std[i], yaw,
                     *np.atleast_1d(out.weights[i])])
    return header, rows


def write_results(path, out, truth: Truth | None = None, mmae: bool = False) -> None:
    header, rows = result_rows(out, truth)
    if not mmae:
        header = header[:len(RESULT_COLS) + 1]
        rows = [r[:len(header)] for r in rows]
    write_csv(path, header, rows)


def read_results(path) -> dict:
    return read_csv(path, RESULT_COLS)

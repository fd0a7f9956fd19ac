"""Independent oracles for the frozen values in the test suite.

Each oracle avoids the package's own discretization code: interval sums are
taken directly from prefix sums of cell values, capacities come from a
generic conic solver, and scale integrals from adaptive quadrature.  Run
``python3 tests/oracles/compute_oracles.py`` to regenerate ``oracles.json``.
"""

import json
import math
from pathlib import Path

import numpy as np
from scipy import integrate


def intervals(n_cells, max_len):
    """All knot-aligned intervals [i, j) with 1 <= j - i <= max_len."""
    i, L = np.meshgrid(np.arange(n_cells), np.arange(1, max_len + 1), indexing="ij")
    j = i + L
    keep = j <= n_cells
    return i[keep], j[keep]


def exhaustive_ap(values, h, rho, p):
    """Sup over knot-aligned intervals of side <= rho of the A_p product."""
    n = len(values)
    i, j = intervals(n, int(round(rho / h)))
    c = np.concatenate([[0.0], np.cumsum(values)])
    avg = (c[j] - c[i]) / (j - i)
    if p == "inf":
        cl = np.concatenate([[0.0], np.cumsum(np.log(values))])
        return float(np.max(avg * np.exp(-(cl[j] - cl[i]) / (j - i))))
    d = values ** (-1.0 / (p - 1))
    cd = np.concatenate([[0.0], np.cumsum(d)])
    return float(np.max(avg * ((cd[j] - cd[i]) / (j - i)) ** (p - 1)))


def ap_exp_weight():
    h = 1 / 256
    x = -2 + (np.arange(1024) + 0.5) * h
    w = np.exp(np.abs(x))
    return {"ap2": exhaustive_ap(w, h, 1.0, 2.0), "ainf": exhaustive_ap(w, h, 1.0, "inf")}


def maximal_indicator():
    """Uncentered maximal function of chi_[0,1] on [-1,2], rho=2, at the cell holding 1.5."""
    h = 1 / 32
    n = 96
    x = -1 + (np.arange(n) + 0.5) * h
    f = ((x > 0) & (x < 1)).astype(float)
    k = int(np.floor((1.5 + 1) / h))
    i, j = intervals(n, int(round(2 / h)))
    keep = (i <= k) & (j > k)
    c = np.concatenate([[0.0], np.cumsum(f)])
    return float(np.max((c[j[keep]] - c[i[keep]]) / (j[keep] - i[keep])))


def centered_delta(k_dist):
    """Centered maximal of a single hot cell at distance k_dist*h, radii h..rho/2."""
    h, rho = 1.0, 64.0
    best = 0.0
    r = h
    while r <= rho / 2:
        lo, hi = k_dist * h - h / 2, k_dist * h + h / 2
        overlap = max(0.0, min(hi, r) - max(lo, -r))
        best = max(best, overlap / (2 * r))
        r *= 2
    return best


def fractional_uniform():
    """M_{alpha,rho} of the uniform unit mass on [0,1] at the cell holding 0.5."""
    h, alpha, rho = 1 / 64, 0.5, 1.0
    x = -1 + (np.arange(192) + 0.5) * h
    m = ((x > 0) & (x < 1)) * h
    x0 = x[int(np.floor((0.5 + 1) / h))]
    best, r = 0.0, h
    while r <= rho * (1 + 1e-12):
        best = max(best, m[np.abs(x - x0) < r].sum() / r ** (1 - alpha))
        r *= 2
    return float(best)


def wolff_dirac(h):
    """Wolff potential at a unit atom, w = 1, n = 1, alpha = 1/2, p = 2, rho = 1,
    with the atom's mass spread over its cell below t = h/2."""
    def mass(t):
        return min(2 * t / h, 1.0)

    val, _ = integrate.quad(lambda t: t * mass(t) / (2 * t) / t, 0, h / 2)
    val2, _ = integrate.quad(lambda t: t * mass(t) / (2 * t) / t, h / 2, 1.0)
    return val + val2


def riesz_matrix(n_cells, h, alpha, rho, rows):
    """Kernel |x-y|^(alpha-1) chi(|x-y| < rho) with the exact self-cell average."""
    idx = np.arange(n_cells)
    lag = np.abs(idx[rows][:, None] - idx[None, :])
    K = np.zeros(lag.shape)
    inside = (lag > 0) & (lag < rho / h - 1e-9)
    K[inside] = (lag[inside] * h) ** (alpha - 1)
    K[lag == 0] = (h / 2) ** (alpha - 1) / alpha
    return K


def capacity_cvxpy(n_cells, h, alpha, p, rho, rows, w):
    import cvxpy as cp

    K = riesz_matrix(n_cells, h, alpha, rho, rows)
    f = cp.Variable(n_cells, nonneg=True)
    obj = cp.sum(cp.multiply(w * h, cp.power(f, p)))
    prob = cp.Problem(cp.Minimize(obj), [K @ (f * h) >= 1])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12,
               max_iter=500)
    return float(prob.value)


def spacetime_cvxpy(n_cells, alpha, p, rho, rows, a, c, per_octave=8):
    """Space-time capacity on [-1, 1] with scale nodes at the log-midpoints of
    a geometric partition of [h/2, rho] into per_octave steps per doubling."""
    import cvxpy as cp

    h = 2.0 / n_cells
    x = (np.arange(n_cells) + 0.5) * h - 1.0
    w = np.maximum(np.abs(x), h / 2) ** a * np.exp(c * np.abs(x))
    wd = w ** (-1.0 / (p - 1))
    steps = max(1, math.ceil(math.log2(rho / (h / 2)) * per_octave - 1e-9))
    e = np.exp(np.linspace(math.log(h / 2), math.log(rho), steps + 1))
    t = np.sqrt(e[:-1] * e[1:])
    dlog = np.diff(np.log(e))
    # nu over (scale, cell) and kernel rows over the same flattening
    nu = (dlog[:, None] * wd[None, :] * h).ravel()
    lag = np.abs(np.arange(n_cells)[rows][:, None] - np.arange(n_cells)[None, :]) * h
    K = np.concatenate([(lag < tk - 1e-12) * tk ** (alpha - 1) for tk in t], axis=1)
    f = cp.Variable(nu.size, nonneg=True)
    prob = cp.Problem(cp.Minimize(cp.sum(cp.multiply(nu, cp.power(f, p)))),
                      [K @ cp.multiply(nu, f) >= 1])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12,
               max_iter=500)
    return float(prob.value)


def spacetime_instances():
    specs = [(16, 0.5, 2.0, 0.5, [7, 8], 0.2, 0.5),
             (16, 0.25, 1.5, 0.5, [3, 4, 5, 6], -0.3, 1.0),
             (32, 0.75, 3.0, 1.0, [10, 20], 0.0, -0.5)]
    out = []
    for n, alpha, p, rho, rows, a, c in specs:
        out.append({"n": n, "alpha": alpha, "p": p, "rho": rho, "rows": rows, "a": a, "c": c,
                    "value": spacetime_cvxpy(n, alpha, p, rho, np.array(rows), a, c)})
    return out


def single_cell():
    """Single cell E at the center of a 16-cell grid on [-1, 1], w = 1,
    alpha = 1/2, p = 2, rho = 1."""
    return capacity_cvxpy(16, 2 / 16, 0.5, 2.0, 1.0, np.array([8]), np.ones(16))


def capacity_instances():
    rng = np.random.default_rng(20240601)
    out = []
    for k in range(10):
        n = int(rng.choice([16, 32, 48]))
        h = 2.0 / n
        m = int(rng.integers(1, min(32, n // 2) + 1))
        start = int(rng.integers(0, n - m + 1))
        if k % 3 == 2:
            rows = np.sort(rng.choice(n, size=m, replace=False))
        else:
            rows = np.arange(start, start + m)
        x = (np.arange(n) + 0.5) * h - 1.0
        a = float(rng.uniform(-0.5, 0.5))
        c = float(rng.uniform(-1.5, 1.5))
        w = np.maximum(np.abs(x), h / 2) ** a * np.exp(c * np.abs(x))
        p = float(rng.choice([1.5, 2.0, 3.0]))
        alpha = float(rng.choice([0.25, 0.5, 0.75]))
        rho = float(rng.choice([0.5, 1.0]))
        val = capacity_cvxpy(n, h, alpha, p, rho, rows, w)
        out.append({"n": n, "rows": rows.tolist(), "a": a, "c": c, "p": p, "alpha": alpha,
                    "rho": rho, "value": val})
    return out


def main():
    res = {
        "ap_exp_weight": ap_exp_weight(),
        "maximal_indicator_1.5": maximal_indicator(),
        "centered_delta": {str(k): centered_delta(k) for k in (0, 1, 3, 4, 5, 9)},
        "fractional_uniform_0.5": fractional_uniform(),
        "wolff_dirac": {str(h): wolff_dirac(h) for h in (1 / 16, 1 / 64)},
        "capacity_instances": capacity_instances(),
        "spacetime_instances": spacetime_instances(),
        "single_cell": single_cell(),
    }
    path = Path(__file__).with_name("oracles.json")
    path.write_text(json.dumps(res, indent=1, sort_keys=True) + "\n")
    print(json.dumps({k: v for k, v in res.items() if k not in ("capacity_instances", "spacetime_instances")}, indent=1))
    for inst in res["spacetime_instances"]:
        print("spacetime", inst["n"], inst["rows"], inst["p"], inst["value"])
    for inst in res["capacity_instances"]:
        print(inst["n"], len(inst["rows"]), inst["p"], inst["alpha"], inst["rho"], inst["value"])


if __name__ == "__main__":
    main()
